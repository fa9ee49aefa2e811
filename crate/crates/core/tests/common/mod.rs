//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::path::Path;

use xadapt::linalg::{Matrix, Rng};
use xadapt::nn::{
    discriminator_bce, gradient_reversal, mapping_bce, softmax_cross_entropy, DomainDiscriminator,
    Gradients, Mlp, SpeakerClassifier,
};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Runs the CLI in-process; returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("xadapt").chain(args.iter().copied());
    let code = xadapt::cli::run_with(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `key<TAB>value` lookup in a metrics report.
pub fn metric(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix('\t'))
        .unwrap_or_else(|| panic!("no `{key}` in {report:?}"))
        .trim()
        .parse()
        .unwrap()
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::new(rows, cols, rng.gaussian_sample(rows * cols)).unwrap()
}

/// Gives every bias a random value so bias gradients are exercised away
/// from the zero initialization.
fn randomize_biases(net: &mut Mlp, rng: &mut Rng) {
    for layer in net.layers_mut() {
        for b in &mut layer.bias {
            *b = 0.3 * rng.gaussian();
        }
    }
}

fn param_count(net: &Mlp) -> usize {
    net.param_count()
}

fn param_mut(net: &mut Mlp, mut k: usize) -> &mut f64 {
    for layer in net.layers_mut() {
        let w = layer.weight.as_mut_slice();
        if k < w.len() {
            return &mut w[k];
        }
        k -= w.len();
        if k < layer.bias.len() {
            return &mut layer.bias[k];
        }
        k -= layer.bias.len();
    }
    panic!("parameter index out of range")
}

fn flatten(g: &Gradients) -> Vec<f64> {
    g.layers
        .iter()
        .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias).copied())
        .collect()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)` between the analytic gradient and central
/// differences of `loss` over every parameter of `net`.
pub fn fd_error(net: &Mlp, analytic: &Gradients, loss: impl Fn(&Mlp) -> f64) -> f64 {
    let a = flatten(analytic);
    assert_eq!(a.len(), param_count(net));
    let mut work = net.clone();
    let mut diff2 = 0.0;
    let mut a2 = 0.0;
    let mut n2 = 0.0;
    for (k, &ak) in a.iter().enumerate() {
        let orig = *param_mut(&mut work, k);
        *param_mut(&mut work, k) = orig + FD_STEP;
        let up = loss(&work);
        *param_mut(&mut work, k) = orig - FD_STEP;
        let down = loss(&work);
        *param_mut(&mut work, k) = orig;
        let nk = (up - down) / (2.0 * FD_STEP);
        diff2 += (ak - nk) * (ak - nk);
        a2 += ak * ak;
        n2 += nk * nk;
    }
    let scale = a2.sqrt().max(n2.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff2.sqrt() / scale
    }
}

/// Toy networks and batches, all dimensions ≤ 8.
pub struct Toy {
    pub xs: Matrix,
    pub xt: Matrix,
    pub ys: Vec<usize>,
    pub enc: Mlp,
    pub target_enc: Mlp,
    pub cls: Mlp,
    pub disc: Mlp,
    pub dom: Mlp,
    pub lambda: f64,
}

impl Toy {
    pub fn new(seed: u64) -> Toy {
        let mut rng = Rng::new(seed);
        let (d_in, hidden, embed, k) = (5, 6, 4, 3);
        let mut enc = Mlp::encoder(d_in, hidden, embed, 3, &mut rng).unwrap();
        let mut target_enc = Mlp::encoder(d_in, hidden, embed, 3, &mut rng).unwrap();
        let mut cls = SpeakerClassifier::new(embed, hidden, k, &mut rng).unwrap().into_net();
        let mut disc = DomainDiscriminator::new(embed, hidden, 2, &mut rng).unwrap().into_net();
        let mut dom = DomainDiscriminator::new(embed, hidden, 1, &mut rng).unwrap().into_net();
        for net in [&mut enc, &mut target_enc, &mut cls, &mut disc, &mut dom] {
            randomize_biases(net, &mut rng);
        }
        Toy {
            xs: gaussian_matrix(7, d_in, &mut rng),
            xt: gaussian_matrix(6, d_in, &mut rng),
            ys: (0..7).map(|_| rng.below(k)).collect(),
            enc,
            target_enc,
            cls,
            disc,
            dom,
            lambda: rng.uniform_range(0.1, 2.0),
        }
    }
}

fn speaker_ce(enc: &Mlp, cls: &Mlp, x: &Matrix, y: &[usize]) -> f64 {
    let h = enc.infer(x).unwrap();
    softmax_cross_entropy(&cls.infer(&h).unwrap(), y).unwrap().0
}

fn domain_bce(disc: &Mlp, hs: &Matrix, ht: &Matrix) -> f64 {
    let ls = disc.infer(hs).unwrap().into_vec();
    let lt = disc.infer(ht).unwrap().into_vec();
    discriminator_bce(&ls, &lt).unwrap().0
}

/// Backward pass of the speaker cross-entropy: (encoder, head) gradients.
fn speaker_grads(enc: &Mlp, cls: &Mlp, x: &Matrix, y: &[usize]) -> (Gradients, Gradients) {
    let (h, ec) = enc.forward(x).unwrap();
    let (logits, cc) = cls.forward(&h).unwrap();
    let (_, g) = softmax_cross_entropy(&logits, y).unwrap();
    let (cg, gh) = cls.backward(&cc, &g).unwrap();
    (enc.backward_params(&ec, &gh).unwrap(), cg)
}

/// Worst relative errors per parameter group for each of the four losses.
#[derive(Debug, Default)]
pub struct GradReport {
    /// Domain-adversarial objective `L_y − λ L_d`.
    pub dat: [f64; 3],
    /// Speaker cross-entropy.
    pub speaker: [f64; 2],
    /// Discriminator loss.
    pub discriminator: f64,
    /// Inverted-label mapping loss.
    pub mapping: f64,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.dat
            .iter()
            .chain(&self.speaker)
            .chain([&self.discriminator, &self.mapping])
            .fold(0.0, |m, &v| m.max(v))
    }
}

pub fn check_gradients(seed: u64) -> GradReport {
    let t = Toy::new(seed);
    let mut r = GradReport::default();

    // Speaker cross-entropy through encoder and head.
    let (eg, cg) = speaker_grads(&t.enc, &t.cls, &t.xs, &t.ys);
    r.speaker[0] = fd_error(&t.enc, &eg, |e| speaker_ce(e, &t.cls, &t.xs, &t.ys));
    r.speaker[1] = fd_error(&t.cls, &cg, |c| speaker_ce(&t.enc, c, &t.xs, &t.ys));

    // Discriminator loss on source features from M_s and target from M_t.
    let hs = t.enc.infer(&t.xs).unwrap();
    let ht = t.target_enc.infer(&t.xt).unwrap();
    {
        let (ls, cs) = t.disc.forward(&hs).unwrap();
        let (lt, ct) = t.disc.forward(&ht).unwrap();
        let (_, g) = discriminator_bce(ls.as_slice(), lt.as_slice()).unwrap();
        let mut dg = t.disc.backward_params(&cs, &Matrix::column(&g.src)).unwrap();
        dg.accumulate(&t.disc.backward_params(&ct, &Matrix::column(&g.tgt)).unwrap())
            .unwrap();
        r.discriminator = fd_error(&t.disc, &dg, |d| domain_bce(d, &hs, &ht));
    }

    // Mapping loss through the discriminator into M_t.
    {
        let (h, ec) = t.target_enc.forward(&t.xt).unwrap();
        let (l, dc) = t.disc.forward(&h).unwrap();
        let (_, g) = mapping_bce(l.as_slice()).unwrap();
        let (_, gh) = t.disc.backward(&dc, &Matrix::column(&g)).unwrap();
        let mg = t.target_enc.backward_params(&ec, &gh).unwrap();
        let loss = |e: &Mlp| {
            let l = t.disc.infer(&e.infer(&t.xt).unwrap()).unwrap();
            mapping_bce(l.as_slice()).unwrap().0
        };
        r.mapping = fd_error(&t.target_enc, &mg, loss);
    }

    // Domain-adversarial objective: the encoder gradient assembled with a
    // gradient reversal layer must equal d(L_y − λ L_d)/dθ_f.
    {
        let (hs, cs) = t.enc.forward(&t.xs).unwrap();
        let (ht, ct) = t.enc.forward(&t.xt).unwrap();
        let (logits, cc) = t.cls.forward(&hs).unwrap();
        let (_, gy) = softmax_cross_entropy(&logits, &t.ys).unwrap();
        let (cls_g, gh_y) = t.cls.backward(&cc, &gy).unwrap();
        let (ls, dcs) = t.dom.forward(&hs).unwrap();
        let (lt, dct) = t.dom.forward(&ht).unwrap();
        let (_, gd) = discriminator_bce(ls.as_slice(), lt.as_slice()).unwrap();
        let (mut dom_g, gh_s) = t.dom.backward(&dcs, &Matrix::column(&gd.src)).unwrap();
        let (dom_gt, gh_t) = t.dom.backward(&dct, &Matrix::column(&gd.tgt)).unwrap();
        dom_g.accumulate(&dom_gt).unwrap();
        let grad_hs = gh_y.add(&gradient_reversal(&gh_s, t.lambda)).unwrap();
        let grad_ht = gradient_reversal(&gh_t, t.lambda);
        let mut enc_g = t.enc.backward_params(&cs, &grad_hs).unwrap();
        enc_g.accumulate(&t.enc.backward_params(&ct, &grad_ht).unwrap()).unwrap();

        let objective = |e: &Mlp, c: &Mlp, d: &Mlp| {
            let hs = e.infer(&t.xs).unwrap();
            let ht = e.infer(&t.xt).unwrap();
            let ly = softmax_cross_entropy(&c.infer(&hs).unwrap(), &t.ys).unwrap().0;
            ly - t.lambda * domain_bce(d, &hs, &ht)
        };
        r.dat[0] = fd_error(&t.enc, &enc_g, |e| objective(e, &t.cls, &t.dom));
        r.dat[1] = fd_error(&t.cls, &cls_g, |c| objective(&t.enc, c, &t.dom));
        // The domain head descends L_d itself (the saddle point's min side).
        let hs_f = hs.clone();
        let ht_f = ht.clone();
        r.dat[2] = fd_error(&t.dom, &dom_g, |d| domain_bce(d, &hs_f, &ht_f));
    }
    r
}
