//! Analytic gradients of the four training losses against central finite
//! differences on random toy networks.

mod common;

use common::{check_gradients, fd_error, Toy, FD_TOL};
use xadapt::linalg::Matrix;
use xadapt::nn::{discriminator_bce, gradient_reversal, softmax_cross_entropy};

#[test]
fn all_losses_match_finite_differences_on_twenty_seeds() {
    for seed in 0..20 {
        let r = check_gradients(seed);
        assert!(r.worst() < FD_TOL, "seed {seed}: {r:?}");
    }
}

#[test]
fn checker_rejects_a_gradient_without_reversal() {
    // Negative control: treating the domain head's input gradient as if it
    // were not reversed gives the gradient of L_y + λ L_d, which the check
    // against L_y − λ L_d must flag.
    let t = Toy::new(5);
    let (hs, cs) = t.enc.forward(&t.xs).unwrap();
    let (ht, ct) = t.enc.forward(&t.xt).unwrap();
    let (logits, cc) = t.cls.forward(&hs).unwrap();
    let (_, gy) = softmax_cross_entropy(&logits, &t.ys).unwrap();
    let (_, gh_y) = t.cls.backward(&cc, &gy).unwrap();
    let (ls, dcs) = t.dom.forward(&hs).unwrap();
    let (lt, dct) = t.dom.forward(&ht).unwrap();
    let (_, gd) = discriminator_bce(ls.as_slice(), lt.as_slice()).unwrap();
    let (_, gh_s) = t.dom.backward(&dcs, &Matrix::column(&gd.src)).unwrap();
    let (_, gh_t) = t.dom.backward(&dct, &Matrix::column(&gd.tgt)).unwrap();
    let wrong_s = gh_y.add(&gradient_reversal(&gh_s, -t.lambda)).unwrap();
    let wrong_t = gradient_reversal(&gh_t, -t.lambda);
    let mut g = t.enc.backward_params(&cs, &wrong_s).unwrap();
    g.accumulate(&t.enc.backward_params(&ct, &wrong_t).unwrap()).unwrap();
    let err = fd_error(&t.enc, &g, |e| {
        let hs = e.infer(&t.xs).unwrap();
        let ht = e.infer(&t.xt).unwrap();
        let ly = softmax_cross_entropy(&t.cls.infer(&hs).unwrap(), &t.ys).unwrap().0;
        let ld = discriminator_bce(
            t.dom.infer(&hs).unwrap().as_slice(),
            t.dom.infer(&ht).unwrap().as_slice(),
        )
        .unwrap()
        .0;
        ly - t.lambda * ld
    });
    assert!(err > 100.0 * FD_TOL, "sign error went unnoticed: {err}");
}
