//! Properties of the synthetic two-domain corpus.

use xadapt::dataio::{generate_synthetic, EmbeddingSet, SyntheticSpec};
use xadapt::evalkit::eer;
use xadapt::pipeline::{run_backend, BackendConfig};

fn column_stats(set: &EmbeddingSet) -> (Vec<f64>, Vec<f64>) {
    let n = set.len() as f64;
    let mean = set.mean().unwrap();
    let mut var = vec![0.0; set.dim()];
    for v in set.vectors() {
        for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
            *s += (x - m) * (x - m) / (n - 1.0);
        }
    }
    (mean, var)
}

/// Largest per-dimension z statistic of the source/target mean difference.
/// Utterances of one speaker share its mean, so the effective sample size
/// is the speaker count, which makes the test conservative.
fn max_mean_z(spec: &SyntheticSpec) -> f64 {
    let c = generate_synthetic(spec).unwrap();
    let (ms, vs) = column_stats(&c.src_train);
    let (mt, vt) = column_stats(&c.tgt_unlabeled);
    let (ns, nt) = (spec.n_speakers_src as f64, spec.n_speakers_tgt as f64);
    (0..spec.dim)
        .map(|j| (ms[j] - mt[j]).abs() / (vs[j] / ns + vt[j] / nt).sqrt())
        .fold(0.0, f64::max)
}

#[test]
fn null_shift_passes_a_two_sample_mean_test() {
    // Bonferroni over 64 dimensions at 5%: |z| < 3.16.
    for seed in 0..5 {
        let spec = SyntheticSpec { seed, ..SyntheticSpec::default() }.without_shift();
        let z = max_mean_z(&spec);
        assert!(z < 3.16, "seed {seed}: max |z| = {z}");
    }
    // The same test does detect the default shift.
    let z = max_mean_z(&SyntheticSpec::default());
    assert!(z > 3.16, "default shift went undetected: {z}");
}

#[test]
fn default_shift_hurts_the_unadapted_back_end() {
    let cfg = BackendConfig::default();
    for seed in 0..3 {
        let spec = SyntheticSpec { seed, ..SyntheticSpec::default() };
        let eval = |s: &SyntheticSpec| {
            let c = generate_synthetic(s).unwrap();
            let run = run_backend(&c.src_train, &c.tgt_unlabeled, &c.tgt_eval, &c.trials, &cfg).unwrap();
            eer(&run.scores).unwrap()
        };
        let shifted = eval(&spec);
        let matched = eval(&spec.without_shift());
        assert!(shifted > matched, "seed {seed}: shifted {shifted} vs matched {matched}");
    }
}
