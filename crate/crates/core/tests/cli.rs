//! End-to-end checks of the `xadapt` command line through files.

mod common;

use std::path::Path;

use common::{metric, p, run_cli};
use sha2::{Digest, Sha256};
use xadapt::adapt::{AddaModel, SourceModel};
use xadapt::linalg::Matrix;
use xadapt::modelfile::ModelFile;
use xadapt::nn::{Activation, Dense, Mlp, SpeakerClassifier};

const SMALL_CORPUS: &[&str] = &[
    "--n-speakers-src", "6", "--n-speakers-tgt", "6", "--n-speakers-eval", "4",
    "--utts-per-speaker", "8", "--eval-utts-per-speaker", "6", "--dim", "8",
    "--speaker-rank", "4",
];
const SMALL_TRAINING: &[&str] = &["--epochs", "3", "--batch-size", "16", "--hidden", "16"];

fn ok(args: &[&str]) -> String {
    let (code, out, err) = run_cli(args);
    assert_eq!(code, 0, "{args:?} failed: {err}");
    out
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn gen_small(dir: &Path, seed: &str) {
    let mut args = vec!["gen-data", "--seed", seed, "--out", p(dir)];
    args.extend_from_slice(SMALL_CORPUS);
    ok(&args);
}

fn train_source(dir: &Path, out: &Path) {
    let src = dir.join("src_train.vec");
    let u2s = dir.join("src_train.utt2spk");
    let mut args = vec!["train-source", "--input", p(&src), "--utt2spk", p(&u2s), "--out", p(out)];
    args.extend_from_slice(SMALL_TRAINING);
    ok(&args);
}

fn adapt(dir: &Path, source: &Path, out: &Path, epochs: &str) {
    let src = dir.join("src_train.vec");
    let tgt = dir.join("tgt_unlabeled.vec");
    ok(&[
        "adapt-adda", "--source-model", p(source), "--src", p(&src), "--tgt", p(&tgt),
        "--epochs", epochs, "--batch-size", "16", "--hidden", "16", "--out", p(out),
    ]);
}

#[test]
fn gen_data_is_seeded() {
    let d = tempfile::tempdir().unwrap();
    let (a, b, c) = (d.path().join("a"), d.path().join("b"), d.path().join("c"));
    gen_small(&a, "4");
    gen_small(&b, "4");
    gen_small(&c, "5");
    for f in ["src_train.vec", "src_train.utt2spk", "tgt_unlabeled.vec", "tgt_eval.vec", "tgt_eval.utt2spk", "trials"] {
        assert_eq!(digest(&a.join(f)), digest(&b.join(f)), "{f}");
    }
    assert_ne!(digest(&a.join("src_train.vec")), digest(&c.join("src_train.vec")));
}

#[test]
fn zero_epoch_adaptation_copies_the_source_encoder_and_leaves_the_source_file() {
    let d = tempfile::tempdir().unwrap();
    gen_small(d.path(), "1");
    let source = d.path().join("source.model");
    train_source(d.path(), &source);
    let before = digest(&source);

    let adda = d.path().join("adda.model");
    adapt(d.path(), &source, &adda, "0");
    assert_eq!(digest(&source), before);

    let m = AddaModel::from_file(&ModelFile::read(&adda).unwrap()).unwrap();
    let s = SourceModel::from_file(&ModelFile::read(&source).unwrap()).unwrap();
    assert_eq!(m.target_encoder, s.encoder);
    assert_eq!(m.source, s);

    // The two encoders of the adapted model write identical files.
    let ev = d.path().join("tgt_eval.vec");
    let (t, s) = (d.path().join("t.vec"), d.path().join("s.vec"));
    ok(&["encode", "--model", p(&adda), "--input", p(&ev), "--out", p(&t)]);
    ok(&["encode", "--model", p(&adda), "--input", p(&ev), "--encoder", "source", "--out", p(&s)]);
    assert_eq!(digest(&t), digest(&s));
}

#[test]
fn trainers_are_deterministic_per_seed() {
    let d = tempfile::tempdir().unwrap();
    gen_small(d.path(), "2");
    let (s1, s2) = (d.path().join("s1.model"), d.path().join("s2.model"));
    train_source(d.path(), &s1);
    train_source(d.path(), &s2);
    assert_eq!(digest(&s1), digest(&s2));

    let (a1, a2) = (d.path().join("a1.model"), d.path().join("a2.model"));
    adapt(d.path(), &s1, &a1, "2");
    adapt(d.path(), &s1, &a2, "2");
    assert_eq!(digest(&a1), digest(&a2));

    let src = d.path().join("src_train.vec");
    let u2s = d.path().join("src_train.utt2spk");
    let tgt = d.path().join("tgt_unlabeled.vec");
    let dat = |out: &Path, trace: &Path| {
        let mut args = vec![
            "train-dat", "--input", p(&src), "--utt2spk", p(&u2s), "--tgt", p(&tgt),
            "--out", p(out), "--trace", p(trace),
        ];
        args.extend_from_slice(SMALL_TRAINING);
        ok(&args)
    };
    let (d1, d2) = (d.path().join("d1.model"), d.path().join("d2.model"));
    let (t1, t2) = (d.path().join("d1.tsv"), d.path().join("d2.tsv"));
    dat(&d1, &t1);
    dat(&d2, &t2);
    assert_eq!(digest(&d1), digest(&d2));
    assert_eq!(digest(&t1), digest(&t2));
    let trace = std::fs::read_to_string(&t1).unwrap();
    assert!(trace.lines().any(|l| l.contains("domain_bce")), "{trace}");
}

#[test]
fn separable_toy_reaches_full_source_accuracy() {
    let d = tempfile::tempdir().unwrap();
    let (v, u) = (d.path().join("toy.vec"), d.path().join("toy.utt2spk"));
    let mut vecs = String::new();
    let mut spk = String::new();
    for i in 0..24 {
        let (s, x) = match i % 3 {
            0 => ("a", [-2.0, 0.1 * i as f64]),
            1 => ("b", [2.0, -0.1 * i as f64]),
            _ => ("c", [0.05 * i as f64, 3.0]),
        };
        vecs.push_str(&format!("u{i:02} {} {}\n", x[0], x[1]));
        spk.push_str(&format!("u{i:02} {s}\n"));
    }
    std::fs::write(&v, vecs).unwrap();
    std::fs::write(&u, spk).unwrap();
    let out = ok(&[
        "train-source", "--input", p(&v), "--utt2spk", p(&u), "--epochs", "200",
        "--batch-size", "8", "--lr", "1e-2", "--hidden", "16", "--out",
        p(&d.path().join("m.model")),
    ]);
    assert_eq!(metric(&out, "accuracy"), 1.0);
}

fn write_source_model(path: &Path, encoder: Mlp) {
    let dim = encoder.output_dim();
    let head = Mlp::new(vec![Dense::new(Matrix::zeros(2, dim), vec![0.0; 2], Activation::Identity).unwrap()]).unwrap();
    let m = SourceModel::new(encoder, SpeakerClassifier::from_net(head).unwrap(), vec!["a".into(), "b".into()]).unwrap();
    m.to_file().write(path).unwrap();
}

#[test]
fn encode_identity_concat_and_a_hand_computed_model() {
    let d = tempfile::tempdir().unwrap();
    let input = d.path().join("x.vec");
    std::fs::write(
        &input,
        "u1 1.0000000000000000e0 2.0000000000000000e0\nu2 -3.0000000000000000e0 5.0000000000000000e-1\n",
    )
    .unwrap();

    let ident = d.path().join("ident.model");
    write_source_model(&ident, Mlp::identity(2));
    let out = d.path().join("out.vec");
    ok(&["encode", "--model", p(&ident), "--input", p(&input), "--out", p(&out)]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&input).unwrap());

    let cat = d.path().join("cat.vec");
    ok(&["encode", "--model", p(&ident), "--input", p(&input), "--mode", "concat", "--out", p(&cat)]);
    let first = std::fs::read_to_string(&cat).unwrap();
    assert_eq!(first.lines().next().unwrap().split(' ').count(), 1 + 4);

    // relu(W x + b) with W = [[1, -1], [2, 0], [0, 1]], b = [0, -1, 0.5]:
    // u1 = (1, 2) -> (relu(-1), relu(1), relu(2.5)) = (0, 1, 2.5)
    // u2 = (-3, 0.5) -> (relu(-3.5), relu(-7), relu(1)) = (0, 0, 1)
    let w = Matrix::from_rows(&[[1.0, -1.0], [2.0, 0.0], [0.0, 1.0]]).unwrap();
    let layer = Dense::new(w, vec![0.0, -1.0, 0.5], Activation::Relu).unwrap();
    let hand = d.path().join("hand.model");
    write_source_model(&hand, Mlp::new(vec![layer]).unwrap());
    let enc = d.path().join("enc.vec");
    ok(&["encode", "--model", p(&hand), "--input", p(&input), "--out", p(&enc)]);
    let got = xadapt::dataio::read_embeddings(&enc, None).unwrap();
    assert_eq!(got.get("u1").unwrap(), &[0.0, 1.0, 2.5]);
    assert_eq!(got.get("u2").unwrap(), &[0.0, 0.0, 1.0]);
}

fn write_scores(dir: &Path, rows: &[(&str, &str, bool, f64)]) -> (std::path::PathBuf, std::path::PathBuf) {
    let (t, s) = (dir.join("trials"), dir.join("scores.tsv"));
    let mut trials = String::new();
    let mut scores = String::new();
    for (e, x, y, v) in rows {
        trials.push_str(&format!("{e} {x} {}\n", if *y { "target" } else { "nontarget" }));
        scores.push_str(&format!("{e}\t{x}\t{v}\n"));
    }
    std::fs::write(&t, trials).unwrap();
    std::fs::write(&s, scores).unwrap();
    (t, s)
}

#[test]
fn evaluate_separable_and_brute_force_cases() {
    let d = tempfile::tempdir().unwrap();
    let sep = d.path().join("sep");
    std::fs::create_dir(&sep).unwrap();
    let (t, s) = write_scores(&sep, &[("a", "1", true, 5.0), ("a", "2", false, -1.0), ("b", "1", false, 0.0), ("b", "2", true, 4.0)]);
    let out = ok(&["evaluate", "--trials", p(&t), "--scores", p(&s)]);
    assert_eq!(metric(&out, "eer"), 0.0);

    // Targets {3, 2, 0}, nontargets {1, -1, -2}: at threshold 1 the target
    // 0 is missed and the nontarget 1 accepted, 1/3 each, and no threshold
    // does better on both.
    let bf = d.path().join("bf");
    std::fs::create_dir(&bf).unwrap();
    let (t, s) = write_scores(
        &bf,
        &[("a", "1", true, 3.0), ("a", "2", true, 2.0), ("a", "3", true, 0.0), ("b", "1", false, 1.0), ("b", "2", false, -1.0), ("b", "3", false, -2.0)],
    );
    let out = ok(&["evaluate", "--trials", p(&t), "--scores", p(&s)]);
    assert!((metric(&out, "eer") - 1.0 / 3.0).abs() < 1e-15, "{out}");
}

#[test]
fn missing_trial_score_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    let (t, s) = write_scores(d.path(), &[("a", "1", true, 1.0), ("a", "2", false, 0.0)]);
    std::fs::write(&s, "a\t1\t1.0\n").unwrap();
    let (code, _, err) = run_cli(&["evaluate", "--trials", p(&t), "--scores", p(&s)]);
    assert_eq!(code, 3);
    assert!(err.contains("(a, 2)"), "{err}");
}

#[test]
fn cluster_two_blobs_deterministic_and_single_cluster() {
    let d = tempfile::tempdir().unwrap();
    let (v, u) = (d.path().join("b.vec"), d.path().join("b.utt2spk"));
    let mut vecs = String::new();
    let mut spk = String::new();
    for i in 0..20 {
        let (s, c) = if i < 10 { ("x", -5.0) } else { ("y", 5.0) };
        vecs.push_str(&format!("u{i:02} {} {}\n", c + 0.01 * i as f64, -c));
        spk.push_str(&format!("u{i:02} {s}\n"));
    }
    std::fs::write(&v, vecs).unwrap();
    std::fs::write(&u, spk).unwrap();

    let (a1, a2) = (d.path().join("a1"), d.path().join("a2"));
    let out = ok(&["cluster", "--input", p(&v), "--utt2spk", p(&u), "--out", p(&a1), "--seed", "3"]);
    assert_eq!(metric(&out, "nmi"), 1.0);
    ok(&["cluster", "--input", p(&v), "--utt2spk", p(&u), "--out", p(&a2), "--seed", "3"]);
    assert_eq!(digest(&a1), digest(&a2));

    // One cluster carries no information about the speakers.
    let out = ok(&["cluster", "--input", p(&v), "--utt2spk", p(&u), "--k", "1", "--out", p(&a1)]);
    assert_eq!(metric(&out, "nmi"), 0.0);
}

#[test]
fn backend_stages_compose_through_files() {
    let d = tempfile::tempdir().unwrap();
    gen_small(d.path(), "6");
    let f = |n: &str| d.path().join(n);
    ok(&["normalize", "--input", p(&f("src_train.vec")), "--utt2spk", p(&f("src_train.utt2spk")), "--no-length", "--out", p(&f("src_c.vec")), "--out-utt2spk", p(&f("src_c.utt2spk"))]);
    ok(&["fit-lda", "--input", p(&f("src_c.vec")), "--utt2spk", p(&f("src_c.utt2spk")), "--dim", "4", "--out", p(&f("lda"))]);
    ok(&["normalize", "--input", p(&f("src_train.vec")), "--utt2spk", p(&f("src_train.utt2spk")), "--lda", p(&f("lda")), "--out", p(&f("src_l.vec")), "--out-utt2spk", p(&f("src_l.utt2spk"))]);
    ok(&["fit-plda", "--input", p(&f("src_l.vec")), "--utt2spk", p(&f("src_l.utt2spk")), "--out", p(&f("plda")), "--trace", p(&f("em.tsv"))]);
    let em = std::fs::read_to_string(f("em.tsv")).unwrap();
    let ll: Vec<f64> = em.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(ll.len(), 11);
    assert!(ll.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{em}");

    ok(&["normalize", "--input", p(&f("tgt_unlabeled.vec")), "--lda", p(&f("lda")), "--out", p(&f("unl_l.vec"))]);
    ok(&["adapt-plda", "--plda", p(&f("plda")), "--input", p(&f("unl_l.vec")), "--out", p(&f("plda_a"))]);
    ok(&["normalize", "--input", p(&f("tgt_eval.vec")), "--mean-of", p(&f("tgt_unlabeled.vec")), "--lda", p(&f("lda")), "--out", p(&f("eval_l.vec"))]);
    ok(&["score", "--plda", p(&f("plda_a")), "--input", p(&f("eval_l.vec")), "--trials", p(&f("trials")), "--out", p(&f("scores.tsv"))]);
    let via_scores = ok(&["evaluate", "--trials", p(&f("trials")), "--scores", p(&f("scores.tsv"))]);
    let direct = ok(&["evaluate", "--trials", p(&f("trials")), "--plda", p(&f("plda_a")), "--input", p(&f("eval_l.vec"))]);
    assert_eq!(via_scores, direct);
    let eer = metric(&direct, "eer");
    assert!((0.0..=1.0).contains(&eer));
}

#[test]
fn tiny_reproduce_writes_six_finite_rows_quickly() {
    let d = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    let out = ok(&["reproduce", "--scale", "tiny", "--out", p(d.path())]);
    assert!(start.elapsed().as_secs() < 60);
    let table = std::fs::read_to_string(d.path().join("report.tsv")).unwrap();
    assert!(out.starts_with(&table));
    let rows: Vec<&str> = table.lines().skip(1).collect();
    let names: Vec<&str> = rows.iter().map(|r| r.split('\t').next().unwrap()).collect();
    assert_eq!(
        names,
        ["baseline", "baseline+plda_adapt", "dat_concat", "dat_concat+plda_adapt", "adda", "adda+plda_adapt"]
    );
    for r in rows {
        for v in r.split('\t').skip(1) {
            assert!(v.parse::<f64>().unwrap().is_finite(), "{r}");
        }
    }
    for name in names {
        assert!(d.path().join(format!("det_{}.tsv", name.replace('+', "_"))).exists());
    }
    assert!(std::fs::read_to_string(d.path().join("nmi.tsv")).unwrap().contains("adda\t"));
}

#[test]
fn usage_errors_exit_two_and_help_shows_defaults() {
    let (code, _, err) = run_cli(&["train-source", "--no-such-flag"]);
    assert_eq!(code, 2, "{err}");
    let (code, out, _) = run_cli(&["adapt-adda", "--help"]);
    assert_eq!(code, 0);
    for flag in ["--epochs", "--batch-size", "--lr", "--disc-steps", "--blind-discriminator"] {
        assert!(out.contains(flag), "{flag} missing from help");
    }
    assert!(out.contains("[default: 100]") && out.contains("[default: 128]"), "{out}");
    let (code, out, _) = run_cli(&["fit-lda", "--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("[default: 256]"), "{out}");
}
