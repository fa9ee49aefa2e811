//! End-to-end experiment: synthetic two-domain corpus, source training,
//! DAT and ADDA adaptation, LDA/PLDA back-end with and without PLDA
//! adaptation, verification metrics and a clustering comparison.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::adapt::{
    adapt_adda, encode, train_dat, train_source, AddaModel, DatModel, EncodeMode, LossTrace,
    SourceModel, TrainConfig,
};
use crate::backend::{
    length_normalize, lda_apply, lda_fit, plda_adapt, plda_fit, subtract_mean, LdaTransform,
    PldaModel, DEFAULT_BETWEEN_SCALE, DEFAULT_EM_ITERS, DEFAULT_WITHIN_SCALE,
};
use crate::dataio::{generate_synthetic, EmbeddingSet, SyntheticCorpus, SyntheticSpec};
use crate::error::{Error, Result};
use crate::evalkit::{
    compute_det, kmeans, nmi_with, score_trials, DetCurve, NmiNorm, ScoreSet, TrialList,
    DEFAULT_P_TARGET, DEFAULT_RESTARTS,
};
use crate::linalg::Rng;

/// RNG stream for k-means, apart from the data and training streams.
const STREAM_KMEANS: u64 = 7;

/// Back-end and metric settings shared by every system in the comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct BackendConfig {
    /// Requested LDA dimension, clamped to `min(d, speakers − 1)`.
    pub lda_dim: usize,
    pub plda_iters: usize,
    pub within_scale: f64,
    pub between_scale: f64,
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            lda_dim: 256,
            plda_iters: DEFAULT_EM_ITERS,
            within_scale: DEFAULT_WITHIN_SCALE,
            between_scale: DEFAULT_BETWEEN_SCALE,
            p_target: DEFAULT_P_TARGET,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

/// Preset experiment sizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scale {
    /// Small corpus and short training; a smoke run.
    Tiny,
    /// The default synthetic corpus with narrow networks.
    #[default]
    Default,
    /// The default corpus with full-width networks and full training.
    Full,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Scale::Tiny),
            "default" => Ok(Scale::Default),
            "full" => Ok(Scale::Full),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scale `{s}` (tiny, default, full)"
            ))),
        }
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scale::Tiny => "tiny",
            Scale::Default => "default",
            Scale::Full => "full",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReproduceConfig {
    pub data: SyntheticSpec,
    /// Source pretraining and DAT.
    pub train: TrainConfig,
    /// The adversarial ADDA stage.
    pub adda: TrainConfig,
    pub backend: BackendConfig,
    pub kmeans_restarts: usize,
    pub nmi_norm: NmiNorm,
}

impl ReproduceConfig {
    pub fn new(scale: Scale, seed: u64) -> Self {
        let data = SyntheticSpec {
            seed,
            ..SyntheticSpec::default()
        };
        let train = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let (data, train) = match scale {
            Scale::Full => (data, train),
            Scale::Default => (
                data,
                TrainConfig {
                    hidden: 64,
                    ..train
                },
            ),
            Scale::Tiny => (
                SyntheticSpec {
                    n_speakers_src: 20,
                    n_speakers_tgt: 20,
                    n_speakers_eval: 8,
                    utts_per_speaker: 20,
                    eval_utts_per_speaker: 10,
                    dim: 16,
                    speaker_rank: 6,
                    ..data
                },
                TrainConfig {
                    hidden: 32,
                    epochs: 20,
                    batch_size: 32,
                    ..train
                },
            ),
        };
        let adda = adversarial(&train);
        ReproduceConfig {
            data,
            adda,
            train,
            backend: BackendConfig::default(),
            kmeans_restarts: DEFAULT_RESTARTS,
            nmi_norm: NmiNorm::Arithmetic,
        }
    }
}

/// ADDA settings derived from the pretraining settings: Adam with β₁ = 0.5
/// and twice the learning rate, for three times as many epochs. With
/// β₁ = 0.9 and the pretraining rate the target encoder does not move far
/// enough to align the domains on the synthetic corpus.
pub fn adversarial(train: &TrainConfig) -> TrainConfig {
    TrainConfig {
        epochs: 3 * train.epochs,
        lr: 2.0 * train.lr,
        beta1: 0.5,
        ..train.clone()
    }
}

/// Fitted back-end for one embedding type.
#[derive(Clone, Debug)]
pub struct BackendRun {
    pub lda: LdaTransform,
    pub plda: PldaModel,
    pub plda_adapted: PldaModel,
    pub scores: ScoreSet,
    pub scores_adapted: ScoreSet,
    /// LDA-projected evaluation set (before length normalization).
    pub eval_lda: EmbeddingSet,
}

/// Source data is centered on its own mean, target data on the unlabeled
/// target mean; then LDA (fitted on source), length normalization, PLDA
/// (fitted on source) and scoring, once with the source PLDA and once
/// after adapting it to the unlabeled target set.
pub fn run_backend(
    src: &EmbeddingSet,
    tgt_unlabeled: &EmbeddingSet,
    tgt_eval: &EmbeddingSet,
    trials: &TrialList,
    cfg: &BackendConfig,
) -> Result<BackendRun> {
    let src_c = subtract_mean(src, &src.mean()?)?;
    let tgt_mean = tgt_unlabeled.mean()?;
    let unl_c = subtract_mean(tgt_unlabeled, &tgt_mean)?;
    let eval_c = subtract_mean(tgt_eval, &tgt_mean)?;

    let n_speakers = src.speaker_labels()?.vocabulary.len();
    let p = cfg.lda_dim.min(src.dim()).min(n_speakers.saturating_sub(1)).max(1);
    let lda = lda_fit(&src_c, p)?;
    let src_l = length_normalize(&lda_apply(&lda, &src_c)?)?;
    let unl_l = length_normalize(&lda_apply(&lda, &unl_c)?)?;
    let eval_lda = lda_apply(&lda, &eval_c)?;
    let eval_l = length_normalize(&eval_lda)?;

    let plda = plda_fit(&src_l, cfg.plda_iters)?.model;
    let plda_adapted = plda_adapt(&plda, &unl_l, cfg.within_scale, cfg.between_scale)?;
    Ok(BackendRun {
        scores: score_trials(&plda, &eval_l, trials)?,
        scores_adapted: score_trials(&plda_adapted, &eval_l, trials)?,
        lda,
        plda,
        plda_adapted,
        eval_lda,
    })
}

#[derive(Clone, Debug)]
pub struct SystemResult {
    pub name: String,
    pub eer: f64,
    pub min_dcf: f64,
    pub det: DetCurve,
}

fn evaluate(name: &str, scores: &ScoreSet, cfg: &BackendConfig) -> Result<SystemResult> {
    let det = compute_det(scores)?;
    Ok(SystemResult {
        name: name.to_owned(),
        eer: det.eer(),
        min_dcf: det.min_dcf(cfg.p_target, cfg.c_miss, cfg.c_fa)?,
        det,
    })
}

#[derive(Clone, Debug)]
pub struct ReproduceReport {
    /// baseline, baseline+plda_adapt, dat_concat, dat_concat+plda_adapt,
    /// adda, adda+plda_adapt.
    pub systems: Vec<SystemResult>,
    pub nmi_raw: f64,
    pub nmi_adda: f64,
    pub source_accuracy: f64,
    pub source: SourceModel,
    pub dat: DatModel,
    pub adda: AddaModel,
    pub traces: Vec<(&'static str, LossTrace)>,
    pub backends: Vec<(&'static str, BackendRun)>,
}

impl ReproduceReport {
    pub fn system(&self, name: &str) -> Option<&SystemResult> {
        self.systems.iter().find(|s| s.name == name)
    }

    /// `system<TAB>eer<TAB>min_dcf` with a header row.
    pub fn table_tsv(&self) -> String {
        let mut out = String::from("system\teer\tmin_dcf\n");
        for s in &self.systems {
            writeln!(out, "{}\t{}\t{}", s.name, s.eer, s.min_dcf).unwrap();
        }
        out
    }

    pub fn nmi_tsv(&self) -> String {
        format!(
            "embedding\tnmi\nraw\t{}\nadda\t{}\n",
            self.nmi_raw, self.nmi_adda
        )
    }

    /// Writes the tables, per-system DET curves, loss traces and every
    /// fitted model into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("report.tsv", self.table_tsv())?;
        put("nmi.tsv", self.nmi_tsv())?;
        put("source_accuracy.tsv", format!("key\tvalue\naccuracy\t{}\n", self.source_accuracy))?;
        for s in &self.systems {
            put(&format!("det_{}.tsv", s.name.replace('+', "_")), s.det.to_tsv(true))?;
        }
        for (name, t) in &self.traces {
            put(&format!("trace_{name}.tsv"), t.to_tsv())?;
        }
        self.source.to_file().write(&dir.join("source.model"))?;
        self.dat.to_file().write(&dir.join("dat.model"))?;
        self.adda.to_file().write(&dir.join("adda.model"))?;
        for (name, b) in &self.backends {
            b.lda.to_file().write(&dir.join(format!("{name}.lda")))?;
            b.plda.to_file().write(&dir.join(format!("{name}.plda")))?;
            b.plda_adapted
                .to_file()
                .write(&dir.join(format!("{name}_adapted.plda")))?;
        }
        Ok(())
    }
}

fn cluster_nmi(eval_lda: &EmbeddingSet, cfg: &ReproduceConfig) -> Result<f64> {
    let truth = eval_lda.speaker_labels()?;
    let mut rng = Rng::with_stream(cfg.data.seed, STREAM_KMEANS);
    let k = truth.vocabulary.len();
    let fit = kmeans(eval_lda, k, cfg.kmeans_restarts, &mut rng)?;
    nmi_with(&fit.assignment, &truth.labels, cfg.nmi_norm)
}

/// Generates the corpus for `cfg` and runs [`run_on_corpus`].
pub fn reproduce(cfg: &ReproduceConfig) -> Result<ReproduceReport> {
    run_on_corpus(&generate_synthetic(&cfg.data)?, cfg)
}

pub fn run_on_corpus(corpus: &SyntheticCorpus, cfg: &ReproduceConfig) -> Result<ReproduceReport> {
    let SyntheticCorpus {
        src_train,
        tgt_unlabeled,
        tgt_eval,
        trials,
        ..
    } = corpus;
    let b = &cfg.backend;

    let source = train_source(src_train, &cfg.train)?;
    let source_accuracy = source.model.accuracy(src_train)?;
    let dat = train_dat(src_train, tgt_unlabeled, &cfg.train)?;
    let adda = adapt_adda(&source.model, tgt_unlabeled, src_train, &cfg.adda)?;

    let raw = run_backend(src_train, tgt_unlabeled, tgt_eval, trials, b)?;

    let cat = |s: &EmbeddingSet| encode(&dat.model, s, EncodeMode::Concat);
    let dat_run = run_backend(
        &cat(src_train)?,
        &cat(tgt_unlabeled)?,
        &cat(tgt_eval)?,
        trials,
        b,
    )?;

    // The back-end is fitted in the space it scores in, so the source set
    // also goes through M_t.
    let to_t = |s: &EmbeddingSet| encode(&adda.model, s, EncodeMode::Replace);
    let adda_run = run_backend(
        &to_t(src_train)?,
        &to_t(tgt_unlabeled)?,
        &to_t(tgt_eval)?,
        trials,
        b,
    )?;

    let mut systems = Vec::with_capacity(6);
    for (name, run) in [("baseline", &raw), ("dat_concat", &dat_run), ("adda", &adda_run)] {
        systems.push(evaluate(name, &run.scores, b)?);
        systems.push(evaluate(&format!("{name}+plda_adapt"), &run.scores_adapted, b)?);
    }
    let nmi_raw = cluster_nmi(&raw.eval_lda, cfg)?;
    let nmi_adda = cluster_nmi(&adda_run.eval_lda, cfg)?;

    Ok(ReproduceReport {
        systems,
        nmi_raw,
        nmi_adda,
        source_accuracy,
        traces: vec![
            ("source", source.trace),
            ("dat", dat.trace),
            ("adda", adda.trace),
        ],
        source: source.model,
        dat: dat.model,
        adda: adda.model,
        backends: vec![("baseline", raw), ("dat_concat", dat_run), ("adda", adda_run)],
    })
}
