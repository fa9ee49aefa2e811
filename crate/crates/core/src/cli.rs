//! `xadapt` command line: one subcommand per pipeline stage, composed
//! through files. Every command is a pure function of its input files,
//! flags and `--seed`.
//!
//! Exit codes: 0 ok, 2 usage, 3 data format, 4 numeric divergence,
//! 5 degenerate input.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::adapt::{
    adapt_adda, encode, train_dat, train_source, AddaModel, DatModel, EncodeMode, LossTrace,
    SourceModel, TrainConfig,
};
use crate::backend::{
    length_normalize, lda_apply, lda_fit, mean_normalize, plda_adapt, plda_fit, LdaTransform,
    PldaModel, DEFAULT_BETWEEN_SCALE, DEFAULT_EM_ITERS, DEFAULT_WITHIN_SCALE,
};
use crate::dataio::{
    format_value, generate_synthetic, read_embeddings, read_scores, read_trials, write_embeddings,
    write_scores, EmbeddingSet, Rotation, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::evalkit::{
    compute_det, format_metrics, kmeans, nmi_with, score_trials, NmiNorm, ScoreSet,
    DEFAULT_P_TARGET, DEFAULT_RESTARTS,
};
use crate::linalg::Rng;
use crate::modelfile::{ModelFile, Role};
use crate::pipeline::{reproduce, ReproduceConfig, Scale};

/// RNG stream used by `cluster`.
const STREAM_CLUSTER: u64 = 7;

#[derive(Parser, Debug)]
#[command(name = "xadapt", version, about = "Adversarial domain adaptation of speaker embeddings")]
pub struct Cli {
    /// Seed for every random draw (data, initialization, batching, k-means).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic two-domain corpus.
    GenData(GenDataArgs),
    /// Train encoder and speaker classifier on labeled source embeddings.
    TrainSource(TrainSourceArgs),
    /// Adapt a target encoder to unlabeled target embeddings (ADDA).
    AdaptAdda(AdaptAddaArgs),
    /// Domain-adversarial training with gradient reversal (DAT).
    TrainDat(TrainDatArgs),
    /// Map embeddings through a trained encoder.
    Encode(EncodeArgs),
    /// Fit an LDA projection on labeled embeddings.
    FitLda(FitLdaArgs),
    /// Fit a two-covariance PLDA model on labeled embeddings.
    FitPlda(FitPldaArgs),
    /// Adapt a PLDA model to unlabeled in-domain embeddings.
    AdaptPlda(AdaptPldaArgs),
    /// Mean subtraction, optional LDA and length normalization.
    Normalize(NormalizeArgs),
    /// Score a trial list with a PLDA model.
    Score(ScoreArgs),
    /// EER, minDCF and the DET curve of a set of trial scores.
    Evaluate(EvaluateArgs),
    /// K-means clustering, with NMI against speaker labels when given.
    Cluster(ClusterArgs),
    /// Run the whole comparison on a generated corpus.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub n_speakers_src: usize,
    #[arg(long, default_value_t = 50)]
    pub n_speakers_tgt: usize,
    #[arg(long, default_value_t = 20)]
    pub n_speakers_eval: usize,
    #[arg(long, default_value_t = 40)]
    pub utts_per_speaker: usize,
    #[arg(long, default_value_t = 20)]
    pub eval_utts_per_speaker: usize,
    /// Enrollment utterances per evaluation speaker; the rest are test.
    #[arg(long, default_value_t = 2)]
    pub enroll_per_speaker: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Number of coordinates carrying speaker identity.
    #[arg(long, default_value_t = 16)]
    pub speaker_rank: usize,
    #[arg(long, default_value_t = 1.0)]
    pub between_std: f64,
    #[arg(long, default_value_t = 0.3)]
    pub within_std: f64,
    /// `random`, `identity`, or a plane-rotation angle in degrees.
    #[arg(long, default_value = "random")]
    pub rotation: Rotation,
    #[arg(long, default_value_t = 1.0)]
    pub translation_scale: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_std: f64,
}

impl GenDataArgs {
    fn spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_speakers_src: self.n_speakers_src,
            n_speakers_tgt: self.n_speakers_tgt,
            n_speakers_eval: self.n_speakers_eval,
            utts_per_speaker: self.utts_per_speaker,
            eval_utts_per_speaker: self.eval_utts_per_speaker,
            enroll_per_speaker: self.enroll_per_speaker,
            dim: self.dim,
            speaker_rank: self.speaker_rank,
            between_std: self.between_std,
            within_std: self.within_std,
            rotation: self.rotation,
            translation_scale: self.translation_scale,
            noise_std: self.noise_std,
            seed,
        }
    }
}

/// Optimization and architecture flags shared by the trainers.
#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Adam first-moment decay.
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    /// Width of every hidden layer.
    #[arg(long, default_value_t = 512)]
    pub hidden: usize,
    /// Encoder output width (default: input dimension).
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub encoder_layers: usize,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            beta1: self.beta1,
            seed,
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            encoder_layers: self.encoder_layers,
            ..TrainConfig::default()
        }
    }
}

/// A vectors file with an optional speaker map.
#[derive(Args, Debug)]
pub struct Labeled {
    /// Embedding vectors (`utt_id v1 … vd`).
    #[arg(long)]
    pub input: PathBuf,
    /// Speaker map (`utt_id spk_id`).
    #[arg(long)]
    pub utt2spk: PathBuf,
}

impl Labeled {
    fn read(&self) -> Result<EmbeddingSet> {
        read_embeddings(&self.input, Some(&self.utt2spk))
    }
}

#[derive(Args, Debug)]
pub struct TrainSourceArgs {
    #[command(flatten)]
    pub data: Labeled,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss trace (TSV).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AdaptAddaArgs {
    /// Pretrained source model.
    #[arg(long)]
    pub source_model: PathBuf,
    /// Source embeddings (speaker labels not needed).
    #[arg(long)]
    pub src: PathBuf,
    /// Unlabeled target embeddings.
    #[arg(long)]
    pub tgt: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 2)]
    pub disc_hidden_layers: usize,
    /// Discriminator updates per minibatch pair.
    #[arg(long, default_value_t = 1)]
    pub disc_steps: usize,
    /// Target-encoder updates per minibatch pair.
    #[arg(long, default_value_t = 1)]
    pub map_steps: usize,
    /// Start the discriminator at logit 0 everywhere.
    #[arg(long)]
    pub blind_discriminator: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainDatArgs {
    #[command(flatten)]
    pub data: Labeled,
    /// Unlabeled target embeddings.
    #[arg(long)]
    pub tgt: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Weight of the reversed domain gradient.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AddaSide {
    /// The adapted target encoder M_t.
    Target,
    /// The frozen source encoder M_s.
    Source,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Source, ADDA or DAT model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Speaker map carried over to the output.
    #[arg(long)]
    pub utt2spk: Option<PathBuf>,
    /// `replace` outputs the encoding, `concat` appends it to the input.
    #[arg(long, default_value = "replace")]
    pub mode: EncodeMode,
    /// Which encoder of an ADDA model to use.
    #[arg(long, value_enum, default_value_t = AddaSide::Target)]
    pub encoder: AddaSide,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the speaker map of the output here.
    #[arg(long)]
    pub out_utt2spk: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitLdaArgs {
    #[command(flatten)]
    pub data: Labeled,
    /// Output dimension, clamped to min(dim, speakers − 1).
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitPldaArgs {
    #[command(flatten)]
    pub data: Labeled,
    /// EM iterations.
    #[arg(long, default_value_t = DEFAULT_EM_ITERS)]
    pub iters: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-iteration log-likelihood (TSV).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AdaptPldaArgs {
    #[arg(long)]
    pub plda: PathBuf,
    /// Unlabeled in-domain embeddings, normalized like the training data.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_WITHIN_SCALE)]
    pub within_scale: f64,
    #[arg(long, default_value_t = DEFAULT_BETWEEN_SCALE)]
    pub between_scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct NormalizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub utt2spk: Option<PathBuf>,
    /// Subtract the mean of this set (default: the input's own mean).
    #[arg(long)]
    pub mean_of: Option<PathBuf>,
    /// Apply this LDA projection after centering.
    #[arg(long)]
    pub lda: Option<PathBuf>,
    /// Skip the final length normalization.
    #[arg(long)]
    pub no_length: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub out_utt2spk: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub plda: PathBuf,
    /// Normalized evaluation embeddings.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
    /// Scores TSV (`enroll_id<TAB>test_id<TAB>score`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub trials: PathBuf,
    /// Scores TSV; alternatively give `--plda` and `--input`.
    #[arg(long, conflicts_with_all = ["plda", "input"])]
    pub scores: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pub plda: Option<PathBuf>,
    #[arg(long, requires = "plda")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_P_TARGET)]
    pub p_target: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_miss: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_fa: f64,
    /// Write the DET curve here.
    #[arg(long)]
    pub det: Option<PathBuf>,
    /// Leave out the probit columns of the DET curve.
    #[arg(long)]
    pub no_probit: bool,
    /// Write the metrics here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Speaker map; enables the `nmi` line and the default `k`.
    #[arg(long)]
    pub utt2spk: Option<PathBuf>,
    /// Number of clusters (default: number of speakers in `--utt2spk`).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// `arithmetic`, `sqrt` or `max`.
    #[arg(long, default_value = "arithmetic")]
    pub nmi_norm: NmiNorm,
    /// Assignment file (`utt_id cluster`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    /// Output directory for tables, curves, traces and models.
    #[arg(long)]
    pub out: PathBuf,
    /// `tiny`, `default` or `full`.
    #[arg(long, default_value = "default")]
    pub scale: Scale,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to `stderr`.
pub fn run_with<I, T>(args: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    run_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}

fn say(out: &mut dyn std::io::Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_trace(path: Option<&PathBuf>, trace: &LossTrace) -> Result<()> {
    match path {
        Some(p) => write_text(p, &trace.to_tsv()),
        None => Ok(()),
    }
}

fn write_model(path: &Path, f: &ModelFile) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    f.write(path)
}

fn write_set(set: &EmbeddingSet, vectors: &Path, utt2spk: Option<&PathBuf>) -> Result<()> {
    if let Some(dir) = vectors.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_embeddings(set, vectors, utt2spk.map(PathBuf::as_path))
}

fn execute(cli: &Cli, out: &mut dyn std::io::Write) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::GenData(a) => {
            let corpus = generate_synthetic(&a.spec(seed))?;
            corpus.write_to(&a.out)
        }
        Command::TrainSource(a) => {
            let src = a.data.read()?;
            let trained = train_source(&src, &a.train.config(seed))?;
            write_model(&a.out, &trained.model.to_file())?;
            write_trace(a.trace.as_ref(), &trained.trace)?;
            let acc = trained.model.accuracy(&src)?;
            say(out, &format_metrics(&[("accuracy", acc)]))
        }
        Command::AdaptAdda(a) => {
            let source = SourceModel::from_file(&ModelFile::read(&a.source_model)?)?;
            let src = read_embeddings(&a.src, None)?;
            let tgt = read_embeddings(&a.tgt, None)?;
            let cfg = TrainConfig {
                disc_hidden_layers: a.disc_hidden_layers,
                disc_steps: a.disc_steps,
                map_steps: a.map_steps,
                blind_discriminator: a.blind_discriminator,
                ..a.train.config(seed)
            };
            let trained = adapt_adda(&source, &tgt, &src, &cfg)?;
            write_model(&a.out, &trained.model.to_file())?;
            write_trace(a.trace.as_ref(), &trained.trace)
        }
        Command::TrainDat(a) => {
            let src = a.data.read()?;
            let tgt = read_embeddings(&a.tgt, None)?;
            let cfg = TrainConfig {
                lambda: a.lambda,
                ..a.train.config(seed)
            };
            let trained = train_dat(&src, &tgt, &cfg)?;
            write_model(&a.out, &trained.model.to_file())?;
            write_trace(a.trace.as_ref(), &trained.trace)?;
            let acc = trained.model.accuracy(&src)?;
            say(out, &format_metrics(&[("accuracy", acc)]))
        }
        Command::Encode(a) => {
            let emb = read_embeddings(&a.input, a.utt2spk.as_deref())?;
            let file = ModelFile::read(&a.model)?;
            let encoded = match file.role {
                Role::Source => encode(&SourceModel::from_file(&file)?, &emb, a.mode)?,
                Role::Dat => encode(&DatModel::from_file(&file)?, &emb, a.mode)?,
                Role::Adda => {
                    let m = AddaModel::from_file(&file)?;
                    match a.encoder {
                        AddaSide::Target => encode(&m, &emb, a.mode)?,
                        AddaSide::Source => encode(&m.source, &emb, a.mode)?,
                    }
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "`{}` holds a {other} model, not an encoder",
                        a.model.display()
                    )))
                }
            };
            write_set(&encoded, &a.out, a.out_utt2spk.as_ref())
        }
        Command::FitLda(a) => {
            let emb = a.data.read()?;
            let speakers = emb.speaker_labels()?.vocabulary.len();
            let p = a.dim.min(emb.dim()).min(speakers.saturating_sub(1)).max(1);
            write_model(&a.out, &lda_fit(&emb, p)?.to_file())
        }
        Command::FitPlda(a) => {
            let fit = plda_fit(&a.data.read()?, a.iters)?;
            write_model(&a.out, &fit.model.to_file())?;
            if let Some(p) = &a.trace {
                let mut text = String::from("iteration\tloglik\n");
                for (i, l) in fit.loglik.iter().enumerate() {
                    text.push_str(&format!("{i}\t{}\n", format_value(*l)));
                }
                write_text(p, &text)?;
            }
            Ok(())
        }
        Command::AdaptPlda(a) => {
            let m = PldaModel::from_file(&ModelFile::read(&a.plda)?)?;
            let unl = read_embeddings(&a.input, None)?;
            let adapted = plda_adapt(&m, &unl, a.within_scale, a.between_scale)?;
            write_model(&a.out, &adapted.to_file())
        }
        Command::Normalize(a) => {
            let emb = read_embeddings(&a.input, a.utt2spk.as_deref())?;
            let mut x = match &a.mean_of {
                Some(p) => mean_normalize(&emb, &read_embeddings(p, None)?)?,
                None => mean_normalize(&emb, &emb)?,
            };
            if let Some(p) = &a.lda {
                x = lda_apply(&LdaTransform::from_file(&ModelFile::read(p)?)?, &x)?;
            }
            if !a.no_length {
                x = length_normalize(&x)?;
            }
            write_set(&x, &a.out, a.out_utt2spk.as_ref())
        }
        Command::Score(a) => {
            let m = PldaModel::from_file(&ModelFile::read(&a.plda)?)?;
            let emb = read_embeddings(&a.input, None)?;
            let trials = read_trials(&a.trials)?;
            if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_scores(&score_trials(&m, &emb, &trials)?, &a.out)
        }
        Command::Evaluate(a) => {
            let trials = read_trials(&a.trials)?;
            let scores: ScoreSet = match (&a.scores, &a.plda, &a.input) {
                (Some(s), _, _) => read_scores(s, &trials)?,
                (None, Some(p), Some(i)) => {
                    let m = PldaModel::from_file(&ModelFile::read(p)?)?;
                    score_trials(&m, &read_embeddings(i, None)?, &trials)?
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "give either --scores or both --plda and --input".into(),
                    ))
                }
            };
            let det = compute_det(&scores)?;
            let metrics = format_metrics(&[
                ("eer", det.eer()),
                ("min_dcf", det.min_dcf(a.p_target, a.c_miss, a.c_fa)?),
            ]);
            if let Some(p) = &a.det {
                write_text(p, &det.to_tsv(!a.no_probit))?;
            }
            if let Some(p) = &a.out {
                write_text(p, &metrics)?;
            }
            say(out, &metrics)
        }
        Command::Cluster(a) => {
            let emb = read_embeddings(&a.input, a.utt2spk.as_deref())?;
            let truth = match a.utt2spk {
                Some(_) => Some(emb.speaker_labels()?),
                None => None,
            };
            let k = match (a.k, &truth) {
                (Some(k), _) => k,
                (None, Some(t)) => t.vocabulary.len(),
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "--k is required without --utt2spk".into(),
                    ))
                }
            };
            let mut rng = Rng::with_stream(seed, STREAM_CLUSTER);
            let fit = kmeans(&emb, k, a.restarts, &mut rng)?;
            let mut text = String::new();
            for (id, c) in emb.ids().zip(&fit.assignment) {
                text.push_str(&format!("{id} {c}\n"));
            }
            write_text(&a.out, &text)?;
            let mut metrics = vec![("inertia", fit.inertia)];
            if let Some(t) = &truth {
                metrics.push(("nmi", nmi_with(&fit.assignment, &t.labels, a.nmi_norm)?));
            }
            say(out, &format_metrics(&metrics))
        }
        Command::Reproduce(a) => {
            let report = reproduce(&ReproduceConfig::new(a.scale, seed))?;
            report.write_to(&a.out)?;
            say(out, &report.table_tsv())?;
            say(out, &report.nmi_tsv())
        }
    }
}
