//! Python bindings: embedding sets, the three trainers, the LDA/PLDA
//! back-end, verification metrics, clustering and the end-to-end run.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use xadapt::adapt::{self, EncodeMode, TrainConfig};
use xadapt::backend;
use xadapt::dataio::{self, EmbeddingSet, SyntheticSpec};
use xadapt::evalkit::{self, NmiNorm, ScoreSet, Trial, TrialList};
use xadapt::linalg::Rng;
use xadapt::modelfile::ModelFile;
use xadapt::pipeline::{self, ReproduceConfig, Scale};
use xadapt::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::NonFinite(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for xadapt::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Utterance-indexed embedding vectors with optional speaker labels.
#[pyclass(name = "Embeddings", module = "pyxadapt")]
#[derive(Clone)]
struct PyEmbeddings {
    inner: EmbeddingSet,
}

#[pymethods]
impl PyEmbeddings {
    #[new]
    #[pyo3(signature = (ids, vectors, speakers=None))]
    fn new(ids: Vec<String>, vectors: Vec<Vec<f64>>, speakers: Option<Vec<String>>) -> PyResult<Self> {
        if ids.len() != vectors.len() {
            return Err(PyValueError::new_err("ids and vectors differ in length"));
        }
        if speakers.as_ref().is_some_and(|s| s.len() != ids.len()) {
            return Err(PyValueError::new_err("ids and speakers differ in length"));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let mut set = EmbeddingSet::new(dim, dataio::Domain::Unspecified);
        for (i, (id, v)) in ids.iter().zip(vectors).enumerate() {
            set.push(id.clone(), v).py()?;
            if let Some(s) = &speakers {
                set.set_speaker(id, s[i].clone()).py()?;
            }
        }
        Ok(PyEmbeddings { inner: set })
    }

    /// Reads a vectors file and an optional speaker map.
    #[staticmethod]
    #[pyo3(signature = (path, utt2spk=None))]
    fn read(path: PathBuf, utt2spk: Option<PathBuf>) -> PyResult<Self> {
        Ok(PyEmbeddings {
            inner: dataio::read_embeddings(&path, utt2spk.as_deref()).py()?,
        })
    }

    #[pyo3(signature = (path, utt2spk=None))]
    fn write(&self, path: PathBuf, utt2spk: Option<PathBuf>) -> PyResult<()> {
        dataio::write_embeddings(&self.inner, &path, utt2spk.as_deref()).py()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids().map(str::to_owned).collect()
    }

    #[getter]
    fn vectors(&self) -> Vec<Vec<f64>> {
        self.inner.vectors().map(<[f64]>::to_vec).collect()
    }

    /// Speaker of every utterance (`None` where unlabeled).
    #[getter]
    fn speakers(&self) -> Vec<Option<String>> {
        self.inner
            .ids()
            .map(|id| self.inner.speaker(id).map(str::to_owned))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Embeddings(n={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

fn wrap(inner: EmbeddingSet) -> PyEmbeddings {
    PyEmbeddings { inner }
}

fn trials_to_py(t: &TrialList) -> Vec<(String, String, bool)> {
    t.iter()
        .map(|t| (t.enroll.clone(), t.test.clone(), t.target))
        .collect()
}

fn trials_from_py(t: Vec<(String, String, bool)>) -> PyResult<TrialList> {
    TrialList::new(t.into_iter().map(|(e, s, y)| Trial::new(e, s, y)).collect()).py()
}

fn score_set(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<ScoreSet> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    let pairs: Vec<(f64, bool)> = scores.into_iter().zip(labels).collect();
    ScoreSet::from_labeled(&pairs).py()
}

/// Generates the synthetic two-domain corpus.
///
/// Returns a dict with `src_train`, `tgt_unlabeled`, `tgt_eval`
/// (Embeddings) and `trials` (list of `(enroll, test, is_target)`).
#[pyfunction]
#[pyo3(signature = (
    seed=0, n_speakers_src=50, n_speakers_tgt=50, n_speakers_eval=20, utts_per_speaker=40,
    eval_utts_per_speaker=20, enroll_per_speaker=2, dim=64, speaker_rank=16, between_std=1.0,
    within_std=0.3, rotation="random", translation_scale=1.0, noise_std=0.1
))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic<'py>(
    py: Python<'py>,
    seed: u64,
    n_speakers_src: usize,
    n_speakers_tgt: usize,
    n_speakers_eval: usize,
    utts_per_speaker: usize,
    eval_utts_per_speaker: usize,
    enroll_per_speaker: usize,
    dim: usize,
    speaker_rank: usize,
    between_std: f64,
    within_std: f64,
    rotation: &str,
    translation_scale: f64,
    noise_std: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = SyntheticSpec {
        n_speakers_src,
        n_speakers_tgt,
        n_speakers_eval,
        utts_per_speaker,
        eval_utts_per_speaker,
        enroll_per_speaker,
        dim,
        speaker_rank,
        between_std,
        within_std,
        rotation: rotation.parse().py()?,
        translation_scale,
        noise_std,
        seed,
    };
    let c = dataio::generate_synthetic(&spec).py()?;
    let d = PyDict::new(py);
    d.set_item("src_train", wrap(c.src_train))?;
    d.set_item("tgt_unlabeled", wrap(c.tgt_unlabeled))?;
    d.set_item("tgt_eval", wrap(c.tgt_eval))?;
    d.set_item("trials", trials_to_py(&c.trials))?;
    Ok(d)
}

/// Training settings; defaults match the CLI trainers.
#[pyclass(name = "TrainConfig", module = "pyxadapt", get_all, set_all)]
#[derive(Clone)]
struct PyTrainConfig {
    epochs: usize,
    batch_size: usize,
    lr: f64,
    beta1: f64,
    seed: u64,
    hidden: usize,
    embed_dim: Option<usize>,
    encoder_layers: usize,
    disc_hidden_layers: usize,
    lambda_: f64,
    disc_steps: usize,
    map_steps: usize,
    blind_discriminator: bool,
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (
        epochs=100, batch_size=128, lr=1e-4, beta1=0.9, seed=0, hidden=512, embed_dim=None,
        encoder_layers=3, disc_hidden_layers=2, lambda_=1.0, disc_steps=1, map_steps=1,
        blind_discriminator=false
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        epochs: usize,
        batch_size: usize,
        lr: f64,
        beta1: f64,
        seed: u64,
        hidden: usize,
        embed_dim: Option<usize>,
        encoder_layers: usize,
        disc_hidden_layers: usize,
        lambda_: f64,
        disc_steps: usize,
        map_steps: usize,
        blind_discriminator: bool,
    ) -> Self {
        PyTrainConfig {
            epochs,
            batch_size,
            lr,
            beta1,
            seed,
            hidden,
            embed_dim,
            encoder_layers,
            disc_hidden_layers,
            lambda_,
            disc_steps,
            map_steps,
            blind_discriminator,
        }
    }
}

impl PyTrainConfig {
    fn to_rust(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            beta1: self.beta1,
            seed: self.seed,
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            encoder_layers: self.encoder_layers,
            disc_hidden_layers: self.disc_hidden_layers,
            lambda: self.lambda_,
            disc_steps: self.disc_steps,
            map_steps: self.map_steps,
            blind_discriminator: self.blind_discriminator,
        }
    }
}

fn config(cfg: Option<&PyTrainConfig>) -> TrainConfig {
    cfg.map_or_else(TrainConfig::default, PyTrainConfig::to_rust)
}

fn trace_to_py(t: &adapt::LossTrace) -> Vec<(usize, String, f64)> {
    t.entries().to_vec()
}

fn mode(m: &str) -> PyResult<EncodeMode> {
    m.parse().py()
}

/// Source encoder plus speaker classifier.
#[pyclass(name = "SourceModel", module = "pyxadapt")]
#[derive(Clone)]
struct PySourceModel {
    inner: adapt::SourceModel,
    trace: Vec<(usize, String, f64)>,
}

#[pymethods]
impl PySourceModel {
    #[staticmethod]
    #[pyo3(signature = (src, config=None))]
    fn train(src: &PyEmbeddings, config: Option<PyTrainConfig>) -> PyResult<Self> {
        let t = adapt::train_source(&src.inner, &self::config(config.as_ref())).py()?;
        Ok(PySourceModel {
            trace: trace_to_py(&t.trace),
            inner: t.model,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let f = ModelFile::read(&path).py()?;
        Ok(PySourceModel {
            inner: adapt::SourceModel::from_file(&f).py()?,
            trace: Vec::new(),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_file().write(&path).py()
    }

    fn accuracy(&self, emb: &PyEmbeddings) -> PyResult<f64> {
        self.inner.accuracy(&emb.inner).py()
    }

    #[pyo3(signature = (emb, mode="replace"))]
    fn encode(&self, emb: &PyEmbeddings, mode: &str) -> PyResult<PyEmbeddings> {
        Ok(wrap(adapt::encode(&self.inner, &emb.inner, self::mode(mode)?).py()?))
    }

    /// `(epoch, name, value)` rows of the training curves.
    #[getter]
    fn trace(&self) -> Vec<(usize, String, f64)> {
        self.trace.clone()
    }

    #[getter]
    fn speakers(&self) -> Vec<String> {
        self.inner.speakers.clone()
    }
}

/// Frozen source model plus adapted target encoder and discriminator.
#[pyclass(name = "AddaModel", module = "pyxadapt")]
#[derive(Clone)]
struct PyAddaModel {
    inner: adapt::AddaModel,
    trace: Vec<(usize, String, f64)>,
}

#[pymethods]
impl PyAddaModel {
    #[staticmethod]
    #[pyo3(signature = (source, tgt, src, config=None))]
    fn adapt(
        source: &PySourceModel,
        tgt: &PyEmbeddings,
        src: &PyEmbeddings,
        config: Option<PyTrainConfig>,
    ) -> PyResult<Self> {
        let t = adapt::adapt_adda(&source.inner, &tgt.inner, &src.inner, &self::config(config.as_ref()))
            .py()?;
        Ok(PyAddaModel {
            trace: trace_to_py(&t.trace),
            inner: t.model,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let f = ModelFile::read(&path).py()?;
        Ok(PyAddaModel {
            inner: adapt::AddaModel::from_file(&f).py()?,
            trace: Vec::new(),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_file().write(&path).py()
    }

    /// Encodes with the target encoder, or the source one with
    /// `encoder="source"`.
    #[pyo3(signature = (emb, mode="replace", encoder="target"))]
    fn encode(&self, emb: &PyEmbeddings, mode: &str, encoder: &str) -> PyResult<PyEmbeddings> {
        let m = self::mode(mode)?;
        let out = match encoder {
            "target" => adapt::encode(&self.inner, &emb.inner, m),
            "source" => adapt::encode(&self.inner.source, &emb.inner, m),
            other => {
                return Err(PyValueError::new_err(format!(
                    "encoder must be `target` or `source`, not `{other}`"
                )))
            }
        };
        Ok(wrap(out.py()?))
    }

    #[getter]
    fn source(&self) -> PySourceModel {
        PySourceModel {
            inner: self.inner.source.clone(),
            trace: Vec::new(),
        }
    }

    #[getter]
    fn trace(&self) -> Vec<(usize, String, f64)> {
        self.trace.clone()
    }
}

/// Shared encoder with speaker and gradient-reversed domain heads.
#[pyclass(name = "DatModel", module = "pyxadapt")]
#[derive(Clone)]
struct PyDatModel {
    inner: adapt::DatModel,
    trace: Vec<(usize, String, f64)>,
}

#[pymethods]
impl PyDatModel {
    #[staticmethod]
    #[pyo3(signature = (src, tgt, config=None))]
    fn train(src: &PyEmbeddings, tgt: &PyEmbeddings, config: Option<PyTrainConfig>) -> PyResult<Self> {
        let t = adapt::train_dat(&src.inner, &tgt.inner, &self::config(config.as_ref())).py()?;
        Ok(PyDatModel {
            trace: trace_to_py(&t.trace),
            inner: t.model,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let f = ModelFile::read(&path).py()?;
        Ok(PyDatModel {
            inner: adapt::DatModel::from_file(&f).py()?,
            trace: Vec::new(),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_file().write(&path).py()
    }

    fn accuracy(&self, emb: &PyEmbeddings) -> PyResult<f64> {
        self.inner.accuracy(&emb.inner).py()
    }

    #[pyo3(signature = (emb, mode="replace"))]
    fn encode(&self, emb: &PyEmbeddings, mode: &str) -> PyResult<PyEmbeddings> {
        Ok(wrap(adapt::encode(&self.inner, &emb.inner, self::mode(mode)?).py()?))
    }

    #[getter]
    fn trace(&self) -> Vec<(usize, String, f64)> {
        self.trace.clone()
    }
}

/// Linear discriminant projection.
#[pyclass(name = "Lda", module = "pyxadapt")]
#[derive(Clone)]
struct PyLda {
    inner: backend::LdaTransform,
}

#[pymethods]
impl PyLda {
    #[staticmethod]
    fn fit(emb: &PyEmbeddings, dim: usize) -> PyResult<Self> {
        Ok(PyLda {
            inner: backend::lda_fit(&emb.inner, dim).py()?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyLda {
            inner: backend::LdaTransform::from_file(&ModelFile::read(&path).py()?).py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_file().write(&path).py()
    }

    fn apply(&self, emb: &PyEmbeddings) -> PyResult<PyEmbeddings> {
        Ok(wrap(backend::lda_apply(&self.inner, &emb.inner).py()?))
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }
}

/// Two-covariance PLDA model.
#[pyclass(name = "Plda", module = "pyxadapt")]
#[derive(Clone)]
struct PyPlda {
    inner: backend::PldaModel,
}

#[pymethods]
impl PyPlda {
    #[new]
    fn new(mu: Vec<f64>, phi_b: Vec<Vec<f64>>, phi_w: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = |rows: Vec<Vec<f64>>| xadapt::linalg::Matrix::from_rows(&rows).py();
        Ok(PyPlda {
            inner: backend::PldaModel::new(mu, m(phi_b)?, m(phi_w)?).py()?,
        })
    }

    /// Fits by EM; returns the model and the log-likelihood before the first
    /// and after every iteration.
    #[staticmethod]
    #[pyo3(signature = (emb, iters=backend::DEFAULT_EM_ITERS))]
    fn fit(emb: &PyEmbeddings, iters: usize) -> PyResult<(Self, Vec<f64>)> {
        let f = backend::plda_fit(&emb.inner, iters).py()?;
        Ok((PyPlda { inner: f.model }, f.loglik))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyPlda {
            inner: backend::PldaModel::from_file(&ModelFile::read(&path).py()?).py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_file().write(&path).py()
    }

    #[pyo3(signature = (unlabeled, within_scale=backend::DEFAULT_WITHIN_SCALE, between_scale=backend::DEFAULT_BETWEEN_SCALE))]
    fn adapt(&self, unlabeled: &PyEmbeddings, within_scale: f64, between_scale: f64) -> PyResult<Self> {
        Ok(PyPlda {
            inner: backend::plda_adapt(&self.inner, &unlabeled.inner, within_scale, between_scale).py()?,
        })
    }

    /// Same-speaker log-likelihood ratio of two vectors.
    fn score(&self, enroll: Vec<f64>, test: Vec<f64>) -> PyResult<f64> {
        self.inner.score(&enroll, &test).py()
    }

    /// Scores every `(enroll, test, is_target)` trial against `emb`.
    fn score_trials(&self, emb: &PyEmbeddings, trials: Vec<(String, String, bool)>) -> PyResult<Vec<f64>> {
        let t = trials_from_py(trials)?;
        Ok(evalkit::score_trials(&self.inner, &emb.inner, &t).py()?.scores().to_vec())
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu().to_vec()
    }

    #[getter]
    fn phi_b(&self) -> Vec<Vec<f64>> {
        rows(self.inner.phi_b())
    }

    #[getter]
    fn phi_w(&self) -> Vec<Vec<f64>> {
        rows(self.inner.phi_w())
    }
}

fn rows(m: &xadapt::linalg::Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

#[pyfunction]
fn length_normalize(emb: &PyEmbeddings) -> PyResult<PyEmbeddings> {
    Ok(wrap(backend::length_normalize(&emb.inner).py()?))
}

/// Subtracts the mean of `mean_of` (default: of `emb` itself).
#[pyfunction]
#[pyo3(signature = (emb, mean_of=None))]
fn mean_normalize(emb: &PyEmbeddings, mean_of: Option<&PyEmbeddings>) -> PyResult<PyEmbeddings> {
    let m = mean_of.map_or(&emb.inner, |m| &m.inner);
    Ok(wrap(backend::mean_normalize(&emb.inner, m).py()?))
}

#[pyfunction]
fn eer(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    evalkit::eer(&score_set(scores, labels)?).py()
}

#[pyfunction]
#[pyo3(signature = (scores, labels, p_target=evalkit::DEFAULT_P_TARGET, c_miss=1.0, c_fa=1.0))]
fn min_dcf(scores: Vec<f64>, labels: Vec<bool>, p_target: f64, c_miss: f64, c_fa: f64) -> PyResult<f64> {
    evalkit::min_dcf(&score_set(scores, labels)?, p_target, c_miss, c_fa).py()
}

/// DET points as `(threshold, p_fa, p_miss)`.
#[pyfunction]
fn det_curve(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Vec<(f64, f64, f64)>> {
    let det = evalkit::compute_det(&score_set(scores, labels)?).py()?;
    Ok(det
        .points()
        .iter()
        .map(|p| (p.threshold, p.p_fa, p.p_miss))
        .collect())
}

/// K-means++ with restarts; returns `(assignment, inertia)`.
#[pyfunction]
#[pyo3(signature = (emb, k, restarts=evalkit::DEFAULT_RESTARTS, seed=0))]
fn kmeans(emb: &PyEmbeddings, k: usize, restarts: usize, seed: u64) -> PyResult<(Vec<usize>, f64)> {
    let mut rng = Rng::with_stream(seed, 7);
    let r = evalkit::kmeans(&emb.inner, k, restarts, &mut rng).py()?;
    Ok((r.assignment, r.inertia))
}

#[pyfunction]
#[pyo3(signature = (a, b, norm="arithmetic"))]
fn nmi(a: Vec<usize>, b: Vec<usize>, norm: &str) -> PyResult<f64> {
    let n: NmiNorm = norm.parse().py()?;
    evalkit::nmi_with(&a, &b, n).py()
}

/// Runs the full comparison; returns `{"systems": {name: (eer, min_dcf)},
/// "nmi_raw", "nmi_adda", "source_accuracy"}` and writes every artifact
/// into `out` when given.
#[pyfunction]
#[pyo3(signature = (scale="default", seed=0, out=None))]
fn reproduce<'py>(py: Python<'py>, scale: &str, seed: u64, out: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let scale: Scale = scale.parse().py()?;
    let cfg = ReproduceConfig::new(scale, seed);
    let report = py.allow_threads(|| pipeline::reproduce(&cfg)).py()?;
    if let Some(dir) = out {
        report.write_to(&dir).py()?;
    }
    let systems = PyDict::new(py);
    for s in &report.systems {
        systems.set_item(&s.name, (s.eer, s.min_dcf))?;
    }
    let d = PyDict::new(py);
    d.set_item("systems", systems)?;
    d.set_item("nmi_raw", report.nmi_raw)?;
    d.set_item("nmi_adda", report.nmi_adda)?;
    d.set_item("source_accuracy", report.source_accuracy)?;
    Ok(d)
}

#[pymodule]
fn pyxadapt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEmbeddings>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PySourceModel>()?;
    m.add_class::<PyAddaModel>()?;
    m.add_class::<PyDatModel>()?;
    m.add_class::<PyLda>()?;
    m.add_class::<PyPlda>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(length_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(mean_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(eer, m)?)?;
    m.add_function(wrap_pyfunction!(min_dcf, m)?)?;
    m.add_function(wrap_pyfunction!(det_curve, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(nmi, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce, m)?)?;
    Ok(())
}
