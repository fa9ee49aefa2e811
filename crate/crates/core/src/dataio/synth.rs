//! Synthetic two-domain speaker-embedding corpus.
//!
//! Speaker identity lives in a `speaker_rank`-dimensional subspace (the
//! first coordinates); within-speaker variation is isotropic. Target-domain
//! vectors are generated the same way from fresh speakers and then moved by
//! a fixed rotation, a fixed translation and extra additive noise. Because
//! the speaker subspace is anisotropic, the rotation cannot be undone by
//! per-dimension statistics.

use std::path::Path;

use crate::error::{Error, Result};
use crate::evalkit::{Trial, TrialList};
use crate::linalg::{dot, Matrix, Rng};

use super::embeddings::{Domain, EmbeddingSet};
use super::trials::write_trials;
use super::write_embeddings;

/// How target vectors are rotated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rotation {
    Identity,
    /// Haar-random orthogonal matrix.
    Random,
    /// Rotation by the given angle (radians) in ⌊d/2⌋ mutually orthogonal
    /// random planes.
    Angle(f64),
}

impl std::str::FromStr for Rotation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" => Ok(Rotation::Identity),
            "random" => Ok(Rotation::Random),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|a| a.is_finite())
                .map(|deg| Rotation::Angle(deg.to_radians()))
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "rotation must be `identity`, `random` or an angle in degrees, not `{other}`"
                    ))
                }),
        }
    }
}

impl std::fmt::Display for Rotation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rotation::Identity => f.write_str("identity"),
            Rotation::Random => f.write_str("random"),
            Rotation::Angle(a) => write!(f, "{}", a.to_degrees()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_speakers_src: usize,
    /// Speakers behind the unlabeled target-domain adaptation set.
    pub n_speakers_tgt: usize,
    /// Target-domain evaluation speakers, disjoint from the above.
    pub n_speakers_eval: usize,
    /// Utterances per speaker in the source and unlabeled target sets.
    pub utts_per_speaker: usize,
    pub eval_utts_per_speaker: usize,
    /// Leading utterances of each evaluation speaker used for enrollment.
    pub enroll_per_speaker: usize,
    pub dim: usize,
    /// Dimension of the subspace carrying speaker identity.
    pub speaker_rank: usize,
    pub between_std: f64,
    pub within_std: f64,
    pub rotation: Rotation,
    /// Norm of the fixed target translation.
    pub translation_scale: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_speakers_src: 50,
            n_speakers_tgt: 50,
            n_speakers_eval: 20,
            utts_per_speaker: 40,
            eval_utts_per_speaker: 20,
            enroll_per_speaker: 2,
            dim: 64,
            speaker_rank: 16,
            between_std: 1.0,
            within_std: 0.3,
            rotation: Rotation::Random,
            translation_scale: 1.0,
            noise_std: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_speakers_src", self.n_speakers_src),
            ("n_speakers_tgt", self.n_speakers_tgt),
            ("n_speakers_eval", self.n_speakers_eval),
            ("utts_per_speaker", self.utts_per_speaker),
            ("eval_utts_per_speaker", self.eval_utts_per_speaker),
            ("enroll_per_speaker", self.enroll_per_speaker),
            ("dim", self.dim),
            ("speaker_rank", self.speaker_rank),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
        }
        if self.speaker_rank > self.dim {
            return Err(Error::InvalidArgument(format!(
                "speaker_rank {} exceeds dim {}",
                self.speaker_rank, self.dim
            )));
        }
        if self.enroll_per_speaker >= self.eval_utts_per_speaker {
            return Err(Error::InvalidArgument(
                "enroll_per_speaker must leave at least one test utterance per speaker".into(),
            ));
        }
        for (name, v) in [
            ("between_std", self.between_std),
            ("within_std", self.within_std),
            ("translation_scale", self.translation_scale),
            ("noise_std", self.noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and ≥ 0")));
            }
        }
        Ok(())
    }

    /// Same corpus layout and seed with no domain shift.
    pub fn without_shift(&self) -> SyntheticSpec {
        SyntheticSpec {
            rotation: Rotation::Identity,
            translation_scale: 0.0,
            noise_std: 0.0,
            ..self.clone()
        }
    }
}

/// Output of [`generate_synthetic`].
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub src_train: EmbeddingSet,
    pub tgt_unlabeled: EmbeddingSet,
    pub tgt_eval: EmbeddingSet,
    pub trials: TrialList,
    /// The fixed target rotation (`x ↦ R x`).
    pub rotation: Matrix,
    pub translation: Vec<f64>,
}

impl SyntheticCorpus {
    /// Writes `src_train.{vec,utt2spk}`, `tgt_unlabeled.vec`,
    /// `tgt_eval.{vec,utt2spk}` and `trials` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_embeddings(
            &self.src_train,
            &dir.join("src_train.vec"),
            Some(&dir.join("src_train.utt2spk")),
        )?;
        write_embeddings(&self.tgt_unlabeled, &dir.join("tgt_unlabeled.vec"), None)?;
        write_embeddings(
            &self.tgt_eval,
            &dir.join("tgt_eval.vec"),
            Some(&dir.join("tgt_eval.utt2spk")),
        )?;
        write_trials(&self.trials, &dir.join("trials"))
    }
}

/// Haar-distributed orthogonal matrix via modified Gram–Schmidt on a
/// Gaussian matrix (columns orthonormalized left to right).
pub fn random_orthogonal(n: usize, rng: &mut Rng) -> Matrix {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..n).map(|_| rng.gaussian_sample(n)).collect();
        let mut ok = true;
        for j in 0..n {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let proj = dot(&done[k], &rest[0]);
                for (x, q) in rest[0].iter_mut().zip(&done[k]) {
                    *x -= proj * q;
                }
            }
            let nrm = dot(&cols[j], &cols[j]).sqrt();
            if nrm < 1e-8 {
                ok = false;
                break;
            }
            cols[j].iter_mut().for_each(|x| *x /= nrm);
        }
        if ok {
            let mut q = Matrix::zeros(n, n);
            for (j, c) in cols.iter().enumerate() {
                for (i, &v) in c.iter().enumerate() {
                    q[(i, j)] = v;
                }
            }
            return q;
        }
    }
}

fn rotation_matrix(rot: Rotation, n: usize, rng: &mut Rng) -> Result<Matrix> {
    Ok(match rot {
        Rotation::Identity => Matrix::identity(n),
        Rotation::Random => random_orthogonal(n, rng),
        Rotation::Angle(theta) => {
            let q = random_orthogonal(n, rng);
            let mut b = Matrix::identity(n);
            let (s, c) = theta.sin_cos();
            for p in 0..n / 2 {
                let (i, j) = (2 * p, 2 * p + 1);
                b[(i, i)] = c;
                b[(i, j)] = -s;
                b[(j, i)] = s;
                b[(j, j)] = c;
            }
            q.matmul(&b)?.matmul(&q.transpose())?
        }
    })
}

struct Population<'a> {
    spec: &'a SyntheticSpec,
    prefix: &'a str,
    n_speakers: usize,
    utts: usize,
}

impl Population<'_> {
    /// Speaker means first, then utterances speaker by speaker.
    fn draw(&self, rng: &mut Rng) -> Vec<(String, String, Vec<f64>)> {
        let spec = self.spec;
        let means: Vec<Vec<f64>> = (0..self.n_speakers)
            .map(|_| {
                let mut m = vec![0.0; spec.dim];
                for v in m.iter_mut().take(spec.speaker_rank) {
                    *v = spec.between_std * rng.gaussian();
                }
                m
            })
            .collect();
        let mut out = Vec::with_capacity(self.n_speakers * self.utts);
        for (s, mean) in means.iter().enumerate() {
            let spk = format!("{}_spk{:03}", self.prefix, s);
            for u in 0..self.utts {
                let v = mean
                    .iter()
                    .map(|&m| m + spec.within_std * rng.gaussian())
                    .collect();
                out.push((format!("{spk}_utt{u:03}"), spk.clone(), v));
            }
        }
        out
    }
}

/// Generates the source training set, the unlabeled and evaluation target
/// sets, and the evaluation trial list. Every component draws from its own
/// RNG stream so changing the shift leaves the speakers untouched.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let d = spec.dim;

    let mut shift_rng = Rng::with_stream(spec.seed, 1);
    let rotation = rotation_matrix(spec.rotation, d, &mut shift_rng)?;
    let dir = shift_rng.gaussian_sample(d);
    let dir_norm = dot(&dir, &dir).sqrt();
    let translation: Vec<f64> = dir
        .iter()
        .map(|v| spec.translation_scale * v / dir_norm)
        .collect();

    let shift = |v: Vec<f64>, rng: &mut Rng| -> Result<Vec<f64>> {
        let mut y = rotation.matvec(&v)?;
        for (yi, ti) in y.iter_mut().zip(&translation) {
            *yi += ti + spec.noise_std * rng.gaussian();
        }
        Ok(y)
    };

    let mut src_rng = Rng::with_stream(spec.seed, 2);
    let mut src_train = EmbeddingSet::new(d, Domain::Source);
    let pop = Population {
        spec,
        prefix: "src",
        n_speakers: spec.n_speakers_src,
        utts: spec.utts_per_speaker,
    };
    for (utt, spk, v) in pop.draw(&mut src_rng) {
        src_train.push(utt.clone(), v)?;
        src_train.set_speaker(&utt, spk)?;
    }

    let mut tgt_rng = Rng::with_stream(spec.seed, 3);
    let mut tgt_noise = Rng::with_stream(spec.seed, 4);
    let mut tgt_unlabeled = EmbeddingSet::new(d, Domain::Target);
    let pop = Population {
        spec,
        prefix: "tgt",
        n_speakers: spec.n_speakers_tgt,
        utts: spec.utts_per_speaker,
    };
    for (utt, _, v) in pop.draw(&mut tgt_rng) {
        tgt_unlabeled.push(utt, shift(v, &mut tgt_noise)?)?;
    }

    let mut eval_rng = Rng::with_stream(spec.seed, 5);
    let mut eval_noise = Rng::with_stream(spec.seed, 6);
    let mut tgt_eval = EmbeddingSet::new(d, Domain::Target);
    let pop = Population {
        spec,
        prefix: "eval",
        n_speakers: spec.n_speakers_eval,
        utts: spec.eval_utts_per_speaker,
    };
    let mut enroll = Vec::new();
    let mut test = Vec::new();
    for (i, (utt, spk, v)) in pop.draw(&mut eval_rng).into_iter().enumerate() {
        tgt_eval.push(utt.clone(), shift(v, &mut eval_noise)?)?;
        tgt_eval.set_speaker(&utt, spk.clone())?;
        if i % spec.eval_utts_per_speaker < spec.enroll_per_speaker {
            enroll.push((utt, spk));
        } else {
            test.push((utt, spk));
        }
    }
    let trials = enroll
        .iter()
        .flat_map(|(eu, es)| {
            test.iter()
                .map(move |(tu, ts)| Trial::new(eu.clone(), tu.clone(), es == ts))
        })
        .collect();

    Ok(SyntheticCorpus {
        src_train,
        tgt_unlabeled,
        tgt_eval,
        trials: TrialList::new(trials)?,
        rotation,
        translation,
    })
}
