use std::fmt;
use std::str::FromStr;

use crate::dataio::EmbeddingSet;
use crate::error::{Error, Result};
use crate::modelfile::{Item, ModelFile, Role};
use crate::nn::{accuracy, DomainDiscriminator, Mlp, SpeakerClassifier};

/// Source encoder `M_s` with its speaker classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceModel {
    pub encoder: Mlp,
    pub classifier: SpeakerClassifier,
    /// Speaker id per classifier output.
    pub speakers: Vec<String>,
}

/// Adapted target encoder `M_t` next to the untouched source model.
#[derive(Clone, Debug, PartialEq)]
pub struct AddaModel {
    pub source: SourceModel,
    pub target_encoder: Mlp,
    pub discriminator: DomainDiscriminator,
}

/// Shared encoder with speaker and (gradient-reversed) domain heads.
#[derive(Clone, Debug, PartialEq)]
pub struct DatModel {
    pub encoder: Mlp,
    pub speaker_head: SpeakerClassifier,
    pub domain_head: DomainDiscriminator,
    pub lambda: f64,
    pub speakers: Vec<String>,
}

fn push_speakers(f: &mut ModelFile, speakers: &[String]) -> Result<()> {
    f.push_meta("speakers", speakers.join(" "))
}

fn read_speakers(f: &ModelFile, k: usize) -> Result<Vec<String>> {
    let s: Vec<String> = f
        .require_meta("speakers")?
        .split(' ')
        .map(str::to_owned)
        .collect();
    if s.len() != k {
        return Err(Error::dims(format!(
            "{} speaker ids for {k} classifier outputs",
            s.len()
        )));
    }
    Ok(s)
}

fn check_chain(encoder: &Mlp, head: &Mlp, what: &str) -> Result<()> {
    if encoder.output_dim() != head.input_dim() {
        return Err(Error::dims(format!(
            "encoder outputs {} but the {what} expects {}",
            encoder.output_dim(),
            head.input_dim()
        )));
    }
    Ok(())
}

fn speaker_accuracy(enc: &Mlp, head: &Mlp, speakers: &[String], emb: &EmbeddingSet) -> Result<f64> {
    let logits = head.infer(&enc.infer(&emb.to_matrix()?)?)?;
    let mut labels = Vec::with_capacity(emb.len());
    for id in emb.ids() {
        let spk = emb
            .speaker(id)
            .ok_or_else(|| Error::Degenerate(format!("utterance `{id}` has no speaker label")))?;
        labels.push(speakers.iter().position(|s| s == spk).unwrap_or(usize::MAX));
    }
    Ok(accuracy(&logits, &labels))
}

impl SourceModel {
    pub fn new(encoder: Mlp, classifier: SpeakerClassifier, speakers: Vec<String>) -> Result<Self> {
        check_chain(&encoder, classifier.net(), "classifier")?;
        if speakers.len() != classifier.n_speakers() {
            return Err(Error::dims("speaker list does not match classifier outputs"));
        }
        Ok(SourceModel {
            encoder,
            classifier,
            speakers,
        })
    }

    /// Classification accuracy on a labeled set, mapping its speaker ids
    /// through this model's vocabulary (unknown speakers count as errors).
    pub fn accuracy(&self, emb: &EmbeddingSet) -> Result<f64> {
        speaker_accuracy(&self.encoder, self.classifier.net(), &self.speakers, emb)
    }

    pub fn to_file(&self) -> ModelFile {
        let mut f = ModelFile::new(Role::Source);
        push_speakers(&mut f, &self.speakers).expect("speaker ids have no newlines");
        f.push("encoder", Item::Net(self.encoder.clone())).expect("fresh file");
        f.push("classifier", Item::Net(self.classifier.net().clone()))
            .expect("fresh file");
        f
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        f.expect_role(Role::Source)?;
        let classifier = SpeakerClassifier::from_net(f.net("classifier")?.clone())?;
        let speakers = read_speakers(f, classifier.n_speakers())?;
        SourceModel::new(f.net("encoder")?.clone(), classifier, speakers)
    }
}

impl AddaModel {
    pub fn to_file(&self) -> ModelFile {
        let mut f = ModelFile::new(Role::Adda);
        push_speakers(&mut f, &self.source.speakers).expect("speaker ids have no newlines");
        for (name, net) in [
            ("source_encoder", &self.source.encoder),
            ("classifier", self.source.classifier.net()),
            ("target_encoder", &self.target_encoder),
            ("discriminator", self.discriminator.net()),
        ] {
            f.push(name, Item::Net(net.clone())).expect("fresh file");
        }
        f
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        f.expect_role(Role::Adda)?;
        let classifier = SpeakerClassifier::from_net(f.net("classifier")?.clone())?;
        let speakers = read_speakers(f, classifier.n_speakers())?;
        let source = SourceModel::new(f.net("source_encoder")?.clone(), classifier, speakers)?;
        let target_encoder = f.net("target_encoder")?.clone();
        if target_encoder.input_dim() != source.encoder.input_dim()
            || target_encoder.output_dim() != source.encoder.output_dim()
        {
            return Err(Error::dims("target and source encoders differ in shape"));
        }
        let discriminator = DomainDiscriminator::from_net(f.net("discriminator")?.clone())?;
        check_chain(&target_encoder, discriminator.net(), "discriminator")?;
        Ok(AddaModel {
            source,
            target_encoder,
            discriminator,
        })
    }
}

impl DatModel {
    /// Speaker-head accuracy, as for [`SourceModel::accuracy`].
    pub fn accuracy(&self, emb: &EmbeddingSet) -> Result<f64> {
        speaker_accuracy(&self.encoder, self.speaker_head.net(), &self.speakers, emb)
    }

    pub fn to_file(&self) -> ModelFile {
        let mut f = ModelFile::new(Role::Dat);
        push_speakers(&mut f, &self.speakers).expect("speaker ids have no newlines");
        f.push_meta("lambda", self.lambda).expect("plain number");
        for (name, net) in [
            ("encoder", &self.encoder),
            ("speaker_head", self.speaker_head.net()),
            ("domain_head", self.domain_head.net()),
        ] {
            f.push(name, Item::Net(net.clone())).expect("fresh file");
        }
        f
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        f.expect_role(Role::Dat)?;
        let encoder = f.net("encoder")?.clone();
        let speaker_head = SpeakerClassifier::from_net(f.net("speaker_head")?.clone())?;
        let domain_head = DomainDiscriminator::from_net(f.net("domain_head")?.clone())?;
        check_chain(&encoder, speaker_head.net(), "speaker head")?;
        check_chain(&encoder, domain_head.net(), "domain head")?;
        let lambda: f64 = f
            .require_meta("lambda")?
            .parse()
            .map_err(|_| Error::InvalidArgument("bad lambda in model file".into()))?;
        Ok(DatModel {
            speakers: read_speakers(f, speaker_head.n_speakers())?,
            encoder,
            speaker_head,
            domain_head,
            lambda,
        })
    }
}

/// Anything that maps embeddings through a single encoder network.
pub trait Encoder {
    fn encoder(&self) -> &Mlp;
}

impl Encoder for Mlp {
    fn encoder(&self) -> &Mlp {
        self
    }
}

impl Encoder for SourceModel {
    fn encoder(&self) -> &Mlp {
        &self.encoder
    }
}

/// The adapted target encoder `M_t`; use `model.source` for `M_s`.
impl Encoder for AddaModel {
    fn encoder(&self) -> &Mlp {
        &self.target_encoder
    }
}

impl Encoder for DatModel {
    fn encoder(&self) -> &Mlp {
        &self.encoder
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EncodeMode {
    /// Encoder output only.
    #[default]
    Replace,
    /// Input vector followed by the encoder output.
    Concat,
}

impl fmt::Display for EncodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncodeMode::Replace => "replace",
            EncodeMode::Concat => "concat",
        })
    }
}

impl FromStr for EncodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replace" => Ok(EncodeMode::Replace),
            "concat" => Ok(EncodeMode::Concat),
            _ => Err(Error::InvalidArgument(format!(
                "unknown encode mode `{s}` (replace, concat)"
            ))),
        }
    }
}

/// Runs every vector through the model's encoder, keeping ids, speaker
/// labels and the domain tag.
pub fn encode(model: &impl Encoder, emb: &EmbeddingSet, mode: EncodeMode) -> Result<EmbeddingSet> {
    let net = model.encoder();
    let out_dim = match mode {
        EncodeMode::Replace => net.output_dim(),
        EncodeMode::Concat => net.input_dim() + net.output_dim(),
    };
    if emb.is_empty() {
        return Ok(EmbeddingSet::new(out_dim, emb.domain()));
    }
    if emb.dim() != net.input_dim() {
        return Err(Error::dims(format!(
            "encoder expects dimension {}, set has {}",
            net.input_dim(),
            emb.dim()
        )));
    }
    let h = net.infer(&emb.to_matrix()?)?;
    match mode {
        EncodeMode::Replace => emb.with_vectors(&h),
        EncodeMode::Concat => {
            let mut row = 0;
            emb.map_vectors(|v| {
                let mut out = Vec::with_capacity(out_dim);
                out.extend_from_slice(v);
                out.extend_from_slice(h.row(row));
                row += 1;
                Ok(out)
            })
        }
    }
}
