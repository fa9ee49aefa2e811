use super::config::{
    Batcher, EpochMeans, LossTrace, TrainConfig, STREAM_DOMAIN_HEAD, STREAM_INIT,
    STREAM_SRC_BATCHES, STREAM_TGT_BATCHES,
};
use super::models::{AddaModel, DatModel, SourceModel};
use crate::dataio::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{
    accuracy, discriminator_bce, domain_accuracy, gradient_reversal, mapping_bce,
    softmax_cross_entropy, AdamState, DomainDiscriminator, Mlp, SpeakerClassifier,
};

/// A trained model with its per-epoch curves.
#[derive(Clone, Debug)]
pub struct Trained<M> {
    pub model: M,
    pub trace: LossTrace,
}

fn finite(loss: f64, what: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite(format!("{what} loss")))
    }
}

fn check_dim(emb: &EmbeddingSet, expected: usize, what: &str) -> Result<()> {
    if emb.is_empty() {
        return Err(Error::Degenerate(format!("{what} set is empty")));
    }
    if emb.dim() != expected {
        return Err(Error::dims(format!(
            "{what} vectors have dimension {}, expected {expected}",
            emb.dim()
        )));
    }
    Ok(())
}

struct Labeled {
    labels: Vec<usize>,
    speakers: Vec<String>,
}

fn source_labels(src: &EmbeddingSet) -> Result<Labeled> {
    if src.is_empty() {
        return Err(Error::Degenerate("source set is empty".into()));
    }
    let sl = src.speaker_labels()?;
    if sl.vocabulary.len() < 2 {
        return Err(Error::Degenerate(format!(
            "source training needs at least two speakers, got {}",
            sl.vocabulary.len()
        )));
    }
    Ok(Labeled {
        labels: sl.labels,
        speakers: sl.vocabulary,
    })
}

/// Fresh encoder and speaker head, both drawn from the init stream.
fn init_speaker_net(
    input: usize,
    n_speakers: usize,
    cfg: &TrainConfig,
) -> Result<(Mlp, SpeakerClassifier)> {
    let mut rng = cfg.rng(STREAM_INIT);
    let embed = cfg.embed_dim.unwrap_or(input);
    let enc = Mlp::encoder(input, cfg.hidden, embed, cfg.encoder_layers, &mut rng)?;
    let cls = SpeakerClassifier::new(embed, cfg.hidden, n_speakers, &mut rng)?;
    Ok((enc, cls))
}

fn select<T: Copy>(all: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| all[i]).collect()
}

/// Speaker cross-entropy on one batch: loss, accuracy, classifier
/// gradients and the gradient with respect to the encoder output.
struct SpeakerPass {
    loss: f64,
    acc: f64,
    cls_grads: crate::nn::Gradients,
    grad_h: Matrix,
}

fn speaker_pass(cls: &SpeakerClassifier, h: &Matrix, y: &[usize]) -> Result<SpeakerPass> {
    let (logits, cache) = cls.net().forward(h)?;
    let (loss, g) = softmax_cross_entropy(&logits, y)?;
    let acc = accuracy(&logits, y);
    let (cls_grads, grad_h) = cls.net().backward(&cache, &g)?;
    Ok(SpeakerPass {
        loss: finite(loss, "speaker cross-entropy")?,
        acc,
        cls_grads,
        grad_h,
    })
}

/// Minimizes speaker cross-entropy on the labeled source set.
pub fn train_source(src: &EmbeddingSet, cfg: &TrainConfig) -> Result<Trained<SourceModel>> {
    cfg.validate()?;
    let lab = source_labels(src)?;
    let (mut enc, mut cls) = init_speaker_net(src.dim(), lab.speakers.len(), cfg)?;
    let mut adam_e = AdamState::for_net(cfg.adam(), &enc);
    let mut adam_c = AdamState::for_net(cfg.adam(), cls.net());
    let mut batches = Batcher::new(src.len(), cfg.batch_size, cfg.rng(STREAM_SRC_BATCHES));
    let steps = cfg.steps_per_epoch(src.len(), 0);
    let mut trace = LossTrace::default();

    for epoch in 1..=cfg.epochs {
        let mut means = EpochMeans::default();
        for _ in 0..steps {
            let idx = batches.next_batch();
            let xs = src.rows_matrix(idx);
            let ys = select(&lab.labels, idx);
            let (h, enc_cache) = enc.forward(&xs)?;
            let sp = speaker_pass(&cls, &h, &ys)?;
            let enc_grads = enc.backward_params(&enc_cache, &sp.grad_h)?;
            adam_c.step(cls.net_mut(), &sp.cls_grads)?;
            adam_e.step(&mut enc, &enc_grads)?;
            means.add("speaker_ce", sp.loss);
            means.add("speaker_accuracy", sp.acc);
        }
        means.flush(epoch, &mut trace);
    }
    Ok(Trained {
        model: SourceModel::new(enc, cls, lab.speakers)?,
        trace,
    })
}

/// Adversarial adaptation of a copy of the source encoder to the target set.
///
/// Each step draws one source and one target minibatch. The discriminator
/// is updated `disc_steps` times on `(M_s(x_s), M_t(x_t))` with both
/// encoders fixed, then `M_t` is updated `map_steps` times against the
/// fixed discriminator with inverted labels. The source model is never
/// modified.
pub fn adapt_adda(
    source: &SourceModel,
    tgt: &EmbeddingSet,
    src: &EmbeddingSet,
    cfg: &TrainConfig,
) -> Result<Trained<AddaModel>> {
    cfg.validate()?;
    let d_in = source.encoder.input_dim();
    check_dim(tgt, d_in, "target")?;
    check_dim(src, d_in, "source")?;

    let mut target_encoder = source.encoder.clone();
    let mut disc = DomainDiscriminator::new(
        source.encoder.output_dim(),
        cfg.hidden,
        cfg.disc_hidden_layers,
        &mut cfg.rng(STREAM_DOMAIN_HEAD),
    )?;
    if cfg.blind_discriminator {
        disc = disc.blind();
    }
    let mut adam_d = AdamState::for_net(cfg.adam(), disc.net());
    let mut adam_t = AdamState::for_net(cfg.adam(), &target_encoder);

    // M_s is frozen, so its outputs can be computed once; rows are
    // evaluated independently, so this matches per-batch evaluation.
    let src_h = source.encoder.infer(&src.to_matrix()?)?;
    let tgt_x = tgt.to_matrix()?;
    let mut src_batches = Batcher::new(src.len(), cfg.batch_size, cfg.rng(STREAM_SRC_BATCHES));
    let mut tgt_batches = Batcher::new(tgt.len(), cfg.batch_size, cfg.rng(STREAM_TGT_BATCHES));
    let steps = cfg.steps_per_epoch(src.len(), tgt.len());
    let mut trace = LossTrace::default();

    for epoch in 1..=cfg.epochs {
        let mut means = EpochMeans::default();
        for _ in 0..steps {
            let hs = rows(&src_h, src_batches.next_batch());
            let xt = rows(&tgt_x, tgt_batches.next_batch());

            for _ in 0..cfg.disc_steps {
                let ht = target_encoder.infer(&xt)?;
                let (ls, cache_s) = disc.net().forward(&hs)?;
                let (lt, cache_t) = disc.net().forward(&ht)?;
                let (ls, lt) = (ls.into_vec(), lt.into_vec());
                let (loss, g) = discriminator_bce(&ls, &lt)?;
                let mut grads = disc.net().backward_params(&cache_s, &Matrix::column(&g.src))?;
                grads.accumulate(&disc.net().backward_params(&cache_t, &Matrix::column(&g.tgt))?)?;
                adam_d.step(disc.net_mut(), &grads)?;
                means.add("disc_loss", finite(loss, "discriminator")?);
                means.add("disc_accuracy", domain_accuracy(&ls, &lt));
            }
            for _ in 0..cfg.map_steps {
                let (ht, enc_cache) = target_encoder.forward(&xt)?;
                let (lt, d_cache) = disc.net().forward(&ht)?;
                let (loss, g) = mapping_bce(lt.as_slice())?;
                let (_, grad_h) = disc.net().backward(&d_cache, &Matrix::column(&g))?;
                let grads = target_encoder.backward_params(&enc_cache, &grad_h)?;
                adam_t.step(&mut target_encoder, &grads)?;
                means.add("map_loss", finite(loss, "mapping")?);
            }
        }
        means.flush(epoch, &mut trace);
    }
    Ok(Trained {
        model: AddaModel {
            source: source.clone(),
            target_encoder,
            discriminator: disc,
        },
        trace,
    })
}

fn rows(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), m.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// Domain-adversarial training of a shared encoder.
///
/// Every step takes one source and one target minibatch. The speaker head
/// sees source only; the domain head is trained to tell the batches apart
/// (source = 1) and its input gradient reaches the encoder through a
/// gradient reversal of weight `λ`. Encoder, speaker head and source
/// batches use the same random streams as [`train_source`], so with
/// `λ = 0` and a target set no larger than the source set the encoder and
/// speaker head follow exactly the source-only trajectory.
pub fn train_dat(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    cfg: &TrainConfig,
) -> Result<Trained<DatModel>> {
    cfg.validate()?;
    let lab = source_labels(src)?;
    check_dim(tgt, src.dim(), "target")?;
    let (mut enc, mut cls) = init_speaker_net(src.dim(), lab.speakers.len(), cfg)?;
    let mut dom = DomainDiscriminator::new(
        enc.output_dim(),
        cfg.hidden,
        1,
        &mut cfg.rng(STREAM_DOMAIN_HEAD),
    )?;
    let mut adam_e = AdamState::for_net(cfg.adam(), &enc);
    let mut adam_c = AdamState::for_net(cfg.adam(), cls.net());
    let mut adam_d = AdamState::for_net(cfg.adam(), dom.net());
    let mut src_batches = Batcher::new(src.len(), cfg.batch_size, cfg.rng(STREAM_SRC_BATCHES));
    let mut tgt_batches = Batcher::new(tgt.len(), cfg.batch_size, cfg.rng(STREAM_TGT_BATCHES));
    let tgt_x = tgt.to_matrix()?;
    let steps = cfg.steps_per_epoch(src.len(), tgt.len());
    let mut trace = LossTrace::default();

    for epoch in 1..=cfg.epochs {
        let mut means = EpochMeans::default();
        for _ in 0..steps {
            let idx = src_batches.next_batch();
            let xs = src.rows_matrix(idx);
            let ys = select(&lab.labels, idx);
            let xt = rows(&tgt_x, tgt_batches.next_batch());

            let (hs, cache_s) = enc.forward(&xs)?;
            let (ht, cache_t) = enc.forward(&xt)?;
            let sp = speaker_pass(&cls, &hs, &ys)?;

            let (ls, dcache_s) = dom.net().forward(&hs)?;
            let (lt, dcache_t) = dom.net().forward(&ht)?;
            let (ls, lt) = (ls.into_vec(), lt.into_vec());
            let (dloss, g) = discriminator_bce(&ls, &lt)?;
            let (mut dom_grads, gh_s) = dom.net().backward(&dcache_s, &Matrix::column(&g.src))?;
            let (dom_grads_t, gh_t) = dom.net().backward(&dcache_t, &Matrix::column(&g.tgt))?;
            dom_grads.accumulate(&dom_grads_t)?;

            let grad_hs = sp.grad_h.add(&gradient_reversal(&gh_s, cfg.lambda))?;
            let grad_ht = gradient_reversal(&gh_t, cfg.lambda);
            let mut enc_grads = enc.backward_params(&cache_s, &grad_hs)?;
            enc_grads.accumulate(&enc.backward_params(&cache_t, &grad_ht)?)?;

            adam_c.step(cls.net_mut(), &sp.cls_grads)?;
            adam_d.step(dom.net_mut(), &dom_grads)?;
            adam_e.step(&mut enc, &enc_grads)?;
            means.add("speaker_ce", sp.loss);
            means.add("speaker_accuracy", sp.acc);
            means.add("domain_bce", finite(dloss, "domain")?);
            means.add("domain_accuracy", domain_accuracy(&ls, &lt));
        }
        means.flush(epoch, &mut trace);
    }
    Ok(Trained {
        model: DatModel {
            encoder: enc,
            speaker_head: cls,
            domain_head: dom,
            lambda: cfg.lambda,
            speakers: lab.speakers,
        },
        trace,
    })
}
