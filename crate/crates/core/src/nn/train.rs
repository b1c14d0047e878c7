use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ctc::decode_recognition;
use super::decode::{decode_translation, DecodeMode};
use super::graph::{Graph, Var};
use super::hparams::Hyperparameters;
use super::model::{pool_frames, Mode, TransformerModel};
use super::optim::Adam;
use super::params::ParamStore;
use super::Tensor;
use crate::corpus::{GlossVocabulary, SampleRecord, TextVocabulary};
use crate::metrics::perplexity;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// A record reduced to model inputs and id targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub name: String,
    pub features: Tensor,
    pub gloss: Vec<usize>,
    pub text: Vec<usize>,
}

/// Frames needed to emit `z` under CTC: one per label plus a blank between repeats.
pub fn ctc_min_frames(z: &[usize]) -> usize {
    z.len() + z.windows(2).filter(|w| w[0] == w[1]).count()
}

pub fn prepare_examples(
    records: &[SampleRecord],
    gloss_vocab: &GlossVocabulary,
    text_vocab: &TextVocabulary,
    pool: usize,
) -> Result<Vec<Example>> {
    records
        .iter()
        .map(|r| {
            let gloss = gloss_vocab.encode(&r.gloss);
            let need = ctc_min_frames(&gloss);
            if need > r.num_frames() {
                return Err(Error::Infeasible(format!(
                    "record `{}`: {} glosses need {need} frames, found {}",
                    r.name,
                    gloss.len(),
                    r.num_frames()
                )));
            }
            Ok(Example {
                name: r.name.clone(),
                features: pool_frames(&r.frames, pool)?,
                gloss,
                text: text_vocab.encode(&r.text),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLoss {
    pub l_ctc: f64,
    pub l_trans: f64,
    pub total: f64,
}

pub struct LossGraph {
    pub graph: Graph,
    pub total: Var,
    pub ctc: Var,
    pub trans: Var,
    pub loss: JointLoss,
}

/// Builds the joint objective: mean CTC loss per sample and mean token
/// cross-entropy under teacher forcing, with `</s>` as the final target.
pub fn joint_loss(
    model: &TransformerModel,
    batch: &[&Example],
    hp: &Hyperparameters,
    mode: &mut Mode,
) -> Result<LossGraph> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut g = Graph::new();
    let mut ctc_terms = Vec::with_capacity(batch.len());
    let mut nll_terms = Vec::with_capacity(batch.len());
    let mut tokens = 0usize;
    for ex in batch {
        let emb = model.embed(&mut g, &ex.features)?;
        let enc = model.encode(&mut g, emb, mode)?;
        let ctc = g
            .ctc_loss(enc.ctc_logprobs, &ex.gloss, model.blank_id())
            .map_err(|e| match e {
                Error::Infeasible(m) => Error::Infeasible(format!("record `{}`: {m}", ex.name)),
                e => e,
            })?;
        ctc_terms.push(ctc);
        let mut inputs = Vec::with_capacity(ex.text.len() + 1);
        inputs.push(TextVocabulary::BOS);
        inputs.extend(&ex.text);
        let mut targets = ex.text.clone();
        targets.push(TextVocabulary::EOS);
        tokens += targets.len();
        let lp = model.decode(&mut g, enc.memory, &inputs, mode)?;
        nll_terms.push(g.nll(lp, &targets));
    }
    let sum = |g: &mut Graph, vs: &[Var]| vs[1..].iter().fold(vs[0], |acc, &v| g.add(acc, v));
    let ctc_sum = sum(&mut g, &ctc_terms);
    let nll_sum = sum(&mut g, &nll_terms);
    let ctc = g.scale(ctc_sum, 1.0 / batch.len() as f64);
    let trans = g.scale(nll_sum, 1.0 / tokens as f64);
    let wc = g.scale(ctc, hp.lambda_rec);
    let wt = g.scale(trans, hp.lambda_trans);
    let total = g.add(wc, wt);
    let loss = JointLoss {
        l_ctc: g.scalar(ctc),
        l_trans: g.scalar(trans),
        total: g.scalar(total),
    };
    if !loss.total.is_finite() {
        return Err(Error::NonFinite { layer: "joint loss".into() });
    }
    Ok(LossGraph {
        graph: g,
        total,
        ctc,
        trans,
        loss,
    })
}

/// One forward/backward pass and Adam update.
pub fn joint_step(
    batch: &[&Example],
    model: &mut TransformerModel,
    hp: &Hyperparameters,
    opt: &mut Adam,
    rng: &mut Rng,
) -> Result<JointLoss> {
    let lg = joint_loss(model, batch, hp, &mut Mode::Train(rng))?;
    let grads = lg.graph.backward(lg.total);
    model.params.zero_grad();
    lg.graph.accumulate_param_grads(&grads, &mut model.params);
    opt.step(&mut model.params, hp.learning_rate);
    model.params.zero_grad();
    Ok(lg.loss)
}

/// Layers kept frozen for the first `epoch` epochs, selected by name prefix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FreezeSchedule {
    pub entries: Vec<FreezeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeEntry {
    /// Zero-based epoch at which the prefixes start training.
    pub epoch: usize,
    pub prefixes: Vec<String>,
}

impl FreezeSchedule {
    pub fn new(entries: Vec<(usize, Vec<String>)>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|(epoch, prefixes)| FreezeEntry { epoch, prefixes })
                .collect(),
        }
    }

    pub fn validate(&self, params: &ParamStore) -> Result<()> {
        for p in self.entries.iter().flat_map(|e| &e.prefixes) {
            if !params.names().any(|n| n.starts_with(p.as_str())) {
                return Err(Error::InvalidArgument(format!("freeze prefix `{p}` matches no parameter")));
            }
        }
        Ok(())
    }

    pub fn is_frozen(&self, name: &str, epoch: usize) -> bool {
        self.entries
            .iter()
            .any(|e| e.epoch > epoch && e.prefixes.iter().any(|p| name.starts_with(p.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_ppl: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub freeze: FreezeSchedule,
    /// Write 0 instead of wall-clock seconds so logs are reproducible byte for byte.
    pub no_timing: bool,
}

pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// One-based epoch whose parameters are in `best`.
    pub best_epoch: usize,
    pub best: ParamStore,
}

/// Trains for `hp.epochs` epochs over seeded shuffles of `train` and keeps the
/// parameters with the lowest dev perplexity (the last epoch if `dev` is empty).
pub fn train(
    train: &[Example],
    dev: &[Example],
    hp: &Hyperparameters,
    model: &mut TransformerModel,
    opts: &TrainOptions,
    mut progress: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training split".into()));
    }
    opts.freeze.validate(&model.params)?;
    let mut rng = rng::derived(hp.seed, "train");
    let mut opt = Adam::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(hp.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 0..hp.epochs {
        let start = Instant::now();
        model.set_frozen(|n| opts.freeze.is_frozen(n, epoch));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            total += joint_step(&batch, model, hp, &mut opt, &mut rng)?.total;
            batches += 1;
        }
        let dev_ppl = if dev.is_empty() {
            None
        } else {
            Some(dev_perplexity(model, dev)?)
        };
        let entry = EpochLog {
            epoch: epoch + 1,
            train_loss: total / batches as f64,
            dev_ppl,
            seconds: if opts.no_timing { 0.0 } else { start.elapsed().as_secs_f64() },
        };
        progress(&entry);
        let score = dev_ppl.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b || dev_ppl.is_none()) {
            best = Some((score, epoch + 1, model.params.clone()));
        }
        log.push(entry);
    }
    model.set_frozen(|_| false);
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(TrainOutcome { log, best_epoch, best })
}

/// Teacher-forced log-probabilities of every reference token, `</s>` included.
pub fn token_logprobs(model: &TransformerModel, ex: &Example) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let mut mode = Mode::Eval;
    let emb = model.embed(&mut g, &ex.features)?;
    let enc = model.encode(&mut g, emb, &mut mode)?;
    let mut inputs = vec![TextVocabulary::BOS];
    inputs.extend(&ex.text);
    let lp = model.decode(&mut g, enc.memory, &inputs, &mut mode)?;
    let lp = g.value(lp);
    Ok(ex
        .text
        .iter()
        .chain(std::iter::once(&TextVocabulary::EOS))
        .enumerate()
        .map(|(i, &t)| lp.at(i, t))
        .collect())
}

pub fn dev_perplexity(model: &TransformerModel, dev: &[Example]) -> Result<f64> {
    let mut all = Vec::new();
    for ex in dev {
        all.extend(token_logprobs(model, ex)?);
    }
    perplexity(&all)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub gloss: Vec<usize>,
    pub text: Vec<usize>,
}

pub fn predict(model: &TransformerModel, ex: &Example, mode: DecodeMode, max_len: usize) -> Result<Prediction> {
    let mut g = Graph::new();
    let emb = model.embed(&mut g, &ex.features)?;
    let enc = model.encode(&mut g, emb, &mut Mode::Eval)?;
    let gloss = decode_recognition(g.value(enc.ctc_logprobs), model.blank_id());
    let text = decode_translation(model, g.value(enc.memory), mode, max_len)?;
    Ok(Prediction { gloss, text })
}
