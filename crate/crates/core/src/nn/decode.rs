use std::cmp::Ordering;

use super::ctc::argmax;
use super::graph::Graph;
use super::model::{Mode, TransformerModel};
use super::Tensor;
use crate::corpus::TextVocabulary;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam { width: usize },
}

fn next_logprobs(model: &TransformerModel, memory: &Tensor, prefix: &[usize]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let m = g.constant(memory.clone());
    let lp = model.decode(&mut g, m, prefix, &mut Mode::Eval)?;
    Ok(g.value(lp).row(prefix.len() - 1).to_vec())
}

#[derive(Debug, Clone)]
struct Hyp {
    tokens: Vec<usize>,
    logp: f64,
    done: bool,
}

impl Hyp {
    /// Mean log-probability per emitted token (eos included).
    fn score(&self) -> f64 {
        let n = self.tokens.len() + usize::from(self.done);
        if n == 0 {
            0.0
        } else {
            self.logp / n as f64
        }
    }
}

/// Autoregressive decoding from `<s>`; the result excludes `<s>` and `</s>`.
pub fn decode_translation(
    model: &TransformerModel,
    memory: &Tensor,
    mode: DecodeMode,
    max_len: usize,
) -> Result<Vec<usize>> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let bos = TextVocabulary::BOS;
    let eos = TextVocabulary::EOS;
    let width = match mode {
        DecodeMode::Greedy => {
            let mut prefix = vec![bos];
            while prefix.len() <= max_len {
                let next = argmax(&next_logprobs(model, memory, &prefix)?);
                if next == eos {
                    break;
                }
                prefix.push(next);
            }
            return Ok(prefix.split_off(1));
        }
        DecodeMode::Beam { width: 0 } => {
            return Err(Error::InvalidArgument("beam width must be at least 1".into()))
        }
        DecodeMode::Beam { width } => width,
    };

    let mut beams = vec![Hyp {
        tokens: Vec::new(),
        logp: 0.0,
        done: false,
    }];
    for _ in 0..max_len {
        let mut cands = Vec::new();
        for h in &beams {
            if h.done {
                cands.push(h.clone());
                continue;
            }
            let mut prefix = vec![bos];
            prefix.extend(&h.tokens);
            let lp = next_logprobs(model, memory, &prefix)?;
            let mut order: Vec<usize> = (0..lp.len()).collect();
            order.sort_by(|&a, &b| lp[b].partial_cmp(&lp[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            for &k in order.iter().take(width) {
                let mut next = h.clone();
                next.logp += lp[k];
                if k == eos {
                    next.done = true;
                } else {
                    next.tokens.push(k);
                }
                cands.push(next);
            }
        }
        // Stable sort keeps earlier candidates first on equal scores.
        cands.sort_by(|a, b| b.score().partial_cmp(&a.score()).unwrap_or(Ordering::Equal));
        cands.truncate(width);
        beams = cands;
        if beams.iter().all(|h| h.done) {
            break;
        }
    }
    Ok(beams.swap_remove(0).tokens)
}
