use rand::Rng as _;

use super::checkpoint::Checkpoint;
use super::model::TransformerModel;
use crate::rng;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinetunePolicy {
    /// Parameters under these prefixes are reinitialized even when shapes match.
    pub reinit_prefixes: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct FinetuneReport {
    pub copied: Vec<String>,
    pub reinitialized: Vec<String>,
}

/// Copies every checkpoint tensor whose name and shape match; the rest get
/// fresh `U(-1/√fan_in, 1/√fan_in)` values.
pub fn finetune_load(ckpt: &Checkpoint, model: &mut TransformerModel, policy: &FinetunePolicy) -> Result<FinetuneReport> {
    let mut rng = rng::derived(policy.seed, "finetune");
    let mut report = FinetuneReport::default();
    for p in model.params.iter_mut() {
        let forced = policy.reinit_prefixes.iter().any(|pre| p.name.starts_with(pre.as_str()));
        match ckpt.tensor(&p.name) {
            Some(t) if !forced && t.shape == p.tensor.shape() => {
                p.tensor
                    .data_mut()
                    .iter_mut()
                    .zip(&t.data)
                    .for_each(|(d, &s)| *d = f64::from(s));
                report.copied.push(p.name.clone());
            }
            _ => {
                let bound = p.uniform_bound();
                p.tensor
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.gen_range(-bound..=bound));
                report.reinitialized.push(p.name.clone());
            }
        }
    }
    Ok(report)
}
