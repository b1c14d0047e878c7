use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const EPOCH_GRID: [usize; 3] = [5, 10, 20];
pub const HIDDEN_GRID: [usize; 2] = [256, 512];
pub const BATCH_GRID: [usize; 3] = [16, 32, 64];
pub const LR_GRID: [f64; 3] = [1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub epochs: usize,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub num_layers: usize,
    pub num_heads: usize,
    pub dropout: f64,
    pub lambda_rec: f64,
    pub lambda_trans: f64,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            epochs: 20,
            hidden_dim: 256,
            batch_size: 32,
            learning_rate: 1e-3,
            num_layers: 2,
            num_heads: 4,
            dropout: 0.1,
            lambda_rec: 1.0,
            lambda_trans: 1.0,
            seed: 42,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.epochs == 0 || self.hidden_dim == 0 || self.batch_size == 0 {
            return bad("epochs, hidden_dim and batch_size must be positive");
        }
        if self.num_layers == 0 || self.num_heads == 0 {
            return bad("num_layers and num_heads must be positive");
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return bad(&format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        // A zero rate is allowed: it turns training into a dry run.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        let lam_ok = |l: f64| l >= 0.0 && l.is_finite();
        if !lam_ok(self.lambda_rec) || !lam_ok(self.lambda_trans) {
            return bad("loss weights must be finite and non-negative");
        }
        if self.lambda_rec == 0.0 && self.lambda_trans == 0.0 {
            return bad("at least one loss weight must be positive");
        }
        Ok(())
    }

    /// Fields that fall outside the explored grid, as human-readable messages.
    pub fn grid_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !EPOCH_GRID.contains(&self.epochs) {
            out.push(format!("epochs {} not in {EPOCH_GRID:?}", self.epochs));
        }
        if !HIDDEN_GRID.contains(&self.hidden_dim) {
            out.push(format!("hidden_dim {} not in {HIDDEN_GRID:?}", self.hidden_dim));
        }
        if !BATCH_GRID.contains(&self.batch_size) {
            out.push(format!("batch_size {} not in {BATCH_GRID:?}", self.batch_size));
        }
        if !LR_GRID.iter().any(|&g| (g - self.learning_rate).abs() <= g * 1e-9) {
            out.push(format!("learning_rate {} not in {LR_GRID:?}", self.learning_rate));
        }
        out
    }
}
