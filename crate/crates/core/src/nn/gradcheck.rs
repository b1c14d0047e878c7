use rand::seq::index;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Denominator floor for the relative error. Some gradients are exactly zero
/// (attention key biases cancel inside the softmax), and central differences
/// on an O(1) loss with h = 1e-5 carry about 1e-11 of rounding noise, so the
/// floor sits well above that noise.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

fn eval<F>(loss: &mut F, params: &ParamStore) -> Result<(Graph, Var)>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let v = loss(&mut g, params)?;
    if !g.scalar(v).is_finite() {
        return Err(Error::NonFinite { layer: "loss".into() });
    }
    Ok((g, v))
}

/// Compares reverse-mode gradients of a scalar loss with central differences
/// on up to `samples` coordinates drawn without replacement from the trainable
/// parameters.
pub fn grad_check<F>(params: &mut ParamStore, h: f64, samples: usize, seed: u64, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let (g, root) = eval(&mut loss, params)?;
    let grads = g.backward(root);
    params.zero_grad();
    g.accumulate_param_grads(&grads, params);
    drop(g);

    let coords: Vec<(usize, usize)> = params
        .iter()
        .filter(|(_, p)| !p.frozen)
        .flat_map(|(id, p)| (0..p.tensor.numel()).map(move |i| (id.0, i)))
        .collect();
    let mut picks = index::sample(&mut rng::seeded(seed), coords.len(), samples.min(coords.len())).into_vec();
    picks.sort_unstable();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for k in picks {
        let (pi, i) = coords[k];
        let id = super::params::ParamId(pi);
        let analytic = params.get(id).tensor.grad().map_or(0.0, |g| g[i]);
        let orig = params.get(id).tensor.data()[i];
        params.get_mut(id).tensor.data_mut()[i] = orig + h;
        let plus = eval(&mut loss, params).map(|(g, v)| g.scalar(v));
        params.get_mut(id).tensor.data_mut()[i] = orig - h;
        let minus = eval(&mut loss, params).map(|(g, v)| g.scalar(v));
        params.get_mut(id).tensor.data_mut()[i] = orig;
        let numeric = (plus? - minus?) / (2.0 * h);
        let err = rel_error(analytic, numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((params.get(id).name.clone(), i));
        }
    }
    params.zero_grad();
    Ok(report)
}
