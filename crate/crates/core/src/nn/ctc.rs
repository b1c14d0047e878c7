//! Connectionist temporal classification over a blank-extended label sequence.

use super::graph::log_sum_exp;
use super::Tensor;
use crate::{Error, Result};

fn check_labels(logprobs: &Tensor, z: &[usize], blank: usize) -> Result<(usize, usize)> {
    let (t, c) = logprobs.dims2();
    if z.is_empty() {
        return Err(Error::InvalidArgument("empty label sequence".into()));
    }
    if blank >= c {
        return Err(Error::InvalidArgument(format!("blank id {blank} outside {c} classes")));
    }
    if let Some(&bad) = z.iter().find(|&&l| l == blank || l >= c) {
        let what = if bad == blank { "the blank id" } else { "an out-of-range id" };
        return Err(Error::InvalidArgument(format!("label {bad} is {what}")));
    }
    Ok((t, c))
}

fn extended(z: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * z.len() + 1);
    ext.push(blank);
    for &l in z {
        ext.push(l);
        ext.push(blank);
    }
    ext
}

/// Transitions into position `s` may skip from `s - 2` when it lands on a label
/// that differs from the one two steps back.
fn can_skip(ext: &[usize], s: usize, blank: usize) -> bool {
    s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]
}

fn alphas(lp: &[f64], c: usize, t_len: usize, ext: &[usize], blank: usize) -> Vec<f64> {
    let s_len = ext.len();
    let mut a = vec![f64::NEG_INFINITY; t_len * s_len];
    a[0] = lp[ext[0]];
    if s_len > 1 {
        a[1] = lp[ext[1]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let prev = &a[(t - 1) * s_len..t * s_len];
            let mut terms = [prev[s], f64::NEG_INFINITY, f64::NEG_INFINITY];
            if s >= 1 {
                terms[1] = prev[s - 1];
            }
            if can_skip(ext, s, blank) {
                terms[2] = prev[s - 2];
            }
            a[t * s_len + s] = log_sum_exp(&terms) + lp[t * c + ext[s]];
        }
    }
    a
}

/// `log P(z | x)`; `-inf` when no alignment fits in the available frames.
pub fn ctc_log_likelihood(logprobs: &Tensor, z: &[usize], blank: usize) -> Result<f64> {
    let (t_len, c) = check_labels(logprobs, z, blank)?;
    if t_len == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let ext = extended(z, blank);
    let a = alphas(logprobs.data(), c, t_len, &ext, blank);
    let s_len = ext.len();
    let last = &a[(t_len - 1) * s_len..];
    Ok(log_sum_exp(&[last[s_len - 1], last[s_len - 2]]))
}

/// Log-likelihood together with its gradient with respect to every log-probability.
pub(crate) fn ctc_with_grad(logprobs: &Tensor, z: &[usize], blank: usize) -> Result<(f64, Vec<f64>)> {
    let (t_len, c) = check_labels(logprobs, z, blank)?;
    let mut grad = vec![0.0; t_len * c];
    if t_len == 0 {
        return Ok((f64::NEG_INFINITY, grad));
    }
    let lp = logprobs.data();
    let ext = extended(z, blank);
    let s_len = ext.len();
    let a = alphas(lp, c, t_len, &ext, blank);
    let ll = log_sum_exp(&[a[t_len * s_len - 1], a[t_len * s_len - 2]]);
    if !ll.is_finite() {
        return Ok((ll, grad));
    }
    // b[t][s]: log-probability of finishing from state s at t, excluding emission at t.
    let mut b = vec![f64::NEG_INFINITY; t_len * s_len];
    b[(t_len - 1) * s_len + s_len - 1] = 0.0;
    b[(t_len - 1) * s_len + s_len - 2] = 0.0;
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let next = |s2: usize| lp[(t + 1) * c + ext[s2]] + b[(t + 1) * s_len + s2];
            let mut terms = [next(s), f64::NEG_INFINITY, f64::NEG_INFINITY];
            if s + 1 < s_len {
                terms[1] = next(s + 1);
            }
            if s + 2 < s_len && can_skip(&ext, s + 2, blank) {
                terms[2] = next(s + 2);
            }
            b[t * s_len + s] = log_sum_exp(&terms);
        }
    }
    for t in 0..t_len {
        for s in 0..s_len {
            let w = a[t * s_len + s] + b[t * s_len + s] - ll;
            if w > f64::NEG_INFINITY {
                grad[t * c + ext[s]] += w.exp();
            }
        }
    }
    Ok((ll, grad))
}

/// Removes adjacent repeats, then blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

pub const BRUTE_FORCE_MAX_T: usize = 8;
pub const BRUTE_FORCE_MAX_CLASSES: usize = 5;

/// Sums path probabilities over every length-`T` path; small inputs only.
pub fn ctc_brute_force(logprobs: &Tensor, z: &[usize], blank: usize) -> Result<f64> {
    let (t_len, c) = check_labels(logprobs, z, blank)?;
    if t_len > BRUTE_FORCE_MAX_T || c > BRUTE_FORCE_MAX_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "enumeration limited to T <= {BRUTE_FORCE_MAX_T} and {BRUTE_FORCE_MAX_CLASSES} classes, got T = {t_len}, {c} classes"
        )));
    }
    let lp = logprobs.data();
    let mut path = vec![0usize; t_len];
    let mut total = 0.0;
    loop {
        if collapse(&path, blank) == z {
            total += path
                .iter()
                .enumerate()
                .map(|(t, &k)| lp[t * c + k])
                .sum::<f64>()
                .exp();
        }
        // Odometer increment.
        let mut i = 0;
        while i < t_len {
            path[i] += 1;
            if path[i] < c {
                break;
            }
            path[i] = 0;
            i += 1;
        }
        if i == t_len {
            break;
        }
    }
    Ok(total.ln())
}

/// Greedy best-path decoding.
pub fn decode_recognition(logprobs: &Tensor, blank: usize) -> Vec<usize> {
    let (t_len, _) = logprobs.dims2();
    let path: Vec<usize> = (0..t_len).map(|t| argmax(logprobs.row(t))).collect();
    collapse(&path, blank)
}

/// Index of the first maximum.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(rows: &[&[f64]]) -> Tensor {
        let c = rows[0].len();
        Tensor::matrix(rows.len(), c, rows.iter().flat_map(|r| r.iter().map(|p| p.ln())).collect())
            .unwrap()
    }

    #[test]
    fn single_frame_single_label() {
        let t = lp(&[&[0.4, 0.6]]);
        assert!((ctc_log_likelihood(&t, &[1], 0).unwrap() - 0.6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_frames_uniform() {
        let t = lp(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert!((ctc_log_likelihood(&t, &[1], 0).unwrap() - 0.75f64.ln()).abs() < 1e-12);
        assert!((ctc_brute_force(&t, &[1], 0).unwrap() - 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn repeat_needs_separator() {
        let t = lp(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert_eq!(ctc_log_likelihood(&t, &[1, 1], 0).unwrap(), f64::NEG_INFINITY);
        let t3 = lp(&[&[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5]]);
        assert!((ctc_log_likelihood(&t3, &[1, 1], 0).unwrap() - 0.125f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn labels_longer_than_frames() {
        let t = lp(&[&[0.2, 0.4, 0.4]]);
        assert_eq!(ctc_log_likelihood(&t, &[1, 2], 0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(ctc_brute_force(&t, &[1, 2], 0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn blank_label_rejected() {
        let t = lp(&[&[0.5, 0.5]]);
        assert!(ctc_log_likelihood(&t, &[0], 0).is_err());
        assert!(ctc_log_likelihood(&t, &[], 0).is_err());
        assert!(ctc_log_likelihood(&t, &[2], 0).is_err());
    }

    #[test]
    fn brute_force_bounds() {
        let t = Tensor::matrix(9, 2, vec![0.5f64.ln(); 18]).unwrap();
        assert!(ctc_brute_force(&t, &[1], 0).is_err());
        let t = Tensor::matrix(1, 6, vec![(1.0f64 / 6.0).ln(); 6]).unwrap();
        assert!(ctc_brute_force(&t, &[1], 0).is_err());
    }

    #[test]
    fn certain_symbol() {
        for t_len in 1..5 {
            let t = Tensor::matrix(t_len, 2, [f64::NEG_INFINITY, 0.0].repeat(t_len)).unwrap();
            assert_eq!(ctc_log_likelihood(&t, &[1], 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn greedy_decoding() {
        let one_hot = |path: &[usize]| {
            let mut d = vec![-10.0; path.len() * 3];
            for (t, &k) in path.iter().enumerate() {
                d[t * 3 + k] = 0.0;
            }
            Tensor::matrix(path.len(), 3, d).unwrap()
        };
        assert_eq!(decode_recognition(&one_hot(&[1, 1, 0, 2]), 0), [1, 2]);
        assert_eq!(decode_recognition(&one_hot(&[0, 0, 0]), 0), Vec::<usize>::new());
        assert_eq!(decode_recognition(&one_hot(&[1, 0, 1]), 0), [1, 1]);
    }
}
