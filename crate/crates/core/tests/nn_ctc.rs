use proptest::prelude::*;
use slt_core::nn::{ctc_brute_force, ctc_log_likelihood, decode_recognition, Tensor};

/// Random log-softmax rows over `c` classes.
fn logprobs(t: usize, c: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-4.0f64..4.0, t * c).prop_map(move |raw| {
        let mut d = Vec::with_capacity(raw.len());
        for row in raw.chunks(c) {
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            d.extend(row.iter().map(|v| v - lse));
        }
        Tensor::matrix(t, c, d).unwrap()
    })
}

fn instance() -> impl Strategy<Value = (Tensor, Vec<usize>)> {
    (1usize..=6, 1usize..=3, 1usize..=3).prop_flat_map(|(t, labels, u)| {
        (logprobs(t, labels + 1), prop::collection::vec(1..=labels, u))
    })
}

/// Collapse written as a separate pass: dedupe runs, then drop blanks.
fn reference_collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut runs: Vec<usize> = path.to_vec();
    runs.dedup();
    runs.retain(|&k| k != blank);
    runs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn forward_matches_enumeration((lp, z) in instance()) {
        let f = ctc_log_likelihood(&lp, &z, 0).unwrap();
        let b = ctc_brute_force(&lp, &z, 0).unwrap();
        prop_assert!((f.exp() - b.exp()).abs() <= 1e-9, "forward {f}, enumeration {b}");
    }

    #[test]
    fn extra_frame_keeps_feasibility((lp, z) in instance(), raw in prop::collection::vec(0.01f64..1.0, 4)) {
        let (t, c) = lp.dims2();
        let before = ctc_log_likelihood(&lp, &z, 0).unwrap();
        let total: f64 = raw[..c].iter().sum();
        let mut d = lp.data().to_vec();
        d.extend(raw[..c].iter().map(|p| (p / total).ln()));
        let longer = Tensor::matrix(t + 1, c, d).unwrap();
        let after = ctc_log_likelihood(&longer, &z, 0).unwrap();
        if before.is_finite() {
            prop_assert!(after.is_finite());
        }
    }

    #[test]
    fn greedy_decoding_collapses_one_hot_paths(path in prop::collection::vec(0usize..4, 0..12)) {
        let mut d = vec![-20.0; path.len() * 4];
        for (t, &k) in path.iter().enumerate() {
            d[t * 4 + k] = 0.0;
        }
        let lp = Tensor::matrix(path.len(), 4, d).unwrap();
        prop_assert_eq!(decode_recognition(&lp, 0), reference_collapse(&path, 0));
    }
}

#[test]
fn ctc_gradient_matches_differences() {
    use slt_core::nn::Graph;
    let lp = Tensor::matrix(5, 4, (0..20).map(|i| -1.0 - (i as f64 * 0.37).sin()).collect()).unwrap();
    let z = [1, 2, 2];
    let mut g = Graph::new();
    let x = g.variable(lp.clone());
    let loss = g.ctc_loss(x, &z, 0).unwrap();
    let grads = g.backward(loss);
    let analytic = grads.wrt(x).unwrap();
    let h = 1e-6;
    for (i, &a) in analytic.iter().enumerate().take(20) {
        let mut p = lp.clone();
        p.data_mut()[i] += h;
        let mut m = lp.clone();
        m.data_mut()[i] -= h;
        let num = -(ctc_log_likelihood(&p, &z, 0).unwrap() - ctc_log_likelihood(&m, &z, 0).unwrap()) / (2.0 * h);
        assert!((num - a).abs() < 1e-7, "coord {i}: {num} vs {a}");
    }
}
