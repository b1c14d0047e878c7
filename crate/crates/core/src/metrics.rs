//! Translation metrics: BLEU-n, ROUGE-L, chrF and perplexity.
//!
//! Sentence-level scores are on a 0–100 scale. Corpus-level scores in
//! [`MetricsReport`] are plain averages of sentence scores.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l_f1: f64,
    pub chrf: f64,
    pub ppl: f64,
}

fn ngram_counts<T: Eq + Hash>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && seq.len() >= n {
        for w in seq.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Smoothed sentence BLEU: add-one smoothing on the precisions of order ≥ 2.
pub fn bleu_n<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>], max_n: usize) -> f64 {
    bleu_with_smoothing(candidate, references, max_n, true)
}

/// Sentence BLEU with the higher-order smoothing switchable.
///
/// Precisions use counts clipped by the maximum count in any reference; the
/// brevity penalty uses the reference length closest to the candidate length
/// (shorter one on ties).
pub fn bleu_with_smoothing<S: AsRef<str>>(
    candidate: &[S],
    references: &[Vec<S>],
    max_n: usize,
    smooth: bool,
) -> f64 {
    assert!(max_n >= 1, "max_n must be at least 1");
    assert!(!references.is_empty(), "BLEU needs at least one reference");
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refs: Vec<Vec<&str>> = references
        .iter()
        .map(|r| r.iter().map(AsRef::as_ref).collect())
        .collect();
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let counts = ngram_counts(&cand, n);
        let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
        let matched: usize = counts
            .iter()
            .map(|(g, &c)| {
                let max_ref = ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max();
                c.min(max_ref.unwrap_or(0))
            })
            .sum();
        let total = cand.len().saturating_sub(n - 1);
        let (num, den) = if n >= 2 && smooth {
            (matched as f64 + 1.0, total as f64 + 1.0)
        } else {
            (matched as f64, total as f64)
        };
        if num == 0.0 || den == 0.0 {
            return 0.0;
        }
        log_sum += (num / den).ln();
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * (log_sum / max_n as f64).exp()
}

fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l_f1<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    let c: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&c, &r) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let (p, rec) = (lcs / c.len() as f64, lcs / r.len() as f64);
    100.0 * 2.0 * p * rec / (p + rec)
}

/// Character n-gram F-score, averaged over orders `1..=n`, whitespace
/// removed. Orders for which neither side has any n-gram are skipped.
pub fn chrf(candidate: &str, reference: &str, n: usize, beta: f64) -> f64 {
    assert!(n >= 1, "chrF order must be at least 1");
    let c: Vec<char> = candidate.chars().filter(|ch| !ch.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|ch| !ch.is_whitespace()).collect();
    let b2 = beta * beta;
    let mut total = 0.0;
    let mut orders = 0usize;
    for k in 1..=n {
        let cc = ngram_counts(&c, k);
        let rc = ngram_counts(&r, k);
        if cc.is_empty() && rc.is_empty() {
            continue;
        }
        orders += 1;
        let matched: usize = cc
            .iter()
            .map(|(g, &x)| x.min(rc.get(g).copied().unwrap_or(0)))
            .sum();
        let (c_total, r_total) = (c.len().saturating_sub(k - 1), r.len().saturating_sub(k - 1));
        if matched == 0 {
            continue;
        }
        let p = matched as f64 / c_total as f64;
        let rr = matched as f64 / r_total as f64;
        total += (1.0 + b2) * p * rr / (b2 * p + rr);
    }
    if orders == 0 {
        return 100.0;
    }
    100.0 * total / orders as f64
}

/// chrF with the usual defaults (order 6, β = 2).
pub fn chrf_default(candidate: &str, reference: &str) -> f64 {
    chrf(candidate, reference, 6, 2.0)
}

/// `exp(-mean(logprobs))`.
pub fn perplexity(token_logprobs: &[f64]) -> Result<f64> {
    if token_logprobs.is_empty() {
        return Err(Error::InvalidArgument(
            "perplexity of an empty sequence".into(),
        ));
    }
    if let Some(v) = token_logprobs.iter().find(|v| v.is_nan() || **v > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "log-probability {v} is not <= 0"
        )));
    }
    let mean = token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64;
    Ok((-mean).exp())
}

/// Averages sentence-level scores over `(hypothesis, reference)` pairs; `ppl`
/// comes from the pooled token log-probabilities.
pub fn corpus_report<S: AsRef<str>>(
    pairs: &[(Vec<S>, Vec<S>)],
    token_logprobs: &[f64],
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no sentences to score".into()));
    }
    let n = pairs.len() as f64;
    let mut sums = [0.0f64; 6];
    for (hyp, reference) in pairs {
        let refs = [reference.iter().map(AsRef::as_ref).collect::<Vec<&str>>()];
        let hyp: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
        for (k, s) in sums.iter_mut().take(4).enumerate() {
            *s += bleu_n(&hyp, &refs, k + 1);
        }
        sums[4] += rouge_l_f1(&hyp, &refs[0]);
        sums[5] += chrf_default(&hyp.join(" "), &refs[0].join(" "));
    }
    Ok(MetricsReport {
        bleu1: sums[0] / n,
        bleu2: sums[1] / n,
        bleu3: sums[2] / n,
        bleu4: sums[3] / n,
        rouge_l_f1: sums[4] / n,
        chrf: sums[5] / n,
        ppl: perplexity(token_logprobs)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    /// Independent BLEU: counts n-grams by explicit nested loops.
    fn oracle_bleu(c: &[String], r: &[String], max_n: usize, smooth: bool) -> f64 {
        if c.is_empty() {
            return 0.0;
        }
        let mut logp = 0.0;
        for n in 1..=max_n {
            let cgrams: Vec<&[String]> = if c.len() >= n { c.windows(n).collect() } else { vec![] };
            let rgrams: Vec<&[String]> = if r.len() >= n { r.windows(n).collect() } else { vec![] };
            let mut used = vec![false; rgrams.len()];
            let mut m = 0.0;
            for g in &cgrams {
                if let Some(j) = (0..rgrams.len()).find(|&j| !used[j] && rgrams[j] == *g) {
                    used[j] = true;
                    m += 1.0;
                }
            }
            let (num, den) = if n > 1 && smooth {
                (m + 1.0, cgrams.len() as f64 + 1.0)
            } else {
                (m, cgrams.len() as f64)
            };
            if num == 0.0 {
                return 0.0;
            }
            logp += (num / den).ln() / max_n as f64;
        }
        let bp = if c.len() < r.len() { (1.0 - r.len() as f64 / c.len() as f64).exp() } else { 1.0 };
        100.0 * bp * logp.exp()
    }

    #[test]
    fn identical_is_perfect() {
        let s = toks("es regnet morgen im norden");
        for n in 1..=4 {
            assert!((bleu_n(&s, std::slice::from_ref(&s), n) - 100.0).abs() < 1e-9);
        }
        assert!((rouge_l_f1(&s, &s) - 100.0).abs() < 1e-9);
        assert!((chrf_default("es regnet", "es regnet") - 100.0).abs() < 1e-9);
        let one = toks("a");
        assert!((bleu_n(&one, std::slice::from_ref(&one), 4) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn zero_overlap_is_zero() {
        assert_eq!(bleu_n(&toks("a b"), &[toks("c d")], 4), 0.0);
        assert_eq!(bleu_n::<String>(&[], &[toks("c d")], 1), 0.0);
        assert_eq!(rouge_l_f1(&toks("a b"), &toks("c d")), 0.0);
        assert_eq!(chrf_default("abc", "xyz"), 0.0);
    }

    #[test]
    fn clipped_unigram_example() {
        let c = toks("the the the");
        let r = toks("the cat");
        let got = bleu_n(&c, std::slice::from_ref(&r), 1);
        let want = oracle_bleu(&c, &r, 1, true);
        assert!((got - want).abs() < 1e-9);
        assert!((got - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn brevity_penalty_applies_to_short_candidates() {
        let c = toks("a b");
        let r = toks("a b c d");
        let want = 100.0 * (1.0f64 - 2.0).exp();
        assert!((bleu_n(&c, &[r], 1) - want).abs() < 1e-9);
    }

    #[test]
    fn closest_reference_length_used() {
        let c = toks("a b c");
        let refs = vec![toks("a b c d e f"), toks("a b c d")];
        let want = 100.0 * (1.0f64 - 4.0 / 3.0).exp();
        assert!((bleu_n(&c, &refs, 1) - want).abs() < 1e-9);
    }

    #[test]
    fn rouge_worked_example() {
        let v = rouge_l_f1(&toks("A B C D"), &toks("A C D"));
        assert!((v - 600.0 / 7.0).abs() < 1e-9);
        assert!((v - 85.71).abs() < 0.01);
        assert_eq!(rouge_l_f1::<String>(&[], &toks("a")), 0.0);
    }

    #[test]
    fn chrf_single_char_skips_higher_orders() {
        assert!((chrf("a", "a", 6, 2.0) - 100.0).abs() < 1e-9);
        assert!((chrf("a b", "ab", 6, 2.0) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn chrf_hand_example() {
        // "ab" vs "ac", n = 2: unigram P = R = 1/2 so F = 1/2; bigram F = 0.
        assert!((chrf("ab", "ac", 2, 2.0) - 25.0).abs() < 1e-9);
    }

    #[test]
    fn perplexity_examples() {
        let v = 50usize;
        let uniform = vec![(1.0 / v as f64).ln(); 13];
        assert!((perplexity(&uniform).unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(perplexity(&[0.0, 0.0]).unwrap(), 1.0);
        assert!((perplexity(&[0.5f64.ln(), 0.5f64.ln()]).unwrap() - 2.0).abs() < 1e-12);
        assert!(perplexity(&[]).is_err());
        assert!(perplexity(&[0.1]).is_err());
    }

    #[test]
    fn corpus_report_averages() {
        let pairs = vec![(toks("a b"), toks("a b")), (toks("x"), toks("a b"))];
        let rep = corpus_report(&pairs, &[0.0]).unwrap();
        assert!((rep.bleu1 - 50.0).abs() < 1e-9);
        assert!((rep.rouge_l_f1 - 50.0).abs() < 1e-9);
        assert_eq!(rep.ppl, 1.0);
    }

    #[test]
    fn unsmoothed_bleu_can_rise() {
        let (c, r) = (toks("d c b d"), toks("b d c b"));
        let b1 = bleu_with_smoothing(&c, std::slice::from_ref(&r), 1, false);
        let b2 = bleu_with_smoothing(&c, std::slice::from_ref(&r), 2, false);
        assert!((b1 - 75.0).abs() < 1e-9);
        assert!((b2 - 100.0 * 0.75f64.sqrt()).abs() < 1e-9);
    }

    fn sentence() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..10)
            .prop_map(|v| v.into_iter().map(str::to_string).collect())
    }

    proptest! {
        #[test]
        fn bleu_matches_oracle(c in sentence(), r in sentence(), n in 1usize..=4, smooth in any::<bool>()) {
            prop_assume!(!r.is_empty());
            let got = bleu_with_smoothing(&c, std::slice::from_ref(&r), n, smooth);
            prop_assert!((got - oracle_bleu(&c, &r, n, smooth)).abs() <= 1e-9);
            prop_assert!((0.0..=100.0 + 1e-9).contains(&got));
        }

        // The score itself may rise with n (see `unsmoothed_bleu_can_rise`), but
        // the product of precisions it is built from cannot.
        #[test]
        fn unsmoothed_precision_product_non_increasing(c in sentence(), r in sentence()) {
            prop_assume!(!r.is_empty() && !c.is_empty());
            let (cl, rl) = (c.len() as f64, r.len() as f64);
            let bp = if cl < rl { (1.0 - rl / cl).exp() } else { 1.0 };
            let products: Vec<f64> = (1..=4)
                .map(|n| (bleu_with_smoothing(&c, std::slice::from_ref(&r), n, false) / (100.0 * bp)).powi(n as i32))
                .collect();
            for w in products.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }

        #[test]
        fn renaming_invariance(c in sentence(), r in sentence()) {
            prop_assume!(!r.is_empty());
            let rename = |s: &[String]| s.iter().map(|t| format!("{t}{t}x")).collect::<Vec<_>>();
            let (c2, r2) = (rename(&c), rename(&r));
            prop_assert!((bleu_n(&c, std::slice::from_ref(&r), 4) - bleu_n(&c2, std::slice::from_ref(&r2), 4)).abs() < 1e-9);
            prop_assert!((rouge_l_f1(&c, &r) - rouge_l_f1(&c2, &r2)).abs() < 1e-9);
        }

        #[test]
        fn rouge_and_chrf_perfect_iff_equal(c in sentence(), r in sentence()) {
            prop_assume!(!c.is_empty() && !r.is_empty());
            let rouge = rouge_l_f1(&c, &r);
            prop_assert_eq!((rouge - 100.0).abs() < 1e-9, c == r);
            let (cs, rs) = (c.join(" "), r.join(" "));
            let chrf_perfect = (chrf_default(&cs, &rs) - 100.0).abs() < 1e-9;
            prop_assert_eq!(chrf_perfect, cs.replace(' ', "") == rs.replace(' ', ""));
        }

        #[test]
        fn perplexity_at_least_one(lp in prop::collection::vec(-20.0f64..=0.0, 1..20)) {
            prop_assert!(perplexity(&lp).unwrap() >= 1.0);
        }
    }
}
