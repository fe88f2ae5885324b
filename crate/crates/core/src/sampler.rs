//! Sampling probabilities and batch selection.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;

use crate::{Error, Result};

/// Floor applied to probabilities that would otherwise be zero.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    pub pi: Vec<f64>,
    pub target_b: usize,
}

impl ProbabilityVector {
    pub fn uniform(p: usize, b: usize) -> Result<Self> {
        check_batch(b, p)?;
        Ok(Self {
            pi: vec![b as f64 / p as f64; p],
            target_b: b,
        })
    }

    pub fn full(p: usize) -> Self {
        Self {
            pi: vec![1.0; p],
            target_b: p,
        }
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

/// A realized index set together with the probabilities it was drawn with.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Sorted, distinct component indices.
    pub indices: Vec<usize>,
    pub pi: ProbabilityVector,
}

impl Batch {
    pub fn full(p: usize) -> Self {
        Self {
            indices: (0..p).collect(),
            pi: ProbabilityVector::full(p),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

fn check_batch(b: usize, p: usize) -> Result<()> {
    if b == 0 || b > p {
        return Err(Error::BatchSizeOutOfRange { batch: b, count: p });
    }
    Ok(())
}

/// Indices ordered by `(|d_i|, i)` ascending.
fn ascending_order(d: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| {
        d[a].abs()
            .partial_cmp(&d[b].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Probabilities minimizing `Σ (1/π_i − 1) d_i²` subject to `Σ π_i = b` and
/// `0 < π_i ≤ 1`.
///
/// The `p − c` largest errors are sampled with certainty and the remaining
/// probabilities are proportional to `|d_i|`, where `c` is the largest
/// integer with `0 < b + c − p ≤ Σ_{j≤c} |d_(j)| / |d_(c)|`.
pub fn optimal_probabilities(d: &[f64], b: usize) -> Result<ProbabilityVector> {
    let p = d.len();
    check_batch(b, p)?;
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("d", "entries must be finite"));
    }
    let order = ascending_order(d);
    let sorted: Vec<f64> = order.iter().map(|&i| d[i].abs()).collect();
    let mut prefix = vec![0.0; p + 1];
    for (k, v) in sorted.iter().enumerate() {
        prefix[k + 1] = prefix[k] + v;
    }

    let mut pi = vec![1.0; p];
    for c in (1..=p).rev() {
        let t = (b + c) as f64 - p as f64;
        if t <= 0.0 {
            break;
        }
        let sum = prefix[c];
        let largest = sorted[c - 1];
        let ratio = if largest > 0.0 { sum / largest } else { f64::INFINITY };
        if t > ratio * (1.0 + 1e-12) {
            continue;
        }
        if sum > 0.0 {
            for k in 0..c {
                pi[order[k]] = t * sorted[k] / sum;
            }
        } else {
            for &i in &order[..c] {
                pi[i] = t / c as f64;
            }
        }
        break;
    }
    for v in &mut pi {
        *v = v.clamp(PROBABILITY_FLOOR, 1.0);
    }
    Ok(ProbabilityVector { pi, target_b: b })
}

/// Includes each index independently with probability `π_i`.
pub fn independent_sample<R: Rng + ?Sized>(pi: &ProbabilityVector, rng: &mut R) -> Vec<usize> {
    pi.pi
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| (rng.random::<f64>() < p).then_some(i))
        .collect()
}

/// Coerces an independent sample to exactly `b` indices: missing slots are
/// filled with the largest unsampled errors, surplus indices with the smallest
/// errors are dropped.
pub fn coerce_to_size(d: &[f64], sampled: &[usize], b: usize) -> Vec<usize> {
    let order = ascending_order(d);
    let mut chosen = vec![false; d.len()];
    for &i in sampled {
        chosen[i] = true;
    }
    let mut count = sampled.len();
    for &i in order.iter().rev() {
        if count >= b {
            break;
        }
        if !chosen[i] {
            chosen[i] = true;
            count += 1;
        }
    }
    for &i in &order {
        if count <= b {
            break;
        }
        if chosen[i] {
            chosen[i] = false;
            count -= 1;
        }
    }
    (0..d.len()).filter(|&i| chosen[i]).collect()
}

/// Draws a batch of exactly `b` components guided by the errors `d`.
pub fn fixed_size_batch<R: Rng + ?Sized>(d: &[f64], b: usize, rng: &mut R) -> Result<Batch> {
    let pi = optimal_probabilities(d, b)?;
    let sampled = independent_sample(&pi, rng);
    Ok(Batch {
        indices: coerce_to_size(d, &sampled, b),
        pi,
    })
}

/// Uniformly random subset of size `b` with `π_i = b/p`.
pub fn uniform_batch<R: Rng + ?Sized>(p: usize, b: usize, rng: &mut R) -> Result<Batch> {
    let pi = ProbabilityVector::uniform(p, b)?;
    let mut indices = index::sample(rng, p, b).into_vec();
    indices.sort_unstable();
    Ok(Batch { indices, pi })
}

/// `Σ (1/π_i − 1) d_i²`, the variance of the ameliorated estimate under
/// independent sampling with errors `d`.
pub fn variance_upper_bound(d: &[f64], pi: &ProbabilityVector) -> f64 {
    d.iter()
        .zip(&pi.pi)
        .map(|(d, p)| (1.0 / p - 1.0) * d * d)
        .sum()
}

/// `Σ_{i,j} (π_ij / (π_i π_j) − 1) d_i d_j` for a general sampling design with
/// pairwise inclusion probabilities `pi_pair`.
pub fn variance_general(d: &[f64], pi: &[f64], pi_pair: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            total += (pi_pair[i][j] / (pi[i] * pi[j]) - 1.0) * d[i] * d[j];
        }
    }
    total
}

/// Grows the batch size in steps of `r` until the variance bound drops below
/// `(1 − pi_prob) C² Δ⁴` or the batch covers every component.
pub fn dynamic_batch<R: Rng + ?Sized>(
    d: &[f64],
    r: usize,
    radius: f64,
    accuracy: f64,
    pi_prob: f64,
    rng: &mut R,
) -> Result<Batch> {
    let p = d.len();
    check_batch(r, p)?;
    if !(accuracy > 0.0) {
        return Err(Error::invalid("C", "must be positive"));
    }
    if !(pi_prob > 0.5 && pi_prob < 1.0) {
        return Err(Error::invalid("pi_prob", "must lie in (1/2, 1)"));
    }
    if !(radius > 0.0) {
        return Err(Error::invalid("radius", "must be positive"));
    }
    let threshold = (1.0 - pi_prob) * accuracy * accuracy * radius.powi(4);
    let mut b = r;
    loop {
        let batch = fixed_size_batch(d, b, rng)?;
        if b == p || variance_upper_bound(d, &batch.pi) <= threshold {
            return Ok(batch);
        }
        b = (b + r).min(p);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Upper,
    Lower,
}

/// Chernoff bound on the probability that a sum of independent Bernoulli
/// trials with mean `b` deviates by a factor `δ` in the given direction.
pub fn chernoff_upper(b: f64, delta: f64, tail: Tail) -> Result<f64> {
    match tail {
        Tail::Upper if delta > 0.0 => Ok((-b * delta * delta / (2.0 + delta)).exp()),
        Tail::Lower if delta > 0.0 && delta < 1.0 => Ok((-b * delta * delta / 2.0).exp()),
        _ => Err(Error::invalid("delta", "outside the domain of the bound")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    /// Minimizes the variance bound by bisection on the multiplier of the
    /// budget constraint: `π_i(λ) = min(1, |d_i| / √λ)`.
    fn kkt_oracle(d: &[f64], b: usize) -> Vec<f64> {
        let pi_of = |mu: f64| -> Vec<f64> { d.iter().map(|v| (v.abs() * mu).min(1.0)).collect() };
        let nonzero = d.iter().filter(|v| **v != 0.0).count();
        if nonzero <= b {
            // Every nonzero error is taken with certainty; zero errors share
            // the rest of the budget.
            let rest = ((b - nonzero) as f64 / (d.len() - nonzero).max(1) as f64)
                .max(PROBABILITY_FLOOR);
            return d.iter().map(|v| if *v != 0.0 { 1.0 } else { rest }).collect();
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while pi_of(hi).iter().sum::<f64>() < b as f64 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if pi_of(mid).iter().sum::<f64>() < b as f64 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        pi_of(hi).into_iter().map(|v| v.max(PROBABILITY_FLOOR)).collect()
    }

    #[test]
    fn equal_errors_give_uniform() {
        for b in 1..=5 {
            let pi = optimal_probabilities(&[2.0; 5], b).unwrap();
            assert!(close(&pi.pi, &[b as f64 / 5.0; 5]));
        }
    }

    #[test]
    fn full_budget_gives_certainty() {
        let pi = optimal_probabilities(&[0.0, 3.0, 1.0, 1e-9], 4).unwrap();
        assert_eq!(pi.pi, vec![1.0; 4]);
    }

    #[test]
    fn spec_examples() {
        let pi = optimal_probabilities(&[1.0, 2.0, 3.0], 2).unwrap();
        assert!(close(&pi.pi, &[1.0 / 3.0, 2.0 / 3.0, 1.0]));
        assert!(close(&pi.pi, &kkt_oracle(&[1.0, 2.0, 3.0], 2)));
        let pi = optimal_probabilities(&[1.0, 1.0, 10.0], 2).unwrap();
        assert!(close(&pi.pi, &[0.5, 0.5, 1.0]));
        assert!(close(&pi.pi, &kkt_oracle(&[1.0, 1.0, 10.0], 2)));
    }

    #[test]
    fn zero_errors_are_floored() {
        let pi = optimal_probabilities(&[0.0, 0.0, 5.0, 0.0], 1).unwrap();
        assert_eq!(pi.pi[2], 1.0);
        assert!(pi.pi.iter().all(|&v| v >= PROBABILITY_FLOOR));
        let pi = optimal_probabilities(&[0.0; 4], 2).unwrap();
        assert!(close(&pi.pi, &[0.5; 4]));
    }

    #[test]
    fn rejects_bad_batch() {
        assert!(optimal_probabilities(&[1.0, 2.0], 0).is_err());
        assert!(optimal_probabilities(&[1.0, 2.0], 3).is_err());
        assert!(optimal_probabilities(&[1.0, f64::NAN], 1).is_err());
    }

    #[test]
    fn independent_sample_extremes() {
        let mut rng = rng::stream(1, "t");
        assert_eq!(
            independent_sample(&ProbabilityVector::full(4), &mut rng),
            vec![0, 1, 2, 3]
        );
        let tiny = ProbabilityVector {
            pi: vec![PROBABILITY_FLOOR; 50],
            target_b: 1,
        };
        assert!(independent_sample(&tiny, &mut rng).is_empty());
    }

    #[test]
    fn inclusion_frequencies() {
        let mut rng = rng::stream(2, "freq");
        let pi = ProbabilityVector {
            pi: vec![0.1, 0.5, 0.9],
            target_b: 1,
        };
        let draws = 100_000;
        let mut hits = [0usize; 3];
        for _ in 0..draws {
            for i in independent_sample(&pi, &mut rng) {
                hits[i] += 1;
            }
        }
        for (h, p) in hits.iter().zip(&pi.pi) {
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((*h as f64 / draws as f64 - p).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn coercion_traces() {
        let d = [1.0, 2.0, 3.0];
        assert_eq!(coerce_to_size(&d, &[0], 2), vec![0, 2]);
        assert_eq!(coerce_to_size(&d, &[0, 1, 2], 2), vec![1, 2]);
        assert_eq!(coerce_to_size(&d, &[], 3), vec![0, 1, 2]);
        let mut rng = rng::stream(3, "full");
        assert_eq!(fixed_size_batch(&d, 3, &mut rng).unwrap().indices, vec![0, 1, 2]);
    }

    #[test]
    fn variance_examples() {
        let d = [1.0, 1.0, 10.0];
        assert_eq!(variance_upper_bound(&d, &ProbabilityVector::full(3)), 0.0);
        let pi = ProbabilityVector {
            pi: vec![0.5, 0.5, 1.0],
            target_b: 2,
        };
        assert_eq!(variance_upper_bound(&d, &pi), 2.0);
        assert_eq!(variance_upper_bound(&[0.0; 3], &pi), 0.0);
        let pair = vec![vec![1.0; 3]; 3];
        assert_eq!(variance_general(&d, &[1.0; 3], &pair), 0.0);
    }

    #[test]
    fn dynamic_batch_examples() {
        let mut rng = rng::stream(4, "dyn");
        let b = dynamic_batch(&[0.0; 8], 3, 1.0, 1.0, 0.99, &mut rng).unwrap();
        assert_eq!(b.len(), 3);
        let b = dynamic_batch(&[1e6; 8], 3, 1.0, 1.0, 0.99, &mut rng).unwrap();
        assert_eq!(b.len(), 8);
        let b = dynamic_batch(&[1e-3; 8], 2, 1.0, 1.0, 0.99, &mut rng).unwrap();
        assert_eq!(b.len(), 2);
        assert!(dynamic_batch(&[1.0; 8], 2, 1.0, 1.0, 0.4, &mut rng).is_err());
    }

    #[test]
    fn chernoff_values() {
        let up = chernoff_upper(16.0, 1.0, Tail::Upper).unwrap();
        assert!((up - (-16.0f64 / 3.0).exp()).abs() < 1e-15);
        assert!((up - 4.83e-3).abs() < 1e-5);
        let low = chernoff_upper(16.0, 0.5, Tail::Lower).unwrap();
        assert!((low - 0.1353).abs() < 1e-4);
        assert!((chernoff_upper(16.0, 1e-9, Tail::Upper).unwrap() - 1.0).abs() < 1e-12);
        assert!(chernoff_upper(16.0, 1.5, Tail::Lower).is_err());
        assert!(chernoff_upper(16.0, 0.0, Tail::Upper).is_err());
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<f64>, usize)> {
        (1usize..=8).prop_flat_map(|p| {
            (
                proptest::collection::vec(
                    prop_oneof![Just(0.0), 0.0..10.0f64, 0.0..1e-3f64],
                    p,
                ),
                1..=p,
            )
        })
    }

    proptest! {
        #[test]
        fn budget_and_range((d, b) in arb_instance()) {
            let pi = optimal_probabilities(&d, b).unwrap();
            let sum: f64 = pi.pi.iter().sum();
            prop_assert!((sum - b as f64).abs() <= 1e-9 + d.len() as f64 * PROBABILITY_FLOOR);
            prop_assert!(pi.pi.iter().all(|&v| v > 0.0 && v <= 1.0));
            let mut rng = rng::stream(b as u64, "budget");
            prop_assert_eq!(fixed_size_batch(&d, b, &mut rng).unwrap().len(), b);
        }

        #[test]
        fn matches_kkt_oracle((d, b) in arb_instance()) {
            let pi = optimal_probabilities(&d, b).unwrap();
            let ours = variance_upper_bound(&d, &pi);
            let oracle = ProbabilityVector { pi: kkt_oracle(&d, b), target_b: b };
            let theirs = variance_upper_bound(&d, &oracle);
            prop_assert!(ours <= theirs * (1.0 + 1e-6) + 1e-9);
        }

        #[test]
        fn scale_invariance((d, b) in arb_instance(), alpha in 1e-3..1e3f64) {
            let scaled: Vec<f64> = d.iter().map(|v| v * alpha).collect();
            let a = optimal_probabilities(&d, b).unwrap();
            let s = optimal_probabilities(&scaled, b).unwrap();
            for (x, y) in a.pi.iter().zip(&s.pi) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn largest_error_has_largest_probability((d, b) in arb_instance()) {
            let pi = optimal_probabilities(&d, b).unwrap();
            let top = d.iter().cloned().fold(0.0, f64::max);
            let best = pi.pi.iter().cloned().fold(0.0, f64::max);
            for (v, p) in d.iter().zip(&pi.pi) {
                if *v == top {
                    prop_assert!(*p >= best - 1e-15);
                }
            }
        }

        #[test]
        fn general_variance_specializes(
            d in proptest::collection::vec(-5.0..5.0f64, 1..6),
            raw in proptest::collection::vec(0.05..1.0f64, 6),
        ) {
            let p = d.len();
            let pi: Vec<f64> = raw[..p].to_vec();
            let pair: Vec<Vec<f64>> = (0..p)
                .map(|i| (0..p).map(|j| if i == j { pi[i] } else { pi[i] * pi[j] }).collect())
                .collect();
            let general = variance_general(&d, &pi, &pair);
            let pv = ProbabilityVector { pi, target_b: 1 };
            prop_assert!((general - variance_upper_bound(&d, &pv)).abs() <= 1e-10 * general.abs().max(1.0));
        }
    }
}
