//! (n, p)-discoverable extraction algebra and extraction-rate aggregation.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::logit::SuffixScore;
use crate::par;

/// Thresholds used for rate and coverage reports unless overridden.
pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.75, 0.5, 0.1, 0.01, 1e-4];

/// A query budget `n` and a target success probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpQuery {
    pub n: u64,
    pub p: f64,
}

impl NpQuery {
    pub fn new(n: u64, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("p must lie in (0, 1), got {p}")));
        }
        Ok(Self { n, p })
    }

    /// Whether an example with single-attempt probability `p_z` is
    /// (n, p)-discoverably extractable.
    pub fn is_extractable(&self, p_z: f64) -> bool {
        prob_at_n(p_z, self.n) >= self.p
    }
}

/// Probability of at least one verbatim hit in `n` independent attempts:
/// `1 - (1 - p_z)^n`, evaluated through `ln_1p`/`exp_m1`.
pub fn prob_at_n(p_z: f64, n: u64) -> f64 {
    if p_z <= 0.0 || n == 0 {
        return 0.0;
    }
    if p_z >= 1.0 {
        return 1.0;
    }
    -((n as f64) * (-p_z).ln_1p()).exp_m1()
}

/// Smallest `n` with `prob_at_n(p_z, n) >= p`.
pub fn n_for_p(p_z: f64, p: f64) -> Result<u64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("p must lie in (0, 1), got {p}")));
    }
    if !(0.0..=1.0).contains(&p_z) {
        return Err(Error::invalid(format!("p_z must lie in [0, 1], got {p_z}")));
    }
    if p_z == 0.0 {
        return Err(Error::Unextractable);
    }
    if p_z == 1.0 {
        return Ok(1);
    }
    let estimate = ((-p).ln_1p() / (-p_z).ln_1p()).ceil();
    if estimate.is_nan() || estimate >= u64::MAX as f64 {
        return Err(Error::QueryBudgetOverflow { p_z, p });
    }
    let mut n = (estimate as u64).max(1);
    // ceil() of a rounded quotient can land one off in either direction.
    while prob_at_n(p_z, n) < p {
        n = n.checked_add(1).ok_or(Error::QueryBudgetOverflow { p_z, p })?;
    }
    while n > 1 && prob_at_n(p_z, n - 1) >= p {
        n -= 1;
    }
    Ok(n)
}

/// Expected number of attempts until the first verbatim hit.
pub fn expected_queries(p_z: f64) -> Result<f64> {
    if p_z <= 0.0 {
        return Err(Error::Unextractable);
    }
    if p_z > 1.0 {
        return Err(Error::invalid(format!("p_z must lie in [0, 1], got {p_z}")));
    }
    Ok(1.0 / p_z)
}

/// Ordered `threshold -> value` pairs. Serialises as a JSON object whose keys
/// are the thresholds in shortest round-trip decimal form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThresholdMap(pub Vec<(f64, f64)>);

impl ThresholdMap {
    pub fn get(&self, threshold: f64) -> Option<f64> {
        self.0.iter().find(|(t, _)| *t == threshold).map(|&(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.0.iter()
    }
}

impl Serialize for ThresholdMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (t, v) in &self.0 {
            map.serialize_entry(&t.to_string(), v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ThresholdMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ThresholdMap;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from threshold to value")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, f64>()? {
                    let t = k.parse::<f64>().map_err(serde::de::Error::custom)?;
                    out.push((t, v));
                }
                Ok(ThresholdMap(out))
            }
        }
        deserializer.deserialize_map(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub total_examples: usize,
    /// Fraction of examples whose suffix is the greedy continuation.
    pub greedy_rate: f64,
    /// Fraction with sampling `p_z >= threshold`.
    pub rate_at_thresholds: ThresholdMap,
    /// Fraction with sampling `p_z > 0`.
    pub max_rate: f64,
}

/// Pairs of (sampling score, greedy score) for the same example.
pub fn aggregate_rates(scores: &[(SuffixScore, SuffixScore)], thresholds: &[f64]) -> Result<RateReport> {
    let pairs: Vec<(f64, f64)> = scores.iter().map(|(s, g)| (s.prob, g.prob)).collect();
    aggregate_probs(&pairs, thresholds)
}

/// As [`aggregate_rates`], on bare `(sampling p_z, greedy p)` pairs.
pub fn aggregate_probs(pairs: &[(f64, f64)], thresholds: &[f64]) -> Result<RateReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no scores to aggregate"));
    }
    let total = pairs.len();
    let frac = |count: usize| count as f64 / total as f64;
    let greedy = pairs.iter().filter(|(_, g)| *g == 1.0).count();
    let nonzero = pairs.iter().filter(|(s, _)| *s > 0.0).count();
    let at = thresholds
        .iter()
        .map(|&t| (t, frac(pairs.iter().filter(|(s, _)| *s >= t).count())))
        .collect();
    Ok(RateReport {
        total_examples: total,
        greedy_rate: frac(greedy),
        rate_at_thresholds: ThresholdMap(at),
        max_rate: frac(nonzero),
    })
}

/// Extraction rate as a function of the query budget: for each `n`, the
/// fraction of examples that are (n, p)-discoverably extractable.
pub fn rate_curve(probs: &[f64], p: f64, ns: &[u64]) -> Result<Vec<(u64, f64)>> {
    if probs.is_empty() {
        return Err(Error::EmptyInput("no scores for rate curve"));
    }
    ns.iter()
        .map(|&n| {
            let q = NpQuery::new(n, p)?;
            let hits = probs.iter().filter(|&&pz| q.is_extractable(pz)).count();
            Ok((n, hits as f64 / probs.len() as f64))
        })
        .collect()
}

/// Simulates independent extraction attempts against every example and
/// reports, at each checkpoint `n`, how many distinct examples have been
/// produced verbatim at least once.
///
/// Each example's first-hit attempt is drawn from a geometric distribution on
/// its own ChaCha stream, so results do not depend on thread scheduling.
/// Probabilities may be arbitrarily small.
pub fn simulate_repeated_extraction(probs: &[f64], checkpoints: &[u64], seed: u64) -> Result<Vec<(u64, usize)>> {
    if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("probability {bad} outside [0, 1]")));
    }
    let first_hit: Vec<Option<u64>> = par::map_range(probs.len(), |i| {
        let p = probs[i];
        if p == 0.0 {
            return None;
        }
        if p == 1.0 {
            return Some(1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        // inverse CDF of the failure count; ln_1p keeps p far below 1e-16 exact
        let u: f64 = 1.0 - rng.random::<f64>();
        let failures = (u.ln() / (-p).ln_1p()).floor();
        Some((failures as u64).saturating_add(1))
    });
    Ok(checkpoints
        .iter()
        .map(|&n| (n, first_hit.iter().filter(|h| matches!(h, Some(a) if *a <= n)).count()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coin_flip_anchors() {
        assert!((prob_at_n(0.5, 2) - 0.75).abs() < 1e-12);
        assert!((prob_at_n(0.5, 10) - (1.0 - 1.0 / 1024.0)).abs() < 1e-12);
        assert_eq!(format!("{:.4}", prob_at_n(0.5, 10)), "0.9990");
        assert_eq!(prob_at_n(0.0, 1_000_000), 0.0);
        assert_eq!(prob_at_n(1.0, 1), 1.0);
    }

    #[test]
    fn n_for_p_examples() {
        assert_eq!(n_for_p(1.0, 0.999).unwrap(), 1);
        assert_eq!(n_for_p(0.5, 0.75).unwrap(), 2);
        assert!(matches!(n_for_p(0.0, 0.5), Err(Error::Unextractable)));
        assert!(n_for_p(0.5, 1.0).is_err());
    }

    #[test]
    fn n_for_p_matches_linear_scan() {
        let scan = |pz: f64, p: f64| (1u64..).find(|&n| prob_at_n(pz, n) >= p).unwrap();
        assert_eq!(scan(0.01, 0.5), 69);
        for &pz in &[0.01, 0.05, 0.2, 0.352, 0.5, 0.9] {
            for &p in &[0.1, 0.5, 0.75, 0.9, 0.99] {
                assert_eq!(n_for_p(pz, p).unwrap(), scan(pz, p), "pz={pz} p={p}");
            }
        }
    }

    #[test]
    fn n_for_p_overflow_reported() {
        assert!(matches!(
            n_for_p(1e-300, 0.5),
            Err(Error::QueryBudgetOverflow { .. })
        ));
    }

    #[test]
    fn expected_query_counts() {
        assert!((expected_queries(0.352).unwrap() - 2.840_909_090_909_091).abs() < 1e-12);
        assert_eq!(expected_queries(1.0).unwrap(), 1.0);
        assert!((expected_queries(0.016).unwrap() - 62.5).abs() < 1e-12);
        assert!(expected_queries(0.0).is_err());
    }

    #[test]
    fn direct_count_rates() {
        let pairs = [(0.0, 0.0), (0.2, 0.0), (0.0, 0.0), (1.0, 1.0)];
        let r = aggregate_probs(&pairs, &[1e-4]).unwrap();
        assert_eq!(r.max_rate, 0.5);
        assert_eq!(r.rate_at_thresholds.get(1e-4), Some(0.5));
        assert_eq!(r.greedy_rate, 0.25);
    }

    #[test]
    fn all_zero_rates() {
        let pairs = vec![(0.0, 0.0); 7];
        let r = aggregate_probs(&pairs, &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(r.max_rate, 0.0);
        assert_eq!(r.greedy_rate, 0.0);
        assert!(r.rate_at_thresholds.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn threshold_is_inclusive() {
        let r = aggregate_probs(&[(0.5, 0.0)], &[0.5]).unwrap();
        assert_eq!(r.rate_at_thresholds.get(0.5), Some(1.0));
    }

    #[test]
    fn empty_aggregate_errors() {
        assert!(aggregate_probs(&[], &[0.1]).is_err());
    }

    #[test]
    fn threshold_map_json_round_trip() {
        let m = ThresholdMap(vec![(0.75, 0.1), (1e-4, 0.25)]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"0.75":0.1,"0.0001":0.25}"#);
        let back: ThresholdMap = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rate_curve_is_monotone_in_n() {
        let probs = [0.0, 1e-3, 0.01, 0.3, 0.9];
        let curve = rate_curve(&probs, 0.5, &[1, 10, 100, 1000, 100_000]).unwrap();
        assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(curve.last().unwrap().1, 0.8);
    }

    #[test]
    fn simulation_handles_vanishing_probabilities() {
        let probs = [1e-300, 1e-17, 5e-324, 0.5];
        let sim = simulate_repeated_extraction(&probs, &[1, 1_000, u64::MAX], 9).unwrap();
        assert!(sim[1].1 == 1 && sim[2].1 >= 1);
    }

    #[test]
    fn first_hit_mean_matches_geometric() {
        let p = 0.01;
        let probs = vec![p; 20_000];
        let ns: Vec<u64> = (1..=400).collect();
        let sim = simulate_repeated_extraction(&probs, &ns, 4).unwrap();
        // P(first hit <= n) = 1 - (1-p)^n
        for &(n, hits) in sim.iter().step_by(50) {
            let expect = prob_at_n(p, n);
            let got = hits as f64 / probs.len() as f64;
            assert!((got - expect).abs() < 4.0 * (expect * (1.0 - expect) / 20_000.0).sqrt() + 1e-9, "n={n}: {got} vs {expect}");
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let probs = [0.0, 0.01, 0.5, 1.0];
        let a = simulate_repeated_extraction(&probs, &[1, 10, 1000], 7).unwrap();
        let b = simulate_repeated_extraction(&probs, &[1, 10, 1000], 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.last().unwrap().1, 3);
    }
}
