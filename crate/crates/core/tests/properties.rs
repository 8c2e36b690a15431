mod common;

use common::{dense_distribution, dense_logprob};
use memext::analysis::{heatmap, merge_spans, HeatmapSeries, ScoredExample};
use memext::corpus::BookDocument;
use memext::logit::{conditional_token_logprob, sequence_score, DecodingConfig, LogitRow};
use memext::metric::{n_for_p, prob_at_n};
use memext::provider::{NGramModel, Provider, ReferenceProvider, ScoreRequest};
use proptest::prelude::*;

fn logits(max_vocab: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-8.0f64..8.0, 2..=max_vocab)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn truncated_distribution_sums_to_one(l in logits(64), t in 0.2f64..3.0, k in 1usize..70) {
        let k = k.min(l.len());
        let total: f64 = (0..l.len())
            .map(|tok| {
                let row = LogitRow::from_dense(&l, tok as u32, t, l.len()).unwrap();
                conditional_token_logprob(&row, &DecodingConfig::new(t, Some(k)).unwrap()).unwrap().exp()
            })
            .sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "sum = {}", total);
    }

    #[test]
    fn sparse_row_matches_dense_softmax(l in logits(64), t in 0.2f64..3.0, k in prop::option::of(1usize..70), target in 0usize..64) {
        let target = target % l.len();
        let k = k.map(|k| k.min(l.len()));
        let row = LogitRow::from_dense(&l, target as u32, t, k.unwrap_or(l.len())).unwrap();
        let got = conditional_token_logprob(&row, &DecodingConfig::new(t, k).unwrap()).unwrap();
        let want = dense_logprob(&l, target, t, k);
        prop_assert!(got == want || (got - want).abs() <= 1e-12, "{} vs {}", got, want);
    }

    #[test]
    fn low_temperature_concentrates_on_argmax(l in logits(32)) {
        let mut sorted = l.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(sorted[0] - sorted[1] > 0.05);
        let best = l.iter().position(|&x| x == sorted[0]).unwrap();
        let mut prev = 0.0;
        for t in [1.0, 0.5, 0.1, 0.01] {
            let p = dense_distribution(&l, t, None)[best];
            let row = LogitRow::from_dense(&l, best as u32, t, 4.min(l.len())).unwrap();
            let sparse = sequence_score(&[row], &DecodingConfig::new(t, None).unwrap()).unwrap().prob;
            prop_assert!((sparse - p).abs() <= 1e-12);
            prop_assert!(sparse >= prev - 1e-15);
            prev = sparse;
        }
        prop_assert!(prev > 0.99);
    }

    #[test]
    fn log_space_agrees_with_naive_product(ps in prop::collection::vec(0.05f64..1.0, 1..40)) {
        let rows: Vec<LogitRow> = ps
            .iter()
            .map(|&p| {
                let l = [p.ln(), (1.0 - p).max(1e-300).ln()];
                LogitRow::from_dense(&l, 0, 1.0, 2).unwrap()
            })
            .collect();
        let s = sequence_score(&rows, &DecodingConfig::new(1.0, None).unwrap()).unwrap();
        let naive: f64 = ps.iter().product();
        prop_assert!((s.prob - naive).abs() <= 1e-9 * naive.max(1e-300) + 1e-300);
        prop_assert!((s.logprob - naive.ln()).abs() <= 1e-9);
    }

    #[test]
    fn permuting_a_memorized_suffix_lowers_p_z(perm in Just((0u32..40).collect::<Vec<u32>>()).prop_shuffle(), i in 10usize..39, j in 10usize..39) {
        prop_assume!(perm[i] != perm[j]);
        let mut model = NGramModel::new(3, 40, 1e-3).unwrap();
        model.observe(&perm).unwrap();
        let provider = ReferenceProvider::scoring_only(model);
        let cfg = DecodingConfig::new(1.0, None).unwrap();
        let score = |toks: Vec<u32>| {
            let rows = provider.score_positions(&ScoreRequest::for_split(toks, 10, 1.0, 40)).unwrap();
            sequence_score(&rows, &cfg).unwrap().logprob
        };
        let mut swapped = perm.clone();
        swapped.swap(i, j);
        prop_assert!(score(perm) > score(swapped));
    }

    #[test]
    fn prob_at_n_monotone(p in 0.0f64..=1.0, n in 1u64..1_000_000) {
        let a = prob_at_n(p, n);
        let b = prob_at_n(p, n + 1);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a);
        prop_assert!(a >= p - 1e-15);
    }

    #[test]
    fn n_for_p_is_minimal(pz in 1e-4f64..1.0, p in 0.01f64..0.999) {
        let n = n_for_p(pz, p).unwrap();
        prop_assert!(prob_at_n(pz, n) >= p);
        prop_assert!(n == 1 || prob_at_n(pz, n - 1) < p);
    }
}

fn scored(max_len: usize) -> impl Strategy<Value = (usize, Vec<ScoredExample>)> {
    (10usize..max_len).prop_flat_map(|n| {
        let ex = (0..n, 1usize..40, 0.0f64..1.0, 0usize..40).prop_map(move |(a, len, p, s)| {
            let b = (a + len).min(n);
            ScoredExample {
                doc_id: "d".into(),
                char_start: a,
                char_end: b,
                suffix_char_start: (a + s).min(b),
                prob: p,
            }
        });
        (Just(n), prop::collection::vec(ex, 0..30))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn merge_is_order_independent((_n, mut xs) in scored(200), t in 0.0f64..1.0, seed in any::<u64>()) {
        let a = merge_spans(&xs, t);
        // deterministic shuffle
        let len = xs.len();
        for i in (1..len).rev() {
            let j = (seed.wrapping_mul(i as u64 + 7).rotate_left(13) % (i as u64 + 1)) as usize;
            xs.swap(i, j);
        }
        let b = merge_spans(&xs, t);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.windows(2).all(|w| w[0].char_end < w[1].char_start));
        let kept = xs.iter().filter(|s| s.prob >= t && s.char_start < s.char_end).count();
        prop_assert_eq!(a.iter().map(|s| s.example_count).sum::<usize>(), kept);
    }

    #[test]
    fn heatmap_csv_round_trip((n, xs) in scored(200)) {
        let doc = BookDocument::new("d", "y".repeat(n)).unwrap();
        let h = heatmap(&xs, &doc);
        prop_assert_eq!(h.to_dense().len(), n);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let back = HeatmapSeries::read_csv("d", std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back.to_dense(), h.to_dense());
        prop_assert!(h.runs.windows(2).all(|w| w[0].end == w[1].start && w[0].value != w[1].value));
    }
}
