#![allow(dead_code)]

use std::collections::HashSet;

use memext::provider::{NGramModel, PieceTokenizer, ReferenceProvider, Tokenizer};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense log-softmax with temperature and top-k masking, written directly
/// from the definition: tokens ranked by (logit desc, id asc), only the first
/// k kept, renormalised.
pub fn dense_logprob(logits: &[f64], target: usize, temperature: f64, top_k: Option<usize>) -> f64 {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap().then(a.cmp(&b)));
    let keep = top_k.unwrap_or(logits.len()).min(logits.len());
    let kept = &order[..keep];
    if !kept.contains(&target) {
        return f64::NEG_INFINITY;
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let max = kept.iter().map(|&i| scaled[i]).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = kept.iter().map(|&i| (scaled[i] - max).exp()).sum();
    scaled[target] - max - z.ln()
}

/// Dense probability vector after temperature + top-k (zeros outside the top k).
pub fn dense_distribution(logits: &[f64], temperature: f64, top_k: Option<usize>) -> Vec<f64> {
    (0..logits.len())
        .map(|t| dense_logprob(logits, t, temperature, top_k).exp())
        .collect()
}

/// Chain-rule suffix log-probability straight from the model's table.
pub fn dense_chain(model: &NGramModel, tokens: &[u32], prefix_len: usize, temperature: f64, top_k: Option<usize>) -> f64 {
    let mut total = 0.0;
    for i in prefix_len..tokens.len() {
        let logits = model.next_token_logits(&tokens[..i]);
        let lp = dense_logprob(&logits, tokens[i] as usize, temperature, top_k);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        total += lp;
    }
    total
}

/// Random n-gram model: some contexts trained from random text, others given
/// explicit peaked weights, the rest uniform.
pub fn random_model(rng: &mut ChaCha8Rng, vocab: usize, order: usize) -> NGramModel {
    let mut m = NGramModel::new(order, vocab, rng.random_range(0.01..0.5)).unwrap();
    for _ in 0..rng.random_range(1..4) {
        let len = rng.random_range(2..40);
        let seq: Vec<u32> = (0..len).map(|_| rng.random_range(0..vocab as u32)).collect();
        m.observe(&seq).unwrap();
    }
    for _ in 0..rng.random_range(0..vocab.min(20) + 1) {
        let clen = rng.random_range(0..order);
        let ctx: Vec<u32> = (0..clen).map(|_| rng.random_range(0..vocab as u32)).collect();
        let sharp = rng.random_range(0.5..4.0);
        let mut w: Vec<f64> = (0..vocab).map(|_| (sharp * rng.random::<f64>() * 3.0).exp()).collect();
        if rng.random_bool(0.3) {
            // exact ties exercise the id tie-break
            let a = rng.random_range(0..vocab);
            let b = rng.random_range(0..vocab);
            w[b] = w[a];
        }
        m.set_weights(&ctx, &w).unwrap();
    }
    m
}

#[derive(Debug, Clone)]
pub struct ScoringCase {
    pub model_index: usize,
    pub tokens: Vec<u32>,
    pub prefix_len: usize,
    pub temperature: f64,
    pub top_k: Option<usize>,
    pub top_m: usize,
}

/// `models.len() * per_model` scoring cases: vocab <= 64, suffix <= 8.
pub fn scoring_cases(seed: u64, models: usize, per_model: usize) -> (Vec<NGramModel>, Vec<ScoringCase>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ms = Vec::new();
    let mut cases = Vec::new();
    for mi in 0..models {
        let vocab = rng.random_range(2..=64);
        let order = rng.random_range(1..=3);
        let model = random_model(&mut rng, vocab, order);
        for _ in 0..per_model {
            let prefix_len = rng.random_range(1..=6);
            let suffix_len = rng.random_range(1..=8);
            let tokens: Vec<u32> = (0..prefix_len + suffix_len)
                .map(|_| rng.random_range(0..vocab as u32))
                .collect();
            let temperature = *[1.0, 1.0, 0.5, 0.7, 1.3, 2.0].choose(&mut rng).unwrap();
            let top_k = if rng.random_bool(0.25) {
                None
            } else {
                Some(rng.random_range(1..=vocab))
            };
            let top_m = match top_k {
                Some(k) => rng.random_range(k..=vocab),
                None => rng.random_range(1..=vocab),
            };
            cases.push(ScoringCase {
                model_index: mi,
                tokens,
                prefix_len,
                temperature,
                top_k,
                top_m,
            });
        }
        ms.push(model);
    }
    (ms, cases)
}

/// Synthetic book whose consecutive word pairs are all distinct, so an
/// order-3 model trained on it once reproduces it deterministically.
pub struct SyntheticBook {
    pub tokenizer: PieceTokenizer,
    pub chapters: Vec<Vec<u32>>,
    /// Ground-truth text: chapters joined by `\n\nCHAPTER <N>\n` headers.
    pub text: String,
    /// Ground-truth token ids (no BOS/EOS).
    pub tokens: Vec<u32>,
    /// Training sequence: BOS, chapters separated by EOS + header, final EOS.
    pub training: Vec<u32>,
}

const HEADERS: [&str; 17] = [
    "ONE", "TWO", "THREE", "FOUR", "FIVE", "SIX", "SEVEN", "EIGHT", "NINE", "TEN", "ELEVEN", "TWELVE", "THIRTEEN",
    "FOURTEEN", "FIFTEEN", "SIXTEEN", "SEVENTEEN",
];

pub fn synthetic_book(seed: u64, total_words: usize, n_chapters: usize, vocab_words: usize) -> SyntheticBook {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let consonants = b"bdfgklmnprstvz";
    let vowels = b"aeiou";
    let mut words = HashSet::new();
    while words.len() < vocab_words {
        let w: String = (0..3)
            .flat_map(|_| {
                [
                    *consonants.choose(&mut rng).unwrap() as char,
                    *vowels.choose(&mut rng).unwrap() as char,
                ]
            })
            .collect();
        words.insert(w);
    }
    let mut words: Vec<String> = words.into_iter().collect();
    words.sort();
    let mut pieces: Vec<String> = words.iter().map(|w| format!(" {w}")).collect();
    pieces.extend(["\n\n".to_string(), "\n".to_string(), "CHAPTER".to_string()]);
    pieces.extend(HEADERS.iter().map(|h| format!(" {h}")));
    let tokenizer = PieceTokenizer::with_pieces(pieces).unwrap();
    let word_ids: Vec<u32> = words
        .iter()
        .map(|w| tokenizer.piece_id(&format!(" {w}")).unwrap())
        .collect();

    // random walk over unused word pairs
    let mut used = HashSet::new();
    let mut seq = vec![*word_ids.choose(&mut rng).unwrap()];
    while seq.len() < total_words {
        let prev = *seq.last().unwrap();
        let mut next = None;
        for _ in 0..64 {
            let w = *word_ids.choose(&mut rng).unwrap();
            if !used.contains(&(prev, w)) {
                next = Some(w);
                break;
            }
        }
        let w = next.unwrap_or_else(|| *word_ids.iter().find(|&&w| !used.contains(&(prev, w))).unwrap());
        used.insert((prev, w));
        seq.push(w);
    }

    // cut points with distinct chapter-opening words
    let per = total_words / n_chapters;
    let mut cuts = vec![0];
    for c in 1..n_chapters {
        let mut at = c * per;
        while cuts.iter().any(|&k| seq[k] == seq[at]) {
            at += 1;
        }
        cuts.push(at);
    }
    cuts.push(total_words);
    let chapters: Vec<Vec<u32>> = cuts.windows(2).map(|w| seq[w[0]..w[1]].to_vec()).collect();

    let mut text = String::new();
    let mut tokens = Vec::new();
    let mut training = vec![PieceTokenizer::BOS];
    for (i, ch) in chapters.iter().enumerate() {
        if i > 0 {
            let header = format!("\n\nCHAPTER {}\n", HEADERS[i]);
            let h = tokenizer.encode(&header);
            text.push_str(&header);
            tokens.extend(&h);
            training.push(PieceTokenizer::EOS);
            training.extend(&h);
        }
        text.push_str(&tokenizer.decode(ch).unwrap());
        tokens.extend(ch);
        training.extend(ch);
    }
    training.push(PieceTokenizer::EOS);
    assert_eq!(tokenizer.tokenize(&text).unwrap(), tokens);
    SyntheticBook {
        tokenizer,
        chapters,
        text,
        tokens,
        training,
    }
}

impl SyntheticBook {
    pub fn provider(&self, alpha: f64) -> ReferenceProvider {
        let mut model = NGramModel::new(3, self.tokenizer.vocab_size(), alpha).unwrap();
        model.observe(&self.training).unwrap();
        ReferenceProvider::new(model, self.tokenizer.clone()).unwrap()
    }
}
