//! Synthetic reasoning traces with category-dependent scores, regime-switching
//! entropy and optional per-layer gradient norms.

use gogiskip_core::{FunctionalCategory, TokenRecord, Trace};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

const NUMERALS: &[&str] = &["0", "1", "2", "3", "7", "12", "42", "3.5", "100", "2024"];
const OPERATORS: &[&str] = &["+", "-", "=", "*", "/", "<", "^"];
const SYMBOLS: &[&str] = &["\\pi", "\\sqrt", "\\alpha", "(", ")", "\u{3b8}", "%"];
const FORMATTING: &[&str] = &["\n", "**", "##", "\n\n", "`"];
const CONNECTIVES: &[&str] = &["therefore", "so", "thus", "because", "then", "hence", "since", "next"];
const GENERAL: &[&str] = &["the", "we", "value", "need", "find", "number", "answer", "is", "of", "let", "x", "total"];

/// Category mix and median score multiplier.
const PROFILE: &[(FunctionalCategory, f64, f64)] = &[
    (FunctionalCategory::Numerals, 0.14, 2.0),
    (FunctionalCategory::Operators, 0.10, 1.6),
    (FunctionalCategory::Symbols, 0.06, 1.2),
    (FunctionalCategory::Formatting, 0.14, 0.35),
    (FunctionalCategory::Connectives, 0.08, 0.9),
    (FunctionalCategory::General, 0.48, 0.7),
];

fn vocabulary(c: FunctionalCategory) -> &'static [&'static str] {
    match c {
        FunctionalCategory::Numerals => NUMERALS,
        FunctionalCategory::Operators => OPERATORS,
        FunctionalCategory::Symbols => SYMBOLS,
        FunctionalCategory::Formatting => FORMATTING,
        FunctionalCategory::Connectives => CONNECTIVES,
        FunctionalCategory::General => GENERAL,
    }
}

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub mean_len: usize,
    pub layers: usize,
    /// Probability of a whitespace token between words.
    pub space_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { mean_len: 400, layers: 0, space_rate: 0.05 }
    }
}

/// Trace `index` of the corpus seeded by `seed`; each trace has its own stream.
pub fn synth_trace(seed: u64, index: usize, spec: &SynthSpec) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let lo = (spec.mean_len / 2).max(1);
    let hi = (spec.mean_len + spec.mean_len / 2).max(lo);
    let len = rng.gen_range(lo..=hi);

    let noise = LogNormal::new(0.0, 0.8).unwrap();
    let jitter = Normal::new(0.0, 0.25).unwrap();
    let layer_noise = LogNormal::new(0.0, 0.2).unwrap();
    let peak = 0.75 * spec.layers as f64;
    let width = (spec.layers as f64 / 4.0).max(1.0);

    let mut calm = true;
    let mut tokens = Vec::with_capacity(len);
    let mut layer_grads = Vec::with_capacity(len);
    for t in 0..len {
        if rng.gen_bool(0.04) {
            calm = !calm;
        }
        let level: f64 = if calm { 0.5 } else { 2.2 };
        let entropy = (level + jitter.sample(&mut rng) * level).max(0.0);

        let (text, mult) = if rng.gen_bool(spec.space_rate) {
            (" ", 0.05)
        } else {
            let r: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = PROFILE[PROFILE.len() - 1];
            for &p in PROFILE {
                acc += p.1;
                if r < acc {
                    pick = p;
                    break;
                }
            }
            (*vocabulary(pick.0).choose(&mut rng).unwrap(), pick.2)
        };
        // Scores are drawn independently of the entropy regime.
        let gogi = mult * noise.sample(&mut rng);
        let token_id = text.bytes().fold(7i64, |h, b| (h * 131 + b as i64) % 50_257);
        tokens.push(TokenRecord::new(t, text, token_id, gogi, entropy));

        if spec.layers > 0 {
            let row: Vec<f64> = (0..spec.layers)
                .map(|l| {
                    let d = (l as f64 - peak) / width;
                    gogi * (0.2 + (-d * d / 2.0).exp()) * layer_noise.sample(&mut rng)
                })
                .collect();
            layer_grads.push(row);
        }
    }
    Trace {
        id: format!("synth-{index:05}"),
        problem: Some(format!("synthetic problem {index}")),
        answer: None,
        tokens,
        layer_grads: (spec.layers > 0).then_some(layer_grads),
        stats: None,
    }
}

pub fn synth_corpus(seed: u64, n: usize, spec: &SynthSpec) -> Vec<Trace> {
    (0..n).map(|i| synth_trace(seed, i, spec)).collect()
}
