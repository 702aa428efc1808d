mod common;

use common::{fuzz_config, fuzz_stats, fuzz_trace, oracle_prune};
use gogiskip_core::{ablation_prune, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARIANTS: [Variant; 4] = [Variant::Full, Variant::NoAnc, Variant::NoEdr, Variant::NoAds];

#[test]
fn engine_matches_reference_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..1000 {
        let len = rng.gen_range(1..=400);
        let trace = fuzz_trace(&mut rng, i, len);
        let cfg = fuzz_config(&mut rng);
        let stats = fuzz_stats(&mut rng, &trace);
        for variant in VARIANTS {
            let got = ablation_prune(&trace, &cfg, stats, variant).unwrap();
            let want = oracle_prune(&trace, &cfg, stats, variant);
            assert_eq!(got.mask.keep, want.keep, "trace {i} {variant:?} cfg {cfg:?}");
            assert_eq!(got.mask.consec, want.consec, "trace {i} {variant:?}");
            for (d, s) in got.mask.per_pos.iter().zip(&want.steps) {
                match (d, s) {
                    (Some(d), Some(s)) => {
                        assert_eq!((d.gamma, d.tau, d.n, d.override_fired), (s.gamma, s.tau, s.n, s.overridden));
                    }
                    (None, None) => {}
                    other => panic!("validity disagrees at trace {i}: {other:?}"),
                }
            }
        }
    }
}

#[test]
fn single_token_and_all_invalid_traces() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..200 {
        let mut trace = fuzz_trace(&mut rng, i, 1 + i % 3);
        if i % 2 == 0 {
            trace.tokens.iter_mut().for_each(|t| t.valid = false);
        }
        let cfg = fuzz_config(&mut rng);
        let stats = fuzz_stats(&mut rng, &trace);
        let got = ablation_prune(&trace, &cfg, stats, Variant::Full).unwrap();
        assert_eq!(got.mask.keep, oracle_prune(&trace, &cfg, stats, Variant::Full).keep);
    }
}
