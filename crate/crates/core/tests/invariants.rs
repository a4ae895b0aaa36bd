use fscap_core::analytic::{nising_half_capacity, nost_capacity};
use fscap_core::channel::{builtin, transform_detected, BuiltinName, BuiltinSpec, ChannelClass, ChannelKernel};
use fscap_core::dualbound::{disturbance_dist, reward, upper_bound, Belief, DualState};
use fscap_core::lowerbound::{achievable_rate, GraphEncoder, BCJR_TOL};
use fscap_core::qgraph::{markov_qgraph, QGraph};
use fscap_core::testdist::GraphTestDist;
use proptest::prelude::*;

fn normalize(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Binary channel with output law `P(y|x,s)` and a state drawn from
/// `P(s+|x,y)`, so its memory is the last input and output.
fn window_channel(out: &[f64], state: &[f64]) -> ChannelKernel {
    let mut k = Vec::with_capacity(16);
    for s in 0..2 {
        for x in 0..2 {
            let py = normalize(&out[(s * 2 + x) * 2..(s * 2 + x + 1) * 2]);
            for y in 0..2 {
                let ps = normalize(&state[(x * 2 + y) * 2..(x * 2 + y + 1) * 2]);
                for sp in 0..2 {
                    k.push(py[y] * ps[sp]);
                }
            }
        }
    }
    ChannelKernel::new(k, 2, 2, 2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_preserves_output_law(
        out in proptest::collection::vec(0.05f64..1.0, 8),
        state in proptest::collection::vec(0.05f64..1.0, 8),
    ) {
        let ch = window_channel(&out, &state);
        let t = transform_detected(&ch).unwrap();
        prop_assert!(matches!(t.channel.classify(), ChannelClass::Unifilar(_)));
        for st in 0..t.channel.ns() {
            let b = t.belief(st);
            for x in 0..2 {
                for y in 0..2 {
                    let mixed: f64 = (0..2).map(|s| b[s] * ch.output_prob(s, x, y)).sum();
                    prop_assert!((t.channel.output_prob(st, x, y) - mixed).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn builtins_are_valid_kernels(eps in 0.0f64..=1.0) {
        for name in [BuiltinName::Nost, BuiltinName::NIsing, BuiltinName::Bsc] {
            let ch = builtin(BuiltinSpec::new(name, eps)).unwrap();
            prop_assert!(ChannelKernel::new(ch.as_slice().to_vec(), ch.nx(), ch.ny(), ch.ns()).is_ok());
        }
    }

    #[test]
    fn nost_bound_is_never_below_capacity(eps in 0.0f64..=1.0, params in proptest::collection::vec(-3.0f64..3.0, 2)) {
        let ch = builtin(BuiltinSpec::new(BuiltinName::Nost, eps)).unwrap();
        let g = markov_qgraph(1, 2).unwrap();
        let t = GraphTestDist::from_params(g.clone(), &params).unwrap();
        let c = nost_capacity(eps).unwrap().capacity;
        prop_assert!(upper_bound(&ch, &g, &t).unwrap().rho >= c - 1e-9);
    }

    #[test]
    fn nising_half_bound_is_never_below_capacity(params in proptest::collection::vec(-3.0f64..3.0, 4)) {
        let ch = builtin(BuiltinSpec::new(BuiltinName::NIsing, 0.5)).unwrap();
        let g = markov_qgraph(2, 2).unwrap();
        let t = GraphTestDist::from_params(g.clone(), &params).unwrap();
        prop_assert!(upper_bound(&ch, &g, &t).unwrap().rho >= nising_half_capacity() - 1e-9);
    }

    #[test]
    fn reward_vanishes_exactly_when_t_matches(eps in 0.05f64..0.95, b0 in 0.01f64..0.99, x in 0usize..2, shift in 1e-3f64..0.1) {
        let ch = builtin(BuiltinSpec::new(BuiltinName::Nost, eps)).unwrap();
        let belief = Belief::new(vec![b0, 1.0 - b0]).unwrap();
        let d = disturbance_dist(&ch, &belief, x);
        let g = QGraph::new(1, 2, vec![0, 0]).unwrap();
        let state = DualState { belief, q: 0 };
        let same = GraphTestDist::new(g.clone(), d.clone()).unwrap();
        prop_assert!(reward(&ch, &same, &state, x).abs() < 1e-12);
        let p = if d[0] > 0.5 { d[0] - shift } else { d[0] + shift };
        let other = GraphTestDist::new(g, vec![p, 1.0 - p]).unwrap();
        prop_assert!(reward(&ch, &other, &state, x) > 0.0);
    }

    #[test]
    fn post_rates_stay_below_capacity(params in proptest::collection::vec(-4.0f64..4.0, 4)) {
        // with state = last output = node every encoder is BCJR-invariant
        let ch = builtin(BuiltinSpec::new(BuiltinName::Post, 0.0)).unwrap();
        let g = markov_qgraph(1, 2).unwrap();
        let enc = GraphEncoder::from_params(g, 2, 2, &params).unwrap();
        let rate = achievable_rate(&ch, &enc, (0, 0), BCJR_TOL).unwrap();
        prop_assert!(rate <= 1.25f64.log2() + 1e-6);
        prop_assert!(rate >= 0.0);
    }
}
