//! Lower bounds from graph-based encoders on unifilar channels.
//!
//! An encoder is a Q-graph plus an input law `P(x | s, q)`. Together with a
//! unifilar channel it drives a Markov chain on `(s, q)` pairs. When the
//! encoder is BCJR-invariant, i.e. the state posterior given the past outputs
//! is a function of the current node, the rate `I(X,S;Y|Q)` under the
//! stationary law of that chain is achievable with feedback.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{ChannelKernel, UnifilarMap};
use crate::info::entropy;
use crate::qgraph::QGraph;
use crate::search::{pattern_search, PatternOptions};
use crate::{graph, linalg, Error, Result, STOCHASTIC_TOL};

/// Default tolerance of [`check_bcjr_invariance`].
pub const BCJR_TOL: f64 = 1e-9;

const STATIONARY_RESIDUAL: f64 = 1e-14;
const POWER_STEPS: usize = 10_000;

/// Input law `P(x | s, q)` on a Q-graph, stored `[s][q][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEncoder {
    graph: QGraph,
    ns: usize,
    nx: usize,
    p: Vec<f64>,
}

impl GraphEncoder {
    pub fn new(graph: QGraph, ns: usize, nx: usize, p: Vec<f64>) -> Result<Self> {
        if ns == 0 || nx == 0 {
            return Err(Error::InvalidArgument("encoder needs at least one state and one input"));
        }
        let expected = ns * graph.nq() * nx;
        if p.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: p.len() });
        }
        if let Some(index) = p.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidEntry { index, value: p[index] });
        }
        for (row, chunk) in p.chunks(nx).enumerate() {
            let deficit = chunk.iter().sum::<f64>() - 1.0;
            if deficit.abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic { row, deficit });
            }
        }
        Ok(Self { graph, ns, nx, p })
    }

    pub fn uniform(graph: QGraph, ns: usize, nx: usize) -> Self {
        let p = vec![1.0 / nx as f64; ns * graph.nq() * nx];
        Self { graph, ns, nx, p }
    }

    /// The same law `P(x | q)` for every channel state.
    pub fn state_independent(graph: QGraph, ns: usize, per_node: &[Vec<f64>]) -> Result<Self> {
        if per_node.len() != graph.nq() {
            return Err(Error::DimensionMismatch { expected: graph.nq(), found: per_node.len() });
        }
        let nx = per_node.first().map_or(0, Vec::len);
        let p = (0..ns).flat_map(|_| per_node.iter().flatten().copied()).collect();
        Self::new(graph, ns, nx, p)
    }

    /// Softmax rows from unconstrained reals, last input as reference.
    pub fn from_params(graph: QGraph, ns: usize, nx: usize, params: &[f64]) -> Result<Self> {
        let rows = ns * graph.nq();
        let expected = rows * (nx - 1);
        if params.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: params.len() });
        }
        if let Some(index) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if nx == 1 {
            return Self::new(graph, ns, 1, vec![1.0; rows]);
        }
        let mut p = Vec::with_capacity(rows * nx);
        for theta in params.chunks(nx - 1) {
            let m = theta.iter().copied().fold(0.0f64, f64::max);
            let row: Vec<f64> = theta.iter().map(|&v| libm::exp(v - m)).chain([libm::exp(-m)]).collect();
            let s: f64 = row.iter().sum();
            p.extend(row.into_iter().map(|v| v / s));
        }
        Ok(Self { graph, ns, nx, p })
    }

    pub fn graph(&self) -> &QGraph {
        &self.graph
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Table in `[s][q][x]` order.
    pub fn table(&self) -> &[f64] {
        &self.p
    }

    pub fn row(&self, s: usize, q: usize) -> &[f64] {
        let i = (s * self.graph.nq() + q) * self.nx;
        &self.p[i..i + self.nx]
    }

    #[inline]
    pub fn prob(&self, s: usize, q: usize, x: usize) -> f64 {
        self.p[(s * self.graph.nq() + q) * self.nx + x]
    }
}

/// Markov chain on `(s, q)` pairs, indexed `s * nq + q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SqChain {
    ns: usize,
    nq: usize,
    /// Row-major transition matrix.
    pub transition: Vec<f64>,
    /// Stationary law, zero outside `class`.
    pub stationary: Vec<f64>,
    /// Closed class containing the start pair.
    pub class: Vec<usize>,
    pub period: usize,
}

impl SqChain {
    pub fn index(&self, s: usize, q: usize) -> usize {
        s * self.nq + q
    }

    pub fn pi(&self, s: usize, q: usize) -> f64 {
        self.stationary[self.index(s, q)]
    }

    pub fn pi_q(&self, q: usize) -> f64 {
        (0..self.ns).map(|s| self.pi(s, q)).sum()
    }

    /// `pi(s | q)`; `None` for nodes of zero stationary weight.
    pub fn pi_s_given_q(&self, s: usize, q: usize) -> Option<f64> {
        let w = self.pi_q(q);
        (w > 0.0).then(|| self.pi(s, q) / w)
    }

    pub fn is_aperiodic(&self) -> bool {
        self.period == 1
    }

    /// `max |pi M - pi|`.
    pub fn stationarity_residual(&self) -> f64 {
        let n = self.stationary.len();
        let moved = step(&self.transition, &self.stationary);
        (0..n).map(|i| (moved[i] - self.stationary[i]).abs()).fold(0.0, f64::max)
    }
}

fn step(m: &[f64], pi: &[f64]) -> Vec<f64> {
    let n = pi.len();
    let mut out = vec![0.0; n];
    for (i, &p) in pi.iter().enumerate() {
        if p != 0.0 {
            for (j, o) in out.iter_mut().enumerate() {
                *o += p * m[i * n + j];
            }
        }
    }
    out
}

fn unifilar(ch: &ChannelKernel, enc: &GraphEncoder) -> Result<UnifilarMap> {
    let map = ch.unifilar_map().ok_or(Error::NotUnifilar)?;
    if enc.ns != ch.ns() {
        return Err(Error::DimensionMismatch { expected: ch.ns(), found: enc.ns });
    }
    if enc.nx != ch.nx() {
        return Err(Error::DimensionMismatch { expected: ch.nx(), found: enc.nx });
    }
    if enc.graph.ny() != ch.ny() {
        return Err(Error::DimensionMismatch { expected: ch.ny(), found: enc.graph.ny() });
    }
    Ok(map)
}

/// Builds the `(s, q)` chain `P(s+, q+ | s, q) = sum_{x,y} P(x|s,q) P(y|x,s)`
/// over transitions with `q+ = phi(q, y)`, `s+ = f(x, y, s)`, and its
/// stationary law on the closed class of `start = (s0, q0)`.
pub fn build_sq_chain(ch: &ChannelKernel, enc: &GraphEncoder, start: (usize, usize)) -> Result<SqChain> {
    let map = unifilar(ch, enc)?;
    let (ns, nq) = (ch.ns(), enc.graph.nq());
    if start.0 >= ns {
        return Err(Error::IndexOutOfRange { index: start.0, bound: ns });
    }
    if start.1 >= nq {
        return Err(Error::IndexOutOfRange { index: start.1, bound: nq });
    }
    let n = ns * nq;
    let mut m = vec![0.0; n * n];
    for s in 0..ns {
        for q in 0..nq {
            let i = s * nq + q;
            for x in 0..ch.nx() {
                let px = enc.prob(s, q, x);
                if px == 0.0 {
                    continue;
                }
                for y in 0..ch.ny() {
                    let p = px * ch.output_prob(s, x, y);
                    if p > 0.0 {
                        m[i * n + map.next(x, y, s) * nq + enc.graph.next(q, y)] += p;
                    }
                }
            }
        }
    }
    let adj: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| m[i * n + j] > 0.0).collect()).collect();
    let origin = start.0 * nq + start.1;
    let class = graph::closed_classes(&adj)
        .into_iter()
        .find(|c| c.contains(&origin))
        .ok_or(Error::NotRecurrent)?;
    let period = graph::period(&adj, &class);
    let stationary = class_stationary(&m, n, &class)?;
    Ok(SqChain { ns, nq, transition: m, stationary, class, period })
}

/// Direct solve on the class, then power steps on the lazy chain
/// `(I + M) / 2` (same fixed point, aperiodic) until the residual is tiny.
fn class_stationary(m: &[f64], n: usize, class: &[usize]) -> Result<Vec<f64>> {
    let k = class.len();
    let mut a = vec![0.0; k * k];
    for (ci, &i) in class.iter().enumerate() {
        a[ci * k + ci] += 1.0;
        for (cj, &j) in class.iter().enumerate() {
            a[cj * k + ci] -= m[i * n + j];
        }
    }
    for ci in 0..k {
        a[(k - 1) * k + ci] = 1.0;
    }
    let mut b = vec![0.0; k];
    b[k - 1] = 1.0;
    let sol = linalg::solve(a, b)?;
    let mut pi = vec![0.0; n];
    for (ci, &i) in class.iter().enumerate() {
        pi[i] = sol[ci].max(0.0);
    }
    for _ in 0..POWER_STEPS {
        let moved = step(m, &pi);
        let next: Vec<f64> = pi.iter().zip(&moved).map(|(a, b)| 0.5 * (a + b)).collect();
        let residual = pi.iter().zip(&moved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let total: f64 = next.iter().sum();
        pi = next.into_iter().map(|v| v / total).collect();
        if residual <= STATIONARY_RESIDUAL {
            break;
        }
    }
    Ok(pi)
}

/// Worst violation of the BCJR equation over `(s+, q, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BcjrReport {
    pub max_violation: f64,
    /// `(s+, q, y)` of the worst violation.
    pub argmax: Option<(usize, usize, usize)>,
    pub tol: f64,
    pub passed: bool,
}

/// Checks `pi(s+ | phi(q, y)) = P(s+ | q, y)` for every node of positive
/// stationary weight and every output of positive probability there.
pub fn check_bcjr_invariance(ch: &ChannelKernel, enc: &GraphEncoder, chain: &SqChain, tol: f64) -> Result<BcjrReport> {
    let map = unifilar(ch, enc)?;
    let (ns, nq) = (ch.ns(), enc.graph.nq());
    let mut max_violation = 0.0f64;
    let mut argmax = None;
    for q in 0..nq {
        let Some(post): Option<Vec<f64>> = (0..ns).map(|s| chain.pi_s_given_q(s, q)).collect() else { continue };
        for y in 0..ch.ny() {
            let mut num = vec![0.0; ns];
            let mut den = 0.0;
            for (s, &w) in post.iter().enumerate() {
                for x in 0..ch.nx() {
                    let p = w * enc.prob(s, q, x) * ch.output_prob(s, x, y);
                    num[map.next(x, y, s)] += p;
                    den += p;
                }
            }
            if den <= 0.0 {
                continue;
            }
            let qp = enc.graph.next(q, y);
            for (sp, n) in num.iter().enumerate() {
                let lhs = chain.pi_s_given_q(sp, qp).unwrap_or(f64::NAN);
                let v = (lhs - n / den).abs();
                let v = if v.is_nan() { f64::INFINITY } else { v };
                if v > max_violation {
                    max_violation = v;
                    argmax = Some((sp, q, y));
                }
            }
        }
    }
    Ok(BcjrReport { max_violation, argmax, tol, passed: max_violation <= tol })
}

/// `I(X,S;Y|Q) = sum_q pi(q) [H(Y|Q=q) - H(Y|X,S,Q=q)]` under the stationary
/// law, with no invariance or periodicity checks.
pub fn conditional_rate(ch: &ChannelKernel, enc: &GraphEncoder, chain: &SqChain) -> f64 {
    let (ns, nq, ny) = (ch.ns(), enc.graph.nq(), ch.ny());
    let mut rate = 0.0;
    for q in 0..nq {
        let mut py = vec![0.0; ny];
        let mut noise = 0.0;
        for s in 0..ns {
            let w = chain.pi(s, q);
            if w == 0.0 {
                continue;
            }
            for x in 0..ch.nx() {
                let p = w * enc.prob(s, q, x);
                if p == 0.0 {
                    continue;
                }
                let row = ch.output_row(s, x);
                noise += p * entropy(&row);
                py.iter_mut().zip(&row).for_each(|(a, b)| *a += p * b);
            }
        }
        let wq: f64 = py.iter().sum();
        if wq > 0.0 {
            let cond: Vec<f64> = py.iter().map(|v| v / wq).collect();
            rate += wq * entropy(&cond) - noise;
        }
    }
    rate
}

/// Achievable rate of a graph-based encoder started at `(s0, q0)`, in bits
/// per channel use.
pub fn achievable_rate(ch: &ChannelKernel, enc: &GraphEncoder, start: (usize, usize), tol: f64) -> Result<f64> {
    let chain = build_sq_chain(ch, enc, start)?;
    if !chain.is_aperiodic() {
        return Err(Error::PeriodicClass { period: chain.period });
    }
    let report = check_bcjr_invariance(ch, enc, &chain, tol)?;
    if !report.passed {
        return Err(Error::BcjrViolated { max_violation: report.max_violation });
    }
    Ok(conditional_rate(ch, enc, &chain))
}

/// Options for [`search_encoder`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSearchOptions {
    pub starts: usize,
    pub seed: u64,
    /// Increasing weights on the BCJR violation.
    pub penalties: [f64; 3],
    pub tol: f64,
    pub search: PatternOptions,
}

impl Default for EncoderSearchOptions {
    fn default() -> Self {
        Self {
            starts: 4,
            seed: 0xe4c0,
            penalties: [10.0, 1e3, 1e6],
            tol: BCJR_TOL,
            search: PatternOptions { max_evals: 20_000, ..PatternOptions::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoundEncoder {
    pub encoder: GraphEncoder,
    pub rate: f64,
    pub start_index: usize,
}

/// Best-effort search for a BCJR-invariant encoder of high rate: pattern
/// search on the rate minus a growing penalty on the BCJR violation, from
/// several starts. Returns the best encoder that passes the checks, if any.
pub fn search_encoder(
    ch: &ChannelKernel,
    graph: &QGraph,
    start: (usize, usize),
    opts: &EncoderSearchOptions,
) -> Result<Option<FoundEncoder>> {
    let (ns, nx) = (ch.ns(), ch.nx());
    let probe = GraphEncoder::uniform(graph.clone(), ns, nx);
    unifilar(ch, &probe)?;
    let dim = ns * graph.nq() * (nx - 1);
    let penalized = |params: &[f64], weight: f64| -> f64 {
        let Ok(enc) = GraphEncoder::from_params(graph.clone(), ns, nx, params) else { return f64::INFINITY };
        let Ok(chain) = build_sq_chain(ch, &enc, start) else { return f64::INFINITY };
        let Ok(report) = check_bcjr_invariance(ch, &enc, &chain, opts.tol) else { return f64::INFINITY };
        -conditional_rate(ch, &enc, &chain) + weight * report.max_violation
    };
    let mut best: Option<FoundEncoder> = None;
    for index in 0..opts.starts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut x: Vec<f64> = if index == 0 { vec![0.0; dim] } else { (0..dim).map(|_| rng.gen_range(-2.0..=2.0)).collect() };
        for &w in &opts.penalties {
            x = pattern_search(|p| penalized(p, w), x, &opts.search).x;
        }
        let enc = GraphEncoder::from_params(graph.clone(), ns, nx, &x)?;
        if let Ok(rate) = achievable_rate(ch, &enc, start, opts.tol) {
            if best.as_ref().map_or(true, |b| rate > b.rate) {
                best = Some(FoundEncoder { encoder: enc, rate, start_index: index });
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{builtin, transform_detected, BuiltinName, BuiltinSpec};
    use crate::info::binary_entropy;
    use crate::qgraph::markov_qgraph;
    use proptest::prelude::*;

    fn nost_transformed(eps: f64) -> ChannelKernel {
        transform_detected(&builtin(BuiltinSpec::new(BuiltinName::Nost, eps)).unwrap()).unwrap().channel
    }

    fn noiseless() -> ChannelKernel {
        // y = x, state irrelevant
        ChannelKernel::from_unifilar(&[1.0, 0.0, 0.0, 1.0], 2, 2, 1, |_, _, _| 0).unwrap()
    }

    #[test]
    fn noiseless_uniform_rate_is_output_entropy() {
        let g = QGraph::new(1, 2, vec![0, 0]).unwrap();
        let enc = GraphEncoder::uniform(g, 1, 2);
        let r = achievable_rate(&noiseless(), &enc, (0, 0), BCJR_TOL).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn deterministic_encoder_concentrates_on_a_cycle() {
        // noiseless channel whose state is the last input, node is the last output
        let ch = ChannelKernel::from_unifilar(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0], 2, 2, 2, |x, _, _| x)
            .unwrap();
        let g = markov_qgraph(1, 2).unwrap();
        // always send the opposite of the last output
        let enc = GraphEncoder::state_independent(g, 2, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let chain = build_sq_chain(&ch, &enc, (0, 0)).unwrap();
        let support: Vec<usize> = (0..4).filter(|&i| chain.stationary[i] > 0.0).collect();
        assert_eq!(support, vec![0, 3]);
        assert_eq!(chain.period, 2);
        assert!(matches!(achievable_rate(&ch, &enc, (0, 0), BCJR_TOL), Err(Error::PeriodicClass { period: 2 })));
    }

    #[test]
    fn rejects_non_unifilar_channels() {
        let ch = builtin(BuiltinSpec::new(BuiltinName::Nost, 0.2)).unwrap();
        let g = markov_qgraph(1, 2).unwrap();
        let enc = GraphEncoder::uniform(g, 2, 2);
        assert_eq!(build_sq_chain(&ch, &enc, (0, 0)), Err(Error::NotUnifilar));
    }

    #[test]
    fn transient_start_is_rejected() {
        // state 1 is left for good after one use
        let ch = ChannelKernel::from_unifilar(&[1.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.5, 0.5], 2, 2, 2, |_, _, _| 0)
            .unwrap();
        let g = QGraph::new(1, 2, vec![0, 0]).unwrap();
        let enc = GraphEncoder::uniform(g, 2, 2);
        assert_eq!(build_sq_chain(&ch, &enc, (1, 0)), Err(Error::NotRecurrent));
        assert!(build_sq_chain(&ch, &enc, (0, 0)).is_ok());
    }

    #[test]
    fn state_pinned_by_output_is_bcjr_invariant() {
        // s+ = y, so every posterior is an indicator determined by the node
        let ch = nost_transformed(0.3);
        let g = markov_qgraph(1, 2).unwrap();
        let enc = GraphEncoder::state_independent(g, 2, &[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let chain = build_sq_chain(&ch, &enc, (0, 0)).unwrap();
        let r = check_bcjr_invariance(&ch, &enc, &chain, BCJR_TOL).unwrap();
        assert!(r.passed && r.max_violation < 1e-15, "{r:?}");
    }

    #[test]
    fn one_node_graph_breaks_invariance_when_state_matters() {
        let ch = nost_transformed(0.3);
        let g = QGraph::new(1, 2, vec![0, 0]).unwrap();
        let enc = GraphEncoder::state_independent(g, 2, &[vec![0.7, 0.3]]).unwrap();
        let chain = build_sq_chain(&ch, &enc, (0, 0)).unwrap();
        let r = check_bcjr_invariance(&ch, &enc, &chain, BCJR_TOL).unwrap();
        assert!(!r.passed);
        assert!(matches!(achievable_rate(&ch, &enc, (0, 0), BCJR_TOL), Err(Error::BcjrViolated { .. })));
    }

    #[test]
    fn bsc_rate_on_one_node_graph() {
        let p = 0.11;
        let ch = builtin(BuiltinSpec::new(BuiltinName::Bsc, p)).unwrap();
        let g = QGraph::new(1, 2, vec![0, 0]).unwrap();
        let r = achievable_rate(&ch, &GraphEncoder::uniform(g, 1, 2), (0, 0), BCJR_TOL).unwrap();
        assert!((r - (1.0 - binary_entropy(p))).abs() < 1e-12);
    }

    #[test]
    fn search_finds_nost_zero_capacity() {
        let ch = nost_transformed(0.0);
        let g = markov_qgraph(1, 2).unwrap();
        let found = search_encoder(&ch, &g, (0, 0), &EncoderSearchOptions::default()).unwrap().unwrap();
        assert!((found.rate - libm::log2(1.25)).abs() < 1e-6, "{}", found.rate);
    }

    #[test]
    fn encoder_validation() {
        let g = markov_qgraph(1, 2).unwrap();
        assert!(matches!(
            GraphEncoder::new(g.clone(), 1, 2, vec![0.5, 0.6, 0.5, 0.5]),
            Err(Error::NotStochastic { row: 0, .. })
        ));
        assert!(matches!(GraphEncoder::new(g.clone(), 1, 2, vec![0.5; 3]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            GraphEncoder::new(g, 1, 2, vec![1.5, -0.5, 0.5, 0.5]),
            Err(Error::InvalidEntry { index: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn chain_law_is_stationary(params in proptest::collection::vec(-4.0f64..4.0, 4), eps in 0.0f64..1.0) {
            let ch = nost_transformed(eps);
            let g = markov_qgraph(1, 2).unwrap();
            let enc = GraphEncoder::from_params(g, 2, 2, &params).unwrap();
            if let Ok(chain) = build_sq_chain(&ch, &enc, (0, 0)) {
                let total: f64 = chain.stationary.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(chain.stationary.iter().all(|&p| p >= 0.0));
                prop_assert!(chain.stationarity_residual() < 1e-12);
            }
        }

        #[test]
        fn rate_is_at_most_output_alphabet(params in proptest::collection::vec(-4.0f64..4.0, 4), eps in 0.0f64..1.0) {
            let ch = nost_transformed(eps);
            let g = markov_qgraph(1, 2).unwrap();
            let enc = GraphEncoder::from_params(g, 2, 2, &params).unwrap();
            if let Ok(chain) = build_sq_chain(&ch, &enc, (0, 0)) {
                let r = conditional_rate(&ch, &enc, &chain);
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&r));
            }
        }
    }
}
