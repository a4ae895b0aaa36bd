//! The dual upper bound on feedback capacity.
//!
//! For a Q-graph test distribution `T`, the bound is the optimal average
//! reward of an MDP with state `(belief over channel states, q)`, action `x`,
//! disturbance `y`, and reward `D(P(. | x, belief) || T(. | q))` in bits.
//! For unifilar and finite-memory channels the reachable beliefs form a
//! finite set and the MDP is exact; otherwise beliefs can be quantized to a
//! lattice, which gives an approximate value only.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{transform_to_unifilar, ChannelClass, ChannelKernel, FiniteMemory, UnifilarMap};
use crate::info::kl_divergence;
use crate::mdp::{self, FiniteMdp, MdpSolution};
use crate::qgraph::QGraph;
use crate::search::{golden_section, pattern_search, PatternOptions};
use crate::testdist::{GraphTestDist, FLOOR};
use crate::{Error, Result, STOCHASTIC_TOL};

/// Posterior over channel states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) =
            b.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidEntry { index, value });
        }
        let deficit = b.iter().sum::<f64>() - 1.0;
        if deficit.abs() > STOCHASTIC_TOL {
            return Err(Error::NotStochastic { row: 0, deficit });
        }
        Ok(Self(b))
    }

    /// Point mass on state `s`.
    pub fn indicator(ns: usize, s: usize) -> Self {
        let mut b = vec![0.0; ns];
        b[s] = 1.0;
        Self(b)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A state of the dual MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub belief: Belief,
    pub q: usize,
}

/// `P(y | x, belief) = sum_s b(s) P(y | x, s)`.
pub fn disturbance_dist(ch: &ChannelKernel, b: &Belief, x: usize) -> Vec<f64> {
    (0..ch.ny())
        .map(|y| b.0.iter().enumerate().map(|(s, &p)| p * ch.output_prob(s, x, y)).sum())
        .collect()
}

/// Posterior over the next state after input `x` and output `y`:
/// `b'(s+) = sum_s b(s) P(s+, y | x, s) / sum_s b(s) P(y | x, s)`.
pub fn belief_update(ch: &ChannelKernel, b: &Belief, x: usize, y: usize) -> Result<Belief> {
    let ns = ch.ns();
    let mut out = vec![0.0; ns];
    for (s, &p) in b.0.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (sp, o) in out.iter_mut().enumerate() {
            *o += p * ch.prob(s, x, y, sp);
        }
    }
    let z: f64 = out.iter().sum();
    if !(z > 0.0) {
        return Err(Error::UnreachableOutput { y });
    }
    out.iter_mut().for_each(|v| *v /= z);
    Ok(Belief(out))
}

/// `D(P(. | x, belief) || T(. | q))` in bits.
pub fn reward(ch: &ChannelKernel, t: &GraphTestDist, state: &DualState, x: usize) -> f64 {
    kl_divergence(&disturbance_dist(ch, &state.belief, x), t.row(state.q))
}

/// A channel prepared for the finite dual MDP: a unifilar kernel, its
/// next-state map, and the original-state belief carried by each state.
#[derive(Debug, Clone, PartialEq)]
pub struct DualModel {
    channel: ChannelKernel,
    map: UnifilarMap,
    beliefs: Vec<Belief>,
    transformed: bool,
}

impl DualModel {
    /// Unifilar channels are used as they are; finite-memory channels are
    /// first rewritten with the window as state.
    pub fn new(ch: &ChannelKernel) -> Result<Self> {
        match ch.classify() {
            ChannelClass::Unifilar(map) => Ok(Self {
                beliefs: (0..ch.ns()).map(|s| Belief::indicator(ch.ns(), s)).collect(),
                channel: ch.clone(),
                map,
                transformed: false,
            }),
            ChannelClass::FiniteMemory(fm) => Self::with_memory(ch, &fm),
            ChannelClass::General => Err(Error::NotFiniteClass),
        }
    }

    /// Uses an explicitly given finite-memory law.
    pub fn with_memory(ch: &ChannelKernel, fm: &FiniteMemory) -> Result<Self> {
        let t = transform_to_unifilar(ch, fm)?;
        let map = t.channel.unifilar_map().ok_or(Error::NotUnifilar)?;
        let beliefs = (0..t.channel.ns()).map(|st| Belief(t.belief(st).to_vec())).collect();
        Ok(Self { channel: t.channel, map, beliefs, transformed: true })
    }

    /// The unifilar kernel the MDP is built from.
    pub fn channel(&self) -> &ChannelKernel {
        &self.channel
    }

    pub fn is_transformed(&self) -> bool {
        self.transformed
    }

    /// Builds the MDP over all `(state, q)` pairs, indexed `s * nq + q`.
    pub fn build(&self, graph: &QGraph, t: &GraphTestDist) -> Result<DualMdp> {
        let (nx, ny, ns) = (self.channel.nx(), self.channel.ny(), self.channel.ns());
        if graph.ny() != ny {
            return Err(Error::DimensionMismatch { expected: ny, found: graph.ny() });
        }
        if t.graph() != graph {
            return Err(Error::InvalidArgument("test distribution belongs to another graph"));
        }
        let nq = graph.nq();
        let nz = ns * nq;
        let mut pw = Vec::with_capacity(nz * nx * ny);
        let mut next = Vec::with_capacity(nz * nx * ny);
        let mut g = Vec::with_capacity(nz * nx);
        for s in 0..ns {
            for q in 0..nq {
                for x in 0..nx {
                    let row = self.channel.output_row(s, x);
                    g.push(kl_divergence(&row, t.row(q)));
                    for y in 0..ny {
                        pw.push(row[y]);
                        next.push(self.map.next(x, y, s) * nq + graph.next(q, y));
                    }
                }
            }
        }
        let mdp = FiniteMdp::new(nz, nx, ny, pw, next, g)?;
        let states = (0..nz)
            .map(|z| DualState { belief: self.beliefs[z / nq].clone(), q: z % nq })
            .collect();
        Ok(DualMdp { mdp, states })
    }

    pub fn upper_bound(&self, graph: &QGraph, t: &GraphTestDist) -> Result<UpperBoundResult> {
        let dual = self.build(graph, t)?;
        let (rho, solution, per_initial_gain) = solve_dual(&dual.mdp)?;
        Ok(UpperBoundResult {
            rho,
            solution,
            per_initial_gain,
            test_dist: t.clone(),
            states: dual.states,
            mdp: dual.mdp,
            approximation: None,
        })
    }
}

/// A dual MDP together with the meaning of each state index.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMdp {
    pub mdp: FiniteMdp,
    pub states: Vec<DualState>,
}

/// Builds the exact dual MDP; fails with [`Error::NotFiniteClass`] for
/// channels that are neither unifilar nor finite-memory.
pub fn build_finite_dual_mdp(ch: &ChannelKernel, graph: &QGraph, t: &GraphTestDist) -> Result<DualMdp> {
    DualModel::new(ch)?.build(graph, t)
}

/// Set when the MDP was built on quantized beliefs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Approximation {
    pub resolution: usize,
    /// Largest L1 distance between an updated belief and its lattice point.
    pub max_projection: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpperBoundResult {
    /// Bits per channel use.
    pub rho: f64,
    /// Present whenever the optimal gain does not depend on the start state.
    pub solution: Option<MdpSolution>,
    /// Optimal gain per MDP state when it depends on the start state.
    pub per_initial_gain: Option<Vec<f64>>,
    pub test_dist: GraphTestDist,
    pub states: Vec<DualState>,
    pub mdp: FiniteMdp,
    /// `Some` for quantized-belief results, which are not guaranteed bounds.
    pub approximation: Option<Approximation>,
}

impl UpperBoundResult {
    pub fn is_approximate(&self) -> bool {
        self.approximation.is_some()
    }
}

/// Gain spread below which the start state is considered irrelevant.
const GAIN_SPREAD: f64 = 1e-9;

/// Solves a dual MDP. Unichain policy iteration first; if it meets a
/// multichain policy, multichain policy iteration gives the optimal gain of
/// every start state and the bound is the smallest of them.
fn solve_dual(m: &FiniteMdp) -> Result<(f64, Option<MdpSolution>, Option<Vec<f64>>)> {
    match mdp::policy_iteration(m) {
        Ok(sol) => return Ok((sol.rho, Some(sol), None)),
        Err(Error::MultichainDetected { .. }) => {}
        Err(e) => return Err(e),
    }
    let multi = mdp::multichain_policy_iteration(m)?;
    match multi.to_unichain(GAIN_SPREAD) {
        Some(sol) => Ok((sol.rho, Some(sol), None)),
        None => {
            let lo = multi.gains.iter().copied().fold(f64::INFINITY, f64::min);
            Ok((lo, None, Some(multi.gains)))
        }
    }
}

/// Gain of the dual MDP only; the cheap path used inside the optimizer.
pub fn bound_value(model: &DualModel, graph: &QGraph, t: &GraphTestDist) -> Result<f64> {
    let dual = model.build(graph, t)?;
    Ok(solve_dual(&dual.mdp)?.0)
}

/// Upper bound for a fixed test distribution.
pub fn upper_bound(ch: &ChannelKernel, graph: &QGraph, t: &GraphTestDist) -> Result<UpperBoundResult> {
    DualModel::new(ch)?.upper_bound(graph, t)
}

/// Options for [`occupation_ascent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    /// Stop once the bound is within this of the certified lower value.
    pub gap: f64,
    pub max_iter: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self { gap: 1e-10, max_iter: 10_000 }
    }
}

/// Outcome of [`occupation_ascent`].
#[derive(Debug, Clone, PartialEq)]
pub struct Ascent {
    pub test_dist: GraphTestDist,
    /// Bound at `test_dist`.
    pub rho: f64,
    /// No test distribution on the graph gives a bound below this, among
    /// those whose dual MDP has a start-independent gain.
    pub lower: f64,
    pub iterations: usize,
}

/// Minimizes the bound over `T` through its dual: the optimal gain is the
/// largest average reward over stationary state-action frequencies `mu`,
/// and minimizing over `T` first leaves the concave objective
/// `F(mu) = sum mu(z, x) D(P(. | z, x) || m_q(z))`, where `m_q` is the
/// output law seen at node `q` under `mu`. Frank-Wolfe ascent on `F`: the
/// linear step is the dual MDP at `T = m`, whose gain minus `F(mu)` bounds
/// the remaining error.
///
/// Returns `None` if a dual MDP along the way has a start-dependent gain.
pub fn occupation_ascent(model: &DualModel, graph: &QGraph, opts: &AscentOptions) -> Result<Option<Ascent>> {
    let (nq, ny) = (graph.nq(), graph.ny());
    let mut t = GraphTestDist::uniform(graph.clone());
    let first = model.upper_bound(graph, &t)?;
    let Some(sol) = &first.solution else { return Ok(None) };
    let (nz, nu) = (first.mdp.nz(), first.mdp.nu());
    let node: Vec<usize> = first.states.iter().map(|s| s.q).collect();
    let law = first.mdp.pw().to_vec();
    let row = |z: usize, u: usize| &law[(z * nu + u) * ny..(z * nu + u + 1) * ny];
    let mixture = |mu: &[f64]| {
        let mut m = vec![0.0; nq * ny];
        for z in 0..nz {
            for u in 0..nu {
                let w = mu[z * nu + u];
                if w > 0.0 {
                    for (y, p) in row(z, u).iter().enumerate() {
                        m[node[z] * ny + y] += w * p;
                    }
                }
            }
        }
        for r in m.chunks_mut(ny) {
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v = if s > 0.0 { *v / s } else { 1.0 / ny as f64 });
        }
        m
    };
    let objective = |mu: &[f64]| {
        let m = mixture(mu);
        let mut f = 0.0;
        for z in 0..nz {
            for u in 0..nu {
                let w = mu[z * nu + u];
                if w > 0.0 {
                    f += w * kl_divergence(row(z, u), &m[node[z] * ny..(node[z] + 1) * ny]);
                }
            }
        }
        f
    };
    let mut mu = best_frequencies(&first.mdp, &sol.policy)?;
    let mut best = (first.rho, t.clone());
    let mut lower = f64::NEG_INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let scale = 1.0 - ny as f64 * FLOOR;
        t = GraphTestDist::new(graph.clone(), mixture(&mu).into_iter().map(|p| FLOOR + scale * p).collect())?;
        let ub = model.upper_bound(graph, &t)?;
        let Some(sol) = &ub.solution else { return Ok(None) };
        if ub.rho < best.0 {
            best = (ub.rho, t.clone());
        }
        let f = objective(&mu);
        lower = lower.max(f);
        if best.0 - lower <= opts.gap {
            break;
        }
        let vertex = best_frequencies(&ub.mdp, &sol.policy)?;
        let (gamma, _) = golden_section(
            |g| {
                let mix: Vec<f64> = mu.iter().zip(&vertex).map(|(a, b)| (1.0 - g) * a + g * b).collect();
                -objective(&mix)
            },
            0.0,
            1.0,
            1e-12,
        );
        mu.iter_mut().zip(&vertex).for_each(|(a, b)| *a = (1.0 - gamma) * *a + gamma * b);
    }
    Ok(Some(Ascent { test_dist: best.1, rho: best.0, lower, iterations }))
}

/// State-action frequencies of `policy` on its recurrent class of largest
/// gain.
fn best_frequencies(m: &FiniteMdp, policy: &[usize]) -> Result<Vec<f64>> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for class in m.recurrent_classes(policy) {
        let pi = mdp::class_distribution(m, policy, &class)?;
        let gain: f64 = class.iter().map(|&z| pi[z] * m.reward(z, policy[z])).sum();
        if best.as_ref().map_or(true, |b| gain > b.0) {
            best = Some((gain, pi));
        }
    }
    let pi = best.ok_or(Error::NotRecurrent)?.1;
    let nu = m.nu();
    let mut mu = vec![0.0; m.nz() * nu];
    for (z, p) in pi.into_iter().enumerate() {
        mu[z * nu + policy[z]] = p;
    }
    Ok(mu)
}

/// Options for [`optimize_test_distribution`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    /// Start 0 is the uniform distribution; the rest are random.
    pub starts: usize,
    pub seed: u64,
    /// Spread of the random starting parameters.
    pub spread: f64,
    pub search: PatternOptions,
    /// Run [`occupation_ascent`] first. When it certifies its result to
    /// within `search.tol` the pattern-search starts are skipped.
    pub ascent: Option<AscentOptions>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0x5eed,
            spread: 2.0,
            search: PatternOptions::default(),
            ascent: Some(AscentOptions::default()),
        }
    }
}

/// Outcome of one optimizer start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartReport {
    pub index: usize,
    pub rho: f64,
    pub params: Vec<f64>,
    pub evals: usize,
}

/// Best result over all starts, with every start logged.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub best: UpperBoundResult,
    pub starts: Vec<StartReport>,
    pub ascent: Option<Ascent>,
}

impl Optimized {
    /// Certified distance from the best achievable bound on this graph, when
    /// the ascent produced one.
    pub fn gap(&self) -> Option<f64> {
        self.ascent.as_ref().map(|a| (self.best.rho - a.lower).max(0.0))
    }
}

/// Starting parameters of start `index`; each start has its own stream so
/// starts can run in any order.
pub fn start_params(graph: &QGraph, opts: &OptimizeOptions, index: usize) -> Vec<f64> {
    let n = GraphTestDist::param_count(graph);
    if index == 0 {
        return vec![0.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    (0..n).map(|_| rng.gen_range(-opts.spread..=opts.spread)).collect()
}

/// Runs one start of the local search.
pub fn optimize_start(model: &DualModel, graph: &QGraph, opts: &OptimizeOptions, index: usize) -> Result<StartReport> {
    // surface construction errors before searching
    model.build(graph, &GraphTestDist::uniform(graph.clone()))?;
    let objective = |p: &[f64]| {
        GraphTestDist::from_params(graph.clone(), p)
            .and_then(|t| bound_value(model, graph, &t))
            .unwrap_or(f64::INFINITY)
    };
    let m = pattern_search(objective, start_params(graph, opts, index), &opts.search);
    Ok(StartReport { index, rho: m.value, params: m.x, evals: m.evals })
}

/// Picks the smallest bound among the starts (lowest index on ties) and the
/// ascent result, which wins ties, and recomputes its full result.
pub fn select_best(
    model: &DualModel,
    graph: &QGraph,
    mut starts: Vec<StartReport>,
    ascent: Option<Ascent>,
) -> Result<Optimized> {
    starts.sort_by_key(|s| s.index);
    let start = starts.iter().min_by(|a, b| a.rho.total_cmp(&b.rho).then(a.index.cmp(&b.index)));
    let t = match (&ascent, start) {
        (Some(a), Some(s)) if s.rho < a.rho => GraphTestDist::from_params(graph.clone(), &s.params)?,
        (Some(a), _) => a.test_dist.clone(),
        (None, Some(s)) => GraphTestDist::from_params(graph.clone(), &s.params)?,
        (None, None) => return Err(Error::InvalidArgument("no optimizer starts")),
    };
    let best = model.upper_bound(graph, &t)?;
    Ok(Optimized { best, starts, ascent })
}

/// Runs the ascent, unless disabled; returns it and whether it is
/// certified, in which case the local search can be skipped.
pub fn ascent_stage(model: &DualModel, graph: &QGraph, opts: &OptimizeOptions) -> Result<(Option<Ascent>, bool)> {
    let Some(a) = &opts.ascent else { return Ok((None, false)) };
    let ascent = occupation_ascent(model, graph, a)?;
    let done = ascent.as_ref().is_some_and(|a| a.rho - a.lower <= opts.search.tol);
    Ok((ascent, done))
}

/// Minimizes the bound over test distributions on `graph`: the occupation
/// ascent first, then, unless that is certified optimal, multi-start
/// pattern search in the softmax parameters. Whatever the search finds, the
/// returned value is a valid bound for the returned distribution.
pub fn optimize_test_distribution(ch: &ChannelKernel, graph: &QGraph, opts: &OptimizeOptions) -> Result<Optimized> {
    let model = DualModel::new(ch)?;
    let (ascent, done) = ascent_stage(&model, graph, opts)?;
    let starts = if done {
        Vec::new()
    } else {
        (0..opts.starts.max(1)).map(|i| optimize_start(&model, graph, opts, i)).collect::<Result<Vec<_>>>()?
    };
    select_best(&model, graph, starts, ascent)
}

/// Largest-remainder rounding of `b` to the lattice with denominator `n`.
fn project(b: &[f64], n: usize) -> (Vec<u32>, f64) {
    let scaled: Vec<f64> = b.iter().map(|v| v * n as f64).collect();
    let mut k: Vec<u32> = scaled.iter().map(|v| libm::floor(*v) as u32).collect();
    let assigned: u32 = k.iter().sum();
    let mut order: Vec<usize> = (0..b.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (scaled[i] - k[i] as f64, scaled[j] - k[j] as f64);
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &i in order.iter().take((n as u32).saturating_sub(assigned) as usize) {
        k[i] += 1;
    }
    let dist = k.iter().zip(b).map(|(&ki, &v)| (ki as f64 / n as f64 - v).abs()).sum();
    (k, dist)
}

/// Dual MDP on beliefs rounded to the lattice `{k / (resolution - 1)}`,
/// explored from every `(point mass, q)` pair. Projection can break the
/// bound guarantee, so the result is approximate.
pub fn build_quantized_belief_mdp(
    ch: &ChannelKernel,
    graph: &QGraph,
    t: &GraphTestDist,
    resolution: usize,
    state_budget: usize,
) -> Result<(DualMdp, Approximation)> {
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be at least 2"));
    }
    let (nx, ny, ns) = (ch.nx(), ch.ny(), ch.ns());
    if graph.ny() != ny {
        return Err(Error::DimensionMismatch { expected: ny, found: graph.ny() });
    }
    let n = resolution - 1;
    let mut index: BTreeMap<(Vec<u32>, usize), usize> = BTreeMap::new();
    let mut keys: Vec<(Vec<u32>, usize)> = Vec::new();
    let mut intern = |key: (Vec<u32>, usize), keys: &mut Vec<(Vec<u32>, usize)>| -> Result<usize> {
        if let Some(&i) = index.get(&key) {
            return Ok(i);
        }
        if keys.len() >= state_budget {
            return Err(Error::StateBudgetExceeded { budget: state_budget });
        }
        index.insert(key.clone(), keys.len());
        keys.push(key);
        Ok(keys.len() - 1)
    };
    for s in 0..ns {
        for q in 0..graph.nq() {
            let mut k = vec![0u32; ns];
            k[s] = n as u32;
            intern((k, q), &mut keys)?;
        }
    }
    let (mut pw, mut next, mut g) = (Vec::new(), Vec::new(), Vec::new());
    let mut max_projection = 0.0f64;
    let mut z = 0;
    while z < keys.len() {
        let (k, q) = keys[z].clone();
        let b = Belief(k.iter().map(|&v| v as f64 / n as f64).collect());
        for x in 0..nx {
            let dist = disturbance_dist(ch, &b, x);
            g.push(kl_divergence(&dist, t.row(q)));
            for (y, &p) in dist.iter().enumerate() {
                let target = if p > 0.0 {
                    let nb = belief_update(ch, &b, x, y)?;
                    let (kp, d) = project(&nb.0, n);
                    max_projection = max_projection.max(d);
                    intern((kp, graph.next(q, y)), &mut keys)?
                } else {
                    z
                };
                pw.push(p);
                next.push(target);
            }
        }
        z += 1;
    }
    // renormalize rows: the belief mixture sums to one only up to rounding
    for row in pw.chunks_mut(ny) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let mdp = FiniteMdp::new(keys.len(), nx, ny, pw, next, g)?;
    let states = keys
        .into_iter()
        .map(|(k, q)| DualState { belief: Belief(k.iter().map(|&v| v as f64 / n as f64).collect()), q })
        .collect();
    Ok((DualMdp { mdp, states }, Approximation { resolution, max_projection }))
}

/// Approximate bound from the quantized-belief MDP.
pub fn quantized_upper_bound(
    ch: &ChannelKernel,
    graph: &QGraph,
    t: &GraphTestDist,
    resolution: usize,
    state_budget: usize,
) -> Result<UpperBoundResult> {
    let (dual, approx) = build_quantized_belief_mdp(ch, graph, t, resolution, state_budget)?;
    let (rho, solution, per_initial_gain) = solve_dual(&dual.mdp)?;
    Ok(UpperBoundResult {
        rho,
        solution,
        per_initial_gain,
        test_dist: t.clone(),
        states: dual.states,
        mdp: dual.mdp,
        approximation: Some(approx),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{builtin, BuiltinName, BuiltinSpec};
    use crate::info::binary_entropy;
    use crate::qgraph::{markov_qgraph, nising_q4};

    fn ch(name: BuiltinName, eps: f64) -> ChannelKernel {
        builtin(BuiltinSpec::new(name, eps)).unwrap()
    }

    fn symmetric_t(graph: &QGraph, a: f64) -> GraphTestDist {
        GraphTestDist::new(graph.clone(), vec![a, 1.0 - a, 1.0 - a, a]).unwrap()
    }

    /// Posterior of the final state by summing the joint law over every state
    /// path.
    fn brute_posterior(c: &ChannelKernel, prior: &[f64], xs: &[usize], ys: &[usize]) -> Option<Vec<f64>> {
        let ns = c.ns();
        let n = xs.len();
        let mut post = vec![0.0; ns];
        let paths = ns.pow(n as u32 + 1);
        for code in 0..paths {
            let mut path = vec![0; n + 1];
            let mut r = code;
            for p in path.iter_mut() {
                *p = r % ns;
                r /= ns;
            }
            let mut w = prior[path[0]];
            for t in 0..n {
                w *= c.prob(path[t], xs[t], ys[t], path[t + 1]);
            }
            post[path[n]] += w;
        }
        let z: f64 = post.iter().sum();
        (z > 0.0).then(|| post.iter().map(|v| v / z).collect())
    }

    #[test]
    fn belief_recursion_matches_bayes() {
        for c in [ch(BuiltinName::Nost, 0.3), ch(BuiltinName::NIsing, 0.2)] {
            for prior in [vec![1.0, 0.0], vec![0.3, 0.7]] {
                for len in 0..=6usize {
                    for xcode in 0..(1usize << len) {
                        for ycode in 0..(1usize << len) {
                            let xs: Vec<usize> = (0..len).map(|i| (xcode >> i) & 1).collect();
                            let ys: Vec<usize> = (0..len).map(|i| (ycode >> i) & 1).collect();
                            let Some(exact) = brute_posterior(&c, &prior, &xs, &ys) else { continue };
                            let mut b = Belief::new(prior.clone()).unwrap();
                            for t in 0..len {
                                b = belief_update(&c, &b, xs[t], ys[t]).unwrap();
                            }
                            for (u, v) in b.as_slice().iter().zip(&exact) {
                                assert!((u - v).abs() < 1e-10);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn belief_examples() {
        let ising = ch(BuiltinName::Ising, 0.0);
        let f = ising.unifilar_map().unwrap();
        for s in 0..2 {
            for x in 0..2 {
                for y in 0..2 {
                    if ising.output_prob(s, x, y) > 0.0 {
                        let b = belief_update(&ising, &Belief::indicator(2, s), x, y).unwrap();
                        assert_eq!(b, Belief::indicator(2, f.next(x, y, s)));
                    }
                }
            }
        }
        let eps = 0.3;
        let ni = ch(BuiltinName::NIsing, eps);
        let b = belief_update(&ni, &Belief::new(vec![0.6, 0.4]).unwrap(), 1, 1).unwrap();
        assert!((b.as_slice()[0] - eps).abs() < 1e-15);
        let bsc = ch(BuiltinName::Bsc, 0.1);
        assert_eq!(belief_update(&bsc, &Belief::indicator(1, 0), 0, 1).unwrap().as_slice(), &[1.0]);
        assert_eq!(
            belief_update(&ising, &Belief::indicator(2, 0), 0, 1),
            Err(Error::UnreachableOutput { y: 1 })
        );
    }

    #[test]
    fn disturbance_examples() {
        let nost = ch(BuiltinName::Nost, 0.2);
        let b = Belief::new(vec![0.8, 0.2]).unwrap();
        let d = disturbance_dist(&nost, &b, 0);
        assert!((d[0] - 0.9).abs() < 1e-15 && (d[1] - 0.1).abs() < 1e-15);
        let ising = ch(BuiltinName::Ising, 0.0);
        assert_eq!(disturbance_dist(&ising, &Belief::indicator(2, 1), 0), ising.output_row(1, 0));
        let bsc = ch(BuiltinName::Bsc, 0.3);
        let u = disturbance_dist(&bsc, &Belief::indicator(1, 0), 0);
        assert_eq!(u, vec![0.7, 0.3]);
    }

    #[test]
    fn reward_examples() {
        let eps = 0.3;
        let a = 0.61;
        let nost = ch(BuiltinName::Nost, eps);
        let g = markov_qgraph(1, 2).unwrap();
        let t = symmetric_t(&g, a);
        let state = DualState { belief: Belief::new(vec![1.0 - eps, eps]).unwrap(), q: 0 };
        let expect = (1.0 - 0.5 * eps) * libm::log2((1.0 - 0.5 * eps) / a)
            + 0.5 * eps * libm::log2(eps / (2.0 * (1.0 - a)));
        assert!((reward(&nost, &t, &state, 0) - expect).abs() < 1e-14);
        // zero iff the disturbance law equals T
        let d = disturbance_dist(&nost, &state.belief, 0);
        let t2 = GraphTestDist::new(g.clone(), vec![d[0], d[1], 0.5, 0.5]).unwrap();
        assert!(reward(&nost, &t2, &state, 0).abs() < 1e-15);
        assert!(reward(&nost, &t2, &state, 1) > 0.0);
        let clean = ch(BuiltinName::Bsc, 0.0);
        let one = QGraph::new(1, 2, vec![0, 0]).unwrap();
        let tu = GraphTestDist::uniform(one);
        let st = DualState { belief: Belief::indicator(1, 0), q: 0 };
        assert!((reward(&clean, &tu, &st, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn state_counts() {
        let g = markov_qgraph(1, 2).unwrap();
        let t = GraphTestDist::uniform(g.clone());
        let nost = build_finite_dual_mdp(&ch(BuiltinName::Nost, 0.2), &g, &t).unwrap();
        assert_eq!(nost.mdp.nz(), 4);
        assert!((nost.states[0].belief.as_slice()[0] - 0.8).abs() < 1e-15);
        assert!((nost.states[2].belief.as_slice()[0] - 0.2).abs() < 1e-15);
        assert_eq!(build_finite_dual_mdp(&ch(BuiltinName::Ising, 0.0), &g, &t).unwrap().mdp.nz(), 4);
        let q4 = nising_q4();
        let t4 = GraphTestDist::uniform(q4.clone());
        assert_eq!(build_finite_dual_mdp(&ch(BuiltinName::NIsing, 0.3), &q4, &t4).unwrap().mdp.nz(), 8);
    }

    #[test]
    fn general_channels_need_quantization() {
        let mut k = vec![0.0; 8];
        k[0] = 0.5;
        k[1] = 0.5;
        k[4 + 1] = 1.0;
        let c = ChannelKernel::new(k, 1, 2, 2).unwrap();
        let g = QGraph::new(1, 2, vec![0, 0]).unwrap();
        let t = GraphTestDist::uniform(g.clone());
        assert_eq!(build_finite_dual_mdp(&c, &g, &t), Err(Error::NotFiniteClass));
        let r = quantized_upper_bound(&c, &g, &t, 11, 1000).unwrap();
        assert!(r.is_approximate());
    }

    #[test]
    fn nost_zero_closed_form() {
        let g = markov_qgraph(1, 2).unwrap();
        let r = upper_bound(&ch(BuiltinName::Nost, 0.0), &g, &symmetric_t(&g, 0.8)).unwrap();
        assert!((r.rho - libm::log2(1.25)).abs() < 1e-12, "{}", r.rho);
        assert!(r.solution.is_some());
    }

    #[test]
    fn bsc_memoryless_bound() {
        let g = QGraph::new(1, 2, vec![0, 0]).unwrap();
        for p in [0.05, 0.11, 0.25] {
            let c = ch(BuiltinName::Bsc, p);
            let r = upper_bound(&c, &g, &GraphTestDist::uniform(g.clone())).unwrap();
            assert!((r.rho - (1.0 - binary_entropy(p))).abs() < 1e-12);
            let o = optimize_test_distribution(&c, &g, &OptimizeOptions { starts: 2, ..Default::default() }).unwrap();
            assert!((o.best.rho - (1.0 - binary_entropy(p))).abs() < 1e-9);
        }
    }

    #[test]
    fn quantized_matches_exact_when_beliefs_are_on_the_lattice() {
        let g = markov_qgraph(1, 2).unwrap();
        let t = symmetric_t(&g, 0.6);
        let ising = ch(BuiltinName::Ising, 0.0);
        let exact = upper_bound(&ising, &g, &t).unwrap();
        let q = quantized_upper_bound(&ising, &g, &t, 3, 100).unwrap();
        assert_eq!(q.mdp.nz(), exact.mdp.nz());
        assert!((q.rho - exact.rho).abs() < 1e-12);
        let ni = ch(BuiltinName::NIsing, 0.3);
        let exact = upper_bound(&ni, &g, &t).unwrap();
        let q = quantized_upper_bound(&ni, &g, &t, 101, 1000).unwrap();
        assert!((q.rho - exact.rho).abs() < 1e-9, "{} {}", q.rho, exact.rho);
        assert!(q.approximation.unwrap().max_projection < 1e-12);
    }

    #[test]
    fn state_budget_is_enforced() {
        let g = markov_qgraph(1, 2).unwrap();
        let t = GraphTestDist::uniform(g.clone());
        assert_eq!(
            quantized_upper_bound(&ch(BuiltinName::NIsing, 0.3), &g, &t, 101, 3).unwrap_err(),
            Error::StateBudgetExceeded { budget: 3 }
        );
    }

    #[test]
    fn multichain_dual_mdp_is_solved_per_start() {
        // POST with a one-node graph: x = s pins the state forever
        let g = QGraph::new(1, 2, vec![0, 0]).unwrap();
        let post = ch(BuiltinName::Post, 0.0);
        let t = GraphTestDist::new(g.clone(), vec![0.7, 0.3]).unwrap();
        let r = upper_bound(&post, &g, &t).unwrap();
        let best: f64 = r
            .mdp
            .rewards()
            .chunks(2)
            .map(|c| c[0].max(c[1]))
            .fold(f64::INFINITY, f64::min);
        assert!(r.rho >= best - 1e-12);
    }

    #[test]
    fn monte_carlo_disturbance() {
        // Rejection sampling of y_3 given a fixed history, against the
        // disturbance law at the recursive belief.
        let c = ch(BuiltinName::Nost, 0.3);
        let xs = [0usize, 1, 1];
        let ys = [0usize, 1];
        let prior = [0.5, 0.5];
        let mut b = Belief::new(prior.to_vec()).unwrap();
        for t in 0..2 {
            b = belief_update(&c, &b, xs[t], ys[t]).unwrap();
        }
        let p1 = disturbance_dist(&c, &b, xs[2])[1];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sample = |rng: &mut ChaCha8Rng, s: usize, x: usize| -> (usize, usize) {
            let mut u: f64 = rng.gen();
            for y in 0..2 {
                for sp in 0..2 {
                    let p = c.prob(s, x, y, sp);
                    if u < p {
                        return (y, sp);
                    }
                    u -= p;
                }
            }
            (1, 1)
        };
        let (mut kept, mut ones) = (0u32, 0u32);
        while kept < 40_000 {
            let mut s = usize::from(rng.gen::<f64>() >= prior[0]);
            let mut ok = true;
            for t in 0..2 {
                let (y, sp) = sample(&mut rng, s, xs[t]);
                if y != ys[t] {
                    ok = false;
                    break;
                }
                s = sp;
            }
            if ok {
                kept += 1;
                ones += sample(&mut rng, s, xs[2]).0 as u32;
            }
        }
        let freq = ones as f64 / kept as f64;
        let sd = libm::sqrt(p1 * (1.0 - p1) / kept as f64);
        assert!((freq - p1).abs() < 5.0 * sd, "{freq} vs {p1}");
    }

    #[test]
    fn optimized_bound_is_deterministic() {
        let g = markov_qgraph(1, 2).unwrap();
        let c = ch(BuiltinName::Nost, 0.4);
        let opts = OptimizeOptions { starts: 3, ascent: None, ..Default::default() };
        let a = optimize_test_distribution(&c, &g, &opts).unwrap();
        let b = optimize_test_distribution(&c, &g, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.starts.len(), 3);
        assert_eq!(a.gap(), None);
    }

    #[test]
    fn ascent_matches_pattern_search() {
        let g = markov_qgraph(1, 2).unwrap();
        for (name, eps) in [(BuiltinName::Nost, 0.2), (BuiltinName::NIsing, 0.3), (BuiltinName::Ising, 0.0)] {
            let c = ch(name, eps);
            let model = DualModel::new(&c).unwrap();
            let a = occupation_ascent(&model, &g, &AscentOptions::default()).unwrap().unwrap();
            assert!(a.rho - a.lower <= 1e-10 && a.lower <= a.rho);
            let direct = optimize_test_distribution(&c, &g, &OptimizeOptions { ascent: None, ..Default::default() })
                .unwrap();
            assert!((direct.best.rho - a.rho).abs() < 1e-8, "{name}: {} vs {}", direct.best.rho, a.rho);
        }
    }

    #[test]
    fn ascent_is_certified_on_four_node_graph() {
        // grid minimum of the symmetric (a, b) family at eps = 0.1
        let g = nising_q4();
        let o = optimize_test_distribution(&ch(BuiltinName::NIsing, 0.1), &g, &OptimizeOptions::default()).unwrap();
        assert!(o.starts.is_empty());
        assert!(o.gap().unwrap() <= 1e-9);
        assert!((o.best.rho - 0.438_369_483_9).abs() < 1e-8, "{}", o.best.rho);
    }
}
