//! Closed forms for the NOST and noisy Ising (N-Ising) channels, and Bellman
//! certificates that back them.
//!
//! A certificate is a gain and a relative-value vector on the states of the
//! dual MDP built by [`DualModel`]; states are indexed `s * nq + q`, where
//! state `s = 0` carries the belief `[1 - eps, eps]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::channel::{builtin, transform_detected, BuiltinName, BuiltinSpec, ChannelKernel};
use crate::dualbound::{bound_value, occupation_ascent, AscentOptions, DualModel};
use crate::info::{binary_entropy, kl_divergence, pow0};
use crate::lowerbound::{build_sq_chain, GraphEncoder};
use crate::mdp::{self, BellmanReport, FiniteMdp};
use crate::qgraph::{markov_qgraph, nising_q4, QGraph};
use crate::search::{pattern_search, PatternOptions};
use crate::testdist::GraphTestDist;
use crate::{Error, Result};

fn log2(x: f64) -> f64 {
    libm::log2(x)
}

fn check_unit(eps: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eps) {
        Ok(())
    } else {
        Err(Error::EpsilonOutOfRange(eps))
    }
}

fn check_half(eps: f64) -> Result<()> {
    if (0.0..0.5).contains(&eps) {
        Ok(())
    } else {
        Err(Error::EpsilonOutOfRange(eps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NostClosedForm {
    pub epsilon: f64,
    pub a: f64,
    pub capacity: f64,
}

/// Optimal test parameter `a` of the NOST channel.
pub fn nost_a(eps: f64) -> f64 {
    let e = 1.0 - eps;
    let num = pow0(eps, eps) * pow0(1.0 + e, 1.0 + e);
    num / (num + pow0(e, e) * pow0(1.0 + eps, 1.0 + eps))
}

/// Feedback capacity of NOST(eps), `eps` in `[0, 1]`.
pub fn nost_capacity(eps: f64) -> Result<NostClosedForm> {
    check_unit(eps)?;
    let a = nost_a(eps);
    let e = 1.0 - eps;
    let capacity = 0.5 * log2(0.25 * pow0(eps / (1.0 - a), eps) * pow0((1.0 + e) / a, 1.0 + e));
    Ok(NostClosedForm { epsilon: eps, a, capacity })
}

/// A claimed solution `(rho, h)` of the Bellman equation of a dual MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanCertificate {
    pub channel: ChannelKernel,
    pub graph: QGraph,
    pub test_dist: GraphTestDist,
    pub rho: f64,
    pub h: Vec<f64>,
    /// Greedy policy with respect to `h`, lowest input on ties.
    pub policy: Vec<usize>,
}

impl BellmanCertificate {
    /// `h[s * nq + q]` is the relative value at belief `[1 - eps, eps]`
    /// (`s = 0`) or `[eps, 1 - eps]` (`s = 1`) and node `q`; dual states are
    /// matched by belief, so channels whose two beliefs coincide also work.
    fn assemble(
        channel: ChannelKernel,
        eps: f64,
        graph: QGraph,
        test_dist: GraphTestDist,
        rho: f64,
        h: Vec<f64>,
    ) -> Result<Self> {
        let dual = DualModel::new(&channel)?.build(&graph, &test_dist)?;
        let nq = graph.nq();
        let h = dual
            .states
            .iter()
            .map(|st| {
                let b = st.belief.as_slice();
                let s = if (b[0] - (1.0 - eps)).abs() < 1e-9 { 0 } else { 1 };
                h[s * nq + st.q]
            })
            .collect::<Vec<_>>();
        let m = dual.mdp;
        let policy = (0..m.nz())
            .map(|z| {
                (0..m.nu()).fold(0, |best, u| if m.q_value(z, u, &h) > m.q_value(z, best, &h) { u } else { best })
            })
            .collect();
        Ok(Self { channel, graph, test_dist, rho, h, policy })
    }

    pub fn mdp(&self) -> Result<FiniteMdp> {
        Ok(DualModel::new(&self.channel)?.build(&self.graph, &self.test_dist)?.mdp)
    }

    pub fn verify(&self, tol: f64) -> Result<BellmanReport> {
        mdp::verify_bellman(&self.mdp()?, self.rho, &self.h, tol)
    }
}

fn symmetric_markov(a: f64) -> Result<(QGraph, GraphTestDist)> {
    let g = markov_qgraph(1, 2)?;
    let t = GraphTestDist::new(g.clone(), vec![a, 1.0 - a, 1.0 - a, a])?;
    Ok((g, t))
}

/// Certificate for NOST(eps) on the first-order Markov graph with
/// `T(0 | 0) = T(1 | 1) = a`.
pub fn nost_certificate(eps: f64) -> Result<BellmanCertificate> {
    check_unit(eps)?;
    let NostClosedForm { a, capacity, .. } = nost_capacity(eps)?;
    let ab = 1.0 - a;
    // states whose belief disagrees with the node move to agreeing states
    // whatever the input, so h there is the better input's reward minus rho
    let off = ((1.0 - eps) * log2(a / ab)).max(eps * log2(ab / a));
    let (g, t) = symmetric_markov(a)?;
    let ch = builtin(BuiltinSpec::new(BuiltinName::Nost, eps))?;
    BellmanCertificate::assemble(ch, eps, g, t, capacity, vec![0.0, off, off, 0.0])
}

/// Input law achieving the NOST capacity on the first-order Markov graph,
/// for the unifilar form of the channel (state = last output).
#[derive(Debug, Clone, PartialEq)]
pub struct NostEncoder {
    pub channel: ChannelKernel,
    pub encoder: GraphEncoder,
    /// A start `(s0, q0)` inside the closed class.
    pub start: (usize, usize),
}

pub fn nost_encoder(eps: f64) -> Result<NostEncoder> {
    check_unit(eps)?;
    let a = nost_a(eps);
    let e = 1.0 - eps;
    let keep = (2.0 * a - e).clamp(0.0, 1.0);
    let ch = builtin(BuiltinSpec::new(BuiltinName::Nost, eps))?;
    let unifilar = match ch.unifilar_map() {
        Some(_) => ch,
        None => transform_detected(&ch)?.channel,
    };
    let ns = unifilar.ns();
    let encoder =
        GraphEncoder::state_independent(markov_qgraph(1, 2)?, ns, &[vec![keep, 1.0 - keep], vec![1.0 - keep, keep]])?;
    let start = (0..ns)
        .map(|s| (s, 0))
        .find(|&st| build_sq_chain(&unifilar, &encoder, st).is_ok())
        .ok_or(Error::NotRecurrent)?;
    Ok(NostEncoder { channel: unifilar, encoder, start })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NisingVariant {
    Markov1,
    Q4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NisingBound {
    pub epsilon: f64,
    pub variant: NisingVariant,
    pub a: f64,
    pub b: Option<f64>,
    pub gamma: Option<f64>,
    pub value: f64,
}

/// Bound on the N-Ising capacity from the first-order Markov graph,
/// `eps` in `[0, 0.5)`.
pub fn nising_ub_markov(eps: f64) -> Result<NisingBound> {
    check_half(eps)?;
    let e = 1.0 - eps;
    let gamma = 1.0 / (2.0 * eps * eps - 3.0 * eps + 2.0);
    let num = pow0(eps, eps * gamma);
    let a = num / (num + libm::pow(pow0(e, e) * libm::pow(1.0 + e, eps - 2.0), gamma) * libm::pow(1.0 + eps, gamma * (1.0 + eps)));
    let ab = 1.0 - a;
    let inner = libm::pow(16.0, eps) * pow0(eps, eps * e) * libm::pow(e * (1.0 + e), eps * eps - 3.0 * eps + 2.0)
        / (64.0 * ab * ab * libm::pow(a * ab, 2.0 * e) * libm::pow(1.0 + eps, eps * eps - eps - 2.0));
    let value = log2(inner) / (2.0 + 4.0 * e);
    Ok(NisingBound { epsilon: eps, variant: NisingVariant::Markov1, a, b: None, gamma: Some(gamma), value })
}

/// Certificate for the Markov-1 N-Ising bound. The relative value at the
/// two states whose belief disagrees with the node follows from the Bellman
/// equation at those states under the input that repeats the node.
pub fn nising_markov_certificate(eps: f64) -> Result<BellmanCertificate> {
    let bound = nising_ub_markov(eps)?;
    let a = bound.a;
    let (g, t) = symmetric_markov(a)?;
    let off = (kl_divergence(&[1.0 - eps / 2.0, eps / 2.0], &[1.0 - a, a]) - bound.value) / (1.0 - eps / 2.0);
    let ch = builtin(BuiltinSpec::new(BuiltinName::NIsing, eps))?;
    BellmanCertificate::assemble(ch, eps, g, t, bound.value, vec![0.0, off, off, 0.0])
}

/// Both closed forms below are products of a constant, a factor in `a` and
/// a factor in `b`; the grid scan precomputes the factors per axis.
struct Q4Factors {
    eps: f64,
}

impl Q4Factors {
    fn objective_const(&self) -> f64 {
        let eps = self.eps;
        let (e2, e3) = (eps * eps, eps * eps * eps);
        libm::pow(2.0, 4.0 * e2 + 2.0 * eps - 12.0) * pow0(e2 - 3.0 * eps + 2.0, e3 - e2 - 4.0 * eps + 4.0)
            / (pow0(1.0 + eps, e3 + e2 - 4.0 * eps - 4.0) * pow0(eps, e3 + e2 - 2.0 * eps))
    }

    fn objective_a(&self, a: f64) -> f64 {
        let eps = self.eps;
        pow0(1.0 - a, 4.0 * eps * eps - 6.0 * eps - 4.0) / pow0(a, 4.0 * (1.0 - eps))
    }

    fn objective_b(&self, b: f64) -> f64 {
        let eps = self.eps;
        1.0 / (pow0(b, 2.0 * eps * (1.0 - eps)) * pow0(1.0 - b, 2.0 * eps * eps - 6.0 * eps + 4.0))
    }

    fn objective_scale(&self) -> f64 {
        let eps = self.eps;
        2.0 * (1.0 + 2.0 * (1.0 - eps)) * (2.0 + eps)
    }

    fn constraint_const(&self) -> f64 {
        let eps = self.eps;
        let (e, e2, e3) = (1.0 - eps, eps * eps, eps * eps * eps);
        pow0(eps, e3 - 2.0 * e2 - 8.0 * eps) * pow0(e, e3 - 3.0 * e2 - 6.0 * eps + 8.0)
            / (pow0(1.0 + eps, e3 - e2 - 10.0 * eps - 8.0) * pow0(2.0 - eps, e3 - 4.0 * e2 - 4.0 * eps + 16.0))
    }

    fn constraint_a(&self, a: f64) -> f64 {
        let eps = self.eps;
        let e2 = eps * eps;
        1.0 / (pow0(a, 2.0 * eps - 4.0 * e2 - 4.0) * pow0(1.0 - a, 8.0 * e2 - 4.0 * eps + 8.0))
    }

    fn constraint_b(&self, b: f64) -> f64 {
        let eps = self.eps;
        let (e2, e3, e4) = (eps * eps, eps * eps * eps, eps * eps * eps * eps);
        pow0(b, 7.0 * e3 - 2.0 * e4 + 4.0 * e2 - 18.0 * eps + 12.0)
            * pow0(1.0 - b, 2.0 * e4 - 7.0 * e3 + 16.0 * eps - 8.0)
    }
}

/// The objective minimized over `(a, b)` for the four-node graph.
pub fn q4_objective(eps: f64, a: f64, b: f64) -> f64 {
    let f = Q4Factors { eps };
    log2(f.objective_const() * f.objective_a(a) * f.objective_b(b)) / f.objective_scale()
}

/// Ratio that must be at least one for `(a, b)` to be admissible.
pub fn q4_constraint(eps: f64, a: f64, b: f64) -> f64 {
    let f = Q4Factors { eps };
    f.constraint_const() * f.constraint_a(a) * f.constraint_b(b)
}

/// Relative values on the eight dual states of the four-node graph.
pub fn q4_values(eps: f64, a: f64, b: f64) -> Vec<f64> {
    let (e, ab, bb) = (1.0 - eps, 1.0 - a, 1.0 - b);
    let e2 = eps * eps;
    let e3 = e2 * eps;
    let h1 = log2(
        pow0(1.0 + eps, e2 + 3.0 * eps + 2.0) * pow0(2.0 - eps, e2 - 4.0) * pow0(b, 2.0 * e3 - e2 - 5.0 * eps + 6.0)
            / (pow0(a, 2.0 - 2.0 * e2 - eps)
                * pow0(bb, 2.0 * e3 - e2 - 5.0 * eps + 2.0)
                * pow0(eps, e2 + 2.0 * eps)
                * pow0(ab, 2.0 * e2 + eps + 2.0)
                * pow0(e, e2 + eps - 2.0)),
    ) / ((1.0 + 2.0 * e) * (2.0 + eps));
    let h3 = log2(pow0(ab, eps - 2.0) * pow0(bb, e2) / (pow0(a, eps) * pow0(b, e2 - 2.0))) / (2.0 + eps);
    let h4 = log2(b * pow0(bb, eps) / (bb * pow0(b, eps)));
    vec![h1, 0.0, h3, h4, h3, h4, h1, 0.0]
}

fn q4_table(a: f64, b: f64) -> Vec<f64> {
    vec![a, 1.0 - a, b, 1.0 - b, 1.0 - a, a, 1.0 - b, b]
}

/// Tolerance at which the four-node certificate must hold for a point to
/// count as admissible.
pub const Q4_CERT_TOL: f64 = 1e-7;

/// Evaluates the four-node bound at given `(a, b)`. A point is admissible
/// when the constraint holds and the closed-form relative values solve the
/// Bellman equation of the dual MDP at that point; only then is the
/// objective a valid bound.
#[derive(Debug, Clone)]
pub struct Q4Problem {
    eps: f64,
    model: DualModel,
    graph: QGraph,
    mdp: FiniteMdp,
    node: Vec<usize>,
}

impl Q4Problem {
    pub fn new(eps: f64) -> Result<Self> {
        check_half(eps)?;
        let ch = builtin(BuiltinSpec::new(BuiltinName::NIsing, eps))?;
        let graph = nising_q4();
        let model = DualModel::new(&ch)?;
        let dual = model.build(&graph, &GraphTestDist::uniform(graph.clone()))?;
        if dual.mdp.nz() != 8 {
            return Err(Error::DimensionMismatch { expected: 8, found: dual.mdp.nz() });
        }
        let node = dual.states.iter().map(|s| s.q).collect();
        Ok(Self { eps, model, graph, mdp: dual.mdp, node })
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    /// Largest Bellman residual of the closed-form certificate at `(a, b)`.
    pub fn residual(&self, a: f64, b: f64) -> f64 {
        let t = q4_table(a, b);
        let h = q4_values(self.eps, a, b);
        let rho = q4_objective(self.eps, a, b);
        let (nu, ny) = (self.mdp.nu(), self.mdp.nw());
        let pw = self.mdp.pw();
        let next = self.mdp.next_table();
        let mut worst = 0.0f64;
        for z in 0..self.mdp.nz() {
            let q = self.node[z];
            let mut best = f64::NEG_INFINITY;
            for u in 0..nu {
                let base = (z * nu + u) * ny;
                let row = &pw[base..base + ny];
                let mut v = kl_divergence(row, &t[q * ny..(q + 1) * ny]);
                for (w, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        v += p * h[next[base + w]];
                    }
                }
                best = best.max(v);
            }
            let r = (best - rho - h[z]).abs();
            worst = if r.is_nan() { f64::INFINITY } else { worst.max(r) };
        }
        worst
    }

    /// Objective value at `(a, b)` if admissible.
    pub fn admissible_value(&self, a: f64, b: f64) -> Option<f64> {
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
            return None;
        }
        if !(q4_constraint(self.eps, a, b) >= 1.0) {
            return None;
        }
        let v = q4_objective(self.eps, a, b);
        (v.is_finite() && self.residual(a, b) <= Q4_CERT_TOL).then_some(v)
    }

    /// Best admissible grid point among rows `rows` of the grid with
    /// `steps + 1` points per axis; ties go to the smaller `(a, b)`.
    pub fn scan_rows(&self, steps: usize, rows: core::ops::Range<usize>) -> Option<(f64, f64, f64)> {
        let f = Q4Factors { eps: self.eps };
        let (oc, cc, scale) = (f.objective_const(), f.constraint_const(), f.objective_scale());
        let bs: Vec<f64> = (0..=steps).map(|j| j as f64 / steps as f64).collect();
        let ob: Vec<f64> = bs.iter().map(|&b| f.objective_b(b)).collect();
        let cb: Vec<f64> = bs.iter().map(|&b| f.constraint_b(b)).collect();
        let mut best: Option<(f64, f64, f64)> = None;
        for i in rows {
            let a = i as f64 / steps as f64;
            let (oa, ca) = (oc * f.objective_a(a), cc * f.constraint_a(a));
            for (j, &b) in bs.iter().enumerate() {
                if !(ca * cb[j] >= 1.0) {
                    continue;
                }
                let v = log2(oa * ob[j]) / scale;
                // the residual is the expensive part; skip it for points that
                // would not be kept anyway
                if v.is_finite() && best.map_or(true, |(bv, _, _)| v < bv) && self.residual(a, b) <= Q4_CERT_TOL {
                    best = Some((v, a, b));
                }
            }
        }
        best
    }

    /// Dual MDP gain at `(a, b)`; a valid bound wherever it is finite, and
    /// convex in `(a, b)`.
    pub fn solver_value(&self, a: f64, b: f64) -> f64 {
        GraphTestDist::new(self.graph.clone(), q4_table(a, b))
            .and_then(|t| bound_value(&self.model, &self.graph, &t))
            .unwrap_or(f64::INFINITY)
    }

    /// Refines a grid point and assembles the report. The grid minimum
    /// often sits where the admissible set ends, so besides a search inside
    /// that set the occupation ascent on the graph is run and its test
    /// distribution symmetrized to `(a, b)`, scored by the solver gain, as is
    /// the first-order Markov optimum. The smallest value wins; each
    /// candidate is a valid bound.
    pub fn finish(&self, grid: (f64, f64, f64), steps: usize) -> Result<Q4Report> {
        let h = 1.0 / steps as f64;
        let (gv, ga, gb) = grid;
        let opts = PatternOptions { initial_step: h, min_step: 1e-10, tol: 1e-13, max_evals: 4_000, ..Default::default() };
        let inner = pattern_search(|p| self.admissible_value(p[0], p[1]).unwrap_or(f64::INFINITY), vec![ga, gb], &opts);
        let mut best = (gv, ga, gb);
        if inner.value < best.0 {
            best = (inner.value, inner.x[0], inner.x[1]);
        }
        if let Some(asc) = occupation_ascent(&self.model, &self.graph, &AscentOptions::default())? {
            let t = asc.test_dist.table();
            let (a, b) = ((t[0] + t[5]) / 2.0, (t[2] + t[7]) / 2.0);
            let v = self.solver_value(a, b);
            if v < best.0 {
                best = (v, a, b);
            }
        }
        // a = b is the first-order Markov test distribution on this graph
        let m = nising_ub_markov(self.eps)?.a;
        let v = self.solver_value(m, m);
        if v < best.0 {
            best = (v, m, m);
        }
        let (value, a, b) = best;
        let mut lipschitz = 0.0f64;
        for (da, db) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            if let Some(v) = self.admissible_value(ga + da, gb + db) {
                lipschitz = lipschitz.max((v - gv).abs() / h);
            }
        }
        let on_boundary = [a, b].iter().any(|&v| v <= h || v >= 1.0 - h);
        Ok(Q4Report {
            bound: NisingBound { epsilon: self.eps, variant: NisingVariant::Q4, a, b: Some(b), gamma: None, value },
            grid_value: gv,
            grid_point: (ga, gb),
            lipschitz,
            on_boundary,
            closed_form: q4_objective(self.eps, a, b),
            residual: self.residual(a, b),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Q4Report {
    pub bound: NisingBound,
    pub grid_value: f64,
    pub grid_point: (f64, f64),
    /// Largest slope to admissible grid neighbours of the grid argmin; the
    /// grid error is at most about `lipschitz * step`.
    pub lipschitz: f64,
    /// Argmin within one grid step of the edge of the unit square.
    pub on_boundary: bool,
    /// Closed-form objective at the reported point.
    pub closed_form: f64,
    /// Certificate residual at the reported point.
    pub residual: f64,
}

/// Grid points per axis minus one for [`nising_ub_q4`].
pub const Q4_GRID_STEPS: usize = 1000;

/// Bound on the N-Ising capacity from the four-node graph, minimized over
/// admissible `(a, b)`, `eps` in `[0, 0.5)`.
pub fn nising_ub_q4(eps: f64) -> Result<Q4Report> {
    let p = Q4Problem::new(eps)?;
    let grid = p.scan_rows(Q4_GRID_STEPS, 0..Q4_GRID_STEPS + 1).ok_or(Error::EmptyFeasibleSet)?;
    p.finish(grid, Q4_GRID_STEPS)
}

/// Certificate for the four-node bound at `(a, b)`.
pub fn nising_q4_certificate(eps: f64, a: f64, b: f64) -> Result<BellmanCertificate> {
    check_half(eps)?;
    let g = nising_q4();
    let t = GraphTestDist::new(g.clone(), q4_table(a, b))?;
    let ch = builtin(BuiltinSpec::new(BuiltinName::NIsing, eps))?;
    BellmanCertificate::assemble(ch, eps, g, t, q4_objective(eps, a, b), q4_values(eps, a, b))
}

/// Capacity of N-Ising(0.5), where the unifilar form is a BSC(1/4).
pub fn nising_half_capacity() -> f64 {
    1.0 - binary_entropy(0.25)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualbound::{optimize_test_distribution, upper_bound, OptimizeOptions};
    use crate::lowerbound::{achievable_rate, BCJR_TOL};

    const NOST_REF: [(f64, f64); 5] = [
        (0.0, 0.321_928_094_887_362_35),
        (0.1, 0.244_295_270_937_501_86),
        (0.2, 0.215_055_750_474_643_15),
        (0.3, 0.199_330_726_141_61),
        (0.5, 0.188_721_875_540_867_17),
    ];

    const MARKOV_REF: [(f64, f64); 6] = [
        (0.0, 0.584_962_500_721_156_1),
        (0.1, 0.438_629_454_174_803_9),
        (0.2, 0.353_446_805_865_550_05),
        (0.3, 0.288_164_924_508_562),
        (0.4, 0.233_853_507_567_898_74),
        (0.49, 0.192_747_538_619_123_05),
    ];

    #[test]
    fn nost_reference_values() {
        for (eps, c) in NOST_REF {
            let f = nost_capacity(eps).unwrap();
            assert!((f.capacity - c).abs() < 1e-13, "{eps}: {}", f.capacity);
            assert!(f.a > 0.0 && f.a < 1.0);
        }
        let zero = nost_capacity(0.0).unwrap();
        assert!((zero.a - 0.8).abs() < 1e-15);
        assert!((zero.capacity - libm::log2(1.25)).abs() < 1e-15);
    }

    #[test]
    fn nost_at_one_mirrors_zero() {
        let f = nost_capacity(1.0).unwrap();
        assert!((f.a - 0.2).abs() < 1e-15);
        assert!((f.capacity - libm::log2(1.25)).abs() < 1e-15);
        let g = markov_qgraph(1, 2).unwrap();
        let t = GraphTestDist::new(g.clone(), vec![f.a, 1.0 - f.a, 1.0 - f.a, f.a]).unwrap();
        let ub = upper_bound(&builtin(BuiltinSpec::new(BuiltinName::Nost, 1.0)).unwrap(), &g, &t).unwrap();
        assert!((ub.rho - f.capacity).abs() < 1e-12);
    }

    #[test]
    fn nost_rejects_out_of_range() {
        assert_eq!(nost_capacity(1.5), Err(Error::EpsilonOutOfRange(1.5)));
        assert!(nost_capacity(f64::NAN).is_err());
    }

    #[test]
    fn nost_certificates_hold() {
        for eps in [0.0, 0.05, 0.3, 0.5, 0.8, 1.0] {
            let c = nost_certificate(eps).unwrap();
            let r = c.verify(1e-9).unwrap();
            assert!(r.passed, "{eps}: {}", r.max_residual);
        }
    }

    #[test]
    fn nost_certificate_off_diagonal_at_zero() {
        // a = 4/5, so log2(a / (1 - a)) = 2
        let c = nost_certificate(0.0).unwrap();
        assert!((c.h[1] - 2.0).abs() < 1e-14 && (c.h[2] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn nost_inputs_tie_where_belief_matches_node() {
        let c = nost_certificate(0.3).unwrap();
        let r = c.verify(1e-9).unwrap();
        assert!(r.tied(0), "{:?}", r.near_max);
    }

    #[test]
    fn nost_encoder_achieves_capacity() {
        for i in 0..=20 {
            let eps = i as f64 / 20.0;
            let e = nost_encoder(eps).unwrap();
            let rate = achievable_rate(&e.channel, &e.encoder, e.start, BCJR_TOL).unwrap();
            let c = nost_capacity(eps).unwrap().capacity;
            assert!((rate - c).abs() < 1e-9, "{eps}: {rate} vs {c}");
        }
    }

    #[test]
    fn nost_encoder_stationary_law() {
        let e = nost_encoder(0.3).unwrap();
        assert_eq!(e.start, (0, 0));
        let chain = build_sq_chain(&e.channel, &e.encoder, e.start).unwrap();
        assert!((chain.pi_s_given_q(0, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!((chain.pi_s_given_q(1, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((chain.pi_q(0) - 0.5).abs() < 1e-12 && (chain.pi_q(1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn markov_reference_values() {
        for (eps, v) in MARKOV_REF {
            let b = nising_ub_markov(eps).unwrap();
            assert!((b.value - v).abs() < 1e-12, "{eps}: {}", b.value);
        }
        assert!(nising_ub_markov(0.5).is_err());
        assert!(nising_ub_markov(-0.1).is_err());
    }

    #[test]
    fn markov_bound_approaches_half_capacity() {
        let b = nising_ub_markov(0.5 - 1e-9).unwrap();
        assert!((b.value - nising_half_capacity()).abs() < 1e-6, "{}", b.value);
    }

    #[test]
    fn markov_matches_solver() {
        let b = nising_ub_markov(0.2).unwrap();
        let (g, t) = symmetric_markov(b.a).unwrap();
        let ub = upper_bound(&builtin(BuiltinSpec::new(BuiltinName::NIsing, 0.2)).unwrap(), &g, &t).unwrap();
        assert!((ub.rho - b.value).abs() < 1e-6);
    }

    #[test]
    fn markov_certificates_hold() {
        for eps in [0.0, 0.1, 0.25, 0.4, 0.49] {
            let r = nising_markov_certificate(eps).unwrap().verify(1e-9).unwrap();
            assert!(r.passed, "{eps}: {}", r.max_residual);
        }
    }

    #[test]
    fn q4_matches_true_minimum() {
        // minima of the dual MDP gain over the symmetric (a, b) family
        for (eps, v) in [(0.1, 0.438_369_483_9), (0.3, 0.288_164_924_5)] {
            let r = nising_ub_q4(eps).unwrap();
            assert!((r.bound.value - v).abs() < 1e-8, "{eps}: {:?}", r);
            assert!(r.residual <= Q4_CERT_TOL, "{:?}", r);
            assert!((r.closed_form - r.bound.value).abs() < 1e-8);
            assert!(!r.on_boundary);
        }
    }

    #[test]
    fn q4_rounded_epsilon() {
        // 0.1 * 3 sits one ulp above 0.3; class gains of a dual MDP on the way
        // then tie only to rounding
        let r = nising_ub_q4(0.1 * 3.0).unwrap();
        assert!((r.bound.value - 0.288_164_924_5).abs() < 1e-8, "{:?}", r);
    }

    #[test]
    fn q4_never_above_markov() {
        for eps in [0.05, 0.15, 0.2, 0.45] {
            let q4 = nising_ub_q4(eps).unwrap().bound.value;
            let m1 = nising_ub_markov(eps).unwrap().value;
            assert!(q4 <= m1 + 1e-12, "{eps}: {q4} > {m1}");
        }
    }

    #[test]
    fn q4_certificate_at_grid_argmin() {
        let r = nising_ub_q4(0.2).unwrap();
        let (a, b) = r.grid_point;
        let cert = nising_q4_certificate(0.2, a, b).unwrap();
        assert!(cert.verify(Q4_CERT_TOL).unwrap().passed);
    }

    #[test]
    fn q4_agrees_with_optimizer() {
        let r = nising_ub_q4(0.3).unwrap();
        let ch = builtin(BuiltinSpec::new(BuiltinName::NIsing, 0.3)).unwrap();
        let o = optimize_test_distribution(&ch, &nising_q4(), &OptimizeOptions::default()).unwrap();
        assert!((o.best.rho - r.bound.value).abs() < 1e-5);
    }

    #[test]
    fn constraint_alone_is_not_enough() {
        // points passing the constraint whose certificate fails
        let p = Q4Problem::new(0.3).unwrap();
        let mut found = false;
        for i in 1..100 {
            for j in 1..100 {
                let (a, b) = (i as f64 / 100.0, j as f64 / 100.0);
                if q4_constraint(0.3, a, b) >= 1.0 && p.residual(a, b) > Q4_CERT_TOL {
                    found = true;
                }
            }
        }
        assert!(found);
    }
}
