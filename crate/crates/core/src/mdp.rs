//! Finite average-reward MDPs with a disturbance-driven transition
//! `z' = F(z, u, w)`, `w ~ Pw(. | z, u)`, and reward `g(z, u)`.
//!
//! Solvers: relative value iteration, unichain policy iteration, and
//! multichain policy iteration. Ties between
//! actions are broken toward the lowest index.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::{graph, linalg, Error, Result, STOCHASTIC_TOL};

/// Default stopping tolerance for value iteration.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration cap for value iteration.
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Self-loop weight of the aperiodicity transform used by value iteration.
const TAU: f64 = 0.5;
/// Relative margin an action must win by to displace the incumbent.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    nz: usize,
    nu: usize,
    nw: usize,
    pw: Vec<f64>,
    next: Vec<usize>,
    g: Vec<f64>,
    /// Merged successor lists per `(z, u)`.
    succ: Vec<Vec<(usize, f64)>>,
}

impl FiniteMdp {
    /// `pw` and `next` are `[z][u][w]`, `g` is `[z][u]`.
    pub fn new(
        nz: usize,
        nu: usize,
        nw: usize,
        pw: Vec<f64>,
        next: Vec<usize>,
        g: Vec<f64>,
    ) -> Result<Self> {
        if nz == 0 || nu == 0 || nw == 0 {
            return Err(Error::InvalidArgument("MDP sizes must be positive"));
        }
        let n = nz * nu * nw;
        for (len, expected) in [(pw.len(), n), (next.len(), n), (g.len(), nz * nu)] {
            if len != expected {
                return Err(Error::DimensionMismatch { expected, found: len });
            }
        }
        if let Some((index, &value)) =
            pw.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidEntry { index, value });
        }
        for (row, chunk) in pw.chunks(nw).enumerate() {
            let deficit = chunk.iter().sum::<f64>() - 1.0;
            if deficit.abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic { row, deficit });
            }
        }
        if let Some(&bad) = next.iter().find(|&&z| z >= nz) {
            return Err(Error::IndexOutOfRange { index: bad, bound: nz });
        }
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let succ = (0..nz * nu)
            .map(|zu| {
                let mut out: Vec<(usize, f64)> = Vec::new();
                for w in 0..nw {
                    let p = pw[zu * nw + w];
                    if p == 0.0 {
                        continue;
                    }
                    let t = next[zu * nw + w];
                    match out.iter_mut().find(|(s, _)| *s == t) {
                        Some(e) => e.1 += p,
                        None => out.push((t, p)),
                    }
                }
                out
            })
            .collect();
        Ok(Self { nz, nu, nw, pw, next, g, succ })
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn nw(&self) -> usize {
        self.nw
    }

    pub fn pw(&self) -> &[f64] {
        &self.pw
    }

    pub fn next_table(&self) -> &[usize] {
        &self.next
    }

    pub fn rewards(&self) -> &[f64] {
        &self.g
    }

    #[inline]
    pub fn reward(&self, z: usize, u: usize) -> f64 {
        self.g[z * self.nu + u]
    }

    /// Successor states of `(z, u)` with their probabilities.
    #[inline]
    pub fn successors(&self, z: usize, u: usize) -> &[(usize, f64)] {
        &self.succ[z * self.nu + u]
    }

    /// Same MDP with rewards replaced.
    pub fn with_rewards(&self, g: Vec<f64>) -> Result<Self> {
        Self::new(self.nz, self.nu, self.nw, self.pw.clone(), self.next.clone(), g)
    }

    /// `g(z, u) + sum P(z'|z,u) h(z')`.
    #[inline]
    pub fn q_value(&self, z: usize, u: usize, h: &[f64]) -> f64 {
        self.reward(z, u) + self.expect(z, u, h)
    }

    #[inline]
    fn expect(&self, z: usize, u: usize, h: &[f64]) -> f64 {
        self.successors(z, u).iter().map(|&(t, p)| p * h[t]).sum()
    }

    /// Greedy action with lowest-index tie breaking.
    fn greedy(&self, z: usize, h: &[f64]) -> (usize, f64) {
        let mut best = (0, self.q_value(z, 0, h));
        for u in 1..self.nu {
            let v = self.q_value(z, u, h);
            if v > best.1 + TIE_EPS * (1.0 + best.1.abs()) {
                best = (u, v);
            }
        }
        best
    }

    /// Recurrent classes of the chain induced by `policy`.
    pub fn recurrent_classes(&self, policy: &[usize]) -> Vec<Vec<usize>> {
        let adj: Vec<Vec<usize>> = (0..self.nz)
            .map(|z| self.successors(z, policy[z]).iter().map(|&(t, _)| t).collect())
            .collect();
        graph::closed_classes(&adj)
    }

    fn check_policy(&self, policy: &[usize]) -> Result<()> {
        if policy.len() != self.nz {
            return Err(Error::DimensionMismatch { expected: self.nz, found: policy.len() });
        }
        if let Some(&u) = policy.iter().find(|&&u| u >= self.nu) {
            return Err(Error::IndexOutOfRange { index: u, bound: self.nu });
        }
        Ok(())
    }

    fn require_unichain(&self, policy: &[usize]) -> Result<()> {
        let classes = self.recurrent_classes(policy).len();
        if classes > 1 {
            return Err(Error::MultichainDetected { policy: policy.to_vec(), classes });
        }
        Ok(())
    }
}

/// Average reward, relative values pinned at `h[0] = 0`, and a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSolution {
    pub rho: f64,
    pub h: Vec<f64>,
    pub policy: Vec<usize>,
    /// Certified interval containing the optimal gain.
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
}

/// Relative value iteration on the aperiodic transform
/// `P~ = TAU I + (1 - TAU) P`, `g~ = (1 - TAU) g`, which has the same relative
/// values and gain scaled by `1 - TAU`. Stops when the span of `V_{k+1} - V_k`,
/// rescaled to the original problem, is below `tol`.
///
/// For MDPs whose optimal gain depends on the start state the span does not
/// vanish and this returns [`Error::NotConverged`] with the last bracket.
pub fn value_iteration(mdp: &FiniteMdp, tol: f64, max_iter: usize) -> Result<MdpSolution> {
    value_iteration_from(mdp, tol, max_iter, vec![0.0; mdp.nz])
}

/// [`value_iteration`] warm-started from `h0`.
pub fn value_iteration_from(
    mdp: &FiniteMdp,
    tol: f64,
    max_iter: usize,
    h0: Vec<f64>,
) -> Result<MdpSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive"));
    }
    if h0.len() != mdp.nz {
        return Err(Error::DimensionMismatch { expected: mdp.nz, found: h0.len() });
    }
    let scale = 1.0 - TAU;
    let mut v = h0;
    let mut w = vec![0.0; mdp.nz];
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for it in 1..=max_iter {
        let (mut dlo, mut dhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for z in 0..mdp.nz {
            let best = (0..mdp.nu)
                .map(|u| mdp.q_value(z, u, &v))
                .fold(f64::NEG_INFINITY, f64::max);
            w[z] = TAU * v[z] + scale * best;
            let d = w[z] - v[z];
            dlo = dlo.min(d);
            dhi = dhi.max(d);
        }
        lo = dlo / scale;
        hi = dhi / scale;
        let anchor = w[0];
        for (vz, wz) in v.iter_mut().zip(&w) {
            *vz = wz - anchor;
        }
        if hi - lo < tol {
            let policy = (0..mdp.nz).map(|z| mdp.greedy(z, &v).0).collect();
            return Ok(MdpSolution {
                rho: 0.5 * (lo + hi),
                h: v,
                policy,
                lower: lo,
                upper: hi,
                iterations: it,
            });
        }
    }
    Err(Error::NotConverged { iterations: max_iter, lower: lo, upper: hi })
}

/// Gain and relative values of a unichain policy, `h[0] = 0`.
fn evaluate(mdp: &FiniteMdp, policy: &[usize]) -> Result<(f64, Vec<f64>)> {
    let n = mdp.nz;
    // unknowns: rho, h[1..n]
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for z in 0..n {
        let u = policy[z];
        a[z * n] = 1.0;
        if z > 0 {
            a[z * n + z] += 1.0;
        }
        for &(t, p) in mdp.successors(z, u) {
            if t > 0 {
                a[z * n + t] -= p;
            }
        }
        b[z] = mdp.reward(z, u);
    }
    let x = linalg::solve(a, b)?;
    let mut h = x.clone();
    let rho = x[0];
    h[0] = 0.0;
    Ok((rho, h))
}

/// Iteration cap for [`policy_iteration`].
const MAX_POLICY_ROUNDS: usize = 10_000;

/// Howard policy iteration for unichain problems. Every evaluated policy is
/// checked; a policy with several recurrent classes aborts with
/// [`Error::MultichainDetected`].
pub fn policy_iteration(mdp: &FiniteMdp) -> Result<MdpSolution> {
    let mut policy: Vec<usize> = (0..mdp.nz)
        .map(|z| mdp.greedy(z, &vec![0.0; mdp.nz]).0)
        .collect();
    for round in 1..=MAX_POLICY_ROUNDS {
        mdp.require_unichain(&policy)?;
        let (rho, h) = evaluate(mdp, &policy)?;
        let mut changed = false;
        for z in 0..mdp.nz {
            let current = mdp.q_value(z, policy[z], &h);
            let (u, best) = mdp.greedy(z, &h);
            if u != policy[z] && best > current + TIE_EPS * (1.0 + current.abs()) {
                policy[z] = u;
                changed = true;
            }
        }
        if !changed {
            let residual = bellman_residuals(mdp, rho, &h)
                .iter()
                .fold(0.0f64, |m, r| m.max(r.abs()));
            return Ok(MdpSolution {
                rho,
                h,
                policy,
                lower: rho - residual,
                upper: rho + residual,
                iterations: round,
            });
        }
    }
    Err(Error::NotConverged { iterations: MAX_POLICY_ROUNDS, lower: f64::NAN, upper: f64::NAN })
}

fn bellman_residuals(mdp: &FiniteMdp, rho: f64, h: &[f64]) -> Vec<f64> {
    (0..mdp.nz).map(|z| mdp.greedy(z, h).1 - rho - h[z]).collect()
}

/// Per-state check of `rho + h(z) = max_u [g(z,u) + E h(F(z,u,w))]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanReport {
    /// `max_u[...] - rho - h(z)` per state.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Lowest-index maximizing action per state.
    pub argmax: Vec<usize>,
    /// All actions within `tol` of the maximum, per state.
    pub near_max: Vec<Vec<usize>>,
    pub tol: f64,
    pub passed: bool,
}

impl BellmanReport {
    /// True iff more than one action attains the maximum at `z`.
    pub fn tied(&self, z: usize) -> bool {
        self.near_max[z].len() > 1
    }
}

pub fn verify_bellman(mdp: &FiniteMdp, rho: f64, h: &[f64], tol: f64) -> Result<BellmanReport> {
    if h.len() != mdp.nz {
        return Err(Error::DimensionMismatch { expected: mdp.nz, found: h.len() });
    }
    let mut residuals = Vec::with_capacity(mdp.nz);
    let mut argmax = Vec::with_capacity(mdp.nz);
    let mut near_max = Vec::with_capacity(mdp.nz);
    for z in 0..mdp.nz {
        let q: Vec<f64> = (0..mdp.nu).map(|u| mdp.q_value(z, u, h)).collect();
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        argmax.push(q.iter().position(|&v| v == best).unwrap_or(0));
        near_max.push((0..mdp.nu).filter(|&u| best - q[u] <= tol).collect());
        residuals.push(best - rho - h[z]);
    }
    let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let passed = max_residual <= tol && max_residual.is_finite();
    Ok(BellmanReport { residuals, max_residual, argmax, near_max, tol, passed })
}

/// Stationary distribution of the (unichain) chain induced by `policy`.
pub fn stationary_distribution(mdp: &FiniteMdp, policy: &[usize]) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    mdp.require_unichain(policy)?;
    let n = mdp.nz;
    // pi (I - P) = 0 with the last equation replaced by sum(pi) = 1,
    // written column-wise as a system in pi.
    let mut a = vec![0.0; n * n];
    for z in 0..n {
        a[z * n + z] += 1.0;
        for &(t, p) in mdp.successors(z, policy[z]) {
            a[t * n + z] -= p;
        }
    }
    for z in 0..n {
        a[(n - 1) * n + z] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let mut pi = linalg::solve(a, b)?;
    pi.iter_mut().for_each(|p| *p = p.max(0.0));
    Ok(pi)
}

/// Stationary distribution of the chain induced by `policy` restricted to
/// one of its recurrent classes, as a full-length vector.
pub fn class_distribution(mdp: &FiniteMdp, policy: &[usize], class: &[usize]) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let n = class.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty class"));
    }
    let mut local = vec![usize::MAX; mdp.nz];
    for (i, &z) in class.iter().enumerate() {
        local[z] = i;
    }
    let mut a = vec![0.0; n * n];
    for (i, &z) in class.iter().enumerate() {
        a[i * n + i] += 1.0;
        for &(t, p) in mdp.successors(z, policy[z]) {
            let j = local[t];
            if j == usize::MAX {
                return Err(Error::NotRecurrent);
            }
            a[j * n + i] -= p;
        }
    }
    for i in 0..n {
        a[(n - 1) * n + i] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let pi = linalg::solve(a, b)?;
    let mut full = vec![0.0; mdp.nz];
    for (i, &z) in class.iter().enumerate() {
        full[z] = pi[i].max(0.0);
    }
    Ok(full)
}

/// Long-run average reward of a stationary deterministic policy,
/// `sum_z pi(z) g(z, policy(z))`.
pub fn evaluate_policy(mdp: &FiniteMdp, policy: &[usize]) -> Result<f64> {
    let pi = stationary_distribution(mdp, policy)?;
    Ok(pi.iter().enumerate().map(|(z, p)| p * mdp.reward(z, policy[z])).sum())
}

/// Optimal gain and bias for a general (multichain) MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichainSolution {
    /// Optimal gain per start state.
    pub gains: Vec<f64>,
    /// Relative values, zero at the smallest state of each recurrent class.
    pub h: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
}

impl MultichainSolution {
    /// Converts to a single-gain solution when the gain does not depend on
    /// the start state (within `spread`).
    pub fn to_unichain(&self, spread: f64) -> Option<MdpSolution> {
        let lo = self.gains.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > spread {
            return None;
        }
        let h: Vec<f64> = self.h.iter().map(|v| v - self.h[0]).collect();
        Some(MdpSolution {
            rho: lo,
            h,
            policy: self.policy.clone(),
            lower: lo,
            upper: hi,
            iterations: self.iterations,
        })
    }
}

/// Gain and bias vectors of an arbitrary policy. Within each recurrent class
/// the gain is constant and `h` is pinned at the class's smallest state;
/// transient states follow from the linear equations restricted to them.
fn evaluate_multichain(mdp: &FiniteMdp, policy: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = mdp.nz;
    let classes = mdp.recurrent_classes(policy);
    let mut gain = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut recurrent = vec![false; n];
    for class in &classes {
        let m = class.len();
        let pos = |z: usize| class.binary_search(&z).expect("closed class");
        // unknowns: gain, h[class[1..]]
        let mut a = vec![0.0; m * m];
        let mut b = vec![0.0; m];
        for (i, &z) in class.iter().enumerate() {
            let u = policy[z];
            a[i * m] = 1.0;
            if i > 0 {
                a[i * m + i] += 1.0;
            }
            for &(t, p) in mdp.successors(z, u) {
                let j = pos(t);
                if j > 0 {
                    a[i * m + j] -= p;
                }
            }
            b[i] = mdp.reward(z, u);
        }
        let x = linalg::solve(a, b)?;
        for (i, &z) in class.iter().enumerate() {
            recurrent[z] = true;
            gain[z] = x[0];
            h[z] = if i == 0 { 0.0 } else { x[i] };
        }
    }
    let transient: Vec<usize> = (0..n).filter(|&z| !recurrent[z]).collect();
    let m = transient.len();
    if m > 0 {
        let mut index = vec![usize::MAX; n];
        for (i, &z) in transient.iter().enumerate() {
            index[z] = i;
        }
        let mut a = vec![0.0; m * m];
        let mut bg = vec![0.0; m];
        for (i, &z) in transient.iter().enumerate() {
            a[i * m + i] += 1.0;
            for &(t, p) in mdp.successors(z, policy[z]) {
                if recurrent[t] {
                    bg[i] += p * gain[t];
                } else {
                    a[i * m + index[t]] -= p;
                }
            }
        }
        let gt = linalg::solve(a.clone(), bg)?;
        for (i, &z) in transient.iter().enumerate() {
            gain[z] = gt[i];
        }
        let mut bh = vec![0.0; m];
        for (i, &z) in transient.iter().enumerate() {
            bh[i] = mdp.reward(z, policy[z]) - gain[z];
            for &(t, p) in mdp.successors(z, policy[z]) {
                if recurrent[t] {
                    bh[i] += p * h[t];
                }
            }
        }
        let ht = linalg::solve(a, bh)?;
        for (i, &z) in transient.iter().enumerate() {
            h[z] = ht[i];
        }
    }
    Ok((gain, h))
}

/// Multichain policy iteration: each round first improves the expected next
/// gain, and only where no gain improvement exists, the one-step bias value
/// among gain-preserving actions.
///
/// Unlike value iteration this stays exact when the best policy splits into
/// recurrent classes with nearly equal gains.
///
/// When class gains agree only to within the tie tolerance, rounding can make
/// the bias step cycle. A repeated policy ends the iteration with the policy
/// of the cycle that has the fewest recurrent classes.
pub fn multichain_policy_iteration(mdp: &FiniteMdp) -> Result<MultichainSolution> {
    let better = |new: f64, old: f64| new > old + TIE_EPS * (1.0 + old.abs());
    let mut policy: Vec<usize> = (0..mdp.nz)
        .map(|z| mdp.greedy(z, &vec![0.0; mdp.nz]).0)
        .collect();
    let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut history: Vec<Vec<usize>> = Vec::new();
    for round in 1..=MAX_POLICY_ROUNDS {
        if let Some(&first) = seen.get(&policy) {
            let pick = history[first..]
                .iter()
                .min_by_key(|p| mdp.recurrent_classes(p).len())
                .expect("cycle is non-empty")
                .clone();
            let (gains, h) = evaluate_multichain(mdp, &pick)?;
            return Ok(MultichainSolution { gains, h, policy: pick, iterations: round });
        }
        seen.insert(policy.clone(), history.len());
        history.push(policy.clone());
        let (gain, h) = evaluate_multichain(mdp, &policy)?;
        let mut changed = false;
        for z in 0..mdp.nz {
            let current = mdp.expect(z, policy[z], &gain);
            let mut best = (policy[z], current);
            for u in 0..mdp.nu {
                let v = mdp.expect(z, u, &gain);
                if better(v, best.1) {
                    best = (u, v);
                }
            }
            if best.0 != policy[z] {
                policy[z] = best.0;
                changed = true;
            }
        }
        if !changed {
            for z in 0..mdp.nz {
                let current = mdp.q_value(z, policy[z], &h);
                let mut best = (policy[z], current);
                for u in 0..mdp.nu {
                    if better(mdp.expect(z, u, &gain), gain[z]) || better(gain[z], mdp.expect(z, u, &gain)) {
                        continue;
                    }
                    let v = mdp.q_value(z, u, &h);
                    if better(v, best.1) {
                        best = (u, v);
                    }
                }
                if best.0 != policy[z] {
                    policy[z] = best.0;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(MultichainSolution { gains: gain, h, policy, iterations: round });
        }
    }
    Err(Error::NotConverged { iterations: MAX_POLICY_ROUNDS, lower: f64::NAN, upper: f64::NAN })
}

/// Random MDP in which every policy is unichain: disturbance 0 always has
/// positive probability and leads to state 0.
pub fn random_unichain<R: Rng + ?Sized>(rng: &mut R, nz: usize, nu: usize, nw: usize) -> FiniteMdp {
    let mut pw = Vec::with_capacity(nz * nu * nw);
    let mut next = Vec::with_capacity(nz * nu * nw);
    for _ in 0..nz * nu {
        let raw: Vec<f64> = (0..nw).map(|w| rng.gen::<f64>() + if w == 0 { 0.05 } else { 0.0 }).collect();
        let s: f64 = raw.iter().sum();
        pw.extend(raw.iter().map(|v| v / s));
        next.push(0);
        next.extend((1..nw).map(|_| rng.gen_range(0..nz)));
    }
    let g = (0..nz * nu).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FiniteMdp::new(nz, nu, nw, pw, next, g).expect("random rows are stochastic")
}
