//! Serializable reports and their plain-text rendering.

use std::fmt::Write as _;

use fscap_core::dualbound::{Optimized, UpperBoundResult};
use fscap_core::lowerbound::{BcjrReport, GraphEncoder, SqChain};
use fscap_core::mdp::BellmanReport;
use fscap_core::qgraph::QGraph;
use serde::Serialize;

use crate::format::ChannelFile;

fn rows(values: &[f64], cols: usize) -> Vec<Vec<f64>> {
    values.chunks(cols).map(<[f64]>::to_vec).collect()
}

fn fmt_row(row: &[f64]) -> String {
    row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// A Q-graph with 1-based successors, as in the text format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphOut {
    pub nq: usize,
    pub ny: usize,
    pub successors: Vec<Vec<usize>>,
}

impl GraphOut {
    pub fn new(g: &QGraph) -> Self {
        Self { nq: g.nq(), ny: g.ny(), successors: g.table().chunks(g.ny()).map(|r| r.iter().map(|q| q + 1).collect()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateOut {
    pub belief: Vec<f64>,
    /// 1-based node.
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartOut {
    pub index: usize,
    pub rho: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AscentOut {
    pub rho: f64,
    pub lower: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerOut {
    pub starts: Vec<StartOut>,
    pub ascent: Option<AscentOut>,
    /// Certified distance to the best bound on the graph.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxOut {
    pub resolution: usize,
    pub max_projection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UbReport {
    pub channel_class: String,
    /// The MDP was built on the unifilar rewrite of a finite-memory channel.
    pub transformed: bool,
    pub qgraph: GraphOut,
    /// The test distribution used, `[q][y]`.
    pub test_dist: Vec<Vec<f64>>,
    pub rho: f64,
    pub policy: Option<Vec<usize>>,
    pub h: Option<Vec<f64>>,
    /// Optimal gain per start state when it depends on the start.
    pub per_initial_gain: Option<Vec<f64>>,
    pub states: Vec<StateOut>,
    pub optimizer: Option<OptimizerOut>,
    /// Present for quantized-belief runs, which are not guaranteed bounds.
    pub approximation: Option<ApproxOut>,
}

impl UbReport {
    pub fn new(class: &str, transformed: bool, graph: &QGraph, r: &UpperBoundResult, opt: Option<&Optimized>) -> Self {
        Self {
            channel_class: class.to_string(),
            transformed,
            qgraph: GraphOut::new(graph),
            test_dist: rows(r.test_dist.table(), graph.ny()),
            rho: r.rho,
            policy: r.solution.as_ref().map(|s| s.policy.clone()),
            h: r.solution.as_ref().map(|s| s.h.clone()),
            per_initial_gain: r.per_initial_gain.clone(),
            states: r.states.iter().map(|s| StateOut { belief: s.belief.as_slice().to_vec(), q: s.q + 1 }).collect(),
            optimizer: opt.map(|o| OptimizerOut {
                starts: o.starts.iter().map(|s| StartOut { index: s.index, rho: s.rho, evals: s.evals }).collect(),
                ascent: o.ascent.as_ref().map(|a| AscentOut { rho: a.rho, lower: a.lower, iterations: a.iterations }),
                gap: o.gap(),
            }),
            approximation: r
                .approximation
                .map(|a| ApproxOut { resolution: a.resolution, max_projection: a.max_projection }),
        }
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rho = {}", self.rho);
        if let Some(a) = &self.approximation {
            let _ = writeln!(
                out,
                "approximate: quantized beliefs, resolution {}, max projection {:e}",
                a.resolution, a.max_projection
            );
        }
        let _ = writeln!(out, "channel: {}{}", self.channel_class, if self.transformed { " (transformed)" } else { "" });
        let _ = writeln!(out, "test distribution T(y|q):");
        for (q, row) in self.test_dist.iter().enumerate() {
            let _ = writeln!(out, "  q={}: {}", q + 1, fmt_row(row));
        }
        if let Some(o) = &self.optimizer {
            if let Some(a) = &o.ascent {
                let _ = writeln!(out, "ascent: rho {} lower {} after {} iterations", a.rho, a.lower, a.iterations);
            }
            for s in &o.starts {
                let _ = writeln!(out, "start {}: rho {} ({} evaluations)", s.index, s.rho, s.evals);
            }
            if let Some(g) = o.gap {
                let _ = writeln!(out, "certified gap: {g:e}");
            }
        }
        let _ = writeln!(out, "state  belief  q  action  h");
        for (z, st) in self.states.iter().enumerate() {
            let action = self.policy.as_ref().map_or("-".to_string(), |p| p[z].to_string());
            let h = self.h.as_ref().map_or("-".to_string(), |h| h[z].to_string());
            let _ = writeln!(out, "{z}  [{}]  {}  {action}  {h}", fmt_row(&st.belief), st.q);
        }
        if let Some(g) = &self.per_initial_gain {
            let _ = writeln!(out, "gain depends on the start state; per state: {}", fmt_row(g));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BcjrOut {
    pub max_violation: f64,
    /// `(s+, q, y)`, 1-based.
    pub argmax: Option<(usize, usize, usize)>,
    pub tol: f64,
    pub passed: bool,
}

impl BcjrOut {
    pub fn new(r: &BcjrReport) -> Self {
        Self {
            max_violation: r.max_violation,
            argmax: r.argmax.map(|(s, q, y)| (s + 1, q + 1, y + 1)),
            tol: r.tol,
            passed: r.passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LbReport {
    /// `I(X,S;Y|Q)` under the stationary law; an achievable rate only when
    /// `bcjr.passed` and `aperiodic`.
    pub rate: f64,
    pub valid: bool,
    pub transformed: bool,
    /// 1-based `(s, q)`.
    pub start: (usize, usize),
    pub aperiodic: bool,
    pub period: usize,
    /// `[s][q]`.
    pub stationary: Vec<Vec<f64>>,
    pub bcjr: BcjrOut,
    /// `[s * nq + q][x]`.
    pub encoder: Vec<Vec<f64>>,
    pub qgraph: GraphOut,
}

impl LbReport {
    pub fn new(
        rate: f64,
        transformed: bool,
        start: (usize, usize),
        enc: &GraphEncoder,
        chain: &SqChain,
        bcjr: &BcjrReport,
    ) -> Self {
        let nq = enc.graph().nq();
        Self {
            rate,
            valid: bcjr.passed && chain.is_aperiodic(),
            transformed,
            start: (start.0 + 1, start.1 + 1),
            aperiodic: chain.is_aperiodic(),
            period: chain.period,
            stationary: rows(&chain.stationary, nq),
            bcjr: BcjrOut::new(bcjr),
            encoder: rows(enc.table(), enc.nx()),
            qgraph: GraphOut::new(enc.graph()),
        }
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rate = {}", self.rate);
        let _ = writeln!(out, "valid lower bound: {}", if self.valid { "yes" } else { "no" });
        let _ = writeln!(
            out,
            "BCJR invariance: {} (max violation {:e}, tol {:e})",
            if self.bcjr.passed { "pass" } else { "FAIL" },
            self.bcjr.max_violation,
            self.bcjr.tol
        );
        if let Some((s, q, y)) = self.bcjr.argmax {
            let _ = writeln!(out, "  worst at s+={s} q={q} y={y}");
        }
        let _ = writeln!(out, "start (s, q) = ({}, {}), period {}", self.start.0, self.start.1, self.period);
        let nq = self.qgraph.nq;
        let _ = writeln!(out, "encoder P(x|s,q) and stationary weight:");
        for (i, row) in self.encoder.iter().enumerate() {
            let (s, q) = (i / nq, i % nq);
            let _ = writeln!(out, "  s={} q={}: {}  pi={}", s + 1, q + 1, fmt_row(row), self.stationary[s][q]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumerateReport {
    pub nodes: usize,
    pub ny: usize,
    pub canonical: bool,
    pub count: u64,
    pub tables: Option<Vec<GraphOut>>,
}

impl EnumerateReport {
    pub fn text(&self) -> String {
        let mut out = format!("{}\n", self.count);
        for g in self.tables.iter().flatten() {
            out.push('\n');
            for row in &g.successors {
                out.push_str(&row.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" "));
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub rho: f64,
    pub tol: f64,
    pub max_residual: f64,
    pub passed: bool,
    pub residuals: Vec<f64>,
    pub argmax: Vec<usize>,
    /// States where more than one action attains the maximum.
    pub tied: Vec<usize>,
}

impl VerifyReport {
    pub fn new(rho: f64, r: &BellmanReport) -> Self {
        Self {
            rho,
            tol: r.tol,
            max_residual: r.max_residual,
            passed: r.passed,
            residuals: r.residuals.clone(),
            argmax: r.argmax.clone(),
            tied: (0..r.residuals.len()).filter(|&z| r.tied(z)).collect(),
        }
    }

    pub fn text(&self) -> String {
        let mut out = format!(
            "{}: max residual {:e} (tol {:e})\n",
            if self.passed { "pass" } else { "FAIL" },
            self.max_residual,
            self.tol
        );
        for (z, r) in self.residuals.iter().enumerate() {
            let tie = if self.tied.contains(&z) { "  tied" } else { "" };
            let _ = writeln!(out, "  z={z}: residual {r:e}, action {}{tie}", self.argmax[z]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformReport {
    pub class: String,
    /// Window lengths, when the channel was rewritten.
    pub inputs: Option<usize>,
    pub outputs: Option<usize>,
    /// Original-state belief carried by each new state.
    pub beliefs: Vec<Vec<f64>>,
    pub channel: ChannelFile,
}

impl TransformReport {
    pub fn text(&self) -> String {
        let mut out = format!("class: {}\n", self.class);
        if let (Some(i), Some(o)) = (self.inputs, self.outputs) {
            let _ = writeln!(out, "window: {i} inputs, {o} outputs");
        }
        for (s, b) in self.beliefs.iter().enumerate() {
            let _ = writeln!(out, "state {s}: belief [{}]", fmt_row(b));
        }
        out.push_str(&serde_json::to_string_pretty(&self.channel).expect("channel serializes"));
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateOut {
    pub rho: f64,
    pub h: Vec<f64>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Q4Out {
    pub value: f64,
    pub a: f64,
    pub b: f64,
    pub grid_value: f64,
    pub grid_point: (f64, f64),
    pub lipschitz: f64,
    pub on_boundary: bool,
    pub closed_form: f64,
    pub residual: f64,
    /// Certificate at the grid argmin.
    pub grid_certificate: CertificateOut,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticReport {
    pub channel: String,
    pub epsilon: f64,
    /// Closed-form capacity, where one is known.
    pub capacity: Option<f64>,
    /// Markov-1 test parameter.
    pub a: Option<f64>,
    pub markov1: Option<f64>,
    pub markov1_certificate: Option<CertificateOut>,
    pub q4: Option<Q4Out>,
}

impl AnalyticReport {
    pub fn text(&self) -> String {
        let mut out = format!("{} eps={}\n", self.channel, self.epsilon);
        if let Some(c) = self.capacity {
            let _ = writeln!(out, "capacity = {c}");
        }
        if let Some(a) = self.a {
            let _ = writeln!(out, "a = {a}");
        }
        if let Some(v) = self.markov1 {
            let _ = writeln!(out, "markov-1 bound = {v}");
        }
        if let Some(c) = &self.markov1_certificate {
            let _ = writeln!(out, "markov-1 certificate residual {:e}", c.max_residual);
        }
        if let Some(q) = &self.q4 {
            let _ = writeln!(out, "appendix-d4 bound = {} at a={} b={}", q.value, q.a, q.b);
            let _ = writeln!(
                out,
                "  grid {} at ({}, {}), slope {}, boundary {}",
                q.grid_value, q.grid_point.0, q.grid_point.1, q.lipschitz, q.on_boundary
            );
            let _ = writeln!(
                out,
                "  certificate residual {:e} at the refined point, {:e} at the grid point",
                q.residual, q.grid_certificate.max_residual
            );
        }
        out
    }
}
