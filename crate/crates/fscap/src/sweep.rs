//! Epsilon sweeps of the upper and lower bounds for the built-in channels.

use std::time::Instant;

use fscap_core::analytic::nost_encoder;
use fscap_core::channel::{builtin, BuiltinName, BuiltinSpec, ChannelKernel};
use fscap_core::dualbound::{optimize_test_distribution, DualModel, OptimizeOptions};
use fscap_core::lowerbound::{achievable_rate, build_sq_chain, search_encoder, EncoderSearchOptions, GraphEncoder, BCJR_TOL};
use fscap_core::qgraph::{markov_qgraph, QGraph};
use fscap_core::Result;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepChannel {
    Nost,
    Nising,
}

impl SweepChannel {
    pub fn name(self) -> BuiltinName {
        match self {
            SweepChannel::Nost => BuiltinName::Nost,
            SweepChannel::Nising => BuiltinName::NIsing,
        }
    }

    /// Graph used when none is given.
    pub fn default_graph(self) -> &'static str {
        match self {
            SweepChannel::Nost => "markov-1",
            SweepChannel::Nising => "appendix-d4",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub channel: SweepChannel,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    pub graph: QGraph,
    pub graph_id: String,
    pub lower: bool,
    pub runtime: bool,
    pub optimize: OptimizeOptions,
}

/// One sweep point. Missing values stay empty in the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub ub: Option<f64>,
    pub lb: Option<f64>,
    pub gap: Option<f64>,
    pub qgraph_id: String,
    pub runtime_ms: Option<u64>,
}

/// `steps` evenly spaced points from `from` to `to`, endpoints exact.
pub fn grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![from],
        n => {
            let d = (n - 1) as f64;
            (0..n).map(|i| (from * (d - i as f64) + to * i as f64) / d).collect()
        }
    }
}

fn first_start(ch: &ChannelKernel, enc: &GraphEncoder) -> Option<(usize, usize)> {
    let nq = enc.graph().nq();
    (0..ch.ns()).flat_map(|s| (0..nq).map(move |q| (s, q))).find(|&st| build_sq_chain(ch, enc, st).is_ok())
}

/// Best rate found by the encoder search on any of `graphs`.
pub fn searched_lower_bound(ch: &ChannelKernel, graphs: &[QGraph]) -> Result<Option<f64>> {
    let model = DualModel::new(ch)?;
    let unifilar = model.channel();
    let mut best: Option<f64> = None;
    for g in graphs {
        let probe = GraphEncoder::uniform(g.clone(), unifilar.ns(), unifilar.nx());
        let Some(start) = first_start(unifilar, &probe) else { continue };
        if let Some(found) = search_encoder(unifilar, g, start, &EncoderSearchOptions::default())? {
            best = Some(best.map_or(found.rate, |b: f64| b.max(found.rate)));
        }
    }
    Ok(best)
}

fn lower_bound(kind: SweepChannel, eps: f64, ch: &ChannelKernel, graph: &QGraph) -> Result<Option<f64>> {
    match kind {
        SweepChannel::Nost => {
            let e = nost_encoder(eps)?;
            Ok(Some(achievable_rate(&e.channel, &e.encoder, e.start, BCJR_TOL)?))
        }
        SweepChannel::Nising => {
            let mut graphs = vec![graph.clone()];
            let m1 = markov_qgraph(1, 2)?;
            if *graph != m1 {
                graphs.push(m1);
            }
            searched_lower_bound(ch, &graphs)
        }
    }
}

fn point(cfg: &SweepConfig, eps: f64) -> SweepRow {
    let clock = Instant::now();
    let ch = builtin(BuiltinSpec::new(cfg.channel.name(), eps));
    let ub = ch.as_ref().ok().and_then(|ch| optimize_test_distribution(ch, &cfg.graph, &cfg.optimize).ok()).map(|o| o.best.rho);
    let lb = match (&ch, cfg.lower) {
        (Ok(ch), true) => lower_bound(cfg.channel, eps, ch, &cfg.graph).ok().flatten(),
        _ => None,
    };
    let gap = ub.zip(lb).map(|(u, l)| u - l);
    SweepRow {
        epsilon: eps,
        ub,
        lb,
        gap,
        qgraph_id: cfg.graph_id.clone(),
        runtime_ms: cfg.runtime.then(|| clock.elapsed().as_millis() as u64),
    }
}

/// Runs the points in parallel; rows come back in grid order.
pub fn run(cfg: &SweepConfig) -> Vec<SweepRow> {
    grid(cfg.from, cfg.to, cfg.steps).into_par_iter().map(|eps| point(cfg, eps)).collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epsilon", "ub", "lb", "gap", "qgraph_id", "runtime_ms"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.epsilon.to_string(),
            cell(r.ub),
            cell(r.lb),
            cell(r.gap),
            r.qgraph_id.clone(),
            r.runtime_ms.map_or(String::new(), |t| t.to_string()),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
