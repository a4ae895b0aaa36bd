//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the lines are always printed; exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fscap::parallel;
use fscap::sweep::{grid, searched_lower_bound};
use fscap_core::analytic::{
    nising_half_capacity, nising_markov_certificate, nising_q4_certificate, nising_ub_markov, nost_capacity,
    nost_certificate, nost_encoder,
};
use fscap_core::channel::{builtin, transform_detected, BuiltinName, BuiltinSpec, ChannelKernel};
use fscap_core::dualbound::{belief_update, upper_bound, Belief, OptimizeOptions};
use fscap_core::lowerbound::{achievable_rate, BCJR_TOL};
use fscap_core::mdp::{policy_iteration, random_unichain, value_iteration, verify_bellman, DEFAULT_MAX_ITER};
use fscap_core::qgraph::{labeled_count_via_classes, markov_qgraph, nising_q4, EnumerateOptions, QGraph, DEFAULT_BUDGET};
use fscap_core::testdist::GraphTestDist;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn nost(eps: f64) -> ChannelKernel {
    builtin(BuiltinSpec::new(BuiltinName::Nost, eps)).unwrap()
}

fn nising(eps: f64) -> ChannelKernel {
    builtin(BuiltinSpec::new(BuiltinName::NIsing, eps)).unwrap()
}

fn nost_ub(eps: f64) -> Result<f64, String> {
    let g = markov_qgraph(1, 2).unwrap();
    parallel::optimize(&nost(eps), &g, &OptimizeOptions::default()).map(|o| o.best.rho).map_err(|e| e.to_string())
}

fn nost_lb(eps: f64) -> Result<f64, String> {
    let e = nost_encoder(eps).map_err(|e| e.to_string())?;
    achievable_rate(&e.channel, &e.encoder, e.start, BCJR_TOL).map_err(|e| e.to_string())
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn nost_endpoint() -> Check {
    let c = 1.25f64.log2();
    let (ub, lb) = (nost_ub(0.0)?, nost_lb(0.0)?);
    ensure((ub - c).abs() <= 1e-6 && (lb - c).abs() <= 1e-6, format!("ub {ub} lb {lb} vs {c}"))?;
    Ok(format!("ub {ub:.10} lb {lb:.10}"))
}

fn nost_sandwich() -> Check {
    let mut worst = 0.0f64;
    for eps in grid(0.0, 1.0, 11) {
        let c = nost_capacity(eps).map_err(|e| e.to_string())?.capacity;
        let (ub, lb) = (nost_ub(eps)?, nost_lb(eps)?);
        let spread = (ub - c).abs().max((lb - c).abs()).max((ub - lb).abs());
        ensure(spread <= 1e-5, format!("eps {eps}: ub {ub} lb {lb} closed form {c}"))?;
        worst = worst.max(spread);
    }
    Ok(format!("11 points, largest disagreement {worst:.2e}"))
}

fn certificates() -> Check {
    let mut nost_worst = 0.0f64;
    let mut q4_worst = 0.0f64;
    for eps in [0.1, 0.2, 0.3, 0.4] {
        let r = nost_certificate(eps).and_then(|c| c.verify(1e-9)).map_err(|e| e.to_string())?;
        ensure(r.passed, format!("NOST eps {eps}: residual {:e}", r.max_residual))?;
        nost_worst = nost_worst.max(r.max_residual);
        let r = nising_markov_certificate(eps).and_then(|c| c.verify(1e-9)).map_err(|e| e.to_string())?;
        ensure(r.passed, format!("N-Ising Markov-1 eps {eps}: residual {:e}", r.max_residual))?;
        let q4 = parallel::nising_ub_q4(eps).map_err(|e| e.to_string())?;
        let (a, b) = q4.grid_point;
        let r = nising_q4_certificate(eps, a, b).and_then(|c| c.verify(1e-7)).map_err(|e| e.to_string())?;
        ensure(r.passed, format!("N-Ising Q4 eps {eps} at ({a}, {b}): residual {:e}", r.max_residual))?;
        q4_worst = q4_worst.max(r.max_residual);
    }
    Ok(format!("NOST max residual {nost_worst:.1e}, Q4 max residual {q4_worst:.1e}"))
}

fn ordering() -> Check {
    let mut largest = 0.0f64;
    // eps = 0 has no admissible point for the four-node closed form
    for eps in grid(0.05, 0.45, 9) {
        let q4 = parallel::nising_ub_q4(eps).map_err(|e| e.to_string())?.bound.value;
        let m1 = nising_ub_markov(eps).map_err(|e| e.to_string())?.value;
        ensure(q4 <= m1 + 1e-9, format!("eps {eps}: Q4 {q4} above Markov-1 {m1}"))?;
        ensure((m1 - q4).abs() <= 0.05, format!("eps {eps}: gap {}", m1 - q4))?;
        largest = largest.max(m1 - q4);
    }
    Ok(format!("eps 0.05..0.45, largest Markov-1 minus Q4 {largest:.2e}"))
}

fn midpoint() -> Check {
    let t = transform_detected(&nising(0.5)).map_err(|e| e.to_string())?;
    let bsc = [0.75, 0.25, 0.25, 0.75];
    ensure(t.channel.ns() == 1 && t.channel.as_slice() == bsc, format!("kernel {:?}", t.channel.as_slice()))?;
    let g = QGraph::new(1, 2, vec![0, 0]).unwrap();
    let rho = upper_bound(&t.channel, &g, &GraphTestDist::uniform(g.clone())).map_err(|e| e.to_string())?.rho;
    let c = nising_half_capacity();
    ensure((rho - c).abs() <= 1e-9, format!("bound {rho} vs {c}"))?;
    Ok(format!("BSC(0.25), bound {rho:.10}"))
}

fn enumeration() -> Check {
    // the count matches one graph per isomorphism class (relabeling nodes);
    // the labeled count is far larger
    let opts = EnumerateOptions { canonical: true, budget: DEFAULT_BUDGET };
    let canonical = parallel::count(6, 2, &opts).map_err(|e| e.to_string())?;
    let labeled = labeled_count_via_classes(6, 2, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    ensure(canonical == 655_424, format!("canonical count {canonical}"))?;
    Ok(format!("canonical (isomorphism classes) {canonical}; labeled tables {labeled}"))
}

fn solvers() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (nz, nu, nw) = (rng.gen_range(1..=50), rng.gen_range(1..=5), rng.gen_range(1..=5));
        let m = random_unichain(&mut rng, nz, nu, nw);
        let vi = value_iteration(&m, 1e-10, DEFAULT_MAX_ITER).map_err(|e| format!("instance {i}: VI {e}"))?;
        let pi = policy_iteration(&m).map_err(|e| format!("instance {i}: PI {e}"))?;
        let diff = (vi.rho - pi.rho).abs();
        ensure(diff <= 1e-8, format!("instance {i}: VI {} PI {}", vi.rho, pi.rho))?;
        for (name, s) in [("VI", &vi), ("PI", &pi)] {
            let r = verify_bellman(&m, s.rho, &s.h, 1e-8).map_err(|e| e.to_string())?;
            ensure(r.passed, format!("instance {i}: {name} residual {:e}", r.max_residual))?;
        }
        worst = worst.max(diff);
    }
    Ok(format!("100 instances, largest |VI - PI| {worst:.1e}"))
}

/// Posterior of the last state by summing the joint law over state paths.
fn bayes(ch: &ChannelKernel, prior: &[f64], xs: &[usize], ys: &[usize]) -> Option<Vec<f64>> {
    let (ns, n) = (ch.ns(), xs.len());
    let mut post = vec![0.0; ns];
    for code in 0..ns.pow(n as u32 + 1) {
        let path: Vec<usize> = (0..=n).map(|t| code / ns.pow(t as u32) % ns).collect();
        let mut w = prior[path[0]];
        for t in 0..n {
            w *= ch.prob(path[t], xs[t], ys[t], path[t + 1]);
        }
        post[path[n]] += w;
    }
    let z: f64 = post.iter().sum();
    (z > 0.0).then(|| post.iter().map(|v| v / z).collect())
}

fn beliefs() -> Check {
    let mut paths = 0usize;
    let mut worst = 0.0f64;
    let channels = [("NOST", nost(0.1)), ("NOST", nost(0.35)), ("N-Ising", nising(0.1)), ("N-Ising", nising(0.3))];
    for (name, ch) in &channels {
        for prior in [[0.5, 0.5], [0.9, 0.1], [0.0, 1.0]] {
            for len in 1..=6usize {
                for code in 0..4usize.pow(len as u32) {
                    let sym: Vec<usize> = (0..len).map(|t| code / 4usize.pow(t as u32) % 4).collect();
                    let xs: Vec<usize> = sym.iter().map(|s| s / 2).collect();
                    let ys: Vec<usize> = sym.iter().map(|s| s % 2).collect();
                    let mut b = Some(Belief::new(prior.to_vec()).unwrap());
                    for t in 0..len {
                        b = b.and_then(|b| belief_update(ch, &b, xs[t], ys[t]).ok());
                    }
                    let brute = bayes(ch, &prior, &xs, &ys);
                    match (b, brute) {
                        (Some(b), Some(p)) => {
                            let d = b.as_slice().iter().zip(&p).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
                            ensure(d <= 1e-10, format!("{name}: path {xs:?}/{ys:?} differs by {d:e}"))?;
                            worst = worst.max(d);
                            paths += 1;
                        }
                        (None, None) => {}
                        _ => return Err(format!("{name}: reachability differs on {xs:?}/{ys:?}")),
                    }
                }
            }
        }
    }
    Ok(format!("{paths} reachable paths, largest deviation {worst:.1e}"))
}

fn best_effort_lower_bound() -> Check {
    // the larger graphs behind the published lower-bound curves are not
    // available; the four-node graph gives a valid but looser lower bound
    let g = nising_q4();
    let mut parts = Vec::new();
    for eps in [0.0, 0.1, 0.2, 0.3] {
        let ch = nising(eps);
        let lb = searched_lower_bound(&ch, std::slice::from_ref(&g))
            .map_err(|e| e.to_string())?
            .ok_or(format!("eps {eps}: no BCJR-invariant encoder found"))?;
        let ub = parallel::optimize(&ch, &g, &OptimizeOptions::default()).map_err(|e| e.to_string())?.best.rho;
        ensure(lb <= ub + 1e-6, format!("eps {eps}: lower {lb} above upper {ub}"))?;
        parts.push(format!("{eps}: {lb:.4}/{ub:.4}"));
    }
    Ok(format!("published curves not reproducible; Q4 lower/upper {}", parts.join(", ")))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "NOST(0) bounds equal log2(5/4)", budget: Duration::from_secs(1), run: nost_endpoint },
        Criterion { id: 2, name: "NOST sandwich on 11 points", budget: Duration::from_secs(30), run: nost_sandwich },
        Criterion { id: 3, name: "Bellman certificates", budget: Duration::from_secs(5), run: certificates },
        Criterion { id: 4, name: "Q4 bound below Markov-1 bound", budget: Duration::from_secs(10), run: ordering },
        Criterion { id: 5, name: "N-Ising(0.5) is BSC(0.25)", budget: Duration::from_secs(1), run: midpoint },
        Criterion { id: 6, name: "6-node Q-graph count", budget: Duration::from_secs(600), run: enumeration },
        Criterion { id: 7, name: "VI/PI cross-validation", budget: Duration::from_secs(60), run: solvers },
        Criterion { id: 8, name: "belief recursion vs Bayes", budget: Duration::from_secs(60), run: beliefs },
        Criterion { id: 9, name: "best-effort N-Ising lower bound", budget: Duration::from_secs(120), run: best_effort_lower_bound },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if took <= c.budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {:.2}s, budget {:?}", took.as_secs_f64(), c.budget)),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {}: {status} {} ({:.2}s): {detail}", c.id, c.name, took.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
