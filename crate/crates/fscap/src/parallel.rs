//! Rayon front ends for the core computations. Every reduction is done in a
//! fixed order so results do not depend on scheduling.

use fscap_core::analytic::{Q4Problem, Q4Report, Q4_GRID_STEPS};
use fscap_core::channel::ChannelKernel;
use fscap_core::dualbound::{ascent_stage, optimize_start, select_best, DualModel, OptimizeOptions, Optimized};
use fscap_core::qgraph::{partition_count, scan_partition, EnumerateOptions, QGraph};
use fscap_core::{Error, Result};
use rayon::prelude::*;

/// [`fscap_core::dualbound::optimize_test_distribution`] with the starts run
/// in parallel.
pub fn optimize(ch: &ChannelKernel, graph: &QGraph, opts: &OptimizeOptions) -> Result<Optimized> {
    let model = DualModel::new(ch)?;
    let (ascent, done) = ascent_stage(&model, graph, opts)?;
    let starts = if done {
        Vec::new()
    } else {
        (0..opts.starts.max(1))
            .into_par_iter()
            .map(|i| optimize_start(&model, graph, opts, i))
            .collect::<Result<Vec<_>>>()?
    };
    select_best(&model, graph, starts, ascent)
}

/// Number of valid graphs, partitions counted in parallel.
pub fn count(nq: usize, ny: usize, opts: &EnumerateOptions) -> Result<u64> {
    let parts = checked_partitions(nq, ny)?;
    let counts = (0..parts)
        .into_par_iter()
        .map(|p| scan_partition(nq, ny, opts, p, |_| {}))
        .collect::<Result<Vec<_>>>()?;
    Ok(counts.into_iter().sum())
}

/// Every valid graph, in the order of the sequential scan.
pub fn enumerate(nq: usize, ny: usize, opts: &EnumerateOptions) -> Result<Vec<QGraph>> {
    let parts = checked_partitions(nq, ny)?;
    let chunks = (0..parts)
        .into_par_iter()
        .map(|p| {
            let mut tables = Vec::new();
            scan_partition(nq, ny, opts, p, |v| tables.push(v.table.to_vec()))?;
            tables.into_iter().map(|t| QGraph::new(nq, ny, t)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn checked_partitions(nq: usize, ny: usize) -> Result<usize> {
    if nq == 0 || ny == 0 {
        return Err(Error::InvalidArgument("Q-graph sizes must be positive"));
    }
    let parts = (nq as u128).checked_pow(ny as u32).filter(|&p| p <= usize::MAX as u128);
    parts.map(|_| partition_count(nq, ny)).ok_or(Error::CapExceeded { required: u128::MAX, cap: usize::MAX as u128 })
}

/// Rows of the grid handled by one task.
const TILE_ROWS: usize = 16;

/// [`fscap_core::analytic::nising_ub_q4`] with the grid scanned in parallel
/// row tiles.
pub fn nising_ub_q4(eps: f64) -> Result<Q4Report> {
    let p = Q4Problem::new(eps)?;
    let steps = Q4_GRID_STEPS;
    let tiles: Vec<_> = (0..=steps).step_by(TILE_ROWS).map(|r| r..(r + TILE_ROWS).min(steps + 1)).collect();
    let grid = tiles
        .into_par_iter()
        .map(|rows| p.scan_rows(steps, rows))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.total_cmp(&y.2)))
        .ok_or(Error::EmptyFeasibleSet)?;
    p.finish(grid, steps)
}
