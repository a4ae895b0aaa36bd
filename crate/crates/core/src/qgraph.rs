//! Q-graphs: deterministic output-labeled digraphs that map output histories
//! to nodes.
//!
//! Node `q` has exactly one outgoing edge per output symbol `y`, leading to
//! `phi(q, y)`. Nodes are 0-based.
//!
//! Enumeration comes in two flavors. The labeled scan visits every total
//! table in lexicographic order. The canonical scan visits one representative
//! per isomorphism class: the table that is lexicographically smallest among
//! all breadth-first relabelings.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Largest node count accepted by [`markov_qgraph`].
pub const MAX_MARKOV_NODES: usize = 1 << 16;

/// Default iteration budget for the exhaustive scans.
pub const DEFAULT_BUDGET: u128 = 1 << 33;

/// A total output-labeled transition table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QGraph {
    nq: usize,
    ny: usize,
    phi: Vec<usize>,
}

impl QGraph {
    /// Builds a graph from a row-major table `phi[q * ny + y]`.
    pub fn new(nq: usize, ny: usize, phi: Vec<usize>) -> Result<Self> {
        if nq == 0 || ny == 0 {
            return Err(Error::InvalidArgument("Q-graph sizes must be positive"));
        }
        if phi.len() != nq * ny {
            return Err(Error::DimensionMismatch { expected: nq * ny, found: phi.len() });
        }
        if let Some(&bad) = phi.iter().find(|&&t| t >= nq) {
            return Err(Error::IndexOutOfRange { index: bad, bound: nq });
        }
        Ok(Self { nq, ny, phi })
    }

    /// Builds a graph from per-symbol successor columns, `columns[y][q]`.
    pub fn from_columns(columns: &[Vec<usize>]) -> Result<Self> {
        let ny = columns.len();
        let nq = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != nq) {
            return Err(Error::InvalidArgument("successor columns differ in length"));
        }
        let mut phi = vec![0; nq * ny];
        for (y, col) in columns.iter().enumerate() {
            for (q, &t) in col.iter().enumerate() {
                phi[q * ny + y] = t;
            }
        }
        Self::new(nq, ny, phi)
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Row-major table.
    pub fn table(&self) -> &[usize] {
        &self.phi
    }

    #[inline]
    pub fn next(&self, q: usize, y: usize) -> usize {
        self.phi[q * self.ny + y]
    }

    /// Folds the transition map over an output sequence.
    pub fn walk(&self, q0: usize, outputs: &[usize]) -> Result<usize> {
        if q0 >= self.nq {
            return Err(Error::IndexOutOfRange { index: q0, bound: self.nq });
        }
        outputs.iter().try_fold(q0, |q, &y| {
            if y >= self.ny {
                Err(Error::IndexOutOfRange { index: y, bound: self.ny })
            } else {
                Ok(self.next(q, y))
            }
        })
    }

    /// Checks strong connectivity and aperiodicity.
    pub fn validate(&self) -> Validity {
        let mut scratch = Scratch::new(self.nq);
        let strongly_connected = scratch.strongly_connected(&self.phi, self.nq, self.ny);
        let period = if strongly_connected { scratch.period(&self.phi, self.nq, self.ny) } else { 0 };
        Validity { strongly_connected, period }
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_valid()
    }

    /// The lexicographically smallest breadth-first relabeling, taken over
    /// start nodes that reach every node.
    pub fn canonical_form(&self) -> Result<QGraph> {
        let mut scratch = Scratch::new(self.nq);
        let mut best: Option<Vec<usize>> = None;
        let mut buf = vec![0; self.phi.len()];
        for r in 0..self.nq {
            if scratch.relabel(&self.phi, self.nq, self.ny, r, &mut buf)
                && best.as_ref().is_none_or(|b| buf < *b)
            {
                best = Some(buf.clone());
            }
        }
        let phi = best.ok_or(Error::InvalidArgument("no node reaches every other node"))?;
        Ok(QGraph { nq: self.nq, ny: self.ny, phi })
    }
}

/// Outcome of [`QGraph::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Validity {
    pub strongly_connected: bool,
    /// Period of the graph; 0 when it is not strongly connected.
    pub period: usize,
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        self.strongly_connected && self.period == 1
    }
}

/// The order-`k` Markov graph: a node is the last `k` outputs written in base
/// `ny` with the most recent output as the least significant digit.
pub fn markov_qgraph(k: usize, ny: usize) -> Result<QGraph> {
    if k == 0 || ny == 0 {
        return Err(Error::InvalidArgument("Markov order and alphabet must be positive"));
    }
    let required = (ny as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if required > MAX_MARKOV_NODES as u128 {
        return Err(Error::CapExceeded { required, cap: MAX_MARKOV_NODES as u128 });
    }
    let nq = required as usize;
    let phi = (0..nq).flat_map(|q| (0..ny).map(move |y| (q * ny + y) % nq)).collect();
    QGraph::new(nq, ny, phi)
}

/// The four-node graph used for the noisy Ising bounds, with successors
/// `phi(., 0) = [1, 0, 0, 0]` and `phi(., 1) = [2, 2, 3, 2]`.
pub fn nising_q4() -> QGraph {
    QGraph::from_columns(&[vec![1, 0, 0, 0], vec![2, 2, 3, 2]]).expect("static table")
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Reusable buffers for the graph checks done in the scans.
struct Scratch {
    mark: Vec<bool>,
    level: Vec<usize>,
    queue: Vec<usize>,
    map: Vec<usize>,
    order: Vec<usize>,
}

const UNSEEN: usize = usize::MAX;

impl Scratch {
    fn new(nq: usize) -> Self {
        Self {
            mark: vec![false; nq],
            level: vec![UNSEEN; nq],
            queue: Vec::with_capacity(nq),
            map: vec![UNSEEN; nq],
            order: Vec::with_capacity(nq),
        }
    }

    /// BFS levels from node 0; returns the number of nodes reached.
    fn bfs(&mut self, phi: &[usize], nq: usize, ny: usize) -> usize {
        self.level[..nq].fill(UNSEEN);
        self.queue.clear();
        self.level[0] = 0;
        self.queue.push(0);
        let mut head = 0;
        while head < self.queue.len() {
            let u = self.queue[head];
            head += 1;
            for &v in &phi[u * ny..(u + 1) * ny] {
                if self.level[v] == UNSEEN {
                    self.level[v] = self.level[u] + 1;
                    self.queue.push(v);
                }
            }
        }
        self.queue.len()
    }

    /// True iff every node reaches node 0.
    fn reaches_root(&mut self, phi: &[usize], nq: usize, ny: usize) -> bool {
        self.mark[..nq].fill(false);
        self.mark[0] = true;
        let mut count = 1;
        let mut changed = true;
        while changed {
            changed = false;
            for q in 0..nq {
                if !self.mark[q] && phi[q * ny..(q + 1) * ny].iter().any(|&t| self.mark[t]) {
                    self.mark[q] = true;
                    count += 1;
                    changed = true;
                }
            }
        }
        count == nq
    }

    fn strongly_connected(&mut self, phi: &[usize], nq: usize, ny: usize) -> bool {
        self.bfs(phi, nq, ny) == nq && self.reaches_root(phi, nq, ny)
    }

    /// Period of a strongly connected table; uses the levels left by `bfs`.
    fn period(&mut self, phi: &[usize], nq: usize, ny: usize) -> usize {
        self.bfs(phi, nq, ny);
        let mut g = 0;
        for u in 0..nq {
            for &v in &phi[u * ny..(u + 1) * ny] {
                g = gcd(g, (self.level[u] + 1).abs_diff(self.level[v]));
                if g == 1 {
                    return 1;
                }
            }
        }
        g
    }

    /// Breadth-first relabeling from `root` into `out`; false if some node is
    /// unreachable from `root`.
    fn relabel(&mut self, phi: &[usize], nq: usize, ny: usize, root: usize, out: &mut [usize]) -> bool {
        self.map[..nq].fill(UNSEEN);
        self.order.clear();
        self.map[root] = 0;
        self.order.push(root);
        let mut i = 0;
        while i < self.order.len() {
            let old = self.order[i];
            for y in 0..ny {
                let t = phi[old * ny + y];
                if self.map[t] == UNSEEN {
                    self.map[t] = self.order.len();
                    self.order.push(t);
                }
                out[i * ny + y] = self.map[t];
            }
            i += 1;
        }
        self.order.len() == nq
    }

    /// Compares `phi` (already breadth-first normal from node 0) against its
    /// relabeling from `root`. Returns `Less` if the relabeling is smaller.
    fn compare_from(&mut self, phi: &[usize], nq: usize, ny: usize, root: usize) -> core::cmp::Ordering {
        use core::cmp::Ordering;
        self.map[..nq].fill(UNSEEN);
        self.order.clear();
        self.map[root] = 0;
        self.order.push(root);
        for i in 0..nq {
            let old = self.order[i];
            for y in 0..ny {
                let t = phi[old * ny + y];
                if self.map[t] == UNSEEN {
                    self.map[t] = self.order.len();
                    self.order.push(t);
                }
                match self.map[t].cmp(&phi[i * ny + y]) {
                    Ordering::Equal => {}
                    other => return other,
                }
            }
        }
        Ordering::Equal
    }

    /// For a breadth-first normal, strongly connected table: `None` if some
    /// other start gives a smaller table, otherwise the automorphism count.
    fn canonical_automorphisms(&mut self, phi: &[usize], nq: usize, ny: usize) -> Option<usize> {
        let mut aut = 1;
        for r in 1..nq {
            match self.compare_from(phi, nq, ny, r) {
                core::cmp::Ordering::Less => return None,
                core::cmp::Ordering::Equal => aut += 1,
                core::cmp::Ordering::Greater => {}
            }
        }
        Some(aut)
    }
}

/// Options for the exhaustive scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerateOptions {
    /// Visit one representative per isomorphism class instead of every
    /// labeled table.
    pub canonical: bool,
    /// Refuse scans whose candidate count exceeds this.
    pub budget: u128,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self { canonical: false, budget: DEFAULT_BUDGET }
    }
}

/// Number of candidate tables a scan will examine.
pub fn candidate_count(nq: usize, ny: usize, canonical: bool) -> u128 {
    if !canonical {
        return (nq as u128).checked_pow((nq * ny) as u32).unwrap_or(u128::MAX);
    }
    // ways[d] = number of valid prefixes with d nodes discovered so far.
    let mut ways = vec![0u128; nq + 2];
    ways[1] = 1;
    for p in 0..nq * ny {
        let row = p / ny;
        let mut next = vec![0u128; nq + 2];
        for d in 1..=nq {
            if ways[d] == 0 || d <= row {
                continue;
            }
            next[d] = next[d].saturating_add(ways[d].saturating_mul(d as u128));
            if d < nq {
                next[d + 1] = next[d + 1].saturating_add(ways[d]);
            }
        }
        ways = next;
    }
    ways[nq]
}

/// Number of first-row partitions a scan splits into (`nq^ny`).
pub fn partition_count(nq: usize, ny: usize) -> usize {
    nq.pow(ny as u32)
}

/// A graph visited by a scan, with its automorphism count when the scan is
/// canonical (1 for labeled scans).
#[derive(Debug, Clone, Copy)]
pub struct Visit<'a> {
    pub table: &'a [usize],
    pub automorphisms: usize,
}

fn check_sizes(nq: usize, ny: usize, opts: &EnumerateOptions) -> Result<()> {
    if nq == 0 || ny == 0 {
        return Err(Error::InvalidArgument("Q-graph sizes must be positive"));
    }
    let required = candidate_count(nq, ny, opts.canonical);
    if required > opts.budget {
        return Err(Error::BudgetExceeded { required, budget: opts.budget });
    }
    Ok(())
}

/// Scans one first-row partition. Partition `i` fixes the first row to the
/// base-`nq` digits of `i`, `phi(0, 0)` most significant. Visiting partitions
/// in index order reproduces the full scan order. Returns the visit count.
pub fn scan_partition(
    nq: usize,
    ny: usize,
    opts: &EnumerateOptions,
    partition: usize,
    mut visit: impl FnMut(Visit<'_>),
) -> Result<u64> {
    check_sizes(nq, ny, opts)?;
    let parts = partition_count(nq, ny);
    if partition >= parts {
        return Err(Error::IndexOutOfRange { index: partition, bound: parts });
    }
    let mut table = vec![0usize; nq * ny];
    let mut rest = partition;
    for y in (0..ny).rev() {
        table[y] = rest % nq;
        rest /= nq;
    }
    let mut scratch = Scratch::new(nq);
    if opts.canonical {
        Ok(scan_canonical(nq, ny, &mut table, &mut scratch, &mut visit))
    } else {
        Ok(scan_labeled(nq, ny, &mut table, &mut scratch, &mut visit))
    }
}

/// Full scan, in lexicographic table order.
pub fn scan(nq: usize, ny: usize, opts: &EnumerateOptions, mut visit: impl FnMut(Visit<'_>)) -> Result<u64> {
    check_sizes(nq, ny, opts)?;
    let mut total = 0;
    for p in 0..partition_count(nq, ny) {
        total += scan_partition(nq, ny, opts, p, &mut visit)?;
    }
    Ok(total)
}

/// Collects every valid graph in scan order.
pub fn enumerate_valid(nq: usize, ny: usize, opts: &EnumerateOptions) -> Result<Vec<QGraph>> {
    let mut out = Vec::new();
    scan(nq, ny, opts, |v| out.push(QGraph { nq, ny, phi: v.table.to_vec() }))?;
    Ok(out)
}

/// Counts valid graphs without storing them.
pub fn count_valid(nq: usize, ny: usize, opts: &EnumerateOptions) -> Result<u64> {
    scan(nq, ny, opts, |_| {})
}

/// Labeled count recovered from the canonical scan: each class contributes
/// `nq! / |Aut|` labeled tables.
pub fn labeled_count_via_classes(nq: usize, ny: usize, budget: u128) -> Result<u128> {
    let fact: u128 = (1..=nq as u128).product();
    let mut total = 0u128;
    scan(nq, ny, &EnumerateOptions { canonical: true, budget }, |v| {
        total += fact / v.automorphisms as u128;
    })?;
    Ok(total)
}

fn scan_labeled(
    nq: usize,
    ny: usize,
    table: &mut [usize],
    scratch: &mut Scratch,
    visit: &mut impl FnMut(Visit<'_>),
) -> u64 {
    let mut count = 0;
    loop {
        if scratch.strongly_connected(table, nq, ny) && scratch.period(table, nq, ny) == 1 {
            count += 1;
            visit(Visit { table, automorphisms: 1 });
        }
        // odometer over positions after the first row, last position fastest
        let mut p = table.len();
        loop {
            if p == ny {
                return count;
            }
            p -= 1;
            table[p] += 1;
            if table[p] < nq {
                break;
            }
            table[p] = 0;
        }
    }
}

fn scan_canonical(
    nq: usize,
    ny: usize,
    table: &mut [usize],
    scratch: &mut Scratch,
    visit: &mut impl FnMut(Visit<'_>),
) -> u64 {
    // The fixed first row must itself be breadth-first normal.
    let mut discovered = 1;
    for &t in &table[..ny] {
        if t > discovered || t >= nq {
            return 0;
        }
        if t == discovered {
            discovered += 1;
        }
    }
    let mut count = 0;
    canonical_dfs(nq, ny, ny, discovered, table, scratch, visit, &mut count);
    count
}

#[allow(clippy::too_many_arguments)]
fn canonical_dfs(
    nq: usize,
    ny: usize,
    pos: usize,
    discovered: usize,
    table: &mut [usize],
    scratch: &mut Scratch,
    visit: &mut impl FnMut(Visit<'_>),
    count: &mut u64,
) {
    if pos == table.len() {
        if discovered == nq
            && scratch.reaches_root(table, nq, ny)
            && scratch.period(table, nq, ny) == 1
        {
            if let Some(aut) = scratch.canonical_automorphisms(table, nq, ny) {
                *count += 1;
                visit(Visit { table, automorphisms: aut });
            }
        }
        return;
    }
    let row = pos / ny;
    if discovered <= row {
        return;
    }
    // undiscovered nodes must still fit into the remaining slots
    if nq - discovered > table.len() - pos {
        return;
    }
    let top = if discovered < nq { discovered } else { nq - 1 };
    for t in 0..=top {
        table[pos] = t;
        let d = if t == discovered { discovered + 1 } else { discovered };
        canonical_dfs(nq, ny, pos + 1, d, table, scratch, visit, count);
    }
    table[pos] = 0;
}
