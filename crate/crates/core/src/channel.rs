//! Finite-state channel laws `P(s+, y | x, s)`.
//!
//! A kernel is stored as a flat tensor in index order `[s][x][y][s+]`.
//! Channels are classified as unifilar (the next state is a deterministic
//! function of `(x, y, s)`), finite-memory (the state is a stochastic function
//! of a bounded window of past inputs and outputs) or general.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{graph, Error, Result, STOCHASTIC_TOL};

/// Largest number of states the finite-memory transform will produce.
pub const MAX_TRANSFORMED_STATES: usize = 1 << 16;

/// Probability below which an output is treated as impossible when
/// extracting deterministic structure from a kernel.
const ZERO_MASS: f64 = 1e-15;

/// A validated finite-state channel law.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelKernel {
    nx: usize,
    ny: usize,
    ns: usize,
    kernel: Vec<f64>,
}

impl ChannelKernel {
    /// Validates a raw tensor in `[s][x][y][s+]` order. Rows (one per `(s, x)`)
    /// must sum to one within `1e-12`; nothing is renormalized.
    pub fn new(kernel: Vec<f64>, nx: usize, ny: usize, ns: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || ns == 0 {
            return Err(Error::InvalidArgument("alphabet sizes must be positive"));
        }
        let expected = ns * nx * ny * ns;
        if kernel.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: kernel.len() });
        }
        if let Some((index, &value)) =
            kernel.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidEntry { index, value });
        }
        let row_len = ny * ns;
        for (row, chunk) in kernel.chunks(row_len).enumerate() {
            let deficit = chunk.iter().sum::<f64>() - 1.0;
            if deficit.abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic { row, deficit });
            }
        }
        Ok(Self { nx, ny, ns, kernel })
    }

    /// Builds a kernel from an output law `P(y|x,s)` (`[s][x][y]`) and a
    /// deterministic next-state function `next(x, y, s)`.
    pub fn from_unifilar(
        output: &[f64],
        nx: usize,
        ny: usize,
        ns: usize,
        next: impl Fn(usize, usize, usize) -> usize,
    ) -> Result<Self> {
        if output.len() != ns * nx * ny {
            return Err(Error::DimensionMismatch { expected: ns * nx * ny, found: output.len() });
        }
        let mut kernel = vec![0.0; ns * nx * ny * ns];
        for s in 0..ns {
            for x in 0..nx {
                for y in 0..ny {
                    let sp = next(x, y, s);
                    if sp >= ns {
                        return Err(Error::IndexOutOfRange { index: sp, bound: ns });
                    }
                    kernel[((s * nx + x) * ny + y) * ns + sp] += output[(s * nx + x) * ny + y];
                }
            }
        }
        Self::new(kernel, nx, ny, ns)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    /// The flat tensor in `[s][x][y][s+]` order.
    pub fn as_slice(&self) -> &[f64] {
        &self.kernel
    }

    /// `P(s+, y | x, s)`.
    #[inline]
    pub fn prob(&self, s: usize, x: usize, y: usize, sp: usize) -> f64 {
        self.kernel[((s * self.nx + x) * self.ny + y) * self.ns + sp]
    }

    /// `P(y | x, s)`.
    #[inline]
    pub fn output_prob(&self, s: usize, x: usize, y: usize) -> f64 {
        let base = ((s * self.nx + x) * self.ny + y) * self.ns;
        self.kernel[base..base + self.ns].iter().sum()
    }

    /// `P(. | x, s)` as a vector over outputs.
    pub fn output_row(&self, s: usize, x: usize) -> Vec<f64> {
        (0..self.ny).map(|y| self.output_prob(s, x, y)).collect()
    }

    /// The output law `P(y|x,s)` flattened as `[s][x][y]`.
    pub fn output_law(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ns * self.nx * self.ny);
        for s in 0..self.ns {
            for x in 0..self.nx {
                for y in 0..self.ny {
                    out.push(self.output_prob(s, x, y));
                }
            }
        }
        out
    }

    /// True iff the state graph (edge `s -> s+` whenever some input and
    /// output lead there with positive probability) is strongly connected.
    pub fn is_strongly_connected(&self) -> bool {
        let adj: Vec<Vec<usize>> = (0..self.ns)
            .map(|s| {
                (0..self.ns)
                    .filter(|&sp| {
                        (0..self.nx).any(|x| (0..self.ny).any(|y| self.prob(s, x, y, sp) > 0.0))
                    })
                    .collect()
            })
            .collect();
        graph::is_strongly_connected(&adj)
    }

    /// Classifies the channel, preferring unifilar over finite-memory.
    pub fn classify(&self) -> ChannelClass {
        if let Some(u) = self.unifilar_map() {
            ChannelClass::Unifilar(u)
        } else if let Some(fm) = FiniteMemory::detect(self) {
            ChannelClass::FiniteMemory(fm)
        } else {
            ChannelClass::General
        }
    }

    /// Extracts the next-state table if the channel is unifilar. Outputs that
    /// cannot occur from `(x, s)` keep the state unchanged in the table.
    pub fn unifilar_map(&self) -> Option<UnifilarMap> {
        let mut next = vec![0usize; self.nx * self.ny * self.ns];
        for s in 0..self.ns {
            for x in 0..self.nx {
                for y in 0..self.ny {
                    let mass = self.output_prob(s, x, y);
                    let slot = &mut next[(x * self.ny + y) * self.ns + s];
                    if mass <= ZERO_MASS {
                        *slot = s;
                        continue;
                    }
                    let mut support = (0..self.ns).filter(|&sp| self.prob(s, x, y, sp) > 0.0);
                    let sp = support.next()?;
                    if support.next().is_some() {
                        return None;
                    }
                    *slot = sp;
                }
            }
        }
        Some(UnifilarMap { nx: self.nx, ny: self.ny, ns: self.ns, next })
    }

    /// Bit-flip symmetry `P(y|x,s) = P(1-y|1-x,1-s)` for binary channels.
    pub fn is_bit_flip_symmetric(&self, tol: f64) -> bool {
        if self.nx != 2 || self.ny != 2 || self.ns != 2 {
            return false;
        }
        (0..2).all(|s| {
            (0..2).all(|x| {
                (0..2).all(|y| {
                    (self.output_prob(s, x, y) - self.output_prob(1 - s, 1 - x, 1 - y)).abs() <= tol
                })
            })
        })
    }
}

/// Deterministic next-state table `f(x, y, s)` of a unifilar channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnifilarMap {
    nx: usize,
    ny: usize,
    ns: usize,
    next: Vec<usize>,
}

impl UnifilarMap {
    #[inline]
    pub fn next(&self, x: usize, y: usize, s: usize) -> usize {
        self.next[(x * self.ny + y) * self.ns + s]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.ns)
    }
}

/// A finite-memory state law: the channel state at the end of a use is drawn
/// from `P(s | window)`, where the window holds the last `inputs` inputs and
/// the last `outputs` outputs (current symbols included).
///
/// Windows are indexed as `x_part * ny^outputs + y_part`, each part a base-`n`
/// number with the most recent symbol as the least significant digit.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMemory {
    pub inputs: usize,
    pub outputs: usize,
    /// `P(s | window)`, `[window][s]`.
    pub state_law: Vec<f64>,
}

impl FiniteMemory {
    /// Detects a state evolution of the form `P(s+ | x, y)`, i.e. one that does
    /// not depend on the previous state, and returns the smallest window
    /// (`x`, `y`, both or neither) that carries it.
    ///
    /// Longer windows cannot be read off a one-step kernel; declare them with
    /// [`FiniteMemory::declared`].
    pub fn detect(ch: &ChannelKernel) -> Option<Self> {
        let (nx, ny, ns) = (ch.nx, ch.ny, ch.ns);
        // law[(x, y)] = P(s+ | x, y) when some state can emit y under x.
        let mut law: Vec<Option<Vec<f64>>> = vec![None; nx * ny];
        for x in 0..nx {
            for y in 0..ny {
                for s in 0..ns {
                    let mass = ch.output_prob(s, x, y);
                    if mass <= ZERO_MASS {
                        continue;
                    }
                    let cond: Vec<f64> = (0..ns).map(|sp| ch.prob(s, x, y, sp) / mass).collect();
                    match &law[x * ny + y] {
                        None => law[x * ny + y] = Some(cond),
                        Some(prev) if close(prev, &cond) => {}
                        Some(_) => return None,
                    }
                }
            }
        }
        let uniform = vec![1.0 / ns as f64; ns];
        let agree = |pairs: &mut dyn Iterator<Item = usize>| -> Option<Vec<f64>> {
            let mut common: Option<&Vec<f64>> = None;
            for idx in pairs {
                if let Some(l) = &law[idx] {
                    match common {
                        None => common = Some(l),
                        Some(c) if close(c, l) => {}
                        Some(_) => return None,
                    }
                }
            }
            Some(common.cloned().unwrap_or_else(|| uniform.clone()))
        };

        if let Some(l) = agree(&mut (0..nx * ny)) {
            return Some(Self { inputs: 0, outputs: 0, state_law: l });
        }
        let by_y: Option<Vec<Vec<f64>>> =
            (0..ny).map(|y| agree(&mut (0..nx).map(|x| x * ny + y))).collect();
        if let Some(rows) = by_y {
            return Some(Self { inputs: 0, outputs: 1, state_law: rows.concat() });
        }
        let by_x: Option<Vec<Vec<f64>>> =
            (0..nx).map(|x| agree(&mut (0..ny).map(|y| x * ny + y))).collect();
        if let Some(rows) = by_x {
            return Some(Self { inputs: 1, outputs: 0, state_law: rows.concat() });
        }
        let rows: Vec<f64> =
            law.into_iter().flat_map(|l| l.unwrap_or_else(|| uniform.clone())).collect();
        Some(Self { inputs: 1, outputs: 1, state_law: rows })
    }

    /// A user-declared window law. Only the output law `P(y|x,s)` of `ch` is
    /// used together with it; the kernel's own state evolution is ignored.
    pub fn declared(
        ch: &ChannelKernel,
        inputs: usize,
        outputs: usize,
        state_law: Vec<f64>,
    ) -> Result<Self> {
        let fm = Self { inputs, outputs, state_law };
        let windows = fm.window_count(ch.nx, ch.ny)?;
        let expected = windows * ch.ns;
        if fm.state_law.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: fm.state_law.len() });
        }
        check_rows(&fm.state_law, ch.ns)?;
        Ok(fm)
    }

    /// Number of windows `nx^inputs * ny^outputs`, guarded by
    /// [`MAX_TRANSFORMED_STATES`].
    pub fn window_count(&self, nx: usize, ny: usize) -> Result<usize> {
        let required = (nx as u128).pow(self.inputs as u32) * (ny as u128).pow(self.outputs as u32);
        if required > MAX_TRANSFORMED_STATES as u128 {
            return Err(Error::CapExceeded { required, cap: MAX_TRANSFORMED_STATES as u128 });
        }
        Ok(required as usize)
    }
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(u, v)| (u - v).abs() <= STOCHASTIC_TOL)
}

fn check_rows(rows: &[f64], width: usize) -> Result<()> {
    if let Some((index, &value)) = rows.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::InvalidEntry { index, value });
    }
    for (row, chunk) in rows.chunks(width).enumerate() {
        let deficit = chunk.iter().sum::<f64>() - 1.0;
        if deficit.abs() > STOCHASTIC_TOL {
            return Err(Error::NotStochastic { row, deficit });
        }
    }
    Ok(())
}

/// Result of classifying a channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelClass {
    Unifilar(UnifilarMap),
    FiniteMemory(FiniteMemory),
    General,
}

impl ChannelClass {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelClass::Unifilar(_) => "unifilar",
            ChannelClass::FiniteMemory(_) => "finite-memory",
            ChannelClass::General => "general",
        }
    }
}

/// A finite-memory channel rewritten as a unifilar one whose state is the
/// window of recent inputs and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub channel: ChannelKernel,
    /// `P(s | s~)` over the original states, `[s~][s]`.
    pub state_law: Vec<f64>,
    pub memory: FiniteMemory,
}

impl Transformed {
    /// Original-state belief carried by transformed state `st`.
    pub fn belief(&self, st: usize) -> &[f64] {
        let ns = self.state_law.len() / self.channel.ns();
        &self.state_law[st * ns..(st + 1) * ns]
    }
}

/// Rewrites a finite-memory channel as a unifilar channel with state
/// `s~ = (recent inputs, recent outputs)` and output law
/// `P(y | x, s~) = sum_s P(s | s~) P(y | x, s)`.
///
/// The state count is `nx^inputs * ny^outputs`, which grows exponentially in
/// the window lengths; it is capped at [`MAX_TRANSFORMED_STATES`].
pub fn transform_to_unifilar(ch: &ChannelKernel, fm: &FiniteMemory) -> Result<Transformed> {
    let (nx, ny, ns) = (ch.nx, ch.ny, ch.ns);
    let windows = fm.window_count(nx, ny)?;
    if fm.state_law.len() != windows * ns {
        return Err(Error::DimensionMismatch { expected: windows * ns, found: fm.state_law.len() });
    }
    let x_mod = nx.pow(fm.inputs as u32);
    let y_mod = ny.pow(fm.outputs as u32);
    let shift = |x: usize, y: usize, st: usize| -> usize {
        let (xp, yp) = (st / y_mod, st % y_mod);
        let xp = if fm.inputs == 0 { 0 } else { (xp * nx + x) % x_mod };
        let yp = if fm.outputs == 0 { 0 } else { (yp * ny + y) % y_mod };
        xp * y_mod + yp
    };
    let mut output = vec![0.0; windows * nx * ny];
    for st in 0..windows {
        let belief = &fm.state_law[st * ns..(st + 1) * ns];
        for x in 0..nx {
            for y in 0..ny {
                output[(st * nx + x) * ny + y] =
                    (0..ns).map(|s| belief[s] * ch.output_prob(s, x, y)).sum();
            }
        }
    }
    let channel = ChannelKernel::from_unifilar(&output, nx, ny, windows, shift)?;
    Ok(Transformed { channel, state_law: fm.state_law.clone(), memory: fm.clone() })
}

/// Detects the finite-memory structure and transforms, failing with
/// [`Error::NotFiniteMemory`] for channels without it.
pub fn transform_detected(ch: &ChannelKernel) -> Result<Transformed> {
    let fm = FiniteMemory::detect(ch).ok_or(Error::NotFiniteMemory)?;
    transform_to_unifilar(ch, &fm)
}

/// Channels shipped with the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinName {
    /// Noisy output is the state: Z/S topologies, state = BSC(eps) of the output.
    Nost,
    /// Noisy Ising: `y = x` or `y = s` w.p. 1/2, state = BSC(eps) of the input.
    NIsing,
    /// Ising channel (noisy Ising with eps = 0).
    Ising,
    /// Previous output is the state (NOST with eps = 0).
    Post,
    /// Memoryless binary symmetric channel with crossover eps.
    Bsc,
}

impl BuiltinName {
    pub fn as_str(&self) -> &'static str {
        match self {
            BuiltinName::Nost => "nost",
            BuiltinName::NIsing => "nising",
            BuiltinName::Ising => "ising",
            BuiltinName::Post => "post",
            BuiltinName::Bsc => "bsc",
        }
    }
}

impl FromStr for BuiltinName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nost" => Ok(BuiltinName::Nost),
            "nising" | "n-ising" | "noisy-ising" => Ok(BuiltinName::NIsing),
            "ising" => Ok(BuiltinName::Ising),
            "post" => Ok(BuiltinName::Post),
            "bsc" => Ok(BuiltinName::Bsc),
            _ => Err(Error::UnknownName(s.to_string())),
        }
    }
}

impl fmt::Display for BuiltinName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A built-in channel and its parameter. The parameter is ignored by `Ising`
/// and `Post` but must still lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinSpec {
    pub name: BuiltinName,
    pub epsilon: f64,
}

impl BuiltinSpec {
    pub fn new(name: BuiltinName, epsilon: f64) -> Self {
        Self { name, epsilon }
    }
}

/// Builds the kernel of a built-in channel.
pub fn builtin(spec: BuiltinSpec) -> Result<ChannelKernel> {
    let eps = spec.epsilon;
    if !(0.0..=1.0).contains(&eps) || eps.is_nan() {
        return Err(Error::EpsilonOutOfRange(eps));
    }
    match spec.name {
        BuiltinName::Nost => Ok(nost(eps)),
        BuiltinName::Post => Ok(nost(0.0)),
        BuiltinName::NIsing => Ok(noisy_ising(eps)),
        BuiltinName::Ising => Ok(noisy_ising(0.0)),
        BuiltinName::Bsc => {
            let k = vec![1.0 - eps, eps, eps, 1.0 - eps];
            ChannelKernel::new(k, 2, 2, 1)
        }
    }
}

fn bsc(eps: f64, from: usize, to: usize) -> f64 {
    if from == to {
        1.0 - eps
    } else {
        eps
    }
}

/// Output law of the NOST family: Z channel (parameter 1/2) in state 0, S
/// channel in state 1.
fn nost_output(s: usize, x: usize, y: usize) -> f64 {
    match (s, x) {
        (0, 0) => [1.0, 0.0][y],
        (1, 1) => [0.0, 1.0][y],
        _ => 0.5,
    }
}

fn nost(eps: f64) -> ChannelKernel {
    let mut k = vec![0.0; 16];
    for s in 0..2 {
        for x in 0..2 {
            for y in 0..2 {
                for sp in 0..2 {
                    k[((s * 2 + x) * 2 + y) * 2 + sp] = nost_output(s, x, y) * bsc(eps, y, sp);
                }
            }
        }
    }
    ChannelKernel::new(k, 2, 2, 2).expect("NOST kernel is stochastic")
}

fn ising_output(s: usize, x: usize, y: usize) -> f64 {
    0.5 * f64::from(u8::from(y == x)) + 0.5 * f64::from(u8::from(y == s))
}

fn noisy_ising(eps: f64) -> ChannelKernel {
    let mut k = vec![0.0; 16];
    for s in 0..2 {
        for x in 0..2 {
            for y in 0..2 {
                for sp in 0..2 {
                    k[((s * 2 + x) * 2 + y) * 2 + sp] = ising_output(s, x, y) * bsc(eps, x, sp);
                }
            }
        }
    }
    ChannelKernel::new(k, 2, 2, 2).expect("noisy Ising kernel is stochastic")
}
