//! Derivative-free minimization: golden-section line search and a pattern
//! search over coordinate and pairwise directions.
//!
//! The objectives minimized here are typically convex but not smooth (they
//! are maxima over finitely many policies), so plain coordinate descent can
//! stop on a ridge. Pairwise directions `e_i +- e_j`, the last pass's net
//! move, and a batch of random unit directions are tried before the step
//! shrinks; with enough random directions the search cannot stall at a kink
//! that has a descent direction.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes a unimodal `f` on `[lo, hi]`. Returns the best point seen.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternOptions {
    /// Half-width of the first line-search brackets.
    pub initial_step: f64,
    /// Stop once the bracket half-width falls below this.
    pub min_step: f64,
    /// A pass improving the objective by less than this shrinks the step.
    pub tol: f64,
    pub max_evals: usize,
    /// Random directions tried per stalled pass, as a multiple of the
    /// dimension.
    pub random_directions: usize,
    pub seed: u64,
}

impl Default for PatternOptions {
    fn default() -> Self {
        Self { initial_step: 1.0, min_step: 1e-7, tol: 1e-9, max_evals: 200_000, random_directions: 4, seed: 1 }
    }
}

fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        // Box-Muller normals give a uniformly distributed direction
        let d: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let v: f64 = rng.gen();
                libm::sqrt(-2.0 * libm::log(u)) * libm::cos(core::f64::consts::TAU * v)
            })
            .collect();
        let len = libm::sqrt(d.iter().map(|x| x * x).sum::<f64>());
        if len > 1e-9 {
            return d.into_iter().map(|x| x / len).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimizes `f` from `x0`. Non-finite values are treated as infeasible.
pub fn pattern_search(mut f: impl FnMut(&[f64]) -> f64, x0: Vec<f64>, opts: &PatternOptions) -> Minimum {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut x = x0;
    let mut fx = eval(&x, &mut evals);
    if n == 0 {
        return Minimum { x, value: fx, evals };
    }
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            d
        })
        .collect();
    let coords = dirs.len();
    let r = core::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            for s in [1.0, -1.0] {
                let mut d = vec![0.0; n];
                d[i] = r;
                d[j] = s * r;
                dirs.push(d);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut step = opts.initial_step;
    let mut probe = vec![0.0; n];
    let mut line = |x: &[f64], fx: f64, d: &[f64], step: f64, evals: &mut usize| -> Option<(Vec<f64>, f64)> {
        let (t, v) = golden_section(
            |t| {
                for k in 0..n {
                    probe[k] = x[k] + t * d[k];
                }
                eval(&probe, evals)
            },
            -step,
            step,
            (step * 1e-4).max(1e-12),
        );
        (v < fx).then(|| ((0..n).map(|k| x[k] + t * d[k]).collect(), v))
    };
    while evals < opts.max_evals {
        let start = x.clone();
        let f_start = fx;
        for d in &dirs[..coords] {
            if let Some((nx, nv)) = line(&x, fx, d, step, &mut evals) {
                x = nx;
                fx = nv;
            }
        }
        if f_start - fx < opts.tol {
            for d in &dirs[coords..] {
                if let Some((nx, nv)) = line(&x, fx, d, step, &mut evals) {
                    x = nx;
                    fx = nv;
                }
            }
        }
        if f_start - fx < opts.tol && n > 1 {
            for _ in 0..opts.random_directions * n {
                let d = random_unit(&mut rng, n);
                if let Some((nx, nv)) = line(&x, fx, &d, step, &mut evals) {
                    x = nx;
                    fx = nv;
                }
            }
        }
        let moved: Vec<f64> = x.iter().zip(&start).map(|(a, b)| a - b).collect();
        let len = libm::sqrt(moved.iter().map(|m| m * m).sum::<f64>());
        if len > 0.0 {
            let d: Vec<f64> = moved.iter().map(|m| m / len).collect();
            if let Some((nx, nv)) = line(&x, fx, &d, step.max(len), &mut evals) {
                x = nx;
                fx = nv;
            }
        }
        if f_start - fx < opts.tol {
            if step <= opts.min_step {
                break;
            }
            step *= 0.25;
        }
    }
    Minimum { x, value: fx, evals }
}
