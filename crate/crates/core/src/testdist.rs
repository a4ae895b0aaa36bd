//! Output test distributions `T(y | q)` attached to a Q-graph.
//!
//! The probability of an output sequence from start node `q0` is the product
//! of `T(y_t | q_{t-1})` along the walk.

use alloc::vec::Vec;

use crate::qgraph::QGraph;
use crate::{Error, Result, STOCHASTIC_TOL};

/// Smallest entry a test distribution may hold. Rewards are divergences
/// against `T`, which blow up at zero.
pub const FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphTestDist {
    graph: QGraph,
    t: Vec<f64>,
}

impl GraphTestDist {
    /// Validates a row-major table `t[q * ny + y]`.
    pub fn new(graph: QGraph, t: Vec<f64>) -> Result<Self> {
        let (nq, ny) = (graph.nq(), graph.ny());
        if t.len() != nq * ny {
            return Err(Error::DimensionMismatch { expected: nq * ny, found: t.len() });
        }
        for (i, &v) in t.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidEntry { index: i, value: v });
            }
            if v < FLOOR {
                return Err(Error::BelowFloor { q: i / ny, y: i % ny, value: v });
            }
        }
        for (row, chunk) in t.chunks(ny).enumerate() {
            let deficit = chunk.iter().sum::<f64>() - 1.0;
            if deficit.abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic { row, deficit });
            }
        }
        Ok(Self { graph, t })
    }

    pub fn uniform(graph: QGraph) -> Self {
        let ny = graph.ny();
        let t = alloc::vec![1.0 / ny as f64; graph.nq() * ny];
        Self { graph, t }
    }

    /// Number of unconstrained coordinates, `nq * (ny - 1)`.
    pub fn param_count(graph: &QGraph) -> usize {
        graph.nq() * (graph.ny() - 1)
    }

    /// Maps unconstrained reals to rows via normalized exponentials, with the
    /// last symbol of each row as reference, then mixes in [`FLOOR`] so every
    /// entry stays at or above it: `t = FLOOR + (1 - ny * FLOOR) * p`.
    pub fn from_params(graph: QGraph, params: &[f64]) -> Result<Self> {
        let (nq, ny) = (graph.nq(), graph.ny());
        let expected = Self::param_count(&graph);
        if params.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: params.len() });
        }
        if let Some(index) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mut t = Vec::with_capacity(nq * ny);
        for q in 0..nq {
            let theta = &params[q * (ny - 1)..(q + 1) * (ny - 1)];
            let m = theta.iter().copied().fold(0.0f64, f64::max);
            let mut row: Vec<f64> =
                theta.iter().map(|&v| libm::exp(v - m)).chain([libm::exp(-m)]).collect();
            normalize(&mut row);
            let scale = 1.0 - ny as f64 * FLOOR;
            t.extend(row.into_iter().map(|p| FLOOR + scale * p));
        }
        Ok(Self { graph, t })
    }

    /// Inverse of [`GraphTestDist::from_params`] on the interior.
    pub fn to_params(&self) -> Vec<f64> {
        let ny = self.graph.ny();
        let scale = 1.0 - ny as f64 * FLOOR;
        let lift = move |v: f64| ((v - FLOOR) / scale).max(f64::MIN_POSITIVE);
        self.t
            .chunks(ny)
            .flat_map(|row| {
                let last = lift(row[ny - 1]);
                row[..ny - 1].iter().map(move |&v| libm::log(lift(v) / last))
            })
            .collect()
    }

    pub fn graph(&self) -> &QGraph {
        &self.graph
    }

    /// Row-major table.
    pub fn table(&self) -> &[f64] {
        &self.t
    }

    /// `T(. | q)`.
    pub fn row(&self, q: usize) -> &[f64] {
        let ny = self.graph.ny();
        &self.t[q * ny..(q + 1) * ny]
    }

    #[inline]
    pub fn prob(&self, q: usize, y: usize) -> f64 {
        self.t[q * self.graph.ny() + y]
    }

    /// Probability of an output sequence from start node `q0`.
    pub fn sequence_prob(&self, q0: usize, outputs: &[usize]) -> Result<f64> {
        self.graph.walk(q0, outputs)?;
        let mut q = q0;
        let mut p = 1.0;
        for &y in outputs {
            p *= self.prob(q, y);
            q = self.graph.next(q, y);
        }
        Ok(p)
    }
}

fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qgraph::{markov_qgraph, nising_q4};
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn uniform_rows() {
        let g = markov_qgraph(1, 2).unwrap();
        let t = GraphTestDist::uniform(g.clone());
        assert_eq!(t.table(), &[0.5; 4]);
        GraphTestDist::new(g, t.table().to_vec()).unwrap();
        let g4 = markov_qgraph(1, 4).unwrap();
        let t4 = GraphTestDist::uniform(g4.clone());
        assert!(t4.table().iter().all(|&v| v == 0.25));
        GraphTestDist::new(g4, t4.table().to_vec()).unwrap();
    }

    #[test]
    fn zero_params_are_uniform() {
        let g = nising_q4();
        let t = GraphTestDist::from_params(g.clone(), &[0.0; 4]).unwrap();
        assert_eq!(t, GraphTestDist::uniform(g));
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = markov_qgraph(1, 2).unwrap();
        assert_eq!(
            GraphTestDist::from_params(g.clone(), &[0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        );
        assert!(matches!(
            GraphTestDist::new(g.clone(), vec![1.0, 0.0, 0.5, 0.5]),
            Err(Error::BelowFloor { q: 0, y: 1, .. })
        ));
        assert!(matches!(
            GraphTestDist::new(g, vec![0.6, 0.6, 0.5, 0.5]),
            Err(Error::NotStochastic { row: 0, .. })
        ));
    }

    #[test]
    fn extreme_params_respect_floor() {
        let g = markov_qgraph(1, 2).unwrap();
        let t = GraphTestDist::from_params(g, &[800.0, -800.0]).unwrap();
        assert!(t.table().iter().all(|&v| v >= FLOOR));
        assert!((t.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn four_fifths_row_round_trips() {
        let g = markov_qgraph(1, 2).unwrap();
        let t = GraphTestDist::new(g.clone(), vec![0.8, 0.2, 0.2, 0.8]).unwrap();
        let back = GraphTestDist::from_params(g, &t.to_params()).unwrap();
        for (a, b) in t.table().iter().zip(back.table()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn params_round_trip(params in proptest::collection::vec(-8.0f64..8.0, 18)) {
            let g = markov_qgraph(2, 3).unwrap();
            prop_assume!(params.len() == GraphTestDist::param_count(&g));
            let t = GraphTestDist::from_params(g.clone(), &params).unwrap();
            let t2 = GraphTestDist::from_params(g, &t.to_params()).unwrap();
            for (a, b) in t.table().iter().zip(t2.table()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn sequence_law_is_a_product(
            params in proptest::collection::vec(-3.0f64..3.0, 4),
            ys in proptest::collection::vec(0usize..2, 0..=6),
            q0 in 0usize..4,
        ) {
            let g = nising_q4();
            let t = GraphTestDist::from_params(g.clone(), &params).unwrap();
            let mut direct = 1.0;
            for i in 0..ys.len() {
                let q = g.walk(q0, &ys[..i]).unwrap();
                direct *= t.prob(q, ys[i]);
            }
            prop_assert!((t.sequence_prob(q0, &ys).unwrap() - direct).abs() < 1e-15);
        }

        #[test]
        fn sequence_law_sums_to_one(params in proptest::collection::vec(-3.0f64..3.0, 4), len in 0usize..=6) {
            let g = nising_q4();
            let t = GraphTestDist::from_params(g, &params).unwrap();
            let mut total = 0.0;
            for code in 0..(1usize << len) {
                let ys: Vec<usize> = (0..len).map(|i| (code >> i) & 1).collect();
                total += t.sequence_prob(0, &ys).unwrap();
            }
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
