//! Entropy and relative entropy in bits, with `0 log 0 = 0`.

/// `p log2 p` with the convention `0 log 0 = 0`.
#[inline]
pub fn xlog2x(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * libm::log2(p)
    }
}

/// Shannon entropy in bits.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&v| xlog2x(v)).sum::<f64>()
}

/// Binary entropy `H2(p)`.
pub fn binary_entropy(p: f64) -> f64 {
    -xlog2x(p) - xlog2x(1.0 - p)
}

/// Relative entropy `D(p || q)` in bits. Infinite when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut d = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return f64::INFINITY;
        }
        d += pi * libm::log2(pi / qi);
    }
    d
}

/// `x^y` with `0^0 = 1`.
#[inline]
pub fn pow0(x: f64, y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        libm::pow(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_against_uniform_is_one_bit() {
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn divergence_of_equal_laws_vanishes() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_divergence(&p, &p), 0.0);
    }

    #[test]
    fn missing_support_is_infinite() {
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_infinite());
        assert_eq!(kl_divergence(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
        // H2(1/4) = 2 - (3/4) log2 3
        let expected = 2.0 - 0.75 * libm::log2(3.0);
        assert!((binary_entropy(0.25) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_to_the_zero() {
        assert_eq!(pow0(0.0, 0.0), 1.0);
        assert_eq!(pow0(0.0, 0.5), 0.0);
    }
}
