//! Alternating bound-tightening: worst-case violations drive per-constraint
//! tightening amounts until the distributed dispatch cannot violate the
//! original bounds.

use crate::netmodel::Network;

/// Per-constraint tightening amounts (all nonnegative, pu).
///
/// Voltage entries are per bus; reactive entries are per generator bus
/// (indexed by bus, zero elsewhere); flow entries are per branch and only
/// meaningful where a thermal limit exists.
#[derive(Debug, Clone, PartialEq)]
pub struct TightenedBounds {
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
    pub q_lo: Vec<f64>,
    pub q_hi: Vec<f64>,
    pub s_hi: Vec<f64>,
}

impl TightenedBounds {
    pub fn zeros(net: &Network) -> Self {
        TightenedBounds {
            v_lo: vec![0.0; net.buses.len()],
            v_hi: vec![0.0; net.buses.len()],
            q_lo: vec![0.0; net.buses.len()],
            q_hi: vec![0.0; net.buses.len()],
            s_hi: vec![0.0; net.branches.len()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.iter_all().all(|v| v == 0.0)
    }

    fn iter_all(&self) -> impl Iterator<Item = f64> + '_ {
        self.v_lo
            .iter()
            .chain(&self.v_hi)
            .chain(&self.q_lo)
            .chain(&self.q_hi)
            .chain(&self.s_hi)
            .copied()
    }

    /// 2-norm of the difference, the Fig-5-style convergence measure.
    pub fn distance(&self, other: &TightenedBounds) -> f64 {
        self.iter_all()
            .zip(other.iter_all())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// One tightening update: grow by a positive worst-case violation, shrink by
/// unused slack down to zero.
pub fn update_lambda(lambda_prev: f64, w: f64) -> f64 {
    if w > 0.0 {
        lambda_prev + w
    } else if lambda_prev > 0.0 {
        lambda_prev - (-w).min(lambda_prev)
    } else {
        lambda_prev
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_grows_by_positive_violation() {
        assert_eq!(update_lambda(0.0, 0.5), 0.5);
    }

    #[test]
    fn update_shrinks_by_negative_violation() {
        assert!((update_lambda(0.3, -0.1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn update_floors_at_zero() {
        assert_eq!(update_lambda(0.3, -0.5), 0.0);
    }

    #[test]
    fn update_keeps_zero_for_negative_violation() {
        assert_eq!(update_lambda(0.0, -0.2), 0.0);
    }

    #[test]
    fn randomized_updates_never_go_negative() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let w = rng.gen_range(-1.0..1.0);
            lambda = update_lambda(lambda, w);
            assert!(lambda >= 0.0);
        }
    }
}
