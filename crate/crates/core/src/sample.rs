//! Axis-aligned domain boxes and seeded point sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the generator behind every seeded sample, for report headers.
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.3, seed_from_u64)";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    bounds: Vec<(f64, f64)>,
}

impl DomainBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (a, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Invalid(format!(
                    "domain interval {} is empty or not finite: [{lo}, {hi}]",
                    a + 1
                )));
            }
        }
        Ok(DomainBox { bounds })
    }

    pub fn uniform(n: usize, lo: f64, hi: f64) -> Self {
        DomainBox {
            bounds: vec![(lo, hi); n],
        }
    }

    pub fn with_axis(mut self, axis: usize, lo: f64, hi: f64) -> Self {
        self.bounds[axis] = (lo, hi);
        self
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.contains_within(p, 0.0)
    }

    /// Membership in the box widened by `slack` times each interval width.
    pub fn contains_within(&self, p: &[f64], slack: f64) -> bool {
        p.len() == self.bounds.len()
            && p.iter().zip(&self.bounds).all(|(x, &(lo, hi))| {
                let pad = slack * (hi - lo);
                *x >= lo - pad && *x <= hi + pad
            })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..hi))
            .collect()
    }

    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng(seed);
        (0..count).map(|_| self.sample(&mut r)).collect()
    }

    /// Rejection sampling; gives up after `1000 · count` draws.
    pub fn sample_points_where(
        &self,
        count: usize,
        seed: u64,
        keep: impl Fn(&[f64]) -> bool,
    ) -> Result<Vec<Vec<f64>>> {
        let mut r = rng(seed);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count.saturating_mul(1000).max(1000) {
            if out.len() == count {
                break;
            }
            let p = self.sample(&mut r);
            if keep(&p) {
                out.push(p);
            }
        }
        if out.len() < count {
            return Err(Error::Invalid(format!(
                "could only sample {} of {count} admissible points",
                out.len()
            )));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_seeded_and_inside() {
        let b = DomainBox::uniform(3, -1.0, 2.0).with_axis(2, 5.0, 6.0);
        let a = b.sample_points(10, 3);
        assert_eq!(a, b.sample_points(10, 3));
        assert_ne!(a, b.sample_points(10, 4));
        assert!(a.iter().all(|p| b.contains(p)));
        assert!(!b.contains(&[0.0, 0.0, 4.0]));
        assert!(b.contains_within(&[0.0, 0.0, 4.95], 0.1));
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(DomainBox::new(vec![(1.0, 1.0)]).is_err());
        assert!(DomainBox::new(vec![(0.0, f64::INFINITY)]).is_err());
    }

    #[test]
    fn rejection_sampling() {
        let b = DomainBox::uniform(2, 0.0, 1.0);
        let pts = b.sample_points_where(5, 0, |p| p[0] + p[1] > 1.5).unwrap();
        assert!(pts.iter().all(|p| p[0] + p[1] > 1.5));
        assert!(b.sample_points_where(1, 0, |_| false).is_err());
    }
}
