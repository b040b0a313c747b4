//! Seeded sample sets. The generator is SplitMix64 (`rand_xoshiro::SplitMix64`)
//! seeded with the scenario seed, so a seed fixes every sample in a report.

use isotm_core::{RiemannianChart, TMPoint};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

pub struct Sampler {
    rng: SplitMix64,
    half_width: f64,
    fiber_radius: f64,
}

impl Sampler {
    pub fn new(seed: u64, half_width: f64, fiber_radius: f64) -> Self {
        Self {
            rng: SplitMix64::seed_from_u64(seed),
            half_width,
            fiber_radius,
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    fn cube(&mut self, n: usize, r: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.rng.random_range(-r..r))
    }

    /// Uniform in the sampling box, redrawn until inside the chart domain.
    pub fn base_point(&mut self, chart: &RiemannianChart) -> DVector<f64> {
        loop {
            let p = self.cube(chart.dim(), self.half_width);
            if chart.contains(&p) {
                return p;
            }
        }
    }

    /// Fiber coordinates uniform in the ball of radius `fiber_radius`.
    pub fn fiber(&mut self, n: usize) -> DVector<f64> {
        loop {
            let y = self.cube(n, self.fiber_radius);
            if y.norm() <= self.fiber_radius {
                return y;
            }
        }
    }

    pub fn tm_point(&mut self, chart: &RiemannianChart) -> TMPoint {
        let p = self.base_point(chart);
        let y = self.fiber(chart.dim());
        TMPoint::new(p, y)
    }

    /// A vector with components uniform in `[−1, 1]`.
    pub fn direction(&mut self, len: usize) -> DVector<f64> {
        self.cube(len, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_samples() {
        let chart = RiemannianChart::sphere_stereographic(2);
        let mut a = Sampler::new(7, 1.0, 0.5);
        let mut b = Sampler::new(7, 1.0, 0.5);
        for _ in 0..20 {
            let (p, q) = (a.tm_point(&chart), b.tm_point(&chart));
            assert_eq!(p, q);
            assert!(p.fiber.norm() <= 0.5 && p.base.amax() <= 1.0);
        }
        let mut c = Sampler::new(8, 1.0, 0.5);
        assert_ne!(a.tm_point(&chart), c.tm_point(&chart));
    }
}
