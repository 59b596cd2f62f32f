//! Strongly convex diagonal quadratics with an optional additive-noise
//! oracle and a closed-form minimizer.
//!
//! Agent i holds f_i(x) = (1/2) sum_k a_ik x_k^2 - sum_k b_ik x_k with
//! diagonal curvature a_ik in [1, condition). The average objective is
//! separable, so its minimizer is x*_k = (sum_i b_ik) / (sum_i a_ik),
//! exact up to one floating-point division per coordinate. With
//! noise_stddev = 0 the stochastic oracle returns the exact gradient,
//! which makes this the reference problem for clean linear-convergence
//! checks.

use super::{OracleSpec, Problem};
use crate::numerics::{purpose, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    pub(super) agents: usize,
    pub(super) dim: usize,
    pub(super) condition: f64,
    pub(super) noise_stddev: f64,
    /// Per-agent diagonal curvature, entries in [1, condition).
    pub(super) curvature: Vec<Vec<f64>>,
    /// Per-agent linear term.
    pub(super) targets: Vec<Vec<f64>>,
    pub(super) minimizer: Vec<f64>,
    pub(super) optimal_value: f64,
}

pub fn generate_quadratic(
    agents: usize,
    dim: usize,
    condition: f64,
    noise_stddev: f64,
    seed: u64,
) -> QuadraticProblem {
    assert!(agents > 0 && dim > 0, "empty problem");
    assert!(condition >= 1.0 && condition.is_finite());
    assert!(noise_stddev >= 0.0 && noise_stddev.is_finite());

    let mut curvature = Vec::with_capacity(agents);
    let mut targets = Vec::with_capacity(agents);
    for i in 0..agents {
        let mut curve_stream = RngStream::new(seed, i as u64, purpose::QUAD_CURVATURE, 0);
        curvature.push(
            (0..dim)
                .map(|_| 1.0 + (condition - 1.0) * curve_stream.uniform01())
                .collect::<Vec<f64>>(),
        );
        targets.push(
            RngStream::new(seed, i as u64, purpose::QUAD_TARGET, 0).gaussian_vector(dim, 0.0, 1.0),
        );
    }

    let mut minimizer = vec![0.0; dim];
    for k in 0..dim {
        let a_sum: f64 = (0..agents).map(|i| curvature[i][k]).sum();
        let b_sum: f64 = (0..agents).map(|i| targets[i][k]).sum();
        minimizer[k] = b_sum / a_sum;
    }

    let mut p = QuadraticProblem {
        agents,
        dim,
        condition,
        noise_stddev,
        curvature,
        targets,
        minimizer,
        optimal_value: 0.0,
    };
    p.optimal_value = p.average_value(&p.minimizer.clone());
    p
}

impl QuadraticProblem {
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn noise_stddev(&self) -> f64 {
        self.noise_stddev
    }

    pub fn curvature(&self, agent: usize) -> &[f64] {
        &self.curvature[agent]
    }

    pub fn target(&self, agent: usize) -> &[f64] {
        &self.targets[agent]
    }

    /// Norm of the average gradient at the stored minimizer; zero up to
    /// rounding, exposed so tests can pin the tolerance.
    pub fn stationarity_residual(&self) -> f64 {
        self.average_gradient(&self.minimizer)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl Problem for QuadraticProblem {
    fn agents(&self) -> usize {
        self.agents
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn local_value(&self, agent: usize, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point has wrong dimension");
        let a = &self.curvature[agent];
        let b = &self.targets[agent];
        (0..self.dim)
            .map(|k| 0.5 * a[k] * x[k] * x[k] - b[k] * x[k])
            .sum()
    }

    fn local_gradient(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "point has wrong dimension");
        let a = &self.curvature[agent];
        let b = &self.targets[agent];
        (0..self.dim).map(|k| a[k] * x[k] - b[k]).collect()
    }

    fn stochastic_gradient(&self, agent: usize, x: &[f64], stream: &mut RngStream) -> Vec<f64> {
        let mut g = self.local_gradient(agent, x);
        if self.noise_stddev > 0.0 {
            let noise = stream.gaussian_vector(self.dim, 0.0, self.noise_stddev);
            for (gv, nv) in g.iter_mut().zip(noise) {
                *gv += nv;
            }
        }
        g
    }

    fn minimizer(&self) -> Option<&[f64]> {
        Some(&self.minimizer)
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(self.optimal_value)
    }

    fn oracle_spec(&self) -> OracleSpec {
        OracleSpec {
            agents: self.agents,
            dim: self.dim,
            // curvature entries sit in [1, condition)
            smoothness: self.condition,
            strong_convexity: 1.0,
            noise_bound: Some(self.dim as f64 * self.noise_stddev * self.noise_stddev),
        }
    }
}
