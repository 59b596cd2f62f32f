//! Synthetic binary logistic regression with a smooth nonconvex
//! regularizer.
//!
//! Each agent i holds J feature/label pairs drawn around its own model
//! w_i = w + v_i, where w is a shared ground-truth vector and v_i an
//! agent-specific Gaussian shift with standard deviation `heterogeneity`.
//! Labels are sampled from the logistic model: y = +1 with probability
//! sigmoid(h . w_i). The local objective is
//!
//!   f_i(x) = (1/J) sum_j log(1 + exp(-y_ij h_ij . x))
//!            + reg_coeff * sum_k x_k^2 / (1 + x_k^2),
//!
//! whose regularizer is bounded and smooth but nonconvex, so the problem
//! exercises the nonconvex convergence regime.

use super::{sigmoid, softplus, OracleSpec, Problem};
use crate::numerics::{dot, purpose, DenseMatrix, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProblem {
    pub(super) agents: usize,
    pub(super) dim: usize,
    pub(super) samples: usize,
    pub(super) batch: usize,
    pub(super) reg_coeff: f64,
    pub(super) heterogeneity: f64,
    /// J x p feature matrix per agent.
    pub(super) features: Vec<DenseMatrix>,
    /// +1.0 / -1.0 labels per agent.
    pub(super) labels: Vec<Vec<f64>>,
    pub(super) ground_model: Vec<f64>,
    pub(super) agent_models: Vec<Vec<f64>>,
    /// Cached smoothness upper bound.
    pub(super) smoothness: f64,
}

/// Generate a logistic instance; deterministic in `seed`. `batch` is the
/// number of samples (drawn with replacement) per stochastic oracle call.
pub fn generate_logistic(
    agents: usize,
    dim: usize,
    samples: usize,
    heterogeneity: f64,
    reg_coeff: f64,
    batch: usize,
    seed: u64,
) -> LogisticProblem {
    assert!(agents > 0 && dim > 0 && samples > 0, "empty problem");
    assert!(heterogeneity >= 0.0 && heterogeneity.is_finite());
    assert!(reg_coeff >= 0.0 && reg_coeff.is_finite());
    assert!(batch >= 1 && batch <= samples, "batch out of range");

    let ground_model =
        RngStream::new(seed, 0, purpose::GROUND_MODEL, 0).gaussian_vector(dim, 0.0, 1.0);

    let mut agent_models = Vec::with_capacity(agents);
    let mut features = Vec::with_capacity(agents);
    let mut labels = Vec::with_capacity(agents);
    for i in 0..agents {
        let shift = RngStream::new(seed, i as u64, purpose::AGENT_SHIFT, 0)
            .gaussian_vector(dim, 0.0, heterogeneity);
        let model: Vec<f64> = ground_model
            .iter()
            .zip(&shift)
            .map(|(w, v)| w + v)
            .collect();

        let mut feat_stream = RngStream::new(seed, i as u64, purpose::FEATURES, 0);
        let mut h = DenseMatrix::zeros(samples, dim);
        for j in 0..samples {
            h.fill_row(j, &feat_stream.gaussian_vector(dim, 0.0, 1.0));
        }

        let mut label_stream = RngStream::new(seed, i as u64, purpose::LABELS, 0);
        let y: Vec<f64> = (0..samples)
            .map(|j| {
                let z = label_stream.uniform01();
                if z <= sigmoid(dot(h.row(j), &model)) {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();

        agent_models.push(model);
        features.push(h);
        labels.push(y);
    }

    // Loss Hessian is (1/J) sum_j s_j h_j h_j^T with s_j <= 1/4, so
    // ||H||_F^2 / (4J) bounds its top eigenvalue; the regularizer's second
    // derivative is bounded by 2 per coordinate.
    let smoothness = features
        .iter()
        .map(|h| h.data().iter().map(|v| v * v).sum::<f64>() / (4.0 * samples as f64))
        .fold(0.0f64, f64::max)
        + 2.0 * reg_coeff;

    LogisticProblem {
        agents,
        dim,
        samples,
        batch,
        reg_coeff,
        heterogeneity,
        features,
        labels,
        ground_model,
        agent_models,
        smoothness,
    }
}

impl LogisticProblem {
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn reg_coeff(&self) -> f64 {
        self.reg_coeff
    }

    pub fn heterogeneity(&self) -> f64 {
        self.heterogeneity
    }

    pub fn ground_model(&self) -> &[f64] {
        &self.ground_model
    }

    pub fn agent_model(&self, agent: usize) -> &[f64] {
        &self.agent_models[agent]
    }

    /// Mean squared distance of the agent models from the ground model;
    /// grows with `heterogeneity`.
    pub fn model_dispersion(&self) -> f64 {
        let total: f64 = self
            .agent_models
            .iter()
            .map(|m| {
                m.iter()
                    .zip(&self.ground_model)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();
        total / self.agents as f64
    }

    /// Average loss gradient over the given sample indices, plus the
    /// regularizer gradient. The full local gradient is exactly this over
    /// all indices, so single-sample draws average to it by construction.
    pub fn minibatch_gradient(&self, agent: usize, x: &[f64], indices: &[usize]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "point has wrong dimension");
        assert!(!indices.is_empty(), "empty minibatch");
        let h = &self.features[agent];
        let y = &self.labels[agent];
        let mut g = vec![0.0; self.dim];
        for &j in indices {
            let row = h.row(j);
            let margin = y[j] * dot(row, x);
            // d/dm log(1+exp(-m)) = -sigmoid(-m), chain rule through m = y h.x
            let w = -y[j] * sigmoid(-margin);
            for (acc, hv) in g.iter_mut().zip(row) {
                *acc += w * hv;
            }
        }
        let inv = 1.0 / indices.len() as f64;
        for (acc, &xv) in g.iter_mut().zip(x) {
            *acc *= inv;
            let den = 1.0 + xv * xv;
            *acc += self.reg_coeff * 2.0 * xv / (den * den);
        }
        g
    }

    /// Empirical second moment of the gradient noise at x: mean over all J
    /// single-sample gradients of the squared distance to the exact local
    /// gradient. Finite by construction; used to sanity-check noise levels.
    pub fn empirical_noise_second_moment(&self, agent: usize, x: &[f64]) -> f64 {
        let exact = self.local_gradient(agent, x);
        let mut total = 0.0;
        for j in 0..self.samples {
            let g = self.minibatch_gradient(agent, x, &[j]);
            total += g
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        total / self.samples as f64
    }
}

impl Problem for LogisticProblem {
    fn agents(&self) -> usize {
        self.agents
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn local_value(&self, agent: usize, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point has wrong dimension");
        let h = &self.features[agent];
        let y = &self.labels[agent];
        let loss: f64 = (0..self.samples)
            .map(|j| softplus(-y[j] * dot(h.row(j), x)))
            .sum();
        let reg: f64 = x.iter().map(|&v| v * v / (1.0 + v * v)).sum();
        loss / self.samples as f64 + self.reg_coeff * reg
    }

    fn local_gradient(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.samples).collect();
        self.minibatch_gradient(agent, x, &all)
    }

    fn stochastic_gradient(&self, agent: usize, x: &[f64], stream: &mut RngStream) -> Vec<f64> {
        let indices: Vec<usize> = (0..self.batch)
            .map(|_| stream.index(self.samples))
            .collect();
        self.minibatch_gradient(agent, x, &indices)
    }

    fn oracle_spec(&self) -> OracleSpec {
        OracleSpec {
            agents: self.agents,
            dim: self.dim,
            smoothness: self.smoothness,
            strong_convexity: 0.0,
            noise_bound: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LogisticProblem {
        generate_logistic(4, 6, 20, 0.8, 0.01, 1, 7)
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let a = small();
        let b = small();
        assert_eq!(a, b);
        let c = generate_logistic(4, 6, 20, 0.8, 0.01, 1, 8);
        assert_ne!(a.ground_model, c.ground_model);
    }

    #[test]
    fn labels_are_plus_minus_one() {
        let p = small();
        for agent in 0..p.agents {
            assert!(p.labels[agent].iter().all(|&y| y == 1.0 || y == -1.0));
        }
    }

    #[test]
    fn zero_heterogeneity_gives_identical_models() {
        let p = generate_logistic(5, 4, 10, 0.0, 0.01, 1, 3);
        for agent in 0..5 {
            assert_eq!(p.agent_model(agent), p.ground_model());
        }
        assert_eq!(p.model_dispersion(), 0.0);
    }

    #[test]
    fn local_gradient_equals_full_minibatch() {
        let p = small();
        let x: Vec<f64> = (0..6).map(|k| 0.3 * k as f64 - 0.7).collect();
        let all: Vec<usize> = (0..20).collect();
        assert_eq!(p.local_gradient(1, &x), p.minibatch_gradient(1, &x, &all));
    }

    #[test]
    fn single_sample_gradients_average_to_local_gradient() {
        let p = small();
        let x = vec![0.25; 6];
        for agent in 0..p.agents {
            let exact = p.local_gradient(agent, &x);
            let mut mean = vec![0.0; 6];
            for j in 0..p.samples {
                for (m, v) in mean.iter_mut().zip(p.minibatch_gradient(agent, &x, &[j])) {
                    *m += v;
                }
            }
            for (m, e) in mean.iter().zip(&exact) {
                let rel = (m / p.samples as f64 - e).abs() / (1.0 + e.abs());
                assert!(rel <= 1e-12, "agent {agent}: {rel}");
            }
        }
    }

    #[test]
    fn label_rate_tracks_model_probabilities() {
        // Fraction of +1 labels per agent should sit within Monte-Carlo
        // error (4 / sqrt(J)) of the mean sigmoid score of that agent's
        // shard under its own model.
        let samples = 400;
        let p = generate_logistic(4, 8, samples, 0.8, 0.01, 1, 17);
        for agent in 0..p.agents {
            let positives = p.labels[agent].iter().filter(|&&y| y == 1.0).count();
            let rate = positives as f64 / samples as f64;
            let mean_prob: f64 = (0..samples)
                .map(|j| sigmoid(dot(p.features[agent].row(j), p.agent_model(agent))))
                .sum::<f64>()
                / samples as f64;
            let tol = 4.0 / (samples as f64).sqrt();
            assert!(
                (rate - mean_prob).abs() <= tol,
                "agent {agent}: rate {rate} vs mean prob {mean_prob}"
            );
        }
    }

    #[test]
    fn regularizer_is_flat_at_the_origin() {
        // At x = 0 the regularizer contributes neither value nor gradient:
        // the gradient equals the pure loss gradient and the value is the
        // loss at zero margin, log 2.
        let with_reg = generate_logistic(2, 5, 30, 0.5, 0.7, 1, 11);
        let no_reg = generate_logistic(2, 5, 30, 0.5, 0.0, 1, 11);
        let zero = vec![0.0; 5];
        for agent in 0..2 {
            assert_eq!(
                with_reg.local_gradient(agent, &zero),
                no_reg.local_gradient(agent, &zero)
            );
            assert!((with_reg.local_value(agent, &zero) - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn noise_second_moment_is_finite_and_positive() {
        let p = small();
        let m = p.empirical_noise_second_moment(0, &vec![0.1; 6]);
        assert!(m.is_finite() && m > 0.0, "got {m}");
    }

    #[test]
    fn value_is_stable_far_from_origin() {
        let p = small();
        let far = vec![1e4; 6];
        let v = p.local_value(0, &far);
        assert!(v.is_finite());
        let g = p.local_gradient(0, &far);
        assert!(g.iter().all(|v| v.is_finite()));
    }
}
