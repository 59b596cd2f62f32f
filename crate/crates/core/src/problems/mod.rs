//! Synthetic optimization problems with exact and stochastic first-order
//! oracles.
//!
//! A problem is a finite-sum objective f(x) = (1/n) sum_i f_i(x) where
//! agent i alone can evaluate f_i. Implementations provide exact local
//! gradients (used by metrics and by tests) and cheap stochastic gradients
//! (used by the optimizers). Stochastic draws are unbiased and keyed: the
//! caller supplies the random stream, so an oracle call is a pure function
//! of (problem, agent, point, stream key).

mod io;
mod logistic;
mod quadratic;

pub use logistic::{generate_logistic, LogisticProblem};
pub use quadratic::{generate_quadratic, QuadraticProblem};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Constants a step-size rule may need: curvature bounds and the oracle
/// noise level. Bounds are conservative (valid upper bounds for L, a valid
/// lower bound for mu), not tight estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSpec {
    pub agents: usize,
    pub dim: usize,
    /// Upper bound on the gradient Lipschitz constant of every f_i.
    pub smoothness: f64,
    /// Lower bound on the strong convexity of the average objective;
    /// 0 when no such bound is claimed.
    pub strong_convexity: f64,
    /// Per-draw gradient noise second moment, when known in closed form.
    pub noise_bound: Option<f64>,
}

pub trait Problem: Send + Sync {
    fn agents(&self) -> usize;
    fn dim(&self) -> usize;

    fn local_value(&self, agent: usize, x: &[f64]) -> f64;
    fn local_gradient(&self, agent: usize, x: &[f64]) -> Vec<f64>;

    /// One unbiased stochastic gradient draw for this agent at x.
    fn stochastic_gradient(&self, agent: usize, x: &[f64], stream: &mut RngStream) -> Vec<f64>;

    fn average_value(&self, x: &[f64]) -> f64 {
        let n = self.agents();
        (0..n).map(|i| self.local_value(i, x)).sum::<f64>() / n as f64
    }

    /// Exact gradient of the average objective; agents accumulated in
    /// ascending order.
    fn average_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.agents();
        let mut g = vec![0.0; self.dim()];
        for i in 0..n {
            for (acc, v) in g.iter_mut().zip(self.local_gradient(i, x)) {
                *acc += v;
            }
        }
        for v in g.iter_mut() {
            *v /= n as f64;
        }
        g
    }

    /// Known minimizer of the average objective, if the problem has one in
    /// closed form.
    fn minimizer(&self) -> Option<&[f64]> {
        None
    }

    fn optimal_value(&self) -> Option<f64> {
        None
    }

    fn oracle_spec(&self) -> OracleSpec;
}

/// Generator parameters for a problem instance; this is what configs and
/// sweeps carry around. `generate` is deterministic in the seed.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Logistic {
        agents: usize,
        dim: usize,
        samples: usize,
        heterogeneity: f64,
        reg_coeff: f64,
        batch: usize,
    },
    Quadratic {
        agents: usize,
        dim: usize,
        condition: f64,
        noise_stddev: f64,
    },
}

impl ProblemSpec {
    pub fn agents(&self) -> usize {
        match self {
            ProblemSpec::Logistic { agents, .. } => *agents,
            ProblemSpec::Quadratic { agents, .. } => *agents,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Logistic { dim, .. } => *dim,
            ProblemSpec::Quadratic { dim, .. } => *dim,
        }
    }

    /// Short tag used in CSV output.
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::Logistic { .. } => "logistic",
            ProblemSpec::Quadratic { .. } => "quadratic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ProblemSpec::Logistic {
                agents,
                dim,
                samples,
                heterogeneity,
                reg_coeff,
                batch,
            } => {
                if agents == 0 || dim == 0 || samples == 0 {
                    return Err(Error::Config(
                        "logistic problem needs positive agents, dim, samples".into(),
                    ));
                }
                if !(heterogeneity >= 0.0) || !heterogeneity.is_finite() {
                    return Err(Error::Config(format!(
                        "heterogeneity must be finite and >= 0, got {heterogeneity}"
                    )));
                }
                if !reg_coeff.is_finite() || reg_coeff < 0.0 {
                    return Err(Error::Config(format!(
                        "reg_coeff must be finite and >= 0, got {reg_coeff}"
                    )));
                }
                if batch == 0 || batch > samples {
                    return Err(Error::BatchRange { batch, samples });
                }
                Ok(())
            }
            ProblemSpec::Quadratic {
                agents,
                dim,
                condition,
                noise_stddev,
            } => {
                if agents == 0 || dim == 0 {
                    return Err(Error::Config(
                        "quadratic problem needs positive agents, dim".into(),
                    ));
                }
                if !condition.is_finite() || condition < 1.0 {
                    return Err(Error::Config(format!(
                        "condition number must be finite and >= 1, got {condition}"
                    )));
                }
                if !noise_stddev.is_finite() || noise_stddev < 0.0 {
                    return Err(Error::Config(format!(
                        "noise_stddev must be finite and >= 0, got {noise_stddev}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Box<dyn Problem>> {
        self.validate()?;
        Ok(match *self {
            ProblemSpec::Logistic {
                agents,
                dim,
                samples,
                heterogeneity,
                reg_coeff,
                batch,
            } => Box::new(generate_logistic(
                agents,
                dim,
                samples,
                heterogeneity,
                reg_coeff,
                batch,
                seed,
            )),
            ProblemSpec::Quadratic {
                agents,
                dim,
                condition,
                noise_stddev,
            } => Box::new(generate_quadratic(agents, dim, condition, noise_stddev, seed)),
        })
    }
}

/// Numerically stable log(1 + exp(t)).
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Numerically stable 1 / (1 + exp(-t)).
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}
