//! One-step update rules and step-size schedules.
//!
//! All optimizers share the same state shape: an n x p iterate matrix X
//! (row i = agent i's point), a tracker matrix Y, and the previous
//! gradient draws G. The tree method updates
//!
//!   X <- R (X - gamma Y),          pull parameters down the tree,
//!   Y <- C Y + G_new - G_old,      push gradient trackers up the tree,
//!
//! which preserves the column sums of Y: 1^T Y = 1^T G at every step, so
//! the trackers always carry the current global gradient in aggregate.
//! Baselines (centralized mini-batch SGD, ring diffusion SGD) fill the
//! same state so the simulator can treat them uniformly; for them Y simply
//! mirrors the latest draws.
//!
//! Oracle draws are keyed by (seed, agent, iteration of the point being
//! evaluated), never by call order, so engines and schedulers cannot
//! perturb them.

use crate::error::{Error, Result};
use crate::numerics::{purpose, sparse_apply, DenseMatrix, RngStream};
use crate::problems::Problem;
use crate::topology::MixingMatrix;

pub const ALGO_BTPP: &str = "btpp";
pub const ALGO_CENTRALIZED: &str = "centralized";
pub const ALGO_DSGD_RING: &str = "dsgd_ring";

/// Shared optimizer state. `iter` counts completed steps; the rows of `x`
/// are the agents' current points, `y` the gradient trackers, and `g_prev`
/// the stochastic gradients drawn at the current points.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmState {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub g_prev: DenseMatrix,
    pub iter: u64,
}

impl AlgorithmState {
    /// Max-norm of the column-sum gap between trackers and gradients,
    /// ||1^T Y - 1^T G||_inf. Exactly preserved by the tree update up to
    /// floating-point addition error.
    pub fn conservation_gap(&self) -> f64 {
        let mut gap = 0.0f64;
        for k in 0..self.y.cols() {
            let ysum: f64 = (0..self.y.rows()).map(|i| self.y.get(i, k)).sum();
            let gsum: f64 = (0..self.g_prev.rows()).map(|i| self.g_prev.get(i, k)).sum();
            gap = gap.max((ysum - gsum).abs());
        }
        gap
    }

    /// Max-norm of the gradient column sums, the natural scale for
    /// `conservation_gap`.
    pub fn conservation_scale(&self) -> f64 {
        let mut scale = 0.0f64;
        for k in 0..self.g_prev.cols() {
            let gsum: f64 = (0..self.g_prev.rows()).map(|i| self.g_prev.get(i, k)).sum();
            scale = scale.max(gsum.abs());
        }
        scale
    }
}

fn check_finite(x: &DenseMatrix, iteration: u64, algo: &'static str) -> Result<()> {
    match x.first_non_finite_row() {
        None => Ok(()),
        Some(agent) => Err(Error::Divergence {
            agent,
            iteration,
            algo,
        }),
    }
}

/// Draw every agent's stochastic gradient at the rows of `x`, keyed by the
/// iterate index those rows belong to.
fn draw_gradients(
    problem: &dyn Problem,
    x: &DenseMatrix,
    root_seed: u64,
    iterate_index: u64,
) -> DenseMatrix {
    let n = problem.agents();
    let mut g = DenseMatrix::zeros(n, problem.dim());
    for agent in 0..n {
        let mut stream = RngStream::new(root_seed, agent as u64, purpose::ORACLE, iterate_index);
        let grad = problem.stochastic_gradient(agent, x.row(agent), &mut stream);
        g.fill_row(agent, &grad);
    }
    g
}

/// Initial state: every agent starts at `x0`, trackers start as the first
/// gradient draws (keyed as iteration 0).
pub fn btpp_init(problem: &dyn Problem, x0: &[f64], root_seed: u64) -> Result<AlgorithmState> {
    assert_eq!(x0.len(), problem.dim(), "x0 has wrong dimension");
    let n = problem.agents();
    let mut x = DenseMatrix::zeros(n, problem.dim());
    for i in 0..n {
        x.fill_row(i, x0);
    }
    check_finite(&x, 0, ALGO_BTPP)?;
    let g = draw_gradients(problem, &x, root_seed, 0);
    check_finite(&g, 0, ALGO_BTPP)?;
    Ok(AlgorithmState {
        x,
        y: g.clone(),
        g_prev: g,
        iter: 0,
    })
}

/// One tree push-pull step with pull matrix `pull` (row-stochastic) and
/// push matrix `push` (its transpose).
pub fn btpp_step(
    state: &mut AlgorithmState,
    pull: &MixingMatrix,
    push: &MixingMatrix,
    problem: &dyn Problem,
    gamma: f64,
    root_seed: u64,
) -> Result<()> {
    let n = problem.agents();
    assert_eq!(pull.dim(), n, "pull matrix size mismatch");
    assert_eq!(push.dim(), n, "push matrix size mismatch");
    assert_eq!(state.x.rows(), n, "state size mismatch");
    let next_iter = state.iter + 1;

    // X' = R (X - gamma Y)
    let mut adapted = state.x.clone();
    for r in 0..n {
        let yrow = state.y.row(r).to_vec();
        for (a, yv) in adapted.row_mut(r).iter_mut().zip(yrow) {
            *a -= gamma * yv;
        }
    }
    let x_next = sparse_apply(pull, &adapted)?;
    check_finite(&x_next, next_iter, ALGO_BTPP)?;

    // Y' = C Y + G(X') - G(X)
    let g_next = draw_gradients(problem, &x_next, root_seed, next_iter);
    check_finite(&g_next, next_iter, ALGO_BTPP)?;
    let mut y_next = sparse_apply(push, &state.y)?;
    for r in 0..n {
        for k in 0..y_next.cols() {
            let v = y_next.get(r, k) + g_next.get(r, k) - state.g_prev.get(r, k);
            y_next.set(r, k, v);
        }
    }
    check_finite(&y_next, next_iter, ALGO_BTPP)?;

    state.x = x_next;
    state.y = y_next;
    state.g_prev = g_next;
    state.iter = next_iter;
    Ok(())
}

/// One step of centralized mini-batch SGD: all agents share one point and
/// move along the mean of the n fresh draws. Rows stay identical.
pub fn centralized_sgd_step(
    state: &mut AlgorithmState,
    problem: &dyn Problem,
    gamma: f64,
    root_seed: u64,
) -> Result<()> {
    let n = problem.agents();
    let g = draw_gradients(problem, &state.x, root_seed, state.iter);
    let mut mean = vec![0.0; problem.dim()];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(g.row(i)) {
            *m += v;
        }
    }
    let point: Vec<f64> = state
        .x
        .row(0)
        .iter()
        .zip(&mean)
        .map(|(xv, mv)| xv - gamma * mv / n as f64)
        .collect();
    let next_iter = state.iter + 1;
    let mut x_next = DenseMatrix::zeros(n, problem.dim());
    for i in 0..n {
        x_next.fill_row(i, &point);
    }
    check_finite(&x_next, next_iter, ALGO_CENTRALIZED)?;
    state.x = x_next;
    state.y = g.clone();
    state.g_prev = g;
    state.iter = next_iter;
    Ok(())
}

/// Symmetric weights of a ring: every agent averages itself and its two
/// neighbors with weight 1/3. Degenerate sizes collapse duplicate
/// neighbors: n = 2 puts weight 2/3 on the single neighbor, n = 1 is a
/// fixed point of the averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct RingWeights {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

pub fn ring_weights(n: usize) -> Result<RingWeights> {
    if n == 0 {
        return Err(Error::EmptyTree);
    }
    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = Vec::new();
            let mut add = |j: usize, w: f64| {
                if let Some(entry) = row.iter_mut().find(|(c, _)| *c == j) {
                    entry.1 += w;
                } else {
                    row.push((j, w));
                }
            };
            add(i, 1.0 / 3.0);
            add((i + n - 1) % n, 1.0 / 3.0);
            add((i + 1) % n, 1.0 / 3.0);
            row.sort_by_key(|&(c, _)| c);
            row
        })
        .collect();
    Ok(RingWeights { n, rows })
}

impl RingWeights {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.n {
            return Err(Error::DimMismatch {
                op: "ring_apply",
                detail: format!("weights are {0}x{0}, state has {1} rows", self.n, x.rows()),
            });
        }
        let mut out = DenseMatrix::zeros(x.rows(), x.cols());
        for i in 0..self.n {
            for &(src, w) in &self.rows[i] {
                let src_row = x.row(src);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src_row) {
                    *d += w * s;
                }
            }
        }
        Ok(out)
    }
}

/// One adapt-then-combine step of decentralized SGD on a ring: each agent
/// takes a local gradient step, then averages with its neighbors.
pub fn dsgd_ring_step(
    state: &mut AlgorithmState,
    weights: &RingWeights,
    problem: &dyn Problem,
    gamma: f64,
    root_seed: u64,
) -> Result<()> {
    let n = problem.agents();
    assert_eq!(weights.dim(), n, "ring size mismatch");
    let g = draw_gradients(problem, &state.x, root_seed, state.iter);
    let mut adapted = state.x.clone();
    for r in 0..n {
        for (a, gv) in adapted.row_mut(r).iter_mut().zip(g.row(r)) {
            *a -= gamma * gv;
        }
    }
    let x_next = weights.apply(&adapted)?;
    let next_iter = state.iter + 1;
    check_finite(&x_next, next_iter, ALGO_DSGD_RING)?;
    state.x = x_next;
    state.y = g.clone();
    state.g_prev = g;
    state.iter = next_iter;
    Ok(())
}

/// How the step size evolves over iterations.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// gamma(t) = base.
    Constant,
    /// gamma(t) = base * factor^floor(t / interval).
    Decayed { factor: f64, interval: u64 },
    /// Horizon-tuned constant for the nonconvex regime:
    /// min of a noise term, a consensus term, and a smoothness cap.
    NonconvexHorizon {
        value_gap: f64,
        noise_var: f64,
        smoothness: f64,
        depth: usize,
        horizon: u64,
    },
    /// Horizon-tuned constant for the strongly convex regime.
    StronglyConvexHorizon {
        smoothness: f64,
        strong_convexity: f64,
        depth: usize,
        horizon: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeSchedule {
    pub kind: ScheduleKind,
    /// Base step size; ignored by the horizon-tuned kinds.
    pub base: f64,
    /// Divide the effective step by the agent count (the usual way to run
    /// the tree method against baselines tuned at some gamma).
    pub rescale_by_n: bool,
    pub agents: usize,
}

impl StepSizeSchedule {
    pub fn constant(base: f64, agents: usize) -> Self {
        StepSizeSchedule {
            kind: ScheduleKind::Constant,
            base,
            rescale_by_n: false,
            agents,
        }
    }

    pub fn decayed(base: f64, factor: f64, interval: u64, agents: usize) -> Self {
        StepSizeSchedule {
            kind: ScheduleKind::Decayed { factor, interval },
            base,
            rescale_by_n: false,
            agents,
        }
    }

    pub fn with_rescale(mut self, rescale: bool) -> Self {
        self.rescale_by_n = rescale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::Schedule("agent count must be positive".into()));
        }
        match self.kind {
            ScheduleKind::Constant => {
                // zero is allowed here: a frozen run is a useful diagnostic
                // (it isolates the mixing dynamics from the optimization)
                if !(self.base >= 0.0) || !self.base.is_finite() {
                    return Err(Error::Schedule(format!(
                        "constant step size must be >= 0, got {}",
                        self.base
                    )));
                }
            }
            ScheduleKind::Decayed { factor, interval } => {
                if !(self.base > 0.0) || !self.base.is_finite() {
                    return Err(Error::Schedule(format!(
                        "base step size must be positive, got {}",
                        self.base
                    )));
                }
                if !(factor > 0.0 && factor <= 1.0) {
                    return Err(Error::Schedule(format!(
                        "decay factor must be in (0, 1], got {factor}"
                    )));
                }
                if interval == 0 {
                    return Err(Error::Schedule("decay interval must be positive".into()));
                }
            }
            ScheduleKind::NonconvexHorizon {
                value_gap,
                noise_var,
                smoothness,
                depth,
                ..
            } => {
                if !(value_gap > 0.0 && value_gap.is_finite()) {
                    return Err(Error::Schedule(format!(
                        "value gap must be positive, got {value_gap}"
                    )));
                }
                if !(noise_var >= 0.0 && noise_var.is_finite()) {
                    return Err(Error::Schedule(format!(
                        "noise variance must be >= 0, got {noise_var}"
                    )));
                }
                if !(smoothness > 0.0 && smoothness.is_finite()) {
                    return Err(Error::Schedule(format!(
                        "smoothness must be positive, got {smoothness}"
                    )));
                }
                if depth == 0 {
                    return Err(Error::Schedule(
                        "horizon-tuned step needs a tree of depth >= 1".into(),
                    ));
                }
            }
            ScheduleKind::StronglyConvexHorizon {
                smoothness,
                strong_convexity,
                depth,
                horizon,
            } => {
                if !(smoothness > 0.0 && smoothness.is_finite()) {
                    return Err(Error::Schedule(format!(
                        "smoothness must be positive, got {smoothness}"
                    )));
                }
                if !(strong_convexity > 0.0 && strong_convexity.is_finite()) {
                    return Err(Error::Schedule(format!(
                        "strong convexity must be positive, got {strong_convexity}"
                    )));
                }
                if horizon < 2 * depth as u64 {
                    return Err(Error::Schedule(format!(
                        "horizon {horizon} shorter than twice the depth {depth}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Step size used for the step leaving iterate t.
    pub fn effective(&self, t: u64) -> Result<f64> {
        let n = self.agents as f64;
        let raw = match self.kind {
            ScheduleKind::Constant => self.base,
            ScheduleKind::Decayed { factor, interval } => {
                // clamp instead of `as`-casting: powi saturates to 0 long
                // before the exponent cap, and a wrapped negative exponent
                // would silently grow the step
                let drops = (t / interval).min(i32::MAX as u64) as i32;
                // keep the step positive even past the f64 underflow point
                (self.base * factor.powi(drops)).max(f64::MIN_POSITIVE)
            }
            ScheduleKind::NonconvexHorizon {
                value_gap,
                noise_var,
                smoothness,
                depth,
                horizon,
            } => {
                let l = smoothness;
                let d = depth as f64;
                let t1 = horizon as f64 + 1.0;
                let noise = (value_gap / (3.0 * noise_var * l * n * t1)).sqrt();
                let consensus =
                    (value_gap / (1500.0 * n * n * d.powi(6) * noise_var * l * l * t1)).cbrt();
                let cap = 1.0 / (100.0 * n * d.powi(3) * l);
                noise.min(consensus).min(cap)
            }
            ScheduleKind::StronglyConvexHorizon {
                smoothness,
                strong_convexity,
                depth,
                horizon,
            } => {
                let l = smoothness;
                let mu = strong_convexity;
                let kappa = l / mu;
                let d = depth as f64;
                let t1 = horizon as f64 + 1.0;
                let cap = 1.0 / (100.0 * n * d * d * kappa * l);
                let anneal = 16.0 * (n * t1 * t1).ln() / (n * t1 * mu);
                cap.min(anneal)
            }
        };
        let gamma = if self.rescale_by_n { raw / n } else { raw };
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::Schedule(format!(
                "effective step at t = {t} is {gamma}"
            )));
        }
        Ok(gamma)
    }
}
