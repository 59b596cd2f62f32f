//! The tree engine against a from-scratch reference.
//!
//! The oracle here shares nothing with the engine's plumbing: it builds the
//! pull matrix densely from the parent formula, multiplies with plain triple
//! loops, and tracks state in nested Vecs. Gradient draws use the same keyed
//! streams, so the two trajectories must agree exactly -- any drift in the
//! mixing structure, the update order, or the stream keying shows up as a
//! mismatch at some (agent, iteration).

use btpp_core::algorithms::{btpp_init, btpp_step};
use btpp_core::numerics::{purpose, RngStream};
use btpp_core::problems::{generate_logistic, generate_quadratic};
use btpp_core::topology::{build_bary_tree, pull_matrix, push_matrix};
use btpp_core::Problem;

/// Dense pull matrix straight from the parent map: row 1 keeps itself, row
/// i > 1 copies from floor((i - 2) / B) + 1 (all 1-based).
fn dense_pull(n: usize, branch: usize) -> Vec<Vec<f64>> {
    let mut r = vec![vec![0.0; n]; n];
    r[0][0] = 1.0;
    for i in 2..=n {
        let parent = (i - 2) / branch + 1;
        r[i - 1][parent - 1] = 1.0;
    }
    r
}

fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

/// Plain full-sum matrix-matrix multiply, ascending inner index.
fn mult(a: &[Vec<f64>], x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let p = x[0].len();
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for j in 0..p {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i][k] * x[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn draw(problem: &dyn Problem, agent: usize, x: &[f64], seed: u64, iterate: u64) -> Vec<f64> {
    let mut stream = RngStream::new(seed, agent as u64, purpose::ORACLE, iterate);
    problem.stochastic_gradient(agent, x, &mut stream)
}

/// Run both the engine and the reference for `horizon` steps and demand
/// equality of every matrix entry after every step.
fn check_trajectory(problem: &dyn Problem, branch: usize, gamma: f64, seed: u64, horizon: u64) {
    let n = problem.agents();
    let p = problem.dim();
    let x0 = vec![0.25; p];

    let tree = build_bary_tree(n, branch).unwrap();
    let pull = pull_matrix(&tree);
    let push = push_matrix(&tree);
    let mut state = btpp_init(problem, &x0, seed).unwrap();

    let r = dense_pull(n, branch);
    let c = transpose(&r);
    let mut xo = vec![x0.clone(); n];
    let mut gp: Vec<Vec<f64>> = (0..n).map(|i| draw(problem, i, &x0, seed, 0)).collect();
    let mut yo = gp.clone();

    for t in 0..horizon {
        btpp_step(&mut state, &pull, &push, problem, gamma, seed).unwrap();

        // X <- R(X - gamma Y), fresh draws at the new points,
        // Y <- C Y + G_new - G_prev
        let adapted: Vec<Vec<f64>> = xo
            .iter()
            .zip(&yo)
            .map(|(xr, yr)| xr.iter().zip(yr).map(|(x, y)| x - gamma * y).collect())
            .collect();
        let x_next = mult(&r, &adapted);
        let g_next: Vec<Vec<f64>> = (0..n)
            .map(|i| draw(problem, i, &x_next[i], seed, t + 1))
            .collect();
        let cy = mult(&c, &yo);
        let y_next: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..p)
                    .map(|j| (cy[i][j] + g_next[i][j]) - gp[i][j])
                    .collect()
            })
            .collect();
        xo = x_next;
        yo = y_next;
        gp = g_next;

        assert_eq!(state.iter, t + 1);
        for i in 0..n {
            assert_eq!(state.x.row(i), &xo[i][..], "x, agent {i} after step {t}");
            assert_eq!(state.y.row(i), &yo[i][..], "y, agent {i} after step {t}");
            assert_eq!(state.g_prev.row(i), &gp[i][..], "g, agent {i} after step {t}");
        }
    }
}

#[test]
fn noisy_quadratic_matches_the_reference_across_tree_shapes() {
    for &(n, branch) in &[
        (1usize, 2usize),
        (2, 2),
        (5, 2),
        (10, 2),
        (13, 3),
        (16, 4),
        (9, 8),
    ] {
        let problem = generate_quadratic(n, 5, 3.0, 0.7, 42);
        check_trajectory(&problem, branch, 0.05, 42, 40);
    }
}

#[test]
fn minibatch_logistic_matches_the_reference() {
    for &branch in &[2usize, 3] {
        let problem = generate_logistic(6, 4, 12, 0.8, 0.01, 3, 7);
        check_trajectory(&problem, branch, 0.2, 7, 40);
    }
}
