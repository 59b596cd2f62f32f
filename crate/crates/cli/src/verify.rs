//! The self-check suite behind `btpp verify`.
//!
//! Everything the tree method relies on structurally is checked here over a
//! grid of shapes: the pull matrix is a 0/1 row-stochastic parent map, the
//! push matrix is exactly its transpose, the closed-form matrix powers agree
//! with honest integer products, the d-th power collapses to the rank-one
//! averaging matrix, the deviation from that limit stays within the √n
//! envelope, no node talks to more than B+1 partners, and the trackers
//! conserve the gradient column sums over a real run. Exact properties are
//! compared exactly (integer arithmetic where possible); only the spectral
//! bound involves a numeric tolerance.

use btpp_core::algorithms::{btpp_init, btpp_step};
use btpp_core::numerics::spectral_norm;
use btpp_core::simulator::comm_audit;
use btpp_core::topology::{
    build_bary_tree, closed_form_power, left_eigenvector_u, pull_matrix, push_matrix,
};
use btpp_core::{DenseMatrix, ProblemSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n_lo: usize,
    pub n_hi: usize,
    pub branches: Vec<usize>,
}

/// Parses "lo..hi:b1,b2,..." (both n bounds inclusive).
pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let bad = || format!("bad --grid `{s}`; expected like 1..64:2,3,4,8");
    let (range, blist) = s.split_once(':').ok_or_else(bad)?;
    let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
    let n_lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let n_hi: usize = hi.trim().parse().map_err(|_| bad())?;
    let branches: Vec<usize> = blist
        .split(',')
        .map(|b| b.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if n_lo == 0 || n_hi < n_lo {
        return Err(format!("--grid wants 1 <= lo <= hi, got {n_lo}..{n_hi}"));
    }
    if branches.is_empty() || branches.iter().any(|&b| b < 2) {
        return Err("--grid branch sizes must all be >= 2".into());
    }
    Ok(Grid {
        n_lo,
        n_hi,
        branches,
    })
}

struct Property {
    name: &'static str,
    checks: u64,
    failed: u64,
    failures: Vec<String>,
}

impl Property {
    fn new(name: &'static str) -> Self {
        Property {
            name,
            checks: 0,
            failed: 0,
            failures: Vec::new(),
        }
    }
    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failed += 1;
            // keep the report readable when something is badly broken:
            // count everything, print the first few
            if self.failures.len() < 8 {
                self.failures.push(detail());
            }
        }
    }
}

pub struct SuiteOutcome {
    pub report: String,
    pub passed: bool,
}

/// n x n integer product, used as the reference for the closed-form powers.
fn int_matmul(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let n = a.len();
    let mut out = vec![vec![0i64; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] != 0 {
                for j in 0..n {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
    }
    out
}

fn dense_to_int(m: &DenseMatrix) -> Vec<Vec<i64>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j) as i64).collect())
        .collect()
}

pub fn run_suite(grid: &Grid, inject_fault: bool) -> SuiteOutcome {
    let mut rows_unit = Property::new("pull-rows-are-unit");
    let mut push_transpose = Property::new("push-is-pull-transpose");
    let mut power_product = Property::new("closed-form-power-matches-product");
    let mut terminal = Property::new("terminal-power-is-rank-one");
    let mut deviation = Property::new("deviation-norm-within-sqrt-n");
    let mut partners = Property::new("partner-count-within-b-plus-one");
    let mut conservation = Property::new("trackers-conserve-gradient-sum");

    let mut fault_pending = inject_fault;

    for &b in &grid.branches {
        for n in grid.n_lo..=grid.n_hi {
            let tree = match build_bary_tree(n, b) {
                Ok(t) => t,
                Err(e) => {
                    rows_unit.check(false, || format!("n={n} B={b}: tree build failed: {e}"));
                    continue;
                }
            };
            let d = tree.depth();
            let pull = pull_matrix(&tree);
            let push = push_matrix(&tree);
            let rd = pull.to_dense();
            let cd = push.to_dense();

            // each pull row is all zeros except a single 1 at the parent
            let mut unit_ok = true;
            for i in 0..n {
                let want = tree.parent(i + 1) - 1;
                for j in 0..n {
                    let v = rd.get(i, j);
                    let expect = if j == want { 1.0 } else { 0.0 };
                    if v != expect {
                        unit_ok = false;
                    }
                }
            }
            rows_unit.check(unit_ok, || format!("n={n} B={b}: pull rows are not unit parent rows"));

            // push = pull transposed, and therefore column-stochastic
            let mut tr_ok = true;
            for i in 0..n {
                for j in 0..n {
                    if cd.get(i, j) != rd.get(j, i) {
                        tr_ok = false;
                    }
                }
            }
            for j in 0..n {
                let col: f64 = (0..n).map(|i| cd.get(i, j)).sum();
                if col != 1.0 {
                    tr_ok = false;
                }
            }
            push_transpose.check(tr_ok, || format!("n={n} B={b}: push is not the pull transpose"));

            // closed-form powers against integer products, k = 1..=d (for a
            // single node d = 0 and the first power is already terminal)
            let r_int = dense_to_int(&rd);
            let mut prod = r_int.clone();
            let top = d.max(1);
            for k in 1..=top {
                let mut closed = closed_form_power(&tree, k as u32).to_dense();
                if fault_pending && n >= 2 && k == 1 {
                    // test-only sabotage: flip one entry so the suite must
                    // notice and name this exact shape
                    let v = closed.get(0, 0);
                    closed.set(0, 0, 1.0 - v);
                    fault_pending = false;
                }
                let mut ok = true;
                'outer: for i in 0..n {
                    for j in 0..n {
                        if closed.get(i, j) != prod[i][j] as f64 {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
                power_product
                    .check(ok, || format!("n={n} B={b} k={k}: closed form differs from product"));
                if k < top {
                    prod = int_matmul(&prod, &r_int);
                }
            }

            // n * pull^d has every row equal to u = (n, 0, ..., 0); for a
            // single node the first power is already stationary
            let u = left_eigenvector_u(&tree);
            let rd_pow = closed_form_power(&tree, d.max(1) as u32).to_dense();
            let mut rank1_ok = true;
            for i in 0..n {
                for j in 0..n {
                    if (n as f64) * rd_pow.get(i, j) != u[j] {
                        rank1_ok = false;
                    }
                }
            }
            terminal.check(rank1_ok, || format!("n={n} B={b}: power {d} is not the rank-one limit"));

            // deviation from the rank-one limit: bounded by sqrt(n) before
            // the walk hits the root, exactly zero after
            for k in 1..=d.max(1) {
                let rk = closed_form_power(&tree, k as u32).to_dense();
                let dev = DenseMatrix::from_fn(n, n, |i, j| rk.get(i, j) - u[j] / n as f64);
                let norm = match spectral_norm(&dev, 1e-6) {
                    Ok(v) => v,
                    Err(e) => {
                        deviation.check(false, || format!("n={n} B={b} k={k}: {e}"));
                        continue;
                    }
                };
                if k < d {
                    deviation.check(norm <= (n as f64).sqrt() + 1e-9, || {
                        format!("n={n} B={b} k={k}: deviation norm {norm} above sqrt(n)")
                    });
                } else {
                    deviation.check(norm == 0.0, || {
                        format!("n={n} B={b} k={k}: terminal deviation norm {norm} is not zero")
                    });
                }
            }

            // at most B+1 partners each; 2(n-1) vector messages per round
            let audit = comm_audit(&tree);
            partners.check(
                audit.max_partners <= b + 1 && audit.total_messages_per_round == 2 * (n - 1),
                || {
                    format!(
                        "n={n} B={b}: max partners {} / round messages {}",
                        audit.max_partners, audit.total_messages_per_round
                    )
                },
            );
        }
    }

    // conservation over a live run at the largest grid shape
    let n = grid.n_hi;
    let b = *grid.branches.iter().max().expect("validated nonempty");
    let spec = ProblemSpec::Logistic {
        agents: n,
        dim: 8,
        samples: 20,
        heterogeneity: 0.5,
        reg_coeff: 0.01,
        batch: 1,
    };
    match conservation_run(&spec, n, b, 200, 0.01) {
        Ok(worst) => conservation.check(worst <= 1e-9, || {
            format!("n={n} B={b}: worst relative column-sum gap {worst}")
        }),
        Err(e) => conservation.check(false, || format!("n={n} B={b}: run failed: {e}")),
    }

    let props = [
        rows_unit,
        push_transpose,
        power_product,
        terminal,
        deviation,
        partners,
        conservation,
    ];
    let mut report = String::new();
    let mut passed = true;
    for p in &props {
        report.push_str(&format!("{:<36} {:>6} checks", p.name, p.checks));
        if p.failed == 0 {
            report.push_str("  ok\n");
        } else {
            passed = false;
            report.push_str(&format!("  {} FAILED\n", p.failed));
            for f in &p.failures {
                report.push_str(&format!("  FAIL {}: {}\n", p.name, f));
            }
        }
    }
    report.push_str(&format!(
        "verify: {} (grid n={}..{}, B={:?})\n",
        if passed { "PASS" } else { "FAIL" },
        grid.n_lo,
        grid.n_hi,
        grid.branches
    ));
    SuiteOutcome { report, passed }
}

/// Runs the tree method for `steps` iterations and returns the worst
/// relative gap between tracker column sums and gradient column sums.
fn conservation_run(
    spec: &ProblemSpec,
    n: usize,
    b: usize,
    steps: u64,
    gamma: f64,
) -> Result<f64, String> {
    let problem = spec.generate(41).map_err(|e| e.to_string())?;
    let problem = problem.as_ref();
    let tree = build_bary_tree(n, b).map_err(|e| e.to_string())?;
    let pull = pull_matrix(&tree);
    let push = push_matrix(&tree);
    let x0 = vec![0.0; problem.dim()];
    let mut state = btpp_init(problem, &x0, 41).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        btpp_step(&mut state, &pull, &push, problem, gamma, 41).map_err(|e| e.to_string())?;
        let rel = state.conservation_gap() / (1.0 + state.conservation_scale());
        worst = worst.max(rel);
    }
    Ok(worst)
}
