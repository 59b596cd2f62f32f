//! B-ary spanning trees and their pull/push mixing matrices.
//!
//! Nodes are numbered 1..=n, breadth-first: node 1 is the root and node i's
//! children are B(i-1)+2 ..= Bi+1 (clipped to n). Matrices are indexed
//! 0-based, with node i living on row/column i-1; the translation happens
//! only inside the constructors here.
//!
//! The pull matrix R is row-stochastic with exactly one 1 per row: row i
//! points at node i's parent (node 1 at itself). The push matrix C = R^T is
//! column-stochastic. Powers of R have a closed form in terms of subtree
//! layers, and R^k collapses to the rank-one matrix with an all-ones first
//! column once k reaches the tree depth.

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Complete B-ary tree on n nodes with breadth-first numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct BAryTree {
    n: usize,
    branch: usize,
    depth: usize,
    /// parent[i-1] = parent of node i (node 1 maps to itself).
    parent: Vec<usize>,
    /// children[i-1] = children of node i, ascending.
    children: Vec<Vec<usize>>,
}

/// Build the tree. `n >= 1`, `branch >= 2`.
pub fn build_bary_tree(n: usize, branch: usize) -> Result<BAryTree> {
    if n == 0 {
        return Err(Error::EmptyTree);
    }
    if branch < 2 {
        return Err(Error::BranchSize(branch));
    }
    let mut parent = Vec::with_capacity(n);
    let mut children = vec![Vec::new(); n];
    parent.push(1);
    for i in 2..=n {
        let p = (i - 2) / branch + 1;
        parent.push(p);
        children[p - 1].push(i);
    }

    // Depth = number of hops from the deepest leaf to the root; the unique
    // d with geom(d) < n <= geom(d+1), where geom(m) = 1 + B + ... + B^(m-1)
    // counts the nodes of a full tree of depth m-1. Note this is NOT
    // floor(log_B n): e.g. n = 16, B = 8 holds 1 + 8 = 9 < 16 nodes in two
    // levels, so one node sits on a third level and d = 2.
    let mut depth = 0;
    let mut cap: u128 = 1;
    while cap < n as u128 {
        depth += 1;
        cap = cap * branch as u128 + 1;
    }

    Ok(BAryTree {
        n,
        branch,
        depth,
        parent,
        children,
    })
}

impl BAryTree {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn branch(&self) -> usize {
        self.branch
    }

    /// Hop count from the deepest node to the root; also the power at which
    /// the pull matrix becomes rank one.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Parent of node i (1-based). The root is its own parent.
    pub fn parent(&self, i: usize) -> usize {
        assert!(1 <= i && i <= self.n, "node {i} out of range 1..={}", self.n);
        self.parent[i - 1]
    }

    /// Children of node i (1-based), ascending.
    pub fn children(&self, i: usize) -> &[usize] {
        assert!(1 <= i && i <= self.n, "node {i} out of range 1..={}", self.n);
        &self.children[i - 1]
    }

    /// Number of tree edges incident to node i.
    pub fn degree(&self, i: usize) -> usize {
        let up = usize::from(i != 1);
        up + self.children(i).len()
    }

    /// Hops from node i up to the root.
    pub fn level(&self, i: usize) -> usize {
        let mut node = i;
        let mut hops = 0;
        while node != 1 {
            node = self.parent(node);
            hops += 1;
        }
        hops
    }
}

/// Which sum rule a 0/1 mixing matrix satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stochasticity {
    /// Every row sums to exactly 1.
    Row,
    /// Every column sums to exactly 1.
    Column,
    /// No sum constraint (e.g. matrix powers).
    None,
}

/// Sparse 0/1 matrix stored as per-row lists of set columns (ascending).
/// Entries are implicitly 1.0; the stochasticity tag is validated at
/// construction, so holding a value of this type is proof of the sum rule.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    n: usize,
    rows: Vec<Vec<usize>>,
    stochasticity: Stochasticity,
}

impl MixingMatrix {
    /// Build from per-row column lists (0-based). Lists are sorted and
    /// checked for duplicates and range; the tag's sum rule is verified.
    pub fn from_rows(n: usize, mut rows: Vec<Vec<usize>>, tag: Stochasticity) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::Stochasticity(format!(
                "expected {} rows, got {}",
                n,
                rows.len()
            )));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Stochasticity(format!("duplicate column in row {i}")));
            }
            if row.last().is_some_and(|&c| c >= n) {
                return Err(Error::Stochasticity(format!(
                    "column out of range in row {i}"
                )));
            }
        }
        match tag {
            Stochasticity::Row => {
                if let Some(i) = (0..n).find(|&i| rows[i].len() != 1) {
                    return Err(Error::Stochasticity(format!(
                        "row {} sums to {}, want 1",
                        i,
                        rows[i].len()
                    )));
                }
            }
            Stochasticity::Column => {
                let mut col_sums = vec![0usize; n];
                for row in &rows {
                    for &c in row {
                        col_sums[c] += 1;
                    }
                }
                if let Some(c) = (0..n).find(|&c| col_sums[c] != 1) {
                    return Err(Error::Stochasticity(format!(
                        "column {} sums to {}, want 1",
                        c, col_sums[c]
                    )));
                }
            }
            Stochasticity::None => {}
        }
        Ok(MixingMatrix {
            n,
            rows,
            stochasticity: tag,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stochasticity(&self) -> Stochasticity {
        self.stochasticity
    }

    /// Set columns of row i, ascending. In mixing terms: the sources whose
    /// state row i receives.
    pub fn row_sources(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn is_set(&self, r: usize, c: usize) -> bool {
        self.rows[r].binary_search(&c).is_ok()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Transpose with a caller-supplied tag (checked).
    pub fn transpose(&self, tag: Stochasticity) -> Result<MixingMatrix> {
        let mut rows = vec![Vec::new(); self.n];
        for (r, cols) in self.rows.iter().enumerate() {
            for &c in cols {
                rows[c].push(r);
            }
        }
        MixingMatrix::from_rows(self.n, rows, tag)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for (r, cols) in self.rows.iter().enumerate() {
            for &c in cols {
                m.set(r, c, 1.0);
            }
        }
        m
    }
}

/// Pull matrix R of a tree: row i-1 has its single 1 at column parent(i)-1.
/// Parameters flow root-to-leaves when applied on the left of a state
/// matrix.
pub fn pull_matrix(tree: &BAryTree) -> MixingMatrix {
    let rows = (1..=tree.n())
        .map(|i| vec![tree.parent(i) - 1])
        .collect();
    MixingMatrix::from_rows(tree.n(), rows, Stochasticity::Row)
        .expect("parent map yields one entry per row")
}

/// Push matrix C = R^T: column-stochastic; trackers flow leaves-to-root.
pub fn push_matrix(tree: &BAryTree) -> MixingMatrix {
    pull_matrix(tree)
        .transpose(Stochasticity::Column)
        .expect("transpose of a one-per-row matrix has one entry per column")
}

/// The set of rows carrying a 1 in column `col` (1-based node id) of R^k:
/// a contiguous, possibly clipped-to-empty range of node ids. Column 1
/// collects the top of the tree down to level k; every other column i
/// collects the level-k slice of the subtree hanging below node i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerIndexSet {
    pub col: usize,
    pub power: u32,
    /// Inclusive 1-based node range, already clipped to n; None when the
    /// whole range falls outside the tree.
    pub range: Option<(usize, usize)>,
}

/// geom(m) = 1 + B + ... + B^(m-1), saturating above `cap` (values beyond
/// the node count are only ever compared against it).
fn geometric_sum(branch: u128, terms: u32, cap: u128) -> u128 {
    let mut total: u128 = 0;
    let mut pow: u128 = 1;
    for _ in 0..terms {
        total = total.saturating_add(pow);
        if total > cap {
            return cap.saturating_add(1);
        }
        pow = pow.saturating_mul(branch);
    }
    total
}

fn branch_pow(branch: u128, k: u32, cap: u128) -> u128 {
    let mut pow: u128 = 1;
    for _ in 0..k {
        pow = pow.saturating_mul(branch);
        if pow > cap {
            return cap.saturating_add(1);
        }
    }
    pow
}

pub fn layer_index_set(n: usize, branch: usize, col: usize, power: u32) -> LayerIndexSet {
    assert!(1 <= col && col <= n, "column {col} out of range 1..={n}");
    let b = branch as u128;
    let nn = n as u128;
    let (lo, hi) = if col == 1 {
        (1u128, geometric_sum(b, power + 1, nn))
    } else {
        let base = geometric_sum(b, power + 1, nn);
        let step = branch_pow(b, power, nn);
        let lo = base
            .saturating_add((col as u128 - 2).saturating_mul(step))
            .saturating_add(1);
        let hi = base.saturating_add((col as u128 - 1).saturating_mul(step));
        (lo, hi)
    };
    let hi = hi.min(nn);
    let range = if lo > hi {
        None
    } else {
        Some((lo as usize, hi as usize))
    };
    LayerIndexSet {
        col,
        power,
        range,
    }
}

/// R^k assembled directly from layer index sets, without multiplying
/// matrices. For k >= depth the result is the rank-one limit: an all-ones
/// first column. Exponents above the depth are clamped (the power is
/// stationary there), which also keeps huge k cheap.
pub fn closed_form_power(tree: &BAryTree, k: u32) -> MixingMatrix {
    assert!(k >= 1, "power must be at least 1");
    let n = tree.n();
    let k = k.min(tree.depth() as u32);
    if k == 0 {
        // depth-0 tree (n = 1): R = [1] and every power is itself.
        return MixingMatrix::from_rows(1, vec![vec![0]], Stochasticity::Row).unwrap();
    }
    let mut rows = vec![Vec::new(); n];
    for col in 1..=n {
        if let Some((lo, hi)) = layer_index_set(n, tree.branch(), col, k).range {
            for node in lo..=hi {
                rows[node - 1].push(col - 1);
            }
        }
    }
    MixingMatrix::from_rows(n, rows, Stochasticity::Row)
        .expect("layer ranges partition the node set")
}

/// Left eigenvector u = (n, 0, ..., 0): u^T R = u^T and C u = u. Pairs with
/// the all-ones right eigenvector to form the consensus projector.
pub fn left_eigenvector_u(tree: &BAryTree) -> Vec<f64> {
    let mut u = vec![0.0; tree.n()];
    u[0] = tree.n() as f64;
    u
}

/// Consensus projection P x = (I - (1/n) 1 u^T) x: subtracts row 1 (the
/// root's state) from every row. Rows of the result measure disagreement
/// with the root; the result of applying it twice is itself and its first
/// row is exactly zero.
pub fn consensus_projection(x: &DenseMatrix, tree: &BAryTree) -> Result<DenseMatrix> {
    if x.rows() != tree.n() {
        return Err(Error::DimMismatch {
            op: "consensus_projection",
            detail: format!("state has {} rows, tree has {} nodes", x.rows(), tree.n()),
        });
    }
    let anchor = x.row(0).to_vec();
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (v, a) in out.row_mut(r).iter_mut().zip(&anchor) {
            *v -= *a;
        }
    }
    Ok(out)
}
