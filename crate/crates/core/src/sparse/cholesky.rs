use super::{DenseBlock, SparseError, SparseMatrix};

/// Sparse Cholesky factor `P A Pᵀ = L Lᵀ` with an approximate-minimum-degree
/// permutation `P`.
///
/// The factor is immutable once built; any number of solves may share it.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `pinv[old] = new`
    pinv: Vec<usize>,
    // L in compressed column form; the diagonal is the first entry of each column
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl SpdFactor {
    /// Factors a symmetric positive definite matrix.
    ///
    /// Only the structurally symmetric pattern of `a` is used for ordering and
    /// only its upper triangle (after permutation) is read numerically.
    pub fn factor(a: &SparseMatrix) -> Result<Self, SparseError> {
        if a.rows() != a.cols() {
            return Err(SparseError::DimensionMismatch(format!(
                "cholesky of a {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        if a.values().iter().any(|v| !v.is_finite()) {
            return Err(SparseError::NonFinite("cholesky input"));
        }
        let perm = amd_ordering(a);
        let mut pinv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }
        let c = permuted_upper(a, &pinv);
        let parent = elimination_tree(&c);

        // column counts of L from the row patterns given by the etree
        let mut counts = vec![1usize; n];
        let mut mark = vec![NONE; n];
        let mut stack = vec![0usize; n];
        for k in 0..n {
            let top = ereach(&c, k, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + counts[k];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];

        // up-looking numeric factorization
        let mut next = col_ptr.clone();
        let mut x = vec![0.0; n];
        mark.iter_mut().for_each(|m| *m = NONE);
        for k in 0..n {
            let top = ereach(&c, k, &parent, &mut stack, &mut mark);
            x[k] = 0.0;
            for (i, v) in c.row(k) {
                // row k of the upper-triangular C is column k of its transpose
                if i <= k {
                    x[i] += v;
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / values[col_ptr[i]];
                x[i] = 0.0;
                for p in col_ptr[i] + 1..next[i] {
                    x[row_idx[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                row_idx[p] = k;
                values[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(SparseError::NotSpd {
                    pivot: perm[k],
                    value: d,
                });
            }
            let p = next[k];
            next[k] += 1;
            row_idx[p] = k;
            values[p] = d.sqrt();
        }
        Ok(Self {
            n,
            perm,
            pinv,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries of `L`.
    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Solves `A x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        if b.len() != self.n {
            return Err(SparseError::DimensionMismatch(format!(
                "rhs of length {} for a system of size {}",
                b.len(),
                self.n
            )));
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.lower_solve(&mut y);
        self.lower_transpose_solve(&mut y);
        let mut x = vec![0.0; self.n];
        for (old, &new) in self.pinv.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, rhs: &DenseBlock) -> Result<DenseBlock, SparseError> {
        if rhs.rows != self.n {
            return Err(SparseError::DimensionMismatch(format!(
                "rhs with {} rows for a system of size {}",
                rhs.rows, self.n
            )));
        }
        let mut out = DenseBlock::zeros(rhs.rows, rhs.cols);
        for c in 0..rhs.cols {
            let x = self.solve_vec(&rhs.column(c))?;
            out.set_column(c, &x);
        }
        Ok(out)
    }

    fn lower_solve(&self, x: &mut [f64]) {
        for j in 0..self.n {
            let start = self.col_ptr[j];
            x[j] /= self.values[start];
            let xj = x[j];
            for p in start + 1..self.col_ptr[j + 1] {
                x[self.row_idx[p]] -= self.values[p] * xj;
            }
        }
    }

    fn lower_transpose_solve(&self, x: &mut [f64]) {
        for j in (0..self.n).rev() {
            let start = self.col_ptr[j];
            let mut acc = x[j];
            for p in start + 1..self.col_ptr[j + 1] {
                acc -= self.values[p] * x[self.row_idx[p]];
            }
            x[j] = acc / self.values[start];
        }
    }
}

fn amd_ordering(a: &SparseMatrix) -> Vec<usize> {
    let n = a.rows();
    if n == 0 {
        return Vec::new();
    }
    // AMD wants the full symmetric pattern, including entries stored on one
    // side only.
    let mut triplets = Vec::with_capacity(2 * a.nnz());
    for r in 0..n {
        for (c, _) in a.row(r) {
            triplets.push((r, c, 1.0));
            triplets.push((c, r, 1.0));
        }
    }
    let pattern = SparseMatrix::from_triplets(n, n, &triplets).expect("pattern in range");
    let control = amd::Control::default();
    match amd::order(n, pattern.row_offsets(), pattern.col_indices(), &control) {
        Ok((p, _, _)) => p,
        Err(status) => {
            log::warn!("AMD ordering failed ({status:?}); using natural order");
            (0..n).collect()
        }
    }
}

/// Upper triangle of `P A Pᵀ`, stored so that row `k` holds the entries of
/// column `k` of the upper triangle (rows `i <= k`).
fn permuted_upper(a: &SparseMatrix, pinv: &[usize]) -> SparseMatrix {
    let n = a.rows();
    let mut triplets = Vec::with_capacity(a.nnz());
    for r in 0..n {
        for (c, v) in a.row(r) {
            let (i, j) = (pinv[r], pinv[c]);
            if i <= j {
                triplets.push((j, i, v));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets).expect("permutation in range")
}

fn elimination_tree(c: &SparseMatrix) -> Vec<usize> {
    let n = c.rows();
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for (mut i, _) in c.row(k) {
            while i != NONE && i < k {
                let inext = ancestor[i];
                ancestor[i] = k;
                if inext == NONE {
                    parent[i] = k;
                }
                i = inext;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L`, returned in `stack[top..]` in
/// topological order.
fn ereach(
    c: &SparseMatrix,
    k: usize,
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = c.rows();
    let mut top = n;
    mark[k] = k;
    let mut path = Vec::new();
    for (mut i, _) in c.row(k) {
        if i > k {
            continue;
        }
        path.clear();
        while mark[i] != k {
            path.push(i);
            mark[i] = k;
            i = parent[i];
        }
        while let Some(j) = path.pop() {
            top -= 1;
            stack[top] = j;
        }
    }
    top
}
