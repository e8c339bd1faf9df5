//! Sparse assembly and a banded direct solver.
//!
//! Systems are reduced to the symmetry fundamental domain before they reach
//! this module, so a reverse Cuthill-McKee reordering followed by banded LU
//! with partial pivoting (LAPACK `gbtrf` layout) is fast and fully
//! deterministic.  Bordered systems (a banded block plus a few dense rows and
//! columns) are solved by block elimination on the border.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("banded factorization hit a zero pivot at column {0}")]
    ZeroPivot(usize),
    #[error("bordered system is singular (Schur pivot {0:.3e})")]
    SingularBorder(f64),
}

/// Triplet accumulator for a square sparse matrix.
#[derive(Debug, Clone)]
pub struct SpBuilder {
    pub n: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl SpBuilder {
    pub fn new(n: usize) -> Self {
        SpBuilder { n, entries: Vec::new() }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.entries.push((i as u32, j as u32, v));
        }
    }

    pub fn build(mut self) -> Csr {
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols: Vec<u32> = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(u32, u32)> = None;
        for &(i, j, v) in &self.entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i as usize + 1] = cols.len();
                last = Some((i, j));
            }
        }
        for i in 1..=self.n {
            if row_ptr[i] < row_ptr[i - 1] {
                row_ptr[i] = row_ptr[i - 1];
            }
        }
        Csr { n: self.n, row_ptr, cols, vals }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k] as usize];
            }
            y[i] = s;
        }
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }
}

/// Reverse Cuthill-McKee ordering of the adjacency of `a` (pattern of a+a^T).
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_order(a: &Csr) -> Vec<usize> {
    let n = a.n;
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for i in 0..n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            let j = a.cols[k] as usize;
            if j != i {
                adj[i].push(j as u32);
                adj[j].push(i as u32);
            }
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    let deg: Vec<usize> = adj.iter().map(|l| l.len()).collect();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    loop {
        // next unvisited vertex of minimal degree as BFS root
        let root = match (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (deg[i], i)) {
            Some(r) => r,
            None => break,
        };
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(root);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<u32> = adj[v].iter().copied().filter(|&u| !visited[u as usize]).collect();
            nb.sort_by_key(|&u| (deg[u as usize], u));
            for u in nb {
                visited[u as usize] = true;
                queue.push_back(u as usize);
            }
        }
    }
    order.reverse();
    order
}

/// Banded LU factorization with partial pivoting, LAPACK band storage.
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    /// perm[new] = old, applied to rows and columns before factorization.
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
}

impl BandLu {
    /// Factor a sparse matrix after RCM reordering.
    pub fn factor(a: &Csr) -> Result<BandLu, SolveError> {
        let perm = rcm_order(a);
        Self::factor_with_perm(a, perm)
    }

    pub fn factor_with_perm(a: &Csr, perm: Vec<usize>) -> Result<BandLu, SolveError> {
        let n = a.n;
        let mut inv_perm = vec![0usize; n];
        for (newi, &old) in perm.iter().enumerate() {
            inv_perm[old] = newi;
        }
        // permuted bandwidth
        let mut kl = 0usize;
        let mut ku = 0usize;
        for i in 0..n {
            let pi = inv_perm[i];
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let pj = inv_perm[a.cols[k] as usize];
                if pi > pj {
                    kl = kl.max(pi - pj);
                } else {
                    ku = ku.max(pj - pi);
                }
            }
        }
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0f64; ldab * n];
        // entry (i,j) -> ab[kl + ku + i - j + j*ldab]
        for i in 0..n {
            let pi = inv_perm[i];
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let pj = inv_perm[a.cols[k] as usize];
                ab[(kl + ku + pi) - pj + pj * ldab] += a.vals[k];
            }
        }
        let mut ipiv = vec![0usize; n];
        // gbtrf-style factorization
        for j in 0..n {
            // pivot search in column j among rows j..=min(n-1, j+kl)
            let pmax = (j + kl).min(n - 1);
            let mut piv_row = j;
            let mut piv_val = ab[kl + ku + j * ldab].abs(); // i=j position: kl+ku+j-j
            for i in (j + 1)..=pmax {
                let v = ab[kl + ku + i - j + j * ldab].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = i;
                }
            }
            if piv_val == 0.0 {
                return Err(SolveError::ZeroPivot(j));
            }
            ipiv[j] = piv_row;
            let jmax = (j + kl + ku).min(n - 1);
            if piv_row != j {
                // swap rows j and piv_row within columns j..=jmax
                for c in j..=jmax {
                    let a1 = kl + ku + j - c + c * ldab;
                    let a2 = kl + ku + piv_row - c + c * ldab;
                    ab.swap(a1, a2);
                }
            }
            let diag = ab[kl + ku + j * ldab];
            for i in (j + 1)..=pmax {
                let idx = kl + ku + i - j + j * ldab;
                let m = ab[idx] / diag;
                ab[idx] = m;
                if m != 0.0 {
                    for c in (j + 1)..=jmax {
                        let src = kl + ku + j - c + c * ldab;
                        let dst = kl + ku + i - c + c * ldab;
                        ab[dst] -= m * ab[src];
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, ldab, ab, ipiv, perm, inv_perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let (kl, ku, ldab) = (self.kl, self.ku, self.ldab);
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.inv_perm[i]] = b[i];
        }
        // forward: apply pivots and L
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(p, j);
            }
            let pmax = (j + kl).min(n - 1);
            let xj = x[j];
            if xj != 0.0 {
                for i in (j + 1)..=pmax {
                    x[i] -= self.ab[kl + ku + i - j + j * ldab] * xj;
                }
            }
        }
        // backward: U
        for j in (0..n).rev() {
            let jmin = j.saturating_sub(kl + ku);
            x[j] /= self.ab[kl + ku + j * ldab];
            let xj = x[j];
            if xj != 0.0 {
                for i in jmin..j {
                    x[i] -= self.ab[kl + ku + i - j + j * ldab] * xj;
                }
            }
        }
        let mut out = vec![0.0; n];
        for newi in 0..n {
            out[self.perm[newi]] = x[newi];
        }
        out
    }

    pub fn bandwidth(&self) -> usize {
        self.kl.max(self.ku)
    }
}

/// Banded block with `k` dense border columns `cols`, border rows `rows` and
/// a dense `k x k` corner, solved by block elimination.
pub struct BorderedSolver {
    lu: BandLu,
    cols: Vec<Vec<f64>>,
    rows: Vec<Vec<f64>>,
    corner: Vec<Vec<f64>>,
    a_inv_cols: Vec<Vec<f64>>,
}

impl BorderedSolver {
    pub fn new(
        a: &Csr,
        cols: Vec<Vec<f64>>,
        rows: Vec<Vec<f64>>,
        corner: Vec<Vec<f64>>,
    ) -> Result<BorderedSolver, SolveError> {
        let lu = BandLu::factor(a)?;
        let a_inv_cols: Vec<Vec<f64>> = cols.iter().map(|c| lu.solve(c)).collect();
        Ok(BorderedSolver { lu, cols, rows, corner, a_inv_cols })
    }

    /// Solve [A B; C D] [x; y] = [f; g].
    pub fn solve(&self, f: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
        let k = self.cols.len();
        let a_inv_f = self.lu.solve(f);
        // Schur complement S = D - C A^{-1} B
        let mut s = vec![vec![0.0; k]; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            rhs[i] = g[i] - dot(&self.rows[i], &a_inv_f);
            for j in 0..k {
                s[i][j] = self.corner[i][j] - dot(&self.rows[i], &self.a_inv_cols[j]);
            }
        }
        let y = solve_dense(&mut s, &mut rhs)?;
        let mut x = a_inv_f;
        for j in 0..k {
            for (xi, ci) in x.iter_mut().zip(self.a_inv_cols[j].iter()) {
                *xi -= y[j] * ci;
            }
        }
        Ok((x, y))
    }

    pub fn bandwidth(&self) -> usize {
        self.lu.bandwidth()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense Gaussian elimination with partial pivoting for tiny border systems.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>, SolveError> {
    let n = b.len();
    for c in 0..n {
        let (p, pv) = (c..n)
            .map(|r| (r, a[r][c].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pv < 1e-300 {
            return Err(SolveError::SingularBorder(pv));
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in (c + 1)..n {
            let m = a[r][c] / a[c][c];
            if m != 0.0 {
                for j in c..n {
                    a[r][j] -= m * a[c][j];
                }
                b[r] -= m * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let mut s = b[c];
        for j in (c + 1)..n {
            s -= a[c][j] * x[j];
        }
        x[c] = s / a[c][c];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> Csr {
        let mut b = SpBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 2.1);
            if i > 0 {
                b.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn band_lu_solves_tridiagonal() {
        let a = laplacian_1d(50);
        let lu = BandLu::factor(&a).unwrap();
        let xref: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; 50];
        a.matvec(&xref, &mut b);
        let x = lu.solve(&b);
        for i in 0..50 {
            assert!((x[i] - xref[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn band_lu_matches_dense_on_random_pattern() {
        // deterministic pseudo-random unsymmetric sparse matrix
        let n = 40;
        let mut state = 12345u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        let mut b = SpBuilder::new(n);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j || (i as i64 - j as i64).abs() <= 6 && rnd() > 0.1 {
                    let v = rnd() + if i == j { 4.0 } else { 0.0 };
                    b.add(i, j, v);
                    dense[i][j] += v;
                }
            }
        }
        let a = b.build();
        let lu = BandLu::factor(&a).unwrap();
        let xref: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut rhs = vec![0.0; n];
        a.matvec(&xref, &mut rhs);
        let x = lu.solve(&rhs);
        for i in 0..n {
            assert!((x[i] - xref[i]).abs() < 1e-10, "{} {} {}", i, x[i], xref[i]);
        }
    }

    #[test]
    fn bordered_solver_matches_direct() {
        let n = 30;
        let a = laplacian_1d(n);
        let col: Vec<f64> = (0..n).map(|i| if i == 7 { 1.0 } else { 0.0 }).collect();
        let row: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let solver =
            BorderedSolver::new(&a, vec![col.clone()], vec![row.clone()], vec![vec![0.5]]).unwrap();
        let f: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let g = vec![2.0];
        let (x, y) = solver.solve(&f, &g).unwrap();
        // residual check
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] + col[i] * y[0] - f[i]).abs() < 1e-11);
        }
        let r: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + 0.5 * y[0];
        assert!((r - 2.0).abs() < 1e-11);
    }
}
