//! Sparse matrices, ILU(0) and preconditioned BiCGSTAB for equilibrium solves.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<_> = triplets.to_vec();
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(a: &Array2<f64>) -> Self {
        let trips: Vec<_> = a
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((i, j), &v)| (i, j, v))
            .collect();
        Self::from_triplets(a.nrows(), a.ncols(), &trips)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.nrows, self.ncols));
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                a[[i, self.indices[k]]] = self.values[k];
            }
        }
        a
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            *yi = (self.indptr[i]..self.indptr[i + 1])
                .map(|k| self.values[k] * x[self.indices[k]])
                .sum();
        }
    }

    /// Principal submatrix on the index set `keep` (ascending).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut trips = Vec::new();
        for (new_i, &i) in keep.iter().enumerate() {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = map[self.indices[k]];
                if j != usize::MAX {
                    trips.push((new_i, j, self.values[k]));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), keep.len(), &trips)
    }
}

/// Incomplete LU factors with level-of-fill control. Level 0 keeps exactly
/// the sparsity pattern of `A`; level `k` admits fill entries whose fill
/// level (length of the elimination path that creates them) is at most `k`.
#[derive(Debug, Clone)]
pub struct Ilu {
    /// Strict lower triangle of the unit lower factor, row by row.
    lower: Vec<Vec<(usize, f64)>>,
    /// Upper factor, row by row with the diagonal first.
    upper: Vec<Vec<(usize, f64)>>,
}

impl Ilu {
    pub fn factor(a: &CsrMatrix, fill_level: usize) -> Result<Self> {
        let n = a.nrows;
        if a.ncols != n {
            return Err(Error::Shape {
                what: "ILU matrix",
                expected: (n, n),
                found: (a.nrows, a.ncols),
            });
        }
        let mut lower = Vec::with_capacity(n);
        let mut upper: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut upper_lev: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut val = vec![0.0; n];
        let mut lev = vec![usize::MAX; n];
        let mut active = std::collections::BTreeSet::new();
        for i in 0..n {
            for k in a.indptr[i]..a.indptr[i + 1] {
                let j = a.indices[k];
                val[j] = a.values[k];
                lev[j] = 0;
                active.insert(j);
            }
            if lev[i] == usize::MAX {
                return Err(Error::Solver(format!("ILU: structurally zero pivot in row {i}")));
            }
            let mut row_l = Vec::new();
            let mut cursor = 0;
            while let Some(&k) = active.range(cursor..i).next() {
                cursor = k + 1;
                let factor = val[k] / upper[k][0].1;
                row_l.push((k, factor));
                for (&(j, ukj), &lkj) in upper[k].iter().zip(&upper_lev[k]).skip(1) {
                    let new_lev = lev[k] + lkj + 1;
                    if lev[j] != usize::MAX {
                        val[j] -= factor * ukj;
                        lev[j] = lev[j].min(new_lev);
                    } else if new_lev <= fill_level {
                        val[j] = -factor * ukj;
                        lev[j] = new_lev;
                        active.insert(j);
                    }
                }
            }
            let d = val[i];
            if !(d.is_finite() && d.abs() > 1e-300) {
                return Err(Error::Solver(format!("ILU: zero pivot in row {i}")));
            }
            let mut row_u = vec![(i, d)];
            let mut row_ul = vec![lev[i]];
            for &j in active.range(i + 1..) {
                row_u.push((j, val[j]));
                row_ul.push(lev[j]);
            }
            for &j in &active {
                val[j] = 0.0;
                lev[j] = usize::MAX;
            }
            active.clear();
            lower.push(row_l);
            upper.push(row_u);
            upper_lev.push(row_ul);
        }
        Ok(Ilu { lower, upper })
    }

    /// Stored entries of both factors.
    pub fn nnz(&self) -> usize {
        self.lower.iter().chain(&self.upper).map(Vec::len).sum()
    }

    /// Solve `L U z = r` in place.
    pub fn apply(&self, z: &mut [f64]) {
        for (i, row) in self.lower.iter().enumerate() {
            let s: f64 = row.iter().map(|&(j, l)| l * z[j]).sum();
            z[i] -= s;
        }
        for (i, row) in self.upper.iter().enumerate().rev() {
            let s: f64 = row[1..].iter().map(|&(j, u)| u * z[j]).sum();
            z[i] = (z[i] - s) / row[0].1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    /// ILU level of fill for [`equilibrium`]; 0 is ILU(0).
    pub fill_level: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            rel_tol: 1e-9,
            max_iter: 20_000,
            fill_level: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovSolution {
    pub x: Vec<f64>,
    /// Achieved `‖b − A x‖ / ‖b‖`.
    pub rel_residual: f64,
    pub iterations: usize,
    pub preconditioned: bool,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Right-preconditioned BiCGSTAB for `A x = b`, restarted on breakdown.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], precond: Option<&Ilu>, opts: &KrylovOptions) -> Result<KrylovSolution> {
    let n = a.nrows;
    if a.ncols != n || b.len() != n {
        return Err(Error::Shape {
            what: "linear system",
            expected: (n, n),
            found: (a.ncols, b.len()),
        });
    }
    let bnorm = norm(b);
    let done = |x: Vec<f64>, res: f64, it: usize| KrylovSolution {
        x,
        rel_residual: res,
        iterations: it,
        preconditioned: precond.is_some(),
    };
    if bnorm == 0.0 {
        return Ok(done(vec![0.0; n], 0.0, 0));
    }
    let prec = |v: &[f64]| {
        let mut z = v.to_vec();
        if let Some(m) = precond {
            m.apply(&mut z);
        }
        z
    };
    let mut x = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut it = 0;
    let mut tmp = vec![0.0; n];
    let true_residual = |x: &[f64], r: &mut [f64]| {
        a.matvec(x, r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        norm(r)
    };
    // Restarts recompute the true residual, so rounding drift in the
    // recurrence cannot fake convergence.
    'restart: while it < opts.max_iter {
        if true_residual(&x, &mut r) <= opts.rel_tol * bnorm {
            break;
        }
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        while it < opts.max_iter {
            it += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                continue 'restart;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            let ph = prec(&p);
            a.matvec(&ph, &mut v);
            let denom = dot(&r_hat, &v);
            if denom.abs() < 1e-300 {
                continue 'restart;
            }
            alpha = rho / denom;
            let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
            if norm(&s) <= opts.rel_tol * bnorm {
                for i in 0..n {
                    x[i] += alpha * ph[i];
                }
                continue 'restart;
            }
            let sh = prec(&s);
            a.matvec(&sh, &mut tmp);
            let tt = dot(&tmp, &tmp);
            omega = if tt > 0.0 { dot(&tmp, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * ph[i] + omega * sh[i];
                r[i] = s[i] - omega * tmp[i];
            }
            if norm(&r) <= opts.rel_tol * bnorm {
                continue 'restart;
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Solver("BiCGSTAB diverged".into()));
            }
        }
    }
    let res = true_residual(&x, &mut tmp) / bnorm;
    if res > opts.rel_tol {
        return Err(Error::Solver(format!(
            "BiCGSTAB did not converge: relative residual {res:.3e} after {it} iterations"
        )));
    }
    Ok(done(x, res, it))
}

/// Equilibrium `q*` of `q̇ = J q + F`, i.e. the solution of `J q = −F`, by
/// ILU-preconditioned BiCGSTAB (level of fill from `opts`). Falls back to
/// the unpreconditioned iteration if the factorisation breaks down.
pub fn equilibrium(j: &CsrMatrix, forcing: &[f64], opts: &KrylovOptions) -> Result<KrylovSolution> {
    let rhs: Vec<f64> = forcing.iter().map(|f| -f).collect();
    match Ilu::factor(j, opts.fill_level) {
        Ok(ilu) => bicgstab(j, &rhs, Some(&ilu), opts),
        Err(_) => bicgstab(j, &rhs, None, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(1, 0, 1.0), (0, 1, 2.0), (1, 0, 0.5)]);
        assert_eq!(m.to_dense(), ndarray::array![[0.0, 2.0], [1.5, 0.0]]);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn minus_identity() {
        let n = 6;
        let trips: Vec<_> = (0..n).map(|i| (i, i, -1.0)).collect();
        let j = CsrMatrix::from_triplets(n, n, &trips);
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
        let sol = equilibrium(&j, &b, &KrylovOptions::default()).unwrap();
        for (x, bi) in sol.x.iter().zip(&b) {
            assert!((x - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn ilu_is_exact_for_tridiagonal() {
        let n = 20;
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i, i, 4.0));
            if i > 0 {
                trips.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                trips.push((i, i + 1, -2.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &trips);
        let ilu = Ilu::factor(&a, 0).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        ilu.apply(&mut b);
        for (x, y) in b.iter().zip(&x_true) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn manufactured_random_system() {
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut b = Array2::<f64>::zeros((n, n));
        for v in b.iter_mut() {
            *v = rng.random::<f64>() - 0.5;
        }
        let mut a = b.t().dot(&b);
        for i in 0..n {
            a[[i, i]] += 1.0;
        }
        // a nonsymmetric perturbation on top of the SPD shift
        a[[0, n - 1]] += 0.3;
        let a = CsrMatrix::from_dense(&a);
        let q_star: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mut jq = vec![0.0; n];
        a.matvec(&q_star, &mut jq);
        let forcing: Vec<f64> = jq.iter().map(|v| -v).collect();
        let sol = equilibrium(&a, &forcing, &KrylovOptions::default()).unwrap();
        let err = norm(&sol.x.iter().zip(&q_star).map(|(x, y)| x - y).collect::<Vec<_>>()) / norm(&q_star);
        assert!(err < 1e-9, "{err}");
        assert!(sol.preconditioned);
    }

    #[test]
    fn zero_diagonal_falls_back() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let sol = equilibrium(&a, &[-1.0, -2.0], &KrylovOptions::default()).unwrap();
        assert!(!sol.preconditioned);
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && (sol.x[1] - 1.0).abs() < 1e-9);
    }

    fn laplacian_2d(m: usize) -> CsrMatrix {
        let mut trips = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let r = i * m + j;
                trips.push((r, r, 4.0));
                if i > 0 {
                    trips.push((r, r - m, -1.0));
                }
                if i + 1 < m {
                    trips.push((r, r + m, -1.0));
                }
                if j > 0 {
                    trips.push((r, r - 1, -1.2));
                }
                if j + 1 < m {
                    trips.push((r, r + 1, -0.8));
                }
            }
        }
        CsrMatrix::from_triplets(m * m, m * m, &trips)
    }

    #[test]
    fn ilu0_keeps_pattern() {
        let a = laplacian_2d(6);
        let ilu = Ilu::factor(&a, 0).unwrap();
        assert_eq!(ilu.nnz(), a.nnz());
    }

    #[test]
    fn full_fill_is_exact_lu() {
        // Unlimited fill reproduces the complete factorisation.
        let m = 6;
        let a = laplacian_2d(m);
        let ilu = Ilu::factor(&a, m * m).unwrap();
        let x_true: Vec<f64> = (0..m * m).map(|i| (0.3 * i as f64).cos()).collect();
        let mut b = vec![0.0; m * m];
        a.matvec(&x_true, &mut b);
        ilu.apply(&mut b);
        for (x, y) in b.iter().zip(&x_true) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn more_fill_fewer_iterations() {
        let a = laplacian_2d(20);
        let b: Vec<f64> = (0..400).map(|i| (i as f64).sin()).collect();
        let its: Vec<usize> = [0, 2]
            .iter()
            .map(|&k| {
                let ilu = Ilu::factor(&a, k).unwrap();
                bicgstab(&a, &b, Some(&ilu), &KrylovOptions::default()).unwrap().iterations
            })
            .collect();
        assert!(its[1] < its[0], "{its:?}");
    }

    #[test]
    fn submatrix_picks_block() {
        let a = CsrMatrix::from_dense(&ndarray::array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]);
        assert_eq!(a.submatrix(&[0, 2]).to_dense(), ndarray::array![[1.0, 3.0], [7.0, 9.0]]);
    }
}
