//! Dense eigen-analysis of Jacobians.
//!
//! Matrices are diagonally balanced (Parlett–Reinsch, radix 2, so the
//! similarity is exact in floating point) before the Hessenberg/QR
//! eigensolve. Balancing matters here: the rigid-body eigenvalues sit in
//! 2×2 Jordan blocks whose sensitivity scales with `sqrt(ε‖J‖)`.

use faer::Mat;
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<Complex64>,
    /// Unit-norm eigenvectors as columns, when requested.
    pub vectors: Option<Array2<Complex64>>,
    /// `‖J x − λ x‖ / ‖J‖_F` per eigenpair; filled by [`real_residuals`] or
    /// [`complex_residuals`], empty otherwise.
    pub residuals: Vec<f64>,
}

impl Spectrum {
    pub fn max_real(&self) -> f64 {
        self.values.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_real(&self) -> f64 {
        self.values.iter().map(|l| l.re.abs()).fold(0.0, f64::max)
    }

    pub fn count_near_zero(&self, tol: f64) -> usize {
        self.values.iter().filter(|l| l.norm() < tol).count()
    }
}

/// Diagonal scaling `d` (powers of two) such that `D⁻¹ A D` has comparable
/// row and column norms; `magnitude(i, j)` gives `|a_ij|`.
pub fn balancing_scale(n: usize, magnitude: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut m = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { magnitude(i, j) });
    let mut d = vec![1.0; n];
    loop {
        let mut converged = true;
        for i in 0..n {
            let c: f64 = m.column(i).sum();
            let r: f64 = m.row(i).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let (mut c2, mut r2, mut f) = (c, r, 1.0);
            while c2 < r2 / 2.0 {
                c2 *= 2.0;
                r2 /= 2.0;
                f *= 2.0;
            }
            while c2 >= r2 * 2.0 {
                c2 /= 2.0;
                r2 *= 2.0;
                f /= 2.0;
            }
            if (c2 + r2) / f < 0.95 * s {
                converged = false;
                d[i] *= f;
                m.row_mut(i).mapv_inplace(|x| x / f);
                m.column_mut(i).mapv_inplace(|x| x * f);
            }
        }
        if converged {
            return d;
        }
    }
}

/// Eigenvalues (and optionally eigenvectors) of a real square matrix.
pub fn spectrum(j: &Array2<f64>, with_vectors: bool) -> Result<Spectrum> {
    let n = square(j.dim())?;
    if j.iter().any(|x| !x.is_finite()) {
        return Err(Error::Solver("matrix has non-finite entries".into()));
    }
    let d = balancing_scale(n, |i, k| j[[i, k]].abs());
    let b = Mat::<f64>::from_fn(n, n, |i, k| j[[i, k]] * d[k] / d[i]);
    if !with_vectors {
        let values = b.eigenvalues().map_err(|e| Error::Solver(format!("eigensolve failed: {e:?}")))?;
        return Ok(Spectrum {
            values,
            vectors: None,
            residuals: Vec::new(),
        });
    }
    let evd = b.eigen().map_err(|e| Error::Solver(format!("eigensolve failed: {e:?}")))?;
    let values: Vec<Complex64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();
    let vectors = unscale(n, |i, k| u[(i, k)], &d);
    Ok(Spectrum {
        values,
        vectors: Some(vectors),
        residuals: Vec::new(),
    })
}

/// As [`spectrum`] for a complex matrix (e.g. a Bloch block).
pub fn complex_spectrum(b: &Array2<Complex64>, with_vectors: bool) -> Result<Spectrum> {
    let n = square(b.dim())?;
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::Solver("matrix has non-finite entries".into()));
    }
    let d = balancing_scale(n, |i, k| b[[i, k]].norm());
    let m = Mat::<Complex64>::from_fn(n, n, |i, k| b[[i, k]] * (d[k] / d[i]));
    if !with_vectors {
        let values = m.eigenvalues().map_err(|e| Error::Solver(format!("eigensolve failed: {e:?}")))?;
        return Ok(Spectrum {
            values,
            vectors: None,
            residuals: Vec::new(),
        });
    }
    let evd = m.eigen().map_err(|e| Error::Solver(format!("eigensolve failed: {e:?}")))?;
    let values: Vec<Complex64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();
    let vectors = unscale(n, |i, k| u[(i, k)], &d);
    Ok(Spectrum {
        values,
        vectors: Some(vectors),
        residuals: Vec::new(),
    })
}

fn square((r, c): (usize, usize)) -> Result<usize> {
    if r != c {
        return Err(Error::Shape {
            what: "eigen matrix",
            expected: (r, r),
            found: (r, c),
        });
    }
    Ok(r)
}

fn unscale(n: usize, u: impl Fn(usize, usize) -> Complex64, d: &[f64]) -> Array2<Complex64> {
    let mut x = Array2::from_shape_fn((n, n), |(i, k)| u(i, k) * d[i]);
    for mut col in x.columns_mut() {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|z| z / norm);
        }
    }
    x
}

/// An invariant subspace `J Q = Q T` known in advance, with orthonormal
/// basis `Q` (`n × p`) and restriction `T = Qᵀ J Q` (`p × p`).
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSubspace {
    pub basis: Array2<f64>,
    pub restriction: Array2<f64>,
}

/// Spectrum of `j` split along a known invariant subspace. In the
/// orthonormal basis `[Q, Q⊥]` the matrix is block upper triangular, so its
/// eigenvalues are those of `T` together with those of `Q⊥ᵀ J Q⊥`. Returns
/// the spectrum and the invariance defect `‖Q⊥ᵀ J Q‖_F / ‖J‖_F`.
///
/// This removes the defective rigid-body eigenvalues from the dense
/// eigensolve, where rounding would otherwise split them by `O(sqrt(ε‖J‖))`.
pub fn deflated_spectrum(j: &Array2<f64>, sub: &InvariantSubspace, with_vectors: bool) -> Result<(Spectrum, f64)> {
    let n = square(j.dim())?;
    let p = sub.basis.ncols();
    if sub.basis.nrows() != n || sub.restriction.dim() != (p, p) || p >= n {
        return Err(Error::Shape {
            what: "invariant subspace",
            expected: (n, p),
            found: sub.basis.dim(),
        });
    }
    // Householder reflectors H_k with H_0 … H_{p-1} e_i ∈ span(Q) for i < p.
    let mut qr = sub.basis.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(p);
    for k in 0..p {
        let x: Vec<f64> = (k..n).map(|i| qr[[i, k]]).collect();
        let alpha = -x[0].signum() * x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = vec![0.0; n];
        v[k] = x[0] - alpha;
        for i in k + 1..n {
            v[i] = qr[[i, k]];
        }
        let vnorm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if vnorm == 0.0 || alpha == 0.0 {
            return Err(Error::Solver("invariant-subspace basis is rank deficient".into()));
        }
        v.iter_mut().for_each(|a| *a /= vnorm);
        reflect_left(&mut qr, &v);
        reflectors.push(v);
    }
    let mut a = j.clone();
    for v in &reflectors {
        reflect_left(&mut a, v);
        reflect_right(&mut a, v);
    }
    let frob = j.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let defect = a.slice(ndarray::s![p.., ..p]).iter().map(|x| x * x).sum::<f64>().sqrt() / frob;
    let complement = a.slice(ndarray::s![p.., p..]).to_owned();
    let head = spectrum(&sub.restriction, with_vectors)?;
    let tail = spectrum(&complement, with_vectors)?;
    let mut values = head.values.clone();
    values.extend_from_slice(&tail.values);
    if !with_vectors {
        return Ok((
            Spectrum {
                values,
                vectors: None,
                residuals: Vec::new(),
            },
            defect,
        ));
    }
    // Head eigenvectors live in span(Q). For a tail eigenpair (λ, y) the
    // full vector in the reflected basis is [z; y] with (T̂ − λ) z = −E y.
    let mut x = Array2::<Complex64>::zeros((n, n));
    let hv = head.vectors.as_ref().expect("requested vectors");
    for k in 0..p {
        for i in 0..n {
            x[[i, k]] = (0..p).map(|c| hv[[c, k]] * sub.basis[[i, c]]).sum();
        }
    }
    let t_hat = a.slice(ndarray::s![..p, ..p]).to_owned();
    let e = a.slice(ndarray::s![..p, p..]).to_owned();
    let tv = tail.vectors.as_ref().expect("requested vectors");
    for k in 0..n - p {
        let lam = tail.values[k];
        let y = tv.column(k);
        let mut m = Array2::<Complex64>::from_shape_fn((p, p), |(r, c)| Complex64::new(t_hat[[r, c]], 0.0));
        for d in 0..p {
            m[[d, d]] -= lam;
        }
        let mut rhs: Vec<Complex64> = (0..p)
            .map(|r| -(0..n - p).map(|c| y[c] * e[[r, c]]).sum::<Complex64>())
            .collect();
        let z = solve_small(m, &mut rhs)?;
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        col[..p].copy_from_slice(&z);
        for (i, yi) in y.iter().enumerate() {
            col[p + i] = *yi;
        }
        for v in reflectors.iter().rev() {
            let s: Complex64 = v.iter().zip(&col).map(|(a, b)| b * *a).sum();
            for (ci, vi) in col.iter_mut().zip(v) {
                *ci -= s * (2.0 * vi);
            }
        }
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for (i, ci) in col.into_iter().enumerate() {
            x[[i, p + k]] = ci / norm;
        }
    }
    Ok((
        Spectrum {
            values,
            vectors: Some(x),
            residuals: Vec::new(),
        },
        defect,
    ))
}

fn reflect_left(a: &mut Array2<f64>, v: &[f64]) {
    for mut col in a.columns_mut() {
        let s: f64 = col.iter().zip(v).map(|(a, b)| a * b).sum();
        if s != 0.0 {
            col.iter_mut().zip(v).for_each(|(a, b)| *a -= 2.0 * s * b);
        }
    }
}

fn reflect_right(a: &mut Array2<f64>, v: &[f64]) {
    for mut row in a.rows_mut() {
        let s: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
        if s != 0.0 {
            row.iter_mut().zip(v).for_each(|(a, b)| *a -= 2.0 * s * b);
        }
    }
}

/// Gaussian elimination with partial pivoting for tiny dense systems.
fn solve_small(mut m: Array2<Complex64>, b: &mut [Complex64]) -> Result<Vec<Complex64>> {
    let p = b.len();
    for k in 0..p {
        let piv = (k..p)
            .max_by(|&a, &c| m[[a, k]].norm().total_cmp(&m[[c, k]].norm()))
            .unwrap_or(k);
        if m[[piv, k]].norm() == 0.0 {
            return Err(Error::Solver("singular deflation system".into()));
        }
        if piv != k {
            for c in 0..p {
                m.swap([k, c], [piv, c]);
            }
            b.swap(k, piv);
        }
        for r in k + 1..p {
            let f = m[[r, k]] / m[[k, k]];
            for c in k..p {
                let mk = m[[k, c]];
                m[[r, c]] -= f * mk;
            }
            let bk = b[k];
            b[r] -= f * bk;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); p];
    for k in (0..p).rev() {
        let s: Complex64 = (k + 1..p).map(|c| m[[k, c]] * x[c]).sum();
        x[k] = (b[k] - s) / m[[k, k]];
    }
    Ok(x)
}

/// Fill `spec.residuals` for a real matrix `j` (needs eigenvectors).
pub fn real_residuals(j: &Array2<f64>, spec: &mut Spectrum) -> Result<()> {
    let x = spec
        .vectors
        .as_ref()
        .ok_or_else(|| Error::Solver("residuals need eigenvectors".into()))?;
    let n = square(j.dim())?;
    let a = Mat::<f64>::from_fn(n, n, |i, k| j[[i, k]]);
    let xr = Mat::<f64>::from_fn(n, n, |i, k| x[[i, k]].re);
    let xi = Mat::<f64>::from_fn(n, n, |i, k| x[[i, k]].im);
    let (ar, ai) = (&a * &xr, &a * &xi);
    let frob = j.iter().map(|v| v * v).sum::<f64>().sqrt();
    spec.residuals = collect_residuals(n, |i, k| Complex64::new(ar[(i, k)], ai[(i, k)]), &spec.values, x, frob);
    Ok(())
}

/// Fill `spec.residuals` for a complex matrix `b` (needs eigenvectors).
pub fn complex_residuals(b: &Array2<Complex64>, spec: &mut Spectrum) -> Result<()> {
    let x = spec
        .vectors
        .as_ref()
        .ok_or_else(|| Error::Solver("residuals need eigenvectors".into()))?;
    let n = square(b.dim())?;
    let a = Mat::<Complex64>::from_fn(n, n, |i, k| b[[i, k]]);
    let xm = Mat::<Complex64>::from_fn(n, n, |i, k| x[[i, k]]);
    let ax = &a * &xm;
    let frob = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    spec.residuals = collect_residuals(n, |i, k| ax[(i, k)], &spec.values, x, frob);
    Ok(())
}

fn collect_residuals(
    n: usize,
    ax: impl Fn(usize, usize) -> Complex64,
    values: &[Complex64],
    x: &Array2<Complex64>,
    frob: f64,
) -> Vec<f64> {
    let scale = if frob > 0.0 { frob } else { 1.0 };
    (0..n)
        .map(|k| {
            let r2: f64 = (0..n).map(|i| (ax(i, k) - values[k] * x[[i, k]]).norm_sqr()).sum();
            r2.sqrt() / scale
        })
        .collect()
}

/// Orthogonal Hessenberg reduction `H = Qᵀ A Q`, `Q` kept as Householder
/// reflectors acting on rows/columns `k+1..`.
struct Hessenberg {
    h: Array2<f64>,
    reflectors: Vec<(usize, Vec<f64>)>,
}

impl Hessenberg {
    fn reduce(a: &Array2<f64>) -> Self {
        let n = a.nrows();
        let mut h = a.as_standard_layout().into_owned();
        let mut reflectors = Vec::new();
        let mut w = vec![0.0; n];
        for k in 0..n.saturating_sub(2) {
            let col: Vec<f64> = (k + 1..n).map(|i| h[[i, k]]).collect();
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || col[1..].iter().all(|&x| x == 0.0) {
                continue;
            }
            let alpha = -col[0].signum() * norm;
            let mut v = col;
            v[0] -= alpha;
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= vn);
            // H ← (I − 2vvᵀ) H on rows k+1.., then H ← H (I − 2vvᵀ) on columns k+1..
            w[k..].iter_mut().for_each(|x| *x = 0.0);
            for (i, vi) in v.iter().enumerate() {
                let row = h.row(k + 1 + i);
                for c in k..n {
                    w[c] += vi * row[c];
                }
            }
            for (i, vi) in v.iter().enumerate() {
                let mut row = h.row_mut(k + 1 + i);
                for c in k..n {
                    row[c] -= 2.0 * vi * w[c];
                }
            }
            for r in 0..n {
                let mut row = h.row_mut(r);
                let s: f64 = v.iter().enumerate().map(|(i, vi)| vi * row[k + 1 + i]).sum();
                if s != 0.0 {
                    for (i, vi) in v.iter().enumerate() {
                        row[k + 1 + i] -= 2.0 * s * vi;
                    }
                }
            }
            for i in k + 2..n {
                h[[i, k]] = 0.0;
            }
            reflectors.push((k + 1, v));
        }
        Hessenberg { h, reflectors }
    }

    /// `Qᵀ x`.
    fn to_hess(&self, x: &mut [Complex64]) {
        for (off, v) in &self.reflectors {
            let s: Complex64 = v.iter().zip(&x[*off..]).map(|(a, b)| b * *a).sum();
            x[*off..].iter_mut().zip(v).for_each(|(b, a)| *b -= s * (2.0 * a));
        }
    }

    /// `Q z`.
    fn from_hess(&self, z: &mut [Complex64]) {
        for (off, v) in self.reflectors.iter().rev() {
            let s: Complex64 = v.iter().zip(&z[*off..]).map(|(a, b)| b * *a).sum();
            z[*off..].iter_mut().zip(v).for_each(|(b, a)| *b -= s * (2.0 * a));
        }
    }

    /// `‖(H − λ) z‖` exploiting the Hessenberg pattern.
    fn residual(&self, lambda: Complex64, z: &[Complex64]) -> f64 {
        let n = z.len();
        (0..n)
            .map(|i| {
                let row = self.h.row(i);
                let s: Complex64 = (i.saturating_sub(1)..n).map(|c| z[c] * row[c]).sum();
                (s - lambda * z[i]).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// LU with adjacent-row pivoting of `H − λ`; tiny pivots are nudged to
    /// `floor` as in classical inverse iteration.
    fn shifted_lu(&self, lambda: Complex64, floor: f64) -> ShiftedLu {
        let n = self.h.nrows();
        let mut u = Array2::<Complex64>::from_shape_fn((n, n), |(i, c)| {
            if c + 1 < i {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(self.h[[i, c]], 0.0) - if i == c { lambda } else { Complex64::new(0.0, 0.0) }
            }
        });
        let mut mult = vec![Complex64::new(0.0, 0.0); n];
        let mut swap = vec![false; n];
        for k in 0..n.saturating_sub(1) {
            if u[[k + 1, k]].norm() > u[[k, k]].norm() {
                for c in k..n {
                    let t = u[[k, c]];
                    u[[k, c]] = u[[k + 1, c]];
                    u[[k + 1, c]] = t;
                }
                swap[k] = true;
            }
            if u[[k, k]].norm() < floor {
                u[[k, k]] = Complex64::new(floor, 0.0);
            }
            let m = u[[k + 1, k]] / u[[k, k]];
            mult[k] = m;
            u[[k + 1, k]] = Complex64::new(0.0, 0.0);
            if m != Complex64::new(0.0, 0.0) {
                for c in k + 1..n {
                    let t = u[[k, c]];
                    u[[k + 1, c]] -= m * t;
                }
            }
        }
        if n > 0 && u[[n - 1, n - 1]].norm() < floor {
            u[[n - 1, n - 1]] = Complex64::new(floor, 0.0);
        }
        ShiftedLu { u, mult, swap }
    }
}

struct ShiftedLu {
    u: Array2<Complex64>,
    mult: Vec<Complex64>,
    swap: Vec<bool>,
}

impl ShiftedLu {
    fn solve(&self, b: &mut [Complex64]) {
        let n = b.len();
        for k in 0..n.saturating_sub(1) {
            if self.swap[k] {
                b.swap(k, k + 1);
            }
            let t = b[k];
            b[k + 1] -= self.mult[k] * t;
        }
        for k in (0..n).rev() {
            let row = self.u.row(k);
            let s: Complex64 = (k + 1..n).map(|c| row[c] * b[c]).sum();
            b[k] = (b[k] - s) / row[k];
        }
    }
}

/// Improve eigenvectors whose residual exceeds `tol` by inverse iteration
/// on the Hessenberg form of `j`, starting from the current vector.
///
/// Clusters of nearly equal eigenvalues (a few ulps of `‖J‖` apart, as for
/// the left- and right-going partners of an undamped wave) defeat the
/// triangular back-substitution of a Schur-based eigenvector solve; one or
/// two shifted solves restore residuals at round-off level. Conjugate
/// partners reuse the refined vector. Recomputes every residual and returns
/// how many vectors were replaced.
pub fn refine_eigenvectors(j: &Array2<f64>, spec: &mut Spectrum, tol: f64) -> Result<usize> {
    let n = square(j.dim())?;
    if spec.residuals.len() != n {
        real_residuals(j, spec)?;
    }
    let bad: Vec<usize> = (0..n).filter(|&k| !(spec.residuals[k] <= tol)).collect();
    if bad.is_empty() {
        return Ok(0);
    }
    let frob = j.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let hess = Hessenberg::reduce(j);
    let floor = f64::EPSILON * frob;
    let x = spec
        .vectors
        .as_mut()
        .ok_or_else(|| Error::Solver("refinement needs eigenvectors".into()))?;
    let mut done: Vec<Option<Vec<Complex64>>> = vec![None; n];
    let mut replaced = 0;
    for &k in &bad {
        let lam = spec.values[k];
        // a conjugate partner already refined gives this vector for free
        if let Some(p) = bad.iter().copied().find(|&p| {
            done[p].is_some() && (spec.values[p].conj() - lam).norm() <= 1e-14 * (1.0 + lam.norm()) && lam.im != 0.0
        }) {
            let z: Vec<Complex64> = done[p].as_ref().expect("checked").iter().map(|c| c.conj()).collect();
            for (i, zi) in z.iter().enumerate() {
                x[[i, k]] = *zi;
            }
            done[k] = Some(z);
            replaced += 1;
            continue;
        }
        let mut z: Vec<Complex64> = x.column(k).to_vec();
        hess.to_hess(&mut z);
        let lu = hess.shifted_lu(lam, floor);
        let mut best = (spec.residuals[k] * frob, z.clone());
        for _ in 0..3 {
            lu.solve(&mut z);
            let norm = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                break;
            }
            z.iter_mut().for_each(|c| *c /= norm);
            let r = hess.residual(lam, &z);
            if r < best.0 {
                best = (r, z.clone());
            }
            if r <= 0.1 * tol * frob {
                break;
            }
        }
        let mut v = best.1;
        hess.from_hess(&mut v);
        for (i, vi) in v.iter().enumerate() {
            x[[i, k]] = *vi;
        }
        done[k] = Some(v);
        replaced += 1;
    }
    real_residuals(j, spec)?;
    Ok(replaced)
}

/// Pair every eigenvalue with a conjugate partner within `tol` (relative to
/// `1 + |λ|`); returns the worst mismatch.
pub fn conjugate_pairing_defect(values: &[Complex64], tol: f64) -> f64 {
    let mut used = vec![false; values.len()];
    let mut worst = 0.0f64;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].im.abs().total_cmp(&values[b].im.abs()));
    for &i in &order {
        if used[i] {
            continue;
        }
        used[i] = true;
        let target = values[i].conj();
        if values[i].im.abs() <= tol * (1.0 + values[i].norm()) {
            continue;
        }
        let best = (0..values.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| (values[a] - target).norm().total_cmp(&(values[b] - target).norm()));
        match best {
            Some(j) => {
                used[j] = true;
                worst = worst.max((values[j] - target).norm() / (1.0 + values[i].norm()));
            }
            None => worst = f64::INFINITY,
        }
    }
    worst
}
