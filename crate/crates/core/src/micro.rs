//! Microscale staggered-grid visco-elasticity for a single patch.
//!
//! Index conventions (all arrays are `ndarray::Array2` indexed `[[col, row]]`,
//! stored x-major so that a column of constant x is contiguous):
//!
//! * `u` lives at half-integer nodes. Column `a` (0..=nx+1) is `u_{a+1/2}`;
//!   columns 0 and nx+1 are patch edges. Row `r` (0..=ny) is `u_{.,r+1/2}`;
//!   rows 0 and ny are ghost rows outside the beam.
//! * `v` lives at integer nodes. Column `b` (0..=nx+1) is `v_b`, with edge
//!   columns 0 and nx+1. Row `m` (0..ny) is `v_{.,m+1}`; rows 0 and ny-1 lie on
//!   the bottom and top surfaces.
//! * Normal stresses live at (integer x, half-integer y). Column `c` (0..=nx)
//!   is node `i = c+1`; row `r` (0..=ny) matches the `u` rows, so rows 0 and ny
//!   are the σ_yy ghost rows.
//! * Shear stress lives at (half-integer x, integer y). Column `c` (0..=nx) is
//!   node `c+1/2`; row `m` matches the `v` rows.
//!
//! Coordinates are relative to the patch centre in x (the middle `v` column)
//! and to the beam centreline in y.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Micro-grid of one patch: `nx` interior columns across the patch, `ny` grid
/// rows across the beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroGridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl MicroGridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        if nx < 3 {
            return Err(Error::Domain(format!("nx must be at least 3, got {nx}")));
        }
        if ny < 4 {
            return Err(Error::Domain(format!("ny must be at least 4, got {ny}")));
        }
        if !(dx > 0.0 && dx.is_finite() && dy > 0.0 && dy.is_finite()) {
            return Err(Error::Domain(format!(
                "grid spacings must be positive and finite, got dx={dx}, dy={dy}"
            )));
        }
        Ok(MicroGridSpec { nx, ny, dx, dy })
    }

    /// Patch length `h = nx·dx`: the distance from a next-to-edge column to the
    /// opposite edge column, and the heterogeneity period a patch must span.
    pub fn patch_length(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    /// Distance between the two edge `v` columns.
    pub fn edge_span(&self) -> f64 {
        (self.nx + 1) as f64 * self.dx
    }

    /// Beam width `W = (ny-1)·dy`.
    pub fn width(&self) -> f64 {
        (self.ny - 1) as f64 * self.dy
    }

    pub fn u_shape(&self) -> (usize, usize) {
        (self.nx + 2, self.ny + 1)
    }

    pub fn v_shape(&self) -> (usize, usize) {
        (self.nx + 2, self.ny)
    }

    pub fn normal_shape(&self) -> (usize, usize) {
        (self.nx + 1, self.ny - 1)
    }

    pub fn shear_shape(&self) -> (usize, usize) {
        (self.nx + 1, self.ny)
    }

    /// Count of evolving `u` unknowns (interior columns and rows).
    pub fn interior_u(&self) -> usize {
        self.nx * (self.ny - 1)
    }

    /// Count of evolving `v` unknowns.
    pub fn interior_v(&self) -> usize {
        self.nx * self.ny
    }

    fn centre_col(&self) -> f64 {
        (self.nx + 1) as f64 / 2.0
    }

    /// x-offset from the patch centre of `u` column `a`.
    pub fn u_col_x(&self, a: usize) -> f64 {
        (a as f64 + 0.5 - self.centre_col()) * self.dx
    }

    /// x-offset from the patch centre of `v` column `b`.
    pub fn v_col_x(&self, b: usize) -> f64 {
        (b as f64 - self.centre_col()) * self.dx
    }

    /// x-offset of normal-stress column `c`.
    pub fn normal_col_x(&self, c: usize) -> f64 {
        self.v_col_x(c + 1)
    }

    /// x-offset of shear-stress column `c`.
    pub fn shear_col_x(&self, c: usize) -> f64 {
        self.u_col_x(c)
    }

    /// y-coordinate (from the centreline) of `u` row `r`.
    pub fn u_row_y(&self, r: usize) -> f64 {
        (r as f64 - 0.5) * self.dy - 0.5 * self.width()
    }

    /// y-coordinate (from the centreline) of `v` row `m`.
    pub fn v_row_y(&self, m: usize) -> f64 {
        m as f64 * self.dy - 0.5 * self.width()
    }
}

/// Displacements and velocities of one patch, including edge columns and
/// ghost rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredField {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub udot: Array2<f64>,
    pub vdot: Array2<f64>,
}

impl StaggeredField {
    pub fn zeros(grid: &MicroGridSpec) -> Self {
        StaggeredField {
            u: Array2::zeros(grid.u_shape()),
            v: Array2::zeros(grid.v_shape()),
            udot: Array2::zeros(grid.u_shape()),
            vdot: Array2::zeros(grid.v_shape()),
        }
    }

    pub fn check_shape(&self, grid: &MicroGridSpec) -> Result<()> {
        check("u", &self.u, grid.u_shape())?;
        check("v", &self.v, grid.v_shape())?;
        check("udot", &self.udot, grid.u_shape())?;
        check("vdot", &self.vdot, grid.v_shape())
    }
}

/// Lamé constants sampled at the normal-stress (`_n`) and shear-stress (`_s`)
/// nodes of a patch.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub lambda_n: Array2<f64>,
    pub mu_n: Array2<f64>,
    pub lambda_s: Array2<f64>,
    pub mu_s: Array2<f64>,
}

impl MaterialField {
    pub fn homogeneous(grid: &MicroGridSpec, lambda: f64, mu: f64) -> Self {
        MaterialField {
            lambda_n: Array2::from_elem(grid.normal_shape(), lambda),
            mu_n: Array2::from_elem(grid.normal_shape(), mu),
            lambda_s: Array2::from_elem(grid.shear_shape(), lambda),
            mu_s: Array2::from_elem(grid.shear_shape(), mu),
        }
    }

    pub fn check_shape(&self, grid: &MicroGridSpec) -> Result<()> {
        check("lambda_n", &self.lambda_n, grid.normal_shape())?;
        check("mu_n", &self.mu_n, grid.normal_shape())?;
        check("lambda_s", &self.lambda_s, grid.shear_shape())?;
        check("mu_s", &self.mu_s, grid.shear_shape())
    }

    /// μ > 0 and λ + 2μ > 0 at every node.
    pub fn is_elliptic(&self) -> bool {
        let ok = |l: &Array2<f64>, m: &Array2<f64>| {
            l.iter()
                .zip(m.iter())
                .all(|(&l, &m)| m > 0.0 && l + 2.0 * m > 0.0)
        };
        ok(&self.lambda_n, &self.mu_n) && ok(&self.lambda_s, &self.mu_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub sxx: Array2<f64>,
    pub syy: Array2<f64>,
    pub sxy: Array2<f64>,
}

/// Body force per unit mass on the interior `u` nodes (`fx`, shape nx × ny-1)
/// and interior `v` nodes (`fy`, shape nx × ny).
#[derive(Debug, Clone, PartialEq)]
pub struct BodyForce {
    pub fx: Array2<f64>,
    pub fy: Array2<f64>,
}

impl BodyForce {
    pub fn zeros(grid: &MicroGridSpec) -> Self {
        BodyForce {
            fx: Array2::zeros((grid.nx, grid.ny - 1)),
            fy: Array2::zeros((grid.nx, grid.ny)),
        }
    }

    pub fn check_shape(&self, grid: &MicroGridSpec) -> Result<()> {
        check("fx", &self.fx, (grid.nx, grid.ny - 1))?;
        check("fy", &self.fy, (grid.nx, grid.ny))
    }
}

fn check(what: &'static str, a: &Array2<f64>, expected: (usize, usize)) -> Result<()> {
    if a.dim() != expected {
        return Err(Error::Shape {
            what,
            expected,
            found: a.dim(),
        });
    }
    Ok(())
}

/// Lamé constants from Young's modulus and Poisson ratio (plane strain).
pub fn lame_from_engineering(youngs: f64, poisson: f64) -> Result<(f64, f64)> {
    if !(youngs > 0.0 && youngs.is_finite()) {
        return Err(Error::Domain(format!(
            "Young's modulus must be positive, got {youngs}"
        )));
    }
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(Error::Domain(format!(
            "Poisson ratio must lie in (-1, 0.5), got {poisson}"
        )));
    }
    let mu = youngs / (2.0 * (1.0 + poisson));
    let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    Ok((lambda, mu))
}

/// Centred-difference stresses. Requires edge columns and `u` ghost rows to be
/// populated; σ_yy ghost rows are left at zero (see [`apply_ghost_bcs`]).
pub fn compute_stresses(
    state: &StaggeredField,
    mat: &MaterialField,
    grid: &MicroGridSpec,
) -> Result<StressField> {
    state.check_shape(grid)?;
    mat.check_shape(grid)?;
    let (nx, ny, dx, dy) = (grid.nx, grid.ny, grid.dx, grid.dy);
    let (u, v) = (&state.u, &state.v);

    let mut sxx = Array2::zeros((nx + 1, ny + 1));
    let mut syy = Array2::zeros((nx + 1, ny + 1));
    for c in 0..=nx {
        let i = c + 1;
        for r in 1..ny {
            let lam = mat.lambda_n[[c, r - 1]];
            let stiff = lam + 2.0 * mat.mu_n[[c, r - 1]];
            let exx = (u[[i, r]] - u[[i - 1, r]]) / dx;
            let eyy = (v[[i, r]] - v[[i, r - 1]]) / dy;
            sxx[[c, r]] = stiff * exx + lam * eyy;
            syy[[c, r]] = lam * exx + stiff * eyy;
        }
    }

    let mut sxy = Array2::zeros((nx + 1, ny));
    for c in 0..=nx {
        for m in 0..ny {
            let shear = (u[[c, m + 1]] - u[[c, m]]) / dy + (v[[c + 1, m]] - v[[c, m]]) / dx;
            sxy[[c, m]] = mat.mu_s[[c, m]] * shear;
        }
    }
    Ok(StressField { sxx, syy, sxy })
}

/// Fill the `u` and `udot` ghost rows so that σ_xy vanishes on the top and
/// bottom surfaces. Reads only interior rows and `v`/`vdot`.
pub fn fill_ghost_rows(state: &mut StaggeredField, grid: &MicroGridSpec) {
    let (nx, ny) = (grid.nx, grid.ny);
    let ratio = grid.dy / grid.dx;
    for (w, wv) in [
        (&mut state.u, &state.v),
        (&mut state.udot, &state.vdot),
    ] {
        for a in 0..=nx {
            w[[a, 0]] = w[[a, 1]] + ratio * (wv[[a + 1, 0]] - wv[[a, 0]]);
            w[[a, ny]] = w[[a, ny - 1]] - ratio * (wv[[a + 1, ny - 1]] - wv[[a, ny - 1]]);
        }
    }
}

/// Impose the stress-free top/bottom conditions through ghost values: the
/// `u` ghost rows of `state` and the antisymmetric σ_yy ghost rows of `stress`.
pub fn apply_ghost_bcs(
    state: &mut StaggeredField,
    stress: &mut StressField,
    grid: &MicroGridSpec,
) -> Result<()> {
    state.check_shape(grid)?;
    check("syy", &stress.syy, (grid.nx + 1, grid.ny + 1))?;
    fill_ghost_rows(state, grid);
    let ny = grid.ny;
    for c in 0..=grid.nx {
        stress.syy[[c, 0]] = -stress.syy[[c, 1]];
        stress.syy[[c, ny]] = -stress.syy[[c, ny - 1]];
    }
    Ok(())
}

/// Interior accelerations `(ü, v̈)` from stress divergence, body force and the
/// viscous term `κ∇²(u̇, v̇)`.
///
/// The viscous Laplacian takes its x-neighbours from the edge columns. Across
/// the top and bottom surfaces it uses a zero-normal-derivative reflection.
pub fn acceleration(
    state: &StaggeredField,
    stress: &StressField,
    force: &BodyForce,
    kappa: f64,
    grid: &MicroGridSpec,
) -> Result<(Array2<f64>, Array2<f64>)> {
    state.check_shape(grid)?;
    force.check_shape(grid)?;
    check("sxx", &stress.sxx, (grid.nx + 1, grid.ny + 1))?;
    check("syy", &stress.syy, (grid.nx + 1, grid.ny + 1))?;
    check("sxy", &stress.sxy, grid.shear_shape())?;
    if !(kappa >= 0.0) {
        return Err(Error::Domain(format!("viscosity must be >= 0, got {kappa}")));
    }
    let (nx, ny, dx, dy) = (grid.nx, grid.ny, grid.dx, grid.dy);
    let (cx, cy) = (kappa / (dx * dx), kappa / (dy * dy));

    let mut uddot = Array2::zeros((nx, ny - 1));
    for a in 1..=nx {
        for r in 1..ny {
            let mut acc = (stress.sxx[[a, r]] - stress.sxx[[a - 1, r]]) / dx
                + (stress.sxy[[a, r]] - stress.sxy[[a, r - 1]]) / dy
                + force.fx[[a - 1, r - 1]];
            if kappa > 0.0 {
                let w = &state.udot;
                let here = w[[a, r]];
                let below = if r == 1 { here } else { w[[a, r - 1]] };
                let above = if r == ny - 1 { here } else { w[[a, r + 1]] };
                acc += cx * (w[[a - 1, r]] - 2.0 * here + w[[a + 1, r]])
                    + cy * (below - 2.0 * here + above);
            }
            uddot[[a - 1, r - 1]] = acc;
        }
    }

    let mut vddot = Array2::zeros((nx, ny));
    for b in 1..=nx {
        for m in 0..ny {
            let mut acc = (stress.sxy[[b, m]] - stress.sxy[[b - 1, m]]) / dx
                + (stress.syy[[b - 1, m + 1]] - stress.syy[[b - 1, m]]) / dy
                + force.fy[[b - 1, m]];
            if kappa > 0.0 {
                let w = &state.vdot;
                let here = w[[b, m]];
                let below = if m == 0 { here } else { w[[b, m - 1]] };
                let above = if m == ny - 1 { here } else { w[[b, m + 1]] };
                acc += cx * (w[[b - 1, m]] - 2.0 * here + w[[b + 1, m]])
                    + cy * (below - 2.0 * here + above);
            }
            vddot[[b - 1, m]] = acc;
        }
    }
    Ok((uddot, vddot))
}

/// Full microscale right-hand side of one patch whose edge columns are
/// already set: ghost rows, stresses, σ_yy ghosts, accelerations.
pub fn patch_acceleration(
    state: &mut StaggeredField,
    mat: &MaterialField,
    force: &BodyForce,
    kappa: f64,
    grid: &MicroGridSpec,
) -> Result<(Array2<f64>, Array2<f64>)> {
    fill_ghost_rows(state, grid);
    let mut stress = compute_stresses(state, mat, grid)?;
    apply_ghost_bcs(state, &mut stress, grid)?;
    acceleration(state, &stress, force, kappa, grid)
}
