//! Networks of coupled patches along the beam and the assembled global RHS.
//!
//! The global state stacks patches in order. Within a patch block the layout
//! is `[u, v, u̇, v̇]`, each over interior nodes only, column by column
//! (`u` node `(a, r)` for `a` in 1..=nx, `r` in 1..ny at offset
//! `(a-1)(ny-1) + r-1`; `v` node `(b, m)` at `(b-1)ny + m`). Edge columns and
//! ghost rows are rebuilt on every evaluation.

use ndarray::Array2;
use num_complex::Complex64;

use crate::coupling::{coupling_matrix, CouplingMode, MacroGrid};
use crate::error::{Error, Result};
use crate::micro::{patch_acceleration, BodyForce, MaterialField, MicroGridSpec, StaggeredField};
use crate::solvers::eigen::InvariantSubspace;
use crate::solvers::krylov::{equilibrium, CsrMatrix, KrylovOptions, KrylovSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacroBc {
    Periodic,
    /// Zero displacement at both ends.
    FixedFixed,
    /// Zero displacement at `x = 0`, traction free at `x = L`.
    FixedFree,
}

#[derive(Debug, Clone)]
pub struct PatchNetwork {
    pub grid: MicroGridSpec,
    pub length: f64,
    /// Centre-to-centre patch spacing `H`.
    pub spacing: f64,
    pub macro_grid: MacroGrid,
    pub coupling: CouplingMode,
    pub bc: MacroBc,
    pub materials: Vec<MaterialField>,
    to_right: Array2<f64>,
    to_left: Array2<f64>,
}

/// Cross-beam statistics of one patch at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchStats {
    pub x: f64,
    pub ubar: f64,
    pub vbar: f64,
    pub ustd: f64,
    pub vstd: f64,
}

impl PatchNetwork {
    /// `n` patches equispaced on a periodic domain of length `length`, the
    /// first centred at `x = 0`.
    pub fn periodic(
        grid: MicroGridSpec,
        n: usize,
        length: f64,
        coupling: CouplingMode,
        materials: Vec<MaterialField>,
    ) -> Result<Self> {
        if n < 3 {
            return Err(Error::Domain(format!("need at least 3 patches, got {n}")));
        }
        let spacing = length / n as f64;
        let centres = (0..n).map(|i| i as f64 * spacing).collect();
        let macro_grid = MacroGrid::Periodic { centres, length };
        Self::assemble(grid, length, spacing, macro_grid, coupling, MacroBc::Periodic, materials)
    }

    /// `n` patches on `[0, L]`; the outer edge `v` columns of the extreme
    /// patches lie on the physical ends and interior centres are equispaced.
    pub fn bounded(
        grid: MicroGridSpec,
        n: usize,
        length: f64,
        coupling: CouplingMode,
        bc: MacroBc,
        materials: Vec<MaterialField>,
    ) -> Result<Self> {
        if bc == MacroBc::Periodic {
            return Err(Error::Domain("bounded network needs physical end conditions".into()));
        }
        if n < 3 {
            return Err(Error::Domain(format!("need at least 3 patches, got {n}")));
        }
        let half = 0.5 * grid.edge_span();
        let spacing = (length - 2.0 * half) / (n - 1) as f64;
        let centres = (0..n).map(|i| half + i as f64 * spacing).collect();
        let macro_grid = MacroGrid::Bounded { centres };
        Self::assemble(grid, length, spacing, macro_grid, coupling, bc, materials)
    }

    /// A single patch covering the whole beam, `(nx+1)·dx = L`.
    pub fn full_domain(grid: MicroGridSpec, length: f64, bc: MacroBc, material: MaterialField) -> Result<Self> {
        if bc == MacroBc::Periodic {
            return Err(Error::Domain("full-domain reference needs physical end conditions".into()));
        }
        if (grid.edge_span() - length).abs() > 1e-9 * length {
            return Err(Error::Domain(format!(
                "full-domain grid spans {} but the beam length is {length}",
                grid.edge_span()
            )));
        }
        material.check_shape(&grid)?;
        Ok(PatchNetwork {
            grid,
            length,
            spacing: length,
            macro_grid: MacroGrid::Bounded {
                centres: vec![0.5 * length],
            },
            coupling: CouplingMode::Spectral,
            bc,
            materials: vec![material],
            to_right: Array2::zeros((1, 1)),
            to_left: Array2::zeros((1, 1)),
        })
    }

    fn assemble(
        grid: MicroGridSpec,
        length: f64,
        spacing: f64,
        macro_grid: MacroGrid,
        coupling: CouplingMode,
        bc: MacroBc,
        materials: Vec<MaterialField>,
    ) -> Result<Self> {
        let n = macro_grid.len();
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Domain(format!("domain length must be positive, got {length}")));
        }
        if grid.patch_length() >= spacing {
            return Err(Error::Domain(format!(
                "patch ratio h/H = {} must be below 1",
                grid.patch_length() / spacing
            )));
        }
        if grid.edge_span() > spacing + 1e-12 * spacing {
            return Err(Error::Domain(format!(
                "patches of span {} overlap at spacing {spacing}",
                grid.edge_span()
            )));
        }
        if materials.len() != n {
            return Err(Error::Domain(format!(
                "expected {n} material fields, got {}",
                materials.len()
            )));
        }
        for m in &materials {
            m.check_shape(&grid)?;
            if !m.is_elliptic() {
                return Err(Error::Domain("material violates mu > 0, lambda + 2 mu > 0".into()));
            }
        }
        let h = grid.patch_length();
        let to_right = coupling_matrix(&macro_grid, coupling, h)?;
        let to_left = coupling_matrix(&macro_grid, coupling, -h)?;
        Ok(PatchNetwork {
            grid,
            length,
            spacing,
            macro_grid,
            coupling,
            bc,
            materials,
            to_right,
            to_left,
        })
    }

    pub fn patches(&self) -> usize {
        self.macro_grid.len()
    }

    pub fn centres(&self) -> &[f64] {
        self.macro_grid.centres()
    }

    /// Degrees of freedom in one patch block.
    pub fn block_len(&self) -> usize {
        2 * (self.grid.interior_u() + self.grid.interior_v())
    }

    pub fn dim(&self) -> usize {
        self.patches() * self.block_len()
    }

    /// Offsets of the `u`, `v`, `u̇`, `v̇` segments within a patch block.
    pub fn segments(&self) -> [usize; 4] {
        let (nu, nv) = (self.grid.interior_u(), self.grid.interior_v());
        [0, nu, nu + nv, 2 * nu + nv]
    }

    /// Interior values of each patch, edges and ghosts zeroed.
    pub fn unpack(&self, q: &[f64]) -> Result<Vec<StaggeredField>> {
        if q.len() != self.dim() {
            return Err(Error::Shape {
                what: "global state",
                expected: (self.dim(), 1),
                found: (q.len(), 1),
            });
        }
        let g = &self.grid;
        let seg = self.segments();
        Ok(q.chunks(self.block_len())
            .map(|block| {
                let mut s = StaggeredField::zeros(g);
                for a in 1..=g.nx {
                    for r in 1..g.ny {
                        let k = (a - 1) * (g.ny - 1) + r - 1;
                        s.u[[a, r]] = block[seg[0] + k];
                        s.udot[[a, r]] = block[seg[2] + k];
                    }
                    for m in 0..g.ny {
                        let k = (a - 1) * g.ny + m;
                        s.v[[a, m]] = block[seg[1] + k];
                        s.vdot[[a, m]] = block[seg[3] + k];
                    }
                }
                s
            })
            .collect())
    }

    /// Unpack and fill every edge column by interpolation (before end conditions).
    pub fn couple_patches(&self, q: &[f64]) -> Result<Vec<StaggeredField>> {
        let mut fields = self.unpack(q)?;
        let n = self.patches();
        if n == 1 {
            return Ok(fields);
        }
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut donor_l = vec![0.0; n];
        let mut donor_r = vec![0.0; n];
        for which in 0..4 {
            let rows = if which % 2 == 0 { 1..ny } else { 0..ny };
            for row in rows {
                for (j, f) in fields.iter().enumerate() {
                    let w = field_of(f, which);
                    donor_l[j] = w[[1, row]];
                    donor_r[j] = w[[nx, row]];
                }
                for (i, f) in fields.iter_mut().enumerate() {
                    let right = shifted_dot(self.to_right.row(i), &donor_l, donor_l[i]);
                    let left = shifted_dot(self.to_left.row(i), &donor_r, donor_r[i]);
                    let w = field_of_mut(f, which);
                    w[[nx + 1, row]] = right;
                    w[[0, row]] = left;
                }
            }
        }
        Ok(fields)
    }

    /// Override edge columns at physical ends.
    pub fn apply_macro_bc(&self, fields: &mut [StaggeredField]) {
        match self.bc {
            MacroBc::Periodic => {}
            MacroBc::FixedFixed => {
                fix_end(&mut fields[0], 0);
                let last = fields.len() - 1;
                fix_end(&mut fields[last], self.grid.nx + 1);
            }
            MacroBc::FixedFree => {
                fix_end(&mut fields[0], 0);
                let last = fields.len() - 1;
                free_right_end(&mut fields[last], &self.materials[last], &self.grid);
            }
        }
    }

    /// Per-patch fields with all edge columns set.
    pub fn edge_complete_fields(&self, q: &[f64]) -> Result<Vec<StaggeredField>> {
        let mut fields = self.couple_patches(q)?;
        self.apply_macro_bc(&mut fields);
        Ok(fields)
    }

    /// `q̇` for state `q`, per-patch body forces and viscosity `kappa`.
    pub fn global_rhs(&self, q: &[f64], forces: &[BodyForce], kappa: f64, out: &mut [f64]) -> Result<()> {
        if forces.len() != self.patches() {
            return Err(Error::Domain(format!(
                "expected {} body forces, got {}",
                self.patches(),
                forces.len()
            )));
        }
        if out.len() != self.dim() {
            return Err(Error::Shape {
                what: "rhs output",
                expected: (self.dim(), 1),
                found: (out.len(), 1),
            });
        }
        let fields = self.edge_complete_fields(q)?;
        let g = &self.grid;
        let seg = self.segments();
        let bl = self.block_len();
        for (p, mut f) in fields.into_iter().enumerate() {
            let (ua, va) = patch_acceleration(&mut f, &self.materials[p], &forces[p], kappa, g)?;
            let block = &mut out[p * bl..(p + 1) * bl];
            for a in 1..=g.nx {
                for r in 1..g.ny {
                    let k = (a - 1) * (g.ny - 1) + r - 1;
                    block[seg[0] + k] = f.udot[[a, r]];
                    block[seg[2] + k] = ua[[a - 1, r - 1]];
                }
                for m in 0..g.ny {
                    let k = (a - 1) * g.ny + m;
                    block[seg[1] + k] = f.vdot[[a, m]];
                    block[seg[3] + k] = va[[a - 1, m]];
                }
            }
        }
        Ok(())
    }

    /// Body forces sampled at the interior nodes of every patch.
    pub fn sample_forces(
        &self,
        fx: impl Fn(f64, f64) -> f64,
        fy: impl Fn(f64, f64) -> f64,
    ) -> Vec<BodyForce> {
        let g = &self.grid;
        self.centres()
            .iter()
            .map(|&xc| {
                let mut f = BodyForce::zeros(g);
                for a in 1..=g.nx {
                    for r in 1..g.ny {
                        f.fx[[a - 1, r - 1]] = fx(xc + g.u_col_x(a), g.u_row_y(r));
                    }
                    for m in 0..g.ny {
                        f.fy[[a - 1, m]] = fy(xc + g.v_col_x(a), g.v_row_y(m));
                    }
                }
                f
            })
            .collect()
    }

    pub fn zero_forces(&self) -> Vec<BodyForce> {
        vec![BodyForce::zeros(&self.grid); self.patches()]
    }

    /// State with displacements sampled from `u0`, `v0` and zero velocity.
    pub fn sample_state(&self, u0: impl Fn(f64, f64) -> f64, v0: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let g = &self.grid;
        let seg = self.segments();
        let mut q = vec![0.0; self.dim()];
        for (p, &xc) in self.centres().iter().enumerate() {
            let block = &mut q[p * self.block_len()..(p + 1) * self.block_len()];
            for a in 1..=g.nx {
                for r in 1..g.ny {
                    block[seg[0] + (a - 1) * (g.ny - 1) + r - 1] = u0(xc + g.u_col_x(a), g.u_row_y(r));
                }
                for m in 0..g.ny {
                    block[seg[1] + (a - 1) * g.ny + m] = v0(xc + g.v_col_x(a), g.v_row_y(m));
                }
            }
        }
        q
    }

    /// Cross-beam mean and standard deviation of `u` and `v` over each
    /// patch's interior nodes.
    pub fn patch_stats(&self, q: &[f64]) -> Result<Vec<PatchStats>> {
        if q.len() != self.dim() {
            return Err(Error::Shape {
                what: "global state",
                expected: (self.dim(), 1),
                found: (q.len(), 1),
            });
        }
        let seg = self.segments();
        let (nu, nv) = (self.grid.interior_u(), self.grid.interior_v());
        Ok(q.chunks(self.block_len())
            .zip(self.centres())
            .map(|(block, &x)| {
                let (ubar, ustd) = mean_std(&block[seg[0]..seg[0] + nu]);
                let (vbar, vstd) = mean_std(&block[seg[1]..seg[1] + nv]);
                PatchStats {
                    x,
                    ubar,
                    vbar,
                    ustd,
                    vstd,
                }
            })
            .collect())
    }

    /// Rigid translations in `u` and in `v` together with the matching
    /// uniform-velocity states. For a periodic unforced network they span an
    /// invariant subspace on which the Jacobian is nilpotent; the restriction
    /// is evaluated through the RHS itself, so it is exact.
    pub fn rigid_subspace(&self, kappa: f64) -> Result<InvariantSubspace> {
        if self.bc != MacroBc::Periodic {
            return Err(Error::Domain("rigid-body modes exist only for periodic networks".into()));
        }
        let seg = self.segments();
        let bl = self.block_len();
        let ends = [seg[1], seg[2], seg[3], bl];
        let mut basis = Array2::zeros((self.dim(), 4));
        for (c, (&start, &end)) in seg.iter().zip(&ends).enumerate() {
            let value = 1.0 / ((end - start) * self.patches()) as f64;
            let value = value.sqrt();
            for p in 0..self.patches() {
                for i in p * bl + start..p * bl + end {
                    basis[[i, c]] = value;
                }
            }
        }
        let forces = self.zero_forces();
        let mut restriction = Array2::zeros((4, 4));
        let mut out = vec![0.0; self.dim()];
        for k in 0..4 {
            let q = basis.column(k).to_vec();
            self.global_rhs(&q, &forces, kappa, &mut out)?;
            for i in 0..4 {
                restriction[[i, k]] = basis.column(i).iter().zip(&out).map(|(a, b)| a * b).sum();
            }
        }
        Ok(InvariantSubspace { basis, restriction })
    }

    /// Global indices of the displacement (`u`, `v`) slots and of the matching
    /// acceleration (`ü`, `v̈`) slots, in the same order.
    pub fn displacement_slots(&self) -> (Vec<usize>, Vec<usize>) {
        let seg = self.segments();
        let bl = self.block_len();
        let half = seg[2];
        let disp: Vec<usize> = (0..self.patches()).flat_map(|p| p * bl..p * bl + half).collect();
        let acc = disp.iter().map(|i| i + half).collect();
        (disp, acc)
    }

    /// Sparse stiffness block `K = ∂(ü, v̈)/∂(u, v)` of the Jacobian, probed
    /// column by column with zero velocities.
    pub fn stiffness(&self) -> Result<CsrMatrix> {
        let (disp, acc) = self.displacement_slots();
        let forces = self.zero_forces();
        let mut row_of = vec![usize::MAX; self.dim()];
        for (k, &i) in acc.iter().enumerate() {
            row_of[i] = k;
        }
        let mut q = vec![0.0; self.dim()];
        let mut out = vec![0.0; self.dim()];
        let mut trips = Vec::new();
        for (col, &j) in disp.iter().enumerate() {
            q[j] = 1.0;
            self.global_rhs(&q, &forces, 0.0, &mut out)?;
            q[j] = 0.0;
            for (i, &v) in out.iter().enumerate() {
                if v != 0.0 && row_of[i] != usize::MAX {
                    if !v.is_finite() {
                        return Err(Error::Solver(format!("non-finite stiffness column {col}")));
                    }
                    trips.push((row_of[i], col, v));
                }
            }
        }
        Ok(CsrMatrix::from_triplets(disp.len(), disp.len(), &trips))
    }

    /// Loaded equilibrium `J q* = −F`. At rest the velocity rows vanish, so
    /// this reduces to `K x = −F_acc` on the displacement block, solved by
    /// ILU(0)-preconditioned BiCGSTAB. Returns `q*` (zero velocities), the
    /// Krylov report and the full relative residual `‖J q* + F‖ / ‖F‖`.
    pub fn static_equilibrium(
        &self,
        forces: &[BodyForce],
        opts: &KrylovOptions,
    ) -> Result<(Vec<f64>, KrylovSolution, f64)> {
        let (disp, acc) = self.displacement_slots();
        let mut f_full = vec![0.0; self.dim()];
        self.global_rhs(&vec![0.0; self.dim()], forces, 0.0, &mut f_full)?;
        let f_norm = f_full.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut q = vec![0.0; self.dim()];
        if f_norm == 0.0 {
            let sol = KrylovSolution {
                x: vec![0.0; disp.len()],
                rel_residual: 0.0,
                iterations: 0,
                preconditioned: false,
            };
            return Ok((q, sol, 0.0));
        }
        let k = self.stiffness()?;
        let f_acc: Vec<f64> = acc.iter().map(|&i| f_full[i]).collect();
        let sol = equilibrium(&k, &f_acc, opts)?;
        for (&i, &x) in disp.iter().zip(&sol.x) {
            q[i] = x;
        }
        let mut r = vec![0.0; self.dim()];
        self.global_rhs(&q, forces, 0.0, &mut r)?;
        let res = r.iter().map(|x| x * x).sum::<f64>().sqrt() / f_norm;
        Ok((q, sol, res))
    }

    /// True when every patch carries the same material, so a periodic
    /// network's Jacobian is block circulant.
    pub fn is_translation_invariant(&self) -> bool {
        self.bc == MacroBc::Periodic && self.materials.windows(2).all(|w| w[0] == w[1])
    }

    /// Bloch block `B_m = Σ_d J_{0,d} ω^{dm}`, `ω = e^{2πi/N}`, of a
    /// block-circulant periodic Jacobian. Its eigenvalues are those of the
    /// full Jacobian belonging to macroscale wavenumber `m`.
    pub fn bloch_block(&self, m: usize, kappa: f64) -> Result<Array2<Complex64>> {
        if !self.is_translation_invariant() {
            return Err(Error::Domain(
                "Bloch reduction needs a periodic network of identical patches".into(),
            ));
        }
        let n = self.patches();
        let bl = self.block_len();
        let forces = self.zero_forces();
        let mut block = Array2::zeros((bl, bl));
        let mut q_re = vec![0.0; self.dim()];
        let mut q_im = vec![0.0; self.dim()];
        let mut out_re = vec![0.0; self.dim()];
        let mut out_im = vec![0.0; self.dim()];
        let phase: Vec<Complex64> = (0..n)
            .map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (j * m % n) as f64 / n as f64))
            .collect();
        for k in 0..bl {
            for j in 0..n {
                q_re[j * bl + k] = phase[j].re;
                q_im[j * bl + k] = phase[j].im;
            }
            self.global_rhs(&q_re, &forces, kappa, &mut out_re)?;
            self.global_rhs(&q_im, &forces, kappa, &mut out_im)?;
            for i in 0..bl {
                block[[i, k]] = Complex64::new(out_re[i], out_im[i]);
            }
            for j in 0..n {
                q_re[j * bl + k] = 0.0;
                q_im[j * bl + k] = 0.0;
            }
        }
        Ok(block)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `Σ_j w_j x_j` evaluated as `x_ref + Σ_j w_j (x_j − x_ref)`. The weights
/// sum to one, so this is the same interpolant, but a uniform donor field is
/// now reproduced exactly and rigid translations are exact equilibria.
fn shifted_dot(w: ndarray::ArrayView1<f64>, x: &[f64], x_ref: f64) -> f64 {
    x_ref + w.iter().zip(x).map(|(a, b)| a * (b - x_ref)).sum::<f64>()
}

fn field_of(f: &StaggeredField, which: usize) -> &Array2<f64> {
    match which {
        0 => &f.u,
        1 => &f.v,
        2 => &f.udot,
        _ => &f.vdot,
    }
}

fn field_of_mut(f: &mut StaggeredField, which: usize) -> &mut Array2<f64> {
    match which {
        0 => &mut f.u,
        1 => &mut f.v,
        2 => &mut f.udot,
        _ => &mut f.vdot,
    }
}

fn fix_end(f: &mut StaggeredField, col: usize) {
    for w in [&mut f.u, &mut f.v, &mut f.udot, &mut f.vdot] {
        w.row_mut(col).fill(0.0);
    }
}

/// Choose the right edge column so σ_xy (shear column nx) and σ_xx (normal
/// column nx) vanish there. Shear rows 0 and ny-1 involve ghost values that
/// themselves depend on the edge, so the edge-minus-neighbour jump is
/// extrapolated from the adjacent row instead.
fn free_right_end(f: &mut StaggeredField, mat: &MaterialField, g: &MicroGridSpec) {
    let (nx, ny) = (g.nx, g.ny);
    let ratio = g.dx / g.dy;
    for (u, v) in [(&mut f.u, &mut f.v), (&mut f.udot, &mut f.vdot)] {
        for m in 1..ny - 1 {
            v[[nx + 1, m]] = v[[nx, m]] - ratio * (u[[nx, m + 1]] - u[[nx, m]]);
        }
        v[[nx + 1, 0]] = v[[nx, 0]] + (v[[nx + 1, 1]] - v[[nx, 1]]);
        v[[nx + 1, ny - 1]] = v[[nx, ny - 1]] + (v[[nx + 1, ny - 2]] - v[[nx, ny - 2]]);
        for r in 1..ny {
            let lam = mat.lambda_n[[nx, r - 1]];
            let stiff = lam + 2.0 * mat.mu_n[[nx, r - 1]];
            u[[nx + 1, r]] = u[[nx, r]] - lam / stiff * ratio * (v[[nx + 1, r]] - v[[nx + 1, r - 1]]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetero::{homogeneous_field, random_periodic_field, RandomElasticitySpec};
    use crate::micro::compute_stresses;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid() -> MicroGridSpec {
        MicroGridSpec::new(5, 9, 0.05, 0.05).unwrap()
    }

    fn homog_net(n: usize, coupling: CouplingMode) -> PatchNetwork {
        let g = grid();
        let m = homogeneous_field(1.0, 0.3, &g).unwrap();
        PatchNetwork::periodic(g, n, 2.0 * PI, coupling, vec![m; n]).unwrap()
    }

    fn hetero_net(n: usize, coupling: CouplingMode) -> PatchNetwork {
        let g = grid();
        let m = random_periodic_field(&RandomElasticitySpec::log_uniform(7, 0.25), &g).unwrap();
        PatchNetwork::periodic(g, n, 2.0 * PI, coupling, vec![m; n]).unwrap()
    }

    fn pseudo_random(len: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn layout_counts() {
        let net = homog_net(7, CouplingMode::Spectral);
        assert_eq!(net.block_len(), 2 * (5 * 8 + 5 * 9));
        assert_eq!(net.dim(), 7 * 170);
    }

    #[test]
    fn zero_state_is_equilibrium() {
        let net = hetero_net(5, CouplingMode::Polynomial { order: 2 });
        let mut out = vec![1.0; net.dim()];
        net.global_rhs(&vec![0.0; net.dim()], &net.zero_forces(), 1e-3, &mut out).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rigid_translation_is_equilibrium() {
        for mode in [CouplingMode::Spectral, CouplingMode::Polynomial { order: 4 }] {
            let net = hetero_net(6, mode);
            let q = net.sample_state(|_, _| 0.3, |_, _| -0.7);
            let mut out = vec![0.0; net.dim()];
            net.global_rhs(&q, &net.zero_forces(), 1e-3, &mut out).unwrap();
            assert!(out.iter().all(|&x| x == 0.0), "{mode:?}");
            // uniform velocity: q̇ carries the velocity, accelerations vanish
            let mut q = vec![0.0; net.dim()];
            let seg = net.segments();
            for block in q.chunks_mut(net.block_len()) {
                block[seg[2]..seg[3]].fill(0.25);
                block[seg[3]..].fill(-1.5);
            }
            net.global_rhs(&q, &net.zero_forces(), 1e-3, &mut out).unwrap();
            for block in out.chunks(net.block_len()) {
                assert!(block[..seg[1]].iter().all(|&x| x == 0.25));
                assert!(block[seg[1]..seg[2]].iter().all(|&x| x == -1.5));
                assert!(block[seg[2]..].iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn rigid_subspace_is_nilpotent() {
        let net = hetero_net(5, CouplingMode::Spectral);
        let sub = net.rigid_subspace(1e-3).unwrap();
        for ((i, k), &t) in sub.restriction.indexed_iter() {
            if (i, k) == (0, 2) || (i, k) == (1, 3) {
                assert!((t - 1.0).abs() < 1e-14);
            } else {
                assert_eq!(t, 0.0);
            }
        }
        for c in sub.basis.columns() {
            assert!((c.dot(&c) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_patches_receive_neighbour_columns() {
        let net = homog_net(5, CouplingMode::Polynomial { order: 2 });
        let one = pseudo_random(net.block_len(), 3);
        let q: Vec<f64> = one.iter().cycle().take(net.dim()).copied().collect();
        let fields = net.couple_patches(&q).unwrap();
        let nx = net.grid.nx;
        for f in &fields {
            for row in 1..net.grid.ny {
                assert_abs_diff_eq!(f.u[[nx + 1, row]], f.u[[1, row]], epsilon = 1e-14);
                assert_abs_diff_eq!(f.u[[0, row]], f.u[[nx, row]], epsilon = 1e-14);
            }
            for row in 0..net.grid.ny {
                assert_abs_diff_eq!(f.vdot[[nx + 1, row]], f.vdot[[1, row]], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn spectral_coupling_shifts_sine() {
        let net = homog_net(7, CouplingMode::Spectral);
        let h = net.grid.patch_length();
        let q = net.sample_state(|x, _| x.sin(), |x, y| (x).cos() * (1.0 + y));
        let fields = net.couple_patches(&q).unwrap();
        let g = &net.grid;
        for (f, &xc) in fields.iter().zip(net.centres()) {
            for r in 1..g.ny {
                let donor_x = xc + g.u_col_x(1);
                assert_abs_diff_eq!(f.u[[g.nx + 1, r]], (donor_x + h).sin(), epsilon = 1e-12);
                let donor_x = xc + g.u_col_x(g.nx);
                assert_abs_diff_eq!(f.u[[0, r]], (donor_x - h).sin(), epsilon = 1e-12);
            }
            for m in 0..g.ny {
                let y = g.v_row_y(m);
                let donor_x = xc + g.v_col_x(1);
                assert_abs_diff_eq!(f.v[[g.nx + 1, m]], (donor_x + h).cos() * (1.0 + y), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rows_couple_independently() {
        let net = homog_net(5, CouplingMode::Polynomial { order: 4 });
        let q = net.sample_state(|_, y| y * y, |_, y| 3.0 * y);
        let fields = net.couple_patches(&q).unwrap();
        let g = &net.grid;
        for f in &fields {
            for r in 1..g.ny {
                assert_abs_diff_eq!(f.u[[0, r]], g.u_row_y(r).powi(2), epsilon = 1e-13);
                assert_abs_diff_eq!(f.u[[g.nx + 1, r]], g.u_row_y(r).powi(2), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn excitation_stays_within_stencil() {
        let net = homog_net(9, CouplingMode::Polynomial { order: 4 });
        let bl = net.block_len();
        let mut q = vec![0.0; net.dim()];
        q[4 * bl..5 * bl].copy_from_slice(&pseudo_random(bl, 9));
        let mut out = vec![0.0; net.dim()];
        net.global_rhs(&q, &net.zero_forces(), 1e-3, &mut out).unwrap();
        for p in 0..9 {
            let nz = out[p * bl..(p + 1) * bl].iter().any(|&x| x != 0.0);
            assert_eq!(nz, (2..=6).contains(&p), "patch {p}");
        }
    }

    #[test]
    fn rhs_is_linear() {
        let net = hetero_net(5, CouplingMode::Polynomial { order: 4 });
        let (a, b) = (pseudo_random(net.dim(), 1), pseudo_random(net.dim(), 2));
        let f = net.zero_forces();
        let mut fa = vec![0.0; net.dim()];
        let mut fb = vec![0.0; net.dim()];
        let mut fab = vec![0.0; net.dim()];
        net.global_rhs(&a, &f, 1e-3, &mut fa).unwrap();
        net.global_rhs(&b, &f, 1e-3, &mut fb).unwrap();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        net.global_rhs(&ab, &f, 1e-3, &mut fab).unwrap();
        for i in 0..net.dim() {
            assert_abs_diff_eq!(fab[i], 2.0 * fa[i] - 0.5 * fb[i], epsilon = 1e-12 * (1.0 + fab[i].abs()));
        }
    }

    fn bounded_net(bc: MacroBc) -> PatchNetwork {
        let g = MicroGridSpec::new(6, 5, 1.0 / 199.0, 0.005).unwrap();
        let m = homogeneous_field(1.0, 0.3, &g).unwrap();
        PatchNetwork::bounded(g, 5, 1.0, CouplingMode::Polynomial { order: 4 }, bc, vec![m; 5]).unwrap()
    }

    #[test]
    fn bounded_geometry_abuts_ends() {
        let net = bounded_net(MacroBc::FixedFixed);
        let g = &net.grid;
        let c = net.centres();
        assert_abs_diff_eq!(c[0] + g.v_col_x(0), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[4] + g.v_col_x(g.nx + 1), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[2], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn fixed_ends_zero_edges() {
        let net = bounded_net(MacroBc::FixedFixed);
        let q = net.sample_state(|x, _| 1.0 + x, |x, y| 2.0 + x * y);
        let f = net.edge_complete_fields(&q).unwrap();
        assert!(f[0].u.row(0).iter().all(|&x| x == 0.0));
        assert!(f[0].v.row(0).iter().all(|&x| x == 0.0));
        let nx = net.grid.nx;
        assert!(f[4].u.row(nx + 1).iter().all(|&x| x == 0.0));
        assert!(f[4].vdot.row(nx + 1).iter().all(|&x| x == 0.0));
        // interior edges still interpolate the linear u exactly
        let g = &net.grid;
        assert_abs_diff_eq!(f[1].u[[0, 2]], 1.0 + net.centres()[1] + g.u_col_x(0), epsilon = 1e-12);
    }

    #[test]
    fn free_end_is_traction_free() {
        let net = bounded_net(MacroBc::FixedFree);
        let q: Vec<f64> = pseudo_random(net.dim(), 5);
        let mut fields = net.edge_complete_fields(&q).unwrap();
        let g = net.grid;
        let last = fields.last_mut().unwrap();
        crate::micro::fill_ghost_rows(last, &g);
        let s = compute_stresses(last, &net.materials[4], &g).unwrap();
        for r in 1..g.ny {
            assert_abs_diff_eq!(s.sxx[[g.nx, r]], 0.0, epsilon = 1e-10);
        }
        for m in 1..g.ny - 1 {
            assert_abs_diff_eq!(s.sxy[[g.nx, m]], 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn free_end_uniform_u() {
        // v = 0 and u uniform: the edge simply continues u.
        let net = bounded_net(MacroBc::FixedFree);
        let q = net.sample_state(|_, _| 0.4, |_, _| 0.0);
        let f = net.edge_complete_fields(&q).unwrap();
        let nx = net.grid.nx;
        for r in 1..net.grid.ny {
            assert_abs_diff_eq!(f[4].u[[nx + 1, r]], 0.4, epsilon = 1e-14);
        }
    }

    #[test]
    fn bloch_block_matches_dense_jacobian() {
        let net = hetero_net(5, CouplingMode::Polynomial { order: 2 });
        let bl = net.block_len();
        let n = net.patches();
        let f = net.zero_forces();
        let m = 2;
        let b = net.bloch_block(m, 1e-3).unwrap();
        // column k of B_m from explicit column blocks J_{0,d}
        let mut e = vec![0.0; net.dim()];
        let mut out = vec![0.0; net.dim()];
        for k in [0, 17, bl - 1] {
            let mut acc = vec![Complex64::new(0.0, 0.0); bl];
            for d in 0..n {
                e[d * bl + k] = 1.0;
                net.global_rhs(&e, &f, 1e-3, &mut out).unwrap();
                e[d * bl + k] = 0.0;
                let w = Complex64::from_polar(1.0, 2.0 * PI * (d * m) as f64 / n as f64);
                for i in 0..bl {
                    acc[i] += w * out[i];
                }
            }
            for i in 0..bl {
                assert!((acc[i] - b[[i, k]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn construction_errors() {
        let g = grid();
        let m = homogeneous_field(1.0, 0.3, &g).unwrap();
        // patch ratio >= 1
        assert!(PatchNetwork::periodic(g, 30, 2.0 * PI, CouplingMode::Spectral, vec![m.clone(); 30]).is_err());
        assert!(PatchNetwork::periodic(g, 5, 2.0 * PI, CouplingMode::Spectral, vec![m.clone(); 4]).is_err());
        assert!(PatchNetwork::bounded(g, 5, 2.0 * PI, CouplingMode::Spectral, MacroBc::FixedFixed, vec![m; 5]).is_err());
    }
}
