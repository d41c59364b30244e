//! Heterogeneous material fields sampled on the staggered stress nodes.

use std::io::{Read, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::micro::{lame_from_engineering, MaterialField, MicroGridSpec};

/// Distribution of Young's modulus at each stress node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YoungsLaw {
    /// `E = exp(U)` with `U` uniform on `log_range`.
    LogUniform { log_range: (f64, f64) },
    /// `E` uniform on `range`.
    Uniform { range: (f64, f64) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomElasticitySpec {
    pub seed: u64,
    /// Heterogeneity period along the beam; must be a whole number of cells.
    pub period_x: f64,
    pub youngs: YoungsLaw,
    pub nu_range: (f64, f64),
}

impl RandomElasticitySpec {
    /// `E = exp(U₁)`, `ν = 0.3 + 0.1·U₂`, with `U₁, U₂` iid uniform on [-1, 1].
    pub fn log_uniform(seed: u64, period_x: f64) -> Self {
        RandomElasticitySpec {
            seed,
            period_x,
            youngs: YoungsLaw::LogUniform {
                log_range: (-1.0, 1.0),
            },
            nu_range: (0.2, 0.4),
        }
    }

    fn draw_youngs(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.youngs {
            YoungsLaw::LogUniform { log_range } => uniform(rng, log_range).exp(),
            YoungsLaw::Uniform { range } => uniform(rng, range),
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = match self.youngs {
            YoungsLaw::LogUniform { log_range } => log_range,
            YoungsLaw::Uniform { range } => {
                if range.0 <= 0.0 {
                    return Err(Error::Domain(format!(
                        "uniform Young's modulus range must be positive, got {range:?}"
                    )));
                }
                range
            }
        };
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Domain(format!("bad Young's modulus range ({lo}, {hi})")));
        }
        let (nlo, nhi) = self.nu_range;
        if !(nlo <= nhi && nlo > -1.0 && nhi < 0.5) {
            return Err(Error::Domain(format!(
                "Poisson range must lie inside (-1, 0.5), got ({nlo}, {nhi})"
            )));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// One period of engineering constants: `nx` normal-stress columns
/// (nodes 1..=nx) and `nx` shear-stress columns (nodes 1/2..nx-1/2).
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSample {
    pub youngs_n: Array2<f64>,
    pub poisson_n: Array2<f64>,
    pub youngs_s: Array2<f64>,
    pub poisson_s: Array2<f64>,
}

impl PeriodicSample {
    pub fn period_cells(&self) -> usize {
        self.youngs_n.nrows()
    }

    /// Tile the period over any grid with the same `ny`, assuming the grid's
    /// first `v` column sits a whole number of periods from the sample origin.
    pub fn material_for(&self, grid: &MicroGridSpec) -> Result<MaterialField> {
        let p = self.period_cells();
        if self.youngs_n.ncols() != grid.ny - 1 || self.youngs_s.ncols() != grid.ny {
            return Err(Error::Shape {
                what: "periodic sample rows",
                expected: (p, grid.ny),
                found: self.youngs_s.dim(),
            });
        }
        let mut lambda_n = Array2::zeros(grid.normal_shape());
        let mut mu_n = Array2::zeros(grid.normal_shape());
        for ((c, r), l) in lambda_n.indexed_iter_mut() {
            let (lam, mu) =
                lame_from_engineering(self.youngs_n[[c % p, r]], self.poisson_n[[c % p, r]])?;
            *l = lam;
            mu_n[[c, r]] = mu;
        }
        let mut lambda_s = Array2::zeros(grid.shear_shape());
        let mut mu_s = Array2::zeros(grid.shear_shape());
        for ((c, m), l) in lambda_s.indexed_iter_mut() {
            let (lam, mu) =
                lame_from_engineering(self.youngs_s[[c % p, m]], self.poisson_s[[c % p, m]])?;
            *l = lam;
            mu_s[[c, m]] = mu;
        }
        Ok(MaterialField {
            lambda_n,
            mu_n,
            lambda_s,
            mu_s,
        })
    }
}

/// Draw one period of iid random elasticity. Draw order: normal nodes then
/// shear nodes, each column by column, `E` before `ν` at every node, from a
/// ChaCha8 stream seeded with `spec.seed`.
pub fn random_periodic_sample(
    spec: &RandomElasticitySpec,
    grid: &MicroGridSpec,
) -> Result<PeriodicSample> {
    spec.validate()?;
    let cells = spec.period_x / grid.dx;
    if !(cells.is_finite() && cells >= 1.0 && (cells - cells.round()).abs() < 1e-9 * cells.max(1.0))
    {
        return Err(Error::Domain(format!(
            "heterogeneity period {} is not a whole number of cells of width {}",
            spec.period_x, grid.dx
        )));
    }
    let p = cells.round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut fill = |rows: usize| {
        let mut e = Array2::zeros((p, rows));
        let mut nu = Array2::zeros((p, rows));
        for c in 0..p {
            for r in 0..rows {
                e[[c, r]] = spec.draw_youngs(&mut rng);
                nu[[c, r]] = uniform(&mut rng, spec.nu_range);
            }
        }
        (e, nu)
    };
    let (youngs_n, poisson_n) = fill(grid.ny - 1);
    let (youngs_s, poisson_s) = fill(grid.ny);
    Ok(PeriodicSample {
        youngs_n,
        poisson_n,
        youngs_s,
        poisson_s,
    })
}

/// Random periodic field for one patch; the patch must span exactly one period.
pub fn random_periodic_field(
    spec: &RandomElasticitySpec,
    grid: &MicroGridSpec,
) -> Result<MaterialField> {
    let h = grid.patch_length();
    if (spec.period_x - h).abs() > 1e-9 * h {
        return Err(Error::Domain(format!(
            "patch length {h} must equal the heterogeneity period {}",
            spec.period_x
        )));
    }
    random_periodic_sample(spec, grid)?.material_for(grid)
}

pub fn homogeneous_field(youngs: f64, poisson: f64, grid: &MicroGridSpec) -> Result<MaterialField> {
    let (lambda, mu) = lame_from_engineering(youngs, poisson)?;
    Ok(MaterialField::homogeneous(grid, lambda, mu))
}

/// A soft rectangular inclusion centred in the patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionSpec {
    pub youngs: f64,
    pub poisson: f64,
    /// Inclusion length in units of `dx`.
    pub length_cells: usize,
    /// Inclusion width in units of `dy`.
    pub width_cells: usize,
}

/// Matrix material with one centred inclusion. A stress node takes the
/// inclusion constants when it lies in the closed rectangle.
pub fn inclusion_field(
    spec: &InclusionSpec,
    matrix_youngs: f64,
    matrix_poisson: f64,
    grid: &MicroGridSpec,
) -> Result<MaterialField> {
    if spec.length_cells + 2 >= grid.nx || spec.width_cells + 1 >= grid.ny {
        return Err(Error::Domain(format!(
            "inclusion {}x{} cells does not fit inside a {}x{} patch interior",
            spec.length_cells, spec.width_cells, grid.nx, grid.ny
        )));
    }
    let matrix = lame_from_engineering(matrix_youngs, matrix_poisson)?;
    let soft = lame_from_engineering(spec.youngs, spec.poisson)?;
    let half_l = 0.5 * spec.length_cells as f64 * grid.dx;
    let half_w = 0.5 * spec.width_cells as f64 * grid.dy;
    let tol = 1e-9 * grid.dx.min(grid.dy);
    let empty = spec.length_cells == 0 || spec.width_cells == 0;
    let inside = |x: f64, y: f64| !empty && x.abs() <= half_l + tol && y.abs() <= half_w + tol;

    let mut mat = MaterialField::homogeneous(grid, matrix.0, matrix.1);
    for c in 0..=grid.nx {
        for r in 0..grid.ny - 1 {
            if inside(grid.normal_col_x(c), grid.u_row_y(r + 1)) {
                mat.lambda_n[[c, r]] = soft.0;
                mat.mu_n[[c, r]] = soft.1;
            }
        }
        for m in 0..grid.ny {
            if inside(grid.shear_col_x(c), grid.v_row_y(m)) {
                mat.lambda_s[[c, m]] = soft.0;
                mat.mu_s[[c, m]] = soft.1;
            }
        }
    }
    Ok(mat)
}

/// Write a material field as CSV: `kind,col,row,x,y,lambda,mu` with `kind`
/// `n` (normal-stress node) or `s` (shear-stress node). Coordinates are
/// patch-relative; values use shortest round-trip formatting.
pub fn write_material_csv<W: Write>(
    mat: &MaterialField,
    grid: &MicroGridSpec,
    out: W,
) -> Result<()> {
    mat.check_shape(grid)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["kind", "col", "row", "x", "y", "lambda", "mu"])
        .map_err(csv_err)?;
    for ((c, r), &lam) in mat.lambda_n.indexed_iter() {
        w.write_record([
            "n".to_string(),
            c.to_string(),
            r.to_string(),
            grid.normal_col_x(c).to_string(),
            grid.u_row_y(r + 1).to_string(),
            lam.to_string(),
            mat.mu_n[[c, r]].to_string(),
        ])
        .map_err(csv_err)?;
    }
    for ((c, m), &lam) in mat.lambda_s.indexed_iter() {
        w.write_record([
            "s".to_string(),
            c.to_string(),
            m.to_string(),
            grid.shear_col_x(c).to_string(),
            grid.v_row_y(m).to_string(),
            lam.to_string(),
            mat.mu_s[[c, m]].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a material CSV written by [`write_material_csv`]. Every node of the
/// grid must appear exactly once and the result must be elliptic.
pub fn read_material_csv<R: Read>(input: R, grid: &MicroGridSpec) -> Result<MaterialField> {
    let mut mat = MaterialField::homogeneous(grid, f64::NAN, f64::NAN);
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("material csv header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse(format!("material csv: missing column `{name}`")))
    };
    let (ik, ic, ir, il, im) = (col("kind")?, col("col")?, col("row")?, col("lambda")?, col("mu")?);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("material csv record {}: {e}", line + 1)))?;
        let field = |i: usize| {
            rec.get(i)
                .map(str::trim)
                .ok_or_else(|| Error::Parse(format!("material csv record {}: too few fields", line + 1)))
        };
        let idx = |i: usize| -> Result<usize> {
            field(i)?
                .parse()
                .map_err(|e| Error::Parse(format!("material csv record {}: {e}", line + 1)))
        };
        let num = |i: usize| -> Result<f64> {
            let x: f64 = field(i)?
                .parse()
                .map_err(|e| Error::Parse(format!("material csv record {}: {e}", line + 1)))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::Parse(format!("material csv record {}: non-finite value", line + 1)))
            }
        };
        let (c, r, lam, mu) = (idx(ic)?, idx(ir)?, num(il)?, num(im)?);
        let (ls, ms) = match field(ik)? {
            "n" => (&mut mat.lambda_n, &mut mat.mu_n),
            "s" => (&mut mat.lambda_s, &mut mat.mu_s),
            other => {
                return Err(Error::Parse(format!(
                    "material csv record {}: unknown node kind `{other}`",
                    line + 1
                )))
            }
        };
        match ls.get_mut([c, r]) {
            Some(slot) if slot.is_nan() => *slot = lam,
            Some(_) => {
                return Err(Error::Parse(format!(
                    "material csv record {}: duplicate node ({c}, {r})",
                    line + 1
                )))
            }
            None => {
                return Err(Error::Parse(format!(
                    "material csv record {}: node ({c}, {r}) outside the grid",
                    line + 1
                )))
            }
        }
        ms[[c, r]] = mu;
    }
    let all = mat
        .lambda_n
        .iter()
        .chain(mat.mu_n.iter())
        .chain(mat.lambda_s.iter())
        .chain(mat.mu_s.iter());
    if all.into_iter().any(|x| x.is_nan()) {
        return Err(Error::Parse("material csv does not cover every node".into()));
    }
    if !mat.is_elliptic() {
        return Err(Error::Parse("material csv violates mu > 0, lambda + 2 mu > 0".into()));
    }
    Ok(mat)
}
