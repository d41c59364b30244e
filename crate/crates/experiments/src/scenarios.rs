//! The named experiments: typed results per scenario and their conversion
//! to a [`ResultBundle`].

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use num_complex::Complex64;
use patchbeam::coupling::CouplingMode;
use patchbeam::hetero::{
    homogeneous_field, inclusion_field, random_periodic_sample, InclusionSpec, PeriodicSample,
    RandomElasticitySpec, YoungsLaw,
};
use patchbeam::micro::{MaterialField, MicroGridSpec};
use patchbeam::network::{MacroBc, PatchNetwork, PatchStats};
use patchbeam::solvers::eigen::{
    conjugate_pairing_defect, deflated_spectrum, real_residuals, refine_eigenvectors, Spectrum,
};
use patchbeam::solvers::jacobian::assemble_jacobian;
use patchbeam::solvers::krylov::KrylovOptions;
use patchbeam::solvers::ode::{integrate, OdeOptions};
use patchbeam::{Error, Result};

use crate::analysis::{
    bloch_macro_pair, eigen_branch_report, fmt_num, footprint_error, fourier_projection, loglog_slope,
    spectrum_rows, zero_crossing_period, Branch, MacroPair, ModeLayout, SpectrumRow, Thresholds,
};
use crate::config::{Boundary, MaterialKind, Scenario, ScenarioConfig, YoungsLawKind};
use crate::output::{nums, CsvTable, Plot, ResultBundle, SPECTRUM_HEADER, TRAJECTORY_HEADER};

/// Worker count for sweeps: `PATCHBEAM_THREADS` if set, else the machine's
/// parallelism.
pub fn thread_budget() -> usize {
    std::env::var("PATCHBEAM_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// `f` over `items` on up to [`thread_budget`] scoped threads; results keep
/// input order so output does not depend on scheduling.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = thread_budget().min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every item processed"))
        .collect()
}

/// Material description that can be laid onto any micro-grid of the beam.
#[derive(Debug, Clone)]
pub enum MaterialSource {
    Homogeneous { youngs: f64, poisson: f64 },
    Random(PeriodicSample),
    Inclusion { spec: InclusionSpec, youngs: f64, poisson: f64 },
}

impl MaterialSource {
    pub fn from_config(cfg: &ScenarioConfig, grid: &MicroGridSpec) -> Result<Self> {
        let m = &cfg.material;
        Ok(match m.kind {
            MaterialKind::Homogeneous => MaterialSource::Homogeneous {
                youngs: m.youngs,
                poisson: m.poisson,
            },
            MaterialKind::Random => {
                let youngs = match m.youngs_law {
                    YoungsLawKind::LogUniform => YoungsLaw::LogUniform {
                        log_range: (m.log_youngs_range[0], m.log_youngs_range[1]),
                    },
                    YoungsLawKind::Uniform => YoungsLaw::Uniform {
                        range: (m.youngs_range[0], m.youngs_range[1]),
                    },
                };
                let spec = RandomElasticitySpec {
                    seed: cfg.seed,
                    period_x: m.period,
                    youngs,
                    nu_range: (m.poisson_range[0], m.poisson_range[1]),
                };
                MaterialSource::Random(random_periodic_sample(&spec, grid)?)
            }
            MaterialKind::Inclusion => MaterialSource::Inclusion {
                spec: InclusionSpec {
                    youngs: m.inclusion_youngs,
                    poisson: m.inclusion_poisson,
                    length_cells: m.inclusion_length_cells,
                    width_cells: m.inclusion_width_cells,
                },
                youngs: m.youngs,
                poisson: m.poisson,
            },
        })
    }

    /// Field on `grid`, whose column 0 starts a heterogeneity period.
    pub fn field(&self, grid: &MicroGridSpec) -> Result<MaterialField> {
        match self {
            MaterialSource::Homogeneous { youngs, poisson } => homogeneous_field(*youngs, *poisson, grid),
            MaterialSource::Random(sample) => sample.material_for(grid),
            MaterialSource::Inclusion { spec, youngs, poisson } => inclusion_field(spec, *youngs, *poisson, grid),
        }
    }

    pub fn with_inclusion_youngs(&self, e: f64) -> Self {
        match self {
            MaterialSource::Inclusion { spec, youngs, poisson } => MaterialSource::Inclusion {
                spec: InclusionSpec { youngs: e, ..*spec },
                youngs: *youngs,
                poisson: *poisson,
            },
            other => other.clone(),
        }
    }
}

/// Attach the scenario name to solver-side failures.
fn in_context(scenario: Scenario, what: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Solver(m) => Error::Solver(format!("{scenario}: {what}: {m}")),
        Error::Domain(m) => Error::Domain(format!("{scenario}: {what}: {m}")),
        Error::Coupling(m) => Error::Coupling(format!("{scenario}: {what}: {m}")),
        other => other,
    }
}

pub fn periodic_network(cfg: &ScenarioConfig, n: usize, mode: CouplingMode, material: &MaterialSource) -> Result<PatchNetwork> {
    let grid = cfg.grid()?;
    let field = material.field(&grid)?;
    PatchNetwork::periodic(grid, n, cfg.geometry.length, mode, vec![field; n])
}

fn sample_times(t_end: f64, dt: f64) -> Vec<f64> {
    let steps = (t_end / dt + 1e-9).floor() as usize;
    let mut t: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    if t_end - t[t.len() - 1] > 1e-9 * t_end {
        t.push(t_end);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodEstimate {
    /// `ubar` or `vbar`.
    pub component: &'static str,
    /// `sin` or `cos`: the Fourier projection that carried the oscillation.
    pub projection: &'static str,
    pub period: f64,
    pub crossings: usize,
}

#[derive(Debug, Clone)]
pub struct DynamicsResult {
    pub times: Vec<f64>,
    pub stats: Vec<Vec<PatchStats>>,
    /// Standing-wave period of the cross-beam mean `ū`.
    pub compression: Option<PeriodEstimate>,
    /// Standing-wave period of `v̄`.
    pub bending: Option<PeriodEstimate>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

pub fn run_dynamics(cfg: &ScenarioConfig) -> Result<DynamicsResult> {
    let ctx = in_context(cfg.scenario, "time integration");
    let material = MaterialSource::from_config(cfg, &cfg.grid()?)?;
    let net = periodic_network(cfg, cfg.geometry.patches, cfg.coupling.mode(), &material).map_err(&ctx)?;
    let (fx, fy) = cfg.forcing_exprs()?;
    let (u0, v0) = cfg.initial_exprs()?;
    let forces = net.sample_forces(|x, y| fx.eval(x, y), |x, y| fy.eval(x, y));
    let q0 = net.sample_state(|x, y| u0.eval(x, y), |x, y| v0.eval(x, y));
    let d = &cfg.dynamics;
    let times = sample_times(d.t_end, d.sample_interval);
    let opts = OdeOptions {
        rel_tol: d.rel_tol,
        abs_tol: d.abs_tol,
        ..OdeOptions::default()
    };
    let traj = integrate(|_, q, out| net.global_rhs(q, &forces, d.kappa, out), &q0, &times, &opts).map_err(&ctx)?;
    let stats = traj
        .states
        .iter()
        .map(|q| net.patch_stats(q))
        .collect::<Result<Vec<_>>>()?;
    let period = |component: &'static str, pick: fn(&PatchStats) -> f64| {
        let proj: Vec<(f64, f64)> = stats.iter().map(|s| fourier_projection(s, cfg.geometry.length, pick)).collect();
        let sin: Vec<f64> = proj.iter().map(|p| p.0).collect();
        let cos: Vec<f64> = proj.iter().map(|p| p.1).collect();
        let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let (projection, signal) = if peak(&sin) >= peak(&cos) { ("sin", sin) } else { ("cos", cos) };
        zero_crossing_period(&traj.times, &signal, 0.05).map(|(period, crossings)| PeriodEstimate {
            component,
            projection,
            period,
            crossings,
        })
    };
    Ok(DynamicsResult {
        compression: period("ubar", |s| s.ubar),
        bending: period("vbar", |s| s.vbar),
        times: traj.times,
        stats,
        accepted_steps: traj.accepted_steps,
        rejected_steps: traj.rejected_steps,
    })
}

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub spectrum: Spectrum,
    pub rows: Vec<SpectrumRow>,
    /// One row per macroscale conjugate pair, sorted by `|Im λ|`.
    pub report: Vec<SpectrumRow>,
    /// How far the rigid-body subspace is from invariant, relative to `‖J‖`.
    pub deflation_defect: f64,
    pub pairing_defect: f64,
}

impl SpectrumResult {
    pub fn first(&self, branch: Branch) -> Option<Complex64> {
        self.report.iter().find(|r| r.branch == branch).map(|r| r.value)
    }
}

/// Eigenvectors with a larger relative residual are refined.
pub const RESIDUAL_TARGET: f64 = 1e-9;

/// Full dense spectrum of a periodic network's Jacobian with the rigid-body
/// subspace split off exactly.
pub fn network_spectrum(net: &PatchNetwork, kappa: f64, th: &Thresholds, with_vectors: bool) -> Result<SpectrumResult> {
    let forces = net.zero_forces();
    let j = assemble_jacobian(|q, out| net.global_rhs(q, &forces, kappa, out), net.dim())?;
    let sub = net.rigid_subspace(kappa)?;
    let (mut spectrum, deflation_defect) = deflated_spectrum(&j, &sub, with_vectors)?;
    if with_vectors {
        real_residuals(&j, &mut spectrum)?;
        refine_eigenvectors(&j, &mut spectrum, RESIDUAL_TARGET)?;
    }
    let layout = ModeLayout::of_network(net);
    let rows = spectrum_rows(&spectrum, Some(&layout), th)?;
    let report = eigen_branch_report(&rows);
    let pairing_defect = conjugate_pairing_defect(&spectrum.values, 1e-9);
    Ok(SpectrumResult {
        spectrum,
        rows,
        report,
        deflation_defect,
        pairing_defect,
    })
}

pub fn run_spectrum(cfg: &ScenarioConfig) -> Result<SpectrumResult> {
    let material = MaterialSource::from_config(cfg, &cfg.grid()?)?;
    let net = periodic_network(cfg, cfg.geometry.patches, cfg.coupling.mode(), &material)
        .map_err(in_context(cfg.scenario, "network"))?;
    network_spectrum(&net, cfg.dynamics.kappa, &Thresholds::from(&cfg.spectrum), true)
        .map_err(in_context(cfg.scenario, "eigen-analysis"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub order: usize,
    pub patches: usize,
    pub branch: Branch,
    pub value: Complex64,
    pub reference: Complex64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub order: usize,
    pub branch: Branch,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    /// Spectral-coupling eigenvalues per patch count.
    pub spectral: Vec<(usize, MacroPair)>,
    pub points: Vec<ConvergencePoint>,
    pub fits: Vec<SlopeFit>,
}

/// Polynomial against spectral coupling for the first compression and
/// bending eigenvalues over the patch-count and order sweep.
pub fn run_convergence(cfg: &ScenarioConfig) -> Result<ConvergenceResult> {
    let material = MaterialSource::from_config(cfg, &cfg.grid()?)?;
    let th = Thresholds::from(&cfg.spectrum);
    let kappa = cfg.dynamics.kappa;
    let ctx = in_context(cfg.scenario, "eigen-analysis");
    let per_n = parallel_map(&cfg.sweep.patches, |&n| -> Result<(MacroPair, Vec<MacroPair>)> {
        let spectral = bloch_macro_pair(&periodic_network(cfg, n, CouplingMode::Spectral, &material)?, kappa, &th)?;
        let poly = cfg
            .sweep
            .orders
            .iter()
            .map(|&order| {
                let net = periodic_network(cfg, n, CouplingMode::Polynomial { order }, &material)?;
                bloch_macro_pair(&net, kappa, &th)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((spectral, poly))
    });
    let mut spectral = Vec::new();
    let mut points = Vec::new();
    for (&n, res) in cfg.sweep.patches.iter().zip(per_n) {
        let (s, poly) = res.map_err(&ctx)?;
        spectral.push((n, s));
        for (&order, p) in cfg.sweep.orders.iter().zip(poly) {
            for (branch, value, reference) in [
                (Branch::Compression, p.compression, s.compression),
                (Branch::Bending, p.bending, s.bending),
            ] {
                points.push(ConvergencePoint {
                    order,
                    patches: n,
                    branch,
                    value,
                    reference,
                    rel_error: (value - reference).norm() / reference.norm(),
                });
            }
        }
    }
    let mut fits = Vec::new();
    for &order in &cfg.sweep.orders {
        for branch in [Branch::Compression, Branch::Bending] {
            let (xs, ys): (Vec<f64>, Vec<f64>) = points
                .iter()
                .filter(|p| p.order == order && p.branch == branch)
                .map(|p| (p.patches as f64, p.rel_error))
                .unzip();
            fits.push(SlopeFit {
                order,
                branch,
                slope: loglog_slope(&xs, &ys),
            });
        }
    }
    Ok(ConvergenceResult { spectral, points, fits })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionRow {
    pub inclusion_youngs: f64,
    pub compression: Complex64,
    pub bending: Complex64,
    /// Largest real part over the whole spectrum.
    pub max_real: f64,
    pub zero_count: usize,
}

#[derive(Debug, Clone)]
pub struct InclusionResult {
    pub rows: Vec<InclusionRow>,
}

pub fn run_inclusions(cfg: &ScenarioConfig) -> Result<InclusionResult> {
    let base = MaterialSource::from_config(cfg, &cfg.grid()?)?;
    let th = Thresholds::from(&cfg.spectrum);
    let kappa = cfg.dynamics.kappa;
    let rows = parallel_map(&cfg.sweep.inclusion_youngs, |&e| -> Result<InclusionRow> {
        let net = periodic_network(cfg, cfg.geometry.patches, cfg.coupling.mode(), &base.with_inclusion_youngs(e))?;
        let pair = bloch_macro_pair(&net, kappa, &th)?;
        let full = network_spectrum(&net, kappa, &th, false)?;
        Ok(InclusionRow {
            inclusion_youngs: e,
            compression: pair.compression,
            bending: pair.bending,
            max_real: full.spectrum.max_real(),
            zero_count: full.spectrum.count_near_zero(th.zero_tol),
        })
    });
    let rows = rows
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .map_err(in_context(cfg.scenario, "eigen-analysis"))?;
    Ok(InclusionResult { rows })
}

#[derive(Debug, Clone)]
pub struct EquilibriumCase {
    pub order: usize,
    pub patches: usize,
    pub stats: Vec<PatchStats>,
    pub iterations: usize,
    pub preconditioned: bool,
    /// `‖J q* + F‖ / ‖F‖` on the full state.
    pub residual: f64,
    /// Against the full-domain reference, when one was computed.
    pub error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    /// `(x, ū)` at the `u` columns and `(x, v̄)` at the `v` columns.
    pub ubar: Vec<(f64, f64)>,
    pub vbar: Vec<(f64, f64)>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub cases: Vec<EquilibriumCase>,
    /// `(P, N)` pairs with too few patches for the stencil.
    pub skipped: Vec<(usize, usize)>,
    pub reference: Option<ReferenceSolution>,
}

impl EquilibriumResult {
    pub fn error(&self, order: usize, patches: usize) -> Option<f64> {
        self.cases
            .iter()
            .find(|c| c.order == order && c.patches == patches)
            .and_then(|c| c.error)
    }
}

fn krylov_options(cfg: &ScenarioConfig) -> KrylovOptions {
    KrylovOptions {
        rel_tol: cfg.equilibrium.rel_tol,
        max_iter: cfg.equilibrium.max_iter,
        fill_level: cfg.equilibrium.fill_level,
    }
}

fn macro_bc(cfg: &ScenarioConfig) -> MacroBc {
    match cfg.equilibrium.boundary {
        Boundary::FixedFixed => MacroBc::FixedFixed,
        Boundary::FixedFree => MacroBc::FixedFree,
    }
}

/// One patch spanning the whole beam on the patch micro-grid.
fn full_network(cfg: &ScenarioConfig, material: &MaterialSource) -> Result<PatchNetwork> {
    let g = cfg.grid()?;
    let cells = (cfg.geometry.length / g.dx).round() as usize;
    let gf = MicroGridSpec::new(cells - 1, g.ny, g.dx, g.dy)?;
    PatchNetwork::full_domain(gf, cfg.geometry.length, macro_bc(cfg), material.field(&gf)?)
}

fn solve_reference(cfg: &ScenarioConfig, material: &MaterialSource) -> Result<(PatchNetwork, Vec<f64>, ReferenceSolution)> {
    let (fx, fy) = cfg.forcing_exprs()?;
    let full = full_network(cfg, material)?;
    let forces = full.sample_forces(|x, y| fx.eval(x, y), |x, y| fy.eval(x, y));
    let (q, sol, residual) = full.static_equilibrium(&forces, &krylov_options(cfg))?;
    let f = full.unpack(&q)?.remove(0);
    let g = &full.grid;
    let xc = full.centres()[0];
    let mean = |col: ndarray::ArrayView1<f64>| col.sum() / col.len() as f64;
    let ubar = (1..=g.nx)
        .map(|a| (xc + g.u_col_x(a), mean(f.u.row(a).slice(ndarray::s![1..g.ny]))))
        .collect();
    let vbar = (0..=g.nx + 1).map(|b| (xc + g.v_col_x(b), mean(f.v.row(b)))).collect();
    Ok((
        full,
        q,
        ReferenceSolution {
            ubar,
            vbar,
            iterations: sol.iterations,
            residual,
        },
    ))
}

pub fn run_equilibrium(cfg: &ScenarioConfig) -> Result<EquilibriumResult> {
    let grid = cfg.grid()?;
    let material = MaterialSource::from_config(cfg, &grid)?;
    let (fx, fy) = cfg.forcing_exprs()?;
    let reference = if cfg.equilibrium.reference {
        Some(solve_reference(cfg, &material).map_err(in_context(cfg.scenario, "full-domain reference"))?)
    } else {
        None
    };
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for &order in &cfg.sweep.orders {
        for &n in &cfg.sweep.patches {
            if n > order {
                jobs.push((order, n));
            } else {
                skipped.push((order, n));
            }
        }
    }
    if jobs.is_empty() {
        return Err(Error::config("sweep.patches", "no patch count is large enough for any order"));
    }
    let field = material.field(&grid)?;
    let cases = parallel_map(&jobs, |&(order, n)| -> Result<EquilibriumCase> {
        let net = PatchNetwork::bounded(
            grid,
            n,
            cfg.geometry.length,
            CouplingMode::Polynomial { order },
            macro_bc(cfg),
            vec![field.clone(); n],
        )?;
        let forces = net.sample_forces(|x, y| fx.eval(x, y), |x, y| fy.eval(x, y));
        let (q, sol, residual) = net.static_equilibrium(&forces, &krylov_options(cfg))?;
        let error = match &reference {
            Some((full, qf, _)) => Some(footprint_error(&net, &q, full, qf)?),
            None => None,
        };
        Ok(EquilibriumCase {
            order,
            patches: n,
            stats: net.patch_stats(&q)?,
            iterations: sol.iterations,
            preconditioned: sol.preconditioned,
            residual,
            error,
        })
    });
    let cases = cases
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .map_err(in_context(cfg.scenario, "patch equilibrium"))?;
    Ok(EquilibriumResult {
        cases,
        skipped,
        reference: reference.map(|r| r.2),
    })
}

pub fn run_full_reference(cfg: &ScenarioConfig) -> Result<ReferenceSolution> {
    let material = MaterialSource::from_config(cfg, &cfg.grid()?)?;
    solve_reference(cfg, &material)
        .map(|r| r.2)
        .map_err(in_context(cfg.scenario, "full-domain reference"))
}

fn trajectory_table(d: &DynamicsResult) -> CsvTable {
    let mut t = CsvTable::new("trajectory", &TRAJECTORY_HEADER);
    for (time, stats) in d.times.iter().zip(&d.stats) {
        for (p, s) in stats.iter().enumerate() {
            let mut row = vec![fmt_num(*time), p.to_string()];
            row.extend(nums(&[s.x, s.ubar, s.vbar, s.ustd, s.vstd]));
            t.push(row);
        }
    }
    t
}

fn periods_table(d: &DynamicsResult) -> CsvTable {
    let mut t = CsvTable::new("periods", &["component", "projection", "period", "crossings"]);
    for e in [&d.compression, &d.bending].into_iter().flatten() {
        t.push(vec![e.component.into(), e.projection.into(), fmt_num(e.period), e.crossings.to_string()]);
    }
    t
}

fn dynamics_plot(d: &DynamicsResult, length: f64) -> Plot {
    let proj = |pick: fn(&PatchStats) -> f64, sin: bool| -> Vec<(f64, f64)> {
        d.times
            .iter()
            .zip(&d.stats)
            .map(|(&t, s)| {
                let (a, b) = fourier_projection(s, length, pick);
                (t, if sin { a } else { b })
            })
            .collect()
    };
    Plot::new("trajectory", "cross-beam means projected on sin x and cos x", "t", "amplitude")
        .line("ubar · sin", proj(|s| s.ubar, true))
        .line("vbar · cos", proj(|s| s.vbar, false))
}

fn spectrum_tables(s: &SpectrumResult) -> Vec<CsvTable> {
    let mut all = CsvTable::new("spectrum", &SPECTRUM_HEADER);
    for r in &s.rows {
        all.push(vec![
            fmt_num(r.value.re),
            fmt_num(r.value.im),
            r.class.as_str().into(),
            r.branch.as_str().into(),
            fmt_num(r.residual),
        ]);
    }
    let mut rep = CsvTable::new("branches", &["branch", "wavenumber", "re", "im"]);
    for r in &s.report {
        rep.push(vec![
            r.branch.as_str().into(),
            r.wavenumber.map_or_else(String::new, |k| k.to_string()),
            fmt_num(r.value.re),
            fmt_num(r.value.im),
        ]);
    }
    vec![all, rep]
}

fn spectrum_plots(s: &SpectrumResult, band: f64) -> Vec<Plot> {
    let pts = |keep: &dyn Fn(&SpectrumRow) -> bool| -> Vec<(f64, f64)> {
        s.rows.iter().filter(|r| keep(r)).map(|r| (r.value.re, r.value.im)).collect()
    };
    vec![
        Plot::new("spectrum", "Jacobian eigenvalues", "Re λ", "Im λ").scatter("all", pts(&|_| true)),
        Plot::new("spectrum_macro", "macroscale band", "Re λ", "Im λ")
            .scatter("compression", pts(&|r| r.branch == Branch::Compression))
            .scatter("bending", pts(&|r| r.branch == Branch::Bending))
            .scatter("other", pts(&|r| {
                r.value.im.abs() < band && r.branch != Branch::Compression && r.branch != Branch::Bending
            })),
    ]
}

fn spectrum_summary(s: &SpectrumResult, summary: &mut Vec<(String, String)>) {
    summary.push(("eigenvalues".into(), s.spectrum.values.len().to_string()));
    summary.push(("max_real".into(), fmt_num(s.spectrum.max_real())));
    summary.push(("max_abs_real".into(), fmt_num(s.spectrum.max_abs_real())));
    let zeros = s.rows.iter().filter(|r| r.branch == Branch::Rigid).count();
    summary.push(("zero_eigenvalues".into(), zeros.to_string()));
    for b in [Branch::Compression, Branch::Bending] {
        if let Some(v) = s.first(b) {
            summary.push((format!("{}_re", b.as_str()), fmt_num(v.re)));
            summary.push((format!("{}_im", b.as_str()), fmt_num(v.im)));
        }
    }
    let worst = s.spectrum.residuals.iter().copied().fold(0.0, f64::max);
    summary.push(("max_residual".into(), fmt_num(worst)));
    summary.push(("pairing_defect".into(), fmt_num(s.pairing_defect)));
    summary.push(("deflation_defect".into(), fmt_num(s.deflation_defect)));
}

fn dynamics_summary(d: &DynamicsResult, summary: &mut Vec<(String, String)>) {
    summary.push(("samples".into(), d.times.len().to_string()));
    summary.push(("accepted_steps".into(), d.accepted_steps.to_string()));
    summary.push(("rejected_steps".into(), d.rejected_steps.to_string()));
    for (k, e) in [("compression_period", &d.compression), ("bending_period", &d.bending)] {
        summary.push((k.into(), e.as_ref().map_or_else(|| "undetermined".into(), |e| fmt_num(e.period))));
    }
}

fn equilibrium_tables(r: &EquilibriumResult) -> (Vec<CsvTable>, Vec<Plot>) {
    let mut errors = CsvTable::new("errors", &["order", "patches", "rel_error", "iterations", "residual"]);
    let mut deflection = CsvTable::new("deflection", &["order", "patches", "patch", "x", "ubar", "vbar"]);
    let mut plot = Plot::new("deflection", "equilibrium cross-beam mean deflection", "x", "vbar");
    for c in &r.cases {
        errors.push(vec![
            c.order.to_string(),
            c.patches.to_string(),
            c.error.map_or_else(String::new, fmt_num),
            c.iterations.to_string(),
            fmt_num(c.residual),
        ]);
        for (p, s) in c.stats.iter().enumerate() {
            let mut row = vec![c.order.to_string(), c.patches.to_string(), p.to_string()];
            row.extend(nums(&[s.x, s.ubar, s.vbar]));
            deflection.push(row);
        }
        plot = plot.scatter(
            &format!("P={} N={}", c.order, c.patches),
            c.stats.iter().map(|s| (s.x, s.vbar)).collect(),
        );
    }
    for &(order, n) in &r.skipped {
        errors.push(vec![order.to_string(), n.to_string(), String::new(), String::new(), String::new()]);
    }
    let mut tables = vec![errors, deflection];
    let mut plots = vec![];
    if let Some(reference) = &r.reference {
        tables.push(reference_table(reference));
        plot = plot.line("full domain", reference.vbar.clone());
    }
    plots.push(plot);
    if r.cases.iter().any(|c| c.error.is_some()) {
        let mut ep = Plot::new("errors", "relative mean-absolute error", "N", "error").logs(true, true);
        let mut orders: Vec<usize> = r.cases.iter().map(|c| c.order).collect();
        orders.dedup();
        for order in orders {
            let pts = r
                .cases
                .iter()
                .filter(|c| c.order == order)
                .filter_map(|c| c.error.map(|e| (c.patches as f64, e)))
                .collect();
            ep = ep.line(&format!("P={order}"), pts);
        }
        plots.push(ep);
    }
    (tables, plots)
}

fn reference_table(r: &ReferenceSolution) -> CsvTable {
    let mut t = CsvTable::new("reference", &["component", "x", "mean"]);
    for &(x, u) in &r.ubar {
        t.push(vec!["ubar".into(), fmt_num(x), fmt_num(u)]);
    }
    for &(x, v) in &r.vbar {
        t.push(vec!["vbar".into(), fmt_num(x), fmt_num(v)]);
    }
    t
}

/// Run the configured scenario and collect its outputs.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ResultBundle> {
    cfg.validate()?;
    let start = Instant::now();
    let mut tables = Vec::new();
    let mut plots = Vec::new();
    let mut summary = Vec::new();
    match cfg.scenario {
        Scenario::PeriodicDynamics => {
            let d = run_dynamics(cfg)?;
            tables.push(trajectory_table(&d));
            tables.push(periods_table(&d));
            plots.push(dynamics_plot(&d, cfg.geometry.length));
            dynamics_summary(&d, &mut summary);
        }
        Scenario::Spectrum => {
            let s = run_spectrum(cfg)?;
            tables.extend(spectrum_tables(&s));
            plots.extend(spectrum_plots(&s, cfg.spectrum.macro_band));
            spectrum_summary(&s, &mut summary);
        }
        Scenario::Undamped => {
            let s = run_spectrum(cfg)?;
            tables.extend(spectrum_tables(&s));
            plots.extend(spectrum_plots(&s, cfg.spectrum.macro_band));
            spectrum_summary(&s, &mut summary);
            if cfg.dynamics.t_end > 0.0 {
                let d = run_dynamics(cfg)?;
                tables.push(trajectory_table(&d));
                tables.push(periods_table(&d));
                plots.push(dynamics_plot(&d, cfg.geometry.length));
                dynamics_summary(&d, &mut summary);
            }
        }
        Scenario::ConvergenceStudy => {
            let c = run_convergence(cfg)?;
            let mut t = CsvTable::new(
                "convergence",
                &["order", "patches", "branch", "re", "im", "spectral_re", "spectral_im", "rel_error"],
            );
            for p in &c.points {
                let mut row = vec![p.order.to_string(), p.patches.to_string(), p.branch.as_str().into()];
                row.extend(nums(&[p.value.re, p.value.im, p.reference.re, p.reference.im, p.rel_error]));
                t.push(row);
            }
            let mut f = CsvTable::new("fits", &["order", "branch", "slope"]);
            let mut plot = Plot::new("convergence", "polynomial vs spectral coupling", "N", "relative error").logs(true, true);
            for fit in &c.fits {
                f.push(vec![
                    fit.order.to_string(),
                    fit.branch.as_str().into(),
                    fit.slope.map_or_else(String::new, fmt_num),
                ]);
                summary.push((
                    format!("slope_p{}_{}", fit.order, fit.branch.as_str()),
                    fit.slope.map_or_else(|| "undetermined".into(), fmt_num),
                ));
                let pts = c
                    .points
                    .iter()
                    .filter(|p| p.order == fit.order && p.branch == fit.branch)
                    .map(|p| (p.patches as f64, p.rel_error))
                    .collect();
                plot = plot.line(&format!("P={} {}", fit.order, fit.branch.as_str()), pts);
            }
            let mut s = CsvTable::new("spectral", &["patches", "branch", "re", "im"]);
            for (n, pair) in &c.spectral {
                for (b, v) in [(Branch::Compression, pair.compression), (Branch::Bending, pair.bending)] {
                    let mut row = vec![n.to_string(), b.as_str().into()];
                    row.extend(nums(&[v.re, v.im]));
                    s.push(row);
                }
            }
            tables.extend([t, f, s]);
            plots.push(plot);
        }
        Scenario::Inclusions => {
            let r = run_inclusions(cfg)?;
            let mut t = CsvTable::new("inclusion_branches", &["inclusion_youngs", "branch", "re", "im"]);
            let mut st = CsvTable::new("stability", &["inclusion_youngs", "max_real", "zero_eigenvalues"]);
            for row in &r.rows {
                for (b, v) in [(Branch::Compression, row.compression), (Branch::Bending, row.bending)] {
                    t.push(vec![fmt_num(row.inclusion_youngs), b.as_str().into(), fmt_num(v.re), fmt_num(v.im)]);
                }
                st.push(vec![fmt_num(row.inclusion_youngs), fmt_num(row.max_real), row.zero_count.to_string()]);
            }
            let max_re = r.rows.iter().map(|r| r.max_real).fold(f64::NEG_INFINITY, f64::max);
            summary.push(("max_real".into(), fmt_num(max_re)));
            plots.push(
                Plot::new("inclusion_branches", "first compression and bending frequencies", "inclusion Young's modulus", "Im λ")
                    .logs(true, false)
                    .line("compression", r.rows.iter().map(|r| (r.inclusion_youngs, r.compression.im)).collect())
                    .line("bending", r.rows.iter().map(|r| (r.inclusion_youngs, r.bending.im)).collect()),
            );
            tables.extend([t, st]);
        }
        Scenario::FixedFixedEquilibrium | Scenario::FixedFreeEquilibrium => {
            let r = run_equilibrium(cfg)?;
            for c in &r.cases {
                if let Some(e) = c.error {
                    summary.push((format!("error_p{}_n{}", c.order, c.patches), fmt_num(e)));
                }
            }
            let tip = r.cases.last().and_then(|c| c.stats.last()).map(|s| s.vbar);
            if let Some(v) = tip {
                summary.push(("last_patch_vbar".into(), fmt_num(v)));
            }
            let (t, p) = equilibrium_tables(&r);
            tables.extend(t);
            plots.extend(p);
        }
        Scenario::FullDomainReference => {
            let r = run_full_reference(cfg)?;
            summary.push(("iterations".into(), r.iterations.to_string()));
            summary.push(("residual".into(), fmt_num(r.residual)));
            let peak = r.vbar.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
            summary.push(("max_abs_vbar".into(), fmt_num(peak)));
            plots.push(Plot::new("reference", "full-domain equilibrium", "x", "vbar").line("vbar", r.vbar.clone()));
            tables.push(reference_table(&r));
        }
    }
    Ok(ResultBundle {
        config: cfg.clone(),
        tables,
        plots,
        summary,
        wall_time: start.elapsed(),
    })
}
