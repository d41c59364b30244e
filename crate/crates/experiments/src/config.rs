//! Scenario configuration: TOML files layered over per-scenario defaults.
//!
//! Loading goes file → `--override key=value` pairs → merge onto the
//! defaults of the named scenario → typed struct → [`ScenarioConfig::validate`].
//! Every rejection names the dotted key path it concerns.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::expr::Expr;
use patchbeam::coupling::CouplingMode;
use patchbeam::micro::MicroGridSpec;
use patchbeam::network::MacroBc;
use patchbeam::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    PeriodicDynamics,
    Spectrum,
    ConvergenceStudy,
    Undamped,
    Inclusions,
    FixedFixedEquilibrium,
    FixedFreeEquilibrium,
    FullDomainReference,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::PeriodicDynamics,
        Scenario::Spectrum,
        Scenario::ConvergenceStudy,
        Scenario::Undamped,
        Scenario::Inclusions,
        Scenario::FixedFixedEquilibrium,
        Scenario::FixedFreeEquilibrium,
        Scenario::FullDomainReference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::PeriodicDynamics => "periodic-dynamics",
            Scenario::Spectrum => "spectrum",
            Scenario::ConvergenceStudy => "convergence-study",
            Scenario::Undamped => "undamped",
            Scenario::Inclusions => "inclusions",
            Scenario::FixedFixedEquilibrium => "fixed-fixed-equilibrium",
            Scenario::FixedFreeEquilibrium => "fixed-free-equilibrium",
            Scenario::FullDomainReference => "full-domain-reference",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Scenario::PeriodicDynamics => "vibrations of a 2π-periodic heterogeneous beam from a sin/cos initial deformation",
            Scenario::Spectrum => "Jacobian eigenvalues with macroscale compression/bending branch labels",
            Scenario::ConvergenceStudy => "polynomial vs spectral coupling error of macroscale eigenvalues against N",
            Scenario::Undamped => "spectrum and vibrations of the undamped heterogeneous beam",
            Scenario::Inclusions => "macroscale eigenvalues of a composite beam with soft inclusions",
            Scenario::FixedFixedEquilibrium => "loaded fixed-fixed beam: patch equilibria against a full-domain reference",
            Scenario::FixedFreeEquilibrium => "loaded cantilever (fixed-free) beam equilibrium",
            Scenario::FullDomainReference => "equilibrium of the full microscale beam without patches",
        }
    }

    /// Periodic-domain scenarios; the rest have physical end conditions.
    pub fn is_periodic(self) -> bool {
        matches!(
            self,
            Scenario::PeriodicDynamics
                | Scenario::Spectrum
                | Scenario::ConvergenceStudy
                | Scenario::Undamped
                | Scenario::Inclusions
        )
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| {
            let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
            Error::config("scenario", format!("unknown scenario `{s}`, expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaterialKind {
    Homogeneous,
    Random,
    Inclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YoungsLawKind {
    LogUniform,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    Spectral,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    FixedFixed,
    FixedFree,
}

impl From<Boundary> for MacroBc {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::FixedFixed => MacroBc::FixedFixed,
            Boundary::FixedFree => MacroBc::FixedFree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Beam length `L`.
    pub length: f64,
    /// Beam width `W`; must equal `(ny-1)·dy`.
    pub width: f64,
    /// Number of patches `N` (sweeps override it per point).
    pub patches: usize,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub kind: MaterialKind,
    /// Homogeneous modulus, or the matrix modulus around inclusions.
    pub youngs: f64,
    pub poisson: f64,
    pub youngs_law: YoungsLawKind,
    /// Interval for `log E` when `youngs_law = "log-uniform"`.
    pub log_youngs_range: [f64; 2],
    /// Interval for `E` when `youngs_law = "uniform"`.
    pub youngs_range: [f64; 2],
    pub poisson_range: [f64; 2],
    /// Heterogeneity period along the beam; a whole number of cells.
    pub period: f64,
    pub inclusion_youngs: f64,
    pub inclusion_poisson: f64,
    pub inclusion_length_cells: usize,
    pub inclusion_width_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub mode: CouplingKind,
    /// Polynomial order `P` (even); ignored for spectral coupling.
    pub order: usize,
}

impl CouplingConfig {
    pub fn mode(&self) -> CouplingMode {
        match self.mode {
            CouplingKind::Spectral => CouplingMode::Spectral,
            CouplingKind::Polynomial => CouplingMode::Polynomial { order: self.order },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub kappa: f64,
    /// Final simulation time; 0 skips time integration where it is optional.
    pub t_end: f64,
    pub sample_interval: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub fx: String,
    pub fy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub u: String,
    pub v: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Eigenvalues with `|Im λ|` below this are macroscale.
    pub macro_band: f64,
    /// Eigenvalues with `|λ|` below this count as zero (rigid-body).
    pub zero_tol: f64,
    /// A branch label needs its mean component this many times the other.
    pub dominance: f64,
    /// Minimum cross-beam mean amplitude, relative to the mode's rms, for a
    /// macroscale branch label.
    pub min_mean_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub patches: Vec<usize>,
    pub orders: Vec<usize>,
    pub inclusion_youngs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub boundary: Boundary,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// ILU level of fill for the preconditioner (0 keeps the pattern of `J`).
    pub fill_level: usize,
    /// Also solve the full microscale beam and tabulate patch errors.
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub geometry: Geometry,
    pub material: MaterialConfig,
    pub coupling: CouplingConfig,
    pub dynamics: DynamicsConfig,
    pub forcing: ForcingConfig,
    pub initial: InitialConfig,
    pub spectrum: SpectrumConfig,
    pub sweep: SweepConfig,
    pub equilibrium: EquilibriumConfig,
    pub output: OutputConfig,
}

/// TOML integers are signed 64-bit; seeds above `i64::MAX` travel as strings.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v).map_err(|_| de::Error::custom("seed must be non-negative")),
            Repr::Str(s) => s.parse().map_err(|_| de::Error::custom(format!("invalid seed `{s}`"))),
        }
    }
}

impl ScenarioConfig {
    /// Defaults matching the published experiment for each scenario.
    pub fn defaults(scenario: Scenario) -> ScenarioConfig {
        let base = ScenarioConfig {
            scenario,
            seed: 1,
            geometry: Geometry {
                length: 2.0 * PI,
                width: 0.4,
                patches: 7,
                nx: 5,
                ny: 9,
                dx: 0.05,
                dy: 0.05,
            },
            material: MaterialConfig {
                kind: MaterialKind::Random,
                youngs: 1.0,
                poisson: 0.3,
                youngs_law: YoungsLawKind::LogUniform,
                log_youngs_range: [-1.0, 1.0],
                youngs_range: [0.6, 1.6],
                poisson_range: [0.2, 0.4],
                period: 0.25,
                inclusion_youngs: 0.1,
                inclusion_poisson: 0.3,
                inclusion_length_cells: 4,
                inclusion_width_cells: 2,
            },
            coupling: CouplingConfig {
                mode: CouplingKind::Spectral,
                order: 4,
            },
            dynamics: DynamicsConfig {
                kappa: 1e-3,
                t_end: 0.0,
                sample_interval: 0.1,
                rel_tol: 1e-6,
                abs_tol: 1e-9,
            },
            forcing: ForcingConfig {
                fx: "0".into(),
                fy: "0".into(),
            },
            initial: InitialConfig {
                u: "0".into(),
                v: "0".into(),
            },
            spectrum: SpectrumConfig {
                macro_band: 3.0,
                zero_tol: 1e-6,
                dominance: 2.0,
                min_mean_fraction: 0.3,
            },
            sweep: SweepConfig {
                patches: vec![7],
                orders: vec![4],
                inclusion_youngs: vec![1.0],
            },
            equilibrium: EquilibriumConfig {
                boundary: Boundary::FixedFixed,
                rel_tol: 1e-9,
                max_iter: 20_000,
                fill_level: 0,
                reference: true,
            },
            output: OutputConfig {
                dir: format!("results/{}", scenario.name()),
                svg: true,
            },
        };
        match scenario {
            Scenario::PeriodicDynamics => ScenarioConfig {
                dynamics: DynamicsConfig {
                    t_end: 100.0,
                    ..base.dynamics
                },
                initial: InitialConfig {
                    u: "0.2*sin(x) + 0.2*y".into(),
                    v: "0.2*cos(x) + 0.2*y".into(),
                },
                ..base
            },
            Scenario::Spectrum => base,
            Scenario::ConvergenceStudy => ScenarioConfig {
                geometry: Geometry {
                    width: 0.2,
                    dx: PI / 200.0,
                    dy: 0.025,
                    ..base.geometry
                },
                material: MaterialConfig {
                    kind: MaterialKind::Homogeneous,
                    period: PI / 40.0,
                    ..base.material
                },
                sweep: SweepConfig {
                    patches: vec![5, 10, 20, 40],
                    orders: vec![4, 6, 8],
                    ..base.sweep
                },
                ..base
            },
            Scenario::Undamped => ScenarioConfig {
                geometry: Geometry {
                    width: 0.2,
                    dx: 0.025,
                    dy: 0.025,
                    ..base.geometry
                },
                material: MaterialConfig {
                    period: 0.125,
                    ..base.material
                },
                dynamics: DynamicsConfig {
                    kappa: 0.0,
                    t_end: 30.0,
                    ..base.dynamics
                },
                initial: InitialConfig {
                    u: "0.2*sin(x) + 0.2*y".into(),
                    v: "0.2*cos(x) + 0.2*y".into(),
                },
                ..base
            },
            Scenario::Inclusions => ScenarioConfig {
                geometry: Geometry {
                    width: 0.2,
                    nx: 9,
                    ny: 7,
                    dx: 0.025,
                    dy: 0.2 / 6.0,
                    ..base.geometry
                },
                material: MaterialConfig {
                    kind: MaterialKind::Inclusion,
                    ..base.material
                },
                sweep: SweepConfig {
                    inclusion_youngs: vec![1.0, 0.1, 0.01, 0.001],
                    ..base.sweep
                },
                ..base
            },
            Scenario::FixedFixedEquilibrium | Scenario::FullDomainReference => ScenarioConfig {
                geometry: Geometry {
                    length: 1.0,
                    width: 0.02,
                    patches: 9,
                    nx: 6,
                    ny: 5,
                    dx: 1.0 / 199.0,
                    dy: 0.005,
                },
                material: MaterialConfig {
                    youngs_law: YoungsLawKind::Uniform,
                    period: 6.0 / 199.0,
                    ..base.material
                },
                coupling: CouplingConfig {
                    mode: CouplingKind::Polynomial,
                    order: 6,
                },
                dynamics: DynamicsConfig {
                    kappa: 0.0,
                    ..base.dynamics
                },
                forcing: ForcingConfig {
                    fx: "0".into(),
                    fy: "exp(2*x)*sin(x)/1000".into(),
                },
                sweep: SweepConfig {
                    patches: vec![5, 9, 17],
                    orders: vec![4, 6, 8],
                    ..base.sweep
                },
                equilibrium: EquilibriumConfig {
                    fill_level: 12,
                    ..base.equilibrium
                },
                ..base
            },
            Scenario::FixedFreeEquilibrium => ScenarioConfig {
                geometry: Geometry {
                    length: 1.0,
                    width: 0.125,
                    patches: 5,
                    nx: 20,
                    ny: 101,
                    dx: 0.00125,
                    dy: 0.00125,
                },
                material: MaterialConfig {
                    period: 0.025,
                    ..base.material
                },
                coupling: CouplingConfig {
                    mode: CouplingKind::Polynomial,
                    order: 4,
                },
                dynamics: DynamicsConfig {
                    kappa: 0.0,
                    ..base.dynamics
                },
                forcing: ForcingConfig {
                    fx: "0".into(),
                    fy: "1e-3".into(),
                },
                sweep: SweepConfig {
                    patches: vec![5],
                    orders: vec![4],
                    ..base.sweep
                },
                equilibrium: EquilibriumConfig {
                    boundary: Boundary::FixedFree,
                    reference: false,
                    // Internal forces exceed the load by ~1e9 here, so the
                    // double-precision residual floor sits near 1e-8.
                    rel_tol: 1e-7,
                    fill_level: 4,
                    ..base.equilibrium
                },
                ..base
            },
        }
    }

    /// Parse a TOML document, apply `key=value` overrides, and merge onto the
    /// defaults of the scenario it names.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
        let mut user: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(format!("invalid TOML: {}", e.message())))?;
        for (key, value) in overrides {
            set_path(&mut user, key, parse_override_value(value))?;
        }
        let name = match user.get("scenario") {
            Some(Value::String(s)) => s.clone(),
            Some(other) => {
                return Err(Error::config(
                    "scenario",
                    format!("expected string, found {}", other.type_str()),
                ))
            }
            None => return Err(Error::config("scenario", "missing required key")),
        };
        let scenario: Scenario = name.parse()?;
        let mut merged = Table::try_from(ScenarioConfig::defaults(scenario))
            .map_err(|e| Error::Parse(format!("cannot serialise defaults: {e}")))?;
        merge(&mut merged, &user, "")?;
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(merged).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("cannot serialise config: {e}")))
    }

    pub fn grid(&self) -> Result<MicroGridSpec> {
        let g = &self.geometry;
        MicroGridSpec::new(g.nx, g.ny, g.dx, g.dy).map_err(|e| Error::config("geometry", e.to_string()))
    }

    /// Patch counts used by this scenario: the sweep where one applies.
    pub fn patch_counts(&self) -> Vec<usize> {
        match self.scenario {
            Scenario::ConvergenceStudy | Scenario::FixedFixedEquilibrium | Scenario::FixedFreeEquilibrium => {
                self.sweep.patches.clone()
            }
            _ => vec![self.geometry.patches],
        }
    }

    pub fn forcing_exprs(&self) -> Result<(Expr, Expr)> {
        Ok((
            parse_field("forcing.fx", &self.forcing.fx)?,
            parse_field("forcing.fy", &self.forcing.fy)?,
        ))
    }

    pub fn initial_exprs(&self) -> Result<(Expr, Expr)> {
        Ok((
            parse_field("initial.u", &self.initial.u)?,
            parse_field("initial.v", &self.initial.v)?,
        ))
    }

    /// Internal consistency, reported against the offending key.
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        positive("geometry.length", g.length)?;
        positive("geometry.dx", g.dx)?;
        positive("geometry.dy", g.dy)?;
        positive("geometry.width", g.width)?;
        if g.nx < 3 {
            return Err(Error::config("geometry.nx", format!("must be at least 3, got {}", g.nx)));
        }
        if g.ny < 4 {
            return Err(Error::config("geometry.ny", format!("must be at least 4, got {}", g.ny)));
        }
        let w = (g.ny - 1) as f64 * g.dy;
        if (w - g.width).abs() > 1e-9 * g.width {
            return Err(Error::config(
                "geometry.width",
                format!("{} disagrees with (ny-1)·dy = {w}", g.width),
            ));
        }
        let grid = self.grid()?;
        let h = grid.patch_length();
        let span = grid.edge_span();
        let counts = self.patch_counts();
        let count_key = if counts.len() == 1 && counts[0] == g.patches {
            "geometry.patches"
        } else {
            "sweep.patches"
        };
        if counts.is_empty() {
            return Err(Error::config(count_key, "needs at least one patch count"));
        }
        for &n in &counts {
            if n < 3 {
                return Err(Error::config(count_key, format!("need at least 3 patches, got {n}")));
            }
            let spacing = if self.scenario.is_periodic() {
                g.length / n as f64
            } else {
                (g.length - span) / (n - 1) as f64
            };
            if h >= spacing || span > spacing * (1.0 + 1e-12) {
                return Err(Error::config(
                    count_key,
                    format!("{n} patches of length {h} do not fit: spacing H = {spacing} (need h/H < 1 and no overlap)"),
                ));
            }
        }

        self.validate_material(&grid)?;

        let c = &self.coupling;
        let orders: Vec<usize> = match self.scenario {
            Scenario::ConvergenceStudy | Scenario::FixedFixedEquilibrium | Scenario::FixedFreeEquilibrium => {
                self.sweep.orders.clone()
            }
            _ => vec![c.order],
        };
        let order_key = if matches!(
            self.scenario,
            Scenario::ConvergenceStudy | Scenario::FixedFixedEquilibrium | Scenario::FixedFreeEquilibrium
        ) {
            "sweep.orders"
        } else {
            "coupling.order"
        };
        if orders.is_empty() {
            return Err(Error::config(order_key, "needs at least one order"));
        }
        let needs_poly = self.scenario == Scenario::ConvergenceStudy || !self.scenario.is_periodic();
        if needs_poly || c.mode == CouplingKind::Polynomial {
            for &p in &orders {
                if p < 2 || p % 2 != 0 {
                    return Err(Error::config(order_key, format!("order must be even and at least 2, got {p}")));
                }
            }
            if !self.scenario.is_periodic() && !orders.iter().any(|&p| counts.iter().any(|&n| n > p)) {
                return Err(Error::config(
                    order_key,
                    "every order needs more patches than its value; no (order, patches) pair is usable",
                ));
            }
        }
        if !self.scenario.is_periodic() && c.mode == CouplingKind::Spectral {
            return Err(Error::config("coupling.mode", "spectral coupling needs a periodic beam"));
        }

        let d = &self.dynamics;
        if !(d.kappa >= 0.0 && d.kappa.is_finite()) {
            return Err(Error::config("dynamics.kappa", format!("must be non-negative, got {}", d.kappa)));
        }
        if !(d.t_end >= 0.0 && d.t_end.is_finite()) {
            return Err(Error::config("dynamics.t_end", format!("must be non-negative, got {}", d.t_end)));
        }
        if self.scenario == Scenario::PeriodicDynamics && d.t_end == 0.0 {
            return Err(Error::config("dynamics.t_end", "must be positive for a dynamics run"));
        }
        positive("dynamics.sample_interval", d.sample_interval)?;
        positive("dynamics.rel_tol", d.rel_tol)?;
        positive("dynamics.abs_tol", d.abs_tol)?;
        if d.t_end / d.sample_interval > 1e6 {
            return Err(Error::config("dynamics.sample_interval", "more than 10^6 samples requested"));
        }

        self.forcing_exprs()?;
        self.initial_exprs()?;

        let s = &self.spectrum;
        positive("spectrum.macro_band", s.macro_band)?;
        positive("spectrum.zero_tol", s.zero_tol)?;
        if !(s.dominance >= 1.0) {
            return Err(Error::config("spectrum.dominance", format!("must be at least 1, got {}", s.dominance)));
        }
        if !(s.min_mean_fraction >= 0.0 && s.min_mean_fraction <= 1.0) {
            return Err(Error::config("spectrum.min_mean_fraction", "must lie in [0, 1]"));
        }

        if self.scenario == Scenario::Inclusions {
            if self.sweep.inclusion_youngs.is_empty() {
                return Err(Error::config("sweep.inclusion_youngs", "needs at least one value"));
            }
            for &e in &self.sweep.inclusion_youngs {
                if !(e > 0.0 && e.is_finite()) {
                    return Err(Error::config("sweep.inclusion_youngs", format!("moduli must be positive, got {e}")));
                }
            }
        }

        let e = &self.equilibrium;
        positive("equilibrium.rel_tol", e.rel_tol)?;
        if e.max_iter == 0 {
            return Err(Error::config("equilibrium.max_iter", "must be positive"));
        }
        if self.scenario == Scenario::FixedFixedEquilibrium && e.boundary != Boundary::FixedFixed {
            return Err(Error::config("equilibrium.boundary", "the fixed-fixed scenario needs fixed-fixed ends"));
        }
        if self.scenario == Scenario::FixedFreeEquilibrium && e.boundary != Boundary::FixedFree {
            return Err(Error::config("equilibrium.boundary", "the fixed-free scenario needs fixed-free ends"));
        }
        if self.scenario == Scenario::FullDomainReference || (!self.scenario.is_periodic() && e.reference) {
            let cells = g.length / g.dx;
            if (cells - cells.round()).abs() > 1e-9 * cells || cells.round() < 4.0 {
                return Err(Error::config(
                    "geometry.dx",
                    format!("the full-domain reference needs L/dx to be a whole number, got {cells}"),
                ));
            }
        }
        if self.output.dir.is_empty() {
            return Err(Error::config("output.dir", "must not be empty"));
        }
        Ok(())
    }

    fn validate_material(&self, grid: &MicroGridSpec) -> Result<()> {
        let m = &self.material;
        let engineering = |ke: &str, e: f64, kn: &str, nu: f64| -> Result<()> {
            positive(ke, e)?;
            if !(nu > -1.0 && nu < 0.5) {
                return Err(Error::config(kn, format!("Poisson ratio must lie in (-1, 0.5), got {nu}")));
            }
            Ok(())
        };
        engineering("material.youngs", m.youngs, "material.poisson", m.poisson)?;
        let range = |key: &str, r: [f64; 2]| -> Result<()> {
            if !(r[0] <= r[1] && r[0].is_finite() && r[1].is_finite()) {
                return Err(Error::config(key, format!("expected an ordered finite interval, got {r:?}")));
            }
            Ok(())
        };
        match m.kind {
            MaterialKind::Homogeneous => {}
            MaterialKind::Random => {
                match m.youngs_law {
                    YoungsLawKind::LogUniform => range("material.log_youngs_range", m.log_youngs_range)?,
                    YoungsLawKind::Uniform => {
                        range("material.youngs_range", m.youngs_range)?;
                        if m.youngs_range[0] <= 0.0 {
                            return Err(Error::config("material.youngs_range", "moduli must be positive"));
                        }
                    }
                }
                range("material.poisson_range", m.poisson_range)?;
                if !(m.poisson_range[0] > -1.0 && m.poisson_range[1] < 0.5) {
                    return Err(Error::config("material.poisson_range", "must lie inside (-1, 0.5)"));
                }
                positive("material.period", m.period)?;
                let cells = m.period / grid.dx;
                if (cells - cells.round()).abs() > 1e-9 * cells || cells.round() < 1.0 {
                    return Err(Error::config(
                        "material.period",
                        format!("{} is not a whole number of cells of width {}", m.period, grid.dx),
                    ));
                }
                let h = grid.patch_length();
                if (m.period - h).abs() > 1e-9 * h {
                    return Err(Error::config(
                        "material.period",
                        format!("must equal the patch length nx·dx = {h} (one period per patch)"),
                    ));
                }
            }
            MaterialKind::Inclusion => {
                engineering(
                    "material.inclusion_youngs",
                    m.inclusion_youngs,
                    "material.inclusion_poisson",
                    m.inclusion_poisson,
                )?;
                if m.inclusion_length_cells > 0 && m.inclusion_length_cells + 2 >= grid.nx {
                    return Err(Error::config(
                        "material.inclusion_length_cells",
                        format!("must be below nx - 2 = {}", grid.nx as i64 - 2),
                    ));
                }
                if m.inclusion_width_cells > 0 && m.inclusion_width_cells + 1 >= grid.ny {
                    return Err(Error::config(
                        "material.inclusion_width_cells",
                        format!("must be below ny - 1 = {}", grid.ny - 1),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {v}")))
    }
}

fn parse_field(key: &str, src: &str) -> Result<Expr> {
    Expr::parse(src).map_err(|e| match e {
        Error::Parse(msg) => Error::config(key, msg),
        other => other,
    })
}

/// Override values are TOML literals when they parse as one, else strings,
/// so `--override forcing.fy=exp(x)` needs no quoting.
fn parse_override_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Split `key=value` into its parts.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::config(arg, "override must look like key=value")),
    }
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "malformed dotted key"));
    }
    let mut cur = table;
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(Error::config(
                    parts[..=i].join("."),
                    "is a scalar, cannot set a key below it",
                ))
            }
        };
    }
    Ok(())
}

fn merge(base: &mut Table, user: &Table, prefix: &str) -> Result<()> {
    for (k, v) in user {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let Some(slot) = base.get_mut(k) else {
            return Err(Error::config(path, "unknown key"));
        };
        match (slot, v) {
            (Value::Table(b), Value::Table(u)) => merge(b, u, &path)?,
            (slot, v) => *slot = coerce(slot, v, &path)?,
        }
    }
    Ok(())
}

/// `v` converted to the type of the default in `slot`; integers widen to floats.
fn coerce(slot: &Value, v: &Value, path: &str) -> Result<Value> {
    let mismatch = || {
        Error::config(
            path,
            format!("expected {}, found {}", slot.type_str(), v.type_str()),
        )
    };
    Ok(match (slot, v) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(*i as f64),
        (Value::Float(_), Value::Float(_))
        | (Value::Integer(_), Value::Integer(_))
        | (Value::String(_), Value::String(_))
        | (Value::Boolean(_), Value::Boolean(_)) => v.clone(),
        // seeds beyond i64 are carried as strings
        (Value::Integer(_), Value::String(_)) if path == "seed" => v.clone(),
        (Value::Array(b), Value::Array(u)) => {
            let Some(proto) = b.first() else {
                return Ok(v.clone());
            };
            let items = u
                .iter()
                .enumerate()
                .map(|(i, item)| coerce(proto, item, &format!("{path}[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            Value::Array(items)
        }
        _ => return Err(mismatch()),
    })
}
