//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! numbers. Criteria listed in `KNOWN_UNMET` are expected to fail (see the
//! README for the analysis); the binary exits nonzero on any other failure and
//! also if a known-unmet criterion starts passing.

mod common;

use std::time::{Duration, Instant};

use num_complex::Complex64;
use patchbeam::micro::{
    patch_acceleration, BodyForce, MaterialField, MicroGridSpec, StaggeredField,
};
use patchbeam::network::{MacroBc, PatchNetwork};
use patchbeam::coupling::CouplingMode;
use patchbeam::solvers::eigen::{conjugate_pairing_defect, spectrum};
use patchbeam::solvers::jacobian::assemble_jacobian;
use patchbeam_experiments::analysis::{bloch_macro_pair, Branch, Thresholds};
use patchbeam_experiments::config::MaterialKind;
use patchbeam_experiments::scenarios::{
    network_spectrum, periodic_network, run_convergence, run_dynamics, run_equilibrium,
    run_inclusions, MaterialSource,
};
use patchbeam_experiments::{run_scenario, Scenario, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_UNMET: &[usize] = &[2, 7];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn th(cfg: &ScenarioConfig) -> Thresholds {
    Thresholds::from(&cfg.spectrum)
}

fn homogeneous_convergence() -> ScenarioConfig {
    let cfg = ScenarioConfig::defaults(Scenario::ConvergenceStudy);
    assert_eq!(cfg.material.kind, MaterialKind::Homogeneous);
    cfg
}

fn spectral_pair(cfg: &ScenarioConfig, n: usize) -> (Complex64, Complex64) {
    let material = MaterialSource::from_config(cfg, &cfg.grid().unwrap()).unwrap();
    let net = periodic_network(cfg, n, CouplingMode::Spectral, &material).unwrap();
    let p = bloch_macro_pair(&net, cfg.dynamics.kappa, &th(cfg)).unwrap();
    (p.compression, p.bending)
}

fn spectral_n_invariance() -> Outcome {
    let cfg = homogeneous_convergence();
    let pairs: Vec<_> = [5, 10, 20].iter().map(|&n| spectral_pair(&cfg, n)).collect();
    let spread = pairs
        .iter()
        .map(|p| (p.0 - pairs[0].0).norm().max((p.1 - pairs[0].1).norm()))
        .fold(0.0, f64::max);

    // Second route: the Bloch pair must appear in the full dense spectrum.
    let material = MaterialSource::from_config(&cfg, &cfg.grid().unwrap()).unwrap();
    let net = periodic_network(&cfg, 5, CouplingMode::Spectral, &material).unwrap();
    let full = network_spectrum(&net, cfg.dynamics.kappa, &th(&cfg), false).unwrap();
    let nearest = |l: Complex64| full.spectrum.values.iter().map(|v| (v - l).norm()).fold(f64::INFINITY, f64::min);
    let dense_gap = nearest(pairs[0].0).max(nearest(pairs[0].1));
    check(
        spread <= 1e-8 && dense_gap <= 1e-8,
        format!(
            "compression {:.10}, bending {:.10}; spread over N {spread:.2e}, dense-vs-Bloch {dense_gap:.2e} (tol 1e-8)",
            pairs[0].0, pairs[0].1
        ),
    )
}

fn homogeneous_eigenvalues() -> Outcome {
    let cfg = homogeneous_convergence();
    let (c, b) = spectral_pair(&cfg, 10);
    let expected = [(c, Complex64::new(-0.0009, 0.9715)), (b, Complex64::new(-0.0009, 0.0550))];
    let mut ok = true;
    let mut parts = Vec::new();
    for (got, want) in expected {
        let rel_im = (got.im - want.im).abs() / want.im;
        let abs_re = (got.re - want.re).abs();
        ok &= rel_im <= 0.02 && abs_re <= 5e-4;
        parts.push(format!("{got:.5} vs {want}: Im rel {rel_im:.3} (tol 0.02), Re abs {abs_re:.1e} (tol 5e-4)"));
    }
    check(ok, parts.join("; "))
}

fn slopes(cfg: &ScenarioConfig) -> Result<Vec<(usize, Branch, f64)>, String> {
    let r = run_convergence(cfg).map_err(|e| e.to_string())?;
    r.fits
        .iter()
        .map(|f| {
            f.slope
                .map(|s| (f.order, f.branch, s))
                .ok_or_else(|| format!("P={} {}: no slope", f.order, f.branch.as_str()))
        })
        .collect()
}

fn convergence_rates() -> Outcome {
    let homo = homogeneous_convergence();
    let mut hetero = homo.clone();
    hetero.material.kind = MaterialKind::Random;
    hetero.seed = 1;
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, cfg) in [("homogeneous", &homo), ("heterogeneous", &hetero)] {
        let fits = slopes(cfg)?;
        let mut line = Vec::new();
        for (order, branch, s) in fits {
            ok &= (s + order as f64).abs() <= 1.0;
            line.push(format!("P{order} {} {s:.2}", &branch.as_str()[..4]));
        }
        parts.push(format!("{label}: {}", line.join(", ")));
    }
    check(ok, parts.join("; "))
}

fn damped_stability() -> Outcome {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for seed in [1, 2] {
        let mut cfg = ScenarioConfig::defaults(Scenario::Spectrum);
        cfg.seed = seed;
        let material = MaterialSource::from_config(&cfg, &cfg.grid().unwrap()).unwrap();
        let net = periodic_network(&cfg, cfg.geometry.patches, cfg.coupling.mode(), &material).unwrap();
        let s = network_spectrum(&net, cfg.dynamics.kappa, &th(&cfg), false).unwrap();
        let m = s.spectrum.max_real();
        worst = worst.max(m);
        parts.push(format!("seed {seed}: {m:.2e}"));
    }
    let incl = run_inclusions(&ScenarioConfig::defaults(Scenario::Inclusions)).map_err(|e| e.to_string())?;
    for row in &incl.rows {
        worst = worst.max(row.max_real);
        parts.push(format!("E_in {}: {:.2e}", row.inclusion_youngs, row.max_real));
    }
    check(worst <= 1e-7, format!("max Re λ {worst:.2e} (tol 1e-7); {}", parts.join(", ")))
}

fn undamped_stability() -> Outcome {
    let cfg = ScenarioConfig::defaults(Scenario::Undamped);
    assert_eq!(cfg.dynamics.kappa, 0.0);
    let material = MaterialSource::from_config(&cfg, &cfg.grid().unwrap()).unwrap();
    let net = periodic_network(&cfg, cfg.geometry.patches, cfg.coupling.mode(), &material).unwrap();
    let s = network_spectrum(&net, 0.0, &th(&cfg), false).unwrap();
    let m = s.spectrum.max_abs_real();
    check(
        m <= 1e-6,
        format!("max |Re λ| {m:.2e} over {} eigenvalues (tol 1e-6)", s.spectrum.values.len()),
    )
}

fn rigid_body_modes() -> Outcome {
    let cfg = ScenarioConfig::defaults(Scenario::Spectrum);
    let material = MaterialSource::from_config(&cfg, &cfg.grid().unwrap()).unwrap();
    let net = periodic_network(&cfg, cfg.geometry.patches, cfg.coupling.mode(), &material).unwrap();
    let kappa = cfg.dynamics.kappa;
    let s = network_spectrum(&net, kappa, &th(&cfg), false).unwrap();
    let zeros = s.spectrum.count_near_zero(1e-6);

    // Independent check of the Jordan chains through the right-hand side:
    // translations are annihilated, uniform velocities map onto them.
    let forces = net.zero_forces();
    let seg = net.segments();
    let (nu, nv) = (net.grid.interior_u(), net.grid.interior_v());
    let mut chain_defect: f64 = 0.0;
    for (disp, vel, len) in [(seg[0], seg[2], nu), (seg[1], seg[3], nv)] {
        let mut x = vec![0.0; net.dim()];
        let mut xdot = vec![0.0; net.dim()];
        for block in 0..net.patches() {
            let o = block * net.block_len();
            x[o + disp..o + disp + len].fill(1.0);
            xdot[o + vel..o + vel + len].fill(1.0);
        }
        let mut out = vec![0.0; net.dim()];
        net.global_rhs(&x, &forces, kappa, &mut out).unwrap();
        chain_defect = chain_defect.max(out.iter().fold(0.0, |m, v| m.max(v.abs())));
        net.global_rhs(&xdot, &forces, kappa, &mut out).unwrap();
        chain_defect = chain_defect.max(out.iter().zip(&x).fold(0.0, |m, (o, e)| m.max((o - e).abs())));
    }
    check(
        zeros == 4 && chain_defect <= 1e-9,
        format!("{zeros} eigenvalues with |λ| < 1e-6 (want 4); Jordan-chain defect {chain_defect:.1e}"),
    )
}

fn equilibrium_trend() -> Outcome {
    let cfg = ScenarioConfig::defaults(Scenario::FixedFixedEquilibrium);
    let r = run_equilibrium(&cfg).map_err(|e| e.to_string())?;
    let err = |p, n| r.error(p, n).ok_or_else(|| format!("no error for P={p} N={n}"));
    let mut p4 = Vec::new();
    for &n in &cfg.sweep.patches {
        p4.push(err(4, n)?);
    }
    let (e4, e6, e8) = (err(4, 17)?, err(6, 17)?, err(8, 17)?);
    let p4_ok = p4.iter().all(|e| (1e-3..=1.0).contains(e));
    let ok = p4_ok && e6 * 10.0 <= e4 && e8 * 10.0 <= e6;
    check(
        ok,
        format!(
            "seed {}: P4 {:?}; N=17: P4 {e4:.2e}, P6 {e6:.2e} ({:.1}x), P8 {e8:.2e} ({:.1}x) (want >= 10x)",
            cfg.seed,
            p4.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            e4 / e6,
            e6 / e8
        ),
    )
}

fn inclusion_trends() -> Outcome {
    let r = run_inclusions(&ScenarioConfig::defaults(Scenario::Inclusions)).map_err(|e| e.to_string())?;
    let rows = &r.rows;
    let monotone = rows.windows(2).all(|w| w[1].compression.im.abs() < w[0].compression.im.abs());
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let damping = last.compression.re.abs() / first.compression.re.abs();
    let bend_drop = (first.bending.im.abs() - last.bending.im.abs()) / first.bending.im.abs();
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("{}: {:.4} / {:.4}", r.inclusion_youngs, r.compression, r.bending))
        .collect();
    check(
        monotone && damping >= 5.0 && (0.0..=0.15).contains(&bend_drop),
        format!(
            "compression Im decreasing {monotone}, |Re| ratio {damping:.1} (want >= 5), bending drop {:.1}% (want <= 15%); {}",
            100.0 * bend_drop,
            table.join(", ")
        ),
    )
}

fn dynamics_periods() -> Outcome {
    let d = run_dynamics(&ScenarioConfig::defaults(Scenario::PeriodicDynamics)).map_err(|e| e.to_string())?;
    let c = d.compression.ok_or("compression period undetermined")?;
    let b = d.bending.ok_or("bending period undetermined")?;
    check(
        (c.period - 6.0).abs() <= 0.6 && (b.period - 60.0).abs() <= 9.0,
        format!(
            "compression {:.3} (6 ± 10%), bending {:.2} (60 ± 15%)",
            c.period, b.period
        ),
    )
}

fn micro_oracle() -> Outcome {
    let (lambda, mu, kappa) = (0.7, 0.4, 0.03);
    let grid = MicroGridSpec::new(4, 4, 0.5, 0.4).unwrap();
    let net = PatchNetwork::full_domain(
        grid,
        grid.edge_span(),
        MacroBc::FixedFixed,
        MaterialField::homogeneous(&grid, lambda, mu),
    )
    .unwrap();
    let forces = net.zero_forces();
    let probed = assemble_jacobian(|q, out| net.global_rhs(q, &forces, kappa, out), net.dim()).unwrap();
    let oracle = common::StencilOracle {
        nx: 4,
        ny: 4,
        dx: 0.5,
        dy: 0.4,
        lambda,
        mu,
        kappa,
    }
    .matrix();
    let worst = probed.iter().zip(oracle.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        probed.dim() == oracle.dim() && worst <= 1e-13,
        format!("{}x{} matrices, max entry difference {worst:.1e} (tol 1e-13)", oracle.nrows(), oracle.ncols()),
    )
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut parts = Vec::new();
    let mut ok = true;

    // Linearity of the network right-hand side, periodic and bounded.
    let spec_cfg = ScenarioConfig::defaults(Scenario::Spectrum);
    let material = MaterialSource::from_config(&spec_cfg, &spec_cfg.grid().unwrap()).unwrap();
    let periodic = periodic_network(&spec_cfg, 7, CouplingMode::Polynomial { order: 4 }, &material).unwrap();
    let ff_cfg = ScenarioConfig::defaults(Scenario::FixedFixedEquilibrium);
    let ff_material = MaterialSource::from_config(&ff_cfg, &ff_cfg.grid().unwrap()).unwrap();
    let g = ff_cfg.grid().unwrap();
    let bounded = PatchNetwork::bounded(
        g,
        9,
        ff_cfg.geometry.length,
        CouplingMode::Polynomial { order: 6 },
        MacroBc::FixedFree,
        vec![ff_material.field(&g).unwrap(); 9],
    )
    .unwrap();
    let mut lin: f64 = 0.0;
    for net in [&periodic, &bounded] {
        let f = net.zero_forces();
        let n = net.dim();
        let (q1, q2) = (random_vec(&mut rng, n), random_vec(&mut rng, n));
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let mix: Vec<f64> = q1.iter().zip(&q2).map(|(x, y)| a * x + b * y).collect();
        let (mut r1, mut r2, mut rm) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        net.global_rhs(&q1, &f, 1e-3, &mut r1).unwrap();
        net.global_rhs(&q2, &f, 1e-3, &mut r2).unwrap();
        net.global_rhs(&mix, &f, 1e-3, &mut rm).unwrap();
        let diff: Vec<f64> = (0..n).map(|i| rm[i] - a * r1[i] - b * r2[i]).collect();
        lin = lin.max(max_abs(&diff) / max_abs(&rm));
    }
    ok &= lin <= 1e-12;
    parts.push(format!("linearity {lin:.1e}"));

    // Translation invariance of a single patch: shifting u everywhere
    // leaves the accelerations unchanged.
    let grid = MicroGridSpec::new(6, 7, 0.05, 0.04).unwrap();
    let mut mat = MaterialField::homogeneous(&grid, 0.5, 0.3);
    mat.mu_s.mapv_inplace(|m| m * rng.random_range(0.5..2.0));
    mat.lambda_n.mapv_inplace(|l| l * rng.random_range(0.5..2.0));
    let mut s = StaggeredField::zeros(&grid);
    for w in [&mut s.u, &mut s.v, &mut s.udot, &mut s.vdot] {
        w.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    let force = BodyForce::zeros(&grid);
    let (u0, v0) = patch_acceleration(&mut s.clone(), &mat, &force, 1e-3, &grid).unwrap();
    let mut shifted = s.clone();
    shifted.u.mapv_inplace(|x| x + 0.37);
    let (u1, v1) = patch_acceleration(&mut shifted, &mat, &force, 1e-3, &grid).unwrap();
    let scale = max_abs(u0.as_slice().unwrap()).max(max_abs(v0.as_slice().unwrap()));
    let shift = (&u1 - &u0)
        .iter()
        .chain((&v1 - &v0).iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
        / scale;
    ok &= shift <= 1e-12;
    parts.push(format!("translation {shift:.1e}"));

    // Polynomial reproduction: degree-P macroscale fields are coupled exactly.
    let mut repro: f64 = 0.0;
    for order in [4usize, 6, 8] {
        let net = PatchNetwork::bounded(
            g,
            11,
            ff_cfg.geometry.length,
            CouplingMode::Polynomial { order },
            MacroBc::FixedFixed,
            vec![ff_material.field(&g).unwrap(); 11],
        )
        .unwrap();
        let coeffs = random_vec(&mut rng, order + 1);
        let p = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
        let q = net.sample_state(|x, y| p(x) * (1.0 + y), |x, _| p(x));
        let fields = net.couple_patches(&q).unwrap();
        for (f, &xc) in fields.iter().zip(net.centres()) {
            for col in [0, g.nx + 1] {
                for r in 1..g.ny {
                    let y = g.u_row_y(r);
                    repro = repro.max((f.u[[col, r]] - p(xc + g.u_col_x(col)) * (1.0 + y)).abs());
                }
                for m in 0..g.ny {
                    repro = repro.max((f.v[[col, m]] - p(xc + g.v_col_x(col))).abs());
                }
            }
        }
    }
    ok &= repro <= 1e-10;
    parts.push(format!("polynomial reproduction {repro:.1e}"));

    // Conjugate pairing of real spectra.
    let s = network_spectrum(&periodic, 1e-3, &th(&spec_cfg), false).unwrap();
    let m = ndarray::Array2::from_shape_fn((60, 60), |_| rng.random_range(-1.0..1.0));
    let random = spectrum(&m, false).unwrap();
    let pairing = s.pairing_defect.max(conjugate_pairing_defect(&random.values, 1e-9));
    ok &= pairing <= 1e-9;
    parts.push(format!("pairing {pairing:.1e}"));

    // Byte-identical CSVs on rerun.
    let mut same = true;
    for scenario in [Scenario::FixedFixedEquilibrium, Scenario::Spectrum] {
        let cfg = ScenarioConfig::defaults(scenario);
        let runs: Vec<Vec<Vec<u8>>> = (0..2)
            .map(|_| {
                run_scenario(&cfg)
                    .unwrap()
                    .tables
                    .iter()
                    .map(|t| t.to_csv_bytes().unwrap())
                    .collect()
            })
            .collect();
        same &= runs[0] == runs[1];
    }
    ok &= same;
    parts.push(format!("csv reproducible {same}"));
    check(ok, parts.join(", "))
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "spectral N-invariance", budget: Duration::from_secs(120), run: spectral_n_invariance },
        Criterion { id: 2, name: "homogeneous macroscale eigenvalues", budget: Duration::from_secs(60), run: homogeneous_eigenvalues },
        Criterion { id: 3, name: "N^-P convergence", budget: Duration::from_secs(600), run: convergence_rates },
        Criterion { id: 4, name: "damped stability", budget: Duration::from_secs(300), run: damped_stability },
        Criterion { id: 5, name: "undamped stability", budget: Duration::from_secs(120), run: undamped_stability },
        Criterion { id: 6, name: "rigid-body modes", budget: Duration::from_secs(60), run: rigid_body_modes },
        Criterion { id: 7, name: "equilibrium error trend", budget: Duration::from_secs(180), run: equilibrium_trend },
        Criterion { id: 8, name: "inclusion trends", budget: Duration::from_secs(300), run: inclusion_trends },
        Criterion { id: 9, name: "dynamics periods", budget: Duration::from_secs(300), run: dynamics_periods },
        Criterion { id: 10, name: "micro-oracle equivalence", budget: Duration::from_secs(1), run: micro_oracle },
        Criterion { id: 11, name: "property suites", budget: Duration::from_secs(120), run: property_suites },
    ];
    let filter: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut unexpected = Vec::new();
    for c in criteria.iter().filter(|c| filter.is_none_or(|f| f == c.id)) {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let (mut pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let mut detail = detail;
        if elapsed > c.budget {
            pass = false;
            detail.push_str(&format!("; over the {}s budget", c.budget.as_secs()));
        }
        let known = KNOWN_UNMET.contains(&c.id);
        let tag = match (pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known unmet, see README)",
            (false, false) => "FAIL",
            (true, true) => "PASS (unexpected: listed as known unmet)",
        };
        if pass == known {
            unexpected.push(c.id);
        }
        println!("[{tag}] {:>2} {} ({:.1}s): {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
