//! Post-processing shared by the scenarios: error measures against a
//! full-domain reference, eigenvalue classification and branch labels, and
//! period estimates from patch-mean time series.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;
use patchbeam::network::{MacroBc, PatchNetwork, PatchStats};
use patchbeam::solvers::eigen::{complex_residuals, complex_spectrum, Spectrum};
use patchbeam::{Error, Result};
use rustfft::FftPlanner;

use crate::config::SpectrumConfig;

/// Format with 12 significant digits, like C's `%.12g`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (11 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Mean of `|patch − reference|` over all nodes divided by the mean of
/// `|reference|`.
pub fn relative_mean_abs_error(patch: &[f64], reference: &[f64]) -> Result<f64> {
    if patch.len() != reference.len() || patch.is_empty() {
        return Err(Error::Domain(format!(
            "cannot compare {} patch values with {} reference values",
            patch.len(),
            reference.len()
        )));
    }
    let num: f64 = patch.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = reference.iter().map(|b| b.abs()).sum();
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(num / den)
}

/// Interior `u` and `v` displacements of every patch paired with the
/// reference values at the same micro-grid nodes of a full-domain solution.
pub fn footprint_values(
    net: &PatchNetwork,
    q: &[f64],
    full: &PatchNetwork,
    q_full: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (g, gf) = (&net.grid, &full.grid);
    if full.patches() != 1 || g.ny != gf.ny || (g.dx - gf.dx).abs() > 1e-12 * g.dx || (g.dy - gf.dy).abs() > 1e-12 * g.dy {
        return Err(Error::Domain("reference must be one full-domain patch on the same micro-grid".into()));
    }
    let fields = net.unpack(q)?;
    let reference = full.unpack(q_full)?.remove(0);
    let mut pv = Vec::new();
    let mut rv = Vec::new();
    for (f, &xc) in fields.iter().zip(net.centres()) {
        // column 0 of the patch sits at this full-domain column
        let shift = (xc - 0.5 * g.edge_span()) / g.dx;
        let o = shift.round();
        if (shift - o).abs() > 1e-6 || o < 0.0 || o as usize + g.nx + 1 > gf.nx + 1 {
            return Err(Error::Domain(format!(
                "patch centred at {xc} does not lie on the reference grid"
            )));
        }
        let o = o as usize;
        for a in 1..=g.nx {
            for r in 1..g.ny {
                pv.push(f.u[[a, r]]);
                rv.push(reference.u[[a + o, r]]);
            }
            for m in 0..g.ny {
                pv.push(f.v[[a, m]]);
                rv.push(reference.v[[a + o, m]]);
            }
        }
    }
    Ok((pv, rv))
}

/// Relative mean-absolute error of a patch equilibrium against the
/// full-domain one, restricted to the patch footprints.
pub fn footprint_error(net: &PatchNetwork, q: &[f64], full: &PatchNetwork, q_full: &[f64]) -> Result<f64> {
    let (p, r) = footprint_values(net, q, full, q_full)?;
    relative_mean_abs_error(&p, &r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub macro_band: f64,
    pub zero_tol: f64,
    pub dominance: f64,
    pub min_mean_fraction: f64,
}

impl From<&SpectrumConfig> for Thresholds {
    fn from(s: &SpectrumConfig) -> Self {
        Thresholds {
            macro_band: s.macro_band,
            zero_tol: s.zero_tol,
            dominance: s.dominance,
            min_mean_fraction: s.min_mean_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Class {
    Zero,
    Macro,
    Micro,
}

impl Class {
    pub fn as_str(self) -> &'static str {
        match self {
            Class::Zero => "zero",
            Class::Macro => "macro",
            Class::Micro => "micro",
        }
    }
}

pub fn classify(l: Complex64, th: &Thresholds) -> Class {
    if l.norm() < th.zero_tol {
        Class::Zero
    } else if l.im.abs() < th.macro_band {
        Class::Macro
    } else {
        Class::Micro
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Branch {
    Compression,
    Bending,
    Rigid,
    /// Both cross-beam means are significant and neither dominates.
    Ambiguous,
    /// A macroscale eigenvalue without a significant cross-beam mean, or
    /// no eigenvector to judge by.
    Unlabelled,
    /// Sub-patch eigenvalue; not a branch member.
    None,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Compression => "compression",
            Branch::Bending => "bending",
            Branch::Rigid => "rigid",
            Branch::Ambiguous => "ambiguous",
            Branch::Unlabelled => "unlabelled",
            Branch::None => "none",
        }
    }
}

/// Where the displacement entries of a mode vector live.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeLayout {
    pub patches: usize,
    pub block_len: usize,
    /// `u` and `v` displacement ranges within a block.
    pub u: std::ops::Range<usize>,
    pub v: std::ops::Range<usize>,
    /// Patch means admit a discrete Fourier wavenumber.
    pub periodic: bool,
}

impl ModeLayout {
    pub fn of_network(net: &PatchNetwork) -> Self {
        let seg = net.segments();
        ModeLayout {
            patches: net.patches(),
            block_len: net.block_len(),
            u: seg[0]..seg[1],
            v: seg[1]..seg[2],
            periodic: net.bc == MacroBc::Periodic,
        }
    }

    /// One patch block, as for the eigenvectors of a Bloch block.
    pub fn single_block(net: &PatchNetwork) -> Self {
        ModeLayout {
            patches: 1,
            periodic: false,
            ..Self::of_network(net)
        }
    }
}

/// Cross-beam means of a mode and their strength relative to the rms of all
/// displacement entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMeans {
    pub ubar: Vec<Complex64>,
    pub vbar: Vec<Complex64>,
    pub u_fraction: f64,
    pub v_fraction: f64,
}

pub fn mode_means(x: ArrayView1<Complex64>, layout: &ModeLayout) -> Result<ModeMeans> {
    if x.len() != layout.patches * layout.block_len {
        return Err(Error::Shape {
            what: "mode vector",
            expected: (layout.patches * layout.block_len, 1),
            found: (x.len(), 1),
        });
    }
    let mut ubar = Vec::with_capacity(layout.patches);
    let mut vbar = Vec::with_capacity(layout.patches);
    let mut sq = 0.0;
    let mut count = 0usize;
    for p in 0..layout.patches {
        let base = p * layout.block_len;
        let mean = |r: &std::ops::Range<usize>| {
            let s: Complex64 = (r.start..r.end).map(|i| x[base + i]).sum();
            s / r.len() as f64
        };
        ubar.push(mean(&layout.u));
        vbar.push(mean(&layout.v));
        for i in layout.u.start..layout.v.end {
            sq += x[base + i].norm_sqr();
            count += 1;
        }
    }
    let rms = (sq / count as f64).sqrt();
    let frac = |m: &[Complex64]| {
        if rms == 0.0 {
            0.0
        } else {
            (m.iter().map(|c| c.norm_sqr()).sum::<f64>() / m.len() as f64).sqrt() / rms
        }
    };
    Ok(ModeMeans {
        u_fraction: frac(&ubar),
        v_fraction: frac(&vbar),
        ubar,
        vbar,
    })
}

/// Dominant discrete Fourier wavenumber (folded to `0..=N/2`) of patch values.
pub fn dominant_wavenumber(values: &[Complex64]) -> usize {
    let n = values.len();
    if n == 0 {
        return 0;
    }
    let mut buf = values.to_vec();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    // ties go to the lowest folded wavenumber so labels are deterministic
    let mut best = (0usize, -1.0f64);
    for k in 0..=n / 2 {
        let power = buf[k].norm_sqr() + if k != 0 && 2 * k != n { buf[n - k].norm_sqr() } else { 0.0 };
        if power > best.1 * (1.0 + 1e-9) {
            best = (k, power);
        }
    }
    best.0
}

/// Branch and wavenumber of one eigenpair.
pub fn label_mode(
    value: Complex64,
    vector: Option<ArrayView1<Complex64>>,
    layout: Option<&ModeLayout>,
    th: &Thresholds,
) -> Result<(Branch, Option<usize>)> {
    match classify(value, th) {
        Class::Zero => return Ok((Branch::Rigid, Some(0))),
        Class::Micro => return Ok((Branch::None, None)),
        Class::Macro => {}
    }
    let (Some(x), Some(layout)) = (vector, layout) else {
        return Ok((Branch::Unlabelled, None));
    };
    let m = mode_means(x, layout)?;
    let (fu, fv) = (m.u_fraction, m.v_fraction);
    let branch = if fu < th.min_mean_fraction && fv < th.min_mean_fraction {
        Branch::Unlabelled
    } else if fu >= th.dominance * fv {
        Branch::Compression
    } else if fv >= th.dominance * fu {
        Branch::Bending
    } else {
        Branch::Ambiguous
    };
    let wavenumber = match branch {
        Branch::Compression if layout.periodic => Some(dominant_wavenumber(&m.ubar)),
        Branch::Bending if layout.periodic => Some(dominant_wavenumber(&m.vbar)),
        _ => None,
    };
    Ok((branch, wavenumber))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub value: Complex64,
    pub class: Class,
    pub branch: Branch,
    pub wavenumber: Option<usize>,
    /// NaN when no eigenvector was computed.
    pub residual: f64,
}

/// Every eigenvalue with its class and label, in solver order.
pub fn spectrum_rows(spec: &Spectrum, layout: Option<&ModeLayout>, th: &Thresholds) -> Result<Vec<SpectrumRow>> {
    spec.values
        .iter()
        .enumerate()
        .map(|(k, &value)| {
            let vector = spec.vectors.as_ref().map(|v| v.column(k));
            let (branch, wavenumber) = label_mode(value, vector, layout, th)?;
            Ok(SpectrumRow {
                value,
                class: classify(value, th),
                branch,
                wavenumber,
                residual: spec.residuals.get(k).copied().unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Macroscale rows, one per conjugate pair (the member with `Im λ ≥ 0`),
/// sorted by `|Im λ|` then by branch.
pub fn eigen_branch_report(rows: &[SpectrumRow]) -> Vec<SpectrumRow> {
    let mut out: Vec<SpectrumRow> = rows
        .iter()
        .filter(|r| r.class != Class::Micro && r.value.im >= 0.0)
        .cloned()
        .collect();
    out.sort_by(|a, b| {
        a.value
            .im
            .abs()
            .total_cmp(&b.value.im.abs())
            .then(a.branch.cmp(&b.branch))
            .then(a.value.re.total_cmp(&b.value.re))
    });
    out
}

/// First compression and first bending eigenvalues of a translation-invariant
/// periodic network, from its wavenumber-1 Bloch block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroPair {
    pub compression: Complex64,
    pub bending: Complex64,
    /// Mean fractions of the chosen modes, for diagnostics.
    pub compression_fraction: f64,
    pub bending_fraction: f64,
    pub max_residual: f64,
}

pub fn bloch_macro_pair(net: &PatchNetwork, kappa: f64, th: &Thresholds) -> Result<MacroPair> {
    let block = net.bloch_block(1, kappa)?;
    let mut spec = complex_spectrum(&block, true)?;
    complex_residuals(&block, &mut spec)?;
    macro_pair_from_block(&spec, &ModeLayout::single_block(net), th)
}

fn macro_pair_from_block(spec: &Spectrum, layout: &ModeLayout, th: &Thresholds) -> Result<MacroPair> {
    let vectors: &Array2<Complex64> = spec
        .vectors
        .as_ref()
        .ok_or_else(|| Error::Solver("branch selection needs eigenvectors".into()))?;
    // (score, index) of the best compression and bending candidates
    let mut best_c: Option<(f64, usize)> = None;
    let mut best_b: Option<(f64, usize)> = None;
    for (k, &l) in spec.values.iter().enumerate() {
        if l.im <= 0.0 || classify(l, th) != Class::Macro {
            continue;
        }
        let m = mode_means(vectors.column(k), layout)?;
        if m.u_fraction >= th.dominance * m.v_fraction && best_c.is_none_or(|(s, _)| m.u_fraction > s) {
            best_c = Some((m.u_fraction, k));
        }
        if m.v_fraction >= th.dominance * m.u_fraction && best_b.is_none_or(|(s, _)| m.v_fraction > s) {
            best_b = Some((m.v_fraction, k));
        }
    }
    let pick = |b: Option<(f64, usize)>, what: &str| {
        b.filter(|&(s, _)| s >= th.min_mean_fraction).ok_or_else(|| {
            Error::Solver(format!("no {what} mode found in the macroscale band |Im λ| < {}", th.macro_band))
        })
    };
    let (fc, ic) = pick(best_c, "compression")?;
    let (fb, ib) = pick(best_b, "bending")?;
    Ok(MacroPair {
        compression: spec.values[ic],
        bending: spec.values[ib],
        compression_fraction: fc,
        bending_fraction: fb,
        max_residual: [ic, ib]
            .iter()
            .filter_map(|&k| spec.residuals.get(k).copied())
            .fold(0.0, f64::max),
    })
}

/// Amplitudes of `sin x` and `cos x` in patch values sampled at `x`, on a
/// periodic domain of length `length`.
pub fn fourier_projection(stats: &[PatchStats], length: f64, value: impl Fn(&PatchStats) -> f64) -> (f64, f64) {
    let n = stats.len() as f64;
    let k = 2.0 * PI / length;
    let (mut s, mut c) = (0.0, 0.0);
    for p in stats {
        s += value(p) * (k * p.x).sin();
        c += value(p) * (k * p.x).cos();
    }
    (2.0 * s / n, 2.0 * c / n)
}

/// Oscillation period from sign changes of `signal`. Small wiggles about
/// zero are ignored: a crossing counts only once the signal has travelled
/// from beyond `−band` to beyond `+band` (or back), with
/// `band = hysteresis · max|signal|`. Crossing times are linearly
/// interpolated at the last sign change in each such passage. Returns the
/// period and the number of crossings used.
pub fn zero_crossing_period(times: &[f64], signal: &[f64], hysteresis: f64) -> Option<(f64, usize)> {
    if times.len() != signal.len() || times.len() < 3 {
        return None;
    }
    let peak = signal.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return None;
    }
    let band = hysteresis * peak;
    let mut crossings = Vec::new();
    let mut state = 0i8;
    let mut last_change: Option<f64> = None;
    for i in 0..signal.len() {
        let s = signal[i];
        if i > 0 && (signal[i - 1] < 0.0) != (s < 0.0) {
            let (t0, t1, s0, s1) = (times[i - 1], times[i], signal[i - 1], s);
            last_change = Some(if s1 == s0 { t0 } else { t0 + (t1 - t0) * s0 / (s0 - s1) });
        }
        let side = if s > band {
            1
        } else if s < -band {
            -1
        } else {
            0
        };
        if side != 0 && side != state {
            if state != 0 {
                if let Some(t) = last_change {
                    crossings.push(t);
                }
            }
            state = side;
            last_change = None;
        }
    }
    if crossings.len() < 2 {
        return None;
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Some((2.0 * span / (crossings.len() - 1) as f64, crossings.len()))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|&(&x, &y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}
