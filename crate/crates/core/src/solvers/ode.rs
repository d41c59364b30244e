//! Adaptive Bogacki–Shampine 3(2) integration with cubic Hermite dense output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// First trial step; chosen from the initial slope when `None`.
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            initial_step: None,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Integrate `ẏ = f(t, y)` from `t = 0` and report `y` at each of the
/// strictly increasing, non-negative `sample_times`.
pub fn integrate<F>(mut f: F, y0: &[f64], sample_times: &[f64], opts: &OdeOptions) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(Error::Domain("integration tolerances must be positive".into()));
    }
    if sample_times.windows(2).any(|w| w[1] <= w[0]) || sample_times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Domain("sample times must be non-negative and strictly increasing".into()));
    }
    if y0.iter().any(|y| !y.is_finite()) {
        return Err(Error::Domain("initial state must be finite".into()));
    }
    let n = y0.len();
    let t_end = sample_times.last().copied().unwrap_or(0.0);
    let mut traj = Trajectory {
        times: Vec::with_capacity(sample_times.len()),
        states: Vec::with_capacity(sample_times.len()),
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let mut next = 0;
    while next < sample_times.len() && sample_times[next] == 0.0 {
        traj.times.push(0.0);
        traj.states.push(y0.to_vec());
        next += 1;
    }
    if next == sample_times.len() {
        return Ok(traj);
    }

    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut tmp, mut y1) = (vec![0.0; n], vec![0.0; n]);
    f(t, &y, &mut k1)?;
    let scale = |y: &[f64], i: usize| opts.abs_tol + opts.rel_tol * y[i].abs();
    let mut h = opts.initial_step.unwrap_or_else(|| {
        let ny = rms(n, |i| y[i] / scale(&y, i));
        let nf = rms(n, |i| k1[i] / scale(&y, i));
        if ny < 1e-5 || nf < 1e-5 {
            1e-6
        } else {
            0.01 * ny / nf
        }
    });
    h = h.min(t_end);

    let mut steps = 0;
    while next < sample_times.len() {
        if steps >= opts.max_steps {
            return Err(Error::Solver(format!("step limit reached at t = {t}")));
        }
        steps += 1;
        if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::Solver(format!("step size underflow at t = {t}")));
        }
        let h_used = h.min(t_end - t);
        axpy(&mut tmp, &y, &[(0.5 * h_used, &k1)]);
        f(t + 0.5 * h_used, &tmp, &mut k2)?;
        axpy(&mut tmp, &y, &[(0.75 * h_used, &k2)]);
        f(t + 0.75 * h_used, &tmp, &mut k3)?;
        axpy(
            &mut y1,
            &y,
            &[(2.0 / 9.0 * h_used, &k1), (1.0 / 3.0 * h_used, &k2), (4.0 / 9.0 * h_used, &k3)],
        );
        f(t + h_used, &y1, &mut k4)?;
        let err = rms(n, |i| {
            let e = h_used * (-5.0 / 72.0 * k1[i] + 1.0 / 12.0 * k2[i] + 1.0 / 9.0 * k3[i] - 0.125 * k4[i]);
            e / (opts.abs_tol + opts.rel_tol * y[i].abs().max(y1[i].abs()))
        });
        if !err.is_finite() {
            traj.rejected_steps += 1;
            h = 0.2 * h_used;
            continue;
        }
        if err <= 1.0 {
            let t1 = t + h_used;
            while next < sample_times.len() && sample_times[next] <= t1 {
                let s = (sample_times[next] - t) / h_used;
                traj.times.push(sample_times[next]);
                traj.states.push(hermite(&y, &y1, &k1, &k4, h_used, s));
                next += 1;
            }
            t = t1;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k4);
            traj.accepted_steps += 1;
        } else {
            traj.rejected_steps += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
        h = h_used * factor;
    }
    Ok(traj)
}

fn rms(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    ((0..n).map(|i| f(i).powi(2)).sum::<f64>() / n as f64).sqrt()
}

fn axpy(out: &mut [f64], y: &[f64], terms: &[(f64, &Vec<f64>)]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = y[i] + terms.iter().map(|(c, k)| c * k[i]).sum::<f64>();
    }
}

fn hermite(y0: &[f64], y1: &[f64], f0: &[f64], f1: &[f64], h: f64, s: f64) -> Vec<f64> {
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
        .collect()
}
