//! Inter-patch coupling: macroscale interpolation of next-to-edge donor values
//! to the opposite edges of each patch.
//!
//! Donor values `w_I` are treated as samples at the patch centres `X_I` of a
//! smooth macroscale field; the receiver value for patch `I` is the
//! interpolant evaluated at `X_I + ξ`. With the staggered layout of
//! [`crate::micro`], the right edge column of a patch lies exactly `nx·dx`
//! to the right of its left next-to-edge column, for both `u` and `v`, so
//! `ξ = +h` for right edges and `ξ = −h` for left edges.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    /// Lagrange interpolation through `order + 1` consecutive patches.
    Polynomial { order: usize },
    /// All-to-all Fourier interpolation; periodic domains only.
    Spectral,
}

impl CouplingMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CouplingMode::Polynomial { order } if order < 2 || order % 2 == 1 => Err(Error::Coupling(
                format!("polynomial coupling order must be even and >= 2, got {order}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Macroscale positions of the donor patches.
#[derive(Debug, Clone, PartialEq)]
pub enum MacroGrid {
    /// `N` equispaced centres on a circle of circumference `length`.
    Periodic { centres: Vec<f64>, length: f64 },
    /// Strictly increasing centres on a bounded interval.
    Bounded { centres: Vec<f64> },
}

impl MacroGrid {
    pub fn centres(&self) -> &[f64] {
        match self {
            MacroGrid::Periodic { centres, .. } | MacroGrid::Bounded { centres } => centres,
        }
    }

    pub fn len(&self) -> usize {
        self.centres().len()
    }

    pub fn is_empty(&self) -> bool {
        self.centres().is_empty()
    }
}

/// Lagrange weights for nodes `nodes` evaluated at `x`.
pub fn lagrange_weights(nodes: &[f64], x: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|k| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &xj)| (x - xj) / (nodes[k] - xj))
                .product()
        })
        .collect()
}

/// Interpolate donor values to receiver edges at offset `xi`.
pub fn edge_values(donor: &[f64], grid: &MacroGrid, mode: CouplingMode, xi: f64) -> Result<Vec<f64>> {
    mode.validate()?;
    let n = grid.len();
    if donor.len() != n {
        return Err(Error::Shape {
            what: "donor values",
            expected: (n, 1),
            found: (donor.len(), 1),
        });
    }
    if donor.iter().any(|w| !w.is_finite()) {
        return Err(Error::Coupling("donor values must be finite".into()));
    }
    match (mode, grid) {
        (CouplingMode::Spectral, MacroGrid::Periodic { length, .. }) => spectral_shift(donor, *length, xi),
        (CouplingMode::Spectral, MacroGrid::Bounded { .. }) => Err(Error::Coupling(
            "spectral coupling requires a periodic macroscale domain".into(),
        )),
        (CouplingMode::Polynomial { order }, MacroGrid::Periodic { length, .. }) => {
            if n < 2 {
                return Err(Error::Coupling("periodic coupling needs at least 2 patches".into()));
            }
            // The stencil wraps around the periodic extension; when it is
            // longer than the patch count, donors simply recur.
            let spacing = length / n as f64;
            let half = (order / 2) as i64;
            let offsets: Vec<f64> = (-half..=half).map(|k| k as f64 * spacing).collect();
            let w = lagrange_weights(&offsets, xi);
            Ok((0..n as i64)
                .map(|i| {
                    (-half..=half)
                        .zip(&w)
                        .map(|(k, wk)| wk * donor[(i + k).rem_euclid(n as i64) as usize])
                        .sum()
                })
                .collect())
        }
        (CouplingMode::Polynomial { order }, MacroGrid::Bounded { centres }) => {
            if n < order + 1 {
                return Err(Error::Coupling(format!(
                    "order {order} coupling needs at least {} patches, got {n}",
                    order + 1
                )));
            }
            let half = order / 2;
            Ok((0..n)
                .map(|i| {
                    let start = i.saturating_sub(half).min(n - order - 1);
                    let nodes = &centres[start..=start + order];
                    let w = lagrange_weights(nodes, centres[i] + xi);
                    w.iter().zip(&donor[start..=start + order]).map(|(a, b)| a * b).sum()
                })
                .collect())
        }
    }
}

fn spectral_shift(donor: &[f64], length: f64, xi: f64) -> Result<Vec<f64>> {
    let n = donor.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = donor.iter().map(|&w| Complex64::new(w, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let phase = 2.0 * PI * xi / length;
        if 2 * k == n {
            // The Nyquist mode is real; shift it as cos(kx) would be.
            *c *= (k as f64 * phase).cos();
        } else {
            let kk = if 2 * k < n { k as f64 } else { k as f64 - n as f64 };
            *c *= Complex64::from_polar(1.0, kk * phase);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(buf.iter().map(|c| c.re / n as f64).collect())
}

/// Dense `N×N` operator equivalent to [`edge_values`] for a fixed offset.
pub fn coupling_matrix(grid: &MacroGrid, mode: CouplingMode, xi: f64) -> Result<Array2<f64>> {
    let n = grid.len();
    let mut m = Array2::zeros((n, n));
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let col = edge_values(&unit, grid, mode, xi)?;
        unit[j] = 0.0;
        for (i, v) in col.into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}
