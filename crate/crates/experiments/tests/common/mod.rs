//! Shared test oracles.
#![allow(dead_code)]

use ndarray::Array2;

/// Jacobian of the fixed-edge single-patch system, written out node by node
/// from the stencil definitions. Each discrete quantity is held as a dense
/// linear form over the state `[u, v, u̇, v̇]` so no state is ever evaluated.
pub struct StencilOracle {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub lambda: f64,
    pub mu: f64,
    pub kappa: f64,
}

type Form = Vec<f64>;

impl StencilOracle {
    fn nu(&self) -> usize {
        self.nx * (self.ny - 1)
    }

    fn nv(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dim(&self) -> usize {
        2 * (self.nu() + self.nv())
    }

    fn zero(&self) -> Form {
        vec![0.0; self.dim()]
    }

    fn unit(&self, k: usize) -> Form {
        let mut f = self.zero();
        f[k] = 1.0;
        f
    }

    fn lin(&self, terms: &[(f64, &Form)]) -> Form {
        let mut out = self.zero();
        for (c, f) in terms {
            for (o, x) in out.iter_mut().zip(f.iter()) {
                *o += c * x;
            }
        }
        out
    }

    /// Horizontal displacement (or velocity when `rate`) at u-node column `a`,
    /// row `r`, ghost rows included; edge columns are clamped to zero.
    fn u(&self, a: usize, r: usize, rate: bool) -> Form {
        let (nx, ny) = (self.nx, self.ny);
        let rho = self.dy / self.dx;
        if r == 0 {
            // σ_xy = 0 on the bottom surface
            let dv = self.lin(&[(1.0, &self.v(a + 1, 0, rate)), (-1.0, &self.v(a, 0, rate))]);
            return self.lin(&[(1.0, &self.u(a, 1, rate)), (rho, &dv)]);
        }
        if r == ny {
            let dv = self.lin(&[(1.0, &self.v(a + 1, ny - 1, rate)), (-1.0, &self.v(a, ny - 1, rate))]);
            return self.lin(&[(1.0, &self.u(a, ny - 1, rate)), (-rho, &dv)]);
        }
        if a == 0 || a == nx + 1 {
            return self.zero();
        }
        let base = if rate { self.nu() + self.nv() } else { 0 };
        self.unit(base + (a - 1) * (ny - 1) + r - 1)
    }

    fn v(&self, b: usize, m: usize, rate: bool) -> Form {
        if b == 0 || b == self.nx + 1 {
            return self.zero();
        }
        let base = if rate { 2 * self.nu() + self.nv() } else { self.nu() };
        self.unit(base + (b - 1) * self.ny + m)
    }

    /// Normal stresses at integer x-node `i`, half-integer row `r`.
    fn sxx(&self, i: usize, r: usize) -> Form {
        let (l, m) = (self.lambda, self.mu);
        self.lin(&[
            ((l + 2.0 * m) / self.dx, &self.u(i, r, false)),
            (-(l + 2.0 * m) / self.dx, &self.u(i - 1, r, false)),
            (l / self.dy, &self.v(i, r, false)),
            (-l / self.dy, &self.v(i, r - 1, false)),
        ])
    }

    fn syy(&self, i: usize, r: usize) -> Form {
        if r == 0 {
            return self.lin(&[(-1.0, &self.syy(i, 1))]);
        }
        if r == self.ny {
            return self.lin(&[(-1.0, &self.syy(i, self.ny - 1))]);
        }
        let (l, m) = (self.lambda, self.mu);
        self.lin(&[
            (l / self.dx, &self.u(i, r, false)),
            (-l / self.dx, &self.u(i - 1, r, false)),
            ((l + 2.0 * m) / self.dy, &self.v(i, r, false)),
            (-(l + 2.0 * m) / self.dy, &self.v(i, r - 1, false)),
        ])
    }

    /// Shear stress at half-integer x-node `c`, integer row `m`.
    fn sxy(&self, c: usize, m: usize) -> Form {
        let mu = self.mu;
        self.lin(&[
            (mu / self.dy, &self.u(c, m + 1, false)),
            (-mu / self.dy, &self.u(c, m, false)),
            (mu / self.dx, &self.v(c + 1, m, false)),
            (-mu / self.dx, &self.v(c, m, false)),
        ])
    }

    fn laplacian(&self, west: Form, here: Form, east: Form, south: Form, north: Form) -> Form {
        let (cx, cy) = (self.kappa / (self.dx * self.dx), self.kappa / (self.dy * self.dy));
        self.lin(&[
            (cx, &west),
            (cx, &east),
            (-2.0 * cx - 2.0 * cy, &here),
            (cy, &south),
            (cy, &north),
        ])
    }

    pub fn matrix(&self) -> Array2<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let (nu, nv) = (self.nu(), self.nv());
        let n = self.dim();
        let mut j = Array2::zeros((n, n));
        let mut set_row = |row: usize, f: Form| {
            for (k, x) in f.into_iter().enumerate() {
                j[[row, k]] = x;
            }
        };
        for a in 1..=nx {
            for r in 1..ny {
                let k = (a - 1) * (ny - 1) + r - 1;
                set_row(k, self.u(a, r, true));
                let here = self.u(a, r, true);
                let south = if r == 1 { here.clone() } else { self.u(a, r - 1, true) };
                let north = if r == ny - 1 { here.clone() } else { self.u(a, r + 1, true) };
                let damp = self.laplacian(self.u(a - 1, r, true), here, self.u(a + 1, r, true), south, north);
                let acc = self.lin(&[
                    (1.0 / self.dx, &self.sxx(a + 1, r)),
                    (-1.0 / self.dx, &self.sxx(a, r)),
                    (1.0 / self.dy, &self.sxy(a, r)),
                    (-1.0 / self.dy, &self.sxy(a, r - 1)),
                    (1.0, &damp),
                ]);
                set_row(nu + nv + k, acc);
            }
        }
        for b in 1..=nx {
            for m in 0..ny {
                let k = (b - 1) * ny + m;
                set_row(nu + k, self.v(b, m, true));
                let here = self.v(b, m, true);
                let south = if m == 0 { here.clone() } else { self.v(b, m - 1, true) };
                let north = if m == ny - 1 { here.clone() } else { self.v(b, m + 1, true) };
                let damp = self.laplacian(self.v(b - 1, m, true), here, self.v(b + 1, m, true), south, north);
                let acc = self.lin(&[
                    (1.0 / self.dx, &self.sxy(b, m)),
                    (-1.0 / self.dx, &self.sxy(b - 1, m)),
                    (1.0 / self.dy, &self.syy(b, m + 1)),
                    (-1.0 / self.dy, &self.syy(b, m)),
                    (1.0, &damp),
                ]);
                set_row(2 * nu + nv + k, acc);
            }
        }
        j
    }
}
