mod common;

use common::StencilOracle;
use patchbeam::micro::{MaterialField, MicroGridSpec};
use patchbeam::network::{MacroBc, PatchNetwork};
use patchbeam::solvers::jacobian::assemble_jacobian;

pub fn probed_and_oracle(kappa: f64) -> (ndarray::Array2<f64>, ndarray::Array2<f64>) {
    let (lambda, mu) = (0.7, 0.4);
    let grid = MicroGridSpec::new(4, 4, 0.5, 0.4).unwrap();
    let mat = MaterialField::homogeneous(&grid, lambda, mu);
    let net = PatchNetwork::full_domain(grid, grid.edge_span(), MacroBc::FixedFixed, mat).unwrap();
    let forces = net.zero_forces();
    let probed = assemble_jacobian(|q, out| net.global_rhs(q, &forces, kappa, out), net.dim()).unwrap();
    let oracle = StencilOracle {
        nx: 4,
        ny: 4,
        dx: 0.5,
        dy: 0.4,
        lambda,
        mu,
        kappa,
    }
    .matrix();
    (probed, oracle)
}

#[test]
fn probed_jacobian_matches_stencil_oracle() {
    for kappa in [0.0, 0.03] {
        let (probed, oracle) = probed_and_oracle(kappa);
        assert_eq!(probed.dim(), oracle.dim());
        let worst = probed
            .iter()
            .zip(oracle.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-13, "kappa {kappa}: max entry difference {worst:e}");
        assert!(oracle.iter().filter(|x| **x != 0.0).count() > 200);
    }
}
