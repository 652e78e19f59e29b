//! Isothermic surfaces: the closed 1-form eta of a product of curves, the
//! flat pencil d + r eta, T-transforms of the cylinder, and the
//! codimension-one detection criterion.
//!
//!     cargo run --release --example isothermic_family

use moebius_lab::chart::{GridField, StencilOrder};
use moebius_lab::commands::cylinder_data_with_q;
use moebius_lab::families::{
    build_eta, isothermic_detect, pencil_residual, t_transform,
};
use moebius_lab::gcr::gcr_residuals;
use moebius_lab::mobius_structure::QuadraticDifferential;
use moebius_lab::zoo;
use num_complex::Complex64;

fn main() {
    let order = StencilOrder::Two;

    // product of unit circles: eta = sigma ^ (d gamma_1 - d gamma_2)
    let prod = zoo::clifford_product(48);
    let q = QuadraticDifferential {
        q20: GridField::constant(&prod.lift.chart, Complex64::new(0.5, 0.0)),
    };
    let spec = build_eta(&prod.lift, &q, order).unwrap();
    println!("flat pencil d + r eta on the product torus:");
    for (r, res) in pencil_residual(&spec, order).unwrap() {
        println!("  r = {r:+.2}: curvature residual {res:.3e}");
    }

    // T-transform family of the cylinder
    let data = cylinder_data_with_q(48, order).unwrap();
    println!("T-transforms of the cylinder (q = dx^2 - dy^2):");
    for r in [-2.0, -1.0, 0.5, 1.0, 2.0] {
        let deformed = t_transform(&data, r).unwrap();
        let rep = gcr_residuals(&deformed, order).unwrap();
        println!("  r = {r:+.2}: max GCR residual {:.3e}", rep.max());
    }

    // detection: is this surface isothermic, and with which q?
    let det = isothermic_detect(&data, order).unwrap();
    println!(
        "isothermic detection on the cylinder: closedness residual {:.3e}, masked fraction {:.2}",
        det.residual, det.masked_fraction
    );
    if let Some(q) = det.candidate_q {
        let mid = data.chart.index(&[24, 24]);
        println!("  candidate q20 at the center: {:.4}", q.q20.values[mid]);
    }
}
