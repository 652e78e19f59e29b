//! Möbius-flat submanifolds: the Dupin cyclide family in S^3, the spectral
//! deformation t |-> (Ms + (t^2-1) q, t II0), the chi-pencil, and a Guichard
//! net as a conformally flat hypersurface of S^4.
//!
//!     cargo run --release --example mobius_flat_family

use moebius_lab::chart::{GridField, StencilOrder};
use moebius_lab::families::{mobius_flat_family, mobius_flat_pencil_residuals};
use moebius_lab::gcr::gcr_residuals;
use moebius_lab::zoo;
use nalgebra::DMatrix;

fn main() {
    let order = StencilOrder::Two;
    let t_gen = 0.5;
    let cyclide = zoo::dupin_cyclide(t_gen, 32);

    println!("Dupin cyclide (t = {t_gen}): spectral family");
    for t in [0.25, 0.5, 1.0, 1.5, 2.0] {
        let deformed = mobius_flat_family(&cyclide.data, t).unwrap();
        let rep = gcr_residuals(&deformed, order).unwrap();
        println!("  t = {t:.2}: max GCR residual {:.3e}", rep.max());
    }

    // the pencil Dhat + t S + (t^2 - 1) chi with chi from the trace blocks
    let chi = GridField::constant(
        &cyclide.data.chart,
        DMatrix::from_row_slice(2, 2, &[(1.0 + t_gen) / 2.0, 0.0, 0.0, (1.0 - t_gen) / 2.0]),
    );
    println!("chi-pencil flatness:");
    for (t, r) in
        mobius_flat_pencil_residuals(&cyclide.data, &chi, &[0.0, 1.0, -1.0, 2.0], order).unwrap()
    {
        println!("  t = {t:+.1}: curvature residual {r:.3e}");
    }

    // |t| classifies the reconstruction: torus, cylinder or cone of
    // revolution, read off the signature of the theta_2 plane
    for t in [0.5, 2.0, 3.0] {
        let c = zoo::dupin_cyclide(t, 16);
        let theta = &c.theta[1];
        let svd = theta.clone().svd(true, false);
        let u = svd.u.unwrap();
        let gf = moebius_lab::congruence::SphereCongruence::full_gram(2, 1);
        let b1 = u.column(0).clone_owned();
        let b2 = u.column(1).clone_owned();
        let det = (b1.transpose() * &gf * &b1)[(0, 0)] * (b2.transpose() * &gf * &b2)[(0, 0)]
            - (b1.transpose() * &gf * &b2)[(0, 0)].powi(2);
        let kind = if det > 1e-8 {
            "torus of revolution"
        } else if det.abs() <= 1e-8 {
            "cylinder of revolution"
        } else {
            "cone of revolution"
        };
        println!("  |t| = {t}: theta_2-plane Gram determinant {det:+.3e} -> {kind}");
    }

    // Guichard net: conformally flat hypersurface data in S^4
    let (chart, spec) = zoo::guichard_separable(21);
    let data = zoo::guichard_net(&chart, &spec, order).unwrap();
    println!("Guichard net residuals:");
    for e in &gcr_residuals(&data, order).unwrap().entries {
        println!("  {:<6} {:.3e}", e.name, e.value);
    }
    for t in [0.5, 1.5] {
        let deformed = mobius_flat_family(&data, t).unwrap();
        let rep = gcr_residuals(&deformed, order).unwrap();
        println!("  family t = {t}: max residual {:.3e}", rep.max());
    }
}
