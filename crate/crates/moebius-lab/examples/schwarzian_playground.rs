//! Schwarzian derivatives and Möbius structures of surfaces: classical
//! oracles, the cocycle law, and the structure coefficient a reparametrized
//! plane induces.
//!
//!     cargo run --release --example schwarzian_playground

use moebius_lab::chart::{Chart, GridField, StencilOrder};
use moebius_lab::congruence::{central_sphere_congruence, split_connection};
use moebius_lab::immersion::{stereo_lift_of_map, GaugeMode};
use moebius_lab::minkowski::MinkowskiSpace;
use moebius_lab::mobius_structure::{
    hill_apply, mobius_structure_from_congruence, schwarzian, MobiusStructureField,
};
use nalgebra::DVector;
use num_complex::Complex64;

fn main() {
    let order = StencilOrder::Two;
    let chart = Chart::box_chart(2, 0.6, 1.6, 49);

    // classical values
    for (name, f) in [
        ("(2z+1)/(z+3)", Box::new(|z: Complex64| (2.0 * z + 1.0) / (z + 3.0)) as Box<dyn Fn(Complex64) -> Complex64>),
        ("z^2", Box::new(|z: Complex64| z * z)),
        ("exp z", Box::new(|z: Complex64| z.exp())),
    ] {
        let w = GridField::from_fn(&chart, |_, x| f(Complex64::new(x[0], x[1])));
        let s = schwarzian(&w, order).unwrap();
        let mid = chart.index(&[24, 24]);
        println!("S_z({name}) at the center: {:.5}", s.values[mid]);
    }

    // the Möbius structure a w = z^2 chart induces on the plane: the
    // coefficient of Prop-style d_z^2 sigma + q sigma = 0 is half the
    // classical schwarzian
    let sp = MinkowskiSpace::new(3);
    let lift = stereo_lift_of_map(&sp, &chart, |x| {
        let w = Complex64::new(x[0], x[1]).powi(2);
        DVector::from_vec(vec![w.re, w.im, 0.0])
    })
    .normalize_gauge(&GaugeMode::Isothermal, order)
    .unwrap();
    let v = central_sphere_congruence(&lift, order).unwrap();
    let forms = split_connection(&v, order).unwrap();
    let ms = mobius_structure_from_congruence(&v, &forms, order).unwrap();
    if let MobiusStructureField::Surface { q_m, .. } = ms {
        let mid = chart.index(&[24, 24]);
        let x = chart.coords(&[24, 24]);
        let z = Complex64::new(x[0], x[1]);
        println!(
            "structure coefficient of the z^2 chart: {:.5} (S_z(z^2)/2 = {:.5})",
            q_m.values[mid],
            -0.75 / (z * z)
        );
    }

    // Hill operator on a 1-chart
    let chart1 = Chart::box_chart(1, 0.0, 1.0, 65);
    let ns = GridField::constant(&chart1, 3.0f64);
    let f = GridField::from_fn(&chart1, |_, x| ((1.5f64).sqrt() * x[0]).cos());
    let r = hill_apply(&ns, &f, order).unwrap().residual_norm().unwrap();
    println!("Hill operator on cos(sqrt(c/2) x) with ns = c: residual {r:.3e}");
}
