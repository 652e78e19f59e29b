//! Willmore energy of the Clifford-type torus and its Möbius invariance,
//! plus the harmonicity of the central sphere congruence on a minimal
//! surface.
//!
//!     cargo run --release --example willmore_energy

use moebius_lab::chart::StencilOrder;
use moebius_lab::congruence::{
    central_sphere_congruence, harmonicity_residual, split_connection, willmore_energy,
};
use moebius_lab::immersion::GaugeMode;
use moebius_lab::minkowski::MinkowskiSpace;
use moebius_lab::zoo;

fn main() {
    let order = StencilOrder::Two;
    let lift = zoo::clifford_torus_lift(64);
    let v = central_sphere_congruence(&lift, order).unwrap();
    let forms = split_connection(&v, order).unwrap();
    let metric = lift.induced_metric(order).unwrap();
    let (energy, _) = willmore_energy(&forms, &metric).unwrap();
    let two_pi_sq = 2.0 * std::f64::consts::PI.powi(2);
    println!("Clifford-type torus: W = {energy:.6} (2 pi^2 = {two_pi_sq:.6})");

    let sp = lift.space.clone();
    for seed in [1u64, 2, 3] {
        let t = sp.random_mobius(seed, 0.4);
        let moved = lift
            .transformed(t.matrix())
            .normalize_gauge(&GaugeMode::Isothermal, order)
            .unwrap();
        let vm = central_sphere_congruence(&moved, order).unwrap();
        let fm = split_connection(&vm, order).unwrap();
        let gm = moved.induced_metric(order).unwrap();
        let (e, _) = willmore_energy(&fm, &gm).unwrap();
        println!("  after random Möbius map (seed {seed}): W = {e:.12}");
    }

    // minimal surfaces are Willmore: the central congruence is harmonic
    let sp3 = MinkowskiSpace::new(3);
    for samples in [24usize, 48] {
        let cat = zoo::catenoid_lift(&sp3, samples);
        let vc = central_sphere_congruence(&cat, order).unwrap();
        let r = harmonicity_residual(&vc, order)
            .unwrap()
            .residual_norm()
            .unwrap();
        println!("catenoid {samples}x{samples}: harmonicity residual {r:.3e}");
    }
    // a torus of revolution with R/r = 2 is not Willmore
    let torus = zoo::revolution_torus_lift(48, 2.0);
    let vt = central_sphere_congruence(&torus, order).unwrap();
    let r = harmonicity_residual(&vt, order)
        .unwrap()
        .residual_norm()
        .unwrap();
    println!("revolution torus (R/r = 2): harmonicity residual {r:.3e} (stays away from zero)");
}
