//! Conformal geometry of curves: Hill potentials, conformal acceleration,
//! Musso's conformal arclength and its Möbius invariance, vertices, and the
//! developing maps of constant-curvature projective structures.
//!
//!     cargo run --release --example curve_invariants

use moebius_lab::chart::StencilOrder;
use moebius_lab::gcr::{extract_gcr, SffData};
use moebius_lab::immersion::{GaugeMode, LightConeLift};
use moebius_lab::minkowski::MinkowskiSpace;
use moebius_lab::mobius_structure::{curve_invariants, developing_map};
use moebius_lab::zoo;

fn conformal_arclength(lift: &LightConeLift, order: StencilOrder) -> f64 {
    let arc = lift.normalize_gauge(&GaugeMode::Arclength, order).unwrap();
    let data = extract_gcr(&arc, order).unwrap();
    let a = match &data.sff {
        SffData::Curve { a } => a,
        _ => unreachable!(),
    };
    let h = data.chart.spacing[0];
    a.valid_indices()
        .iter()
        .map(|&lin| a.values[lin].norm().sqrt() * h)
        .sum()
}

fn main() {
    let order = StencilOrder::Two;
    let sp2 = MinkowskiSpace::new(2);

    // circle: ns = 1/2 kappa^2, every point a vertex
    let circle = zoo::circle_lift(&sp2, 2.0, 96);
    let inv = curve_invariants(&circle, order).unwrap();
    let mid = circle.chart.index(&[48]);
    println!(
        "circle r = 2: ns = {:.6} (1/(2r^2) = {:.6}), |A| = {:.2e}, vertex everywhere: {}",
        inv.ns.values[mid],
        1.0 / 8.0,
        inv.a.values[mid].norm(),
        inv.a.valid_indices().iter().all(|&lin| inv.vertex_mask[lin])
    );

    // helix: A = -kappa' N - kappa tau B, nonzero and Möbius-invariant in
    // total conformal arclength
    let sp3 = MinkowskiSpace::new(3);
    let helix = zoo::helix_lift(&sp3, 1.0, 0.5, 128);
    let inv = curve_invariants(&helix, order).unwrap();
    let mid = helix.chart.index(&[64]);
    let (kappa, tau) = (0.8, 0.4); // closed forms for a = 1, b = 1/2
    println!(
        "helix: |A| = {:.6} (closed form kappa*tau = {:.6})",
        inv.a.values[mid].norm(),
        kappa * tau
    );
    let l0 = conformal_arclength(&helix, order);
    let t = sp3.random_mobius(11, 0.4);
    let l1 = conformal_arclength(&helix.transformed(t.matrix()), order);
    println!("conformal arclength: {l0:.8} -> {l1:.8} under a random Möbius map");

    // developing maps of the three constant-curvature branches
    println!("developing maps at x = 0.6:");
    for c in [1.0, 0.0, -1.0] {
        println!("  c = {c:+.0}: delta = {:.6}", developing_map(c, 0.6));
    }
}
