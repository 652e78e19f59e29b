//! The conformal Bonnet theorem as a numerical round trip: extract the
//! Möbius-invariant data of a sampled surface, integrate the flat connection
//! they define, and check that the reconstruction matches the original up to
//! a Möbius transformation, at the order of the stencils.
//!
//!     cargo run --release --example bonnet_round_trip

use moebius_lab::bonnet::{
    align_mobius, extract_immersion, integrate_frame, IntegrateOptions, Transport,
};
use moebius_lab::chart::{convergence_order, StencilOrder};
use moebius_lab::congruence::central_sphere_congruence;
use moebius_lab::gcr::{assemble_connection_with, extract_gcr};
use moebius_lab::minkowski::MinkowskiSpace;
use moebius_lab::zoo;

fn main() {
    let sp = MinkowskiSpace::new(3);
    let order = StencilOrder::Four;
    println!("cylinder round trip, order-4 stencils:");
    let mut pairs = Vec::new();
    for samples in [24usize, 48, 96] {
        let lift = zoo::cylinder_lift(&sp, 1.0, samples, 1.0);
        let h = lift.chart.spacing[0];
        let data = extract_gcr(&lift, order).expect("cylinder data extracts");
        let conn = assemble_connection_with(&data, order).expect("data assembles");
        // integrate from the original lift's own adapted frame: the
        // aligning Möbius transformation is then the identity and the
        // distance measures the pure reconstruction error
        let margin = conn.omega.iter().map(|w| w.valid_margin).max().unwrap();
        let base = vec![0usize, margin + 1];
        let v = central_sphere_congruence(&lift, order).unwrap();
        let f0 = v.full_frame(lift.chart.index(&base));
        let opts = IntegrateOptions {
            flatness_threshold: f64::INFINITY,
            transport: Transport::Rk4,
            order,
        };
        let frame = integrate_frame(&conn, &f0, &base, &opts).expect("data integrates");
        let rec = extract_immersion(&frame, &data);
        let m = rec.sigma.valid_margin;
        let mut dist = 0.0f64;
        for lin in 0..rec.chart.len() {
            let idx = rec.chart.multi_index(lin);
            if !rec.chart.in_valid_region(&idx, m) {
                continue;
            }
            dist = dist.max(
                sp.projective_distance(&rec.sigma.values[lin], &lift.sigma.values[lin])
                    .unwrap(),
            );
        }
        println!(
            "  {samples:3}x{samples:<3}  h = {h:.4}   max projective distance = {dist:.3e}   frame defect = {:.1e}",
            frame.lorentz_defect()
        );
        pairs.push((h, dist));
    }
    let p = convergence_order(&pairs).expect("order fits");
    println!("measured convergence order: {p:.2}");

    // the aligning transformation is an honest Möbius matrix
    let lift = zoo::cylinder_lift(&sp, 1.0, 32, 1.0);
    let moved = lift.transformed(sp.random_mobius(5, 0.4).matrix());
    let align = align_mobius(&lift, &moved, order).expect("conjugated lifts align");
    println!(
        "recovering an exact Möbius conjugation: residual {:.2e}",
        align.max_dist
    );
}
