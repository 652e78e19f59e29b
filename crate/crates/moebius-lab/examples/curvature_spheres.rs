//! Shape operators and curvature spheres: principal curvatures of the
//! cylinder, umbilic masking on the sphere, the two curvature spheres of a
//! Dupin cyclide (constant along their curvature lines), and Dupin's
//! theorem on confocal quadric coordinates.
//!
//!     cargo run --release --example curvature_spheres

use moebius_lab::chart::StencilOrder;
use moebius_lab::congruence::{
    central_sphere_congruence, curvature_spheres, split_connection, CurvatureSphereOptions,
};
use moebius_lab::minkowski::MinkowskiSpace;
use moebius_lab::zoo;

fn main() {
    let order = StencilOrder::Two;
    let opts = CurvatureSphereOptions::default();
    let sp = MinkowskiSpace::new(3);

    let cyl = zoo::cylinder_lift(&sp, 1.0, 32, 1.0);
    let v = central_sphere_congruence(&cyl, order).unwrap();
    let forms = split_connection(&v, order).unwrap();
    let spheres = curvature_spheres(&forms, &cyl.chart, &opts).unwrap();
    let mid = cyl.chart.index(&[16, 16]);
    println!(
        "cylinder: conormal eigenvalues ({:+.4}, {:+.4}) about H = {:+.4}",
        spheres.eigenvalues[0].values[mid][0],
        spheres.eigenvalues[1].values[mid][0],
        forms.h.values[mid][0],
    );

    let sphere = zoo::sphere_lift(&sp, 21, 1.0);
    let vs = central_sphere_congruence(&sphere, order).unwrap();
    let fs = split_connection(&vs, order).unwrap();
    let ss = curvature_spheres(&fs, &sphere.chart, &opts).unwrap();
    let masked = fs.ii0[0]
        .valid_indices()
        .iter()
        .filter(|&&lin| ss.umbilic_mask[lin])
        .count();
    println!(
        "great sphere: {masked}/{} interior nodes umbilic-masked",
        fs.ii0[0].valid_indices().len()
    );

    let cyclide = zoo::dupin_cyclide_lift(0.5, 32);
    let vc = central_sphere_congruence(&cyclide, order).unwrap();
    let fc = split_connection(&vc, order).unwrap();
    let sc = curvature_spheres(&fc, &cyclide.chart, &opts).unwrap();
    let mid = cyclide.chart.index(&[16, 16]);
    println!(
        "Dupin cyclide: two curvature spheres with nu = ({:+.4}, {:+.4})",
        sc.eigenvalues[0].values[mid][0],
        sc.eigenvalues[1].values[mid][0],
    );

    let confocal = zoo::confocal_lift(&[0.0, 1.0, 2.0, 3.0, 4.0], 15).unwrap();
    let r = zoo::dupin_orthogonal_check(&confocal, order).unwrap();
    println!("Dupin's theorem on confocal quadric coordinates: residual {r:.3e}");
}
