//! The file pipeline: extract data from a zoo surface, save the GCR JSON
//! container (bit-exact dual decimal/hex encoding), reconstruct, and export
//! OBJ and CSV meshes.
//!
//!     cargo run --release --example export_mesh

use moebius_lab::bonnet::{reconstruct, IntegrateOptions, Transport};
use moebius_lab::chart::StencilOrder;
use moebius_lab::gcr::extract_gcr;
use moebius_lab::io;
use moebius_lab::minkowski::MinkowskiSpace;
use moebius_lab::zoo;

fn main() {
    let order = StencilOrder::Two;
    let sp = MinkowskiSpace::new(3);
    let dir = std::env::temp_dir().join("moebius_lab_export");
    std::fs::create_dir_all(&dir).unwrap();

    let lift = zoo::cylinder_lift(&sp, 1.0, 48, 1.0);
    let data = extract_gcr(&lift, order).unwrap();
    let gcr_path = dir.join("cylinder.gcr.json");
    io::save_gcr(&gcr_path, &data).unwrap();
    println!("wrote {}", gcr_path.display());

    let loaded = io::load_gcr(&gcr_path).unwrap();
    let opts = IntegrateOptions {
        flatness_threshold: 1.0,
        transport: Transport::Rk4,
        order,
    };
    let (rec, frame) = reconstruct(&loaded, None, &opts).unwrap();
    println!("reconstructed with frame defect {:.2e}", frame.lorentz_defect());

    let obj = dir.join("cylinder.obj");
    io::export_obj(&obj, &rec).unwrap();
    let csv = dir.join("cylinder.csv");
    io::export_csv(&csv, &rec).unwrap();
    println!("wrote {} and {}", obj.display(), csv.display());

    let back = io::import_mesh(&obj).unwrap();
    println!(
        "re-imported OBJ: {} vertices on a {:?} grid",
        back.sigma.values.len(),
        back.chart.shape
    );
}
