use moebius_lab::chart::StencilOrder;
use moebius_lab::gcr::{assemble_connection_with, curvature};
use moebius_lab::zoo;

fn main() {
    let (chart, spec) = zoo::guichard_separable(17);
    let data = zoo::guichard_net(&chart, &spec, StencilOrder::Two).unwrap();
    let conn = assemble_connection_with(&data, StencilOrder::Two).unwrap();
    let parts = curvature(&conn, StencilOrder::Two).unwrap();
    let names = ["s", "Y1", "Y2", "Y3", "Z", "x"];
    for (pi, pair) in [(0usize, "01"), (1, "02"), (2, "12")] {
        let mut worst = vec![vec![0.0f64; 6]; 6];
        for &lin in parts[pi].valid_indices().iter() {
            let m = &parts[pi].values[lin];
            for r in 0..6 {
                for c in 0..6 {
                    worst[r][c] = worst[r][c].max(m[(r, c)].abs());
                }
            }
        }
        println!("R_{pair} worst entries:");
        for r in 0..6 {
            let row: Vec<String> = (0..6).map(|c| format!("{:.1e}", worst[r][c])).collect();
            println!("  {:>2} | {}", names[r], row.join(" "));
        }
    }
    // also print omega_3 structure at the center node
    let mid = chart.index(&[8, 8, 8]);
    println!("omega_z(center) = {:.4}", conn.omega[2].values[mid]);
}
