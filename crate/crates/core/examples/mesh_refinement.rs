//! Structured meshes, red refinement and newest vertex bisection.
//!
//! `cargo run --example mesh_refinement -- [steps]`

use dg_resmin::mesh::{Mesh, Rectangle};

fn main() -> dg_resmin::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let mesh = Mesh::structured(4, 4, Rectangle::new(0.0, 1.0, -1.0, 1.0))?;
    println!("initial: {} elements, {} vertices, h = {:.4}", mesh.num_elements(), mesh.num_vertices(), mesh.h());

    let red = mesh.refine_uniform_red().mesh;
    println!("red:     {} elements, h = {:.4}", red.num_elements(), red.h());

    // bisect everything touching the left edge, repeatedly
    let mut m = mesh;
    for step in 0..steps {
        let marks: Vec<usize> = (0..m.num_elements()).filter(|&t| m.centroid(t)[0] < 0.25).collect();
        m = m.bisect_marked(&marks)?.mesh;
        let worst = (0..m.num_elements()).map(|t| m.min_angle(t)).fold(f64::INFINITY, f64::min);
        println!(
            "bisect {step}: {} marked -> {} elements, min angle {:.1} deg",
            marks.len(),
            m.num_elements(),
            worst.to_degrees()
        );
    }
    let area: f64 = (0..m.num_elements()).map(|t| m.area(t)).sum();
    println!("total area {area:.15}");
    Ok(())
}
