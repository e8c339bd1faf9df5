fn main() {
    for m in [3usize, 4, 6, 8, 10, 12] {
        let t0 = std::time::Instant::now();
        let params = fbms_core::mesher::BuildParams::auto(0.0, m, 6.0);
        match fbms_core::mesher::build_initial_surface(&params) {
            Ok(mesh) => {
                let si = fbms_core::mesher::self_intersection_scan(&mesh);
                println!(
                    "m={m:2} a={:.3} ds={:.4} wb={:.2} V={} T={} chi={} loops={} area={:.4} minang={:.1} deg sym={:.2e} selfx={} [{:?}]",
                    params.a, params.delta_s, params.w_blend,
                    mesh.n_verts(), mesh.tris.len(), mesh.euler_characteristic(),
                    mesh.boundary_loops.len(), mesh.area(),
                    mesh.min_triangle_angle().to_degrees(),
                    mesh.symmetry_deviation(),
                    si.intersections.len(),
                    t0.elapsed()
                );
            }
            Err(e) => println!("m={m:2} FAILED: {e}"),
        }
    }
}
