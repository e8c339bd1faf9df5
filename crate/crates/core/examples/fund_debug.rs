use fbms_core::geom::*;
use fbms_core::mesher::*;
fn main() {
    // criterion 8 probe: weighted H-norm ratio m=6 vs m=12 at fixed rescaled res
    let mut norms = vec![];
    for m in [6usize, 12] {
        let mut p = BuildParams::auto(0.0, m, 6.0);
        p.a = 2.0; p.delta_s = 0.0823; p.w_blend = 1.0;
        let mesh = build_initial_surface(&p).unwrap();
        let h = mean_curvature_initial(&mesh);
        let n0 = weighted_norm(&mesh, &h.vals, 0, mesh.params.gamma, NormRegion::All);
        let hd = mean_curvature_discrete(&mesh, &mesh.pos);
        let n0d = weighted_norm(&mesh, &hd, 0, mesh.params.gamma, NormRegion::All);
        println!("m={m}: ||H||_0 analytic-override = {:.4}, discrete = {:.4}", n0, n0d);
        norms.push((n0, n0d));
    }
    println!("ratio analytic = {:.3}, discrete = {:.3}", norms[1].0/norms[0].0, norms[1].1/norms[0].1);
}
