//! Discrete differential geometry on the initial surfaces: normals, mean
//! curvature (sum-of-principal-curvatures convention), |A|^2, the boundary
//! angle, the twisted normal field and twisted graphs, the weighted norms of
//! the gluing scheme, and a geodesic exponential map for chart metrics.
//!
//! Sign conventions: H is evaluated against the mesh's global orientation as
//! (Laplace-Beltrami of the position) . nu, so that a normal perturbation by
//! phi changes H by (Delta + |A|^2) phi to first order.  With this choice the
//! unit sphere oriented by the inward normal has H = +2.

use crate::mesher::{Chart, SurfaceMesh};
use crate::scherk::{psi_cut, z_map_wing_j2};
use crate::util::vec3::Vec3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("degenerate triangle {0}")]
    DegenerateTriangle(usize),
    #[error("twisted normal denominator {0:.3} below 0.1 (near-parallel normals)")]
    NearParallel(f64),
    #[error("flow left the collar tube at vertex {0}")]
    FlowEscaped(usize),
    #[error("geodesic left the chart")]
    GeodesicEscaped,
}

/// Per-vertex values with their symmetry class.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub vals: Vec<f64>,
    /// true: odd under the rotoreflection; false: invariant.
    pub symmetric: bool,
}

impl ScalarField {
    pub fn symmetric(vals: Vec<f64>) -> Self {
        ScalarField { vals, symmetric: true }
    }

    pub fn invariant(vals: Vec<f64>) -> Self {
        ScalarField { vals, symmetric: false }
    }

    pub fn class_deviation(&self, mesh: &SurfaceMesh) -> f64 {
        mesh.class_deviation(&self.vals, self.symmetric)
    }
}

/// Barycentric (lumped) vertex areas.
pub fn vertex_areas(mesh: &SurfaceMesh, pos: &[Vec3]) -> Vec<f64> {
    let mut area = vec![0.0; pos.len()];
    for t in &mesh.tris {
        let a = 0.5
            * (pos[t[1] as usize] - pos[t[0] as usize])
                .cross(pos[t[2] as usize] - pos[t[0] as usize])
                .norm();
        for &v in t {
            area[v as usize] += a / 3.0;
        }
    }
    area
}

/// Area-weighted vertex normals following the stored winding.
pub fn vertex_normals(mesh: &SurfaceMesh, pos: &[Vec3]) -> Vec<Vec3> {
    let mut nrm = vec![Vec3::ZERO; pos.len()];
    for t in &mesh.tris {
        let n = (pos[t[1] as usize] - pos[t[0] as usize])
            .cross(pos[t[2] as usize] - pos[t[0] as usize]);
        for &v in t {
            nrm[v as usize] += n;
        }
    }
    nrm.into_iter().map(|n| n.normalized()).collect()
}

/// Cotangent mean curvature of an arbitrary vertex-position state.  Boundary
/// vertices report 0 (the boundary operator lives in the boundary angle).
pub fn mean_curvature_discrete(mesh: &SurfaceMesh, pos: &[Vec3]) -> Vec<f64> {
    let nrm = vertex_normals(mesh, pos);
    let area = vertex_areas(mesh, pos);
    let mut lap = vec![Vec3::ZERO; pos.len()];
    for t in &mesh.tris {
        let p = [pos[t[0] as usize], pos[t[1] as usize], pos[t[2] as usize]];
        for e in 0..3 {
            let (i, j) = (t[e] as usize, t[(e + 1) % 3] as usize);
            let (pi, pj, pk) = (p[e], p[(e + 1) % 3], p[(e + 2) % 3]);
            let u = pi - pk;
            let v = pj - pk;
            let cross = u.cross(v).norm().max(1e-300);
            let cot = u.dot(v) / cross;
            lap[i] += (pj - pi) * (0.5 * cot);
            lap[j] += (pi - pj) * (0.5 * cot);
        }
    }
    (0..pos.len())
        .map(|i| {
            if mesh.boundary_vertex[i] {
                0.0
            } else {
                (lap[i] / area[i].max(1e-300)).dot(nrm[i])
            }
        })
        .collect()
}

/// Mean curvature of the initial surface with analytic overrides on the wing
/// charts and the exactly minimal clipped pieces; the core stays discrete.
pub fn mean_curvature_initial(mesh: &SurfaceMesh) -> ScalarField {
    let mut h = mean_curvature_discrete(mesh, &mesh.pos);
    let nrm = vertex_normals(mesh, &mesh.pos);
    for v in 0..mesh.n_verts() {
        let (chart, u, w) = mesh.chart_of(v);
        match chart {
            Chart::Piece(_) => h[v] = 0.0,
            Chart::Wing(kind) => {
                let tile = mesh.tile[v] as usize;
                let y_global = mesh.tile_param_y(tile, u);
                let j = z_map_wing_j2(&mesh.deform, kind, y_global, w);
                let (hh, _aa, njet) = jet_curvatures(&j);
                let sign = if njet.dot(nrm[v]) >= 0.0 { 1.0 } else { -1.0 };
                h[v] = sign * hh;
            }
            _ => {}
        }
    }
    let mut f = ScalarField::symmetric(h);
    mesh.symmetrize(&mut f.vals, true);
    f
}

/// H, |A|^2 and the unit normal of a chart jet, with H signed against the
/// jet's own (d_y x d_s) normal.
pub fn jet_curvatures(j: &crate::util::jet::Jet2Vec) -> (f64, f64, Vec3) {
    let xy = j.d_y();
    let xs = j.d_s();
    let xyy = Vec3::new(j.x.d[3], j.y.d[3], j.z.d[3]);
    let xys = Vec3::new(j.x.d[4], j.y.d[4], j.z.d[4]);
    let xss = Vec3::new(j.x.d[5], j.y.d[5], j.z.d[5]);
    let n = xy.cross(xs).normalized();
    let (e, f, g) = (xy.dot(xy), xy.dot(xs), xs.dot(xs));
    let (l, m, nn) = (n.dot(xyy), n.dot(xys), n.dot(xss));
    let det = e * g - f * f;
    let h = (l * g - 2.0 * m * f + nn * e) / det;
    let k = (l * nn - m * m) / det;
    let a2 = (h * h - 2.0 * k).max(0.0);
    (h, a2, n)
}

/// |A|^2 with analytic overrides on charts and a quadric fit on the core.
pub fn second_form_norm2(mesh: &SurfaceMesh) -> ScalarField {
    let nrm = vertex_normals(mesh, &mesh.pos);
    let mut a2 = vec![0.0; mesh.n_verts()];
    for v in 0..mesh.n_verts() {
        let (chart, u, w) = mesh.chart_of(v);
        match chart {
            Chart::Piece(p) => a2[v] = mesh.atlas.second_form_norm2(p, u),
            Chart::Wing(kind) => {
                let y_global = mesh.tile_param_y(mesh.tile[v] as usize, u);
                let j = z_map_wing_j2(&mesh.deform, kind, y_global, w);
                a2[v] = jet_curvatures(&j).1;
            }
            _ => a2[v] = quadric_fit_a2(mesh, v, &nrm),
        }
    }
    let mut f = ScalarField::invariant(a2);
    mesh.symmetrize(&mut f.vals, false);
    f
}

/// Mesh-consistent |A|^2 from the quadric fit at every vertex, matching what
/// the discrete curvature operators can resolve; this is the potential the
/// solvers use.
pub fn second_form_norm2_fit(mesh: &SurfaceMesh) -> Vec<f64> {
    let nrm = vertex_normals(mesh, &mesh.pos);
    let mut a2: Vec<f64> =
        (0..mesh.n_verts()).map(|v| quadric_fit_a2(mesh, v, &nrm)).collect();
    mesh.symmetrize(&mut a2, false);
    a2
}

/// Fit a quadric over the two-ring in the vertex tangent frame; |A|^2 is the
/// squared Frobenius norm of the fitted shape operator.
fn quadric_fit_a2(mesh: &SurfaceMesh, v: usize, nrm: &[Vec3]) -> f64 {
    let p0 = mesh.pos[v];
    let n = nrm[v];
    let t1 = if n.x.abs() < 0.8 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let t1 = (t1 - n * t1.dot(n)).normalized();
    let t2 = n.cross(t1);
    let mut ring: Vec<u32> = mesh.vert_adj[v].clone();
    let one_ring = ring.clone();
    for &u in &one_ring {
        ring.extend_from_slice(&mesh.vert_adj[u as usize]);
    }
    ring.sort_unstable();
    ring.dedup();
    // least squares z = 1/2 a u^2 + b uv + 1/2 c v^2 + d u + e v
    let mut ata = [[0.0f64; 5]; 5];
    let mut atb = [0.0f64; 5];
    for &q in &ring {
        if q as usize == v {
            continue;
        }
        let d = mesh.pos[q as usize] - p0;
        let (uu, vv, zz) = (d.dot(t1), d.dot(t2), d.dot(n));
        let row = [0.5 * uu * uu, uu * vv, 0.5 * vv * vv, uu, vv];
        for i in 0..5 {
            for jj in 0..5 {
                ata[i][jj] += row[i] * row[jj];
            }
            atb[i] += row[i] * zz;
        }
    }
    for (i, r) in ata.iter_mut().enumerate() {
        r[i] += 1e-12;
    }
    let sol = solve5(&mut ata, &mut atb);
    let (a, b, c) = (sol[0], sol[1], sol[2]);
    a * a + 2.0 * b * b + c * c
}

fn solve5(a: &mut [[f64; 5]; 5], b: &mut [f64; 5]) -> [f64; 5] {
    let n = 5;
    for c in 0..n {
        let mut piv = c;
        for r in (c + 1)..n {
            if a[r][c].abs() > a[piv][c].abs() {
                piv = r;
            }
        }
        a.swap(c, piv);
        b.swap(c, piv);
        let d = a[c][c];
        if d.abs() < 1e-300 {
            continue;
        }
        for r in (c + 1)..n {
            let m = a[r][c] / d;
            for j in c..n {
                a[r][j] -= m * a[c][j];
            }
            b[r] -= m * b[c];
        }
    }
    let mut x = [0.0; 5];
    for c in (0..n).rev() {
        let mut s = b[c];
        for j in (c + 1)..n {
            s -= a[c][j] * x[j];
        }
        x[c] = if a[c][c].abs() > 1e-300 { s / a[c][c] } else { 0.0 };
    }
    x
}

/// Boundary angle Theta = nu . p at unit-sphere boundary vertices (zero at
/// interior vertices).
pub fn boundary_angle(mesh: &SurfaceMesh, pos: &[Vec3]) -> ScalarField {
    let nrm = vertex_normals(mesh, pos);
    let vals = (0..pos.len())
        .map(|v| {
            if mesh.boundary_vertex[v] {
                nrm[v].dot(pos[v]) / pos[v].norm()
            } else {
                0.0
            }
        })
        .collect();
    ScalarField::symmetric(vals)
}

// ---------------------------------------------------------------------------
// Twisted normal field and twisted graphs
// ---------------------------------------------------------------------------

/// Symmetric collar bump psi_cut[eps,0] psi_cut[-eps,0].
fn psi_eps(eps: f64, t: f64) -> f64 {
    psi_cut(eps, 0.0, t) * psi_cut(-eps, 0.0, t)
}

/// The twisted direction at a tube point q, anchored at the surface point
/// (p, nu_p): the surface term uses the anchored frame, the sphere term the
/// exact ambient field, so boundary flows stay tangent to the sphere.
fn twisted_dir(p: Vec3, nu_p: Vec3, eps: f64, q: Vec3) -> Result<Vec3, GeomError> {
    let rho_sigma = (q - p).dot(nu_p);
    let nu_eps = nu_p * psi_eps(eps, rho_sigma);
    let r = q.norm();
    let nu_b = if (r - 1.0).abs() < eps {
        (q / r) * psi_eps(eps, r - 1.0)
    } else {
        Vec3::ZERO
    };
    let dot = nu_eps.dot(nu_b);
    let denom = 1.0 - dot * dot;
    if denom < 0.1 {
        return Err(GeomError::NearParallel(denom));
    }
    Ok((nu_eps - nu_b * dot) / denom)
}

/// Per-vertex twisted normal on the surface itself.
pub fn twisted_normal(mesh: &SurfaceMesh, eps: f64) -> Result<Vec<Vec3>, GeomError> {
    let nrm = vertex_normals(mesh, &mesh.pos);
    let mut out = Vec::with_capacity(mesh.n_verts());
    for v in 0..mesh.n_verts() {
        out.push(twisted_dir(mesh.pos[v], nrm[v], eps, mesh.pos[v])?);
    }
    Ok(out)
}

/// Flow every vertex of a state along the twisted normal for its own time
/// phi(p), with a fourth-order integrator and step at most eps/16.
pub fn twisted_graph(
    mesh: &SurfaceMesh,
    pos: &[Vec3],
    phi: &[f64],
    eps: f64,
) -> Result<Vec<Vec3>, GeomError> {
    let nrm = vertex_normals(mesh, pos);
    let mut out = Vec::with_capacity(pos.len());
    for v in 0..pos.len() {
        let total = phi[v];
        if total == 0.0 {
            out.push(pos[v]);
            continue;
        }
        let n_steps = ((total.abs() / (eps / 16.0)).ceil() as usize).max(2);
        let h = total / n_steps as f64;
        let mut q = pos[v];
        let field = |x: Vec3| twisted_dir(pos[v], nrm[v], eps, x);
        for _ in 0..n_steps {
            let k1 = field(q)?;
            let k2 = field(q + k1 * (0.5 * h))?;
            let k3 = field(q + k2 * (0.5 * h))?;
            let k4 = field(q + k3 * h)?;
            q += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        if (q - pos[v]).norm() > eps + total.abs() {
            return Err(GeomError::FlowEscaped(v));
        }
        out.push(q);
    }
    Ok(out)
}

/// Tangential relaxation: slide interior vertices toward their one-ring
/// centroid within the tangent plane, keeping the surface shape; boundary
/// vertices slide along the sphere.  Stabilizes the triangle quality of
/// flowed states without moving the surface at leading order.
pub fn relax_tangential(mesh: &SurfaceMesh, pos: &[Vec3], passes: usize) -> Vec<Vec3> {
    let mut p: Vec<Vec3> = pos.to_vec();
    for _ in 0..passes {
        let nrm = vertex_normals(mesh, &p);
        let mut next = p.clone();
        for v in 0..p.len() {
            let nb = &mesh.vert_adj[v];
            if nb.len() < 3 {
                continue;
            }
            let mut c = Vec3::ZERO;
            for &u in nb {
                c += p[u as usize];
            }
            c = c / nb.len() as f64;
            let d = c - p[v];
            if mesh.boundary_vertex[v] {
                // slide along the sphere: tangential to both nu and the radial
                let r = p[v].normalized();
                let mut t = d - r * d.dot(r);
                t = t - nrm[v] * t.dot(nrm[v]);
                let q = p[v] + t * 0.5;
                next[v] = q.normalized() * p[v].norm();
            } else {
                let t = d - nrm[v] * d.dot(nrm[v]);
                next[v] = p[v] + t * 0.5;
            }
        }
        p = next;
    }
    p
}

// ---------------------------------------------------------------------------
// Weighted norms
// ---------------------------------------------------------------------------

/// Weight floors b_0 and b_2 of the global norm.
pub fn norm_floors(mesh: &SurfaceMesh) -> (f64, f64) {
    let p = &mesh.params;
    let b0 = (-5.0 * p.gamma * p.delta_s * p.m as f64).exp();
    let b2 = mesh.deform.lambda.powi(-6) * b0;
    (b0, b2)
}

/// Region filter for the weighted norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormRegion {
    All,
    /// s <= 5 delta_s m (the block).
    Block,
    /// s >= a_bar (the graph zone over the rotationally symmetric pieces).
    Graph,
}

fn in_region(mesh: &SurfaceMesh, v: usize, region: NormRegion) -> bool {
    match region {
        NormRegion::All => true,
        NormRegion::Block => mesh.s_val[v] <= mesh.regions.s_block + 1e-12,
        NormRegion::Graph => mesh.s_val[v] >= mesh.regions.a_bar - 1e-12,
    }
}

/// Discrete weighted norm ||u||_{k,beta,gamma}: lambda^{-k+1} times the sup
/// of the local magnitude against max(e^{-gamma s}, b_k), measured in the
/// lambda^{-2} g metric.  Hoelder seminorms are replaced by the largest
/// finite-difference ratio at chart scale.
pub fn weighted_norm(
    mesh: &SurfaceMesh,
    vals: &[f64],
    k: u32,
    gamma: f64,
    region: NormRegion,
) -> f64 {
    assert!(k == 0 || k == 2, "only k = 0 and k = 2 are defined");
    let lam = mesh.deform.lambda;
    let (b0, b2) = norm_floors(mesh);
    let bk = if k == 0 { b0 } else { b2 };
    let beta = mesh.params.beta;
    let fk = |v: usize| (-gamma * mesh.s_val[v]).exp().max(bk);

    let mut mag: Vec<f64> = vals.iter().map(|x| x.abs()).collect();
    if k == 2 {
        let grad = p1_gradient(mesh, &mesh.pos, vals);
        let hess = fd_hessian_norm(mesh, &mesh.pos, &grad);
        for v in 0..vals.len() {
            mag[v] += lam * grad[v].norm() + lam * lam * hess[v];
        }
    }
    let mut worst = 0.0f64;
    for v in 0..vals.len() {
        if !in_region(mesh, v, region) {
            continue;
        }
        let mut sur = 0.0f64;
        if k == 0 {
            for &u in &mesh.vert_adj[v] {
                let d = mesh.pos[v].dist(mesh.pos[u as usize]) / lam;
                if d > 1e-14 {
                    sur = sur.max((vals[v] - vals[u as usize]).abs() / d.powf(beta));
                }
            }
        }
        worst = worst.max((mag[v] + sur) / fk(v));
    }
    lam.powi(1 - k as i32) * worst
}

/// Combined norm of interior and boundary data of the global linear system.
pub fn pair_norm(mesh: &SurfaceMesh, e: &[f64], e_bdry: &[f64], gamma: f64) -> f64 {
    let lam = mesh.deform.lambda;
    let (b0, _) = norm_floors(mesh);
    let interior = weighted_norm(mesh, e, 0, gamma, NormRegion::All);
    let mut worst = 0.0f64;
    for lp in &mesh.boundary_loops {
        for w in 0..lp.len() {
            let v = lp[w] as usize;
            let vn = lp[(w + 1) % lp.len()] as usize;
            let d = mesh.pos[v].dist(mesh.pos[vn]) / lam;
            let mut m = e_bdry[v].abs();
            if d > 1e-14 {
                m += (e_bdry[v] - e_bdry[vn]).abs() / d;
            }
            worst = worst.max(m);
        }
    }
    interior.max(worst / b0)
}

/// P1 gradient averaged over incident triangles.
pub fn p1_gradient(mesh: &SurfaceMesh, pos: &[Vec3], vals: &[f64]) -> Vec<Vec3> {
    let mut grad = vec![Vec3::ZERO; vals.len()];
    let mut wsum = vec![0.0f64; vals.len()];
    for t in &mesh.tris {
        let (i, j, k) = (t[0] as usize, t[1] as usize, t[2] as usize);
        let (p0, p1, p2) = (pos[i], pos[j], pos[k]);
        let n = (p1 - p0).cross(p2 - p0);
        let a2 = n.norm();
        if a2 < 1e-300 {
            continue;
        }
        let nh = n / a2;
        let g = (nh.cross(p2 - p1) * vals[i]
            + nh.cross(p0 - p2) * vals[j]
            + nh.cross(p1 - p0) * vals[k])
            / a2;
        let w = 0.5 * a2;
        for &v in t {
            grad[v as usize] += g * w;
            wsum[v as usize] += w;
        }
    }
    for v in 0..vals.len() {
        if wsum[v] > 0.0 {
            grad[v] = grad[v] / wsum[v];
        }
    }
    grad
}

/// Second-derivative magnitude from gradient differences over edges.
fn fd_hessian_norm(mesh: &SurfaceMesh, pos: &[Vec3], grad: &[Vec3]) -> Vec<f64> {
    let mut h = vec![0.0f64; grad.len()];
    for v in 0..grad.len() {
        for &u in &mesh.vert_adj[v] {
            let d = pos[v].dist(pos[u as usize]);
            if d > 1e-14 {
                h[v] = h[v].max((grad[v] - grad[u as usize]).norm() / d);
            }
        }
    }
    h
}

// ---------------------------------------------------------------------------
// Geodesic exponential map on a chart metric
// ---------------------------------------------------------------------------

/// Chart metric for the exponential-map module: Euclidean or conformal
/// g = exp(2 u(x)) g_0 with u given analytically together with its gradient.
pub enum ChartMetric {
    Euclidean,
    Conformal {
        u: Box<dyn Fn(Vec3) -> f64>,
        grad_u: Box<dyn Fn(Vec3) -> Vec3>,
    },
}

impl ChartMetric {
    /// Geodesic acceleration gamma'' = -Gamma(gamma', gamma').
    fn accel(&self, x: Vec3, v: Vec3) -> Vec3 {
        match self {
            ChartMetric::Euclidean => Vec3::ZERO,
            ChartMetric::Conformal { grad_u, .. } => {
                // Gamma^k_ij = d_i u d_jk + d_j u d_ik - d_k u d_ij
                let g = grad_u(x);
                -(v * (2.0 * g.dot(v)) - g * v.norm2())
            }
        }
    }
}

/// Integrate the geodesic system from x with initial velocity v over unit
/// time with a fourth-order scheme.
pub fn riemannian_exp(metric: &ChartMetric, x: Vec3, v: Vec3) -> Result<Vec3, GeomError> {
    let steps = 64usize;
    let h = 1.0 / steps as f64;
    let mut q = x;
    let mut w = v;
    for _ in 0..steps {
        let (k1q, k1w) = (w, metric.accel(q, w));
        let (k2q, k2w) =
            (w + k1w * (0.5 * h), metric.accel(q + k1q * (0.5 * h), w + k1w * (0.5 * h)));
        let (k3q, k3w) =
            (w + k2w * (0.5 * h), metric.accel(q + k2q * (0.5 * h), w + k2w * (0.5 * h)));
        let (k4q, k4w) = (w + k3w * h, metric.accel(q + k3q * h, w + k3w * h));
        q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
        w += (k1w + k2w * 2.0 + k3w * 2.0 + k4w) * (h / 6.0);
        if q.norm() > 1.0 {
            return Err(GeomError::GeodesicEscaped);
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesher::BuildParams;

    fn small_mesh() -> SurfaceMesh {
        crate::mesher::build_initial_surface(&BuildParams::auto(0.0, 6, 5.0)).unwrap()
    }

    #[test]
    fn euclidean_exp_is_exact() {
        let m = ChartMetric::Euclidean;
        let x = Vec3::new(0.1, -0.2, 0.3);
        let v = Vec3::new(0.05, 0.02, -0.04);
        let q = riemannian_exp(&m, x, v).unwrap();
        assert!((q - (x + v)).norm() < 1e-12);
    }

    #[test]
    fn bump_metric_exp_quadratic_error() {
        let bump = ChartMetric::Conformal {
            u: Box::new(|x: Vec3| 0.5 * (1.0 + 0.1 * (-x.norm2()).exp()).ln()),
            grad_u: Box::new(|x: Vec3| {
                let e = (-x.norm2()).exp();
                let w = 1.0 + 0.1 * e;
                x * (-0.1 * e / w)
            }),
        };
        let x = Vec3::new(0.2, 0.1, -0.1);
        let fit_c = |scale: f64| -> f64 {
            let mut c: f64 = 0.0;
            for k in 0..20 {
                let ang = k as f64;
                let v = Vec3::new(ang.cos(), (1.3 * ang).sin(), (0.7 * ang).cos()).normalized()
                    * (0.1 * scale);
                let q = riemannian_exp(&bump, x, v).unwrap();
                c = c.max((q - (x + v)).norm() / v.norm2());
            }
            c
        };
        let c1 = fit_c(1.0);
        let c2 = fit_c(0.5);
        assert!(c1 > 0.0);
        assert!(c2 / c1 > 0.5 && c2 / c1 < 2.0, "C not stable: {c1} vs {c2}");
        // injectivity probe on |v| <= 1/(4 max(C,1)) by image separation
        let r = 0.25 / c1.max(1.0);
        let mut images = Vec::new();
        for i in 0..6 {
            for j in 0..4 {
                let th = i as f64;
                let ph = j as f64 * 0.7;
                let v = Vec3::new(th.cos() * ph.cos(), th.sin() * ph.cos(), ph.sin()) * r;
                images.push((v, riemannian_exp(&bump, x, v).unwrap()));
            }
        }
        for i in 0..images.len() {
            for j in (i + 1)..images.len() {
                let dv = (images[i].0 - images[j].0).norm();
                let dq = (images[i].1 - images[j].1).norm();
                assert!(dq > 0.4 * dv, "images collapse: {dq} vs {dv}");
            }
        }
    }

    #[test]
    fn initial_surface_curvatures() {
        let mesh = small_mesh();
        let h = mean_curvature_initial(&mesh);
        let lam = mesh.deform.lambda;
        let mut max_core: f64 = 0.0;
        for v in 0..mesh.n_verts() {
            if matches!(mesh.chart_of(v).0, Chart::Piece(_)) {
                assert_eq!(h.vals[v], 0.0);
            } else {
                max_core = max_core.max(h.vals[v].abs());
            }
        }
        // the block carries the bending error at neck scale; the blend zone
        // concentrates it into the middle third of the window
        assert!(max_core > 0.0 && max_core * lam < 160.0 * mesh.deform.tau, "scaled max H {}", max_core * lam);
        assert!(h.class_deviation(&mesh) < 1e-8);
        let a2 = second_form_norm2(&mesh);
        assert!(a2.vals.iter().all(|&x| x >= 0.0));
        assert!(a2.class_deviation(&mesh) < 1e-8);
    }

    #[test]
    fn boundary_theta_small_on_initial_surface() {
        let mesh = small_mesh();
        let th = boundary_angle(&mesh, &mesh.pos);
        let mut worst: f64 = 0.0;
        for v in 0..mesh.n_verts() {
            if mesh.boundary_vertex[v] {
                worst = worst.max(th.vals[v].abs());
            }
        }
        // exact free boundary up to the one-sided discrete-normal error
        assert!(worst < 2e-2, "boundary angle {worst}");
    }

    #[test]
    fn twisted_normal_properties() {
        let mesh = small_mesh();
        let eps = 0.1;
        let tn = twisted_normal(&mesh, eps).unwrap();
        let nrm = vertex_normals(&mesh, &mesh.pos);
        for v in 0..mesh.n_verts() {
            assert!((tn[v].dot(nrm[v]) - 1.0).abs() < 1e-8);
            let r = mesh.pos[v].norm();
            if mesh.boundary_vertex[v] {
                assert!(tn[v].dot(mesh.pos[v]).abs() / r < 1e-8);
            }
            if r < 1.0 - 1.1 * eps {
                assert!((tn[v] - nrm[v]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn twisted_graph_flow() {
        let mesh = small_mesh();
        let eps = 0.1;
        let zero = vec![0.0; mesh.n_verts()];
        let same = twisted_graph(&mesh, &mesh.pos, &zero, eps).unwrap();
        for v in 0..mesh.n_verts() {
            assert_eq!(same[v], mesh.pos[v]);
        }
        // collar-free phi agrees with the straight normal offset
        let nrm = vertex_normals(&mesh, &mesh.pos);
        let phi: Vec<f64> = (0..mesh.n_verts())
            .map(|v| if mesh.pos[v].norm() < 1.0 - 0.15 { 1e-3 } else { 0.0 })
            .collect();
        let moved = twisted_graph(&mesh, &mesh.pos, &phi, eps).unwrap();
        for v in 0..mesh.n_verts() {
            if phi[v] != 0.0 {
                assert!((moved[v] - (mesh.pos[v] + nrm[v] * phi[v])).norm() < 1e-10);
            }
        }
        // boundary vertices stay on the sphere
        let phib: Vec<f64> = (0..mesh.n_verts()).map(|_| 5e-4).collect();
        let moved2 = twisted_graph(&mesh, &mesh.pos, &phib, eps).unwrap();
        for v in 0..mesh.n_verts() {
            if mesh.boundary_vertex[v] {
                assert!((moved2[v].norm() - 1.0).abs() < 1e-8);
            }
        }
        // flow reversibility at small amplitude
        let back =
            twisted_graph(&mesh, &moved2, &phib.iter().map(|x| -x).collect::<Vec<_>>(), eps)
                .unwrap();
        // anchor-frame reversal differs at second order in phi times |A|;
        // check it away from the high-curvature blend zone
        for v in 0..mesh.n_verts() {
            if matches!(mesh.chart_of(v).0, Chart::Piece(_)) {
                assert!((back[v] - mesh.pos[v]).norm() < 1e-5);
            } else {
                assert!((back[v] - mesh.pos[v]).norm() < 1e-3);
            }
        }
    }

    #[test]
    fn weighted_norm_properties() {
        let mesh = small_mesh();
        let gamma = mesh.params.gamma;
        let lam = mesh.deform.lambda;
        // constant field, gamma = 0: the weight is max(1, b_0) = 1
        let c = 0.37;
        let vals = vec![c; mesh.n_verts()];
        let n0 = weighted_norm(&mesh, &vals, 0, 0.0, NormRegion::All);
        assert!((n0 - lam * c).abs() < 1e-12);
        // shrinking the weight pointwise never decreases the norm
        let n_small = weighted_norm(&mesh, &vals, 0, 0.2, NormRegion::All);
        let n_big = weighted_norm(&mesh, &vals, 0, 0.9, NormRegion::All);
        assert!(n_big >= n_small);
        // product bound on pseudo-random fields
        let mut state = 3u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        let u1: Vec<f64> = (0..mesh.n_verts()).map(|_| rnd()).collect();
        let u2: Vec<f64> = (0..mesh.n_verts()).map(|_| rnd()).collect();
        let prod: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a * b).collect();
        let np = weighted_norm(&mesh, &prod, 0, gamma, NormRegion::All);
        let n1 = weighted_norm(&mesh, &u1, 0, gamma, NormRegion::All);
        let n2 = weighted_norm(&mesh, &u2, 0, gamma, NormRegion::All);
        assert!(np <= 40.0 / lam * n1 * n2, "{np} vs {n1} * {n2}");
    }
}
