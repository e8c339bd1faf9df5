//! Assembly of the discrete initial surfaces: the scaled desingularizing
//! block glued to the four clipped rotationally symmetric pieces, with region
//! tags, the global s-function, symmetry orbits and boundary loops.

mod checks;
mod fundamental;
mod io;

pub use checks::{self_intersection_scan, SelfIntersection};
pub use io::{read_obj, write_obj, write_sidecar};

use crate::rotsym::{self, ChartAtlas, CriticalConstants, WPiece};
use crate::scherk::{DeformParams, ScherkError, WingKind};
use crate::util::vec3::{Mat3, Vec3};
use std::collections::HashMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error(transparent)]
    Rotsym(#[from] rotsym::RotsymError),
    #[error(transparent)]
    Scherk(#[from] ScherkError),
    #[error("topology validation failed: {0}")]
    Topology(String),
    #[error("meshes are not identification-compatible: {0}")]
    Identification(String),
    #[error("self-intersection detected between triangles {0} and {1}")]
    SelfIntersection(usize, usize),
}

/// Chart owning a vertex, with its two parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Chart {
    /// Core y-graph chart over the (x, z) square.
    Central,
    /// Core collar extending a wing chart inward; params (y, t).
    Collar(WingKind),
    /// True wing of the block; params (y, s).
    Wing(WingKind),
    /// Clipped rotationally symmetric piece; params (s_chart, y).
    Piece(WPiece),
}

impl Chart {
    pub fn region_name(&self) -> &'static str {
        match self {
            Chart::Central | Chart::Collar(_) => "core",
            Chart::Wing(WingKind::HorPlus) => "hwing+",
            Chart::Wing(WingKind::HorMinus) => "hwing-",
            Chart::Wing(WingKind::VerPlus) => "vwing+",
            Chart::Wing(WingKind::VerMinus) => "vwing-",
            Chart::Piece(WPiece::KPlus) => "K+",
            Chart::Piece(WPiece::KMinus) => "K-",
            Chart::Piece(WPiece::Annulus) => "A",
            Chart::Piece(WPiece::Disk) => "D",
        }
    }

    pub fn is_block(&self) -> bool {
        !matches!(self, Chart::Piece(_))
    }
}

/// Seam membership of a fundamental vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seam {
    None,
    /// On the ambient plane angle 0 (Scherk y = 0).
    Zero,
    /// On the ambient plane angle pi/m (Scherk y = pi).
    Pi,
    /// The disk center, fixed by the whole group.
    Center,
}

/// Construction parameters for one initial surface.
#[derive(Debug, Clone, Copy)]
pub struct BuildParams {
    pub theta: f64,
    pub m: usize,
    /// Nodes per unit length in the Scherk-scale metric of the block.
    pub res: f64,
    /// Nodes per unit ambient length on the clipped pieces.
    pub res_w: f64,
    pub a: f64,
    pub delta_s: f64,
    pub w_blend: f64,
    /// Decay rate of the weighted norms.
    pub gamma: f64,
    /// Hoelder exponent carried as metadata by the norm surrogate.
    pub beta: f64,
}

impl BuildParams {
    /// Feasible defaults for a given (theta, m, res).  The wing offset and
    /// truncation scale are chosen per m so that the blend completes before
    /// the truncation window and the outer wing stays inside the unit ball.
    pub fn auto(theta: f64, m: usize, res: f64) -> BuildParams {
        // budget: a + 5*delta_s*m <= m ln(0.95 / r_theta), with r ~ r_crit;
        // within it, a wide truncation window keeps the peak curvature of
        // the glued surface low
        let r0 = 0.4605;
        let budget = m as f64 * (0.95_f64 / r0).ln();
        let mut w_blend = 1.0;
        let mut a = 2.0f64.min(budget - 3.0 * ((w_blend + 0.12) / 3.0));
        let mut sigma = (budget - a) / 5.0;
        if a < 1.0 {
            // shrink the blend window for very small m
            w_blend = 0.6;
            sigma = (w_blend + 0.12) / 3.0;
            a = (budget - 5.0 * sigma).min(2.0);
        }
        BuildParams {
            theta,
            m,
            res,
            res_w: (res * 5.0).max(32.0),
            a,
            delta_s: sigma / m as f64,
            w_blend,
            gamma: 0.75,
            beta: 0.75,
        }
    }

    pub fn deform(&self, consts: &CriticalConstants) -> Result<DeformParams, MeshError> {
        let fam = rotsym::family_at_theta(self.theta, consts)?;
        let z_rot = self.a.min(2.0);
        let dp = DeformParams {
            theta: self.theta,
            tau: 1.0 / self.m as f64,
            m: self.m,
            a: self.a,
            delta_s: self.delta_s,
            lambda: fam.r_hat / self.m as f64,
            w_blend: self.w_blend,
            z_id: 0.5 * z_rot,
            z_rot,
        };
        dp.validate(fam.r_hat, fam.z_theta)?;
        Ok(dp)
    }
}

/// Region thresholds of the semi-local solver.
#[derive(Debug, Clone, Copy)]
pub struct RegionMap {
    /// s-threshold of the block, 5 delta_s m.
    pub s_block: f64,
    /// Start of the graph region used for transplanting to W_theta.
    pub a_bar: f64,
}

impl RegionMap {
    pub fn new(params: &BuildParams) -> RegionMap {
        let s_block = 5.0 * params.delta_s * params.m as f64;
        // The paper's log lambda^{-7} exceeds the block at desk scale; clamp
        // into the window between the blend and the transplant cutoff, which
        // itself stops at the mesh seam.
        // the graph region starts as far out as the transplant cutoff allows
        let ell = 4.5 * params.delta_s * params.m as f64;
        let a_bar = (ell - 2.0).max(params.w_blend + 0.05);
        RegionMap { s_block, a_bar }
    }
}

/// The discrete initial surface.
pub struct SurfaceMesh {
    pub params: BuildParams,
    pub consts: CriticalConstants,
    pub deform: DeformParams,
    pub atlas: ChartAtlas,
    pub regions: RegionMap,

    /// Ambient vertex positions.
    pub pos: Vec<Vec3>,
    /// Flat Scherk-scale positions for block vertices (NaN elsewhere).
    pub flat: Vec<Vec3>,
    pub tris: Vec<[u32; 3]>,
    /// Per-vertex owning tile and fundamental vertex id.
    pub tile: Vec<u16>,
    pub fund_id: Vec<u32>,
    /// Per-fundamental-vertex chart records.
    pub chart: Vec<Chart>,
    pub chart_u: Vec<f64>,
    pub chart_v: Vec<f64>,
    pub s_val: Vec<f64>,

    /// Global vertex ids of the fundamental tile, in fundamental order.
    pub fund_global: Vec<u32>,
    /// Fundamental rotoreflection as a fundamental-vertex permutation.
    pub yfund: Vec<u32>,
    /// Seam flags of the fundamental vertices.
    pub seam: Vec<Seam>,
    /// Tile isometries; tile 0 is the identity.
    pub tile_maps: Vec<Mat3>,
    /// Vertex permutations and class signs of the three group generators.
    pub generators: Vec<(Vec<u32>, f64)>,

    /// Number of fundamental-tile triangles (the first block of `tris`).
    pub n_fund_tris: usize,
    pub boundary_loops: Vec<Vec<u32>>,
    /// Vertex adjacency (one-ring), sorted.
    pub vert_adj: Vec<Vec<u32>>,
    pub boundary_vertex: Vec<bool>,
}

impl SurfaceMesh {
    pub fn n_verts(&self) -> usize {
        self.pos.len()
    }

    pub fn n_tiles(&self) -> usize {
        self.tile_maps.len()
    }

    pub fn chart_of(&self, v: usize) -> (Chart, f64, f64) {
        let f = self.fund_id[v] as usize;
        (self.chart[f], self.chart_u[f], self.chart_v[f])
    }

    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for t in &self.tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.pos.len() as i64 - edges.len() as i64 + self.tris.len() as i64
    }

    pub fn area(&self) -> f64 {
        self.tris
            .iter()
            .map(|t| {
                let (a, b, c) =
                    (self.pos[t[0] as usize], self.pos[t[1] as usize], self.pos[t[2] as usize]);
                0.5 * (b - a).cross(c - a).norm()
            })
            .sum()
    }

    /// Largest positional deviation of any generator orbit.
    pub fn symmetry_deviation(&self) -> f64 {
        let gens = [
            Mat3::refl_plane(0.0),
            Mat3::refl_plane(PI / self.params.m as f64),
            rotorefl_matrix(self.params.m),
        ];
        let mut worst: f64 = 0.0;
        for (g, (perm, _)) in gens.iter().zip(&self.generators) {
            for v in 0..self.n_verts() {
                let img = g.apply(self.pos[v]);
                worst = worst.max(img.dist(self.pos[perm[v] as usize]));
            }
        }
        worst
    }

    /// Project a field onto the G_m-symmetric class (sign -1 under the
    /// rotoreflection) or the invariant class.
    pub fn symmetrize(&self, vals: &mut [f64], symmetric: bool) {
        // average over tiles onto the fundamental domain
        let nf = self.chart.len();
        let mut acc = vec![0.0f64; nf];
        let mut cnt = vec![0.0f64; nf];
        for v in 0..self.n_verts() {
            acc[self.fund_id[v] as usize] += vals[v];
            cnt[self.fund_id[v] as usize] += 1.0;
        }
        for f in 0..nf {
            acc[f] /= cnt[f].max(1.0);
        }
        // antisymmetrize (or symmetrize) under the fundamental rotoreflection
        let sign = if symmetric { -1.0 } else { 1.0 };
        let mut fund = vec![0.0f64; nf];
        for f in 0..nf {
            fund[f] = 0.5 * (acc[f] + sign * acc[self.yfund[f] as usize]);
        }
        for v in 0..self.n_verts() {
            vals[v] = fund[self.fund_id[v] as usize];
        }
    }

    /// Deviation of a field from its symmetry class.
    pub fn class_deviation(&self, vals: &[f64], symmetric: bool) -> f64 {
        let mut proj = vals.to_vec();
        self.symmetrize(&mut proj, symmetric);
        vals.iter().zip(&proj).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Exact projection to Scherk block coordinates (preimage lookup).
    pub fn project_to_scherk(&self, v: usize) -> Option<(Chart, f64, f64)> {
        let (c, u, w) = self.chart_of(v);
        if c.is_block() {
            Some((c, u, w))
        } else {
            None
        }
    }

    /// Closed-form projection of a vertex in the graph region onto W_theta:
    /// the base point of the wing graph, or the vertex itself on the clips.
    pub fn project_to_w(&self, v: usize) -> Option<(WPiece, f64, f64)> {
        let (c, u, w) = self.chart_of(v);
        let tile = self.tile[v] as usize;
        match c {
            Chart::Piece(p) => Some((p, u, w)),
            Chart::Wing(kind) => {
                let (y, s) = (u, w);
                let y_global = self.tile_param_y(tile, y);
                match kind {
                    WingKind::VerPlus | WingKind::VerMinus => {
                        let piece =
                            if kind == WingKind::VerPlus { WPiece::KPlus } else { WPiece::KMinus };
                        let zbar = self.deform.lambda
                            * (self.params.a + s)
                            * self.params.theta.cos();
                        let s_k = self.consts.z_crit * zbar / self.atlas.z_theta;
                        Some((piece, s_k, y_global / self.params.m as f64))
                    }
                    WingKind::HorPlus | WingKind::HorMinus => {
                        let sign = if kind == WingKind::HorPlus { 1.0 } else { -1.0 };
                        let rho = self.atlas.r_theta
                            * (sign * (self.params.a + s) / self.params.m as f64).exp();
                        let piece =
                            if kind == WingKind::HorPlus { WPiece::Annulus } else { WPiece::Disk };
                        Some((piece, rho, y_global / self.params.m as f64))
                    }
                }
            }
            _ => None,
        }
    }

    /// Scherk-parameter y of a vertex copy living on tile `k`, given the
    /// fundamental parameter y in [0, pi].
    pub fn tile_param_y(&self, k: usize, y: f64) -> f64 {
        let j = (k / 2) as f64;
        if k % 2 == 0 {
            2.0 * PI * j + y
        } else {
            2.0 * PI * (j + 1.0) - y
        }
    }

    pub fn min_triangle_angle(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for t in &self.tris {
            let p = [self.pos[t[0] as usize], self.pos[t[1] as usize], self.pos[t[2] as usize]];
            for k in 0..3 {
                let u = (p[(k + 1) % 3] - p[k]).normalized();
                let v = (p[(k + 2) % 3] - p[k]).normalized();
                worst = worst.min(u.dot(v).clamp(-1.0, 1.0).acos());
            }
        }
        worst
    }

    /// Sampled one-sided Hausdorff distance from mesh vertices to W_0.
    pub fn hausdorff_to_w0(&self) -> f64 {
        let base = ChartAtlas::new(0.0, &self.consts).expect("base atlas");
        let mut worst: f64 = 0.0;
        for v in 0..self.n_verts() {
            let p = self.pos[v];
            let rho = p.rho();
            // distance to the equatorial disk
            let mut d = p.z.abs().max(rho - 1.0);
            // distance to the two catenoid pieces via profile sampling
            for sign in [1.0, -1.0] {
                let mut best = f64::INFINITY;
                for k in 0..=60 {
                    let z = sign * self.consts.z_crit * k as f64 / 60.0;
                    let f = base.profile.eval(z * sign.signum() * if sign > 0.0 { 1.0 } else { -1.0 });
                    let q = ((rho - f).powi(2) + (p.z - z).powi(2)).sqrt();
                    best = best.min(q);
                }
                d = d.min(best);
            }
            worst = worst.max(d);
        }
        worst
    }
}

pub(crate) fn rotorefl_matrix(m: usize) -> Mat3 {
    let ang = PI / m as f64;
    let (s, c) = ang.sin_cos();
    Mat3([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, -1.0]])
}

/// Build the scaled desingularizing block together with the clipped pieces,
/// i.e. the full discrete initial surface M_{theta,m}.
pub fn build_initial_surface(params: &BuildParams) -> Result<SurfaceMesh, MeshError> {
    let mesh = build_initial_surface_unchecked(params)?;
    checks::validate_topology(&mesh)?;
    Ok(mesh)
}

/// Build without the topology gate, for diagnostics.
pub fn build_initial_surface_unchecked(params: &BuildParams) -> Result<SurfaceMesh, MeshError> {
    let consts = rotsym::solve_critical_constants()?;
    let deform = params.deform(&consts)?;
    let atlas = ChartAtlas::new(params.theta, &consts)?;
    let fund = fundamental::build_fundamental(params, &consts, &deform, &atlas)?;
    replicate(params, consts, deform, atlas, fund)
}

/// Identification of fields across the family: meshes built with the same
/// (m, res, windows) share connectivity, so transport is the identity on
/// vertex indices.  Errors if the plans differ.
pub fn identify_theta(mesh_0: &SurfaceMesh, mesh_t: &SurfaceMesh) -> Result<(), MeshError> {
    if mesh_0.n_verts() != mesh_t.n_verts() || mesh_0.tris.len() != mesh_t.tris.len() {
        return Err(MeshError::Identification(format!(
            "vertex/triangle counts differ: {}x{} vs {}x{}",
            mesh_0.n_verts(),
            mesh_0.tris.len(),
            mesh_t.n_verts(),
            mesh_t.tris.len()
        )));
    }
    for f in 0..mesh_0.chart.len() {
        if mesh_0.chart[f] != mesh_t.chart[f] {
            return Err(MeshError::Identification(format!("chart mismatch at {f}")));
        }
    }
    Ok(())
}

pub(crate) struct Fundamental {
    pub verts: Vec<FundVertex>,
    pub tris: Vec<[u32; 3]>,
}

pub(crate) struct FundVertex {
    pub chart: Chart,
    pub u: f64,
    pub v: f64,
    pub flat: Vec3,
    pub pos: Vec3,
    pub seam: Seam,
    pub s_val: f64,
    pub mirror: u32,
}

fn replicate(
    params: &BuildParams,
    consts: CriticalConstants,
    deform: DeformParams,
    atlas: ChartAtlas,
    fund: Fundamental,
) -> Result<SurfaceMesh, MeshError> {
    let m = params.m;
    let n_tiles = 2 * m;
    let nf = fund.verts.len();

    // tile isometries: tile 2j = rotation by 2 pi j / m, tile 2j+1 adds the
    // reflection about the plane at angle pi/m
    let mut tile_maps = Vec::with_capacity(n_tiles);
    for k in 0..n_tiles {
        let j = (k / 2) as f64;
        let rot = Mat3::rot_z(2.0 * PI * j / m as f64);
        if k % 2 == 0 {
            tile_maps.push(rot);
        } else {
            tile_maps.push(rot.mul(&Mat3::refl_plane(PI / m as f64)));
        }
    }

    // global ids with seam canonicalization
    let mut global_of = vec![vec![u32::MAX; nf]; n_tiles];
    let mut pos = Vec::new();
    let mut flat = Vec::new();
    let mut tile_v = Vec::new();
    let mut fund_id = Vec::new();
    let mut s_val = Vec::new();
    let mut center_id: Option<u32> = None;
    for k in 0..n_tiles {
        for f in 0..nf {
            if global_of[k][f] != u32::MAX {
                continue;
            }
            let fv = &fund.verts[f];
            let canon: Option<(usize, usize)> = match fv.seam {
                Seam::None => None,
                Seam::Center => {
                    if let Some(c) = center_id {
                        global_of[k][f] = c;
                        continue;
                    }
                    None
                }
                Seam::Pi => {
                    if k % 2 == 1 {
                        Some((k - 1, f))
                    } else {
                        None
                    }
                }
                Seam::Zero => {
                    if k % 2 == 1 {
                        Some(((k + 1) % n_tiles, f))
                    } else {
                        None
                    }
                }
            };
            if let Some((k2, f2)) = canon {
                if global_of[k2][f2] != u32::MAX {
                    global_of[k][f] = global_of[k2][f2];
                    continue;
                }
            }
            let id = pos.len() as u32;
            global_of[k][f] = id;
            if let Some((k2, f2)) = canon {
                global_of[k2][f2] = id;
            }
            if fv.seam == Seam::Center {
                center_id = Some(id);
            }
            pos.push(tile_maps[k].apply(fv.pos));
            // flat positions live in the Scherk parameter space of the tile
            let fl = if fv.chart.is_block() {
                let y_global = if k % 2 == 0 {
                    2.0 * PI * (k / 2) as f64 + fv.flat.y
                } else {
                    2.0 * PI * ((k / 2) as f64 + 1.0) - fv.flat.y
                };
                Vec3::new(fv.flat.x, y_global, fv.flat.z)
            } else {
                Vec3::new(f64::NAN, f64::NAN, f64::NAN)
            };
            flat.push(fl);
            tile_v.push(k as u16);
            fund_id.push(f as u32);
            s_val.push(fv.s_val);
        }
    }

    // triangles, with winding flipped on reflected tiles
    let n_fund_tris = fund.tris.len();
    let mut tris = Vec::with_capacity(fund.tris.len() * n_tiles);
    for k in 0..n_tiles {
        let flip = tile_maps[k].det() < 0.0;
        for t in &fund.tris {
            let g = [
                global_of[k][t[0] as usize],
                global_of[k][t[1] as usize],
                global_of[k][t[2] as usize],
            ];
            if g[0] == g[1] || g[1] == g[2] || g[0] == g[2] {
                continue; // degenerate copies can only arise at the center fan
            }
            tris.push(if flip { [g[0], g[2], g[1]] } else { g });
        }
    }

    // generator permutations, by matrix matching g . A_k = A_k' . R^e
    let gens_mats = [
        Mat3::refl_plane(0.0),
        Mat3::refl_plane(PI / m as f64),
        rotorefl_matrix(m),
    ];
    let rr = rotorefl_matrix(m);
    let match_tile = |target: &Mat3| -> Option<(usize, bool)> {
        let close = |a: &Mat3, b: &Mat3| {
            a.0.iter()
                .flatten()
                .zip(b.0.iter().flatten())
                .all(|(x, y)| (x - y).abs() < 1e-9)
        };
        for k2 in 0..n_tiles {
            if close(target, &tile_maps[k2]) {
                return Some((k2, false));
            }
            let with_r = tile_maps[k2].mul(&rr);
            if close(target, &with_r) {
                return Some((k2, true));
            }
        }
        None
    };
    let mut generators = Vec::new();
    for (gi, gmat) in gens_mats.iter().enumerate() {
        let sign = if gi == 2 { -1.0 } else { 1.0 };
        let mut perm = vec![0u32; pos.len()];
        for k in 0..n_tiles {
            let target = gmat.mul(&tile_maps[k]);
            let (k2, flips) = match_tile(&target).ok_or_else(|| {
                MeshError::Topology(format!("generator {gi} does not permute the tiles"))
            })?;
            for f in 0..nf {
                let v = global_of[k][f];
                let f2 = if flips { fund.verts[f].mirror as usize } else { f };
                perm[v as usize] = global_of[k2][f2];
            }
        }
        generators.push((perm, sign));
    }

    // adjacency and boundary structure
    let nv = pos.len();
    let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
    let mut vert_adj = vec![Vec::new(); nv];
    for t in &tris {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            vert_adj[a as usize].push(b);
            vert_adj[b as usize].push(a);
        }
    }
    for l in &mut vert_adj {
        l.sort_unstable();
        l.dedup();
    }
    let mut boundary_vertex = vec![false; nv];
    let mut bnd_next: HashMap<u32, Vec<u32>> = HashMap::new();
    for (&(a, b), &c) in &edge_count {
        if c == 1 {
            boundary_vertex[a as usize] = true;
            boundary_vertex[b as usize] = true;
            bnd_next.entry(a).or_default().push(b);
            bnd_next.entry(b).or_default().push(a);
        }
    }
    let mut seen = vec![false; nv];
    let mut boundary_loops = Vec::new();
    let mut starts: Vec<u32> = bnd_next.keys().copied().collect();
    starts.sort_unstable();
    for s in starts {
        if seen[s as usize] {
            continue;
        }
        let mut cycle = vec![s];
        seen[s as usize] = true;
        let mut cur = s;
        let mut prev = u32::MAX;
        loop {
            let nexts = &bnd_next[&cur];
            let nx = nexts.iter().copied().find(|&n| n != prev && !seen[n as usize]);
            match nx {
                Some(n) => {
                    seen[n as usize] = true;
                    cycle.push(n);
                    prev = cur;
                    cur = n;
                }
                None => break,
            }
        }
        boundary_loops.push(cycle);
    }

    let mut chart = Vec::with_capacity(nf);
    let mut chart_u = Vec::with_capacity(nf);
    let mut chart_v = Vec::with_capacity(nf);
    let mut yfund = Vec::with_capacity(nf);
    let mut seam = Vec::with_capacity(nf);
    for fv in &fund.verts {
        chart.push(fv.chart);
        chart_u.push(fv.u);
        chart_v.push(fv.v);
        yfund.push(fv.mirror);
        seam.push(fv.seam);
    }
    let fund_global = (0..nf).map(|f| global_of[0][f]).collect();

    let regions = RegionMap::new(params);
    Ok(SurfaceMesh {
        params: *params,
        consts,
        deform,
        atlas,
        regions,
        pos,
        flat,
        tris,
        tile: tile_v,
        fund_id,
        chart,
        chart_u,
        chart_v,
        s_val,
        fund_global,
        yfund,
        seam,
        n_fund_tris,
        tile_maps,
        generators,
        boundary_loops,
        vert_adj,
        boundary_vertex,
    })
}
