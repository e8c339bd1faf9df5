//! Fundamental-tile meshing.
//!
//! The tile covers Scherk parameter y in [0, pi] (a half period).  The core
//! is split into a central y-graph square in (x, z) and four collar patches
//! continuing the wing charts inward across the band where the (x, z) chart
//! degenerates; outside come the four truncated wings and the clipped
//! rotationally symmetric pieces.  Patches are meshed as ordered rows of
//! nodes and consecutive rows are zippered; every inter-patch joint reuses
//! the same node ids, so the tile is conforming by construction.

use super::{Chart, Fundamental, FundVertex, MeshError, Seam};
use crate::rotsym::{ChartAtlas, CriticalConstants, WPiece};
use crate::scherk::{core_map, desing_wing_j2, homothety, wing_point_on_s, DeformParams, WingKind};
use crate::util::vec3::Vec3;
use std::collections::HashMap;
use std::f64::consts::PI;


#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ZipKey {
    /// Pair chain nodes by the Scherk y-parameter.
    Y,
    /// Pair by the x-coordinate (the central patch rows).
    X,
}

struct Builder<'a> {
    params: &'a super::BuildParams,
    deform: &'a DeformParams,
    atlas: &'a ChartAtlas,
    plan_deform: DeformParams,
    plan_atlas: ChartAtlas,
    verts: Vec<FundVertex>,
    tris: Vec<[u32; 3]>,
    smoothable: Vec<bool>,
}

impl<'a> Builder<'a> {
    fn flat_of(&self, chart: Chart, u: f64, v: f64) -> Vec3 {
        match chart {
            Chart::Central => {
                let p = (u.sinh() * v.sinh()).clamp(-1.0, 1.0);
                Vec3::new(u, p.acos(), v)
            }
            Chart::Collar(kind) => {
                let (y, t) = (u, v);
                match kind {
                    WingKind::VerPlus => Vec3::new((y.cos() / t.sinh()).asinh(), y, t),
                    WingKind::VerMinus => Vec3::new(-(y.cos() / t.sinh()).asinh(), y, -t),
                    WingKind::HorPlus => Vec3::new(t, y, (y.cos() / t.sinh()).asinh()),
                    WingKind::HorMinus => Vec3::new(-t, y, -(y.cos() / t.sinh()).asinh()),
                }
            }
            Chart::Wing(kind) => wing_point_on_s(kind, u, v, self.params.a),
            Chart::Piece(_) => Vec3::new(f64::NAN, f64::NAN, f64::NAN),
        }
    }

    fn pos_of(&self, chart: Chart, u: f64, v: f64, flat: Vec3) -> Vec3 {
        match chart {
            Chart::Central | Chart::Collar(_) => {
                homothety(self.deform, core_map(self.deform, flat))
            }
            Chart::Wing(kind) => {
                homothety(self.deform, desing_wing_j2(self.deform, kind, u, v).val())
            }
            Chart::Piece(p) => self.atlas.position(p, u, v / self.params.m as f64),
        }
    }

    /// Position of a record in the theta = 0 member of the family, used for
    /// all discrete decisions so connectivity is identical across theta.
    fn pos_plan(&self, chart: Chart, u: f64, v: f64, flat: Vec3) -> Vec3 {
        match chart {
            Chart::Central | Chart::Collar(_) => {
                homothety(&self.plan_deform, core_map(&self.plan_deform, flat))
            }
            Chart::Wing(kind) => {
                homothety(&self.plan_deform, desing_wing_j2(&self.plan_deform, kind, u, v).val())
            }
            Chart::Piece(p) => self.plan_atlas.position(p, u, v / self.params.m as f64),
        }
    }

    fn add(&mut self, chart: Chart, u: f64, v: f64, smooth: bool) -> u32 {
        let flat = self.flat_of(chart, u, v);
        let pos = self.pos_of(chart, u, v, flat);
        let seam = match chart {
            Chart::Central => Seam::None,
            Chart::Collar(_) | Chart::Wing(_) => {
                if u == 0.0 {
                    Seam::Zero
                } else if u == PI {
                    Seam::Pi
                } else {
                    Seam::None
                }
            }
            Chart::Piece(_) => {
                if v == 0.0 {
                    Seam::Zero
                } else if v == PI {
                    Seam::Pi
                } else {
                    Seam::None
                }
            }
        };
        let id = self.verts.len() as u32;
        self.verts.push(FundVertex {
            chart,
            u,
            v,
            flat,
            pos,
            seam,
            s_val: 0.0,
            mirror: u32::MAX,
        });
        self.smoothable.push(smooth && seam == Seam::None);
        id
    }

    /// Zip coordinate of a vertex with respect to the zipping key of the
    /// patch.  Chains are monotone in their key, so pairing by it keeps
    /// sheared strips upright.
    fn zip_coord(&self, key: ZipKey, v: u32) -> f64 {
        let fv = &self.verts[v as usize];
        match key {
            ZipKey::X => fv.flat.x,
            ZipKey::Y => match fv.chart {
                Chart::Piece(_) => fv.v,
                _ => fv.flat.y,
            },
        }
    }

    fn zipper(&mut self, key: ZipKey, lower: &[u32], upper: &[u32]) {
        let mut ta: Vec<f64> = lower.iter().map(|&v| self.zip_coord(key, v)).collect();
        let mut tb: Vec<f64> = upper.iter().map(|&v| self.zip_coord(key, v)).collect();
        // chains run in a consistent geometric direction; orient ascending
        if ta.last().unwrap() < ta.first().unwrap() {
            for t in ta.iter_mut().chain(tb.iter_mut()) {
                *t = -*t;
            }
        }
        let (mut i, mut j) = (0usize, 0usize);
        while i + 1 < lower.len() || j + 1 < upper.len() {
            let adv_a = if j + 1 >= upper.len() {
                true
            } else if i + 1 >= lower.len() {
                false
            } else {
                ta[i + 1] <= tb[j + 1]
            };
            if adv_a {
                if lower[i] != lower[i + 1] && lower[i + 1] != upper[j] {
                    self.tris.push([lower[i], lower[i + 1], upper[j]]);
                }
                i += 1;
            } else {
                if upper[j] != upper[j + 1] && lower[i] != upper[j + 1] {
                    self.tris.push([lower[i], upper[j + 1], upper[j]]);
                }
                j += 1;
            }
        }
    }

    fn zipper_rows(&mut self, key: ZipKey, rows: &[Vec<u32>]) {
        for w in rows.windows(2) {
            self.zipper(key, &w[0], &w[1]);
        }
    }
}

fn y_grid(res: f64) -> Vec<f64> {
    let mut n = (PI * res).ceil() as usize;
    if n % 2 == 1 {
        n += 1;
    }
    n = n.max(10);
    let step = PI / n as f64;
    (0..=n).map(|j| j as f64 * step).collect()
}

/// Halve an angular node set while it stays denser than the target count.
/// Kept indices are chosen mirror-symmetrically so the seam reflection still
/// maps the node set onto itself.
fn coarsen(row_ys: &[f64], target: usize) -> Vec<f64> {
    let mut cur: Vec<f64> = row_ys.to_vec();
    while cur.len() >= 2 * target.max(2) && cur.len() > 3 {
        let n = cur.len() - 1;
        let mut keep: Vec<usize> = Vec::new();
        let mut i = 0;
        while 2 * i <= n {
            keep.push(i);
            i += 1;
            let _ = i;
            i += 1;
        }
        let mut idx: std::collections::BTreeSet<usize> = keep.iter().copied().collect();
        for &k in &keep {
            idx.insert(n - k);
        }
        cur = idx.into_iter().map(|k| cur[k]).collect();
    }
    cur
}

pub(super) fn build_fundamental(
    params: &super::BuildParams,
    consts: &CriticalConstants,
    deform: &DeformParams,
    atlas: &ChartAtlas,
) -> Result<Fundamental, MeshError> {
    let mut b = Builder {
        params,
        deform,
        atlas,
        plan_deform: DeformParams {
            theta: 0.0,
            lambda: consts.r_crit / params.m as f64,
            ..*deform
        },
        plan_atlas: ChartAtlas::new(0.0, consts).expect("base atlas"),
        verts: Vec::new(),
        tris: Vec::new(),
        smoothable: Vec::new(),
    };
    let a = params.a;
    let res = params.res;
    let ys = y_grid(res);
    let ystep = ys[1] - ys[0];
    let s_seam = deform.seam_s();
    // central half-width: above the wing-interface corner x*(a) so the seam
    // arcs cross the lines z = +-c inside the horizontal collars, and below
    // arcsinh(1) so the central y-graph chart stays regular
    let x_star = (1.0 / a.sinh()).asinh();
    let c = (0.78f64).max(x_star + 0.03).min(0.86).min(a - 0.1);
    let t_c = (1.0 / c.sinh()).asinh();
    if t_c >= a - 0.02 {
        return Err(MeshError::Topology(format!(
            "wing offset a = {a} too small for the collar layout (corner at {t_c:.3})"
        )));
    }

    // v-stations: uniform from c out to a
    let n_t = (((a - c) * res * 1.3).ceil() as usize).max(3);
    let stations: Vec<f64> = (0..=n_t).map(|k| c + (a - c) * k as f64 / n_t as f64).collect();
    let k_last = stations.len() - 1;
    // h-stations: uniform with one snapped onto the corner t_c
    let mut h_stations = stations.clone();
    {
        let mut nearest = 1;
        for (k, t) in h_stations.iter().enumerate().skip(1) {
            if k < h_stations.len() - 1 && (t - t_c).abs() < (h_stations[nearest] - t_c).abs() {
                nearest = k;
            }
        }
        h_stations[nearest] = t_c;
        h_stations.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
    }

    // interior v-collar rows: the full uniform y-grid with exact seam ends
    let v_row_plain = |b: &mut Builder, kind: WingKind, t: f64, smooth: bool| -> Vec<u32> {
        ys.iter().map(|&y| b.add(Chart::Collar(kind), y, t, smooth)).collect()
    };

    // station-c rows carry extra nodes where the horizontal collar rows end:
    // outer nodes at x = +-t_k on z = +-c, the central corners at (+-c, +-c),
    // and the seam ends which are the corner-arc points (+-t_c, +-c).
    // registries: h_end[(quadrant, h-station index)] -> node id
    let mut h_end: HashMap<(u8, usize), u32> = HashMap::new();
    // y-parameter of the point x = t on a station-c row of the given collar
    let y_at = |t: f64| -> f64 { (t.sinh() * c.sinh()).min(1.0).acos() };
    let y_corner = y_at(c);
    let base_row = |b: &mut Builder,
                        h_end: &mut HashMap<(u8, usize), u32>,
                        kind: WingKind|
     -> (Vec<u32>, usize, usize) {
        // quadrants of the low-y / high-y halves of this row
        let (q_low, q_high) = match kind {
            WingKind::VerPlus => (0u8, 1u8),  // (+,+) and (-,+)
            WingKind::VerMinus => (3u8, 2u8), // (-,-) and (+,-)
            _ => unreachable!(),
        };
        let mut row = Vec::new();
        // seam end = corner-arc point, reused later by the h-row at t_c
        let seam_lo = b.add(Chart::Collar(kind), 0.0, c, false);
        h_end.insert((q_low, usize::MAX), seam_lo);
        row.push(seam_lo);
        // outer nodes at descending x = t_k (increasing y), strictly inside (c, t_c)
        for (k, &t) in h_stations.iter().enumerate().rev() {
            if t < t_c - 1e-12 && t > c + 1e-12 {
                let id = b.add(Chart::Collar(kind), y_at(t), c, false);
                h_end.insert((q_low, k), id);
                row.push(id);
            }
        }
        let corner_lo = b.add(Chart::Collar(kind), y_corner, c, false);
        row.push(corner_lo);
        let lo_idx = row.len() - 1;
        for &y in ys.iter() {
            if y > y_corner + 0.35 * ystep && y < PI - y_corner - 0.35 * ystep {
                row.push(b.add(Chart::Collar(kind), y, c, false));
            }
        }
        let corner_hi = b.add(Chart::Collar(kind), PI - y_corner, c, false);
        row.push(corner_hi);
        let hi_idx = row.len() - 1;
        for (k, &t) in h_stations.iter().enumerate() {
            if t < t_c - 1e-12 && t > c + 1e-12 {
                let id = b.add(Chart::Collar(kind), PI - y_at(t), c, false);
                h_end.insert((q_high, k), id);
                row.push(id);
            }
        }
        let seam_hi = b.add(Chart::Collar(kind), PI, c, false);
        h_end.insert((q_high, usize::MAX), seam_hi);
        row.push(seam_hi);
        (row, lo_idx, hi_idx)
    };

    let (vplus_c, vp_lo, vp_hi) = base_row(&mut b, &mut h_end, WingKind::VerPlus);
    let (vminus_c, vm_lo, vm_hi) = base_row(&mut b, &mut h_end, WingKind::VerMinus);

    let mut vplus_rows = vec![vplus_c.clone()];
    let mut vminus_rows = vec![vminus_c.clone()];
    for (si, &t) in stations.iter().enumerate().skip(1) {
        let smooth = si < k_last;
        vplus_rows.push(v_row_plain(&mut b, WingKind::VerPlus, t, smooth));
        vminus_rows.push(v_row_plain(&mut b, WingKind::VerMinus, t, smooth));
    }
    b.zipper_rows(ZipKey::Y, &vplus_rows);
    let vminus_rev: Vec<Vec<u32>> = vminus_rows.iter().rev().cloned().collect();
    b.zipper_rows(ZipKey::Y, &vminus_rev);

    // central rows bottom to top, ordered by increasing x; the boundary rows
    // are the corner-to-corner subchains of the station-c rows
    let n_zc = {
        let mut n = ((2.0 * c) * res * 1.3).ceil() as usize;
        if n % 2 == 1 {
            n += 1;
        }
        n.max(4)
    };
    // v-minus row runs x increasing with y; v-plus decreasing
    let bottom_row: Vec<u32> = vminus_c[vm_lo..=vm_hi].to_vec();
    let top_row: Vec<u32> = {
        let mut r = vplus_c[vp_lo..=vp_hi].to_vec();
        r.reverse();
        r
    };
    let mut central_rows: Vec<Vec<u32>> = vec![bottom_row.clone()];
    let mut left_chain = vec![bottom_row[0]];
    let mut right_chain = vec![*bottom_row.last().unwrap()];
    for k in 1..n_zc {
        let z = -c + 2.0 * c * k as f64 / n_zc as f64;
        let mut row = vec![b.add(Chart::Central, -c, z, false)];
        for kx in 1..n_zc {
            let x = -c + 2.0 * c * kx as f64 / n_zc as f64;
            row.push(b.add(Chart::Central, x, z, true));
        }
        row.push(b.add(Chart::Central, c, z, false));
        left_chain.push(row[0]);
        right_chain.push(*row.last().unwrap());
        central_rows.push(row);
    }
    central_rows.push(top_row.clone());
    left_chain.push(top_row[0]);
    right_chain.push(*top_row.last().unwrap());
    b.zipper_rows(ZipKey::X, &central_rows);

    // h-collar rows for stations beyond c, ordered by increasing z; their end
    // nodes below the corner come from the registries, beyond it they reach
    // the seams on their own
    let h_row = |b: &mut Builder,
                     h_end: &HashMap<(u8, usize), u32>,
                     kind: WingKind,
                     k: usize,
                     t: f64,
                     smooth: bool|
     -> Vec<u32> {
        // quadrants: z > 0 end and z < 0 end of this row
        let (q_top, q_bot) = match kind {
            WingKind::HorPlus => (0u8, 2u8),  // (+,+) and (+,-)
            WingKind::HorMinus => (1u8, 3u8), // (-,+) and (-,-)
            _ => unreachable!(),
        };
        // y at the z > 0 end: for h+, low y is high z; for h-, high y is high z
        // candidate interior y-values, trimmed where the row in 3D crowds
        // against its own end nodes (the rows bend parallel to the base row
        // near their ends)
        let trim = |b: &Builder, interior: Vec<f64>, end_lo: Vec3, end_hi: Vec3| -> Vec<f64> {
            interior
                .into_iter()
                .filter(|&y| {
                    let q = b.flat_of(Chart::Collar(kind), y, t);
                    q.dist(end_lo) > 0.55 * ystep && q.dist(end_hi) > 0.55 * ystep
                })
                .collect()
        };
        let mut row = Vec::new();
        if t < t_c + 1e-12 {
            let key = if t < t_c - 1e-12 { k } else { usize::MAX };
            let (ylo, yhi) = if t < t_c - 1e-12 { (y_at(t), PI - y_at(t)) } else { (0.0, PI) };
            let (e_lo, e_hi) = match kind {
                WingKind::HorPlus => (h_end[&(q_top, key)], h_end[&(q_bot, key)]),
                _ => (h_end[&(q_bot, key)], h_end[&(q_top, key)]),
            };
            let cand: Vec<f64> = ys
                .iter()
                .copied()
                .filter(|&y| y > ylo + 0.35 * ystep && y < yhi - 0.35 * ystep)
                .collect();
            let keep = trim(
                b,
                cand,
                b.verts[e_lo as usize].flat,
                b.verts[e_hi as usize].flat,
            );
            row.push(e_lo);
            for y in keep {
                row.push(b.add(Chart::Collar(kind), y, t, smooth));
            }
            row.push(e_hi);
        } else {
            let e_lo = b.flat_of(Chart::Collar(kind), 0.0, t);
            let e_hi = b.flat_of(Chart::Collar(kind), PI, t);
            let cand: Vec<f64> = ys
                .iter()
                .copied()
                .filter(|&y| y > 0.35 * ystep && y < PI - 0.35 * ystep)
                .collect();
            let keep = trim(b, cand, e_lo, e_hi);
            row.push(b.add(Chart::Collar(kind), 0.0, t, smooth && false));
            for y in keep {
                row.push(b.add(Chart::Collar(kind), y, t, smooth));
            }
            row.push(b.add(Chart::Collar(kind), PI, t, smooth && false));
        }
        row
    };

    // chains are kept in y-order; the central end chains run z-increasing
    // which is y-decreasing on the right side
    let mut right_chain_y = right_chain;
    right_chain_y.reverse();
    let mut hplus_rows: Vec<Vec<u32>> = vec![right_chain_y];
    let mut hminus_chain_rows: Vec<Vec<u32>> = vec![left_chain];
    let h_last = h_stations.len() - 1;
    for (k, &t) in h_stations.iter().enumerate().skip(1) {
        let smooth = k < h_last;
        hplus_rows.push(h_row(&mut b, &h_end, WingKind::HorPlus, k, t, smooth));
        hminus_chain_rows.push(h_row(&mut b, &h_end, WingKind::HorMinus, k, t, smooth));
    }
    b.zipper_rows(ZipKey::Y, &hplus_rows);
    let hminus_rows: Vec<Vec<u32>> = hminus_chain_rows.into_iter().rev().collect();
    b.zipper_rows(ZipKey::Y, &hminus_rows);

    // ---- wings -----------------------------------------------------------
    // rows at s-levels, row 0 shared with the collar interface at t = a;
    // levels follow ambient arclength of the deformed map so the bending
    // blend cannot compress consecutive rows (computed at theta = 0 so the
    // plan is identical across the family)
    let plan_deform = b.plan_deform;
    let plan_atlas = b.plan_atlas.clone();
    let wing_levels = |kind: WingKind| -> Vec<f64> {
        let nsamp = 240;
        // accumulate ambient arclength weighted by the local curvature so the
        // truncation window is resolved by several rows
        let lam = plan_deform.lambda;
        let mut arc = vec![0.0f64];
        let mut prev = homothety(&plan_deform, desing_wing_j2(&plan_deform, kind, PI / 2.0, 0.0).val());
        for k in 1..=nsamp {
            let sv = s_seam * k as f64 / nsamp as f64;
            // sample curvature at a mirror-fair pair of angles so the level
            // plan is identical for mirrored wings
            let a2 = [0.3, PI - 0.3]
                .into_iter()
                .map(|yy| {
                    let j = desing_wing_j2(&plan_deform, kind, yy, sv);
                    let jj = crate::util::jet::Jet2Vec {
                        x: j.x * lam,
                        y: j.y * lam,
                        z: j.z * lam,
                    };
                    crate::geom::jet_curvatures(&jj).1
                })
                .fold(0.0f64, f64::max);
            let weight = (1.0 + a2.sqrt() * lam / res * 1.2).min(5.0);
            let q = homothety(&plan_deform, desing_wing_j2(&plan_deform, kind, PI / 2.0, sv).val());
            arc.push(arc.last().unwrap() + weight * q.dist(prev).max(1e-12));
            prev = q;
        }
        let total = *arc.last().unwrap();
        let n_s = ((total / plan_deform.lambda * res).ceil() as usize).max(4);
        let mut levels = Vec::with_capacity(n_s);
        let mut j = 0usize;
        for k in 1..=n_s {
            let target = total * k as f64 / n_s as f64;
            while j + 2 < arc.len() && arc[j + 1] < target {
                j += 1;
            }
            let frac =
                if arc[j + 1] > arc[j] { (target - arc[j]) / (arc[j + 1] - arc[j]) } else { 0.0 };
            levels.push(s_seam * (j as f64 + frac.clamp(0.0, 1.0)) / nsamp as f64);
        }
        *levels.last_mut().unwrap() = s_seam;
        levels
    };
    let mut wing_last: HashMap<WingKind, Vec<u32>> = HashMap::new();
    for kind in WingKind::all() {
        let interface = match kind {
            WingKind::VerPlus => vplus_rows[k_last].clone(),
            WingKind::VerMinus => vminus_rows[k_last].clone(),
            WingKind::HorPlus => hplus_rows.last().unwrap().clone(),
            WingKind::HorMinus => hminus_rows[0].clone(),
        };
        let mut rows = vec![interface];
        let levels = wing_levels(kind);
        for (k, &s) in levels.iter().enumerate() {
            let smooth = k + 1 < levels.len();
            let row: Vec<u32> =
                ys.iter().map(|&y| b.add(Chart::Wing(kind), y, s, smooth)).collect();
            rows.push(row);
        }
        b.zipper_rows(ZipKey::Y, &rows);
        wing_last.insert(kind, rows.last().unwrap().clone());
    }

    // ---- clipped pieces ----------------------------------------------------
    let m = params.m as f64;
    let res_w = params.res_w;
    let lam = deform.lambda;
    let zbar_seam = lam * (a + s_seam) * params.theta.cos();
    // K+- : chart s from the seam value to z_crit (the sphere); counts come
    // from the theta = 0 plan so connectivity is identical across the family
    let s_k_seam = consts.z_crit * zbar_seam / atlas.z_theta;
    let zbar_seam_plan = plan_deform.lambda * (a + s_seam);
    let s_k_seam_plan = consts.z_crit * zbar_seam_plan / plan_atlas.z_theta;
    for (piece, kind) in [(WPiece::KPlus, WingKind::VerPlus), (WPiece::KMinus, WingKind::VerMinus)]
    {
        let arc = ambient_arc(&plan_atlas, piece, s_k_seam_plan, consts.z_crit);
        let h_fine = plan_deform.lambda * ystep * 1.2;
        let fracs = graded_fractions(arc, h_fine, 1.0 / res_w);
        let n_rows = fracs.len();
        let mut rows = vec![wing_last[&kind].clone()];
        let mut prev_ys: Vec<f64> = ys.clone();
        let mut prev_f = 0.0;
        for (k, &f) in fracs.iter().enumerate() {
            let s = s_k_seam + (consts.z_crit - s_k_seam) * f;
            let s_plan = s_k_seam_plan + (consts.z_crit - s_k_seam_plan) * f;
            let radius = plan_atlas.position(piece, s_plan, 0.0).rho();
            let h_local = (arc * (f - prev_f)).max(1e-9);
            prev_f = f;
            let target = ((radius * PI / m) / h_local).ceil() as usize + 2;
            let row_ys = coarsen(&prev_ys, target.max(4));
            let smooth = k + 1 < n_rows;
            let row: Vec<u32> =
                row_ys.iter().map(|&y| b.add(Chart::Piece(piece), s, y, smooth)).collect();
            prev_ys = row_ys;
            rows.push(row);
        }
        b.zipper_rows(ZipKey::Y, &rows);
    }
    // annulus: radius from the seam value out to 1 (the sphere)
    {
        let rho_seam = atlas.r_theta * ((a + s_seam) / m).exp();
        let rho_seam_plan = plan_atlas.r_theta * ((a + s_seam) / m).exp();
        let h_fine = plan_deform.lambda * ystep * 1.2;
        let fracs = graded_fractions(1.0 - rho_seam_plan, h_fine, 1.0 / res_w);
        let n_rows = fracs.len();
        let mut rows = vec![wing_last[&WingKind::HorPlus].clone()];
        let mut prev_ys: Vec<f64> = ys.clone();
        let mut prev_f = 0.0;
        for (k, &f) in fracs.iter().enumerate() {
            let s = rho_seam + (1.0 - rho_seam) * f;
            let s_plan = rho_seam_plan + (1.0 - rho_seam_plan) * f;
            let h_local = ((1.0 - rho_seam_plan) * (f - prev_f)).max(1e-9);
            prev_f = f;
            let target = ((s_plan * PI / m) / h_local).ceil() as usize + 2;
            let row_ys = coarsen(&prev_ys, target.max(4));
            let smooth = k + 1 < n_rows;
            let row: Vec<u32> =
                row_ys.iter().map(|&y| b.add(Chart::Piece(WPiece::Annulus), s, y, smooth)).collect();
            prev_ys = row_ys;
            rows.push(row);
        }
        b.zipper_rows(ZipKey::Y, &rows);
    }
    // disk: radius from the inner seam down to a small fan around the center
    {
        let rho_seam = atlas.r_theta * (-(a + s_seam) / m).exp();
        let rho_seam_plan = plan_atlas.r_theta * (-(a + s_seam) / m).exp();
        let h_fine = plan_deform.lambda * ystep * 1.2;
        let mut fracs = graded_fractions(rho_seam_plan, h_fine, 1.0 / res_w);
        fracs.pop(); // keep a fan hole at the center
        let mut rows = vec![wing_last[&WingKind::HorMinus].clone()];
        let mut prev_ys: Vec<f64> = ys.clone();
        let mut prev_f = 0.0;
        for &f in fracs.iter() {
            let s = rho_seam * (1.0 - f);
            let s_plan = rho_seam_plan * (1.0 - f);
            let h_local = (rho_seam_plan * (f - prev_f)).max(1e-9);
            prev_f = f;
            let target = ((s_plan * PI / m) / h_local).ceil() as usize + 1;
            let row_ys = coarsen(&prev_ys, target.max(2));
            let row: Vec<u32> =
                row_ys.iter().map(|&y| b.add(Chart::Piece(WPiece::Disk), s, y, true)).collect();
            prev_ys = row_ys;
            rows.push(row);
        }
        b.zipper_rows(ZipKey::Y, &rows);
        // center fan
        let center = b.add(Chart::Piece(WPiece::Disk), 0.0, 0.0, false);
        b.verts[center as usize].seam = Seam::Center;
        let last = rows.last().unwrap().clone();
        for w in last.windows(2) {
            b.tris.push([w[0], center, w[1]]);
        }
    }

    let mirror = mirror_map(&b)?;
    for (f, &mf) in mirror.iter().enumerate() {
        b.verts[f].mirror = mf;
    }
    smooth_pass(&mut b, &mirror, 2);
    flip_pass(&mut b, 2);
    assign_s_values(&mut b, s_seam);
    orient_fundamental(&mut b)?;
    Ok(Fundamental { verts: b.verts, tris: b.tris })
}

/// Row positions (as fractions of the total span) starting at spacing
/// `h0` and growing geometrically to at most `h1`.
fn graded_fractions(total: f64, h0: f64, h1: f64) -> Vec<f64> {
    let mut xs = Vec::new();
    let mut x = 0.0f64;
    let mut h = h0.min(h1).max(total * 1e-3);
    while x + 1.5 * h < total {
        x += h;
        xs.push(x / total);
        h = (h * 1.35).min(h1);
    }
    xs.push(1.0);
    xs
}

fn ambient_arc(atlas: &ChartAtlas, piece: WPiece, s0: f64, s1: f64) -> f64 {
    let mut arc = 0.0;
    let mut prev = atlas.position(piece, s0, 0.0);
    for k in 1..=24 {
        let s = s0 + (s1 - s0) * k as f64 / 24.0;
        let p = atlas.position(piece, s, 0.0);
        arc += p.dist(prev);
        prev = p;
    }
    arc
}

/// Global s: wing parameter on the wings, negative core proxy, and an
/// extension past the block on the clipped pieces.
fn assign_s_values(b: &mut Builder, s_seam: f64) {
    let s_block = b.deform.s_max();
    let lam = b.deform.lambda;
    let a = b.params.a;
    let m = b.params.m as f64;
    let cos_t = b.params.theta.cos();
    let z_theta = b.atlas.z_theta;
    let z_crit = b.atlas.z_crit;
    let r_theta = b.atlas.r_theta;
    // interface polyline samples for the core distance proxy
    let mut interface_pts = Vec::new();
    for kind in WingKind::all() {
        for k in 0..=64 {
            let y = PI * k as f64 / 64.0;
            interface_pts.push(wing_point_on_s(kind, y, 0.0, a));
        }
    }
    for v in b.verts.iter_mut() {
        v.s_val = match v.chart {
            Chart::Wing(_) => v.v,
            Chart::Central | Chart::Collar(_) => {
                let mut d = f64::INFINITY;
                for q in &interface_pts {
                    d = d.min(v.flat.dist(*q));
                }
                (-d).max(-3.0)
            }
            Chart::Piece(p) => {
                // invert the wing chart where the piece still overlaps the block
                let s_wing = match p {
                    WPiece::KPlus | WPiece::KMinus => {
                        let zbar = z_theta * v.u / z_crit;
                        zbar / (lam * cos_t) - a
                    }
                    WPiece::Annulus => m * (v.u / r_theta).ln() - a,
                    WPiece::Disk => {
                        if v.u <= 0.0 {
                            f64::INFINITY
                        } else {
                            -m * (v.u / r_theta).ln() - a
                        }
                    }
                };
                if s_wing <= s_block {
                    s_wing
                } else {
                    // arclength proxy past the block, into (5 d_s m, 6 d_s m]
                    let extra = (s_wing - s_block) / (s_block - s_seam).max(1e-9);
                    s_block + (s_block / 5.0) * extra.min(5.0) / 5.0
                }
            }
        };
    }
}

/// Smoothing: wing nodes relax in their (y, s) parameters; core nodes relax
/// in 3D flat coordinates and are Newton-projected back onto the Scherk
/// surface, after which their chart record is re-read from the coordinates.
/// Everything is symmetrized through the fundamental rotoreflection.
fn smooth_pass(b: &mut Builder, mirror: &[u32], passes: usize) {
    let n = b.verts.len();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for t in &b.tris {
        for e in 0..3 {
            adj[t[e] as usize].push(t[(e + 1) % 3]);
            adj[t[(e + 1) % 3] as usize].push(t[e]);
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    let a = b.params.a;
    let c_report: Vec<bool> = b
        .verts
        .iter()
        .map(|v| matches!(v.chart, Chart::Central | Chart::Collar(_)))
        .collect();
    for _ in 0..passes {
        // proposals
        let mut prop: Vec<Option<Vec3>> = vec![None; n];
        for f in 0..n {
            if !b.smoothable[f] {
                continue;
            }
            if c_report[f] {
                // 3D flat average of neighbors, restricted to core neighbors
                let mut s3 = Vec3::ZERO;
                let mut cnt = 0.0;
                let mut ok = true;
                for &nb in &adj[f] {
                    if !c_report[nb as usize] {
                        ok = false;
                        break;
                    }
                    s3 += b.verts[nb as usize].flat;
                    cnt += 1.0;
                }
                if ok && cnt >= 3.0 {
                    let target = b.verts[f].flat * 0.5 + (s3 / cnt) * 0.5;
                    if let Ok(q) = crate::scherk::scherk_project(target) {
                        // cap the displacement at a fraction of the local edge
                        let mut near = f64::INFINITY;
                        for &nb in &adj[f] {
                            near = near.min(b.verts[nb as usize].flat.dist(b.verts[f].flat));
                        }
                        let d = q.dist(b.verts[f].flat);
                        if d <= 0.35 * near {
                            prop[f] = Some(q);
                        } else {
                            let lerp = b.verts[f].flat + (q - b.verts[f].flat) * (0.35 * near / d);
                            if let Ok(q2) = crate::scherk::scherk_project(lerp) {
                                prop[f] = Some(q2);
                            }
                        }
                    }
                }
            }
        }
        // symmetrize through the mirror and commit
        for f in 0..n {
            let mf = mirror[f] as usize;
            if let Some(q) = prop[f] {
                if let Some(qm) = prop[mf] {
                    let flat = Vec3::new(
                        0.5 * (q.x + qm.x),
                        0.5 * (q.y + (PI - qm.y)),
                        0.5 * (q.z - qm.z),
                    );
                    // re-read the chart from the smoothed coordinates
                    let (chart, u, v) = core_chart_of(flat, a);
                    let pos = b.pos_of(chart, u, v, flat);
                    let fv = &mut b.verts[f];
                    fv.chart = chart;
                    fv.u = u;
                    fv.v = v;
                    fv.flat = flat;
                    fv.pos = pos;
                }
            }
        }
    }
}

/// Chart record of an interior core point from its flat coordinates.
fn core_chart_of(flat: Vec3, _a: f64) -> (Chart, f64, f64) {
    let (x, y, z) = (flat.x, flat.y, flat.z);
    if x.abs().max(z.abs()) <= 0.86 && (x.sinh() * z.sinh()).abs() < 0.995 {
        (Chart::Central, x, z)
    } else if z.abs() >= x.abs() {
        if z >= 0.0 {
            (Chart::Collar(WingKind::VerPlus), y, z)
        } else {
            (Chart::Collar(WingKind::VerMinus), y, -z)
        }
    } else if x >= 0.0 {
        (Chart::Collar(WingKind::HorPlus), y, x)
    } else {
        (Chart::Collar(WingKind::HorMinus), y, -x)
    }
}

/// Edge flips that strictly improve the smaller minimum angle of a triangle
/// pair, applied greedily; deterministic and mirror-safe because the
/// criterion is purely metric.
fn flip_pass(b: &mut Builder, max_rounds: usize) {
    let plan: Vec<Vec3> = b
        .verts
        .iter()
        .map(|fv| b.pos_plan(fv.chart, fv.u, fv.v, fv.flat))
        .collect();
    let min_angle = |p0: Vec3, p1: Vec3, p2: Vec3| -> f64 {
        let pts = [p0, p1, p2];
        let mut worst = f64::INFINITY;
        for k in 0..3 {
            let u = pts[(k + 1) % 3] - pts[k];
            let w = pts[(k + 2) % 3] - pts[k];
            let (nu, nw) = (u.norm(), w.norm());
            if nu < 1e-300 || nw < 1e-300 {
                return 0.0;
            }
            worst = worst.min((u.dot(w) / (nu * nw)).clamp(-1.0, 1.0).acos());
        }
        worst
    };
    for _ in 0..max_rounds {
        let mut edge_tris: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (ti, t) in b.tris.iter().enumerate() {
            for e in 0..3 {
                let (x, y) = (t[e], t[(e + 1) % 3]);
                edge_tris.entry((x.min(y), x.max(y))).or_default().push(ti);
            }
        }
        let mut used = vec![false; b.tris.len()];
        let mut flips: Vec<(usize, usize, u32, u32, u32, u32)> = Vec::new();
        let mut keys: Vec<(u32, u32)> = edge_tris.keys().copied().collect();
        keys.sort_unstable();
        for k in keys {
            let tl = &edge_tris[&k];
            if tl.len() != 2 || used[tl[0]] || used[tl[1]] {
                continue;
            }
            let (t0, t1) = (b.tris[tl[0]], b.tris[tl[1]]);
            let (ea, eb) = k;
            let c0 = *t0.iter().find(|&&v| v != ea && v != eb).unwrap();
            let c1 = *t1.iter().find(|&&v| v != ea && v != eb).unwrap();
            if c0 == c1 || edge_tris.contains_key(&(c0.min(c1), c0.max(c1))) {
                continue;
            }
            let p = |v: u32| plan[v as usize];
            let before = min_angle(p(ea), p(eb), p(c0)).min(min_angle(p(ea), p(eb), p(c1)));
            let after = min_angle(p(c0), p(c1), p(ea)).min(min_angle(p(c0), p(c1), p(eb)));
            if after <= before + 1e-3 {
                continue;
            }
            // keep the surface orientation: the new pair must not fold over
            let n_old = (p(eb) - p(ea)).cross(p(c0) - p(ea)).normalized()
                + (p(c1) - p(ea)).cross(p(eb) - p(ea)).normalized();
            let n_new = (p(c1) - p(c0)).cross(p(ea) - p(c0)).normalized()
                + (p(eb) - p(c0)).cross(p(c1) - p(c0)).normalized();
            if n_old.dot(n_new) < 1.0 {
                continue;
            }
            used[tl[0]] = true;
            used[tl[1]] = true;
            flips.push((tl[0], tl[1], ea, eb, c0, c1));
        }
        if flips.is_empty() {
            return;
        }
        for (i0, i1, ea, eb, c0, c1) in flips {
            let t0 = b.tris[i0];
            let mut fwd = false;
            for e in 0..3 {
                if t0[e] == ea && t0[(e + 1) % 3] == eb {
                    fwd = true;
                }
            }
            if fwd {
                b.tris[i0] = [ea, c1, c0];
                b.tris[i1] = [eb, c0, c1];
            } else {
                b.tris[i0] = [ea, c0, c1];
                b.tris[i1] = [eb, c1, c0];
            }
        }
    }
}

/// Build the fundamental rotoreflection as a vertex permutation by record
/// lookup; the grids are constructed mirror-exact.
fn mirror_map(b: &Builder) -> Result<Vec<u32>, MeshError> {
    let chart_code = |c: Chart| -> u8 {
        match c {
            Chart::Central => 0,
            Chart::Collar(WingKind::HorPlus) => 1,
            Chart::Collar(WingKind::HorMinus) => 2,
            Chart::Collar(WingKind::VerPlus) => 3,
            Chart::Collar(WingKind::VerMinus) => 4,
            Chart::Wing(WingKind::HorPlus) => 5,
            Chart::Wing(WingKind::HorMinus) => 6,
            Chart::Wing(WingKind::VerPlus) => 7,
            Chart::Wing(WingKind::VerMinus) => 8,
            Chart::Piece(WPiece::KPlus) => 9,
            Chart::Piece(WPiece::KMinus) => 10,
            Chart::Piece(WPiece::Annulus) => 11,
            Chart::Piece(WPiece::Disk) => 12,
        }
    };
    let mirror_record = |c: Chart, u: f64, v: f64| -> (Chart, f64, f64) {
        match c {
            Chart::Central => (Chart::Central, u, -v),
            Chart::Collar(k) => (Chart::Collar(mirror_kind(k)), PI - u, v),
            Chart::Wing(k) => (Chart::Wing(mirror_kind(k)), PI - u, v),
            Chart::Piece(WPiece::KPlus) => (Chart::Piece(WPiece::KMinus), u, PI - v),
            Chart::Piece(WPiece::KMinus) => (Chart::Piece(WPiece::KPlus), u, PI - v),
            Chart::Piece(p) => (Chart::Piece(p), u, PI - v),
        }
    };
    let q = |x: f64| -> i64 { (x * 1e9).round() as i64 };
    let mut table: HashMap<(u8, i64, i64), u32> = HashMap::new();
    for (f, fv) in b.verts.iter().enumerate() {
        table.insert((chart_code(fv.chart), q(fv.u), q(fv.v)), f as u32);
    }
    let mut mirror = vec![0u32; b.verts.len()];
    for (f, fv) in b.verts.iter().enumerate() {
        if fv.seam == Seam::Center {
            mirror[f] = f as u32;
            continue;
        }
        let (c2, u2, v2) = mirror_record(fv.chart, fv.u, fv.v);
        let code = chart_code(c2);
        let (qu, qv) = (q(u2), q(v2));
        let mut found = None;
        'search: for du in [0i64, 1, -1] {
            for dv in [0i64, 1, -1] {
                if let Some(&g) = table.get(&(code, qu + du, qv + dv)) {
                    found = Some(g);
                    break 'search;
                }
            }
        }
        match found {
            Some(g) => mirror[f] = g,
            None => {
                return Err(MeshError::Topology(format!(
                    "fundamental grid is not mirror symmetric at vertex {f} ({:?} {:.6} {:.6})",
                    fv.chart, fv.u, fv.v
                )))
            }
        }
    }
    Ok(mirror)
}

fn mirror_kind(k: WingKind) -> WingKind {
    match k {
        WingKind::VerPlus => WingKind::VerMinus,
        WingKind::VerMinus => WingKind::VerPlus,
        WingKind::HorPlus => WingKind::HorPlus,
        WingKind::HorMinus => WingKind::HorMinus,
    }
}

/// Orient all fundamental triangles coherently by breadth-first propagation,
/// anchored so the outer annulus carries the unit normal -e_z.
fn orient_fundamental(b: &mut Builder) -> Result<(), MeshError> {
    let nt = b.tris.len();
    let mut edge_to_tris: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for (ti, t) in b.tris.iter().enumerate() {
        for e in 0..3 {
            let (x, y) = (t[e], t[(e + 1) % 3]);
            edge_to_tris.entry((x.min(y), x.max(y))).or_default().push(ti);
        }
    }
    for (e, l) in &edge_to_tris {
        if l.len() > 2 {
            return Err(MeshError::Topology(format!(
                "non-manifold fundamental edge {e:?} shared by {} triangles",
                l.len()
            )));
        }
    }
    let mut visited = vec![false; nt];
    let mut queue = std::collections::VecDeque::new();
    visited[0] = true;
    queue.push_back(0usize);
    while let Some(ti) = queue.pop_front() {
        let t = b.tris[ti];
        for e in 0..3 {
            let (x, y) = (t[e], t[(e + 1) % 3]);
            for &tj in &edge_to_tris[&(x.min(y), x.max(y))] {
                if tj == ti || visited[tj] {
                    continue;
                }
                // consistent orientation: the shared edge must appear in
                // opposite directions
                let s = b.tris[tj];
                let mut same_dir = false;
                for e2 in 0..3 {
                    if s[e2] == x && s[(e2 + 1) % 3] == y {
                        same_dir = true;
                    }
                }
                if same_dir {
                    b.tris[tj].swap(1, 2);
                }
                visited[tj] = true;
                queue.push_back(tj);
            }
        }
    }
    if visited.iter().any(|v| !v) {
        return Err(MeshError::Topology("fundamental tile is disconnected".into()));
    }
    // anchor: pick an annulus triangle and require its normal ~ -e_z
    for ti in 0..nt {
        let t = b.tris[ti];
        if t.iter().all(|&v| matches!(b.verts[v as usize].chart, Chart::Piece(WPiece::Annulus))) {
            let p0 = b.verts[t[0] as usize].pos;
            let p1 = b.verts[t[1] as usize].pos;
            let p2 = b.verts[t[2] as usize].pos;
            let n = (p1 - p0).cross(p2 - p0);
            if n.z > 0.0 {
                for tt in b.tris.iter_mut() {
                    tt.swap(1, 2);
                }
            }
            return Ok(());
        }
    }
    Err(MeshError::Topology("no annulus triangle found for the orientation anchor".into()))
}
