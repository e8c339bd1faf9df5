//! Topology validation and the sampling-based self-intersection test.

use super::{MeshError, SurfaceMesh};
use crate::util::vec3::Vec3;
use std::collections::HashMap;

pub(super) fn validate_topology(mesh: &SurfaceMesh) -> Result<(), MeshError> {
    // orientability / consistent winding: every interior edge must appear
    // once in each direction
    let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
    for t in &mesh.tris {
        for e in 0..3 {
            let k = (t[e], t[(e + 1) % 3]);
            *directed.entry(k).or_insert(0) += 1;
        }
    }
    for (&(a, b), &c) in &directed {
        if c > 1 {
            return Err(MeshError::Topology(format!(
                "edge ({a},{b}) traversed {c} times in the same direction"
            )));
        }
        let opp = directed.get(&(b, a)).copied().unwrap_or(0);
        if c + opp > 2 {
            return Err(MeshError::Topology(format!("non-manifold edge ({a},{b})")));
        }
    }
    // expected global topology: genus m-1 with three boundary circles
    let m = mesh.params.m as i64;
    let chi = mesh.euler_characteristic();
    if chi != 1 - 2 * m {
        return Err(MeshError::Topology(format!(
            "Euler characteristic {chi}, expected {} for genus {} with 3 boundary loops",
            1 - 2 * m,
            m - 1
        )));
    }
    if mesh.boundary_loops.len() != 3 {
        return Err(MeshError::Topology(format!(
            "{} boundary loops, expected 3",
            mesh.boundary_loops.len()
        )));
    }
    // boundary lies on the unit sphere
    for lp in &mesh.boundary_loops {
        for &v in lp {
            let r = mesh.pos[v as usize].norm();
            if (r - 1.0).abs() > 1e-9 {
                return Err(MeshError::Topology(format!(
                    "boundary vertex {v} off the sphere by {:.2e}",
                    (r - 1.0).abs()
                )));
            }
        }
    }
    let dev = mesh.symmetry_deviation();
    if dev > 1e-9 {
        return Err(MeshError::Topology(format!("symmetry orbit deviation {dev:.2e}")));
    }
    Ok(())
}

/// Result of the spatial-hash triangle pair scan.  A necessary but not
/// sufficient embeddedness test.
#[derive(Debug, Clone)]
pub struct SelfIntersection {
    pub pairs_tested: usize,
    pub intersections: Vec<(usize, usize)>,
}

pub fn self_intersection_scan(mesh: &SurfaceMesh) -> SelfIntersection {
    let _nt = mesh.tris.len();
    // hash triangles into a uniform grid sized by the largest edge
    let mut hmax = 0.0f64;
    let tri_pos = |t: &[u32; 3]| {
        [
            mesh.pos[t[0] as usize],
            mesh.pos[t[1] as usize],
            mesh.pos[t[2] as usize],
        ]
    };
    for t in &mesh.tris {
        let p = tri_pos(t);
        for e in 0..3 {
            hmax = hmax.max(p[e].dist(p[(e + 1) % 3]));
        }
    }
    let cell = (hmax * 1.01).max(1e-6);
    let key = |p: Vec3| {
        (
            (p.x / cell).floor() as i32,
            (p.y / cell).floor() as i32,
            (p.z / cell).floor() as i32,
        )
    };
    let mut grid: HashMap<(i32, i32, i32), Vec<u32>> = HashMap::new();
    for (ti, t) in mesh.tris.iter().enumerate() {
        let p = tri_pos(t);
        let mut cells = std::collections::HashSet::new();
        for q in p {
            cells.insert(key(q));
        }
        for ckey in cells {
            grid.entry(ckey).or_default().push(ti as u32);
        }
    }
    let mut tested = 0usize;
    let mut hits = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (_, list) in grid.iter() {
        for i in 0..list.len() {
            for j in (i + 1)..list.len() {
                let (a, b) = (list[i] as usize, list[j] as usize);
                if !seen.insert((a.min(b), a.max(b))) {
                    continue;
                }
                let ta = mesh.tris[a];
                let tb = mesh.tris[b];
                if ta.iter().any(|v| tb.contains(v)) {
                    continue; // adjacent
                }
                tested += 1;
                if tri_tri_intersect(&shrink(&tri_pos(&ta)), &shrink(&tri_pos(&tb))) {
                    hits.push((a.min(b), a.max(b)));
                }
            }
        }
    }
    hits.sort_unstable();
    hits.dedup();
    SelfIntersection { pairs_tested: tested, intersections: hits }
}

/// Pull the corners slightly toward the centroid so that triangles touching
/// only along shared boundary curves do not register as intersecting.
fn shrink(t: &[Vec3; 3]) -> [Vec3; 3] {
    let c = (t[0] + t[1] + t[2]) / 3.0;
    let f = 1e-5;
    [t[0] + (c - t[0]) * f, t[1] + (c - t[1]) * f, t[2] + (c - t[2]) * f]
}

/// Moeller-style triangle-triangle intersection test.
fn tri_tri_intersect(t1: &[Vec3; 3], t2: &[Vec3; 3]) -> bool {
    let n1 = (t1[1] - t1[0]).cross(t1[2] - t1[0]);
    let d1 = -n1.dot(t1[0]);
    let dist2: Vec<f64> = t2.iter().map(|&p| n1.dot(p) + d1).collect();
    let eps = 1e-12 * n1.norm().max(1e-300);
    if dist2.iter().all(|&d| d > eps) || dist2.iter().all(|&d| d < -eps) {
        return false;
    }
    let n2 = (t2[1] - t2[0]).cross(t2[2] - t2[0]);
    let d2 = -n2.dot(t2[0]);
    let dist1: Vec<f64> = t1.iter().map(|&p| n2.dot(p) + d2).collect();
    let eps2 = 1e-12 * n2.norm().max(1e-300);
    if dist1.iter().all(|&d| d > eps2) || dist1.iter().all(|&d| d < -eps2) {
        return false;
    }
    // coplanar or near-coplanar pairs: conservative segment tests
    let line = n1.cross(n2);
    if line.norm2() < 1e-24 {
        // nearly coplanar: check edge-edge overlaps in 2D projection
        return coplanar_overlap(t1, t2, n1);
    }
    // interval overlap on the intersection line
    let proj = |p: Vec3| line.dot(p);
    let interval = |t: &[Vec3; 3], dist: &[f64]| -> Option<(f64, f64)> {
        let mut pts = Vec::new();
        for e in 0..3 {
            let (i, j) = (e, (e + 1) % 3);
            let (di, dj) = (dist[i], dist[j]);
            if (di > 0.0) != (dj > 0.0) && (di - dj).abs() > 1e-300 {
                let s = di / (di - dj);
                let p = t[i] + (t[j] - t[i]) * s;
                pts.push(proj(p));
            }
        }
        if pts.len() < 2 {
            return None;
        }
        let lo = pts.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = pts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    };
    match (interval(t1, &dist1), interval(t2, &dist2)) {
        (Some((a0, a1)), Some((b0, b1))) => a0.max(b0) <= a1.min(b1) - 1e-14,
        _ => false,
    }
}

fn coplanar_overlap(t1: &[Vec3; 3], t2: &[Vec3; 3], n: Vec3) -> bool {
    // project to the dominant plane and run 2D segment intersections
    let ax = n.x.abs();
    let ay = n.y.abs();
    let az = n.z.abs();
    let to2d = |p: Vec3| -> (f64, f64) {
        if az >= ax && az >= ay {
            (p.x, p.y)
        } else if ax >= ay {
            (p.y, p.z)
        } else {
            (p.x, p.z)
        }
    };
    let a: Vec<(f64, f64)> = t1.iter().map(|&p| to2d(p)).collect();
    let b: Vec<(f64, f64)> = t2.iter().map(|&p| to2d(p)).collect();
    let seg = |p: (f64, f64), q: (f64, f64), r: (f64, f64), s: (f64, f64)| -> bool {
        let d = (q.0 - p.0) * (s.1 - r.1) - (q.1 - p.1) * (s.0 - r.0);
        if d.abs() < 1e-300 {
            return false;
        }
        let t = ((r.0 - p.0) * (s.1 - r.1) - (r.1 - p.1) * (s.0 - r.0)) / d;
        let u = ((r.0 - p.0) * (q.1 - p.1) - (r.1 - p.1) * (q.0 - p.0)) / d;
        t > 1e-9 && t < 1.0 - 1e-9 && u > 1e-9 && u < 1.0 - 1e-9
    };
    for e1 in 0..3 {
        for e2 in 0..3 {
            if seg(a[e1], a[(e1 + 1) % 3], b[e2], b[(e2 + 1) % 3]) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tri_tri_basics() {
        let t1 = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let t2 = [Vec3::new(0.2, 0.2, -0.5), Vec3::new(0.2, 0.2, 0.5), Vec3::new(0.8, 0.8, 0.3)];
        assert!(tri_tri_intersect(&t1, &t2));
        let t3 = [Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 1.0)];
        assert!(!tri_tri_intersect(&t1, &t3));
    }
}
