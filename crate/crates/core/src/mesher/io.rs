//! ASCII OBJ export/import and the sidecar metadata file.

use super::SurfaceMesh;
use crate::util::vec3::Vec3;
use std::io::Write;
use std::path::Path;

/// Write v/f records with deterministic ordering and counterclockwise
/// winding as stored.
pub fn write_obj(mesh: &SurfaceMesh, path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# fbms initial surface m={} theta={:.12e}", mesh.params.m, mesh.params.theta)?;
    for p in &mesh.pos {
        writeln!(out, "v {:.17} {:.17} {:.17}", p.x, p.y, p.z)?;
    }
    for t in &mesh.tris {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// Read back vertices and faces from an ASCII OBJ.
pub fn read_obj(path: &Path) -> std::io::Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    let text = std::fs::read_to_string(path)?;
    let mut pos = Vec::new();
    let mut tris = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let x: f64 = it.next().unwrap_or("0").parse().unwrap_or(0.0);
                let y: f64 = it.next().unwrap_or("0").parse().unwrap_or(0.0);
                let z: f64 = it.next().unwrap_or("0").parse().unwrap_or(0.0);
                pos.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|tok| tok.split('/').next().unwrap_or("1").parse::<u32>().unwrap_or(1) - 1)
                    .collect();
                if idx.len() == 3 {
                    tris.push([idx[0], idx[1], idx[2]]);
                }
            }
            _ => {}
        }
    }
    Ok((pos, tris))
}

/// Structured-text sidecar: parameters, region tallies, orbit sizes.
pub fn write_sidecar(mesh: &SurfaceMesh, path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let p = &mesh.params;
    writeln!(out, "m = {}", p.m)?;
    writeln!(out, "theta = {:.17e}", p.theta)?;
    writeln!(out, "res = {}", p.res)?;
    writeln!(out, "res_w = {}", p.res_w)?;
    writeln!(out, "a = {:.17e}", p.a)?;
    writeln!(out, "delta_s = {:.17e}", p.delta_s)?;
    writeln!(out, "w_blend = {:.17e}", p.w_blend)?;
    writeln!(out, "gamma = {}", p.gamma)?;
    writeln!(out, "beta = {}", p.beta)?;
    writeln!(out, "lambda = {:.17e}", mesh.deform.lambda)?;
    writeln!(out, "r_theta = {:.17e}", mesh.atlas.r_theta)?;
    writeln!(out, "vertices = {}", mesh.n_verts())?;
    writeln!(out, "triangles = {}", mesh.tris.len())?;
    writeln!(out, "tiles = {}", mesh.n_tiles())?;
    writeln!(out, "euler_characteristic = {}", mesh.euler_characteristic())?;
    writeln!(out, "boundary_loops = {}", mesh.boundary_loops.len())?;
    writeln!(out, "area = {:.12}", mesh.area())?;
    let mut tallies: std::collections::BTreeMap<&'static str, usize> = Default::default();
    for v in 0..mesh.n_verts() {
        *tallies.entry(mesh.chart_of(v).0.region_name()).or_insert(0) += 1;
    }
    for (name, count) in tallies {
        writeln!(out, "region.{} = {}", name, count)?;
    }
    for (gi, (perm, sign)) in mesh.generators.iter().enumerate() {
        let fixed = perm.iter().enumerate().filter(|(i, &p)| p as usize == *i).count();
        writeln!(out, "generator.{}.sign = {}", gi, sign)?;
        writeln!(out, "generator.{}.fixed_vertices = {}", gi, fixed)?;
    }
    Ok(())
}
