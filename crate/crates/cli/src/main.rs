//! Command-line workbench: constants, the catenoid family, initial-surface
//! builds, kernel tables, linear solves, the fixed-point run, verification
//! and export.
//!
//! Exit codes: 0 success, 2 verification failure, 3 non-convergence.

use fbms_core::driver::{self, RunConfig};
use fbms_core::linsolve;
use fbms_core::mesher::{self};
use fbms_core::rotsym;
use std::path::Path;
use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() {
        usage();
        return ExitCode::from(1);
    }
    let cmd = args[0].as_str();
    let rest = &args[1..];
    match dispatch(cmd, rest) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn usage() {
    eprintln!("usage: fbms <command> [flags]");
    eprintln!("commands:");
    eprintln!("  constants                      print the critical constants");
    eprintln!("  family --theta-grid a:b:n      print a (theta, r_theta, h) table");
    eprintln!("  build --m M [--theta T] [--res N] [--out mesh.obj]");
    eprintln!("  kernels [--m M]                mode determinants, spectral report, pairing");
    eprintln!("  solve --m M [--rhs random|curvature] [--out report.txt]");
    eprintln!("  run [--config path] [--m M] [--theta T] [--res N] [--out mesh.obj]");
    eprintln!("  verify --in mesh.obj [--m M]   print mesh diagnostics");
    eprintln!("  export --m M --out mesh.obj    build and write OBJ + sidecar");
}

struct Flags {
    config: Option<String>,
    m: Option<usize>,
    theta: Option<f64>,
    res: Option<f64>,
    out: Option<String>,
    input: Option<String>,
    theta_grid: Option<(f64, f64, usize)>,
    rhs: Option<String>,
}

fn parse_flags(rest: &[String]) -> Result<Flags, String> {
    let mut f = Flags {
        config: None,
        m: None,
        theta: None,
        res: None,
        out: None,
        input: None,
        theta_grid: None,
        rhs: None,
    };
    let mut i = 0;
    while i < rest.len() {
        let key = rest[i].as_str();
        let val = rest.get(i + 1).ok_or_else(|| format!("missing value for {key}"))?;
        match key {
            "--config" => f.config = Some(val.clone()),
            "--m" => f.m = Some(val.parse().map_err(|_| format!("bad --m {val}"))?),
            "--theta" => f.theta = Some(val.parse().map_err(|_| format!("bad --theta {val}"))?),
            "--res" => f.res = Some(val.parse().map_err(|_| format!("bad --res {val}"))?),
            "--out" => f.out = Some(val.clone()),
            "--in" => f.input = Some(val.clone()),
            "--rhs" => f.rhs = Some(val.clone()),
            "--theta-grid" => {
                let parts: Vec<&str> = val.split(':').collect();
                if parts.len() != 3 {
                    return Err(format!("bad --theta-grid {val}, expected a:b:n"));
                }
                f.theta_grid = Some((
                    parts[0].parse().map_err(|_| "bad grid start".to_string())?,
                    parts[1].parse().map_err(|_| "bad grid end".to_string())?,
                    parts[2].parse().map_err(|_| "bad grid count".to_string())?,
                ));
            }
            other => return Err(format!("unknown flag {other}")),
        }
        i += 2;
    }
    Ok(f)
}

fn load_config(f: &Flags) -> Result<RunConfig, String> {
    let mut cfg = match &f.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
            RunConfig::parse(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = f.m {
        cfg.m = m;
    }
    if let Some(t) = f.theta {
        cfg.theta0 = t;
    }
    if let Some(r) = f.res {
        cfg.res = r;
    }
    Ok(cfg)
}

fn dispatch(cmd: &str, rest: &[String]) -> Result<ExitCode, String> {
    let flags = parse_flags(rest)?;
    match cmd {
        "constants" => {
            let c = rotsym::solve_critical_constants().map_err(|e| e.to_string())?;
            println!("R_crit     = {:.15}", c.r_crit_boundary);
            println!("z_crit     = {:.15}", c.z_crit);
            println!("r_crit     = {:.15}", c.r_crit);
            println!("x_crit     = {:.15}", c.x_crit);
            println!("theta_min  = {:.15}", c.theta_min);
            println!("area_K     = {:.15}", c.area_k);
            println!("area_K+pi  = {:.15}", c.area_k + std::f64::consts::PI);
            println!("r_crit - 1/e       = {:.6e}", c.r_crit - (-1.0f64).exp());
            println!("x_crit - pi/4      = {:.6e}", c.x_crit - std::f64::consts::FRAC_PI_4);
            Ok(ExitCode::SUCCESS)
        }
        "family" => {
            let (a, b, n) = flags.theta_grid.ok_or("family needs --theta-grid a:b:n")?;
            let c = rotsym::solve_critical_constants().map_err(|e| e.to_string())?;
            println!("theta\tr_theta\th");
            for k in 0..n {
                let theta = a + (b - a) * k as f64 / (n.max(2) - 1) as f64;
                let fam = rotsym::family_at_theta(theta, &c).map_err(|e| e.to_string())?;
                println!("{:.12}\t{:.12}\t{:.12}", theta, fam.r_hat, fam.h);
            }
            Ok(ExitCode::SUCCESS)
        }
        "build" | "export" => {
            let cfg = load_config(&flags)?;
            let params = cfg.build_params(cfg.theta0).map_err(|e| e.to_string())?;
            let mesh = mesher::build_initial_surface(&params).map_err(|e| e.to_string())?;
            let si = mesher::self_intersection_scan(&mesh);
            println!("vertices = {}", mesh.n_verts());
            println!("triangles = {}", mesh.tris.len());
            println!("euler_characteristic = {}", mesh.euler_characteristic());
            println!("boundary_loops = {}", mesh.boundary_loops.len());
            println!("area = {:.10}", mesh.area());
            println!("symmetry_deviation = {:.3e}", mesh.symmetry_deviation());
            println!("self_intersections = {}", si.intersections.len());
            if let Some(out) = &flags.out {
                mesher::write_obj(&mesh, Path::new(out)).map_err(|e| e.to_string())?;
                let sidecar = format!("{out}.meta");
                mesher::write_sidecar(&mesh, Path::new(&sidecar)).map_err(|e| e.to_string())?;
                println!("wrote {out} and {sidecar}");
            }
            Ok(ExitCode::SUCCESS)
        }
        "kernels" => {
            let consts = rotsym::solve_critical_constants().map_err(|e| e.to_string())?;
            let rows = linsolve::standard_piece_kernels(&consts, 32);
            println!("piece\tmode\tdeterminant");
            for r in &rows {
                println!("{}\t{}\t{:.12}", r.piece, r.mode, r.det);
            }
            let m = flags.m.unwrap_or(6);
            let cfg = RunConfig { m, res: flags.res.unwrap_or(6.0), ..Default::default() };
            let params = cfg.build_params(0.0).map_err(|e| e.to_string())?;
            let mesh = mesher::build_initial_surface(&params).map_err(|e| e.to_string())?;
            let sp = linsolve::scherk_kernel_check(&mesh).map_err(|e| e.to_string())?;
            println!("scherk.sigma1 = {:.6e}", sp.sigma1);
            println!("scherk.sigma2 = {:.6e}", sp.sigma2);
            println!("scherk.gap_ratio = {:.3}", sp.sigma2 / sp.sigma1);
            println!("scherk.correlation = {:.6}", sp.correlation);
            let sk = linsolve::substitute_kernel_w(&mesh).map_err(|e| e.to_string())?;
            println!("pairing = {:.8}", sk.pairing);
            println!("pairing.flux_oracle = {:.8}", sk.flux_oracle);
            println!("pairing.quad_err = {:.3e}", sk.quad_err);
            Ok(ExitCode::SUCCESS)
        }
        "solve" => {
            let cfg = load_config(&flags)?;
            let params = cfg.build_params(cfg.theta0).map_err(|e| e.to_string())?;
            let mesh = mesher::build_initial_surface(&params).map_err(|e| e.to_string())?;
            let nv = mesh.n_verts();
            let (e, eb): (Vec<f64>, Vec<f64>) = match flags.rhs.as_deref() {
                Some("curvature") | None => {
                    let h = fbms_core::geom::mean_curvature_initial(&mesh);
                    (h.vals, vec![0.0; nv])
                }
                Some("random") => {
                    let mut state = 42u64;
                    let mut rnd = || {
                        state = state
                            .wrapping_mul(6364136223846793005)
                            .wrapping_add(1442695040888963407);
                        ((state >> 33) as f64) / (u32::MAX as f64) - 0.5
                    };
                    ((0..nv).map(|_| rnd()).collect(), (0..nv).map(|_| rnd()).collect())
                }
                Some(other) => return Err(format!("unknown --rhs {other}")),
            };
            let (u, mu, stats) =
                linsolve::solve_global(&mesh, &e, &eb).map_err(|e| e.to_string())?;
            let umax = u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            println!("mu = {:.10e}", mu);
            println!("residual = {:.3e}", stats.residual);
            println!("boundary_residual = {:.3e}", stats.boundary_residual);
            println!("stability_constant = {:.6e}", stats.stability_constant);
            println!("u_max = {:.6e}", umax);
            if let Some(out) = &flags.out {
                let text = format!(
                    "mu = {:.17e}\nresidual = {:.3e}\nboundary_residual = {:.3e}\nstability_constant = {:.6e}\nu_max = {:.6e}\n",
                    mu, stats.residual, stats.boundary_residual, stats.stability_constant, umax
                );
                std::fs::write(out, text).map_err(|e| e.to_string())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        "run" => {
            let cfg = load_config(&flags)?;
            match driver::run(&cfg) {
                Ok((mesh, pos, report)) => {
                    println!("converged = true");
                    println!("iterations = {}", report.records.len());
                    println!("theta_star = {:.10e}", report.theta_star);
                    println!("initial_max_h = {:.6e}", report.initial_max_h);
                    println!("final_max_h = {:.6e}", report.final_max_h);
                    println!("final_max_theta = {:.6e}", report.final_max_theta);
                    println!("final_area = {:.8}", report.final_area);
                    println!("genus = {}", report.genus);
                    println!("boundary_loops = {}", report.boundary_loops);
                    println!("seconds = {:.2}", report.seconds);
                    let out_obj = flags.out.clone().or(cfg.out_obj.clone());
                    if let Some(out) = out_obj {
                        let mut final_mesh = mesh;
                        final_mesh.pos = pos;
                        mesher::write_obj(&final_mesh, Path::new(&out))
                            .map_err(|e| e.to_string())?;
                        println!("wrote {out}");
                    }
                    if let Some(rp) = &cfg.out_report {
                        driver::emit_report(&report, Path::new(rp)).map_err(|e| e.to_string())?;
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(driver::DriverError::NonConvergence(its, h)) => {
                    eprintln!("non-convergence after {its} iterations, max_h = {h:.3e}");
                    Ok(ExitCode::from(3))
                }
                Err(e) => Err(e.to_string()),
            }
        }
        "verify" => {
            let input = flags.input.as_ref().ok_or("verify needs --in mesh.obj")?;
            let (pos, _tris) = mesher::read_obj(Path::new(input)).map_err(|e| e.to_string())?;
            // rebuild the reference mesh for connectivity and orbit data
            let cfg = load_config(&flags)?;
            let params = cfg.build_params(cfg.theta0).map_err(|e| e.to_string())?;
            let mesh = mesher::build_initial_surface(&params).map_err(|e| e.to_string())?;
            if pos.len() != mesh.n_verts() {
                return Err(format!(
                    "vertex count {} does not match the reference build {} (check --m/--res/--theta)",
                    pos.len(),
                    mesh.n_verts()
                ));
            }
            let summary = driver::verify_summary(&mesh, Some(&pos));
            for (k, v) in &summary {
                println!("{k:24} = {v:.8e}");
            }
            let chi_expect = 1 - 2 * cfg.m as i64;
            let ok = summary["euler_characteristic"] as i64 == chi_expect
                && summary["boundary_loops"] as i64 == 3
                && summary["symmetry_deviation"] < 1e-6;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        _ => {
            usage();
            Err(format!("unknown command {cmd}"))
        }
    }
}
