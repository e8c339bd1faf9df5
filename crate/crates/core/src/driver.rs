//! The nonlinear outer loop: build the initial surface, solve the linearized
//! problem modulo the substitute kernel, perturb by the twisted graph, and
//! iterate in (phi, theta) until the measured mean curvature and boundary
//! angle vanish.  Linear solves invert the exact discrete Jacobian of the
//! measured functionals (matrix-free directional differences) with the
//! bordered finite-element system as preconditioner, so the converged state
//! satisfies the discrete equations to solver tolerance.

use crate::geom;
use crate::linsolve::{self, GlobalSystem, TileSystem};
use crate::mesher::{self, BuildParams, SurfaceMesh};
use crate::util::vec3::Vec3;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Mesh(#[from] mesher::MeshError),
    #[error(transparent)]
    Linsolve(#[from] linsolve::LinsolveError),
    #[error(transparent)]
    Geom(#[from] geom::GeomError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("fixed point did not converge after {0} iterations (max|H| = {1:.3e})")]
    NonConvergence(usize, f64),
    #[error("admissibility violated: ||phi||_inf = {0:.3e} exceeds {1:.3e}")]
    Admissibility(f64, f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Flat key = value configuration for a run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub m: usize,
    pub theta0: f64,
    pub res: f64,
    pub res_w: f64,
    pub a: Option<f64>,
    pub delta_s: Option<f64>,
    pub w_blend: Option<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub eps_collar: f64,
    pub tol_linear: f64,
    pub tol_theta_angle: f64,
    pub max_iterations: usize,
    pub fd_delta: f64,
    pub out_obj: Option<String>,
    pub out_report: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            m: 6,
            theta0: 0.0,
            res: 6.0,
            res_w: 32.0,
            a: None,
            delta_s: None,
            w_blend: None,
            gamma: 0.75,
            beta: 0.75,
            eps_collar: 0.1,
            tol_linear: 1e-10,
            tol_theta_angle: 1e-3,
            max_iterations: 12,
            fd_delta: 1e-6,
            out_obj: None,
            out_report: None,
        }
    }
}

impl RunConfig {
    /// Parse a flat key = value text file; unknown keys are errors.
    pub fn parse(text: &str) -> Result<RunConfig, DriverError> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, val) = line.split_once('=').ok_or_else(|| {
                DriverError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, val) = (key.trim(), val.trim());
            let fv = || -> Result<f64, DriverError> {
                val.parse().map_err(|_| DriverError::Config(format!("bad number for {key}: {val}")))
            };
            match key {
                "m" => {
                    cfg.m = val
                        .parse()
                        .map_err(|_| DriverError::Config(format!("bad integer for m: {val}")))?
                }
                "theta0" => cfg.theta0 = fv()?,
                "res" => cfg.res = fv()?,
                "res_w" => cfg.res_w = fv()?,
                "a" => cfg.a = Some(fv()?),
                "delta_s" => cfg.delta_s = Some(fv()?),
                "w_blend" => cfg.w_blend = Some(fv()?),
                "gamma" => cfg.gamma = fv()?,
                "beta" => cfg.beta = fv()?,
                "eps_collar" => cfg.eps_collar = fv()?,
                "tol_linear" => cfg.tol_linear = fv()?,
                "tol_theta_angle" => cfg.tol_theta_angle = fv()?,
                "max_iterations" => {
                    cfg.max_iterations =
                        val.parse().map_err(|_| DriverError::Config(format!("bad integer: {val}")))?
                }
                "fd_delta" => cfg.fd_delta = fv()?,
                "out_obj" => cfg.out_obj = Some(val.to_string()),
                "out_report" => cfg.out_report = Some(val.to_string()),
                other => return Err(DriverError::Config(format!("unknown key: {other}"))),
            }
        }
        Ok(cfg)
    }

    pub fn build_params(&self, theta: f64) -> Result<BuildParams, DriverError> {
        let mut p = BuildParams::auto(theta, self.m, self.res);
        p.res_w = self.res_w;
        if let Some(a) = self.a {
            p.a = a;
        }
        if let Some(d) = self.delta_s {
            p.delta_s = d;
        }
        if let Some(w) = self.w_blend {
            p.w_blend = w;
        }
        p.gamma = self.gamma;
        p.beta = self.beta;
        let consts = crate::rotsym::solve_critical_constants()
            .map_err(|e| DriverError::Config(e.to_string()))?;
        p.deform(&consts).map_err(|e| DriverError::Config(format!("parameter window: {e}")))?;
        Ok(p)
    }
}

/// Measured state of a (possibly perturbed) surface.
pub struct Measured {
    pub h: Vec<f64>,
    pub theta_b: Vec<f64>,
    pub max_h: f64,
    pub max_theta: f64,
}

/// State realization of the outer loop: twisted flow by x from the family
/// member's positions, followed by tangential relaxation.
pub fn realize_state(
    mesh: &SurfaceMesh,
    x: &[f64],
    eps_collar: f64,
) -> Result<Vec<Vec3>, DriverError> {
    let flowed = geom::twisted_graph(mesh, &mesh.pos, x, eps_collar)?;
    Ok(geom::relax_tangential(mesh, &flowed, 2))
}

/// The measurement pipeline of the outer loop: discrete mean curvature and
/// boundary angle of a vertex-position state, symmetrized.
pub fn measure(mesh: &SurfaceMesh, pos: &[Vec3]) -> Measured {
    let mut h = geom::mean_curvature_discrete(mesh, pos);
    mesh.symmetrize(&mut h, true);
    let mut th = geom::boundary_angle(mesh, pos).vals;
    mesh.symmetrize(&mut th, true);
    let mut max_h = 0.0f64;
    let mut max_theta = 0.0f64;
    for v in 0..mesh.n_verts() {
        max_h = max_h.max(h[v].abs());
        if mesh.boundary_vertex[v] {
            max_theta = max_theta.max(th[v].abs());
        }
    }
    Measured { h, theta_b: th, max_h, max_theta }
}

/// Exact-Jacobian bordered solver at a fixed base state, preconditioned by
/// the finite-element system.
pub struct RmSolver<'a> {
    pub mesh: &'a SurfaceMesh,
    pub gs: GlobalSystem,
    base_pos: Vec<Vec3>,
    base: Measured,
    eps_collar: f64,
    fd_delta: f64,
    tol: f64,
    /// tile-local lambda^{-1} (w o Pi).
    w_col: Vec<f64>,
    k_row: Vec<f64>,
    /// honest d/d theta of the measured pair, when available
    th_col: Option<(Vec<f64>, Vec<f64>)>,
}

pub struct RmStats {
    pub gmres_iters: usize,
    pub rel_residual: f64,
}

impl<'a> RmSolver<'a> {
    pub fn new(
        mesh: &'a SurfaceMesh,
        cfg: &RunConfig,
        gs: GlobalSystem,
    ) -> Result<RmSolver<'a>, DriverError> {
        let base_pos = mesh.pos.clone();
        Self::new_at(mesh, cfg, gs, base_pos)
    }

    /// Solver with the Jacobian evaluated at an arbitrary perturbed state.
    pub fn new_at(
        mesh: &'a SurfaceMesh,
        cfg: &RunConfig,
        gs: GlobalSystem,
        base_pos: Vec<Vec3>,
    ) -> Result<RmSolver<'a>, DriverError> {
        let base = measure(mesh, &base_pos);
        let tile = &gs.tile;
        let lam = mesh.deform.lambda;
        let n = tile.n();
        let mut w_col = vec![0.0; n];
        let mut k_row = vec![0.0; n];
        let flat_tile = TileSystem::new(mesh, true);
        for (lf, &g) in flat_tile.ids.iter().enumerate() {
            let l = tile.local[&g] as usize;
            k_row[l] = flat_tile.mass[lf]
                * 0.5
                * flat_tile.a2[lf]
                * gs.kernel.k_fund[mesh.fund_id[g as usize] as usize];
        }
        for (l, &g) in tile.ids.iter().enumerate() {
            w_col[l] = gs.kernel.w_fund[mesh.fund_id[g as usize] as usize] / lam;
        }
        Ok(RmSolver {
            mesh,
            gs,
            base_pos,
            base,
            eps_collar: cfg.eps_collar,
            fd_delta: cfg.fd_delta,
            tol: cfg.tol_linear,
            w_col,
            k_row,
            th_col: None,
        })
    }

    /// Install the finite-difference theta-derivative of the measured pair,
    /// replacing the model substitute-kernel column in the Newton system.
    pub fn set_theta_column(&mut self, col_h: Vec<f64>, col_t: Vec<f64>) {
        self.th_col = Some((col_h, col_t));
    }

    fn n(&self) -> usize {
        self.gs.tile.n()
    }

    /// Directional derivative of the measured (H, Theta) along the twisted
    /// flow of a tile field, by a central difference.
    pub fn jacobian_apply(&self, v_tile: &[f64]) -> Result<(Vec<f64>, Vec<f64>), DriverError> {
        let tile = &self.gs.tile;
        let scale = v_tile.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
        let t = self.fd_delta / scale;
        let v_full = tile.broadcast(self.mesh, v_tile, true);
        let phi_p: Vec<f64> = v_full.iter().map(|x| x * t).collect();
        let phi_m: Vec<f64> = v_full.iter().map(|x| -x * t).collect();
        let pos_p = geom::twisted_graph(self.mesh, &self.base_pos, &phi_p, self.eps_collar)?;
        let pos_m = geom::twisted_graph(self.mesh, &self.base_pos, &phi_m, self.eps_collar)?;
        let mp = measure(self.mesh, &pos_p);
        let mm = measure(self.mesh, &pos_m);
        let dh: Vec<f64> =
            (0..self.mesh.n_verts()).map(|i| (mp.h[i] - mm.h[i]) / (2.0 * t)).collect();
        let dth: Vec<f64> =
            (0..self.mesh.n_verts()).map(|i| (mp.theta_b[i] - mm.theta_b[i]) / (2.0 * t)).collect();
        Ok((tile.restrict(&dh), tile.restrict(&dth)))
    }

    /// Bordered matrix-vector product for (u, mu) packed as [u..., mu].
    fn apply(&self, y: &[f64]) -> Result<Vec<f64>, DriverError> {
        let n = self.n();
        let u = &y[..n];
        let mu = y[n];
        let (dh, dth) = self.jacobian_apply(u)?;
        let tile = &self.gs.tile;
        let mut out = vec![0.0; n + 1];
        for l in 0..n {
            out[l] = if tile.robin[l] {
                let c = self.th_col.as_ref().map(|(_, t)| t[l]).unwrap_or(0.0);
                dth[l] - mu * c
            } else {
                let c = self.th_col.as_ref().map(|(h, _)| h[l]).unwrap_or(self.w_col[l]);
                dh[l] - mu * c
            };
        }
        out[n] = (0..n).map(|l| self.k_row[l] * u[l]).sum();
        Ok(out)
    }

    /// Preconditioner: the direct bordered finite-element solve.
    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n();
        match self.gs.solve_tile(&r[..n], &r[..n], r[n]) {
            Ok((u, mu)) => {
                let mut out = u;
                out.push(mu);
                out
            }
            Err(_) => r.to_vec(),
        }
    }

    /// Solve J u = E + mu lambda^{-1} (w o Pi), J_Theta u = E_bdry, with the
    /// pairing constraint, by right-preconditioned GMRES on the exact
    /// discrete Jacobian.
    pub fn solve(
        &self,
        e: &[f64],
        e_bdry: &[f64],
        max_iters: usize,
    ) -> Result<(Vec<f64>, f64, RmStats), DriverError> {
        let tile = &self.gs.tile;
        let n = self.n();
        let mut e_sym = e.to_vec();
        self.mesh.symmetrize(&mut e_sym, true);
        let mut eb_sym = e_bdry.to_vec();
        self.mesh.symmetrize(&mut eb_sym, true);
        let et = tile.restrict(&e_sym);
        let ebt = tile.restrict(&eb_sym);
        let mut rhs = vec![0.0; n + 1];
        for l in 0..n {
            rhs[l] = if tile.robin[l] { ebt[l] } else { et[l] };
        }
        let b_norm = norm(&rhs);
        if b_norm == 0.0 {
            let zero = vec![0.0; self.mesh.n_verts()];
            return Ok((zero, 0.0, RmStats { gmres_iters: 0, rel_residual: 0.0 }));
        }
        let mut basis: Vec<Vec<f64>> = vec![rhs.iter().map(|x| x / b_norm).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut g = vec![0.0f64; max_iters + 1];
        let mut cs = vec![0.0f64; max_iters];
        let mut sn = vec![0.0f64; max_iters];
        g[0] = b_norm;
        let mut iters = 0;
        let mut rel = 1.0;
        for k in 0..max_iters {
            iters = k + 1;
            let z = self.precondition(&basis[k]);
            let mut w = self.apply(&z)?;
            let mut col = vec![0.0f64; k + 2];
            for j in 0..=k {
                let hjk: f64 = w.iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
                col[j] = hjk;
                for (wi, bi) in w.iter_mut().zip(&basis[j]) {
                    *wi -= hjk * bi;
                }
            }
            let hk1 = norm(&w);
            col[k + 1] = hk1;
            basis.push(if hk1 > 1e-300 {
                w.iter().map(|x| x / hk1).collect()
            } else {
                w.clone()
            });
            for j in 0..k {
                let t0 = cs[j] * col[j] + sn[j] * col[j + 1];
                let t1 = -sn[j] * col[j] + cs[j] * col[j + 1];
                col[j] = t0;
                col[j + 1] = t1;
            }
            let d = (col[k] * col[k] + col[k + 1] * col[k + 1]).sqrt().max(1e-300);
            cs[k] = col[k] / d;
            sn[k] = col[k + 1] / d;
            col[k] = d;
            col[k + 1] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            hess.push(col);
            rel = g[k + 1].abs() / b_norm;
            if rel < self.tol {
                break;
            }
        }
        let kk = iters;
        let mut ycoef = vec![0.0f64; kk];
        for i in (0..kk).rev() {
            let mut s = g[i];
            for j in (i + 1)..kk {
                s -= hess[j][i] * ycoef[j];
            }
            ycoef[i] = s / hess[i][i];
        }
        let mut y = vec![0.0f64; n + 1];
        for (c, b) in ycoef.iter().zip(&basis) {
            for (yi, bi) in y.iter_mut().zip(b) {
                *yi += c * bi;
            }
        }
        let z = self.precondition(&y);
        let u = tile.broadcast(self.mesh, &z[..n], true);
        Ok((u, z[n], RmStats { gmres_iters: iters, rel_residual: rel }))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// (phi_H, theta_H) = R_M(H - theta lambda^{-1} (w o Pi), 0).
pub fn compute_phi_h(
    mesh: &SurfaceMesh,
    rm: &RmSolver,
    theta: f64,
) -> Result<(Vec<f64>, f64), DriverError> {
    let lam = mesh.deform.lambda;
    let base = measure(mesh, &mesh.pos);
    let mut e = base.h.clone();
    for v in 0..mesh.n_verts() {
        let f = mesh.fund_id[v] as usize;
        e[v] -= theta / lam * rm.gs.kernel.w_fund[f];
    }
    let zero = vec![0.0; mesh.n_verts()];
    let (phi_h, theta_h, _) = rm.solve(&e, &zero, 40)?;
    Ok((phi_h, theta_h))
}

/// Per-iteration record of the outer loop.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub phi_norm: f64,
    pub theta: f64,
    pub mu: f64,
    pub max_h: f64,
    pub max_theta: f64,
    pub area: f64,
    pub gmres_iters: usize,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub theta_star: f64,
    pub final_max_h: f64,
    pub final_max_theta: f64,
    pub final_area: f64,
    pub initial_max_h: f64,
    pub genus: i64,
    pub boundary_loops: usize,
    pub symmetry_deviation: f64,
    pub seconds: f64,
}

/// Outcome of one application of the outer map.
pub struct StepOutcome {
    pub mesh: SurfaceMesh,
    /// Positions of the perturbed state measured inside the step.
    pub pos: Vec<Vec3>,
    pub phi: Vec<f64>,
    pub theta: f64,
    pub theta_h: f64,
    pub measured_max_h: f64,
    pub measured_max_theta: f64,
    pub gmres_iters: usize,
    pub quadratic_residual: f64,
}

/// One application of the nonlinear map: build M_theta, transport phi, form
/// phi_theta = phi - phi_H, perturb by the twisted graph, measure, solve the
/// residual equation, and return (-phi~, theta_H + theta~).
pub fn fixed_point_step(
    cfg: &RunConfig,
    phi: &[f64],
    theta: f64,
) -> Result<StepOutcome, DriverError> {
    let params = cfg.build_params(theta)?;
    let mesh = mesher::build_initial_surface(&params)?;
    let gs = GlobalSystem::new(&mesh)?;
    let rm = RmSolver::new(&mesh, cfg, gs)?;

    let (phi_h, theta_h) = compute_phi_h(&mesh, &rm, theta)?;
    // transport across the family is the identity on vertex indices
    let phi_theta: Vec<f64> = (0..mesh.n_verts()).map(|v| phi[v] - phi_h[v]).collect();
    let phi_max = phi_theta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let eps0 = 0.5 * cfg.eps_collar;
    if phi_max > eps0 {
        return Err(DriverError::Admissibility(phi_max, eps0));
    }
    let pos = geom::twisted_graph(&mesh, &mesh.pos, &phi_theta, cfg.eps_collar)?;
    let m1 = measure(&mesh, &pos);
    // nonlinear residual beyond the exact linearization
    let (dh_t, dth_t) = rm.jacobian_apply(&rm.gs.tile.restrict(&phi_theta))?;
    let jh = rm.gs.tile.broadcast(&mesh, &dh_t, true);
    let jth = rm.gs.tile.broadcast(&mesh, &dth_t, true);
    let base = &rm.base;
    let mut e_nl = vec![0.0; mesh.n_verts()];
    let mut eb_nl = vec![0.0; mesh.n_verts()];
    for v in 0..mesh.n_verts() {
        e_nl[v] = m1.h[v] - base.h[v] - jh[v];
        eb_nl[v] = m1.theta_b[v] - base.theta_b[v] - jth[v];
    }
    let quad = geom::pair_norm(&mesh, &e_nl, &eb_nl, cfg.gamma);
    let (phi_t, theta_t, stats) = rm.solve(&e_nl, &eb_nl, 40)?;
    let new_phi: Vec<f64> = phi_t.iter().map(|x| -x).collect();
    let (max_h, max_theta) = (m1.max_h, m1.max_theta);
    Ok(StepOutcome {
        mesh,
        pos,
        phi: new_phi,
        theta: theta_h + theta_t,
        theta_h,
        measured_max_h: max_h,
        measured_max_theta: max_theta,
        gmres_iters: stats.gmres_iters,
        quadratic_residual: quad,
    })
}

/// Run the outer loop from (0, theta0): damped Newton on the vertex
/// positions, with the unbalancing angle updated through the substitute
/// kernel direction and theta-changes applied as exact family transport.
/// Fixed points satisfy measured H = Theta = 0.
pub fn run(cfg: &RunConfig) -> Result<(SurfaceMesh, Vec<Vec3>, SolveReport), DriverError> {
    let t0 = std::time::Instant::now();
    let params0 = cfg.build_params(cfg.theta0)?;
    let mesh0 = mesher::build_initial_surface(&params0)?;
    let initial = measure(&mesh0, &mesh0.pos);
    let lam = mesh0.deform.lambda;
    let tol_h = cfg.tol_theta_angle / lam;

    let mut theta = cfg.theta0;
    let mut mesh = mesh0;
    let mut pos = mesh.pos.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut meas = measure(&mesh, &pos);
    for _it in 0..cfg.max_iterations {
        // admissibility: normal offset from the current family member
        let nrm0 = geom::vertex_normals(&mesh, &mesh.pos);
        let mut offset = 0.0f64;
        for v in 0..pos.len() {
            offset = offset.max((pos[v] - mesh.pos[v]).dot(nrm0[v]).abs());
        }
        if offset > 0.9 * cfg.eps_collar {
            return Err(DriverError::Admissibility(offset, 0.9 * cfg.eps_collar));
        }
        let gs = GlobalSystem::new(&mesh)?;
        let mut rm = RmSolver::new_at(&mesh, cfg, gs, pos.clone())?;
        {
            // family-transport theta column
            let dth = 2e-4;
            let side = |th: f64| -> Result<Measured, DriverError> {
                let p = cfg.build_params(th)?;
                let msh = mesher::build_initial_surface_unchecked(&p)?;
                let moved: Vec<Vec3> = (0..pos.len())
                    .map(|v| pos[v] + (msh.pos[v] - mesh.pos[v]))
                    .collect();
                Ok(measure(&mesh, &moved))
            };
            let mp = side(theta + dth)?;
            let mm = side(theta - dth)?;
            let nall = mesh.n_verts();
            let mut ch = vec![0.0; nall];
            let mut ct = vec![0.0; nall];
            for v in 0..nall {
                ch[v] = (mp.h[v] - mm.h[v]) / (2.0 * dth);
                ct[v] = (mp.theta_b[v] - mm.theta_b[v]) / (2.0 * dth);
            }
            rm.set_theta_column(rm.gs.tile.restrict(&ch), rm.gs.tile.restrict(&ct));
        }
        let (delta, mu, stats) = rm.solve(&meas.h, &meas.theta_b, 40)?;
        records.push(IterationRecord {
            phi_norm: offset / lam,
            theta,
            mu,
            max_h: meas.max_h,
            max_theta: meas.max_theta,
            area: state_area(&mesh, &pos),
            gmres_iters: stats.gmres_iters,
        });
        if meas.max_h <= tol_h && meas.max_theta <= cfg.tol_theta_angle {
            converged = true;
            break;
        }
        // trust region: cap the normal displacement against the focal scale
        // and the theta step against the family's linear regime
        let a2 = geom::second_form_norm2_fit(&mesh);
        let mut worst = 0.0f64;
        for v in 0..delta.len() {
            worst = worst.max(delta[v].abs() * a2[v].sqrt());
        }
        let alpha = (0.3 / worst.max(1e-300))
            .min(0.015 / mu.abs().max(1e-300))
            .min(1.0)
            .max(0.02);
        let step: Vec<f64> = delta.iter().map(|d| -alpha * d).collect();
        let step_max = step.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let flowed = geom::twisted_graph(&mesh, &pos, &step, cfg.eps_collar)?;
        // tangential maintenance only while the steps are large; near the
        // fixed point it would put a quality-noise floor under the residual
        let mut new_pos =
            if step_max > 2e-3 { geom::relax_tangential(&mesh, &flowed, 1) } else { flowed };
        let new_theta = theta + alpha * mu;
        // transport to the new family member
        if new_theta != theta {
            let p = cfg.build_params(new_theta)?;
            let msh = mesher::build_initial_surface_unchecked(&p)?;
            for v in 0..new_pos.len() {
                new_pos[v] += msh.pos[v] - mesh.pos[v];
            }
            mesh = msh;
        }
        pos = new_pos;
        theta = new_theta;
        meas = measure(&mesh, &pos);
    }
    let chi = mesh.euler_characteristic();
    let genus = (2 - 3 - chi) / 2;
    let report = SolveReport {
        converged,
        theta_star: theta,
        final_max_h: meas.max_h,
        final_max_theta: meas.max_theta,
        final_area: state_area(&mesh, &pos),
        initial_max_h: initial.max_h,
        genus,
        boundary_loops: mesh.boundary_loops.len(),
        symmetry_deviation: state_symmetry(&mesh, &pos),
        records,
        seconds: t0.elapsed().as_secs_f64(),
    };
    if !report.converged {
        return Err(DriverError::NonConvergence(cfg.max_iterations, report.final_max_h));
    }
    Ok((mesh, pos, report))
}

pub fn state_area(mesh: &SurfaceMesh, pos: &[Vec3]) -> f64 {
    if pos.is_empty() {
        return mesh.area();
    }
    mesh.tris
        .iter()
        .map(|t| {
            0.5 * (pos[t[1] as usize] - pos[t[0] as usize])
                .cross(pos[t[2] as usize] - pos[t[0] as usize])
                .norm()
        })
        .sum()
}

pub fn state_symmetry(mesh: &SurfaceMesh, pos: &[Vec3]) -> f64 {
    let p = if pos.is_empty() { &mesh.pos } else { pos };
    let gens = [
        crate::util::vec3::Mat3::refl_plane(0.0),
        crate::util::vec3::Mat3::refl_plane(std::f64::consts::PI / mesh.params.m as f64),
        rotorefl(mesh.params.m),
    ];
    let mut worst = 0.0f64;
    for (g, (perm, _)) in gens.iter().zip(&mesh.generators) {
        for v in 0..p.len() {
            worst = worst.max(g.apply(p[v]).dist(p[perm[v] as usize]));
        }
    }
    worst
}

fn rotorefl(m: usize) -> crate::util::vec3::Mat3 {
    let ang = std::f64::consts::PI / m as f64;
    let (s, c) = ang.sin_cos();
    crate::util::vec3::Mat3([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, -1.0]])
}

/// Write the iteration report as structured text with fixed field names.
pub fn emit_report(report: &SolveReport, path: &Path) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "converged = {}", report.converged)?;
    writeln!(out, "theta_star = {:.17e}", report.theta_star)?;
    writeln!(out, "initial_max_h = {:.12e}", report.initial_max_h)?;
    writeln!(out, "final_max_h = {:.12e}", report.final_max_h)?;
    writeln!(out, "final_max_theta = {:.12e}", report.final_max_theta)?;
    writeln!(out, "final_area = {:.12}", report.final_area)?;
    writeln!(out, "genus = {}", report.genus)?;
    writeln!(out, "boundary_loops = {}", report.boundary_loops)?;
    writeln!(out, "symmetry_deviation = {:.3e}", report.symmetry_deviation)?;
    writeln!(out, "seconds = {:.2}", report.seconds)?;
    for (i, r) in report.records.iter().enumerate() {
        writeln!(out, "iter.{i}.phi_norm = {:.6e}", r.phi_norm)?;
        writeln!(out, "iter.{i}.theta = {:.10e}", r.theta)?;
        writeln!(out, "iter.{i}.mu = {:.6e}", r.mu)?;
        writeln!(out, "iter.{i}.max_h = {:.6e}", r.max_h)?;
        writeln!(out, "iter.{i}.max_theta = {:.6e}", r.max_theta)?;
        writeln!(out, "iter.{i}.area = {:.10}", r.area)?;
        writeln!(out, "iter.{i}.gmres_iters = {}", r.gmres_iters)?;
    }
    Ok(())
}

/// Aligned verification summary of a mesh or perturbed state.
pub fn verify_summary(mesh: &SurfaceMesh, pos: Option<&[Vec3]>) -> BTreeMap<&'static str, f64> {
    let owned;
    let p: &[Vec3] = match pos {
        Some(q) => q,
        None => {
            owned = mesh.pos.clone();
            &owned
        }
    };
    let meas = measure(mesh, p);
    let mut out = BTreeMap::new();
    out.insert("max_h", meas.max_h);
    out.insert("max_theta", meas.max_theta);
    out.insert("area", state_area(mesh, if pos.is_some() { p } else { &[] }));
    out.insert("euler_characteristic", mesh.euler_characteristic() as f64);
    out.insert("boundary_loops", mesh.boundary_loops.len() as f64);
    out.insert("symmetry_deviation", state_symmetry(mesh, if pos.is_some() { p } else { &[] }));
    out.insert("min_angle_deg", mesh.min_triangle_angle().to_degrees());
    out
}
