//! The singly periodic Scherk surface sinh x sinh z = cos y, its core-wing
//! decomposition, the cutoff calculus, the unbalancing and bending maps, the
//! asymptotic wing immersions for the bent family, and the glued
//! desingularizing map together with the homothety to neck scale.

use crate::util::jet::{Jet1, Jet2, Jet2Vec};
use crate::util::vec3::Vec3;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScherkError {
    #[error("cutoff endpoints coincide (a = b = {0})")]
    DegenerateCutoff(f64),
    #[error("projection to the Scherk surface did not converge from {0:?}")]
    ProjectionDiverged(Vec3),
    #[error("wing parameter s = {s} beyond the truncated block (max {max})")]
    SOutOfRange { s: f64, max: f64 },
    #[error("parameter window violated: {0}")]
    ParameterWindow(String),
}

// ---------------------------------------------------------------------------
// Cutoff calculus
// ---------------------------------------------------------------------------

/// The fixed transition function: weakly increasing, 0 on (-inf,-1],
/// 1 on [1,inf), with Psi - 1/2 odd.
pub fn psi_transition_fn(t: f64) -> f64 {
    if t <= -1.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let fp = (-1.0 / (1.0 + t)).exp();
        let fm = (-1.0 / (1.0 - t)).exp();
        fp / (fp + fm)
    }
}

fn psi_jet1(t: Jet1) -> Jet1 {
    let v = t.val();
    if v <= -1.0 + 1e-12 {
        Jet1::constant(0.0)
    } else if v >= 1.0 - 1e-12 {
        Jet1::constant(1.0)
    } else {
        let one = Jet1::constant(1.0);
        let fp = (-(one / (one + t))).exp();
        let fm = (-(one / (one - t))).exp();
        fp / (fp + fm)
    }
}

fn psi_jet2(t: Jet2) -> Jet2 {
    let v = t.val();
    if v <= -1.0 + 1e-12 {
        Jet2::constant(0.0)
    } else if v >= 1.0 - 1e-12 {
        Jet2::constant(1.0)
    } else {
        let one = Jet2::constant(1.0);
        let fp = (-((one + t).recip())).exp();
        let fm = (-((one - t).recip())).exp();
        fp / (fp + fm)
    }
}

fn affine_l(a: f64, b: f64, t: f64) -> f64 {
    3.0 * (2.0 * t - a - b) / (b - a)
}

/// psi_cut[a,b] = Psi of the affine map with L(a) = -3, L(b) = 3.
pub fn psi_cut(a: f64, b: f64, t: f64) -> f64 {
    assert!(a != b, "psi_cut endpoints must differ");
    psi_transition_fn(affine_l(a, b, t))
}

pub fn psi_cut_checked(a: f64, b: f64, t: f64) -> Result<f64, ScherkError> {
    if a == b {
        return Err(ScherkError::DegenerateCutoff(a));
    }
    Ok(psi_cut(a, b, t))
}

/// psi_cut with four derivatives in t.
pub fn psi_cut_j1(a: f64, b: f64, t: Jet1) -> Jet1 {
    let l = (t * (6.0 / (b - a))) + Jet1::constant(-3.0 * (a + b) / (b - a));
    psi_jet1(l)
}

/// psi_cut with gradient and Hessian in (y, s) parameters.
pub fn psi_cut_j2(a: f64, b: f64, t: Jet2) -> Jet2 {
    let l = (t * (6.0 / (b - a))) + Jet2::constant(-3.0 * (a + b) / (b - a));
    psi_jet2(l)
}

/// Symmetric bump psi_cut[eps,0] * psi_cut[-eps,0]: 1 at 0, 0 outside |t| >= eps.
pub fn psi_cut_eps(eps: f64, t: f64) -> f64 {
    psi_cut(eps, 0.0, t) * psi_cut(-eps, 0.0, t)
}

/// Blend two values along s: f0 near s <= a, f1 near s >= b (for a < b).
pub fn psi_transition(a: f64, b: f64, s_val: f64, f0: f64, f1: f64) -> f64 {
    psi_cut(a, b, s_val) * f1 + psi_cut(b, a, s_val) * f0
}

// ---------------------------------------------------------------------------
// The Scherk surface
// ---------------------------------------------------------------------------

/// Implicit defining function F(p) = sinh x sinh z - cos y.
pub fn scherk_implicit(p: Vec3) -> f64 {
    p.x.sinh() * p.z.sinh() - p.y.cos()
}

pub fn scherk_gradient(p: Vec3) -> Vec3 {
    Vec3::new(p.x.cosh() * p.z.sinh(), p.y.sin(), p.x.sinh() * p.z.cosh())
}

fn scherk_hessian(p: Vec3) -> [[f64; 3]; 3] {
    let sxsz = p.x.sinh() * p.z.sinh();
    let cxcz = p.x.cosh() * p.z.cosh();
    [[sxsz, 0.0, cxcz], [0.0, p.y.cos(), 0.0], [cxcz, 0.0, sxsz]]
}

/// Global unit normal on S, chosen so nu . e_z < 0 on S .. {x > 0}.
pub fn scherk_normal(p: Vec3) -> Vec3 {
    (-scherk_gradient(p)).normalized()
}

/// Mean curvature of the level set through p, div(grad F / |grad F|).
/// Vanishes identically on S; used as an independent minimality oracle.
pub fn scherk_implicit_mean_curvature(p: Vec3) -> f64 {
    let g = scherk_gradient(p);
    let h = scherk_hessian(p);
    let n2 = g.norm2();
    let tr = h[0][0] + h[1][1] + h[2][2];
    let mut ghg = 0.0;
    let gv = [g.x, g.y, g.z];
    for i in 0..3 {
        for j in 0..3 {
            ghg += gv[i] * h[i][j] * gv[j];
        }
    }
    (tr - ghg / n2) / n2.sqrt()
}

/// Gaussian curvature of S at p (on-surface), via the implicit adjugate formula.
pub fn scherk_gauss_curvature(p: Vec3) -> f64 {
    let g = scherk_gradient(p);
    let h = scherk_hessian(p);
    let gv = [g.x, g.y, g.z];
    // adjugate of the Hessian
    let adj = |i: usize, j: usize| {
        let r = [(i + 1) % 3, (i + 2) % 3];
        let c = [(j + 1) % 3, (j + 2) % 3];
        h[r[0]][c[0]] * h[r[1]][c[1]] - h[r[0]][c[1]] * h[r[1]][c[0]]
    };
    let mut gag = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            // adj(H)^T entry (i,j) = cofactor(j,i); H symmetric so adj is too
            gag += gv[i] * adj(i, j) * gv[j];
        }
    }
    gag / g.norm2().powi(2)
}

/// |A|^2 on the minimal surface S equals -2K.
pub fn scherk_second_form_norm2(p: Vec3) -> f64 {
    -2.0 * scherk_gauss_curvature(p)
}

/// Newton-correct a nearby point onto S, |F| <= 1e-12.
pub fn scherk_project(mut p: Vec3) -> Result<Vec3, ScherkError> {
    let start = p;
    for _ in 0..60 {
        let f = scherk_implicit(p);
        if f.abs() <= 1e-12 {
            return Ok(p);
        }
        let g = scherk_gradient(p);
        let n2 = g.norm2();
        if n2 < 1e-30 {
            return Err(ScherkError::ProjectionDiverged(start));
        }
        p = p - g * (f / n2);
        if p.dist(start) > 1.0 {
            return Err(ScherkError::ProjectionDiverged(start));
        }
    }
    Err(ScherkError::ProjectionDiverged(start))
}

/// Exponentially decaying wing graph function,
/// phi_wing(y,s) = -arcsinh(cos y / sinh(a+s)).
pub fn phi_wing(y: f64, s: f64, a: f64) -> f64 {
    -(y.cos() / (a + s).sinh()).asinh()
}

pub fn phi_wing_j2(y: Jet2, s: Jet2, a: f64) -> Jet2 {
    -((y.cos() / (s + Jet2::constant(a)).sinh()).asinh())
}

// ---------------------------------------------------------------------------
// Symmetries
// ---------------------------------------------------------------------------

/// Generators of G_S acting on the ambient coordinates of the Scherk model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsGenerator {
    /// Reflection about {y = 0}.
    ReflY,
    /// Reflection about {y = pi}.
    ReflYPi,
    /// Rotoreflection about the line {y = pi/2, z = 0}.
    RotoRefl,
}

impl GsGenerator {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        match self {
            GsGenerator::ReflY => Vec3::new(p.x, -p.y, p.z),
            GsGenerator::ReflYPi => Vec3::new(p.x, 2.0 * PI - p.y, p.z),
            GsGenerator::RotoRefl => Vec3::new(p.x, PI - p.y, -p.z),
        }
    }

    /// Character of the symmetric function class: -1 on the rotoreflection.
    pub fn sign(&self) -> f64 {
        match self {
            GsGenerator::RotoRefl => -1.0,
            _ => 1.0,
        }
    }

    pub fn all() -> [GsGenerator; 3] {
        [GsGenerator::ReflY, GsGenerator::ReflYPi, GsGenerator::RotoRefl]
    }
}

// ---------------------------------------------------------------------------
// Deformation maps
// ---------------------------------------------------------------------------

/// Construction parameters for one desingularizing block.
#[derive(Debug, Clone, Copy)]
pub struct DeformParams {
    pub theta: f64,
    /// Bending parameter; 1/m for the initial surfaces, 0 for the flat model.
    pub tau: f64,
    pub m: usize,
    /// Wing-transition offset of the core-wings decomposition.
    pub a: f64,
    pub delta_s: f64,
    /// Homothety scale lambda = r_theta / m.
    pub lambda: f64,
    /// End of the core-to-wing blend window [0, w_blend].
    pub w_blend: f64,
    /// Unbalancing cutoff: identity on |z| <= z_id, pure rotation on |z| >= z_rot.
    pub z_id: f64,
    pub z_rot: f64,
}

impl DeformParams {
    pub fn s_max(&self) -> f64 {
        5.0 * self.delta_s / self.tau.abs()
    }

    pub fn trunc_window(&self) -> (f64, f64) {
        (3.0 * self.delta_s / self.tau.abs(), 4.0 * self.delta_s / self.tau.abs())
    }

    pub fn seam_s(&self) -> f64 {
        4.5 * self.delta_s / self.tau.abs()
    }

    /// psi_trun: 1 below 3 delta_s/|tau|, 0 above 4 delta_s/|tau|.
    pub fn psi_trun(&self, s: f64) -> f64 {
        if self.tau == 0.0 {
            return 1.0;
        }
        let (w3, w4) = self.trunc_window();
        psi_cut(w4, w3, s)
    }

    pub fn psi_trun_j2(&self, s: Jet2) -> Jet2 {
        if self.tau == 0.0 {
            return Jet2::constant(1.0);
        }
        let (w3, w4) = self.trunc_window();
        psi_cut_j2(w4, w3, s)
    }

    /// Check the geometric feasibility windows, naming any violation.
    pub fn validate(&self, r_theta: f64, z_theta: f64) -> Result<(), ScherkError> {
        let err = |s: String| Err(ScherkError::ParameterWindow(s));
        if self.m < 3 {
            return err(format!("m = {} < 3", self.m));
        }
        if self.a <= (1.0f64).asinh() {
            return err(format!(
                "wing offset a = {} <= arcsinh(1): wings overlap the core corners",
                self.a
            ));
        }
        if self.w_blend <= 0.2 || self.w_blend > 1.0 {
            return err(format!("blend window w_blend = {} outside (0.2, 1]", self.w_blend));
        }
        if self.tau != 0.0 {
            let (w3, _) = self.trunc_window();
            if w3 < self.w_blend + 0.05 {
                return err(format!(
                    "truncation window start 3*delta_s*m = {w3:.3} overlaps the blend window [0, {}]",
                    self.w_blend
                ));
            }
            // outer horizontal wing must stay inside the unit ball
            let outer = r_theta * ((self.a + self.s_max()) * self.tau.abs()).exp();
            if outer > 0.985 {
                return err(format!(
                    "outer horizontal wing radius {outer:.4} leaves the unit ball (a + 5 delta_s m too large)"
                ));
            }
            // vertical wings must end below the sphere contact circle
            let top = self.lambda * (self.a + self.s_max()) * self.theta.cos().abs();
            if top > 0.8 * z_theta {
                return err(format!(
                    "vertical wing height {top:.4} too close to the sphere circle z_theta = {z_theta:.4}"
                ));
            }
        }
        if !(self.z_id > 0.45 && self.z_rot > self.z_id && self.z_rot <= self.a) {
            return err(format!(
                "unbalancing cutoff [z_id, z_rot] = [{}, {}] incompatible with a = {}",
                self.z_id, self.z_rot, self.a
            ));
        }
        Ok(())
    }
}

/// Unbalancing map: identity on |z| <= z_id, rotation of the upper (lower)
/// region tilting e_z toward +e_x (its mirror) on |z| >= z_rot.
pub fn xi_theta(params: &DeformParams, theta: f64, p: Vec3) -> Vec3 {
    let w = psi_cut(params.z_rot, params.z_id, p.z.abs());
    if w >= 1.0 {
        return p;
    }
    let (s, c) = theta.sin_cos();
    let r = if p.z >= 0.0 {
        Vec3::new(p.x * c + p.z * s, p.y, -p.x * s + p.z * c)
    } else {
        Vec3::new(p.x * c - p.z * s, p.y, p.x * s + p.z * c)
    };
    p * w + r * (1.0 - w)
}

fn xi_theta_j2(params: &DeformParams, theta: f64, p: &Jet2Vec, upper: bool) -> Jet2Vec {
    let absz = if upper { p.z } else { -p.z };
    let w = psi_cut_j2(params.z_rot, params.z_id, absz);
    let (s, c) = theta.sin_cos();
    let r = if upper {
        Jet2Vec { x: p.x * c + p.z * s, y: p.y, z: -(p.x * s) + p.z * c }
    } else {
        Jet2Vec { x: p.x * c - p.z * s, y: p.y, z: p.x * s + p.z * c }
    };
    let one_minus = Jet2::constant(1.0) - w;
    p.scale(w).add(&r.scale(one_minus))
}

/// Radial pre-correction applied before the bending: x is advanced so the
/// bent image matches the exponential horizontal asymptotics exactly and the
/// catenoidal vertical asymptotics to third order in tau z.  Without it the
/// bent core misses the exact wing surfaces by O(tau (a+s)^2), which the
/// narrow blend window cannot absorb at moderate m.
pub fn bend_correction(params: &DeformParams, p: Vec3) -> Vec3 {
    let tau = params.tau;
    if tau == 0.0 {
        return p;
    }
    let horiz = ((tau * p.x).exp() - 1.0) / tau;
    let chi = psi_cut(0.35, params.z_id.max(0.8), p.z.abs());
    let vert = chi * ((tau * p.z).cosh() - 1.0) / tau;
    Vec3::new(horiz + vert, p.y, p.z)
}

fn bend_correction_j2(params: &DeformParams, p: &Jet2Vec) -> Jet2Vec {
    let tau = params.tau;
    if tau == 0.0 {
        return *p;
    }
    let horiz = ((p.x * tau).exp() - Jet2::constant(1.0)) * (1.0 / tau);
    // on the wings |z| is smooth: z keeps its sign per chart
    let absz = if p.z.val() >= 0.0 { p.z } else { -p.z };
    let chi = psi_cut_j2(0.35, params.z_id.max(0.8), absz);
    let vert = chi * (((p.z * tau).cosh() - Jet2::constant(1.0)) * (1.0 / tau));
    Jet2Vec { x: horiz + vert, y: p.y, z: p.z }
}

/// The full core deformation: unbalance, pre-correct, bend.
pub fn core_map(params: &DeformParams, p: Vec3) -> Vec3 {
    b_tau(params.tau, bend_correction(params, xi_theta(params, params.theta, p)))
}

/// Bending map wrapping the y-axis around the circle of radius 1/tau.
pub fn b_tau(tau: f64, p: Vec3) -> Vec3 {
    if tau == 0.0 {
        return p;
    }
    let angle = tau * p.y;
    let rad = 1.0 / tau + p.x;
    Vec3::new(rad * angle.cos() - 1.0 / tau, rad * angle.sin(), p.z)
}

fn b_tau_j2(tau: f64, p: &Jet2Vec) -> Jet2Vec {
    if tau == 0.0 {
        return *p;
    }
    let angle = p.y * tau;
    let rad = p.x + Jet2::constant(1.0 / tau);
    Jet2Vec {
        x: rad * angle.cos() - Jet2::constant(1.0 / tau),
        y: rad * angle.sin(),
        z: p.z,
    }
}

/// Wing kinds of the core-wings decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WingKind {
    HorPlus,
    HorMinus,
    VerPlus,
    VerMinus,
}

impl WingKind {
    pub fn all() -> [WingKind; 4] {
        [WingKind::HorPlus, WingKind::HorMinus, WingKind::VerPlus, WingKind::VerMinus]
    }

    pub fn is_vertical(&self) -> bool {
        matches!(self, WingKind::VerPlus | WingKind::VerMinus)
    }
}

/// Flat asymptotic half-plane of a wing with its graph normal, so that the
/// graph of phi_wing over it is exactly the corresponding wing of S.
pub fn wing_plane_flat(kind: WingKind, y: f64, s: f64, a: f64) -> (Vec3, Vec3) {
    match kind {
        WingKind::HorPlus => (Vec3::new(a + s, y, 0.0), Vec3::new(0.0, 0.0, -1.0)),
        WingKind::HorMinus => (Vec3::new(-(a + s), y, 0.0), Vec3::new(0.0, 0.0, 1.0)),
        WingKind::VerPlus => (Vec3::new(0.0, y, a + s), Vec3::new(-1.0, 0.0, 0.0)),
        WingKind::VerMinus => (Vec3::new(0.0, y, -(a + s)), Vec3::new(1.0, 0.0, 0.0)),
    }
}

/// The exact point of S carried by wing coordinates (y, s).
pub fn wing_point_on_s(kind: WingKind, y: f64, s: f64, a: f64) -> Vec3 {
    let (base, n) = wing_plane_flat(kind, y, s, a);
    base + n * phi_wing(y, s, a)
}

/// rho_theta(t) = cosh t + sin theta sinh t, the Kapouleas profile factor.
pub fn rho_theta(theta: f64, t: f64) -> f64 {
    t.cosh() + theta.sin() * t.sinh()
}

pub fn rho_theta_prime(theta: f64, t: f64) -> f64 {
    t.sinh() + theta.sin() * t.cosh()
}

/// Base immersion of the bent asymptotic surface of a wing, with its unit
/// normal, as jets in (y, s).  tau = 0 is the continuous limit.
pub fn wing_base_j2(
    kind: WingKind,
    theta: f64,
    tau: f64,
    a: f64,
    y: f64,
    s: f64,
) -> (Jet2Vec, Jet2Vec) {
    let yj = Jet2::var_y(y);
    let sj = Jet2::var_s(s);
    let las = sj + Jet2::constant(a); // a + s
    if tau == 0.0 {
        let (st, ct) = theta.sin_cos();
        return match kind {
            WingKind::HorPlus => (
                Jet2Vec { x: las, y: yj, z: Jet2::constant(0.0) },
                Jet2Vec::constant(Vec3::new(0.0, 0.0, -1.0)),
            ),
            WingKind::HorMinus => (
                Jet2Vec { x: -las, y: yj, z: Jet2::constant(0.0) },
                Jet2Vec::constant(Vec3::new(0.0, 0.0, 1.0)),
            ),
            WingKind::VerPlus => (
                Jet2Vec { x: las * st, y: yj, z: las * ct },
                Jet2Vec::constant(Vec3::new(-ct, 0.0, st)),
            ),
            WingKind::VerMinus => (
                Jet2Vec { x: las * st, y: yj, z: -(las * ct) },
                Jet2Vec::constant(Vec3::new(ct, 0.0, st)),
            ),
        };
    }
    let angle = yj * tau;
    let (ca, sa) = (angle.cos(), angle.sin());
    let center = Jet2::constant(-1.0 / tau);
    match kind {
        WingKind::HorPlus | WingKind::HorMinus => {
            let sign = if kind == WingKind::HorPlus { 1.0 } else { -1.0 };
            let rad = (las * (sign * tau)).exp() * (1.0 / tau);
            let base = Jet2Vec { x: rad * ca + center, y: rad * sa, z: Jet2::constant(0.0) };
            let n = Jet2Vec::constant(Vec3::new(0.0, 0.0, -sign));
            (base, n)
        }
        WingKind::VerPlus | WingKind::VerMinus => {
            let sign = if kind == WingKind::VerPlus { 1.0 } else { -1.0 };
            let t = las * tau;
            let rho = t.cosh() + t.sinh() * theta.sin();
            let rho_p = t.sinh() + t.cosh() * theta.sin();
            let _ = rho_p;
            let rad = rho * (1.0 / tau);
            let base = Jet2Vec {
                x: rad * ca + center,
                y: rad * sa,
                z: las * (sign * theta.cos()),
            };
            // unit normal: (-sign cos(th) cos, -sign cos(th) sin, rho') / rho
            let rhop = t.sinh() + t.cosh() * theta.sin();
            let inv = rho.recip();
            let n = Jet2Vec {
                x: ca * (-sign * theta.cos()) * inv,
                y: sa * (-sign * theta.cos()) * inv,
                z: rhop * inv,
            };
            (base, n)
        }
    }
}

/// Convenience scalar evaluation of the bent vertical immersion.
pub fn x_ver(theta: f64, tau: f64, a: f64, kind_plus: bool, y: f64, s: f64) -> Vec3 {
    let kind = if kind_plus { WingKind::VerPlus } else { WingKind::VerMinus };
    wing_base_j2(kind, theta, tau, a, y, s).0.val()
}

/// Convenience scalar evaluation of the bent horizontal immersion.
pub fn x_hor(tau: f64, a: f64, kind_plus: bool, y: f64, s: f64) -> Vec3 {
    let kind = if kind_plus { WingKind::HorPlus } else { WingKind::HorMinus };
    wing_base_j2(kind, 0.0, tau, a, y, s).0.val()
}

/// A point of the block in Scherk parameters: either a core point carried by
/// its flat position on S, or a wing point (kind, y, s).
#[derive(Debug, Clone, Copy)]
pub enum BlockPoint {
    Core(Vec3),
    Wing { kind: WingKind, y: f64, s: f64 },
}

/// The glued desingularizing map Z restricted to s <= 5 delta_s / |tau|,
/// without the homothety.
pub fn desing_point(params: &DeformParams, p: &BlockPoint) -> Result<Vec3, ScherkError> {
    match *p {
        BlockPoint::Core(q) => Ok(core_map(params, q)),
        BlockPoint::Wing { kind, y, s } => {
            if params.tau != 0.0 && s > params.s_max() + 1e-9 {
                return Err(ScherkError::SOutOfRange { s, max: params.s_max() });
            }
            Ok(desing_wing_j2(params, kind, y, s).val())
        }
    }
}

/// Wing branch of the glued map as a jet: blends the deformed Scherk graph
/// with the truncated graph over the bent asymptotic immersion.
pub fn desing_wing_j2(params: &DeformParams, kind: WingKind, y: f64, s: f64) -> Jet2Vec {
    let a = params.a;
    let yj = Jet2::var_y(y);
    let sj = Jet2::var_s(s);
    let phi = phi_wing_j2(yj, sj, a);
    // branch f1: truncated graph over the bent base
    let (base, n) = wing_base_j2(kind, params.theta, params.tau, a, y, s);
    let f1 = base.add(&n.scale(phi * params.psi_trun_j2(sj)));
    if s >= params.w_blend {
        return f1;
    }
    // branch f0: bend/unbalance the exact flat wing point of S
    let las = sj + Jet2::constant(a);
    let flat = match kind {
        WingKind::HorPlus => Jet2Vec { x: las, y: yj, z: -phi },
        WingKind::HorMinus => Jet2Vec { x: -las, y: yj, z: phi },
        WingKind::VerPlus => Jet2Vec { x: -phi, y: yj, z: las },
        WingKind::VerMinus => Jet2Vec { x: phi, y: yj, z: -las },
    };
    let upper = match kind {
        WingKind::VerPlus => true,
        WingKind::VerMinus => false,
        // horizontal wings sit at |z| = |phi_wing| << z_id where Xi is the identity
        _ => true,
    };
    let f0 = b_tau_j2(
        params.tau,
        &bend_correction_j2(params, &xi_theta_j2(params, params.theta, &flat, upper)),
    );
    let w1 = psi_cut_j2(0.0, params.w_blend, sj);
    let w0 = psi_cut_j2(params.w_blend, 0.0, sj);
    f1.scale(w1).add(&f0.scale(w0))
}

/// Affine homothety to neck scale: q -> lambda (q + m e_x).
pub fn homothety(params: &DeformParams, q: Vec3) -> Vec3 {
    Vec3::new(params.lambda * (q.x + params.m as f64), params.lambda * q.y, params.lambda * q.z)
}

pub fn homothety_j2(params: &DeformParams, q: &Jet2Vec) -> Jet2Vec {
    Jet2Vec {
        x: (q.x + Jet2::constant(params.m as f64)) * params.lambda,
        y: q.y * params.lambda,
        z: q.z * params.lambda,
    }
}

/// Scaled glued immersion: homothety composed with the desingularizing map.
pub fn z_map(params: &DeformParams, p: &BlockPoint) -> Result<Vec3, ScherkError> {
    Ok(homothety(params, desing_point(params, p)?))
}

/// Scaled wing branch with exact derivatives, for analytic curvature.
pub fn z_map_wing_j2(params: &DeformParams, kind: WingKind, y: f64, s: f64) -> Jet2Vec {
    homothety_j2(params, &desing_wing_j2(params, kind, y, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(theta: f64, m: usize) -> DeformParams {
        let consts = crate::rotsym::solve_critical_constants().unwrap();
        let fam = crate::rotsym::family_at_theta(theta, &consts).unwrap();
        DeformParams {
            theta,
            tau: 1.0 / m as f64,
            m,
            a: 2.0,
            delta_s: 0.07,
            lambda: fam.r_hat / m as f64,
            w_blend: 1.0,
            z_id: 1.0,
            z_rot: 2.0,
        }
    }

    #[test]
    fn cutoff_properties() {
        assert_eq!(psi_cut(0.0, 1.0, 0.5), 0.5);
        // partition of unity and plateau values
        for k in 0..200 {
            let t = -1.0 + 4.0 * k as f64 / 199.0;
            let s = psi_cut(0.0, 1.0, t) + psi_cut(1.0, 0.0, t);
            assert!((s - 1.0).abs() < 1e-15);
        }
        for z in [2.0, 2.5, 10.0] {
            assert_eq!(psi_cut(2.0, 1.0, z), 0.0);
        }
        for z in [-5.0, 0.0, 1.0] {
            assert_eq!(psi_cut(2.0, 1.0, z), 1.0);
        }
        // Psi - 1/2 odd
        for k in 0..50 {
            let t = k as f64 / 49.0;
            assert!((psi_transition_fn(t) - 0.5 + (psi_transition_fn(-t) - 0.5)).abs() < 1e-15);
        }
        // symmetric bump
        assert_eq!(psi_cut_eps(0.3, 0.0), 1.0);
        assert_eq!(psi_cut_eps(0.3, 0.31), 0.0);
        assert_eq!(psi_cut_eps(0.3, -0.31), 0.0);
        // jet derivatives against finite differences
        let j = psi_cut_j1(2.0, 1.0, Jet1::var(1.5));
        let h = 1e-5;
        let fd = (psi_cut(2.0, 1.0, 1.5 + h) - psi_cut(2.0, 1.0, 1.5 - h)) / (2.0 * h);
        assert!((j.d[1] - fd).abs() < 1e-8);
        assert!(psi_cut_checked(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn scherk_surface_basics() {
        let p = Vec3::new(1.0f64.asinh(), 0.0, 1.0f64.asinh());
        assert!(scherk_implicit(p).abs() < 1e-15);
        // the lines {x=0, y=pi/2} lie on S
        for z in [-2.0, 0.3, 5.0] {
            assert!(scherk_implicit(Vec3::new(0.0, PI / 2.0, z)).abs() < 1e-15);
        }
        // implicit mean curvature vanishes at projected points
        let mut state = 7u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64)
        };
        for _ in 0..100 {
            let q = Vec3::new(4.0 * rnd() - 2.0, 2.0 * PI * rnd(), 4.0 * rnd() - 2.0);
            if let Ok(p) = scherk_project(q) {
                assert!(scherk_implicit_mean_curvature(p).abs() < 1e-8);
                assert!(scherk_second_form_norm2(p) >= 0.0);
            }
        }
    }

    #[test]
    fn phi_wing_values_and_symmetry() {
        assert!(phi_wing(PI / 2.0, 3.0, 5.0).abs() < 1e-18);
        assert!((phi_wing(0.0, 0.0, 5.0) - -0.013476097938606508).abs() < 1e-14);
        for k in 0..40 {
            let y = 0.1 + k as f64 * 0.15;
            let s = 0.3 * k as f64;
            assert!((phi_wing(PI - y, s, 4.0) + phi_wing(y, s, 4.0)).abs() < 1e-14);
            assert!((phi_wing(-y, s, 4.0) - phi_wing(y, s, 4.0)).abs() < 1e-14);
        }
        // wing points land on S
        for k in WingKind::all() {
            let p = wing_point_on_s(k, 0.7, 1.3, 2.0);
            assert!(scherk_implicit(p).abs() < 1e-13, "{k:?}");
        }
    }

    #[test]
    fn unbalancing_map() {
        let pr = params(0.2, 8);
        // identity at theta = 0 and in the core band
        let p = Vec3::new(0.4, 1.0, -0.3);
        assert_eq!(xi_theta(&pr, 0.0, p), p);
        assert_eq!(xi_theta(&pr, 0.2, Vec3::new(0.5, 2.0, 0.9)), Vec3::new(0.5, 2.0, 0.9));
        // pure rotation in the upper region, spec orientation e_z -> sin e_x + cos e_z
        let th: f64 = 0.2;
        let q = xi_theta(&pr, th, Vec3::new(0.0, 1.0, 3.0));
        assert!((q - Vec3::new(3.0 * th.sin(), 1.0, 3.0 * th.cos())).norm() < 1e-15);
        // G_S equivariance at sample points
        let mut state = 99u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64)
        };
        for _ in 0..100 {
            let p = Vec3::new(6.0 * rnd() - 3.0, 8.0 * rnd() - 4.0, 6.0 * rnd() - 3.0);
            for g in GsGenerator::all() {
                let lhs = xi_theta(&pr, th, g.apply(p));
                let rhs = g.apply(xi_theta(&pr, th, p));
                assert!((lhs - rhs).norm() < 1e-12, "{g:?}");
            }
        }
    }

    #[test]
    fn bending_map() {
        let p = Vec3::new(0.3, 2.0, -0.4);
        assert_eq!(b_tau(0.0, p), p);
        let tau = 0.125;
        // the y-axis wraps isometrically onto the circle through the origin
        for y in [0.0, 1.0, 7.0] {
            let q = b_tau(tau, Vec3::new(0.0, y, 0.0));
            assert!(((q + Vec3::new(1.0 / tau, 0.0, 0.0)).norm() - 1.0 / tau).abs() < 1e-10);
        }
        // |d/dy| = 1 on {x = 0} via finite differences
        let h = 1e-6;
        let d = (b_tau(tau, Vec3::new(0.0, 2.0 + h, 0.5)) - b_tau(tau, Vec3::new(0.0, 2.0 - h, 0.5)))
            * (0.5 / h);
        assert!((d.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wing_families() {
        let th = 0.15;
        let tau = 0.1;
        // rho profile: slope sin(theta) at the plane
        assert!((rho_theta_prime(th, 0.0) - th.sin()).abs() < 1e-15);
        // x_ver(+) at (y, s) = (0, -a) is the origin
        let p = x_ver(th, tau, 2.0, true, 0.0, -2.0);
        assert!(p.norm() < 1e-12);
        // x_hor images lie on the circle of radius e^{tau(a+s)}/tau about the center
        let q = x_hor(tau, 2.0, true, 1.3, 0.8);
        let c = Vec3::new(-1.0 / tau, 0.0, 0.0);
        assert!(((q - c).norm() - (tau * 2.8f64).exp() / tau).abs() < 1e-9);
        assert!(q.z.abs() < 1e-15);
        // vertical images lie on the catenoid with neck radius cos(theta)/tau
        // meeting {z=0} at the bending circle: check |(q-c).rho| = rho_theta(t)/tau
        let s = 1.7;
        let v = x_ver(th, tau, 2.0, true, 0.9, s);
        let t = tau * (2.0 + s);
        assert!(((v - c).rho() - rho_theta(th, t) / tau).abs() < 1e-9);
        assert!((v.z - (2.0 + s) * th.cos()).abs() < 1e-12);
        // base normals against finite-difference cross products
        for kind in WingKind::all() {
            let (base, n) = wing_base_j2(kind, th, tau, 2.0, 0.9, s);
            let nv = n.val();
            assert!((nv.norm() - 1.0).abs() < 1e-12);
            assert!(nv.dot(base.d_y()).abs() < 1e-12, "{kind:?}");
            assert!(nv.dot(base.d_s()).abs() < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn glued_map_blend_consistency() {
        // the two branch evaluations agree closely across the blend region
        let pr = params(0.1, 12);
        for kind in WingKind::all() {
            for k in 0..20 {
                let s = 0.05 + 0.9 * k as f64 / 19.0;
                for y in [0.3, 1.9, 4.4] {
                    let (base, n) = wing_base_j2(kind, pr.theta, pr.tau, pr.a, y, s);
                    let f1 = base
                        .add(&n.scale(
                            phi_wing_j2(Jet2::var_y(y), Jet2::var_s(s), pr.a) * pr.psi_trun(s),
                        ))
                        .val();
                    let flat = wing_point_on_s(kind, y, s, pr.a);
                    let f0 = b_tau(pr.tau, xi_theta(&pr, pr.theta, flat));
                    // branches differ only by the bending nonlinearity O(tau (a+s)^2)
                    let gap = (f1 - f0).norm();
                    assert!(gap < 3.0 * pr.tau * (pr.a + s).powi(2), "{kind:?} s={s} gap={gap}");
                }
            }
        }
    }

    #[test]
    fn z_map_axis_and_identity() {
        // theta = tau = 0: identity on S
        let consts = crate::rotsym::solve_critical_constants().unwrap();
        let pr0 = DeformParams {
            theta: 0.0,
            tau: 0.0,
            m: 6,
            a: 2.0,
            delta_s: 0.07,
            lambda: consts.r_crit / 6.0,
            w_blend: 1.0,
            z_id: 1.0,
            z_rot: 2.0,
        };
        for kind in WingKind::all() {
            for s in [0.0, 0.4, 1.5, 3.0] {
                let p = desing_point(&pr0, &BlockPoint::Wing { kind, y: 1.1, s }).unwrap();
                let q = wing_point_on_s(kind, 1.1, s, 2.0);
                assert!((p - q).norm() < 1e-12);
            }
        }
        // axis points map to the circle of radius r_theta
        let pr = params(0.1, 10);
        for y in [0.0, 2.0, 11.0] {
            let p = z_map(&pr, &BlockPoint::Core(Vec3::new(0.0, y, 0.0))).unwrap();
            assert!((p.rho() - pr.lambda * pr.m as f64).abs() < 1e-12);
            assert!(p.z.abs() < 1e-15);
        }
        // beyond the truncation window the vertical wing lies on the exact catenoid
        let consts = crate::rotsym::solve_critical_constants().unwrap();
        let fam = crate::rotsym::family_at_theta(pr.theta, &consts).unwrap();
        let profile = crate::rotsym::AxisymProfile { r_theta: fam.r_hat, theta: pr.theta };
        let (w3, w4) = pr.trunc_window();
        let _ = w3;
        for k in 0..10 {
            let s = w4 + (pr.s_max() - w4) * k as f64 / 9.0;
            let p = z_map(&pr, &BlockPoint::Wing { kind: WingKind::VerPlus, y: 0.7, s }).unwrap();
            // on K_theta: radius = f_theta(z)
            assert!((p.rho() - profile.eval(p.z)).abs() < 1e-10, "s={s}");
        }
        // s out of range errors
        assert!(desing_point(&pr, &BlockPoint::Wing { kind: WingKind::VerPlus, y: 0.0, s: 100.0 })
            .is_err());
    }
}
