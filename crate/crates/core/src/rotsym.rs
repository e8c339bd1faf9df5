//! Closed-form axisymmetric geometry: the critical constants, the latitude
//! functions phi_odd / phi_even / phi_robin, the one-parameter catenoid family
//! indexed by contact angle, and analytic charts for the four rotationally
//! symmetric pieces (two catenoidal annuli, an annulus and a disk in the
//! equatorial plane) together with the identification maps between parameter
//! values.

use crate::util::jet::{Jet2, Jet2Vec};
use crate::util::vec3::Vec3;
use crate::util::{newton_bisect, RootError};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RotsymError {
    #[error("latitude {0} outside (-pi/2, pi/2)")]
    LatitudeDomain(f64),
    #[error("height parameter {0} outside (0, 1)")]
    HeightDomain(f64),
    #[error("contact angle {0} outside the catenoid family range ({1}, pi/2)")]
    OutOfFamily(f64, f64),
    #[error(transparent)]
    Root(#[from] RootError),
}

/// Constants of the critical catenoid and the equatorial disk configuration.
#[derive(Debug, Clone, Copy)]
pub struct CriticalConstants {
    /// Radius of the two boundary circles on the sphere.
    pub r_crit_boundary: f64,
    /// Height of the boundary circles, z_crit^2 + R_crit^2 = 1.
    pub z_crit: f64,
    /// Radius of the waist-plane circle, r_crit = z_crit * R_crit.
    pub r_crit: f64,
    /// Latitude root of phi_even.
    pub x_crit: f64,
    /// Smallest contact angle for which the family stays in the closed ball.
    pub theta_min: f64,
    /// Area of the critical catenoid.
    pub area_k: f64,
}

/// Solve for all critical constants.
///
/// R_crit is found from t = coth t with t = 1/R bracketed in [1, 1.5];
/// theta_min is the unique angle at which the family's equatorial radius
/// reaches 1, found by bisection in the height parameter h in [z_crit, 1).
pub fn solve_critical_constants() -> Result<CriticalConstants, RotsymError> {
    let t = newton_bisect(
        1.0,
        1.5,
        |t| {
            let c = t.cosh() / t.sinh();
            (t - c, 1.0 + 1.0 / (t.sinh() * t.sinh()))
        },
        1e-15,
        200,
    )?;
    let r_big = 1.0 / t;
    let z_crit = (1.0 - r_big * r_big).sqrt();
    let r_crit = z_crit * r_big;
    // x_crit from phi_even; bracket [0.9, 1.1] contains the root.
    let x_crit = newton_bisect(
        0.9,
        1.1,
        |x| (phi_even_unchecked(x), phi_even_prime(x)),
        1e-15,
        200,
    )?;
    // theta_min: r_hat(h) = 1, monotone increasing in h on (z_crit, 1).
    let h_max = newton_bisect(
        z_crit,
        1.0 - 1e-12,
        |h| {
            let p = catenoid_from_h_unchecked(h);
            (p.r_hat - 1.0, f64::NAN) // bisection only; derivative skipped
        },
        1e-14,
        300,
    )?;
    let theta_min = catenoid_from_h_unchecked(h_max).theta;
    // Closed-form area: integral of 2 pi f sqrt(1+f'^2) over [-z_crit, z_crit]
    // with f = r cosh(z/r) gives 2 pi r (z_crit + (r/2) sinh(2 z_crit / r)).
    let area_k = 2.0 * PI * r_crit * (z_crit + 0.5 * r_crit * (2.0 * z_crit / r_crit).sinh());
    Ok(CriticalConstants {
        r_crit_boundary: r_big,
        z_crit,
        r_crit,
        x_crit,
        theta_min,
        area_k,
    })
}

fn check_latitude(x: f64) -> Result<(), RotsymError> {
    if x.abs() >= PI / 2.0 {
        Err(RotsymError::LatitudeDomain(x))
    } else {
        Ok(())
    }
}

fn phi_even_unchecked(x: f64) -> f64 {
    1.0 - x.sin() * ((1.0 + x.sin()) / x.cos()).ln()
}

fn phi_even_prime(x: f64) -> f64 {
    // d/dx [1 - sin x ln((1+sin x)/cos x)] = -cos x ln((1+sin x)/cos x) - tan x
    -x.cos() * ((1.0 + x.sin()) / x.cos()).ln() - x.tan()
}

pub fn phi_odd(x: f64) -> Result<f64, RotsymError> {
    check_latitude(x)?;
    Ok(x.sin())
}

pub fn phi_even(x: f64) -> Result<f64, RotsymError> {
    check_latitude(x)?;
    Ok(phi_even_unchecked(x))
}

pub fn phi_robin(x: f64, consts: &CriticalConstants) -> Result<f64, RotsymError> {
    check_latitude(x)?;
    let xc = consts.x_crit;
    Ok((2.0 * xc).cos() * phi_even_unchecked(x) - xc.cos() * phi_even_prime(xc) * x.sin())
}

/// Analytic derivatives of the latitude functions, for the ODE residual checks.
pub fn phi_odd_derivs(x: f64) -> (f64, f64, f64) {
    (x.sin(), x.cos(), -x.sin())
}

pub fn phi_even_derivs(x: f64) -> (f64, f64, f64) {
    let l = ((1.0 + x.sin()) / x.cos()).ln();
    let f = 1.0 - x.sin() * l;
    let fp = -x.cos() * l - x.tan();
    // f'' = sin x ln(...) - cos x * l' - sec^2 x, with l' = 1/cos x
    let fpp = x.sin() * l - 1.0 - 1.0 / (x.cos() * x.cos());
    (f, fp, fpp)
}

pub fn phi_robin_derivs(x: f64, consts: &CriticalConstants) -> (f64, f64, f64) {
    let xc = consts.x_crit;
    let c2 = (2.0 * xc).cos();
    let ce = xc.cos() * phi_even_prime(xc);
    let (e, ep, epp) = phi_even_derivs(x);
    let (o, op, opp) = phi_odd_derivs(x);
    (c2 * e - ce * o, c2 * ep - ce * op, c2 * epp - ce * opp)
}

/// One member of the family of catenoids meeting the upper hemisphere
/// orthogonally, parametrized by the contact height h.
#[derive(Debug, Clone, Copy)]
pub struct CatenoidFamilyPoint {
    pub h: f64,
    pub theta: f64,
    pub tilde_r: f64,
    pub tilde_z: f64,
    pub r_hat: f64,
    pub z_theta: f64,
}

fn catenoid_from_h_unchecked(h: f64) -> CatenoidFamilyPoint {
    let tilde_r = h * (1.0 - h * h).sqrt();
    let tilde_z = h - tilde_r * ((1.0 - h * h).sqrt() / h).asinh();
    let u = tilde_z / tilde_r;
    CatenoidFamilyPoint {
        h,
        theta: (-u.sinh()).atan(),
        tilde_r,
        tilde_z,
        r_hat: tilde_r * u.cosh(),
        z_theta: h,
    }
}

pub fn catenoid_from_h(h: f64) -> Result<CatenoidFamilyPoint, RotsymError> {
    if !(h > 0.0 && h < 1.0) {
        return Err(RotsymError::HeightDomain(h));
    }
    Ok(catenoid_from_h_unchecked(h))
}

/// Invert the family: waist-plane radius r_theta for a contact angle.
/// Monotone bisection in h; r_of_theta(0) = r_crit and r_of_theta(theta_min) = 1.
pub fn r_of_theta(theta: f64, consts: &CriticalConstants) -> Result<f64, RotsymError> {
    Ok(family_at_theta(theta, consts)?.r_hat)
}

/// The family member with a prescribed contact angle.
pub fn family_at_theta(
    theta: f64,
    consts: &CriticalConstants,
) -> Result<CatenoidFamilyPoint, RotsymError> {
    if !(theta > consts.theta_min && theta < PI / 2.0) {
        // allow the closed-left endpoint up to roundoff
        if (theta - consts.theta_min).abs() > 1e-12 {
            return Err(RotsymError::OutOfFamily(theta, consts.theta_min));
        }
    }
    // theta(h) is strictly decreasing on (0,1)
    let h = newton_bisect(
        1e-9,
        1.0 - 1e-12,
        |h| (catenoid_from_h_unchecked(h).theta - theta, f64::NAN),
        1e-15,
        300,
    )?;
    Ok(catenoid_from_h_unchecked(h))
}

/// The profile f_theta(z) = r cosh(z/(r cos th)) + r sin th sinh(z/(r cos th)).
#[derive(Debug, Clone, Copy)]
pub struct AxisymProfile {
    pub r_theta: f64,
    pub theta: f64,
}

impl AxisymProfile {
    pub fn new(theta: f64, consts: &CriticalConstants) -> Result<AxisymProfile, RotsymError> {
        Ok(AxisymProfile { r_theta: r_of_theta(theta, consts)?, theta })
    }

    pub fn eval(&self, z: f64) -> f64 {
        let c = self.r_theta * self.theta.cos();
        self.r_theta * (z / c).cosh() + self.r_theta * self.theta.sin() * (z / c).sinh()
    }

    pub fn deriv(&self, z: f64) -> f64 {
        let c = self.r_theta * self.theta.cos();
        (self.r_theta / c) * (z / c).sinh() + (self.r_theta * self.theta.sin() / c) * (z / c).cosh()
    }

    /// Neck radius of the complete catenoid carrying this profile.
    pub fn neck_radius(&self) -> f64 {
        self.r_theta * self.theta.cos()
    }

    /// |A|^2 of the minimal surface of revolution: 2 / (f^2 (1 + f'^2)).
    pub fn second_form_norm2(&self, z: f64) -> f64 {
        let f = self.eval(z);
        let fp = self.deriv(z);
        2.0 / (f * f * (1.0 + fp * fp))
    }
}

/// Which of the four standard pieces a chart parametrizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WPiece {
    KPlus,
    KMinus,
    Annulus,
    Disk,
}

/// Analytic chart atlas for W_theta.
///
/// K± charts use (s, y) in [0, z_crit] x S^1 with z = (z_theta/z_crit) s;
/// the annulus and disk use polar (s, y) with s the radius.
#[derive(Debug, Clone)]
pub struct ChartAtlas {
    pub theta: f64,
    pub profile: AxisymProfile,
    pub z_theta: f64,
    pub z_crit: f64,
    pub r_theta: f64,
    pub r_crit: f64,
}

impl ChartAtlas {
    pub fn new(theta: f64, consts: &CriticalConstants) -> Result<ChartAtlas, RotsymError> {
        let fam = family_at_theta(theta, consts)?;
        Ok(ChartAtlas {
            theta,
            profile: AxisymProfile { r_theta: fam.r_hat, theta },
            z_theta: fam.z_theta,
            z_crit: consts.z_crit,
            r_theta: fam.r_hat,
            r_crit: consts.r_crit,
        })
    }

    /// Chart immersion with exact first and second derivatives.
    pub fn eval(&self, piece: WPiece, s: f64, y: f64) -> Jet2Vec {
        let sj = Jet2::var_s(s);
        let yj = Jet2::var_y(y);
        match piece {
            WPiece::KPlus | WPiece::KMinus => {
                let sign = if piece == WPiece::KPlus { 1.0 } else { -1.0 };
                let z = sj * (self.z_theta / self.z_crit);
                let c = self.r_theta * self.theta.cos();
                let arg = z * (1.0 / c);
                let f = arg.cosh() * self.r_theta + arg.sinh() * (self.r_theta * self.theta.sin());
                Jet2Vec { x: f * yj.cos(), y: f * yj.sin(), z: z * sign }
            }
            WPiece::Annulus | WPiece::Disk => Jet2Vec {
                x: sj * yj.cos(),
                y: sj * yj.sin(),
                z: Jet2::constant(0.0),
            },
        }
    }

    pub fn position(&self, piece: WPiece, s: f64, y: f64) -> Vec3 {
        self.eval(piece, s, y).val()
    }

    /// Unit normal of the piece under the paper's orientation conventions:
    /// catenoid normals point away from the axis, the disk is oriented by
    /// +e_z and the annulus by -e_z.
    pub fn normal(&self, piece: WPiece, s: f64, y: f64) -> Vec3 {
        match piece {
            WPiece::KPlus | WPiece::KMinus => {
                let sign_z = if piece == WPiece::KPlus { 1.0 } else { -1.0 };
                let z = self.z_theta / self.z_crit * s;
                let fp = self.profile.deriv(z);
                let den = (1.0 + fp * fp).sqrt();
                Vec3::new(y.cos() / den, y.sin() / den, -sign_z * fp / den)
            }
            WPiece::Annulus => Vec3::new(0.0, 0.0, -1.0),
            WPiece::Disk => Vec3::new(0.0, 0.0, 1.0),
        }
    }

    /// |A|^2 at a chart point.
    pub fn second_form_norm2(&self, piece: WPiece, s: f64) -> f64 {
        match piece {
            WPiece::KPlus | WPiece::KMinus => {
                let z = self.z_theta / self.z_crit * s;
                self.profile.second_form_norm2(z)
            }
            WPiece::Annulus | WPiece::Disk => 0.0,
        }
    }

    /// Identification map F_{W_theta} from the theta = 0 atlas: in chart
    /// coordinates every piece keeps (s, y) except the planar pieces, whose
    /// radial coordinate is rescaled to match the moved circle C_theta.
    pub fn identify_from_base(&self, base: &ChartAtlas, piece: WPiece, s: f64, y: f64) -> (f64, f64) {
        match piece {
            WPiece::KPlus | WPiece::KMinus => (s, y),
            WPiece::Annulus => {
                let t = (s - base.r_theta) / (1.0 - base.r_theta);
                (self.r_theta + t * (1.0 - self.r_theta), y)
            }
            WPiece::Disk => (s * self.r_theta / base.r_theta, y),
        }
    }

    /// Parameter rectangle of a piece: (s_min, s_max).
    pub fn s_range(&self, piece: WPiece) -> (f64, f64) {
        match piece {
            WPiece::KPlus | WPiece::KMinus => (0.0, self.z_crit),
            WPiece::Annulus => (self.r_theta, 1.0),
            WPiece::Disk => (0.0, self.r_theta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts() -> CriticalConstants {
        solve_critical_constants().unwrap()
    }

    #[test]
    fn critical_constants_match_references() {
        let c = consts();
        // frozen references, computed from the defining equations at high precision
        assert!((c.r_crit_boundary - 0.8335565596009646).abs() < 1e-12);
        assert!((c.z_crit - 0.5524341245308834).abs() < 1e-12);
        assert!((c.r_crit - 0.460485088250134).abs() < 1e-12);
        assert!((c.x_crit - 0.9855147378623154).abs() < 1e-12);
        // defining relations
        assert!((1.0 / c.r_crit_boundary - (1.0 / c.r_crit_boundary).cosh() / (1.0 / c.r_crit_boundary).sinh()).abs() < 1e-12);
        assert!((c.z_crit * c.z_crit + c.r_crit_boundary * c.r_crit_boundary - 1.0).abs() < 1e-15);
        assert!((c.r_crit - 0.5 * (2.0 * c.x_crit).sin()).abs() < 1e-10);
        assert!((c.x_crit.sin() - c.r_crit_boundary).abs() < 1e-10);
        assert!((c.x_crit.cos() - c.z_crit).abs() < 1e-10);
        assert!(c.r_crit > (-1.0f64).exp());
        assert!(c.x_crit > PI / 4.0);
        // area(K) + pi from the closed form; paper total 8.37898
        assert!((c.area_k + PI - 8.37898).abs() < 1e-3);
        assert!((c.area_k + PI - 8.378982981577742).abs() < 1e-10);
    }

    #[test]
    fn phi_functions() {
        let c = consts();
        assert_eq!(phi_even(0.0).unwrap(), 1.0);
        assert!(phi_even(c.x_crit).unwrap().abs() < 1e-10);
        assert!((phi_even(0.5).unwrap() - 0.7496257160560964).abs() < 1e-12);
        assert!(phi_odd(2.0).is_err());
        // phi_odd and phi_even solve f'' - tan x f' + 2 f = 0
        for k in 0..1000 {
            let x = -1.5 + 3.0 * (k as f64 + 0.5) / 1000.0;
            for derivs in [phi_odd_derivs(x), phi_even_derivs(x)] {
                let (f, fp, fpp) = derivs;
                assert!((fpp - x.tan() * fp + 2.0 * f).abs() < 1e-8, "x={x}");
            }
        }
        // phi_robin satisfies the Robin condition at x_crit and is nontrivial at 0
        let (f, fp, _) = phi_robin_derivs(c.x_crit, &c);
        assert!((-1.0 / c.x_crit.tan() * fp + f).abs() < 1e-9);
        let (f0, f0p, _) = phi_robin_derivs(0.0, &c);
        assert!(f0.abs() > 1e-3 && f0p.abs() > 1e-3);
    }

    #[test]
    fn catenoid_family() {
        let c = consts();
        // h = z_crit recovers the critical catenoid
        let p = catenoid_from_h(c.z_crit).unwrap();
        assert!(p.theta.abs() < 1e-9);
        assert!((p.r_hat - c.r_crit).abs() < 1e-9);
        // direct substitution at h = 1/2
        let q = catenoid_from_h(0.5).unwrap();
        assert!((q.tilde_r - 0.5 * 0.75f64.sqrt()).abs() < 1e-14);
        // monotonicity of theta and r_hat over a 1000-point grid
        let mut prev = catenoid_from_h(0.01).unwrap();
        for k in 1..1000 {
            let h = 0.01 + (0.99 - 0.01) * k as f64 / 999.0;
            let cur = catenoid_from_h(h).unwrap();
            assert!(cur.theta < prev.theta);
            assert!(cur.r_hat > prev.r_hat);
            prev = cur;
        }
    }

    #[test]
    fn r_of_theta_inverts_family() {
        let c = consts();
        assert!((r_of_theta(0.0, &c).unwrap() - c.r_crit).abs() < 1e-9);
        assert!((r_of_theta(c.theta_min + 1e-13, &c).unwrap() - 1.0).abs() < 1e-6);
        // frozen bisection oracle at theta = 0.3
        assert!((r_of_theta(0.3, &c).unwrap() - 0.4233884344596262).abs() < 1e-9);
        assert!(r_of_theta(-2.0, &c).is_err());
        // round trip through the family
        for k in 0..50 {
            let h = 0.05 + 0.81 * k as f64 / 49.0;
            let p = catenoid_from_h(h).unwrap();
            assert!((r_of_theta(p.theta, &c).unwrap() - p.r_hat).abs() < 1e-9);
        }
    }

    #[test]
    fn w_charts() {
        let c = consts();
        let atlas = ChartAtlas::new(0.3, &c).unwrap();
        // sphere contact at s = z_crit
        for k in 0..8 {
            let y = 2.0 * PI * k as f64 / 8.0;
            let p = atlas.position(WPiece::KPlus, c.z_crit, y);
            assert!((p.norm() - 1.0).abs() < 1e-9);
        }
        // waist-plane radius at s = 0
        let p0 = atlas.position(WPiece::KPlus, 0.0, 0.4);
        assert!((p0.rho() - atlas.r_theta).abs() < 1e-12);
        assert!((atlas.profile.eval(0.0) - atlas.r_theta).abs() < 1e-12);
        assert!((atlas.profile.deriv(0.0) - 0.3f64.tan()).abs() < 1e-12);
        // identity identification at theta = 0
        let base = ChartAtlas::new(0.0, &c).unwrap();
        for piece in [WPiece::KPlus, WPiece::KMinus, WPiece::Annulus, WPiece::Disk] {
            let (lo, hi) = base.s_range(piece);
            let s = 0.5 * (lo + hi);
            let (s2, y2) = base.identify_from_base(&base, piece, s, 1.1);
            assert!((s2 - s).abs() < 1e-14 && (y2 - 1.1).abs() < 1e-14);
        }
        // chart derivatives: K+ is minimal, check H from the jet-based forms
        let j = atlas.eval(WPiece::KPlus, 0.3, 0.7);
        let (e, f, g) = (j.d_y().dot(j.d_y()), j.d_y().dot(j.d_s()), j.d_s().dot(j.d_s()));
        let n = j.d_y().cross(j.d_s()).normalized();
        let xyy = Vec3::new(j.x.d[3], j.y.d[3], j.z.d[3]);
        let xys = Vec3::new(j.x.d[4], j.y.d[4], j.z.d[4]);
        let xss = Vec3::new(j.x.d[5], j.y.d[5], j.z.d[5]);
        let (l, m, nn) = (n.dot(xyy), n.dot(xys), n.dot(xss));
        let h = (l * g - 2.0 * m * f + nn * e) / (e * g - f * f);
        assert!(h.abs() < 1e-10, "catenoid chart not minimal: H = {h}");
    }
}
