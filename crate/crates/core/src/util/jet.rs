//! Truncated Taylor arithmetic.
//!
//! `Jet1` carries a value and four derivatives of a univariate expression;
//! `Jet2` carries a value and all partial derivatives through second order of
//! a bivariate expression.  Charts and cutoff functions are evaluated in this
//! arithmetic so first and second fundamental forms come out exact, with no
//! finite differencing.

use std::ops::{Add, Div, Mul, Neg, Sub};

const BINOM: [[f64; 5]; 5] = [
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0, 0.0],
    [1.0, 3.0, 3.0, 1.0, 0.0],
    [1.0, 4.0, 6.0, 4.0, 1.0],
];

/// Value plus derivatives d^k/dt^k for k = 1..4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet1 {
    pub d: [f64; 5],
}

impl Jet1 {
    pub fn constant(v: f64) -> Jet1 {
        Jet1 { d: [v, 0.0, 0.0, 0.0, 0.0] }
    }

    /// The identity jet t at value `v`.
    pub fn var(v: f64) -> Jet1 {
        Jet1 { d: [v, 1.0, 0.0, 0.0, 0.0] }
    }

    pub fn val(&self) -> f64 {
        self.d[0]
    }

    fn leibniz(a: &[f64; 5], b: &[f64; 5]) -> [f64; 5] {
        let mut r = [0.0; 5];
        for n in 0..5 {
            for k in 0..=n {
                r[n] += BINOM[n][k] * a[k] * b[n - k];
            }
        }
        r
    }

    pub fn exp(self) -> Jet1 {
        let f = &self.d;
        let mut e = [0.0; 5];
        e[0] = f[0].exp();
        // e^(n+1) = sum_k C(n,k) e^(k) f^(n-k+1)
        for n in 0..4 {
            let mut s = 0.0;
            for k in 0..=n {
                s += BINOM[n][k] * e[k] * f[n - k + 1];
            }
            e[n + 1] = s;
        }
        Jet1 { d: e }
    }

    pub fn ln(self) -> Jet1 {
        // l' = f'/f
        let lp = Jet1 { d: [self.d[1], self.d[2], self.d[3], self.d[4], 0.0] };
        let q = lp / self;
        Jet1 { d: [self.d[0].ln(), q.d[0], q.d[1], q.d[2], q.d[3]] }
    }

    fn sinh_cosh(self) -> (Jet1, Jet1) {
        let f = &self.d;
        let mut s = [0.0; 5];
        let mut c = [0.0; 5];
        s[0] = f[0].sinh();
        c[0] = f[0].cosh();
        for n in 0..4 {
            let mut ds = 0.0;
            let mut dc = 0.0;
            for k in 0..=n {
                ds += BINOM[n][k] * c[k] * f[n - k + 1];
                dc += BINOM[n][k] * s[k] * f[n - k + 1];
            }
            s[n + 1] = ds;
            c[n + 1] = dc;
        }
        (Jet1 { d: s }, Jet1 { d: c })
    }

    pub fn sinh(self) -> Jet1 {
        self.sinh_cosh().0
    }

    pub fn cosh(self) -> Jet1 {
        self.sinh_cosh().1
    }

    fn sin_cos(self) -> (Jet1, Jet1) {
        let f = &self.d;
        let mut s = [0.0; 5];
        let mut c = [0.0; 5];
        s[0] = f[0].sin();
        c[0] = f[0].cos();
        for n in 0..4 {
            let mut ds = 0.0;
            let mut dc = 0.0;
            for k in 0..=n {
                ds += BINOM[n][k] * c[k] * f[n - k + 1];
                dc -= BINOM[n][k] * s[k] * f[n - k + 1];
            }
            s[n + 1] = ds;
            c[n + 1] = dc;
        }
        (Jet1 { d: s }, Jet1 { d: c })
    }

    pub fn sin(self) -> Jet1 {
        self.sin_cos().0
    }

    pub fn cos(self) -> Jet1 {
        self.sin_cos().1
    }

    pub fn sqrt(self) -> Jet1 {
        // r' = f'/(2r)
        let mut r = [0.0; 5];
        r[0] = self.d[0].sqrt();
        for n in 0..4 {
            // f^(n+1) = sum C(n,k) r^(k) * (2r)^(n-k+1)... use a = r*r = f:
            // f^(n+1) = sum_{k=0..n+1} C(n+1,k) r^(k) r^(n+1-k)
            let mut s = self.d[n + 1];
            for k in 1..=n {
                s -= BINOM[n + 1][k] * r[k] * r[n + 1 - k];
            }
            r[n + 1] = s / (2.0 * r[0]);
        }
        Jet1 { d: r }
    }

    pub fn asinh(self) -> Jet1 {
        let one = Jet1::constant(1.0);
        (self + (one + self * self).sqrt()).ln()
    }
}

impl Add for Jet1 {
    type Output = Jet1;
    fn add(self, o: Jet1) -> Jet1 {
        let mut d = [0.0; 5];
        for i in 0..5 {
            d[i] = self.d[i] + o.d[i];
        }
        Jet1 { d }
    }
}

impl Sub for Jet1 {
    type Output = Jet1;
    fn sub(self, o: Jet1) -> Jet1 {
        let mut d = [0.0; 5];
        for i in 0..5 {
            d[i] = self.d[i] - o.d[i];
        }
        Jet1 { d }
    }
}

impl Neg for Jet1 {
    type Output = Jet1;
    fn neg(self) -> Jet1 {
        let mut d = self.d;
        for v in &mut d {
            *v = -*v;
        }
        Jet1 { d }
    }
}

impl Mul for Jet1 {
    type Output = Jet1;
    fn mul(self, o: Jet1) -> Jet1 {
        Jet1 { d: Jet1::leibniz(&self.d, &o.d) }
    }
}

impl Mul<f64> for Jet1 {
    type Output = Jet1;
    fn mul(self, s: f64) -> Jet1 {
        let mut d = self.d;
        for v in &mut d {
            *v *= s;
        }
        Jet1 { d }
    }
}

impl Div for Jet1 {
    type Output = Jet1;
    fn div(self, o: Jet1) -> Jet1 {
        // a = q b  =>  q^(n) = (a^(n) - sum_{k<n} C(n,k) q^(k) b^(n-k)) / b
        let mut q = [0.0; 5];
        for n in 0..5 {
            let mut s = self.d[n];
            for k in 0..n {
                s -= BINOM[n][k] * q[k] * o.d[n - k];
            }
            q[n] = s / o.d[0];
        }
        Jet1 { d: q }
    }
}

/// Value, gradient and Hessian of a bivariate expression in (y, s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    /// [f, f_y, f_s, f_yy, f_ys, f_ss]
    pub d: [f64; 6],
}

impl Jet2 {
    pub fn constant(v: f64) -> Jet2 {
        Jet2 { d: [v, 0.0, 0.0, 0.0, 0.0, 0.0] }
    }

    pub fn var_y(v: f64) -> Jet2 {
        Jet2 { d: [v, 1.0, 0.0, 0.0, 0.0, 0.0] }
    }

    pub fn var_s(v: f64) -> Jet2 {
        Jet2 { d: [v, 0.0, 1.0, 0.0, 0.0, 0.0] }
    }

    pub fn val(&self) -> f64 {
        self.d[0]
    }

    /// g(f) given g, g', g'' at f's value.
    fn lift(self, g0: f64, g1: f64, g2: f64) -> Jet2 {
        let [_, fy, fs, fyy, fys, fss] = self.d;
        Jet2 {
            d: [
                g0,
                g1 * fy,
                g1 * fs,
                g2 * fy * fy + g1 * fyy,
                g2 * fy * fs + g1 * fys,
                g2 * fs * fs + g1 * fss,
            ],
        }
    }

    pub fn exp(self) -> Jet2 {
        let e = self.d[0].exp();
        self.lift(e, e, e)
    }

    pub fn ln(self) -> Jet2 {
        let v = self.d[0];
        self.lift(v.ln(), 1.0 / v, -1.0 / (v * v))
    }

    pub fn sin(self) -> Jet2 {
        let (s, c) = self.d[0].sin_cos();
        self.lift(s, c, -s)
    }

    pub fn cos(self) -> Jet2 {
        let (s, c) = self.d[0].sin_cos();
        self.lift(c, -s, -c)
    }

    pub fn sinh(self) -> Jet2 {
        let v = self.d[0];
        self.lift(v.sinh(), v.cosh(), v.sinh())
    }

    pub fn cosh(self) -> Jet2 {
        let v = self.d[0];
        self.lift(v.cosh(), v.sinh(), v.cosh())
    }

    pub fn sqrt(self) -> Jet2 {
        let r = self.d[0].sqrt();
        self.lift(r, 0.5 / r, -0.25 / (r * r * r))
    }

    pub fn recip(self) -> Jet2 {
        let v = self.d[0];
        self.lift(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    pub fn asinh(self) -> Jet2 {
        let v = self.d[0];
        let w = (1.0 + v * v).sqrt();
        self.lift(v.asinh(), 1.0 / w, -v / (w * w * w))
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        let mut d = [0.0; 6];
        for i in 0..6 {
            d[i] = self.d[i] + o.d[i];
        }
        Jet2 { d }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        let mut d = [0.0; 6];
        for i in 0..6 {
            d[i] = self.d[i] - o.d[i];
        }
        Jet2 { d }
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        let mut d = self.d;
        for v in &mut d {
            *v = -*v;
        }
        Jet2 { d }
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let [a, ay, as_, ayy, ays, ass] = self.d;
        let [b, by, bs, byy, bys, bss] = o.d;
        Jet2 {
            d: [
                a * b,
                ay * b + a * by,
                as_ * b + a * bs,
                ayy * b + 2.0 * ay * by + a * byy,
                ays * b + ay * bs + as_ * by + a * bys,
                ass * b + 2.0 * as_ * bs + a * bss,
            ],
        }
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, s: f64) -> Jet2 {
        let mut d = self.d;
        for v in &mut d {
            *v *= s;
        }
        Jet2 { d }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}

/// A chart evaluation: position with first and second parameter derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Jet2Vec {
    pub x: Jet2,
    pub y: Jet2,
    pub z: Jet2,
}

impl Jet2Vec {
    pub fn constant(v: crate::util::vec3::Vec3) -> Jet2Vec {
        Jet2Vec {
            x: Jet2::constant(v.x),
            y: Jet2::constant(v.y),
            z: Jet2::constant(v.z),
        }
    }

    pub fn val(&self) -> crate::util::vec3::Vec3 {
        crate::util::vec3::Vec3::new(self.x.val(), self.y.val(), self.z.val())
    }

    pub fn dot(&self, o: &Jet2Vec) -> Jet2 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Jet2Vec) -> Jet2Vec {
        Jet2Vec {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    pub fn scale(&self, s: Jet2) -> Jet2Vec {
        Jet2Vec { x: self.x * s, y: self.y * s, z: self.z * s }
    }

    pub fn add(&self, o: &Jet2Vec) -> Jet2Vec {
        Jet2Vec { x: self.x + o.x, y: self.y + o.y, z: self.z + o.z }
    }

    pub fn sub(&self, o: &Jet2Vec) -> Jet2Vec {
        Jet2Vec { x: self.x - o.x, y: self.y - o.y, z: self.z - o.z }
    }

    pub fn normalized(&self) -> Jet2Vec {
        let n = self.dot(self).sqrt();
        Jet2Vec { x: self.x / n, y: self.y / n, z: self.z / n }
    }

    /// First-derivative vectors (∂_y X, ∂_s X) at the evaluation point.
    pub fn d_y(&self) -> crate::util::vec3::Vec3 {
        crate::util::vec3::Vec3::new(self.x.d[1], self.y.d[1], self.z.d[1])
    }

    pub fn d_s(&self) -> crate::util::vec3::Vec3 {
        crate::util::vec3::Vec3::new(self.x.d[2], self.y.d[2], self.z.d[2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol * (1.0 + a.abs().max(b.abs())), "{a} vs {b}");
    }

    #[test]
    fn jet1_matches_finite_differences() {
        let f = |t: f64| ((t * 1.3).sinh() + 0.7).ln() * (t.cos() + 2.0).sqrt();
        let jf = |t: Jet1| {
            ((t * 1.3).sinh() + Jet1::constant(0.7)).ln() * (t.cos() + Jet1::constant(2.0)).sqrt()
        };
        let t0 = 0.8;
        let j = jf(Jet1::var(t0));
        close(j.d[0], f(t0), 1e-14);
        let h = 1e-5;
        let d1 = (f(t0 + h) - f(t0 - h)) / (2.0 * h);
        let d2 = (f(t0 + h) - 2.0 * f(t0) + f(t0 - h)) / (h * h);
        close(j.d[1], d1, 1e-8);
        close(j.d[2], d2, 1e-4);
        // 4th derivative needs a wide stencil to survive roundoff
        let hw = 0.02;
        let d4 = (f(t0 + 2.0 * hw) - 4.0 * f(t0 + hw) + 6.0 * f(t0) - 4.0 * f(t0 - hw)
            + f(t0 - 2.0 * hw))
            / hw.powi(4);
        close(j.d[4], d4, 1e-2);
    }

    #[test]
    fn jet2_matches_finite_differences() {
        let f = |y: f64, s: f64| (-((y.cos() / (s + 2.0).sinh()).asinh())) * (y * s).exp();
        let jf = |y: Jet2, s: Jet2| {
            -((y.cos() / (s + Jet2::constant(2.0)).sinh()).asinh()) * (y * s).exp()
        };
        let (y0, s0) = (0.6, 0.4);
        let j = jf(Jet2::var_y(y0), Jet2::var_s(s0));
        close(j.d[0], f(y0, s0), 1e-14);
        let h = 1e-5;
        close(j.d[1], (f(y0 + h, s0) - f(y0 - h, s0)) / (2.0 * h), 1e-8);
        close(j.d[2], (f(y0, s0 + h) - f(y0, s0 - h)) / (2.0 * h), 1e-8);
        close(j.d[3], (f(y0 + h, s0) - 2.0 * f(y0, s0) + f(y0 - h, s0)) / (h * h), 1e-4);
        close(j.d[5], (f(y0, s0 + h) - 2.0 * f(y0, s0) + f(y0, s0 - h)) / (h * h), 1e-4);
        let fmix = (f(y0 + h, s0 + h) - f(y0 + h, s0 - h) - f(y0 - h, s0 + h)
            + f(y0 - h, s0 - h))
            / (4.0 * h * h);
        close(j.d[4], fmix, 1e-4);
    }
}
