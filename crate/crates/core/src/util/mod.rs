pub mod band;
pub mod jet;
pub mod vec3;

/// Bracketed bisection refined by Newton. `f` returns (value, derivative).
/// The bracket [lo, hi] must satisfy f(lo)*f(hi) <= 0.
pub fn newton_bisect(
    mut lo: f64,
    mut hi: f64,
    f: impl Fn(f64) -> (f64, f64),
    tol: f64,
    max_iter: usize,
) -> Result<f64, RootError> {
    let (mut flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 {
        return Err(RootError::BadBracket { lo, hi });
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..max_iter {
        let (v, d) = f(x);
        if v == 0.0 {
            return Ok(x);
        }
        if v * flo < 0.0 {
            hi = x;
        } else {
            lo = x;
            flo = v;
        }
        let mut next = if d != 0.0 { x - v / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= tol {
            return Ok(next);
        }
        x = next;
    }
    if hi - lo <= 16.0 * tol {
        Ok(x)
    } else {
        Err(RootError::NoConvergence { lo, hi })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RootError {
    #[error("root bracket [{lo}, {hi}] does not change sign")]
    BadBracket { lo: f64, hi: f64 },
    #[error("root finder failed to converge in [{lo}, {hi}]")]
    NoConvergence { lo: f64, hi: f64 },
}
