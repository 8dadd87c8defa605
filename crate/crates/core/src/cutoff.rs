//! Smooth cut-off and bump functions shared by every module.
//!
//! `chi(r) = g(2 - r) / (g(2 - r) + g(r - 1))` with `g(t) = e^{-1/t}` for
//! `t > 0` and `0` otherwise. It is `C^∞`, equal to 1 on `r ≤ 1`, to 0 on
//! `r ≥ 2`, and strictly decreasing in between.

fn flat(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Radial cut-off profile evaluated at `r = ‖η‖`.
pub fn chi(r: f64) -> f64 {
    let r = r.abs();
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let a = flat(2.0 - r);
    a / (a + flat(r - 1.0))
}

/// `chi(‖v‖)`
pub fn chi_vec(v: &[f64]) -> f64 {
    chi(norm(v))
}

/// Compactly supported bump `exp(1 - 1/(1 - r²))` on `r < 1`, peak 1 at 0.
pub fn bump(r: f64) -> f64 {
    let r2 = r * r;
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    }
}

/// Bump of the given radius centred at `center`, evaluated at `x`.
pub fn bump_at(x: &[f64], center: &[f64], radius: f64) -> f64 {
    let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    bump(r2.sqrt() / radius)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
