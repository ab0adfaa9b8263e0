//! Matérn covariance kernel.

/// Modified Bessel function of the second kind, `K_ν(x)` for `x > 0`.
///
/// Evaluates `∫₀^∞ exp(−x cosh t) cosh(νt) dt` with the trapezoidal rule,
/// which converges geometrically for this integrand.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k needs x > 0");
    let h = 0.02;
    // integrand scaled by exp(x) so large x does not underflow
    let f = |t: f64| (-x * (t.cosh() - 1.0)).exp() * (nu * t).cosh();
    let mut sum = 0.5 * f(0.0);
    let mut t = h;
    loop {
        let v = f(t);
        sum += v;
        if v < 1e-18 * sum || t > 60.0 {
            break;
        }
        t += h;
    }
    sum * h * (-x).exp()
}

/// `σ² / (2^{ν−1} Γ(ν)) · (κ r)^ν K_ν(κ r)` with `κ = √(2ν)/ℓ` and `r = ‖x − x'‖`.
pub fn matern_covariance(x: &[f64], y: &[f64], sigma: f64, nu: f64, length_scale: f64) -> f64 {
    let r = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    matern_at_distance(r, sigma, nu, length_scale)
}

pub fn matern_at_distance(r: f64, sigma: f64, nu: f64, length_scale: f64) -> f64 {
    let s2 = sigma * sigma;
    if r == 0.0 {
        return s2;
    }
    let kr = (2.0 * nu).sqrt() / length_scale * r;
    s2 / (2f64.powf(nu - 1.0) * libm::tgamma(nu)) * kr.powf(nu) * bessel_k(nu, kr)
}
