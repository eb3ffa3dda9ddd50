//! Matérn covariances, modified Bessel functions of the second kind of
//! integer order, and the divergence-free kernel built from a Matérn potential.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `(K_0(x), K_1(x))` for `x > 0`.
///
/// Temme's series below `x = 2`, Steed's continued fraction above.
pub fn bessel_k01(x: f64) -> (f64, f64) {
    assert!(x > 0.0, "K_nu needs a positive argument, got {x}");
    if x < 2.0 {
        let half = 0.5 * x;
        let mut fk = -EULER_GAMMA - half.ln();
        let mut pk = 0.5;
        let mut qk = 0.5;
        let mut ck = 1.0;
        let mut sum0 = fk;
        let mut sum1 = pk;
        for k in 1..500 {
            let kf = k as f64;
            fk = (kf * fk + pk + qk) / (kf * kf);
            ck *= half * half / kf;
            pk /= kf;
            qk /= kf;
            let hk = -kf * fk + pk;
            let (d0, d1) = (ck * fk, ck * hk);
            sum0 += d0;
            sum1 += d1;
            if d0.abs() < 0.5 * f64::EPSILON * sum0.abs() && d1.abs() < 0.5 * f64::EPSILON * sum1.abs() {
                break;
            }
        }
        (sum0, sum1 * 2.0 / x)
    } else {
        let mut bi = 2.0 * (1.0 + x);
        let mut di = 1.0 / bi;
        let mut delhi = di;
        let mut hi = di;
        let mut qi = 0.0;
        let mut qip1 = 1.0;
        let mut ai = -0.25;
        let a1 = ai;
        let mut ci = -ai;
        let mut bqi = -ai;
        let mut s = 1.0 + bqi * delhi;
        for i in 2..10_000 {
            ai -= 2.0 * (i - 1) as f64;
            ci = -ai * ci / i as f64;
            let tmp = (qi - bi * qip1) / ai;
            qi = qip1;
            qip1 = tmp;
            bqi += ci * qip1;
            bi += 2.0;
            di = 1.0 / (bi + ai * di);
            delhi = (bi * di - 1.0) * delhi;
            hi += delhi;
            let dels = bqi * delhi;
            s += dels;
            if (dels / s).abs() < f64::EPSILON {
                break;
            }
        }
        hi *= -a1;
        let scale = (-x).exp();
        let k0 = (PI / (2.0 * x)).sqrt() / s;
        let k1 = k0 * (x + 0.5 - hi) / x;
        (k0 * scale, k1 * scale)
    }
}

/// `K_n(x)` for integer `n ≥ 0` by upward recurrence.
pub fn bessel_k(n: u32, x: f64) -> f64 {
    let (mut km, mut k) = bessel_k01(x);
    if n == 0 {
        return km;
    }
    for j in 1..n {
        let next = km + 2.0 * j as f64 / x * k;
        km = k;
        k = next;
    }
    k
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn nu_order(nu: f64, allowed: &[u32]) -> Result<u32> {
    let r = nu.round();
    if (nu - r).abs() > 1e-12 || r < 0.0 || !allowed.contains(&(r as u32)) {
        return Err(Error::UnsupportedNu(nu));
    }
    Ok(r as u32)
}

/// `σ² / (Γ(ν) 2^{ν−1}) (κh)^ν K_ν(κh)` for `ν ∈ {1, 2, 3}`.
pub fn matern_cov(h: f64, nu: f64, kappa: f64, sigma2: f64) -> Result<f64> {
    let n = nu_order(nu, &[1, 2, 3])?;
    if !(h >= 0.0) || !(kappa > 0.0) {
        return Err(Error::InvalidInput(format!("need h >= 0 and kappa > 0, got h = {h}, kappa = {kappa}")));
    }
    let x = kappa * h;
    if x == 0.0 {
        return Ok(sigma2);
    }
    if x > 700.0 {
        return Ok(0.0);
    }
    let c = sigma2 / (factorial(n - 1) * 2f64.powi(n as i32 - 1));
    Ok(c * x.powi(n as i32) * bessel_k(n, x))
}

/// Dense Matérn covariance matrix between two point sets.
pub fn matern_cov_matrix(a: &[[f64; 2]], b: &[[f64; 2]], nu: f64, kappa: f64, sigma2: f64) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(a.len(), b.len());
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            m[(i, j)] = matern_cov((p[0] - q[0]).hypot(p[1] - q[1]), nu, kappa, sigma2)?;
        }
    }
    Ok(m)
}

/// Marginal variance of the stationary solution of `(κ² − Δ)^{α/2} x = φ W` on the plane, `ν = α − 1`.
pub fn spde_marginal_variance(kappa: f64, phi: f64, nu: f64) -> Result<f64> {
    let n = nu_order(nu, &[1, 2, 3])?;
    Ok(factorial(n - 1) / (factorial(n) * 4.0 * PI * kappa.powi(2 * n as i32)) * phi * phi)
}

/// Covariance block `Cov(f(s), f(s'))` at lag `d = s − s'` for `f = (∂₂g, −∂₁g)`
/// with `g` Matérn of smoothness `ν ∈ {2, 3}`. Returned as `[[K11, K12], [K21, K22]]`.
pub fn divfree_kernel(d: [f64; 2], nu: f64, kappa: f64, sigma2: f64) -> Result<[[f64; 2]; 2]> {
    let n = nu_order(nu, &[2, 3])?;
    let rho = d[0].hypot(d[1]);
    let x = kappa * rho;
    let c = sigma2 / (factorial(n - 1) * 2f64.powi(n as i32 - 1));
    // Hessian of r(|d|): r'' dd/ρ² + (r'/ρ)(I − dd/ρ²)
    let hess = if x < 1e-10 {
        let r2 = -sigma2 * kappa * kappa / (2.0 * (n as f64 - 1.0));
        [[r2, 0.0], [0.0, r2]]
    } else if x > 700.0 {
        [[0.0; 2]; 2]
    } else {
        let k = |m: i32| bessel_k(m.unsigned_abs(), x);
        let nf = n as i32;
        let r1_over_rho = -c * kappa * kappa * x.powi(nf - 1) * k(nf - 1);
        let r2 = -c * kappa * kappa * (x.powi(nf - 1) * k(nf - 1) - x.powi(nf) * k(nf - 2));
        let u = [d[0] / rho, d[1] / rho];
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let delta = if i == j { 1.0 } else { 0.0 };
                h[i][j] = r2 * u[i] * u[j] + r1_over_rho * (delta - u[i] * u[j]);
            }
        }
        h
    };
    Ok([[-hess[1][1], hess[1][0]], [hess[0][1], -hess[0][0]]])
}

/// Cross covariance of the stacked vectors `[f₁(a); f₂(a)]` and `[f₁(b); f₂(b)]`.
pub fn divfree_cov(a: &[[f64; 2]], b: &[[f64; 2]], nu: f64, kappa: f64, sigma2: f64) -> Result<DMatrix<f64>> {
    let (na, nb) = (a.len(), b.len());
    let mut m = DMatrix::zeros(2 * na, 2 * nb);
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            let k = divfree_kernel([p[0] - q[0], p[1] - q[1]], nu, kappa, sigma2)?;
            m[(i, j)] = k[0][0];
            m[(i, nb + j)] = k[0][1];
            m[(na + i, j)] = k[1][0];
            m[(na + i, nb + j)] = k[1][1];
        }
    }
    Ok(m)
}

/// Prior covariance of the divergence-free field at `locations`, checked for
/// positive semi-definiteness.
pub fn divfree_kernel_baseline(locations: &[[f64; 2]], nu: f64, kappa: f64, sigma2: f64) -> Result<DMatrix<f64>> {
    for (i, p) in locations.iter().enumerate() {
        if locations[..i].iter().any(|q| q == p) {
            return Err(Error::InvalidInput(format!("duplicate location {p:?}")));
        }
    }
    let m = divfree_cov(locations, locations, nu, kappa, sigma2)?;
    let sym = (&m + m.transpose()) * 0.5;
    let ev = sym.clone().symmetric_eigenvalues();
    let (min, max) = (ev.min(), ev.max());
    if min < -1e-8 * max.abs() {
        return Err(Error::IllConditioned { min, max });
    }
    Ok(sym)
}
