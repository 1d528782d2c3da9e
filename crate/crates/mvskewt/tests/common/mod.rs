//! Shared test oracles: log-space adaptive quadrature over the real line and
//! the reference integrals built on it. Everything here is independent of the
//! library's Bessel/closed-form evaluation paths: only elementary functions
//! and (for the joint-density oracle) the matrix normal density are used.

#![allow(dead_code)]

use mvskewt::dist::matnorm_log_density;
use mvskewt::dist::MatNormParams;
use mvskewt::mvst::MvstParams;
use nalgebra::DMatrix;

/// Adaptive Simpson on a finite interval.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Brackets the effective support of a log-integrand on the real line:
/// returns (t_lo, t_hi, g_max) with g < g_max - 80 outside the bracket.
fn bracket_support(g: &dyn Fn(f64) -> f64, scan_lo: f64, scan_hi: f64) -> (f64, f64, f64) {
    let steps = 4000;
    let h = (scan_hi - scan_lo) / steps as f64;
    let mut t_star = scan_lo;
    let mut g_max = f64::NEG_INFINITY;
    for i in 0..=steps {
        let t = scan_lo + i as f64 * h;
        let v = g(t);
        if v > g_max {
            g_max = v;
            t_star = t;
        }
    }
    let cutoff = g_max - 80.0;
    let mut lo = t_star;
    while g(lo) > cutoff {
        lo -= 0.5;
    }
    let mut hi = t_star;
    while g(hi) > cutoff {
        hi += 0.5;
    }
    (lo, hi, g_max)
}

/// log of integral over the real line of exp(g(t)) dt, scanning [-45, 45].
pub fn log_integral_exp(g: &dyn Fn(f64) -> f64) -> f64 {
    let (lo, hi, g_max) = bracket_support(g, -45.0, 45.0);
    let scaled = |t: f64| (g(t) - g_max).exp();
    let integral = adaptive_simpson(&scaled, lo, hi, 1e-13);
    g_max + integral.ln()
}

/// E[h] under the density proportional to exp(g(t)) on the line.
pub fn weighted_mean(g: &dyn Fn(f64) -> f64, h: &dyn Fn(f64) -> f64) -> f64 {
    let (lo, hi, g_max) = bracket_support(g, -45.0, 45.0);
    let norm = adaptive_simpson(&|t: f64| (g(t) - g_max).exp(), lo, hi, 1e-13);
    let num = adaptive_simpson(&|t: f64| h(t) * (g(t) - g_max).exp(), lo, hi, 1e-13);
    num / norm
}

/// log K_lambda(x) by quadrature of (1/2) Int_0^inf y^(lambda-1)
/// exp(-(x/2)(y + 1/y)) dy, substituted y = e^t.
pub fn log_bessel_k_quadrature(lambda: f64, x: f64) -> f64 {
    let g = |t: f64| lambda * t - x * t.cosh();
    log_integral_exp(&g) - 2.0_f64.ln()
}

/// The three GIG expectations by quadrature on the t = log y line.
/// The unnormalized log-density in t is lambda t - (a e^t + b e^-t)/2.
pub fn gig_expectations_quadrature(a: f64, b: f64, lambda: f64) -> (f64, f64, f64) {
    let g = move |t: f64| lambda * t - 0.5 * (a * t.exp() + b * (-t).exp());
    let mean = weighted_mean(&g, &|t| t.exp());
    let mean_recip = weighted_mean(&g, &|t| (-t).exp());
    let mean_log = weighted_mean(&g, &|t| t);
    (mean, mean_recip, mean_log)
}

/// Inverse gamma log-density with shape alpha and exp(-beta/x) numerator.
pub fn invgamma_log_density(x: f64, alpha: f64, beta: f64) -> f64 {
    alpha * beta.ln() - ln_gamma_ref(alpha) - (alpha + 1.0) * x.ln() - beta / x
}

/// Stirling-series reference log-gamma, written out independently of the
/// library's implementation style checks (same classical formula).
pub fn ln_gamma_ref(x: f64) -> f64 {
    let mut shift = 0.0;
    let mut t = x;
    while t < 12.0 {
        shift -= t.ln();
        t += 1.0;
    }
    let inv = 1.0 / t;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0 + inv2 * (-1.0 / 360.0 + inv2 * (1.0 / 1260.0 + inv2 * (-1.0 / 1680.0))));
    shift + (t - 0.5) * t.ln() - t + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

/// Joint log-density of (X, w): X | w matrix normal (M + wA, w Sigma, Psi),
/// w inverse gamma (nu/2, nu/2). This is the quadrature oracle's integrand;
/// it never touches the Bessel-based closed form.
pub fn joint_log_density(x: &DMatrix<f64>, params: &MvstParams, w: f64) -> f64 {
    let cond = MatNormParams::new(
        &params.location + w * &params.skewness,
        w * &params.row_scale,
        params.col_scale.clone(),
    )
    .unwrap();
    matnorm_log_density(x, &cond).unwrap() + invgamma_log_density(w, 0.5 * params.dof, 0.5 * params.dof)
}

/// Marginal MVST log-density by 1-D quadrature over the latent weight.
pub fn mvst_log_density_quadrature(x: &DMatrix<f64>, params: &MvstParams) -> f64 {
    let g = |t: f64| joint_log_density(x, params, t.exp()) + t;
    log_integral_exp(&g)
}

/// Multivariate normal log-density evaluated directly from a full covariance
/// matrix (the vec/Kronecker oracle for the matrix normal).
pub fn mvn_log_density(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let dim = x.len();
    let chol = nalgebra::Cholesky::new(cov.clone()).expect("oracle covariance must be SPD");
    let diff = nalgebra::DVector::from_iterator(dim, x.iter().zip(mean).map(|(a, b)| a - b));
    let solved = chol.solve(&diff);
    let quad: f64 = diff.dot(&solved);
    let log_det: f64 = (0..dim).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
    -0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * quad
}

/// Deterministic pseudo-random stream for oracle test instances.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

/// Random SPD matrix with unit-ish scale: I + 0.5 G G' / dim.
pub fn random_spd(rng: &mut SplitMix, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.range(-1.0, 1.0));
    DMatrix::identity(dim, dim) + 0.5 * (&g * g.transpose()) / dim as f64
}

pub fn random_matrix(rng: &mut SplitMix, n: usize, p: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.range(lo, hi))
}

/// Random valid MVST parameter set for small-instance property tests.
pub fn random_mvst_params(rng: &mut SplitMix, n: usize, p: usize) -> MvstParams {
    MvstParams::new(
        random_matrix(rng, n, p, -2.0, 2.0),
        random_matrix(rng, n, p, -1.0, 1.0),
        random_spd(rng, n),
        random_spd(rng, p),
        rng.range(3.0, 12.0),
    )
    .unwrap()
}
