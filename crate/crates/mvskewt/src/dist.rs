//! Elementary distribution building blocks: matrix normal density and
//! sampling, inverse gamma sampling, GIG density and the three closed-form
//! expectations used by the E-step.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::specfun::{dlog_bessel_k_dorder, log_bessel_k};
use crate::util::{cholesky_spd, is_symmetric, log_det};
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Matrix normal parameters: n x p location M, n x n row scale Sigma,
/// p x p column scale Psi.
#[derive(Debug, Clone, PartialEq)]
pub struct MatNormParams {
    pub location: DMatrix<f64>,
    pub row_scale: DMatrix<f64>,
    pub col_scale: DMatrix<f64>,
}

impl MatNormParams {
    pub fn new(
        location: DMatrix<f64>,
        row_scale: DMatrix<f64>,
        col_scale: DMatrix<f64>,
    ) -> Result<Self> {
        let (n, p) = (location.nrows(), location.ncols());
        if row_scale.nrows() != n || row_scale.ncols() != n {
            return Err(Error::Domain(format!(
                "row_scale must be {n}x{n}, got {}x{}",
                row_scale.nrows(),
                row_scale.ncols()
            )));
        }
        if col_scale.nrows() != p || col_scale.ncols() != p {
            return Err(Error::Domain(format!(
                "col_scale must be {p}x{p}, got {}x{}",
                col_scale.nrows(),
                col_scale.ncols()
            )));
        }
        if !is_symmetric(&row_scale, SYMMETRY_TOL) {
            return Err(Error::Domain("row_scale is not symmetric".into()));
        }
        if !is_symmetric(&col_scale, SYMMETRY_TOL) {
            return Err(Error::Domain("col_scale is not symmetric".into()));
        }
        Ok(Self {
            location,
            row_scale,
            col_scale,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.location.nrows(), self.location.ncols())
    }
}

/// Generalized inverse Gaussian parameters (a, b, lambda).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    pub a: f64,
    pub b: f64,
    pub index: f64,
}

impl GigParams {
    pub fn new(a: f64, b: f64, index: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) || !index.is_finite() {
            return Err(Error::Domain(format!(
                "GIG requires a > 0, b > 0, finite index; got a={a}, b={b}, index={index}"
            )));
        }
        Ok(Self { a, b, index })
    }
}

/// Inverse gamma parameters: shape alpha and the beta appearing in exp(-beta/x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaParams {
    pub shape: f64,
    pub rate_like: f64,
}

impl InvGammaParams {
    pub fn new(shape: f64, rate_like: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) || !(rate_like > 0.0 && rate_like.is_finite()) {
            return Err(Error::Domain(format!(
                "inverse gamma requires shape > 0, rate_like > 0; got {shape}, {rate_like}"
            )));
        }
        Ok(Self { shape, rate_like })
    }
}

/// Matrix normal log-density. Determinants and quadratic forms go through
/// the Cholesky factors of the two scales.
pub fn matnorm_log_density(x: &DMatrix<f64>, params: &MatNormParams) -> Result<f64> {
    let (n, p) = params.dims();
    if x.nrows() != n || x.ncols() != p {
        return Err(Error::Domain(format!(
            "observation must be {n}x{p}, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let chol_row = cholesky_spd(&params.row_scale, "row_scale")?;
    let chol_col = cholesky_spd(&params.col_scale, "col_scale")?;
    let resid = x - &params.location;
    let quad = trace_quad_form(&resid, &chol_row, &chol_col)?;
    let np = (n * p) as f64;
    Ok(-0.5 * np * (2.0 * PI).ln()
        - 0.5 * p as f64 * log_det(&chol_row)
        - 0.5 * n as f64 * log_det(&chol_col)
        - 0.5 * quad)
}

/// tr(Sigma^-1 R Psi^-1 R') through triangular solves:
/// equals ||L_sigma^-1 R L_psi^-T||_F^2.
pub(crate) fn trace_quad_form(
    resid: &DMatrix<f64>,
    chol_row: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    chol_col: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
) -> Result<f64> {
    let b = whiten(resid, chol_row, chol_col)?;
    Ok(b.iter().map(|v| v * v).sum())
}

/// L_sigma^-1 R L_psi^-T.
pub(crate) fn whiten(
    resid: &DMatrix<f64>,
    chol_row: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    chol_col: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
) -> Result<DMatrix<f64>> {
    let l_row = chol_row.l();
    let l_col = chol_col.l();
    let u = l_row
        .solve_lower_triangular(resid)
        .ok_or_else(|| Error::Numerical("singular row-scale Cholesky factor".into()))?;
    // B' = L_psi^-1 U'
    let bt = l_col
        .solve_lower_triangular(&u.transpose())
        .ok_or_else(|| Error::Numerical("singular col-scale Cholesky factor".into()))?;
    Ok(bt.transpose())
}

/// Draw X = M + L_sigma Z L_psi', Z i.i.d. standard normal.
pub fn matnorm_sample<R: Rng>(rng: &mut R, params: &MatNormParams) -> Result<DMatrix<f64>> {
    let (n, p) = params.dims();
    let chol_row = cholesky_spd(&params.row_scale, "row_scale")?;
    let chol_col = cholesky_spd(&params.col_scale, "col_scale")?;
    let z = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng));
    Ok(&params.location + chol_row.l() * z * chol_col.l().transpose())
}

/// Inverse gamma draw as the reciprocal of a Gamma(shape, rate) draw.
pub fn invgamma_sample<R: Rng>(rng: &mut R, params: &InvGammaParams) -> f64 {
    let gamma = Gamma::new(params.shape, 1.0 / params.rate_like)
        .expect("parameters validated at construction");
    1.0 / gamma.sample(rng)
}

/// GIG log-density
/// log f(y) = (lambda/2) log(a/b) + (lambda - 1) log y - log 2
///            - log K_lambda(sqrt(ab)) - (a y + b / y) / 2.
pub fn gig_log_density(y: f64, params: &GigParams) -> Result<f64> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::Domain(format!("GIG density requires y > 0, got {y}")));
    }
    let GigParams { a, b, index } = *params;
    let log_k = log_bessel_k(index, (a * b).sqrt())?;
    Ok(0.5 * index * (a / b).ln() + (index - 1.0) * y.ln()
        - 2.0_f64.ln()
        - log_k
        - 0.5 * (a * y + b / y))
}

/// The three E-step expectations of a GIG law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigExpectations {
    /// E(Y)
    pub mean: f64,
    /// E(1/Y)
    pub mean_reciprocal: f64,
    /// E(log Y)
    pub mean_log: f64,
}

/// Closed-form GIG expectations:
/// E(Y)     = sqrt(b/a) K_{lambda+1}(k) / K_lambda(k),
/// E(1/Y)   = sqrt(a/b) K_{lambda+1}(k) / K_lambda(k) - 2 lambda / b,
/// E(log Y) = log sqrt(b/a) + d/d(lambda) log K_lambda(k),
/// with k = sqrt(ab). Bessel ratios are exp of log differences.
pub fn gig_expectations(params: &GigParams) -> Result<GigExpectations> {
    let GigParams { a, b, index } = *params;
    let kappa = (a * b).sqrt();
    let log_ratio = log_bessel_k(index + 1.0, kappa)? - log_bessel_k(index, kappa)?;
    let half_log_ba = 0.5 * (b.ln() - a.ln());
    let mean = (half_log_ba + log_ratio).exp();
    let mean_reciprocal = (-half_log_ba + log_ratio).exp() - 2.0 * index / b;
    let mean_log = half_log_ba + dlog_bessel_k_dorder(index, kappa)?;
    Ok(GigExpectations {
        mean,
        mean_reciprocal,
        mean_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_params(n: usize, p: usize) -> MatNormParams {
        MatNormParams::new(
            DMatrix::zeros(n, p),
            DMatrix::identity(n, n),
            DMatrix::identity(p, p),
        )
        .unwrap()
    }

    #[test]
    fn matnorm_density_at_location_identity_scales() {
        let params = identity_params(3, 4);
        let val = matnorm_log_density(&DMatrix::zeros(3, 4), &params).unwrap();
        let expected = -0.5 * 12.0 * (2.0 * PI).ln();
        assert!((val - expected).abs() < 1e-12);
    }

    #[test]
    fn matnorm_scalar_case_is_univariate_normal() {
        let params = identity_params(1, 1);
        for &x in &[-2.0, 0.3, 1.7] {
            let val = matnorm_log_density(&DMatrix::from_element(1, 1, x), &params).unwrap();
            let expected = -0.5 * (2.0 * PI).ln() - 0.5 * x * x;
            assert!((val - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn matnorm_rejects_bad_scale() {
        let bad = MatNormParams::new(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let err = matnorm_log_density(&DMatrix::zeros(2, 2), &bad).unwrap_err();
        assert!(matches!(err, Error::Factorization { .. }));
        assert!(err.to_string().contains("row_scale"));
    }

    #[test]
    fn matnorm_sample_deterministic_per_seed() {
        let params = identity_params(2, 3);
        let a = matnorm_sample(&mut ChaCha8Rng::seed_from_u64(7), &params).unwrap();
        let b = matnorm_sample(&mut ChaCha8Rng::seed_from_u64(7), &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invgamma_sample_deterministic_per_seed() {
        let params = InvGammaParams::new(2.0, 2.0).unwrap();
        let a = invgamma_sample(&mut ChaCha8Rng::seed_from_u64(3), &params);
        let b = invgamma_sample(&mut ChaCha8Rng::seed_from_u64(3), &params);
        assert_eq!(a, b);
        assert!(a > 0.0);
    }

    #[test]
    fn invgamma_mc_mean() {
        // E(X) = beta / (alpha - 1) = 1 at (3, 2).
        let params = InvGammaParams::new(3.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| invgamma_sample(&mut rng, &params)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        // Var(X) = beta^2 / ((alpha-1)^2 (alpha-2)) = 4/4 = 1.
        let se = (1.0 / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn invgamma_reciprocal_matches_gamma_moments() {
        // 1/X ~ Gamma(alpha, rate beta): mean alpha/beta, var alpha/beta^2.
        let params = InvGammaParams::new(3.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 100_000;
        let recips: Vec<f64> = (0..n)
            .map(|_| 1.0 / invgamma_sample(&mut rng, &params))
            .collect();
        let mean = recips.iter().sum::<f64>() / n as f64;
        let var = recips.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let se = (0.75 / n as f64).sqrt();
        assert!((mean - 1.5).abs() < 4.0 * se, "mean {mean}");
        assert!((var - 0.75).abs() < 0.05, "var {var}");
    }

    #[test]
    fn gig_density_rejects_nonpositive_y() {
        let params = GigParams::new(2.0, 3.0, -1.5).unwrap();
        assert!(gig_log_density(0.0, &params).is_err());
        assert!(gig_log_density(-1.0, &params).is_err());
    }

    #[test]
    fn gig_density_reciprocal_symmetry() {
        // f(y; a, b, l) = f(1/y; b, a, -l) / y^2
        let params = GigParams::new(2.0, 3.0, -1.5).unwrap();
        let swapped = GigParams::new(3.0, 2.0, 1.5).unwrap();
        for &y in &[0.2, 0.9, 1.0, 2.4, 7.0] {
            let lhs = gig_log_density(y, &params).unwrap();
            let rhs = gig_log_density(1.0 / y, &swapped).unwrap() - 2.0 * y.ln();
            assert!((lhs - rhs).abs() < 1e-12, "y={y}");
        }
    }

    #[test]
    fn gig_mean_at_symmetric_half_index() {
        // lambda = -1/2, a = b: K_{1/2}/K_{-1/2} = 1 so E(Y) = sqrt(b/a) = 1.
        for &ab in &[0.5, 1.0, 4.0] {
            let params = GigParams::new(ab, ab, -0.5).unwrap();
            let e = gig_expectations(&params).unwrap();
            assert!((e.mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gig_symmetric_at_zero_index() {
        // a = b, lambda = 0: Y and 1/Y share a law, so the two means agree.
        let params = GigParams::new(2.5, 2.5, 0.0).unwrap();
        let e = gig_expectations(&params).unwrap();
        assert!((e.mean - e.mean_reciprocal).abs() < 1e-12);
        assert!(e.mean_log.abs() < 1e-10);
    }

    #[test]
    fn gig_jensen_consistency() {
        for &(a, b, l) in &[(2.0, 3.0, -1.5), (0.1, 50.0, -8.0), (10.0, 0.4, 2.0)] {
            let e = gig_expectations(&GigParams::new(a, b, l).unwrap()).unwrap();
            assert!(e.mean_reciprocal >= 1.0 / e.mean);
            assert!(e.mean_log <= e.mean.ln());
        }
    }
}
