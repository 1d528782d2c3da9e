//! The matrix-variate skew-t distribution: parameter container, the delta and
//! rho trace forms, exact log-density, sampling via the variance-mean mixture
//! construction, the conditional law of the latent weight, and the
//! vec-equivalence bridge to the multivariate skew-t.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dist::{
    invgamma_sample, matnorm_sample, whiten, GigExpectations, GigParams, InvGammaParams,
    MatNormParams,
};
use crate::specfun::{digamma, log_bessel_k, log_gamma};
use crate::util::{cholesky_spd, is_symmetric, log_det};
use crate::{Error, Result};

/// Below this skewness quadratic form the distribution is treated as the
/// matrix-variate t limit: the Bessel argument sqrt(rho (delta + nu)) goes to
/// zero exactly where the inverse-gamma closed form takes over.
pub const RHO_MIN: f64 = 1e-12;

/// Full MVST parameter set (M, A, Sigma, Psi, nu).
#[derive(Debug, Clone, PartialEq)]
pub struct MvstParams {
    pub location: DMatrix<f64>,
    pub skewness: DMatrix<f64>,
    pub row_scale: DMatrix<f64>,
    pub col_scale: DMatrix<f64>,
    pub dof: f64,
}

impl MvstParams {
    pub fn new(
        location: DMatrix<f64>,
        skewness: DMatrix<f64>,
        row_scale: DMatrix<f64>,
        col_scale: DMatrix<f64>,
        dof: f64,
    ) -> Result<Self> {
        let (n, p) = (location.nrows(), location.ncols());
        if skewness.nrows() != n || skewness.ncols() != p {
            return Err(Error::Domain(format!(
                "skewness must be {n}x{p}, got {}x{}",
                skewness.nrows(),
                skewness.ncols()
            )));
        }
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
        if !is_symmetric(&row_scale, 1e-12) || !is_symmetric(&col_scale, 1e-12) {
            return Err(Error::Domain("scale matrices must be symmetric".into()));
        }
        if !(dof > 0.0 && dof.is_finite()) {
            return Err(Error::Domain(format!("dof must be positive, got {dof}")));
        }
        Ok(Self {
            location,
            skewness,
            row_scale,
            col_scale,
            dof,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.location.nrows(), self.location.ncols())
    }

    /// True when dof > 2, the regime in which the mean M + E(W) A is finite.
    pub fn has_finite_mean(&self) -> bool {
        self.dof > 2.0
    }
}

/// The two trace quadratic forms of the density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadForms {
    pub delta: f64,
    pub rho: f64,
}

/// N observed n x p matrices with shared dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dims: (usize, usize),
    observations: Vec<DMatrix<f64>>,
}

impl Dataset {
    pub fn new(dims: (usize, usize), observations: Vec<DMatrix<f64>>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::InsufficientData("dataset needs N >= 1".into()));
        }
        for (i, obs) in observations.iter().enumerate() {
            if obs.nrows() != dims.0 || obs.ncols() != dims.1 {
                return Err(Error::Domain(format!(
                    "observation {i} is {}x{}, expected {}x{}",
                    obs.nrows(),
                    obs.ncols(),
                    dims.0,
                    dims.1
                )));
            }
        }
        Ok(Self { dims, observations })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[DMatrix<f64>] {
        &self.observations
    }
}

/// delta(X; M, Sigma, Psi) = tr(Sigma^-1 (X-M) Psi^-1 (X-M)').
pub fn delta_form(
    x: &DMatrix<f64>,
    location: &DMatrix<f64>,
    row_scale: &DMatrix<f64>,
    col_scale: &DMatrix<f64>,
) -> Result<f64> {
    let chol_row = cholesky_spd(row_scale, "row_scale")?;
    let chol_col = cholesky_spd(col_scale, "col_scale")?;
    let b = whiten(&(x - location), &chol_row, &chol_col)?;
    Ok(b.iter().map(|v| v * v).sum())
}

/// rho(A, Sigma, Psi) = tr(Sigma^-1 A Psi^-1 A').
pub fn rho_form(
    skewness: &DMatrix<f64>,
    row_scale: &DMatrix<f64>,
    col_scale: &DMatrix<f64>,
) -> Result<f64> {
    let chol_row = cholesky_spd(row_scale, "row_scale")?;
    let chol_col = cholesky_spd(col_scale, "col_scale")?;
    let b = whiten(skewness, &chol_row, &chol_col)?;
    Ok(b.iter().map(|v| v * v).sum())
}

/// Both quadratic forms plus the cross trace tr(Sigma^-1 (X-M) Psi^-1 A'),
/// sharing one pair of factorizations.
fn quad_forms_and_cross(x: &DMatrix<f64>, params: &MvstParams) -> Result<(QuadForms, f64)> {
    let chol_row = cholesky_spd(&params.row_scale, "row_scale")?;
    let chol_col = cholesky_spd(&params.col_scale, "col_scale")?;
    let b_resid = whiten(&(x - &params.location), &chol_row, &chol_col)?;
    let b_skew = whiten(&params.skewness, &chol_row, &chol_col)?;
    let delta = b_resid.iter().map(|v| v * v).sum();
    let rho = b_skew.iter().map(|v| v * v).sum();
    let cross = b_resid.iter().zip(b_skew.iter()).map(|(r, s)| r * s).sum();
    Ok((QuadForms { delta, rho }, cross))
}

/// Exact MVST log-density, all gamma and Bessel terms in log space.
/// Falls back to the matrix-variate t closed form when rho <= RHO_MIN.
pub fn mvst_log_density(x: &DMatrix<f64>, params: &MvstParams) -> Result<f64> {
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
    let b_resid = whiten(&(x - &params.location), &chol_row, &chol_col)?;
    let b_skew = whiten(&params.skewness, &chol_row, &chol_col)?;
    let delta: f64 = b_resid.iter().map(|v| v * v).sum();
    let rho: f64 = b_skew.iter().map(|v| v * v).sum();
    let cross: f64 = b_resid.iter().zip(b_skew.iter()).map(|(r, s)| r * s).sum();

    let nu = params.dof;
    let np = (n * p) as f64;
    let base = 0.5 * nu * (0.5 * nu).ln() - 0.5 * np * (2.0 * PI).ln()
        - 0.5 * p as f64 * log_det(&chol_row)
        - 0.5 * n as f64 * log_det(&chol_col)
        - log_gamma(0.5 * nu)?
        + cross;

    let value = if rho <= RHO_MIN {
        // Matrix-variate t limit: W | X ~ IG((nu+np)/2, (delta+nu)/2).
        base + log_gamma(0.5 * (nu + np))? - 0.5 * (nu + np) * (0.5 * (delta + nu)).ln()
    } else {
        let order = -0.5 * (nu + np);
        let kappa = (rho * (delta + nu)).sqrt();
        let log_k = log_bessel_k(order, kappa).map_err(|e| {
            Error::Numerical(format!("Bessel term of the MVST density failed: {e}"))
        })?;
        base + 2.0_f64.ln() - 0.25 * (nu + np) * ((delta + nu) / rho).ln() + log_k
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(format!(
            "MVST log-density is non-finite (delta={delta}, rho={rho}, nu={nu})"
        )))
    }
}

/// N draws via X = M + W A + sqrt(W) V with W inverse gamma (nu/2, nu/2) and
/// V matrix normal (0, Sigma, Psi).
pub fn mvst_sample<R: Rng>(rng: &mut R, params: &MvstParams, count: usize) -> Result<Dataset> {
    let (n, p) = params.dims();
    let mixing = InvGammaParams::new(0.5 * params.dof, 0.5 * params.dof)?;
    let base = MatNormParams::new(
        DMatrix::zeros(n, p),
        params.row_scale.clone(),
        params.col_scale.clone(),
    )?;
    let mut observations = Vec::with_capacity(count);
    for _ in 0..count {
        let w = invgamma_sample(rng, &mixing);
        let v = matnorm_sample(rng, &base)?;
        observations.push(&params.location + w * &params.skewness + w.sqrt() * v);
    }
    Dataset::new((n, p), observations)
}

/// Conditional law of the latent weight W given an observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentConditional {
    /// The generic case: W | X ~ GIG(rho, delta + nu, -(nu+np)/2).
    Gig(GigParams),
    /// The rho <= RHO_MIN limit: W | X ~ IG((nu+np)/2, (delta+nu)/2).
    InverseGamma(InvGammaParams),
}

impl LatentConditional {
    /// (E W, E 1/W, E log W) for either branch.
    pub fn expectations(&self) -> Result<GigExpectations> {
        match self {
            LatentConditional::Gig(gig) => crate::dist::gig_expectations(gig),
            LatentConditional::InverseGamma(ig) => {
                if ig.shape <= 1.0 {
                    return Err(Error::Numerical(format!(
                        "inverse gamma mean requires shape > 1, got {}",
                        ig.shape
                    )));
                }
                Ok(GigExpectations {
                    mean: ig.rate_like / (ig.shape - 1.0),
                    mean_reciprocal: ig.shape / ig.rate_like,
                    mean_log: ig.rate_like.ln() - digamma(ig.shape)?,
                })
            }
        }
    }
}

/// W | X, as a GIG law with a = rho, b = delta + nu, index = -(nu+np)/2,
/// or the inverse-gamma limit when the skewness form is below RHO_MIN.
pub fn conditional_w_given_x(x: &DMatrix<f64>, params: &MvstParams) -> Result<LatentConditional> {
    let (forms, _) = quad_forms_and_cross(x, params)?;
    let (n, p) = params.dims();
    let np = (n * p) as f64;
    let nu = params.dof;
    if forms.rho <= RHO_MIN {
        Ok(LatentConditional::InverseGamma(InvGammaParams::new(
            0.5 * (nu + np),
            0.5 * (forms.delta + nu),
        )?))
    } else {
        Ok(LatentConditional::Gig(GigParams::new(
            forms.rho,
            forms.delta + nu,
            -0.5 * (nu + np),
        )?))
    }
}

/// The multivariate skew-t parameter set equivalent to an MVST law:
/// (vec M, vec A, Psi x Sigma, nu).
#[derive(Debug, Clone, PartialEq)]
pub struct VecParams {
    pub location: DVector<f64>,
    pub skewness: DVector<f64>,
    pub scale: DMatrix<f64>,
    pub dof: f64,
}

impl VecParams {
    /// The equivalent (np, 1) matrix-variate parameter set, used to evaluate
    /// the multivariate skew-t density through the same code path.
    pub fn as_column_mvst(&self) -> Result<MvstParams> {
        let np = self.location.len();
        MvstParams::new(
            DMatrix::from_column_slice(np, 1, self.location.as_slice()),
            DMatrix::from_column_slice(np, 1, self.skewness.as_slice()),
            self.scale.clone(),
            DMatrix::identity(1, 1),
            self.dof,
        )
    }
}

/// Column-stacking vectorization of the parameter set.
pub fn vec_params(params: &MvstParams) -> VecParams {
    VecParams {
        location: DVector::from_column_slice(params.location.as_slice()),
        skewness: DVector::from_column_slice(params.skewness.as_slice()),
        scale: params.col_scale.kronecker(&params.row_scale),
        dof: params.dof,
    }
}

/// Rescales (Sigma, Psi) so that tr(Sigma) = n, leaving Psi x Sigma and every
/// log-density unchanged.
pub fn normalize_scale(params: &MvstParams) -> MvstParams {
    let n = params.row_scale.nrows() as f64;
    let trace = params.row_scale.trace();
    let factor = n / trace;
    MvstParams {
        location: params.location.clone(),
        skewness: params.skewness.clone(),
        row_scale: factor * &params.row_scale,
        col_scale: &params.col_scale / factor,
        dof: params.dof,
    }
}
