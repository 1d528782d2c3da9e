//! Maximum-likelihood estimation of MVST parameters by the six-step ECM
//! algorithm: E-step through the conditional GIG expectations, a first CM
//! step for (M, A, nu), conditional updates of the two scale matrices, and
//! Aitken-acceleration stopping.

use nalgebra::DMatrix;

use crate::mvst::{
    conditional_w_given_x, mvst_log_density, normalize_scale, rho_form, Dataset, MvstParams,
    RHO_MIN,
};
use crate::specfun::digamma;
use crate::util::{cholesky_spd, stable_matrix_sum, stable_sum};
use crate::{Error, Result};

const DEGENERATE_DENOM_TOL: f64 = 1e-10;

/// Per-observation latent expectations from one E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct EStepStats {
    /// a_i = E(W_i | X_i)
    pub a: Vec<f64>,
    /// b_i = E(1/W_i | X_i)
    pub b: Vec<f64>,
    /// c_i = E(log W_i | X_i)
    pub c: Vec<f64>,
    /// kappa_i = sqrt(rho (delta_i + nu))
    pub bessel_arg: Vec<f64>,
    /// lambda = -(nu + np)/2
    pub gig_index: f64,
}

/// Initialization strategy for the fit.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Moment-based start: mean, mean-minus-median skew, scaled identities.
    Moment,
    /// User-supplied starting parameters, validated against the data.
    Provided(MvstParams),
}

/// Fit configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub epsilon: f64,
    pub nu_bounds: (f64, f64),
    pub seed: u64,
    pub init: InitStrategy,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            epsilon: 1e-6,
            nu_bounds: (0.5, 200.0),
            seed: 0,
            init: InitStrategy::Moment,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Domain(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        let (low, high) = self.nu_bounds;
        if !(low > 0.0 && low < high) {
            return Err(Error::Domain(format!(
                "nu bounds must satisfy 0 < low < high, got ({low}, {high})"
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one ECM fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Final parameters, scale-normalized so that tr(Sigma) = n.
    pub params: MvstParams,
    /// Observed log-likelihood after each iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Aitken acceleration value at each evaluation (from iteration 3 on).
    pub aitken_history: Vec<f64>,
}

/// E-step: (a_i, b_i, c_i) for every observation, routed through the shared
/// conditional-GIG path.
pub fn e_step(data: &Dataset, params: &MvstParams) -> Result<EStepStats> {
    let n_obs = data.len();
    let (n, p) = params.dims();
    let np = (n * p) as f64;
    let gig_index = -0.5 * (params.dof + np);
    let mut a = Vec::with_capacity(n_obs);
    let mut b = Vec::with_capacity(n_obs);
    let mut c = Vec::with_capacity(n_obs);
    let mut bessel_arg = Vec::with_capacity(n_obs);
    for (i, x) in data.observations().iter().enumerate() {
        let tag = |e: Error| Error::Numerical(format!("E-step failed at observation {i}: {e}"));
        let conditional = conditional_w_given_x(x, params).map_err(tag)?;
        let kappa = match &conditional {
            crate::mvst::LatentConditional::Gig(gig) => (gig.a * gig.b).sqrt(),
            crate::mvst::LatentConditional::InverseGamma(_) => 0.0,
        };
        let e = conditional.expectations().map_err(tag)?;
        a.push(e.mean);
        b.push(e.mean_reciprocal);
        c.push(e.mean_log);
        bessel_arg.push(kappa);
    }
    Ok(EStepStats {
        a,
        b,
        c,
        bessel_arg,
        gig_index,
    })
}

/// First CM step, location and skewness parts:
/// M = sum_i X_i (a_bar b_i - 1) / (sum_i a_bar b_i - N),
/// A = sum_i X_i (b_bar - b_i) / (sum_i a_bar b_i - N).
pub fn cm_update_location_skewness(
    data: &Dataset,
    stats: &EStepStats,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n_obs = data.len() as f64;
    let a_bar = stable_sum(stats.a.iter().copied()) / n_obs;
    let b_bar = stable_sum(stats.b.iter().copied()) / n_obs;
    let denom = stable_sum(stats.b.iter().map(|bi| a_bar * bi)) - n_obs;
    if denom.abs() < DEGENERATE_DENOM_TOL {
        return Err(Error::DegenerateWeights);
    }
    let m_terms: Vec<DMatrix<f64>> = data
        .observations()
        .iter()
        .zip(&stats.b)
        .map(|(x, &bi)| x * (a_bar * bi - 1.0))
        .collect();
    let a_terms: Vec<DMatrix<f64>> = data
        .observations()
        .iter()
        .zip(&stats.b)
        .map(|(x, &bi)| x * (b_bar - bi))
        .collect();
    Ok((
        stable_matrix_sum(&m_terms) / denom,
        stable_matrix_sum(&a_terms) / denom,
    ))
}

/// Solution of the degrees-of-freedom equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuSolution {
    pub value: f64,
    /// True when the root fell outside the bounds and the nearer bound was
    /// returned instead.
    pub clamped: bool,
}

/// Solves log(nu/2) + 1 - digamma(nu/2) = mean_b_plus_c for nu by bisection.
/// The left side is strictly decreasing, so the bracketed root is unique;
/// without a sign change on the bounds, the bound with smaller residual is
/// returned with the clamped flag set.
pub fn solve_nu(mean_b_plus_c: f64, bounds: (f64, f64)) -> Result<NuSolution> {
    if !mean_b_plus_c.is_finite() {
        return Err(Error::Domain(format!(
            "nu equation target must be finite, got {mean_b_plus_c}"
        )));
    }
    let (low, high) = bounds;
    let f = |nu: f64| -> Result<f64> {
        Ok((0.5 * nu).ln() + 1.0 - digamma(0.5 * nu)? - mean_b_plus_c)
    };
    let f_low = f(low)?;
    let f_high = f(high)?;
    if f_low.abs() < 1e-10 {
        return Ok(NuSolution {
            value: low,
            clamped: false,
        });
    }
    if f_high.abs() < 1e-10 {
        return Ok(NuSolution {
            value: high,
            clamped: false,
        });
    }
    if f_low.signum() == f_high.signum() {
        let value = if f_low.abs() < f_high.abs() { low } else { high };
        return Ok(NuSolution {
            value,
            clamped: true,
        });
    }
    let mut lo = low;
    let mut hi = high;
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid.abs() < 1e-12 || (hi - lo) < 1e-14 * mid.max(1.0) {
            break;
        }
        // f decreasing: positive residual means the root lies to the right.
        if f_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(NuSolution {
        value: mid,
        clamped: false,
    })
}

/// Second CM step: Sigma update, conditioned on the previous Psi.
pub fn cm_update_row_scale(
    data: &Dataset,
    stats: &EStepStats,
    location: &DMatrix<f64>,
    skewness: &DMatrix<f64>,
    col_scale: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (_, p) = data.dims();
    let psi_inv = cholesky_spd(col_scale, "col_scale")?.inverse();
    let a_psi = skewness * &psi_inv;
    let skew_quad = &a_psi * skewness.transpose();
    let terms: Vec<DMatrix<f64>> = data
        .observations()
        .iter()
        .zip(&stats.b)
        .zip(&stats.a)
        .map(|((x, &bi), &ai)| {
            let resid = x - location;
            let resid_psi = &resid * &psi_inv;
            let cross = &a_psi * resid.transpose();
            bi * &resid_psi * resid.transpose() - &cross - cross.transpose() + ai * &skew_quad
        })
        .collect();
    let raw = stable_matrix_sum(&terms) / (data.len() as f64 * p as f64);
    let symmetrized = 0.5 * (&raw + raw.transpose());
    cholesky_spd(&symmetrized, "updated row_scale")?;
    Ok(symmetrized)
}

/// Third CM step: Psi update, conditioned on the just-updated Sigma.
pub fn cm_update_col_scale(
    data: &Dataset,
    stats: &EStepStats,
    location: &DMatrix<f64>,
    skewness: &DMatrix<f64>,
    row_scale: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (n, _) = data.dims();
    let sigma_inv = cholesky_spd(row_scale, "row_scale")?.inverse();
    let at_sigma = skewness.transpose() * &sigma_inv;
    let skew_quad = &at_sigma * skewness;
    let terms: Vec<DMatrix<f64>> = data
        .observations()
        .iter()
        .zip(&stats.b)
        .zip(&stats.a)
        .map(|((x, &bi), &ai)| {
            let resid = x - location;
            let resid_t_sigma = resid.transpose() * &sigma_inv;
            let cross = &at_sigma * &resid;
            bi * &resid_t_sigma * &resid - &cross - cross.transpose() + ai * &skew_quad
        })
        .collect();
    let raw = stable_matrix_sum(&terms) / (data.len() as f64 * n as f64);
    let symmetrized = 0.5 * (&raw + raw.transpose());
    cholesky_spd(&symmetrized, "updated col_scale")?;
    Ok(symmetrized)
}

/// Observed log-likelihood: order-invariant compensated sum of the
/// per-observation log-densities.
pub fn observed_loglik(data: &Dataset, params: &MvstParams) -> Result<f64> {
    let mut terms = Vec::with_capacity(data.len());
    for (i, x) in data.observations().iter().enumerate() {
        let ld = mvst_log_density(x, params)
            .map_err(|e| Error::Numerical(format!("log-likelihood at observation {i}: {e}")))?;
        terms.push(ld);
    }
    Ok(stable_sum(terms))
}

/// Outcome of one Aitken convergence check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AitkenOutcome {
    pub converged: bool,
    /// a_t = (l_curr - l_prev) / (l_prev - l_prev2)
    pub acceleration: f64,
    /// Asymptotic log-likelihood estimate l_inf.
    pub loglik_estimate: f64,
}

/// Aitken acceleration stopping rule on three consecutive log-likelihoods:
/// converged when 0 <= l_inf - l_prev < epsilon.
pub fn aitken_check(l_prev2: f64, l_prev: f64, l_curr: f64, epsilon: f64) -> AitkenOutcome {
    let denom = l_prev - l_prev2;
    if denom == 0.0 {
        // Flat history: fall back to the plain increment.
        let diff = l_curr - l_prev;
        return AitkenOutcome {
            converged: diff < epsilon,
            acceleration: 0.0,
            loglik_estimate: l_curr,
        };
    }
    let acceleration = (l_curr - l_prev) / denom;
    if acceleration == 1.0 {
        return AitkenOutcome {
            converged: false,
            acceleration,
            loglik_estimate: f64::INFINITY,
        };
    }
    let loglik_estimate = l_prev + (l_curr - l_prev) / (1.0 - acceleration);
    let diff = loglik_estimate - l_prev;
    AitkenOutcome {
        converged: diff >= 0.0 && diff < epsilon,
        acceleration,
        loglik_estimate,
    }
}

/// Moment-based (or user-provided) starting parameters.
pub fn init_params(data: &Dataset, config: &FitConfig) -> Result<MvstParams> {
    let (n, p) = data.dims();
    if let InitStrategy::Provided(params) = &config.init {
        if params.dims() != (n, p) {
            return Err(Error::Domain(format!(
                "provided initialization is {:?}, data is {:?}",
                params.dims(),
                (n, p)
            )));
        }
        return Ok(params.clone());
    }
    let n_obs = data.len();
    if n_obs < 2 {
        return Err(Error::InsufficientData(
            "moment initialization needs N >= 2".into(),
        ));
    }
    let mean = stable_matrix_sum(data.observations()) / n_obs as f64;

    // Elementwise median.
    let mut median = DMatrix::zeros(n, p);
    let mut column = vec![0.0; n_obs];
    for r in 0..n {
        for c in 0..p {
            for (k, x) in data.observations().iter().enumerate() {
                column[k] = x[(r, c)];
            }
            column.sort_by(|a, b| a.partial_cmp(b).unwrap());
            median[(r, c)] = if n_obs % 2 == 1 {
                column[n_obs / 2]
            } else {
                0.5 * (column[n_obs / 2 - 1] + column[n_obs / 2])
            };
        }
    }
    let mut skew = &mean - &median;

    let resid_ss = stable_sum(data.observations().iter().map(|x| (x - &mean).norm_squared()));
    let avg_var = (resid_ss / (n_obs * n * p) as f64).max(1e-8);
    let row_scale = DMatrix::identity(n, n) * avg_var;
    let col_scale = DMatrix::identity(p, p);

    // Keep the skewness form clear of the limiting branch.
    if rho_form(&skew, &row_scale, &col_scale)? < 10.0 * RHO_MIN {
        let mut best = (0, 0);
        let mut best_abs = -1.0;
        for r in 0..n {
            for c in 0..p {
                if skew[(r, c)].abs() > best_abs {
                    best_abs = skew[(r, c)].abs();
                    best = (r, c);
                }
            }
        }
        skew[best] += 0.01;
    }

    MvstParams::new(mean, skew, row_scale, col_scale, 10.0)
}

/// Full ECM fit: E-step, (M, A, nu) CM step, Sigma step against the old Psi,
/// Psi step against the new Sigma, observed log-likelihood, Aitken check.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let step_err = |iteration: usize| {
        move |e: Error| Error::FitStep {
            iteration,
            source: Box::new(e),
        }
    };
    let mut params = init_params(data, config)?;
    let n_obs = data.len() as f64;
    let mut loglik_trace: Vec<f64> = Vec::new();
    let mut aitken_history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=config.max_iterations {
        iterations = t;
        let stats = e_step(data, &params).map_err(step_err(t))?;
        let (location, skewness) =
            cm_update_location_skewness(data, &stats).map_err(step_err(t))?;
        let target = (stable_sum(stats.b.iter().copied()) + stable_sum(stats.c.iter().copied()))
            / n_obs;
        let nu = solve_nu(target, config.nu_bounds).map_err(step_err(t))?.value;
        let row_scale =
            cm_update_row_scale(data, &stats, &location, &skewness, &params.col_scale)
                .map_err(step_err(t))?;
        let col_scale = cm_update_col_scale(data, &stats, &location, &skewness, &row_scale)
            .map_err(step_err(t))?;
        params = MvstParams::new(location, skewness, row_scale, col_scale, nu)
            .map_err(step_err(t))?;
        let loglik = observed_loglik(data, &params).map_err(step_err(t))?;
        loglik_trace.push(loglik);

        if loglik_trace.len() >= 3 {
            let k = loglik_trace.len();
            let outcome = aitken_check(
                loglik_trace[k - 3],
                loglik_trace[k - 2],
                loglik_trace[k - 1],
                config.epsilon,
            );
            aitken_history.push(outcome.acceleration);
            if outcome.converged {
                converged = true;
                break;
            }
        }
    }

    Ok(FitResult {
        params: normalize_scale(&params),
        loglik_trace,
        iterations,
        converged,
        aitken_history,
    })
}
