//! Binary Gaussian process classification with a probit likelihood,
//! approximated by expectation propagation.
//!
//! Sites are stored in natural parameters (`τ̃ = 1/σ̃²`, `ν̃ = μ̃/σ̃²`) so that
//! an untouched site is simply `τ̃ = 0`. The posterior is kept in the
//! `B = I + S^½ K S^½` form, which never inverts `K` or `Σ̃` directly.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{gaussian_divide, probit_gaussian_moments, Gaussian1D};
use crate::kernel::Kernel;
use crate::normal;
use crate::quadrature::{integrate, QuadratureOptions};

/// Relative diagonal jitter added to the Gram matrix before factorizing.
pub const BASE_JITTER: f64 = 1e-10;
const JITTER_GROWTH: f64 = 100.0;
const JITTER_ESCALATIONS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpOptions {
    /// Stop when no site's natural parameters moved more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Fraction of each new site applied, in (0, 1]. 1 is undamped.
    pub damping: f64,
    /// Seed for the per-sweep visiting order.
    pub seed: u64,
}

impl Default for EpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 100,
            damping: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteParams {
    pub precision: Vec<f64>,
    pub precision_mean: Vec<f64>,
    pub log_z: Vec<f64>,
}

impl SiteParams {
    pub fn uninitialized(n: usize) -> Self {
        Self {
            precision: vec![0.0; n],
            precision_mean: vec![0.0; n],
            log_z: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.precision.len()
    }

    pub fn is_empty(&self) -> bool {
        self.precision.is_empty()
    }

    /// `μ̃_i`; zero for an untouched site.
    pub fn mean(&self, i: usize) -> f64 {
        if self.precision[i] == 0.0 {
            0.0
        } else {
            self.precision_mean[i] / self.precision[i]
        }
    }

    /// `σ̃_i²`; `+∞` for an untouched site.
    pub fn variance(&self, i: usize) -> f64 {
        1.0 / self.precision[i]
    }

    fn site(&self, i: usize) -> Gaussian1D {
        Gaussian1D::from_natural(self.precision[i], self.precision_mean[i])
    }

    /// Append an untouched site.
    pub fn push_uninitialized(&mut self) {
        self.precision.push(0.0);
        self.precision_mean.push(0.0);
        self.log_z.push(0.0);
    }
}

/// Latent predictive moments at one input, plus the projection needed to
/// form cross covariances with other inputs.
#[derive(Debug, Clone)]
pub struct LatentPoint {
    pub mean: f64,
    pub variance: f64,
    /// `L⁻¹ S^½ k(X, x)`
    proj: DVector<f64>,
}

impl LatentPoint {
    /// `p(y = +1)` from the latent moments.
    pub fn probability(&self) -> Result<f64> {
        let radicand = 1.0 + self.variance;
        if !(radicand > 0.0) {
            return Err(Error::NegativePredictiveVariance { radicand });
        }
        Ok(normal::cdf(self.mean / radicand.sqrt()))
    }
}

/// `p(y_s, y_*)` indexed `[y_s][y_*]` with index 0 for class 0 (sign −1)
/// and index 1 for class 1 (sign +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPredictive {
    pub table: [[f64; 2]; 2],
    /// Set when the quadrature entries drifted from unit mass by more than
    /// 1e-6 and were renormalized.
    pub renormalized: bool,
}

impl JointPredictive {
    pub fn get(&self, y_s: usize, y_star: usize) -> f64 {
        self.table[y_s][y_star]
    }

    pub fn marginal_s(&self, y_s: usize) -> f64 {
        self.table[y_s][0] + self.table[y_s][1]
    }

    pub fn marginal_star(&self, y_star: usize) -> f64 {
        self.table[0][y_star] + self.table[1][y_star]
    }
}

#[derive(Debug, Clone)]
pub struct GpcModel {
    pub kernel: Kernel,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
    pub sites: SiteParams,
    pub posterior_mean: DVector<f64>,
    pub posterior_cov: DMatrix<f64>,
    pub log_marginal: f64,
    pub converged: bool,
    pub sweeps: usize,
    pub options: EpOptions,
    jitter: f64,
    sqrt_tau: DVector<f64>,
    chol_b: Option<Cholesky<f64, Dyn>>,
    /// `(K + Σ̃)⁻¹ μ̃`
    alpha: DVector<f64>,
}

struct Posterior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    sqrt_tau: DVector<f64>,
    chol_b: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_det_b_half: f64,
    quad_b: f64,
}

fn validate_training(train_x: &[Vec<f64>], train_y: &[f64]) -> Result<usize> {
    if train_x.len() != train_y.len() {
        return Err(Error::LengthMismatch {
            left: train_x.len(),
            right: train_y.len(),
        });
    }
    if train_x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dim = train_x[0].len();
    if train_x.iter().any(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch("training inputs differ in length".into()));
    }
    if train_y.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidInput("labels must be -1 or +1".into()));
    }
    if train_x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite training input".into()));
    }
    Ok(dim)
}

/// Gram matrix with the smallest jitter that admits a Cholesky factor.
fn jittered_gram(kernel: &Kernel, xs: &[Vec<f64>]) -> Result<(DMatrix<f64>, f64)> {
    let base = kernel.gram(xs);
    let mut jitter = BASE_JITTER * kernel.signal_variance;
    for attempt in 0..=JITTER_ESCALATIONS {
        let mut k = base.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += jitter;
        }
        if k.clone().cholesky().is_some() {
            return Ok((k, jitter));
        }
        if attempt < JITTER_ESCALATIONS {
            jitter *= JITTER_GROWTH;
        }
    }
    Err(Error::GramNotPD { jitter })
}

fn posterior_from_sites(k: &DMatrix<f64>, sites: &SiteParams) -> Result<Posterior> {
    let n = k.nrows();
    let tau = DVector::from_column_slice(&sites.precision);
    let nu = DVector::from_column_slice(&sites.precision_mean);
    let sqrt_tau = tau.map(|t| t.max(0.0).sqrt());
    let mut b = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] += sqrt_tau[i] * k[(i, j)] * sqrt_tau[j];
        }
    }
    let chol_b = b.cholesky().ok_or(Error::GramNotPD { jitter: f64::NAN })?;
    // V = L⁻¹ S^½ K
    let mut v = k.clone();
    for i in 0..n {
        v.row_mut(i).scale_mut(sqrt_tau[i]);
    }
    chol_b.l_dirty().solve_lower_triangular_mut(&mut v);
    let cov = k - v.transpose() * &v;
    let mean = &cov * &nu;

    // α = ν̃ − S^½ B⁻¹ S^½ K ν̃
    let mut w = k * &nu;
    w.component_mul_assign(&sqrt_tau);
    let w = chol_b.solve(&w);
    let alpha = &nu - w.component_mul(&sqrt_tau);

    // q = S^{-½} ν̃ restricted to active sites, for the marginal likelihood
    let q = DVector::from_iterator(
        n,
        (0..n).map(|i| if sqrt_tau[i] > 0.0 { nu[i] / sqrt_tau[i] } else { 0.0 }),
    );
    let quad_b = q.dot(&chol_b.solve(&q));
    let log_det_b_half: f64 = chol_b.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    Ok(Posterior {
        mean,
        cov,
        sqrt_tau,
        chol_b,
        alpha,
        log_det_b_half,
        quad_b,
    })
}

fn log_marginal(sites: &SiteParams, post: &Posterior) -> f64 {
    let mut total = 0.0;
    for i in 0..sites.len() {
        let t = sites.precision[i];
        if t > 0.0 {
            total += sites.log_z[i] + 0.5 * t.ln() - normal::HALF_LN_2PI;
        }
    }
    total - post.log_det_b_half - 0.5 * post.quad_b
}

/// Fit by EP from untouched sites.
pub fn ep_fit(
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    kernel: Kernel,
    options: EpOptions,
) -> Result<GpcModel> {
    let n = train_x.len();
    ep_fit_from(train_x, train_y, kernel, options, SiteParams::uninitialized(n))
}

/// Fit by EP starting from the given site parameters.
pub fn ep_fit_from(
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    kernel: Kernel,
    options: EpOptions,
    initial_sites: SiteParams,
) -> Result<GpcModel> {
    validate_training(&train_x, &train_y)?;
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::InvalidInput(format!("damping {} not in (0, 1]", options.damping)));
    }
    let n = train_x.len();
    if initial_sites.len() != n {
        return Err(Error::LengthMismatch {
            left: initial_sites.len(),
            right: n,
        });
    }
    let (k, jitter) = jittered_gram(&kernel, &train_x)?;
    let mut sites = initial_sites;
    let post = posterior_from_sites(&k, &sites)?;
    let mut sigma = post.cov;
    let mut mu = post.mean;

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut converged = false;
    let mut sweeps = 0;
    let mut final_post = None;

    while sweeps < options.max_sweeps {
        order.shuffle(&mut rng);
        let mut max_delta = 0.0f64;
        for &i in &order {
            let marginal = Gaussian1D::new(mu[i], sigma[(i, i)]);
            let cavity = gaussian_divide(marginal, sites.site(i));
            if !cavity.is_proper() {
                // improper cavity: leave the site alone this sweep
                continue;
            }
            let tilted = match probit_gaussian_moments(cavity, train_y[i], 0.0, 1.0) {
                Ok(m) => m,
                Err(_) => continue,
            };
            let cav_tau = cavity.precision();
            let new_tau = 1.0 / tilted.variance - cav_tau;
            let new_nu = tilted.mean / tilted.variance - cavity.precision_mean();
            if !(new_tau > 0.0) || !new_nu.is_finite() {
                continue;
            }
            let d = options.damping;
            let old_tau = sites.precision[i];
            let old_nu = sites.precision_mean[i];
            let tau = (1.0 - d) * old_tau + d * new_tau;
            let nu = (1.0 - d) * old_nu + d * new_nu;
            let delta_tau = tau - old_tau;
            max_delta = max_delta.max(delta_tau.abs()).max((nu - old_nu).abs());

            sites.precision[i] = tau;
            sites.precision_mean[i] = nu;
            let site_var = 1.0 / tau;
            let site_mean = nu / tau;
            let spread = cavity.variance + site_var;
            let gap = cavity.mean - site_mean;
            sites.log_z[i] = tilted.log_norm
                + normal::HALF_LN_2PI
                + 0.5 * spread.ln()
                + gap * gap / (2.0 * spread);

            // Σ ← Σ − Δτ/(1 + Δτ Σ_ii) s sᵀ
            let s = sigma.column(i).clone_owned();
            let scale = delta_tau / (1.0 + delta_tau * s[i]);
            sigma.ger(-scale, &s, &s, 1.0);
            let nu_vec = DVector::from_column_slice(&sites.precision_mean);
            mu = &sigma * nu_vec;
        }
        sweeps += 1;
        let post = posterior_from_sites(&k, &sites)?;
        sigma = post.cov.clone();
        mu = post.mean.clone();
        final_post = Some(post);
        if max_delta < options.tol {
            converged = true;
            break;
        }
    }
    let post = match final_post {
        Some(p) => p,
        None => posterior_from_sites(&k, &sites)?,
    };
    let log_marginal = log_marginal(&sites, &post);
    Ok(GpcModel {
        kernel,
        train_x,
        train_y,
        sites,
        posterior_mean: post.mean,
        posterior_cov: post.cov,
        log_marginal,
        converged,
        sweeps,
        options,
        jitter,
        sqrt_tau: post.sqrt_tau,
        chol_b: Some(post.chol_b),
        alpha: post.alpha,
    })
}

impl GpcModel {
    /// A model with no training data: predictions are the squashed prior.
    pub fn prior(kernel: Kernel) -> Self {
        Self {
            kernel,
            train_x: Vec::new(),
            train_y: Vec::new(),
            sites: SiteParams::uninitialized(0),
            posterior_mean: DVector::zeros(0),
            posterior_cov: DMatrix::zeros(0, 0),
            log_marginal: 0.0,
            converged: true,
            sweeps: 0,
            options: EpOptions::default(),
            jitter: 0.0,
            sqrt_tau: DVector::zeros(0),
            chol_b: None,
            alpha: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.train_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_x.is_empty()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.train_x.first().map(|x| x.len())
    }

    /// Latent predictive moments at `x`.
    pub fn latent(&self, x: &[f64]) -> LatentPoint {
        let prior_variance = self.kernel.signal_variance;
        let Some(chol) = &self.chol_b else {
            return LatentPoint {
                mean: 0.0,
                variance: prior_variance,
                proj: DVector::zeros(0),
            };
        };
        let kx = self.kernel.cross(&self.train_x, x);
        let mean = kx.dot(&self.alpha);
        let mut proj = kx.component_mul(&self.sqrt_tau);
        chol.l_dirty().solve_lower_triangular_mut(&mut proj);
        let variance = prior_variance - proj.norm_squared();
        LatentPoint {
            mean,
            variance,
            proj,
        }
    }

    /// Posterior covariance of the latent values at two inputs.
    pub fn latent_cross_cov(&self, xs: &[f64], a: &LatentPoint, xt: &[f64], b: &LatentPoint) -> f64 {
        let prior = self.kernel.eval(xs, xt);
        if a.proj.is_empty() {
            prior
        } else {
            prior - a.proj.dot(&b.proj)
        }
    }

    /// `p(y_* = +1 | X, y, x_*)`.
    pub fn predict(&self, x_star: &[f64]) -> Result<f64> {
        self.check_dim(x_star)?;
        self.latent(x_star).probability()
    }

    /// Class with the larger predictive probability; 0.5 resolves to class 1.
    pub fn predict_label(&self, x_star: &[f64]) -> Result<u8> {
        Ok(label_from_probability(self.predict(x_star)?))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        match self.input_dim() {
            Some(d) if d != x.len() => Err(Error::DimensionMismatch(format!(
                "model inputs have length {d}, got {}",
                x.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Joint label distribution at two inputs under the EP posterior.
    pub fn joint_predict(&self, x_s: &[f64], x_star: &[f64]) -> Result<JointPredictive> {
        self.check_dim(x_s)?;
        self.check_dim(x_star)?;
        let a = self.latent(x_s);
        let b = self.latent(x_star);
        let cross = self.latent_cross_cov(x_s, &a, x_star, &b);
        joint_from_latent(a.mean, a.variance, b.mean, b.variance, cross)
    }

    /// `p(y_s = +1 | x_s, x_*, y_*)` as the joint over the marginal at `x_*`.
    pub fn conditional_predict(&self, x_s: &[f64], x_star: &[f64], y_star: f64) -> Result<f64> {
        let p_star = self.predict(x_star)?;
        let (idx, denom) = if y_star > 0.0 { (1, p_star) } else { (0, 1.0 - p_star) };
        if denom < 1e-12 {
            return Err(Error::DegenerateConditioning { denominator: denom });
        }
        let joint = self.joint_predict(x_s, x_star)?;
        Ok((joint.get(1, idx) / denom).clamp(0.0, 1.0))
    }

    /// Model rebuilt with one extra labeled point, warm-started from the
    /// current sites.
    pub fn with_point(&self, x: &[f64], y: f64) -> Result<GpcModel> {
        let mut xs = self.train_x.clone();
        let mut ys = self.train_y.clone();
        xs.push(x.to_vec());
        ys.push(y);
        let mut sites = self.sites.clone();
        sites.push_uninitialized();
        ep_fit_from(xs, ys, self.kernel, self.options, sites)
    }

    /// Model refitted from untouched sites with one extra labeled point.
    pub fn retrain_with(&self, x: &[f64], y: f64) -> Result<GpcModel> {
        let mut xs = self.train_x.clone();
        let mut ys = self.train_y.clone();
        xs.push(x.to_vec());
        ys.push(y);
        ep_fit(xs, ys, self.kernel, self.options)
    }

    /// Recompute `(K⁻¹ + Σ̃⁻¹)⁻¹` and `Σ Σ̃⁻¹ μ̃` by explicit inversion.
    pub fn posterior_by_inversion(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.len();
        let mut k = self.kernel.gram(&self.train_x);
        for i in 0..n {
            k[(i, i)] += self.jitter;
        }
        let mut prec = k.try_inverse()?;
        for i in 0..n {
            prec[(i, i)] += self.sites.precision[i];
        }
        let cov = prec.try_inverse()?;
        let nu = DVector::from_column_slice(&self.sites.precision_mean);
        let mean = &cov * nu;
        Some((mean, cov))
    }
}

pub fn label_from_probability(p: f64) -> u8 {
    if p >= 0.5 {
        1
    } else {
        0
    }
}

/// Joint probit table for a bivariate latent Gaussian, by adaptive
/// quadrature over `f_s` of the conditional probit in `f_*`.
pub fn joint_from_latent(
    mean_s: f64,
    var_s: f64,
    mean_star: f64,
    var_star: f64,
    cross: f64,
) -> Result<JointPredictive> {
    let var_s = var_s.max(0.0);
    let var_star = var_star.max(0.0);
    let mut table = if var_s <= 1e-14 {
        let ps = normal::cdf(mean_s);
        let pt = normal::cdf(mean_star / (1.0 + var_star).sqrt());
        [[(1.0 - ps) * (1.0 - pt), (1.0 - ps) * pt], [ps * (1.0 - pt), ps * pt]]
    } else {
        let sd_s = var_s.sqrt();
        let slope = cross / sd_s;
        let cond_var = (var_star - cross * cross / var_s).max(0.0);
        let cond_scale = 1.0 / (1.0 + cond_var).sqrt();
        let values = integrate(
            |t| {
                let w = normal::pdf(t);
                let fs = mean_s + sd_s * t;
                let ps = normal::cdf(fs);
                let pt = normal::cdf((mean_star + slope * t) * cond_scale);
                [
                    w * (1.0 - ps) * (1.0 - pt),
                    w * (1.0 - ps) * pt,
                    w * ps * (1.0 - pt),
                    w * ps * pt,
                ]
            },
            -12.0,
            12.0,
            QuadratureOptions::default(),
        )?;
        [[values[0], values[1]], [values[2], values[3]]]
    };
    for row in table.iter_mut() {
        for v in row.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    let total: f64 = table.iter().flatten().sum();
    let renormalized = (total - 1.0).abs() > 1e-6;
    if renormalized {
        tracing::warn!(total, "joint predictive mass drifted; renormalizing");
        for row in table.iter_mut() {
            for v in row.iter_mut() {
                *v /= total;
            }
        }
    }
    Ok(JointPredictive {
        table,
        renormalized,
    })
}

/// Log-spaced grid over signal variance and lengthscale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub signal_variances: Vec<f64>,
    pub lengthscales: Vec<f64>,
}

impl HyperGrid {
    pub fn log_spaced(lo: f64, hi: f64, points: usize) -> Vec<f64> {
        if points == 1 {
            return vec![lo];
        }
        let (a, b) = (lo.ln(), hi.ln());
        (0..points)
            .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
            .collect()
    }

    pub fn square(lo: f64, hi: f64, points: usize) -> Self {
        let axis = Self::log_spaced(lo, hi, points);
        Self {
            signal_variances: axis.clone(),
            lengthscales: axis,
        }
    }
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self::square(0.1, 100.0, 7)
    }
}

/// Evidence differences below this many nats are treated as ties.
pub const EVIDENCE_TIE: f64 = 1e-9;

/// Grid point maximizing the EP marginal likelihood.
///
/// The evidence is often flat: two opposite labels far apart score exactly
/// `ln 1/4` for every short lengthscale. Points within [`EVIDENCE_TIE`] of
/// the best are ties, resolved toward the grid's log-space centre (then the
/// first in (signal variance, lengthscale) order), which is where a local
/// optimizer started from a neutral guess would stay.
pub fn fit_hyperparameters(
    train_x: &[Vec<f64>],
    train_y: &[f64],
    grid: &HyperGrid,
    options: EpOptions,
) -> Result<Kernel> {
    validate_training(train_x, train_y)?;
    if train_x.len() < 2 || !train_y.contains(&1.0) || !train_y.contains(&-1.0) {
        return Err(Error::InvalidInput(
            "hyperparameter search needs at least one example of each class".into(),
        ));
    }
    let mut scored = Vec::new();
    for &sv in &grid.signal_variances {
        for &ls in &grid.lengthscales {
            let kernel = Kernel::new(sv, ls)?;
            match ep_fit(train_x.to_vec(), train_y.to_vec(), kernel, options) {
                Ok(m) if m.log_marginal.is_finite() => scored.push((m.log_marginal, kernel)),
                _ => {}
            }
        }
    }
    let best = scored
        .iter()
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let centre = |axis: &[f64]| {
        let (lo, hi) = axis.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v.ln()), hi.max(v.ln()))
        });
        (lo + hi) / 2.0
    };
    let (cs, cl) = (centre(&grid.signal_variances), centre(&grid.lengthscales));
    let offset = |k: &Kernel| (k.signal_variance.ln() - cs).powi(2) + (k.lengthscale.ln() - cl).powi(2);
    let mut choice: Option<Kernel> = None;
    for (lz, k) in &scored {
        if best - lz > EVIDENCE_TIE {
            continue;
        }
        // strict comparison keeps the first of equally central points
        if choice.map_or(true, |c| offset(k) < offset(&c) - 1e-12) {
            choice = Some(*k);
        }
    }
    choice.ok_or(Error::AllFitsFailed)
}

const MODEL_FORMAT: &str = "egpc-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    kernel: Kernel,
    options: EpOptions,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    sites: SiteParams,
    log_marginal: f64,
    converged: bool,
    sweeps: usize,
}

impl GpcModel {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kernel: self.kernel,
            options: self.options,
            train_x: self.train_x.clone(),
            train_y: self.train_y.clone(),
            sites: self.sites.clone(),
            log_marginal: self.log_marginal,
            converged: self.converged,
            sweeps: self.sweeps,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Restore a model; the posterior is rebuilt from the stored sites.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        if file.train_x.is_empty() {
            let mut m = GpcModel::prior(file.kernel);
            m.options = file.options;
            return Ok(m);
        }
        validate_training(&file.train_x, &file.train_y)?;
        let (k, jitter) = jittered_gram(&file.kernel, &file.train_x)?;
        let post = posterior_from_sites(&k, &file.sites)?;
        Ok(GpcModel {
            kernel: file.kernel,
            train_x: file.train_x,
            train_y: file.train_y,
            sites: file.sites,
            posterior_mean: post.mean,
            posterior_cov: post.cov,
            log_marginal: file.log_marginal,
            converged: file.converged,
            sweeps: file.sweeps,
            options: file.options,
            jitter,
            sqrt_tau: post.sqrt_tau,
            chol_b: Some(post.chol_b),
            alpha: post.alpha,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
