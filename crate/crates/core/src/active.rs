//! Pool-based active learning around the EP classifier: the query loop and
//! the acquisition strategies that pick the next fingerprint to label.
//!
//! The expected-error-reduction utility of a candidate `x_*` is
//!
//! ```text
//! U(x_*) = E_{x_s}[ E_{y_*|x_*}[ max_{y_s} p(y_s | x_s, x_*, y_*) ] - max_{y_s} p(y_s | x_s) ]
//! ```
//!
//! `ro` gets `p(y_s | x_s, x_*, y_*)` by refitting the model with the
//! hypothetical label. `alu` and `salu` get it from the joint predictive of
//! the current model and estimate the outer expectation by importance
//! sampling pool points in proportion to their kernel similarity to `x_*`.
//! `salu` replaces each `max` by the temperature-scaled log-sum-exp.

use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::{fit_hyperparameters, joint_from_latent, EpOptions, GpcModel, HyperGrid, LatentPoint};
use crate::identity::Identity;
use crate::kernel::Kernel;
use crate::metrics::compute_error_rate;
use crate::normal;
use crate::seeds;

/// Weight below which a hypothetical label is ignored in `E_{y_*|x_*}`.
const MIN_LABEL_PROB: f64 = 1e-12;
/// Kernel mass below which a candidate is treated as isolated.
const MIN_KERNEL_MASS: f64 = 1e-300;
/// Pointwise slack for the expected-error-reduction sign check.
const EER_SLACK: f64 = 1e-6;

const STREAM_CANDIDATES: u64 = 1;
const STREAM_EVAL: u64 = 2;
const STREAM_IMPORTANCE: u64 = 3;
const STREAM_RANDOM: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Mes,
    Bald,
    Ro,
    Alu,
    Salu,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Random,
        Strategy::Mes,
        Strategy::Bald,
        Strategy::Ro,
        Strategy::Alu,
        Strategy::Salu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Mes => "mes",
            Strategy::Bald => "bald",
            Strategy::Ro => "ro",
            Strategy::Alu => "alu",
            Strategy::Salu => "salu",
        }
    }

    /// Stable index used for seed derivation.
    pub fn id(self) -> u64 {
        self as u64
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Which per-point gain the retraining strategy averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UtilityForm {
    #[default]
    Max,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub strategy: Strategy,
    /// Candidates `x_*` scored per query.
    pub m1: usize,
    /// Evaluation points `x_s` per candidate, capped at the pool size.
    pub m2: usize,
    /// Temperature of the smooth maximum.
    pub softmax_k: f64,
    pub seed: u64,
    /// Gain used by the retraining strategy.
    pub ro_utility: UtilityForm,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Salu,
            m1: 50,
            m2: 100,
            softmax_k: 10.0,
            seed: 0,
            ro_utility: UtilityForm::Max,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return Err(Error::Config("m1 and m2 must be at least 1".into()));
        }
        if !(self.softmax_k > 0.0 && self.softmax_k.is_finite()) {
            return Err(Error::Config(format!("softmax_k {} must be finite and positive", self.softmax_k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPool {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Identity>,
}

/// Unlabeled fingerprints with the ids the oracle answers for.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnlabeledPool {
    pub x: Vec<Vec<f64>>,
    pub ids: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pools {
    pub labeled: LabeledPool,
    pub unlabeled: UnlabeledPool,
}

impl Pools {
    /// Move one unlabeled fingerprint into the labeled pool.
    pub fn move_to_labeled(&mut self, pool_index: usize, identity: Identity) -> Result<()> {
        if pool_index >= self.unlabeled.x.len() {
            return Err(Error::InvalidInput(format!("pool index {pool_index} out of range")));
        }
        let x = self.unlabeled.x.remove(pool_index);
        self.unlabeled.ids.remove(pool_index);
        self.labeled.x.push(x);
        self.labeled.y.push(identity);
        Ok(())
    }

    pub fn has_both_classes(&self) -> bool {
        self.labeled.y.contains(&Identity::Alice) && self.labeled.y.contains(&Identity::Eve)
    }
}

/// The upper-layer authentication mechanism that labels queried fingerprints.
pub trait LabelOracle {
    fn query(&mut self, id: usize, x: &[f64]) -> Result<Identity>;
    fn queries(&self) -> usize;
}

/// Oracle backed by known ground truth, indexed by sample id.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    truth: Vec<Identity>,
    count: usize,
}

impl SimulatedOracle {
    pub fn new(truth: Vec<Identity>) -> Self {
        Self { truth, count: 0 }
    }
}

impl LabelOracle for SimulatedOracle {
    fn query(&mut self, id: usize, _x: &[f64]) -> Result<Identity> {
        let id = *self
            .truth
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("oracle has no sample {id}")))?;
        self.count += 1;
        Ok(id)
    }

    fn queries(&self) -> usize {
        self.count
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityReport {
    /// Pool indices of the scored candidates, ascending.
    pub candidates: Vec<usize>,
    pub utilities: Vec<f64>,
    /// Position within `candidates` of the selected one.
    pub chosen: usize,
    pub seconds: f64,
    /// Candidates whose kernel mass over the pool vanished.
    pub isolated: usize,
    /// Pointwise gains of the retraining strategy below `-1e-6`.
    pub eer_violations: usize,
}

impl UtilityReport {
    pub fn chosen_pool_index(&self) -> usize {
        self.candidates[self.chosen]
    }

    fn from_utilities(candidates: Vec<usize>, utilities: Vec<f64>, start: Instant) -> Self {
        let chosen = argmax_first(&utilities);
        Self {
            candidates,
            utilities,
            chosen,
            seconds: start.elapsed().as_secs_f64(),
            isolated: 0,
            eer_violations: 0,
        }
    }
}

/// Index of the largest value; ties go to the lowest index and NaN never wins.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

/// `(1/k)·ln(e^{k a} + e^{k b})`
pub fn soft_max2(a: f64, b: f64, k: f64) -> f64 {
    let hi = a.max(b);
    hi + (-(k * (a - b).abs())).exp().ln_1p() / k
}

fn best_of(p: f64, form: UtilityForm, k: f64) -> f64 {
    match form {
        UtilityForm::Max => p.max(1.0 - p),
        UtilityForm::Soft => soft_max2(p, 1.0 - p, k),
    }
}

/// Per-point gain `g(x_s; x_*)`.
///
/// `p_s = p(y_s = 1 | x_s)`, `p_star = p(y_* = 1 | x_*)` and
/// `conditional[j] = p(y_s = 1 | x_s, x_*, y_* = j)`.
pub fn point_gain(form: UtilityForm, k: f64, p_s: f64, p_star: f64, conditional: [f64; 2]) -> f64 {
    let weights = [1.0 - p_star, p_star];
    let mut expected = 0.0;
    for j in 0..2 {
        if weights[j] >= MIN_LABEL_PROB {
            expected += weights[j] * best_of(conditional[j].clamp(0.0, 1.0), form, k);
        }
    }
    expected - best_of(p_s, form, k)
}

fn uniform_candidates(pool_len: usize, m: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = seeds::stream(seed, &[stream]);
    let m = m.min(pool_len);
    let mut idx = sample_indices(&mut rng, pool_len, m).into_vec();
    idx.sort_unstable();
    idx
}

fn check_pool(model: &GpcModel, pool: &[Vec<f64>]) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::PoolExhausted { iterations: 0 });
    }
    if let Some(d) = model.input_dim() {
        if pool.iter().any(|x| x.len() != d) {
            return Err(Error::DimensionMismatch("pool fingerprints differ from model inputs".into()));
        }
    }
    Ok(())
}

/// Uniformly random query.
pub fn acquire_random(pool: &[Vec<f64>], config: &AcquisitionConfig) -> Result<UtilityReport> {
    if pool.is_empty() {
        return Err(Error::PoolExhausted { iterations: 0 });
    }
    let start = Instant::now();
    let mut rng = seeds::stream(config.seed, &[STREAM_RANDOM]);
    let pick = rng.random_range(0..pool.len());
    Ok(UtilityReport::from_utilities(vec![pick], vec![0.0], start))
}

/// Maximum predictive entropy.
pub fn acquire_mes(model: &GpcModel, pool: &[Vec<f64>], config: &AcquisitionConfig) -> Result<UtilityReport> {
    check_pool(model, pool)?;
    let start = Instant::now();
    let candidates = uniform_candidates(pool.len(), config.m1, config.seed, STREAM_CANDIDATES);
    let utilities = candidates
        .iter()
        .map(|&c| model.predict(&pool[c]).map(normal::binary_entropy))
        .collect::<Result<Vec<_>>>()?;
    Ok(UtilityReport::from_utilities(candidates, utilities, start))
}

/// Closed-form mutual information between the label and the latent value,
/// in nats, from the latent predictive moments. The expected conditional
/// entropy uses the approximation `h(Φ(f)) ≈ exp(-f²/(π ln 2))` in bits.
pub fn bald_score(latent_mean: f64, latent_variance: f64) -> f64 {
    let var = latent_variance.max(0.0);
    let marginal = normal::binary_entropy(normal::cdf(latent_mean / (1.0 + var).sqrt()));
    let c2 = std::f64::consts::PI * std::f64::consts::LN_2 / 2.0;
    let expected_bits = (c2 / (var + c2)).sqrt() * (-latent_mean * latent_mean / (2.0 * (var + c2))).exp();
    marginal - std::f64::consts::LN_2 * expected_bits
}

pub fn acquire_bald(model: &GpcModel, pool: &[Vec<f64>], config: &AcquisitionConfig) -> Result<UtilityReport> {
    check_pool(model, pool)?;
    let start = Instant::now();
    let candidates = uniform_candidates(pool.len(), config.m1, config.seed, STREAM_CANDIDATES);
    let utilities = candidates
        .iter()
        .map(|&c| {
            let lp = model.latent(&pool[c]);
            bald_score(lp.mean, lp.variance)
        })
        .collect();
    Ok(UtilityReport::from_utilities(candidates, utilities, start))
}

/// Retraining-based expected error reduction over uniform evaluation points.
pub fn acquire_ro(model: &GpcModel, pool: &[Vec<f64>], config: &AcquisitionConfig) -> Result<UtilityReport> {
    check_pool(model, pool)?;
    let start = Instant::now();
    let candidates = uniform_candidates(pool.len(), config.m1, config.seed, STREAM_CANDIDATES);
    let eval = uniform_candidates(pool.len(), config.m2, config.seed, STREAM_EVAL);
    let eval_x: Vec<&[f64]> = eval.iter().map(|&s| pool[s].as_slice()).collect();
    let scored: Vec<(f64, usize)> = candidates
        .par_iter()
        .map(|&c| match ro_utility(model, &pool[c], &eval_x, config.ro_utility, config.softmax_k) {
            Ok(v) => v,
            Err(e) => {
                tracing::warn!(candidate = c, error = %e, "refit failed; candidate skipped");
                (f64::NEG_INFINITY, 0)
            }
        })
        .collect();
    let violations = scored.iter().map(|s| s.1).sum();
    let utilities = scored.into_iter().map(|s| s.0).collect();
    let mut report = UtilityReport::from_utilities(candidates, utilities, start);
    report.eer_violations = violations;
    Ok(report)
}

/// Utility of one candidate by refitting with each hypothetical label.
/// Also returns the number of evaluation points whose gain fell below
/// `-1e-6`, which exact inference would rule out.
pub fn ro_utility(
    model: &GpcModel,
    candidate: &[f64],
    eval: &[&[f64]],
    form: UtilityForm,
    k: f64,
) -> Result<(f64, usize)> {
    let p_star = model.predict(candidate)?;
    let current: Vec<f64> = eval.iter().map(|x| model.predict(x)).collect::<Result<_>>()?;
    let mut conditional = vec![[0.0; 2]; eval.len()];
    for (j, y) in [(0usize, -1.0), (1usize, 1.0)] {
        let refit = model.retrain_with(candidate, y)?;
        for (s, x) in eval.iter().enumerate() {
            conditional[s][j] = refit.predict(x)?;
        }
    }
    let mut total = 0.0;
    let mut violations = 0;
    for (s, &p_s) in current.iter().enumerate() {
        let g = point_gain(form, k, p_s, p_star, conditional[s]);
        if point_gain(UtilityForm::Max, k, p_s, p_star, conditional[s]) < -EER_SLACK {
            violations += 1;
        }
        total += g;
    }
    if violations > 0 {
        tracing::debug!(violations, "refit gains below zero");
    }
    Ok((total / eval.len() as f64, violations))
}

/// Inclusion probabilities proportional to `weights` for a fixed-size
/// sample of `m` items, capped at one.
pub fn inclusion_probabilities(weights: &[f64], m: usize) -> Vec<f64> {
    let n = weights.len();
    let m = m.min(n);
    if m == n {
        return vec![1.0; n];
    }
    let mut pi = vec![0.0; n];
    let mut capped = vec![false; n];
    let mut remaining = m as f64;
    loop {
        let mass: f64 = (0..n).filter(|&i| !capped[i]).map(|i| weights[i]).sum();
        if mass <= 0.0 {
            break;
        }
        let mut changed = false;
        for i in 0..n {
            if !capped[i] {
                pi[i] = remaining * weights[i] / mass;
                if pi[i] >= 1.0 {
                    pi[i] = 1.0;
                    capped[i] = true;
                    remaining -= 1.0;
                    changed = true;
                }
            }
        }
        if !changed || remaining <= 0.0 {
            break;
        }
    }
    pi
}

/// Systematic sampling with the given inclusion probabilities over a
/// shuffled order. Every item is drawn at most once and item `i` is drawn
/// with probability `pi[i]`.
pub fn systematic_sample<R: Rng>(pi: &[f64], rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pi.len()).collect();
    order.shuffle(rng);
    let u: f64 = rng.random();
    let mut out = Vec::new();
    let mut cum = 0.0;
    let mut next = u;
    for &i in &order {
        let lo = cum;
        cum += pi[i];
        if pi[i] >= 1.0 {
            out.push(i);
            next += 1.0;
            continue;
        }
        if next >= lo && next < cum {
            out.push(i);
            next += 1.0;
        }
    }
    out.sort_unstable();
    out
}

/// Cached latent moments of every pool point under the current model.
pub struct PoolLatents {
    latents: Vec<LatentPoint>,
    probs: Vec<f64>,
}

impl PoolLatents {
    pub fn new(model: &GpcModel, pool: &[Vec<f64>]) -> Result<Self> {
        let latents: Vec<LatentPoint> = pool.par_iter().map(|x| model.latent(x)).collect();
        let probs = latents.iter().map(|l| l.probability()).collect::<Result<_>>()?;
        Ok(Self { latents, probs })
    }
}

/// Outcome of scoring one candidate with the joint-predictive route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointUtility {
    pub utility: f64,
    pub isolated: bool,
}

/// Importance-sampled utility of pool point `candidate` without refitting.
pub fn joint_utility(
    model: &GpcModel,
    pool: &[Vec<f64>],
    cache: &PoolLatents,
    candidate: usize,
    m2: usize,
    form: UtilityForm,
    k: f64,
    seed: u64,
) -> Result<JointUtility> {
    let x_star = &pool[candidate];
    let weights: Vec<f64> = pool.iter().map(|x| model.kernel.eval(x, x_star)).collect();
    let mass: f64 = weights.iter().sum();
    if mass < MIN_KERNEL_MASS {
        return Ok(JointUtility {
            utility: 0.0,
            isolated: true,
        });
    }
    let pi = inclusion_probabilities(&weights, m2);
    let mut rng = seeds::stream(seed, &[STREAM_IMPORTANCE, candidate as u64]);
    let chosen = systematic_sample(&pi, &mut rng);
    let star = &cache.latents[candidate];
    let p_star = cache.probs[candidate];
    let n = pool.len() as f64;
    let mut total = 0.0;
    for s in chosen {
        let ls = &cache.latents[s];
        let cross = model.latent_cross_cov(&pool[s], ls, x_star, star);
        let joint = joint_from_latent(ls.mean, ls.variance, star.mean, star.variance, cross)?;
        let weights_star = [1.0 - p_star, p_star];
        let mut conditional = [0.0; 2];
        for j in 0..2 {
            if weights_star[j] >= MIN_LABEL_PROB {
                conditional[j] = joint.get(1, j) / weights_star[j];
            }
        }
        let g = point_gain(form, k, cache.probs[s], p_star, conditional);
        // Horvitz–Thompson weight p(x_s)/π_s with uniform p(x_s) = 1/N
        total += g / (n * pi[s]);
    }
    Ok(JointUtility {
        utility: total,
        isolated: false,
    })
}

fn acquire_joint(
    model: &GpcModel,
    pool: &[Vec<f64>],
    config: &AcquisitionConfig,
    form: UtilityForm,
) -> Result<UtilityReport> {
    check_pool(model, pool)?;
    let start = Instant::now();
    let candidates = uniform_candidates(pool.len(), config.m1, config.seed, STREAM_CANDIDATES);
    let cache = PoolLatents::new(model, pool)?;
    let scored = candidates
        .par_iter()
        .map(|&c| joint_utility(model, pool, &cache, c, config.m2, form, config.softmax_k, config.seed))
        .collect::<Result<Vec<_>>>()?;
    let isolated = scored.iter().filter(|s| s.isolated).count();
    let utilities = scored.iter().map(|s| s.utility).collect();
    let mut report = UtilityReport::from_utilities(candidates, utilities, start);
    report.isolated = isolated;
    Ok(report)
}

pub fn acquire_alu(model: &GpcModel, pool: &[Vec<f64>], config: &AcquisitionConfig) -> Result<UtilityReport> {
    acquire_joint(model, pool, config, UtilityForm::Max)
}

pub fn acquire_salu(model: &GpcModel, pool: &[Vec<f64>], config: &AcquisitionConfig) -> Result<UtilityReport> {
    acquire_joint(model, pool, config, UtilityForm::Soft)
}

pub fn acquire(model: &GpcModel, pool: &[Vec<f64>], config: &AcquisitionConfig) -> Result<UtilityReport> {
    match config.strategy {
        Strategy::Random => acquire_random(pool, config),
        Strategy::Mes => acquire_mes(model, pool, config),
        Strategy::Bald => acquire_bald(model, pool, config),
        Strategy::Ro => acquire_ro(model, pool, config),
        Strategy::Alu => acquire_alu(model, pool, config),
        Strategy::Salu => acquire_salu(model, pool, config),
    }
}

/// Per-dimension z-scoring fitted on the labeled pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(xs: &[Vec<f64>]) -> Self {
        let d = xs.first().map_or(0, |x| x.len());
        let n = xs.len() as f64;
        let mut mean = vec![0.0; d];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for x in xs {
            for ((s, v), m) in scale.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for (s, m) in scale.iter_mut().zip(&mean) {
            let sd = s.sqrt();
            // constant dimension: only centre it
            *s = if sd > 1e-12 * m.abs().max(1e-300) { sd } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply_all(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.apply(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelPolicy {
    Fixed { signal_variance: f64, lengthscale: f64 },
    /// Grid-search on the initial labeled pool, then keep.
    #[default]
    FitOnce,
    /// Grid-search every iteration.
    FitEachIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub acquisition: AcquisitionConfig,
    pub ep: EpOptions,
    pub grid: HyperGrid,
    pub kernel_policy: KernelPolicy,
    pub standardize: bool,
    pub iterations: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            acquisition: AcquisitionConfig::default(),
            ep: EpOptions::default(),
            grid: HyperGrid::default(),
            kernel_policy: KernelPolicy::FitOnce,
            standardize: true,
            iterations: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub labeled: usize,
    pub error_rate: f64,
    pub fit_seconds: f64,
    pub acquisition_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub model: GpcModel,
    pub kernel: Kernel,
    pub curve: Vec<IterationRecord>,
}

/// A loop that stopped early, with the records gathered before the failure.
#[derive(Debug, Clone)]
pub struct LoopFailure {
    pub error: Error,
    pub curve: Vec<IterationRecord>,
}

/// Labeled test fingerprints used to trace the error rate.
#[derive(Debug, Clone, Default)]
pub struct TestSet {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Identity>,
}

fn labels_to_signs(ys: &[Identity]) -> Vec<f64> {
    ys.iter().map(|y| y.sign()).collect()
}

/// Fit, evaluate, query and move, `iterations` times. The curve has one
/// record for the initial model plus one per query.
pub fn egpc_loop(
    pools: &mut Pools,
    oracle: &mut dyn LabelOracle,
    test: &TestSet,
    config: &LoopConfig,
) -> std::result::Result<LoopOutcome, LoopFailure> {
    let fail = |error: Error, curve: &Vec<IterationRecord>| LoopFailure {
        error,
        curve: curve.clone(),
    };
    let mut curve = Vec::with_capacity(config.iterations + 1);
    if let Err(e) = config.acquisition.validate() {
        return Err(fail(e, &curve));
    }
    if !pools.has_both_classes() {
        return Err(fail(
            Error::InvalidInput("labeled pool needs both identities".into()),
            &curve,
        ));
    }
    if config.iterations > pools.unlabeled.x.len() {
        return Err(fail(
            Error::PoolExhausted {
                iterations: pools.unlabeled.x.len(),
            },
            &curve,
        ));
    }
    let test_truth: Vec<u8> = test.y.iter().map(|y| y.class()).collect();
    let mut kernel = match config.kernel_policy {
        KernelPolicy::Fixed {
            signal_variance,
            lengthscale,
        } => match Kernel::new(signal_variance, lengthscale) {
            Ok(k) => Some(k),
            Err(e) => return Err(fail(e, &curve)),
        },
        _ => None,
    };
    let mut last_model = None;

    for t in 0..=config.iterations {
        let fit_start = Instant::now();
        let scaler = if config.standardize {
            Standardizer::fit(&pools.labeled.x)
        } else {
            Standardizer::identity(pools.labeled.x[0].len())
        };
        let train_x = scaler.apply_all(&pools.labeled.x);
        let train_y = labels_to_signs(&pools.labeled.y);
        let needs_fit = matches!(config.kernel_policy, KernelPolicy::FitEachIteration) || kernel.is_none();
        if needs_fit {
            match fit_hyperparameters(&train_x, &train_y, &config.grid, config.ep) {
                Ok(k) => kernel = Some(k),
                Err(e) => return Err(fail(e, &curve)),
            }
        }
        let k = kernel.expect("kernel chosen above");
        let model = match crate::gpc::ep_fit(train_x, train_y, k, config.ep) {
            Ok(m) => m,
            Err(e) => return Err(fail(e, &curve)),
        };
        let fit_seconds = fit_start.elapsed().as_secs_f64();

        let predicted: std::result::Result<Vec<u8>, Error> = test
            .x
            .iter()
            .map(|x| model.predict_label(&scaler.apply(x)))
            .collect();
        let error_rate = match predicted.and_then(|p| compute_error_rate(&test_truth, &p)) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, &curve)),
        };

        let mut acquisition_seconds = 0.0;
        if t < config.iterations {
            let pool_x = scaler.apply_all(&pools.unlabeled.x);
            let mut acq = config.acquisition;
            acq.seed = seeds::derive_seed(config.acquisition.seed, &[t as u64]);
            let report = match acquire(&model, &pool_x, &acq) {
                Ok(r) => r,
                Err(e) => return Err(fail(e, &curve)),
            };
            acquisition_seconds = report.seconds;
            let idx = report.chosen_pool_index();
            let id = pools.unlabeled.ids[idx];
            let label = match oracle.query(id, &pools.unlabeled.x[idx]) {
                Ok(l) => l,
                Err(e) => return Err(fail(e, &curve)),
            };
            if let Err(e) = pools.move_to_labeled(idx, label) {
                return Err(fail(e, &curve));
            }
        }
        curve.push(IterationRecord {
            iteration: t,
            labeled: model.len(),
            error_rate,
            fit_seconds,
            acquisition_seconds,
        });
        last_model = Some(model);
    }
    Ok(LoopOutcome {
        model: last_model.expect("at least one iteration"),
        kernel: kernel.expect("kernel chosen"),
        curve,
    })
}
