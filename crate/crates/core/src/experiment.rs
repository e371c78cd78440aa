//! Configuration-driven experiment protocol: generate matched datasets per
//! run, run the query loop for each strategy under each condition of the
//! sweep, aggregate error-rate curves and write delimited result tables.
//!
//! Seeds are derived from the master seed by path, so every (run,
//! condition, strategy) cell is reproducible on its own and independent of
//! thread scheduling. Datasets and initial labels depend only on the run,
//! which pairs conditions sample by sample.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::active::{
    egpc_loop, AcquisitionConfig, IterationRecord, KernelPolicy, LoopConfig, Pools, SimulatedOracle, Strategy, TestSet,
    UtilityForm,
};
use crate::channel::{generate_dataset, write_atomic, ChannelScenario, FingerprintDataset, Mode};
use crate::error::{Error, Result};
use crate::gpc::{EpOptions, HyperGrid};
use crate::identity::Identity;
use crate::metrics::{compute_error_difference, mean_std};
use crate::seeds;

const SEED_DATASET: u64 = 0;
const SEED_INITIAL: u64 = 1;
const SEED_ACQUISITION: u64 = 2;
const SEED_EP: u64 = 3;

pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DE_FILE: &str = "de.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const FAILURES_FILE: &str = "failures.json";
pub const CONFIG_FILE: &str = "experiment.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSettings {
    pub m1: usize,
    pub m2: usize,
    pub softmax_k: f64,
    pub ro_utility: UtilityForm,
}

impl Default for AcquisitionSettings {
    fn default() -> Self {
        let d = AcquisitionConfig::default();
        Self {
            m1: d.m1,
            m2: d.m2,
            softmax_k: d.softmax_k,
            ro_utility: d.ro_utility,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub kernel_policy: KernelPolicy,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    pub standardize: bool,
    pub ep_tol: f64,
    pub ep_max_sweeps: usize,
    pub ep_damping: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let ep = EpOptions::default();
        Self {
            kernel_policy: KernelPolicy::FitOnce,
            grid_min: 0.1,
            grid_max: 100.0,
            grid_points: 7,
            standardize: true,
            ep_tol: ep.tol,
            ep_max_sweeps: ep.max_sweeps,
            ep_damping: ep.damping,
        }
    }
}

/// Which scenario parameter varies across conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sweep {
    #[default]
    None,
    /// IRS and non-IRS environments.
    Mode,
    /// Common phase of every IRS element; empty means 32 values over [0, 2π).
    Phase {
        #[serde(default)]
        values: Vec<f64>,
    },
    /// Number of IRS columns.
    Nz { values: Vec<usize> },
    /// CSI error variance applied to both `H` and `G`. The perfect-CSI
    /// condition is always run first as the baseline.
    CsiVariance { values: Vec<f64> },
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::Mode => "mode",
            Sweep::Phase { .. } => "phase",
            Sweep::Nz { .. } => "nz",
            Sweep::CsiVariance { .. } => "csi-variance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub runs: usize,
    pub iterations: usize,
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub initial_per_class: usize,
    pub strategies: Vec<Strategy>,
    /// Worker threads for runs; 0 uses every core.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub scenario: ChannelScenario,
    pub acquisition: AcquisitionSettings,
    pub model: ModelSettings,
    pub sweep: Sweep,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            runs: 20,
            iterations: 50,
            per_class_train: 800,
            per_class_test: 200,
            initial_per_class: 1,
            strategies: Strategy::ALL.to_vec(),
            threads: 0,
            output_dir: PathBuf::from("results"),
            scenario: ChannelScenario::default(),
            acquisition: AcquisitionSettings::default(),
            model: ModelSettings::default(),
            sweep: Sweep::None,
        }
    }
}

/// Line of the first `key =` assignment in `text`, for error messages.
fn locate(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate().map_err(|e| match e {
            Error::Config(msg) => {
                let key = msg.split_whitespace().next().unwrap_or("");
                let leaf = key.rsplit('.').next().unwrap_or(key);
                match locate(text, leaf) {
                    Some(line) => Error::Config(format!("line {line}: {msg}")),
                    None => Error::Config(msg),
                }
            }
            other => other,
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Digest of everything that determines the results; the output
    /// directory and thread count are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.threads = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.initial_per_class == 0 {
            return bad("initial_per_class must be at least 1".into());
        }
        if self.per_class_train == 0 || self.per_class_test == 0 {
            return bad("per_class_train and per_class_test must be at least 1".into());
        }
        if self.initial_per_class > self.per_class_train {
            return bad(format!(
                "initial_per_class {} exceeds per_class_train {}",
                self.initial_per_class, self.per_class_train
            ));
        }
        let pool = 2 * (self.per_class_train - self.initial_per_class);
        if self.iterations > pool {
            return bad(format!("iterations {} exceed the unlabeled pool of {pool}", self.iterations));
        }
        if self.strategies.is_empty() {
            return bad("strategies must list at least one strategy".into());
        }
        let mut seen = self.strategies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.strategies.len() {
            return bad("strategies must not repeat".into());
        }
        if self.acquisition.m1 == 0 || self.acquisition.m2 == 0 {
            return bad("m1 and m2 must be at least 1".into());
        }
        if !(self.acquisition.softmax_k > 0.0 && self.acquisition.softmax_k.is_finite()) {
            return bad(format!("softmax_k {} must be finite and positive", self.acquisition.softmax_k));
        }
        let m = &self.model;
        if !(m.grid_min > 0.0 && m.grid_max >= m.grid_min && m.grid_points >= 1) {
            return bad("grid_min must be positive, grid_max at least grid_min and grid_points at least 1".into());
        }
        if !(m.ep_damping > 0.0 && m.ep_damping <= 1.0) {
            return bad(format!("ep_damping {} outside (0, 1]", m.ep_damping));
        }
        if !(m.ep_tol > 0.0) || m.ep_max_sweeps == 0 {
            return bad("ep_tol must be positive and ep_max_sweeps at least 1".into());
        }
        match &self.sweep {
            Sweep::Phase { values } if values.iter().any(|v| !v.is_finite()) => {
                return bad("values of the phase sweep must be finite".into());
            }
            Sweep::Nz { values } if values.is_empty() || values.contains(&0) => {
                return bad("values of the nz sweep must be non-empty and at least 1".into());
            }
            Sweep::CsiVariance { values } if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) => {
                return bad("values of the csi-variance sweep must be non-negative".into());
            }
            _ => {}
        }
        self.scenario.validate()?;
        for c in self.conditions() {
            c.scenario.validate()?;
        }
        Ok(())
    }

    pub fn conditions(&self) -> Vec<ConditionSpec> {
        let base = &self.scenario;
        let with = |label: String, value: f64, f: &dyn Fn(&mut ChannelScenario)| {
            let mut scenario = base.clone();
            f(&mut scenario);
            ConditionSpec { label, value, scenario }
        };
        match &self.sweep {
            Sweep::None => vec![with("base".into(), 0.0, &|_| {})],
            Sweep::Mode => vec![
                with("irs".into(), 1.0, &|s| s.mode = Mode::Irs),
                with("non-irs".into(), 0.0, &|s| s.mode = Mode::NonIrs),
            ],
            Sweep::Phase { values } => {
                let values = if values.is_empty() {
                    (0..32).map(|i| 2.0 * PI * i as f64 / 32.0).collect()
                } else {
                    values.clone()
                };
                values
                    .into_iter()
                    .map(|t| {
                        with(format!("theta={t}"), t, &|s| {
                            s.irs.theta = t;
                            s.irs.phases.clear();
                        })
                    })
                    .collect()
            }
            Sweep::Nz { values } => values
                .iter()
                .map(|&n| with(format!("nz={n}"), n as f64, &|s| s.geometry.n_z = n))
                .collect(),
            Sweep::CsiVariance { values } => {
                let mut out = vec![with("sigma2=0".into(), 0.0, &|s| {
                    s.fading.csi_sigma2_h = 0.0;
                    s.fading.csi_sigma2_g = 0.0;
                })];
                for &v in values.iter().filter(|v| **v > 0.0) {
                    out.push(with(format!("sigma2={v}"), v, &|s| {
                        s.fading.csi_sigma2_h = v;
                        s.fading.csi_sigma2_g = v;
                    }));
                }
                out
            }
        }
    }

    fn loop_config(&self, strategy: Strategy, run: u64) -> LoopConfig {
        let m = &self.model;
        LoopConfig {
            acquisition: AcquisitionConfig {
                strategy,
                m1: self.acquisition.m1,
                m2: self.acquisition.m2,
                softmax_k: self.acquisition.softmax_k,
                seed: seeds::derive_seed(self.seed, &[run, SEED_ACQUISITION, strategy.id()]),
                ro_utility: self.acquisition.ro_utility,
            },
            ep: EpOptions {
                tol: m.ep_tol,
                max_sweeps: m.ep_max_sweeps,
                damping: m.ep_damping,
                seed: seeds::derive_seed(self.seed, &[run, SEED_EP]),
            },
            grid: HyperGrid::square(m.grid_min, m.grid_max, m.grid_points),
            kernel_policy: m.kernel_policy,
            standardize: m.standardize,
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSpec {
    pub label: String,
    /// Numeric value of the swept parameter.
    pub value: f64,
    pub scenario: ChannelScenario,
}

/// One strategy's learning curve in one run under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCurve {
    pub condition: usize,
    pub run: usize,
    pub strategy: Strategy,
    pub records: Vec<IterationRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub condition: String,
    pub value: f64,
    pub run: usize,
    pub strategy: Strategy,
    pub iteration: usize,
    pub labeled: usize,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub condition: String,
    pub value: f64,
    pub run: usize,
    pub strategy: Strategy,
    pub iteration: usize,
    pub fit_seconds: f64,
    pub acquisition_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition: String,
    pub value: f64,
    pub strategy: Strategy,
    pub iteration: usize,
    pub runs: usize,
    pub mean_error_rate: f64,
    pub std_error_rate: f64,
}

/// Final-iteration error difference of one matched perfect/imperfect pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeRow {
    pub sigma2: f64,
    pub strategy: Strategy,
    pub run: usize,
    pub iteration: usize,
    pub error_rate_perfect: f64,
    pub error_rate_imperfect: f64,
    pub error_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub condition: String,
    pub run: usize,
    pub strategy: Strategy,
    pub completed_iterations: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub conditions: Vec<ConditionSpec>,
    pub curves: Vec<RunCurve>,
}

impl ExperimentResult {
    pub fn curve_rows(&self) -> Vec<CurveRow> {
        self.curves
            .iter()
            .flat_map(|c| {
                let cond = &self.conditions[c.condition];
                c.records.iter().map(move |r| CurveRow {
                    condition: cond.label.clone(),
                    value: cond.value,
                    run: c.run,
                    strategy: c.strategy,
                    iteration: r.iteration,
                    labeled: r.labeled,
                    error_rate: r.error_rate,
                })
            })
            .collect()
    }

    pub fn timing_rows(&self) -> Vec<TimingRow> {
        self.curves
            .iter()
            .flat_map(|c| {
                let cond = &self.conditions[c.condition];
                c.records.iter().map(move |r| TimingRow {
                    condition: cond.label.clone(),
                    value: cond.value,
                    run: c.run,
                    strategy: c.strategy,
                    iteration: r.iteration,
                    fit_seconds: r.fit_seconds,
                    acquisition_seconds: r.acquisition_seconds,
                })
            })
            .collect()
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        summarize(&self.curve_rows())
    }

    /// Matched final-iteration differences against the perfect-CSI baseline.
    /// Empty unless the sweep is over CSI error variance.
    pub fn error_differences(&self) -> Vec<DeRow> {
        let baseline: BTreeMap<(usize, Strategy), &RunCurve> = self
            .curves
            .iter()
            .filter(|c| c.condition == 0 && c.error.is_none())
            .map(|c| ((c.run, c.strategy), c))
            .collect();
        let csi = self
            .conditions
            .first()
            .is_some_and(|c| c.label.starts_with("sigma2="));
        if !csi {
            return Vec::new();
        }
        let mut rows = Vec::new();
        for c in self.curves.iter().filter(|c| c.condition > 0 && c.error.is_none()) {
            let Some(base) = baseline.get(&(c.run, c.strategy)) else {
                continue;
            };
            let (Some(p), Some(i)) = (base.records.last(), c.records.last()) else {
                continue;
            };
            if p.iteration != i.iteration {
                continue;
            }
            rows.push(DeRow {
                sigma2: self.conditions[c.condition].value,
                strategy: c.strategy,
                run: c.run,
                iteration: i.iteration,
                error_rate_perfect: p.error_rate,
                error_rate_imperfect: i.error_rate,
                error_difference: compute_error_difference(i.error_rate, p.error_rate),
            });
        }
        rows
    }

    pub fn failures(&self) -> Vec<FailureRecord> {
        self.curves
            .iter()
            .filter_map(|c| {
                c.error.as_ref().map(|e| FailureRecord {
                    condition: self.conditions[c.condition].label.clone(),
                    run: c.run,
                    strategy: c.strategy,
                    completed_iterations: c.records.len(),
                    error: e.clone(),
                })
            })
            .collect()
    }
}

/// Mean and sample standard deviation across runs per
/// (condition, strategy, iteration), in first-seen order.
pub fn summarize(rows: &[CurveRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, Strategy, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, Strategy, usize), (f64, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let key = (r.condition.clone(), r.strategy, r.iteration);
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (r.value, Vec::new())
        });
        entry.1.push(r.error_rate);
    }
    order
        .into_iter()
        .map(|key| {
            let (value, errors) = &groups[&key];
            let (mean, std) = mean_std(errors);
            SummaryRow {
                condition: key.0,
                value: *value,
                strategy: key.1,
                iteration: key.2,
                runs: errors.len(),
                mean_error_rate: mean,
                std_error_rate: std,
            }
        })
        .collect()
}

/// Labeled/unlabeled split for one run: `initial_per_class` random training
/// samples per identity start labeled.
fn initial_pools(dataset: &FingerprintDataset, initial_per_class: usize, seed: u64) -> Pools {
    let mut rng = seeds::stream(seed, &[]);
    let mut chosen = Vec::new();
    for id in [Identity::Alice, Identity::Eve] {
        let mut idx: Vec<usize> = (0..dataset.train.len())
            .filter(|&i| dataset.train[i].identity == id)
            .collect();
        idx.shuffle(&mut rng);
        chosen.extend_from_slice(&idx[..initial_per_class]);
    }
    let mut pools = Pools::default();
    for &i in &chosen {
        pools.labeled.x.push(dataset.train[i].vector.clone());
        pools.labeled.y.push(dataset.train[i].identity);
    }
    for (i, s) in dataset.train.iter().enumerate() {
        if !chosen.contains(&i) {
            pools.unlabeled.x.push(s.vector.clone());
            pools.unlabeled.ids.push(i);
        }
    }
    pools
}

/// Every configured strategy on one dataset.
fn run_cell(config: &ExperimentConfig, condition: usize, spec: &ConditionSpec, run: usize) -> Vec<RunCurve> {
    let r = run as u64;
    let dataset = match generate_dataset(
        &spec.scenario,
        config.per_class_train,
        config.per_class_test,
        seeds::derive_seed(config.seed, &[r, SEED_DATASET]),
    ) {
        Ok(d) => d,
        Err(e) => {
            return config
                .strategies
                .iter()
                .map(|&strategy| RunCurve {
                    condition,
                    run,
                    strategy,
                    records: Vec::new(),
                    error: Some(e.to_string()),
                })
                .collect();
        }
    };
    let initial = initial_pools(
        &dataset,
        config.initial_per_class,
        seeds::derive_seed(config.seed, &[r, SEED_INITIAL]),
    );
    let truth: Vec<Identity> = dataset.train.iter().map(|s| s.identity).collect();
    let test = TestSet {
        x: dataset.test.iter().map(|s| s.vector.clone()).collect(),
        y: dataset.test.iter().map(|s| s.identity).collect(),
    };
    config
        .strategies
        .iter()
        .map(|&strategy| {
            let mut pools = initial.clone();
            let mut oracle = SimulatedOracle::new(truth.clone());
            let outcome = egpc_loop(&mut pools, &mut oracle, &test, &config.loop_config(strategy, r));
            let (records, error) = match outcome {
                Ok(o) => (o.curve, None),
                Err(f) => {
                    tracing::warn!(run, strategy = %strategy, condition = %spec.label, error = %f.error, "run failed");
                    (f.curve, Some(f.error.to_string()))
                }
            };
            RunCurve {
                condition,
                run,
                strategy,
                records,
                error,
            }
        })
        .collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let conditions = config.conditions();
    let cells: Vec<(usize, usize)> = (0..config.runs)
        .flat_map(|run| (0..conditions.len()).map(move |c| (c, run)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut curves: Vec<RunCurve> = pool.install(|| {
        cells
            .par_iter()
            .flat_map_iter(|&(c, run)| run_cell(config, c, &conditions[c], run))
            .collect()
    });
    let rank = |s: Strategy| config.strategies.iter().position(|&t| t == s).unwrap_or(usize::MAX);
    curves.sort_by_key(|c| (c.condition, c.run, rank(c.strategy)));
    Ok(ExperimentResult {
        config_hash: config.hash(),
        conditions,
        curves,
    })
}

fn header(config_hash: &str, what: &str) -> String {
    format!("# egpc {what}\n# config_sha256={config_hash}\n")
}

/// Serialize rows to CSV text behind a comment header.
pub fn to_csv<T: Serialize>(config_hash: &str, what: &str, rows: &[T]) -> Result<String> {
    let mut out = header(config_hash, what).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    String::from_utf8(out).map_err(|e| Error::Format(e.to_string()))
}

pub fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    from_csv(&std::fs::read_to_string(path)?)
}

/// Config digest recorded in a result file's header.
pub fn config_hash_of(text: &str) -> Option<String> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# config_sha256=").map(str::to_owned))
}

/// Write every result table into `dir`. Each file is written to a temporary
/// name and renamed, so readers never see a half-written table.
pub fn write_results(result: &ExperimentResult, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let h = &result.config_hash;
    write_atomic(&dir.join(CONFIG_FILE), config.to_toml()?.as_bytes())?;
    write_atomic(
        &dir.join(CURVES_FILE),
        to_csv(h, "learning curves", &result.curve_rows())?.as_bytes(),
    )?;
    write_atomic(
        &dir.join(SUMMARY_FILE),
        to_csv(h, "error-rate summary", &result.summary())?.as_bytes(),
    )?;
    let de = result.error_differences();
    if !de.is_empty() {
        write_atomic(&dir.join(DE_FILE), to_csv(h, "error differences", &de)?.as_bytes())?;
    }
    write_atomic(
        &dir.join(TIMING_FILE),
        to_csv(h, "wall-clock timing (not reproducible)", &result.timing_rows())?.as_bytes(),
    )?;
    let failures = result.failures();
    let mut text = serde_json::to_string_pretty(&failures)?;
    text.push('\n');
    write_atomic(&dir.join(FAILURES_FILE), text.as_bytes())?;
    let mut stderr = std::io::stderr();
    if !failures.is_empty() {
        let _ = writeln!(stderr, "{} run(s) failed; see {}", failures.len(), dir.join(FAILURES_FILE).display());
    }
    Ok(())
}
