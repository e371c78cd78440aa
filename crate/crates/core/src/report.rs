//! Figure tables: one delimited file per figure, with the swept variable in
//! the first column and mean/std columns per strategy.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::active::Strategy;
use crate::channel::write_atomic;
use crate::error::{Error, Result};
use crate::experiment::{
    read_csv, CurveRow, ExperimentConfig, TimingRow, CONFIG_FILE, CURVES_FILE, TIMING_FILE,
};
use crate::metrics::mean_std;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Figure {
    /// Error rate against iteration.
    Fig4,
    /// Final error rate with and without the IRS.
    Fig5,
    /// Final error rate against the common IRS phase.
    Fig6,
    /// Final error rate against the number of IRS columns.
    Fig7,
    /// Final error rate and error difference against CSI error variance.
    Fig8,
    /// Cumulative fit plus acquisition time against iteration.
    Fig9,
}

impl Figure {
    pub const ALL: [Figure; 6] = [
        Figure::Fig4,
        Figure::Fig5,
        Figure::Fig6,
        Figure::Fig7,
        Figure::Fig8,
        Figure::Fig9,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::Fig8 => "fig8",
            Figure::Fig9 => "fig9",
        }
    }

    fn x_column(self) -> &'static str {
        match self {
            Figure::Fig4 | Figure::Fig9 => "iteration",
            Figure::Fig5 => "irs",
            Figure::Fig6 => "theta",
            Figure::Fig7 => "nz",
            Figure::Fig8 => "sigma2",
        }
    }

    fn needed_sweep(self) -> Option<&'static str> {
        match self {
            Figure::Fig4 | Figure::Fig9 => None,
            Figure::Fig5 => Some("mode"),
            Figure::Fig6 => Some("phase"),
            Figure::Fig7 => Some("nz"),
            Figure::Fig8 => Some("csi-variance"),
        }
    }
}

impl std::fmt::Display for Figure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Figure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown figure '{s}' (expected fig4..fig9)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureTable {
    pub figure: Figure,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FigureTable {
    pub fn to_csv(&self, config_hash: &str) -> Result<String> {
        let mut out = format!("# egpc {}\n# config_sha256={config_hash}\n", self.figure).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for r in &self.rows {
                w.write_record(r.iter().map(f64::to_string))?;
            }
            w.flush()?;
        }
        String::from_utf8(out).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_csv(figure: Figure, text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let row = rec?
                .iter()
                .map(|v| v.parse::<f64>().map_err(|e| Error::Format(format!("{v}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { figure, columns, rows })
    }
}

fn strategies_in<'a>(order: impl Iterator<Item = &'a Strategy>) -> Vec<Strategy> {
    let mut out: Vec<Strategy> = Vec::new();
    for &s in order {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn stat_columns(x: &str, what: &str, strategies: &[Strategy]) -> Vec<String> {
    let mut cols = vec![x.to_owned()];
    for s in strategies {
        cols.push(format!("mean_{what}_{s}"));
        cols.push(format!("std_{what}_{s}"));
    }
    cols
}

/// Per-x, per-strategy samples to a table of mean/std columns.
fn tabulate(
    figure: Figure,
    what: &str,
    strategies: &[Strategy],
    samples: &BTreeMap<(OrdF64, Strategy), Vec<f64>>,
    xs: &[f64],
) -> FigureTable {
    let rows = xs
        .iter()
        .map(|&x| {
            let mut row = vec![x];
            for &s in strategies {
                let (m, sd) = samples
                    .get(&(OrdF64(x), s))
                    .map_or((f64::NAN, f64::NAN), |v| mean_std(v));
                row.push(m);
                row.push(sd);
            }
            row
        })
        .collect();
    FigureTable {
        figure,
        columns: stat_columns(figure.x_column(), what, strategies),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

fn first_seen(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.iter().any(|o| o.total_cmp(&v).is_eq()) {
            out.push(v);
        }
    }
    out
}

/// Build one figure's table from result rows. Sweep figures use the last
/// recorded iteration of each run.
pub fn figure_table(
    config: &ExperimentConfig,
    curves: &[CurveRow],
    timing: &[TimingRow],
    figure: Figure,
) -> Result<FigureTable> {
    if let Some(needed) = figure.needed_sweep() {
        if config.sweep.name() != needed {
            return Err(Error::MissingSweep {
                figure: figure.to_string(),
                needed: needed.into(),
            });
        }
    }
    let strategies = strategies_in(curves.iter().map(|r| &r.strategy).chain(timing.iter().map(|r| &r.strategy)));
    match figure {
        Figure::Fig4 => {
            // The first condition: the only one for an unswept run.
            let cond = curves.first().map(|r| r.condition.clone()).unwrap_or_default();
            let mut samples: BTreeMap<_, Vec<f64>> = BTreeMap::new();
            for r in curves.iter().filter(|r| r.condition == cond) {
                samples
                    .entry((OrdF64(r.iteration as f64), r.strategy))
                    .or_default()
                    .push(r.error_rate);
            }
            let mut xs = first_seen(curves.iter().filter(|r| r.condition == cond).map(|r| r.iteration as f64));
            xs.sort_by(f64::total_cmp);
            Ok(tabulate(figure, "Re", &strategies, &samples, &xs))
        }
        Figure::Fig9 => {
            let cond = timing.first().map(|r| r.condition.clone()).unwrap_or_default();
            let mut cumulative: BTreeMap<(usize, Strategy), f64> = BTreeMap::new();
            let mut samples: BTreeMap<_, Vec<f64>> = BTreeMap::new();
            for r in timing.iter().filter(|r| r.condition == cond) {
                let c = cumulative.entry((r.run, r.strategy)).or_insert(0.0);
                *c += r.fit_seconds + r.acquisition_seconds;
                samples
                    .entry((OrdF64(r.iteration as f64), r.strategy))
                    .or_default()
                    .push(*c);
            }
            let mut xs = first_seen(timing.iter().filter(|r| r.condition == cond).map(|r| r.iteration as f64));
            xs.sort_by(f64::total_cmp);
            Ok(tabulate(figure, "time", &strategies, &samples, &xs))
        }
        _ => {
            let mut last: BTreeMap<(String, usize, Strategy), &CurveRow> = BTreeMap::new();
            for r in curves {
                let e = last.entry((r.condition.clone(), r.run, r.strategy)).or_insert(r);
                if r.iteration >= e.iteration {
                    *e = r;
                }
            }
            let mut samples: BTreeMap<_, Vec<f64>> = BTreeMap::new();
            for r in last.values() {
                samples.entry((OrdF64(r.value), r.strategy)).or_default().push(r.error_rate);
            }
            let xs = first_seen(curves.iter().map(|r| r.value));
            let mut table = tabulate(figure, "Re", &strategies, &samples, &xs);
            if figure == Figure::Fig8 {
                add_error_difference(&mut table, &last, &strategies);
            }
            Ok(table)
        }
    }
}

/// Append mean/std of the matched final-iteration error difference against
/// the σ² = 0 condition.
fn add_error_difference(
    table: &mut FigureTable,
    last: &BTreeMap<(String, usize, Strategy), &CurveRow>,
    strategies: &[Strategy],
) {
    let baseline: BTreeMap<(usize, Strategy), &CurveRow> = last
        .values()
        .filter(|r| r.value == 0.0)
        .map(|r| ((r.run, r.strategy), *r))
        .collect();
    let mut diffs: BTreeMap<(OrdF64, Strategy), Vec<f64>> = BTreeMap::new();
    for r in last.values() {
        if let Some(b) = baseline.get(&(r.run, r.strategy)) {
            if b.iteration == r.iteration {
                diffs
                    .entry((OrdF64(r.value), r.strategy))
                    .or_default()
                    .push(r.error_rate - b.error_rate);
            }
        }
    }
    for &s in strategies {
        table.columns.push(format!("mean_De_{s}"));
        table.columns.push(format!("std_De_{s}"));
    }
    for row in &mut table.rows {
        let x = row[0];
        for &s in strategies {
            let (m, sd) = diffs.get(&(OrdF64(x), s)).map_or((f64::NAN, f64::NAN), |v| mean_std(v));
            row.push(m);
            row.push(sd);
        }
    }
}

/// Read a result directory and write the requested figure tables into
/// `out`. Returns the written paths.
pub fn emit_plot_data(results: &Path, figures: &[Figure], out: &Path) -> Result<Vec<PathBuf>> {
    let config = ExperimentConfig::load(&results.join(CONFIG_FILE))?;
    let curves_text = std::fs::read_to_string(results.join(CURVES_FILE))?;
    let hash = crate::experiment::config_hash_of(&curves_text).unwrap_or_else(|| config.hash());
    let curves: Vec<CurveRow> = crate::experiment::from_csv(&curves_text)?;
    let timing: Vec<TimingRow> = if figures.contains(&Figure::Fig9) {
        read_csv(&results.join(TIMING_FILE))?
    } else {
        Vec::new()
    };
    let tables = figures
        .iter()
        .map(|&f| figure_table(&config, &curves, &timing, f))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for t in tables {
        let path = out.join(format!("{}.csv", t.figure));
        write_atomic(&path, t.to_csv(&hash)?.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Figures the result's sweep can support.
pub fn available_figures(config: &ExperimentConfig) -> Vec<Figure> {
    Figure::ALL
        .into_iter()
        .filter(|f| f.needed_sweep().is_none_or(|s| s == config.sweep.name()))
        .collect()
}
