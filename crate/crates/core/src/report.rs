// SPDX-License-Identifier: Apache-2.0

//! Full runs, sparsity sweeps and the on-disk report bundle.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dump::{read_dump, RepresentationDump, Split, MANIFEST_FILE};
use crate::ensemble::{
    evaluate_ensemble, fit_lambda, EnsembleConfig, DEFAULT_GRID_STEP, DEFAULT_VALIDATION_LIMIT,
};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy, calibration, pair_predictions, CalibrationReport, PredictionPair, Source,
    DEFAULT_CALIBRATION_BINS,
};
use crate::probe::{build_training_set, fit_probe, sparsity, ProbeModel, RegConfig};
use crate::taxonomy::{
    joint_grid, taxonomy_report, Cell, JointGrid, TaxonomyConfig, TaxonomyReport,
};

pub mod figures;

pub const THREADS_ENV: &str = "VERACITY_THREADS";
pub const DEFAULT_L1_SWEEP: [f64; 4] = [0.0, 0.01, 0.03, 0.1];
pub const DEFAULT_GRID_SIZE: usize = 10;

pub const ACCURACY_FILE: &str = "accuracy.json";
pub const CALIBRATION_PROBE_FILE: &str = "calibration_probe.csv";
pub const CALIBRATION_QUERY_FILE: &str = "calibration_query.csv";
pub const TAXONOMY_FILE: &str = "taxonomy.json";
pub const GRID_FILE: &str = "grid.csv";
pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const RUN_META_FILE: &str = "run_meta.json";
pub const PROBE_FILE: &str = "probe.json";
pub const SWEEP_JSON_FILE: &str = "sweep.json";
pub const SWEEP_CSV_FILE: &str = "sweep.csv";

/// Every file [`ReportBundle::write`] produces, and nothing else.
pub const BUNDLE_FILES: [&str; 7] = [
    ACCURACY_FILE,
    CALIBRATION_PROBE_FILE,
    CALIBRATION_QUERY_FILE,
    TAXONOMY_FILE,
    GRID_FILE,
    ENSEMBLE_FILE,
    RUN_META_FILE,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dump_dir: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub reg: RegConfig,
    #[serde(default)]
    pub taxonomy: TaxonomyConfig,
    #[serde(default = "default_bins")]
    pub calibration_bins: usize,
    #[serde(default = "default_grid_step")]
    pub ensemble_grid_step: f64,
    #[serde(default = "default_sweep")]
    pub l1_sweep: Vec<f64>,
    /// Validation examples used to fit lambda, first in canonical order.
    /// `None` uses the whole split.
    #[serde(default = "default_validation_limit")]
    pub validation_limit: Option<usize>,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
}

fn default_bins() -> usize {
    DEFAULT_CALIBRATION_BINS
}

fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP
}

fn default_sweep() -> Vec<f64> {
    DEFAULT_L1_SWEEP.to_vec()
}

fn default_validation_limit() -> Option<usize> {
    Some(DEFAULT_VALIDATION_LIMIT)
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

impl RunConfig {
    pub fn new(dump_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            dump_dir: dump_dir.into(),
            out_dir: out_dir.into(),
            reg: RegConfig::default(),
            taxonomy: TaxonomyConfig::default(),
            calibration_bins: DEFAULT_CALIBRATION_BINS,
            ensemble_grid_step: DEFAULT_GRID_STEP,
            l1_sweep: DEFAULT_L1_SWEEP.to_vec(),
            validation_limit: Some(DEFAULT_VALIDATION_LIMIT),
            grid_size: DEFAULT_GRID_SIZE,
        }
    }

    /// Reads a JSON config; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.dump_dir, &mut config.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.reg.validate()?;
        TaxonomyConfig::new(self.taxonomy.tau)?;
        if self.calibration_bins < 1 {
            return Err(Error::invalid("calibration_bins must be at least 1"));
        }
        if self.grid_size < 1 {
            return Err(Error::invalid("grid_size must be at least 1"));
        }
        if !(self.ensemble_grid_step > 0.0 && self.ensemble_grid_step <= 1.0) {
            return Err(Error::invalid("ensemble_grid_step must lie in (0, 1]"));
        }
        if self.l1_sweep.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("l1_sweep penalties must be nonnegative"));
        }
        if self.validation_limit == Some(0) {
            return Err(Error::invalid("validation_limit must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceAccuracy {
    pub accuracy: f64,
    /// Accuracy in percent, one decimal.
    pub percent: f64,
    pub ece: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAccuracy {
    pub accuracy: f64,
    pub percent: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub split: Split,
    pub test_size: usize,
    pub query: SourceAccuracy,
    pub probe: SourceAccuracy,
    pub ensemble: EnsembleAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub converged: bool,
    pub train_loss: f64,
    pub sparsity: f64,
    pub train_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub dump_manifest_sha256: String,
    pub model_id: String,
    pub dataset_id: String,
    pub hidden_dim: usize,
    pub probe: ProbeSummary,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub accuracy: AccuracySummary,
    pub calibration_probe: CalibrationReport,
    pub calibration_query: CalibrationReport,
    pub taxonomy: TaxonomyReport,
    pub grid: JointGrid,
    pub ensemble: EnsembleConfig,
    pub meta: RunMeta,
}

fn to_pretty<T: Serialize>(value: &T, what: &str) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json(what, e))?;
    s.push('\n');
    Ok(s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

impl ReportBundle {
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let files = [
            (ACCURACY_FILE, to_pretty(&self.accuracy, ACCURACY_FILE)?),
            (CALIBRATION_PROBE_FILE, self.calibration_probe.to_csv()?),
            (CALIBRATION_QUERY_FILE, self.calibration_query.to_csv()?),
            (TAXONOMY_FILE, to_pretty(&self.taxonomy, TAXONOMY_FILE)?),
            (GRID_FILE, self.grid.to_csv()?),
            (ENSEMBLE_FILE, to_pretty(&self.ensemble, ENSEMBLE_FILE)?),
            (RUN_META_FILE, to_pretty(&self.meta, RUN_META_FILE)?),
        ];
        for (name, contents) in files {
            write_file(&out_dir.join(name), &contents)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        Ok(ReportBundle {
            accuracy: read_json(&dir.join(ACCURACY_FILE))?,
            calibration_probe: CalibrationReport::from_csv(
                Source::Probe,
                &read(CALIBRATION_PROBE_FILE)?,
            )?,
            calibration_query: CalibrationReport::from_csv(
                Source::Query,
                &read(CALIBRATION_QUERY_FILE)?,
            )?,
            taxonomy: read_json(&dir.join(TAXONOMY_FILE))?,
            grid: JointGrid::from_csv(&read(GRID_FILE)?)?,
            ensemble: read_json(&dir.join(ENSEMBLE_FILE))?,
            meta: read_json(&dir.join(RUN_META_FILE))?,
        })
    }

    /// Accuracy table in percent with one decimal, ECE to three decimals.
    pub fn table(&self) -> String {
        let a = &self.accuracy;
        let mut out = String::new();
        out.push_str(&format!(
            "{} / {} ({} split, n = {})\n",
            self.meta.model_id, self.meta.dataset_id, a.split, a.test_size
        ));
        out.push_str(&format!("{:<10} {:>8} {:>8}\n", "", "acc %", "ECE"));
        out.push_str(&format!(
            "{:<10} {:>8.1} {:>8.3}\n",
            "Query", a.query.percent, a.query.ece
        ));
        out.push_str(&format!(
            "{:<10} {:>8.1} {:>8.3}\n",
            "Probe", a.probe.percent, a.probe.ece
        ));
        out.push_str(&format!(
            "{:<10} {:>8.1}   lambda = {}\n",
            "Ensemble", a.ensemble.percent, a.ensemble.lambda
        ));
        out.push_str(&format!("\ntaxonomy (tau = {}):\n", self.taxonomy.tau));
        for cell in Cell::ALL {
            out.push_str(&format!(
                "  {:<32} {:>6} {:>8.4}\n",
                self.meta.config.taxonomy.label(cell),
                self.taxonomy.counts[&cell],
                self.taxonomy.fraction(cell)
            ));
        }
        for w in &self.meta.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

pub(crate) fn percent(fraction: f64) -> f64 {
    (fraction * 1000.0).round() / 10.0
}

/// Thread pool sized by `VERACITY_THREADS`, or machine parallelism if unset.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => {
                return Err(Error::invalid(format!(
                    "{THREADS_ENV} must be a positive integer, got `{v}`"
                )))
            }
        },
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))
}

fn manifest_digest(dump_dir: &Path) -> Result<String> {
    let path = dump_dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn require_splits(dump: &RepresentationDump) -> Result<()> {
    for split in Split::ALL {
        if dump.split_len(split) == 0 {
            return Err(Error::EmptySplit(split.to_string()));
        }
    }
    Ok(())
}

/// Fits the probe on the train split and writes it to `out_dir/probe.json`.
pub fn train(config: &RunConfig) -> Result<ProbeModel> {
    config.validate()?;
    let dump = read_dump(&config.dump_dir)?;
    let points = build_training_set(&dump, Split::Train)?;
    let model = thread_pool()?.install(|| fit_probe(&points, &config.reg))?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let mut text = model.to_json()?;
    text.push('\n');
    write_file(&config.out_dir.join(PROBE_FILE), &text)?;
    Ok(model)
}

fn validation_subset(pairs: &[PredictionPair], limit: Option<usize>) -> &[PredictionPair] {
    match limit {
        Some(n) if n < pairs.len() => &pairs[..n],
        _ => pairs,
    }
}

/// Computes the whole bundle in memory from an already loaded dump.
pub fn build_bundle(dump: &RepresentationDump, config: &RunConfig) -> Result<ReportBundle> {
    config.validate()?;
    require_splits(dump)?;
    let mut warnings = Vec::new();

    let points = build_training_set(dump, Split::Train)?;
    let model = fit_probe(&points, &config.reg)?;
    if !model.converged {
        warnings.push(format!(
            "probe did not reach gradient tolerance {} within {} iterations",
            config.reg.gradient_tolerance, config.reg.max_iterations
        ));
    }

    let validation = pair_predictions(dump, &model, Split::Validation)?;
    let validation = validation_subset(&validation, config.validation_limit);
    let ensemble = fit_lambda(validation, config.ensemble_grid_step)?;

    let test = pair_predictions(dump, &model, Split::Test)?;
    let calibration_probe = calibration(&test, Source::Probe, config.calibration_bins)?;
    let calibration_query = calibration(&test, Source::Query, config.calibration_bins)?;
    let source = |s: Source, cal: &CalibrationReport| -> Result<SourceAccuracy> {
        let acc = accuracy(&test, s)?;
        Ok(SourceAccuracy {
            accuracy: acc,
            percent: percent(acc),
            ece: cal.ece,
        })
    };
    let ensemble_acc = evaluate_ensemble(&test, &ensemble)?;
    let accuracy = AccuracySummary {
        split: Split::Test,
        test_size: test.len(),
        query: source(Source::Query, &calibration_query)?,
        probe: source(Source::Probe, &calibration_probe)?,
        ensemble: EnsembleAccuracy {
            accuracy: ensemble_acc,
            percent: percent(ensemble_acc),
            lambda: ensemble.lambda,
        },
    };

    let manifest = dump.manifest();
    let meta = RunMeta {
        tool: "veracity".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        dump_manifest_sha256: String::new(),
        model_id: manifest.model_id.clone(),
        dataset_id: manifest.dataset_id.clone(),
        hidden_dim: manifest.hidden_dim,
        probe: ProbeSummary {
            converged: model.converged,
            train_loss: model.train_loss,
            sparsity: sparsity(&model),
            train_points: points.len(),
        },
        warnings,
    };

    Ok(ReportBundle {
        accuracy,
        calibration_probe,
        calibration_query,
        taxonomy: taxonomy_report(&test, &config.taxonomy)?,
        grid: joint_grid(&test, config.grid_size)?,
        ensemble,
        meta,
    })
}

/// Train on train, fit lambda on validation, evaluate on test, and write the
/// bundle to `config.out_dir`.
pub fn run_full(config: &RunConfig) -> Result<ReportBundle> {
    config.validate()?;
    let dump = read_dump(&config.dump_dir)?;
    let mut bundle = thread_pool()?.install(|| build_bundle(&dump, config))?;
    bundle.meta.dump_manifest_sha256 = manifest_digest(&config.dump_dir)?;
    bundle.write(&config.out_dir)?;
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub l1_strength: f64,
    pub l2_strength: f64,
    pub sparsity: f64,
    pub probe_accuracy: f64,
    pub converged: bool,
    pub fractions: std::collections::BTreeMap<Cell, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub tau: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "l1_strength".to_string(),
            "l2_strength".to_string(),
            "sparsity".to_string(),
            "probe_accuracy".to_string(),
            "converged".to_string(),
        ];
        header.extend(Cell::ALL.iter().map(|c| c.name().to_string()));
        w.write_record(&header)
            .map_err(|e| Error::csv("sweep", e))?;
        for row in &self.rows {
            let mut fields = vec![
                row.l1_strength.to_string(),
                row.l2_strength.to_string(),
                row.sparsity.to_string(),
                row.probe_accuracy.to_string(),
                row.converged.to_string(),
            ];
            fields.extend(Cell::ALL.iter().map(|c| row.fractions[c].to_string()));
            w.write_record(&fields)
                .map_err(|e| Error::csv("sweep", e))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::invalid(format!("csv flush failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:>8} {:>9} {:>8} {:>10} {:>12} {:>10}\n",
            "l1", "sparsity", "acc %", "deception", "confabul.", "heterog."
        );
        for r in &self.rows {
            let heterogeneity = r.fractions[&Cell::HeterogeneityProbeAdvantage]
                + r.fractions[&Cell::HeterogeneityQueryAdvantage];
            out.push_str(&format!(
                "{:>8} {:>9.4} {:>8.1} {:>10.4} {:>12.4} {:>10.4}\n",
                r.l1_strength,
                r.sparsity,
                percent(r.probe_accuracy),
                r.fractions[&Cell::Deception],
                r.fractions[&Cell::ModelConfabulation],
                heterogeneity
            ));
        }
        out
    }
}

/// Regularization used for one sweep penalty: the configured probe for
/// penalty 0, otherwise a pure l1 probe.
pub fn sweep_reg(base: &RegConfig, l1: f64) -> RegConfig {
    if l1 == 0.0 {
        RegConfig {
            l1_strength: 0.0,
            ..base.clone()
        }
    } else {
        RegConfig {
            l1_strength: l1,
            l2_strength: 0.0,
            ..base.clone()
        }
    }
}

pub fn sweep_dump(dump: &RepresentationDump, config: &RunConfig) -> Result<SweepReport> {
    config.validate()?;
    if config.l1_sweep.is_empty() {
        return Err(Error::invalid("l1_sweep must not be empty"));
    }
    require_splits(dump)?;
    let points = build_training_set(dump, Split::Train)?;
    let rows = config
        .l1_sweep
        .par_iter()
        .map(|&l1| {
            let reg = sweep_reg(&config.reg, l1);
            let model = fit_probe(&points, &reg)?;
            let test = pair_predictions(dump, &model, Split::Test)?;
            let taxonomy = taxonomy_report(&test, &config.taxonomy)?;
            Ok(SweepRow {
                l1_strength: l1,
                l2_strength: reg.l2_strength,
                sparsity: sparsity(&model),
                probe_accuracy: accuracy(&test, Source::Probe)?,
                converged: model.converged,
                fractions: taxonomy.fractions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        tau: config.taxonomy.tau,
        rows,
    })
}

/// One row per penalty in `l1_sweep`; writes `sweep.json` and `sweep.csv`.
pub fn run_sweep(config: &RunConfig) -> Result<SweepReport> {
    config.validate()?;
    let dump = read_dump(&config.dump_dir)?;
    let report = thread_pool()?.install(|| sweep_dump(&dump, config))?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    write_file(
        &config.out_dir.join(SWEEP_JSON_FILE),
        &to_pretty(&report, SWEEP_JSON_FILE)?,
    )?;
    write_file(&config.out_dir.join(SWEEP_CSV_FILE), &report.to_csv()?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_has_one_decimal() {
        assert_eq!(percent(0.6184), 61.8);
        assert_eq!(percent(0.71), 71.0);
        assert_eq!(percent(1.0), 100.0);
    }

    #[test]
    fn config_defaults_from_minimal_json() {
        let config: RunConfig =
            serde_json::from_str(r#"{"dump_dir": "d", "out_dir": "o"}"#).unwrap();
        assert_eq!(config.l1_sweep, vec![0.0, 0.01, 0.03, 0.1]);
        assert_eq!(config.taxonomy.tau, 0.75);
        assert_eq!(config.calibration_bins, 10);
        assert_eq!(config.validation_limit, Some(500));
        assert_eq!(config.reg, RegConfig::default());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"dump_dir": "dump", "out_dir": "/abs/out"}"#).unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.dump_dir, dir.path().join("dump"));
        assert_eq!(config.out_dir, PathBuf::from("/abs/out"));
    }

    #[test]
    fn sweep_reg_keeps_one_penalty() {
        let base = RegConfig::default();
        assert_eq!(sweep_reg(&base, 0.0), base);
        let l1 = sweep_reg(&base, 0.03);
        assert_eq!((l1.l1_strength, l1.l2_strength), (0.03, 0.0));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut config = RunConfig::new("d", "o");
        config.l1_sweep = vec![-0.1];
        assert!(config.validate().is_err());
        config = RunConfig::new("d", "o");
        config.taxonomy.tau = 0.4;
        assert!(config.validate().is_err());
        config = RunConfig::new("d", "o");
        config.ensemble_grid_step = 0.0;
        assert!(config.validate().is_err());
    }
}
