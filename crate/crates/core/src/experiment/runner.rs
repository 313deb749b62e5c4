use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{DatasetSpec, ExperimentConfig, Preset, BUILTIN_TABLE_NAME};
use super::idx::load_idx_dataset;
use super::report::{
    corruption_csv, emit_plot_data, fmt_num, metrics_csv, plot_points, study_csv, study_plot_points, write_file,
    MetricsRecord,
};
use super::synthetic::make_synthetic;
use crate::augment::CorruptionTable;
use crate::error::{Error, Result};
use crate::train::{
    ablation_study, epoch_budget_study, gamma_sweep, main_pair, train_run, Dataset, LabelledRun, PairedRow, Study,
};

pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    match *spec {
        DatasetSpec::SyntheticBlobs {
            n_train,
            n_test,
            classes,
            noise,
            seed,
        } => make_synthetic(super::SyntheticKind::Blobs, n_train, n_test, classes, noise, seed),
        DatasetSpec::SyntheticTwoMoons {
            n_train,
            n_test,
            noise,
            seed,
        } => make_synthetic(super::SyntheticKind::TwoMoons, n_train, n_test, 2, noise, seed),
        DatasetSpec::Idx {
            ref train_images,
            ref train_labels,
            ref test_images,
            ref test_labels,
            limit,
            classes,
        } => {
            let train = load_idx_dataset(train_images, train_labels, limit)?;
            let test = load_idx_dataset(test_images, test_labels, limit)?;
            Dataset::new(train, test, classes)
        }
    }
}

pub fn load_table(cfg: &ExperimentConfig) -> Result<CorruptionTable> {
    if cfg.corruption_table == BUILTIN_TABLE_NAME {
        return Ok(CorruptionTable::builtin());
    }
    let text = std::fs::read_to_string(&cfg.corruption_table).map_err(|source| Error::Io {
        path: cfg.corruption_table.clone(),
        source,
    })?;
    CorruptionTable::parse(&text)
}

/// Study overrides from the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub gammas: Option<Vec<f64>>,
    pub fractions: Option<Vec<f64>>,
    pub variants: Option<Vec<crate::train::Alignment>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(p) = self.preset {
            cfg.study.preset = p;
        }
        if let Some(g) = &self.gammas {
            cfg.study.gammas = g.clone();
        }
        if let Some(f) = &self.fractions {
            cfg.study.fractions = f.clone();
        }
        if let Some(v) = &self.variants {
            cfg.study.variants = v.clone();
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub directory: PathBuf,
    pub config_hash: String,
    pub records: Vec<MetricsRecord>,
    pub rows: Vec<PairedRow>,
    pub summary: String,
}

fn run_id(run: &LabelledRun) -> String {
    format!("{}-s{}", run.label, run.seed)
}

fn summarize(cfg: &ExperimentConfig, hash: &str, records: &[MetricsRecord], rows: &[PairedRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment {} ({:?}), config {hash}", cfg.name, cfg.study.preset);
    for r in records {
        let _ = writeln!(
            s,
            "  {:<24} SA {}  RA {}",
            r.run_id,
            r.final_sa.map(pct).unwrap_or_else(|| "-".into()),
            r.final_ra.map(pct).unwrap_or_else(|| "-".into()),
        );
    }
    if !rows.is_empty() {
        let _ = writeln!(s, "  median over seeds (difference to the baseline in parentheses):");
        for r in rows {
            let _ = writeln!(
                s,
                "  {:<24} SA {} ({:+.2})  RA {} ({:+.2})  [baseline SA {} RA {}]",
                r.label,
                pct(r.median_sa()),
                100.0 * r.delta_sa(),
                pct(r.median_ra()),
                100.0 * r.delta_ra(),
                pct(r.baseline_median_sa()),
                pct(r.baseline_median_ra()),
            );
        }
    }
    s
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Runs the configured preset and writes its artifacts under
/// `output_dir/name/`: the config snapshot, combined metrics and corruption
/// CSVs, plot data, the study table for multi-run presets, and one
/// subdirectory per run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let data = load_dataset(&cfg.dataset)?;
    let table = load_table(cfg)?;
    let hash = cfg.config_hash();
    let seeds = &cfg.study.seeds;
    let train = &cfg.train;
    let study = match cfg.study.preset {
        Preset::Single => Study {
            rows: Vec::new(),
            runs: vec![LabelledRun {
                label: cfg.name.clone(),
                seed: train.seed,
                output: train_run(train, &data, &table)?,
            }],
        },
        Preset::MainPair => main_pair(train, &data, &table, seeds)?,
        Preset::GammaSweep => gamma_sweep(train, &data, &table, &cfg.study.gammas, seeds)?,
        Preset::EpochBudget => epoch_budget_study(train, &data, &table, &cfg.study.fractions, seeds)?,
        Preset::Ablation => ablation_study(train, &data, &table, &cfg.study.variants, seeds)?,
    };
    let dir = cfg.output_dir.join(&cfg.name);
    let records: Vec<MetricsRecord> = study
        .runs
        .iter()
        .map(|r| MetricsRecord::from_run(run_id(r), hash.clone(), &r.output))
        .collect();
    write_artifacts(cfg, &hash, &dir, &records, &study.rows)?;
    let summary = summarize(cfg, &hash, &records, &study.rows);
    Ok(ExperimentOutput {
        directory: dir,
        config_hash: hash,
        records,
        rows: study.rows,
        summary,
    })
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    hash: &str,
    dir: &Path,
    records: &[MetricsRecord],
    rows: &[PairedRow],
) -> Result<()> {
    let snapshot = format!("# config_hash = \"{hash}\"\n{}", cfg.to_toml());
    write_file(&dir.join("config.toml"), &snapshot)?;
    write_file(&dir.join("metrics.csv"), &metrics_csv(records))?;
    write_file(&dir.join("corruption.csv"), &corruption_csv(records))?;
    for r in records {
        let run_dir = dir.join(&r.run_id);
        let one = std::slice::from_ref(r);
        write_file(&run_dir.join("metrics.csv"), &metrics_csv(one))?;
        write_file(&run_dir.join("corruption.csv"), &corruption_csv(one))?;
        emit_plot_data(&plot_points(r), &run_dir.join("plot.csv"))?;
    }
    if !rows.is_empty() {
        write_file(&dir.join("study.csv"), &study_csv(rows))?;
        let (aligned, baseline) = study_plot_points(rows);
        emit_plot_data(&aligned, &dir.join("plot_aligned.csv"))?;
        emit_plot_data(&baseline, &dir.join("plot_baseline.csv"))?;
    }
    Ok(())
}

/// Loads `path`, applies overrides, and runs it.
pub fn run_experiment_file(path: &Path, overrides: &Overrides) -> Result<ExperimentOutput> {
    let mut cfg = ExperimentConfig::load(path)?;
    overrides.apply(&mut cfg);
    run_experiment(&cfg)
}

/// Per-kind mean squared pixel change of the test set at each severity,
/// for inspecting the corruption table.
pub fn corruption_preview(cfg: &ExperimentConfig) -> Result<String> {
    use crate::augment::{corrupt, CorruptionKind, CorruptionSpec, MAX_SEVERITY};
    let data = load_dataset(&cfg.dataset)?;
    let table = load_table(cfg)?;
    let mut out = String::from("kind,severity,parameter,mse\n");
    for kind in CorruptionKind::ALL {
        for sev in 1..=MAX_SEVERITY {
            let spec = CorruptionSpec::new(kind, sev)?;
            let mut rng = crate::train::stream_rng(cfg.train.eval.seed, u64::from(sev));
            let c = corrupt(&data.test, spec, &table, &mut rng)?;
            let n = data.test.images().len().max(1) as f64;
            let mse = c
                .images()
                .data()
                .iter()
                .zip(data.test.images().data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n;
            let _ = writeln!(
                out,
                "{},{sev},{},{}",
                kind.name(),
                fmt_num(table.parameter(kind, sev).unwrap_or(f64::NAN)),
                fmt_num(mse)
            );
        }
    }
    Ok(out)
}
