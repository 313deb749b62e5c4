use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::objective::Alignment;
use super::run::{train_run, Dataset, RunOutput, TrainConfig};
use crate::augment::CorruptionTable;
use crate::error::{contract, Error, Result};

/// Final accuracies of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub sa: f64,
    pub ra: f64,
}

impl RunSummary {
    pub fn of(seed: u64, run: &RunOutput) -> Result<Self> {
        match (run.final_sa(), run.final_ra()) {
            (Some(sa), Some(ra)) => Ok(Self { seed, sa, ra }),
            _ => Err(contract("run finished without a final evaluation")),
        }
    }
}

/// Paired runs at one study point: `x` is the swept value (gamma, epoch
/// fraction, or variant index for ablations).
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRow {
    pub label: String,
    pub x: f64,
    pub epochs: usize,
    pub with_alignment: Vec<RunSummary>,
    pub baseline: Vec<RunSummary>,
}

/// Median; the mean of the middle two for even lengths. NaN for empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

impl PairedRow {
    pub fn median_sa(&self) -> f64 {
        median(&self.with_alignment.iter().map(|r| r.sa).collect::<Vec<_>>())
    }

    pub fn median_ra(&self) -> f64 {
        median(&self.with_alignment.iter().map(|r| r.ra).collect::<Vec<_>>())
    }

    pub fn baseline_median_sa(&self) -> f64 {
        median(&self.baseline.iter().map(|r| r.sa).collect::<Vec<_>>())
    }

    pub fn baseline_median_ra(&self) -> f64 {
        median(&self.baseline.iter().map(|r| r.ra).collect::<Vec<_>>())
    }

    pub fn delta_sa(&self) -> f64 {
        self.median_sa() - self.baseline_median_sa()
    }

    pub fn delta_ra(&self) -> f64 {
        self.median_ra() - self.baseline_median_ra()
    }
}

/// `base` with the alignment term removed: the plain `L_aug` objective.
pub fn baseline_config(base: &TrainConfig) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.objective.alignment = Alignment::None;
    cfg
}

/// `base` with the alignment term on (CSA unless another variant is set).
pub fn aligned_config(base: &TrainConfig) -> TrainConfig {
    let mut cfg = base.clone();
    if cfg.objective.alignment == Alignment::None {
        cfg.objective.alignment = Alignment::Csa;
    }
    cfg
}

/// Runs every config, spreading work over the available cores. Runs share
/// nothing mutable, so results do not depend on scheduling.
pub fn run_many(configs: &[TrainConfig], data: &Dataset, table: &CorruptionTable) -> Result<Vec<RunOutput>> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(configs.len());
    if workers <= 1 {
        return configs.iter().map(|c| train_run(c, data, table)).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunOutput>>>> = Mutex::new(configs.iter().map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let out = train_run(&configs[i], data, table);
                results.lock().expect("worker panicked")[i] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}

fn with_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    let mut c = cfg.clone();
    c.seed = seed;
    c
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    Ok(())
}

/// A finished run and the study cell it belongs to.
#[derive(Debug, Clone)]
pub struct LabelledRun {
    pub label: String,
    pub seed: u64,
    pub output: RunOutput,
}

/// Aggregated rows plus every underlying run.
#[derive(Debug, Clone)]
pub struct Study {
    pub rows: Vec<PairedRow>,
    pub runs: Vec<LabelledRun>,
}

/// Runs each labelled config group over all seeds.
fn run_groups(
    groups: &[(String, TrainConfig)],
    data: &Dataset,
    table: &CorruptionTable,
    seeds: &[u64],
) -> Result<Vec<(Vec<RunSummary>, Vec<LabelledRun>)>> {
    check_seeds(seeds)?;
    let configs: Vec<TrainConfig> = groups
        .iter()
        .flat_map(|(_, cfg)| seeds.iter().map(move |&s| with_seed(cfg, s)))
        .collect();
    let mut runs = run_many(&configs, data, table)?.into_iter();
    groups
        .iter()
        .map(|(label, _)| {
            let mut summaries = Vec::with_capacity(seeds.len());
            let mut labelled = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let output = runs.next().expect("one run per config");
                summaries.push(RunSummary::of(seed, &output)?);
                labelled.push(LabelledRun {
                    label: label.clone(),
                    seed,
                    output,
                });
            }
            Ok((summaries, labelled))
        })
        .collect()
}

/// With-alignment and baseline runs of `base` for every seed, returned as
/// `(aligned, baseline)`.
pub fn paired_runs(
    base: &TrainConfig,
    data: &Dataset,
    table: &CorruptionTable,
    seeds: &[u64],
) -> Result<(Vec<RunOutput>, Vec<RunOutput>)> {
    check_seeds(seeds)?;
    let mut configs: Vec<TrainConfig> = seeds.iter().map(|&s| with_seed(&aligned_config(base), s)).collect();
    configs.extend(seeds.iter().map(|&s| with_seed(&baseline_config(base), s)));
    let mut runs = run_many(&configs, data, table)?;
    let baseline = runs.split_off(seeds.len());
    Ok((runs, baseline))
}

/// The aligned-versus-baseline pair as a one-row study.
pub fn main_pair(base: &TrainConfig, data: &Dataset, table: &CorruptionTable, seeds: &[u64]) -> Result<Study> {
    let aligned = aligned_config(base);
    let label = alignment_label(aligned.objective.alignment).to_string();
    let groups = vec![
        (label.clone(), aligned.clone()),
        ("baseline".to_string(), baseline_config(base)),
    ];
    let mut out = run_groups(&groups, data, table, seeds)?;
    let (baseline, mut base_runs) = out.pop().expect("two groups");
    let (with_alignment, mut runs) = out.pop().expect("two groups");
    runs.append(&mut base_runs);
    Ok(Study {
        rows: vec![PairedRow {
            label,
            x: aligned.objective.gamma,
            epochs: base.epochs,
            with_alignment,
            baseline,
        }],
        runs,
    })
}

fn alignment_label(a: Alignment) -> &'static str {
    match a {
        Alignment::None => "none",
        Alignment::Csa => "csa",
        Alignment::SaOnly => "sa-only",
        Alignment::Supcon => "supcon",
    }
}

/// One aligned run per (gamma, seed); the baseline is shared by all rows.
pub fn gamma_sweep(
    base: &TrainConfig,
    data: &Dataset,
    table: &CorruptionTable,
    gammas: &[f64],
    seeds: &[u64],
) -> Result<Study> {
    if let Some(g) = gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::Config(format!("gamma {g} outside [0, 1]")));
    }
    let mut groups = vec![("baseline".to_string(), baseline_config(base))];
    for &g in gammas {
        let mut cfg = aligned_config(base);
        cfg.objective.gamma = g;
        groups.push((format!("gamma={g}"), cfg));
    }
    let mut out = run_groups(&groups, data, table, seeds)?.into_iter();
    let (baseline, mut runs) = out.next().expect("baseline group");
    let mut rows = Vec::with_capacity(gammas.len());
    for ((&g, (label, _)), (with_alignment, mut r)) in gammas.iter().zip(&groups[1..]).zip(out) {
        rows.push(PairedRow {
            label: label.clone(),
            x: g,
            epochs: base.epochs,
            with_alignment,
            baseline: baseline.clone(),
        });
        runs.append(&mut r);
    }
    Ok(Study { rows, runs })
}

/// Epochs trained at `fraction` of `total`: floor, at least one.
pub fn epochs_for_fraction(total: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("epoch fraction {fraction} outside (0, 1]")));
    }
    Ok(((total as f64 * fraction).floor() as usize).max(1))
}

/// Paired runs at each fraction of the base epoch budget. Each shortened run
/// applies the full schedule over its own budget.
pub fn epoch_budget_study(
    base: &TrainConfig,
    data: &Dataset,
    table: &CorruptionTable,
    fractions: &[f64],
    seeds: &[u64],
) -> Result<Study> {
    let mut groups = Vec::new();
    let mut epochs = Vec::new();
    for &f in fractions {
        let e = epochs_for_fraction(base.epochs, f)?;
        let mut cfg = base.clone();
        cfg.epochs = e;
        groups.push((format!("fraction={f}"), aligned_config(&cfg)));
        groups.push((format!("fraction={f}-baseline"), baseline_config(&cfg)));
        epochs.push(e);
    }
    let mut out = run_groups(&groups, data, table, seeds)?.into_iter();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (&f, &e) in fractions.iter().zip(&epochs) {
        let (with_alignment, mut a) = out.next().expect("aligned group");
        let (baseline, mut b) = out.next().expect("baseline group");
        rows.push(PairedRow {
            label: format!("fraction={f}"),
            x: f,
            epochs: e,
            with_alignment,
            baseline,
        });
        runs.append(&mut a);
        runs.append(&mut b);
    }
    Ok(Study { rows, runs })
}

/// Every variant against the plain baseline, for every seed. Rows are in
/// the order of `variants` with `x` the variant's position.
pub fn ablation_study(
    base: &TrainConfig,
    data: &Dataset,
    table: &CorruptionTable,
    variants: &[Alignment],
    seeds: &[u64],
) -> Result<Study> {
    let mut groups = vec![("baseline".to_string(), baseline_config(base))];
    for &v in variants.iter().filter(|v| **v != Alignment::None) {
        let mut cfg = base.clone();
        cfg.objective.alignment = v;
        groups.push((alignment_label(v).to_string(), cfg));
    }
    let mut out = run_groups(&groups, data, table, seeds)?.into_iter();
    let (baseline, base_runs) = out.next().expect("baseline group");
    let mut variant_out: Vec<_> = out.collect();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (k, &v) in variants.iter().enumerate() {
        let (with_alignment, r) = if v == Alignment::None {
            (baseline.clone(), Vec::new())
        } else {
            let pos = groups[1..]
                .iter()
                .position(|(l, _)| l == alignment_label(v))
                .expect("group per variant");
            (variant_out[pos].0.clone(), std::mem::take(&mut variant_out[pos].1))
        };
        rows.push(PairedRow {
            label: alignment_label(v).to_string(),
            x: k as f64,
            epochs: base.epochs,
            with_alignment,
            baseline: baseline.clone(),
        });
        runs.extend(r);
    }
    runs.extend(base_runs);
    Ok(Study { rows, runs })
}
