//! Ablation studies: surrogate quality against the number of re-uploads, and
//! data efficiency of the VQC surrogate against the MLP baseline.
//!
//! Independent runs fan out over the worker pool and are collected in job
//! order, so tables do not depend on the number of workers.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{train_mlp, MlpConfig};
use crate::dataset::{Split, SplitDataset};
use crate::error::{config_err, Error, Result};
use crate::seed;
use crate::stats::Summary;
use crate::surrogate::{train_on, write_json, TrainConfig};
use crate::vqc::{build_model_template, VqcConfig};

/// Seed of run `run` in a study seeded with `base`.
pub fn run_seed(base: u64, run: usize) -> u64 {
    seed::derive(seed::derive(base, seed::STREAM_RUN), run as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuploadStudyConfig {
    pub reuploads: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
    /// Template for every setting; only `reuploads` is overridden.
    pub model: VqcConfig,
    /// Hyperparameters shared by every setting; the seed is set per run.
    pub train: TrainConfig,
    /// Use only this many training samples (a seeded subset), if set.
    pub train_samples: Option<usize>,
}

impl Default for ReuploadStudyConfig {
    fn default() -> Self {
        Self {
            reuploads: vec![0, 1, 2, 3, 4],
            runs: 10,
            seed: 0,
            model: VqcConfig::model(),
            train: TrainConfig::default(),
            train_samples: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReuploadRun {
    pub reuploads: usize,
    pub run: usize,
    pub val_loss: f64,
    pub selected_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReuploadGroup {
    pub reuploads: usize,
    pub num_params: usize,
    pub val_loss: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuploadStudy {
    pub config: ReuploadStudyConfig,
    pub runs: Vec<ReuploadRun>,
    pub groups: Vec<ReuploadGroup>,
}

impl ReuploadStudy {
    pub fn group(&self, reuploads: usize) -> Option<&ReuploadGroup> {
        self.groups.iter().find(|g| g.reuploads == reuploads)
    }

    /// `mean(a) / mean(b)` of the val losses of two settings.
    pub fn ratio(&self, a: usize, b: usize) -> Option<f64> {
        Some(self.group(a)?.val_loss.mean / self.group(b)?.val_loss.mean)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.runs)
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub fn reupload_study(dataset: &SplitDataset, config: &ReuploadStudyConfig) -> Result<ReuploadStudy> {
    if config.reuploads.is_empty() || config.runs == 0 {
        return Err(config_err("re-upload study needs at least one setting and one run"));
    }
    let templates = config
        .reuploads
        .iter()
        .map(|&r| build_model_template(VqcConfig { reuploads: r, ..config.model }))
        .collect::<Result<Vec<_>>>()?;
    let val = dataset.samples(Split::Val);
    let jobs: Vec<(usize, usize)> =
        (0..config.reuploads.len()).flat_map(|s| (0..config.runs).map(move |r| (s, r))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(s, run)| {
            let seed = run_seed(config.seed, run);
            let train = match config.train_samples {
                Some(n) => dataset.train_subset(n, seed),
                None => dataset.samples(Split::Train).to_vec(),
            };
            let tc = TrainConfig { seed, ..config.train };
            let model = train_on(&train, val, dataset.scaler(), templates[s].clone(), &tc)?;
            Ok(ReuploadRun {
                reuploads: config.reuploads[s],
                run,
                val_loss: model.evaluate_loss(val)?,
                selected_epoch: model.selected_epoch().unwrap_or(0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let groups = config
        .reuploads
        .iter()
        .zip(&templates)
        .map(|(&r, t)| {
            let losses: Vec<f64> = runs.iter().filter(|x| x.reuploads == r).map(|x| x.val_loss).collect();
            ReuploadGroup { reuploads: r, num_params: t.num_params(), val_loss: Summary::of(&losses) }
        })
        .collect();
    Ok(ReuploadStudy { config: config.clone(), runs, groups })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Vqc,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataStudyConfig {
    /// Fractions of the training split, e.g. `[1, 1/2, 1/4, 1/10, 1/20]`.
    pub fractions: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub model: VqcConfig,
    pub vqc_train: TrainConfig,
    pub mlp_train: MlpConfig,
    /// Fractions are taken of this many training samples instead of the
    /// whole split, if set.
    pub base_samples: Option<usize>,
}

/// Fractions yielding fewer samples are skipped.
pub const MIN_SUBSET_SAMPLES: usize = 10;

impl Default for DataStudyConfig {
    fn default() -> Self {
        Self {
            fractions: vec![1.0, 0.5, 0.25, 0.1, 0.05],
            runs: 10,
            seed: 0,
            model: VqcConfig::model(),
            vqc_train: TrainConfig::default(),
            mlp_train: MlpConfig::default(),
            base_samples: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRun {
    pub fraction: f64,
    pub family: Family,
    pub run: usize,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionSummary {
    pub fraction: f64,
    pub samples: usize,
    pub vqc: Summary,
    pub mlp: Summary,
    /// `mean(VQC) / mean(MLP)`.
    pub mlp_advantage: f64,
    /// `mean at this fraction / mean at the largest fraction`, per family.
    pub vqc_degradation: f64,
    pub mlp_degradation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFraction {
    pub fraction: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataStudy {
    pub config: DataStudyConfig,
    pub runs: Vec<DataRun>,
    pub fractions: Vec<FractionSummary>,
    pub skipped: Vec<SkippedFraction>,
}

impl DataStudy {
    pub fn fraction(&self, fraction: f64) -> Option<&FractionSummary> {
        self.fractions.iter().find(|f| f.fraction == fraction)
    }

    /// Summary of the smallest evaluated fraction.
    pub fn smallest(&self) -> Option<&FractionSummary> {
        self.fractions.iter().min_by(|a, b| a.fraction.total_cmp(&b.fraction))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.runs)
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub fn subset_size(total: usize, fraction: f64) -> usize {
    (total as f64 * fraction).round() as usize
}

/// Trains both families on nested subsets of the training split. The
/// scaler is the one fitted on the full training split and every run is
/// validated on the full validation split.
pub fn compare_data_efficiency(dataset: &SplitDataset, config: &DataStudyConfig) -> Result<DataStudy> {
    if config.fractions.is_empty() || config.runs == 0 {
        return Err(config_err("data study needs at least one fraction and one run"));
    }
    if let Some(f) = config.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(config_err(format!("fraction {f} is outside (0, 1]")));
    }
    let total = config.base_samples.unwrap_or(dataset.samples(Split::Train).len());
    if total > dataset.samples(Split::Train).len() {
        return Err(config_err(format!(
            "base sample count {total} exceeds the training split ({})",
            dataset.samples(Split::Train).len()
        )));
    }
    let mut fractions = Vec::new();
    let mut skipped = Vec::new();
    for &f in &config.fractions {
        let n = subset_size(total, f);
        if n < MIN_SUBSET_SAMPLES {
            eprintln!("warning: fraction {f} yields {n} samples (< {MIN_SUBSET_SAMPLES}); skipped");
            skipped.push(SkippedFraction { fraction: f, samples: n });
        } else {
            fractions.push((f, n));
        }
    }
    if fractions.is_empty() {
        return Err(Error::InsufficientData("every fraction yields too few samples".into()));
    }
    let template = build_model_template(config.model)?;
    let val = dataset.samples(Split::Val);
    let jobs: Vec<(usize, Family, usize)> = (0..fractions.len())
        .flat_map(|f| (0..config.runs).flat_map(move |r| [(f, Family::Vqc, r), (f, Family::Mlp, r)]))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(fi, family, run)| {
            let (fraction, n) = fractions[fi];
            let seed = run_seed(config.seed, run);
            // same permutation for every fraction of a run, so subsets nest
            let train = dataset.train_subset(n, seed);
            let val_loss = match family {
                Family::Vqc => {
                    let tc = TrainConfig { seed, ..config.vqc_train };
                    train_on(&train, val, dataset.scaler(), template.clone(), &tc)?.evaluate_loss(val)?
                }
                Family::Mlp => {
                    let mc = MlpConfig { seed, ..config.mlp_train };
                    train_mlp(&train, val, &mc)?.mlp.evaluate_loss(val)?
                }
            };
            Ok(DataRun { fraction, family, run, val_loss })
        })
        .collect::<Result<Vec<_>>>()?;

    let mean_of = |f: f64, family: Family| -> Summary {
        let v: Vec<f64> =
            runs.iter().filter(|r| r.fraction == f && r.family == family).map(|r| r.val_loss).collect();
        Summary::of(&v)
    };
    let reference = fractions.iter().map(|(f, _)| *f).fold(f64::NEG_INFINITY, f64::max);
    let (vqc_ref, mlp_ref) = (mean_of(reference, Family::Vqc).mean, mean_of(reference, Family::Mlp).mean);
    let summaries = fractions
        .iter()
        .map(|&(fraction, samples)| {
            let vqc = mean_of(fraction, Family::Vqc);
            let mlp = mean_of(fraction, Family::Mlp);
            FractionSummary {
                fraction,
                samples,
                vqc,
                mlp,
                mlp_advantage: vqc.mean / mlp.mean,
                vqc_degradation: vqc.mean / vqc_ref,
                mlp_degradation: mlp.mean / mlp_ref,
            }
        })
        .collect();
    Ok(DataStudy { config: config.clone(), runs, fractions: summaries, skipped })
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
