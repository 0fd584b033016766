//! `qmbrl`: dataset generation, surrogate training, policy search,
//! evaluation and the ablation studies, one subcommand per stage.
//!
//! Stages communicate through files only. Every command writes
//! `provenance.json` next to its outputs; `qmbrl rerun` replays it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qmbrl::baseline::MlpConfig;
use qmbrl::cartpole::{CartPole, MAX_EPISODE_STEPS};
use qmbrl::dataset::{generate, SplitDataset, SplitSizes, PAPER_DATASET_SIZE};
use qmbrl::optim::PsoConfig;
use qmbrl::policy::{
    evaluate_on_env, evaluation_start_states, fitness_start_states, learning_curve, search, write_curve_csv,
    RolloutConfig, VqcPolicy,
};
use qmbrl::study::{compare_data_efficiency, reupload_study, DataStudyConfig, ReuploadStudyConfig};
use qmbrl::surrogate::{train, GradientMethod, SurrogateModel, TrainConfig};
use qmbrl::vqc::{build_model_template, build_policy_template, VqcConfig};

const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Parser)]
#[command(name = "qmbrl", version, about = "Model-based offline quantum RL on cart-pole")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "QMBRL_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Record random-policy transitions and split them.
    GenData(GenData),
    /// Train the VQC surrogate on a dataset.
    TrainModel(TrainModel),
    /// Search a VQC policy against surrogate roll-outs.
    SearchPolicy(SearchPolicy),
    /// Evaluate a policy on the real environment.
    EvalPolicy(EvalPolicy),
    /// Validation loss against the number of re-uploads.
    StudyReupload(StudyReupload),
    /// Validation loss of the VQC and the MLP on shrinking training sets.
    StudyData(StudyData),
    /// Re-run the command recorded in a provenance file.
    #[serde(skip)]
    Rerun(Rerun),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct GenData {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of transitions.
    #[arg(long, default_value_t = PAPER_DATASET_SIZE)]
    size: usize,
    /// Seed of the train/val/test split (default: --seed).
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct TrainModel {
    /// Dataset CSV written by gen-data.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, visible_alias = "uploads", default_value_t = 3)]
    reuploads: usize,
    #[arg(long, default_value_t = 5)]
    layers: usize,
    /// Encoding angle per unit input (default: 0.5 for the surrogate, π for
    /// the policy).
    #[arg(long)]
    encoding_scale: Option<f64>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Gradient::Adjoint)]
    gradient: Gradient,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Gradient {
    Adjoint,
    ParameterShift,
}

impl From<Gradient> for GradientMethod {
    fn from(g: Gradient) -> Self {
        match g {
            Gradient::Adjoint => GradientMethod::Adjoint,
            Gradient::ParameterShift => GradientMethod::ParameterShift,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct SearchPolicy {
    /// Surrogate JSON written by train-model.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 100)]
    particles: usize,
    /// Total fitness evaluations.
    #[arg(long, default_value_t = 20_000)]
    budget: usize,
    #[arg(long, default_value_t = 500)]
    horizon: usize,
    /// Size of the fitness start-state set.
    #[arg(long, default_value_t = 100)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, visible_alias = "uploads", default_value_t = 3)]
    reuploads: usize,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    /// Encoding angle per unit input (default: 0.5 for the surrogate, π for
    /// the policy).
    #[arg(long)]
    encoding_scale: Option<f64>,
    /// Also evaluate every incumbent on the real environment (diagnostic
    /// only; the search never sees these numbers).
    #[arg(long)]
    eval_during_search: bool,
    #[arg(long, default_value_t = 100)]
    eval_episodes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct EvalPolicy {
    /// Policy JSON written by search-policy.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = MAX_EPISODE_STEPS)]
    max_steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct StudyReupload {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    reuploads: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 5)]
    layers: usize,
    /// Encoding angle per unit input (default: 0.5 for the surrogate, π for
    /// the policy).
    #[arg(long)]
    encoding_scale: Option<f64>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Train each run on a seeded subset of this size.
    #[arg(long)]
    train_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct StudyData {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25,0.1,0.05")]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, visible_alias = "uploads", default_value_t = 3)]
    reuploads: usize,
    #[arg(long, default_value_t = 5)]
    layers: usize,
    /// Encoding angle per unit input (default: 0.5 for the surrogate, π for
    /// the policy).
    #[arg(long)]
    encoding_scale: Option<f64>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 200)]
    mlp_epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    mlp_lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Take fractions of this many training samples instead of the split.
    #[arg(long)]
    base_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
struct Rerun {
    /// A provenance.json written by an earlier command.
    provenance: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct Provenance {
    tool: String,
    version: String,
    command: Command,
}

impl Command {
    fn out_mut(&mut self) -> Option<&mut PathBuf> {
        match self {
            Command::GenData(c) => Some(&mut c.out),
            Command::TrainModel(c) => Some(&mut c.out),
            Command::SearchPolicy(c) => Some(&mut c.out),
            Command::EvalPolicy(c) => Some(&mut c.out),
            Command::StudyReupload(c) => Some(&mut c.out),
            Command::StudyData(c) => Some(&mut c.out),
            Command::Rerun(_) => None,
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker pool")?;
    }
    run(cli.command)
}

fn run(command: Command) -> Result<()> {
    if let Command::Rerun(r) = &command {
        let text = fs::read_to_string(&r.provenance)
            .with_context(|| format!("reading {}", r.provenance.display()))?;
        let prov: Provenance = serde_json::from_str(&text).context("parsing provenance")?;
        let mut recorded = prov.command;
        if let (Some(out), Some(slot)) = (&r.out, recorded.out_mut()) {
            *slot = out.clone();
        }
        return run(recorded);
    }
    let out = command.clone().out_mut().cloned().expect("every stage has an output directory");
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match &command {
        Command::GenData(c) => gen_data(c)?,
        Command::TrainModel(c) => train_model(c)?,
        Command::SearchPolicy(c) => search_policy(c)?,
        Command::EvalPolicy(c) => eval_policy(c)?,
        Command::StudyReupload(c) => study_reupload(c)?,
        Command::StudyData(c) => study_data(c)?,
        Command::Rerun(_) => unreachable!(),
    }
    let prov = Provenance {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
    };
    write_json(&out.join(PROVENANCE_FILE), &prov)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// 80/10/10 train/val/test.
fn split_sizes(size: usize) -> SplitSizes {
    let train = size * 8 / 10;
    let val = size / 10;
    SplitSizes { train, val, test: size - train - val }
}

fn with_encoding(config: VqcConfig, scale: Option<f64>) -> VqcConfig {
    VqcConfig { encoding_scale: scale.unwrap_or(config.encoding_scale), ..config }
}

fn load_dataset(path: &Path) -> Result<SplitDataset> {
    SplitDataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn gen_data(c: &GenData) -> Result<()> {
    let data = generate(&CartPole::default(), c.seed, c.size)?;
    let stats = data.stats.clone();
    let ds = SplitDataset::from_generated(data, split_sizes(c.size), c.split_seed.unwrap_or(c.seed))?;
    let path = c.out.join("dataset.csv");
    ds.save(&path)?;
    eprintln!(
        "{} transitions from {} episodes (mean length {:.1}) -> {}",
        ds.records().len(),
        stats.episodes,
        stats.mean_episode_length,
        path.display()
    );
    Ok(())
}

fn train_model(c: &TrainModel) -> Result<()> {
    let ds = load_dataset(&c.data)?;
    let template =
        build_model_template(with_encoding(VqcConfig { reuploads: c.reuploads, layers_per_upload: c.layers, ..VqcConfig::model() }, c.encoding_scale))?;
    let config = TrainConfig {
        lr: c.lr,
        epochs: c.epochs,
        batch_size: c.batch_size,
        seed: c.seed,
        gradient: c.gradient.into(),
    };
    let model = train(&ds, template, &config)?;
    model.save(&c.out.join("model.json"))?;
    model.write_history_csv(&c.out.join("history.csv"))?;
    let best = model.selected_epoch().map(|e| model.history()[e - 1]);
    if let Some(b) = best {
        eprintln!("selected epoch {} (val loss {:.6e})", b.epoch, b.val_loss);
    }
    Ok(())
}

fn search_policy(c: &SearchPolicy) -> Result<()> {
    let model = SurrogateModel::load(&c.model).with_context(|| format!("loading model {}", c.model.display()))?;
    let template =
        build_policy_template(with_encoding(VqcConfig { reuploads: c.reuploads, layers_per_upload: c.layers, ..VqcConfig::policy() }, c.encoding_scale))?;
    let state_scaler = model.scaler().state;
    let rollout = RolloutConfig::new(c.horizon, fitness_start_states(c.starts, c.seed))?;
    let pso = PsoConfig { particles: c.particles, budget: c.budget, seed: c.seed, ..PsoConfig::default() };
    let outcome = search(&model, &template, &state_scaler, &rollout, &pso)?;
    let policy = VqcPolicy::new(template.clone(), outcome.best.clone(), state_scaler)?;
    policy.save(&c.out.join("policy.json"))?;
    let eval_starts = c.eval_during_search.then(|| evaluation_start_states(c.eval_episodes, c.seed));
    let curve = learning_curve(&outcome, &template, &state_scaler, eval_starts.as_deref())?;
    write_curve_csv(&c.out.join("history.csv"), &curve)?;
    eprintln!(
        "best fitness {:.3} after {} evaluations ({} improvements)",
        outcome.best_fitness,
        outcome.evaluations,
        outcome.history.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    episodes: usize,
    mean_return: f64,
    mean_steps: f64,
    min_steps: usize,
    max_steps: usize,
    perfect: bool,
}

fn eval_policy(c: &EvalPolicy) -> Result<()> {
    let policy = VqcPolicy::load(&c.policy).with_context(|| format!("loading policy {}", c.policy.display()))?;
    let starts = evaluation_start_states(c.episodes, c.seed);
    let report = evaluate_on_env(&policy, &CartPole::default(), &starts, c.max_steps)?;
    report.write_csv(&c.out.join("report.csv"))?;
    let summary = EvalSummary {
        episodes: report.episodes.len(),
        mean_return: report.mean_return,
        mean_steps: report.mean_steps,
        min_steps: report.min_steps,
        max_steps: report.max_steps,
        perfect: report.perfect,
    };
    write_json(&c.out.join("summary.json"), &summary)?;
    eprintln!("mean steps {:.1}, mean return {:.2}, perfect: {}", summary.mean_steps, summary.mean_return, summary.perfect);
    Ok(())
}

fn study_reupload(c: &StudyReupload) -> Result<()> {
    let ds = load_dataset(&c.data)?;
    let config = ReuploadStudyConfig {
        reuploads: c.reuploads.clone(),
        runs: c.runs,
        seed: c.seed,
        model: with_encoding(VqcConfig { layers_per_upload: c.layers, ..VqcConfig::model() }, c.encoding_scale),
        train: TrainConfig { lr: c.lr, epochs: c.epochs, batch_size: c.batch_size, ..TrainConfig::default() },
        train_samples: c.train_samples,
    };
    let study = reupload_study(&ds, &config)?;
    study.write_csv(&c.out.join("runs.csv"))?;
    study.write_summary(&c.out.join("summary.json"))?;
    for g in &study.groups {
        eprintln!(
            "re-uploads {}: val loss {:.4e} ± {:.1e} ({} params)",
            g.reuploads, g.val_loss.mean, g.val_loss.std, g.num_params
        );
    }
    Ok(())
}

fn study_data(c: &StudyData) -> Result<()> {
    let ds = load_dataset(&c.data)?;
    let config = DataStudyConfig {
        fractions: c.fractions.clone(),
        runs: c.runs,
        seed: c.seed,
        model: with_encoding(VqcConfig { reuploads: c.reuploads, layers_per_upload: c.layers, ..VqcConfig::model() }, c.encoding_scale),
        vqc_train: TrainConfig { lr: c.lr, epochs: c.epochs, batch_size: c.batch_size, ..TrainConfig::default() },
        mlp_train: MlpConfig { lr: c.mlp_lr, epochs: c.mlp_epochs, batch_size: c.batch_size, ..MlpConfig::default() },
        base_samples: c.base_samples,
    };
    let study = compare_data_efficiency(&ds, &config)?;
    study.write_csv(&c.out.join("runs.csv"))?;
    study.write_summary(&c.out.join("summary.json"))?;
    for f in &study.fractions {
        eprintln!(
            "fraction {} ({} samples): VQC {:.4e}, MLP {:.4e}, MLP advantage {:.1}x",
            f.fraction, f.samples, f.vqc.mean, f.mlp.mean, f.mlp_advantage
        );
    }
    Ok(())
}
