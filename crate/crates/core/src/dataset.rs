//! Offline transition data collected with a uniform-random policy.
//!
//! Records are persisted as CSV (one transition per row) next to a JSON
//! sidecar holding the scaler, seeds, split sizes and split indices. Scaled
//! samples are recomputed on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cartpole::{Action, CartPole, CartPoleState, MAX_EPISODE_STEPS};
use crate::error::{config_err, Error, Result};
use crate::seed;

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const PAPER_DATASET_SIZE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: CartPoleState,
    pub action: Action,
    pub next_state: CartPoleState,
    pub episode_id: usize,
    pub step_index: usize,
}

impl TransitionRecord {
    pub fn delta(&self) -> [f64; 4] {
        let s = self.state.to_array();
        let n = self.next_state.to_array();
        [n[0] - s[0], n[1] - s[1], n[2] - s[2], n[3] - s[3]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    /// Episodes started, including one cut short by the size limit.
    pub episodes: usize,
    /// Episodes that ended by termination or the step limit.
    pub completed_episodes: usize,
    /// Mean length of the completed episodes.
    pub mean_episode_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub records: Vec<TransitionRecord>,
    pub seed: u64,
    pub stats: GenerationStats,
}

/// Runs random-policy episodes from `reset` until `target_size` transitions
/// are collected; the final episode is truncated to hit the size exactly.
pub fn generate(env: &CartPole, seed: u64, target_size: usize) -> Result<GeneratedData> {
    let mut rng = seed::rng(seed);
    let mut records = Vec::with_capacity(target_size);
    let mut episodes = 0;
    let mut completed_lengths = Vec::new();
    while records.len() < target_size {
        let episode_id = episodes;
        episodes += 1;
        let mut state = env.reset(&mut rng);
        let mut steps = 0;
        loop {
            let action = if rng.gen::<bool>() { Action::Right } else { Action::Left };
            let out = env.step(&state, action)?;
            records.push(TransitionRecord {
                state,
                action,
                next_state: out.next,
                episode_id,
                step_index: steps,
            });
            steps += 1;
            state = out.next;
            if out.terminated || steps >= MAX_EPISODE_STEPS {
                completed_lengths.push(steps);
                break;
            }
            if records.len() >= target_size {
                break;
            }
        }
    }
    records.truncate(target_size);
    let completed_episodes = completed_lengths.len();
    let mean_episode_length = if completed_episodes == 0 {
        f64::NAN
    } else {
        completed_lengths.iter().sum::<usize>() as f64 / completed_episodes as f64
    };
    Ok(GeneratedData {
        records,
        seed,
        stats: GenerationStats { episodes, completed_episodes, mean_episode_length },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn fit(values: impl Iterator<Item = f64>, name: &str) -> Result<Self> {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !(min.is_finite() && max.is_finite()) || min >= max {
            return Err(config_err(format!("degenerate range for {name}: [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    fn width(&self) -> f64 {
        self.max - self.min
    }

    /// `[min, max] → [-1, 1]`
    pub fn to_unit(&self, v: f64) -> f64 {
        2.0 * (v - self.min) / self.width() - 1.0
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        (u + 1.0) / 2.0 * self.width() + self.min
    }

    /// `[min, max] → [-0.5, 0.5]`
    pub fn to_half(&self, v: f64) -> f64 {
        (v - self.min) / self.width() - 0.5
    }

    pub fn from_half(&self, u: f64) -> f64 {
        (u + 0.5) * self.width() + self.min
    }
}

/// Min-max scalers fitted on the training split.
///
/// State inputs map to `[-1, 1]`, delta targets to `[-0.5, 0.5]`; the action
/// uses the fixed encoding `{0, 1} → {-1, +1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub state: [Range; 4],
    pub target: [Range; 4],
}

const STATE_NAMES: [&str; 4] = ["x", "x_dot", "theta", "theta_dot"];

impl Scaler {
    pub fn fit(records: &[&TransitionRecord]) -> Result<Self> {
        let mut state = [Range { min: 0.0, max: 0.0 }; 4];
        let mut target = state;
        for d in 0..4 {
            state[d] = Range::fit(records.iter().map(|r| r.state.to_array()[d]), STATE_NAMES[d])?;
            target[d] = Range::fit(records.iter().map(|r| r.delta()[d]), &format!("delta {}", STATE_NAMES[d]))?;
        }
        Ok(Self { state, target })
    }

    /// Scaled state, not clamped.
    pub fn scale_state(&self, s: &CartPoleState) -> [f64; 4] {
        let v = s.to_array();
        std::array::from_fn(|d| self.state[d].to_unit(v[d]))
    }

    pub fn unscale_state(&self, u: &[f64; 4]) -> CartPoleState {
        CartPoleState::from_array(std::array::from_fn(|d| self.state[d].from_unit(u[d])))
    }

    /// Model input `(x, ẋ, θ, θ̇, action)`, not clamped.
    pub fn scale_input(&self, s: &CartPoleState, action: Action) -> [f64; 5] {
        let st = self.scale_state(s);
        [st[0], st[1], st[2], st[3], action.as_input()]
    }

    pub fn scale_target(&self, delta: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|d| self.target[d].to_half(delta[d]))
    }

    pub fn unscale_target(&self, t: &[f64]) -> [f64; 4] {
        std::array::from_fn(|d| self.target[d].from_half(t[d]))
    }
}

/// One scaled training pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub input: [f64; 5],
    pub target: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self { train: 8_000, val: 1_000, test: 1_000 }
    }
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and cuts train/val/test in that order.
pub fn split_indices(n: usize, sizes: SplitSizes, seed: u64) -> Result<SplitIndices> {
    if sizes.total() > n {
        return Err(Error::InsufficientData(format!(
            "split needs {} records, only {n} available",
            sizes.total()
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let train = idx[..sizes.train].to_vec();
    let val = idx[sizes.train..sizes.train + sizes.val].to_vec();
    let test = idx[sizes.train + sizes.val..sizes.total()].to_vec();
    Ok(SplitIndices { train, val, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Records, their train/val/test partition and the scaled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    records: Vec<TransitionRecord>,
    indices: SplitIndices,
    sizes: SplitSizes,
    scaler: Scaler,
    generation_seed: u64,
    split_seed: u64,
    stats: Option<GenerationStats>,
    train: Vec<Sample>,
    val: Vec<Sample>,
    test: Vec<Sample>,
}

impl SplitDataset {
    /// Splits `records`, fits the scaler on the training part and scales all
    /// three partitions (val/test inputs are clamped to `[-1, 1]`).
    pub fn from_records(
        records: Vec<TransitionRecord>,
        sizes: SplitSizes,
        split_seed: u64,
        generation_seed: u64,
    ) -> Result<Self> {
        if records.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "need at least 3 records, got {}",
                records.len()
            )));
        }
        let indices = split_indices(records.len(), sizes, split_seed)?;
        Self::assemble(records, indices, sizes, None, split_seed, generation_seed, None)
    }

    pub fn from_generated(data: GeneratedData, sizes: SplitSizes, split_seed: u64) -> Result<Self> {
        let mut ds = Self::from_records(data.records, sizes, split_seed, data.seed)?;
        ds.stats = Some(data.stats);
        Ok(ds)
    }

    fn assemble(
        records: Vec<TransitionRecord>,
        indices: SplitIndices,
        sizes: SplitSizes,
        scaler: Option<Scaler>,
        split_seed: u64,
        generation_seed: u64,
        stats: Option<GenerationStats>,
    ) -> Result<Self> {
        let scaler = match scaler {
            Some(s) => s,
            None => {
                let train: Vec<&TransitionRecord> = indices.train.iter().map(|&i| &records[i]).collect();
                Scaler::fit(&train)?
            }
        };
        let scale = |idx: &[usize], clamp: bool| -> Vec<Sample> {
            idx.iter()
                .map(|&i| {
                    let r = &records[i];
                    let mut input = scaler.scale_input(&r.state, r.action);
                    if clamp {
                        input.iter_mut().for_each(|u| *u = u.clamp(-1.0, 1.0));
                    }
                    Sample { input, target: scaler.scale_target(&r.delta()) }
                })
                .collect()
        };
        let train = scale(&indices.train, false);
        let val = scale(&indices.val, true);
        let test = scale(&indices.test, true);
        Ok(Self {
            records,
            indices,
            sizes,
            scaler,
            generation_seed,
            split_seed,
            stats,
            train,
            val,
            test,
        })
    }

    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub fn indices(&self) -> &SplitIndices {
        &self.indices
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn generation_seed(&self) -> u64 {
        self.generation_seed
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed
    }

    pub fn stats(&self) -> Option<&GenerationStats> {
        self.stats.as_ref()
    }

    pub fn samples(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// The first `count` training samples of a `seed`-dependent permutation.
    /// Subsets for the same seed are nested.
    pub fn train_subset(&self, count: usize, seed: u64) -> Vec<Sample> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut seed::stream_rng(seed, seed::STREAM_SUBSET));
        order.iter().take(count).map(|&i| self.train[i]).collect()
    }

    /// Writes the CSV at `path` and the JSON sidecar at [`sidecar_path`].
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            let s = r.state.to_array();
            let n = r.next_state.to_array();
            let mut row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            row.push(r.action.index().to_string());
            row.extend(n.iter().map(|v| v.to_string()));
            row.push(r.episode_id.to_string());
            row.push(r.step_index.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        let meta = DatasetMeta {
            schema_version: DATASET_SCHEMA_VERSION,
            records: self.records.len(),
            generation_seed: self.generation_seed,
            split_seed: self.split_seed,
            sizes: self.sizes,
            generation: self.stats,
            scaler: self.scaler.clone(),
            split: self.indices.clone(),
        };
        let mut f = BufWriter::new(File::create(sidecar_path(path))?);
        serde_json::to_writer_pretty(&mut f, &meta)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: DatasetMeta =
            serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
        if meta.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::Schema {
                what: "dataset".into(),
                expected: DATASET_SCHEMA_VERSION,
                found: meta.schema_version,
            });
        }
        let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != CSV_HEADER {
            return Err(config_err(format!("unexpected dataset header {header:?}")));
        }
        let mut records = Vec::with_capacity(meta.records);
        for row in rdr.records() {
            let row = row?;
            let f = |i: usize| -> Result<f64> {
                row[i].parse().map_err(|e| config_err(format!("bad float {:?}: {e}", &row[i])))
            };
            let u = |i: usize| -> Result<usize> {
                row[i].parse().map_err(|e| config_err(format!("bad integer {:?}: {e}", &row[i])))
            };
            let action: u8 = row[4].parse().map_err(|e| config_err(format!("bad action: {e}")))?;
            records.push(TransitionRecord {
                state: CartPoleState::new(f(0)?, f(1)?, f(2)?, f(3)?),
                action: Action::from_index(action)?,
                next_state: CartPoleState::new(f(5)?, f(6)?, f(7)?, f(8)?),
                episode_id: u(9)?,
                step_index: u(10)?,
            });
        }
        if records.len() != meta.records {
            return Err(config_err(format!(
                "metadata lists {} records, CSV has {}",
                meta.records,
                records.len()
            )));
        }
        let all = meta.split.train.iter().chain(&meta.split.val).chain(&meta.split.test);
        if let Some(&bad) = all.clone().find(|&&i| i >= records.len()) {
            return Err(config_err(format!("split index {bad} out of range")));
        }
        Self::assemble(
            records,
            meta.split,
            meta.sizes,
            Some(meta.scaler),
            meta.split_seed,
            meta.generation_seed,
            meta.generation,
        )
    }
}

pub const CSV_HEADER: [&str; 11] = [
    "x",
    "x_dot",
    "theta",
    "theta_dot",
    "action",
    "next_x",
    "next_x_dot",
    "next_theta",
    "next_theta_dot",
    "episode_id",
    "step",
];

/// `data/dataset.csv` → `data/dataset.meta.json`
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    schema_version: u32,
    records: usize,
    generation_seed: u64,
    split_seed: u64,
    sizes: SplitSizes,
    generation: Option<GenerationStats>,
    scaler: Scaler,
    split: SplitIndices,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small(seed: u64, n: usize) -> SplitDataset {
        let data = generate(&CartPole::default(), seed, n).unwrap();
        let t = n * 8 / 10;
        let v = (n - t) / 2;
        SplitDataset::from_generated(data, SplitSizes { train: t, val: v, test: n - t - v }, seed + 1).unwrap()
    }

    #[test]
    fn generates_exact_size_deterministically() {
        let a = generate(&CartPole::default(), 1, 1234).unwrap();
        let b = generate(&CartPole::default(), 1, 1234).unwrap();
        assert_eq!(a.records.len(), 1234);
        assert_eq!(a, b);
        let m = a.stats.mean_episode_length;
        assert!((10.0..40.0).contains(&m), "{m}");
        // records chain within an episode
        for w in a.records.windows(2) {
            if w[0].episode_id == w[1].episode_id {
                assert_eq!(w[0].next_state, w[1].state);
                assert_eq!(w[0].step_index + 1, w[1].step_index);
            }
        }
    }

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let s = split_indices(100, SplitSizes { train: 80, val: 10, test: 10 }, 3).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(s, split_indices(100, SplitSizes { train: 80, val: 10, test: 10 }, 3).unwrap());
        assert_ne!(s, split_indices(100, SplitSizes { train: 80, val: 10, test: 10 }, 4).unwrap());
        assert!(matches!(
            split_indices(10, SplitSizes::default(), 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn scaling_endpoints_and_zero_delta() {
        let ds = small(2, 600);
        let train = ds.samples(Split::Train);
        for d in 0..4 {
            let lo = train.iter().map(|s| s.input[d]).fold(f64::INFINITY, f64::min);
            let hi = train.iter().map(|s| s.input[d]).fold(f64::NEG_INFINITY, f64::max);
            assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
            let lo = train.iter().map(|s| s.target[d]).fold(f64::INFINITY, f64::min);
            let hi = train.iter().map(|s| s.target[d]).fold(f64::NEG_INFINITY, f64::max);
            assert!((lo + 0.5).abs() < 1e-12 && (hi - 0.5).abs() < 1e-12);
        }
        assert!(train.iter().all(|s| s.input[4] == 1.0 || s.input[4] == -1.0));
        let zero = ds.scaler().scale_target(&[0.0; 4]);
        let back = ds.scaler().unscale_target(&zero);
        assert!(back.iter().all(|v| v.abs() < 1e-15));
        for s in ds.samples(Split::Val).iter().chain(ds.samples(Split::Test)) {
            assert!(s.input.iter().all(|u| (-1.0..=1.0).contains(u)));
        }
    }

    #[test]
    fn degenerate_dimension_rejected() {
        let r = TransitionRecord {
            state: CartPoleState::default(),
            action: Action::Left,
            next_state: CartPoleState::default(),
            episode_id: 0,
            step_index: 0,
        };
        let err = SplitDataset::from_records(vec![r; 5], SplitSizes { train: 3, val: 1, test: 1 }, 0, 0);
        assert!(matches!(err, Err(Error::Config(_))));
        let err = SplitDataset::from_records(vec![r; 2], SplitSizes { train: 1, val: 1, test: 0 }, 0, 0);
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn nested_subsets() {
        let ds = small(4, 400);
        let a = ds.train_subset(50, 9);
        let b = ds.train_subset(200, 9);
        assert_eq!(&b[..50], &a[..]);
    }

    #[test]
    fn save_load_round_trip() {
        let ds = small(5, 300);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.csv");
        ds.save(&path).unwrap();
        let back = SplitDataset::load(&path).unwrap();
        assert_eq!(back, ds);
        let lines = std::fs::read_to_string(&path).unwrap().lines().count();
        assert_eq!(lines, 301);

        let meta = sidecar_path(&path);
        let text = std::fs::read_to_string(&meta).unwrap();
        std::fs::write(&meta, text.replace("\"schema_version\": 1", "\"schema_version\": 7")).unwrap();
        assert!(matches!(SplitDataset::load(&path), Err(Error::Schema { found: 7, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn scaler_round_trip(v in prop::array::uniform4(-50.0f64..50.0)) {
            let ds = small(6, 200);
            let sc = ds.scaler();
            let s = CartPoleState::from_array(v);
            let back = sc.unscale_state(&sc.scale_state(&s)).to_array();
            let t = sc.unscale_target(&sc.scale_target(&v));
            for d in 0..4 {
                prop_assert!((back[d] - v[d]).abs() <= 1e-12 * (1.0 + v[d].abs()));
                prop_assert!((t[d] - v[d]).abs() <= 1e-12 * (1.0 + v[d].abs()));
            }
        }
    }
}
