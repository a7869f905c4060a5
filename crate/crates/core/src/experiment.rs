//! Randomized experiment over trial configurations.
//!
//! Every trial draws each of the nine binary covariates independently and
//! uniformly from its two-arm table, runs to completion, and lands as one row
//! in a CSV dataset. Covariates and the trial's own seed derive from a
//! ChaCha8 stream keyed only by `(master_seed, trial_index)`, so results are
//! byte-identical no matter how many worker threads run the trials or in
//! which order they finish.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::PaymentRule;
use crate::error::{Error, Result};
use crate::trial::{run_trial, TrialConfig, DEFAULT_MAX_EPISODES};

/// Default number of trials in a full experiment.
pub const DEFAULT_NUM_TRIALS: u64 = 427;

/// Two-arm table for every randomized covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmTable {
    /// Payment rule arms (second-price = 0, first-price = 1).
    pub design: [PaymentRule; 2],
    /// Bidder-count arms.
    pub n: [usize; 2],
    /// Learning-rate arms.
    pub alpha: [f64; 2],
    /// Discount-factor arms.
    pub gamma: [f64; 2],
    /// Exploration-kind arms (false = Boltzmann, true = epsilon-greedy).
    pub egreedy: [bool; 2],
    /// Update-mode arms (false = synchronous, true = asynchronous).
    pub asynchronous: [bool; 2],
    /// State-feedback arms.
    pub feedback: [bool; 2],
    /// Bid-grid size arms.
    pub num_actions: [usize; 2],
    /// Exploration-decay arms.
    pub decay: [f64; 2],
}

impl Default for ArmTable {
    fn default() -> Self {
        Self {
            design: [PaymentRule::SecondPrice, PaymentRule::FirstPrice],
            n: [2, 4],
            alpha: [0.01, 0.1],
            gamma: [0.0, 0.95],
            egreedy: [false, true],
            asynchronous: [false, true],
            feedback: [false, true],
            num_actions: [6, 11],
            decay: [0.9999, 0.99995],
        }
    }
}

/// Full experiment configuration. Defaults mirror the reference experiment:
/// 427 trials, 250,000-episode cap, and the standard arm table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub num_trials: u64,
    pub master_seed: u64,
    pub max_episodes: u64,
    pub arms: ArmTable,
    /// Worker threads; 0 means one per available core. Does not affect
    /// results, only wall time.
    pub parallelism: usize,
    /// Default dataset path for the CLI; ignored by the library runner.
    pub output: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_trials: DEFAULT_NUM_TRIALS,
            master_seed: 0,
            max_episodes: DEFAULT_MAX_EPISODES,
            arms: ArmTable::default(),
            parallelism: 0,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_trials == 0 {
            return Err(Error::Config("num_trials must be at least 1".into()));
        }
        if self.max_episodes == 0 {
            return Err(Error::Config("max_episodes must be at least 1".into()));
        }
        Ok(())
    }
}

/// One dataset row: the sampled covariates, the trial outcomes, and enough
/// bookkeeping to reproduce the trial in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub design: u8,
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub egreedy: u8,
    pub asynchronous: u8,
    pub feedback: u8,
    pub num_actions: usize,
    pub decay: f64,
    pub bid2val: f64,
    pub vol: f64,
    pub episodes: u64,
    pub converged: bool,
    pub seed: u64,
}

/// Sidecar metadata written next to the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMeta {
    pub tool_version: String,
    pub master_seed: u64,
    pub num_trials: u64,
    pub max_episodes: u64,
    pub parallelism: usize,
    pub arms: ArmTable,
    pub wall_time_secs: f64,
}

/// A completed experiment: ordered trial records plus run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<TrialRecord>,
    pub meta: Option<ExperimentMeta>,
}

/// Draw the configuration of trial `trial_index`.
///
/// The draw stream is ChaCha8 keyed by `master_seed` on stream `trial_index`,
/// so any subset of trials can be re-derived independently. Draw order:
/// design, n, alpha, gamma, egreedy, asynchronous, feedback, num_actions,
/// decay (one boolean each picking the arm), then one u64 for the trial seed.
pub fn sample_trial_config(
    arms: &ArmTable,
    master_seed: u64,
    trial_index: u64,
    max_episodes: u64,
) -> TrialConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    let pick = |i: &mut ChaCha8Rng| usize::from(i.gen::<bool>());
    let design = arms.design[pick(&mut rng)];
    let n = arms.n[pick(&mut rng)];
    let alpha = arms.alpha[pick(&mut rng)];
    let gamma = arms.gamma[pick(&mut rng)];
    let egreedy = arms.egreedy[pick(&mut rng)];
    let asynchronous = arms.asynchronous[pick(&mut rng)];
    let feedback = arms.feedback[pick(&mut rng)];
    let num_actions = arms.num_actions[pick(&mut rng)];
    let decay = arms.decay[pick(&mut rng)];
    let seed = rng.gen::<u64>();
    TrialConfig {
        design,
        num_bidders: n,
        alpha,
        gamma,
        egreedy,
        asynchronous,
        feedback,
        num_actions,
        decay,
        max_episodes,
        seed,
    }
}

fn record_for(trial_index: u64, config: &TrialConfig) -> Result<TrialRecord> {
    let outcomes = run_trial(config)?;
    Ok(TrialRecord {
        trial: trial_index,
        design: config.design.design_code(),
        n: config.num_bidders,
        alpha: config.alpha,
        gamma: config.gamma,
        egreedy: u8::from(config.egreedy),
        asynchronous: u8::from(config.asynchronous),
        feedback: u8::from(config.feedback),
        num_actions: config.num_actions,
        decay: config.decay,
        bid2val: outcomes.bid2val,
        vol: outcomes.vol,
        episodes: outcomes.episodes,
        converged: outcomes.converged,
        seed: config.seed,
    })
}

/// Run the full randomized experiment.
///
/// Trials execute in parallel but are collected in trial order; the record
/// vector depends only on the configuration, never on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Dataset> {
    config.validate()?;
    let started = Instant::now();
    let total = config.num_trials;
    let done = AtomicU64::new(0);
    let progress_every = (total / 20).max(1);

    let run_all = || -> Result<Vec<TrialRecord>> {
        (0..total)
            .into_par_iter()
            .map(|i| {
                let trial_config =
                    sample_trial_config(&config.arms, config.master_seed, i, config.max_episodes);
                let record = record_for(i, &trial_config)?;
                let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
                if finished.is_multiple_of(progress_every) || finished == total {
                    let elapsed = started.elapsed().as_secs_f64();
                    let eta = elapsed / finished as f64 * (total - finished) as f64;
                    eprintln!(
                        "[experiment] {finished}/{total} trials done ({elapsed:.1}s elapsed, ~{eta:.1}s left)"
                    );
                }
                Ok(record)
            })
            .collect()
    };

    let records = if config.parallelism == 0 {
        run_all()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
        pool.install(run_all)?
    };

    let meta = ExperimentMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.master_seed,
        num_trials: config.num_trials,
        max_episodes: config.max_episodes,
        parallelism: config.parallelism,
        arms: config.arms.clone(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok(Dataset {
        records,
        meta: Some(meta),
    })
}

/// Exact header of the dataset CSV, in column order.
pub const DATASET_HEADER: &str =
    "trial,design,N,alpha,gamma,egreedy,asynchronous,feedback,num_actions,decay,bid2val,vol,episodes,converged,seed";

/// Serialize the dataset to CSV in memory. The header is written explicitly
/// (so an empty dataset still yields a header-only file) and floats use
/// shortest round-trip formatting, so reading the file back reproduces every
/// value bit for bit.
pub fn dataset_to_csv(dataset: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_HEADER.as_bytes());
    out.push(b'\n');
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for record in &dataset.records {
        writer.serialize(record)?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Invariant(format!("CSV buffer flush failed: {e}")))
}

/// Write the dataset CSV atomically (temp file + rename).
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let bytes = dataset_to_csv(dataset)?;
    let tmp = path.with_extension("csv.tmp");
    let mut file = fs::File::create(&tmp)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    drop(file);
    if let Err(e) = fs::rename(&tmp, path) {
        // Leave the data behind under a clearly marked name rather than
        // silently dropping a finished run.
        let partial = path.with_extension("csv.partial");
        let _ = fs::rename(&tmp, &partial);
        return Err(e.into());
    }
    Ok(())
}

/// Path of the metadata sidecar for a dataset path.
pub fn metadata_path(dataset_path: &Path) -> std::path::PathBuf {
    let mut name = dataset_path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    dataset_path.with_file_name(name)
}

/// Write the metadata sidecar JSON next to the dataset.
pub fn write_metadata(dataset: &Dataset, dataset_path: &Path) -> Result<()> {
    if let Some(meta) = &dataset.meta {
        let json = serde_json::to_string_pretty(meta)?;
        fs::write(metadata_path(dataset_path), json)?;
    }
    Ok(())
}

/// Read a dataset CSV written by `write_dataset` (headers required, column
/// order free). The metadata sidecar is loaded when present.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    let meta_file = metadata_path(path);
    let meta = if meta_file.exists() {
        Some(serde_json::from_str(&fs::read_to_string(meta_file)?)?)
    } else {
        None
    };
    Ok(Dataset { records, meta })
}
