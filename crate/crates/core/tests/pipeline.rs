//! Library-level integration of the full pipeline: experiment to dataset
//! file to analysis, plus reproducibility of individual rows.

use auctionlab::auction::PaymentRule;
use auctionlab::experiment::{
    read_dataset, run_experiment, write_dataset, write_metadata, ExperimentConfig,
};
use auctionlab::stats::{
    boxplots_by_design, interacted_cate, moving_average, run_outcome_regressions, summarize,
    DataTable, COVARIATE_COLUMNS,
};
use auctionlab::trial::{run_trial, TrialConfig, TrialEngine};

fn small_experiment() -> ExperimentConfig {
    ExperimentConfig {
        num_trials: 40,
        master_seed: 17,
        max_episodes: 2_000,
        ..ExperimentConfig::default()
    }
}

#[test]
fn dataset_file_round_trip_preserves_everything() {
    let dataset = run_experiment(&small_experiment()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.csv");
    write_dataset(&dataset, &path).unwrap();
    write_metadata(&dataset, &path).unwrap();

    let reread = read_dataset(&path).unwrap();
    assert_eq!(dataset.records, reread.records);
    assert_eq!(dataset.meta.as_ref().unwrap().master_seed, 17);
    let meta = reread.meta.expect("sidecar metadata should be picked up");
    assert_eq!(meta.num_trials, 40);
    assert_eq!(meta.max_episodes, 2_000);

    // The generic numeric reader sees the same columns as the in-memory view.
    let from_file = DataTable::from_csv_path(&path).unwrap();
    let in_memory = DataTable::from_dataset(&dataset);
    assert_eq!(from_file.num_rows(), 40);
    let mut shared: Vec<&str> = vec!["trial", "bid2val", "vol", "episodes", "converged"];
    shared.extend(COVARIATE_COLUMNS);
    for col in shared {
        assert_eq!(
            from_file.column(col).unwrap(),
            in_memory.column(col).unwrap(),
            "column {col} must survive the file round trip exactly"
        );
    }
}

#[test]
fn analysis_runs_end_to_end_on_fresh_dataset() {
    let dataset = run_experiment(&small_experiment()).unwrap();
    let data = DataTable::from_dataset(&dataset);

    let summary = summarize(&data).unwrap();
    assert_eq!(summary.len(), 12);
    let bid2val = &summary[0];
    assert_eq!(bid2val.variable, "bid2val");
    assert!(bid2val.min >= 0.0 && bid2val.max <= 1.0);

    let regressions = run_outcome_regressions(&data).unwrap();
    assert_eq!(regressions.len(), 3);
    for reg in &regressions {
        assert_eq!(reg.simple.terms.len(), 2);
        assert_eq!(reg.full.terms.len(), 10);
        assert_eq!(reg.full.n_obs, 40);
        assert!(reg.full.robust);
        // Both specifications explain the same outcome; the nested one
        // cannot fit worse.
        assert!(reg.full.r_squared >= reg.simple.r_squared - 1e-12);
    }

    let boxes = boxplots_by_design(&data).unwrap();
    assert_eq!(boxes.len(), 6, "three outcomes, two payment rules");
    for b in &boxes {
        assert!(b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max);
    }

    let modifiers: Vec<&str> = COVARIATE_COLUMNS
        .iter()
        .copied()
        .filter(|&c| c != "design")
        .collect();
    let cate = interacted_cate(&data, "bid2val", "design", &modifiers).unwrap();
    assert_eq!(cate.rows.len(), 9, "eight modifiers plus cate_intercept");
    assert_eq!(cate.rows.last().unwrap().name, "cate_intercept");
}

#[test]
fn dataset_rows_are_individually_reproducible() {
    let dataset = run_experiment(&small_experiment()).unwrap();
    for record in dataset.records.iter().step_by(7) {
        let config = TrialConfig {
            design: PaymentRule::try_from(record.design).unwrap(),
            num_bidders: record.n,
            alpha: record.alpha,
            gamma: record.gamma,
            egreedy: record.egreedy == 1,
            asynchronous: record.asynchronous == 1,
            feedback: record.feedback == 1,
            num_actions: record.num_actions,
            decay: record.decay,
            max_episodes: 2_000,
            seed: record.seed,
        };
        let outcomes = run_trial(&config).unwrap();
        assert_eq!(outcomes.bid2val, record.bid2val, "trial {}", record.trial);
        assert_eq!(outcomes.vol, record.vol, "trial {}", record.trial);
        assert_eq!(outcomes.episodes, record.episodes, "trial {}", record.trial);
        assert_eq!(
            outcomes.converged, record.converged,
            "trial {}",
            record.trial
        );
    }
}

#[test]
fn moving_average_of_real_trial_stays_on_grid_range() {
    let config = TrialConfig {
        design: PaymentRule::FirstPrice,
        num_bidders: 2,
        alpha: 0.1,
        gamma: 0.0,
        egreedy: true,
        asynchronous: true,
        feedback: true,
        num_actions: 6,
        decay: 0.999,
        max_episodes: 5_000,
        seed: 8,
    };
    let mut engine = TrialEngine::new(&config).unwrap();
    let _ = engine.run(&mut |_| {});
    let ma = moving_average(engine.winning_bids(), 1_000).unwrap();
    assert_eq!(ma.len(), 4_001);
    assert_eq!(ma.first().unwrap().0, 999);
    assert_eq!(ma.last().unwrap().0, 4_999);
    assert!(ma.iter().all(|&(_, v)| (0.0..=1.0).contains(&v)));
}
