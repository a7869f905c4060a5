//! Command-line interface to the auction simulator.
//!
//! Three working subcommands share one binary: `trial` replays a single
//! market and logs its episodes, `experiment` runs the randomized trial
//! battery into a dataset CSV, and `analyze` turns such a dataset into
//! summary, regression, boxplot, and heterogeneity tables. Outputs default
//! to the directory in `AUCTIONLAB_OUT_DIR` (falling back to the working
//! directory). Exit codes: 0 success, 1 analysis failure, 2 usage or
//! configuration error, 3 I/O failure.

use std::env;
use std::fs::{self, File};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use auctionlab::auction::PaymentRule;
use auctionlab::experiment::{run_experiment, write_dataset, write_metadata, ExperimentConfig};
use auctionlab::stats::{
    boxplot_csv, boxplots_by_design, cate_csv, interacted_cate, moving_average, moving_average_csv,
    regressions_csv, render_cate_text, render_regressions_text, render_summary_text,
    run_outcome_regressions, summarize, summary_csv, DataTable, COVARIATE_COLUMNS,
};
use auctionlab::trial::{TrialConfig, TrialEngine, DEFAULT_MAX_EPISODES, OUTCOME_WINDOW};
use auctionlab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "auctionlab",
    version,
    about = "Q-learning bidders in repeated first- and second-price auctions",
    after_help = "Output files land in --out/--out-dir when given, else in \
                  $AUCTIONLAB_OUT_DIR, else in the working directory."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and write its episode log, moving average, and outcomes
    Trial(TrialArgs),
    /// Run a randomized experiment and write the trial dataset
    Experiment(ExperimentArgs),
    /// Analyze a dataset CSV into summary, regression, and effect tables
    Analyze(AnalyzeArgs),
    /// Print the tool version
    Version,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignArg {
    /// Winner pays their own bid
    First,
    /// Winner pays the second-highest bid
    Second,
}

impl From<DesignArg> for PaymentRule {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::First => PaymentRule::FirstPrice,
            DesignArg::Second => PaymentRule::SecondPrice,
        }
    }
}

#[derive(Args)]
struct TrialArgs {
    /// Payment rule (experiment randomizes over both)
    #[arg(long, value_enum, default_value_t = DesignArg::Second)]
    design: DesignArg,

    /// Number of bidders (experiment arms: 2 or 4)
    #[arg(long = "n", default_value_t = 4)]
    n: usize,

    /// Learning rate in (0, 1] (experiment arms: 0.01 or 0.1)
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,

    /// Discount factor in [0, 1) (experiment arms: 0.0 or 0.95)
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,

    /// Epsilon-greedy exploration (experiment arm: egreedy=1)
    #[arg(long, conflicts_with = "boltzmann")]
    egreedy: bool,

    /// Boltzmann softmax exploration, the default (experiment arm: egreedy=0)
    #[arg(long)]
    boltzmann: bool,

    /// Update only the played bid, the default (experiment arm: asynchronous=1)
    #[arg(long = "async", conflicts_with = "sync")]
    r#async: bool,

    /// Update every bid with counterfactual rewards (experiment arm: asynchronous=0)
    #[arg(long)]
    sync: bool,

    /// Condition on the previous winning bid, the default (experiment arm: feedback=1)
    #[arg(long, conflicts_with = "no_feedback")]
    feedback: bool,

    /// Play memoryless, single-state agents (experiment arm: feedback=0)
    #[arg(long = "no-feedback")]
    no_feedback: bool,

    /// Number of evenly spaced bid levels on [0, 1] (experiment arms: 6 or 11)
    #[arg(long, default_value_t = 6)]
    actions: usize,

    /// Multiplicative exploration decay per episode (experiment arms: 0.9999 or 0.99995)
    #[arg(long, default_value_t = 0.9999)]
    decay: f64,

    /// Episode cap
    #[arg(long, default_value_t = DEFAULT_MAX_EPISODES)]
    max_episodes: u64,

    /// Trial RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Keep every k-th episode in the log (1 = full log)
    #[arg(long, default_value_t = 100)]
    log_every: u64,

    /// Also dump each agent's final Q-table as q_agent<i>.csv
    #[arg(long)]
    dump_q: bool,

    /// Output directory [default: $AUCTIONLAB_OUT_DIR or .]
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Number of randomized trials [default: 427]
    #[arg(long)]
    trials: Option<u64>,

    /// Master seed; per-trial seeds derive from it [default: 0]
    #[arg(long)]
    seed: Option<u64>,

    /// Episode cap per trial [default: 250000]
    #[arg(long)]
    max_episodes: Option<u64>,

    /// Worker threads; 0 uses every core [default: 0]
    #[arg(long)]
    parallel: Option<usize>,

    /// Experiment config JSON; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,

    /// Dataset path [default: <out dir>/dataset.csv]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Dataset CSV to analyze
    #[arg(long = "in")]
    input: PathBuf,

    /// Write the summary table and per-outcome regression tables
    #[arg(long)]
    tables: bool,

    /// Write per-design five-number summaries of every outcome
    #[arg(long)]
    boxplots: bool,

    /// Write heterogeneous-treatment-effect tables for bid2val
    #[arg(long)]
    cate: bool,

    /// Output directory [default: $AUCTIONLAB_OUT_DIR or .]
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Trial(args) => cmd_trial(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Version => {
            println!("auctionlab {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Exit-code contract: 1 analysis failure, 2 usage/config, 3 I/O.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::MissingColumns(_) | Error::Json(_) => 2,
        Error::RankDeficient(_) | Error::Invariant(_) => 1,
        Error::Io(_) => 3,
        // CSV errors are usage errors (malformed data) unless the underlying
        // cause was I/O.
        Error::Csv(c) => match c.kind() {
            csv::ErrorKind::Io(_) => 3,
            _ => 2,
        },
    }
}

fn default_out_dir() -> PathBuf {
    env::var_os("AUCTIONLAB_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn resolve_out_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.unwrap_or_else(default_out_dir)
}

fn cmd_trial(args: TrialArgs) -> Result<()> {
    let config = TrialConfig {
        design: args.design.into(),
        num_bidders: args.n,
        alpha: args.alpha,
        gamma: args.gamma,
        egreedy: args.egreedy,
        asynchronous: !args.sync,
        feedback: !args.no_feedback,
        num_actions: args.actions,
        decay: args.decay,
        max_episodes: args.max_episodes,
        seed: args.seed,
    };
    config.validate()?;
    if args.log_every == 0 {
        return Err(Error::Config("--log-every must be at least 1".into()));
    }
    eprintln!("effective config: {}", serde_json::to_string(&config)?);

    let out_dir = resolve_out_dir(args.out_dir);
    fs::create_dir_all(&out_dir)?;
    let log_path = out_dir.join("trial_episodes.csv");
    let mut log = BufWriter::new(File::create(&log_path)?);
    write!(log, "episode,state,winning_bid,price")?;
    for i in 0..config.num_bidders {
        write!(log, ",bid{i}")?;
    }
    writeln!(log)?;

    let mut engine = TrialEngine::new(&config)?;
    let mut log_err: Option<std::io::Error> = None;
    let outcomes = engine.run(&mut |r| {
        if log_err.is_some() || r.episode % args.log_every != 0 {
            return;
        }
        let mut write_row = || -> std::io::Result<()> {
            write!(
                log,
                "{},{},{},{}",
                r.episode, r.state, r.winning_bid, r.price
            )?;
            for b in r.bids {
                write!(log, ",{b}")?;
            }
            writeln!(log)
        };
        if let Err(e) = write_row() {
            log_err = Some(e);
        }
    });
    if let Some(e) = log_err {
        return Err(e.into());
    }
    log.flush()?;

    let ma = moving_average(engine.winning_bids(), OUTCOME_WINDOW)?;
    fs::write(
        out_dir.join("trial_moving_avg.csv"),
        moving_average_csv(&ma),
    )?;
    if args.dump_q {
        for (i, agent) in engine.agents().iter().enumerate() {
            fs::write(out_dir.join(format!("q_agent{i}.csv")), agent.q.to_csv())?;
        }
    }
    let json = serde_json::to_string_pretty(&outcomes)?;
    fs::write(out_dir.join("trial_outcomes.json"), &json)?;
    println!("{json}");
    Ok(())
}

/// Create the target's parent directory and prove the file is creatable,
/// so experiments fail on I/O before burning compute.
fn probe_writable(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".write-probe");
    let probe = path.with_file_name(name);
    File::create(&probe)?;
    fs::remove_file(&probe)?;
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let mut config: ExperimentConfig = match &args.config {
        Some(path) => serde_json::from_reader(File::open(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = args.trials {
        config.num_trials = t;
    }
    if let Some(s) = args.seed {
        config.master_seed = s;
    }
    if let Some(m) = args.max_episodes {
        config.max_episodes = m;
    }
    if let Some(p) = args.parallel {
        config.parallelism = p;
    }
    let out = args
        .out
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| default_out_dir().join("dataset.csv"));
    config.output = Some(out.display().to_string());
    config.validate()?;
    eprintln!("effective config: {}", serde_json::to_string(&config)?);

    probe_writable(&out)?;
    let dataset = run_experiment(&config)?;
    write_dataset(&dataset, &out)?;
    write_metadata(&dataset, &out)?;
    eprintln!("wrote {} trials", dataset.records.len());
    println!("{}", out.display());
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let run_all = !(args.tables || args.boxplots || args.cate);
    let out_dir = resolve_out_dir(args.out_dir);
    eprintln!(
        "effective config: {}",
        serde_json::json!({
            "in": args.input.display().to_string(),
            "tables": args.tables || run_all,
            "boxplots": args.boxplots || run_all,
            "cate": args.cate || run_all,
            "out_dir": out_dir.display().to_string(),
        })
    );
    let data = DataTable::from_csv_path(&args.input)?;
    fs::create_dir_all(&out_dir)?;

    if run_all || args.tables {
        let rows = summarize(&data)?;
        fs::write(out_dir.join("summary.txt"), render_summary_text(&rows))?;
        fs::write(out_dir.join("summary.csv"), summary_csv(&rows))?;
        for reg in run_outcome_regressions(&data)? {
            let text = render_regressions_text(&reg);
            eprint!("{text}");
            fs::write(
                out_dir.join(format!("regression_{}.txt", reg.outcome)),
                text,
            )?;
            fs::write(
                out_dir.join(format!("regression_{}.csv", reg.outcome)),
                regressions_csv(&reg),
            )?;
        }
    }
    if run_all || args.boxplots {
        let rows = boxplots_by_design(&data)?;
        fs::write(out_dir.join("outcomes_by_design.csv"), boxplot_csv(&rows))?;
    }
    if run_all || args.cate {
        let modifiers: Vec<&str> = COVARIATE_COLUMNS
            .iter()
            .copied()
            .filter(|&c| c != "design")
            .collect();
        let cate = interacted_cate(&data, "bid2val", "design", &modifiers)?;
        fs::write(out_dir.join("cate_bid2val.txt"), render_cate_text(&cate))?;
        fs::write(out_dir.join("cate_bid2val.csv"), cate_csv(&cate))?;
    }
    eprintln!("analysis artifacts written to {}", out_dir.display());
    Ok(())
}
