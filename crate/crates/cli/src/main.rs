use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use edfscope::attack::attack_window;
use edfscope::experiments::{run_experiment, ExperimentConfig, ExperimentKind, PAPER_SETS_PER_CELL};
use edfscope::formats::{
    read_taskset, read_trace, write_attack_summary, write_manifest, write_taskset, write_trace, Manifest,
    ManifestEntry,
};
use edfscope::metrics::{coverage_dyps, to_f64};
use edfscope::seed::derive_seed;
use edfscope::taskset_gen::DEFAULT_MAX_ATTEMPTS;
use edfscope::{
    generate, run_dyps, run_scheduleak_baseline, simulate, Constraint, GenConfig, ScheduleTrace, TaskSet, TieBreak,
    Tick, VariationConfig,
};

#[derive(Parser)]
#[command(name = "edfscope", version, about = "EDF schedule simulation and phase inference lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one task set, or a batch with a manifest.
    GenTasksets(GenArgs),
    /// Simulate a task-set file and write the schedule trace (JSON Lines).
    Simulate(SimArgs),
    /// Run the phase inference attack on a task set.
    Attack(AttackArgs),
    /// Run one experiment (or `all`) and write CSV.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TieBreakArg {
    Random,
    LowestId,
}

impl From<TieBreakArg> for TieBreak {
    fn from(t: TieBreakArg) -> Self {
        match t {
            TieBreakArg::Random => TieBreak::SeededRandom,
            TieBreakArg::LowestId => TieBreak::LowestId,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "random")]
    tie_break: TieBreakArg,
    /// Run every job for its WCET and release sporadic tasks periodically.
    #[arg(long)]
    no_variation: bool,
}

impl RunArgs {
    fn variation(&self) -> VariationConfig {
        if self.no_variation {
            VariationConfig::disabled().with_seed(self.seed)
        } else {
            VariationConfig::default().with_seed(self.seed)
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstraintArg {
    CoverageGeOne,
    NoHarmonic,
    CoverageInBin,
    ForceHarmonic,
    ForceInvalidIntervals,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    n_tasks: usize,
    #[arg(long, default_value_t = 0.001)]
    util_min: f64,
    #[arg(long, default_value_t = 1.0)]
    util_max: f64,
    #[arg(long, value_enum, default_value = "coverage-ge-one")]
    constraint: ConstraintArg,
    /// Coverage bin `[LO, HI)` for `--constraint coverage-in-bin`.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    coverage_bin: Option<Vec<f64>>,
    /// Number of sets. Above 1, `--out` names a directory.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    max_attempts: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    taskset: PathBuf,
    /// Simulation horizon in ticks. Defaults to the horizon an attack of
    /// `--lcm-multiples` needs.
    #[arg(long)]
    horizon: Option<Tick>,
    #[arg(long, default_value_t = 10)]
    lcm_multiples: u32,
    #[arg(long, default_value_t = 5)]
    warmup_periods: Tick,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    taskset: PathBuf,
    /// Trace to attack. Without it the task set is simulated first.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Attack duration in multiples of LCM(T_o, T_v).
    #[arg(long, default_value_t = 10)]
    lcm_multiples: u32,
    #[arg(long, default_value_t = 5)]
    warmup_periods: Tick,
    /// Use this observer phase instead of reconstructing it.
    #[arg(long)]
    override_phi_o: Option<Tick>,
    /// Run the unclipped fixed-priority attack instead.
    #[arg(long)]
    baseline: bool,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment name, or `all`.
    name: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    sets_per_cell: Option<usize>,
    /// 100 sets per cell.
    #[arg(long, conflicts_with = "sets_per_cell")]
    paper_scale: bool,
    /// CSV file, or a directory for `all`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "random")]
    tie_break: TieBreakArg,
    #[arg(long)]
    no_variation: bool,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_taskset(path: &Path) -> Result<TaskSet> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_taskset(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn gen_tasksets(a: GenArgs) -> Result<()> {
    let constraint = match a.constraint {
        ConstraintArg::CoverageGeOne => Constraint::CoverageGeOne,
        ConstraintArg::NoHarmonic => Constraint::NoHarmonic,
        ConstraintArg::ForceHarmonic => Constraint::ForceHarmonic,
        ConstraintArg::ForceInvalidIntervals => Constraint::ForceInvalidIntervals,
        ConstraintArg::CoverageInBin => match a.coverage_bin.as_deref() {
            Some(&[lo, hi]) => Constraint::CoverageInBin { lo, hi },
            _ => bail!("--constraint coverage-in-bin needs --coverage-bin LO HI"),
        },
    };
    let cfg_for = |seed| GenConfig {
        n_tasks: a.n_tasks,
        util_range: (a.util_min, a.util_max),
        constraint,
        rng_seed: seed,
        max_attempts: a.max_attempts,
        ..GenConfig::default()
    };
    if a.count == 0 {
        bail!("--count must be at least 1");
    }
    if a.count == 1 {
        let ts = generate(&cfg_for(a.seed))?;
        let mut w = output(a.out.as_deref())?;
        write_taskset(&ts, &mut w)?;
        w.flush()?;
        return Ok(());
    }
    let dir = a.out.context("batch generation needs --out <directory>")?;
    fs::create_dir_all(&dir)?;
    let mut manifest = Manifest {
        master_seed: a.seed,
        sets: Vec::with_capacity(a.count),
    };
    for i in 0..a.count {
        let seed = derive_seed(a.seed, &[i as u64]);
        let ts = generate(&cfg_for(seed))?;
        let file = format!("set_{i:05}.json");
        write_taskset(&ts, BufWriter::new(File::create(dir.join(&file))?))?;
        let (o, v) = (ts.observer(), ts.victim());
        manifest.sets.push(ManifestEntry {
            set_id: i,
            file,
            seed,
            constraint: constraint.to_string(),
            utilization: ts.utilization_f64(),
            coverage_dyps: to_f64(coverage_dyps(o.wcet, o.period, v.period)?),
        });
    }
    write_manifest(&manifest, BufWriter::new(File::create(dir.join("manifest.json"))?))?;
    eprintln!("wrote {} task sets to {}", a.count, dir.display());
    Ok(())
}

fn default_horizon(ts: &TaskSet, mult: u32, warmup_periods: Tick) -> Result<Tick> {
    let to = ts.observer().period;
    Ok(attack_window(ts, mult, warmup_periods * to)?.end + to)
}

fn simulate_cmd(a: SimArgs) -> Result<()> {
    let ts = load_taskset(&a.taskset)?;
    let horizon = match a.horizon {
        Some(h) => h,
        None => default_horizon(&ts, a.lcm_multiples, a.warmup_periods)?,
    };
    let trace = simulate(&ts, horizon, &a.run.variation(), a.run.tie_break.into())?;
    let mut w = output(a.out.as_deref())?;
    write_trace(&trace, &mut w)?;
    w.flush()?;
    Ok(())
}

fn attack_cmd(a: AttackArgs) -> Result<()> {
    let ts = load_taskset(&a.taskset)?;
    let window = attack_window(&ts, a.lcm_multiples, a.warmup_periods * ts.observer().period)?;
    let trace: ScheduleTrace = match &a.trace {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_trace(BufReader::new(f))?
        }
        None => simulate(
            &ts,
            default_horizon(&ts, a.lcm_multiples, a.warmup_periods)?,
            &a.run.variation(),
            a.run.tie_break.into(),
        )?,
    };
    let result = if a.baseline {
        if a.override_phi_o.is_some() {
            bail!("--override-phi-o does not apply to --baseline");
        }
        run_scheduleak_baseline(&trace, &ts, window)?
    } else {
        run_dyps(&trace, &ts, window, a.override_phi_o)?
    };
    let mut w = output(a.out.as_deref())?;
    write_attack_summary(&result.summary(), &mut w)?;
    w.flush()?;
    Ok(())
}

fn experiment_cmd(a: ExperimentArgs) -> Result<()> {
    let kinds: Vec<ExperimentKind> = if a.name == "all" {
        ExperimentKind::ALL.to_vec()
    } else {
        vec![a.name.parse::<ExperimentKind>().map_err(anyhow::Error::msg)?]
    };
    let all = kinds.len() > 1;
    if all {
        if let Some(d) = &a.out {
            fs::create_dir_all(d)?;
        }
    }
    for kind in kinds {
        let mut cfg = ExperimentConfig::new(kind);
        cfg.master_seed = a.seed;
        cfg.tie_break = a.tie_break.into();
        cfg.variation = !a.no_variation;
        if a.paper_scale {
            cfg.sets_per_cell = PAPER_SETS_PER_CELL;
        } else if let Some(n) = a.sets_per_cell {
            cfg.sets_per_cell = n;
        }
        let file = format!("{kind}.csv");
        let path = match (&a.out, all) {
            (Some(d), true) => d.join(file),
            (Some(p), false) => p.clone(),
            (None, _) => PathBuf::from(file),
        };
        let out = run_experiment(&cfg)?;
        out.write_csv(BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        ))?;
        eprintln!("{kind}: {} rows -> {}", out.rows.len(), path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenTasksets(a) => gen_tasksets(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Attack(a) => attack_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
    }
}
