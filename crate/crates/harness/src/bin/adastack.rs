use std::path::PathBuf;
use std::process::ExitCode;

use adastack::cost::{ArchSpec, Family, Stacking};
use adastack::{MemoryMode, Mode};
use adastack_harness::config::{AgentKind, EnvConfig, EvalConfig, RunConfig, SweepConfig, PAPER_STEPS};
use adastack_harness::eval::evaluate;
use adastack_harness::plot::{plot, Band, PlotSpec};
use adastack_harness::report::{asymptotics_table, cost_table, efficiency_table, oracle_table, Format, OracleModel, Table};
use adastack_harness::run::{run, Manifest};
use adastack_harness::sweep::sweep;
use adastack_harness::{HarnessError, Result};
use clap::{Args, Parser, Subcommand};

/// Memory-stack reinforcement learning experiments.
#[derive(Parser)]
#[command(name = "adastack", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one configuration over its seeds.
    Train(TrainArgs),
    /// Run a grid of configurations and aggregate them.
    Sweep(SweepArgs),
    /// Evaluate a finished run on other environments.
    Eval(EvalArgs),
    /// Exact values, gaps and minimal capacities of tiny tasks.
    Oracle(OracleArgs),
    /// Compute and memory lower bounds of the network families.
    Cost(CostArgs),
    /// Render a metrics, aggregate or summary CSV to SVG.
    Plot(PlotArgs),
}

/// Environment and run fields that override the config file.
#[derive(Args, Default)]
struct RunFlags {
    /// passive_tmaze | active_tmaze | xormaze | pocket_cube | cartpole
    #[arg(long)]
    env: Option<String>,
    /// Corridor length of a T-Maze.
    #[arg(long)]
    length: Option<usize>,
    /// episodic | continual
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    random_corridor: bool,
    #[arg(long)]
    scramble_depth: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// q | reinforce | ppo
    #[arg(long)]
    agent: Option<String>,
    /// fs | as | demir | demir-im
    #[arg(long)]
    memory: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated list, e.g. `0,1,2,3,4`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    log_every: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// 10^6 steps and 20 seeds unless set explicitly.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run configuration; flags override its fields.
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunFlags,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep configuration.
    config: PathBuf,
    #[arg(long, default_value_t = default_threads())]
    parallelism: usize,
    /// 10^6 steps and 20 seeds for every cell.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// TOML evaluation configuration.
    config: Option<PathBuf>,
    /// Run directory written by `train`.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Evaluate on the training environment at these corridor lengths.
    #[arg(long, value_delimiter = ',')]
    lengths: Vec<usize>,
    #[arg(long)]
    episodes: Option<u64>,
    /// Sample actions instead of taking the greedy or most probable one.
    #[arg(long)]
    sampled: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// passive:L, passive-continual:L, active:L, xormaze, magnitude:L, single
    #[arg(long = "model", required = true)]
    models: Vec<String>,
    /// Stack lengths to analyse.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    /// Largest capacity tried when searching for the minimal one.
    #[arg(long, default_value_t = 4)]
    k_max: usize,
    /// text | csv
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long, default_value_t = 2)]
    layers: u64,
    #[arg(long, default_value_t = 128)]
    hidden: u64,
    #[arg(long, default_value_t = 4)]
    actions: u64,
    /// Stack length.
    #[arg(long, default_value_t = 8)]
    context: u64,
    /// Bytes per stored unit.
    #[arg(long, default_value_t = 4)]
    precision: u64,
    #[arg(long, default_value_t = 32)]
    batch: u64,
    /// 1 for plain gradient descent, 4 for Adam.
    #[arg(long, default_value_t = 4)]
    optimizer_copies: u64,
    /// With --kappa, also print frame over adaptive compute ratios.
    #[arg(long, requires = "kappa")]
    k_star: Option<u64>,
    #[arg(long, requires = "k_star")]
    kappa: Option<u64>,
    /// text | csv
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct PlotArgs {
    /// Per-seed, aggregate or summary CSV.
    input: PathBuf,
    /// Output directory for the SVG files.
    #[arg(long, default_value = "plots")]
    out: PathBuf,
    /// Metrics to draw; all when omitted.
    #[arg(long = "metric")]
    metrics: Vec<String>,
    /// std | ci95 | none
    #[arg(long, default_value = "std")]
    band: String,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T>
where
    HarnessError: From<T::Err>,
{
    Ok(s.parse::<T>()?)
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "episodic" => Ok(Mode::Episodic),
        "continual" => Ok(Mode::Continual),
        o => Err(HarnessError::config(format!("unknown mode `{o}` (episodic, continual)"))),
    }
}

fn env_from_flags(f: &RunFlags, base: Option<&EnvConfig>) -> Result<Option<EnvConfig>> {
    let name = match (&f.env, base) {
        (Some(n), _) => n.clone(),
        (None, Some(b)) => {
            let mut e = b.clone();
            if let Some(l) = f.length {
                e = e
                    .with_length(l)
                    .ok_or_else(|| HarnessError::config(format!("{} has no corridor length", e.label())))?;
            }
            if let Some(m) = &f.mode {
                let mode = parse_mode(m)?;
                match &mut e {
                    EnvConfig::PassiveTmaze { mode: x, .. } | EnvConfig::ActiveTmaze { mode: x, .. } => *x = mode,
                    _ => return Err(HarnessError::config("--mode only applies to T-Mazes")),
                }
            }
            return Ok(Some(e));
        }
        (None, None) => return Ok(None),
    };
    let length = || f.length.ok_or_else(|| HarnessError::config(format!("--env {name} needs --length")));
    let mode = f.mode.as_deref().map(parse_mode).transpose()?.unwrap_or(Mode::Episodic);
    Ok(Some(match name.as_str() {
        "passive_tmaze" => EnvConfig::PassiveTmaze {
            length: length()?,
            mode,
            random_corridor: f.random_corridor,
        },
        "active_tmaze" => EnvConfig::ActiveTmaze { length: length()?, mode },
        "xormaze" => EnvConfig::Xormaze,
        "pocket_cube" => EnvConfig::PocketCube {
            scramble_depth: f
                .scramble_depth
                .ok_or_else(|| HarnessError::config("--env pocket_cube needs --scramble-depth"))?,
        },
        "cartpole" => EnvConfig::Cartpole { horizon: f.horizon },
        o => return Err(HarnessError::config(format!("unknown environment `{o}`"))),
    }))
}

fn run_config(args: &TrainArgs) -> Result<RunConfig> {
    let f = &args.flags;
    let base = args.config.as_deref().map(RunConfig::load).transpose()?;
    let env = env_from_flags(f, base.as_ref().map(|b| &b.env))?;
    let mut c = match base {
        Some(mut b) => {
            b.env = env.expect("base config has an environment");
            b
        }
        None => {
            let missing = |flag: &str| HarnessError::config(format!("without a config file, --{flag} is required"));
            RunConfig::new(
                env.ok_or_else(|| missing("env"))?,
                parse::<AgentKind>(f.agent.as_deref().ok_or_else(|| missing("agent"))?)?,
                parse::<MemoryMode>(f.memory.as_deref().ok_or_else(|| missing("memory"))?)?,
                f.k.ok_or_else(|| missing("k"))?,
                f.seeds.clone().unwrap_or_else(|| (0..5).collect()),
            )
        }
    };
    if let Some(a) = &f.agent {
        c.agent = parse(a)?;
    }
    if let Some(m) = &f.memory {
        c.memory_mode = parse(m)?;
    }
    if let Some(k) = f.k {
        c.k = k;
    }
    if f.paper_scale {
        c.total_steps = PAPER_STEPS;
        c.seeds = (0..20).collect();
    }
    if let Some(s) = &f.seeds {
        c.seeds = s.clone();
    }
    if let Some(n) = f.total_steps {
        c.total_steps = n;
    }
    if let Some(n) = f.log_every {
        c.log_every = n;
    }
    if let Some(g) = f.gamma {
        c.q.gamma = g;
        c.ppo.gamma = g;
        c.reinforce.gamma = g;
    }
    if let Some(a) = f.alpha {
        c.q.alpha = a;
    }
    if let Some(e) = f.epsilon {
        c.q.epsilon = e;
    }
    if let Some(lr) = f.lr {
        c.ppo.lr = lr;
        c.reinforce.lr = lr;
    }
    if let Some(id) = &f.run_id {
        c.run_id = Some(id.clone());
    }
    if let Some(o) = &f.output {
        c.output = o.clone();
    }
    Ok(c)
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = run_config(&args)?;
    cfg.validate()?;
    let dir = run(&cfg)?;
    let manifest = Manifest::load(&dir)?;
    let mut t = Table::new(&["seed", "rows", "final_success", "seconds"]);
    for s in &manifest.seeds {
        let success = s.final_success.map_or("-".into(), |v| format!("{v:.3}"));
        t.push(vec![s.seed.to_string(), s.rows.to_string(), success, format!("{:.1}", s.wall_clock_secs)]);
    }
    println!("{}", dir.display());
    print!("{t}");
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<()> {
    let mut cfg = SweepConfig::load(&args.config)?;
    if args.paper_scale {
        cfg.base.total_steps = PAPER_STEPS;
        cfg.base.seeds = (0..20).collect();
    }
    if let Some(o) = args.output {
        cfg.base.output = o;
    }
    let cells = cfg.size();
    eprintln!("sweep {}: {cells} cells x {} seeds on {} workers", cfg.name, cfg.base.seeds.len(), args.parallelism);
    let out = sweep(&cfg, args.parallelism)?;
    let mut t = Table::new(&["cell", "success", "std", "n"]);
    for s in &out.summaries {
        let (m, sd, n) = s.get("success").unwrap_or((f64::NAN, f64::NAN, 0));
        t.push(vec![s.run_id.clone(), format!("{m:.3}"), format!("{sd:.3}"), n.to_string()]);
    }
    println!("{}", out.dir.display());
    print!("{t}");
    for f in &out.failures {
        eprintln!("failed {} seed {:?}: {}", f.run_id, f.seed, f.message);
    }
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => EvalConfig::load(p)?,
        None => {
            let run_dir = args
                .run_dir
                .clone()
                .ok_or_else(|| HarnessError::config("eval needs a config file or --run-dir"))?;
            EvalConfig {
                run_dir,
                envs: Vec::new(),
                episodes: 100,
                max_steps: 10_000_000,
                greedy: true,
                seed: 0,
                output: None,
            }
        }
    };
    if let Some(d) = args.run_dir {
        cfg.run_dir = d;
    }
    if !args.lengths.is_empty() {
        let trained = RunConfig::load(&cfg.run_dir.join("config.toml"))?;
        for l in &args.lengths {
            cfg.envs.push(
                trained
                    .env
                    .with_length(*l)
                    .ok_or_else(|| HarnessError::config(format!("{} has no corridor length", trained.env.label())))?,
            );
        }
    }
    if let Some(e) = args.episodes {
        cfg.episodes = e;
    }
    if args.sampled {
        cfg.greedy = false;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.output.is_some() {
        cfg.output = args.output;
    }
    let (path, cells) = evaluate(&cfg)?;
    let mut t = Table::new(&["seed", "env", "success", "return", "memory_regret"]);
    for c in &cells {
        let s = &c.summary;
        t.push(vec![
            c.seed.to_string(),
            c.env.clone(),
            s.success().map_or("-".into(), |v| format!("{v:.3}")),
            format!("{:.4}", s.mean_return),
            s.regret.map_or("-".into(), |r| format!("{:.4}", r.memory)),
        ]);
    }
    println!("{}", path.display());
    print!("{t}");
    Ok(())
}

fn oracle_cmd(args: OracleArgs) -> Result<()> {
    let models = args.models.iter().map(|m| OracleModel::parse(m)).collect::<Result<Vec<_>>>()?;
    let t = oracle_table(&models, &args.k, args.gamma, args.k_max)?;
    print!("{}", t.render(args.format.parse()?)?);
    Ok(())
}

fn cost_cmd(args: CostArgs) -> Result<()> {
    let format: Format = args.format.parse()?;
    let arch = ArchSpec {
        layers: args.layers,
        hidden: args.hidden,
        actions: args.actions,
        context: args.context,
        precision: args.precision,
        batch: args.batch,
        optimizer_copies: args.optimizer_copies,
        ..ArchSpec::new(Family::Mlp, Stacking::Frame)
    };
    print!("{}", cost_table(&arch)?.render(format)?);
    if format == Format::Text {
        println!();
    }
    print!("{}", asymptotics_table(&arch)?.render(format)?);
    if let (Some(ks), Some(ka)) = (args.k_star, args.kappa) {
        if format == Format::Text {
            println!();
        }
        print!("{}", efficiency_table(&arch, ks, ka)?.render(format)?);
    }
    Ok(())
}

fn plot_cmd(args: PlotArgs) -> Result<()> {
    let spec = PlotSpec {
        metrics: args.metrics,
        band: args.band.parse::<Band>()?,
        ..PlotSpec::default()
    };
    for p in plot(&args.input, &args.out, &spec)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Train(a) => train(a),
        Cmd::Sweep(a) => sweep_cmd(a),
        Cmd::Eval(a) => eval_cmd(a),
        Cmd::Oracle(a) => oracle_cmd(a),
        Cmd::Cost(a) => cost_cmd(a),
        Cmd::Plot(a) => plot_cmd(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
