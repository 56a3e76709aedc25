use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use driftmdp::envs::{prop3_replay, Family, GeneratorSpec};
use driftmdp::harness::{
    run_experiment, run_sweep, AgentSpec, ErrorRecord, ExperimentConfig, Overrides, ParamMode, CONFIG_VERSION,
    EXPERIMENT_KIND,
};
use driftmdp::io::{check_instance_file, parse_instance_file};
use driftmdp::sim::RewardNoise;
use driftmdp::{Error, Result};

/// Exact closed-form values of the replay are compared at this tolerance.
const PROP3_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "driftmdp", version, about = "Learning in drifting tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run seeded replicas of an experiment and write regret artifacts.
    Run(RunArgs),
    /// Run an experiment once per (W, eta) grid point.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Replay the two-state switching construction and check its empirical kernel.
    Prop3 {
        #[arg(long, default_value_t = 4)]
        tau: usize,
    },
    /// Check an instance file or experiment config.
    Validate {
        path: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// swucrl2-cw, borl or optimal.
    #[arg(long)]
    agent: Option<String>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    /// Window; a comma-separated list for `sweep`.
    #[arg(long = "W")]
    window: Option<String>,
    /// Widening; a comma-separated list for `sweep`.
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (out_dir, result) = match cli.cmd {
        Cmd::Run(args) => (args.out.clone(), cmd_run(&args)),
        Cmd::Sweep { run } => (run.out.clone(), cmd_sweep(&run)),
        Cmd::Prop3 { tau } => (None, cmd_prop3(tau)),
        Cmd::Validate { path, config } => (None, cmd_validate(path.or(config))),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let record = serde_json::to_string(&ErrorRecord::from(&e)).expect("record serializes");
            eprintln!("{record}");
            if let Some(dir) = out_dir {
                if std::fs::create_dir_all(&dir).is_ok() {
                    let _ = std::fs::write(dir.join("error.json"), format!("{record}\n"));
                }
            }
            ExitCode::from(2)
        }
    }
}

fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        kind: EXPERIMENT_KIND.into(),
        version: CONFIG_VERSION,
        seed: 0,
        replicas: 1,
        delta: 0.1,
        initial_state: 0,
        gain_eps: driftmdp::regret::DEFAULT_GAIN_EPS,
        noise: RewardNoise::default(),
        resample_instance: false,
        generator: Some(GeneratorSpec::new(Family::Stationary, 2, 2, 1000, 0)),
        instance: None,
        agent: AgentSpec::SwUcrl2Cw {
            params: ParamMode::Oblivious,
            window: None,
            eta: None,
        },
        out: None,
    }
}

/// The config with command-line overrides and the directory that relative
/// paths resolve against.
fn load_config(args: &RunArgs, sweep: bool) -> Result<(ExperimentConfig, PathBuf)> {
    let (mut cfg, base) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let cfg = ExperimentConfig::parse(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (cfg, base)
        }
        None => (default_config(), PathBuf::from(".")),
    };
    let parse = |s: &str| -> Result<f64> { s.trim().parse().map_err(|_| Error::Parse(format!("bad number {s:?}"))) };
    let overrides = Overrides {
        seed: args.seed,
        replicas: args.replicas,
        agent: args.agent.clone(),
        horizon: args.horizon,
        window: if sweep {
            None
        } else {
            args.window
                .as_deref()
                .map(|w| w.trim().parse().map_err(|_| Error::Parse(format!("bad window {w:?}"))))
                .transpose()?
        },
        eta: if sweep { None } else { args.eta.as_deref().map(parse).transpose()? },
        delta: args.delta,
    };
    overrides.apply(&mut cfg)?;
    Ok((cfg, base))
}

fn out_dir(args: &RunArgs, cfg: &ExperimentConfig, base: &Path) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.out.as_ref().map(|o| base.join(o)))
        .unwrap_or_else(|| PathBuf::from("driftmdp-out"))
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let (cfg, base) = load_config(args, false)?;
    let out = out_dir(args, &cfg, &base);
    let report = run_experiment(&cfg, &base, &out)?;
    println!(
        "{} replica(s), T = {}: final cumulative regret mean {:.4}, median {:.4}, std {:.4}",
        report.replicas, report.horizon, report.mean, report.median, report.std
    );
    println!("artifacts in {}", out.display());
    Ok(true)
}

fn cmd_sweep(args: &RunArgs) -> Result<bool> {
    let (cfg, base) = load_config(args, true)?;
    let out = out_dir(args, &cfg, &base);
    let list = |s: &Option<String>| -> Option<Vec<String>> {
        s.as_ref().map(|v| v.split(',').map(|x| x.trim().to_string()).collect())
    };
    let (cur_w, cur_eta) = match &cfg.agent {
        AgentSpec::SwUcrl2Cw { window, eta, .. } => (*window, *eta),
        _ => (None, None),
    };
    let windows: Vec<usize> = match list(&args.window) {
        Some(ws) => ws
            .iter()
            .map(|w| w.parse().map_err(|_| Error::Parse(format!("bad window {w:?}"))))
            .collect::<Result<_>>()?,
        None => cur_w.into_iter().collect(),
    };
    let etas: Vec<f64> = match list(&args.eta) {
        Some(es) => es
            .iter()
            .map(|e| e.parse().map_err(|_| Error::Parse(format!("bad eta {e:?}"))))
            .collect::<Result<_>>()?,
        None => cur_eta.into_iter().collect(),
    };
    let rows = run_sweep(&cfg, &base, &out, &windows, &etas)?;
    println!("{:>8} {:>10} {:>14} {:>14}", "W", "eta", "mean_regret", "std");
    for r in &rows {
        println!(
            "{:>8} {:>10.4} {:>14.4} {:>14.4}{}",
            r.window,
            r.eta,
            r.mean_final_regret,
            r.std_final_regret,
            if r.argmin { "  <- argmin" } else { "" }
        );
    }
    println!("table in {}", out.join("sweep.csv").display());
    Ok(true)
}

fn cmd_prop3(tau: usize) -> Result<bool> {
    let r = prop3_replay(tau)?;
    let names = ["p(1|1,a1)", "p(2|1,a1)", "p(1|1,a2)", "p(2|1,a2)"];
    println!("two-state switching replay, tau = {tau}, window W = {}, anchor {}", r.window, r.anchor);
    let mut ok = true;
    for ((name, got), want) in names.iter().zip(r.displayed()).zip(r.expected()) {
        let pass = (got - want).abs() <= PROP3_TOL;
        ok &= pass;
        println!("  {name:<10} = {got:<22} expected {want:<22} {}", verdict(pass));
    }
    println!("empirical kernel (rows s,a; columns next state 1, 2):");
    let shape = r.empirical.shape().clone();
    for pair in 0..shape.num_pairs() {
        let (s, a) = shape.unpair(pair);
        let row = r.empirical.row(pair);
        let label = if s == 0 { ["a1", "a2"][a] } else { ["b1", "b2"][a] };
        println!("  ({}, {label}): [{}, {}]", s + 1, row[0], row[1]);
    }
    for (i, d) in r.snapshot_diameters.iter().enumerate() {
        let pass = *d == 1.0;
        ok &= pass;
        println!("  snapshot {} diameter = {d} expected 1 {}", i + 1, verdict(pass));
    }
    let want = (tau + 1) as f64;
    let pass = (r.empirical_diameter - want).abs() <= 1e-9 * want;
    ok &= pass;
    println!(
        "  empirical diameter = {} expected {want} {}",
        r.empirical_diameter,
        verdict(pass)
    );
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "ok"
    } else {
        "MISMATCH"
    }
}

fn cmd_validate(path: Option<PathBuf>) -> Result<bool> {
    let path = path.ok_or_else(|| Error::InvalidArgument("give a file to validate".into()))?;
    let text = std::fs::read_to_string(&path)?;
    let kind: Option<String> = toml::from_str::<toml::Table>(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .get("kind")
        .and_then(|k| k.as_str().map(str::to_owned));
    let problems = match kind.as_deref() {
        Some(EXPERIMENT_KIND) => {
            let cfg = ExperimentConfig::parse(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            let mut problems = Vec::new();
            if let Err(e) = cfg.validate() {
                problems.push(e.to_string());
            }
            if let Some(spec) = &cfg.generator {
                if let Err(e) = spec.generate() {
                    problems.push(format!("generator: {e}"));
                }
            }
            if let Some(inst) = &cfg.instance {
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                if let Err(e) = driftmdp::io::load_instance(&base.join(inst)) {
                    problems.push(format!("instance: {e}"));
                }
            }
            problems
        }
        Some(driftmdp::io::INSTANCE_KIND) => {
            let file = parse_instance_file(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            check_instance_file(&file)?.problems
        }
        other => {
            return Err(Error::Parse(format!(
                "{}: field `kind` must be \"instance\" or \"experiment\", got {other:?}",
                path.display()
            )))
        }
    };
    if problems.is_empty() {
        println!("{}: ok", path.display());
        Ok(true)
    } else {
        for p in &problems {
            println!("{}: {p}", path.display());
        }
        println!("{} problem(s)", problems.len());
        Ok(false)
    }
}
