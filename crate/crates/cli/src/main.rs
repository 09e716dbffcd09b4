//! `acnmp`: runs one experiment step per invocation from a config file or a
//! built-in preset.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use acnmp_core::cnmp::{
    check_demo_widths, generate, mean, reconstruction_error, uniform_times, CnmpModel, ConditioningPolicy,
    DemonstrationSet, ObservationPoint,
};
use acnmp_core::harness::pipelines::{
    adapt_run, adapt_target, demo_set, iteration_budget, median_iterations, model_rng, new_model,
    proxy_alignment, run_transfer, train_pair, train_phases, transfer_data, wall_self_improvement, TransferData,
};
use acnmp_core::harness::plot::plot_record;
use acnmp_core::harness::{latent_rows, write_latent_csv, ExperimentConfig, RunRecord};
use acnmp_core::rl::write_metrics_csv;
use acnmp_core::transfer::{pair_demos, success_rate_curve};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "acnmp", version, about = "Adaptive conditional movement primitive experiments")]
struct Cli {
    /// Config file, or the name of a built-in preset.
    #[arg(long, global = true)]
    config: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (a file for export-latent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Demonstration JSONL, or for transfer the demo-gen directory.
    #[arg(long, global = true)]
    demos: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize demonstrations.
    DemoGen {
        /// Environment name; picks the matching preset when no config is given.
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train a model on demonstrations.
    Train,
    /// Adapt a trained model to the configured task instance.
    Adapt {
        /// Supervised steps per update; 0 is pure policy gradient.
        #[arg(long)]
        sl_steps: Option<usize>,
        /// Task parameters, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Option<Vec<f64>>,
        /// Run the wall self-improvement loop instead of a single adaptation.
        #[arg(long)]
        self_improve: bool,
    },
    /// Joint training of two agents followed by transfer of the source solution.
    Transfer {
        /// Negative control: train the pair without latent alignment.
        #[arg(long)]
        no_align: bool,
    },
    /// Score a model's mean trajectory on the configured task instance.
    Eval {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Option<Vec<f64>>,
    },
    /// Latent vectors of single observations, as CSV.
    ExportLatent {
        /// Observations per trajectory.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Figure data from a run record.
    Plot {
        #[arg(long)]
        record: PathBuf,
    },
}

enum Failure {
    Config(String),
    Data(String),
    Io(String),
    Budget(String),
}

impl Failure {
    fn code(&self) -> &'static str {
        match self {
            Failure::Config(_) => "E_CONFIG",
            Failure::Data(_) => "E_DATA",
            Failure::Io(_) => "E_IO",
            Failure::Budget(_) => "E_BUDGET",
        }
    }

    fn exit(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) | Failure::Io(_) => 3,
            Failure::Budget(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Io(m) | Failure::Budget(m) => m,
        }
    }
}

impl From<acnmp_core::Error> for Failure {
    fn from(e: acnmp_core::Error) -> Self {
        use acnmp_core::Error as E;
        match e {
            E::Config(m) => Failure::Config(m),
            E::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Res<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = f.message().replace('\n', " ");
            eprintln!("error[{}]: {msg}", f.code());
            ExitCode::from(f.exit())
        }
    }
}

fn run(cli: Cli) -> Res<()> {
    let start = Instant::now();
    match &cli.cmd {
        Cmd::DemoGen { env, n } => demo_gen(&cli, env.as_deref(), *n, start),
        Cmd::Train => train(&cli, start),
        Cmd::Adapt {
            sl_steps,
            params,
            self_improve,
        } => {
            if *self_improve {
                self_improve_cmd(&cli, start)
            } else {
                adapt(&cli, *sl_steps, params.clone(), start)
            }
        }
        Cmd::Transfer { no_align } => transfer(&cli, *no_align, start),
        Cmd::Eval { params } => eval(&cli, params.clone()),
        Cmd::ExportLatent { samples } => export_latent(&cli, *samples),
        Cmd::Plot { record } => plot(&cli, record),
    }
}

fn config(cli: &Cli) -> Res<ExperimentConfig> {
    let src = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config is required (a file or a preset name)".into()))?;
    Ok(ExperimentConfig::load(src)?)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig, command: &str) -> Res<PathBuf> {
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| Path::new(&cfg.out_dir).join(&cfg.name).join(command));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(dir)
}

fn load_model(cli: &Cli) -> Res<CnmpModel> {
    let path = cli
        .model
        .as_ref()
        .ok_or_else(|| Failure::Config("--model is required".into()))?;
    CnmpModel::load(path).map_err(|e| Failure::Data(format!("cannot load model {}: {e}", path.display())))
}

fn load_demos(path: &Path) -> Res<DemonstrationSet> {
    DemonstrationSet::load(path).map_err(|e| Failure::Data(format!("cannot load demonstrations {}: {e}", path.display())))
}

/// `--demos` if given, else the config's own demonstrations.
fn demos_or_synth(cli: &Cli, cfg: &ExperimentConfig) -> Res<DemonstrationSet> {
    match &cli.demos {
        Some(p) => load_demos(p),
        None => Ok(demo_set(cfg)?),
    }
}

fn finish(mut rec: RunRecord, dir: &Path, start: Instant) -> Res<()> {
    rec.wall_clock_secs = start.elapsed().as_secs_f64();
    rec.save(dir.join("run.json"))?;
    println!("{}", dir.join("run.json").display());
    Ok(())
}

/// Planar coordinates of conditioning points, matching the overlay plot.
fn condition_series(rec: &mut RunRecord, cond: &[ObservationPoint]) {
    let (xs, ys) = cond
        .iter()
        .map(|o| if o.sm.len() == 1 { (o.t, o.sm[0]) } else { (o.sm[0], o.sm[1]) })
        .unzip();
    rec.series("condition_t", xs).series("condition_y", ys);
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    env: String,
    seed: u64,
    config_hash: String,
    files: Vec<String>,
    ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Pairing {
    source: String,
    target: String,
    source_solution: String,
    /// Source and target trajectory ids, matched by position.
    pairs: Vec<(String, String)>,
}

fn demo_gen(cli: &Cli, env: Option<&str>, n: Option<usize>, start: Instant) -> Res<()> {
    let mut cfg = match (&cli.config, env) {
        (Some(_), _) => config(cli)?,
        (None, Some(env)) => {
            let preset = match env {
                "viapoint2d" => "viapoint",
                "push" => "push",
                "wall" => "wall",
                "button" => "transfer",
                other => {
                    return Err(Failure::Config(format!(
                        "unknown environment `{other}` (known: {})",
                        acnmp_core::envs::ENV_NAMES.join(", ")
                    )))
                }
            };
            ExperimentConfig::preset(preset).expect("preset exists")
        }
        (None, None) => return Err(Failure::Config("demo-gen needs --config or --env".into())),
    };
    if let Some(env) = env {
        if env != cfg.env.name {
            return Err(Failure::Config(format!(
                "--env `{env}` disagrees with the config's environment `{}`",
                cfg.env.name
            )));
        }
    }
    if let Some(s) = cli.seed {
        cfg.seeds.data = s;
    }
    if let Some(n) = n {
        cfg.env.demos = n;
    }
    cfg.validate()?;
    let dir = out_dir(cli, &cfg, "demo-gen")?;
    let demos = demo_set(&cfg)?;
    demos.save(dir.join("demos.jsonl"))?;
    let mut files = vec!["demos.jsonl".to_string()];
    if cfg.env.name == "button" {
        let data = transfer_data(&cfg)?;
        let source = DemonstrationSet::new(data.pairs.iter().map(|p| p.source.clone()).collect())?;
        source.save(dir.join("source_proxies.jsonl"))?;
        data.target_demos.save(dir.join("target_proxies.jsonl"))?;
        DemonstrationSet::new(vec![data.source_solution.clone()])?.save(dir.join("source_solution.jsonl"))?;
        let pairing = Pairing {
            source: "source_proxies.jsonl".into(),
            target: "target_proxies.jsonl".into(),
            source_solution: "source_solution.jsonl".into(),
            pairs: data
                .pairs
                .iter()
                .map(|p| (p.source.id.clone(), p.target.id.clone()))
                .collect(),
        };
        std::fs::write(dir.join("pairing.json"), serde_json::to_string_pretty(&pairing)? + "\n")?;
        files.extend(["source_proxies.jsonl", "target_proxies.jsonl", "source_solution.jsonl", "pairing.json"].map(String::from));
    }
    let manifest = Manifest {
        env: cfg.env.name.clone(),
        seed: cfg.seeds.data,
        config_hash: cfg.hash()?,
        files,
        ids: demos.trajectories().iter().map(|t| t.id.clone()).collect(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let mut rec = RunRecord::new("demo-gen", &cfg, cfg.seeds.data)?;
    rec.artifact("demos", "demos.jsonl");
    finish(rec, &dir, start)
}

fn train(cli: &Cli, start: Instant) -> Res<()> {
    let mut cfg = config(cli)?;
    if let Some(s) = cli.seed {
        cfg.seeds.model = s;
    }
    let demos = demos_or_synth(cli, &cfg)?;
    let mut rng = model_rng(&cfg);
    let mut model = new_model(&cfg.model, &cfg.env.name, &mut rng)?;
    check_demo_widths(&model, &demos)?;
    let dir = out_dir(cli, &cfg, "train")?;
    let losses = train_phases(&mut model, &demos, &cfg.train.phases, cfg.train.max_observations, &mut rng)?;
    model.save(dir.join("model.txt"))?;
    demos.save(dir.join("demos.jsonl"))?;

    let mut csv = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l:?}\n"));
    }
    std::fs::write(dir.join("loss.csv"), csv)?;

    let mut rec = RunRecord::new("train", &cfg, cfg.seeds.model)?;
    let window = (losses.len() / 200).max(1);
    rec.series("loss", losses.chunks(window).map(mean).collect());
    rec.artifact("model", "model.txt").artifact("demos", "demos.jsonl");
    if let Ok(target) = adapt_target(&cfg) {
        if target.gamma.len() == model.dims.gamma_width {
            let g = generate(&model, &target.conditioning, &target.gamma, &uniform_times(cfg.adapt.query_points))?;
            DemonstrationSet::new(vec![g.with_id("generated")])?.save(dir.join("generated.jsonl"))?;
            rec.artifact("generated", "generated.jsonl");
            condition_series(&mut rec, &target.conditioning);
        }
    }
    finish(rec, &dir, start)
}

fn with_params(cfg: &mut ExperimentConfig, params: Option<Vec<f64>>) -> Res<()> {
    if let Some(p) = params {
        cfg.env.params = p;
    }
    Ok(cfg.validate()?)
}

fn adapt(cli: &Cli, sl_steps: Option<usize>, params: Option<Vec<f64>>, start: Instant) -> Res<()> {
    let mut cfg = config(cli)?;
    with_params(&mut cfg, params)?;
    if let Some(s) = sl_steps {
        cfg.adapt.sl_steps = s;
    }
    let seed = cli.seed.unwrap_or(cfg.seeds.runs[0]);
    let model = load_model(cli)?;
    let demos = demos_or_synth(cli, &cfg)?;
    let target = adapt_target(&cfg)?;
    let dir = out_dir(cli, &cfg, "adapt")?;
    let out = adapt_run(&cfg, &model, &demos, &target, seed)?;

    out.model.save(dir.join("model.txt"))?;
    DemonstrationSet::new(vec![out.solution.clone()])?.save(dir.join("solution.jsonl"))?;
    demos.save(dir.join("demos.jsonl"))?;
    write_metrics_csv(&out.log, std::fs::File::create(dir.join("metrics.csv"))?)?;

    let mut rec = RunRecord::new("adapt", &cfg, seed)?;
    rec.series("mean_reward", out.mean_rewards.clone())
        .series("reward", out.log.iter().map(|r| r.reward).collect())
        .series("best_reward", out.log.iter().map(|r| r.best_reward).collect())
        .series("rollouts_used", vec![out.rollouts_used as f64])
        .artifact("model", "model.txt")
        .artifact("solution", "solution.jsonl")
        .artifact("demos", "demos.jsonl")
        .artifact("metrics", "metrics.csv");
    condition_series(&mut rec, &target.conditioning);
    finish(rec, &dir, start)?;
    if out.success {
        eprintln!("solved after {} roll-outs, reward {:.5}", out.rollouts_used, out.best_reward);
        Ok(())
    } else {
        Err(Failure::Budget(format!(
            "{} roll-outs spent without success; best reward {:.5} below {:.5}",
            out.rollouts_used,
            out.best_reward,
            cfg.adapt.success_threshold.unwrap_or_else(|| target.env.success_threshold())
        )))
    }
}

fn self_improve_cmd(cli: &Cli, start: Instant) -> Res<()> {
    let cfg = config(cli)?;
    let model = load_model(cli)?;
    let demos = demos_or_synth(cli, &cfg)?;
    check_demo_widths(&model, &demos)?;
    let dir = out_dir(cli, &cfg, "self-improve")?;
    let rep = wall_self_improvement(&cfg, &model, &demos)?;
    rep.model.save(dir.join("model.txt"))?;
    rep.demos.save(dir.join("demos.jsonl"))?;
    let cp = &rep.checkpoints;
    let mut rec = RunRecord::new("adapt --self-improve", &cfg, cfg.seeds.model)?;
    rec.series("new_envs", cp.iter().map(|c| c.new_envs as f64).collect())
        .series("trajectories", cp.iter().map(|c| c.trajectories as f64).collect())
        .series("mean_test_error", cp.iter().map(|c| c.mean_test_error).collect())
        .series("test_successes", cp.iter().map(|c| c.test_successes as f64).collect())
        .series("solved", vec![rep.solved as f64])
        .artifact("model", "model.txt");
    finish(rec, &dir, start)
}

fn read_pairing(dir: &Path) -> Res<TransferData> {
    let dir = if dir.is_file() { dir.parent().unwrap_or(Path::new(".")) } else { dir };
    let manifest = dir.join("pairing.json");
    let text = std::fs::read_to_string(&manifest)
        .map_err(|e| Failure::Data(format!("missing pairing manifest {}: {e}", manifest.display())))?;
    let p: Pairing = serde_json::from_str(&text)?;
    let source = load_demos(&dir.join(&p.source))?;
    let target = load_demos(&dir.join(&p.target))?;
    let solution = load_demos(&dir.join(&p.source_solution))?;
    let pick = |set: &DemonstrationSet, id: &str| {
        set.get(id)
            .cloned()
            .ok_or_else(|| Failure::Data(format!("pairing names `{id}`, which is not in the demonstrations")))
    };
    let mut s = Vec::new();
    let mut t = Vec::new();
    for (a, b) in &p.pairs {
        s.push(pick(&source, a)?);
        t.push(pick(&target, b)?);
    }
    let source_solution = solution
        .trajectories()
        .first()
        .cloned()
        .ok_or_else(|| Failure::Data("source solution file is empty".into()))?;
    let target_demos = DemonstrationSet::new(t)?;
    Ok(TransferData {
        pairs: pair_demos(&DemonstrationSet::new(s)?, &target_demos)?,
        source_solution,
        target_demos,
    })
}

#[derive(Serialize)]
struct TransferReport {
    aligned: bool,
    alignment_weight: f64,
    proxy_alignment: f64,
    iteration_budget: usize,
    median_iterations: Option<f64>,
    solved: usize,
    runs: Vec<acnmp_core::harness::pipelines::TransferRun>,
}

fn transfer(cli: &Cli, no_align: bool, start: Instant) -> Res<()> {
    let mut cfg = config(cli)?;
    let weight = cfg
        .transfer
        .as_ref()
        .ok_or_else(|| Failure::Config("config has no [transfer] section".into()))?
        .alignment_weight;
    if let Some(s) = cli.seed {
        cfg.seeds.runs = vec![s];
    }
    let demos = cli
        .demos
        .as_ref()
        .ok_or_else(|| Failure::Data("transfer needs --demos pointing at a demo-gen directory with pairing.json".into()))?;
    let data = read_pairing(demos)?;
    let weight = if no_align { 0.0 } else { weight };
    let dir = out_dir(cli, &cfg, if no_align { "transfer-no-align" } else { "transfer" })?;

    let (pair, losses) = train_pair(&cfg, &data, weight)?;
    pair.source.save(dir.join("source_model.txt"))?;
    pair.target.save(dir.join("target_model.txt"))?;
    let mut csv = String::from("step,source,target,align\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{i},{:?},{:?},{:?}\n", l.source, l.target, l.align));
    }
    std::fs::write(dir.join("joint_loss.csv"), csv)?;

    let runs = run_transfer(&cfg, &pair, &data)?;
    let budget = iteration_budget(&cfg);
    let iters: Vec<Option<usize>> = runs.iter().map(|r| r.iterations_to_success).collect();
    let curve = success_rate_curve(&iters, budget);
    let mut csv = String::from("iteration,success_rate\n");
    for (k, s) in curve.iter().enumerate() {
        csv.push_str(&format!("{k},{s:?}\n"));
    }
    std::fs::write(dir.join("success_rate.csv"), csv)?;

    let report = TransferReport {
        aligned: !no_align,
        alignment_weight: weight,
        proxy_alignment: proxy_alignment(&pair, &data)?,
        iteration_budget: budget,
        median_iterations: median_iterations(&runs),
        solved: iters.iter().filter(|i| i.is_some()).count(),
        runs,
    };
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;

    let command = if no_align { "transfer --no-align" } else { "transfer" };
    let mut rec = RunRecord::new(command, &cfg, cfg.seeds.runs[0])?;
    rec.series("success_rate", curve)
        // -1 marks a run that never succeeded
        .series(
            "iterations_to_success",
            iters.iter().map(|i| i.map_or(-1.0, |i| i as f64)).collect(),
        )
        .artifact("report", "report.json")
        .artifact("success_rate", "success_rate.csv");
    finish(rec, &dir, start)?;
    if report.solved == 0 {
        return Err(Failure::Budget(format!(
            "no run reached success within {budget} iterations{}",
            if no_align { " (alignment disabled)" } else { "" }
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    env: String,
    params: Vec<f64>,
    reward: f64,
    success: bool,
    success_threshold: f64,
    reconstruction_error: Option<f64>,
}

fn eval(cli: &Cli, params: Option<Vec<f64>>) -> Res<()> {
    let mut cfg = config(cli)?;
    with_params(&mut cfg, params)?;
    let model = load_model(cli)?;
    let target = adapt_target(&cfg)?;
    let (traj, reward) = acnmp_core::rl::evaluate_mean(
        &model,
        target.env.as_ref(),
        &target.conditioning,
        &target.gamma,
        &uniform_times(cfg.adapt.query_points),
    )?;
    let reconstruction = match &cli.demos {
        Some(p) => {
            let demos = load_demos(p)?;
            Some(mean(&reconstruction_error(&model, &demos, &ConditioningPolicy::FirstPoint)?))
        }
        None => None,
    };
    let report = EvalReport {
        env: cfg.env.name.clone(),
        params: cfg.env.params.clone(),
        reward,
        success: target.env.is_success(reward),
        success_threshold: target.env.success_threshold(),
        reconstruction_error: reconstruction,
    };
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("eval.json"), text.clone() + "\n")?;
        DemonstrationSet::new(vec![traj.with_id("generated")])?.save(dir.join("generated.jsonl"))?;
    }
    println!("{text}");
    Ok(())
}

fn export_latent(cli: &Cli, samples: usize) -> Res<()> {
    if samples == 0 {
        return Err(Failure::Config("--samples must be at least 1".into()));
    }
    let model = load_model(cli)?;
    let demos = load_demos(
        cli.demos
            .as_ref()
            .ok_or_else(|| Failure::Config("--demos is required".into()))?,
    )?;
    check_demo_widths(&model, &demos)?;
    let rows = latent_rows(&model, &demos, samples)?;
    match &cli.out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            write_latent_csv(&rows, std::fs::File::create(p)?)?;
        }
        None => write_latent_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn plot(cli: &Cli, record: &Path) -> Res<()> {
    let rec = RunRecord::load(record)
        .map_err(|e| Failure::Data(format!("cannot read run record {}: {e}", record.display())))?;
    let base = record.parent().unwrap_or(Path::new("."));
    let out = cli.out.clone().unwrap_or_else(|| base.join("plots"));
    for p in plot_record(&rec, base, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}
