//! Command-line front end: tactile calibration, gait preview,
//! demonstration collection, cloning, fine-tuning, evaluation, and
//! channel ablations.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration error,
//! 3 runtime failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use softquad::config::ExperimentConfig;
use softquad::env::{log_line, Env, GrfSource};
use softquad::gait::{reference_action, GaitSchedule};
use softquad::learn::{
    ablate, behavior_clone, collect_demonstrations, evaluate_policy, load_demos,
    load_policy, load_sac_checkpoint, mix_seed, sac_train_init, save_demos, save_policy,
    save_sac_checkpoint, sign_test_p, Ablation, EvalMetrics, GaussianPolicy, SacParams,
};
use softquad::tactile::{generate_calibration_data, save_dataset, train_force_estimator,
    ForceEstimator};

#[derive(Parser)]
#[command(
    name = "softquad",
    version,
    about = "Simulation and staged-learning stack for a pneumatic soft quadruped"
)]
struct Cli {
    /// Experiment configuration (TOML); defaults are built in.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generates press-cycle calibration data and trains the foot force
    /// estimator.
    CalibrateTactile {
        #[arg(long, default_value = "out/tactile")]
        out: PathBuf,
        #[arg(long, default_value_t = 2025)]
        seed: u64,
    },
    /// Rolls out the scripted crawl on the nominal robot and streams the
    /// step log.
    Gait {
        /// Surface inclination (deg).
        #[arg(long, default_value_t = 0.0)]
        incline: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Log file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Records scripted-gait demonstrations under domain randomization.
    CollectDemos {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 2025)]
        seed: u64,
        #[arg(long, default_value = "out/demos.txt")]
        out: PathBuf,
    },
    /// Clones an actor from recorded demonstrations.
    TrainBc {
        #[arg(long, default_value = "out/demos.txt")]
        demos: PathBuf,
        #[arg(long, default_value = "out/bc_policy.bin")]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Fine-tunes a cloned actor with off-policy reinforcement learning,
    /// one independent run per seed.
    TrainSac {
        /// Initial actor checkpoint (from train-bc or an earlier stage).
        #[arg(long, default_value = "out/bc_policy.bin")]
        policy: PathBuf,
        #[arg(long, default_value = "out/sac")]
        out: PathBuf,
        /// Terrain curriculum for this stage.
        #[arg(long, value_enum, default_value_t = Stage::Flat)]
        stage: Stage,
        /// Episode budget; defaults to the stage's configured budget.
        #[arg(long)]
        episodes: Option<usize>,
        /// Training seeds; defaults to the configured seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Episodes between checkpoints.
        #[arg(long, default_value_t = 50)]
        checkpoint_every: usize,
        /// Continue interrupted runs from their checkpoints in `out`.
        #[arg(long, default_value_t = false)]
        resume: bool,
        /// Foot force estimator; enables sensor-emulated observations.
        #[arg(long)]
        estimator: Option<PathBuf>,
    },
    /// Evaluates a policy checkpoint with deterministic (mean) actions.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Episodes per seed.
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Surface inclination (deg).
        #[arg(long, default_value_t = 0.0)]
        incline: f64,
        /// Disables the suction feet.
        #[arg(long, default_value_t = false)]
        disable_suction: bool,
        /// Foot force estimator; enables sensor-emulated observations.
        #[arg(long)]
        estimator: Option<PathBuf>,
        /// Worker threads; results are independent of the count.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Per-episode log file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired intact-versus-ablated comparison of one observation or
    /// actuation channel.
    Ablate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_enum)]
        channel: Channel,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Episodes per seed.
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        /// Surface inclination (deg).
        #[arg(long, default_value_t = 0.0)]
        incline: f64,
    },
    /// Mean speed and fall rate of one or more policies across surface
    /// inclinations.
    InclineSweep {
        /// Policy checkpoints, each swept independently.
        #[arg(long, required = true)]
        policy: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 2.5, 5.0])]
        inclines: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Episodes per seed and inclination.
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Stage {
    /// Flat ground only.
    Flat,
    /// Mixed flat and inclined ground.
    Incline,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Channel {
    /// Replace orientation, rates, acceleration, and force estimates
    /// with noise.
    ImuGrf,
    /// Disable the suction feet.
    Suction,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            std::process::exit(code);
        }
    };
    let cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("configuration error: {e}");
                std::process::exit(2);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Err(e) = run(cli, cfg) {
        eprintln!("error: {e:#}");
        std::process::exit(3);
    }
}

fn run(cli: Cli, cfg: ExperimentConfig) -> anyhow::Result<()> {
    match cli.command {
        Command::CalibrateTactile { out, seed } => calibrate_tactile(&cfg, &out, seed),
        Command::Gait { incline, seed, out } => gait_preview(&cfg, incline, seed, out),
        Command::CollectDemos {
            episodes,
            seed,
            out,
        } => collect_demos(&cfg, episodes, seed, &out),
        Command::TrainBc { demos, out, seed } => train_bc(&cfg, &demos, &out, seed),
        Command::TrainSac {
            policy,
            out,
            stage,
            episodes,
            seeds,
            checkpoint_every,
            resume,
            estimator,
        } => train_sac(
            &cfg,
            &policy,
            &out,
            stage,
            episodes,
            seeds,
            checkpoint_every,
            resume,
            estimator,
        ),
        Command::Evaluate {
            policy,
            seeds,
            episodes,
            incline,
            disable_suction,
            estimator,
            workers,
            out,
        } => evaluate(
            &cfg,
            &policy,
            seeds,
            episodes,
            incline,
            disable_suction,
            estimator,
            workers,
            out,
        ),
        Command::Ablate {
            policy,
            channel,
            seeds,
            episodes,
            incline,
        } => run_ablate(&cfg, &policy, channel, seeds, episodes, incline),
        Command::InclineSweep {
            policy,
            inclines,
            seeds,
            episodes,
            out,
        } => incline_sweep(&cfg, &policy, &inclines, seeds, episodes, out),
    }
}

fn grf_source(estimator: Option<&Path>) -> anyhow::Result<GrfSource> {
    Ok(match estimator {
        Some(path) => GrfSource::Tactile(ForceEstimator::load(path)?),
        None => GrfSource::Oracle,
    })
}

/// Fixed-incline evaluation variant of the configuration: nominal robot,
/// sensor noise kept.
fn eval_cfg(cfg: &ExperimentConfig, incline_deg: f64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.randomization.enabled = false;
    c.world.incline_deg = incline_deg;
    c
}

/// Records the inputs that produced a set of artifacts next to them.
fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    seeds: &[u64],
    outputs: &[String],
) -> anyhow::Result<()> {
    let toml_text = toml::to_string_pretty(cfg)?;
    let digest = Sha256::digest(toml_text.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    let mut m = String::new();
    let _ = writeln!(m, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "command = \"{command}\"");
    let _ = writeln!(m, "config_sha256 = \"{hex}\"");
    let _ = writeln!(m, "seeds = {seeds:?}");
    let _ = writeln!(
        m,
        "outputs = [{}]",
        outputs
            .iter()
            .map(|o| format!("\"{o}\""))
            .collect::<Vec<_>>()
            .join(", ")
    );
    std::fs::write(dir.join("manifest.toml"), m)?;
    Ok(())
}

fn calibrate_tactile(cfg: &ExperimentConfig, out: &Path, seed: u64) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let dataset = generate_calibration_data(&cfg.tactile, seed);
    let data_path = out.join("presses.txt");
    save_dataset(&dataset, &data_path)?;
    let (estimator, report) = train_force_estimator(&dataset, cfg.tactile.epochs, seed)?;
    let est_path = out.join("estimator.bin");
    estimator.save(&est_path)?;
    println!(
        "{} press cycles, {} samples  held-out RMSE: {:.4} N ({:.2}% of {:.1} N range)",
        cfg.tactile.press_cycles,
        dataset.records.len(),
        report.rmse,
        100.0 * report.rmse / report.force_range,
        report.force_range
    );
    println!(
        "linear baseline RMSE: {:.4} N  r^2: {:.4}",
        report.linear_rmse, report.r_squared
    );
    write_manifest(
        out,
        "calibrate-tactile",
        cfg,
        &[seed],
        &["presses.txt".into(), "estimator.bin".into()],
    )
}

fn gait_preview(
    cfg: &ExperimentConfig,
    incline_deg: f64,
    seed: u64,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let cfg = eval_cfg(cfg, incline_deg);
    let schedule = GaitSchedule::build(&cfg.gait);
    let mut env = Env::new(cfg, GrfSource::Oracle);
    env.reset(seed)?;

    let mut log = String::new();
    log.push_str(
        "# t x y z roll pitch yaw reward p_prog p_yaw p_h p_ori p_smooth \
         f1 f2 f3 f4 fhat1 fhat2 fhat3 fhat4 a1..a16\n",
    );
    let mut x0 = 0.0;
    let mut first = true;
    let dx;
    let fell;
    loop {
        let t = env.time();
        let sim = env.sim.as_ref().expect("reset above");
        let action = reference_action(&schedule, t, &sim.pneu, &env.cfg.pneumatics);
        let step = env.step(&action)?;
        if first {
            x0 = step.info.pose[0] + step.info.breakdown.progress;
            first = false;
        }
        log.push_str(&log_line(&step.info, step.reward, &action));
        log.push('\n');
        if step.terminated {
            dx = step.info.pose[0] - x0;
            fell = step.info.fell;
            break;
        }
    }
    match out {
        Some(path) => std::fs::write(&path, log)?,
        None => print!("{log}"),
    }
    eprintln!(
        "displacement {dx:.3} m over {:.0} s at {incline_deg}°{}",
        env.time(),
        if fell { " (fell)" } else { "" }
    );
    Ok(())
}

fn collect_demos(
    cfg: &ExperimentConfig,
    episodes: Option<usize>,
    seed: u64,
    out: &Path,
) -> anyhow::Result<()> {
    let n = episodes.unwrap_or(cfg.train.bc_episodes);
    let schedule = GaitSchedule::build(&cfg.gait);
    let mut env = Env::new(cfg.clone(), GrfSource::Oracle);
    let dataset = collect_demonstrations(&mut env, &schedule, n, seed)?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_demos(&dataset, out)?;
    println!(
        "{} state-action pairs from {} episodes ({} discarded for falls) -> {}",
        dataset.pairs.len(),
        n,
        dataset.discarded,
        out.display()
    );
    Ok(())
}

fn train_bc(
    cfg: &ExperimentConfig,
    demos: &Path,
    out: &Path,
    seed: u64,
) -> anyhow::Result<()> {
    let dataset = load_demos(demos)?;
    let (policy, report) = behavior_clone(&dataset, &cfg.train, seed)?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_policy(&policy, out)?;
    println!(
        "cloned on {} pairs: train MSE {:.2e}, held-out MSE {:.2e} after {} epochs -> {}",
        dataset.pairs.len(),
        report.train_mse,
        report.holdout_mse,
        report.epochs_run,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_sac(
    cfg: &ExperimentConfig,
    policy_path: &Path,
    out: &Path,
    stage: Stage,
    episodes: Option<usize>,
    seeds: Option<Vec<u64>>,
    checkpoint_every: usize,
    resume: bool,
    estimator: Option<PathBuf>,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let mut train_cfg = cfg.clone();
    let budget = match stage {
        Stage::Flat => episodes.unwrap_or(cfg.train.episodes_flat),
        Stage::Incline => {
            let g = cfg.train.incline_deg;
            train_cfg.randomization.inclines_deg = vec![0.0, g, 2.0 * g];
            episodes.unwrap_or(cfg.train.episodes_incline)
        }
    };
    let seeds = seeds.unwrap_or_else(|| cfg.train.seeds.clone());
    let params = SacParams::from_config(&cfg.train, softquad::env::ACTION_DIM);
    let mut outputs = Vec::new();

    for &seed in &seeds {
        let ckpt_path = out.join(format!("seed{seed}_ckpt.bin"));
        let curve_path = out.join(format!("seed{seed}_curve.txt"));
        let final_path = out.join(format!("seed{seed}_policy.bin"));

        let (mut policy, init, prior_returns) = if resume && ckpt_path.exists() {
            let (p, init, returns) = load_sac_checkpoint(&ckpt_path)?;
            println!("seed {seed}: resuming at episode {}", init.start_episode);
            (p, Some(init), returns)
        } else {
            (load_policy(policy_path)?, None, Vec::new())
        };
        let done_already = init.as_ref().map_or(0, |i| i.start_episode);
        if done_already >= budget {
            println!("seed {seed}: already complete ({done_already} episodes)");
            continue;
        }

        let all_returns = std::cell::RefCell::new(prior_returns);
        let mut env = Env::new(train_cfg.clone(), grf_source(estimator.as_deref())?);
        let run = sac_train_init(
            &mut env,
            &mut policy,
            &params,
            budget - done_already,
            seed,
            init,
            |p| {
                let mut returns = all_returns.borrow_mut();
                returns.push(p.episode_return);
                if (p.episode + 1) % 10 == 0 {
                    println!(
                        "seed {seed} episode {} return {:.2}",
                        p.episode, p.episode_return
                    );
                }
                if (p.episode + 1) % checkpoint_every == 0 {
                    let _ = save_sac_checkpoint(
                        p.policy,
                        p.q1,
                        p.q2,
                        p.log_alpha,
                        p.episode + 1,
                        &returns,
                        &ckpt_path,
                    );
                }
            },
        )?;
        let returns = all_returns.into_inner();
        save_sac_checkpoint(
            &policy,
            &run.q1,
            &run.q2,
            run.log_alpha,
            budget,
            &returns,
            &ckpt_path,
        )?;
        save_policy(&policy, &final_path)?;
        let mut curve = String::from("# episode return\n");
        for (ep, r) in returns.iter().enumerate() {
            let _ = writeln!(curve, "{ep} {r:.6}");
        }
        std::fs::write(&curve_path, curve)?;
        let tail: Vec<f64> = returns.iter().rev().take(10).copied().collect();
        println!(
            "seed {seed}: {} episodes, last-10 mean return {:.2}",
            returns.len(),
            tail.iter().sum::<f64>() / tail.len().max(1) as f64
        );
        for p in [&ckpt_path, &curve_path, &final_path] {
            outputs.push(p.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    write_manifest(out, "train-sac", &train_cfg, &seeds, &outputs)
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    cfg: &ExperimentConfig,
    policy_path: &Path,
    seeds: Option<Vec<u64>>,
    episodes: usize,
    incline_deg: f64,
    disable_suction: bool,
    estimator: Option<PathBuf>,
    workers: usize,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let policy = load_policy(policy_path)?;
    let cfg = eval_cfg(cfg, incline_deg);
    let base_seeds = seeds.unwrap_or_else(|| cfg.train.seeds.clone());
    let eval_seeds: Vec<u64> = base_seeds
        .iter()
        .flat_map(|&s| (0..episodes as u64).map(move |i| mix_seed(s, i)))
        .collect();
    let ablation = if disable_suction {
        Ablation::SuctionOff
    } else {
        Ablation::None
    };
    let metrics = parallel_evaluate(
        &cfg,
        &policy,
        &eval_seeds,
        ablation,
        estimator.as_deref(),
        workers,
    )?;

    let mut report = String::from("# seed displacement speed mean_tilt return fell steps\n");
    for e in &metrics.episodes {
        let _ = writeln!(
            report,
            "{} {:.4} {:.4} {:.4} {:.3} {} {}",
            e.seed, e.displacement, e.speed, e.mean_tilt, e.episode_return,
            e.fell as u8, e.steps
        );
    }
    print!("{report}");
    println!(
        "mean speed {:.4} m/s  mean tilt {:.4} rad  fall rate {:.0}% over {} episodes",
        metrics.mean_speed,
        metrics.mean_tilt,
        100.0 * metrics.fall_rate,
        metrics.episodes.len()
    );
    if let Some(path) = out {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, report)?;
    }
    Ok(())
}

/// Splits the seed list across worker threads, each with its own
/// environment; episode results are reassembled in seed order, so the
/// outcome does not depend on the worker count.
fn parallel_evaluate(
    cfg: &ExperimentConfig,
    policy: &GaussianPolicy,
    seeds: &[u64],
    ablation: Ablation,
    estimator: Option<&Path>,
    workers: usize,
) -> anyhow::Result<EvalMetrics> {
    let workers = workers.clamp(1, seeds.len().max(1));
    if workers == 1 {
        let mut env = Env::new(cfg.clone(), grf_source(estimator)?);
        return Ok(evaluate_policy(&mut env, policy, seeds, ablation)?);
    }
    let chunk = seeds.len().div_ceil(workers);
    let parts: Vec<Vec<softquad::learn::EpisodeMetric>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || -> anyhow::Result<_> {
                    let mut env = Env::new(cfg.clone(), grf_source(estimator)?);
                    Ok(evaluate_policy(&mut env, policy, part, ablation)?.episodes)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    let episodes: Vec<_> = parts.into_iter().flatten().collect();
    let n = episodes.len() as f64;
    Ok(EvalMetrics {
        mean_speed: episodes.iter().map(|e| e.speed).sum::<f64>() / n,
        mean_tilt: episodes.iter().map(|e| e.mean_tilt).sum::<f64>() / n,
        fall_rate: episodes.iter().filter(|e| e.fell).count() as f64 / n,
        episodes,
    })
}

fn run_ablate(
    cfg: &ExperimentConfig,
    policy_path: &Path,
    channel: Channel,
    seeds: Option<Vec<u64>>,
    episodes: usize,
    incline_deg: f64,
) -> anyhow::Result<()> {
    let policy = load_policy(policy_path)?;
    let cfg = eval_cfg(cfg, incline_deg);
    let base_seeds = seeds.unwrap_or_else(|| cfg.train.seeds.clone());
    let eval_seeds: Vec<u64> = base_seeds
        .iter()
        .flat_map(|&s| (0..episodes as u64).map(move |i| mix_seed(s, i)))
        .collect();
    let ablation = match channel {
        Channel::ImuGrf => Ablation::ImuGrfNoise,
        Channel::Suction => Ablation::SuctionOff,
    };
    let mut env = Env::new(cfg, GrfSource::Oracle);
    let (intact, ablated) = ablate(&mut env, &policy, ablation, &eval_seeds)?;

    println!("# seed intact_speed ablated_speed");
    let mut wins = 0;
    let mut ties = 0;
    for (a, b) in intact.episodes.iter().zip(&ablated.episodes) {
        println!("{} {:.4} {:.4}", a.seed, a.speed, b.speed);
        if a.speed > b.speed {
            wins += 1;
        } else if a.speed == b.speed {
            ties += 1;
        }
    }
    let n = intact.episodes.len() - ties;
    let p = if n > 0 { sign_test_p(wins, n) } else { 1.0 };
    println!(
        "intact mean speed {:.4} m/s, ablated {:.4} m/s (ratio {:.3})",
        intact.mean_speed,
        ablated.mean_speed,
        ablated.mean_speed / intact.mean_speed.max(1e-12)
    );
    println!(
        "one-sided sign test (intact faster): {wins}/{n} wins, p = {p:.4}"
    );
    println!(
        "fall rate intact {:.0}%, ablated {:.0}%",
        100.0 * intact.fall_rate,
        100.0 * ablated.fall_rate
    );
    Ok(())
}

fn incline_sweep(
    cfg: &ExperimentConfig,
    policies: &[PathBuf],
    inclines: &[f64],
    seeds: Option<Vec<u64>>,
    episodes: usize,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let base_seeds = seeds.unwrap_or_else(|| cfg.train.seeds.clone());
    let eval_seeds: Vec<u64> = base_seeds
        .iter()
        .flat_map(|&s| (0..episodes as u64).map(move |i| mix_seed(s, i)))
        .collect();
    let mut table = String::from("# policy incline_deg mean_speed fall_rate\n");
    for path in policies {
        let policy = load_policy(path)?;
        for &g in inclines {
            let mut env = Env::new(eval_cfg(cfg, g), GrfSource::Oracle);
            let m = evaluate_policy(&mut env, &policy, &eval_seeds, Ablation::None)?;
            let _ = writeln!(
                table,
                "{} {:.1} {:.4} {:.2}",
                path.display(),
                g,
                m.mean_speed,
                m.fall_rate
            );
        }
    }
    print!("{table}");
    if let Some(path) = out {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, table)?;
    }
    Ok(())
}
