use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::bail;
use clap::{Args, Parser, Subcommand};
use multion_core::agents::AgentKind;
use multion_core::scene::{generate_scene, save_scene, SceneGenSpec};
use multion_harness::config::{PsmSequence, RunConfig};
use multion_harness::dataset::{make_dataset, EpisodeDataset};
use multion_harness::report::{write, write_ablation, write_eval, write_paired};
use multion_harness::runner::{optimum, run_ablation, run_eval, run_paired, RunOptions};
use multion_harness::training::{train_agent, training_dataset};
use multion_harness::HarnessError;
use multion_learn::checkpoint;
use multion_learn::train::log_csv;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "multion", about = "Multi-object navigation experiments on procedural grid scenes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// geodesic or euclidean success radius.
    #[arg(long, global = true)]
    success_metric: Option<String>,
    /// Only credit categories the agent has seen.
    #[arg(long, global = true)]
    require_seen: bool,
    /// Let sequenced agents be credited out of order.
    #[arg(long, global = true)]
    psm_opportunistic: bool,
    /// Whether the process reward needs a strict distance decrease.
    #[arg(long, global = true)]
    strict_decrease: Option<bool>,
    /// Checkpoint for a learned agent, as AGENT=PATH.
    #[arg(long = "checkpoint", global = true, value_name = "AGENT=PATH")]
    checkpoints: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write procedurally generated scenes as text files.
    GenScenes,
    /// Build an episode dataset from the config.
    MakeDataset,
    /// Train a learned agent.
    Train {
        #[arg(long, default_value = "learned-sam")]
        agent: AgentKind,
    },
    /// Evaluate agents on a dataset.
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Agents to run (defaults to the config's list).
        #[arg(long = "agent")]
        agents: Vec<AgentKind>,
    },
    /// Paired sequence-agnostic vs sequenced comparison.
    Paired {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "sam-oracle")]
        sam_agent: AgentKind,
        #[arg(long, default_value = "psm-oracle")]
        psm_agent: AgentKind,
        /// realized (SAM's found order) or dataset (random order).
        #[arg(long, default_value = "realized")]
        psm_sequence: PsmSequence,
    },
    /// Success versus timestep budget on recorded trajectories.
    Ablate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long = "agent")]
        agents: Vec<AgentKind>,
    },
    /// Print the optimal multi-goal path length of one episode.
    Gspl {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        episode: String,
    },
}

fn resolve_config(c: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &c.sets {
        let (k, v) = kv.split_once('=').ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = &c.success_metric {
        cfg.set("success_metric", m)?;
    }
    if c.require_seen {
        cfg.env.require_seen = true;
    }
    if c.psm_opportunistic {
        cfg.psm_opportunistic = true;
    }
    if let Some(b) = c.strict_decrease {
        cfg.reward.strict_decrease = b;
    }
    for kv in &c.checkpoints {
        let (k, v) = kv.split_once('=').ok_or_else(|| HarnessError::Config(format!("--checkpoint expects AGENT=PATH, got {kv:?}")))?;
        cfg.set(&format!("checkpoint.{}", k.trim()), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset_for(path: Option<&Path>, cfg: &RunConfig) -> anyhow::Result<EpisodeDataset> {
    let ds = match path {
        Some(p) => EpisodeDataset::load(p)?,
        None => make_dataset(cfg)?,
    };
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ds)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(&cli.common)?;
    let out = &cli.common.out;
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    match cli.command {
        Command::GenScenes => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for i in 0..cfg.scenes {
                let mut g = SceneGenSpec::new(cfg.scene_width, cfg.scene_height, cfg.rooms, rng.random());
                g.instances_per_category = cfg.instances.clone();
                let scene = generate_scene(&g)?;
                save_scene(&scene, &out.join(format!("gen{i:03}.scene")))?;
            }
            println!("wrote {} scenes to {}", cfg.scenes, out.display());
        }
        Command::MakeDataset => {
            let ds = dataset_for(None, &cfg)?;
            ds.save(&out.join("dataset.json"))?;
            write(&out.join("config.txt"), &cfg.to_text())?;
            println!("{} episodes over {} scenes -> {}", ds.episodes.len(), ds.scenes.len(), out.join("dataset.json").display());
        }
        Command::Train { agent } => {
            let data = training_dataset(&cfg)?;
            let start = Instant::now();
            let mut window = Vec::new();
            let trained = train_agent(&cfg, agent, &data, |row| {
                window.push(row.success);
                if window.len() == 50 {
                    let ok = window.iter().filter(|&&s| s).count();
                    eprintln!("episode {:>5}  success {ok:>2}/50  {:.0}s", row.episode + 1, start.elapsed().as_secs_f64());
                    window.clear();
                }
            })?;
            let ckpt = out.join(format!("{agent}.ckpt"));
            checkpoint::save(&trained.policy, &ckpt)?;
            write(&out.join(format!("{agent}.train.csv")), &log_csv(&trained.log))?;
            write(&out.join("config.txt"), &cfg.to_text())?;
            println!(
                "{agent}: {} episodes, {} transitions, {} critic updates in {:.0}s -> {}",
                trained.log.len(),
                trained.transitions,
                trained.updates,
                start.elapsed().as_secs_f64(),
                ckpt.display()
            );
        }
        Command::Eval { dataset, agents } => {
            let agents = if agents.is_empty() { cfg.agents.clone() } else { agents };
            let ds = dataset_for(dataset.as_deref(), &cfg)?;
            let scenes = ds.load_scenes()?;
            let opts = RunOptions::from_config(&cfg, &agents)?;
            let outcomes = run_eval(&ds, &scenes, &agents, &opts)?;
            write(&out.join("config.txt"), &cfg.to_text())?;
            print!("{}", write_eval(out, &outcomes, &ds, &scenes, cfg.seed)?);
        }
        Command::Paired { dataset, sam_agent, psm_agent, psm_sequence } => {
            let ds = dataset_for(dataset.as_deref(), &cfg)?;
            let scenes = ds.load_scenes()?;
            let opts = RunOptions::from_config(&cfg, &[sam_agent, psm_agent])?;
            let paired = run_paired(&ds, &scenes, sam_agent, psm_agent, psm_sequence, &opts)?;
            write(&out.join("config.txt"), &cfg.to_text())?;
            print!("{}", write_paired(out, &paired, &ds, &scenes, cfg.seed)?);
        }
        Command::Ablate { dataset, agents } => {
            let agents = if agents.is_empty() { cfg.agents.clone() } else { agents };
            let ds = dataset_for(dataset.as_deref(), &cfg)?;
            let scenes = ds.load_scenes()?;
            let opts = RunOptions::from_config(&cfg, &agents)?;
            let outcomes = run_eval(&ds, &scenes, &agents, &opts)?;
            let rows = run_ablation(&outcomes, &cfg.budgets)?;
            write(&out.join("config.txt"), &cfg.to_text())?;
            print!("{}", write_ablation(out, &rows, cfg.seed)?);
        }
        Command::Gspl { dataset, episode } => {
            let ds = EpisodeDataset::load(&dataset)?;
            let scenes = ds.load_scenes()?;
            let Some(i) = ds.episodes.iter().position(|e| e.id == episode) else {
                bail!(HarnessError::Dataset(format!("no episode {episode:?} in {}", dataset.display())));
            };
            let spec = ds.spec(&scenes, i, None)?;
            let g = optimum(&spec)?;
            println!("{g}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (class, code) = err.chain().find_map(|e| e.downcast_ref::<HarnessError>()).map_or(("internal", 1), |h| (h.class(), h.exit_code()));
            eprintln!("error[{class}]: {err:#}");
            ExitCode::from(code)
        }
    }
}
