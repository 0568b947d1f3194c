use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use clgroups::gf::{parse_field, Field};
use clgroups::groups::GroupDesc;
use clgroups::par::seed_stream;
use clgroups::snlab::{sn_pipeline, PipelineOptions};
use clgroups::spectral::{cayley_diameter_bfs, standard_starts};
use clgroups::trajectories::{run_joint_trajectory, Mode, Policy};
use clgroups::words::Word;
use clgroups_harness::config::ExperimentConfig;
use clgroups_harness::{output_root, run_experiment};
use serde_json::json;
use std::path::PathBuf;

/// Finite classical groups with random generators: sampling, trajectories,
/// diameters and Monte Carlo experiments.
#[derive(Parser)]
#[command(name = "clg", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed (overrides `seeds` in an experiment config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trial count (overrides `trials` in an experiment config).
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Worker threads for data-parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Describe a finite field, given as GF(p^e), GF(q) or q.
    Field { field: String },
    #[command(subcommand)]
    Group(GroupCmd),
    #[command(subcommand)]
    Trajectory(TrajectoryCmd),
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    #[command(subcommand)]
    Diameter(DiameterCmd),
    #[command(subcommand)]
    Sn(SnCmd),
}

#[derive(Subcommand)]
enum GroupCmd {
    /// Draw uniform elements of a group such as "Sp(4,3)" or "GO-(6,3):S".
    Sample {
        group: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
}

#[derive(Subcommand)]
enum TrajectoryCmd {
    /// Lazily simulate joint trajectories of the standard r-tuple under a word
    /// such as "x1 x2^-1"; prints one JSON record per trajectory.
    Run {
        group: String,
        word: String,
        #[arg(long, default_value_t = 1)]
        r: usize,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Run an experiment config and persist results under $CLG_OUTPUT_ROOT.
    Run { config: PathBuf },
}

#[derive(Subcommand)]
enum DiameterCmd {
    /// Exact Cayley diameter for k uniform generators of a small group.
    Bfs {
        group: String,
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
}

#[derive(Subcommand)]
enum SnCmd {
    /// Search for a 3-cycle word in S_n from three random permutations.
    Pipeline {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 12)]
        max_len: usize,
    },
}

fn field_arg(s: &str) -> Result<Field> {
    let desc = if s.trim().starts_with("GF(") { s.to_string() } else { format!("GF({})", s.trim()) };
    Ok(parse_field(&desc)?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(t) = cli.common.threads {
        set_threads(t)?;
    }
    let seed = cli.common.seed.unwrap_or(0);
    match cli.cmd {
        Cmd::Field { field } => {
            let f = field_arg(&field)?;
            let squares = f.elements().filter(|&x| x != 0 && f.is_square(x)).count();
            let out = json!({
                "field": f.descriptor(),
                "p": f.p(),
                "e": f.e(),
                "q": f.q(),
                "modulus": f.modulus(),
                "generator": f.generator(),
                "nonzero_squares": squares,
                "theta_defined": f.theta_defined(),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Cmd::Group(GroupCmd::Sample { group, count }) => {
            let desc = GroupDesc::parse(&group)?;
            println!("# {desc}, order {}", desc.order());
            let mut rng = seed_stream(seed, 0);
            for i in 0..count {
                let g = desc.sample_uniform(&mut rng);
                println!("# element {i}\n{}", g.to_text());
            }
        }
        Cmd::Trajectory(TrajectoryCmd::Run { group, word, r }) => {
            let desc = GroupDesc::parse(&group)?;
            let w = Word::parse_auto(&word)?.reduce();
            let starts = standard_starts(desc.space(), r)?;
            let mut rng = seed_stream(seed, 0);
            for _ in 0..cli.common.trials.unwrap_or(1) {
                let mode = Mode::Lazy { rng: &mut rng, policy: Policy::uniform() };
                let rec = run_joint_trajectory(desc.space(), &w, &starts, &starts, mode)?;
                println!("{}", rec.to_jsonl());
            }
        }
        Cmd::Experiment(ExperimentCmd::Run { config }) => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = cli.common.seed {
                cfg.seeds = vec![s];
            }
            if let Some(t) = cli.common.trials {
                cfg.trials = Some(t);
            }
            cfg.validate()?;
            let rec = run_experiment(&cfg, &output_root())?;
            for row in &rec.summary {
                let seed = row.seed.map(|s| format!(" seed {s}")).unwrap_or_default();
                let verdict = match row.pass {
                    Some(true) => " PASS",
                    Some(false) => " FAIL",
                    None => "",
                };
                println!("{}{seed}: {} = {}{verdict}", row.label, row.metric, row.value);
            }
            println!("wrote {} ({:.2}s, config {})", rec.output_dir.display(), rec.wall_clock_secs, &rec.config_hash[..12]);
            if !rec.passed {
                bail!("{} reported failed checks", rec.experiment);
            }
        }
        Cmd::Diameter(DiameterCmd::Bfs { group, k }) => {
            let desc = GroupDesc::parse(&group)?;
            let mut rng = seed_stream(seed, 0);
            let gens: Vec<_> = (0..k).map(|_| desc.sample_uniform(&mut rng)).collect();
            let rep = cayley_diameter_bfs(&desc, &gens).context("diameter search")?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
        }
        Cmd::Sn(SnCmd::Pipeline { n, max_len }) => {
            let opts = PipelineOptions { max_len, ..Default::default() };
            let rep = sn_pipeline(n, seed, &opts);
            println!("{}", serde_json::to_string_pretty(&rep)?);
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn set_threads(t: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: usize) -> Result<()> {
    eprintln!("built without the parallel feature; --threads is ignored");
    Ok(())
}
