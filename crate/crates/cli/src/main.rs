use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use triagekit_core::commands::{cmd_ablate, cmd_evaluate, cmd_pool, cmd_synth, cmd_train};
use triagekit_core::config::{load_generator_config, RunConfig};
use triagekit_core::synth::GeneratorConfig;
use triagekit_core::Error;

/// Applicant triage: synthetic data, GBDT admit-probability model, pools,
/// evaluation and feature-group ablations.
#[derive(Parser, Debug)]
#[command(name = "triagekit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run config (TOML); for `synth`, a generator config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Progress on stderr; pool assignments include scores.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic applicant file and its schema.
    Synth,
    /// Split, fit the pipeline and model, write the bundle and split manifest.
    Train,
    /// Score rows with a bundle and write quantile-pool reports.
    Pool,
    /// Recall, capture tests, composition, calibration and histogram reports.
    Evaluate,
    /// Refit with feature groups removed or added and compare.
    Ablate,
}

fn run_config(cli: &Cli) -> Result<RunConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.paths.out = out.clone();
    }
    Ok(cfg)
}

fn progress(cli: &Cli, msg: &str) {
    if cli.verbose {
        eprintln!("triagekit: {msg}");
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth => {
            let mut cfg = match &cli.config {
                Some(p) => load_generator_config(p)?,
                None => GeneratorConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            progress(cli, &format!("generating {} rows (seed {})", cfg.n_rows, cfg.seed));
            let s = cmd_synth(&cfg, &out)?;
            println!("wrote {} and {}", s.schema_path.display(), s.data_path.display());
            println!("rows {} prevalence {:.4}", s.n_rows, s.prevalence);
        }
        Command::Train => {
            let cfg = run_config(cli)?;
            progress(cli, &format!("training {} stages (seed {})", cfg.train.n_stages, cfg.seed));
            let t = cmd_train(&cfg)?;
            println!("train rows {} prevalence {:.4}", t.n_train, t.train_prevalence);
            println!("test rows {} prevalence {:.4}", t.n_test, t.test_prevalence);
            println!("features {} usable {}", t.n_features, t.n_usable);
            println!("wrote {} and {}", t.bundle_path.display(), t.manifest_path.display());
        }
        Command::Pool => {
            let cfg = run_config(cli)?;
            let p = cmd_pool(&cfg, cli.verbose)?;
            let sizes: Vec<String> = p.sizes.iter().map(usize::to_string).collect();
            println!("scored {} rows; pool sizes (top down) {}", p.n, sizes.join(" "));
            println!("top pool {} rows; reports in {}", p.top_k, p.dir.display());
        }
        Command::Evaluate => {
            let cfg = run_config(cli)?;
            let (r, dir) = cmd_evaluate(&cfg)?;
            for c in &r.capture {
                print!("{} k={} model capture {:.4}", c.cohort, c.k, c.model_capture);
                if let Some(b) = c.baseline_capture {
                    print!(" baseline {b:.4}");
                }
                match &c.chisq {
                    Some(t) => println!(" chi2(1)={:.4} p_one_sided={:.4}", t.chi2, t.p_one_sided),
                    None => println!(),
                }
            }
            match r.calibration_r {
                Some(v) => println!("calibration r over {} pools {v:.4}", r.calibration.len()),
                None => println!("calibration r undefined"),
            }
            println!("reports in {}", dir.display());
        }
        Command::Ablate => {
            let cfg = run_config(cli)?;
            progress(cli, &format!("{} variants", cfg.ablation.variants.len()));
            let (r, dir) = cmd_ablate(&cfg)?;
            for v in r.variants.iter().chain(&r.heuristic) {
                print!("{} capture {:.4}", v.name, v.top_k_capture);
                match &v.chisq_vs_reference {
                    Some(t) => println!(" chi2(1)={:.4} p_one_sided={:.4}", t.chi2, t.p_one_sided),
                    None => println!(),
                }
            }
            println!("reports in {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("triagekit: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
