use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use albench_core::adapter::{self, AdapterServer, ServerOptions};
use albench_core::annotation::{tolerance_sweep, LabelMask};
use albench_core::io as alio;
use albench_core::learners::TrainConfig;
use albench_core::orchestrator::{
    plot_data_dir, run_config, summarize_dir, ExperimentConfig, RunOverrides, Summary,
};
use albench_core::synthetic;

#[derive(Parser)]
#[command(name = "albench", version, about = "Pool-based active-learning benchmark")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every arm and trial of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides both trial counts of the preset.
        #[arg(long)]
        trials: Option<usize>,
        /// Overrides the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean clicks per image and polygon-label mIoU across RDP tolerances.
    SweepTolerance {
        /// Directory of 8-bit mask PNGs.
        #[arg(long, conflicts_with = "synthetic")]
        masks: Option<PathBuf>,
        /// Sweep this many synthetic blob masks instead.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0, 2.0, 5.0, 10.0, 20.0])]
        tolerances: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        num_classes: usize,
        /// Mask value excluded from polygons and scoring.
        #[arg(long, default_value_t = 255)]
        void: u8,
        /// Class given to pixels no polygon covers.
        #[arg(long, default_value_t = 0)]
        background: u8,
        /// CSV output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute summary.json and summary.csv from a run's records.
    Summarize { dir: PathBuf },
    /// Write curves.csv with every trial's learning curve.
    PlotData { dir: PathBuf },
    /// Replay the golden transcript against an adapter executable.
    AdapterCheck {
        /// Scratch directory for the toy dataset.
        #[arg(long)]
        workdir: Option<PathBuf>,
        #[arg(required = true, trailing_var_arg = true, allow_hyphen_values = true)]
        command: Vec<String>,
    },
    /// Serve the built-in learners over the adapter protocol on stdio.
    ServeAdapter {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training epochs per request.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, hide = true)]
        crash_on_train: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e
                .chain()
                .filter_map(|c| c.downcast_ref::<albench_core::Error>())
                .any(albench_core::Error::is_config);
            ExitCode::from(if config { 2 } else { 3 })
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Run {
            config,
            trials,
            seed,
            out,
        } => run(&config, trials, seed, out),
        Cmd::SweepTolerance {
            masks,
            synthetic,
            tolerances,
            num_classes,
            void,
            background,
            out,
        } => {
            let masks = match (masks, synthetic) {
                (Some(dir), _) => alio::load_masks(&dir, Some(void))
                    .with_context(|| format!("reading masks from {}", dir.display()))?
                    .into_iter()
                    .map(|(_, m)| m)
                    .collect(),
                (None, Some(n)) => synthetic_masks(n),
                (None, None) => bail!(albench_core::Error::Config(
                    "pass --masks <dir> or --synthetic <n>".into()
                )),
            };
            let sweep = tolerance_sweep(&masks, &tolerances, num_classes, background)?;
            match out {
                Some(p) => sweep.write_csv(std::fs::File::create(&p)?)?,
                None => sweep.write_csv(io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Summarize { dir } => {
            let s = summarize_dir(&dir)?;
            print_summary(&s);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::PlotData { dir } => {
            let p = plot_data_dir(&dir)?;
            println!("{}", p.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::AdapterCheck { workdir, command } => {
            let tmp;
            let dir = match workdir {
                Some(d) => {
                    std::fs::create_dir_all(&d)?;
                    d
                }
                None => {
                    tmp = std::env::temp_dir().join(format!("albench-check-{}", std::process::id()));
                    std::fs::create_dir_all(&tmp)?;
                    tmp
                }
            };
            let report = adapter::check_adapter(&command, &dir)?;
            for s in &report.steps {
                println!("{} {:<24} {}", if s.passed { "PASS" } else { "FAIL" }, s.name, s.detail);
            }
            let ok = report.passed();
            println!("{}", if ok { "adapter is compliant" } else { "adapter is NOT compliant" });
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Cmd::ServeAdapter {
            dataset,
            seed,
            epochs,
            crash_on_train,
        } => {
            let mut train = TrainConfig::default();
            if let Some(e) = epochs {
                train.epochs = e;
            }
            let mut server = AdapterServer::new(ServerOptions {
                dataset,
                seed,
                train,
                crash_on_train,
                ..Default::default()
            });
            let stdin = io::stdin().lock();
            let stdout = BufWriter::new(io::stdout().lock());
            if let Err(e) = adapter::serve(&mut server, stdin, stdout) {
                log::error!("{e}");
                std::process::exit(3);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn synthetic_masks(n: usize) -> Vec<LabelMask> {
    synthetic::blob_images(n, 48, 48, 4, 0)
        .targets
        .into_iter()
        .filter_map(|t| match t {
            albench_core::model::Target::Mask(m) => Some(m),
            _ => None,
        })
        .collect()
}

fn run(config: &Path, trials: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(o) = out {
        cfg.output.dir = std::env::current_dir()?.join(o);
    }
    let output = run_config(&cfg, RunOverrides { trials, seed })?;
    print_summary(&output.summary);
    println!("results in {}", cfg.output_dir().display());
    if output.summary.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &output.summary.failures {
            eprintln!("trial failed: {} #{}: {}", f.strategy, f.trial, f.error);
        }
        Ok(ExitCode::from(3))
    }
}

fn print_summary(s: &Summary) {
    let mut w = io::stdout().lock();
    let _ = writeln!(w, "preset {} ({:?})", s.preset, s.metric);
    let _ = writeln!(w, "{:<16} {:>6} {:>10} {:>10} {:>12}", "strategy", "trials", "final", "std", "vs random");
    for st in &s.strategies {
        let _ = writeln!(
            w,
            "{:<16} {:>6} {:>10.4} {:>10.4} {:>+12.4}",
            st.strategy,
            st.trials,
            st.final_mean,
            st.std.last().copied().unwrap_or(0.0),
            st.final_delta_vs_random
        );
    }
}
