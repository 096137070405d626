use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ac_harness::config::{parse_pairs, ExperimentConfig};
use ac_harness::experiment::{aggregate_files, run_experiment, write_aggregate};
use ac_harness::plots::emit_plots_from_files;
use ac_harness::rates::{critic_rate_experiment, fit_rate};
use ac_harness::{HarnessError, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acbench", version, about = "Actor-critic experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed range `a..b` (inclusive) or comma list.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["td0", "gtd", "agtd"])]
    method: Option<String>,
    #[arg(long, value_parser = ["nav", "finite"])]
    env: Option<String>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
                    path: path.clone(),
                    source: e,
                })?;
                parse_pairs(&text)?
            }
            None => Vec::new(),
        };
        let flags = [
            ("env", self.env.clone()),
            ("method", self.method.clone()),
            ("seeds", self.seeds.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        }
        for kv in &self.set {
            pairs.extend(parse_pairs(kv)?);
        }
        ExperimentConfig::from_pairs(pairs)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed and write per-seed and aggregate CSVs.
    Run(Common),
    /// Re-aggregate per-seed trace CSVs.
    Aggregate {
        files: Vec<PathBuf>,
        /// Aggregate CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Method tag stored in the aggregate.
        #[arg(long, default_value = "td0")]
        method: String,
    },
    /// Fit a log-log slope, either to two CSV columns or to critic-error
    /// curves computed on the finite MDP.
    Fit {
        #[command(flatten)]
        common: Common,
        /// CSV to read; without it, critic-error curves are computed.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "k")]
        x: String,
        #[arg(long, default_value = "grad_proxy_mean")]
        y: String,
        /// Fit window `lo..hi`.
        #[arg(long, default_value = "100..100000")]
        window: String,
        /// Last critic step for computed curves.
        #[arg(long, default_value_t = 100_000)]
        max_t: u64,
    },
    /// Draw SVG figures from aggregate CSVs.
    Plot {
        files: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

fn parse_window(text: &str) -> Result<(f64, f64)> {
    let bad = || HarnessError::Config(format!("bad window {text:?}"));
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

fn read_columns(path: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let data = |m: String| HarnessError::Data {
        path: path.to_path_buf(),
        message: m,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| data(e.to_string()))?;
    let header = r.headers().map_err(|e| data(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| data(format!("missing column {name}")))
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| data(e.to_string()))?;
        if rec[ix].is_empty() || rec[iy].is_empty() {
            continue;
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| data(format!("bad number {s:?}")));
        out.push((num(&rec[ix])?, num(&rec[iy])?));
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.experiment()?;
            let summary = run_experiment(&cfg)?;
            for f in &summary.seed_files {
                println!("wrote {}", f.display());
            }
            println!("wrote {} ({} rows)", summary.aggregate_file.display(), summary.aggregate.len());
            if !summary.aborted.is_empty() {
                let detail: Vec<String> = summary.aborted.iter().map(|(s, e)| format!("seed {s}: {e}")).collect();
                return Err(HarnessError::Aborted(detail.join("; ")));
            }
        }
        Command::Aggregate { files, out, method } => {
            let rows = aggregate_files(&method, &files)?;
            write_aggregate(&out, &rows)?;
            println!("wrote {} ({} rows)", out.display(), rows.len());
        }
        Command::Fit {
            common,
            input,
            x,
            y,
            window,
            max_t,
        } => {
            let window = parse_window(&window)?;
            let series = match input {
                Some(path) => read_columns(&path, &x, &y)?,
                None => {
                    let mut common = common;
                    common.env.get_or_insert_with(|| "finite".into());
                    let cfg = common.experiment()?;
                    let curves = critic_rate_experiment(&cfg, max_t)?;
                    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| HarnessError::Io {
                        path: cfg.out_dir.clone(),
                        source: e,
                    })?;
                    let path = cfg.out_dir.join(format!("{}_critic_error.csv", cfg.method.tag()));
                    let mut text = String::from("t,mean_error\n");
                    for (t, e) in curves.mean_series() {
                        text.push_str(&format!("{t},{e}\n"));
                    }
                    std::fs::write(&path, text).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
                    println!("wrote {}", path.display());
                    curves.mean_series()
                }
            };
            let fit = fit_rate(&series, window)?;
            println!(
                "slope {:.6} intercept {:.6} residual {:.3e} points {} window [{}, {}]",
                fit.slope, fit.intercept, fit.residual, fit.points, fit.window.0, fit.window.1
            );
        }
        Command::Plot { files, out } => {
            for f in emit_plots_from_files(&files, &out)? {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("acbench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
