use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use manet_sim::batch::run_batch;
use manet_sim::config::{gen_grid, parse_config, parse_seeds, ScenarioConfig};
use manet_sim::routing::Protocol;
use manet_sim::sim::run_scenario;
use manet_sim::trace::{self, TraceLevel};
use manet_sim::{scenarios, SimError};

#[derive(Parser)]
#[command(name = "manet-sim", version, about = "Static ad-hoc network simulator with AODV, SQ-AODV and MDR routing")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Data,
    Full,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one seed and print the report.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long)]
        config: String,
        #[arg(long)]
        protocol: Option<Protocol>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Override the rate of every Poisson session.
        #[arg(long)]
        rate_kbps: Option<f64>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full")]
        trace_level: Level,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run many seeds in parallel and write per-seed reports plus a summary.
    Batch {
        #[arg(long)]
        config: String,
        #[arg(long)]
        protocol: Option<Protocol>,
        /// `A..B` or a comma list; defaults to the scenario's seeds.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        rate_kbps: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a k*k lattice as `node = id x y` lines.
    GenGrid {
        #[arg(long)]
        n: usize,
        /// `WxH` in metres.
        #[arg(long)]
        area: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a trace file against the line grammar.
    ValidateTrace { path: PathBuf },
    /// List or print the bundled scenarios.
    Scenarios { name: Option<String> },
}

fn load(config: &str, rate: Option<f64>) -> anyhow::Result<ScenarioConfig> {
    let text = match scenarios::text(config) {
        Some(t) if !Path::new(config).exists() => t.to_string(),
        _ => fs::read_to_string(config).with_context(|| format!("reading {config}"))?,
    };
    let mut cfg = parse_config(&text)?;
    if let Some(r) = rate {
        if !(r > 0.0 && r.is_finite()) {
            return Err(SimError::Config(vec![manet_sim::ConfigError::new(0, format!("--rate-kbps {r} must be positive"))]).into());
        }
        cfg.set_poisson_rate(r);
    }
    Ok(cfg)
}

fn write_or_print(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn real_main(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Run { config, protocol, seed, rate_kbps, trace, trace_level, report } => {
            let cfg = load(&config, rate_kbps)?;
            let level = match (&trace, trace_level) {
                (None, _) => TraceLevel::Off,
                (Some(_), Level::Data) => TraceLevel::Data,
                (Some(_), Level::Full) => TraceLevel::Full,
            };
            let (rep, records) = run_scenario(&cfg, protocol, seed, level)?;
            if let Some(p) = &trace {
                fs::write(p, trace::render(&records)).with_context(|| format!("writing {}", p.display()))?;
            }
            write_or_print(report.as_deref(), &rep.to_text())
        }
        Cmd::Batch { config, protocol, seeds, rate_kbps, out } => {
            let cfg = load(&config, rate_kbps)?;
            let seeds = match seeds {
                Some(s) => parse_seeds(&s).map_err(SimError::Batch)?,
                None => cfg.seeds.clone(),
            };
            let b = run_batch(&cfg, protocol, &seeds)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for r in &b.runs {
                fs::write(out.join(format!("seed-{}.txt", r.seed)), r.to_text())?;
            }
            let csv = b.to_csv();
            fs::write(out.join("summary.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        Cmd::GenGrid { n, area, out } => {
            let (w, h) = area
                .split_once(['x', 'X'])
                .and_then(|(w, h)| Some((w.trim().parse::<f64>().ok()?, h.trim().parse::<f64>().ok()?)))
                .ok_or_else(|| SimError::Config(vec![manet_sim::ConfigError::new(0, format!("bad --area `{area}`, expected WxH"))]))?;
            let g = gen_grid(n, (w, h)).map_err(|e| SimError::Config(vec![manet_sim::ConfigError::new(0, e)]))?;
            let mut s = format!("area = {w} {h}\n");
            for (id, x, y) in g {
                s.push_str(&format!("node = {id} {x} {y}\n"));
            }
            write_or_print(out.as_deref(), &s)
        }
        Cmd::ValidateTrace { path } => {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let n = trace::validate(&text)?;
            println!("{n} lines ok");
            Ok(())
        }
        Cmd::Scenarios { name: None } => {
            for n in scenarios::names() {
                println!("{n}");
            }
            Ok(())
        }
        Cmd::Scenarios { name: Some(n) } => match scenarios::text(&n) {
            Some(t) => write_or_print(None, t),
            None => Err(SimError::Config(vec![manet_sim::ConfigError::new(0, format!("no bundled scenario `{n}`"))]).into()),
        },
    }
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<SimError>() {
                Some(SimError::Contract(_)) | Some(SimError::Trace { .. }) | Some(SimError::Batch(_)) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
