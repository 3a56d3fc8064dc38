//! `quadtrack`: run tracking scenarios from a JSON config and compare controllers.
//!
//! Exit status: 0 on a clean run, 1 on configuration or I/O errors, 2 when a controller
//! faulted and its trace was truncated.

mod plot;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use quadtrack::config::{ConfigFile, ControllerConfig};
use quadtrack::metrics::{compute_rmse, MetricsReport};
use quadtrack::sim::{run_closed_loop, write_trace_csv, SimTrace};

use plot::{Panel, Series};

/// Overrides `output.directory` from the config.
const OUT_DIR_ENV: &str = "QUADTRACK_OUT_DIR";

#[derive(Parser)]
#[command(name = "quadtrack", version, about = "Quadrotor trajectory-tracking benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured controller and write its trace and metrics.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Controller name as listed in the config.
        #[arg(long)]
        controller: String,
    },
    /// Run every configured controller on the same scenario and tabulate the RMSEs.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the default configuration as JSON.
    PrintDefaults,
}

enum Failure {
    /// Bad config, unknown controller, unwritable output.
    Usage(anyhow::Error),
    Fault,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

struct Outcome {
    name: String,
    trace: SimTrace,
    metrics: Option<MetricsReport>,
}

impl Outcome {
    fn status(&self) -> String {
        match &self.trace.fault {
            None => "ok".into(),
            Some(msg) => format!("fault: {msg}"),
        }
    }
}

fn load(path: &Path) -> anyhow::Result<ConfigFile> {
    ConfigFile::from_path(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

fn out_dir(cfg: &ConfigFile) -> anyhow::Result<PathBuf> {
    let dir = match std::env::var_os(OUT_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => PathBuf::from(&cfg.output.directory),
    };
    fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn run(cfg: &ConfigFile, controller: &ControllerConfig) -> anyhow::Result<Outcome> {
    let scenario = cfg.scenario();
    let mut c = controller.build(&scenario.params, scenario.dt)?;
    let trace = run_closed_loop(&scenario, c.as_mut())?;
    let metrics = compute_rmse(&trace, cfg.scenario.transient_cut).ok();
    Ok(Outcome {
        name: controller.name().to_string(),
        trace,
        metrics,
    })
}

fn write_outcome(dir: &Path, o: &Outcome) -> anyhow::Result<()> {
    let trace_path = dir.join(format!("{}_trace.csv", o.name));
    let file = fs::File::create(&trace_path).with_context(|| format!("cannot write {}", trace_path.display()))?;
    write_trace_csv(&o.trace, std::io::BufWriter::new(file))?;
    if let Some(m) = &o.metrics {
        let path = dir.join(format!("{}_metrics.json", o.name));
        fs::write(&path, serde_json::to_string_pretty(m)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn simulate(config: &Path, name: &str) -> Result<(), Failure> {
    let cfg = load(config)?;
    let controller = cfg.controller(name).ok_or_else(|| {
        let known: Vec<_> = cfg.controllers.iter().map(|c| c.name()).collect();
        anyhow::anyhow!("unknown controller name \"{name}\" (configured: {})", known.join(", "))
    })?;
    let dir = out_dir(&cfg)?;
    let outcome = run(&cfg, controller)?;
    write_outcome(&dir, &outcome)?;
    match &outcome.metrics {
        Some(m) => println!(
            "{}: {} rows, rmse_xyz {:.5} m, rmse_att {:.5} rad -> {}",
            outcome.name,
            outcome.trace.rows.len(),
            m.rmse_xyz,
            m.rmse_att,
            dir.display()
        ),
        None => println!("{}: {} rows, no rows in the metrics window", outcome.name, outcome.trace.rows.len()),
    }
    if let Some(msg) = &outcome.trace.fault {
        eprintln!("error: controller {} faulted at {msg}", outcome.name);
        return Err(Failure::Fault);
    }
    Ok(())
}

fn compare(config: &Path) -> Result<(), Failure> {
    let cfg = load(config)?;
    let dir = out_dir(&cfg)?;
    // Runs are independent; results come back in config order.
    let outcomes: Vec<Outcome> = cfg
        .controllers
        .par_iter()
        .map(|c| run(&cfg, c))
        .collect::<anyhow::Result<_>>()?;

    for o in &outcomes {
        write_outcome(&dir, o)?;
    }
    let rows: Vec<report::Row> = outcomes
        .iter()
        .map(|o| report::Row {
            controller: o.name.clone(),
            metrics: o.metrics,
            status: o.status(),
        })
        .collect();
    fs::write(dir.join("compare.csv"), report::to_csv(&rows)?).context("cannot write compare.csv")?;
    let text = report::to_text(&rows);
    fs::write(dir.join("compare.txt"), &text).context("cannot write compare.txt")?;
    print!("{text}");
    if cfg.output.plots {
        write_plots(&dir, &cfg, &outcomes)?;
    }
    let faulted: Vec<_> = outcomes.iter().filter(|o| o.trace.fault.is_some()).collect();
    for o in &faulted {
        eprintln!("error: controller {} faulted at {}", o.name, o.trace.fault.as_deref().unwrap_or(""));
    }
    if faulted.is_empty() {
        Ok(())
    } else {
        Err(Failure::Fault)
    }
}

fn write_plots(dir: &Path, cfg: &ConfigFile, outcomes: &[Outcome]) -> anyhow::Result<()> {
    // Reference path sampled on the scenario grid.
    let scenario = cfg.scenario();
    let reference: Vec<[f64; 3]> = (0..=scenario.num_steps())
        .map(|k| {
            let p = scenario.reference.at(k as f64 * scenario.dt).position;
            [p[0], p[1], p[2]]
        })
        .collect();
    let mut path = vec![Series {
        label: "reference".into(),
        points: reference.iter().map(|p| plot::project(*p)).collect(),
        reference: true,
    }];
    path.extend(outcomes.iter().map(|o| Series {
        label: o.name.clone(),
        points: o
            .trace
            .rows
            .iter()
            .map(|r| {
                let p = r.state.position();
                plot::project([p[0], p[1], p[2]])
            })
            .collect(),
        reference: false,
    }));
    let trajectory = Panel {
        title: "Tracked path (oblique projection)".into(),
        x_label: "(x - y) cos 30°".into(),
        y_label: "z + (x + y) sin 30° / 2".into(),
        series: path,
    };
    fs::write(dir.join("trajectory.svg"), plot::render(&[trajectory], 1))?;

    let axes = [
        ("x error", "m"),
        ("y error", "m"),
        ("z error", "m"),
        ("phi error", "rad"),
        ("theta error", "rad"),
        ("psi error", "rad"),
    ];
    let errors: Vec<Panel> = axes
        .iter()
        .enumerate()
        .map(|(i, (title, unit))| Panel {
            title: (*title).into(),
            x_label: "t (s)".into(),
            y_label: (*unit).into(),
            series: outcomes
                .iter()
                .map(|o| Series {
                    label: o.name.clone(),
                    points: o.trace.rows.iter().map(|r| (r.t, r.error[i])).collect(),
                    reference: false,
                })
                .collect(),
        })
        .collect();
    fs::write(dir.join("errors.svg"), plot::render(&errors, 2))?;

    let inputs: Vec<Panel> = (0..4)
        .map(|i| Panel {
            title: format!("u{}", i + 1),
            x_label: "t (s)".into(),
            y_label: "rotor input".into(),
            series: outcomes
                .iter()
                .map(|o| Series {
                    label: o.name.clone(),
                    points: o.trace.rows.iter().map(|r| (r.t, r.input.0[i])).collect(),
                    reference: false,
                })
                .collect(),
        })
        .collect();
    fs::write(dir.join("inputs.svg"), plot::render(&inputs, 2))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, controller } => simulate(&config, &controller),
        Command::Compare { config } => compare(&config),
        Command::PrintDefaults => {
            println!("{}", ConfigFile::default().to_json());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Fault) => ExitCode::from(2),
    }
}
