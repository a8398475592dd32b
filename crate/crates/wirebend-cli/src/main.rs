//! Command-line planner for robotic 3D wire bending.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 infeasible,
//! 3 timed out.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wirebend::io::{
    benchmark::BenchmarkSettings, cmd_approximate, cmd_benchmark, cmd_export_mesh, cmd_plan,
    cmd_replay, PlanStatus, ProjectConfig,
};

#[derive(Parser)]
#[command(name = "wirebend", version, about = "Plan wire bending sequences, machine usage and robot motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simplify a dense curve and derive its bending set.
    Approximate {
        /// Curve file: one x y z record per line, meters.
        curve: PathBuf,
        /// Machine description file.
        #[arg(long)]
        machine: PathBuf,
        /// Approximation tolerance, meters.
        #[arg(long)]
        epsilon: f64,
        /// Wire diameter, meters.
        #[arg(long, default_value_t = 0.0016)]
        wire_diameter: f64,
        /// Straight lead added ahead of the target for grasping, meters.
        #[arg(long, default_value_t = 0.1)]
        lead: f64,
        /// Output bending-set document.
        #[arg(long, short, default_value = "bendset.json")]
        out: PathBuf,
    },
    /// Run the full pipeline from a project configuration.
    Plan {
        /// Project configuration file.
        config: PathBuf,
        /// Output directory for the plan, trace and snapshots.
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
        /// Override the planner budget, seconds.
        #[arg(long)]
        budget: Option<f64>,
        /// Override the random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the collision clearance, meters.
        #[arg(long)]
        clearance: Option<f64>,
    },
    /// Re-simulate a plan document and verify it reproduces exactly.
    Replay {
        /// Plan document produced by `plan`.
        plan: PathBuf,
        /// Project configuration the plan was produced from.
        #[arg(long)]
        config: PathBuf,
    },
    /// Randomized sequence-planning benchmark across bend-count groups.
    Benchmark {
        /// Project configuration supplying machine, robot and environment.
        config: PathBuf,
        /// Smallest bend-count group.
        #[arg(long, default_value_t = 3)]
        min_bends: usize,
        /// Largest bend-count group.
        #[arg(long, default_value_t = 8)]
        max_bends: usize,
        /// Instances per group.
        #[arg(long, default_value_t = 10)]
        per_group: usize,
        /// Random seed for instance generation.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Per-instance search budget, seconds.
        #[arg(long, default_value_t = 120.0)]
        budget: f64,
        /// Plan transfer trajectories too (slower); grasp reasoning only
        /// otherwise.
        #[arg(long)]
        full_motion: bool,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
    },
    /// Regenerate per-step wire meshes from a plan document.
    ExportMesh {
        plan: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
    },
}

fn run() -> Result<u8, anyhow::Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Approximate { curve, machine, epsilon, wire_diameter, lead, out } => {
            let result = cmd_approximate(&curve, epsilon, &machine, wire_diameter, lead, &out)?;
            if let Some(warning) = &result.warning {
                eprintln!("warning: {warning}");
            }
            println!(
                "{} candidates, max deviation {:.6} m, round-trip error {:.3e} m -> {}",
                result.candidates,
                result.max_deviation,
                result.round_trip_error,
                result.bendset_path.display()
            );
            Ok(0)
        }
        Command::Plan { config, out, budget, seed, clearance } => {
            let mut cfg = ProjectConfig::load(&config)?;
            if let Some(b) = budget {
                cfg.file.budget_secs = b;
            }
            if let Some(s) = seed {
                cfg.file.seed = s;
            }
            if let Some(c) = clearance {
                cfg.file.clearance = c;
            }
            let result = cmd_plan(&cfg, &out)?;
            eprintln!(
                "nodes {} prunes {} sequences {} wall {} ms",
                result.stats.nodes_explored,
                result.stats.prunes,
                result.stats.sequences_tried,
                result.wall_ms
            );
            match result.status {
                PlanStatus::Solved => {
                    println!(
                        "plan: {} ({} snapshots)",
                        result.plan_path.unwrap().display(),
                        result.snapshots.len()
                    );
                    Ok(0)
                }
                PlanStatus::Infeasible => {
                    println!("infeasible; trace: {}", result.trace_path.display());
                    Ok(2)
                }
                PlanStatus::Timeout => {
                    println!("budget exhausted; trace: {}", result.trace_path.display());
                    Ok(3)
                }
            }
        }
        Command::Replay { plan, config } => {
            let cfg = ProjectConfig::load(&config)?;
            cmd_replay(&plan, &cfg)?;
            println!("replay OK");
            Ok(0)
        }
        Command::Benchmark {
            config,
            min_bends,
            max_bends,
            per_group,
            seed,
            budget,
            full_motion,
            out,
        } => {
            let cfg = ProjectConfig::load(&config)?;
            let settings = BenchmarkSettings {
                groups: min_bends..=max_bends,
                per_group,
                seed,
                budget: std::time::Duration::from_secs_f64(budget),
                wire_diameter: cfg.file.wire_diameter,
                with_trajectories: full_motion,
                ..Default::default()
            };
            let result = cmd_benchmark(&cfg, &settings, &out)?;
            println!("{}", result.table);
            println!(
                "report: {}\ntimings: {}",
                result.report_path.display(),
                result.timings_path.display()
            );
            Ok(0)
        }
        Command::ExportMesh { plan, config, out } => {
            let cfg = ProjectConfig::load(&config)?;
            let paths = cmd_export_mesh(&plan, &cfg, &out)?;
            println!("{} snapshots -> {}", paths.len(), out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
