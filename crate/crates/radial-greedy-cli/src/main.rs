//! Experiment runner: `run` executes a configured progressive-learning run
//! (optionally with the steepest-descent baseline), `check` executes the
//! sampled invariant suites, `compare` runs both methods side by side.
//!
//! Exit codes: 0 success, 1 usage/configuration/numerical error, 2 invariant
//! failure. `RADIAL_GREEDY_THREADS` caps inner-solver parallelism.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use radial_greedy::{progressive_learning, steepest_descent, RunResult};
use radial_greedy_cli::{config, csvio, report, svg, CliError};

#[derive(Parser)]
#[command(name = "radial-greedy", version, about = "Greedy dictionary solver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write records, report and plots.
    Run {
        config: PathBuf,
        /// Override the output directory from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run the sampled invariant suites against the configured problem.
    Check {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Fault-injection fixture: corrupt the gradient before checking.
        #[arg(long, hide = true)]
        inject_gradient_fault: bool,
    },
    /// Run progressive learning and steepest descent side by side.
    Compare {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, output_dir } => cmd_run(&config, output_dir),
        Command::Check {
            config,
            output_dir,
            inject_gradient_fault,
        } => cmd_check(&config, output_dir, inject_gradient_fault),
        Command::Compare { config, output_dir } => cmd_compare(&config, output_dir),
        Command::Version => {
            println!("radial-greedy {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.invariant {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("RADIAL_GREEDY_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn prepare_output(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::failure(format!("cannot create {}: {e}", dir.display())))
}

fn lift<T>(r: radial_greedy::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::failure(e.to_string()))
}

fn write_result_json(path: &Path, run: &RunResult) -> Result<(), CliError> {
    let value = serde_json::json!({
        "final_iterate": run.final_iterate.coeffs(),
        "atoms": run.atoms,
        "termination": run.termination,
    });
    let text = serde_json::to_string_pretty(&value)
        .map_err(|e| CliError::failure(format!("result serialization: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| CliError::failure(format!("cannot write {}: {e}", path.display())))
}

fn gap_series(run: &RunResult) -> Vec<(usize, f64)> {
    run.records
        .iter()
        .filter_map(|r| r.gap.map(|g| (r.m, g)))
        .collect()
}

fn energy_drop_series(run: &RunResult) -> Vec<(usize, f64)> {
    let min = run
        .records
        .iter()
        .map(|r| r.energy)
        .fold(f64::INFINITY, f64::min);
    run.records.iter().map(|r| (r.m, r.energy - min)).collect()
}

fn cmd_run(config_path: &Path, output_dir: Option<PathBuf>) -> Result<(), CliError> {
    let exp = config::load(config_path)?;
    let out = output_dir.unwrap_or_else(|| exp.output_dir.clone());
    prepare_output(&out)?;

    let run = lift(progressive_learning(
        &exp.functional,
        &exp.dictionary,
        &exp.solver,
        exp.reference.as_ref(),
    ))?;

    if exp.emit_csv {
        csvio::write_records(&out.join("records.csv"), &run.records)?;
    }
    write_result_json(&out.join("result.json"), &run)?;

    let rep = report::run_report(&exp.functional, &exp.dictionary, &run, exp.reference_is_surrogate);
    std::fs::write(out.join("report.txt"), rep.text())
        .map_err(|e| CliError::failure(format!("cannot write report: {e}")))?;
    print!("{}", rep.text());

    if exp.emit_svg {
        let gaps = gap_series(&run);
        let series = if gaps.is_empty() {
            svg::Series {
                label: "energy - min energy",
                points: energy_drop_series(&run),
            }
        } else {
            svg::Series {
                label: "gap",
                points: gaps,
            }
        };
        svg::write_loglog(&out.join("convergence.svg"), "convergence", &[series])?;
    }

    if exp.compare_baseline {
        run_comparison(&exp, &out)?;
    }

    if !rep.all_passed() {
        return Err(CliError::invariant(format!(
            "{} invariant check(s) failed; see {}",
            rep.failed,
            out.join("report.txt").display()
        )));
    }
    Ok(())
}

fn cmd_check(
    config_path: &Path,
    output_dir: Option<PathBuf>,
    inject_gradient_fault: bool,
) -> Result<(), CliError> {
    let exp = config::load(config_path)?;
    let out = output_dir.unwrap_or_else(|| exp.output_dir.clone());
    prepare_output(&out)?;
    let rep = report::check_suite(
        &exp.functional,
        &exp.dictionary,
        &exp.solver,
        inject_gradient_fault,
    );
    std::fs::write(out.join("report.txt"), rep.text())
        .map_err(|e| CliError::failure(format!("cannot write report: {e}")))?;
    print!("{}", rep.text());
    if !rep.all_passed() {
        return Err(CliError::invariant(format!(
            "{} invariant check(s) failed",
            rep.failed
        )));
    }
    Ok(())
}

fn cmd_compare(config_path: &Path, output_dir: Option<PathBuf>) -> Result<(), CliError> {
    let exp = config::load(config_path)?;
    let out = output_dir.unwrap_or_else(|| exp.output_dir.clone());
    prepare_output(&out)?;
    run_comparison(&exp, &out)
}

fn run_comparison(exp: &config::Experiment, out: &Path) -> Result<(), CliError> {
    report::baseline_applicable(&exp.functional).map_err(CliError::failure)?;
    let greedy = lift(progressive_learning(
        &exp.functional,
        &exp.dictionary,
        &exp.solver,
        exp.reference.as_ref(),
    ))?;
    let baseline = lift(steepest_descent(
        &exp.functional,
        &exp.solver,
        exp.reference.as_ref(),
    ))?;

    // side-by-side CSV: rows up to the longer run, empty cells past the end
    let rows = greedy.records.len().max(baseline.records.len());
    let mut text = String::from(
        "m,energy_progressive,gap_progressive,energy_steepest,gap_steepest\n",
    );
    let cell = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
    for i in 0..rows {
        let g = greedy.records.get(i);
        let s = baseline.records.get(i);
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            cell(g.map(|r| r.energy)),
            cell(g.and_then(|r| r.gap)),
            cell(s.map(|r| r.energy)),
            cell(s.and_then(|r| r.gap)),
        ));
    }
    std::fs::write(out.join("compare.csv"), text)
        .map_err(|e| CliError::failure(format!("cannot write compare.csv: {e}")))?;

    csvio::write_records(&out.join("records_progressive.csv"), &greedy.records)?;
    csvio::write_records(&out.join("records_steepest.csv"), &baseline.records)?;

    svg::write_loglog(
        &out.join("compare.svg"),
        "gap vs iteration",
        &[
            svg::Series {
                label: "progressive learning",
                points: gap_series(&greedy),
            },
            svg::Series {
                label: "steepest descent",
                points: gap_series(&baseline),
            },
        ],
    )?;

    let summary = format!(
        "progressive learning: {} after {} iterations, final gap {}\nsteepest descent: {} after {} iterations, final gap {}\n",
        greedy.termination,
        greedy.records.len(),
        greedy
            .records
            .last()
            .and_then(|r| r.gap)
            .map(|g| format!("{g:.6e}"))
            .unwrap_or_else(|| "n/a".into()),
        baseline.termination,
        baseline.records.len(),
        baseline
            .records
            .last()
            .and_then(|r| r.gap)
            .map(|g| format!("{g:.6e}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    std::fs::write(out.join("compare_summary.txt"), &summary)
        .map_err(|e| CliError::failure(format!("cannot write compare summary: {e}")))?;
    print!("{summary}");
    Ok(())
}
