use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dipgm::bench::{
    build_setup, compare_tables, parse_summary, read_matrix_csv, reference_solution, run_experiment, validate_config,
    ExperimentConfig,
};
use dipgm::topology::{generate_random_connected_graph, metropolis_hastings_weights, validate_mixing, Graph};

#[derive(Parser)]
#[command(name = "dipgm", version, about = "Decentralized inexact proximal gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm/schedule cell of a config and write summary.csv plus traces.
    Run { config: PathBuf },
    /// Parse a config, build its problem and report stepsize checks without running.
    Validate { config: PathBuf },
    /// Solve the centralized problem of a config and print the minimizer.
    Reference { config: PathBuf },
    /// Side-by-side table of two or more summary.csv files.
    Compare {
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
        /// Also write the comparison as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    #[command(subcommand)]
    Graph(GraphCommand),
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Random connected graph as an edge list.
    Gen {
        #[arg(short, long)]
        n: usize,
        #[arg(short, long, default_value_t = 0.5)]
        ratio: f64,
        #[arg(short, long, default_value_t = 0)]
        seed: u64,
        /// Write the Metropolis-Hastings mixing matrix here.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Check a mixing matrix against an edge-list graph.
    Check {
        file: PathBuf,
        /// Mixing matrix CSV; Metropolis-Hastings weights when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config } => {
            let cfg = load(&config)?;
            for w in validate_config(&cfg)? {
                eprintln!("warning: {w}");
            }
            let out = run_experiment(&cfg)?;
            for r in &out.rows {
                let err = r.final_rel_err.map_or("-".to_string(), |e| format!("{e:.3e}"));
                println!(
                    "{} {} {} {} outer={} inner={} rel_err={err}",
                    r.problem_id, r.algorithm, r.schedule, r.status, r.outer_iters, r.inner_iters_total
                );
            }
            println!("wrote {}", out.summary_path.display());
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            let warnings = validate_config(&cfg)?;
            let setup = build_setup(&cfg, 0)?;
            let sp = setup.mixing.spectral();
            println!("problem {}", setup.problem_id);
            println!("agents {} edges {}", setup.graph.n_agents(), setup.graph.n_edges());
            println!("lambda_min(W) {:.6} sigma_max(V) {:.6}", sp.lambda_min(), sp.sigma_max_v());
            println!("tau_max {:.6e} beta {:.6e}", setup.sizes.max_tau(), setup.sizes.beta);
            for w in &warnings {
                println!("warning: {w}");
            }
            println!("ok");
        }
        Command::Reference { config } => {
            let cfg = load(&config)?;
            let setup = build_setup(&cfg, 0)?;
            let r = reference_solution(&setup.problem, cfg.reference_tol, cfg.reference_max_iters)?;
            println!("method {} iterations {}", r.method.name(), r.iterations);
            println!("objective {:.16e}", r.objective);
            println!("residual {:.3e}", r.kkt_residual);
            let x: Vec<String> = r.x.iter().map(|v| format!("{v:.16e}")).collect();
            println!("x {}", x.join(","));
        }
        Command::Compare { summaries, csv } => {
            let tables = summaries
                .iter()
                .map(|p| {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    Ok(parse_summary(&p.display().to_string(), &text)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let cmp = compare_tables(&tables)?;
            print!("{}", cmp.text);
            if let Some(path) = csv {
                fs::write(&path, &cmp.csv).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Graph(GraphCommand::Gen { n, ratio, seed, weights }) => {
            let g = generate_random_connected_graph(n, ratio, seed)?;
            print!("{}", g.to_edge_list());
            if let Some(path) = weights {
                let m = metropolis_hastings_weights(&g)?;
                fs::write(&path, m.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Graph(GraphCommand::Check { file, weights }) => {
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let g = Graph::from_edge_list(&text)?;
            let w = match weights {
                Some(p) => read_matrix_csv(&p)?,
                None => metropolis_hastings_weights(&g)?.w().clone(),
            };
            let report = validate_mixing(&w, &g);
            for c in &report.checks {
                println!("{:<24} {} {:.3e}", c.name, if c.passed { "ok" } else { "FAIL" }, c.violation);
            }
            if let Some(e) = &report.error {
                println!("error: {e}");
            }
            if !report.passed() {
                bail!("mixing matrix rejected");
            }
        }
    }
    Ok(())
}
