use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cmte::mc_oracle::{verify_suite, write_oracle_report, VerifyPlan, RNG_NAME};
use cmte::net_model::{load_network, Network};
use cmte::scenario::{emit_results, run_scenario, scenario_routes, Scenario, SweepResult};
use cmte::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "cmte",
    version,
    about = "Alpha-reliable combined-mean traffic equilibrium solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single (λ, Q, Θ) point.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Override the optimism weight (default: first value of lambda_grid).
        #[arg(long)]
        lambda: Option<f64>,
        /// Override the total demand in pcu/h (default: first value of demand_grid).
        #[arg(long)]
        demand: Option<f64>,
        /// Override the degradation degree (default: first value of theta_grid).
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Solve every point of the scenario grids.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Compare closed-form moments and indices with Monte-Carlo estimates.
    Verify {
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = VerifyPlan::default().seed)]
        seed: u64,
        /// Samples per link/route moment check.
        #[arg(long, default_value_t = VerifyPlan::default().link_samples)]
        samples: usize,
        /// Samples per normal tail check.
        #[arg(long, default_value_t = VerifyPlan::default().tail_samples)]
        tail_samples: usize,
    },
    /// Print the enumerated routes.
    Routes {
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Network file; the bundled stand-in network when omitted.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario: scenario1, scenario2, scenario2-extended, scenario3.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory for result tables and convergence logs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for interface symmetry; the solver itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::NonConvergence(_) | Error::Numerical { .. } => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn network(path: Option<&Path>) -> Result<Network, Error> {
    match path {
        Some(p) => load_network(p),
        None => Ok(Network::standin()),
    }
}

fn scenario(common: &Common) -> Result<Scenario, Error> {
    let mut sc = match (&common.scenario, &common.preset) {
        (Some(path), _) => Scenario::load(path)?,
        (None, Some(name)) => Scenario::preset(name)?,
        (None, None) => Scenario::default(),
    };
    if let Some(n) = common.max_iter {
        sc.solver.max_iter = n;
    }
    if let Some(t) = common.tol {
        sc.solver.tol = t;
    }
    sc.validate()?;
    Ok(sc)
}

fn print_summary(res: &SweepResult) {
    println!("lambda,demand,theta,status,iterations,residual,antt");
    for row in &res.rows {
        println!(
            "{},{},{},{},{},{:.3e},{:.4}",
            row.lambda,
            row.demand,
            row.theta,
            row.status.as_str(),
            row.iterations,
            row.residual,
            row.antt
        );
        if let Some(msg) = &row.message {
            eprintln!("  note: {msg}");
        }
    }
}

fn finish(res: &SweepResult, out: Option<&Path>) -> Result<u8, Error> {
    print_summary(res);
    if let Some(dir) = out {
        let files = emit_results(res, dir)?;
        eprintln!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(if res.all_converged() { 0 } else { EXIT_SOLVER })
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Solve {
            common,
            lambda,
            demand,
            theta,
        } => {
            let net = network(common.network.as_deref())?;
            let mut sc = scenario(&common)?;
            sc.lambda_grid = vec![lambda.unwrap_or(sc.lambda_grid[0])];
            sc.demand_grid = vec![demand.unwrap_or(sc.demand_grid[0])];
            sc.theta_grid = vec![theta.unwrap_or(sc.theta_grid[0])];
            let res = run_scenario(&net, &sc)?;
            let row = &res.rows[0];
            eprintln!("route,flow,cost");
            for (k, (f, c)) in row.flows.iter().zip(&row.costs).enumerate() {
                eprintln!("{k},{f:.4},{c:.4}");
            }
            finish(&res, common.out.as_deref())
        }
        Command::Sweep { common } => {
            let net = network(common.network.as_deref())?;
            let sc = scenario(&common)?;
            let res = run_scenario(&net, &sc)?;
            finish(&res, common.out.as_deref())
        }
        Command::Verify {
            network: path,
            out,
            seed,
            samples,
            tail_samples,
        } => {
            let net = network(path.as_deref())?;
            let plan = VerifyPlan {
                seed,
                link_samples: samples,
                tail_samples,
                ..VerifyPlan::default()
            };
            let records = verify_suite(&net, &Default::default(), &plan)?;
            let failed = records.iter().filter(|r| !r.pass).count();
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                        path: dir.clone(),
                        source: e,
                    })?;
                    write_oracle_report(&records, &plan, &dir.join("oracle_report.csv"))?;
                }
                None => {
                    for r in &records {
                        println!(
                            "{},{:.10},{:.10},{:.3e},{}",
                            r.claim,
                            r.closed_form,
                            r.estimate,
                            r.se,
                            if r.pass { "pass" } else { "fail" }
                        );
                    }
                }
            }
            eprintln!(
                "{} checks, {} failed (rng {RNG_NAME}, seed {seed})",
                records.len(),
                failed
            );
            Ok(if failed == 0 { 0 } else { EXIT_SOLVER })
        }
        Command::Routes {
            network: path,
            scenario: sc_path,
            out,
        } => {
            let net = network(path.as_deref())?;
            let sc = match sc_path {
                Some(p) => Scenario::load(p)?,
                None => Scenario::default(),
            };
            let rs = scenario_routes(&net, &sc)?;
            let mut text = String::from("route,od_origin,od_destination,free_flow_min,links\n");
            for k in 0..rs.len() {
                let od = &net.od_pairs()[rs.od_of(k)];
                let ids: Vec<String> = rs.link_ids(&net, k).iter().map(|i| i.to_string()).collect();
                text.push_str(&format!(
                    "{k},{},{},{},{}\n",
                    od.origin,
                    od.destination,
                    rs.free_flow_time(&net, k),
                    ids.join(" ")
                ));
            }
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                        path: dir.clone(),
                        source: e,
                    })?;
                    let path = dir.join("routes.csv");
                    std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
                }
                None => print!("{text}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
