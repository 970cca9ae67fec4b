//! `powevo`: closed-form fork probabilities, Monte Carlo validation,
//! replicator dynamics, equilibrium classification, parameter sweeps, and
//! chain-data statistics behind one command-line frontend.

mod config;
mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use powevo::chain_data::{
    self, load_blocks, load_forks, BlockRecord, ForkRecord, LoadReport, RowIssue,
    DEFAULT_BIN_EDGES,
};
use powevo::equilibrium::{classify, Kind, Stability};
use powevo::error::{Error, Result};
use powevo::evolution::{
    integrate, write_trajectory_csv, DEFAULT_EPS, DEFAULT_STEP, DEFAULT_T_MAX,
};
use powevo::fork_model::{
    expected_reward, prob_concurrent_block, prob_fail, prob_fork_after, prob_uncle, reward_ratio,
    Mode,
};
use powevo::metrics::{sweep, write_sweep_csv, SweepRow};
use powevo::mining_sim::{initiator_rates, simulate, simulate_with_ledger, SimLedger};
use powevo::{
    EquilibriumResult, HashDistribution, NetworkParams, PopulationState, SimConfig, SimReport,
    SweepSpec,
};

use config::{
    GridSpec, MethodChoice, ModeChoice, PopulationSection, RunConfig, SimSection, SplitChoice,
    SweepSection, TieChoice,
};
use output::{csv_document, full, json_envelope, num, text_table, Emitter, OutputFormat};

#[derive(Parser)]
#[command(
    name = "powevo",
    version,
    about = "Fork probabilities, mining simulation, and pool-evolution analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format; each subcommand has a natural default.
    #[arg(long, global = true, value_enum)]
    output: Option<OutputFormat>,
    /// Write the primary output to PATH instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Suppress stderr notes (resolved config echo, row warnings).
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form per-pool fork, fail, and uncle probabilities and rewards.
    Analytic {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Fail-probability evaluation: exact pairwise races or the
        /// first-order approximation.
        #[arg(long, value_enum, default_value = "exact")]
        mode: ModeChoice,
    },
    /// Monte Carlo mining run plus an empirical-vs-analytic comparison.
    Simulate {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// RNG seed; overrides sim.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Canonical-chain length to simulate; overrides sim.blocks.
        #[arg(long)]
        blocks: Option<u64>,
        /// Tie handling; overrides sim.tie.
        #[arg(long, value_enum)]
        tie: Option<TieChoice>,
        /// Non-combatant split handling; overrides sim.split.
        #[arg(long, value_enum)]
        split: Option<SplitChoice>,
        /// Also export the block-by-block ledger as a blocks CSV.
        #[arg(long, value_name = "PATH")]
        export_blocks: Option<PathBuf>,
        /// Also export the fork events as a forks CSV.
        #[arg(long, value_name = "PATH")]
        export_forks: Option<PathBuf>,
    },
    /// Integrate the replicator dynamics and emit the trajectory.
    Evolve {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Integration step.
        #[arg(long)]
        step: Option<f64>,
        /// Integration horizon.
        #[arg(long)]
        tmax: Option<f64>,
        /// Convergence threshold on the velocity.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Classify the equilibria of a pool market.
    Equilibrium {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
    },
    /// Sweep the delay/compensation plane and report terminal states.
    Sweep {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Tau grid as a:b:n; overrides sweep.tau from the config.
        #[arg(long, value_name = "A:B:N")]
        tau: Option<String>,
        /// Theta grid as a:b:n; overrides sweep.theta.
        #[arg(long, value_name = "A:B:N")]
        theta: Option<String>,
        /// Per-point solver; overrides sweep.method.
        #[arg(long, value_enum)]
        method: Option<MethodChoice>,
    },
    /// Concentration of canonical block production among the top miners.
    Gini {
        #[arg(long, value_name = "FILE")]
        blocks: PathBuf,
        /// Number of top miners to include.
        #[arg(long, value_name = "K")]
        top: usize,
        /// Abort on the first malformed row instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Binned uncle/fork/fail statistics of miners.
    Stats {
        #[arg(long, value_name = "FILE")]
        blocks: PathBuf,
        #[arg(long, value_name = "FILE")]
        forks: PathBuf,
        /// Comma-separated bin edges (inclusive upper bounds).
        #[arg(long, value_delimiter = ',', value_name = "E1,E2,..")]
        bins: Option<Vec<u64>>,
        #[arg(long)]
        strict: bool,
    },
    /// Histogram of fork branch multiplicities.
    Branches {
        #[arg(long, value_name = "FILE")]
        forks: PathBuf,
        #[arg(long)]
        strict: bool,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let emitter = Emitter::new(cli.out.clone(), cli.quiet);
    let format = cli.output;
    if let Err(e) = run(cli.command, format, &emitter) {
        eprintln!("error: {e}");
        std::process::exit(match e {
            Error::Domain(_) | Error::Config(_) | Error::Numerical(_) => 1,
            Error::Io(_) | Error::Csv(_) => 2,
        });
    }
}

fn run(command: Command, format: Option<OutputFormat>, emitter: &Emitter) -> Result<()> {
    match command {
        Command::Analytic { config, mode } => {
            cmd_analytic(&config, mode, format.unwrap_or(OutputFormat::Table), emitter)
        }
        Command::Simulate {
            config,
            seed,
            blocks,
            tie,
            split,
            export_blocks,
            export_forks,
        } => cmd_simulate(
            &config,
            seed,
            blocks,
            tie,
            split,
            export_blocks,
            export_forks,
            format.unwrap_or(OutputFormat::Json),
            emitter,
        ),
        Command::Evolve { config, step, tmax, eps } => cmd_evolve(
            &config,
            step,
            tmax,
            eps,
            format.unwrap_or(OutputFormat::Csv),
            emitter,
        ),
        Command::Equilibrium { config } => {
            cmd_equilibrium(&config, format.unwrap_or(OutputFormat::Json), emitter)
        }
        Command::Sweep { config, tau, theta, method } => cmd_sweep(
            &config,
            tau,
            theta,
            method,
            format.unwrap_or(OutputFormat::Csv),
            emitter,
        ),
        Command::Gini { blocks, top, strict } => {
            cmd_gini(&blocks, top, strict, format.unwrap_or(OutputFormat::Json), emitter)
        }
        Command::Stats { blocks, forks, bins, strict } => cmd_stats(
            &blocks,
            &forks,
            bins,
            strict,
            format.unwrap_or(OutputFormat::Table),
            emitter,
        ),
        Command::Branches { forks, strict } => {
            cmd_branches(&forks, strict, format.unwrap_or(OutputFormat::Json), emitter)
        }
    }
}

#[derive(Serialize)]
struct PoolAnalytic {
    pool: usize,
    x: f64,
    p_fork: f64,
    p_fail: f64,
    p_uncle: f64,
    expected_reward: f64,
    reward_ratio: f64,
}

#[derive(Serialize)]
struct AnalyticResult {
    mode: ModeChoice,
    lambda_tau: f64,
    p_concurrent: f64,
    pools: Vec<PoolAnalytic>,
}

fn analytic_rows(
    x: &HashDistribution,
    params: &NetworkParams,
    mode: Mode,
) -> Result<Vec<PoolAnalytic>> {
    (0..x.len())
        .map(|i| {
            let xi = x.get(i).expect("index in range");
            let p_fork = prob_fork_after(i, x, params)?;
            let p_uncle = prob_uncle(i, x, params, mode)?;
            let reward = expected_reward(i, x, params, mode)?;
            // A monopoly pool cannot race itself: fail is reported as 0
            // and the ratio as 1, the values the conditioning degenerates
            // to. A zero-share pool gets the ratio's analytic limit.
            let p_fail = if xi >= 1.0 { 0.0 } else { prob_fail(i, x, params, mode)? };
            let ratio = if xi > 0.0 {
                reward_ratio(i, x, params, mode)?
            } else {
                1.0 - (1.0 - params.theta) * p_uncle
            };
            Ok(PoolAnalytic {
                pool: i + 1,
                x: xi,
                p_fork,
                p_fail,
                p_uncle,
                expected_reward: reward,
                reward_ratio: ratio,
            })
        })
        .collect()
}

fn cmd_analytic(
    path: &Path,
    mode: ModeChoice,
    format: OutputFormat,
    emitter: &Emitter,
) -> Result<()> {
    let mut config = RunConfig::load(path)?;
    let params = config.network()?.params()?;
    let x = config.hash_distribution()?;
    let result = AnalyticResult {
        mode,
        lambda_tau: params.lambda_tau(),
        p_concurrent: prob_concurrent_block(&params),
        pools: analytic_rows(&x, &params, mode.into())?,
    };
    match format {
        OutputFormat::Json => emitter.emit(&json_envelope("analytic", Some(&config), &result)?),
        OutputFormat::Csv | OutputFormat::Table => {
            emitter.echo_config(&config)?;
            let header =
                ["pool", "x", "p_fork", "p_fail", "p_uncle", "expected_reward", "reward_ratio"];
            let fmt = if format == OutputFormat::Csv { full } else { num };
            let rows: Vec<Vec<String>> = result
                .pools
                .iter()
                .map(|p| {
                    vec![
                        p.pool.to_string(),
                        fmt(p.x),
                        fmt(p.p_fork),
                        fmt(p.p_fail),
                        fmt(p.p_uncle),
                        fmt(p.expected_reward),
                        fmt(p.reward_ratio),
                    ]
                })
                .collect();
            if format == OutputFormat::Csv {
                emitter.emit(&csv_document(&header, &rows)?)
            } else {
                emitter.emit(&text_table(&header, &rows))
            }
        }
    }
}

#[derive(Serialize)]
struct RateComparison {
    analytic: f64,
    simulated: f64,
    /// Distance in binomial standard errors; absent when undefined.
    z: Option<f64>,
}

#[derive(Serialize)]
struct ComparisonRow {
    pool: usize,
    x: f64,
    fork: RateComparison,
    uncle: RateComparison,
    fail: RateComparison,
}

#[derive(Serialize)]
struct SimulateResult {
    report: SimReport,
    comparison: Vec<ComparisonRow>,
}

fn zscore(simulated: f64, analytic: f64, trials: u64) -> Option<f64> {
    if trials == 0 {
        return None;
    }
    let se = (analytic * (1.0 - analytic) / trials as f64).sqrt();
    if se > 0.0 {
        Some((simulated - analytic) / se)
    } else {
        None
    }
}

/// Initiator-side empirical rates against the exact closed forms, the
/// statistics the per-block probabilities predict.
fn comparison(
    report: &SimReport,
    x: &HashDistribution,
    params: &NetworkParams,
) -> Result<Vec<ComparisonRow>> {
    let initiator = initiator_rates(report);
    (0..x.len())
        .map(|i| {
            let xi = x.get(i).expect("index in range");
            let stats = &report.pools[i];
            let p_fork = prob_fork_after(i, x, params)?;
            let p_uncle = prob_uncle(i, x, params, Mode::Exact)?;
            let p_fail = if xi >= 1.0 { 0.0 } else { prob_fail(i, x, params, Mode::Exact)? };
            let sim_fail = if stats.forks_involved == 0 {
                0.0
            } else {
                stats.forks_lost as f64 / stats.forks_involved as f64
            };
            Ok(ComparisonRow {
                pool: i + 1,
                x: xi,
                fork: RateComparison {
                    analytic: p_fork,
                    simulated: initiator[i].fork_rate,
                    z: zscore(initiator[i].fork_rate, p_fork, stats.slot_wins),
                },
                uncle: RateComparison {
                    analytic: p_uncle,
                    simulated: initiator[i].uncle_rate,
                    z: zscore(initiator[i].uncle_rate, p_uncle, stats.slot_wins),
                },
                fail: RateComparison {
                    analytic: p_fail,
                    simulated: sim_fail,
                    z: zscore(sim_fail, p_fail, stats.forks_involved),
                },
            })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    path: &Path,
    seed: Option<u64>,
    blocks: Option<u64>,
    tie: Option<TieChoice>,
    split: Option<SplitChoice>,
    export_blocks: Option<PathBuf>,
    export_forks: Option<PathBuf>,
    format: OutputFormat,
    emitter: &Emitter,
) -> Result<()> {
    let mut config = RunConfig::load(path)?;
    let params = config.network()?.params()?;
    let x = config.hash_distribution()?;

    let mut sim = config.sim.clone().unwrap_or_default();
    if seed.is_some() {
        sim.seed = seed;
    }
    if blocks.is_some() {
        sim.blocks = blocks;
    }
    if tie.is_some() {
        sim.tie = tie;
    }
    if split.is_some() {
        sim.split = split;
    }
    let horizon = sim
        .blocks
        .ok_or_else(|| Error::config("simulate needs --blocks or sim.blocks"))?;
    let seed = sim
        .seed
        .ok_or_else(|| Error::config("simulate needs --seed or sim.seed"))?;
    let tie = sim.tie.unwrap_or(TieChoice::Coin);
    let split = sim.split.unwrap_or(SplitChoice::Half);
    config.sim = Some(SimSection {
        blocks: Some(horizon),
        seed: Some(seed),
        tie: Some(tie),
        split: Some(split),
    });

    let mut sim_config = SimConfig::new(params, x.clone(), horizon, seed);
    sim_config.tie_mode = tie.into();
    sim_config.split_mode = split.into();

    let wants_ledger = export_blocks.is_some() || export_forks.is_some();
    let (report, ledger) = if wants_ledger {
        let (report, ledger) = simulate_with_ledger(&sim_config)?;
        (report, Some(ledger))
    } else {
        (simulate(&sim_config)?, None)
    };
    if let Some(ledger) = &ledger {
        export_ledger(ledger, export_blocks.as_deref(), export_forks.as_deref(), emitter)?;
    }

    let result = SimulateResult { comparison: comparison(&report, &x, &params)?, report };
    match format {
        OutputFormat::Json => emitter.emit(&json_envelope("simulate", Some(&config), &result)?),
        OutputFormat::Csv | OutputFormat::Table => {
            emitter.echo_config(&config)?;
            let header = [
                "pool",
                "x",
                "p_fork",
                "sim_fork",
                "z_fork",
                "p_uncle",
                "sim_uncle",
                "z_uncle",
                "p_fail",
                "sim_fail",
                "z_fail",
            ];
            let fmt = if format == OutputFormat::Csv { full } else { num };
            let z_fmt = |z: Option<f64>| z.map(|v| format!("{v:.3}")).unwrap_or_default();
            let rows: Vec<Vec<String>> = result
                .comparison
                .iter()
                .map(|c| {
                    vec![
                        c.pool.to_string(),
                        fmt(c.x),
                        fmt(c.fork.analytic),
                        fmt(c.fork.simulated),
                        z_fmt(c.fork.z),
                        fmt(c.uncle.analytic),
                        fmt(c.uncle.simulated),
                        z_fmt(c.uncle.z),
                        fmt(c.fail.analytic),
                        fmt(c.fail.simulated),
                        z_fmt(c.fail.z),
                    ]
                })
                .collect();
            if format == OutputFormat::Csv {
                emitter.emit(&csv_document(&header, &rows)?)
            } else {
                let mut payload = format!(
                    "blocks: {}\nfork_events: {}\nseed: {}\n\n",
                    result.report.total_blocks, result.report.fork_events, result.report.seed
                );
                payload.push_str(&text_table(&header, &rows));
                emitter.emit(&payload)
            }
        }
    }
}

fn export_ledger(
    ledger: &SimLedger,
    blocks: Option<&Path>,
    forks: Option<&Path>,
    emitter: &Emitter,
) -> Result<()> {
    if let Some(path) = blocks {
        let file = std::fs::File::create(path)?;
        chain_data::write_blocks_csv(&ledger.blocks, file)?;
        emitter.note(&format!("wrote {} block rows to {}", ledger.blocks.len(), path.display()));
    }
    if let Some(path) = forks {
        let file = std::fs::File::create(path)?;
        chain_data::write_forks_csv(&ledger.forks, file)?;
        emitter.note(&format!("wrote {} fork rows to {}", ledger.forks.len(), path.display()));
    }
    Ok(())
}

fn cmd_evolve(
    path: &Path,
    step: Option<f64>,
    tmax: Option<f64>,
    eps: Option<f64>,
    format: OutputFormat,
    emitter: &Emitter,
) -> Result<()> {
    let mut config = RunConfig::load(path)?;
    let market = config.market()?.pools()?;
    let params = config.network()?.params()?;
    let r0 = config.population(market.len())?;
    config.population = Some(PopulationSection { r0: r0.as_slice().to_vec() });

    let traj = integrate(
        &r0,
        &market,
        &params,
        Mode::Approx,
        step.unwrap_or(DEFAULT_STEP),
        tmax.unwrap_or(DEFAULT_T_MAX),
        eps.unwrap_or(DEFAULT_EPS),
    )?;
    if !traj.converged {
        emitter.note(&format!(
            "did not converge within the horizon; terminal velocity {}",
            traj.residual
        ));
    }
    match format {
        OutputFormat::Json => emitter.emit(&json_envelope("evolve", Some(&config), &traj)?),
        OutputFormat::Csv => {
            emitter.echo_config(&config)?;
            let mut buf = Vec::new();
            write_trajectory_csv(&traj, &mut buf)?;
            let text = String::from_utf8(buf)
                .map_err(|e| Error::numerical(format!("CSV encoding: {e}")))?;
            emitter.emit(&text)
        }
        OutputFormat::Table => {
            emitter.echo_config(&config)?;
            let terminal: Vec<String> =
                traj.terminal.as_slice().iter().map(|&v| num(v)).collect();
            let payload = format!(
                "samples: {}\nt_end: {}\nconverged: {}\nresidual: {}\nterminal: {}\n",
                traj.times.len(),
                traj.times.last().map(|&t| full(t)).unwrap_or_default(),
                traj.converged,
                full(traj.residual),
                terminal.join(" ")
            );
            emitter.emit(&payload)
        }
    }
}

fn kind_label(kind: Kind) -> &'static str {
    match kind {
        Kind::VertexEss => "vertex_ess",
        Kind::InteriorEss => "interior_ess",
        Kind::NssManifold => "nss_manifold",
        Kind::Numerical => "numerical",
    }
}

fn stability_text(s: Stability) -> &'static str {
    match s {
        Stability::AsymptoticallyStable => "asymptotically_stable",
        Stability::LyapunovStable => "lyapunov_stable",
    }
}

fn cmd_equilibrium(path: &Path, format: OutputFormat, emitter: &Emitter) -> Result<()> {
    let config = RunConfig::load(path)?;
    let market = config.market()?.pools()?;
    let params = config.network()?.params()?;
    let r0 = match &config.population {
        Some(section) => Some(PopulationState::new(section.r0.clone())?),
        None => None,
    };
    let results = classify(&market, &params, Mode::Approx, r0.as_ref())?;

    match format {
        OutputFormat::Json => {
            // A unique classification is one object; coexisting results
            // stay an array.
            let value = if results.len() == 1 {
                serde_json::to_value(&results[0])
            } else {
                serde_json::to_value(&results)
            }
            .map_err(|e| Error::numerical(format!("JSON serialization: {e}")))?;
            emitter.emit(&json_envelope("equilibrium", Some(&config), &value)?)
        }
        OutputFormat::Csv => {
            emitter.echo_config(&config)?;
            let header = [
                "kind",
                "stability",
                "theorem",
                "case",
                "ambiguous",
                "manifold_constraint",
                "state",
            ];
            let rows: Vec<Vec<String>> = results.iter().map(equilibrium_cells).collect();
            emitter.emit(&csv_document(&header, &rows)?)
        }
        OutputFormat::Table => {
            emitter.echo_config(&config)?;
            let mut payload = String::new();
            for (i, r) in results.iter().enumerate() {
                if i > 0 {
                    payload.push('\n');
                }
                payload.push_str(&render_equilibrium(r));
            }
            emitter.emit(&payload)
        }
    }
}

fn equilibrium_cells(r: &EquilibriumResult) -> Vec<String> {
    vec![
        kind_label(r.kind).to_string(),
        stability_text(r.stability).to_string(),
        r.witness.theorem.map(|t| t.to_string()).unwrap_or_default(),
        r.witness.case.map(|c| c.to_string()).unwrap_or_default(),
        r.ambiguous.to_string(),
        r.manifold_constraint.map(full).unwrap_or_default(),
        r.state
            .as_ref()
            .map(|s| {
                s.as_slice().iter().map(|&v| full(v)).collect::<Vec<_>>().join(" ")
            })
            .unwrap_or_default(),
    ]
}

fn render_equilibrium(r: &EquilibriumResult) -> String {
    let mut out = format!("kind: {}\n", kind_label(r.kind));
    if let Some(state) = &r.state {
        let cells: Vec<String> = state.as_slice().iter().map(|&v| num(v)).collect();
        out.push_str(&format!("state: {}\n", cells.join(" ")));
    }
    if let Some(k) = r.manifold_constraint {
        out.push_str(&format!("manifold: sum(r_i * omega_i) = {}\n", full(k)));
    }
    out.push_str(&format!("stability: {}\n", stability_text(r.stability)));
    if let Some(t) = r.witness.theorem {
        let case = r.witness.case.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!("branch: theorem {t} case {case}\n"));
    }
    if r.ambiguous {
        out.push_str("ambiguous: true\n");
    }
    for c in &r.witness.conditions {
        out.push_str(&format!(
            "condition {}: {} {} {}\n",
            c.name,
            full(c.lhs),
            if c.holds { "vs" } else { "vs (fails)" },
            full(c.rhs)
        ));
    }
    if let Some(notice) = &r.notice {
        out.push_str(&format!("notice: {notice}\n"));
    }
    out
}

fn cmd_sweep(
    path: &Path,
    tau: Option<String>,
    theta: Option<String>,
    method: Option<MethodChoice>,
    format: OutputFormat,
    emitter: &Emitter,
) -> Result<()> {
    let mut config = RunConfig::load(path)?;
    let market = config.market()?.pools()?;
    let network = config.network()?;
    let (lambda, reward) = (network.lambda, network.reward);

    let mut section = config.sweep.clone().unwrap_or_default();
    if let Some(expr) = tau {
        section.tau = Some(GridSpec::Expr(expr));
    }
    if let Some(expr) = theta {
        section.theta = Some(GridSpec::Expr(expr));
    }
    if method.is_some() {
        section.method = method;
    }
    let tau_grid = section
        .tau
        .as_ref()
        .ok_or_else(|| Error::config("sweep needs --tau or sweep.tau"))?
        .resolve()?;
    let theta_grid = section
        .theta
        .as_ref()
        .ok_or_else(|| Error::config("sweep needs --theta or sweep.theta"))?
        .resolve()?;
    let method = section.method.unwrap_or(MethodChoice::Analytic);
    config.sweep = Some(SweepSection {
        tau: Some(GridSpec::Points(tau_grid.clone())),
        theta: Some(GridSpec::Points(theta_grid.clone())),
        method: Some(method),
    });
    let r0 = match &config.population {
        Some(section) => Some(PopulationState::new(section.r0.clone())?),
        None => None,
    };

    let m = market.len();
    let spec = SweepSpec::new(market, lambda, reward, tau_grid, theta_grid, method.into(), r0)?;
    let rows = sweep(&spec)?;
    let failures = rows.iter().filter(|r| r.status.starts_with("error:")).count();
    if failures > 0 {
        emitter.note(&format!("{failures} of {} grid points failed; see status column", rows.len()));
    }

    match format {
        OutputFormat::Json => emitter.emit(&json_envelope("sweep", Some(&config), &rows)?),
        OutputFormat::Csv => {
            emitter.echo_config(&config)?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, m, &mut buf)?;
            let text = String::from_utf8(buf)
                .map_err(|e| Error::numerical(format!("CSV encoding: {e}")))?;
            emitter.emit(&text)
        }
        OutputFormat::Table => {
            emitter.echo_config(&config)?;
            let mut header = vec!["tau".to_string(), "theta".to_string()];
            for i in 1..=m {
                header.push(format!("r_{i}"));
            }
            header.extend(["gini".to_string(), "method".to_string(), "status".to_string()]);
            let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
            let table_rows: Vec<Vec<String>> = rows.iter().map(|r| sweep_cells(r, m)).collect();
            emitter.emit(&text_table(&header_refs, &table_rows))
        }
    }
}

fn sweep_cells(row: &SweepRow<f64>, m: usize) -> Vec<String> {
    let mut cells = vec![num(row.tau), num(row.theta)];
    match &row.terminal {
        Some(state) => cells.extend(state.as_slice().iter().map(|&v| num(v))),
        None => cells.extend(std::iter::repeat(String::new()).take(m)),
    }
    cells.push(row.gini.map(num).unwrap_or_default());
    cells.push(match row.method {
        powevo::metrics::SweepMethod::Analytic => "analytic".to_string(),
        powevo::metrics::SweepMethod::Ode => "ode".to_string(),
    });
    cells.push(row.status.clone());
    cells
}

#[derive(Serialize)]
struct LoadSummary {
    rows: usize,
    skipped: usize,
    warnings: usize,
}

fn note_issues(emitter: &Emitter, file: &Path, kind: &str, issues: &[RowIssue]) {
    const CAP: usize = 10;
    for issue in issues.iter().take(CAP) {
        emitter.note(&format!("{}: {kind}: {issue}", file.display()));
    }
    if issues.len() > CAP {
        emitter.note(&format!("{}: ... and {} more", file.display(), issues.len() - CAP));
    }
}

fn summarize<R>(emitter: &Emitter, file: &Path, report: &LoadReport<R>) -> LoadSummary {
    note_issues(emitter, file, "skipped row", &report.errors);
    note_issues(emitter, file, "warning", &report.warnings);
    LoadSummary {
        rows: report.records.len(),
        skipped: report.errors.len(),
        warnings: report.warnings.len(),
    }
}

fn load_block_file(
    path: &Path,
    strict: bool,
    emitter: &Emitter,
) -> Result<(Vec<BlockRecord>, LoadSummary)> {
    let report = load_blocks(path, strict)?;
    let summary = summarize(emitter, path, &report);
    Ok((report.records, summary))
}

fn load_fork_file(
    path: &Path,
    strict: bool,
    emitter: &Emitter,
) -> Result<(Vec<ForkRecord>, LoadSummary)> {
    let report = load_forks(path, strict)?;
    let summary = summarize(emitter, path, &report);
    Ok((report.records, summary))
}

#[derive(Serialize)]
struct GiniOutput {
    #[serde(flatten)]
    report: chain_data::GiniReport,
    load: LoadSummary,
}

fn cmd_gini(
    path: &Path,
    top: usize,
    strict: bool,
    format: OutputFormat,
    emitter: &Emitter,
) -> Result<()> {
    let (records, load) = load_block_file(path, strict, emitter)?;
    let report = chain_data::top_k_gini(&records, top)?;
    if let Some(warning) = &report.warning {
        emitter.note(warning);
    }
    let result = GiniOutput { report, load };
    match format {
        OutputFormat::Json => emitter.emit(&json_envelope("gini", None, &result)?),
        OutputFormat::Csv => {
            let header = ["requested_k", "miners_used", "gini"];
            let row = vec![
                result.report.requested_k.to_string(),
                result.report.miners_used.to_string(),
                full(result.report.gini),
            ];
            emitter.emit(&csv_document(&header, &[row])?)
        }
        OutputFormat::Table => emitter.emit(&format!(
            "requested_k: {}\nminers_used: {}\ngini: {}\n",
            result.report.requested_k,
            result.report.miners_used,
            full(result.report.gini)
        )),
    }
}

#[derive(Serialize)]
struct StatsOutput {
    #[serde(flatten)]
    stats: chain_data::BinnedStats,
    load_blocks: LoadSummary,
    load_forks: LoadSummary,
}

fn cmd_stats(
    blocks: &Path,
    forks: &Path,
    bins: Option<Vec<u64>>,
    strict: bool,
    format: OutputFormat,
    emitter: &Emitter,
) -> Result<()> {
    let (block_records, load_blocks) = load_block_file(blocks, strict, emitter)?;
    let (fork_records, load_forks) = load_fork_file(forks, strict, emitter)?;
    let edges = bins.unwrap_or_else(|| DEFAULT_BIN_EDGES.to_vec());
    let stats = chain_data::miner_stats(&block_records, &fork_records, &edges)?;
    for warning in &stats.warnings {
        emitter.note(warning);
    }
    let result = StatsOutput { stats, load_blocks, load_forks };
    match format {
        OutputFormat::Json => emitter.emit(&json_envelope("stats", None, &result)?),
        OutputFormat::Table => emitter.emit(&chain_data::render_table(&result.stats)),
        OutputFormat::Csv => {
            let header = [
                "lower",
                "upper",
                "miner_count",
                "total_blocks",
                "uncles",
                "forks_involved",
                "forks_lost",
                "uncle_rate",
                "fork_rate",
                "fail_rate",
            ];
            let rows: Vec<Vec<String>> = result
                .stats
                .bins
                .iter()
                .map(|b| {
                    vec![
                        b.lower.to_string(),
                        b.upper.map(|u| u.to_string()).unwrap_or_default(),
                        b.miner_count.to_string(),
                        b.total_blocks.to_string(),
                        b.uncles.to_string(),
                        b.forks_involved.to_string(),
                        b.forks_lost.to_string(),
                        full(b.uncle_rate),
                        full(b.fork_rate),
                        full(b.fail_rate),
                    ]
                })
                .collect();
            emitter.emit(&csv_document(&header, &rows)?)
        }
    }
}

#[derive(Serialize)]
struct BranchesOutput {
    histogram: std::collections::BTreeMap<u32, chain_data::BranchBucket>,
    load: LoadSummary,
}

fn cmd_branches(
    path: &Path,
    strict: bool,
    format: OutputFormat,
    emitter: &Emitter,
) -> Result<()> {
    let (records, load) = load_fork_file(path, strict, emitter)?;
    let result = BranchesOutput { histogram: chain_data::branch_histogram(&records), load };
    match format {
        OutputFormat::Json => emitter.emit(&json_envelope("branches", None, &result)?),
        OutputFormat::Csv | OutputFormat::Table => {
            let header = ["branches", "count", "fraction"];
            let rows: Vec<Vec<String>> = result
                .histogram
                .iter()
                .map(|(branches, bucket)| {
                    vec![branches.to_string(), bucket.count.to_string(), full(bucket.fraction)]
                })
                .collect();
            if format == OutputFormat::Csv {
                emitter.emit(&csv_document(&header, &rows)?)
            } else {
                emitter.emit(&text_table(&header, &rows))
            }
        }
    }
}
