//! Reproducible command-line runs of the equilibrium solver, risk-
//! perception sweeps, exact-discrete simulation, data ingestion, and the
//! maximum-likelihood / likelihood-ratio pipeline.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 empty result.

mod config;
mod output;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use config::{load_config, parse_modes, RunConfig};
use reeq_core::data::{
    cointegrating_ols, detrend_and_normalize, estimate_growth_rate_with, load_csv, ColumnMap,
    DeflateBase, Direction, GrowthMethod,
};
use reeq_core::estimate::{estimate_ml, lr_test, EstimationMode, EstimationResult};
use reeq_core::riccati::{candidates_to_csv, solve_candidates, sweep, sweep_to_csv};
use reeq_core::series::{ObservationSeries, SeriesMeta};
use reeq_core::statespace::{exact_discretize, simulate};

#[derive(Parser)]
#[command(
    name = "reeq",
    about = "Equilibrium pricing and estimation for a noisy CARA economy",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSVs, the config echo, and the summary.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Suppress timestamps so reruns produce identical bytes.
    #[arg(long)]
    reproducible: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for candidate equilibria and rank them by utility.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve on a (phi, sigma_Theta) grid and record the dominant class.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Grid as start:end:count, e.g. 0.5:1.0:2.
        #[arg(long, value_name = "A:B:N")]
        grid_phi: String,
        #[arg(long, value_name = "A:B:N")]
        grid_sigma: String,
    },
    /// Simulate an exact-discrete observation series.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Series length override.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Ingest a raw price/dividend CSV: deflate, de-trend, normalize.
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        /// Raw input CSV.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
    /// Maximum-likelihood estimation on a prepared series.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// Prepared series CSV (time,price,dividend).
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// typeA, typeB, or both.
        #[arg(long)]
        mode: Option<String>,
        /// fixed:<r> or free.
        #[arg(long)]
        rate: Option<String>,
    },
    /// Likelihood-ratio verdict between two estimation reports.
    Compare {
        /// Constrained-fit report JSON.
        #[arg(value_name = "REPORT_A", required_unless_present = "loglik_a")]
        report_a: Option<PathBuf>,
        /// Free-fit report JSON.
        #[arg(value_name = "REPORT_B", required_unless_present = "loglik_b")]
        report_b: Option<PathBuf>,
        /// Direct log-likelihood of the constrained fit.
        #[arg(long)]
        loglik_a: Option<f64>,
        /// Direct log-likelihood of the free fit.
        #[arg(long)]
        loglik_b: Option<f64>,
        /// Degrees of freedom of the restriction.
        #[arg(long, default_value_t = 3)]
        dof: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Solve { common } => cmd_solve(&common),
        Command::Sweep {
            common,
            grid_phi,
            grid_sigma,
        } => cmd_sweep(&common, &grid_phi, &grid_sigma),
        Command::Simulate { common, length } => cmd_simulate(&common, length),
        Command::Ingest { common, input } => cmd_ingest(&common, &input),
        Command::Estimate {
            common,
            data,
            mode,
            rate,
        } => cmd_estimate(&common, &data, mode.as_deref(), rate.as_deref()),
        Command::Compare {
            report_a,
            report_b,
            loglik_a,
            loglik_b,
            dof,
        } => cmd_compare(
            report_a.as_deref(),
            report_b.as_deref(),
            loglik_a,
            loglik_b,
            dof,
        ),
    }
}

fn effective_seed(cfg: &RunConfig, common: &CommonArgs) -> u64 {
    common.seed.or(cfg.seed).unwrap_or(0)
}

fn echo_config(cfg: &RunConfig) -> anyhow::Result<String> {
    toml::to_string_pretty(cfg).context("cannot serialize config echo")
}

fn cmd_solve(common: &CommonArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&common.config)?;
    let seed = effective_seed(&cfg, common);
    let params = cfg.model.to_params();
    let solver = cfg.solver.to_config(seed);
    let candidates = solve_candidates(&params, &solver)?;

    print!("{}", output::candidate_table(&candidates));
    if let Some(dir) = &common.out {
        output::prepare_out_dir(dir, &echo_config(&cfg)?)?;
        let file = std::fs::File::create(dir.join("candidates.csv"))?;
        candidates_to_csv(&candidates, file)?;
        let json = serde_json::to_string_pretty(&candidates)?;
        std::fs::write(dir.join("candidates.json"), json)?;
        output::write_summary(
            dir,
            common.reproducible,
            &format!(
                "solve: {} candidates at phi={} sigma_theta={} seed={}\n\n{}",
                candidates.len(),
                params.phi,
                params.sigma_theta,
                seed,
                output::candidate_table(&candidates)
            ),
        )?;
    }
    if candidates.is_empty() {
        eprintln!("no candidates");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be start:end:count, got '{s}'");
    }
    let a: f64 = parts[0].parse().context("grid start")?;
    let b: f64 = parts[1].parse().context("grid end")?;
    let n: usize = parts[2].parse().context("grid count")?;
    if n == 0 {
        bail!("grid count must be >= 1");
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect())
}

fn cmd_sweep(common: &CommonArgs, grid_phi: &str, grid_sigma: &str) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&common.config)?;
    let seed = effective_seed(&cfg, common);
    let params = cfg.model.to_params();
    let solver = cfg.solver.to_config(seed);
    let phis = parse_grid(grid_phi)?;
    let sigmas = parse_grid(grid_sigma)?;
    let records = sweep(&params, &phis, &sigmas, &solver)?;

    println!(
        "{:>8} {:>12} {:>14} {:>14} {:>22} {:>6}",
        "phi", "sigma_theta", "best_A", "best_B", "dominant", "n"
    );
    for r in &records {
        let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:>8.3} {:>12.3} {:>14} {:>14} {:>22} {:>6}",
            r.phi,
            r.sigma_theta,
            fmt_opt(r.best_type_a_utility),
            fmt_opt(r.best_type_b_utility),
            r.dominant.map_or("-".to_string(), |d| d.to_string()),
            r.n_candidates
        );
    }
    if let Some(dir) = &common.out {
        output::prepare_out_dir(dir, &echo_config(&cfg)?)?;
        let file = std::fs::File::create(dir.join("sweep.csv"))?;
        sweep_to_csv(&records, file)?;
        output::write_summary(
            dir,
            common.reproducible,
            &format!("sweep: {} nodes, seed={}\n", records.len(), seed),
        )?;
    }
    if records.iter().all(|r| r.n_candidates == 0) {
        eprintln!("no candidates on any node");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(common: &CommonArgs, length: Option<usize>) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&common.config)?;
    let seed = effective_seed(&cfg, common);
    let params = cfg.model.to_params();
    let coeffs = cfg.simulate.coefficients.resolve(&params)?;
    let n = length.unwrap_or(cfg.simulate.length);
    let model = exact_discretize(&params, &coeffs, cfg.simulate.dt)?;
    let series = simulate(&model, n, seed)?;

    println!(
        "simulated {} observations (dt = {}, seed = {})",
        series.len(),
        cfg.simulate.dt,
        seed
    );
    if let Some(dir) = &common.out {
        output::prepare_out_dir(dir, &echo_config(&cfg)?)?;
        let file = std::fs::File::create(dir.join("series.csv"))?;
        series.write_csv(file)?;
        std::fs::write(
            dir.join("meta.json"),
            serde_json::to_string_pretty(&series.meta)?,
        )?;
        output::write_summary(
            dir,
            common.reproducible,
            &format!("simulate: {} observations, seed={}\n", series.len(), seed),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ingest(common: &CommonArgs, input: &Path) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&common.config)?;
    let ing = &cfg.ingest;
    let columns = ColumnMap {
        date: ing.date_column.clone(),
        price: ing.price_column.clone(),
        dividend: ing.dividend_column.clone(),
        cpi: ing.cpi_column.clone(),
    };
    let mut raw = load_csv(input, &columns)?;
    if ing.annual_january {
        raw = raw.january_only();
    }
    match ing.deflate.as_str() {
        "none" => {}
        "last" => raw = raw.deflated(DeflateBase::LastObservation)?,
        other => {
            if let Some(y) = other.strip_prefix("year:") {
                let year: f64 = y.parse().context("deflate year")?;
                raw = raw.deflated(DeflateBase::AtDate(year))?;
            } else {
                bail!("deflate must be none, last, or year:<decimal year>");
            }
        }
    }
    let method = match ing.growth.as_str() {
        "log" => GrowthMethod::Log,
        "arithmetic" => GrowthMethod::Arithmetic,
        other => bail!("growth must be log or arithmetic, got '{other}'"),
    };
    let xi = match ing.xi {
        Some(v) => v,
        None => estimate_growth_rate_with(&raw, method)?,
    };
    let series = detrend_and_normalize(&raw, xi)?;
    let ols = cointegrating_ols(&series, xi, Direction::DividendOnPrice, true)?;

    println!("ingested {} observations from {}", series.len(), input.display());
    println!("growth rate xi = {xi:.5}");
    println!(
        "cointegrating OLS: dividend = {:.4} + {:.4} * price  (robust t = {:.2}, {:.2})",
        ols.intercept, ols.slope, ols.t_intercept, ols.t_slope
    );
    println!("implied interest rate r = {:.4}", ols.implied_rate);

    if let Some(dir) = &common.out {
        output::prepare_out_dir(dir, &echo_config(&cfg)?)?;
        let file = std::fs::File::create(dir.join("series.csv"))?;
        series.write_csv(file)?;
        std::fs::write(
            dir.join("meta.json"),
            serde_json::to_string_pretty(&series.meta)?,
        )?;
        std::fs::write(
            dir.join("regression.json"),
            serde_json::to_string_pretty(&ols)?,
        )?;
        output::write_summary(
            dir,
            common.reproducible,
            &format!(
                "ingest: {} observations\nxi = {xi:.6}\nnormalization = {:.6}\nslope = {:.6}\nimplied r = {:.6}\n",
                series.len(),
                series.meta.normalization,
                ols.slope,
                ols.implied_rate
            ),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn read_series(path: &Path) -> anyhow::Result<ObservationSeries> {
    let meta_path = path.with_file_name("meta.json");
    let meta: SeriesMeta = if meta_path.exists() {
        serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?
    } else {
        SeriesMeta {
            source: path.display().to_string(),
            ..Default::default()
        }
    };
    let file = std::fs::File::open(path)
        .with_context(|| format!("cannot open series {}", path.display()))?;
    Ok(ObservationSeries::read_csv(file, meta)?)
}

fn cmd_estimate(
    common: &CommonArgs,
    data: &Path,
    mode_flag: Option<&str>,
    rate_flag: Option<&str>,
) -> anyhow::Result<ExitCode> {
    let mut cfg = load_config(&common.config)?;
    if let Some(r) = rate_flag {
        cfg.estimation.rate = r.to_string();
    }
    let seed = effective_seed(&cfg, common);
    let series = read_series(data)?;
    let modes = parse_modes(mode_flag.unwrap_or(&cfg.estimation.mode))?;

    let mut results: Vec<EstimationResult> = Vec::new();
    for mode in &modes {
        let spec = cfg.estimation.to_spec(*mode, series.meta.xi, seed)?;
        let fit = estimate_ml(&series, &spec)?;
        if !fit.converged {
            eprintln!(
                "warning: {:?} hit the evaluation budget before converging",
                mode
            );
        }
        results.push(fit);
    }

    let lr_line = if results.len() == 2 {
        let (a, b) = (&results[0], &results[1]);
        let (ll_a, ll_b) = match a.mode {
            EstimationMode::TypeAConstrained => (a.loglik, b.loglik),
            EstimationMode::TypeBFree => (b.loglik, a.loglik),
        };
        let t = lr_test(ll_a, ll_b, 3)?;
        Some(format!(
            "LR = {:.2} (dof {}), {}",
            t.statistic, t.dof, t.decision
        ))
    } else {
        None
    };

    let table = output::estimation_table(&results, lr_line.as_deref());
    print!("{table}");

    if let Some(dir) = &common.out {
        output::prepare_out_dir(dir, &echo_config(&cfg)?)?;
        for fit in &results {
            let name = match fit.mode {
                EstimationMode::TypeAConstrained => "report_typeA.json",
                EstimationMode::TypeBFree => "report_typeB.json",
            };
            std::fs::write(dir.join(name), serde_json::to_string_pretty(fit)?)?;
        }
        let mut csv = String::from("mode,loglik,n_params,p0,pD0,pD1,pI,converged,n_evals\n");
        for fit in &results {
            csv.push_str(&format!(
                "{:?},{},{},{},{},{},{},{},{}\n",
                fit.mode,
                fit.loglik,
                fit.n_params,
                fit.coeffs_hat.p0,
                fit.coeffs_hat.p_d0,
                fit.coeffs_hat.p_d1,
                fit.coeffs_hat.p_i,
                fit.converged,
                fit.n_evals
            ));
        }
        std::fs::write(dir.join("estimate.csv"), csv)?;
        output::write_summary(dir, common.reproducible, &table)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(
    report_a: Option<&Path>,
    report_b: Option<&Path>,
    loglik_a: Option<f64>,
    loglik_b: Option<f64>,
    dof: usize,
) -> anyhow::Result<ExitCode> {
    let read_ll = |path: Option<&Path>, direct: Option<f64>, which: &str| -> anyhow::Result<f64> {
        if let Some(v) = direct {
            return Ok(v);
        }
        let path = path.with_context(|| format!("missing report {which}"))?;
        let fit: EstimationResult = serde_json::from_str(
            &std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?,
        )?;
        Ok(fit.loglik)
    };
    let ll_a = read_ll(report_a, loglik_a, "A")?;
    let ll_b = read_ll(report_b, loglik_b, "B")?;
    let t = lr_test(ll_a, ll_b, dof)?;
    println!(
        "LR statistic = {:.2} against chi-squared({}) thresholds {:.2} / {:.2} / {:.2}",
        t.statistic, t.dof, t.thresholds[0], t.thresholds[1], t.thresholds[2]
    );
    println!("decision: {}", t.decision);
    Ok(ExitCode::SUCCESS)
}
