//! Command-line interface: scenario validation, scheme solving, scheme
//! comparison, instrument calibration, oracle verification, and report
//! emission.

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use carbon_pricing::accounting::{self, run_scheme, PolicyConfig, Scheme, SchemeAccounts};
use carbon_pricing::clearing::{self, AccessMode, AccessProfile};
use carbon_pricing::error::Error;
use carbon_pricing::firm::{check_feasibility, RateKind};
use carbon_pricing::oracle::{self, Pricing};
use carbon_pricing::report;
use carbon_pricing::risk::EmissionModel;
use carbon_pricing::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "carbon-pricing",
    version,
    about = "Equilibrium comparison of carbon tax and cap-and-trade schemes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Bau,
    Tax,
    Spot,
    Intermediated,
    Hybrid,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Scheme {
        match s {
            SchemeArg::Bau => Scheme::Bau,
            SchemeArg::Tax => Scheme::Tax,
            SchemeArg::Spot => Scheme::Spot,
            SchemeArg::Intermediated => Scheme::Intermediated,
            SchemeArg::Hybrid => Scheme::Hybrid,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Records,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scenario file: parameter domains, standing assumptions, and
    /// the certificate-supply feasibility window.
    Validate { scenario: String },
    /// Solve one scheme and print its accounts.
    Solve {
        scenario: String,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
    /// Run two or more schemes and compare them firm by firm.
    Compare {
        scenario: String,
        #[arg(long, value_delimiter = ',', required = true)]
        schemes: Vec<SchemeArg>,
    },
    /// Print calibrated instruments: tax rate, penalty, spot prices.
    Calibrate { scenario: String },
    /// Cross-check solved outcomes against brute-force oracles; exits
    /// nonzero on any tolerance breach.
    Verify { scenario: String },
    /// Render business-as-usual, tax, and market columns side by side.
    Report {
        scenario: String,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Scenario(_) | Error::Comparison(_) => 2,
        Error::InvalidParameter { .. }
        | Error::Infeasible { .. }
        | Error::SupplyOutsideWindow { .. }
        | Error::EmptyWindow { .. } => 3,
        Error::Solver(_) | Error::Calibration(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.cmd {
        Cmd::Validate { scenario } => validate(&scenario),
        Cmd::Solve {
            scenario,
            scheme,
            format,
        } => solve(&scenario, scheme.map(Into::into), format),
        Cmd::Compare { scenario, schemes } => compare(&scenario, &schemes),
        Cmd::Calibrate { scenario } => calibrate(&scenario),
        Cmd::Verify { scenario } => verify(&scenario),
        Cmd::Report { scenario, format } => full_report(&scenario, format),
    }
}

fn market_access(scenario: &Scenario, policy: &PolicyConfig) -> AccessProfile {
    match policy.scheme {
        Scheme::Spot => AccessProfile::all_direct(scenario.firms.len()),
        Scheme::Hybrid => policy
            .access
            .clone()
            .unwrap_or_else(|| AccessProfile::all_direct(scenario.firms.len())),
        _ => AccessProfile::all_intermediated(scenario.firms.len()),
    }
}

fn validate(arg: &str) -> Result<u8, Error> {
    let scenario = Scenario::resolve(arg)?;
    let portfolio = scenario.portfolio()?;
    let model = scenario.emission_model()?;
    println!("scenario `{}`: {} firms", scenario.name, portfolio.len());
    let e_bau: f64 = portfolio.iter().map(|p| p.bau_emissions()).sum();
    println!("bau emissions: {:.3} Mt", e_bau / 1e6);
    if let Some(a) = scenario.certificates()? {
        println!("certificate supply: {:.3} Mt", a / 1e6);
    }

    let sigma2 = match &model {
        EmissionModel::Deterministic => 1.0,
        EmissionModel::Random(d) => d.sigma2(),
    };
    if let Some(rate) = scenario.policy.tax_rate.or(scenario.policy.penalty) {
        let kind = if scenario.policy.tax_rate.is_some() {
            RateKind::Tax
        } else {
            RateKind::Market
        };
        let mut violations = Vec::new();
        for p in &portfolio {
            if !check_feasibility(p, rate, kind, sigma2).is_ok() {
                violations.push(p.id.clone());
            }
        }
        if !violations.is_empty() {
            return Err(Error::Infeasible {
                firm: violations.join(", "),
                reason: format!("rate {rate} violates the standing assumption"),
            });
        }
        println!("rate {rate} feasible for every firm");
    }

    if let (Some(a), Some(penalty), EmissionModel::Deterministic) =
        (scenario.certificates()?, scenario.policy.penalty, &model)
    {
        let policy = scenario.policy_config(None)?;
        if policy.scheme != Scheme::Tax && policy.scheme != Scheme::Bau {
            let access = market_access(&scenario, &policy);
            let w = clearing::feasibility_window(&portfolio, penalty, &access)?;
            println!(
                "clearing window: [{:.3}, {:.3}) Mt (corner-free above {:.3})",
                w.a_min / 1e6,
                w.a_max / 1e6,
                w.interior_a_min / 1e6
            );
            if !(a >= w.a_min && a < w.a_max) {
                return Err(Error::SupplyOutsideWindow {
                    supply: a,
                    lower: w.a_min,
                    upper: w.a_max,
                });
            }
        }
    }
    println!("ok");
    Ok(0)
}

fn solve_accounts(scenario: &Scenario, scheme: Option<Scheme>) -> Result<SchemeAccounts, Error> {
    let portfolio = scenario.portfolio()?;
    let model = scenario.emission_model()?;
    let policy = scenario.policy_config(scheme)?;
    run_scheme(&portfolio, &policy, &model)
}

fn print_accounts(
    scenario: &Scenario,
    accounts: &SchemeAccounts,
    format: FormatArg,
) -> Result<(), Error> {
    match format {
        FormatArg::Table => {
            if let Some(tau) = accounts.tax_rate {
                println!("tax rate: {tau:.4} EUR/t");
            }
            if let Some(s) = accounts.spot {
                println!("spot price: {s:.4} EUR/t");
            }
            if let Some(l) = accounts.penalty {
                println!("penalty rate: {l:.4} EUR/t");
            }
            println!();
            print!("{}", report::render_table(&[accounts])?);
        }
        FormatArg::Csv => print!("{}", report::render_csv(&scenario.name, accounts, true)),
        FormatArg::Records => print!("{}", report::render_records(&scenario.name, accounts)),
    }
    Ok(())
}

fn solve(arg: &str, scheme: Option<Scheme>, format: FormatArg) -> Result<u8, Error> {
    let scenario = Scenario::resolve(arg)?;
    let accounts = solve_accounts(&scenario, scheme)?;
    print_accounts(&scenario, &accounts, format)?;
    Ok(0)
}

fn compare(arg: &str, schemes: &[SchemeArg]) -> Result<u8, Error> {
    if schemes.len() < 2 {
        return Err(Error::Comparison(
            "compare needs at least two schemes".into(),
        ));
    }
    let scenario = Scenario::resolve(arg)?;
    let runs: Vec<SchemeAccounts> = schemes
        .iter()
        .map(|s| solve_accounts(&scenario, Some((*s).into())))
        .collect::<Result<_, _>>()?;
    for pair in runs.windows(2) {
        let cmp = accounting::compare_schemes(&pair[0], &pair[1])?;
        println!(
            "== {} vs {} ==",
            pair[0].scheme.as_str(),
            pair[1].scheme.as_str()
        );
        print!("{}", report::render_comparison(&cmp));
        println!();
    }
    Ok(0)
}

fn calibrate(arg: &str) -> Result<u8, Error> {
    let scenario = Scenario::resolve(arg)?;
    let portfolio = scenario.portfolio()?;
    let model = scenario.emission_model()?;
    let e_bau: f64 = portfolio.iter().map(|p| p.bau_emissions()).sum();
    println!("bau emissions: {:.6e} t", e_bau);
    let a = scenario.certificates()?.ok_or_else(|| {
        Error::Scenario(
            "calibration needs a certificate supply (cap_fraction or certificates)".into(),
        )
    })?;
    println!("certificate supply: {:.6e} t", a);
    match &model {
        EmissionModel::Deterministic => {
            let tau = accounting::calibrate_tau(&portfolio, a)?;
            println!("tax rate: {tau:.4} EUR/t");
            let policy = scenario.policy_config(None)?;
            let access = market_access(&scenario, &policy);
            let penalty = match scenario.policy.penalty {
                Some(l) => l,
                None => accounting::default_penalty_det(&portfolio, a, &access)?,
            };
            println!("penalty rate: {penalty:.4} EUR/t");
            let r = clearing::equilibrium_spot(&portfolio, a, penalty, &access)?;
            println!("equilibrium spot: {:.4} EUR/t", r.spot);
        }
        EmissionModel::Random(dist) => {
            let policy = scenario.policy_config(None)?;
            let target = a * policy.target_ratio;
            println!("expected emissions target: {:.6e} t", target);
            let tau = clearing::calibrate_tau_random(&portfolio, target, dist.sigma2())?;
            println!("tax rate: {tau:.4} EUR/t");
            let access = market_access(&scenario, &policy);
            let penalty = match scenario.policy.penalty {
                Some(l) => l,
                None => clearing::calibrate_lambda(&portfolio, a, target, dist, &access)?,
            };
            println!("penalty rate: {penalty:.4} EUR/t");
            let problem = clearing::RandomClearingProblem {
                portfolio: &portfolio,
                certificates: a,
                emissions_target: target,
                penalty,
                dist,
                access: &access,
            };
            let r = clearing::equilibrium_spot_random(&problem)?;
            println!("equilibrium spot: {:.4} EUR/t", r.spot);
        }
    }
    Ok(0)
}

fn verify(arg: &str) -> Result<u8, Error> {
    let scenario = Scenario::resolve(arg)?;
    let portfolio = scenario.portfolio()?;
    let model = scenario.emission_model()?;
    let cfg = scenario.oracle_config();
    let policy = scenario.policy_config(None)?;
    let accounts = run_scheme(&portfolio, &policy, &model)?;
    let mut failures = 0usize;

    for f in &accounts.firms {
        let price = f.outcome.carbon_price;
        let pricing = match accounts.scheme {
            Scheme::Tax => Pricing::Tax { tau: price },
            Scheme::Bau => Pricing::Tax { tau: 0.0 },
            _ => Pricing::Market {
                price,
                penalty: accounts.penalty.unwrap(),
            },
        };
        let p = portfolio.iter().find(|p| p.id == f.id).unwrap();
        let o = oracle::oracle_firm_optimum(p, pricing, &model, &cfg)?;
        let (ok, detail) = match &model {
            EmissionModel::Deterministic => {
                let gap = (o.outcome.wealth - f.outcome.wealth).abs();
                (
                    gap <= cfg.tolerance * f.outcome.wealth.abs(),
                    format!("wealth gap {gap:.3e}"),
                )
            }
            EmissionModel::Random(_) => {
                let gap = (o.outcome.wealth - f.outcome.wealth).abs();
                (
                    gap <= 3.0 * o.wealth_std_error,
                    format!(
                        "wealth gap {gap:.3e} vs 3 s.e. {:.3e}",
                        3.0 * o.wealth_std_error
                    ),
                )
            }
        };
        println!(
            "firm {}: closed form vs grid oracle {} ({detail})",
            f.id,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failures += 1;
        }
    }

    if let (Some(spot), Some(penalty), Some(a)) =
        (accounts.spot, accounts.penalty, accounts.certificates)
    {
        let access = market_access(&scenario, &policy);
        for (i, p) in portfolio.iter().enumerate() {
            if access.mode(i) != AccessMode::Intermediated {
                continue;
            }
            let quoted = accounts.firms[i].outcome.carbon_price;
            let grid = oracle::oracle_intermediary_price(p, spot, penalty, &model, &cfg)?;
            let tol = (penalty - spot) * 16.0 / (cfg.grid_points as f64).powi(2) + 1e-9 * penalty;
            let ok = (grid - quoted).abs() <= tol.max(1e-3 * quoted);
            println!(
                "firm {}: intermediated price solver vs grid {} (|{:.4} - {:.4}|)",
                p.id,
                if ok { "ok" } else { "FAIL" },
                quoted,
                grid
            );
            if !ok {
                failures += 1;
            }
        }

        let result = clearing::ClearingResult {
            spot,
            effective_prices: accounts
                .firms
                .iter()
                .map(|f| f.outcome.carbon_price)
                .collect(),
            demands: accounts.firms.iter().map(|f| f.outcome.delta).collect(),
            expected_emissions: accounts.firms.iter().map(|f| f.outcome.emissions).collect(),
            residual: 0.0,
            corner_flags: vec![clearing::CornerFlag::Interior; portfolio.len()],
        };
        let residual =
            oracle::oracle_clearing_residual(&portfolio, &result, a, penalty, &access, &model)?;
        let ok = residual.abs() <= 1e-9 * a;
        println!(
            "clearing residual {} ({residual:.3e} t on supply {a:.3e} t)",
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failures += 1;
        }
    }

    if failures > 0 {
        eprintln!("verification failed: {failures} check(s) out of tolerance");
        return Ok(5);
    }
    println!("all checks passed");
    Ok(0)
}

fn full_report(arg: &str, format: FormatArg) -> Result<u8, Error> {
    let scenario = Scenario::resolve(arg)?;
    let bau = solve_accounts(&scenario, Some(Scheme::Bau))?;
    let tax = solve_accounts(&scenario, Some(Scheme::Tax))?;
    let market_scheme = match scenario.policy.scheme {
        Some(s) if s != Scheme::Tax && s != Scheme::Bau => s,
        _ => Scheme::Intermediated,
    };
    let market = solve_accounts(&scenario, Some(market_scheme))?;
    match format {
        FormatArg::Table => print!("{}", report::render_table(&[&bau, &tax, &market])?),
        FormatArg::Csv => {
            print!("{}", report::render_csv(&scenario.name, &bau, true));
            print!("{}", report::render_csv(&scenario.name, &tax, false));
            print!("{}", report::render_csv(&scenario.name, &market, false));
        }
        FormatArg::Records => {
            print!("{}", report::render_records(&scenario.name, &bau));
            print!("{}", report::render_records(&scenario.name, &tax));
            print!("{}", report::render_records(&scenario.name, &market));
        }
    }
    Ok(0)
}
