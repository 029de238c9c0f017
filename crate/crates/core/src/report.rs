//! Report rendering: grouped human-readable tables, machine-readable CSV,
//! and structured JSON records with GDP and emission shares.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::accounting::{SchemeAccounts, SchemeComparison};
use crate::error::{Error, Result};

/// Banker's rounding to the nearest integer.
pub fn round_half_even(x: f64) -> f64 {
    let floor = x.floor();
    let frac = x - floor;
    if (frac - 0.5).abs() < f64::EPSILON {
        if (floor as i64) % 2 == 0 {
            floor
        } else {
            floor + 1.0
        }
    } else {
        x.round()
    }
}

fn fmt_billions(x: f64) -> String {
    format!("{}", round_half_even(x / 1e9))
}

fn fmt_megatons(x: f64) -> String {
    format!("{}", round_half_even(x / 1e6))
}

/// Renders one or more scheme runs side by side, grouped by firm label, with
/// regulator, technology-provider, and intermediary rows and a grand total.
/// Wealth in billions of euro, emissions in millions of tons, both rounded
/// half-even.
pub fn render_table(columns: &[&SchemeAccounts]) -> Result<String> {
    if columns.is_empty() {
        return Err(Error::Comparison("no scheme runs to render".into()));
    }
    let first = columns[0];
    for c in columns {
        if c.firms.len() != first.firms.len()
            || c.firms.iter().zip(&first.firms).any(|(a, b)| a.id != b.id)
        {
            return Err(Error::Comparison(
                "scheme runs cover different portfolios".into(),
            ));
        }
    }

    // preserve first-appearance order of group labels
    let mut groups: Vec<&str> = Vec::new();
    for f in &first.firms {
        if !groups.contains(&f.label.as_str()) {
            groups.push(&f.label);
        }
    }

    let headers: Vec<&str> = columns.iter().map(|c| c.scheme.as_str()).collect();
    let mut rows: Vec<(String, Vec<String>, Vec<String>)> = Vec::new();

    for g in &groups {
        let wealth: Vec<String> = columns
            .iter()
            .map(|c| {
                fmt_billions(
                    c.firms
                        .iter()
                        .filter(|f| f.label == *g)
                        .map(|f| f.outcome.wealth)
                        .sum(),
                )
            })
            .collect();
        let emissions: Vec<String> = columns
            .iter()
            .map(|c| {
                fmt_megatons(
                    c.firms
                        .iter()
                        .filter(|f| f.label == *g)
                        .map(|f| f.outcome.emissions)
                        .sum(),
                )
            })
            .collect();
        rows.push((g.to_string(), wealth, emissions));
        for (i, f) in first.firms.iter().enumerate() {
            if f.label != *g {
                continue;
            }
            let wealth = columns
                .iter()
                .map(|c| fmt_billions(c.firms[i].outcome.wealth))
                .collect();
            let emissions = columns
                .iter()
                .map(|c| fmt_megatons(c.firms[i].outcome.emissions))
                .collect();
            rows.push((format!("  {}", f.id), wealth, emissions));
        }
    }

    let dash = |_: &&SchemeAccounts| "-".to_string();
    rows.push((
        "Regulator".into(),
        columns
            .iter()
            .map(|c| {
                if c.regulator_wealth == 0.0 {
                    "-".into()
                } else {
                    fmt_billions(c.regulator_wealth)
                }
            })
            .collect(),
        columns.iter().map(dash).collect(),
    ));
    rows.push((
        "Tech providers".into(),
        columns
            .iter()
            .map(|c| {
                if c.tech_wealth == 0.0 {
                    "-".into()
                } else {
                    fmt_billions(c.tech_wealth)
                }
            })
            .collect(),
        columns.iter().map(dash).collect(),
    ));
    rows.push((
        "Financial intermediaries".into(),
        columns
            .iter()
            .map(|c| {
                let w = c.intermediaries_wealth();
                if w == 0.0 {
                    "-".into()
                } else {
                    fmt_billions(w)
                }
            })
            .collect(),
        columns.iter().map(dash).collect(),
    ));
    rows.push((
        "Total".into(),
        columns
            .iter()
            .map(|c| fmt_billions(c.gdp_with_tech()))
            .collect(),
        columns
            .iter()
            .map(|c| fmt_megatons(c.total_emissions()))
            .collect(),
    ));

    let label_w = rows.iter().map(|r| r.0.len()).max().unwrap().max(5);
    let col_w = 8usize.max(headers.iter().map(|h| h.len()).max().unwrap() + 1);
    let mut out = String::new();
    let _ = write!(out, "{:label_w$}", "Group");
    for h in &headers {
        let _ = write!(out, " {:>col_w$}", h);
    }
    let _ = write!(out, "  |");
    for h in &headers {
        let _ = write!(out, " {:>col_w$}", h);
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:label_w$} {:>w$}  |{:>w2$}",
        "",
        "GDP (billion EUR)",
        "emissions (million tons)",
        w = (col_w + 1) * headers.len() - 1,
        w2 = (col_w + 1) * headers.len() + 1,
    );
    for (label, wealth, emissions) in &rows {
        let _ = write!(out, "{:label_w$}", label);
        for v in wealth {
            let _ = write!(out, " {:>col_w$}", v);
        }
        let _ = write!(out, "  |");
        for v in emissions {
            let _ = write!(out, " {:>col_w$}", v);
        }
        let _ = writeln!(out);
    }
    Ok(out)
}

/// Fixed CSV header.
pub const CSV_HEADER: &str =
    "scenario,scheme,entity,wealth_eur,emissions_tons,carbon_price_eur_per_ton,demand_tons";

fn csv_num(x: f64) -> String {
    // round-trippable f64 formatting
    format!("{x:?}")
}

/// Emits one scheme run as CSV: one row per firm, then regulator, tech
/// providers, and the intermediary aggregate. Values are unrounded.
pub fn render_csv(scenario: &str, accounts: &SchemeAccounts, with_header: bool) -> String {
    let mut out = String::new();
    if with_header {
        out.push_str(CSV_HEADER);
        out.push('\n');
    }
    let scheme = accounts.scheme.as_str();
    for f in &accounts.firms {
        let _ = writeln!(
            out,
            "{scenario},{scheme},{},{},{},{},{}",
            f.id,
            csv_num(f.outcome.wealth),
            csv_num(f.outcome.emissions),
            csv_num(f.outcome.carbon_price),
            csv_num(f.outcome.delta),
        );
    }
    let _ = writeln!(
        out,
        "{scenario},{scheme},regulator,{},,,",
        csv_num(accounts.regulator_wealth)
    );
    let _ = writeln!(
        out,
        "{scenario},{scheme},tech_providers,{},,,",
        csv_num(accounts.tech_wealth)
    );
    let _ = writeln!(
        out,
        "{scenario},{scheme},financial_intermediaries,{},,,",
        csv_num(accounts.intermediaries_wealth())
    );
    out
}

/// One parsed CSV row: wealth, emissions, carbon price, demand, with `None`
/// for blank fields.
pub type CsvRow = (Option<f64>, Option<f64>, Option<f64>, Option<f64>);

/// Parses CSV produced by [`render_csv`] into `entity -> (wealth, emissions,
/// carbon_price, demand)`.
pub fn parse_csv(src: &str) -> Result<BTreeMap<String, CsvRow>> {
    let mut lines = src.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Scenario(format!("unexpected CSV header: {other:?}"))),
    }
    let mut map = BTreeMap::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::Scenario(format!("bad CSV row: {line}")));
        }
        let parse = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| Error::Scenario(format!("bad number `{s}`: {e}")))
            }
        };
        map.insert(
            cols[2].to_string(),
            (
                parse(cols[3])?,
                parse(cols[4])?,
                parse(cols[5])?,
                parse(cols[6])?,
            ),
        );
    }
    Ok(map)
}

/// Emits one JSON record per entity (one line each) with wealth, emissions,
/// and their shares of the scheme totals, for plotting share charts.
pub fn render_records(scenario: &str, accounts: &SchemeAccounts) -> String {
    let gdp = accounts.gdp_with_tech();
    let total_emissions = accounts.total_emissions();
    let mut out = String::new();
    let mut push = |entity: &str, label: &str, wealth: f64, emissions: Option<f64>| {
        let record = serde_json::json!({
            "scenario": scenario,
            "scheme": accounts.scheme.as_str(),
            "entity": entity,
            "label": label,
            "wealth_eur": wealth,
            "gdp_share": wealth / gdp,
            "emissions_tons": emissions,
            "emission_share": emissions.map(|e| e / total_emissions),
        });
        let _ = writeln!(out, "{record}");
    };
    for f in &accounts.firms {
        push(&f.id, &f.label, f.outcome.wealth, Some(f.outcome.emissions));
    }
    push("regulator", "", accounts.regulator_wealth, None);
    push("tech_providers", "", accounts.tech_wealth, None);
    push(
        "financial_intermediaries",
        "",
        accounts.intermediaries_wealth(),
        None,
    );
    out
}

/// Renders a firm-by-firm comparison of two scheme runs.
pub fn render_comparison(cmp: &SchemeComparison) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:8} {:>16} {:>16} {:>16}  verdict",
        "firm",
        format!("{} (bEUR)", cmp.left.as_str()),
        format!("{} (bEUR)", cmp.right.as_str()),
        "difference"
    );
    for f in &cmp.firms {
        let _ = writeln!(
            out,
            "{:8} {:>16.2} {:>16.2} {:>16.2}  {:?}",
            f.id,
            f.wealth_left / 1e9,
            f.wealth_right / 1e9,
            f.diff / 1e9,
            f.verdict
        );
    }
    let _ = writeln!(
        out,
        "companies:        {:>+10.2} bEUR",
        cmp.d_companies / 1e9
    );
    let _ = writeln!(
        out,
        "intermediaries:   {:>+10.2} bEUR",
        cmp.d_intermediaries / 1e9
    );
    let _ = writeln!(
        out,
        "regulator:        {:>+10.2} bEUR",
        cmp.d_regulator / 1e9
    );
    let _ = writeln!(out, "tech providers:   {:>+10.2} bEUR", cmp.d_tech / 1e9);
    let _ = writeln!(out, "GDP:              {:>+10.2} bEUR", cmp.d_gdp / 1e9);
    out
}
