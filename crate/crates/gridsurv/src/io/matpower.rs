//! Reader for MATPOWER case files (`mpc.bus`, `mpc.gen`, `mpc.branch`,
//! `mpc.gencost`), converting them to a DC planning system with every
//! element marked existing.

use std::collections::BTreeMap;

use gridsurv_core::model::{validate_system, Branch, Bus, Generator, PowerSystem, DEFAULT_SIGMA};

#[derive(Debug, thiserror::Error)]
pub enum MatpowerError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing matrix mpc.{0}")]
    Missing(&'static str),
    #[error("mpc.{matrix} row {row}: expected at least {need} columns, found {found}")]
    ShortRow {
        matrix: &'static str,
        row: usize,
        need: usize,
        found: usize,
    },
    #[error("branch {0} has zero reactance")]
    ZeroReactance(usize),
    #[error("converted system is invalid: {0}")]
    Invalid(String),
}

// column indices, zero-based
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const GEN_BUS: usize = 0;
const GEN_STATUS: usize = 7;
const PMAX: usize = 8;
const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_X: usize = 3;
const RATE_A: usize = 5;
const BR_STATUS: usize = 10;
const ISOLATED: f64 = 4.0;

#[derive(Debug, Default)]
struct RawCase {
    scalars: BTreeMap<String, f64>,
    matrices: BTreeMap<String, Vec<Vec<f64>>>,
}

fn parse_number(tok: &str, line: usize) -> Result<f64, MatpowerError> {
    match tok {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| MatpowerError::Syntax {
            line,
            msg: format!("not a number: {tok:?}"),
        }),
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\'' => quoted = !quoted,
            '%' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn scan(text: &str) -> Result<RawCase, MatpowerError> {
    let mut case = RawCase::default();
    // (name, rows, current row)
    let mut open: Option<(String, Vec<Vec<f64>>, Vec<f64>)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut line = strip_comment(raw).trim();
        if open.is_none() {
            let Some(rest) = line.strip_prefix("mpc.") else { continue };
            let Some((name, value)) = rest.split_once('=') else { continue };
            let name = name.trim().to_string();
            let value = value.trim();
            if let Some(body) = value.strip_prefix('[') {
                open = Some((name, Vec::new(), Vec::new()));
                line = body;
            } else {
                let value = value.trim_end_matches(';').trim();
                if !value.starts_with('\'') {
                    case.scalars.insert(name, parse_number(value, line_no)?);
                }
                continue;
            }
        }
        let (_, rows, row) = open.as_mut().expect("a matrix is open");
        let (body, closed) = match line.split_once(']') {
            Some((body, _)) => (body, true),
            None => (line, false),
        };
        for chunk in body.split_inclusive(';') {
            let ends_row = chunk.ends_with(';');
            for tok in chunk.trim_end_matches(';').split(|c: char| c.is_whitespace() || c == ',') {
                if !tok.is_empty() {
                    row.push(parse_number(tok, line_no)?);
                }
            }
            if ends_row && !row.is_empty() {
                rows.push(std::mem::take(row));
            }
        }
        // a newline also ends a row
        if !row.is_empty() {
            rows.push(std::mem::take(row));
        }
        if closed {
            let (name, rows, _) = open.take().expect("a matrix is open");
            case.matrices.insert(name, rows);
        }
    }
    if let Some((name, _, _)) = open {
        return Err(MatpowerError::Syntax {
            line: text.lines().count(),
            msg: format!("mpc.{name} is not closed"),
        });
    }
    Ok(case)
}

fn matrix<'a>(case: &'a RawCase, name: &'static str, need: usize) -> Result<&'a [Vec<f64>], MatpowerError> {
    let rows = case.matrices.get(name).ok_or(MatpowerError::Missing(name))?;
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() < need) {
        return Err(MatpowerError::ShortRow {
            matrix: name,
            row: row + 1,
            need,
            found: r.len(),
        });
    }
    Ok(rows)
}

/// Linear cost coefficient of a `gencost` row: the `c1` term of a
/// polynomial, or the average slope of a piecewise-linear curve.
fn marginal_cost(row: &[f64]) -> f64 {
    let n = row.get(3).copied().unwrap_or(0.0) as usize;
    let coeffs = row.get(4..).unwrap_or(&[]);
    match row.first().copied() {
        Some(m) if m == 1.0 && n >= 2 && coeffs.len() >= 2 * n => {
            let (p0, c0) = (coeffs[0], coeffs[1]);
            let (p1, c1) = (coeffs[2 * n - 2], coeffs[2 * n - 1]);
            if p1 > p0 {
                (c1 - c0) / (p1 - p0)
            } else {
                0.0
            }
        }
        Some(m) if m == 2.0 && n >= 2 && coeffs.len() >= n => coeffs[n - 2],
        _ => 0.0,
    }
}

/// Converts MATPOWER case text to a system. Branch susceptance is
/// `baseMVA / x` in MW per radian; a zero `rateA` (unlimited) becomes the
/// total generating capacity. Out-of-service elements and isolated buses
/// are dropped. Generators are named `g1..`, branches `e1..` in file order.
pub fn parse_matpower(text: &str) -> Result<PowerSystem, MatpowerError> {
    let case = scan(text)?;
    let base = case.scalars.get("baseMVA").copied().unwrap_or(100.0);
    let bus_rows = matrix(&case, "bus", 3)?;
    let gen_rows = matrix(&case, "gen", 9)?;
    let branch_rows = matrix(&case, "branch", 11)?;
    let costs = case.matrices.get("gencost");

    let buses: Vec<Bus> = bus_rows
        .iter()
        .filter(|r| r[BUS_TYPE] != ISOLATED)
        .map(|r| Bus {
            id: r[BUS_I] as u32,
            demand: r[PD],
        })
        .collect();

    let mut generators = Vec::new();
    for (i, r) in gen_rows.iter().enumerate() {
        if r[GEN_STATUS] <= 0.0 {
            continue;
        }
        let cost = costs.and_then(|c| c.get(i)).map_or(0.0, |row| marginal_cost(row));
        generators.push(Generator {
            id: format!("g{}", generators.len() + 1),
            bus: r[GEN_BUS] as u32,
            pmax: r[PMAX],
            invest_cost: 0.0,
            marginal_cost: cost,
            existing: true,
        });
    }
    let unlimited: f64 = generators.iter().map(|g| g.pmax).sum();

    let mut branches = Vec::new();
    for (i, r) in branch_rows.iter().enumerate() {
        if r[BR_STATUS] <= 0.0 {
            continue;
        }
        if r[BR_X] == 0.0 {
            return Err(MatpowerError::ZeroReactance(i + 1));
        }
        let rate = if r[RATE_A] > 0.0 { r[RATE_A] } else { unlimited };
        branches.push(Branch {
            id: format!("e{}", branches.len() + 1),
            from_bus: r[F_BUS] as u32,
            to_bus: r[T_BUS] as u32,
            susceptance: base / r[BR_X].abs(),
            capacity: rate,
            invest_cost: 0.0,
            existing: true,
        });
    }

    let sys = PowerSystem {
        buses,
        generators,
        branches,
        sigma: DEFAULT_SIGMA,
    };
    if let Some(v) = validate_system(&sys).into_iter().next() {
        return Err(MatpowerError::Invalid(v.to_string()));
    }
    Ok(sys)
}
