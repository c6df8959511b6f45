//! MATPOWER `.m` case file parsing and serialization.
//!
//! Supports the subset used by the common transmission test archives:
//! `baseMVA`, `bus`, `gen`, `branch` and polynomial `gencost` (up to
//! quadratic). Piecewise-linear cost models are rejected. Out-of-service
//! elements are dropped during validation. Quantities keep their MATPOWER
//! native units (MW, MVAr, degrees); per-unit conversion happens in
//! `netmodel`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("missing section: {0}")]
    MissingSection(&'static str),
    #[error("malformed table `{table}` row {row}: {reason}")]
    MalformedTable {
        table: &'static str,
        row: usize,
        reason: String,
    },
    #[error("duplicate bus id {0}")]
    DuplicateBusId(i64),
    #[error("branch {0} references unknown bus {1}")]
    UnknownBranchBus(usize, i64),
    #[error("generator {0} references unknown bus {1}")]
    UnknownGenBus(usize, i64),
    #[error("expected exactly one in-service reference bus, found {0}")]
    ReferenceBusCount(usize),
    #[error("negative limit in {table} row {row}")]
    NegativeLimit { table: &'static str, row: usize },
    #[error("piecewise-linear generator costs are not supported (gencost row {0})")]
    PiecewiseCost(usize),
    #[error("gencost row {0}: polynomial degree above quadratic is not supported")]
    CostDegree(usize),
    #[error("gencost rows ({0}) do not match generator rows ({1})")]
    CostCount(usize, usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawBus {
    pub id: i64,
    pub bus_type: u8,
    pub pd_mw: f64,
    pub qd_mvar: f64,
    pub gs_mw: f64,
    pub bs_mvar: f64,
    pub vm_pu: f64,
    pub va_deg: f64,
    pub base_kv: f64,
    pub vmax_pu: f64,
    pub vmin_pu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawGen {
    pub bus: i64,
    pub pg_mw: f64,
    pub qg_mvar: f64,
    pub qmax_mvar: f64,
    pub qmin_mvar: f64,
    pub vg_pu: f64,
    pub status: bool,
    pub pmax_mw: f64,
    pub pmin_mw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawBranch {
    pub from: i64,
    pub to: i64,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub rate_a_mva: f64,
    pub tap: f64,
    pub shift_deg: f64,
    pub status: bool,
}

/// Polynomial cost c2*p^2 + c1*p + c0 with p in MW.
#[derive(Debug, Clone, PartialEq)]
pub struct GenCostRow {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<RawBus>,
    pub gens: Vec<RawGen>,
    pub branches: Vec<RawBranch>,
    pub gencost: Vec<GenCostRow>,
}

impl RawCase {
    pub fn bus_index(&self, id: i64) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(p) => &line[..p],
        None => line,
    }
}

fn numbers(line: &str, table: &'static str, row: usize) -> Result<Vec<f64>, CaseError> {
    line.split(|c: char| c.is_whitespace() || c == ',' || c == ';' || c == ']')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|_| CaseError::MalformedTable {
                table,
                row,
                reason: format!("token `{t}` is not a number"),
            })
        })
        .collect()
}

/// Parses a MATPOWER case body from text.
pub fn parse_case(text: &str) -> Result<RawCase, CaseError> {
    let mut name = String::from("case");
    let mut base_mva: Option<f64> = None;
    let mut bus_rows: Vec<Vec<f64>> = Vec::new();
    let mut gen_rows: Vec<Vec<f64>> = Vec::new();
    let mut branch_rows: Vec<Vec<f64>> = Vec::new();
    let mut cost_rows: Vec<Vec<f64>> = Vec::new();

    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Bus,
        Gen,
        Branch,
        GenCost,
        Skip,
    }
    let mut section = Section::None;

    for raw in text.lines() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                name = rest[eq + 1..].trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        if line.contains("mpc.baseMVA") {
            if let Some(eq) = line.find('=') {
                let v = line[eq + 1..].trim().trim_end_matches(';').trim();
                base_mva = v.parse().ok();
            }
            continue;
        }
        let mut data = line;
        if line.contains('=') && line.contains("mpc.") {
            section = if line.contains("mpc.bus_name") {
                Section::Skip
            } else if line.contains("mpc.bus") {
                Section::Bus
            } else if line.contains("mpc.gencost") {
                Section::GenCost
            } else if line.contains("mpc.gen") {
                Section::Gen
            } else if line.contains("mpc.branch") {
                Section::Branch
            } else {
                Section::Skip
            };
            // data may start on the same line after `[`
            match line.find('[') {
                Some(p) => data = line[p + 1..].trim(),
                None => continue,
            }
        }
        let closes = data.contains(']');
        if closes {
            data = data[..data.find(']').unwrap()].trim();
        }
        // one or more `;`-terminated rows may share a line
        for chunk in data.split(';') {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            match section {
                Section::Bus => bus_rows.push(numbers(chunk, "bus", bus_rows.len())?),
                Section::Gen => gen_rows.push(numbers(chunk, "gen", gen_rows.len())?),
                Section::Branch => branch_rows.push(numbers(chunk, "branch", branch_rows.len())?),
                Section::GenCost => cost_rows.push(numbers(chunk, "gencost", cost_rows.len())?),
                Section::None | Section::Skip => {}
            }
        }
        if closes {
            section = Section::None;
        }
    }

    let base_mva = base_mva.ok_or(CaseError::MissingSection("baseMVA"))?;
    if bus_rows.is_empty() {
        return Err(CaseError::MissingSection("bus"));
    }
    if gen_rows.is_empty() {
        return Err(CaseError::MissingSection("gen"));
    }

    let mut buses = Vec::with_capacity(bus_rows.len());
    for (i, r) in bus_rows.iter().enumerate() {
        if r.len() < 13 {
            return Err(CaseError::MalformedTable {
                table: "bus",
                row: i,
                reason: format!("expected >= 13 columns, got {}", r.len()),
            });
        }
        buses.push(RawBus {
            id: r[0] as i64,
            bus_type: r[1] as u8,
            pd_mw: r[2],
            qd_mvar: r[3],
            gs_mw: r[4],
            bs_mvar: r[5],
            vm_pu: r[7],
            va_deg: r[8],
            base_kv: r[9],
            vmax_pu: r[11],
            vmin_pu: r[12],
        });
    }
    let mut gens = Vec::with_capacity(gen_rows.len());
    for (i, r) in gen_rows.iter().enumerate() {
        if r.len() < 10 {
            return Err(CaseError::MalformedTable {
                table: "gen",
                row: i,
                reason: format!("expected >= 10 columns, got {}", r.len()),
            });
        }
        gens.push(RawGen {
            bus: r[0] as i64,
            pg_mw: r[1],
            qg_mvar: r[2],
            qmax_mvar: r[3],
            qmin_mvar: r[4],
            vg_pu: r[5],
            status: r[7] > 0.5,
            pmax_mw: r[8],
            pmin_mw: r[9],
        });
    }
    let mut branches = Vec::with_capacity(branch_rows.len());
    for (i, r) in branch_rows.iter().enumerate() {
        if r.len() < 11 {
            return Err(CaseError::MalformedTable {
                table: "branch",
                row: i,
                reason: format!("expected >= 11 columns, got {}", r.len()),
            });
        }
        branches.push(RawBranch {
            from: r[0] as i64,
            to: r[1] as i64,
            r: r[2],
            x: r[3],
            b: r[4],
            rate_a_mva: r[5],
            tap: r[8],
            shift_deg: r[9],
            status: r[10] > 0.5,
        });
    }
    let mut gencost = Vec::with_capacity(cost_rows.len());
    for (i, r) in cost_rows.iter().enumerate() {
        if r.len() < 4 {
            return Err(CaseError::MalformedTable {
                table: "gencost",
                row: i,
                reason: format!("expected >= 4 columns, got {}", r.len()),
            });
        }
        let model = r[0] as i64;
        if model == 1 {
            return Err(CaseError::PiecewiseCost(i));
        }
        if model != 2 {
            return Err(CaseError::MalformedTable {
                table: "gencost",
                row: i,
                reason: format!("unknown cost model {model}"),
            });
        }
        let n = r[3] as usize;
        let coeffs = &r[4..];
        if coeffs.len() < n {
            return Err(CaseError::MalformedTable {
                table: "gencost",
                row: i,
                reason: format!("declared {n} coefficients, found {}", coeffs.len()),
            });
        }
        let (c2, c1, c0) = match n {
            0 => (0.0, 0.0, 0.0),
            1 => (0.0, 0.0, coeffs[0]),
            2 => (0.0, coeffs[0], coeffs[1]),
            3 => (coeffs[0], coeffs[1], coeffs[2]),
            _ => return Err(CaseError::CostDegree(i)),
        };
        gencost.push(GenCostRow { c2, c1, c0 });
    }

    let case = RawCase {
        name,
        base_mva,
        buses,
        gens,
        branches,
        gencost,
    };
    validate(case)
}

/// Parses a case from a file path.
pub fn parse_case_file(path: impl AsRef<Path>) -> Result<RawCase, CaseError> {
    let text = std::fs::read_to_string(path)?;
    parse_case(&text)
}

/// Validation: referential integrity, single reference bus, nonnegative
/// limits; drops out-of-service elements.
fn validate(mut case: RawCase) -> Result<RawCase, CaseError> {
    let mut seen = HashSet::new();
    for b in &case.buses {
        if !seen.insert(b.id) {
            return Err(CaseError::DuplicateBusId(b.id));
        }
    }
    for (i, b) in case.buses.iter().enumerate() {
        if b.vmax_pu < 0.0 || b.vmin_pu < 0.0 {
            return Err(CaseError::NegativeLimit {
                table: "bus",
                row: i,
            });
        }
    }
    // drop out-of-service elements
    case.branches.retain(|br| br.status);
    let keep: Vec<bool> = case.gens.iter().map(|g| g.status).collect();
    if !case.gencost.is_empty() {
        if case.gencost.len() != keep.len() {
            return Err(CaseError::CostCount(case.gencost.len(), keep.len()));
        }
        let mut it = keep.iter();
        case.gencost.retain(|_| *it.next().unwrap());
    }
    case.gens.retain(|g| g.status);

    let ids: HashSet<i64> = case.buses.iter().map(|b| b.id).collect();
    for (i, br) in case.branches.iter().enumerate() {
        if br.rate_a_mva < 0.0 {
            return Err(CaseError::NegativeLimit {
                table: "branch",
                row: i,
            });
        }
        if !ids.contains(&br.from) {
            return Err(CaseError::UnknownBranchBus(i, br.from));
        }
        if !ids.contains(&br.to) {
            return Err(CaseError::UnknownBranchBus(i, br.to));
        }
    }
    for (i, g) in case.gens.iter().enumerate() {
        if !ids.contains(&g.bus) {
            return Err(CaseError::UnknownGenBus(i, g.bus));
        }
    }
    let nref = case.buses.iter().filter(|b| b.bus_type == 3).count();
    if nref != 1 {
        return Err(CaseError::ReferenceBusCount(nref));
    }
    Ok(case)
}

/// Serializes a case back to MATPOWER text. Round-trips through
/// [`parse_case`] field-for-field.
pub fn write_case(case: &RawCase) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {}", case.name);
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", fmt_f(case.base_mva));
    let _ = writeln!(s, "mpc.bus = [");
    for b in &case.buses {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t{}\t{};",
            b.id,
            b.bus_type,
            fmt_f(b.pd_mw),
            fmt_f(b.qd_mvar),
            fmt_f(b.gs_mw),
            fmt_f(b.bs_mvar),
            fmt_f(b.vm_pu),
            fmt_f(b.va_deg),
            fmt_f(b.base_kv),
            fmt_f(b.vmax_pu),
            fmt_f(b.vmin_pu)
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &case.gens {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;",
            g.bus,
            fmt_f(g.pg_mw),
            fmt_f(g.qg_mvar),
            fmt_f(g.qmax_mvar),
            fmt_f(g.qmin_mvar),
            fmt_f(g.vg_pu),
            fmt_f(100.0),
            u8::from(g.status),
            fmt_f(g.pmax_mw),
            fmt_f(g.pmin_mw)
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "mpc.branch = [");
    for br in &case.branches {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t{}\t{}\t{}\t-360\t360;",
            br.from,
            br.to,
            fmt_f(br.r),
            fmt_f(br.x),
            fmt_f(br.b),
            fmt_f(br.rate_a_mva),
            fmt_f(br.tap),
            fmt_f(br.shift_deg),
            u8::from(br.status)
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "mpc.gencost = [");
    for c in &case.gencost {
        let _ = writeln!(
            s,
            "\t2\t0\t0\t3\t{}\t{}\t{};",
            fmt_f(c.c2),
            fmt_f(c.c1),
            fmt_f(c.c0)
        );
    }
    let _ = writeln!(s, "];");
    s
}

fn fmt_f(v: f64) -> String {
    // shortest representation that round-trips
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "
function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t50\t10\t0\t0\t1\t1\t0\t138\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t60\t0\t30\t-30\t1\t100\t1\t100\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;
];
mpc.branch = [
];
mpc.gencost = [
\t2\t0\t0\t3\t0.1\t20\t0;
];
";

    #[test]
    fn parses_single_bus_case_with_empty_branch_table() {
        let c = parse_case(TINY).unwrap();
        assert_eq!(c.buses.len(), 1);
        assert_eq!(c.gens.len(), 1);
        assert!(c.branches.is_empty());
        assert_eq!(c.base_mva, 100.0);
        assert_eq!(c.gencost[0].c2, 0.1);
    }

    #[test]
    fn rejects_branch_to_missing_bus() {
        let bad = TINY.replace("mpc.branch = [\n]", "mpc.branch = [\n\t1\t2\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n]");
        match parse_case(&bad) {
            Err(CaseError::UnknownBranchBus(0, 2)) => {}
            other => panic!("expected UnknownBranchBus, got {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_bus_ids() {
        let bad = TINY.replace(
            "\t1\t3\t50\t10\t0\t0\t1\t1\t0\t138\t1\t1.1\t0.9;",
            "\t1\t3\t50\t10\t0\t0\t1\t1\t0\t138\t1\t1.1\t0.9;\n\t1\t1\t0\t0\t0\t0\t1\t1\t0\t138\t1\t1.1\t0.9;",
        );
        assert!(matches!(parse_case(&bad), Err(CaseError::DuplicateBusId(1))));
    }

    #[test]
    fn rejects_piecewise_costs() {
        let bad = TINY.replace("\t2\t0\t0\t3\t0.1\t20\t0;", "\t1\t0\t0\t2\t0\t0\t100\t2000;");
        assert!(matches!(parse_case(&bad), Err(CaseError::PiecewiseCost(0))));
    }

    #[test]
    fn rejects_missing_reference_bus() {
        let bad = TINY.replace("\t1\t3\t50", "\t1\t2\t50");
        assert!(matches!(parse_case(&bad), Err(CaseError::ReferenceBusCount(0))));
    }

    #[test]
    fn drops_out_of_service_elements() {
        let txt = TINY.replace(
            "mpc.gen = [\n\t1\t60\t0\t30\t-30\t1\t100\t1\t100\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;",
            "mpc.gen = [\n\t1\t60\t0\t30\t-30\t1\t100\t1\t100\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;\n\t1\t60\t0\t30\t-30\t1\t100\t0\t100\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;",
        );
        let txt = txt.replace(
            "mpc.gencost = [\n\t2\t0\t0\t3\t0.1\t20\t0;",
            "mpc.gencost = [\n\t2\t0\t0\t3\t0.1\t20\t0;\n\t2\t0\t0\t3\t0.2\t25\t0;",
        );
        let c = parse_case(&txt).unwrap();
        assert_eq!(c.gens.len(), 1);
        assert_eq!(c.gencost.len(), 1);
        assert_eq!(c.gencost[0].c2, 0.1);
    }

    #[test]
    fn roundtrip_preserves_fields() {
        let c = parse_case(TINY).unwrap();
        let c2 = parse_case(&write_case(&c)).unwrap();
        assert_eq!(c, c2);
    }
}
