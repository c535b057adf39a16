//! Writer for the industry-standard LP text format (CPLEX dialect).

use std::fmt::Write as _;
use std::path::Path;

use super::{MilpError, MilpModel, Relation, VarKind};

/// Renders the model in LP format with deterministic variable ordering
/// (declaration order) and minimal sanitization of names.
pub fn write_lp_string(model: &MilpModel) -> String {
    let name = |j: usize| sanitize(&model.variables[j].name, j);
    let mut out = String::new();
    out.push_str("Minimize\n obj:");
    if model.objective.is_empty() && model.objective_constant == 0.0 {
        out.push_str(" 0");
    } else {
        let mut first = true;
        for &(v, c) in &model.objective {
            push_term(&mut out, c, &name(v), first);
            first = false;
        }
        if model.objective_constant != 0.0 {
            push_const(&mut out, model.objective_constant, first);
        }
    }
    out.push_str("\nSubject To\n");
    for (i, row) in model.constraints.iter().enumerate() {
        let _ = write!(out, " c{}:", i);
        if row.terms.is_empty() {
            out.push_str(" 0");
        } else {
            let mut first = true;
            for &(v, c) in &row.terms {
                push_term(&mut out, c, &name(v), first);
                first = false;
            }
        }
        let rel = match row.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " {} {}", rel, fmt_num(row.rhs));
    }
    out.push_str("Bounds\n");
    for (j, var) in model.variables.iter().enumerate() {
        match var.kind {
            VarKind::Binary => {}
            VarKind::Continuous { lower, upper } => {
                let n = name(j);
                match (lower.is_finite(), upper.is_finite()) {
                    (true, true) => {
                        let _ = writeln!(out, " {} <= {} <= {}", fmt_num(lower), n, fmt_num(upper));
                    }
                    (true, false) => {
                        let _ = writeln!(out, " {} >= {}", n, fmt_num(lower));
                    }
                    (false, true) => {
                        let _ = writeln!(out, " -infinity <= {} <= {}", n, fmt_num(upper));
                    }
                    (false, false) => {
                        let _ = writeln!(out, " {} free", n);
                    }
                }
            }
        }
    }
    let binaries: Vec<String> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| name(j))
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for b in binaries {
            let _ = writeln!(out, " {}", b);
        }
    }
    out.push_str("End\n");
    out
}

/// Writes the LP rendering to a file.
pub fn export_lp_file(model: &MilpModel, path: impl AsRef<Path>) -> Result<(), MilpError> {
    std::fs::write(path, write_lp_string(model))?;
    Ok(())
}

fn sanitize(raw: &str, idx: usize) -> String {
    let mut s: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]{}".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        s = format!("v{}_{}", idx, s);
    }
    s
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{}", x)
    }
}

fn push_term(out: &mut String, c: f64, name: &str, first: bool) {
    if c < 0.0 {
        let _ = write!(out, " - {} {}", fmt_num(-c), name);
    } else if first {
        let _ = write!(out, " {} {}", fmt_num(c), name);
    } else {
        let _ = write!(out, " + {} {}", fmt_num(c), name);
    }
}

fn push_const(out: &mut String, c: f64, first: bool) {
    if c < 0.0 {
        let _ = write!(out, " - {}", fmt_num(-c));
    } else if first {
        let _ = write!(out, " {}", fmt_num(c));
    } else {
        let _ = write!(out, " + {}", fmt_num(c));
    }
}
