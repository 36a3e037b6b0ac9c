//! Fixed-field MPS writer and a tolerant reader.
//!
//! Rows are named `R0000000`, columns `C0000000`, the objective `COST`. Rows
//! with two finite distinct bounds are written as `L` rows with a `RANGES`
//! entry. Integer columns are wrapped in `INTORG`/`INTEND` markers and always
//! get explicit bounds.

use std::fmt::Write as _;

use crate::{CscMatrix, LinearProgram, Sense, SolverError};

fn row_name(i: usize) -> String {
    format!("R{i:07}")
}

fn col_name(j: usize) -> String {
    format!("C{j:07}")
}

/// Formats `v` in at most 12 characters, keeping full precision when the
/// shortest round-trip representation fits.
pub fn format_number(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 12 {
        return s;
    }
    for prec in (0..=8).rev() {
        let e = format!("{v:.prec$e}");
        if e.len() <= 12 {
            return e;
        }
    }
    format!("{v:.0e}")
}

fn line(out: &mut String, f1: &str, f2: &str, f3: &str, f4: &str, f5: &str, f6: &str) {
    let mut s = format!(" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}");
    if !f5.is_empty() {
        let _ = write!(s, "   {f5:<8}  {f6:>12}");
    }
    out.push_str(s.trim_end());
    out.push('\n');
}

pub fn write_mps(problem: &LinearProgram, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME          {name}");
    if problem.sense == Sense::Maximize {
        out.push_str("OBJSENSE\n    MAX\n");
    }
    out.push_str("ROWS\n N  COST\n");
    let m = problem.num_rows();
    let mut kind = Vec::with_capacity(m);
    for i in 0..m {
        let (l, u) = (problem.row_lower[i], problem.row_upper[i]);
        let k = if l == u {
            "E"
        } else if l.is_finite() && u.is_finite() {
            "L"
        } else if u.is_finite() {
            "L"
        } else if l.is_finite() {
            "G"
        } else {
            "N"
        };
        kind.push(k);
        let _ = writeln!(out, " {k:<2} {}", row_name(i));
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    for j in 0..problem.num_vars() {
        let is_int = problem.integrality[j];
        if is_int != in_int {
            let tag = if is_int { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    MARKER                 'MARKER'                 {tag}");
            in_int = is_int;
        }
        let cname = col_name(j);
        let mut entries: Vec<(String, f64)> = Vec::new();
        if problem.costs[j] != 0.0 {
            entries.push(("COST".into(), problem.costs[j]));
        }
        entries.extend(problem.columns.col(j).map(|(r, v)| (row_name(r), v)));
        if entries.is_empty() {
            entries.push(("COST".into(), 0.0));
        }
        for pair in entries.chunks(2) {
            let (r1, v1) = &pair[0];
            let (f5, f6) = match pair.get(1) {
                Some((r2, v2)) => (r2.clone(), format_number(*v2)),
                None => (String::new(), String::new()),
            };
            line(&mut out, "", &cname, r1, &format_number(*v1), &f5, &f6);
        }
    }
    if in_int {
        out.push_str("    MARKER                 'MARKER'                 'INTEND'\n");
    }
    out.push_str("RHS\n");
    if problem.objective_offset != 0.0 {
        line(&mut out, "", "RHS", "COST", &format_number(-problem.objective_offset), "", "");
    }
    for i in 0..m {
        let rhs = match kind[i] {
            "E" | "L" => problem.row_upper[i],
            "G" => problem.row_lower[i],
            _ => 0.0,
        };
        if rhs != 0.0 {
            line(&mut out, "", "RHS", &row_name(i), &format_number(rhs), "", "");
        }
    }
    let ranged: Vec<usize> = (0..m)
        .filter(|&i| kind[i] == "L" && problem.row_lower[i].is_finite())
        .collect();
    if !ranged.is_empty() {
        out.push_str("RANGES\n");
        for i in ranged {
            let r = problem.row_upper[i] - problem.row_lower[i];
            line(&mut out, "", "RNG", &row_name(i), &format_number(r), "", "");
        }
    }
    out.push_str("BOUNDS\n");
    for j in 0..problem.num_vars() {
        let (l, u) = (problem.var_lower[j], problem.var_upper[j]);
        let c = col_name(j);
        let is_int = problem.integrality[j];
        if l == u {
            line(&mut out, "FX", "BND", &c, &format_number(l), "", "");
            continue;
        }
        if !l.is_finite() && !u.is_finite() {
            line(&mut out, "FR", "BND", &c, "", "", "");
            continue;
        }
        if !l.is_finite() {
            line(&mut out, "MI", "BND", &c, "", "", "");
        } else if l != 0.0 || is_int {
            line(&mut out, "LO", "BND", &c, &format_number(l), "", "");
        }
        if u.is_finite() {
            line(&mut out, "UP", "BND", &c, &format_number(u), "", "");
        } else if is_int {
            line(&mut out, "PL", "BND", &c, "", "", "");
        }
    }
    out.push_str("ENDATA\n");
    out
}

fn parse_err(line_no: usize, msg: impl Into<String>) -> SolverError {
    SolverError::MalformedProblem(format!("MPS line {}: {}", line_no + 1, msg.into()))
}

fn number(tok: &str, line_no: usize) -> Result<f64, SolverError> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(line_no, format!("bad number '{tok}'")))
}

/// Reads MPS text (fixed or free layout, names without blanks).
pub fn read_mps(text: &str) -> Result<LinearProgram, SolverError> {
    use std::collections::HashMap;
    #[derive(PartialEq)]
    enum Sec {
        None,
        ObjSense,
        Rows,
        Columns,
        Rhs,
        Ranges,
        Bounds,
    }
    let mut sec = Sec::None;
    let mut sense = Sense::Minimize;
    let mut obj_name: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut row_kind: Vec<char> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut costs: Vec<f64> = Vec::new();
    let mut integrality: Vec<bool> = Vec::new();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut range: Vec<Option<f64>> = Vec::new();
    let mut offset = 0.0;
    let mut in_int = false;
    let mut lower: Vec<f64> = Vec::new();
    let mut upper: Vec<f64> = Vec::new();
    let mut lower_set: Vec<bool> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            sec = match toks[0] {
                "NAME" => Sec::None,
                "OBJSENSE" => {
                    if toks.get(1) == Some(&"MAX") {
                        sense = Sense::Maximize;
                    }
                    Sec::ObjSense
                }
                "ROWS" => Sec::Rows,
                "COLUMNS" => Sec::Columns,
                "RHS" => Sec::Rhs,
                "RANGES" => Sec::Ranges,
                "BOUNDS" => Sec::Bounds,
                "ENDATA" => break,
                other => return Err(parse_err(ln, format!("unknown section {other}"))),
            };
            continue;
        }
        match sec {
            Sec::ObjSense => {
                if toks[0] == "MAX" || toks[0] == "MAXIMIZE" {
                    sense = Sense::Maximize;
                }
            }
            Sec::Rows => {
                if toks.len() != 2 {
                    return Err(parse_err(ln, "expected row type and name"));
                }
                let k = toks[0].chars().next().unwrap();
                if k == 'N' && obj_name.is_none() {
                    obj_name = Some(toks[1].to_string());
                    continue;
                }
                if !matches!(k, 'N' | 'E' | 'L' | 'G') {
                    return Err(parse_err(ln, format!("unknown row type {k}")));
                }
                row_index.insert(toks[1].to_string(), row_kind.len());
                row_kind.push(k);
                rhs.push(0.0);
                range.push(None);
            }
            Sec::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    in_int = toks[2] == "'INTORG'";
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(parse_err(ln, "expected column name and 1 or 2 entries"));
                }
                let j = match col_index.get(toks[0]) {
                    Some(&j) => j,
                    None => {
                        let j = costs.len();
                        col_index.insert(toks[0].to_string(), j);
                        costs.push(0.0);
                        integrality.push(in_int);
                        lower.push(0.0);
                        upper.push(if in_int { f64::INFINITY } else { f64::INFINITY });
                        lower_set.push(false);
                        j
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let v = number(pair[1], ln)?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        costs[j] += v;
                    } else {
                        let i = *row_index
                            .get(pair[0])
                            .ok_or_else(|| parse_err(ln, format!("unknown row {}", pair[0])))?;
                        triplets.push((i, j, v));
                    }
                }
            }
            Sec::Rhs | Sec::Ranges => {
                let body = if toks.len() % 2 == 1 { &toks[1..] } else { &toks[..] };
                for pair in body.chunks(2) {
                    if pair.len() != 2 {
                        return Err(parse_err(ln, "dangling entry"));
                    }
                    let v = number(pair[1], ln)?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        if sec == Sec::Rhs {
                            offset = -v;
                        }
                        continue;
                    }
                    let i = *row_index
                        .get(pair[0])
                        .ok_or_else(|| parse_err(ln, format!("unknown row {}", pair[0])))?;
                    if sec == Sec::Rhs {
                        rhs[i] = v;
                    } else {
                        range[i] = Some(v);
                    }
                }
            }
            Sec::Bounds => {
                let ty = toks[0];
                let needs_value = matches!(ty, "UP" | "LO" | "FX" | "LI" | "UI");
                let (col, val) = if needs_value {
                    match toks.len() {
                        4 => (toks[2], Some(number(toks[3], ln)?)),
                        3 => (toks[1], Some(number(toks[2], ln)?)),
                        _ => return Err(parse_err(ln, "malformed bound")),
                    }
                } else {
                    match toks.len() {
                        3 => (toks[2], None),
                        2 => (toks[1], None),
                        _ => return Err(parse_err(ln, "malformed bound")),
                    }
                };
                let j = *col_index
                    .get(col)
                    .ok_or_else(|| parse_err(ln, format!("unknown column {col}")))?;
                match (ty, val) {
                    ("UP" | "UI", Some(v)) => {
                        upper[j] = v;
                        if v < 0.0 && !lower_set[j] && lower[j] == 0.0 {
                            lower[j] = f64::NEG_INFINITY;
                        }
                    }
                    ("LO" | "LI", Some(v)) => {
                        lower[j] = v;
                        lower_set[j] = true;
                    }
                    ("FX", Some(v)) => {
                        lower[j] = v;
                        upper[j] = v;
                        lower_set[j] = true;
                    }
                    ("FR", None) => {
                        lower[j] = f64::NEG_INFINITY;
                        upper[j] = f64::INFINITY;
                    }
                    ("MI", None) => {
                        lower[j] = f64::NEG_INFINITY;
                        lower_set[j] = true;
                    }
                    ("PL", None) => upper[j] = f64::INFINITY,
                    ("BV", None) => {
                        lower[j] = 0.0;
                        upper[j] = 1.0;
                        integrality[j] = true;
                    }
                    _ => return Err(parse_err(ln, format!("unsupported bound type {ty}"))),
                }
                if matches!(ty, "LI" | "UI") {
                    integrality[j] = true;
                }
            }
            Sec::None => {}
        }
    }

    let m = row_kind.len();
    let mut row_lower = vec![f64::NEG_INFINITY; m];
    let mut row_upper = vec![f64::INFINITY; m];
    for i in 0..m {
        let b = rhs[i];
        match (row_kind[i], range[i]) {
            ('E', None) => {
                row_lower[i] = b;
                row_upper[i] = b;
            }
            ('E', Some(r)) => {
                if r >= 0.0 {
                    row_lower[i] = b;
                    row_upper[i] = b + r;
                } else {
                    row_lower[i] = b + r;
                    row_upper[i] = b;
                }
            }
            ('L', r) => {
                row_upper[i] = b;
                if let Some(r) = r {
                    row_lower[i] = b - r.abs();
                }
            }
            ('G', r) => {
                row_lower[i] = b;
                if let Some(r) = r {
                    row_upper[i] = b + r.abs();
                }
            }
            _ => {}
        }
    }
    let n = costs.len();
    let lp = LinearProgram {
        sense,
        costs,
        columns: CscMatrix::from_triplets(m, n, &triplets),
        row_lower,
        row_upper,
        var_lower: lower,
        var_upper: upper,
        integrality,
        objective_offset: offset,
    };
    lp.check()?;
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::LpBuilder;

    #[test]
    fn numbers_fit_twelve_columns() {
        for v in [1.0, -0.1, 1.0 / 3.0, 123456789.123, -1e-17, 6.02214076e23] {
            let s = format_number(v);
            assert!(s.len() <= 12, "{s}");
            let back: f64 = s.parse().unwrap();
            assert!((back - v).abs() <= 1e-7 * v.abs().max(1e-300));
        }
        assert_eq!(format_number(2.5), "2.5");
    }

    #[test]
    fn round_trip_preserves_structure() {
        let mut b = LpBuilder::new().sense(Sense::Maximize);
        let x = b.add_var(3.0, -2.0, 4.0);
        let y = b.add_int_var(-1.5, 0.0, 7.0);
        let z = b.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
        b.add_row(1.0, 5.0, &[(x, 1.0), (y, 2.0)]);
        b.add_row(2.0, 2.0, &[(y, 1.0), (z, -1.0)]);
        b.add_row(f64::NEG_INFINITY, 9.0, &[(x, 0.25)]);
        b.add_row(-3.0, f64::INFINITY, &[(z, 1.0)]);
        b.add_offset(4.0);
        let lp = b.build();
        let text = write_mps(&lp, "RT");
        let back = read_mps(&text).unwrap();
        assert_eq!(back, lp);
    }
}
