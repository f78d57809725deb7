//! Line-oriented text format for [`StandardForm`].
//!
//! ```text
//! mts-standard-form 1
//! offset <value>
//! var <index> <lb> <ub> <C|I> <objective> <name>
//! row <index> <L|E|G> <rhs> <name>
//! coef <row> <var> <value>
//! ```
//!
//! Infinite bounds are written `inf` / `-inf`. Names must not contain
//! whitespace. Lines starting with `#` are comments. Records may appear in
//! any order after the header as long as indices are dense.

use std::io::{BufRead, Write};

use crate::form::{Row, Sense, StandardForm};
use crate::MilpError;

pub const HEADER: &str = "mts-standard-form 1";

fn fmt_f(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn sanitize(name: &str) -> String {
    if name.is_empty() {
        "_".into()
    } else {
        name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
    }
}

pub fn write<W: Write>(sf: &StandardForm, mut w: W) -> Result<(), MilpError> {
    writeln!(w, "{HEADER}")?;
    writeln!(w, "offset {}", fmt_f(sf.obj_offset))?;
    for j in 0..sf.num_vars() {
        writeln!(
            w,
            "var {j} {} {} {} {} {}",
            fmt_f(sf.lb[j]),
            fmt_f(sf.ub[j]),
            if sf.integer[j] { "I" } else { "C" },
            fmt_f(sf.obj[j]),
            sanitize(&sf.names[j])
        )?;
    }
    for (i, r) in sf.rows.iter().enumerate() {
        writeln!(w, "row {i} {} {} {}", r.sense.symbol(), fmt_f(r.rhs), sanitize(&r.name))?;
    }
    for (i, r) in sf.rows.iter().enumerate() {
        for &(j, a) in &r.coefs {
            writeln!(w, "coef {i} {j} {}", fmt_f(a))?;
        }
    }
    Ok(())
}

pub fn to_string(sf: &StandardForm) -> String {
    let mut buf = Vec::new();
    write(sf, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

fn parse_f(tok: Option<&str>, line: usize) -> Result<f64, MilpError> {
    let t = tok.ok_or(MilpError::Parse { line, msg: "missing number".into() })?;
    match t {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => t.parse().map_err(|_| MilpError::Parse { line, msg: format!("bad number `{t}`") }),
    }
}

fn parse_idx(tok: Option<&str>, line: usize) -> Result<usize, MilpError> {
    let t = tok.ok_or(MilpError::Parse { line, msg: "missing index".into() })?;
    t.parse().map_err(|_| MilpError::Parse { line, msg: format!("bad index `{t}`") })
}

pub fn read<R: BufRead>(r: R) -> Result<StandardForm, MilpError> {
    let mut vars: Vec<Option<(f64, f64, bool, f64, String)>> = Vec::new();
    let mut rows: Vec<Option<Row>> = Vec::new();
    let mut coefs: Vec<(usize, usize, f64, usize)> = Vec::new();
    let mut offset = 0.0;
    let mut seen_header = false;
    for (k, line) in r.lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !seen_header {
            if t != HEADER {
                return Err(MilpError::Parse { line: lineno, msg: format!("expected header `{HEADER}`") });
            }
            seen_header = true;
            continue;
        }
        let mut it = t.split_whitespace();
        match it.next() {
            Some("offset") => offset = parse_f(it.next(), lineno)?,
            Some("var") => {
                let j = parse_idx(it.next(), lineno)?;
                let lb = parse_f(it.next(), lineno)?;
                let ub = parse_f(it.next(), lineno)?;
                let integer = match it.next() {
                    Some("I") => true,
                    Some("C") => false,
                    other => return Err(MilpError::Parse { line: lineno, msg: format!("bad type {other:?}") }),
                };
                let obj = parse_f(it.next(), lineno)?;
                let name = it.next().unwrap_or("_").to_string();
                if vars.len() <= j {
                    vars.resize(j + 1, None);
                }
                vars[j] = Some((lb, ub, integer, obj, name));
            }
            Some("row") => {
                let i = parse_idx(it.next(), lineno)?;
                let sense = it
                    .next()
                    .and_then(Sense::from_symbol)
                    .ok_or(MilpError::Parse { line: lineno, msg: "bad sense".into() })?;
                let rhs = parse_f(it.next(), lineno)?;
                let name = it.next().unwrap_or("_").to_string();
                if rows.len() <= i {
                    rows.resize(i + 1, None);
                }
                rows[i] = Some(Row { coefs: Vec::new(), sense, rhs, name });
            }
            Some("coef") => {
                let i = parse_idx(it.next(), lineno)?;
                let j = parse_idx(it.next(), lineno)?;
                let v = parse_f(it.next(), lineno)?;
                coefs.push((i, j, v, lineno));
            }
            Some(other) => return Err(MilpError::Parse { line: lineno, msg: format!("unknown record `{other}`") }),
            None => {}
        }
    }
    if !seen_header {
        return Err(MilpError::Parse { line: 0, msg: "empty input".into() });
    }
    let mut sf = StandardForm::new();
    sf.obj_offset = offset;
    for (j, v) in vars.into_iter().enumerate() {
        let (lb, ub, integer, obj, name) = v.ok_or(MilpError::Parse { line: 0, msg: format!("variable {j} missing") })?;
        sf.add_var(lb, ub, integer, obj, name);
    }
    let mut built: Vec<Row> = Vec::with_capacity(rows.len());
    for (i, r) in rows.into_iter().enumerate() {
        built.push(r.ok_or(MilpError::Parse { line: 0, msg: format!("row {i} missing") })?);
    }
    for (i, j, v, line) in coefs {
        let row = built.get_mut(i).ok_or(MilpError::Parse { line, msg: format!("coef for undeclared row {i}") })?;
        if j >= sf.num_vars() {
            return Err(MilpError::Parse { line, msg: format!("coef for undeclared variable {j}") });
        }
        row.coefs.push((j, v));
    }
    for r in built {
        sf.add_row(r.coefs, r.sense, r.rhs, r.name);
    }
    sf.check()?;
    Ok(sf)
}

pub fn from_str(s: &str) -> Result<StandardForm, MilpError> {
    read(s.as_bytes())
}
