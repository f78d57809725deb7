use std::fmt;

use crate::MilpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "L",
            Sense::Eq => "E",
            Sense::Ge => "G",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Sense> {
        match s {
            "L" | "<=" => Some(Sense::Le),
            "E" | "=" | "==" => Some(Sense::Eq),
            "G" | ">=" => Some(Sense::Ge),
            _ => None,
        }
    }

    /// Residual of `lhs (sense) rhs`; positive means violated by that much.
    pub fn violation(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Sense::Le => (lhs - rhs).max(0.0),
            Sense::Ge => (rhs - lhs).max(0.0),
            Sense::Eq => (lhs - rhs).abs(),
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub name: String,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// Minimize `obj·x + obj_offset` subject to `rows` and `lb <= x <= ub`,
/// with `integer[j]` marking integer-constrained columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StandardForm {
    pub obj: Vec<f64>,
    pub obj_offset: f64,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub integer: Vec<bool>,
    pub names: Vec<String>,
    pub rows: Vec<Row>,
}

impl StandardForm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.obj.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, lb: f64, ub: f64, integer: bool, obj: f64, name: impl Into<String>) -> usize {
        self.obj.push(obj);
        self.lb.push(lb);
        self.ub.push(ub);
        self.integer.push(integer);
        self.names.push(name.into());
        self.obj.len() - 1
    }

    /// Adds a row, merging duplicate column entries and dropping zeros.
    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, sense: Sense, rhs: f64, name: impl Into<String>) -> usize {
        let coefs = merge_coefs(coefs);
        self.rows.push(Row { coefs, sense, rhs, name: name.into() });
        self.rows.len() - 1
    }

    pub fn has_integers(&self) -> bool {
        self.integer.iter().any(|&b| b)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.obj_offset + self.obj.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.num_vars() {
            worst = worst.max(self.lb[j] - x[j]).max(x[j] - self.ub[j]);
        }
        for r in &self.rows {
            worst = worst.max(r.sense.violation(r.activity(x), r.rhs));
        }
        worst
    }

    /// Same problem with every integrality flag cleared.
    pub fn relaxation(&self) -> StandardForm {
        let mut sf = self.clone();
        sf.integer.iter_mut().for_each(|b| *b = false);
        sf
    }

    pub fn check(&self) -> Result<(), MilpError> {
        let n = self.num_vars();
        for j in 0..n {
            if self.lb[j] > self.ub[j] {
                return Err(MilpError::InvertedBounds { var: j, lb: self.lb[j], ub: self.ub[j] });
            }
            if !self.obj[j].is_finite() || self.lb[j].is_nan() || self.ub[j].is_nan() {
                return Err(MilpError::NonFinite { what: format!("column {j}") });
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, a) in &r.coefs {
                if j >= n {
                    return Err(MilpError::UnknownVariable { row: i, var: j, nvars: n });
                }
                if !a.is_finite() {
                    return Err(MilpError::NonFinite { what: format!("row {i}") });
                }
            }
            if !r.rhs.is_finite() {
                return Err(MilpError::NonFinite { what: format!("rhs of row {i}") });
            }
        }
        Ok(())
    }
}

pub(crate) fn merge_coefs(mut coefs: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    coefs.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
    for (j, a) in coefs {
        match out.last_mut() {
            Some((k, b)) if *k == j => *b += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}
