//! The Novikov field over GF(2), truncated at a finite exponent ceiling.
//!
//! Elements are finite sets of real exponents (all coefficients are 1).
//! Every operation discards exponents at or above the ceiling, so results are
//! exact below it for elements of nonnegative valuation. With valuation
//! `v < 0`, [`Novikov::invert`] is exact only below `ceiling + v`.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

pub const DEFAULT_CEILING: f64 = 32.0;
/// Exponents closer than this are treated as equal (and cancel in pairs).
pub const MERGE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum NovikovError {
    #[error("truncation ceilings differ: {0} vs {1}")]
    TruncationMismatch(f64, f64),
    #[error("zero has no inverse")]
    ZeroDivision,
    #[error("elimination needs exponents beyond the truncation ceiling")]
    TruncationExhausted,
    #[error("cannot parse Novikov element from {0:?}")]
    Parse(String),
    #[error("matrix rows have different lengths")]
    Ragged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Novikov {
    exponents: Vec<f64>,
    ceiling: f64,
}

impl Novikov {
    pub fn zero(ceiling: f64) -> Self {
        Novikov {
            exponents: Vec::new(),
            ceiling,
        }
    }

    pub fn one(ceiling: f64) -> Self {
        Self::monomial(0.0, ceiling)
    }

    /// `T^c`.
    pub fn monomial(c: f64, ceiling: f64) -> Self {
        Self::from_exponents([c], ceiling)
    }

    /// Sum of `T^c` over the given exponents, with repeated exponents
    /// cancelling in pairs.
    pub fn from_exponents(exps: impl IntoIterator<Item = f64>, ceiling: f64) -> Self {
        let mut v: Vec<f64> = exps.into_iter().filter(|c| *c < ceiling).collect();
        v.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::with_capacity(v.len());
        for c in v {
            match out.last() {
                Some(&last) if (c - last).abs() <= MERGE_TOLERANCE => {
                    out.pop();
                }
                _ => out.push(c),
            }
        }
        Novikov {
            exponents: out,
            ceiling,
        }
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    pub fn is_zero(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Smallest exponent; `None` for zero.
    pub fn valuation(&self) -> Option<f64> {
        self.exponents.first().copied()
    }

    fn check(&self, other: &Novikov) -> Result<(), NovikovError> {
        if self.ceiling == other.ceiling {
            Ok(())
        } else {
            Err(NovikovError::TruncationMismatch(self.ceiling, other.ceiling))
        }
    }

    pub fn add(&self, other: &Novikov) -> Result<Novikov, NovikovError> {
        self.check(other)?;
        Ok(Self::from_exponents(
            self.exponents.iter().chain(&other.exponents).copied(),
            self.ceiling,
        ))
    }

    pub fn mul(&self, other: &Novikov) -> Result<Novikov, NovikovError> {
        self.check(other)?;
        Ok(self.mul_below(other, self.ceiling))
    }

    fn mul_below(&self, other: &Novikov, ceiling: f64) -> Novikov {
        let sums = self
            .exponents
            .iter()
            .flat_map(|a| other.exponents.iter().map(move |b| a + b));
        Self::from_exponents(sums, ceiling)
    }

    /// Multiplies by `T^c`.
    pub fn shift(&self, c: f64) -> Novikov {
        Self::from_exponents(self.exponents.iter().map(|e| e + c), self.ceiling)
    }

    /// Inverse via `T^{-v} (1 + r)^{-1} = T^{-v} (1 + r + r^2 + ...)`.
    pub fn invert(&self) -> Result<Novikov, NovikovError> {
        let v = self.valuation().ok_or(NovikovError::ZeroDivision)?;
        let work = self.ceiling + v;
        let r = Novikov::from_exponents(self.exponents[1..].iter().map(|e| e - v), work);
        let mut sum = Novikov::one(work);
        let mut power = Novikov::one(work);
        loop {
            power = power.mul_below(&r, work);
            if power.is_zero() {
                break;
            }
            sum = Novikov::from_exponents(
                sum.exponents.iter().chain(&power.exponents).copied(),
                work,
            );
        }
        Ok(Novikov::from_exponents(
            sum.exponents.iter().map(|e| e - v),
            self.ceiling,
        ))
    }

    /// Parses the textual form with an explicit ceiling.
    pub fn parse_with(text: &str, ceiling: f64) -> Result<Novikov, NovikovError> {
        let t = text.trim();
        if t == "0" {
            return Ok(Novikov::zero(ceiling));
        }
        let mut exps = Vec::new();
        for term in t.split('+') {
            let term = term.trim();
            let e = term
                .strip_prefix("T^")
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|e| e.is_finite())
                .ok_or_else(|| NovikovError::Parse(text.to_string()))?;
            exps.push(e);
        }
        Ok(Novikov::from_exponents(exps, ceiling))
    }
}

impl fmt::Display for Novikov {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponents.is_empty() {
            return write!(f, "0");
        }
        for (i, e) in self.exponents.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "T^{e}")?;
        }
        Ok(())
    }
}

impl FromStr for Novikov {
    type Err = NovikovError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Novikov::parse_with(s, DEFAULT_CEILING)
    }
}

impl Serialize for Novikov {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Rank over the field of a matrix of truncated elements, by elimination
/// with a pivot of minimal valuation at each stage.
pub fn lambda_rank(mat: &[Vec<Novikov>]) -> Result<usize, NovikovError> {
    let mut m: Vec<Vec<Novikov>> = mat.to_vec();
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if m.iter().any(|r| r.len() != cols) {
        return Err(NovikovError::Ragged);
    }
    if let Some(first) = m.iter().flatten().next() {
        for x in m.iter().flatten() {
            first.check(x)?;
        }
    }
    let mut rank = 0;
    let mut live_rows: Vec<usize> = (0..rows).collect();
    let mut live_cols: Vec<usize> = (0..cols).collect();
    loop {
        let pivot = live_rows
            .iter()
            .flat_map(|&r| live_cols.iter().map(move |&c| (r, c)))
            .filter_map(|(r, c)| m[r][c].valuation().map(|v| (r, c, v)))
            .min_by(|a, b| a.2.total_cmp(&b.2));
        let Some((pr, pc, _)) = pivot else {
            break;
        };
        rank += 1;
        live_rows.retain(|&r| r != pr);
        live_cols.retain(|&c| c != pc);
        let inv = m[pr][pc].invert()?;
        for &r in &live_rows {
            if m[r][pc].is_zero() {
                continue;
            }
            let factor = m[r][pc].mul(&inv)?;
            for &c in live_cols.iter().chain(std::iter::once(&pc)) {
                let update = factor.mul(&m[pr][c])?;
                m[r][c] = m[r][c].add(&update)?;
            }
            if !m[r][pc].is_zero() {
                return Err(NovikovError::TruncationExhausted);
            }
        }
    }
    Ok(rank)
}
