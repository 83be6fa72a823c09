//! Maslov index of loops of Lagrangian subspaces of `(R^{2n}, omega_0)`.
//!
//! A Lagrangian frame `[X; Y]` (rows `x_1..x_n` then `y_1..y_n`) with
//! orthonormal columns gives the unitary `U = X + iY`, and the index is the
//! winding number of `det(U)^2`. The loop of lines at angle `pi * theta`
//! in `R^2` has index `+1`.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;
use thiserror::Error;

/// Tolerance on `|Q^T J Q|` for orthonormalized frames.
pub const LAGRANGIAN_TOLERANCE: f64 = 1e-10;
/// Subspaces closer than this (largest principal angle) are identified.
pub const CLOSURE_TOLERANCE: f64 = 1e-8;
/// Largest principal angle allowed between consecutive samples.
pub const MAX_SAMPLE_ANGLE: f64 = std::f64::consts::PI / 8.0;
pub const MAX_RESIDUAL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum MaslovError {
    #[error("frame {sample} is not Lagrangian: |F^T J F| = {defect:e}")]
    NotLagrangian { sample: usize, defect: f64 },
    #[error("frame {sample} does not have full column rank")]
    RankDeficient { sample: usize },
    #[error("frame {sample} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Shape {
        sample: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("loop does not close: last-to-first principal angle {angle}")]
    LoopNotClosed { angle: f64 },
    #[error("sampling too coarse between samples {sample} and {next}")]
    SamplingTooCoarse { sample: usize, next: usize },
    #[error("winding {winding} is not within {MAX_RESIDUAL} of an integer")]
    NonIntegral { winding: f64 },
    #[error("loops have different base subspaces or dimensions")]
    BasepointMismatch,
    #[error("loop needs at least two samples")]
    TooFewSamples,
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianLoop {
    n: usize,
    /// Orthonormalized frames.
    frames: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaslovIndex {
    pub index: i64,
    pub winding: f64,
    pub residual: f64,
    pub samples: usize,
}

fn symplectic_defect(q: &DMatrix<f64>) -> f64 {
    let n = q.ncols();
    let x = q.rows(0, n);
    let y = q.rows(n, n);
    // Q^T J Q with J = [[0, I], [-I, 0]].
    (x.transpose() * y - y.transpose() * x).amax()
}

/// Largest principal angle between the column spaces of orthonormal frames.
fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let s = (a.transpose() * b).singular_values();
    let smallest = s.iter().copied().fold(f64::INFINITY, f64::min);
    smallest.clamp(-1.0, 1.0).acos()
}

fn det_squared_phase(q: &DMatrix<f64>) -> f64 {
    let n = q.ncols();
    let u = DMatrix::from_fn(n, n, |i, j| Complex::new(q[(i, j)], q[(n + i, j)]));
    let d = u.determinant();
    (d * d).arg()
}

impl LagrangianLoop {
    /// Validates and orthonormalizes `2n x n` frames sampled in loop order.
    pub fn new(frames: Vec<DMatrix<f64>>) -> Result<Self, MaslovError> {
        let first = frames.first().ok_or(MaslovError::TooFewSamples)?;
        let n = first.ncols();
        if frames.len() < 2 {
            return Err(MaslovError::TooFewSamples);
        }
        let mut out = Vec::with_capacity(frames.len());
        for (k, f) in frames.into_iter().enumerate() {
            if f.nrows() != 2 * n || f.ncols() != n {
                return Err(MaslovError::Shape {
                    sample: k,
                    rows: f.nrows(),
                    cols: f.ncols(),
                    expected_rows: 2 * n,
                    expected_cols: n,
                });
            }
            let scale = f.amax();
            let qr = f.qr();
            let r = qr.r();
            if scale == 0.0 || (0..n).any(|i| r[(i, i)].abs() <= 1e-12 * scale) {
                return Err(MaslovError::RankDeficient { sample: k });
            }
            let q = qr.q();
            let defect = symplectic_defect(&q);
            if defect > LAGRANGIAN_TOLERANCE {
                return Err(MaslovError::NotLagrangian { sample: k, defect });
            }
            out.push(q);
        }
        Ok(LagrangianLoop { n, frames: out })
    }

    /// Parses rows of `theta, F_11, F_12, ..., F_{2n,n}` (row-major frame
    /// entries). Blank lines and lines starting with `#` are skipped.
    pub fn from_csv(text: &str) -> Result<Self, MaslovError> {
        let mut rows: Vec<(usize, f64, Vec<f64>)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let values: Vec<f64> = t
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| MaslovError::Csv {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let (theta, entries) = values.split_first().ok_or(MaslovError::Csv {
                line: line_no,
                message: "empty row".into(),
            })?;
            rows.push((line_no, *theta, entries.to_vec()));
        }
        let Some((_, _, first)) = rows.first() else {
            return Err(MaslovError::TooFewSamples);
        };
        let m = first.len();
        let n = ((m / 2) as f64).sqrt().round() as usize;
        if n == 0 || 2 * n * n != m {
            return Err(MaslovError::Csv {
                line: rows[0].0,
                message: format!("{m} frame entries is not 2n^2 for any n"),
            });
        }
        let mut frames = Vec::with_capacity(rows.len());
        let mut last_theta = f64::NEG_INFINITY;
        for (line, theta, entries) in rows {
            if entries.len() != m {
                return Err(MaslovError::Csv {
                    line,
                    message: format!("expected {m} frame entries, found {}", entries.len()),
                });
            }
            if theta.partial_cmp(&last_theta) != Some(std::cmp::Ordering::Greater) {
                return Err(MaslovError::Csv {
                    line,
                    message: "theta must increase".into(),
                });
            }
            last_theta = theta;
            frames.push(DMatrix::from_row_slice(2 * n, n, &entries));
        }
        LagrangianLoop::new(frames)
    }

    pub fn half_dimension(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Whether the last sample repeats the first subspace.
    fn closes_explicitly(&self) -> bool {
        principal_angle(&self.frames[0], &self.frames[self.frames.len() - 1]) < CLOSURE_TOLERANCE
    }

    /// Samples of one period without a repeated endpoint.
    fn period(&self) -> &[DMatrix<f64>] {
        if self.closes_explicitly() {
            &self.frames[..self.frames.len() - 1]
        } else {
            &self.frames
        }
    }

    /// Traverses `self` then `other`; both must start at the same subspace.
    pub fn concatenate(&self, other: &LagrangianLoop) -> Result<LagrangianLoop, MaslovError> {
        if self.n != other.n || principal_angle(&self.frames[0], &other.frames[0]) >= CLOSURE_TOLERANCE {
            return Err(MaslovError::BasepointMismatch);
        }
        let mut frames = self.period().to_vec();
        frames.extend_from_slice(other.period());
        Ok(LagrangianLoop { n: self.n, frames })
    }
}

pub fn maslov_index(lp: &LagrangianLoop) -> Result<MaslovIndex, MaslovError> {
    let frames = lp.period();
    let m = frames.len();
    if m < 2 {
        return Err(MaslovError::TooFewSamples);
    }
    let wrap = principal_angle(&frames[m - 1], &frames[0]);
    if wrap >= MAX_SAMPLE_ANGLE {
        return Err(MaslovError::LoopNotClosed { angle: wrap });
    }
    let phases: Vec<f64> = frames.iter().map(det_squared_phase).collect();
    let mut total = 0.0;
    for k in 0..m {
        let next = (k + 1) % m;
        if k + 1 < m && principal_angle(&frames[k], &frames[next]) >= MAX_SAMPLE_ANGLE {
            return Err(MaslovError::SamplingTooCoarse { sample: k, next });
        }
        let mut d = phases[next] - phases[k];
        d -= std::f64::consts::TAU * (d / std::f64::consts::TAU).round();
        if d.abs() >= std::f64::consts::PI * (1.0 - 1e-9) {
            return Err(MaslovError::SamplingTooCoarse { sample: k, next });
        }
        total += d;
    }
    let winding = total / std::f64::consts::TAU;
    let index = winding.round();
    let residual = (winding - index).abs();
    if residual >= MAX_RESIDUAL {
        return Err(MaslovError::NonIntegral { winding });
    }
    Ok(MaslovIndex {
        index: index as i64,
        winding,
        residual,
        samples: m,
    })
}
