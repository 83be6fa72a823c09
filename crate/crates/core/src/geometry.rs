//! Model manifolds: the flat n-torus, the unit n-sphere and real projective
//! space, with the chart bookkeeping the flow and critical-point code needs.
//!
//! Point conventions, used everywhere a "point" crosses a module boundary:
//!
//! * torus: `n` chart coordinates, canonical representative in `[0,1)^n`;
//! * sphere: `n+1` ambient coordinates on the unit sphere;
//! * projective: `n+1` homogeneous coordinates, canonical representative
//!   scaled so its largest-magnitude (pivot) coordinate equals 1.
//!
//! Scalar fields are always written in these coordinates, so the expression
//! dimension is [`ManifoldModel::ambient_dim`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::expr::ScalarField;

/// Largest supported projective dimension. Up to `n = 3` the largest
/// homogeneous coordinate of a unit vector is at least `1/2`, so chart
/// hand-off at pivot magnitude `0.5` always finds a valid chart.
pub const MAX_PROJECTIVE_DIM: usize = 3;

/// Chart hand-off threshold on the pivot's share of the unit representative.
pub const PIVOT_HANDOFF: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate point {0:?}: cannot be normalized")]
    DegeneratePoint(Vec<f64>),
    #[error("point has {got} coordinates, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("unsupported dimension {dim} for {kind}")]
    UnsupportedDimension { kind: &'static str, dim: usize },
    #[error("unknown manifold `{0}` (expected torus2, torusN:k, circle, sphere2, sphereN:k, rp1, rp2, rp3)")]
    UnknownManifold(String),
    #[error("metric must have {expected} positive diagonal entries")]
    InvalidMetric { expected: usize },
    #[error("field is incompatible with {manifold}: {reason}")]
    IncompatibleField { manifold: String, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldModel {
    /// `R^n / Z^n` with a constant diagonal metric (identity by default).
    Torus { dim: usize, metric: Vec<f64> },
    /// Unit sphere in `R^{n+1}` with the induced metric.
    Sphere { dim: usize },
    /// `RP^n` with the round metric of the radius-2 sphere pushed to the
    /// quotient, so that `RP^1` is isometric to the unit circle.
    Projective { dim: usize },
}

/// Chart components of the metric at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricAt {
    pub point: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

impl ManifoldModel {
    pub fn torus(dim: usize) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::UnsupportedDimension { kind: "torus", dim });
        }
        Ok(ManifoldModel::Torus {
            dim,
            metric: vec![1.0; dim],
        })
    }

    /// Flat torus with metric `diag(entries)`.
    pub fn torus_with_metric(entries: Vec<f64>) -> Result<Self, GeometryError> {
        let dim = entries.len();
        if dim == 0 || entries.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(GeometryError::InvalidMetric { expected: dim.max(1) });
        }
        Ok(ManifoldModel::Torus { dim, metric: entries })
    }

    pub fn sphere(dim: usize) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::UnsupportedDimension { kind: "sphere", dim });
        }
        Ok(ManifoldModel::Sphere { dim })
    }

    pub fn projective(dim: usize) -> Result<Self, GeometryError> {
        if dim == 0 || dim > MAX_PROJECTIVE_DIM {
            return Err(GeometryError::UnsupportedDimension {
                kind: "projective space",
                dim,
            });
        }
        Ok(ManifoldModel::Projective { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            ManifoldModel::Torus { dim, .. }
            | ManifoldModel::Sphere { dim }
            | ManifoldModel::Projective { dim } => *dim,
        }
    }

    /// Number of coordinates of a point (and of a field's variables).
    pub fn ambient_dim(&self) -> usize {
        match self {
            ManifoldModel::Torus { dim, .. } => *dim,
            ManifoldModel::Sphere { dim } | ManifoldModel::Projective { dim } => dim + 1,
        }
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    fn check_len(&self, p: &[f64]) -> Result<(), GeometryError> {
        if p.len() == self.ambient_dim() {
            Ok(())
        } else {
            Err(GeometryError::WrongLength {
                expected: self.ambient_dim(),
                got: p.len(),
            })
        }
    }

    /// Unique representative of `p`.
    pub fn canonicalize(&self, p: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_len(p)?;
        match self {
            ManifoldModel::Torus { .. } => Ok(p
                .iter()
                .map(|x| {
                    let r = x.rem_euclid(1.0);
                    // rem_euclid can round up to exactly 1.0 for tiny negatives.
                    if r >= 1.0 {
                        0.0
                    } else {
                        r
                    }
                })
                .collect()),
            ManifoldModel::Sphere { .. } => {
                let n = norm(p);
                if n == 0.0 || !n.is_finite() {
                    return Err(GeometryError::DegeneratePoint(p.to_vec()));
                }
                if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
                    return Ok(p.to_vec());
                }
                Ok(p.iter().map(|x| x / n).collect())
            }
            ManifoldModel::Projective { .. } => {
                let j = pivot(p);
                let d = p[j];
                if d == 0.0 || !d.is_finite() {
                    return Err(GeometryError::DegeneratePoint(p.to_vec()));
                }
                let mut out: Vec<f64> = p.iter().map(|x| x / d).collect();
                out[j] = 1.0;
                Ok(out)
            }
        }
    }

    /// Projects an ambient vector onto the tangent space at canonical `p`.
    pub fn tangent_project(&self, p: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            ManifoldModel::Sphere { .. } => {
                let d = dot(v, p);
                v.iter().zip(p).map(|(vi, pi)| vi - d * pi).collect()
            }
            _ => v.to_vec(),
        }
    }

    /// Metric components: torus chart, sphere orthonormal tangent frame,
    /// projective affine chart of the pivot coordinate.
    pub fn metric(&self, p: &[f64]) -> MetricAt {
        let matrix = match self {
            ManifoldModel::Torus { metric, .. } => {
                DMatrix::from_diagonal(&DVector::from_column_slice(metric))
            }
            ManifoldModel::Sphere { dim } => DMatrix::identity(*dim, *dim),
            ManifoldModel::Projective { .. } => {
                let j = pivot(p);
                projective_chart_metric(&chart_coords(p, j))
            }
        };
        MetricAt {
            point: p.to_vec(),
            matrix,
        }
    }

    /// Distance between canonical points used for deduplication and
    /// isolation checks: periodic on the torus, chordal on the sphere, and
    /// chordal up to sign between unit representatives on projective space.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            ManifoldModel::Torus { .. } => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = (x - y).rem_euclid(1.0);
                    d.min(1.0 - d).powi(2)
                })
                .sum::<f64>()
                .sqrt(),
            ManifoldModel::Sphere { .. } => {
                a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
            }
            ManifoldModel::Projective { .. } => {
                let ua = unit(a);
                let ub = unit(b);
                let minus: f64 = ua.iter().zip(&ub).map(|(x, y)| (x - y).powi(2)).sum();
                let plus: f64 = ua.iter().zip(&ub).map(|(x, y)| (x + y).powi(2)).sum();
                minus.min(plus).sqrt()
            }
        }
    }

    /// Rejects fields that do not descend to the manifold: non-periodic
    /// fields on the torus, and fields on projective space that are not
    /// invariant under `x -> c x` for `c != 0`.
    pub fn check_field(&self, field: &ScalarField) -> Result<(), GeometryError> {
        let n = self.ambient_dim();
        if field.dim() != n {
            return Err(self.incompatible(format!(
                "field has {} variables, manifold needs {n}",
                field.dim()
            )));
        }
        let probes = probe_points(n, 7);
        for p in &probes {
            let scale = 1.0 + p.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let base = match self {
                ManifoldModel::Torus { .. } => p.clone(),
                _ => unit(p),
            };
            let Ok(v) = field.value(&base) else {
                // Domain failures at probe points surface later with context.
                continue;
            };
            let tol = 1e-9 * (1.0 + v.abs()) * scale;
            match self {
                ManifoldModel::Torus { .. } => {
                    for i in 0..n {
                        let mut q = base.clone();
                        q[i] += 1.0;
                        if let Ok(w) = field.value(&q) {
                            if (w - v).abs() > tol {
                                return Err(self.incompatible(format!(
                                    "not periodic in x{} (f={v} vs {w} after a unit shift)",
                                    i + 1
                                )));
                            }
                        }
                    }
                }
                ManifoldModel::Projective { .. } => {
                    for c in [-1.0, 2.5, -0.4] {
                        let q: Vec<f64> = base.iter().map(|x| c * x).collect();
                        if let Ok(w) = field.value(&q) {
                            if (w - v).abs() > tol {
                                return Err(self.incompatible(format!(
                                    "not invariant under scaling homogeneous coordinates by {c}"
                                )));
                            }
                        }
                    }
                }
                ManifoldModel::Sphere { .. } => {}
            }
        }
        Ok(())
    }

    fn incompatible(&self, reason: String) -> GeometryError {
        GeometryError::IncompatibleField {
            manifold: self.to_string(),
            reason,
        }
    }
}

impl fmt::Display for ManifoldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldModel::Torus { dim: 2, metric } if metric.iter().all(|g| *g == 1.0) => {
                write!(f, "torus2")
            }
            ManifoldModel::Torus { dim, metric } if metric.iter().all(|g| *g == 1.0) => {
                write!(f, "torusN:{dim}")
            }
            ManifoldModel::Torus { dim, metric } => write!(f, "torusN:{dim} metric {metric:?}"),
            ManifoldModel::Sphere { dim: 2 } => write!(f, "sphere2"),
            ManifoldModel::Sphere { dim } => write!(f, "sphereN:{dim}"),
            ManifoldModel::Projective { dim } => write!(f, "rp{dim}"),
        }
    }
}

impl FromStr for ManifoldModel {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || GeometryError::UnknownManifold(s.to_string());
        let s = s.trim();
        match s {
            "torus2" => return ManifoldModel::torus(2),
            "circle" => return ManifoldModel::torus(1),
            "sphere2" => return ManifoldModel::sphere(2),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("torusN:") {
            return ManifoldModel::torus(k.parse().map_err(|_| unknown())?);
        }
        if let Some(k) = s.strip_prefix("sphereN:") {
            return ManifoldModel::sphere(k.parse().map_err(|_| unknown())?);
        }
        if let Some(k) = s.strip_prefix("rp") {
            return ManifoldModel::projective(k.parse().map_err(|_| unknown())?);
        }
        Err(unknown())
    }
}

// ---------------------------------------------------------------------------
// Helpers shared with the flow and critical-point modules
// ---------------------------------------------------------------------------

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn unit(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    a.iter().map(|x| x / n).collect()
}

/// Index of the largest-magnitude coordinate (first on ties).
pub(crate) fn pivot(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in p.iter().enumerate() {
        if x.abs() > p[best].abs() {
            best = i;
        }
    }
    best
}

/// Affine chart coordinates of homogeneous `p` in the chart `x_j != 0`.
pub(crate) fn chart_coords(p: &[f64], j: usize) -> Vec<f64> {
    let d = p[j];
    p.iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .map(|(_, x)| x / d)
        .collect()
}

/// Homogeneous vector with a 1 in slot `j` and `u` elsewhere.
pub(crate) fn chart_embed(u: &[f64], j: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len() + 1);
    out.extend_from_slice(&u[..j]);
    out.push(1.0);
    out.extend_from_slice(&u[j..]);
    out
}

/// `4((1+|u|^2) I - u u^T) / (1+|u|^2)^2`.
pub(crate) fn projective_chart_metric(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let r2 = dot(u, u);
    let s = 1.0 + r2;
    DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { s } else { 0.0 };
        4.0 * (delta - u[i] * u[j]) / (s * s)
    })
}

/// Orthonormal basis of the tangent space of the unit sphere at `x`,
/// obtained by Gram–Schmidt on the standard basis in order of decreasing
/// residual norm. Deterministic for a given `x`.
pub(crate) fn sphere_frame(x: &[f64]) -> Vec<Vec<f64>> {
    let m = x.len();
    let mut candidates: Vec<(usize, f64)> = (0..m).map(|i| (i, 1.0 - x[i] * x[i])).collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(m - 1);
    for (i, _) in candidates {
        if frame.len() == m - 1 {
            break;
        }
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        for _ in 0..2 {
            let d = dot(&v, x);
            for (vk, xk) in v.iter_mut().zip(x) {
                *vk -= d * xk;
            }
            for e in &frame {
                let d = dot(&v, e);
                for (vk, ek) in v.iter_mut().zip(e) {
                    *vk -= d * ek;
                }
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            frame.push(v.iter().map(|c| c / n).collect());
        }
    }
    frame
}

/// Deterministic, well-spread probe points in `[-1,1]^n` (Kronecker
/// sequence on the golden-ratio family).
pub(crate) fn probe_points(n: usize, count: usize) -> Vec<Vec<f64>> {
    let alphas: Vec<f64> = (0..n)
        .map(|i| ((i as f64 + 2.0).sqrt()).fract().max(0.1))
        .collect();
    (1..=count)
        .map(|k| {
            alphas
                .iter()
                .map(|a| 2.0 * ((k as f64 * a + 0.123).fract()) - 1.0 + 1e-3)
                .collect()
        })
        .collect()
}
