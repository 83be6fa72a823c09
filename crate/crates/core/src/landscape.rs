//! A scalar field restricted to a model manifold, with the local calculus
//! (Riemannian gradient, Hessian in a metric-orthonormal frame, retraction)
//! shared by the critical-point search and the gradient flow.
//!
//! Flow states are lifted points: on the torus a point of `R^n` (never
//! reduced mod 1), on the sphere a unit vector, on projective space a unit
//! homogeneous vector whose sign records the sheet of the double cover.

use nalgebra::{DMatrix, DVector};

use crate::expr::{EvalError, Expr, ScalarField};
use crate::geometry::{
    self, chart_coords, chart_embed, projective_chart_metric, sphere_frame, GeometryError,
    ManifoldModel,
};

#[derive(Clone, Debug)]
pub struct Landscape {
    manifold: ManifoldModel,
    field: ScalarField,
    /// Projective space only: the field pulled back to each affine chart.
    charts: Vec<ScalarField>,
}

/// Coordinates in which one integration step or Newton step is taken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Frame {
    Euclidean,
    Sphere,
    Chart { pivot: usize, sign: f64 },
}

/// First and second derivatives at a point in local coordinates, together
/// with the metric in those coordinates.
pub(crate) struct LocalJet {
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub metric: DMatrix<f64>,
}

impl Landscape {
    pub fn new(manifold: ManifoldModel, field: ScalarField) -> Result<Self, GeometryError> {
        manifold.check_field(&field)?;
        let charts = match &manifold {
            ManifoldModel::Projective { dim } => (0..=*dim)
                .map(|j| {
                    let e = field.expr().substitute(&|i| match i.cmp(&j) {
                        std::cmp::Ordering::Less => Expr::Var(i),
                        std::cmp::Ordering::Equal => Expr::Const(1.0),
                        std::cmp::Ordering::Greater => Expr::Var(i - 1),
                    });
                    ScalarField::new(e, *dim)
                })
                .collect(),
            _ => Vec::new(),
        };
        Ok(Landscape {
            manifold,
            field,
            charts,
        })
    }

    /// The field on a flat coordinate patch of `R^n`, without the
    /// periodicity check; for local analysis of non-periodic formulas.
    pub fn flat_chart(field: ScalarField) -> Self {
        Landscape {
            manifold: ManifoldModel::Torus {
                dim: field.dim(),
                metric: vec![1.0; field.dim()],
            },
            field,
            charts: Vec::new(),
        }
    }

    pub fn manifold(&self) -> &ManifoldModel {
        &self.manifold
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    /// Field value at any representative of a point.
    pub fn value(&self, p: &[f64]) -> Result<f64, EvalError> {
        match self.manifold {
            ManifoldModel::Torus { .. } => self.field.value(p),
            _ => self.field.value(&geometry::unit(p)),
        }
    }

    /// Lifted flow state for a point given in the module-boundary convention.
    pub(crate) fn lift(&self, p: &[f64]) -> Vec<f64> {
        match self.manifold {
            ManifoldModel::Torus { .. } => p.to_vec(),
            _ => geometry::unit(p),
        }
    }

    pub(crate) fn frame_for(&self, state: &[f64], current: Option<Frame>) -> Frame {
        match self.manifold {
            ManifoldModel::Torus { .. } => Frame::Euclidean,
            ManifoldModel::Sphere { .. } => Frame::Sphere,
            ManifoldModel::Projective { .. } => {
                let keep = match current {
                    Some(Frame::Chart { pivot, .. })
                        if state[pivot].abs() >= geometry::PIVOT_HANDOFF =>
                    {
                        Some(pivot)
                    }
                    _ => None,
                };
                let pivot = keep.unwrap_or_else(|| geometry::pivot(state));
                Frame::Chart {
                    pivot,
                    sign: state[pivot].signum(),
                }
            }
        }
    }

    pub(crate) fn to_coords(&self, state: &[f64], frame: Frame) -> Vec<f64> {
        match frame {
            Frame::Euclidean | Frame::Sphere => state.to_vec(),
            Frame::Chart { pivot, .. } => chart_coords(state, pivot),
        }
    }

    pub(crate) fn state_from_coords(&self, coords: &[f64], frame: Frame) -> Vec<f64> {
        match frame {
            Frame::Euclidean => coords.to_vec(),
            Frame::Sphere => geometry::unit(coords),
            Frame::Chart { pivot, sign } => {
                let h = chart_embed(coords, pivot);
                let n = geometry::norm(&h);
                h.iter().map(|x| sign * x / n).collect()
            }
        }
    }

    /// Riemannian gradient expressed in `frame` coordinates.
    pub(crate) fn gradient_in(&self, coords: &[f64], frame: Frame) -> Result<Vec<f64>, EvalError> {
        match (&self.manifold, frame) {
            (ManifoldModel::Torus { metric, .. }, _) => {
                let g = self.field.gradient(coords)?;
                Ok(g.iter().zip(metric).map(|(d, m)| d / m).collect())
            }
            (ManifoldModel::Sphere { .. }, _) => {
                let x = geometry::unit(coords);
                let g = self.field.gradient(&x)?;
                Ok(self.manifold.tangent_project(&x, &g))
            }
            (ManifoldModel::Projective { .. }, Frame::Chart { pivot, .. }) => {
                let d = self.charts[pivot].gradient(coords)?;
                let g = projective_chart_metric(coords);
                let sol = g
                    .cholesky()
                    .expect("round metric is positive definite")
                    .solve(&DVector::from_vec(d));
                Ok(sol.iter().copied().collect())
            }
            (ManifoldModel::Projective { .. }, _) => unreachable!("projective flow needs a chart"),
        }
    }

    /// Derivatives at a point in the local coordinates used by
    /// [`Landscape::retract`].
    pub(crate) fn jet(&self, state: &[f64]) -> Result<LocalJet, EvalError> {
        match &self.manifold {
            ManifoldModel::Torus { metric, .. } => Ok(LocalJet {
                gradient: DVector::from_vec(self.field.gradient(state)?),
                hessian: to_matrix(self.field.hessian(state)?),
                metric: DMatrix::from_diagonal(&DVector::from_column_slice(metric)),
            }),
            ManifoldModel::Sphere { dim } => {
                let x = geometry::unit(state);
                let frame = sphere_frame(&x);
                let e = DMatrix::from_fn(x.len(), *dim, |r, c| frame[c][r]);
                let g = DVector::from_vec(self.field.gradient(&x)?);
                let h = to_matrix(self.field.hessian(&x)?);
                let normal = g.dot(&DVector::from_column_slice(&x));
                let ambient = h - DMatrix::identity(x.len(), x.len()) * normal;
                Ok(LocalJet {
                    gradient: e.transpose() * g,
                    hessian: e.transpose() * ambient * &e,
                    metric: DMatrix::identity(*dim, *dim),
                })
            }
            ManifoldModel::Projective { .. } => {
                let j = geometry::pivot(state);
                let u = chart_coords(state, j);
                Ok(LocalJet {
                    gradient: DVector::from_vec(self.charts[j].gradient(&u)?),
                    hessian: to_matrix(self.charts[j].hessian(&u)?),
                    metric: projective_chart_metric(&u),
                })
            }
        }
    }

    /// Moves from `state` by `delta` in the local coordinates of
    /// [`Landscape::jet`] at that state.
    pub(crate) fn retract(&self, state: &[f64], delta: &[f64]) -> Vec<f64> {
        match &self.manifold {
            ManifoldModel::Torus { .. } => state.iter().zip(delta).map(|(a, b)| a + b).collect(),
            ManifoldModel::Sphere { .. } => {
                let x = geometry::unit(state);
                let frame = sphere_frame(&x);
                let mut y = x.clone();
                for (e, d) in frame.iter().zip(delta) {
                    for (yk, ek) in y.iter_mut().zip(e) {
                        *yk += d * ek;
                    }
                }
                geometry::unit(&y)
            }
            ManifoldModel::Projective { .. } => {
                let j = geometry::pivot(state);
                let u: Vec<f64> = chart_coords(state, j)
                    .iter()
                    .zip(delta)
                    .map(|(a, b)| a + b)
                    .collect();
                let frame = Frame::Chart {
                    pivot: j,
                    sign: state[j].signum(),
                };
                self.state_from_coords(&u, frame)
            }
        }
    }

    /// Riemannian norm of the gradient at a point.
    pub fn gradient_norm(&self, state: &[f64]) -> Result<f64, EvalError> {
        let jet = self.jet(state)?;
        Ok(riemannian_norm(&jet))
    }
}

pub(crate) fn riemannian_norm(jet: &LocalJet) -> f64 {
    match jet.metric.clone().cholesky() {
        Some(c) => jet.gradient.dot(&c.solve(&jet.gradient)).max(0.0).sqrt(),
        None => f64::INFINITY,
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn landscape(manifold: &str, text: &str) -> Landscape {
        let m: ManifoldModel = manifold.parse().unwrap();
        let f = ScalarField::parse(text, m.ambient_dim()).unwrap();
        Landscape::new(m, f).unwrap()
    }

    #[test]
    fn sphere_hessian_at_poles() {
        let l = landscape("sphere2", "x3");
        let north = l.jet(&[0.0, 0.0, 1.0]).unwrap();
        assert!(north.gradient.amax() < 1e-15);
        assert!((north.hessian.clone() + DMatrix::identity(2, 2)).amax() < 1e-15);
        let south = l.jet(&[0.0, 0.0, -1.0]).unwrap();
        assert!((south.hessian - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn chart_fields_agree_with_homogeneous_field() {
        let l = landscape("rp2", "(x2^2+2*x3^2)/(x1^2+x2^2+x3^2)");
        let h = [0.3, -0.8, 0.5];
        let v = l.value(&h).unwrap();
        for j in 0..3 {
            let u = chart_coords(&h, j);
            assert!((l.charts[j].value(&u).unwrap() - v).abs() < 1e-14);
        }
    }

    #[test]
    fn chart_round_trip_preserves_sheet() {
        let l = landscape("rp2", "(x2^2+2*x3^2)/(x1^2+x2^2+x3^2)");
        let s = geometry::unit(&[-0.2, 0.9, -0.4]);
        let frame = l.frame_for(&s, None);
        assert_eq!(frame, Frame::Chart { pivot: 1, sign: 1.0 });
        let back = l.state_from_coords(&l.to_coords(&s, frame), frame);
        for (a, b) in s.iter().zip(&back) {
            assert!((a - b).abs() < 1e-15);
        }
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let frame = l.frame_for(&neg, None);
        let back = l.state_from_coords(&l.to_coords(&neg, frame), frame);
        assert!((back[1] + s[1]).abs() < 1e-15);
    }

    #[test]
    fn retraction_moves_along_local_coordinates() {
        let l = landscape("sphere2", "x3");
        let p = [0.0, 0.0, 1.0];
        let q = l.retract(&p, &[1e-3, 0.0]);
        assert!((geometry::norm(&q) - 1.0).abs() < 1e-15);
        let d: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((d.sqrt() - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn projective_gradient_is_metric_scaled() {
        // On RP^1 with f = x2^2/(x1^2+x2^2), f = sin^2(theta) with theta the
        // line angle, while the metric length element is 2 dtheta.
        let l = landscape("rp1", "x2^2/(x1^2+x2^2)");
        let theta = 0.3_f64;
        let u = theta.tan();
        let frame = Frame::Chart { pivot: 0, sign: 1.0 };
        let g = l.gradient_in(&[u], frame).unwrap()[0];
        // grad in theta units is (df/dtheta)/4; convert with du/dtheta.
        let expected = (2.0 * theta.sin() * theta.cos()) / 4.0 / theta.cos().powi(2);
        assert!((g - expected).abs() < 1e-12);
    }
}
