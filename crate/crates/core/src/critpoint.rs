//! Critical points: Newton search from a seed grid, deduplication, and Morse
//! index classification from the Hessian spectrum.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;
use crate::geometry::ManifoldModel;
use crate::landscape::{riemannian_norm, Landscape, LocalJet};

/// Newton convergence target on the Riemannian gradient norm.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Relative threshold on `min |eig| / max |eig|` below which a point is degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;
/// Points closer than this (canonical coordinates) are merged.
pub const DEDUPE_RADIUS: f64 = 1e-6;
pub const MAX_NEWTON_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum CritError {
    #[error("point is not critical: gradient norm {residual:e} exceeds {RESIDUAL_TOLERANCE:e}")]
    NotCritical { residual: f64 },
    #[error("no seed converged to a critical point")]
    EmptyResult,
    #[error("seed grid resolution must be positive")]
    InvalidResolution,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalPoint {
    /// Position in the list returned by [`find_critical_points`].
    pub id: usize,
    pub location: Vec<f64>,
    pub index: usize,
    /// Eigenvalues of the Hessian relative to the metric, ascending.
    #[serde(rename = "eigenvalues")]
    pub hessian_eigenvalues: Vec<f64>,
    /// Metric-unit eigenvectors in the local coordinates of the point,
    /// paired with `hessian_eigenvalues`.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    pub nondegenerate: bool,
    pub residual: f64,
    pub value: f64,
}

impl CriticalPoint {
    /// Local directions spanning the unstable (negative-eigenvalue) eigenspace.
    pub fn unstable_directions(&self) -> &[Vec<f64>] {
        &self.eigenvectors[..self.index]
    }

    /// Local directions spanning the stable eigenspace.
    pub fn stable_directions(&self) -> &[Vec<f64>] {
        &self.eigenvectors[self.index..]
    }

    pub fn label(&self) -> String {
        format!("c{}", self.id)
    }
}

/// Classifies a point already known to be critical.
pub fn classify(landscape: &Landscape, p: &[f64]) -> Result<CriticalPoint, CritError> {
    let location = landscape.manifold().canonicalize(p).map_err(|_| CritError::NotCritical {
        residual: f64::INFINITY,
    })?;
    let state = landscape.lift(&location);
    let jet = landscape.jet(&state)?;
    let residual = riemannian_norm(&jet);
    if residual.is_nan() || residual > RESIDUAL_TOLERANCE {
        return Err(CritError::NotCritical { residual });
    }
    let (eigenvalues, eigenvectors) = metric_spectrum(&jet);
    let index = eigenvalues.iter().filter(|l| **l < 0.0).count();
    let largest = eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let smallest = eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    let nondegenerate = largest > 0.0 && smallest > DEGENERACY_THRESHOLD * largest;
    Ok(CriticalPoint {
        id: 0,
        value: landscape.value(&state)?,
        location,
        index,
        hessian_eigenvalues: eigenvalues,
        eigenvectors,
        nondegenerate,
        residual,
    })
}

/// Eigen-decomposition of the Hessian relative to the metric: eigenpairs of
/// `G^{-1/2} H G^{-1/2}`, with eigenvectors mapped back by `G^{-1/2}`.
fn metric_spectrum(jet: &LocalJet) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = jet.hessian.nrows();
    let g = SymmetricEigen::new(jet.metric.clone());
    let inv_sqrt = &g.eigenvectors
        * DMatrix::from_diagonal(&g.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * g.eigenvectors.transpose();
    let s = &inv_sqrt * &jet.hessian * &inv_sqrt;
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v: DVector<f64> = &inv_sqrt * eig.eigenvectors.column(i);
            // Fix the sign so the first significant component is positive.
            if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
                if *first < 0.0 {
                    v = -v;
                }
            }
            v.iter().copied().collect()
        })
        .collect();
    (values, vectors)
}

/// Newton iteration on the gradient with backtracking on its squared norm.
fn newton(landscape: &Landscape, seed: &[f64]) -> Option<Vec<f64>> {
    let mut x = landscape.lift(seed);
    let mut jet = landscape.jet(&x).ok()?;
    let mut r = riemannian_norm(&jet);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if r <= 1e-14 {
            break;
        }
        let step = jet.hessian.clone().lu().solve(&(-&jet.gradient))?;
        if step.iter().any(|s| !s.is_finite()) {
            return None;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let delta: Vec<f64> = step.iter().map(|s| alpha * s).collect();
            let y = landscape.retract(&x, &delta);
            if let Ok(jy) = landscape.jet(&y) {
                let ry = riemannian_norm(&jy);
                if ry * ry <= (1.0 - 1e-4 * alpha) * r * r {
                    accepted = Some((y, jy, ry));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((y, jy, ry)) => {
                x = y;
                jet = jy;
                r = ry;
            }
            None => break,
        }
    }
    (r <= RESIDUAL_TOLERANCE).then_some(x)
}

fn seeds(manifold: &ManifoldModel, resolution: usize) -> Vec<Vec<f64>> {
    fn grid(dim: usize, values: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(dim)];
        for _ in 0..dim {
            out = out
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        out
    }
    let r = resolution as f64;
    match manifold {
        ManifoldModel::Torus { dim, .. } => {
            let values: Vec<f64> = (0..resolution).map(|k| k as f64 / r).collect();
            grid(*dim, &values)
        }
        ManifoldModel::Sphere { dim } => {
            let values: Vec<f64> = (0..resolution).map(|k| -1.0 + (2.0 * k as f64 + 1.0) / r).collect();
            grid(dim + 1, &values)
        }
        ManifoldModel::Projective { dim } => {
            let values: Vec<f64> = (0..=resolution).map(|k| -1.0 + 2.0 * k as f64 / r).collect();
            let chart = grid(*dim, &values);
            (0..=*dim)
                .flat_map(|j| {
                    chart.iter().map(move |u| {
                        let mut h = u.clone();
                        h.insert(j, 1.0);
                        h
                    })
                })
                .collect()
        }
    }
}

/// Snap torus coordinates within rounding distance of the identification
/// back to 0 so the representative is stable.
fn tidy(manifold: &ManifoldModel, mut p: Vec<f64>) -> Vec<f64> {
    if let ManifoldModel::Torus { .. } = manifold {
        for x in &mut p {
            if *x > 1.0 - 1e-12 || x.abs() < 1e-15 {
                *x = 0.0;
            }
        }
    }
    p
}

/// Finds, deduplicates and classifies the critical points reachable by
/// Newton's method from a uniform seed grid. Sorted by index, then
/// lexicographically by location; ids follow that order.
pub fn find_critical_points(
    landscape: &Landscape,
    seed_grid_resolution: usize,
) -> Result<Vec<CriticalPoint>, CritError> {
    if seed_grid_resolution == 0 {
        return Err(CritError::InvalidResolution);
    }
    let manifold = landscape.manifold();
    let candidates: Vec<(Vec<f64>, f64)> = seeds(manifold, seed_grid_resolution)
        .par_iter()
        .filter_map(|s| {
            let x = newton(landscape, s)?;
            let r = landscape.gradient_norm(&x).ok()?;
            let c = tidy(manifold, manifold.canonicalize(&x).ok()?);
            Some((c, r))
        })
        .collect();

    // Clusters keep their lowest-residual member; ties go to seed order.
    let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
    for (c, r) in candidates {
        match kept
            .iter_mut()
            .find(|(k, _)| manifold.distance(k, &c) < DEDUPE_RADIUS)
        {
            Some(slot) if r < slot.1 => *slot = (c, r),
            Some(_) => {}
            None => kept.push((c, r)),
        }
    }
    if kept.is_empty() {
        return Err(CritError::EmptyResult);
    }
    let mut points = kept
        .iter()
        .map(|(c, _)| classify(landscape, c))
        .collect::<Result<Vec<_>, _>>()?;
    points.sort_by(|a, b| {
        a.index.cmp(&b.index).then_with(|| {
            a.location
                .iter()
                .zip(&b.location)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    for (i, p) in points.iter_mut().enumerate() {
        p.id = i;
    }
    Ok(points)
}

/// True iff every point is nondegenerate (vacuously true for no points).
pub fn verify_morse(points: &[CriticalPoint]) -> bool {
    points.iter().all(|p| p.nondegenerate)
}

/// Number of critical points of each index `0..=dim`.
pub fn count_by_index(points: &[CriticalPoint], dim: usize) -> Vec<usize> {
    let mut counts = vec![0; dim + 1];
    for p in points {
        if p.index <= dim {
            counts[p.index] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarField;
    use std::f64::consts::PI;

    const TORUS: &str = "cos(2*pi*x1)+cos(2*pi*x2)";

    fn landscape(manifold: &str, text: &str) -> Landscape {
        let m: ManifoldModel = manifold.parse().unwrap();
        let f = ScalarField::parse(text, m.ambient_dim()).unwrap();
        Landscape::new(m, f).unwrap()
    }

    #[test]
    fn torus_critical_points() {
        let l = landscape("torus2", TORUS);
        let pts = find_critical_points(&l, 8).unwrap();
        let summary: Vec<(Vec<f64>, usize)> =
            pts.iter().map(|p| (p.location.clone(), p.index)).collect();
        assert_eq!(
            summary,
            vec![
                (vec![0.5, 0.5], 0),
                (vec![0.0, 0.5], 1),
                (vec![0.5, 0.0], 1),
                (vec![0.0, 0.0], 2),
            ]
        );
        assert!(verify_morse(&pts));
        assert!(pts.iter().all(|p| p.residual <= RESIDUAL_TOLERANCE));
    }

    #[test]
    fn torus_count_is_stable_across_grids() {
        let l = landscape("torus2", TORUS);
        for r in [8, 9, 12, 16] {
            assert_eq!(find_critical_points(&l, r).unwrap().len(), 4, "grid {r}");
        }
    }

    #[test]
    fn torus_hessian_spectra() {
        let l = landscape("torus2", TORUS);
        let k = 4.0 * PI * PI;
        let max = classify(&l, &[0.0, 0.0]).unwrap();
        assert_eq!(max.index, 2);
        for e in &max.hessian_eigenvalues {
            assert!((e + k).abs() < 1e-9);
        }
        let saddle = classify(&l, &[0.0, 0.5]).unwrap();
        assert_eq!(saddle.index, 1);
        assert!((saddle.hessian_eigenvalues[0] + k).abs() < 1e-9);
        assert!((saddle.hessian_eigenvalues[1] - k).abs() < 1e-9);
    }

    #[test]
    fn saddle_of_hyperbolic_paraboloid() {
        let field = ScalarField::parse("x1^2-x2^2", 2).unwrap();
        assert!(Landscape::new(ManifoldModel::torus(2).unwrap(), field.clone()).is_err());
        let flat = Landscape::flat_chart(field);
        let p = classify(&flat, &[0.0, 0.0]).unwrap();
        assert_eq!(p.index, 1);
        assert_eq!(p.hessian_eigenvalues, vec![-2.0, 2.0]);
    }

    #[test]
    fn not_critical_is_reported() {
        let l = landscape("torus2", TORUS);
        assert!(matches!(
            classify(&l, &[0.1, 0.2]),
            Err(CritError::NotCritical { .. })
        ));
    }

    #[test]
    fn sphere_height_function() {
        let l = landscape("sphere2", "x3");
        let pts = find_critical_points(&l, 6).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].index, 0);
        assert!((pts[0].location[2] + 1.0).abs() < 1e-12);
        assert_eq!(pts[1].index, 2);
        assert!((pts[1].location[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projective_plane_quadratic() {
        let l = landscape("rp2", "(x2^2+2*x3^2)/(x1^2+x2^2+x3^2)");
        let pts = find_critical_points(&l, 6).unwrap();
        assert_eq!(pts.len(), 3);
        for (j, p) in pts.iter().enumerate() {
            assert_eq!(p.index, j);
            assert!((p.location[j] - 1.0).abs() < 1e-12);
            assert!(p.nondegenerate);
        }
    }

    #[test]
    fn index_duality() {
        let f = landscape("torus2", "cos(2*pi*x1)+cos(2*pi*x2)+0.3*sin(2*pi*x1)");
        let g = landscape("torus2", "-(cos(2*pi*x1)+cos(2*pi*x2)+0.3*sin(2*pi*x1))");
        let pf = find_critical_points(&f, 8).unwrap();
        for p in &pf {
            let q = classify(&g, &p.location).unwrap();
            assert_eq!(p.index + q.index, 2);
        }
    }

    #[test]
    fn morse_verification() {
        assert!(verify_morse(&[]));
        let l = landscape("torus2", TORUS);
        let mut pts = find_critical_points(&l, 8).unwrap();
        assert!(verify_morse(&pts));
        pts[1].nondegenerate = false;
        assert!(!verify_morse(&pts));
    }

    #[test]
    fn degenerate_point_is_flagged() {
        // cos^3 has a degenerate critical line structure at x1 = 1/4.
        let l = landscape("torus2", "cos(2*pi*x1)^3+cos(2*pi*x2)");
        let p = classify(&l, &[0.25, 0.0]).unwrap();
        assert!(!p.nondegenerate);
    }

    #[test]
    fn points_are_isolated() {
        let l = landscape("torus2", "cos(2*pi*x1)+cos(2*pi*x2)+0.05*cos(2*pi*(x1+x2))");
        let pts = find_critical_points(&l, 16).unwrap();
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                assert!(l.manifold().distance(&a.location, &b.location) > DEDUPE_RADIUS);
            }
        }
    }
}
