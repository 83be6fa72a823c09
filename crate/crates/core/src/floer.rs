//! Floer complex of the zero section and the graph of `eps * df` in the
//! cotangent bundle of a flat torus, built from Morse data.
//!
//! Generators are the critical points graded by Morse index. A connecting
//! gradient line `u` from `p` to `q` gives the strip
//! `Psi(u)(s, t) = (u(s), t * eps * df(u(s)))`, whose symplectic area is
//! `eps * (f(p) - f(q))`; nonzero entries of the differential carry that area
//! as their Novikov exponent.

use serde::Serialize;
use thiserror::Error;

use crate::critpoint::CriticalPoint;
use crate::expr::EvalError;
use crate::flow::{ConnectionCount, SinkLabel, Trajectory};
use crate::geometry::ManifoldModel;
use crate::gf2chain::{self, BitMatrix, ChainError, HomologyRanks};
use crate::landscape::Landscape;
use crate::novikov::{lambda_rank, Novikov, NovikovError, DEFAULT_CEILING};

pub const DEFAULT_EPSILON: f64 = 0.05;
/// Relative agreement required between quadrature and analytic strip areas.
pub const AREA_TOLERANCE: f64 = 1e-6;
const MAX_SUBDIVISION: usize = 64;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FloerError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Novikov(#[from] NovikovError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("epsilon must be positive and finite")]
    InvalidEpsilon,
    #[error("differential does not square to zero over the Novikov field")]
    NotAComplex,
    #[error("nonzero entry c{upper} -> c{lower} has nonpositive weight {weight}")]
    NonPositiveWeight { upper: usize, lower: usize, weight: f64 },
    #[error("strip quadrature only supports flat torus bases")]
    UnsupportedBase,
    #[error("trajectory endpoints are not resolved critical points")]
    UnresolvedEndpoints,
    #[error("quadrature error estimate {estimate:e} exceeds {tolerance:e}")]
    QuadratureFailure { estimate: f64, tolerance: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Generator {
    pub id: usize,
    pub degree: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloerComplex {
    pub generators: Vec<Generator>,
    /// Square matrix; entry `[q][p]` is the coefficient of `q` in `d(p)`,
    /// indexed by position in `generators`.
    pub differential: Vec<Vec<Novikov>>,
    pub epsilon: f64,
    pub top_degree: usize,
}

impl FloerComplex {
    fn positions(&self, degree: usize) -> Vec<usize> {
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.degree == degree)
            .map(|(i, _)| i)
            .collect()
    }

    /// Block of the differential from degree `k` to degree `k - 1`.
    pub fn block(&self, k: usize) -> Vec<Vec<Novikov>> {
        let cols = self.positions(k);
        let rows = if k == 0 { Vec::new() } else { self.positions(k - 1) };
        rows.iter()
            .map(|&r| cols.iter().map(|&c| self.differential[r][c].clone()).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HfRanks {
    pub per_degree: Vec<usize>,
    pub total: usize,
}

/// Quadrature and analytic symplectic area of one strip.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionWeight {
    pub source: usize,
    pub sink: usize,
    pub analytic: f64,
    pub quadrature: f64,
    pub error_estimate: f64,
}

impl ActionWeight {
    pub fn agrees(&self) -> bool {
        (self.analytic - self.quadrature).abs() <= AREA_TOLERANCE * (1.0 + self.analytic.abs())
    }
}

pub fn build_floer_complex(
    points: &[CriticalPoint],
    counts: &[ConnectionCount],
    n: usize,
    epsilon: f64,
) -> Result<FloerComplex, FloerError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(FloerError::InvalidEpsilon);
    }
    // Validates coverage of adjacent-index pairs.
    gf2chain::build_complex(points, counts, n)?;
    let generators: Vec<Generator> = points
        .iter()
        .map(|p| Generator {
            id: p.id,
            degree: p.index,
            value: p.value,
        })
        .collect();
    let at = |id: usize| generators.iter().position(|g| g.id == id).expect("validated");
    let m = generators.len();
    let mut differential = vec![vec![Novikov::zero(DEFAULT_CEILING); m]; m];
    for c in counts.iter().filter(|c| c.count_mod2 == 1) {
        let (ip, iq) = (at(c.source), at(c.sink));
        let weight = epsilon * (generators[ip].value - generators[iq].value);
        if weight <= 0.0 {
            return Err(FloerError::NonPositiveWeight {
                upper: c.source,
                lower: c.sink,
                weight,
            });
        }
        differential[iq][ip] = Novikov::monomial(weight, DEFAULT_CEILING);
    }
    Ok(FloerComplex {
        generators,
        differential,
        epsilon,
        top_degree: n,
    })
}

pub fn verify_d_squared(c: &FloerComplex) -> Result<bool, FloerError> {
    let m = c.generators.len();
    for i in 0..m {
        for j in 0..m {
            let mut acc = Novikov::zero(DEFAULT_CEILING);
            for k in 0..m {
                let term = c.differential[i][k].mul(&c.differential[k][j])?;
                acc = acc.add(&term)?;
            }
            if !acc.is_zero() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

pub fn hf_ranks(c: &FloerComplex) -> Result<HfRanks, FloerError> {
    if !verify_d_squared(c)? {
        return Err(FloerError::NotAComplex);
    }
    let ranks: Vec<usize> = (0..=c.top_degree + 1)
        .map(|k| if k > c.top_degree { Ok(0) } else { lambda_rank(&c.block(k)) })
        .collect::<Result<_, _>>()?;
    let per_degree: Vec<usize> = (0..=c.top_degree)
        .map(|k| c.positions(k).len() - ranks[k] - ranks[k + 1])
        .collect();
    let total = per_degree.iter().sum();
    Ok(HfRanks { per_degree, total })
}

/// Boundary matrices obtained by sending every `T^c` to 1.
pub fn reduce_at_one(c: &FloerComplex) -> Vec<BitMatrix> {
    (0..=c.top_degree)
        .map(|k| {
            let b = c.block(k);
            let cols = c.positions(k).len();
            let mut m = BitMatrix::zeros(b.len(), cols);
            for (r, row) in b.iter().enumerate() {
                for (col, x) in row.iter().enumerate() {
                    m.set(r, col, x.exponents().len() % 2 == 1);
                }
            }
            m
        })
        .collect()
}

/// Lower bound on fixed points of a nondegenerate Hamiltonian diffeomorphism.
pub fn arnold_bound(b: &HomologyRanks) -> usize {
    b.total()
}

const GL2: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];
const GL3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// `omega_0(a, b)` for `omega_0 = sum dx_i ^ dy_i`, vectors laid out as `(x, y)`.
fn omega0(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() / 2;
    (0..n).map(|i| a[i] * b[n + i] - a[n + i] * b[i]).sum()
}

struct Strip<'a> {
    landscape: &'a Landscape,
    metric: &'a [f64],
    epsilon: f64,
}

impl Strip<'_> {
    fn velocity(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let g = self.landscape.field().gradient(x)?;
        Ok(g.iter().zip(self.metric).map(|(d, m)| -d / m).collect())
    }

    /// Area density `omega_0(d_t Psi, d_s Psi)` at strip coordinates `(s, t)`,
    /// given the curve point and velocity.
    fn density(&self, x: &[f64], dx: &[f64], t: f64) -> Result<f64, EvalError> {
        let n = x.len();
        let df = self.landscape.field().gradient(x)?;
        let hess = self.landscape.field().hessian(x)?;
        let mut ds = vec![0.0; 2 * n];
        let mut dt = vec![0.0; 2 * n];
        for i in 0..n {
            ds[i] = dx[i];
            ds[n + i] = t * self.epsilon * (0..n).map(|j| hess[i][j] * dx[j]).sum::<f64>();
            dt[n + i] = self.epsilon * df[i];
        }
        Ok(omega0(&dt, &ds))
    }

    /// Integral over `[s0, s1] x [0, 1]` of the density along the cubic
    /// Hermite curve through the endpoint samples, with both rules.
    fn cell(
        &self,
        (s0, x0, v0): (f64, &[f64], &[f64]),
        (s1, x1, v1): (f64, &[f64], &[f64]),
        pieces: usize,
    ) -> Result<(f64, f64), EvalError> {
        let h = s1 - s0;
        let n = x0.len();
        let curve = |tau: f64| {
            let (t2, t3) = (tau * tau, tau * tau * tau);
            let (h00, h10, h01, h11) = (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + tau, -2.0 * t3 + 3.0 * t2, t3 - t2);
            let (d00, d10, d01, d11) = (6.0 * t2 - 6.0 * tau, 3.0 * t2 - 4.0 * tau + 1.0, -6.0 * t2 + 6.0 * tau, 3.0 * t2 - 2.0 * tau);
            let x: Vec<f64> = (0..n)
                .map(|i| h00 * x0[i] + h10 * h * v0[i] + h01 * x1[i] + h11 * h * v1[i])
                .collect();
            let dx: Vec<f64> = (0..n)
                .map(|i| (d00 * x0[i] + d01 * x1[i]) / h + d10 * v0[i] + d11 * v1[i])
                .collect();
            (x, dx)
        };
        let mut totals = (0.0, 0.0);
        for piece in 0..pieces {
            let a = piece as f64 / pieces as f64;
            let w = 1.0 / pieces as f64;
            let rule = |nodes: &[(f64, f64)]| -> Result<f64, EvalError> {
                let mut acc = 0.0;
                for &(sn, sw) in nodes {
                    let (x, dx) = curve(a + w * 0.5 * (sn + 1.0));
                    for &(tn, tw) in &GL2 {
                        acc += sw * tw * self.density(&x, &dx, 0.5 * (tn + 1.0))?;
                    }
                }
                // Jacobians: ds = h w / 2 per s-node, dt = 1/2 per t-node.
                Ok(acc * h * w * 0.25)
            };
            totals.0 += rule(&GL3)?;
            totals.1 += rule(&GL2)?;
        }
        Ok(totals)
    }
}

/// Numerically integrates the symplectic area of the strip over a
/// connecting trajectory, adding quadratic-model corrections for the pieces
/// inside the seed sphere and the capture ball.
pub fn strip_area_check(
    landscape: &Landscape,
    critical: &[CriticalPoint],
    traj: &Trajectory,
    epsilon: f64,
) -> Result<ActionWeight, FloerError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(FloerError::InvalidEpsilon);
    }
    let ManifoldModel::Torus { metric, .. } = landscape.manifold() else {
        return Err(FloerError::UnsupportedBase);
    };
    let (SinkLabel::Critical { id: source, .. }, SinkLabel::Critical { id: sink, .. }) =
        (&traj.source_label, &traj.sink_label)
    else {
        return Err(FloerError::UnresolvedEndpoints);
    };
    let (p, q) = (&critical[*source], &critical[*sink]);
    let analytic = epsilon * (p.value - q.value);
    let strip = Strip {
        landscape,
        metric,
        epsilon,
    };
    let samples = &traj.samples;
    let velocities: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| strip.velocity(&s.point))
        .collect::<Result<_, _>>()?;
    // Demanding a relative agreement well inside the acceptance tolerance.
    let tolerance = 0.1 * AREA_TOLERANCE * (1.0 + analytic.abs());
    let mut pieces = 1;
    let (sampled, estimate) = loop {
        let mut fine = 0.0;
        let mut estimate = 0.0;
        for k in 1..samples.len() {
            let (a, b) = (&samples[k - 1], &samples[k]);
            if b.t <= a.t {
                continue;
            }
            let (i3, i2) = strip.cell(
                (a.t, &a.point, &velocities[k - 1]),
                (b.t, &b.point, &velocities[k]),
                pieces,
            )?;
            fine += i3;
            estimate += (i3 - i2).abs();
        }
        if estimate <= tolerance {
            break (fine, estimate);
        }
        if pieces >= MAX_SUBDIVISION {
            return Err(FloerError::QuadratureFailure { estimate, tolerance });
        }
        pieces *= 2;
    };
    let head = -epsilon * quadratic_model(landscape, p, &samples[0].point)?;
    let tail = epsilon * quadratic_model(landscape, q, &samples[samples.len() - 1].point)?;
    Ok(ActionWeight {
        source: p.id,
        sink: q.id,
        analytic,
        quadrature: sampled + head + tail,
        error_estimate: estimate,
    })
}

/// `f(x) - f(c)` from the second-order expansion at the critical point `c`,
/// for `x` near some lift of `c`.
fn quadratic_model(landscape: &Landscape, c: &CriticalPoint, x: &[f64]) -> Result<f64, EvalError> {
    let d: Vec<f64> = x
        .iter()
        .zip(&c.location)
        .map(|(a, b)| {
            let e = a - b;
            e - e.round()
        })
        .collect();
    let h = landscape.field().hessian(&c.location)?;
    let n = d.len();
    Ok(0.5
        * (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| d[i] * h[i][j] * d[j])
            .sum::<f64>())
}
