//! Negative gradient flow and mod-2 counting of connecting trajectories.
//!
//! Connecting orbits between points of adjacent index are found as basin
//! boundaries on a small sphere around the source inside its unstable
//! eigenspace. Basins are labeled by sink together with a lift (the integer
//! deck translation on the torus, the sheet sign on projective space), so that
//! arcs sinking to the same point along different homotopy classes are told
//! apart.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::critpoint::CriticalPoint;
use crate::expr::EvalError;
use crate::geometry::{self, GeometryError, ManifoldModel};
use crate::landscape::Landscape;
use crate::ode::{self, Tolerance};

pub const CAPTURE_RADIUS: f64 = 1e-4;
pub const CAPTURE_DWELL: usize = 10;
pub const SEED_RADIUS: f64 = 1e-3;
pub const BISECTION_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_T_MAX: f64 = 200.0;
pub const RELATIVE_TOLERANCE: f64 = 1e-9;
pub const ABSOLUTE_TOLERANCE: f64 = 1e-12;
/// Boundaries closer than this many scan cells trigger a resolution warning.
pub const WARNING_CELLS: f64 = 4.0;
/// Closest approach to a critical point that identifies the limit of a
/// bisection with an orbit ending there.
pub const PASSAGE_RADIUS: f64 = 1e-2;
const MAX_STEP: f64 = 0.05;
const INITIAL_STEP: f64 = 1e-3;
const MIN_STEP: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FlowError {
    #[error("step size underflow at t = {t}")]
    StepCollapse { t: f64, state: Vec<f64> },
    #[error("no capture before t_max = {t_max}")]
    NoConvergence { trajectory: Box<Trajectory>, t_max: f64 },
    #[error("index difference between c{upper} and c{lower} is {gap}, expected 1")]
    IndexGap { upper: usize, lower: usize, gap: i64 },
    #[error("c{id} has index 0 and no unstable directions")]
    NoUnstableDirections { id: usize },
    #[error("c{id} is degenerate")]
    Degenerate { id: usize },
    #[error("connections c{upper} -> c{lower} need a seed sphere of dimension at most 1 on one end")]
    UnsupportedIndex { upper: usize, lower: usize },
    #[error("scan resolution must be at least 2")]
    InvalidResolution,
    #[error("t_max must be positive and finite")]
    InvalidTime,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Limit of a trajectory: a critical point together with its lift.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkLabel {
    Critical { id: usize, lift: Vec<i64> },
    Unresolved,
}

impl SinkLabel {
    pub fn id(&self) -> Option<usize> {
        match self {
            SinkLabel::Critical { id, .. } => Some(*id),
            SinkLabel::Unresolved => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Along `-grad f`.
    Descending,
    /// Along `+grad f`.
    Ascending,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    /// Lifted state: see [`crate::landscape`].
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub source_label: SinkLabel,
    pub sink_label: SinkLabel,
    /// `f(start) - f(end)`.
    pub energy: f64,
}

impl Trajectory {
    pub fn is_constant(&self) -> bool {
        self.samples
            .windows(2)
            .all(|w| w[0].point == w[1].point)
    }

    /// Same curve traversed backwards, with times `T - t`.
    fn reversed(mut self) -> Trajectory {
        let t_end = self.samples.last().map_or(0.0, |s| s.t);
        self.samples.reverse();
        for s in &mut self.samples {
            s.t = t_end - s.t;
        }
        std::mem::swap(&mut self.source_label, &mut self.sink_label);
        self.energy = -self.energy;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConnectionCount {
    pub source: usize,
    pub sink: usize,
    pub count_mod2: u8,
    pub raw_count: usize,
    pub representatives: Vec<Trajectory>,
    pub resolution_warning: bool,
    /// Seed-sphere parameters of the connecting orbits.
    pub boundary_parameters: Vec<f64>,
}

/// Which seed sphere a count is computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Unstable sphere of the source when its index is at most 2, otherwise
    /// the stable sphere of the sink.
    Auto,
    Unstable,
    Stable,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Capture {
    Any,
    /// Only minima (descending) or maxima (ascending) absorb a trajectory.
    Extremal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    pub t_max: f64,
    pub seed_radius: f64,
    pub capture_radius: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            t_max: DEFAULT_T_MAX,
            seed_radius: SEED_RADIUS,
            capture_radius: CAPTURE_RADIUS,
        }
    }
}

/// A landscape with its critical points, ready for flow computations.
pub struct FlowSystem<'a> {
    landscape: &'a Landscape,
    critical: &'a [CriticalPoint],
    options: FlowOptions,
}

enum Ending {
    Captured(SinkLabel),
    TimedOut,
}

/// Unit-speed parametrization of a seed sphere of dimension 0 or 1.
struct SeedSphere<'a> {
    center: Vec<f64>,
    directions: &'a [Vec<f64>],
    radius: f64,
}

impl SeedSphere<'_> {
    fn offset(&self, theta: f64) -> Vec<f64> {
        match self.directions {
            [d] => {
                let s = if theta.rem_euclid(1.0) < 0.5 { 1.0 } else { -1.0 };
                d.iter().map(|x| s * self.radius * x).collect()
            }
            [a, b] => {
                let (s, c) = (std::f64::consts::TAU * theta).sin_cos();
                a.iter()
                    .zip(b)
                    .map(|(x, y)| self.radius * (c * x + s * y))
                    .collect()
            }
            _ => unreachable!("seed spheres are circles or point pairs"),
        }
    }
}

impl<'a> FlowSystem<'a> {
    pub fn new(landscape: &'a Landscape, critical: &'a [CriticalPoint]) -> Self {
        FlowSystem {
            landscape,
            critical,
            options: FlowOptions::default(),
        }
    }

    pub fn with_options(mut self, options: FlowOptions) -> Self {
        self.options = options;
        self
    }

    pub fn options(&self) -> FlowOptions {
        self.options
    }

    pub fn critical_points(&self) -> &[CriticalPoint] {
        self.critical
    }

    /// Flows `start` along `-grad f` until capture or `t_max`.
    pub fn integrate(&self, start: &[f64], t_max: f64) -> Result<Trajectory, FlowError> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(FlowError::InvalidTime);
        }
        let canonical = self.landscape.manifold().canonicalize(start)?;
        let state = self.lift(&canonical);
        let source = self
            .nearest(&state, Direction::Descending, Capture::Any)
            .map_or(SinkLabel::Unresolved, |(label, _)| label);
        let (traj, ending) = self.run(state, Direction::Descending, Capture::Any, t_max, source)?;
        match ending {
            Ending::Captured(_) => Ok(traj),
            Ending::TimedOut => Err(FlowError::NoConvergence {
                trajectory: Box::new(traj),
                t_max,
            }),
        }
    }

    /// Labels seeds on the unstable sphere of `p` by their sink. Index-1
    /// sources have two seeds at parameters 0 and 1/2; index-2 sources have
    /// `resolution` seeds at `(k + 1/2) / resolution` around a circle.
    pub fn basin_scan(
        &self,
        p: &CriticalPoint,
        resolution: usize,
    ) -> Result<Vec<(f64, SinkLabel)>, FlowError> {
        if p.index == 0 {
            return Err(FlowError::NoUnstableDirections { id: p.id });
        }
        if p.index > 2 {
            return Err(FlowError::UnsupportedIndex {
                upper: p.id,
                lower: p.id,
            });
        }
        let sphere = self.seed_sphere(p, p.unstable_directions());
        let params = scan_parameters(p.index, resolution)?;
        params
            .par_iter()
            .map(|&theta| {
                let label = self.seed_label(&sphere, p.id, Direction::Descending, Capture::Any, theta)?;
                Ok((theta, label))
            })
            .collect()
    }

    pub fn count_connecting(
        &self,
        p: &CriticalPoint,
        q: &CriticalPoint,
        resolution: usize,
    ) -> Result<ConnectionCount, FlowError> {
        self.count_connecting_via(p, q, resolution, Route::Auto)
    }

    pub fn count_connecting_via(
        &self,
        p: &CriticalPoint,
        q: &CriticalPoint,
        resolution: usize,
        route: Route,
    ) -> Result<ConnectionCount, FlowError> {
        let gap = p.index as i64 - q.index as i64;
        if gap != 1 {
            return Err(FlowError::IndexGap {
                upper: p.id,
                lower: q.id,
                gap,
            });
        }
        for c in [p, q] {
            if !c.nondegenerate {
                return Err(FlowError::Degenerate { id: c.id });
            }
        }
        let n = self.landscape.dim();
        let route = match route {
            Route::Auto if p.index <= 2 => Route::Unstable,
            Route::Auto if n - q.index <= 2 => Route::Stable,
            Route::Auto => return Err(FlowError::UnsupportedIndex { upper: p.id, lower: q.id }),
            r => r,
        };
        match route {
            Route::Unstable if p.index <= 2 => {
                let found = self.boundary_limits(p, Direction::Descending, resolution)?;
                Ok(assemble(p.id, q.id, q.id, found, false))
            }
            Route::Stable if n - q.index <= 2 => {
                let found = self.boundary_limits(q, Direction::Ascending, resolution)?;
                Ok(assemble(p.id, q.id, p.id, found, true))
            }
            _ => Err(FlowError::UnsupportedIndex { upper: p.id, lower: q.id }),
        }
    }

    /// Counts for every ordered pair of critical points of adjacent index.
    pub fn count_all(&self, resolution: usize) -> Result<Vec<ConnectionCount>, FlowError> {
        let n = self.landscape.dim();
        let mut out = Vec::new();
        for p in self.critical.iter().filter(|p| p.index >= 1) {
            let sinks: Vec<&CriticalPoint> = self
                .critical
                .iter()
                .filter(|q| q.index + 1 == p.index)
                .collect();
            if sinks.is_empty() {
                continue;
            }
            if p.index <= 2 {
                for c in std::iter::once(p).chain(sinks.iter().copied()) {
                    if !c.nondegenerate {
                        return Err(FlowError::Degenerate { id: c.id });
                    }
                }
                let found = self.boundary_limits(p, Direction::Descending, resolution)?;
                for q in sinks {
                    out.push(assemble(p.id, q.id, q.id, found.clone(), false));
                }
            } else {
                for q in sinks {
                    if n - q.index > 2 {
                        return Err(FlowError::UnsupportedIndex { upper: p.id, lower: q.id });
                    }
                    out.push(self.count_connecting_via(p, q, resolution, Route::Stable)?);
                }
            }
        }
        out.sort_by_key(|c| (c.source, c.sink));
        Ok(out)
    }

    /// Connecting orbits leaving the seed sphere of `center`, as
    /// (parameter, limit trajectory) pairs. A flag records whether any two
    /// are closer than the warning distance.
    fn boundary_limits(
        &self,
        center: &CriticalPoint,
        direction: Direction,
        resolution: usize,
    ) -> Result<Found, FlowError> {
        let dirs = match direction {
            Direction::Descending => center.unstable_directions(),
            Direction::Ascending => center.stable_directions(),
        };
        let sphere = self.seed_sphere(center, dirs);
        let k = dirs.len();
        let params = scan_parameters(k, resolution)?;
        let boundaries: Vec<f64> = if k == 1 {
            // Each of the two seeds is itself a connecting orbit candidate.
            params
        } else {
            let labels: Vec<SinkLabel> = params
                .par_iter()
                .map(|&t| self.seed_label(&sphere, center.id, direction, Capture::Extremal, t))
                .collect::<Result<_, _>>()?;
            let r = params.len();
            let cells: Vec<Vec<f64>> = (0..r)
                .into_par_iter()
                .map(|i| {
                    let j = (i + 1) % r;
                    let a = params[i];
                    let b = if j == 0 { params[0] + 1.0 } else { params[j] };
                    if self.is_stationary(&labels[i], direction) {
                        Ok(vec![a])
                    } else if self.is_stationary(&labels[j], direction) || labels[i] == labels[j] {
                        Ok(Vec::new())
                    } else {
                        let mut acc = Vec::new();
                        self.bisect(&sphere, center.id, direction, a, b, &labels[i], &labels[j], &mut acc)?;
                        Ok(acc)
                    }
                })
                .collect::<Result<_, FlowError>>()?;
            cells.into_iter().flatten().map(|t| t.rem_euclid(1.0)).collect()
        };
        let limits: Vec<(f64, Trajectory)> = boundaries
            .par_iter()
            .map(|&theta| {
                let state = self.landscape.retract(&sphere.center, &sphere.offset(theta));
                let source = SinkLabel::Critical {
                    id: center.id,
                    lift: self.lift_of(center, &sphere.center),
                };
                let (traj, _) = self.run(state, direction, Capture::Any, self.options.t_max, source)?;
                Ok((theta, self.settle_at_passage(traj, center, direction)))
            })
            .collect::<Result<_, FlowError>>()?;
        let warning = k == 2 && too_close(&boundaries, WARNING_CELLS / resolution as f64);
        Ok(Found { limits, warning })
    }

    /// A bisection limit shadows a connecting orbit only up to its closest
    /// approach to the next critical point, after which it peels off. If the
    /// run was not captured there, cut it at that approach and label it by
    /// the point passed.
    fn settle_at_passage(&self, traj: Trajectory, center: &CriticalPoint, direction: Direction) -> Trajectory {
        if let Some(id) = traj.sink_label.id() {
            if !self.is_extremal(&self.critical[id], direction) {
                return traj;
            }
        }
        let next = match direction {
            Direction::Descending => center.index.checked_sub(1),
            Direction::Ascending => Some(center.index + 1),
        };
        let best = self
            .critical
            .iter()
            .filter(|c| Some(c.index) == next)
            .flat_map(|c| {
                traj.samples
                    .iter()
                    .enumerate()
                    .map(move |(i, s)| (c, i, self.distance_to(c, &s.point)))
            })
            .min_by(|a, b| a.2.total_cmp(&b.2));
        match best {
            Some((c, i, d)) if d < PASSAGE_RADIUS => {
                let mut samples = traj.samples;
                samples.truncate(i + 1);
                let lift = self.lift_of(c, &samples[i].point);
                Trajectory {
                    energy: samples[0].value - samples[i].value,
                    samples,
                    source_label: traj.source_label,
                    sink_label: SinkLabel::Critical { id: c.id, lift },
                }
            }
            _ => traj,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn bisect(
        &self,
        sphere: &SeedSphere,
        center: usize,
        direction: Direction,
        mut a: f64,
        mut b: f64,
        la: &SinkLabel,
        lb: &SinkLabel,
        acc: &mut Vec<f64>,
    ) -> Result<(), FlowError> {
        while b - a > BISECTION_TOLERANCE {
            let m = 0.5 * (a + b);
            let lm = self.seed_label(sphere, center, direction, Capture::Extremal, m)?;
            if &lm == la {
                a = m;
            } else if &lm == lb {
                b = m;
            } else if self.is_stationary(&lm, direction) {
                acc.push(m);
                return Ok(());
            } else {
                self.bisect(sphere, center, direction, a, m, la, &lm, acc)?;
                self.bisect(sphere, center, direction, m, b, &lm, lb, acc)?;
                return Ok(());
            }
        }
        acc.push(0.5 * (a + b));
        Ok(())
    }

    /// True when an extremal-capture run ended parked at a non-extremal point.
    fn is_stationary(&self, label: &SinkLabel, direction: Direction) -> bool {
        match label {
            SinkLabel::Critical { id, .. } => !self.is_extremal(&self.critical[*id], direction),
            SinkLabel::Unresolved => false,
        }
    }

    fn is_extremal(&self, c: &CriticalPoint, direction: Direction) -> bool {
        match direction {
            Direction::Descending => c.index == 0,
            Direction::Ascending => c.index == self.landscape.dim(),
        }
    }

    fn seed_sphere<'d>(&self, c: &CriticalPoint, directions: &'d [Vec<f64>]) -> SeedSphere<'d> {
        SeedSphere {
            center: self.lift(&c.location),
            directions,
            radius: self.options.seed_radius,
        }
    }

    fn seed_label(
        &self,
        sphere: &SeedSphere,
        center: usize,
        direction: Direction,
        capture: Capture,
        theta: f64,
    ) -> Result<SinkLabel, FlowError> {
        let state = self.landscape.retract(&sphere.center, &sphere.offset(theta));
        let source = SinkLabel::Critical {
            id: center,
            lift: self.lift_of(&self.critical[center], &sphere.center),
        };
        let (traj, _) = self.run(state, direction, capture, self.options.t_max, source)?;
        Ok(traj.sink_label)
    }

    fn lift(&self, p: &[f64]) -> Vec<f64> {
        self.landscape.lift(p)
    }

    fn lift_of(&self, c: &CriticalPoint, state: &[f64]) -> Vec<i64> {
        match self.landscape.manifold() {
            ManifoldModel::Torus { .. } => state
                .iter()
                .zip(&c.location)
                .map(|(y, x)| (y - x).round() as i64)
                .collect(),
            ManifoldModel::Sphere { .. } => Vec::new(),
            ManifoldModel::Projective { .. } => {
                let d = geometry::dot(state, &geometry::unit(&c.location));
                vec![if d >= 0.0 { 1 } else { -1 }]
            }
        }
    }

    /// Distance from a lifted state to the nearest lift of `c`.
    fn distance_to(&self, c: &CriticalPoint, state: &[f64]) -> f64 {
        match self.landscape.manifold() {
            ManifoldModel::Torus { .. } => state
                .iter()
                .zip(&c.location)
                .map(|(y, x)| {
                    let d = y - x;
                    (d - d.round()).powi(2)
                })
                .sum::<f64>()
                .sqrt(),
            ManifoldModel::Sphere { .. } => state
                .iter()
                .zip(&c.location)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt(),
            ManifoldModel::Projective { .. } => {
                let u = geometry::unit(&c.location);
                let s = if geometry::dot(state, &u) >= 0.0 { 1.0 } else { -1.0 };
                state
                    .iter()
                    .zip(&u)
                    .map(|(a, b)| (a - s * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    /// Nearest admissible critical point within the capture ball.
    fn nearest(
        &self,
        state: &[f64],
        direction: Direction,
        capture: Capture,
    ) -> Option<(SinkLabel, f64)> {
        self.critical
            .iter()
            .filter(|c| capture == Capture::Any || self.is_extremal(c, direction))
            .map(|c| (c, self.distance_to(c, state)))
            .filter(|(_, d)| *d < self.options.capture_radius)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, d)| {
                (
                    SinkLabel::Critical {
                        id: c.id,
                        lift: self.lift_of(c, state),
                    },
                    d,
                )
            })
    }

    fn run(
        &self,
        start: Vec<f64>,
        direction: Direction,
        capture: Capture,
        t_max: f64,
        source: SinkLabel,
    ) -> Result<(Trajectory, Ending), FlowError> {
        let sign = match direction {
            Direction::Descending => -1.0,
            Direction::Ascending => 1.0,
        };
        let tol = Tolerance {
            relative: RELATIVE_TOLERANCE,
            absolute: ABSOLUTE_TOLERANCE,
        };
        let mut state = start;
        let mut frame = self.landscape.frame_for(&state, None);
        let mut t = 0.0;
        let mut h = INITIAL_STEP;
        let mut samples = vec![Sample {
            t,
            point: state.clone(),
            value: self.landscape.value(&state)?,
        }];
        // Label of the ball currently occupied and the number of steps spent in it.
        let mut dwell: Option<(SinkLabel, usize)> = None;
        let mut roaming: Option<(SinkLabel, usize)> = None;
        let ending = loop {
            if t >= t_max {
                break Ending::TimedOut;
            }
            h = h.min(MAX_STEP).min(t_max - t);
            let coords = self.landscape.to_coords(&state, frame);
            let step = ode::dopri5(
                |c: &[f64]| -> Result<Vec<f64>, EvalError> {
                    let g = self.landscape.gradient_in(c, frame)?;
                    Ok(g.into_iter().map(|x| sign * x).collect())
                },
                &coords,
                h,
                tol,
            )?;
            if step.error <= 1.0 && step.y.iter().all(|x| x.is_finite()) {
                t += h;
                state = self.landscape.state_from_coords(&step.y, frame);
                frame = self.landscape.frame_for(&state, Some(frame));
                samples.push(Sample {
                    t,
                    point: state.clone(),
                    value: self.landscape.value(&state)?,
                });
                let here = self.nearest(&state, direction, capture).map(|(l, _)| l);
                dwell = advance(dwell, here);
                if let Some((label, count)) = &dwell {
                    if *count >= CAPTURE_DWELL {
                        break Ending::Captured(label.clone());
                    }
                }
                if capture == Capture::Extremal {
                    let parked = self.nearest(&state, direction, Capture::Any).map(|(l, _)| l);
                    roaming = advance(roaming, parked);
                }
            }
            h = ode::next_step(h, if step.error.is_finite() { step.error } else { 1e10 });
            if h < MIN_STEP {
                return Err(FlowError::StepCollapse { t, state });
            }
        };
        let sink = match &ending {
            Ending::Captured(label) => label.clone(),
            Ending::TimedOut => match roaming {
                Some((label, count)) if count >= CAPTURE_DWELL => label,
                _ => SinkLabel::Unresolved,
            },
        };
        let energy = samples[0].value - samples.last().expect("nonempty").value;
        let traj = Trajectory {
            samples,
            source_label: source,
            sink_label: sink,
            energy,
        };
        Ok((traj, ending))
    }
}

fn advance(
    current: Option<(SinkLabel, usize)>,
    here: Option<SinkLabel>,
) -> Option<(SinkLabel, usize)> {
    match (current, here) {
        (Some((l, c)), Some(h)) if l == h => Some((l, c + 1)),
        (_, Some(h)) => Some((h, 1)),
        (_, None) => None,
    }
}

#[derive(Clone)]
struct Found {
    limits: Vec<(f64, Trajectory)>,
    warning: bool,
}

/// Builds the count for `source -> sink`, where `target` is the critical
/// point the scanned trajectories must reach.
fn assemble(
    source: usize,
    sink: usize,
    target: usize,
    found: Found,
    reverse: bool,
) -> ConnectionCount {
    let mut params = Vec::new();
    let mut reps = Vec::new();
    for (theta, traj) in found.limits {
        if traj.sink_label.id() == Some(target) {
            params.push(theta);
            reps.push(if reverse { traj.reversed() } else { traj });
        }
    }
    ConnectionCount {
        source,
        sink,
        count_mod2: (reps.len() % 2) as u8,
        raw_count: reps.len(),
        representatives: reps,
        resolution_warning: found.warning,
        boundary_parameters: params,
    }
}

fn scan_parameters(k: usize, resolution: usize) -> Result<Vec<f64>, FlowError> {
    match k {
        1 => Ok(vec![0.0, 0.5]),
        2 if resolution >= 2 => Ok((0..resolution)
            .map(|i| (i as f64 + 0.5) / resolution as f64)
            .collect()),
        2 => Err(FlowError::InvalidResolution),
        _ => unreachable!("seed spheres of dimension > 1 are not scanned"),
    }
}

fn too_close(params: &[f64], limit: f64) -> bool {
    let mut sorted = params.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() < 2 {
        return false;
    }
    let wrap = sorted[0] + 1.0 - sorted[sorted.len() - 1];
    wrap < limit || sorted.windows(2).any(|w| w[1] - w[0] < limit)
}

/// Convenience wrapper over [`FlowSystem::integrate`].
pub fn integrate(
    landscape: &Landscape,
    critical: &[CriticalPoint],
    start: &[f64],
    t_max: f64,
) -> Result<Trajectory, FlowError> {
    FlowSystem::new(landscape, critical).integrate(start, t_max)
}

/// Convenience wrapper over [`FlowSystem::count_connecting`].
pub fn count_connecting(
    landscape: &Landscape,
    critical: &[CriticalPoint],
    p: &CriticalPoint,
    q: &CriticalPoint,
    resolution: usize,
) -> Result<ConnectionCount, FlowError> {
    FlowSystem::new(landscape, critical).count_connecting(p, q, resolution)
}

/// Convenience wrapper over [`FlowSystem::basin_scan`].
pub fn basin_scan(
    landscape: &Landscape,
    critical: &[CriticalPoint],
    p: &CriticalPoint,
    resolution: usize,
) -> Result<Vec<(f64, SinkLabel)>, FlowError> {
    FlowSystem::new(landscape, critical).basin_scan(p, resolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critpoint::find_critical_points;
    use crate::expr::ScalarField;

    const TORUS: &str = "cos(2*pi*x1) + cos(2*pi*x2)";

    fn setup(manifold: &str, text: &str) -> (Landscape, Vec<CriticalPoint>) {
        let m: ManifoldModel = manifold.parse().unwrap();
        let f = ScalarField::parse(text, m.ambient_dim()).unwrap();
        let l = Landscape::new(m, f).unwrap();
        let c = find_critical_points(&l, 12).unwrap();
        (l, c)
    }

    fn at<'c>(c: &'c [CriticalPoint], loc: &[f64]) -> &'c CriticalPoint {
        c.iter()
            .find(|p| p.location.iter().zip(loc).all(|(a, b)| (a - b).abs() < 1e-8))
            .unwrap()
    }

    #[test]
    fn sphere_flows_to_south_pole() {
        let (l, c) = setup("sphere2", "x3");
        let traj = integrate(&l, &c, &[1.0, 0.0, 0.0], DEFAULT_T_MAX).unwrap();
        let south = at(&c, &[0.0, 0.0, -1.0]);
        assert_eq!(traj.sink_label.id(), Some(south.id));
        assert!(traj.energy > 0.99);
    }

    #[test]
    fn torus_segment_flows_to_minimum() {
        let (l, c) = setup("torus2", TORUS);
        let traj = integrate(&l, &c, &[0.25, 0.5], DEFAULT_T_MAX).unwrap();
        assert_eq!(traj.sink_label.id(), Some(at(&c, &[0.5, 0.5]).id));
        let end = &traj.samples.last().unwrap().point;
        assert!((end[0] - 0.5).abs() < CAPTURE_RADIUS && (end[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn critical_start_is_constant() {
        let (l, c) = setup("torus2", TORUS);
        let min = at(&c, &[0.5, 0.5]);
        let traj = integrate(&l, &c, &min.location, 10.0).unwrap();
        assert_eq!(traj.source_label, traj.sink_label);
        assert!(traj.energy.abs() < 1e-15);
        for s in &traj.samples {
            assert!((s.point[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn values_decrease_along_samples() {
        let (l, c) = setup("torus2", TORUS);
        let traj = integrate(&l, &c, &[0.1, 0.37], DEFAULT_T_MAX).unwrap();
        for w in traj.samples.windows(2) {
            assert!(w[1].value <= w[0].value + 1e-9);
        }
        assert!(traj.energy > 0.0);
    }

    #[test]
    fn timeout_reports_partial_trajectory() {
        let (l, c) = setup("torus2", TORUS);
        match integrate(&l, &c, &[0.1, 0.37], 0.01) {
            Err(FlowError::NoConvergence { trajectory, .. }) => {
                assert_eq!(trajectory.sink_label, SinkLabel::Unresolved);
                assert!((trajectory.samples.last().unwrap().t - 0.01).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(integrate(&l, &c, &[0.1, 0.2], 0.0), Err(FlowError::InvalidTime));
    }

    #[test]
    fn torus_saddle_to_minimum_has_two_lines() {
        let (l, c) = setup("torus2", TORUS);
        let p = at(&c, &[0.0, 0.5]);
        let q = at(&c, &[0.5, 0.5]);
        let count = count_connecting(&l, &c, p, q, 64).unwrap();
        assert_eq!((count.raw_count, count.count_mod2), (2, 0));
        for r in &count.representatives {
            assert!(r.energy > 0.0);
        }
    }

    #[test]
    fn torus_maximum_to_saddles_has_two_lines_each() {
        let (l, c) = setup("torus2", TORUS);
        let p = at(&c, &[0.0, 0.0]);
        for q in [at(&c, &[0.0, 0.5]), at(&c, &[0.5, 0.0])] {
            let count = count_connecting(&l, &c, p, q, 64).unwrap();
            assert_eq!((count.raw_count, count.count_mod2), (2, 0));
            assert!(!count.resolution_warning);
        }
    }

    #[test]
    fn stable_route_agrees_with_unstable_route() {
        let (l, c) = setup("torus2", TORUS);
        let s = FlowSystem::new(&l, &c);
        let p = at(&c, &[0.0, 0.0]);
        let q = at(&c, &[0.0, 0.5]);
        let fwd = s.count_connecting_via(p, q, 64, Route::Unstable).unwrap();
        let bwd = s.count_connecting_via(p, q, 64, Route::Stable).unwrap();
        assert_eq!(fwd.raw_count, bwd.raw_count);
        for r in &bwd.representatives {
            assert_eq!(r.source_label.id(), Some(p.id));
            assert_eq!(r.sink_label.id(), Some(q.id));
            assert!(r.energy > 0.0);
            assert!(r.samples.windows(2).all(|w| w[1].t >= w[0].t));
        }
    }

    #[test]
    fn sphere_index_gap() {
        let (l, c) = setup("sphere2", "x3");
        let n = at(&c, &[0.0, 0.0, 1.0]);
        let s = at(&c, &[0.0, 0.0, -1.0]);
        assert!(matches!(
            count_connecting(&l, &c, n, s, 64),
            Err(FlowError::IndexGap { gap: 2, .. })
        ));
    }

    #[test]
    fn basin_scan_examples() {
        let (l, c) = setup("torus2", TORUS);
        let min = at(&c, &[0.5, 0.5]);
        assert!(matches!(
            basin_scan(&l, &c, min, 16),
            Err(FlowError::NoUnstableDirections { .. })
        ));
        let saddle = at(&c, &[0.0, 0.5]);
        let pair = basin_scan(&l, &c, saddle, 16).unwrap();
        assert_eq!(pair.len(), 2);
        assert!(pair.iter().all(|(_, s)| s.id() == Some(min.id)));
        assert_ne!(pair[0].1, pair[1].1);

        let max = at(&c, &[0.0, 0.0]);
        let ring = basin_scan(&l, &c, max, 64).unwrap();
        assert!(ring.iter().all(|(_, s)| s.id() == Some(min.id)));
        let mut distinct: Vec<&SinkLabel> = ring.iter().map(|(_, s)| s).collect();
        distinct.dedup();
        if distinct.first() == distinct.last() && distinct.len() > 1 {
            distinct.pop();
        }
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn projective_plane_counts() {
        let (l, c) = setup("rp2", "(x2^2+2*x3^2)/(x1^2+x2^2+x3^2)");
        let all = FlowSystem::new(&l, &c).count_all(64).unwrap();
        assert_eq!(all.len(), 2);
        for cc in &all {
            assert_eq!(cc.raw_count, 2);
        }
    }

    #[test]
    fn counts_are_deterministic() {
        let (l, c) = setup("torus2", TORUS);
        let s = FlowSystem::new(&l, &c);
        assert_eq!(s.count_all(64).unwrap(), s.count_all(64).unwrap());
    }

    #[test]
    fn warning_on_close_boundaries() {
        assert!(too_close(&[0.1, 0.1 + 1e-3], 0.01));
        assert!(too_close(&[0.001, 0.999], 0.01));
        assert!(!too_close(&[0.1, 0.6], 0.01));
    }
}
