//! One function per subcommand; each returns the full report text.

use std::path::Path;

use serde::Serialize;

use morseflow::critpoint::{count_by_index, find_critical_points, CriticalPoint};
use morseflow::expr::ScalarField;
use morseflow::floer::{self, ActionWeight, HfRanks};
use morseflow::flow::{ConnectionCount, FlowOptions, FlowSystem, Sample, SinkLabel, Trajectory};
use morseflow::geometry::ManifoldModel;
use morseflow::gf2chain::{self, ChainComplexGF2, HomologyRanks, MorseReport};
use morseflow::landscape::Landscape;
use morseflow::maslov::{self, LagrangianLoop, MaslovError, MaslovIndex};

use crate::config::{Format, RunConfig};
use crate::error::CliError;

/// Representatives in JSON output keep at most this many samples each.
const MAX_REPORTED_SAMPLES: usize = 64;

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn json<T: Serialize>(command: &str, config: &RunConfig, body: T) -> Result<String, CliError> {
    let report = Report {
        command,
        config,
        body,
    };
    let mut s = serde_json::to_string_pretty(&report).map_err(CliError::domain)?;
    s.push('\n');
    Ok(s)
}

fn csv_header(command: &str, config: &RunConfig) -> Result<String, CliError> {
    let c = serde_json::to_string(config).map_err(CliError::domain)?;
    Ok(format!("# command: {command}\n# config: {c}\n"))
}

fn no_csv(command: &str) -> CliError {
    CliError::Usage(format!("{command} has no csv output; use --out json"))
}

fn manifold(config: &RunConfig) -> Result<ManifoldModel, CliError> {
    config
        .manifold
        .parse()
        .map_err(|e: morseflow::geometry::GeometryError| CliError::Usage(e.to_string()))
}

fn landscape(config: &RunConfig) -> Result<Landscape, CliError> {
    let m = manifold(config)?;
    let text = config.function()?;
    let field = ScalarField::parse(text, m.ambient_dim())
        .map_err(|e| CliError::Usage(format!("function `{text}`: {e}")))?;
    Landscape::new(m, field).map_err(|e| CliError::Usage(e.to_string()))
}

fn critical_points(l: &Landscape, config: &RunConfig) -> Result<Vec<CriticalPoint>, CliError> {
    find_critical_points(l, config.grid).map_err(CliError::domain)
}

fn flow_system<'a>(l: &'a Landscape, c: &'a [CriticalPoint], config: &RunConfig) -> FlowSystem<'a> {
    FlowSystem::new(l, c).with_options(FlowOptions {
        t_max: config.t_max,
        ..FlowOptions::default()
    })
}

fn connections_of(
    l: &Landscape,
    c: &[CriticalPoint],
    config: &RunConfig,
) -> Result<Vec<ConnectionCount>, CliError> {
    flow_system(l, c, config).count_all(config.scan).map_err(CliError::domain)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(",")
}

#[derive(Serialize)]
struct PointRecord<'a> {
    id: usize,
    location: &'a [f64],
    index: usize,
    eigenvalues: &'a [f64],
    residual: f64,
    value: f64,
    nondegenerate: bool,
}

fn records(points: &[CriticalPoint]) -> Vec<PointRecord<'_>> {
    points
        .iter()
        .map(|p| PointRecord {
            id: p.id,
            location: &p.location,
            index: p.index,
            eigenvalues: &p.hessian_eigenvalues,
            residual: p.residual,
            value: p.value,
            nondegenerate: p.nondegenerate,
        })
        .collect()
}

pub fn critpoints(config: &RunConfig) -> Result<String, CliError> {
    let l = landscape(config)?;
    let points = critical_points(&l, config)?;
    match config.out {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                morse: bool,
                critical_points: Vec<PointRecord<'a>>,
            }
            json(
                "critpoints",
                config,
                Body {
                    morse: morseflow::verify_morse(&points),
                    critical_points: records(&points),
                },
            )
        }
        Format::Csv => {
            let mut s = csv_header("critpoints", config)?;
            let d = l.manifold().ambient_dim();
            let n = l.dim();
            let mut cols = vec!["id".to_string(), "index".into(), "value".into(), "residual".into()];
            cols.extend((1..=d).map(|i| format!("x{i}")));
            cols.extend((1..=n).map(|i| format!("eig{i}")));
            s.push_str(&cols.join(","));
            s.push('\n');
            for p in &points {
                s.push_str(&format!(
                    "{},{},{:.12e},{:.3e},{},{}\n",
                    p.id,
                    p.index,
                    p.value,
                    p.residual,
                    fmt_list(&p.location),
                    fmt_list(&p.hessian_eigenvalues)
                ));
            }
            Ok(s)
        }
    }
}

fn parse_point(text: &str, dim: usize) -> Result<Vec<f64>, CliError> {
    let p: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--from `{text}`: {e}")))?;
    if p.len() != dim {
        return Err(CliError::Usage(format!(
            "--from has {} coordinates, the manifold needs {dim}",
            p.len()
        )));
    }
    Ok(p)
}

pub fn flow(config: &RunConfig, from: &str) -> Result<String, CliError> {
    let l = landscape(config)?;
    let start = parse_point(from, l.manifold().ambient_dim())?;
    let points = critical_points(&l, config)?;
    let traj = flow_system(&l, &points, config)
        .integrate(&start, config.t_max)
        .map_err(CliError::domain)?;
    match config.out {
        Format::Csv => {
            let mut s = csv_header("flow", config)?;
            s.push_str(&format!("# from: {from}\n"));
            let mut cols = vec!["t".to_string()];
            cols.extend((1..=start.len()).map(|i| format!("x{i}")));
            cols.push("f".into());
            s.push_str(&cols.join(","));
            s.push('\n');
            for smp in &traj.samples {
                s.push_str(&format!("{:.12e},{},{:.12e}\n", smp.t, fmt_list(&smp.point), smp.value));
            }
            Ok(s)
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                from: &'a [f64],
                trajectory: &'a Trajectory,
            }
            json(
                "flow",
                config,
                Body {
                    from: &start,
                    trajectory: &traj,
                },
            )
        }
    }
}

#[derive(Serialize)]
struct TrajectoryView<'a> {
    source_label: &'a SinkLabel,
    sink_label: &'a SinkLabel,
    energy: f64,
    sample_count: usize,
    samples: Vec<&'a Sample>,
}

/// Evenly spaced subset of the samples, always keeping both ends.
fn thin(samples: &[Sample]) -> Vec<&Sample> {
    let m = samples.len();
    if m <= MAX_REPORTED_SAMPLES {
        return samples.iter().collect();
    }
    (0..MAX_REPORTED_SAMPLES)
        .map(|k| &samples[k * (m - 1) / (MAX_REPORTED_SAMPLES - 1)])
        .collect()
}

#[derive(Serialize)]
struct ConnectionView<'a> {
    source: usize,
    sink: usize,
    count_mod2: u8,
    raw_count: usize,
    resolution_warning: bool,
    boundary_parameters: &'a [f64],
    representatives: Vec<TrajectoryView<'a>>,
}

fn view(c: &ConnectionCount) -> ConnectionView<'_> {
    ConnectionView {
        source: c.source,
        sink: c.sink,
        count_mod2: c.count_mod2,
        raw_count: c.raw_count,
        resolution_warning: c.resolution_warning,
        boundary_parameters: &c.boundary_parameters,
        representatives: c
            .representatives
            .iter()
            .map(|t| TrajectoryView {
                source_label: &t.source_label,
                sink_label: &t.sink_label,
                energy: t.energy,
                sample_count: t.samples.len(),
                samples: thin(&t.samples),
            })
            .collect(),
    }
}

pub fn connections(config: &RunConfig) -> Result<String, CliError> {
    let l = landscape(config)?;
    let points = critical_points(&l, config)?;
    let counts = connections_of(&l, &points, config)?;
    match config.out {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                critical_points: Vec<PointRecord<'a>>,
                connections: Vec<ConnectionView<'a>>,
            }
            json(
                "connections",
                config,
                Body {
                    critical_points: records(&points),
                    connections: counts.iter().map(view).collect(),
                },
            )
        }
        Format::Csv => {
            let mut s = csv_header("connections", config)?;
            s.push_str("source,sink,source_index,sink_index,count_mod2,raw_count,resolution_warning\n");
            for c in &counts {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    c.source,
                    c.sink,
                    points[c.source].index,
                    points[c.sink].index,
                    c.count_mod2,
                    c.raw_count,
                    c.resolution_warning
                ));
            }
            Ok(s)
        }
    }
}

#[derive(Serialize)]
struct BoundaryView {
    degree: usize,
    rows: usize,
    cols: usize,
    bitstrings: Vec<String>,
}

fn boundaries(c: &ChainComplexGF2) -> Vec<BoundaryView> {
    c.boundaries
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, m)| BoundaryView {
            degree: k,
            rows: m.rows(),
            cols: m.cols(),
            bitstrings: m.to_bitstrings(),
        })
        .collect()
}

struct Morse {
    points: Vec<CriticalPoint>,
    counts: Vec<ConnectionCount>,
    complex: ChainComplexGF2,
    ranks: HomologyRanks,
}

fn morse_homology(l: &Landscape, config: &RunConfig) -> Result<Morse, CliError> {
    let points = critical_points(l, config)?;
    let counts = connections_of(l, &points, config)?;
    let complex = gf2chain::build_complex(&points, &counts, l.dim()).map_err(CliError::domain)?;
    let ranks = gf2chain::homology_ranks(&complex).map_err(CliError::domain)?;
    Ok(Morse {
        points,
        counts,
        complex,
        ranks,
    })
}

pub fn homology(config: &RunConfig) -> Result<String, CliError> {
    if config.out == Format::Csv {
        return Err(no_csv("homology"));
    }
    let l = landscape(config)?;
    let m = morse_homology(&l, config)?;
    #[derive(Serialize)]
    struct Body<'a> {
        critical_points_per_degree: Vec<usize>,
        generators: &'a [Vec<usize>],
        boundaries: Vec<BoundaryView>,
        d_squared_zero: bool,
        ranks: &'a [usize],
        morse_inequalities: MorseReport,
    }
    json(
        "homology",
        config,
        Body {
            critical_points_per_degree: count_by_index(&m.points, l.dim()),
            generators: &m.complex.generators,
            boundaries: boundaries(&m.complex),
            d_squared_zero: gf2chain::verify_d_squared(&m.complex),
            ranks: &m.ranks.b,
            morse_inequalities: gf2chain::morse_inequalities(&m.points, &m.ranks),
        },
    )
}

pub fn arnold(config: &RunConfig) -> Result<String, CliError> {
    if config.out == Format::Csv {
        return Err(no_csv("arnold"));
    }
    let l = landscape(config)?;
    let m = morse_homology(&l, config)?;
    #[derive(Serialize)]
    struct Body<'a> {
        ranks: &'a [usize],
        bound: usize,
        critical_points: usize,
    }
    json(
        "arnold",
        config,
        Body {
            ranks: &m.ranks.b,
            bound: floer::arnold_bound(&m.ranks),
            critical_points: m.points.len(),
        },
    )
}

/// Function used by `floer` when none is given.
pub fn default_floer_function(base: &str) -> Option<&'static str> {
    match base {
        "torus2" => Some("cos(2*pi*x1) + cos(2*pi*x2)"),
        "circle" => Some("cos(2*pi*x1)"),
        _ => None,
    }
}

pub fn floer(config: &RunConfig) -> Result<String, CliError> {
    if config.out == Format::Csv {
        return Err(no_csv("floer"));
    }
    if !matches!(manifold(config)?, ManifoldModel::Torus { .. }) {
        return Err(CliError::Usage(format!(
            "floer needs a torus base (torus2, circle or torusN:k), got {}",
            config.manifold
        )));
    }
    let l = landscape(config)?;
    let m = morse_homology(&l, config)?;
    let fc = floer::build_floer_complex(&m.points, &m.counts, l.dim(), config.epsilon)
        .map_err(CliError::domain)?;
    let hf = floer::hf_ranks(&fc).map_err(CliError::domain)?;
    let reduction_matches_morse = floer::reduce_at_one(&fc) == m.complex.boundaries;
    let mut strip_checks = Vec::new();
    for c in &m.counts {
        for t in &c.representatives {
            strip_checks.push(
                floer::strip_area_check(&l, &m.points, t, config.epsilon).map_err(CliError::domain)?,
            );
        }
    }
    #[derive(Serialize)]
    struct StripView<'a> {
        #[serde(flatten)]
        weight: &'a ActionWeight,
        agrees: bool,
    }
    #[derive(Serialize)]
    struct Body<'a> {
        generators: &'a [floer::Generator],
        differential: Vec<Vec<String>>,
        hf_ranks: &'a HfRanks,
        morse_ranks: &'a [usize],
        reduction_matches_morse: bool,
        arnold_bound: usize,
        strip_checks: Vec<StripView<'a>>,
    }
    json(
        "floer",
        config,
        Body {
            generators: &fc.generators,
            differential: fc
                .differential
                .iter()
                .map(|row| row.iter().map(|x| x.to_string()).collect())
                .collect(),
            hf_ranks: &hf,
            morse_ranks: &m.ranks.b,
            reduction_matches_morse,
            arnold_bound: floer::arnold_bound(&m.ranks),
            strip_checks: strip_checks
                .iter()
                .map(|w| StripView {
                    weight: w,
                    agrees: w.agrees(),
                })
                .collect(),
        },
    )
}

pub fn maslov(config: &RunConfig, path: &Path) -> Result<String, CliError> {
    if config.out == Format::Csv {
        return Err(no_csv("maslov"));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let lp = LagrangianLoop::from_csv(&text).map_err(|e| match e {
        MaslovError::Csv { .. } => CliError::Usage(format!("{}: {e}", path.display())),
        other => CliError::domain(other),
    })?;
    let index = maslov::maslov_index(&lp).map_err(CliError::domain)?;
    #[derive(Serialize)]
    struct Body<'a> {
        #[serde(rename = "loop")]
        loop_file: String,
        half_dimension: usize,
        maslov: &'a MaslovIndex,
    }
    json(
        "maslov",
        config,
        Body {
            loop_file: path.display().to_string(),
            half_dimension: lp.half_dimension(),
            maslov: &index,
        },
    )
}
