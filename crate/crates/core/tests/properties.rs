//! Whole-pipeline properties: metric sanity at scale, invariance of Morse
//! homology under metric and scan changes, and flow energy positivity.

use nalgebra::Cholesky;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use morseflow::critpoint::{find_critical_points, CriticalPoint};
use morseflow::floer::{build_floer_complex, hf_ranks};
use morseflow::flow::{ConnectionCount, FlowSystem, SinkLabel};
use morseflow::gf2chain::{build_complex, homology_ranks};
use morseflow::{Landscape, ManifoldModel, ScalarField};

const TORUS: &str = "cos(2*pi*x1) + cos(2*pi*x2)";

fn landscape(m: ManifoldModel, text: &str) -> Landscape {
    let f = ScalarField::parse(text, m.ambient_dim()).unwrap();
    Landscape::new(m, f).unwrap()
}

fn counts(l: &Landscape, scan: usize) -> (Vec<CriticalPoint>, Vec<ConnectionCount>) {
    let c = find_critical_points(l, 12).unwrap();
    let k = FlowSystem::new(l, &c).count_all(scan).unwrap();
    (c, k)
}

fn ranks(l: &Landscape, scan: usize) -> Vec<usize> {
    let (c, k) = counts(l, scan);
    homology_ranks(&build_complex(&c, &k, l.dim()).unwrap()).unwrap().b
}

#[test]
fn metric_is_spd_at_a_million_points_per_model() {
    let models = [
        ManifoldModel::torus(2).unwrap(),
        ManifoldModel::torus_with_metric(vec![1.0, 1.3]).unwrap(),
        ManifoldModel::sphere(2).unwrap(),
        ManifoldModel::projective(1).unwrap(),
        ManifoldModel::projective(2).unwrap(),
    ];
    const POINTS: usize = 1_000_000;
    const CHUNK: usize = 10_000;
    for (mi, m) in models.iter().enumerate() {
        let d = m.ambient_dim();
        let bad: usize = (0..POINTS / CHUNK)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = ChaCha8Rng::seed_from_u64((mi * 1000 + chunk) as u64);
                let mut bad = 0;
                for _ in 0..CHUNK {
                    let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let Ok(c) = m.canonicalize(&p) else { continue };
                    let g = m.metric(&c).matrix;
                    let symmetric = (&g - g.transpose()).amax() <= 1e-12;
                    if !symmetric || Cholesky::new(g).is_none() {
                        bad += 1;
                    }
                }
                bad
            })
            .sum();
        assert_eq!(bad, 0, "{m}: {bad} points without an SPD metric");
    }
}

#[test]
fn torus_ranks_are_metric_independent() {
    let flat = landscape(ManifoldModel::torus(2).unwrap(), TORUS);
    let skew = landscape(ManifoldModel::torus_with_metric(vec![1.0, 1.3]).unwrap(), TORUS);
    assert_eq!(ranks(&flat, 64), vec![1, 2, 1]);
    assert_eq!(ranks(&skew, 64), vec![1, 2, 1]);
    let (_, k) = counts(&skew, 64);
    assert!(k.iter().all(|c| c.raw_count == 2), "{k:?}");
}

#[test]
fn torus_counts_stable_across_scan_resolutions() {
    let l = landscape(ManifoldModel::torus(2).unwrap(), TORUS);
    let summary = |scan| -> Vec<(usize, usize, usize, u8)> {
        counts(&l, scan)
            .1
            .iter()
            .map(|c| (c.source, c.sink, c.raw_count, c.count_mod2))
            .collect()
    };
    let base = summary(64);
    assert_eq!(base.len(), 4);
    for scan in [128, 256, 512] {
        assert_eq!(summary(scan), base, "scan {scan}");
    }
}

#[test]
fn every_resolved_trajectory_lowers_the_index() {
    for (m, f) in [
        ("torus2", TORUS),
        ("sphere2", "x3"),
        ("rp2", "(x2^2 + 2*x3^2) / (x1^2 + x2^2 + x3^2)"),
        ("torus2", "cos(2*pi*x1) + cos(2*pi*x2) + 0.07*cos(2*pi*(x1 + x2))"),
    ] {
        let l = landscape(m.parse().unwrap(), f);
        let (c, k) = counts(&l, 64);
        for count in &k {
            for t in &count.representatives {
                let (Some(s), Some(e)) = (t.source_label.id(), t.sink_label.id()) else {
                    panic!("unresolved representative in {m}");
                };
                assert!(c[e].index < c[s].index);
                assert!(t.energy > 0.0);
            }
        }
    }
}

#[test]
fn hf_total_matches_betti_sum_on_perturbed_tori() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let delta: f64 = rng.gen_range(0.0..=0.1);
        let l = landscape(
            ManifoldModel::torus(2).unwrap(),
            &format!("{TORUS} + {delta}*cos(2*pi*(x1 + x2))"),
        );
        let (c, k) = counts(&l, 64);
        let b = homology_ranks(&build_complex(&c, &k, 2).unwrap()).unwrap();
        let fc = build_floer_complex(&c, &k, 2, 0.05).unwrap();
        assert_eq!(hf_ranks(&fc).unwrap().total, b.total());
        for row in &fc.differential {
            for x in row.iter().filter(|x| !x.is_zero()) {
                assert!(x.valuation().unwrap() > 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flow_energy_is_positive(x in 0.0..1.0f64, y in 0.0..1.0f64, delta in 0.0..0.1f64) {
        let l = landscape(
            ManifoldModel::torus(2).unwrap(),
            &format!("{TORUS} + {delta}*cos(2*pi*(x1 + x2))"),
        );
        let c = find_critical_points(&l, 12).unwrap();
        let t = FlowSystem::new(&l, &c).integrate(&[x, y], 200.0).unwrap();
        if !t.is_constant() {
            prop_assert!(t.energy > 0.0);
            prop_assert!(t.samples.windows(2).all(|w| w[1].value <= w[0].value + 1e-12));
        }
        let resolved = matches!(t.sink_label, SinkLabel::Critical { .. });
        prop_assert!(resolved);
    }
}
