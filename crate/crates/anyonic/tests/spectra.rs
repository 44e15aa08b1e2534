use anyonic::category::{build_fibonacci, FibVariant};
use anyonic::cylinder::Cylinder;
use anyonic::linalg::{c64, Sparse};
use anyonic::pipeline::{braiding_stage, lattice_category, spectrum_stage, tube_stage, ConfigFile, Model, Settings, SpectrumStage};
use anyonic::spectra::{
    calibrate, eigendecompose_with, isotropic_velocity, refined_velocity, rescale, sort_canonical,
    spin_from_translation, to_csv, Method, SpectrumRecord, CSV_HEADER,
};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn record(delta: f64, spin: f64, sector: &str) -> SpectrumRecord {
    SpectrumRecord {
        index: 99,
        delta,
        gap: delta,
        spin,
        sector: sector.into(),
        weights: vec![(sector.into(), 1.0)],
        weight_max: 1.0,
        lambda_re: (-delta).exp(),
        lambda_im: 0.0,
        flagged: false,
    }
}

fn yang_lee_spectrum(flux: &str) -> SpectrumStage {
    let settings = Settings::resolve(ConfigFile {
        model: Some("yang-lee".into()),
        l: Some(12),
        flux: Some(flux.into()),
        n_states: Some(16),
        sizes: Some(vec![8, 10, 12]),
        ..ConfigFile::default()
    })
    .unwrap();
    let cat = lattice_category(Model::YangLee).unwrap();
    let braiding = braiding_stage(&cat, 1e-10).unwrap();
    let tubes = tube_stage(&cat, &braiding, settings.seed).unwrap();
    spectrum_stage(&tubes, &braiding, &settings).unwrap()
}

fn trivial_flux() -> &'static SpectrumStage {
    static CELL: OnceLock<SpectrumStage> = OnceLock::new();
    CELL.get_or_init(|| yang_lee_spectrum("1"))
}

fn line_flux() -> &'static SpectrumStage {
    static CELL: OnceLock<SpectrumStage> = OnceLock::new();
    CELL.get_or_init(|| yang_lee_spectrum("tau"))
}

#[test]
fn calibration_rejects_degenerate_input() {
    assert!(calibrate(&[(8, 1.0), (10, 1.0)], 1.0).is_err());
    assert!(calibrate(&[(8, 1.0), (8, 1.0), (8, 1.0)], 1.0).is_err());
}

#[test]
fn spin_reduction_window() {
    // L = 12: period 6, window (-3, 3]
    assert!((spin_from_translation(c64::from_polar(1.0, 2.0 * PI * 3.0 / 6.0), 12) - 3.0).abs() < 1e-12);
    assert!((spin_from_translation(c64::from_polar(1.0, -2.0 * PI * 0.2 / 6.0), 12) + 0.2).abs() < 1e-12);
    assert_eq!(spin_from_translation(c64::new(2.5, 0.0), 12), 0.0);
}

#[test]
fn csv_layout() {
    let mut r = record(-1e-9, -0.0, "P_{1,11\u{304}}");
    r.lambda_re = 0.123456789012345;
    let text = to_csv(&[r]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(
        lines.next(),
        Some("99,0.000000,0.000000,\"P_{1,11\u{304}}\",1.000000,1.23456789012e-1,0.00000000000e0,false")
    );
    assert_eq!(lines.next(), None);
}

#[test]
fn canonical_order() {
    let mut rs = vec![
        record(0.6, 1.0, "a"),
        record(0.6, -1.0, "a"),
        record(-0.4, 0.0, "b"),
        record(0.6 + 1e-9, -1.0, "a"),
        record(0.2, 0.2, "b"),
        record(0.2, 0.2, "a"),
    ];
    sort_canonical(&mut rs);
    let keys: Vec<(f64, f64, &str)> = rs.iter().map(|r| (r.delta, r.spin, r.sector.as_str())).collect();
    assert_eq!(keys[0], (-0.4, 0.0, "b"));
    assert_eq!((keys[1].2, keys[2].2), ("a", "b"));
    // equal at printed precision: falls back to sector, then λ
    assert_eq!(keys[3].1, -1.0);
    assert_eq!(keys[5], (0.6, 1.0, "a"));
    assert!(rs.iter().enumerate().all(|(i, r)| r.index == i));
}

#[test]
fn refined_velocity_uses_ground_sector() {
    let rs = vec![
        record(-0.4, 0.0, "g"),
        record(0.0, 0.0, "u"),
        record(0.3, 1.0, "u"),
        record(0.8, 1.0, "g"),
    ];
    let v = refined_velocity(&rs, 2.0).unwrap();
    assert!((v - 2.0 * 1.2).abs() < 1e-12);
    assert!(refined_velocity(&rs[..2], 2.0).is_none());
}

#[test]
fn subspace_iteration_agrees_with_dense() {
    let cyl = Cylinder::new(build_fibonacci(FibVariant::Galois), 1).unwrap();
    for flux in 0..2 {
        let basis = cyl.build_ring_basis(10, flux).unwrap();
        let t = cyl.build_transfer_matrix(&basis).unwrap();
        let dense = eigendecompose_with(&t, 8, 0x5EED, usize::MAX).unwrap();
        let sub = eigendecompose_with(&t, 8, 0x5EED, 0).unwrap();
        assert_eq!(dense.method, Method::Dense);
        assert_eq!(sub.method, Method::Subspace);
        for (a, b) in dense.values.iter().zip(&sub.values) {
            assert!((a - b).norm() < 1e-9 * dense.values[0].norm(), "{a} vs {b}");
        }
        assert!(sub.residuals.iter().all(|&r| r < 1e-8));
    }
}

#[test]
fn yang_lee_ground_sector() {
    let s = trivial_flux();
    let g = &s.records[0];
    assert_eq!(g.sector, "P_{1,\u{3c4}\u{3c4}\u{304}}");
    assert!((g.delta + 0.4).abs() < 1e-9);
    assert!(g.weight_max >= 0.99);
    assert!(g.lambda_re > 0.0 && g.lambda_im.abs() < 1e-12 * g.lambda_re);
    let identity = s.records.iter().find(|r| r.sector == "P_{1,11\u{304}}").unwrap();
    assert!(identity.delta.abs() < 0.02, "{}", identity.delta);
    // refinement pins the first descendant of the ground sector at Δ_0 + 1
    assert!(s.refined);
    let desc: Vec<_> = s.records.iter().filter(|r| (r.delta - 0.6).abs() < 1e-6).collect();
    assert_eq!(desc.len(), 2);
    assert!(desc.iter().all(|r| (r.spin.abs() - 1.0).abs() < 1e-9));
    assert!((s.velocity / isotropic_velocity() - 1.0).abs() < 0.1);
    assert!((s.calibration.c_eff - 0.4).abs() < 0.05, "{}", s.calibration.c_eff);
}

#[test]
fn trivial_flux_spins_are_integers_and_weights_sum_to_one() {
    for r in &trivial_flux().records {
        assert!((r.spin - r.spin.round()).abs() < 1e-8, "{r:?}");
        let total: f64 = r.weights.iter().map(|w| w.1).sum();
        assert!((total - 1.0).abs() < 1e-8);
        assert_eq!(r.weights.len(), 2);
    }
    assert!(trivial_flux().reports.iter().all(|r| r.passed));
}

#[test]
fn line_flux_sector_spins() {
    let s = line_flux();
    assert!(s.reports.iter().all(|r| r.passed));
    for r in &s.records {
        let total: f64 = r.weights.iter().map(|w| w.1).sum();
        assert!((total - 1.0).abs() < 1e-8);
        assert_eq!(r.weights.len(), 3);
        let frac = r.spin - r.spin.round();
        match r.sector.as_str() {
            "P_{\u{3c4},\u{3c4}1\u{304}}" => assert!((frac + 0.2).abs() < 1e-8, "{r:?}"),
            "P_{\u{3c4},1\u{3c4}\u{304}}" => assert!((frac - 0.2).abs() < 1e-8, "{r:?}"),
            _ => assert!(frac.abs() < 1e-8, "{r:?}"),
        }
    }
    // the defect spectrum contains the untwisted ground state
    assert!((s.records[0].delta + 0.4).abs() < 1e-9);
    let pair: Vec<_> = s.records.iter().filter(|r| (r.spin.abs() - 0.2).abs() < 1e-8).take(2).collect();
    assert!((pair[0].delta - pair[1].delta).abs() < 1e-9);
    assert!((pair[0].delta + 0.2).abs() < 0.01);
}

fn arb_sparse() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, f64, f64)>)> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        (Just(r), Just(c), prop::collection::vec((0..r, 0..c, -2.0..2.0f64, -2.0..2.0f64), 0..40))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn calibration_recovers_synthetic_data(
        f in -2.0..2.0f64,
        c in -1.0..2.0f64,
        v in 0.5..2.0f64,
        mut sizes in prop::collection::btree_set(4usize..40, 3..7),
    ) {
        let samples: Vec<(usize, f64)> = std::mem::take(&mut sizes)
            .into_iter()
            .map(|l| (l, -f * l as f64 + PI * v * c / (6.0 * l as f64)))
            .collect();
        let cal = calibrate(&samples, v).unwrap();
        prop_assert!((cal.free_energy - f).abs() < 1e-9);
        prop_assert!((cal.c_eff - c).abs() < 1e-8);
        prop_assert!(cal.rms_residual < 1e-9);
    }

    #[test]
    fn spin_round_trip(l in (2usize..20).prop_map(|h| 2 * h), s in -0.999..1.0f64) {
        let period = l as f64 / 2.0;
        let s = s * period / 2.0;
        let mu = c64::from_polar(0.7, 2.0 * PI * s / period);
        prop_assert!((spin_from_translation(mu, l) - s).abs() < 1e-9);
    }

    #[test]
    fn rescale_preserves_ratios_and_inverts(
        gaps in prop::collection::vec(0.0..5.0f64, 1..10),
        v0 in 0.5..2.0f64,
        v1 in 0.5..2.0f64,
        d0 in -1.0..1.0f64,
    ) {
        let mut rs: Vec<SpectrumRecord> = gaps.iter().map(|&g| {
            let mut r = record(d0 + g, 0.0, "x");
            r.gap = g;
            r
        }).collect();
        rescale(&mut rs, v0, v1, d0);
        for (r, g) in rs.iter().zip(&gaps) {
            prop_assert!((r.gap - g * v0 / v1).abs() < 1e-12);
            prop_assert!((r.delta - d0 - r.gap).abs() < 1e-12);
        }
        rescale(&mut rs, v1, v0, d0);
        for (r, g) in rs.iter().zip(&gaps) {
            prop_assert!((r.gap - g).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_matches_dense((r, c, entries) in arb_sparse(), x in prop::collection::vec(-1.0..1.0f64, 12)) {
        let mut rows = vec![Vec::new(); r];
        for &(i, j, re, im) in &entries {
            rows[i].push((j, c64::new(re, im)));
        }
        let s = Sparse::from_rows(r, c, rows);
        let d = s.to_dense();
        let x: Vec<c64> = x[..c].iter().map(|&t| c64::new(t, -t / 2.0)).collect();
        let y = s.apply(&x);
        for i in 0..r {
            let want: c64 = (0..c).map(|j| d[(i, j)] * x[j]).sum();
            prop_assert!((y[i] - want).norm() < 1e-12);
        }
        let sq = s.mul_sparse(&Sparse::identity(c));
        prop_assert!((0..r).all(|i| (0..c).all(|j| (sq.get(i, j) - d[(i, j)]).norm() < 1e-14)));
    }
}

#[test]
fn cut_never_splits_a_degenerate_pair() {
    for s in [trivial_flux(), line_flux()] {
        assert!(s.records.len() >= 16);
        assert!(s.records.iter().all(|r| !r.flagged), "{:?}", s.records.iter().find(|r| r.flagged));
    }
}

#[test]
fn unitary_fibonacci_central_charge() {
    // Hard hexagons at the positive critical fugacity: three-state Potts, c = 4/5.
    // The ground state is only smooth in L along sizes that differ by 6.
    let cyl = Cylinder::new(build_fibonacci(FibVariant::Unitary), 1).unwrap();
    let samples: Vec<(usize, f64)> = [12, 18, 24]
        .into_iter()
        .map(|l| {
            let basis = cyl.build_ring_basis(l, 0).unwrap();
            let t = cyl.build_transfer_matrix(&basis).unwrap();
            let sol = eigendecompose_with(&t, 1, 0x5EED, 0).unwrap();
            assert_eq!(sol.method, Method::Subspace);
            (l, sol.values[0].norm().ln())
        })
        .collect();
    let cal = calibrate(&samples, isotropic_velocity()).unwrap();
    assert!((cal.c_eff - 0.8).abs() < 0.05, "{}", cal.c_eff);
}
