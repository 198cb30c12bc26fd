//! Property-style invariants: domain mapping, solver agreement, metric
//! symmetries and search-result guarantees.

mod common;

use common::max_rel_mismatch;
use nalgebra::DMatrix;
use num_complex::Complex64;
use penstab::deformation::{self, MatchStrategy, SweepVariant};
use penstab::model::fixtures;
use penstab::pencils::{self, Interfacing, PcScheme, PencilForm};
use penstab::spectra;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// map_z_to_s inverts z = exp(s h) on the principal strip.
    #[test]
    fn z_to_s_round_trip(re in -50.0..10.0f64, im in -30.0..30.0f64, h in 1e-4..0.09f64) {
        prop_assume!(im.abs() * h < std::f64::consts::PI * 0.95);
        let s = Complex64::new(re, im);
        let z = (s * h).exp();
        let back = spectra::map_z_to_s(z, h).unwrap();
        prop_assert!((back - s).norm() <= 1e-12 * (1.0 + s.norm()));
    }

    /// Deformation metrics are invariant under conjugating both arguments.
    #[test]
    fn metrics_conjugation_invariance(
        re in -20.0..-0.01f64,
        im in 0.01..20.0f64,
        dre in -0.5..0.5f64,
        dim in -0.5..0.5f64,
    ) {
        let s = Complex64::new(re, im);
        let s_hat = s + Complex64::new(dre, dim);
        let rel = deformation::relative_error(s, s_hat).unwrap();
        let rel_conj = deformation::relative_error(s.conj(), s_hat.conj()).unwrap();
        prop_assert!((rel - rel_conj).abs() <= 1e-12 * (1.0 + rel));
        let dd = deformation::damping_deformation(s, s_hat).unwrap();
        let dd_conj = deformation::damping_deformation(s.conj(), s_hat.conj()).unwrap();
        prop_assert!((dd - dd_conj).abs() <= 1e-12 * (1.0 + dd.abs()));
    }

    /// Generalized solver with E = I agrees with the dense solver.
    #[test]
    fn generalized_with_identity_matches_dense(
        n in 1usize..12,
        seed in 0u64..1000,
    ) {
        let ssm = fixtures::random_ssm(seed, n, 0, 1e3);
        let a = ssm.fx().clone();
        let e = DMatrix::identity(n, n);
        let dense = spectra::eig_dense(&a).unwrap();
        let gen = spectra::eig_generalized(&e, &a).unwrap();
        prop_assert_eq!(gen.infinite_multiplicity(), 0);
        let worst = max_rel_mismatch(dense.eigenvalues(), gen.eigenvalues());
        prop_assert!(worst <= 1e-10, "mismatch {}", worst);
    }

    /// Finite count plus infinite multiplicity equals the pencil dimension.
    #[test]
    fn eigenvalue_count_is_conserved(seed in 0u64..500) {
        let nu = 1 + (seed % 4) as usize;
        let mu = (seed % 5) as usize;
        let ssm = fixtures::random_ssm(seed, nu, mu, 100.0);
        let sparse = pencils::pencil_dae(&ssm, PencilForm::Sparse).unwrap();
        let spec = spectra::pencil_spectrum(&sparse).unwrap();
        prop_assert_eq!(spec.dim(), nu + mu);
        prop_assert_eq!(spec.infinite_multiplicity(), mu);
    }
}

/// The margin bisection brackets the unit-circle crossing: stable just
/// below the returned step, unstable just above.
#[test]
fn margin_result_brackets_the_crossing() {
    let ssm = fixtures::scalar_test_ssm(-2.0);
    let scheme = PcScheme::heun(1, Interfacing::Extrapolation);
    let tol = 1e-6;
    let result = deformation::stability_margin(&ssm, &scheme, 0.1, 2.0, tol).unwrap();
    let radius = |h: f64| {
        spectra::pencil_spectrum(
            &pencils::pencil_pc_extrapolation(&ssm, h, 1, PencilForm::Dense).unwrap(),
        )
        .unwrap()
        .spectral_radius()
    };
    assert!(radius(result.h_max - tol) < 1.0);
    assert!(radius(result.h_max + tol) >= 1.0);
}

/// Accuracy binds before instability on every bundled fixture.
#[test]
fn max_step_never_exceeds_stability_margin() {
    let machine = {
        let model = fixtures::classical_machine();
        let eq = fixtures::classical_machine_equilibrium();
        penstab::linearize(&model, &eq, penstab::JacobianMode::Analytic, None).unwrap()
    };
    let cases = vec![
        ("scalar", fixtures::scalar_test_ssm(-2.0)),
        ("scalar_dae", fixtures::scalar_dae_default_ssm()),
        ("machine", machine),
    ];
    let scheme = PcScheme::heun(1, Interfacing::Extrapolation);
    for (name, ssm) in cases {
        let reference = spectra::pencil_spectrum(
            &pencils::pencil_dae(&ssm, PencilForm::Dense).unwrap(),
        )
        .unwrap();
        let targets: Vec<Complex64> = reference.eigenvalues().to_vec();
        let margin =
            deformation::stability_margin(&ssm, &scheme, 1e-5, 5.0, 1e-7).unwrap();
        let accuracy = deformation::max_step_for_accuracy(
            &ssm,
            &scheme,
            &targets,
            0.1,
            1e-5,
            5.0,
            1e-7,
        )
        .unwrap();
        assert!(
            accuracy.h_max <= margin.h_max + 1e-7,
            "{name}: accuracy {} vs margin {}",
            accuracy.h_max,
            margin.h_max
        );
    }
}

/// With well-separated loci, continuation tracking gives the same pairs as
/// independent nearest matching at each step.
#[test]
fn continuation_reduces_to_nearest_for_separated_loci() {
    let ssm = penstab::SmallSignalModel::new(
        DMatrix::from_partial_diagonal(2, 2, &[-2.0, -50.0]),
        DMatrix::zeros(2, 0),
        DMatrix::zeros(0, 2),
        DMatrix::zeros(0, 0),
    )
    .unwrap();
    // Step sizes small enough that no locus drifts anywhere near the
    // matching cap; beyond that the premise of this invariant fails.
    let grid = [1e-3, 3e-3, 6e-3, 1e-2];
    let variants = [SweepVariant::Scheme(PcScheme::heun(
        1,
        Interfacing::Extrapolation,
    ))];
    let report = deformation::sweep(&ssm, &variants, &grid, None).unwrap();
    assert_eq!(report.rows.len(), 2 * grid.len());

    let reference = spectra::pencil_spectrum(
        &pencils::pencil_dae(&ssm, PencilForm::Dense).unwrap(),
    )
    .unwrap();
    for &h in &grid {
        let deformed_spec = spectra::pencil_spectrum(
            &pencils::pencil_pc_extrapolation(&ssm, h, 1, PencilForm::Dense).unwrap(),
        )
        .unwrap();
        let mapped: Vec<Complex64> = deformed_spec
            .mapped_to_s()
            .unwrap()
            .into_iter()
            .filter_map(|m| m.s)
            .collect();
        let nearest = deformation::match_modes(
            &reference,
            &spectra::Spectrum::from_values(mapped, pencils::Domain::S),
            MatchStrategy::Nearest,
        )
        .unwrap();
        for pair in nearest.pairs {
            let row = report
                .rows
                .iter()
                .find(|r| r.h == h && (r.reference - pair.reference).norm() < 1e-12)
                .expect("continuation produced a row for this mode");
            assert!(
                (row.deformed - pair.deformed).norm() <= 1e-12,
                "h = {h}: continuation {} vs nearest {}",
                row.deformed,
                pair.deformed
            );
        }
    }
}

/// Identical pairing distances: the scalar Heun example from the metric
/// definitions.
#[test]
fn pairing_distance_example() {
    let reference = spectra::Spectrum::from_values(
        vec![Complex64::new(-2.0, 0.0)],
        pencils::Domain::S,
    );
    let deformed = spectra::Spectrum::from_values(
        vec![Complex64::new(-1.9845, 0.0)],
        pencils::Domain::S,
    );
    let pairing =
        deformation::match_modes(&reference, &deformed, MatchStrategy::Nearest).unwrap();
    assert_eq!(pairing.pairs.len(), 1);
    assert!((pairing.pairs[0].distance - 0.0155).abs() <= 1e-12);
}
