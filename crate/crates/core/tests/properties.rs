use std::f64::consts::PI;

use conformal_warp::bounds::{existence_checker_positive, jensen_for_field};
use conformal_warp::families::{random_field, random_phi};
use conformal_warp::fields::{
    flux_energy, source_integral_check, transform_source, FieldStrength, FieldStrengthSet,
    SourceBundle, StringSource,
};
use conformal_warp::geometry::{conformal_scalar_curvature, ManifoldGrid, ScalarField};
use conformal_warp::nonlinear::{build_problem, monotone_solve, NonlinearProblem};
use conformal_warp::solver::{
    principal_eigenpair, solve_background_form, solve_critical_point, solve_critical_point_from,
    spectrum, OperatorAssembly,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn torus() -> ManifoldGrid {
    ManifoldGrid::torus(&[2.0 * PI, 2.0 * PI], 12).unwrap()
}

fn sphere() -> ManifoldGrid {
    ManifoldGrid::sphere(1.0, 10, 20).unwrap()
}

fn noise(grid: &ManifoldGrid, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_sources(grid: &ManifoldGrid, seed: u64) -> SourceBundle {
    let norm = random_field(grid, 2, seed).map(|v| v * v);
    let flux = FieldStrengthSet::new(
        grid,
        vec![FieldStrength {
            degree: 1,
            norm_sq: norm,
        }],
    )
    .unwrap();
    let t = random_field(grid, 2, seed + 1).map(|v| 1.0 + 0.5 * v);
    let beta = (seed % 3) as f64 * 0.5;
    SourceBundle::new(flux, StringSource::smooth(grid, t, beta).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn laplacian_is_symmetric_and_nonpositive(seed in any::<u64>(), on_sphere in any::<bool>()) {
        let grid = if on_sphere { sphere() } else { torus() };
        let f = ScalarField::new(&grid, noise(&grid, seed)).unwrap();
        let h = ScalarField::new(&grid, noise(&grid, seed ^ 1)).unwrap();
        let lf = grid.laplacian(&f).unwrap();
        let lh = grid.laplacian(&h).unwrap();
        let a = grid.inner(&lf, &h).unwrap();
        let b = grid.inner(&f, &lh).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0));
        prop_assert!(grid.inner(&lf, &f).unwrap() <= 1e-12);
    }

    #[test]
    fn operator_is_weighted_symmetric(seed in any::<u64>(), amp in 0.0..0.8f64, on_sphere in any::<bool>()) {
        let grid = if on_sphere { sphere() } else { torus() };
        let phi = random_phi(&grid, amp, 3, seed).unwrap();
        let asm = OperatorAssembly::assemble(&grid, &phi, &random_sources(&grid, seed)).unwrap();
        let f = noise(&grid, seed ^ 7);
        let h = noise(&grid, seed ^ 9);
        prop_assert!(asm.symmetry_defect(&f, &h) <= 1e-12);
    }

    #[test]
    fn flux_energy_is_nonnegative(seed in any::<u64>(), amp in 0.0..2.0f64) {
        let grid = torus();
        let phi = random_phi(&grid, amp, 3, seed).unwrap();
        let src = random_sources(&grid, seed);
        prop_assert!(flux_energy(&grid, &src.flux, &phi).unwrap().min() >= 0.0);
    }

    #[test]
    fn source_transform_is_a_group_action(seed in any::<u64>(), beta in 0.0..3.0f64) {
        let grid = torus();
        let p1 = random_field(&grid, 2, seed);
        let p2 = random_field(&grid, 3, seed + 5);
        let t = StringSource::smooth(&grid, random_field(&grid, 2, seed + 9).map(|v| v + 2.0), beta).unwrap();
        let step = StringSource::smooth(&grid, transform_source(&grid, &t, &p1).unwrap(), beta).unwrap();
        let two = transform_source(&grid, &step, &p2).unwrap();
        let sum = p1.zip_map(&p2, |a, b| a + b);
        let one = transform_source(&grid, &t, &sum).unwrap();
        for (a, b) in one.values().iter().zip(two.values()) {
            prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }

    #[test]
    fn invariant_weight_keeps_the_source_integral(seed in any::<u64>(), amp in 0.0..0.5f64) {
        let grid = sphere();
        let phi = random_phi(&grid, amp, 3, seed).unwrap();
        let src = StringSource::gaussian(&grid, &[1.0, 2.0], 0.4, 1.0, 1.0).unwrap();
        prop_assert!(source_integral_check(&grid, &src, &phi).unwrap().pass);
    }

    #[test]
    fn curvature_of_constant_factor(c in -2.0..2.0f64) {
        let grid = sphere();
        let phi = ScalarField::constant(&grid, c);
        let r = conformal_scalar_curvature(&grid, &phi).unwrap();
        let expect = (-2.0 * c).exp() * grid.r_g0();
        for v in r.values() {
            prop_assert!((v - expect).abs() <= 1e-12 * expect.abs());
        }
    }

    #[test]
    fn random_phi_is_normalized_and_deterministic(seed in any::<u64>()) {
        let grid = torus();
        let a = random_phi(&grid, 0.5, 3, seed).unwrap();
        prop_assert_eq!(&a, &random_phi(&grid, 0.5, 3, seed).unwrap());
        let vol = grid.integrate(&ScalarField::constant(&grid, 1.0), Some(&a)).unwrap();
        prop_assert!((vol - grid.volume()).abs() <= 1e-12 * grid.volume());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn jensen_never_fails(seed in any::<u64>(), spread in 0.0..5.0f64) {
        let grid = torus();
        let phi = random_field(&grid, 2, seed).scaled(0.3);
        let asm = OperatorAssembly::from_coefficient(&grid, &phi, ScalarField::constant(&grid, -1.0)).unwrap();
        let u = ScalarField::new(&grid, noise(&grid, seed).iter().map(|v| (spread * v).exp()).collect()).unwrap();
        prop_assert!(jensen_for_field(&asm, &u).unwrap().all_pass());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn background_form_matches(seed in any::<u64>(), amp in 0.0..0.4f64) {
        let grid = sphere();
        let phi = random_phi(&grid, amp, 2, seed).unwrap();
        let src = SourceBundle::none(&grid);
        let asm = OperatorAssembly::assemble(&grid, &phi, &src).unwrap();
        let cp = solve_critical_point(&asm, 1.0).unwrap();
        let u0 = solve_background_form(&grid, &phi, &src, cp.lambda0 < 0.0).unwrap();
        let scale = cp.u.max_abs();
        for (a, b) in cp.u.values().iter().zip(u0.values()) {
            prop_assert!((a - b).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn rescaling_is_covariant(seed in any::<u64>(), lambda in 0.1..10.0f64) {
        let grid = torus();
        let phi = random_phi(&grid, 0.3, 2, seed).unwrap();
        let t = ScalarField::constant(&grid, 6.0);
        let src = SourceBundle::new(FieldStrengthSet::empty(), StringSource::smooth(&grid, t, 1.0).unwrap());
        let asm = OperatorAssembly::assemble(&grid, &phi, &src).unwrap();
        let cp = solve_critical_point(&asm, 1.0).unwrap();
        // v solves P v = α/6; so λv must solve P w = λα/6.
        let lv = cp.v.scaled(lambda);
        let plv = asm.apply_field(&lv).unwrap();
        let target = lambda * cp.alpha / 6.0;
        let err = plv.values().iter().map(|p| (p - target).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-9 * target.abs());
    }

    #[test]
    fn kernel_directions_do_not_move_the_potential(c1 in -0.3..0.3f64, c2 in -0.2..0.2f64, s in -5.0..5.0f64) {
        // Axisymmetric φ keeps the azimuthal modes orthogonal to constants, so
        // shifting one of them into the kernel leaves P u = -1 solvable.
        let grid = sphere();
        let phi = ScalarField::from_fn(&grid, |x| c1 * x[0].cos() + c2 * x[0].cos().powi(2));
        let base = OperatorAssembly::assemble(&grid, &phi, &SourceBundle::none(&grid)).unwrap();
        let spec = spectrum(&base, 4).unwrap();
        let ones = vec![1.0; grid.len()];
        let idx = (1..4)
            .find(|&i| base.inner(spec.eigenfields[i].values(), &ones).abs() < 1e-12)
            .unwrap();
        let w = &spec.eigenfields[idx];
        let asm = base.with_shift(-spec.eigenvalues[idx]);
        let cp = solve_critical_point(&asm, 1.0).unwrap();
        let moved = cp.u.zip_map(w, |u, w| u + s * w);
        let a = asm.integral(cp.u.values());
        let b = asm.integral(moved.values());
        prop_assert!((a - b).abs() <= 1e-9 * a.abs());
    }

    #[test]
    fn constant_coefficient_oracle(r in 0.5..20.0f64, f in 0.0..3.0f64, t in 0.0..5.0f64) {
        let grid = ManifoldGrid::synthetic_torus(&[1.0, 1.0], 8, r).unwrap();
        let phi = ScalarField::zeros(&grid);
        let flux = FieldStrengthSet::constant(&grid, 1, f).unwrap();
        let src = SourceBundle::new(flux, StringSource::smooth(&grid, ScalarField::constant(&grid, t), 1.0).unwrap());
        let c = -r / 3.0 + f / 6.0 - t / 6.0;
        prop_assume!(c < -1e-3);
        let asm = OperatorAssembly::assemble(&grid, &phi, &src).unwrap();
        let cp = solve_critical_point(&asm, 1.0).unwrap();
        for u in cp.u.values() {
            prop_assert!((u + 1.0 / c).abs() <= 1e-10 * (1.0 / c).abs());
        }
    }

    #[test]
    fn compliant_instances_have_unique_solutions(seed in any::<u64>()) {
        let r = 48.0;
        let grid = ManifoldGrid::synthetic_torus(&[2.0 * PI, 2.0 * PI], 12, r).unwrap();
        let phi = random_phi(&grid, 0.1, 2, seed).unwrap();
        let src = SourceBundle::new(
            FieldStrengthSet::empty(),
            StringSource::smooth(&grid, ScalarField::constant(&grid, 0.5), 1.0).unwrap(),
        );
        let ledger = existence_checker_positive(&grid, &phi, &src, r / 4.0).unwrap();
        prop_assert!(ledger.hypotheses_hold());
        let asm = OperatorAssembly::assemble(&grid, &phi, &src).unwrap();
        let (l0, psi0) = principal_eigenpair(&asm, None).unwrap();
        let reference = solve_critical_point(&asm, 1.0).unwrap();
        prop_assert!(reference.is_positive());
        prop_assert!(ledger.check_solution(&reference).all_pass());
        for k in 0..3 {
            let init = ScalarField::new(&grid, noise(&grid, seed.wrapping_add(k)).iter().map(|v| 10.0 * v).collect()).unwrap();
            let cp = solve_critical_point_from(&asm, 1.0, l0, &psi0, &init).unwrap();
            let err = cp.u.zip_map(&reference.u, |a, b| (a - b).abs()).max();
            prop_assert!(err <= 1e-8 * reference.u.max_abs());
        }
    }

    #[test]
    fn monotone_iteration_stays_ordered(seed in any::<u64>(), amp in 0.0..0.5f64, d in 5usize..10) {
        let grid = torus();
        // f < 0 with K < 0 guarantees a positive solution below the constant
        // super-solution.
        let f = random_field(&grid, 2, seed).map(|v| -1.0 - amp * v);
        let phi = ScalarField::zeros(&grid);
        let prob = NonlinearProblem::from_f(&grid, &phi, f, d, -1.0).unwrap();
        let (v, trace) = monotone_solve(&prob).unwrap();
        prop_assert!(trace.monotone);
        prop_assert!(v.min() > 0.0);
        prop_assert!(v.max() <= trace.super_solution * (1.0 + 1e-12));
        prop_assert!(trace.sup_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}

#[test]
fn linear_and_negative_exponent_cases_are_rejected() {
    let grid = torus();
    let phi = ScalarField::zeros(&grid);
    for d in [2, 3, 4] {
        assert!(build_problem(&grid, &phi, &SourceBundle::none(&grid), d, 1.0).is_err());
    }
}
