use everett_core::ambiguity::{adversarial_witnesses, match_to_unprimed, verify_m2_for_basis, BasisMatch, BasisPair};
use everett_core::heisenberg::{
    closed_form_branches, evolve_operator, extract_copy_structure, permutation_equivalent, CopyVerdict,
};
use everett_core::measurement::{
    check_branch_form, evolve_unnormalized, schrodinger_evolve, verify_condition_m2, MeasurementModel, SystemState,
};
use everett_core::tensor::{
    complex_normal, frob_dist, hermitian_eig, kron, random_hermitian, unitary_exp, ComplexOperator, ComplexVector,
};
use everett_core::{Space, ToleranceProfile, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_op(space: Space, n: usize, seed: u64) -> ComplexOperator {
    let mut r = rng(seed);
    ComplexOperator::from_fn(space, n, |_, _| complex_normal(&mut r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kron_mixed_product(m in 2usize..5, seed in any::<u64>()) {
        let a = random_op(Space::O, m + 1, seed);
        let c = random_op(Space::O, m + 1, seed ^ 1);
        let b = random_op(Space::S, m, seed ^ 2);
        let d = random_op(Space::S, m, seed ^ 3);
        let lhs = kron(&a, &b).unwrap().matmul(&kron(&c, &d).unwrap()).unwrap();
        let rhs = kron(&a.matmul(&c).unwrap(), &b.matmul(&d).unwrap()).unwrap();
        prop_assert!(frob_dist(&lhs, &rhs).unwrap() <= 1e-12 * lhs.frob_norm().max(1.0));
    }

    #[test]
    fn exp_group_property(n in 1usize..8, seed in any::<u64>(), t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
        let tol = ToleranceProfile::default();
        let h = random_hermitian(Space::S, n, &mut rng(seed));
        let lhs = unitary_exp(&h, t1, &tol).unwrap().matmul(&unitary_exp(&h, t2, &tol).unwrap()).unwrap();
        let rhs = unitary_exp(&h, t1 + t2, &tol).unwrap();
        prop_assert!(frob_dist(&lhs, &rhs).unwrap() <= 1e-10);
    }

    #[test]
    fn eigenvectors_orthogonal_across_gaps(n in 1usize..10, seed in any::<u64>()) {
        let tol = ToleranceProfile::default();
        let h = random_hermitian(Space::S, n, &mut rng(seed));
        let eig = hermitian_eig(&h, &tol).unwrap();
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        for i in 0..n {
            for j in i + 1..n {
                if eig.eigenvalues[j] - eig.eigenvalues[i] > tol.degeneracy_gap {
                    let ip = eig.eigenvectors.column(i).inner(&eig.eigenvectors.column(j));
                    prop_assert!(ip.norm() <= tol.eq_tol);
                }
            }
        }
    }

    #[test]
    fn evolution_is_linear_and_norm_preserving(m in 2usize..6, seed in any::<u64>()) {
        let model = MeasurementModel::standard(m, 1.0).unwrap();
        let mut r = rng(seed);
        let psi = ComplexVector::new(Space::S, (0..m).map(|_| complex_normal(&mut r)).collect()).unwrap();
        let phi = ComplexVector::new(Space::S, (0..m).map(|_| complex_normal(&mut r)).collect()).unwrap();
        let (a, b) = (complex_normal(&mut r), complex_normal(&mut r));
        let combined = evolve_unnormalized(&model, &psi.scale(a).add(&phi.scale(b))).unwrap();
        let separate = evolve_unnormalized(&model, &psi).unwrap().scale(a)
            .add(&evolve_unnormalized(&model, &phi).unwrap().scale(b));
        prop_assert!(combined.distance(&separate) <= 1e-10);

        let state = SystemState::random(m, &mut r);
        let out = schrodinger_evolve(&model, &state).unwrap();
        prop_assert!((out.norm() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn witness_round_trip(m in 2usize..5, seed in any::<u64>()) {
        let model = MeasurementModel::standard(m, 1.0).unwrap();
        for w in adversarial_witnesses(m, seed).into_iter().take(6) {
            let bp = BasisPair::from_witness(m, &w).unwrap();
            prop_assert!(verify_m2_for_basis(&model, &bp).iter().all(|r| *r <= 1e-10));
            match match_to_unprimed(&model, &bp, 1e-10) {
                BasisMatch::Equivalent(got) => {
                    prop_assert_eq!(&got.permutation, &w.permutation);
                    for (x, y) in got.phases.iter().zip(&w.phases) {
                        prop_assert!((x - y).norm() <= 1e-10);
                    }
                }
                BasisMatch::NotEquivalent { reason } => prop_assert!(false, "{}", reason),
            }
        }
    }
}

#[test]
fn models_are_unitary_and_satisfy_m2() {
    let tol = ToleranceProfile::default();
    for m in [2, 3, 4, 6] {
        for duration in [0.5, 1.0, 2.0, 0.3] {
            let model = MeasurementModel::standard(m, duration).unwrap();
            assert!(model.u().unitarity_defect() <= 1e-10);
            let r = verify_condition_m2(&model, &tol);
            assert!(r.residual <= 1e-10, "m={m} duration={duration}: {}", r.residual);
            assert!((model.kappa() * duration - std::f64::consts::FRAC_PI_2).abs() <= 4.0 * f64::EPSILON);
        }
    }
}

#[test]
fn branch_form_round_trip() {
    for m in [2, 3, 4, 6] {
        let model = MeasurementModel::standard(m, 1.0).unwrap();
        let mut r = rng(m as u64);
        for _ in 0..100 {
            let state = SystemState::random(m, &mut r);
            let out = schrodinger_evolve(&model, &state).unwrap();
            let coeffs = check_branch_form(&out, &model);
            let coeffs = coeffs.coefficients().expect("branch form");
            for (c, psi) in coeffs.iter().zip(state.amplitudes()) {
                assert!((c - psi).norm() <= 1e-10);
            }
        }
    }
}

#[test]
fn extraction_is_complete_and_unique() {
    let tol = ToleranceProfile::default();
    for m in [2, 3, 4, 6] {
        for trial in 0..25u64 {
            let mut r = rng(1000 * m as u64 + trial);
            let model = MeasurementModel::random(m, 1.0, &mut r).unwrap();
            let b = model.record_observable();
            let evolved = evolve_operator(&model, &b).unwrap();
            let oracle = closed_form_branches(&model, &b).unwrap();
            let first = extract_copy_structure(&evolved, &model.ready_state(), &tol, trial).unwrap();
            let first = first.decomposition().expect("copy form");
            assert!(first.residual <= tol.residual_tol);
            assert!(first.projector_defect() <= 1e-10);
            assert!(permutation_equivalent(&oracle, first, 1e-8).is_some());
            let second = extract_copy_structure(&evolved, &model.ready_state(), &tol, trial + 7919).unwrap();
            let second = second.decomposition().expect("copy form");
            let perm = permutation_equivalent(first, second, 1e-8).expect("unique up to relabeling");
            for (i, &p) in perm.iter().enumerate() {
                assert!((second.branches[i].record_value - first.branches[p].record_value).norm() <= 1e-10);
            }
            // canonical order is seed independent
            assert_eq!(perm, (0..m).collect::<Vec<_>>());
        }
    }
}

#[test]
fn extraction_soundness_on_random_operators() {
    // Generic composite operators are never reported as copy form.
    let tol = ToleranceProfile::default();
    for seed in 0..20 {
        let op = random_hermitian(Space::OS, 12, &mut rng(seed));
        let b = everett_core::heisenberg::HeisenbergOperator::external(op).unwrap();
        match extract_copy_structure(&b, &ComplexVector::basis(Space::O, 4, 0), &tol, seed).unwrap() {
            CopyVerdict::NotCopyForm { residual, .. } => assert!(residual > 0.1),
            CopyVerdict::CopyForm(_) => panic!("random operator accepted"),
        }
    }
}

#[test]
fn scaled_operators_keep_their_verdict() {
    let tol = ToleranceProfile::default();
    let model = MeasurementModel::standard(3, 1.0).unwrap();
    let evolved = evolve_operator(&model, &model.record_observable()).unwrap();
    for scale in [1e-3, 1.0, 1e3] {
        let scaled = everett_core::heisenberg::HeisenbergOperator::external(
            evolved.op.scale(C64::new(scale, 0.0)),
        )
        .unwrap();
        let v = extract_copy_structure(&scaled, &model.ready_state(), &tol, 4).unwrap();
        assert!(v.decomposition().is_some(), "scale {scale}");
    }
}
