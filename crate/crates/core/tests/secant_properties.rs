use hosu_core::random::{random_spd, random_sym_tensor, unit_vector};
use hosu_core::secant::{
    factor_update, least_change_oracle, low_rank_factor, secant_residual, solve_low_rank_factor, sr1_direction,
    update_step, weight_direction,
};
use hosu_core::tensor::outer;
use hosu_core::{hosu_update_explicit, DenseTensor, Error, SkipPolicy, StepData, SymTensor, UpdateState, WeightRule};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn frob(t: &DenseTensor) -> f64 {
    t.entries().iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
    frob(&(a - b)) / frob(a).max(frob(b)).max(f64::MIN_POSITIVE)
}

struct Instance {
    c: SymTensor,
    rhs: SymTensor,
    s: DVector<f64>,
    v: DVector<f64>,
}

/// Random update inputs with `vᵀs ≥ 0.2 ‖v‖‖s‖`.
fn instance(p: usize, n: usize, seed: u64) -> Instance {
    let mut rng = StdRng::seed_from_u64(seed);
    let c = random_sym_tensor(&mut rng, p, n);
    let rhs = random_sym_tensor(&mut rng, p - 1, n);
    let s = unit_vector(&mut rng, n) * rng.gen_range(0.1..3.0);
    let v = loop {
        let v = unit_vector(&mut rng, n);
        if v.dot(&s) >= 0.2 * s.norm() {
            break v * rng.gen_range(0.1..3.0);
        }
    };
    Instance { c, rhs, s, v }
}

fn shape() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..=4, 2usize..=4, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn update_satisfies_secant_equation((p, n, seed) in shape()) {
        let inst = instance(p, n, seed);
        let up = hosu_update_explicit(&inst.c, &inst.s, &inst.v, &inst.rhs).unwrap();
        let resid = frob(&(up.apply_repeated(&inst.s, 1).unwrap().as_dense() - inst.rhs.as_dense()));
        prop_assert!(resid <= 1e-11 * (1.0 + inst.rhs.frob_norm()), "residual {resid:e}");
        prop_assert!(up.is_symmetric(1e-13));
    }

    #[test]
    fn update_ignores_scale_of_v((p, n, seed) in shape(), alpha in prop_oneof![-100.0..-0.01f64, 0.01..100.0f64]) {
        let inst = instance(p, n, seed);
        let base = hosu_update_explicit(&inst.c, &inst.s, &inst.v, &inst.rhs).unwrap();
        let scaled = hosu_update_explicit(&inst.c, &inst.s, &(&inst.v * alpha), &inst.rhs).unwrap();
        prop_assert!(rel_diff(&base, &scaled) <= 1e-11);
    }

    #[test]
    fn update_has_low_rank_factor((p, n, seed) in shape()) {
        let inst = instance(p, n, seed);
        let up = hosu_update_explicit(&inst.c, &inst.s, &inst.v, &inst.rhs).unwrap();
        let change = up.try_sub(&inst.c).unwrap();
        let a = low_rank_factor(&inst.c, &inst.s, &inst.v, &inst.rhs).unwrap();

        let v_tensor = DenseTensor::from_vector(&inst.v);
        let unsymmetrized = outer(&[a.as_dense(), &v_tensor]).unwrap();
        let ranks = unsymmetrized.mode_ranks(1e-9).unwrap();
        prop_assert_eq!(ranks[p - 1], 1);
        prop_assert!(rel_diff(&unsymmetrized.sym_project(), &change) <= 1e-10);
        prop_assert!(rel_diff(&factor_update(&a, &inst.v).unwrap(), &change) <= 1e-10);

        let target = secant_residual(&inst.c, &inst.s, &inst.rhs).unwrap();
        let solved = solve_low_rank_factor(&inst.s, &inst.v, &target).unwrap();
        prop_assert!(rel_diff(&solved, &a) <= 1e-9);
    }

    #[test]
    fn least_change_solution_matches_explicit_update(p in 2usize..=3, n in 2usize..=4, seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let c = random_sym_tensor(&mut rng, p, n);
        let rhs = random_sym_tensor(&mut rng, p - 1, n);
        let s = unit_vector(&mut rng, n);
        let w = random_spd(&mut rng, n, 10.0);
        let v = weight_direction(&w, &s).unwrap();
        let explicit = hosu_update_explicit(&c, &s, &v, &rhs).unwrap();
        let oracle = least_change_oracle(&c, &s, &w, &rhs).unwrap();
        prop_assert!(rel_diff(&explicit, &oracle) <= 1e-9);

        let objective = |t: &SymTensor| frob(&t.try_sub(&c).unwrap().apply_matrix_all(&w).unwrap());
        prop_assert!((objective(&explicit) - objective(&oracle)).abs() <= 1e-9 * (1.0 + objective(&oracle)));
        let constraint = frob(&(oracle.apply_repeated(&s, 1).unwrap().as_dense() - rhs.as_dense()));
        prop_assert!(constraint <= 1e-10 * (1.0 + rhs.frob_norm()));
    }

    #[test]
    fn weighted_update_transports_to_unweighted(p in 2usize..=3, n in 2usize..=4, seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let c = random_sym_tensor(&mut rng, p, n);
        let rhs = random_sym_tensor(&mut rng, p - 1, n);
        let s = unit_vector(&mut rng, n);
        let w = random_spd(&mut rng, n, 10.0);
        let w_inv = w.clone().try_inverse().unwrap();

        let direct = hosu_update_explicit(&c, &s, &weight_direction(&w, &s).unwrap(), &rhs).unwrap();

        let c_bar = c.apply_matrix_all(&w).unwrap();
        let s_bar = &w_inv * &s;
        let rhs_bar = rhs.apply_matrix_all(&w).unwrap();
        let moved = hosu_update_explicit(&c_bar, &s_bar, &s_bar, &rhs_bar).unwrap();
        let back = moved.apply_matrix_all(&w_inv).unwrap();
        prop_assert!(rel_diff(&direct, &back) <= 1e-9);
    }
}

#[test]
fn sign_of_v_does_not_matter() {
    let inst = instance(3, 3, 9);
    let a = hosu_update_explicit(&inst.c, &inst.s, &inst.v, &inst.rhs).unwrap();
    let b = hosu_update_explicit(&inst.c, &inst.s, &-&inst.v, &inst.rhs).unwrap();
    assert!(rel_diff(&a, &b) <= 1e-12);
}

#[test]
fn orthogonal_direction_is_rejected() {
    let c = SymTensor::zeros(3, 2);
    let rhs = SymTensor::zeros(2, 2);
    let s = DVector::from_vec(vec![1.0, 0.0]);
    let v = DVector::from_vec(vec![0.0, 1.0]);
    assert!(matches!(
        hosu_update_explicit(&c, &s, &v, &rhs),
        Err(Error::DegenerateDirection(_))
    ));
}

#[test]
fn sr1_direction_for_vectors_is_normalized_residual() {
    let r = DVector::from_vec(vec![3.0, -4.0]);
    let v = sr1_direction(&SymTensor::from_vector(&r)).unwrap();
    assert!((v - &r / 5.0).norm() <= 1e-15);
}

#[test]
fn sr1_direction_for_matrices_maximizes_quadratic_form() {
    let mut rng = StdRng::seed_from_u64(77);
    for n in 2..=5 {
        for _ in 0..20 {
            let r = random_sym_tensor(&mut rng, 2, n);
            let m = r.to_matrix().unwrap();
            let v = sr1_direction(&r).unwrap();
            assert!((v.norm() - 1.0).abs() <= 1e-12);
            let form = (v.transpose() * &m * &v)[(0, 0)].abs();
            // Largest |λ| of a symmetric matrix is its spectral norm.
            let spectral = m.clone().svd(false, false).singular_values.max();
            assert!((form - spectral).abs() <= 1e-10 * spectral, "n={n}: {form} vs {spectral}");
        }
    }
}

#[test]
fn sr1_direction_in_the_plane_matches_grid_search() {
    let mut rng = StdRng::seed_from_u64(78);
    for _ in 0..20 {
        let r = random_sym_tensor(&mut rng, 2, 2);
        let m = r.to_matrix().unwrap();
        let v = sr1_direction(&r).unwrap();
        let best = (0..200_000)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / 200_000.0;
                let u = DVector::from_vec(vec![t.cos(), t.sin()]);
                (u.transpose() * &m * &u)[(0, 0)].abs()
            })
            .fold(0.0, f64::max);
        let got = (v.transpose() * &m * &v)[(0, 0)].abs();
        assert!(got >= best * (1.0 - 1e-9));
    }
}

#[test]
fn sr1_direction_breaks_ties_deterministically() {
    // ±1 eigenvalues: both axes attain the maximum.
    let r = SymTensor::from_matrix(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
    let v = sr1_direction(&r).unwrap();
    assert!((v - DVector::from_vec(vec![1.0, 0.0])).norm() <= 1e-12);
}

#[test]
fn sr1_direction_rejects_bad_input() {
    assert!(matches!(sr1_direction(&SymTensor::zeros(2, 3)), Err(Error::DegenerateDirection(_))));
    assert!(matches!(sr1_direction(&SymTensor::rank_one(&DVector::from_element(2, 1.0), 3)), Err(Error::UnsupportedOrder(4))));
}

#[test]
fn rules_produce_expected_directions() {
    let mut rng = StdRng::seed_from_u64(12);
    let approx = random_sym_tensor(&mut rng, 3, 3);
    let s = unit_vector(&mut rng, 3);
    let y = unit_vector(&mut rng, 3) + &s * 2.0;
    let step = StepData {
        s: s.clone(),
        rhs: random_sym_tensor(&mut rng, 2, 3),
        grad_diff: Some(y.clone()),
        deriv_norms: None,
        x_scale: 1.0,
    };
    assert_eq!(WeightRule::Psb.direction(&approx, &step).unwrap(), s);
    assert!((WeightRule::Dfp.direction(&approx, &step).unwrap() - &y / s.norm()).norm() <= 1e-15);
    let v = WeightRule::Sr1Aligned.direction(&approx, &step).unwrap();
    assert!(v.dot(&s) > 0.0);
    let w = random_spd(&mut rng, 3, 5.0);
    let expected = {
        let wi = w.clone().try_inverse().unwrap();
        wi.transpose() * wi * &s
    };
    let got = WeightRule::ExplicitMatrix(w).direction(&approx, &step).unwrap();
    assert!((got - expected).norm() <= 1e-12);
}

#[test]
fn sr1_rule_updates_satisfy_secant_equation() {
    let mut rng = StdRng::seed_from_u64(13);
    let mut state = UpdateState::new(SymTensor::zeros(3, 3), SkipPolicy::Disabled).unwrap();
    for k in 0..10 {
        let step = StepData {
            s: unit_vector(&mut rng, 3) * 0.5,
            rhs: random_sym_tensor(&mut rng, 2, 3),
            grad_diff: None,
            deriv_norms: None,
            x_scale: 1.0,
        };
        state = update_step(&state, &WeightRule::Sr1Aligned, &step).unwrap();
        assert_eq!(state.k, k + 1);
        let resid = frob(&(state.approx.apply_repeated(&step.s, 1).unwrap().as_dense() - step.rhs.as_dense()));
        assert!(resid <= 1e-11 * (1.0 + step.rhs.frob_norm()));
    }
}

#[test]
fn noisy_step_is_skipped() {
    let state = UpdateState::new(SymTensor::zeros(3, 2), SkipPolicy::standard()).unwrap();
    let step = StepData {
        s: DVector::from_vec(vec![1e-12, 0.0]),
        rhs: SymTensor::from_matrix(&DMatrix::from_element(2, 2, 1e-9)).unwrap(),
        grad_diff: None,
        deriv_norms: Some((1000.0, 1000.0)),
        x_scale: 1.0,
    };
    let next = update_step(&state, &WeightRule::Psb, &step).unwrap();
    assert!(next.last_skipped);
    assert_eq!(next.approx, state.approx);
    assert_eq!(next.k, 1);
}
