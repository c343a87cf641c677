use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qbm::model::{CaseParams, Model};
use qbm::phase_space::{
    min_ppt_eigenvalue, partial_transpose_form, random_factorized_gaussian, random_pure_gaussian,
    symplectic_form, PhaseSpaceLayout,
};
use qbm::propagator::{evolve_covariance, propagate, PropagatorPair, SolverOptions, TimeGrid};
use qbm::uncertainty::{
    disentanglement_time, entanglement_bound, lambda_bound, lambda_tilde_bound, Disentanglement,
    WitnessCurve,
};

struct Fixture {
    pairs: Vec<PropagatorPair>,
    bound: Vec<f64>,
    tilde: Vec<f64>,
    form: DMatrix<f64>,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let model =
            Model::two_oscillator_case(CaseParams::new(0.38, 0.7).unwrap(), 0.05, 20.0, 1.0)
                .unwrap();
        let pairs = propagate(
            &model,
            TimeGrid::uniform(100.0, 1.0).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap()
        .pairs();
        let form = partial_transpose_form(PhaseSpaceLayout::new(2).unwrap(), &[1]).unwrap();
        let bound = pairs
            .iter()
            .map(|p| lambda_bound(p, &form).unwrap())
            .collect();
        let tilde = pairs
            .iter()
            .map(|p| lambda_tilde_bound(p, &form).unwrap())
            .collect();
        Fixture {
            pairs,
            bound,
            tilde,
            form,
        }
    })
}

fn layout() -> PhaseSpaceLayout {
    PhaseSpaceLayout::new(2).unwrap()
}

#[test]
fn propagator_starts_at_identity() {
    let p = &fixture().pairs[0];
    assert_eq!(p.t, 0.0);
    assert!((&p.r - DMatrix::identity(4, 4)).amax() < 1e-12);
    assert!(p.s.amax() < 1e-12);
}

#[test]
fn diffusion_dominates_symplectic_defect() {
    let omega = symplectic_form(layout());
    for p in &fixture().pairs {
        assert!(
            entanglement_bound(p, &omega).unwrap().min_eigenvalue() > -1e-9,
            "t={}",
            p.t
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn evolved_pure_states_respect_the_envelope(seed in any::<u64>(), squeeze in 0.0f64..1.5) {
        let f = fixture();
        let v0 = random_pure_gaussian(layout(), squeeze, &mut ChaCha8Rng::seed_from_u64(seed));
        for (p, b) in f.pairs.iter().zip(&f.bound) {
            let v = evolve_covariance(&v0, p).unwrap();
            prop_assert!(v.uncertainty_margin() > -1e-9);
            prop_assert!(min_ppt_eigenvalue(v.matrix(), &f.form).unwrap() >= b - 1e-8);
        }
    }

    #[test]
    fn evolved_product_states_respect_the_factorized_bound(seed in any::<u64>(), squeeze in 0.0f64..1.5) {
        let f = fixture();
        let v0 = random_factorized_gaussian(layout(), squeeze, &mut ChaCha8Rng::seed_from_u64(seed));
        for (p, b) in f.pairs.iter().zip(&f.tilde) {
            let v = evolve_covariance(&v0, p).unwrap();
            prop_assert!(min_ppt_eigenvalue(v.matrix(), &f.form).unwrap() >= b - 1e-8);
        }
    }

    #[test]
    fn free_evolution_is_symplectic(delta in -0.9f64..0.9, theta in 0.0f64..5.0, step in 0.05f64..2.0) {
        let model = Model::two_oscillator_case(CaseParams::new(delta, theta).unwrap(), 0.0, 10.0, 1.0).unwrap();
        let grid = TimeGrid::with_len(step, 50).unwrap();
        let omega = symplectic_form(layout());
        for p in propagate(&model, grid, &SolverOptions::default()).unwrap().pairs() {
            prop_assert!((&p.r * &omega * p.r.transpose() - &omega).amax() < 1e-10);
            prop_assert!(p.s.amax() == 0.0);
        }
    }

    #[test]
    fn disentanglement_time_ignores_positive_rescaling(scale in 0.01f64..100.0) {
        let f = fixture();
        let curve = WitnessCurve::new("b", f.pairs.iter().map(|p| p.t).collect(), f.bound.clone()).unwrap();
        let scaled = WitnessCurve::new("b", curve.times.clone(), curve.values.iter().map(|v| v * scale).collect()).unwrap();
        let (a, b) = (disentanglement_time(&curve, 1e-6), disentanglement_time(&scaled, 1e-6));
        match (a, b) {
            (Disentanglement::Crossing(x), Disentanglement::Crossing(y)) => prop_assert!((x - y).abs() < 1e-5),
            _ => prop_assert_eq!(a, b),
        }
        prop_assert_eq!(curve.sign_changes(), scaled.sign_changes());
    }
}
