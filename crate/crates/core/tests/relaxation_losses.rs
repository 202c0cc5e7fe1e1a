mod common;

use common::{
    nonneg_instance, perturb_phase, random_angles, random_direction, real_inner, Instance,
};
use prkit_core::fourier::{crop, dft2_normalized, forward_magnitude, zero_pad};
use prkit_core::metrics::{flip, Registration};
use prkit_core::phasecut::{phasecut_support_loss, StepRule, TorusSolverConfig};
use prkit_core::projections::phase_of_spectrum;
use prkit_core::relaxation::{
    cycle_consistency_loss, lsgan_discriminator_loss, lsgan_generator_loss, phase_path_image,
    relaxation_gradients, relaxation_objective, self_consistency_loss, solve_deep_relaxation,
    solve_deep_relaxation_from, supervised_l2_loss, symmetry_breaking_loss, total_loss,
    total_loss_terms, Adversaries, LossInputs, LossWeights, RelaxationState,
};
use prkit_core::rng::InstanceRng;
use prkit_core::{Complex64, ComplexGrid, GridShape, PhaseVector, RealGrid};

fn truth_state(inst: &Instance) -> RelaxationState {
    RelaxationState::new(inst.u_true.clone(), inst.x.clone()).unwrap()
}

fn random_state(rng: &mut InstanceRng, shape: &GridShape) -> RelaxationState {
    let (m1, m2) = shape.outer();
    let (n1, n2) = shape.inner();
    RelaxationState::new(rng.phase_vector(m1, m2), rng.complex_grid(n1, n2)).unwrap()
}

/// Image whose content sits in the top-left `k x k` block of an `n x n` grid.
fn block_image(rng: &mut InstanceRng, n: usize, k: usize) -> ComplexGrid {
    let content = rng.nonnegative_grid(k, k);
    ComplexGrid::from_fn(n, n, |r, c| {
        if r < k && c < k {
            content.get(r, c) + 0.1
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

#[test]
fn symmetry_breaking_loss_values() {
    let mut rng = InstanceRng::new(60);
    let inst = nonneg_instance(&mut rng, (4, 4), (8, 8));
    assert!(symmetry_breaking_loss(&inst.b, &truth_state(&inst), &inst.shape).unwrap() <= 1e-12);

    let state = random_state(&mut rng, &inst.shape);
    let oracle: f64 = common::naive_forward(&state.x_hat, (8, 8))
        .iter()
        .zip(inst.b.values())
        .map(|(y, &m)| (m - y.norm()).powi(2))
        .sum();
    let got = symmetry_breaking_loss(&inst.b, &state, &inst.shape).unwrap();
    assert!((got - oracle).abs() <= 1e-12 * oracle.max(1.0));
}

#[test]
fn symmetry_breaking_blind_to_equivalent_images() {
    let mut rng = InstanceRng::new(61);
    let x = block_image(&mut rng, 6, 4);
    let inst = common::instance_from(x, (12, 12));
    let padded = zero_pad(&inst.x, &inst.shape).unwrap();
    for (shift, flipped) in [((1, 2), false), ((3, 5), true), ((4, 3), true)] {
        let t = Registration::new(shift, flipped, 2.1, (12, 12)).transform(&padded);
        let x_hat = crop(&t, &inst.shape).unwrap();
        assert!(
            zero_pad(&x_hat, &inst.shape)
                .unwrap()
                .max_abs_diff(&t)
                .unwrap()
                == 0.0,
            "stays in support"
        );
        let state = RelaxationState::new(inst.u_true.clone(), x_hat).unwrap();
        assert!(symmetry_breaking_loss(&inst.b, &state, &inst.shape).unwrap() <= 1e-10);
    }
}

#[test]
fn self_consistency_values() {
    let mut rng = InstanceRng::new(62);
    let inst = nonneg_instance(&mut rng, (4, 4), (8, 8));
    // |x_hat| = |x| with arbitrary pixel phases
    let twisted = ComplexGrid::from_fn(4, 4, |r, c| {
        inst.x.get(r, c) * Complex64::from_polar(1.0, (r * 3 + c) as f64)
    });
    let state = RelaxationState::new(inst.u_true.clone(), twisted).unwrap();
    assert!(self_consistency_loss(&inst.x, &state, &inst.shape).unwrap() <= 1e-11);

    let zero = ComplexGrid::zeros(4, 4);
    let state = random_state(&mut rng, &inst.shape);
    let expected = state.x_hat.norm_sqr(); // |z_Lambda| vanishes because b = |A 0| = 0
    assert!(
        (self_consistency_loss(&zero, &state, &inst.shape).unwrap() - expected).abs()
            <= 1e-12 * expected
    );
}

#[test]
fn self_consistency_brute_force() {
    let mut rng = InstanceRng::new(63);
    let shape = GridShape::new((3, 3), (6, 6)).unwrap();
    for _ in 0..5 {
        let x = rng.complex_grid(3, 3);
        let state = random_state(&mut rng, &shape);
        let bx: Vec<f64> = common::naive_forward(&x, (6, 6))
            .iter()
            .map(|v| v.norm())
            .collect();
        let w: Vec<Complex64> = bx
            .iter()
            .zip(state.u.as_slice())
            .map(|(&m, &u)| u * m)
            .collect();
        let z = common::naive_inverse(&w, 6, 6);
        let mut expected = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                let xa = x.get(r, c).norm();
                expected += (xa - z[r * 6 + c].norm()).powi(2)
                    + (xa - state.x_hat.get(r, c).norm()).powi(2);
            }
        }
        let got = self_consistency_loss(&x, &state, &shape).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
    }
}

#[test]
fn cycle_is_sum_of_parts_and_homogeneous() {
    let mut rng = InstanceRng::new(64);
    let inst = nonneg_instance(&mut rng, (4, 4), (8, 8));
    let state_b = random_state(&mut rng, &inst.shape);
    let state_x = random_state(&mut rng, &inst.shape);
    let x = rng.complex_grid(4, 4);
    let cycle = cycle_consistency_loss(&x, &inst.b, &state_b, &state_x, &inst.shape).unwrap();
    let parts = self_consistency_loss(&x, &state_x, &inst.shape).unwrap()
        + symmetry_breaking_loss(&inst.b, &state_b, &inst.shape).unwrap();
    assert_eq!(cycle, parts);

    let truth = truth_state(&inst);
    assert!(
        cycle_consistency_loss(&inst.x, &inst.b, &truth, &truth, &inst.shape).unwrap() <= 1e-10
    );

    // doubling x and x_hat_x scales the image terms by 4
    let doubled = RelaxationState::new(
        state_x.u.clone(),
        state_x.x_hat.scale(Complex64::new(2.0, 0.0)),
    )
    .unwrap();
    let base = self_consistency_loss(&x, &state_x, &inst.shape).unwrap();
    let scaled =
        self_consistency_loss(&x.scale(Complex64::new(2.0, 0.0)), &doubled, &inst.shape).unwrap();
    assert!((scaled - 4.0 * base).abs() <= 1e-12 * scaled);
}

fn flat(value: f64) -> RealGrid {
    RealGrid::from_vec(1, 1, vec![value]).unwrap()
}

#[test]
fn lsgan_values() {
    // scorer reads the single pixel as its score
    let by_pixel = |img: &RealGrid| img.get(0, 0);
    let perfect =
        lsgan_discriminator_loss(&by_pixel, &[flat(1.0)], &[flat(0.0), flat(0.0)]).unwrap();
    assert_eq!(perfect, 0.0);

    for c in [0.0, 0.25, 0.5, 0.8] {
        let constant = move |_: &RealGrid| c;
        let v = lsgan_discriminator_loss(&constant, &[flat(0.3)], &[flat(0.7)]).unwrap();
        assert!((v - ((c - 1.0).powi(2) + c * c)).abs() < 1e-15);
    }
    let half = |_: &RealGrid| 0.5;
    assert!(
        (lsgan_discriminator_loss(&half, &[flat(0.0)], &[flat(0.0)]).unwrap() - 0.5).abs() < 1e-15
    );

    // real {0.2}, fakes {0.9, 0.5}: (0.2-1)^2 + (0.81 + 0.25)/2
    let v = lsgan_discriminator_loss(&by_pixel, &[flat(0.2)], &[flat(0.9), flat(0.5)]).unwrap();
    assert!((v - (0.64 + 0.53)).abs() < 1e-15);

    assert_eq!(
        lsgan_generator_loss(&|_: &RealGrid| 1.0, &[flat(0.1), flat(0.2)]).unwrap(),
        0.0
    );
    assert_eq!(
        lsgan_generator_loss(&|_: &RealGrid| 0.0, &[flat(0.1)]).unwrap(),
        1.0
    );
    let g = lsgan_generator_loss(&by_pixel, &[flat(0.5), flat(0.75)]).unwrap();
    assert!((g - 0.15625).abs() < 1e-15);

    assert!(lsgan_generator_loss(&by_pixel, &[]).is_err());
    assert!(lsgan_discriminator_loss(&by_pixel, &[], &[flat(0.0)]).is_err());
}

#[test]
fn supervised_loss_is_ambiguity_blind() {
    let mut rng = InstanceRng::new(65);
    let a = rng.complex_grid(5, 5);
    let b = rng.complex_grid(5, 5);
    assert_eq!(supervised_l2_loss(&a, &a).unwrap(), 0.0);
    let oracle: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(p, q)| (p - q).norm_sqr())
        .sum();
    assert!((supervised_l2_loss(&a, &b).unwrap() - oracle).abs() <= 1e-12 * oracle);

    // a reversed real image has the same measurement but a large supervised loss
    let x = rng.nonnegative_grid(5, 5);
    let shape = GridShape::new((5, 5), (5, 5)).unwrap();
    let reversed = flip(&x);
    let bx = forward_magnitude(&x, &shape).unwrap();
    let br = forward_magnitude(&reversed, &shape).unwrap();
    assert!(bx
        .values()
        .iter()
        .zip(br.values())
        .all(|(p, q)| (p - q).abs() < 1e-12));
    assert!(supervised_l2_loss(&x, &reversed).unwrap() > 0.1);
}

#[test]
fn total_loss_composition() {
    let mut rng = InstanceRng::new(66);
    let inst = nonneg_instance(&mut rng, (4, 4), (8, 8));
    let state_b = random_state(&mut rng, &inst.shape);
    let state_x = random_state(&mut rng, &inst.shape);
    let inputs = LossInputs {
        b: &inst.b,
        x: &inst.x,
        state_b: &state_b,
        state_x: &state_x,
        shape: &inst.shape,
        mask: &inst.mask,
    };
    assert_eq!(
        total_loss(&inputs, &LossWeights::new(0.0, 0.0).unwrap(), None).unwrap(),
        0.0
    );
    let d = LossWeights::default();
    assert_eq!((d.kappa(), d.rho()), (20.0, 20.0));
    assert!(LossWeights::new(-1.0, 0.0).is_err());
    assert!(LossWeights::new(1.0, f64::NAN).is_err());

    let cycle = cycle_consistency_loss(&inst.x, &inst.b, &state_b, &state_x, &inst.shape).unwrap();
    let bx = forward_magnitude(&inst.x, &inst.shape).unwrap();
    let pcut = phasecut_support_loss(&inst.b, &inst.mask, &state_b.u).unwrap()
        + phasecut_support_loss(&bx, &inst.mask, &state_x.u).unwrap();

    // affine in (kappa, rho)
    for (k, r) in [(1.0, 0.0), (0.0, 3.0), (2.5, 7.0)] {
        let w = LossWeights::new(k, r).unwrap();
        let got = total_loss(&inputs, &w, None).unwrap();
        let expected = k * cycle + r * pcut;
        assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
    }

    let phase_scorer = |img: &RealGrid| img.max().min(1.0);
    let refine_scorer = |_: &RealGrid| 0.25;
    let adv = Adversaries {
        phase: &phase_scorer,
        refine: &refine_scorer,
    };
    let terms = total_loss_terms(&inputs, &d, Some(adv)).unwrap();
    let real = [inst.x.modulus()];
    let expected_adv = lsgan_discriminator_loss(
        &phase_scorer,
        &real,
        &[phase_path_image(&inst.b, &state_b.u, &inst.shape)
            .unwrap()
            .modulus()],
    )
    .unwrap()
        + lsgan_discriminator_loss(&refine_scorer, &real, &[state_b.x_hat.modulus()]).unwrap();
    assert!((terms.adversarial - expected_adv).abs() <= 1e-15);
    assert!(
        (terms.total - (expected_adv + 20.0 * cycle + 20.0 * pcut)).abs() <= 1e-12 * terms.total
    );
}

/// Shift offsets that keep a `k x k` block inside an `n x n` support.
fn support_preserving(n: usize, k: usize, flipped: bool, t: (usize, usize)) -> (usize, usize) {
    assert!(t.0 <= n - k && t.1 <= n - k);
    if flipped {
        (k - 1 + t.0, k - 1 + t.1)
    } else {
        t
    }
}

#[test]
fn equivalent_states_have_zero_loss() {
    let (n, k, m) = (8, 5, 16);
    let offsets = [
        (0, 0),
        (0, 1),
        (1, 0),
        (1, 2),
        (2, 3),
        (3, 3),
        (3, 0),
        (2, 1),
    ];
    let phases = [0.0, 0.5 * std::f64::consts::PI, 2.0, 5.5];
    let weights = LossWeights::default();
    let mut rng = InstanceRng::new(67);
    for _ in 0..20 {
        let inst = common::instance_from(block_image(&mut rng, n, k), (m, m));
        let padded = zero_pad(&inst.x, &inst.shape).unwrap();
        let state_x = truth_state(&inst);
        for flipped in [false, true] {
            for &t in &offsets {
                for &theta in &phases {
                    let reg = Registration::new(
                        support_preserving(n, k, flipped, t),
                        flipped,
                        theta,
                        (m, m),
                    );
                    let moved = reg.transform(&padded);
                    let u_t: PhaseVector = phase_of_spectrum(&dft2_normalized(&moved));
                    let pcut = phasecut_support_loss(&inst.b, &inst.mask, &u_t).unwrap();
                    assert!(pcut <= 1e-10, "pcut {pcut:e}");

                    let state_b =
                        RelaxationState::new(u_t, crop(&moved, &inst.shape).unwrap()).unwrap();
                    let inputs = LossInputs {
                        b: &inst.b,
                        x: &inst.x,
                        state_b: &state_b,
                        state_x: &state_x,
                        shape: &inst.shape,
                        mask: &inst.mask,
                    };
                    let total = total_loss(&inputs, &weights, None).unwrap();
                    assert!(total <= 1e-9, "total {total:e}");
                    let j =
                        relaxation_objective(&inst.b, &inst.mask, &inst.shape, &weights, &state_b)
                            .unwrap();
                    assert!(j <= 1e-9, "objective {j:e}");
                }
            }
        }
    }
}

#[test]
fn objective_gradients_match_finite_differences() {
    let mut rng = InstanceRng::new(68);
    let weights = LossWeights::new(1.5, 0.7).unwrap();
    for _ in 0..10 {
        let inst = nonneg_instance(&mut rng, (4, 4), (8, 8));
        let state = random_state(&mut rng, &inst.shape);
        let (gu, gx) =
            relaxation_gradients(&inst.b, &inst.mask, &inst.shape, &weights, &state).unwrap();
        let objective = |s: &RelaxationState| {
            relaxation_objective(&inst.b, &inst.mask, &inst.shape, &weights, s).unwrap()
        };
        let h = 1e-5;
        for _ in 0..20 {
            let theta = random_angles(&mut rng, 64);
            let du: Vec<Complex64> = state
                .u
                .as_slice()
                .iter()
                .zip(&theta)
                .map(|(&v, &t)| Complex64::new(0.0, t) * v)
                .collect();
            let predicted = 2.0 * real_inner(gu.as_slice(), &du);
            let at = |t: f64| {
                objective(
                    &RelaxationState::new(perturb_phase(&state.u, &theta, t), state.x_hat.clone())
                        .unwrap(),
                )
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!(
                (fd - predicted).abs() <= 1e-5 * predicted.abs().max(1e-3),
                "u: fd {fd} vs {predicted}"
            );

            let dx = random_direction(&mut rng, 16);
            let predicted = 2.0 * real_inner(gx.as_slice(), &dx);
            let at = |t: f64| {
                let moved =
                    ComplexGrid::from_fn(4, 4, |r, c| state.x_hat.get(r, c) + dx[r * 4 + c] * t);
                objective(&RelaxationState::new(state.u.clone(), moved).unwrap())
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!(
                (fd - predicted).abs() <= 1e-5 * predicted.abs().max(1e-3),
                "x: fd {fd} vs {predicted}"
            );
        }
    }
}

#[test]
fn deep_relaxation_is_monotone_and_deterministic() {
    let weights = LossWeights::default();
    for seed in 0..20u64 {
        let inst = nonneg_instance(&mut InstanceRng::new(700 + seed), (4, 4), (8, 8));
        let config = TorusSolverConfig {
            max_iterations: 150,
            seed,
            ..Default::default()
        };
        let sol =
            solve_deep_relaxation(&inst.b, &inst.mask, &inst.shape, &weights, &config).unwrap();
        assert!(sol.loss_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(sol.final_loss() < sol.loss_history[0]);
        if seed < 2 {
            let again =
                solve_deep_relaxation(&inst.b, &inst.mask, &inst.shape, &weights, &config).unwrap();
            assert_eq!(sol, again);
        }
    }
}

#[test]
fn deep_relaxation_rests_at_ground_truth() {
    let mut rng = InstanceRng::new(69);
    let inst = nonneg_instance(&mut rng, (4, 4), (8, 8));
    let weights = LossWeights::default();
    let config = TorusSolverConfig {
        max_iterations: 50,
        step_rule: StepRule::Backtracking {
            shrink: 0.5,
            initial: 1.0,
        },
        ..Default::default()
    };
    let sol = solve_deep_relaxation_from(
        &inst.b,
        &inst.mask,
        &inst.shape,
        &weights,
        &config,
        truth_state(&inst),
    )
    .unwrap();
    assert!(sol.loss_history.iter().all(|&l| l <= 1e-9));
    assert!(sol.state.x_hat.max_abs_diff(&inst.x).unwrap() <= 1e-6);
}
