mod common;

use std::f64::consts::TAU;

use proptest::prelude::*;

use prkit_core::fourier::{
    apply_range_projector, dft2_normalized, forward, forward_magnitude, idft2_normalized,
    pseudo_inverse, zero_pad,
};
use prkit_core::metrics::{
    apply_registration, circular_shift, flip, register, registered_metrics, Registration,
    ValueMode, PSNR_CAP_DB,
};
use prkit_core::phasecut::{
    build_phasecut_matrix, phasecut_quadratic, phasecut_support_loss, recover_signal,
    tangential_component,
};
use prkit_core::projections::phase_of_spectrum;
use prkit_core::relaxation::{
    cycle_consistency_loss, self_consistency_loss, symmetry_breaking_loss, RelaxationState,
};
use prkit_core::rng::{derive_seed, InstanceRng, SeedLabel};
use prkit_core::{Complex64, GridShape, SupportMask};

use common::{complex_instance, nonneg_instance, real_inner};

fn dims() -> impl Strategy<Value = ((usize, usize), (usize, usize), u64)> {
    (1usize..6, 1usize..6, 0usize..3, 0usize..3, any::<u64>())
        .prop_map(|(n1, n2, e1, e2, seed)| ((n1, n2), (2 * n1 + e1, 2 * n2 + e2), seed))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dft_is_unitary((inner, _, seed) in dims()) {
        let g = InstanceRng::new(seed).complex_grid(inner.0, inner.1);
        let f = dft2_normalized(&g);
        prop_assert!(rel_close(f.norm_sqr(), g.norm_sqr(), 1e-12));
        prop_assert!(idft2_normalized(&f).max_abs_diff(&g).unwrap() <= 1e-12);
    }

    #[test]
    fn pseudo_inverse_is_adjoint((inner, outer, seed) in dims()) {
        let shape = GridShape::new(inner, outer).unwrap();
        let mut rng = InstanceRng::new(seed);
        let x = rng.complex_grid(inner.0, inner.1);
        let y = rng.complex_grid(outer.0, outer.1);
        let lhs = y.inner_product(&forward(&x, &shape).unwrap()).unwrap();
        let rhs = pseudo_inverse(&y, &shape).unwrap().inner_product(&x).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        // A^+ A = I
        let back = pseudo_inverse(&forward(&x, &shape).unwrap(), &shape).unwrap();
        prop_assert!(back.max_abs_diff(&x).unwrap() <= 1e-12);
    }

    #[test]
    fn range_projector_is_orthogonal((inner, outer, seed) in dims()) {
        let shape = GridShape::new(inner, outer).unwrap();
        let mask = SupportMask::rectangular(&shape);
        let g = InstanceRng::new(seed).complex_grid(outer.0, outer.1);
        let p = apply_range_projector(&g, &mask).unwrap();
        let pp = apply_range_projector(&p, &mask).unwrap();
        prop_assert!(pp.max_abs_diff(&p).unwrap() <= 1e-12);
        prop_assert!(p.norm_sqr() <= g.norm_sqr() * (1.0 + 1e-12));
        let residual = prkit_core::ComplexGrid::from_fn(outer.0, outer.1, |a, b| g.get(a, b) - p.get(a, b));
        prop_assert!(residual.inner_product(&p).unwrap().norm() <= 1e-12 * (1.0 + g.norm_sqr()));
    }

    #[test]
    fn measurement_ignores_equivalent_images((inner, outer, seed) in dims(), s1 in 0usize..16, s2 in 0usize..16, theta in 0.0..TAU) {
        let mut rng = InstanceRng::new(seed);
        let full = GridShape::new(outer, outer).unwrap();
        let x = zero_pad(&rng.complex_grid(inner.0, inner.1), &GridShape::new(inner, outer).unwrap()).unwrap();
        let b = forward_magnitude(&x, &full).unwrap();
        let rot = Complex64::from_polar(1.0, theta);
        let moved = circular_shift(&x, (s1 % outer.0, s2 % outer.1)).scale(rot);
        let twin = flip(&x).map(|v| v.conj());
        for other in [moved, twin] {
            let bo = forward_magnitude(&other, &full).unwrap();
            for (p, q) in b.values().iter().zip(bo.values()) {
                prop_assert!((p - q).abs() <= 1e-12 * (1.0 + p));
            }
        }
    }

    #[test]
    fn loss_is_bounded_and_matches_dense_form((inner, outer, seed) in dims()) {
        let mut rng = InstanceRng::new(seed);
        let inst = complex_instance(&mut rng, inner, outer);
        let u = rng.phase_vector(outer.0, outer.1);
        let loss = phasecut_support_loss(&inst.b, &inst.mask, &u).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(loss <= inst.b.norm_sqr() * (1.0 + 1e-12));
        let dense = phasecut_quadratic(&build_phasecut_matrix(&inst.b, &inst.mask).unwrap(), &u).unwrap();
        prop_assert!((loss - dense).abs() <= 1e-10 * (1.0 + inst.b.norm_sqr()));
        prop_assert!(phasecut_support_loss(&inst.b, &inst.mask, &inst.u_true).unwrap() <= 1e-20 * (1.0 + inst.b.norm_sqr()));
    }

    #[test]
    fn loss_ignores_global_phase((inner, outer, seed) in dims(), theta in 0.0..TAU) {
        let mut rng = InstanceRng::new(seed);
        let inst = nonneg_instance(&mut rng, inner, outer);
        let u = rng.phase_vector(outer.0, outer.1);
        let a = phasecut_support_loss(&inst.b, &inst.mask, &u).unwrap();
        let b = phasecut_support_loss(&inst.b, &inst.mask, &u.rotated(theta)).unwrap();
        prop_assert!(rel_close(a, b, 1e-12));
    }

    #[test]
    fn energy_splits_between_range_and_leakage((inner, outer, seed) in dims()) {
        let mut rng = InstanceRng::new(seed);
        let inst = complex_instance(&mut rng, inner, outer);
        let u = rng.phase_vector(outer.0, outer.1);
        let loss = phasecut_support_loss(&inst.b, &inst.mask, &u).unwrap();
        let rec = recover_signal(&inst.b, &inst.mask, &u).unwrap();
        let kept = forward(&rec, &inst.shape).unwrap().norm_sqr();
        prop_assert!(rel_close(kept + loss, inst.b.norm_sqr(), 1e-9));
    }

    #[test]
    fn tangent_is_orthogonal_to_phase((_, outer, seed) in dims()) {
        let mut rng = InstanceRng::new(seed);
        let u = rng.phase_vector(outer.0, outer.1);
        let g = rng.complex_grid(outer.0, outer.1);
        let t = tangential_component(&g, &u).unwrap();
        for (tv, uv) in t.as_slice().iter().zip(u.as_slice()) {
            prop_assert!((uv.conj() * tv).re.abs() <= 1e-12);
        }
        prop_assert!(real_inner(t.as_slice(), g.as_slice()) >= -1e-12);
    }

    #[test]
    fn spectrum_phase_is_unit((_, outer, seed) in dims()) {
        let mut g = InstanceRng::new(seed).complex_grid(outer.0, outer.1);
        if seed % 3 == 0 {
            g = g.map(|v| if v.re > 0.0 { Complex64::new(0.0, 0.0) } else { v });
        }
        let u = phase_of_spectrum(&g);
        for v in u.as_slice() {
            prop_assert!((v.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn losses_are_nonnegative((inner, outer, seed) in dims()) {
        let mut rng = InstanceRng::new(seed);
        let inst = nonneg_instance(&mut rng, inner, outer);
        let state = |rng: &mut InstanceRng| {
            RelaxationState::new(rng.phase_vector(outer.0, outer.1), rng.complex_grid(inner.0, inner.1)).unwrap()
        };
        let (sb, sx) = (state(&mut rng), state(&mut rng));
        prop_assert!(symmetry_breaking_loss(&inst.b, &sb, &inst.shape).unwrap() >= 0.0);
        prop_assert!(self_consistency_loss(&inst.x, &sx, &inst.shape).unwrap() >= 0.0);
        prop_assert!(cycle_consistency_loss(&inst.x, &inst.b, &sb, &sx, &inst.shape).unwrap() >= 0.0);
    }

    #[test]
    fn registration_undoes_any_transform((inner, _, seed) in dims(), s1 in 0usize..8, s2 in 0usize..8, flipped: bool, conj: bool, theta in 0.0..TAU) {
        let mut rng = InstanceRng::new(seed);
        let r = rng.complex_grid(inner.0, inner.1);
        let t = Registration::new((s1 % inner.0, s2 % inner.1), flipped, theta, inner).with_conjugation(conj && flipped);
        let c = t.transform(&r);
        let reg = register(&c, &r, ValueMode::Complex).unwrap();
        prop_assert!(apply_registration(&c, &reg).max_abs_diff(&r).unwrap() <= 1e-9);
        let report = registered_metrics(&r, &c, ValueMode::Complex).unwrap();
        prop_assert_eq!(report.psnr_db, PSNR_CAP_DB);
    }

    #[test]
    fn registration_never_increases_error((inner, _, seed) in dims(), real: bool) {
        let mut rng = InstanceRng::new(seed);
        let mode = if real { ValueMode::Real } else { ValueMode::Complex };
        let r = if real { rng.nonnegative_grid(inner.0, inner.1) } else { rng.complex_grid(inner.0, inner.1) };
        let c = rng.complex_grid(inner.0, inner.1);
        prop_assume!(r.norm_sqr() > 0.0);
        let reg = register(&c, &r, mode).unwrap();
        let registered = apply_registration(&c, &reg).distance_sqr(&r).unwrap();
        prop_assert!(registered <= c.distance_sqr(&r).unwrap() * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn derived_seeds_are_stable_and_label_sensitive(master: u64, id in 0u64..1000, restart in 0u64..100) {
        let seed = |m: u64, i: u64, s: &str, k: u64| {
            derive_seed(m, [SeedLabel::Index(i), SeedLabel::Str(s), SeedLabel::Index(k)])
        };
        prop_assert_eq!(seed(master, id, "hio", restart), seed(master, id, "hio", restart));
        prop_assert_ne!(seed(master, id, "hio", restart), seed(master, id, "er", restart));
        prop_assert_ne!(seed(master, id, "hio", restart), seed(master, id + 1, "hio", restart));
        prop_assert_ne!(seed(master, id, "hio", restart), seed(master.wrapping_add(1), id, "hio", restart));
    }
}
