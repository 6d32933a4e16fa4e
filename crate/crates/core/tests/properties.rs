use std::f64::consts::PI;

use proptest::prelude::*;

use gp_hierarchy::kernels::{random_test_kernel, HierarchySequence, MarginalKernel};
use gp_hierarchy::norms::{sobolev_norm, weighted_norm, NormParams};
use gp_hierarchy::operators::{free_evolve, raw_cubic, Interaction};
use gp_hierarchy::solver::{solve, SolverConfig};
use gp_hierarchy::spectral::{bracket, forward_transform, inverse_transform};
use gp_hierarchy::verify::convolution_integral;
use gp_hierarchy::{GridSpec, MomentumPoint, C64};

fn values(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b)), len)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval_and_roundtrip(f in values(8), len in 1.0f64..10.0) {
        let g = GridSpec::new(1, len, 8).unwrap();
        let hat = forward_transform(&f, &g).unwrap();
        let back = inverse_transform(&hat, &g).unwrap();
        for (a, b) in back.iter().zip(&f) {
            prop_assert!((a - b).norm() < 1e-13);
        }
        let x: f64 = f.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.cell_volume();
        let p: f64 = hat.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.momentum_measure();
        prop_assert!(rel(x, p) < 1e-12);
    }

    #[test]
    fn bracket_bounds(p in prop::collection::vec(-50.0f64..50.0, 1..4), q_shift in -50.0f64..50.0) {
        let pp = MomentumPoint::new(p.clone());
        let b = bracket(&pp);
        let norm = pp.norm_sq().sqrt();
        prop_assert!(b >= 1.0 && b >= norm && b <= 1.0 + norm);
        // Peetre-type bound <p + q> <= sqrt(2) <p> <q>
        let q = MomentumPoint::new(p.iter().map(|_| q_shift).collect());
        let s = MomentumPoint::new(p.iter().map(|v| v + q_shift).collect());
        prop_assert!(bracket(&s) <= 2f64.sqrt() * b * bracket(&q) * (1.0 + 1e-12));
    }

    #[test]
    fn relabelling_is_unitary(seed in 0u64..1000, alpha in 0.0f64..2.0, which in 0usize..6) {
        let g = GridSpec::new(1, 2.0 * PI, 4).unwrap();
        let gam = random_test_kernel(&g, 3, 0.0, seed).unwrap();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let moved = gam.permuted(&perms[which]).unwrap();
        prop_assert!(rel(sobolev_norm(&moved, alpha), sobolev_norm(&gam, alpha)) < 1e-12);
    }

    #[test]
    fn symmetrization_is_a_projection(data in values(256)) {
        let g = GridSpec::new(1, 2.0 * PI, 4).unwrap();
        let gam = MarginalKernel::from_data(&g, 2, data).unwrap();
        let s = gam.symmetrize().unwrap();
        let ss = s.symmetrize().unwrap();
        prop_assert!(ss.sub(&s).unwrap().max_abs() < 1e-15);
        prop_assert!(s.is_symmetric());
        prop_assert!(sobolev_norm(&s, 1.0) <= sobolev_norm(&gam, 1.0) * (1.0 + 1e-12));
    }

    #[test]
    fn free_flow_is_an_isometric_group(seed in 0u64..1000, t in -3.0f64..3.0, s in -3.0f64..3.0, alpha in 0.0f64..2.5) {
        let g = GridSpec::new(1, 2.0 * PI, 6).unwrap();
        let gam = random_test_kernel(&g, 2, 0.5, seed).unwrap();
        let ut = free_evolve(&gam, t);
        prop_assert!(rel(sobolev_norm(&ut, alpha), sobolev_norm(&gam, alpha)) < 1e-12);
        let composed = free_evolve(&ut, s);
        let direct = free_evolve(&gam, t + s);
        prop_assert!(composed.sub(&direct).unwrap().max_abs() < 1e-12 * gam.max_abs().max(1e-300) * 10.0);
    }

    #[test]
    fn collapse_is_linear(a in values(36 * 36), b in values(36 * 36), c in -2.0f64..2.0) {
        let g = GridSpec::new(1, 2.0 * PI, 6).unwrap();
        let x = MarginalKernel::from_data(&g, 2, a).unwrap();
        let y = MarginalKernel::from_data(&g, 2, b).unwrap();
        let mut xy = x.clone();
        xy.axpy(C64::new(c, 0.0), &y).unwrap();
        let mut want = raw_cubic(&x).unwrap();
        want.axpy(C64::new(c, 0.0), &raw_cubic(&y).unwrap()).unwrap();
        prop_assert!(raw_cubic(&xy).unwrap().sub(&want).unwrap().max_abs() <= 1e-12 * want.max_abs().max(1.0));
    }

    #[test]
    fn integral_decreases_in_beta(beta in 1.2f64..3.5, gap in 0.1f64..1.0) {
        let p = MomentumPoint::new(vec![0.0]);
        let lo = convolution_integral(beta, 1, &p, 8.0, 4).unwrap();
        let hi = convolution_integral(beta + gap, 1, &p, 8.0, 4).unwrap();
        prop_assert!(hi < lo);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn solve_is_linear(s1 in 0u64..100, s2 in 0u64..100, a in -1.5f64..1.5, b in -1.5f64..1.5) {
        let g = GridSpec::new(1, 2.0 * PI, 4).unwrap();
        let seq = |seed: u64| {
            let levels = (1..=3)
                .map(|k| gp_hierarchy::kernels::Level::dense(random_test_kernel(&g, k, 1.0, seed * 7 + k as u64).unwrap()))
                .collect();
            HierarchySequence::new(levels, 0.5).unwrap()
        };
        let (x, y) = (seq(s1), seq(s2 + 1000));
        let mut cfg = SolverConfig::new(g, Interaction::cubic(1.0).unwrap(), NormParams::new(1.0, 0.5).unwrap(), 3, 0.1, 4);
        cfg.tol_cauchy = 0.0;
        cfg.max_iterations = 4;
        let combo = x.scale(C64::new(a, 0.0)).axpy(C64::new(b, 0.0), &y).unwrap();
        let (tx, _) = solve(&x, &cfg).unwrap();
        let (ty, _) = solve(&y, &cfg).unwrap();
        let (tc, _) = solve(&combo, &cfg).unwrap();
        let params = NormParams::new(1.0, 0.5).unwrap();
        let scale = weighted_norm(&combo, &params).max(1e-12);
        for ((sx, sy), sc) in tx.states().iter().zip(ty.states()).zip(tc.states()) {
            let want = sx.scale(C64::new(a, 0.0)).axpy(C64::new(b, 0.0), sy).unwrap();
            let diff = sc.axpy(C64::new(-1.0, 0.0), &want).unwrap();
            prop_assert!(weighted_norm(&diff, &params) <= 1e-12 * scale.max(weighted_norm(&want, &params)));
        }
    }
}
