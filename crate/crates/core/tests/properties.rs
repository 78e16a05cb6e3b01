//! Property tests for the invariants that hold for *all* inputs, not just
//! the worked examples.

use proptest::prelude::*;

use latentdirs::autodiff::{Tape, Tensor};
use latentdirs::directions::DirectionBank;
use latentdirs::evaluation::{frechet_from_features, ols_slope_ci, ALPHA_GRID};
use latentdirs::generator::{render_scene, SceneParams};
use latentdirs::scorers::ScorerKind;

fn finite_vec(len: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cosine_similarity_stays_in_unit_interval(
        u in finite_vec(6, 3.0),
        v in finite_vec(6, 3.0),
    ) {
        let tu = Tensor::vector(&u).unwrap();
        let tv = Tensor::vector(&v).unwrap();
        prop_assume!(tu.norm() >= 1e-6 && tv.norm() >= 1e-6);
        let mut tape = Tape::new();
        let a = tape.leaf(tu);
        let b = tape.leaf(tv);
        let c = tape.cosine_similarity(a, b).unwrap();
        let value = tape.value(c).data()[0];
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&value), "{value}");
    }

    #[test]
    fn relu_is_nonnegative_and_sigmoid_is_open_unit(xs in finite_vec(12, 30.0)) {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(&xs).unwrap());
        let r = tape.relu(a).unwrap();
        prop_assert!(tape.value(r).data().iter().all(|&x| x >= 0.0));
        let s = tape.sigmoid(a).unwrap();
        prop_assert!(tape.value(s).data().iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn shifting_by_alpha_zero_is_the_identity_bitwise(
        seed in 0u64..1000,
        z in finite_vec(6, 2.0),
        i in 0usize..3,
    ) {
        let bank = DirectionBank::init(seed, 3, 6, 8, 0.01).unwrap();
        let zt = Tensor::vector(&z).unwrap();
        let out = bank.apply_direction(i, &zt, 0.0).unwrap();
        for (a, b) in out.data().iter().zip(zt.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rendered_scenes_stay_in_range_and_score_in_extended_unit(
        cx in 0.0f64..1.0,
        cy in 0.0f64..1.0,
        radius in 0.05f64..0.45,
        fg in finite_vec(3, 0.5),
        bg in finite_vec(3, 0.5),
    ) {
        let scene = SceneParams {
            center_x: cx,
            center_y: cy,
            radius,
            fg_rgb: [fg[0].abs() * 2.0, fg[1].abs() * 2.0, fg[2].abs() * 2.0]
                .map(|v| v.min(1.0)),
            bg_rgb: [bg[0].abs() * 2.0, bg[1].abs() * 2.0, bg[2].abs() * 2.0]
                .map(|v| v.min(1.0)),
        };
        let (img, mask) = render_scene(&scene, 16, 0.02).unwrap();
        prop_assert!(img.pixels().data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!(mask.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        for kind in ScorerKind::ALL {
            let v = kind.score(&img, &mask).unwrap();
            prop_assert!((0.0..=1.05).contains(&v), "{kind} gave {v}");
        }
    }

    #[test]
    fn exactly_linear_data_recovers_the_slope(
        beta in -3.0f64..3.0,
        intercept in -1.0f64..1.0,
    ) {
        let points: Vec<(f64, f64)> = ALPHA_GRID
            .iter()
            .map(|a| (*a, intercept + beta * a))
            .collect();
        let fit = ols_slope_ci(&points).unwrap();
        prop_assert!((fit.beta - beta).abs() <= 1e-12);
        prop_assert!((fit.intercept - intercept).abs() <= 1e-12);
        prop_assert!((fit.ci_high - fit.ci_low).abs() <= 1e-12);
        prop_assert!(fit.ci_low <= fit.beta && fit.beta <= fit.ci_high);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn frechet_proxy_is_symmetric_and_nonnegative(seed in 0u64..500) {
        use latentdirs::rng::{domain, RandomStream};
        let mut s = RandomStream::new(seed, domain::SYNTH);
        let dim = 3;
        let cloud = |s: &mut RandomStream, shift: f64, scale: f64| -> Vec<Vec<f64>> {
            (0..24)
                .map(|_| (0..dim).map(|_| shift + scale * s.normal()).collect())
                .collect()
        };
        let a = cloud(&mut s, 0.0, 1.0);
        let b = cloud(&mut s, 0.4, 0.7);
        let ab = frechet_from_features(&a, &b, dim).unwrap().distance;
        let ba = frechet_from_features(&b, &a, dim).unwrap().distance;
        prop_assert!((ab - ba).abs() <= 1e-9, "{ab} vs {ba}");
        prop_assert!(ab >= 0.0);
    }
}
