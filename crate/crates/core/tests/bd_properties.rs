use proptest::prelude::*;
use tooldse_core::bdmetrics::{bd_delta, psnr_yuv, InterpolationMethod};

fn method() -> impl Strategy<Value = InterpolationMethod> {
    prop_oneof![Just(InterpolationMethod::Pchip), Just(InterpolationMethod::Poly)]
}

/// A monotone curve starting at quality `q0`.
fn curve(q0: f64) -> impl Strategy<Value = Vec<(f64, f64)>> {
    (
        100.0f64..5000.0,
        prop::collection::vec((0.05f64..0.4, 0.4f64..2.5), 3..6),
    )
        .prop_map(move |(c0, steps)| {
            let mut out = vec![(c0, q0)];
            for (dl, dq) in steps {
                let (c, q) = *out.last().unwrap();
                out.push((c * 10f64.powf(dl), q + dq));
            }
            out
        })
}

fn pair() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    (30.0f64..36.0, -1.0f64..1.0).prop_flat_map(|(q0, off)| (curve(q0), curve(q0 + off)))
}

proptest! {
    #[test]
    fn reversal_identity((a, b) in pair(), m in method()) {
        let ab = bd_delta(&a, &b, m).unwrap().percent;
        let ba = bd_delta(&b, &a, m).unwrap().percent;
        let product = (1.0 + ab / 100.0) * (1.0 + ba / 100.0);
        prop_assert!((product - 1.0).abs() < 1e-9, "product {}", product);
    }

    #[test]
    fn cost_scale_invariance((a, b) in pair(), m in method(), k in 1e-3f64..1e3) {
        let base = bd_delta(&a, &b, m).unwrap().percent;
        let sa: Vec<_> = a.iter().map(|&(c, q)| (c * k, q)).collect();
        let sb: Vec<_> = b.iter().map(|&(c, q)| (c * k, q)).collect();
        let scaled = bd_delta(&sa, &sb, m).unwrap().percent;
        prop_assert!((scaled - base).abs() <= 1e-9 * base.abs().max(1.0));
    }

    #[test]
    fn quality_shift_invariance((a, b) in pair(), m in method(), s in -20.0f64..20.0) {
        let base = bd_delta(&a, &b, m).unwrap().percent;
        let sa: Vec<_> = a.iter().map(|&(c, q)| (c, q + s)).collect();
        let sb: Vec<_> = b.iter().map(|&(c, q)| (c, q + s)).collect();
        let shifted = bd_delta(&sa, &sb, m).unwrap().percent;
        prop_assert!((shifted - base).abs() <= 1e-9 * base.abs().max(1.0));
    }

    #[test]
    fn costlier_test_curve_raises_delta((a, b) in pair(), m in method(), k in 1.001f64..3.0) {
        let base = bd_delta(&a, &b, m).unwrap().percent;
        let up: Vec<_> = b.iter().map(|&(c, q)| (c * k, q)).collect();
        prop_assert!(bd_delta(&a, &up, m).unwrap().percent > base);
    }

    #[test]
    fn psnr_yuv_linear_and_symmetric(y in -100.0f64..100.0, u in -100.0f64..100.0, v in -100.0f64..100.0, t in -10.0f64..10.0) {
        let p = psnr_yuv(y, u, v).unwrap();
        prop_assert!((p - psnr_yuv(y, v, u).unwrap()).abs() < 1e-12);
        prop_assert!((psnr_yuv(y + t, u + t, v + t).unwrap() - (p + t)).abs() < 1e-9);
        prop_assert!((psnr_yuv(2.0 * y, 2.0 * u, 2.0 * v).unwrap() - 2.0 * p).abs() < 1e-9);
    }
}
