//! BD values checked against frozen results of an independent reference
//! implementation (SciPy `PchipInterpolator.integrate` and NumPy `polyfit`).

use approx::assert_relative_eq;
use tooldse_core::bdmetrics::{bd_axis, bd_delta, rdcsv, CostAxis, InterpolationMethod, QualityAxis};

const FIG1: &str = include_str!("fixtures/tango2_fig1.csv");

fn fig1_curves() -> (tooldse_core::RdCurve, tooldse_core::RdCurve) {
    let rows = rdcsv::read_rows(FIG1.as_bytes()).unwrap();
    let curves = rdcsv::curves_from_rows(&rows).unwrap();
    let hm = curves[&("HM-16.20".to_string(), "Tango2".to_string())].clone();
    let vtm = curves[&("VTM-10.0".to_string(), "Tango2".to_string())].clone();
    (hm, vtm)
}

#[test]
fn tango2_matches_reference_pchip() {
    let (hm, vtm) = fig1_curves();
    let m = InterpolationMethod::Pchip;
    let cases = [
        (CostAxis::Rate, QualityAxis::Psnr, -39.407885332214576),
        (CostAxis::Energy, QualityAxis::Psnr, 81.07632026558085),
        (CostAxis::Energy, QualityAxis::Vmaf, 79.92124231286601),
    ];
    for (cost, quality, expected) in cases {
        let v = bd_axis(&hm, &vtm, cost, quality, m).unwrap();
        assert_relative_eq!(v.percent, expected, max_relative = 1e-9);
    }
}

#[test]
fn tango2_matches_reference_poly() {
    let (hm, vtm) = fig1_curves();
    let m = InterpolationMethod::Poly;
    let cases = [
        (CostAxis::Rate, QualityAxis::Psnr, -38.144330077464595),
        (CostAxis::Energy, QualityAxis::Psnr, 81.58863289784277),
        (CostAxis::Energy, QualityAxis::Vmaf, 81.86592903489466),
    ];
    for (cost, quality, expected) in cases {
        let v = bd_axis(&hm, &vtm, cost, quality, m).unwrap();
        assert_relative_eq!(v.percent, expected, max_relative = 1e-8);
    }
}

#[test]
fn random_pairs_match_reference() {
    type Pair = (&'static [(f64, f64)], &'static [(f64, f64)], f64, f64);
    let cases: [Pair; 3] = [
        (
            &[(616.19, 31.087), (3354.631, 32.263), (4616.178, 34.857), (4869.35, 39.764)],
            &[(1201.837, 30.562), (2086.827, 31.048), (3878.221, 31.361), (7458.984, 36.505)],
            68.6148212068259,
            10560.166320650358,
        ),
        (
            &[(514.586, 35.95), (1148.351, 38.657), (1383.87, 39.411), (2677.523, 44.216), (7740.369, 44.644)],
            &[(630.45, 32.711), (658.822, 34.627), (1933.033, 38.724), (3414.338, 39.584), (4974.926, 42.242)],
            97.9784016006664,
            151.2586906268352,
        ),
        (
            &[(2272.459, 34.497), (4774.249, 34.712), (5212.371, 36.414), (6321.05, 36.798), (7169.977, 38.783), (7888.724, 40.206)],
            &[(448.945, 31.771), (1452.662, 34.319), (4451.772, 36.272), (5199.931, 40.942), (6047.121, 41.357), (6904.681, 44.703)],
            -33.698907381453424,
            -32.42027830423218,
        ),
    ];
    for (r, t, pchip, poly) in cases {
        let a = bd_delta(r, t, InterpolationMethod::Pchip).unwrap();
        assert_relative_eq!(a.percent, pchip, max_relative = 1e-9);
        let b = bd_delta(r, t, InterpolationMethod::Poly).unwrap();
        assert_relative_eq!(b.percent, poly, max_relative = 1e-7);
    }
}
