use std::sync::Arc;

use proptest::prelude::*;

use pharmonic::geometry::{ConformalFactor, MetricChart, TargetSpace};
use pharmonic::jacobi::{index_integrand_at, pairing_integral};
use pharmonic::maps::{catalog_build, hs_norm_sq, CatalogParams, DeformationRule, ExponentField, SmoothMap};
use pharmonic::quadrature::{energy_p, integrate, Domain};
use pharmonic::section::{Bump, DirectionField, RawField, Section};
use pharmonic::tension::{p_tension_expanded_at, p_tension_trace_at, target_norm, tension_at};
use pharmonic::variation::first_variation_check;

fn charts() -> impl Strategy<Value = MetricChart> {
    prop_oneof![
        Just(MetricChart::euclidean(2)),
        (0.0..0.6f64).prop_map(|a| MetricChart::Perturbed { dim: 2, amplitude: a }),
        (-0.5..0.5f64, -0.5..0.5f64).prop_map(|(a, b)| MetricChart::conformal(
            2,
            ConformalFactor::Exponential {
                slope: vec![a, b],
                offset: 0.0
            }
        )),
        (0.5..2.0f64, -0.4..0.4f64, 0.5..2.0f64)
            .prop_map(|(a, b, c)| MetricChart::constant(vec![vec![a, b], vec![b, c]]).unwrap()),
    ]
}

fn coeffs(k: usize, scale: f64) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>, Vec<f64>)> {
    (
        prop::collection::vec(prop::collection::vec(-scale..scale, 2), k),
        prop::collection::vec(prop::collection::vec(prop::collection::vec(-scale..scale, 2), 2), k),
        prop::collection::vec(-scale..scale, k),
    )
}

fn quadratic(m: (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>, Vec<f64>), normalized: bool) -> Arc<SmoothMap> {
    let (matrix, quadratic, mut offset) = m;
    if normalized {
        // keep F away from the origin
        offset[0] += 6.0;
    }
    catalog_build(
        "quadratic",
        &CatalogParams {
            matrix: Some(matrix),
            quadratic: Some(quadratic),
            offset: Some(offset),
            normalized,
            ..Default::default()
        },
    )
    .unwrap()
    .map
}

fn with_chart(map: &SmoothMap, chart: MetricChart, target: Option<TargetSpace>) -> Arc<SmoothMap> {
    Arc::new(
        SmoothMap::new(
            map.name(),
            chart,
            target.unwrap_or_else(|| map.target().clone()),
            map.kind().clone(),
            map.region().clone(),
        )
        .unwrap(),
    )
}

fn exponent() -> impl Strategy<Value = ExponentField> {
    (2.0..4.0f64, 0.0..0.8f64, 0.0..0.8f64).prop_map(|(o, a, b)| ExponentField::Affine {
        offset: o + 0.1,
        slope: vec![a, b],
    })
}

fn unit_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn christoffel_symbols_are_symmetric(chart in charts(), x in unit_point()) {
        let g = chart.christoffels(&x).unwrap();
        for gk in &g {
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((gk[i][j] - gk[j][i]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn hilbert_schmidt_norm_is_nonnegative(chart in charts(), m in coeffs(3, 1.0), x in unit_point()) {
        let map = with_chart(&quadratic(m, false), chart, None);
        prop_assert!(hs_norm_sq(&map, &x).unwrap() >= 0.0);
    }

    #[test]
    fn trace_and_expanded_forms_agree(
        chart in charts(),
        m in coeffs(3, 1.0),
        p in exponent(),
        normalized in any::<bool>(),
        x in unit_point(),
    ) {
        let map = with_chart(&quadratic(m, normalized), chart, None);
        let a = p_tension_trace_at(&map, &p, &x).unwrap();
        let b = p_tension_expanded_at(&map, &p, &x).unwrap();
        let d: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
        prop_assert!(target_norm(&map, &x, &d) <= 1e-7 * (1.0 + target_norm(&map, &x, &a)));
    }

    #[test]
    fn exponent_two_gives_the_tension(chart in charts(), m in coeffs(3, 1.0), x in unit_point()) {
        let map = with_chart(&quadratic(m, true), chart, None);
        let t2 = p_tension_trace_at(&map, &ExponentField::constant(2.0), &x).unwrap();
        let t = tension_at(&map, &x).unwrap();
        for (a, b) in t2.iter().zip(&t) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn sphere_tension_is_tangent(m in coeffs(3, 1.0), p in exponent(), x in unit_point()) {
        let map = quadratic(m, true);
        let y = map.eval(&x);
        let t = p_tension_trace_at(&map, &p, &x).unwrap();
        let radial: f64 = y.iter().zip(&t).map(|(a, b)| a * b).sum();
        prop_assert!(radial.abs() <= 1e-10 * (1.0 + target_norm(&map, &x, &t)));
    }

    #[test]
    fn index_integrand_is_nonnegative_without_positive_curvature(
        m in coeffs(2, 0.25),
        p in exponent(),
        hyperbolic in any::<bool>(),
        amp in prop::collection::vec(-1.0..1.0f64, 2),
        freq in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 2),
        x in unit_point(),
    ) {
        let base = quadratic(m, false);
        let target = hyperbolic.then(|| TargetSpace::space_form(2, -1.0));
        let map = with_chart(&base, MetricChart::euclidean(2), target);
        let v = DirectionField::new(RawField::Trig { amplitude: amp, frequency: freq, phase: vec![0.3, 1.2] }, None);
        let s = Section::direction(map.clone(), v).unwrap();
        prop_assert!(index_integrand_at(&map, &p, &s, &x).unwrap() >= -1e-12);
    }

    #[test]
    fn space_form_curvature_symmetries(
        kappa in -1.0..1.0f64,
        y in prop::collection::vec(-0.4..0.4f64, 3),
        vs in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 4),
    ) {
        let t = TargetSpace::space_form(3, kappa);
        let f = t.frame(&y);
        let (a, b, c, d) = (&vs[0], &vs[1], &vs[2], &vs[3]);
        let r1 = f.curvature(a, b, c);
        let r2 = f.curvature(b, a, c);
        for (u, v) in r1.iter().zip(&r2) {
            prop_assert!((u + v).abs() < 1e-12);
        }
        let lhs = f.inner(&f.curvature(a, b, c), d);
        let rhs = -f.inner(&f.curvature(a, b, d), c);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn affine_energy_closed_form(
        a in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 2), 2),
        p in 2.0..5.0f64,
    ) {
        let e = catalog_build("affine", &CatalogParams { matrix: Some(a.clone()), p: Some(p), ..Default::default() }).unwrap();
        let fro: f64 = a.iter().flatten().map(|v| v * v).sum();
        let exact = fro.powf(0.5 * p) / p;
        let got = energy_p(&e.map, &e.exponent, &Domain::cube(0.0, 1.0, 2, 8)).unwrap();
        prop_assert!((got - exact).abs() <= 1e-12 * (1.0 + exact));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn jacobi_pairing_is_symmetric(
        m in coeffs(3, 0.8),
        p in exponent(),
        normalized in any::<bool>(),
        f1 in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 3),
        f2 in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 3),
    ) {
        let map = quadratic(m, normalized);
        let d = Domain::cube(0.0, 1.0, 2, 24);
        let bump = Bump::inside(&d, 2.0).unwrap();
        let raw = |f: Vec<Vec<f64>>| RawField::Trig { amplitude: vec![1.0, 0.7, 0.4], frequency: f, phase: vec![0.1, 0.9, 2.0] };
        let v = Section::direction(map.clone(), DirectionField::new(raw(f1), Some(bump.clone()))).unwrap();
        let w = Section::direction(map.clone(), DirectionField::new(raw(f2), Some(bump))).unwrap();
        let a = pairing_integral(&map, &p, &v, &w, &d).unwrap();
        let b = pairing_integral(&map, &p, &w, &v, &d).unwrap();
        prop_assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs()), "{a} {b}");
    }

    #[test]
    fn sphere_deformation_rules_share_the_first_variation(
        m in coeffs(3, 0.8),
        p in exponent(),
        f in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 3),
    ) {
        let map = quadratic(m, true);
        let d = Domain::cube(0.0, 1.0, 2, 16);
        let v = DirectionField::new(
            RawField::Trig { amplitude: vec![0.3, 0.2, 0.25], frequency: f, phase: vec![0.1, 0.9, 2.0] },
            Some(Bump::inside(&d, 2.0).unwrap()),
        );
        let a = first_variation_check(&map, &p, &v, &d, DeformationRule::Additive, 1e-3).unwrap();
        let g = first_variation_check(&map, &p, &v, &d, DeformationRule::Geodesic, 1e-3).unwrap();
        prop_assert!((a.lhs - g.lhs).abs() <= 1e-6 * (1.0 + a.lhs.abs()));
        prop_assert_eq!(a.rhs, g.rhs);
    }
}

#[test]
fn quadrature_is_independent_of_the_thread_count() {
    let d = Domain::cube(0.0, 1.0, 3, 24);
    let chart = MetricChart::Perturbed { dim: 3, amplitude: 0.3 };
    let f = |x: &[f64]| Ok((x[0] * 3.0).sin() * x[1].exp() + x[2]);
    let many = integrate(f, &d, &chart).unwrap();
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| integrate(f, &d, &chart).unwrap());
    assert_eq!(many.to_bits(), one.to_bits());
}
