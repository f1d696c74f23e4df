use hilbert_lab::certify::{certify, Ball, CatalogFunction, CertifyConfig};
use hilbert_lab::fenchel::{dual_scaling_subgradient, fenchel_young_gap, GridFunction};
use hilbert_lab::quadratic::{extract_inner_product, form_ratio, identity_conditioning, QuadraticForm, Source};
use hilbert_lab::rademacher::{cotype_ratio, type_ratio, VectorFamily};
use hilbert_lab::{space_catalog, NormedSpace, Vector};
use proptest::prelude::*;

fn vector(len: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-3.0f64..3.0, len).prop_map(Vector::from_vec)
}

#[test]
fn catalog_spaces_round_trip_through_json() {
    for dim in 1..=4 {
        for space in space_catalog(dim).unwrap() {
            let json = serde_json::to_string(&space).unwrap();
            assert_eq!(serde_json::from_str::<NormedSpace>(&json).unwrap(), space, "{json}");
            let ball = Ball::new(Vector::from_element(dim, 0.5), 2.0, space.clone()).unwrap();
            let json = serde_json::to_string(&ball).unwrap();
            assert_eq!(serde_json::from_str::<Ball>(&json).unwrap(), ball, "{json}");
        }
    }
}

#[test]
fn grid_functions_reject_malformed_json() {
    assert!(serde_json::from_str::<GridFunction>(r#"{"lo": 1, "hi": 0, "values": [0, 0]}"#).is_err());
    assert!(serde_json::from_str::<GridFunction>(r#"{"lo": 0, "hi": 1, "values": [0]}"#).is_err());
    assert!(serde_json::from_str::<GridFunction>(r#"{"lo": 0, "hi": 1, "values": [0, 1], "extra": 2}"#).is_err());
    let g: GridFunction = serde_json::from_str(r#"{"lo": 0, "hi": 1, "values": [null, 1]}"#).unwrap();
    assert_eq!(g.values()[0], f64::INFINITY);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn holder_inequality_and_subgradient_pairing(x in vector(3), y in vector(3), l in 0.2f64..5.0) {
        for space in space_catalog(3).unwrap() {
            let pairing = x.dot(&y).abs();
            prop_assert!(pairing <= space.norm(&x).unwrap() * space.dual_norm(&y).unwrap() * (1.0 + 1e-12) + 1e-12);
            // the subgradient attains the Hölder bound
            let s = dual_scaling_subgradient(&space, &x, l).unwrap();
            let n = space.norm(&x).unwrap();
            prop_assert!((s.dot(&x) - n * space.dual_norm(&s).unwrap()).abs() <= 1e-9 * (1.0 + n * n / l));
        }
    }

    /// Any quadratic sandwich bounds the Rademacher ratios of every family.
    #[test]
    fn identity_sandwich_dominates_rademacher_ratios(
        xs in prop::collection::vec(vector(3), 1..5),
    ) {
        prop_assume!(xs.iter().any(|x| x.amax() > 1e-6));
        let family = VectorFamily::new(xs).unwrap();
        for p in [1.0, 2.0, f64::INFINITY] {
            let space = NormedSpace::lp(3, p).unwrap();
            let bound = identity_conditioning(&space, 100, 0).unwrap().ratio.sqrt();
            prop_assert!(type_ratio(&space, &family).unwrap() <= bound + 1e-9);
            prop_assert!(cotype_ratio(&space, &family).unwrap() <= bound + 1e-9);
        }
    }

    #[test]
    fn fenchel_young_for_quadratic_pairs(x in vector(2), z in vector(2), a in 0.2f64..5.0, b in 0.2f64..5.0) {
        let f = CatalogFunction::quadratic(QuadraticForm::from_diagonal(&[a, b]));
        let fstar = f.conjugate().unwrap();
        let gap = fenchel_young_gap(&f, &fstar, &x, &hilbert_lab::certify::SmoothFunction::gradient(&f, &z)).unwrap();
        prop_assert!(gap >= -1e-9);
    }
}

#[test]
fn extraction_and_certification_agree_on_quadratics() {
    let q = QuadraticForm::new(nalgebra::DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0])).unwrap();
    let f = CatalogFunction::quadratic(q.clone());
    for space in space_catalog(2).unwrap() {
        let cert = extract_inner_product(Source::Function(&f), &space, &Vector::zeros(2), 2000, 1).unwrap();
        let c = certify(&f, &Ball::unit(space.clone()), &CertifyConfig::new(2000, 2)).unwrap();
        // the Hessian-at-center witness makes the sampled constants bracket by the extracted extremes
        assert!(c.mu_hat <= cert.mu + 1e-9 && c.l_hat >= cert.l - 1e-9, "{space:?}: {c:?} vs {cert:?}");
        let r = form_ratio(&q, &space, 2000, 3).unwrap();
        assert!((r.ratio() - cert.l / cert.mu).abs() <= 1e-6 * r.ratio(), "{space:?}");
    }
}
