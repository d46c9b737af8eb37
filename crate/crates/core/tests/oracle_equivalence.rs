mod support;

use geopriv::features::FeatureStore;
use geopriv::mechanism::PrivacyLevel;
use geopriv::poi::{dj_cluster, extract_pois, extract_stays, ExtractionParams};
use rand::Rng;
use support::{gen, oracle};

#[test]
fn extraction_matches_literal_algorithm() {
    let mut rng = gen::rng(0x5eed);
    let (mut stays_seen, mut pois_seen) = (0, 0);
    for case in 0..2000 {
        let trace = gen::random_trace(&mut rng, 30);
        let params = ExtractionParams::new(
            rng.random_range(600..=3600),
            rng.random_range(50.0..400.0),
            rng.random_range(1..=3),
        )
        .unwrap();
        let expected_stays = oracle::stays(trace.locations(), &params);
        let stays = extract_stays(&trace, &params);
        assert_eq!(stays, expected_stays, "case {case}");

        let (_, expected_pois) = oracle::clusters(&stays, &params);
        let pois = dj_cluster(&stays, &params);
        assert_eq!(oracle::sorted_pois(pois.clone()), oracle::sorted_pois(expected_pois), "case {case}");
        assert_eq!(extract_pois(&trace, &params).pois(), oracle::sorted_pois(pois).as_slice());
        stays_seen += stays.len();
        pois_seen += extract_pois(&trace, &params).len();
    }
    assert!(stays_seen > 500 && pois_seen > 100, "generator too tame: {stays_seen} stays, {pois_seen} POIs");
}

#[test]
fn clustering_matches_literal_algorithm_on_dense_stays() {
    // many stays, directly: exercises chained merges across many clusters
    let mut rng = gen::rng(77);
    let params = ExtractionParams::default();
    for case in 0..200 {
        let n = rng.random_range(0..80);
        let stays: Vec<_> = (0..n)
            .map(|i| geopriv::poi::Stay {
                centroid: gen::random_near_origin(&mut rng, 1500.0),
                start_t: i * 10_000,
                end_t: i * 10_000 + 3600,
                point_count: 3,
            })
            .collect();
        let (_, expected) = oracle::clusters(&stays, &params);
        assert_eq!(
            oracle::sorted_pois(dj_cluster(&stays, &params)),
            oracle::sorted_pois(expected),
            "case {case}"
        );
    }
}

#[test]
fn spatial_queries_match_linear_scan() {
    let mut rng = gen::rng(1);
    let features = gen::random_features(&mut rng, 1000);
    for cell in [100.0, 500.0, 3000.0] {
        let store = FeatureStore::with_cell_size(features.clone(), cell).unwrap();
        for _ in 0..300 {
            let c = gen::random_near_origin(&mut rng, 7000.0);
            let k = rng.random_range(0..40);
            let got: Vec<u64> = store.top_k(c, k).iter().map(|f| f.id).collect();
            assert_eq!(got, oracle::top_k(&features, c, k));
            let radius = rng.random_range(1.0..3000.0);
            let category = ["restaurant", "shop", "pub"][rng.random_range(0..3)];
            let category = rng.random_bool(0.5).then_some(category);
            let got: Vec<u64> = store.range_query(c, radius, category).iter().map(|f| f.id).collect();
            assert_eq!(got, oracle::range_query(&features, c, radius, category));
        }
    }
}

#[test]
fn inverse_cdf_matches_bisection() {
    for eps in [0.00139, 0.00358, 0.00693, 0.01, 1.0] {
        let level = PrivacyLevel::new(eps).unwrap();
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let fast = level.inverse_radius_cdf(p).unwrap();
            let slow = oracle::inverse_radius_cdf(eps, p);
            assert!(((fast - slow) / slow).abs() < 1e-9, "eps {eps} p {p}: {fast} vs {slow}");
        }
    }
}
