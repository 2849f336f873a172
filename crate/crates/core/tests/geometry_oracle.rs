mod common;

use common::{block_center, reference_haversine_km, synthetic_index};
use prestage::geometry::AggregateDemographics;
use prestage::{aggregate_demographics, blocks_within_radius, haversine_km, GeoPoint, RadiusQuery};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn radius_matches_scan_of_every_block() {
    let index = synthetic_index(3, 1, 1, 200);
    let (_, county) = index.counties().next().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let b = county.bbox;
    let mut nonempty = 0;
    for _ in 0..100 {
        let center = GeoPoint::new(
            rng.random_range(b.x_min - 0.05..b.x_max + 0.05),
            rng.random_range(b.y_min - 0.05..b.y_max + 0.05),
        )
        .unwrap();
        let q = RadiusQuery::new(center, rng.random_range(0.0..8.0)).unwrap();
        let got: Vec<&str> = blocks_within_radius(county, &q)
            .iter()
            .map(|b| b.full_fips.as_str())
            .collect();
        let mut expected: Vec<&str> = county
            .blocks
            .iter()
            .filter(|b| {
                let (lon, lat) = block_center(b);
                haversine_km(center, GeoPoint { lon, lat }) <= q.radius_km
            })
            .map(|b| b.full_fips.as_str())
            .collect();
        expected.sort();
        assert_eq!(got, expected);
        nonempty += usize::from(!got.is_empty());
    }
    assert!(nonempty > 10, "queries should hit something: {nonempty}");
}

#[test]
fn haversine_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let (lon1, lat1) = (rng.random_range(-180.0..180.0), rng.random_range(-90.0..90.0));
        let (lon2, lat2) = (rng.random_range(-180.0..180.0), rng.random_range(-90.0..90.0));
        let got = haversine_km(GeoPoint::new(lon1, lat1).unwrap(), GeoPoint::new(lon2, lat2).unwrap());
        let want = reference_haversine_km(lon1, lat1, lon2, lat2);
        assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{got} vs {want}");
    }
    // quarter meridian
    let q = haversine_km(GeoPoint::new(0.0, 0.0).unwrap(), GeoPoint::new(0.0, 90.0).unwrap());
    assert!((q - std::f64::consts::FRAC_PI_2 * 6371.0088).abs() < 1e-9);
}

#[test]
fn aggregate_matches_fold() {
    let index = synthetic_index(21, 2, 2, 30);
    for (_, county) in index.counties() {
        for take in [0, 1, 7, county.blocks.len()] {
            let subset = &county.blocks[..take];
            let agg = aggregate_demographics(subset);
            let pop: u64 = subset.iter().map(|b| b.demo.population).sum();
            let mut expected = AggregateDemographics {
                blocks: take,
                population: pop,
                under_15: subset.iter().map(|b| b.demo.under_15).sum(),
                over_65: subset.iter().map(|b| b.demo.over_65).sum(),
                mean_density: 0.0,
                mean_of_median_ages: 0.0,
            };
            if pop > 0 {
                expected.mean_density =
                    subset.iter().map(|b| b.demo.population as f64 * b.demo.density).sum::<f64>() / pop as f64;
            }
            if take > 0 {
                expected.mean_of_median_ages = subset.iter().map(|b| b.demo.median_age).sum::<f64>() / take as f64;
            }
            assert_eq!(agg.blocks, expected.blocks);
            assert_eq!(agg.population, expected.population);
            assert_eq!(agg.under_15, expected.under_15);
            assert_eq!(agg.over_65, expected.over_65);
            assert!((agg.mean_density - expected.mean_density).abs() <= 1e-9 * expected.mean_density.max(1.0));
            assert!((agg.mean_of_median_ages - expected.mean_of_median_ages).abs() <= 1e-9);
        }
    }
}

#[test]
fn zero_radius_off_grid_is_empty() {
    let index = synthetic_index(3, 1, 1, 9);
    let (_, county) = index.counties().next().unwrap();
    let q = RadiusQuery::new(GeoPoint::new(0.0, 0.0).unwrap(), 0.0).unwrap();
    let hits = blocks_within_radius(county, &q);
    assert!(hits.is_empty());
    assert_eq!(aggregate_demographics(hits.iter().copied()), AggregateDemographics::default());
}
