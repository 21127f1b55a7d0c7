use std::path::Path;

use omega_core::config::LoadedConfig;
use omega_core::export::{region_json, write_json_file, write_profile_csv_file};
use omega_core::thresholds::threshold_set;
use omega_core::valuation::{default_grid, value_profile, Shape};

fn example_config() -> LoadedConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../sec6.toml");
    LoadedConfig::load(&path, &[]).unwrap()
}

#[test]
fn config_to_artifacts() {
    let loaded = example_config();
    let ctx = loaded.config.context().unwrap();
    let t = threshold_set(&ctx).unwrap();
    assert!((t.y_m - 3.738_326_8).abs() < 1e-6);
    assert!(t.y0.unwrap() < t.y_tilde.unwrap() && t.y_tilde.unwrap() < t.y_bar);

    let y = loaded.config.level_y().unwrap();
    let profile = value_profile(&ctx, y, &default_grid(&ctx, y, 120)).unwrap();
    assert_eq!(profile.solution.region.shape, Shape::IntervalPlusRay);
    for row in &profile.rows {
        let v = row.v.unwrap();
        assert!(v >= row.payoff - 1e-9, "x={}: v={v} < payoff={}", row.x, row.payoff);
        assert_eq!(row.in_region, profile.solution.region.contains(row.x));
    }

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    write_profile_csv_file(&profile, &csv).unwrap();
    let mut rdr = csv::Reader::from_path(&csv).unwrap();
    assert_eq!(rdr.records().count(), 120);

    let json = dir.path().join("r.json");
    write_json_file(&region_json(&profile), &json).unwrap();
    let back: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back["shape"], "IntervalPlusRay");
    let a = back["thresholds"]["a_star"]["price"].as_f64().unwrap();
    assert!((a - 19.1801).abs() < 0.02);
}

#[test]
fn value_is_continuous_across_region_boundaries() {
    let ctx = example_config().config.context().unwrap();
    for y in [2.7, 3.0] {
        let sol = omega_core::valuation::solve(&ctx, y).unwrap();
        for iv in &sol.region.intervals {
            for edge in [iv.lo, iv.hi].into_iter().filter(|e| e.is_finite()) {
                let inside = sol.value(&ctx, edge).unwrap();
                let payoff = edge.exp() - ctx.strike;
                assert!((inside - payoff).abs() < 1e-8 * payoff.max(1.0), "y={y}, edge={edge}");
                for side in [-1e-7, 1e-7] {
                    let v = sol.value(&ctx, edge + side).unwrap();
                    assert!((v - payoff).abs() < 1e-5 * payoff.max(1.0), "y={y}, edge={edge}, side={side}");
                }
            }
        }
    }
}
