use std::path::PathBuf;

use coopsync::config::{make_parking_scenario, reference_random_scenario, ScenarioConfig};
use coopsync::experiment::{run_experiment, SLOTS_FILE};

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_configs_match_builders() {
    assert_eq!(ScenarioConfig::load(&shipped("reference-random.toml")).unwrap(), reference_random_scenario());
    assert_eq!(ScenarioConfig::load(&shipped("parking.toml")).unwrap(), make_parking_scenario());
}

#[test]
fn config_round_trips_through_toml() {
    for cfg in [reference_random_scenario(), make_parking_scenario()] {
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }
}

#[test]
fn unknown_and_invalid_fields_are_rejected() {
    let text = reference_random_scenario().to_toml_string().unwrap();
    let err = ScenarioConfig::from_toml_str(&format!("bogus = 1\n{text}")).unwrap_err();
    assert!(err.to_string().contains("bogus"), "{err}");
    let err = ScenarioConfig::from_toml_str(&text.replace("sigma_d = 1.0", "sigma_d = -1.0")).unwrap_err();
    assert!(err.to_string().contains("sigma_d"), "{err}");
}

#[test]
fn parking_run_sees_nlos_links() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = make_parking_scenario();
    cfg.trials = 2;
    cfg.n_time = 4;
    let path = tmp.path().join("parking.toml");
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    let out = tmp.path().join("out");
    let result = run_experiment(&path, &out).unwrap();
    assert_eq!(result.trials.len(), 2);

    let mut reader = csv::Reader::from_path(out.join(SLOTS_FILE)).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "nlos_links").unwrap();
    let nlos: u64 = reader
        .records()
        .map(|r| r.unwrap()[col].parse::<u64>().unwrap())
        .sum();
    assert!(nlos > 0);
    assert!(result.trials.iter().flat_map(|t| &t.slots).all(|s| s.iterations.len() == 21));
}
