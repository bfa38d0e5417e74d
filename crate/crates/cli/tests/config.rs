use serde_json::json;
use sphereflow_cli::config::ExperimentConfig;
use sphereflow_cli::CliError;

fn violations(v: serde_json::Value) -> Vec<String> {
    match ExperimentConfig::from_json(&v.to_string()) {
        Ok(_) => Vec::new(),
        Err(CliError::Config(v)) => v,
        Err(e) => panic!("unexpected error {e}"),
    }
}

fn minimal() -> serde_json::Value {
    json!({
        "schema_version": 1,
        "dataset_builtin": "two_moons",
        "base": "gaussian",
        "output_dir": "out"
    })
}

#[test]
fn minimal_config_takes_defaults() {
    let cfg = ExperimentConfig::from_json(&minimal().to_string()).unwrap();
    assert_eq!(
        (cfg.levels, cfg.steps, cfg.hidden_width, cfg.hidden_layers),
        (1, 8, 64, 2)
    );
    assert_eq!(cfg.epochs, 100);
    assert_eq!(cfg.arch_config().hidden, vec![64, 64]);
}

#[test]
fn vmf_with_dirichlet_alpha_is_rejected() {
    let mut c = minimal();
    c["base"] = json!("vmf");
    c["dirichlet_alpha"] = json!(2.0);
    let v = violations(c);
    assert_eq!(v.len(), 1);
    assert!(v[0].contains("exactly one base spec"), "{v:?}");
}

#[test]
fn unknown_keys_are_errors() {
    let mut c = minimal();
    c["learnig_rate"] = json!(0.01);
    let v = violations(c);
    assert!(v[0].contains("unknown field `learnig_rate`"), "{v:?}");
}

#[test]
fn every_violation_is_listed() {
    let c = json!({
        "schema_version": 2,
        "dataset_builtin": "spirals",
        "dataset_path": "x.csv",
        "base": "dirichlet",
        "dirichlet_alpha": -1.0,
        "vmf_kappa_multiplier": 0.0,
        "steps": 0,
        "learning_rate": -1.0,
        "batch_size": 0,
        "output_dir": ""
    });
    let v = violations(c);
    for needle in [
        "schema_version",
        "dataset:",
        "exactly one base spec",
        "dirichlet_alpha",
        "vmf_kappa_multiplier",
        "steps",
        "learning_rate",
        "batch_size",
        "output_dir",
    ] {
        assert!(
            v.iter().any(|m| m.contains(needle)),
            "missing {needle} in {v:?}"
        );
    }
}

#[test]
fn kappa_scales_with_dimension() {
    let mut c = minimal();
    c["base"] = json!("vmf");
    c["vmf_kappa_multiplier"] = json!(1.5);
    let cfg = ExperimentConfig::from_json(&c.to_string()).unwrap();
    match cfg.base_distribution(4).unwrap() {
        sphereflow::BaseDistribution::Vmf(v) => assert_eq!(v.kappa(), 6.0),
        b => panic!("{b:?}"),
    }
}
