use super::*;
use crate::error::Error;

const SIMULATE: &str = r#"
version = 1

[flow]
kind = "euclidean"
dim = 2

[mc]
n_paths = 2000
step = 0.01
seed = 7

[task]
kind = "simulate"
x = [0.0, 0.0]
s = 0.0
t = 1.0
"#;

const SHRINKING_SPHERE: &str = r#"
version = 1

[flow]
kind = "sphere"
dim = 2
scales = [{ kind = "linear", c0 = 1.0, rate = -2.0 }]

[mc]
n_paths = 200
step = 0.01
seed = 1

[task]
kind = "simulate"
x = [0.0, 0.0, 1.0]
s = 0.0
t = 0.4
"#;

fn simulate_config() -> ExperimentConfig {
    ExperimentConfig::parse(SIMULATE).unwrap()
}

#[test]
fn toml_round_trip() {
    let cfg = simulate_config();
    let back = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(cfg, back);
}

#[test]
fn verify_config_round_trips() {
    let text = r#"
version = 1
[flow]
kind = "sphere"
dim = 2
[mc]
n_paths = 200
step = 0.01
seed = 3
[task]
kind = "verify"
[[task.checks]]
kind = "gradient"
f = { kind = "coordinate", index = 2 }
x = [1.0, 0.0, 0.0]
s = 0.0
t = 0.5
p = 2.0
[[task.checks]]
kind = "hyperbound"
f = { kind = "constant", value = 1.0 }
x = [1.0, 0.0, 0.0]
s = 0.0
t = 0.5
q1 = 2.0
r = 0.2
"#;
    let cfg = ExperimentConfig::parse(text).unwrap();
    cfg.validate().unwrap();
    assert_eq!(ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
}

#[test]
fn unknown_keys_are_rejected() {
    let text = SIMULATE.replace("seed = 7", "seed = 7\nthreads = 4");
    assert!(matches!(ExperimentConfig::parse(&text), Err(Error::ConfigInvalid(_))));
}

#[test]
fn wrong_version_is_rejected() {
    let err = ExperimentConfig::parse(&SIMULATE.replace("version = 1", "version = 2")).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
}

#[test]
fn horizon_violation_is_config_invalid() {
    let mut cfg = ExperimentConfig::parse(SHRINKING_SPHERE).unwrap();
    assert!(run_experiment(&cfg).unwrap().errors().is_empty());
    if let TaskSpec::Simulate { t, .. } = &mut cfg.task {
        *t = 0.7;
    }
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(&err, Error::ConfigInvalid(m) if m[0].starts_with("task.t")), "{err}");
    assert!(ExperimentConfig::parse(&SHRINKING_SPHERE.replace("t = 0.4", "t = 0.7")).is_err());
}

#[test]
fn too_few_paths_is_config_invalid() {
    assert!(matches!(ExperimentConfig::parse(&SIMULATE.replace("n_paths = 2000", "n_paths = 10")), Err(Error::ConfigInvalid(m)) if m.iter().any(|s| s.contains("n_paths"))));
}

#[test]
fn simulate_terminal_variance_matches_heat_kernel() {
    let bundle = run_experiment(&simulate_config()).unwrap();
    assert!(bundle.errors().is_empty());
    let vars: Vec<_> = bundle.results.iter().filter(|r| r["name"] == "terminal_variance").collect();
    assert_eq!(vars.len(), 2);
    for v in vars {
        let mean = v["estimate"]["mean"].as_f64().unwrap();
        let se = v["estimate"]["stderr"].as_f64().unwrap();
        assert!((mean - 2.0).abs() < 4.0 * se + 0.02, "variance {mean} +- {se}");
    }
    assert_eq!(bundle.tables.len(), 1);
    assert!(bundle.plots[0].series.len() <= MAX_SVG_SERIES);
}

#[test]
fn empty_bundle_serializes() {
    let bundle = ReportBundle::new(simulate_config());
    let json: serde_json::Value = serde_json::from_str(&bundle.to_json().unwrap()).unwrap();
    assert_eq!(json["results"].as_array().unwrap().len(), 0);
    assert_eq!(json["diagnostics"].as_array().unwrap().len(), 0);
    assert_eq!(json["config"]["version"], 1);
    assert_eq!(json["task"], "simulate");
}

#[test]
fn svg_caps_polylines() {
    let plot = Plot {
        name: "many".into(),
        title: "a < b".into(),
        x_label: "x".into(),
        y_label: "y".into(),
        series: (0..80).map(|i| vec![(0.0, i as f64), (1.0, i as f64 + 1.0)]).collect(),
    };
    let svg = plot.to_svg();
    assert_eq!(svg.matches("<polyline").count(), MAX_SVG_SERIES);
    assert!(svg.contains("a &lt; b"));
    assert!(svg.starts_with("<svg"));
}

#[test]
fn nonexplosion_emits_growth_table() {
    let text = r#"
version = 1
[flow]
kind = "euclidean"
dim = 2
[mc]
n_paths = 100
step = 0.01
seed = 0
[task]
kind = "nonexplosion"
[task.spec]
variant = "direct"
psi = { kind = "power", coef = 1.0, exponent = 1.0 }
r_max = 100.0
n_grid = 10000
"#;
    let bundle = run_experiment(&ExperimentConfig::parse(text).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&bundle, dir.path(), &[Format::Json, Format::Csv, Format::Svg]).unwrap();
    assert_eq!(written.len(), 3);
    let csv = std::fs::read_to_string(dir.path().join("grigoryan.csv")).unwrap();
    assert!(csv.starts_with("R,F\n"));
    let svg = std::fs::read_to_string(dir.path().join("grigoryan.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
}

#[test]
fn reports_are_deterministic() {
    let a = run_experiment(&simulate_config()).unwrap().to_json().unwrap();
    let b = run_experiment(&simulate_config()).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = simulate_config();
    let a = run_experiment(&cfg).unwrap().to_json().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| run_experiment(&cfg).unwrap().to_json().unwrap());
    assert_eq!(a, b);
}
