use holoscat::experiment::export::{read_data_table, read_toml, Manifest, Table};
use holoscat::experiment::pipeline::generate_data;
use holoscat::experiment::ExperimentConfig;
use holoscat::forward::Scene;
use holoscat::mie::mie_circle_reference;
use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
[run]
seed = 4

[scene]
kappa_e = 12.56
kappa_i = 15.12
modes = 3
nodes = 32

[[truth]]
kind = "circle"
center = [0.0, 0.0]
radius = 0.2

[data]
noise = 0.02

[laplace]
samples = 200

[mcmc]
enabled = true
walkers = 20
steps = 20
burn_in = 40

[stats]
grid_step = 0.05
angles = 16
bins = 10
"#;

fn holoscat(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_holoscat")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.input.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn zero_noise_data_match_the_circle_series() {
    let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    cfg.data.noise = 0.0;
    let g = generate_data(&cfg).unwrap();
    let scene = Scene { kappa_e: 12.56, kappa_i: 15.12, beta: 1.0, incident: [0.0, 1.0], detectors: g.detectors.clone() };
    let mie = mie_circle_reference(0.2, [0.0, 0.0], &scene, &g.detectors).unwrap();
    for (a, b) in g.noisy.values.iter().zip(&mie) {
        assert!((a - b).norm() < 1e-10 * b.norm().max(1.0));
    }
    // even detectors invert, odd detectors build the prior, nothing is shared
    assert_eq!(g.invert.len() + g.prior.len(), g.detectors.len());
    assert_eq!(g.invert.values[3], g.noisy.values[6]);
    assert_eq!(g.prior.values[3], g.noisy.values[7]);
    assert_eq!(g.invert_points[0], [-5.0, 5.0]);
}

#[test]
fn cli_runs_every_stage_and_records_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), SMALL);
    let o = holoscat(&["all", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Manifest = read_toml(&out.join("manifest.toml")).unwrap();
    manifest.verify(&out).unwrap();
    let files: Vec<&str> = manifest.files.iter().map(|f| f.file.as_str()).collect();
    for f in ["data_invert.csv", "prior.toml", "map.toml", "laplace_samples.csv", "mcmc_samples.csv", "mcmc_rhat.csv", "laplace_inside.csv", "mcmc_marginals.csv"] {
        assert!(files.contains(&f), "{f} missing from {files:?}");
    }
    assert!(manifest.stages.iter().all(|s| s.status == "ok"), "{:?}", manifest.stages);
    // 20 walkers, 21 states each, 40 discarded
    let samples = Table::read(&out.join("mcmc_samples.csv")).unwrap();
    assert_eq!(samples.rows.len(), 20 * 21 - 40);
    let (pts, vals) = read_data_table(&Table::read(&out.join("data_invert.csv")).unwrap()).unwrap();
    assert_eq!((pts.len(), vals.len()), (101, 101));
}

#[test]
fn stages_run_one_at_a_time_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), SMALL);
    let out_s = out.to_str().unwrap();
    // a stage without its inputs fails with a plain error
    assert_eq!(holoscat(&["map", "--config", &cfg, "--out", out_s]).status.code(), Some(1));
    for verb in ["generate", "prior", "map"] {
        let o = holoscat(&[verb, "--config", &cfg, "--out", out_s]);
        assert!(o.status.success(), "{verb}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(out.join("map.toml").exists() && !out.join("laplace_samples.csv").exists());

    let other = dir.path().join("other");
    let o = holoscat(&["generate", "--config", &cfg, "--out", other.to_str().unwrap(), "--seed", "99"]);
    assert!(o.status.success());
    let a = std::fs::read(out.join("data_invert.csv")).unwrap();
    let b = std::fs::read(other.join("data_invert.csv")).unwrap();
    assert_ne!(a, b);
    let written = ExperimentConfig::load(&other.join("config.toml")).unwrap();
    assert_eq!(written.run.seed, 99);
}

#[test]
fn stage_skip_leaves_outputs_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), SMALL);
    let o = holoscat(&["all", "--config", &cfg, "--out", out.to_str().unwrap(), "--stage-skip", "mcmc,stats"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("laplace_samples.csv").exists());
    assert!(!out.join("mcmc_samples.csv").exists());
    assert!(!out.join("laplace_stats.csv").exists());
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write_config(dir.path(), &SMALL.replace("modes = 3", "modes = 3\nwobble = 1"));
    assert_eq!(holoscat(&["generate", "--config", &bad_key]).status.code(), Some(2));
    assert_eq!(holoscat(&["generate", "--config", "/nonexistent/config.toml"]).status.code(), Some(2));
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(holoscat(&["all", "--config", &cfg, "--stage-skip", "bogus"]).status.code(), Some(2));
    let negative = write_config(dir.path(), &SMALL.replace("noise = 0.02", "noise = -1.0"));
    assert_eq!(holoscat(&["generate", "--config", &negative]).status.code(), Some(2));
}

#[test]
fn sampler_initialization_failure_exits_with_code_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), SMALL);
    let out_s = out.to_str().unwrap();
    for verb in ["generate", "prior"] {
        assert!(holoscat(&[verb, "--config", &cfg, "--out", out_s]).status.success());
    }
    // a prior whose mean radius sits far below zero is (practically) never admissible
    let path = out.join("prior.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut prior: toml::Table = text.parse().unwrap();
    let comp = &mut prior["nu0"]["components"].as_array_mut().unwrap()[0];
    comp["a"].as_array_mut().unwrap()[0] = toml::Value::Float(-50.0);
    prior["variances"] = toml::Value::Array(vec![toml::Value::Float(1e-6); 9]);
    std::fs::write(&path, toml::to_string(&prior).unwrap()).unwrap();
    assert_eq!(holoscat(&["mcmc", "--config", &cfg, "--out", out_s]).status.code(), Some(5));
}
