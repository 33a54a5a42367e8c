use std::fs;
use std::path::Path;

use memsim::cli::{self, RunManifest};

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("memsim").chain(args.iter().copied()))
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn summary_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.trim().strip_prefix('=')))
        .unwrap_or_else(|| panic!("no `{key}`"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn sweep_iv_writes_trace_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(run(&["sweep-iv", "--kind", "chromium", "--out", out]), cli::EXIT_OK);
    let csv = read(tmp.path(), "sweep_iv_chromium.csv");
    assert!(csv.lines().count() > 1000);
    assert!(read(tmp.path(), "sweep_iv_chromium.svg").starts_with("<svg"));
    assert!(read(tmp.path(), "sweep_iv_chromium_metrics.txt").contains("lobe_area_VA"));
    let m = RunManifest::from_text(&read(tmp.path(), "manifest.txt")).unwrap();
    assert_eq!(m.command, "sweep-iv");
    assert!(m.files.iter().any(|f| f == "sweep_iv_chromium.csv"));
}

#[test]
fn unsafe_amplitude_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let code = run(&["sweep-iv", "--amplitude", "0.9", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code, cli::EXIT_INVALID);
}

#[test]
fn bad_arguments_are_invalid() {
    assert_eq!(run(&["train", "--task", "zz"]), cli::EXIT_INVALID);
    assert_eq!(run(&["sweep-iv", "--kind", "gold"]), cli::EXIT_INVALID);
    assert_eq!(run(&["no-such-command"]), cli::EXIT_INVALID);
    assert_eq!(run(&["experiment", "fig8", "--workers", "0", "--seed", "0"]), cli::EXIT_INVALID);
}

#[test]
fn unknown_experiment_has_its_own_code() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["experiment", "fig99", "--out", tmp.path().to_str().unwrap()]), cli::EXIT_UNKNOWN_EXPERIMENT);
}

#[test]
fn unknown_config_key_is_invalid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.txt");
    fs::write(&cfg, "task = xo\nfavourite_colour = blue\n").unwrap();
    let code = run(&["experiment", "fig7", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code, cli::EXIT_INVALID);
}

#[test]
fn train_then_program_with_and_without_reset() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = dir.to_str().unwrap();
    assert_eq!(run(&["train", "--task", "xo", "--noise", "0.1", "--seed", "3", "--out", out]), cli::EXIT_OK);
    let weights = dir.join("weights_xo_100_3.txt");
    assert!(weights.exists());
    assert!(read(dir, "train_xo_100_3_loss.csv").starts_with("epoch,loss"));

    let w = weights.to_str().unwrap();
    let common = ["--weights", w, "--kind", "carbon", "--initial-state", "used", "--out", out];
    assert_eq!(run(&[&["program", "--reset"], &common[..]].concat()), cli::EXIT_OK);
    assert_eq!(run(&[&["program", "--no-reset"], &common[..]].concat()), cli::EXIT_OK);
    let on = read(dir, "program_xo_carbon_reset_0_summary.txt");
    let off = read(dir, "program_xo_carbon_noreset_0_summary.txt");
    assert!(summary_value(&off, "program_time_s") < summary_value(&on, "program_time_s"));
    assert!(summary_value(&off, "program_energy_J") < summary_value(&on, "program_energy_J"));
    assert!(read(dir, "program_xo_carbon_reset_0.csv").starts_with("layer,row,col"));

    // On a pristine chip the skipped zero-weight cells are truly off, and the
    // programmed network separates the clean glyphs.
    let fresh = dir.join("fresh");
    assert_eq!(run(&["program", "--weights", w, "--kind", "tungsten", "--out", fresh.to_str().unwrap()]), cli::EXIT_OK);
    assert_eq!(summary_value(&read(&fresh, "program_xo_tungsten_reset_0_summary.txt"), "accuracy"), 1.0);

    // A one-pulse budget cannot converge; --strict turns that into a failure.
    let cfg = dir.join("tight.txt");
    fs::write(&cfg, "max_cycles = 1\n").unwrap();
    let tight = ["program", "--weights", w, "--d2d-seed", "2", "--config", cfg.to_str().unwrap(), "--out", out];
    assert_eq!(run(&tight), cli::EXIT_OK);
    assert_eq!(run(&[&tight[..], &["--strict"]].concat()), cli::EXIT_STRICT);

    assert_eq!(run(&["program", "--weights", w, "--kind", "carbon", "--d2d-seed", "1", "--out", out]), cli::EXIT_INVALID);
    let missing = dir.join("missing.txt");
    assert_eq!(run(&["program", "--weights", missing.to_str().unwrap(), "--out", out]), cli::EXIT_INVALID);
}

#[test]
fn replay_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert_eq!(run(&["experiment", "fig7", "--seed", "1", "--out", a.to_str().unwrap()]), cli::EXIT_OK);
    let manifest = a.join("manifest.txt");
    let before: Vec<(String, String)> = RunManifest::from_text(&read(&a, "manifest.txt"))
        .unwrap()
        .files
        .iter()
        .map(|f| (f.clone(), read(&a, f)))
        .collect();
    assert!(before.len() >= 13);
    for (f, _) in &before {
        fs::remove_file(a.join(f)).unwrap();
    }
    assert_eq!(run(&["replay", manifest.to_str().unwrap()]), cli::EXIT_OK);
    for (f, contents) in before {
        assert_eq!(read(&a, &f), contents, "{f}");
    }
}
