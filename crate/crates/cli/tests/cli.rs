use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use dscope_cli::{Context, Stage};
use dscope_core::experiment::ExperimentConfig;

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn smoke_config() -> ExperimentConfig {
    let text = fs::read_to_string(workspace_file("configs/smoke.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn dscope(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dscope"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("DSCOPE_THREADS", t),
        None => cmd.env_remove("DSCOPE_THREADS"),
    };
    cmd.output().unwrap()
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn committed_default_config_matches_code_defaults() {
    let text = fs::read_to_string(workspace_file("configs/default.json")).unwrap();
    let parsed: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, ExperimentConfig::default());
}

#[test]
fn plot_of_four_points_has_four_distinct_circles() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("four.csv");
    fs::write(&input, "x,y,label\n0,0,0\n1,0,1\n0,1,2\n1,1,3\n").unwrap();
    let out = dscope(&["plot", "--input", input.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg_path = dir.path().join("four.svg");
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), svg_path.display().to_string());
    let svg = fs::read_to_string(svg_path).unwrap();
    let circles: Vec<&str> = svg.lines().filter(|l| l.starts_with("<circle")).collect();
    assert_eq!(circles.len(), 4);
    let colors: BTreeSet<&str> = circles
        .iter()
        .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap())
        .collect();
    assert_eq!(colors.len(), 4);
}

#[test]
fn downstream_command_without_inputs_names_the_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace_file("configs/smoke.json");
    let out = dscope(
        &["train", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        Some("0"),
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing artifact"), "{err}");
    assert!(err.contains("synth.done"), "{err}");

    let missing_config = dir.path().join("nope.json");
    let out = dscope(&["synth", "--config", missing_config.to_str().unwrap()], Some("0"));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
}

#[test]
fn argument_errors_exit_nonzero() {
    let config = workspace_file("configs/smoke.json");
    let config = config.to_str().unwrap();
    assert!(!dscope(&["synth", "--config", config, "--stage", "train"], Some("0")).status.success());
    assert!(!dscope(&["synth"], Some("0")).status.success());
    let dir = tempfile::tempdir().unwrap();
    let out = dscope(&["synth", "--config", config, "--out", dir.path().to_str().unwrap()], Some("many"));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("DSCOPE_THREADS"));
}

#[test]
fn synth_echoes_every_written_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace_file("configs/smoke.json");
    let out = dscope(
        &["synth", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        Some("0"),
    );
    assert!(out.status.success());
    let echoed: BTreeSet<PathBuf> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| Path::new(l).strip_prefix(dir.path()).unwrap().to_path_buf())
        .collect();
    let on_disk: BTreeSet<PathBuf> = files_under(dir.path()).into_iter().collect();
    assert_eq!(echoed, on_disk);
    assert!(on_disk.contains(Path::new("synth.done")));
}

#[test]
fn pipeline_is_deterministic_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path, threads| {
        let ctx = Context::new(smoke_config(), None, Some(dir.to_path_buf()), threads).unwrap();
        ctx.run_pipeline(Stage::Plot).unwrap()
    };
    let written = run(a.path(), Some(0));
    run(b.path(), Some(2));
    let files = files_under(a.path());
    assert_eq!(files, files_under(b.path()));
    assert_eq!(written.len(), files.len());
    for f in &files {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{}", f.display());
    }
    // 5 taps x 2 conditions x 2 budgets per seed
    let per_seed = files
        .iter()
        .filter(|f| f.starts_with("embeddings/triplet") && f.extension().unwrap() == "csv")
        .filter(|f| f.to_str().unwrap().contains("_s0_"))
        .count();
    assert_eq!(per_seed, 20);
}

#[test]
fn completed_stages_are_not_rerun_and_config_edits_invalidate() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context::new(smoke_config(), None, Some(dir.path().to_path_buf()), Some(0)).unwrap();
    ctx.run_pipeline(Stage::Train).unwrap();
    assert!(ctx.is_current(Stage::Train).unwrap());
    assert!(!dir.path().join("embed.done").exists());
    let model = dir.path().join("models/teacher.dscm");
    let before = fs::metadata(&model).unwrap().modified().unwrap();
    std::thread::sleep(std::time::Duration::from_millis(20));
    let rerun = ctx.run_pipeline(Stage::Plot).unwrap();
    assert!(!rerun.iter().any(|p| p.ends_with("teacher.dscm")));
    assert_eq!(fs::metadata(&model).unwrap().modified().unwrap(), before);
    assert!(ctx.run_pipeline(Stage::Plot).unwrap().is_empty());

    let mut edited = smoke_config();
    edited.tsne.perplexity = 4.0;
    let ctx = Context::new(edited, None, Some(dir.path().to_path_buf()), Some(0)).unwrap();
    assert!(!ctx.is_current(Stage::Embed).unwrap());
}

#[test]
fn seed_flag_restricts_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context::new(smoke_config(), Some(1), Some(dir.path().to_path_buf()), Some(0)).unwrap();
    ctx.run_pipeline(Stage::Train).unwrap();
    let models: Vec<PathBuf> = files_under(&dir.path().join("models"));
    assert!(models.iter().all(|m| m == Path::new("teacher.dscm") || m.to_str().unwrap().ends_with("_s1.dscm")));
    assert_eq!(models.len(), 1 + 2 * 2);
}
