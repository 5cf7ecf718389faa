use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn socnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socnav")).args(args).output().expect("spawn socnav")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn logs(out: &Path) -> Vec<PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(out.join("logs")).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

const SMALL: &str = "name = \"small\"\nlayouts = [\"WALLS-B\"]\nagent = \"tracker\"\nepisodes = 3\npedestrians = 2\nseed = 5\n";

#[test]
fn layouts_list_and_export() {
    let out = socnav(&["layouts", "list"]);
    assert!(out.status.success());
    let listing = text(&out.stdout);
    for name in ["WALLS-A", "WALLS-I", "CIRCLE"] {
        assert!(listing.contains(name), "{listing}");
    }
    let out = socnav(&["layouts", "export", "WALLS-C"]);
    assert!(out.status.success());
    let layout = socnav_core::world::load_layout(&text(&out.stdout)).unwrap();
    assert_eq!(layout, socnav_core::world::builtin_layout("WALLS-C").unwrap());

    let out = socnav(&["layouts", "export", "NOPE"]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("unknown layout"));
}

#[test]
fn run_render_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = socnav(&["run", "--scenario", scenario.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = text(&out.stdout);
    assert!(csv.starts_with("Test,#ped,S,C,PC,OC,TO,PSO\n"), "{csv}");
    assert_eq!(csv, std::fs::read_to_string(out_dir.join("results.csv")).unwrap());
    assert!(out_dir.join("manifest.json").exists());

    let all = logs(&out_dir);
    assert_eq!(all.len(), 3);
    let log = all[0].to_str().unwrap();
    let svg = dir.path().join("e0.svg");
    let out = socnav(&["render", "--log", log, "--out", svg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let out = socnav(&["verify", "--log", log]);
    assert!(out.status.success());
    assert_eq!(text(&out.stdout).trim(), "ok");

    let mut tampered = socnav_core::log::EpisodeLog::read(&all[0]).unwrap();
    tampered.steps[1].robot.x += 1e-9;
    let path = tampered.write(&dir.path().join("tampered")).unwrap();
    let out = socnav(&["verify", "--log", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(text(&out.stdout).trim(), "divergence at step 1");
}

#[test]
fn unknown_agent_fails_before_any_episode() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &SMALL.replace("tracker", "teleport"));
    let out_dir = dir.path().join("out");
    let out = socnav(&["run", "--scenario", scenario.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("teleport"), "{}", text(&out.stderr));
    assert!(!out_dir.join("logs").exists());
}

#[test]
fn construction_failures_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &SMALL.replace("pedestrians = 2", "pedestrians = 500"));
    let out_dir = dir.path().join("out");
    let out = socnav(&["run", "--scenario", scenario.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("construction failed"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["failures"].as_array().unwrap().len(), 3);
}

#[test]
fn job_count_does_not_change_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &SMALL.replace("episodes = 3", "episodes = 6"));
    let run = |jobs: &str| {
        let out_dir = dir.path().join(format!("out{jobs}"));
        let out = socnav(&["run", "--scenario", scenario.to_str().unwrap(), "--jobs", jobs, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
        let mut files = vec![out_dir.join("results.csv"), out_dir.join("manifest.json")];
        files.extend(logs(&out_dir));
        files.iter().map(|f| (f.file_name().unwrap().to_owned(), std::fs::read(f).unwrap())).collect::<Vec<_>>()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), SMALL);
    let run = |seed: &str| {
        let out_dir = dir.path().join(format!("seed{seed}"));
        let out = socnav(&["run", "--scenario", scenario.to_str().unwrap(), "--seed", seed, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
        std::fs::read(&logs(&out_dir)[0]).unwrap()
    };
    assert_ne!(run("5"), run("6"));
}
