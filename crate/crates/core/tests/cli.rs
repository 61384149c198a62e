use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn reinet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reinet")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn layer_inserts_identities() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    fs::write(&g, r#"{"vertices": 3, "edges": [[2, 0], [2, 1], [1, 0]]}"#).unwrap();
    let text = ok(&reinet(&["layer", "--in", p(&g)]));
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["vertices"], 4);

    fs::write(&g, r#"{"vertices": 3, "edges": [[2, 0], [2, 1], [1, 0], [0, 2]]}"#).unwrap();
    let out = reinet(&["layer", "--in", p(&g)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cycle"));
}

#[test]
fn train_eval_summarize_plot() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let text = ok(&reinet(&[
        "train", "--variant", "3ppo", "--env", "spread", "--seeds", "0..2", "--steps", "1000", "--out", p(&run),
    ]));
    assert!(text.contains("seed 0") && text.contains("seed 1"), "{text}");
    let metrics = run.join("metrics.csv");
    let header = fs::read_to_string(&metrics).unwrap();
    assert!(header.starts_with("variant,env,seed,global_step,episode,mean_episode_reward"));

    let text = ok(&reinet(&["eval", "--checkpoint", p(&run.join("seed-0/final")), "--episodes", "4"]));
    assert!(text.starts_with("episodes 4 mean -"), "{text}");
    let random = ok(&reinet(&[
        "eval", "--checkpoint", p(&run.join("seed-0/final")), "--episodes", "4", "--policy", "random",
    ]));
    assert_ne!(text, random);

    let summary = dir.path().join("summary");
    ok(&reinet(&["summarize", "--in", p(&metrics), "--bin", "10", "--out", p(&summary)]));
    let csv = fs::read_to_string(summary.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(fs::read_to_string(summary.join("summary.svg")).unwrap().starts_with("<svg"));

    let svg = dir.path().join("again.svg");
    ok(&reinet(&["plot", "--in", p(&summary.join("summary.csv")), "--out", p(&svg)]));
    assert!(svg.exists());
}

#[test]
fn config_file_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let run = dir.path().join("run");
    fs::write(
        &cfg,
        format!(
            r#"{{"env": {{"name": "spread"}}, "variant": "ippo",
               "training": {{"budget": 1500, "seeds": [3]}},
               "output": {{"dir": "{}", "checkpoint_every": 1000}}}}"#,
            p(&run)
        ),
    )
    .unwrap();
    ok(&reinet(&["train", "--config", p(&cfg)]));
    let resumed = dir.path().join("resumed");
    ok(&reinet(&["train", "--resume", p(&run.join("seed-3/step-1000")), "--out", p(&resumed)]));
    assert_eq!(
        fs::read(run.join("metrics.csv")).unwrap(),
        fs::read(resumed.join("metrics.csv")).unwrap()
    );
}

#[test]
fn bad_arguments_fail_cleanly() {
    for args in [
        &["train", "--variant", "nope", "--steps", "10"][..],
        &["train", "--env", "pong", "--steps", "10"],
        &["train", "--seeds", "3..1", "--steps", "10"],
        &["eval", "--checkpoint", "/nonexistent/dir"],
    ] {
        let out = reinet(args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"), "{args:?}");
    }
}
