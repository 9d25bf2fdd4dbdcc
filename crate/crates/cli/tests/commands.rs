use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use lanebench_cli::commands::{annotate, report, run, score};
use lanebench_core::dataset::{Store, FrameRecord};
use lanebench_core::episode::{InputMode, RunConfig};
use lanebench_core::expert::{ExpertConfig, MANDATED_QIDS};
use lanebench_core::metrics::InfractionKind;
use lanebench_core::vqa::ScoreWeights;

fn cfg(out: &Path, policy: &str, scenarios: &[&str]) -> RunConfig {
    RunConfig {
        output_dir: out.to_path_buf(),
        policy: policy.into(),
        scenarios: scenarios.iter().map(|s| s.to_string()).collect(),
        input_mode: InputMode::Text,
        ..Default::default()
    }
}

fn frame_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let store = Store::new(root);
    let mut out = BTreeMap::new();
    for s in store.scenarios().unwrap() {
        for f in store.frames(&s).unwrap() {
            let p = store.frame_path(&s, f).unwrap();
            out.insert(p.display().to_string(), std::fs::read(p).unwrap());
        }
    }
    out
}

#[test]
fn gt_echo_run_scores_full_marks_without_touching_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&cfg(dir.path(), "gt-echo", &["ObstacleAhead", "StopSignSpeedLimit"])).unwrap();
    assert_eq!(out.summary.driving_score, 100.0);
    assert_eq!(out.summary.success_rate, 100.0);
    assert!(dir.path().join("summary.csv").exists());

    let before = frame_bytes(dir.path());
    let rep = score(dir.path(), &ScoreWeights::default()).unwrap();
    assert_eq!(before, frame_bytes(dir.path()));
    assert_eq!(rep.flagged, 0);
    assert_eq!(rep.overall.len(), 8);
    for (col, v) in &rep.overall {
        assert_eq!(*v, 100.0, "{col}");
    }
    let table = std::fs::read_to_string(dir.path().join("scores/vqa_table.csv")).unwrap();
    assert!(table.starts_with("scenario,Imp. Obj.,T. Sign,S. Limit,Col. Obj.,C. Lane,Brake,A. Desc,A. Keys"), "{table}");

    let planning = report(dir.path()).unwrap();
    let text = planning.render();
    assert!(text.contains("Driving Score | Success Rate | Efficiency | Comfortness"), "{text}");
    assert!(dir.path().join("report/planning.csv").exists());
}

#[test]
fn constant_policy_runs_the_red_light() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&cfg(dir.path(), "constant", &["RedLightJunctionTurn"])).unwrap();
    let ep = &out.records[0];
    assert!(ep.log.infractions.iter().any(|e| e.kind == InfractionKind::RedLight), "{:?}", ep.log.infractions);
    assert!(ep.metrics.driving_score < 100.0);
}

#[test]
fn unreachable_policy_aborts_with_a_flagged_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut c = cfg(dir.path(), &format!("http://127.0.0.1:{port}"), &["FollowLeadVehicle"]);
    c.timeout_secs = 1;
    let out = run(&c).unwrap();
    assert_eq!(out.summary.aborted, 1);
    let ep = &out.records[0];
    assert!(ep.aborted.as_deref().unwrap().contains("3 attempt"), "{:?}", ep.aborted);
    assert_eq!(ep.policy_calls, 0);
    let doc = Store::new(dir.path()).read_doc("FollowLeadVehicle", "episode.json").unwrap();
    assert!(doc["aborted"].is_string());
}

#[test]
fn reannotating_closed_loop_states_reproduces_the_stored_answers() {
    let dir = tempfile::tempdir().unwrap();
    run(&cfg(dir.path(), "gt-echo", &["InvadingTurn"])).unwrap();
    let before = frame_bytes(dir.path());
    let rep = annotate(&dir.path().join("InvadingTurn"), dir.path(), &MANDATED_QIDS, &ExpertConfig::default()).unwrap();
    assert_eq!(rep.frames, before.len());
    assert!(rep.warnings.is_empty());
    assert_eq!(before, frame_bytes(dir.path()));
    assert!(Store::new(dir.path()).history("InvadingTurn").unwrap().is_empty());
}

#[test]
fn corrupt_snapshot_is_skipped_with_one_warning() {
    let dir = tempfile::tempdir().unwrap();
    let states = tempfile::tempdir().unwrap();
    let snap = Store::new(states.path());
    let mut w = lanebench_core::episode::load_world("FollowLeadVehicle", 0).unwrap();
    let idle = lanebench_core::world::VehicleControl { steer: 0.0, throttle: 0.3, brake: 0.0 };
    for _ in 0..100 {
        snap.write_state(&w).unwrap();
        w = lanebench_core::world::step(&w, &idle, lanebench_core::world::DEFAULT_DT);
    }
    let state_dir = states.path().join("FollowLeadVehicle").join("states");
    std::fs::write(state_dir.join("0000042.json"), b"{ truncated").unwrap();
    let rep = annotate(&state_dir, dir.path(), &[19, 50], &ExpertConfig::default()).unwrap();
    assert_eq!(rep.frames, 99);
    assert_eq!(rep.warnings.len(), 1);
    assert!(rep.warnings[0].starts_with("frame 42"));
    let store = Store::new(dir.path());
    assert_eq!(store.frames("FollowLeadVehicle").unwrap().len(), 99);
    assert_eq!(store.read_frame("FollowLeadVehicle", 7).unwrap().record.qa_pairs.len(), 2);
}

#[test]
fn empty_snapshot_dir_annotates_nothing_and_succeeds() {
    let states = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let rep = annotate(states.path(), out.path(), &MANDATED_QIDS, &ExpertConfig::default()).unwrap();
    assert_eq!(rep.frames, 0);
}

#[test]
fn missing_expert_answer_flags_the_row() {
    let dir = tempfile::tempdir().unwrap();
    run(&cfg(dir.path(), "gt-echo", &["FollowLeadVehicle"])).unwrap();
    let store = Store::new(dir.path());
    let f = store.frames("FollowLeadVehicle").unwrap()[1];
    let mut rec: FrameRecord = store.read_frame("FollowLeadVehicle", f).unwrap().record;
    rec.qa_pairs.retain(|q| q.qid != 43);
    std::fs::write(store.frame_path("FollowLeadVehicle", f).unwrap(), serde_json::to_vec(&rec).unwrap()).unwrap();
    let rep = score(dir.path(), &ScoreWeights::default()).unwrap();
    assert_eq!(rep.flagged, 1);
    let row = rep.rows.iter().find(|r| r.frame_index == f && r.qid == 43).unwrap();
    assert_eq!(row.flags, vec!["missing-gt"]);
    assert_eq!(rep.overall["A. Desc"], 100.0);
}

#[test]
fn empty_run_dir_gives_empty_tables() {
    let dir = tempfile::tempdir().unwrap();
    let e = score(dir.path(), &ScoreWeights::default()).unwrap_err();
    assert_eq!(e.exit_code(), 3);
    let table = std::fs::read_to_string(dir.path().join("scores/vqa_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert_eq!(report(dir.path()).unwrap_err().exit_code(), 3);
}

fn lanebench(args: &[&str], env: &[(&str, &str)]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lanebench")).args(args).envs(env.iter().copied()).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "interval = 0\n").unwrap();
    assert_eq!(lanebench(&["run", "-c", bad.to_str().unwrap()], &[]).0, 1);
    let (code, msg) = lanebench(&["run", "--policy", "oracle"], &[]);
    assert_eq!(code, 1);
    assert!(msg.contains("gt-echo"), "{msg}");
    assert_eq!(lanebench(&["run", "--scenario", "Nowhere"], &[]).0, 1);
    assert_eq!(lanebench(&["score", &format!("{d}/missing")], &[]).0, 2);
    assert_eq!(lanebench(&["report", d], &[]).0, 3);

    let run_dir = format!("{d}/run");
    let (code, msg) = lanebench(
        &["run", "--scenario", "StopSignSpeedLimit", "--output", &run_dir],
        &[("LANEBENCH_POLICY", "gt-echo"), ("LANEBENCH_INPUT_MODE", "text")],
    );
    assert_eq!(code, 0, "{msg}");
    assert!(msg.contains("DS 100.00"), "{msg}");
    let (code, msg) = lanebench(&["score", &run_dir], &[]);
    assert_eq!(code, 0, "{msg}");
    assert!(msg.contains("A. Keys: 100.00"), "{msg}");
    let (code, msg) = lanebench(&["report", &run_dir], &[]);
    assert_eq!(code, 0, "{msg}");
    assert!(msg.contains("Imp. Obj."), "{msg}");
    assert_eq!(lanebench(&["annotate", &format!("{run_dir}/StopSignSpeedLimit"), "-o", &run_dir, "--qids", "19,50"], &[]).0, 0);
}
