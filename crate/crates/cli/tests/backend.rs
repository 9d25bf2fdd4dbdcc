use lanebench_cli::backend::serve_backend;
use lanebench_cli::commands::run;
use lanebench_core::episode::{InputMode, RunConfig};
use reqwest::blocking::Client;
use serde_json::{json, Value};

const S: &str = "FollowLeadVehicle";

fn dataset() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        output_dir: dir.path().to_path_buf(),
        scenarios: vec![S.into()],
        input_mode: InputMode::Both,
        tick_budget: Some(50),
        ..Default::default()
    };
    run(&cfg).unwrap();
    dir
}

fn get(c: &Client, url: String) -> (u16, Value) {
    let r = c.get(url).send().unwrap();
    (r.status().as_u16(), r.json().unwrap_or(Value::Null))
}

fn send(c: &Client, method: reqwest::Method, url: String, body: Value) -> (u16, Value) {
    let r = c.request(method, url).json(&body).send().unwrap();
    (r.status().as_u16(), r.json().unwrap())
}

#[test]
fn review_workflow() {
    let dir = dataset();
    let h = serve_backend(dir.path().to_path_buf(), "127.0.0.1:0").unwrap();
    let base = format!("{}/api", h.url());
    let c = Client::new();

    let (code, ov) = get(&c, format!("{base}/overview"));
    assert_eq!(code, 200);
    assert_eq!(ov[0]["name"], S);
    assert_eq!(ov[0]["counts"], json!({"raw": 10, "controversial": 0, "verified": 0, "excluded": 0}));

    let (_, frames) = get(&c, format!("{base}/scenarios/{S}/frames"));
    assert_eq!(frames["frames"].as_array().unwrap().len(), 10);
    assert_eq!(frames["frames"][1], 5);

    let (code, fr) = get(&c, format!("{base}/scenarios/{S}/frames/5"));
    assert_eq!(code, 200);
    assert_eq!(fr["excluded"], false);
    let images = fr["record"]["images"].as_array().unwrap().clone();
    assert_eq!(images, vec![json!("0000005_bev.png"), json!("0000005_bev_trails.png")]);
    let img = c.get(format!("{base}/scenarios/{S}/images/0000005_bev.png")).send().unwrap();
    assert_eq!(img.headers()["content-type"], "image/png");
    assert!(img.bytes().unwrap().starts_with(b"\x89PNG"));

    let (_, all) = get(&c, format!("{base}/scenarios/{S}/qas"));
    assert_eq!(all.as_array().unwrap().len(), 90);
    let (_, only50) = get(&c, format!("{base}/scenarios/{S}/qas?qids=50&from=10&to=30"));
    let only50 = only50.as_array().unwrap();
    assert_eq!(only50.len(), 4);
    assert!(only50.iter().all(|q| q["qid"] == 50));
    assert_eq!(get(&c, format!("{base}/scenarios/{S}/qas?qids=5x")).0, 400);

    let (code, e) = send(&c, reqwest::Method::POST, format!("{base}/scenarios/{S}/frames/5/edits"), json!({"qid": 43, "text": "Slow down behind the lead car."}));
    assert_eq!(code, 200, "{e}");
    let (_, fr) = get(&c, format!("{base}/scenarios/{S}/frames/5"));
    let q43 = fr["record"]["qa_pairs"].as_array().unwrap().iter().find(|q| q["qid"] == 43).unwrap().clone();
    assert_eq!(q43["gt_answer_text"], "Slow down behind the lead car.");
    let (_, hist) = get(&c, format!("{base}/scenarios/{S}/history"));
    assert_eq!(hist.as_array().unwrap().len(), 1);
    assert_eq!(hist[0]["new_value"], "Slow down behind the lead car.");

    let (code, _) = send(&c, reqwest::Method::POST, format!("{base}/scenarios/{S}/frames/10/edits"), json!({"qid": 8, "text": "No.", "mark": "controversial"}));
    assert_eq!(code, 200);
    let (code, _) = send(&c, reqwest::Method::PUT, format!("{base}/scenarios/{S}/frames/15/status"), json!({"status": "verified"}));
    assert_eq!(code, 200);
    let (code, err) = send(&c, reqwest::Method::PUT, format!("{base}/scenarios/{S}/frames/15/status"), json!({"status": "raw"}));
    assert_eq!(code, 409, "{err}");
    let (_, ov) = get(&c, format!("{base}/overview"));
    assert_eq!(ov[0]["counts"], json!({"raw": 8, "controversial": 1, "verified": 1, "excluded": 0}));

    let (code, _) = send(&c, reqwest::Method::PUT, format!("{base}/scenarios/{S}/interval"), json!({"entry_frame": 10, "exit_frame": 30}));
    assert_eq!(code, 200);
    let (_, ov) = get(&c, format!("{base}/overview"));
    assert_eq!(ov[0]["counts"], json!({"raw": 2, "controversial": 1, "verified": 1, "excluded": 6}));
    let (_, fr) = get(&c, format!("{base}/scenarios/{S}/frames/40"));
    assert_eq!(fr["excluded"], true);
    let (code, _) = send(&c, reqwest::Method::PUT, format!("{base}/scenarios/{S}/interval"), json!({"entry_frame": 30, "exit_frame": 10}));
    assert_eq!(code, 400);

    let (code, err) = send(&c, reqwest::Method::POST, format!("{base}/scenarios/{S}/frames/5/edits"), json!({"qid": "x", "text": "t"}));
    assert_eq!(code, 400);
    assert!(err["error"].as_str().unwrap().starts_with("qid"), "{err}");
    assert_eq!(send(&c, reqwest::Method::POST, format!("{base}/scenarios/{S}/frames/5/edits"), json!({"qid": 99, "text": "t"})).0, 400);
    assert_eq!(get(&c, format!("{base}/scenarios/{S}/frames/6")).0, 404);
    assert_eq!(get(&c, format!("{base}/scenarios/Elsewhere/history")).0, 404);

    let (code, opts) = send(&c, reqwest::Method::POST, format!("{base}/options"), json!({"qid": 43, "text": "Keep following the lane."}));
    assert_eq!(code, 200);
    assert_eq!(opts, json!(["Keep following the lane."]));
    let (_, opts) = get(&c, format!("{base}/options"));
    assert_eq!(opts["43"], json!(["Keep following the lane."]));

    let (_, v) = get(&c, format!("{base}/version"));
    assert_eq!(v["version"], 5);
}

#[test]
fn concurrent_edits_are_all_recorded() {
    let dir = dataset();
    let h = serve_backend(dir.path().to_path_buf(), "127.0.0.1:0").unwrap();
    let base = format!("{}/api", h.url());
    std::thread::scope(|s| {
        for i in 0..8 {
            let base = base.clone();
            s.spawn(move || {
                let c = Client::new();
                let r = c.post(format!("{base}/scenarios/{S}/frames/{}/edits", (i % 4) * 5)).json(&json!({"qid": 43, "text": format!("edit {i}")})).send().unwrap();
                assert_eq!(r.status().as_u16(), 200);
            });
        }
    });
    let (_, hist) = get(&Client::new(), format!("{base}/scenarios/{S}/history"));
    assert_eq!(hist.as_array().unwrap().len(), 8);
}
