use std::time::Duration;

use lanebench_core::chain::{ChainConfig, FrameContext};
use lanebench_core::executor::{execute_frame, ExecError, FrameInputs};
use lanebench_core::expert::{AnswerKind, DriveCommenter, ExpertConfig, QaPair, MANDATED_QIDS};
use lanebench_core::policy::{
    builtin_policy, encode_base64, Echo, ImagePayload, Policy, PolicyError, PolicyRequest,
};
use lanebench_core::world::bundled_scenario;
use lanebench_bridge::{serve, HttpPolicy};
use proptest::prelude::*;
use serde_json::{json, Value};

fn request(prompt: &str) -> PolicyRequest {
    PolicyRequest {
        episode_id: "ep".into(),
        frame_index: 5,
        qid: 50,
        question: "What should the ego vehicle do?".into(),
        prompt: prompt.into(),
        answer_kind: AnswerKind::KeyValue,
        images: vec![],
        text_input: None,
    }
}

fn client(url: &str) -> HttpPolicy {
    HttpPolicy::new(url, Duration::from_secs(10)).unwrap()
}

/// Answers with the base64 of every image it was sent, comma separated.
struct ImageMirror;

impl Policy for ImageMirror {
    fn name(&self) -> &str {
        "image-mirror"
    }
    fn answer(&mut self, req: &PolicyRequest, _: Option<&QaPair>) -> Result<String, PolicyError> {
        let parts: Result<Vec<String>, _> = req.images.iter().map(|i| i.bytes().map(|b| encode_base64(&b))).collect();
        Ok(parts?.join(","))
    }
}

struct Slow;

impl Policy for Slow {
    fn name(&self) -> &str {
        "slow"
    }
    fn answer(&mut self, _: &PolicyRequest, _: Option<&QaPair>) -> Result<String, PolicyError> {
        std::thread::sleep(Duration::from_millis(1500));
        Ok("late".into())
    }
}

#[test]
fn health_reports_model_id() {
    let server = serve(Box::new(Echo), "127.0.0.1:0").unwrap();
    let mut p = client(&server.url());
    assert_eq!(p.probe().unwrap(), "echo");
    assert_eq!(p.name(), "echo");
    let body: Value = reqwest::blocking::get(format!("{}/health", server.url())).unwrap().json().unwrap();
    assert_eq!(body["status"], "ok");
}

#[test]
fn echo_answers_with_the_prompt_tail() {
    let server = serve(Box::new(Echo), "127.0.0.1:0").unwrap();
    let resp = client(&server.url()).call(&request("line one\nQuestion: where next?\n")).unwrap();
    assert_eq!(resp.answer, "Question: where next?");
    assert_eq!(resp.model_id, "echo");
}

#[test]
fn malformed_bodies_are_rejected_with_the_field() {
    let server = serve(Box::new(Echo), "127.0.0.1:0").unwrap();
    let http = reqwest::blocking::Client::new();
    let post = |body: String| {
        let r = http.post(format!("{}/infer", server.url())).header("content-type", "application/json").body(body).send().unwrap();
        (r.status().as_u16(), r.json::<Value>().unwrap())
    };
    let mut bad = serde_json::to_value(request("p")).unwrap();
    bad["qid"] = json!("fifty");
    let (status, body) = post(bad.to_string());
    assert_eq!(status, 400);
    assert_eq!(body["field"], "/qid");

    let mut empty = serde_json::to_value(request("p")).unwrap();
    empty["prompt"] = json!("");
    let (status, body) = post(empty.to_string());
    assert_eq!((status, body["field"].as_str()), (400, Some("/prompt")));

    let mut missing = serde_json::to_value(request("p")).unwrap();
    missing.as_object_mut().unwrap().remove("episode_id");
    let (status, body) = post(missing.to_string());
    assert_eq!(status, 400);
    assert!(body["error"].as_str().unwrap().contains("episode_id"), "{body}");

    let mut img = serde_json::to_value(request("p")).unwrap();
    img["images"] = json!([{"type": "inline", "media_type": "image/png", "data": "%%%"}]);
    let (status, body) = post(img.to_string());
    assert_eq!((status, body["field"].as_str()), (400, Some("/images/0")));

    let (status, _) = post("{not json".into());
    assert_eq!(status, 400);
}

#[test]
fn images_arrive_intact_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let png = lanebench_core::render::encode_png(&lanebench_core::render::render_bev(
        &bundled_scenario("ObstacleAhead", 0).unwrap(),
        &Default::default(),
    ));
    let path = dir.path().join("frame.png");
    std::fs::write(&path, &png).unwrap();
    let server = serve(Box::new(ImageMirror), "127.0.0.1:0").unwrap();
    let mut req = request("p");
    req.images = vec![ImagePayload::inline_png(&png), ImagePayload::Path { path: path.to_string_lossy().into() }];
    let answer = client(&server.url()).call(&req).unwrap().answer;
    let expected = encode_base64(&png);
    assert_eq!(answer, format!("{expected},{expected}"));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut p = HttpPolicy::new(&format!("http://127.0.0.1:{port}"), Duration::from_millis(500)).unwrap();
    assert!(matches!(p.answer(&request("p"), None), Err(PolicyError::Transport(_))));
}

#[test]
fn timeouts_are_transport_errors() {
    let server = serve(Box::new(Slow), "127.0.0.1:0").unwrap();
    let mut p = HttpPolicy::new(&server.url(), Duration::from_millis(200)).unwrap();
    match p.answer(&request("p"), None) {
        Err(PolicyError::Transport(m)) => assert!(m.contains("timed out"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn non_success_status_is_a_protocol_error() {
    let server = serve(builtin_policy("gt-echo", 0).unwrap(), "127.0.0.1:0").unwrap();
    match client(&server.url()).answer(&request("p"), None) {
        Err(PolicyError::Protocol(m)) => assert!(m.starts_with("status 422"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn executor_gives_up_after_three_attempts_on_a_dead_endpoint() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut p = HttpPolicy::new(&format!("http://127.0.0.1:{port}"), Duration::from_millis(300)).unwrap();
    let world = bundled_scenario("FollowLeadVehicle", 0).unwrap();
    let gt = DriveCommenter::new(ExpertConfig::default()).annotate_frame(&world, &MANDATED_QIDS).unwrap();
    let cfg = ChainConfig::default();
    let err = execute_frame(&cfg, &cfg.plan(), &mut FrameContext::default(), &gt, &FrameInputs::default(), &mut p, "ep", 0)
        .unwrap_err();
    assert!(matches!(err, ExecError::Policy { qid: 19, attempts: 3, source: PolicyError::Transport(_) }), "{err}");
}

#[test]
fn bind_failure_is_reported() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    assert!(serve(Box::new(Echo), &addr).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn http_answers_equal_in_process_answers(
        prompt in "[ -~\n]{1,200}".prop_filter("non-blank", |s| !s.trim().is_empty()),
        qid in proptest::sample::select(MANDATED_QIDS.to_vec()),
        frame in 0u64..500,
        which in 0usize..3,
    ) {
        let spec = ["echo", "constant", "constant:TURN_LEFT, STOP"][which];
        let server = serve(builtin_policy(spec, 3).unwrap(), "127.0.0.1:0").unwrap();
        let mut req = request(&prompt);
        req.qid = qid;
        req.frame_index = frame;
        let local = builtin_policy(spec, 3).unwrap().answer(&req, None).unwrap();
        let remote = client(&server.url()).answer(&req, None).unwrap();
        prop_assert_eq!(local, remote);
    }
}
