use lanebench_core::action::ActionModule;
use lanebench_core::expert::{DriveCommenter, MANDATED_QIDS, WEATHER_QID};
use lanebench_core::infraction::InfractionDetector;
use lanebench_core::vqa::{DeterministicJudge, Scorer};
use lanebench_core::world::{bundled_scenarios, step, DEFAULT_DT};

#[test]
fn expert_drives_every_bundled_scenario_cleanly_and_grades_itself_perfectly() {
    let dc = DriveCommenter::default();
    let scorer = Scorer::default();
    for mut w in bundled_scenarios(0) {
        let name = w.scenario_meta.name.clone();
        let mut act = ActionModule::default();
        let mut det = InfractionDetector::default();
        let mut events = Vec::new();
        let mut done = false;
        for _ in 0..w.scenario_meta.tick_budget {
            let a = dc.analyze(&w);
            if w.frame_index % 5 == 0 {
                let mut qids = MANDATED_QIDS.to_vec();
                qids.push(WEATHER_QID);
                for qa in dc.annotate_frame(&w, &qids).unwrap() {
                    let s = scorer.score(&qa, &qa.gt_answer_text, &DeterministicJudge);
                    assert_eq!(s.final_score, 1.0, "{name} frame {} {qa:?} {s:?}", w.frame_index);
                }
            }
            act.intervene(a.decision.keys(), &w);
            let next = step(&w, &act.control(&w, DEFAULT_DT), DEFAULT_DT);
            events.extend(det.observe(&w, &next, DEFAULT_DT));
            w = next;
            if std::env::var("TRACE").is_ok() && w.frame_index % 10 == 0 {
                eprintln!("{name} f{} x={:.1} y={:.2} v={:.2} {:?} {:?} {}", w.frame_index, w.ego.pose.x, w.ego.pose.y, w.ego.speed, a.decision.direction, a.decision.speed, a.decision.rationale);
            }
            if det.completed(&w) {
                done = true;
                break;
            }
        }
        assert!(events.is_empty(), "{name}: {events:?}");
        assert!(done, "{name}: incomplete at {:.2}", det.route_completion(&w));
    }
}
