use lanebench_core::action::{ActionConfig, ActionModule};
use lanebench_core::expert::{DriveCommenter, ExpertConfig, MANDATED_QIDS};
use lanebench_core::keys::{extract_keys, ActionKeys, DirectionKey, SpeedKey};
use lanebench_core::policy::{decode_base64, encode_base64};
use lanebench_core::world::{bundled_scenario, refresh_derived, step, WorldState, BUNDLED_SCENARIO_NAMES, DEFAULT_DT};
use proptest::prelude::*;

fn perturbed(scenario: usize, dx: f64, dy: f64, dh: f64, speed: f64, ticks: u64) -> WorldState {
    let mut w = bundled_scenario(BUNDLED_SCENARIO_NAMES[scenario], 0).unwrap();
    for _ in 0..ticks {
        let ctl = lanebench_core::world::VehicleControl { steer: 0.0, throttle: 0.0, brake: 0.0 };
        w = step(&w, &ctl, DEFAULT_DT);
    }
    w.ego.pose.x += dx;
    w.ego.pose.y += dy;
    w.ego.pose.heading = lanebench_core::geometry::wrap_angle(w.ego.pose.heading + dh);
    w.ego.speed = speed;
    refresh_derived(&mut w);
    w
}

fn key_strategy() -> impl Strategy<Value = ActionKeys> {
    (
        proptest::option::of(proptest::sample::select(DirectionKey::ALL.to_vec())),
        proptest::option::of(proptest::sample::select(SpeedKey::ALL.to_vec())),
    )
        .prop_map(|(direction, speed)| ActionKeys { direction, speed })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn controls_stay_in_range_and_never_mix_pedals(
        sc in 0usize..5, dx in -20.0..20.0f64, dy in -6.0..6.0f64, dh in -3.2..3.2f64,
        speed in 0.0..20.0f64, ticks in 0u64..50, keys in key_strategy(), holds in 0usize..5,
    ) {
        let w = perturbed(sc, dx, dy, dh, speed, ticks);
        let mut m = ActionModule::new(ActionConfig::default(), Default::default());
        m.intervene(keys, &w);
        let mut w = w;
        for _ in 0..=holds {
            let c = m.control(&w, DEFAULT_DT);
            prop_assert!((-1.0..=1.0).contains(&c.steer), "{c:?}");
            prop_assert!((0.0..=1.0).contains(&c.throttle), "{c:?}");
            prop_assert!((0.0..=1.0).contains(&c.brake), "{c:?}");
            prop_assert!(c.throttle * c.brake == 0.0, "{c:?}");
            w = step(&w, &c, DEFAULT_DT);
            m.hold(&w);
        }
    }

    #[test]
    fn expert_answers_every_question_for_any_pose(
        sc in 0usize..5, dx in -30.0..30.0f64, dy in -12.0..12.0f64, dh in -3.2..3.2f64,
        speed in 0.0..20.0f64, ticks in 0u64..50,
    ) {
        let w = perturbed(sc, dx, dy, dh, speed, ticks);
        let c = DriveCommenter::new(ExpertConfig::default());
        let qas = c.annotate_frame(&w, &MANDATED_QIDS).unwrap();
        prop_assert_eq!(qas.len(), MANDATED_QIDS.len());
        let d = c.analyze(&w).decision;
        let keys = extract_keys(&qas.iter().find(|q| q.qid == 50).unwrap().gt_answer_text);
        prop_assert_eq!(keys, ActionKeys::new(d.direction, d.speed));
    }

    #[test]
    fn last_key_token_wins(
        a in proptest::sample::select(DirectionKey::ALL.to_vec()),
        b in proptest::sample::select(DirectionKey::ALL.to_vec()),
        s in proptest::sample::select(SpeedKey::ALL.to_vec()),
        t in proptest::sample::select(SpeedKey::ALL.to_vec()),
        filler in "[a-z ,.]{0,20}",
    ) {
        let text = format!("{a}, {s}{filler} so in the end {b} {t}");
        prop_assert_eq!(extract_keys(&text), ActionKeys::new(b, t));
    }

    #[test]
    fn base64_round_trips(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        prop_assert_eq!(decode_base64(&encode_base64(&bytes)).unwrap(), bytes);
    }
}
