use std::sync::Arc;

use proptest::prelude::*;
use serde_json::{json, Value};

use sad_sim_core::agents::RandomPolicy;
use sad_sim_core::env::{DrivingEnv, EnvConfig};
use sad_sim_core::eval::run_episode;
use sad_sim_core::factory::{generate_kind, GenParams};
use sad_sim_core::pilot::HighLevelAction;
use sad_sim_core::protocol::{Catalog, Session};
use sad_sim_core::scenario::{Scenario, ScenarioKind};
use sad_sim_core::sim::TerminationReason;

const KINDS: [ScenarioKind; 3] = [
    ScenarioKind::TypeA,
    ScenarioKind::TypeB,
    ScenarioKind::Cutout,
];

fn scenario(seed: u64) -> Arc<Scenario> {
    let p = GenParams {
        easy: seed % 4 == 3,
        ..GenParams::with_seed(seed)
    };
    Arc::new(generate_kind(KINDS[seed as usize % 3], &p).unwrap())
}

fn random_offroads(shield: bool, episodes: u64) -> usize {
    let mut cfg = EnvConfig::default();
    cfg.shield.enabled = shield;
    let mut env = DrivingEnv::new(cfg).unwrap();
    let mut count = 0;
    for i in 0..episodes {
        let mut policy = RandomPolicy::new(i);
        let rec = run_episode(&mut env, scenario(i % 40), &mut policy, "random", i).unwrap();
        count += (rec.reason == TerminationReason::Offroad) as usize;
    }
    count
}

#[test]
fn shield_keeps_random_driver_on_the_road() {
    assert_eq!(random_offroads(true, 120), 0);
    assert!(random_offroads(false, 120) > 0);
}

fn action() -> impl Strategy<Value = HighLevelAction> {
    (0usize..12).prop_map(|i| HighLevelAction::from_index(i).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lane_changes_run_to_completion(seed in 0u64..40, actions in prop::collection::vec(action(), 1..20)) {
        let mut cfg = EnvConfig::default();
        cfg.shield.enabled = false;
        let mut env = DrivingEnv::new(cfg).unwrap();
        let s = scenario(seed);
        env.reset(s.clone(), seed).unwrap();
        for a in actions {
            let t = env.state().unwrap().time(s.dt);
            let before = env.active_plan().copied();
            let out = env.step(a).unwrap();
            let after = env.active_plan().copied();
            if let Some(p) = before.filter(|p| p.is_active(t)) {
                prop_assert_eq!(after, Some(p));
            }
            if out.terminated {
                break;
            }
        }
    }
}

fn call(session: &mut Session, req: Value) -> Value {
    serde_json::from_str(&session.handle_line(&req.to_string()).text).unwrap()
}

#[test]
fn session_replays_in_process_episode() {
    let scenarios: Vec<_> = (0..6).map(scenario).collect();
    let catalog = Arc::new(Catalog::new(scenarios.clone()).unwrap());
    let mut session = Session::new(catalog, EnvConfig::default()).unwrap();
    let hello = call(&mut session, json!({"cmd": "hello"}));
    assert_eq!(hello["obs_dim"], json!(sad_sim_core::env::OBS_DIM));

    let mut env = DrivingEnv::new(EnvConfig::default()).unwrap();
    for (k, s) in scenarios.iter().enumerate() {
        let obs = env.reset(s.clone(), k as u64).unwrap();
        let r = call(
            &mut session,
            json!({"cmd": "reset", "scenario": s.id, "seed": k}),
        );
        assert_eq!(r["obs"], json!(env.features(&obs)));
        for tick in 0.. {
            let a = HighLevelAction::from_index((tick * 5 + k) % 12).unwrap();
            let out = env.step(a).unwrap();
            let r = call(
                &mut session,
                json!({"cmd": "step", "action": [a.lateral.index(), a.longitudinal.index()]}),
            );
            assert_eq!(r["ok"], json!(true), "{r}");
            assert_eq!(r["obs"], json!(out.features));
            assert_eq!(r["reward"], json!(out.reward));
            assert_eq!(r["terminated"], json!(out.terminated));
            assert_eq!(
                r["info"]["shield_overridden"],
                json!(out.info.shield_overridden)
            );
            assert_eq!(r["info"]["substeps"], json!(out.info.substeps));
            if out.terminated {
                assert_eq!(r["reason"], json!(out.reason.unwrap().as_str()));
                let again = call(&mut session, json!({"cmd": "step", "action": [1, 1]}));
                assert_eq!(again["error"], json!("episode_over"));
                break;
            }
        }
    }
}
