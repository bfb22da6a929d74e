use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;

use sad_sim_core::factory::{
    build_dataset, decision_time, generate_kind, generate_type_a, load_manifest_scenarios,
    passes_filter, DatasetSpec, GenParams, Interval, KindCounts, Split,
};
use sad_sim_core::pilot::{HighLevelAction, PilotConfig};
use sad_sim_core::road::wrap_angle;
use sad_sim_core::scenario::{
    check_drivability, load_json, save_json, Scenario, ScenarioKind, YAW_RATE_BOUND,
};
use sad_sim_core::sim::{rollout_policy, SimConfig, TerminationReason};

const CRITICAL: [ScenarioKind; 3] = [
    ScenarioKind::TypeA,
    ScenarioKind::TypeB,
    ScenarioKind::Cutout,
];

fn pinned_type_a(seed: u64, speed: f64, onset: f64) -> Scenario {
    let p = GenParams {
        ego_speed_range: Interval::point(speed),
        gap_range: Interval::point(40.0),
        challenger_decel_range: Interval::point(-6.0),
        onset_delay_range: Interval::point(onset),
        ..GenParams::with_seed(seed)
    };
    generate_type_a(&p).unwrap()
}

/// Contact time for an ego cruising at `v` behind a lead 40 m ahead that
/// brakes at 6 m/s² from `onset` until it stops.
fn contact_time(v: f64, onset: f64) -> f64 {
    let (gap, b) = (40.0, 6.0);
    let stop = v / b;
    let closed_at_stop = 0.5 * b * stop * stop;
    if closed_at_stop >= gap {
        onset + (2.0 * gap / b).sqrt()
    } else {
        onset + stop + (gap - closed_at_stop) / v
    }
}

#[test]
fn type_a_decision_time_matches_closed_form() {
    for (seed, v, onset) in [
        (1, 30.0, 2.0),
        (2, 20.0, 2.0),
        (3, 25.0, 4.0),
        (4, 34.0, 1.0),
    ] {
        let s = pinned_type_a(seed, v, onset);
        let t_star = contact_time(v, onset);
        let d = decision_time(&s).unwrap();
        assert!(
            d >= t_star - 1e-9 && d < t_star + s.dt + 1e-9,
            "v {v}: {d} vs {t_star}"
        );
    }
    // the two branches of the closed form
    assert!((contact_time(30.0, 2.0) - (2.0 + (40.0f64 / 3.0).sqrt())).abs() < 1e-12);
    assert!(
        (contact_time(20.0, 2.0) - (2.0 + 20.0 / 6.0 + (40.0 - 400.0 / 12.0) / 20.0)).abs() < 1e-12
    );
}

#[test]
fn filter_keeps_late_and_drops_early_conflicts() {
    let early = pinned_type_a(5, 30.0, 1.0);
    let late = pinned_type_a(6, 30.0, 4.0);
    assert!(!passes_filter(decision_time(&early).unwrap()));
    assert!(passes_filter(decision_time(&late).unwrap()));
    assert!(passes_filter(6.5));
    assert!(!passes_filter(6.4));
}

fn maintain_outcome(s: &Scenario) -> TerminationReason {
    let (t, _) = rollout_policy(
        s,
        10,
        &PilotConfig::default(),
        &SimConfig::default(),
        |_, _| HighLevelAction::MAINTAIN,
    )
    .unwrap();
    t.reason
}

#[test]
fn maintain_collides_on_critical_and_finishes_easy() {
    for kind in CRITICAL {
        for seed in 0..6 {
            let s = generate_kind(kind, &GenParams::with_seed(seed)).unwrap();
            assert_eq!(s.kind, kind);
            assert_eq!(
                maintain_outcome(&s),
                TerminationReason::Collision,
                "{}",
                s.id
            );
            let easy = generate_kind(
                kind,
                &GenParams {
                    easy: true,
                    ..GenParams::with_seed(seed)
                },
            )
            .unwrap();
            assert!(easy.meta.easy);
            assert_eq!(
                maintain_outcome(&easy),
                TerminationReason::GoalReached,
                "{}",
                easy.id
            );
        }
    }
}

#[test]
fn lateral_moves_are_smooth_and_heading_follows_motion() {
    for kind in [ScenarioKind::TypeB, ScenarioKind::Cutout] {
        for seed in 0..8 {
            let s = generate_kind(kind, &GenParams::with_seed(seed)).unwrap();
            assert!(check_drivability(&s).feasible);
            let mut moved_sideways = false;
            for tr in &s.challengers {
                for w in tr.points.windows(2) {
                    let dt = w[1].t - w[0].t;
                    let yaw = wrap_angle(w[1].psi - w[0].psi) / dt;
                    assert!(
                        yaw.abs() <= YAW_RATE_BOUND,
                        "{} {}: yaw rate {yaw}",
                        s.id,
                        tr.id
                    );
                    let (dx, dy) = (w[1].s_x - w[0].s_x, w[1].s_y - w[0].s_y);
                    if dx.hypot(dy) > 0.1 {
                        let course = dy.atan2(dx);
                        let mid = 0.5 * (w[0].psi + w[1].psi);
                        assert!(
                            wrap_angle(course - mid).abs() < 0.02,
                            "{} {}: {course} vs {mid}",
                            s.id,
                            tr.id
                        );
                    }
                    moved_sideways |= dy.abs() > 1e-6;
                }
            }
            assert!(moved_sideways, "{}", s.id);
        }
    }
}

#[test]
fn generation_is_a_function_of_the_seed() {
    for kind in CRITICAL {
        let a = generate_kind(kind, &GenParams::with_seed(42)).unwrap();
        let b = generate_kind(kind, &GenParams::with_seed(42)).unwrap();
        assert_eq!(save_json(&a).unwrap(), save_json(&b).unwrap());
    }
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().to_string_lossy().into_owned();
        if e.file_type().unwrap().is_dir() {
            for (k, v) in read_dir_bytes(&e.path()) {
                files.insert(format!("{name}/{k}"), v);
            }
        } else {
            files.insert(name, std::fs::read(e.path()).unwrap());
        }
    }
    files
}

#[test]
fn datasets_are_reproducible_and_filtered() {
    let spec = DatasetSpec {
        train: KindCounts::uniform(2),
        test: KindCounts::uniform(1),
        params: GenParams::default(),
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m = build_dataset(&spec, 9, d1.path()).unwrap();
    build_dataset(&spec, 9, d2.path()).unwrap();
    assert_eq!(read_dir_bytes(d1.path()), read_dir_bytes(d2.path()));
    assert_eq!(m.entries(Split::Train).len(), 6);
    assert_eq!(m.entries(Split::Test).len(), 3);

    let manifest = d1.path().join("manifest.json");
    let train = load_manifest_scenarios(&manifest, Split::Train).unwrap();
    let test = load_manifest_scenarios(&manifest, Split::Test).unwrap();
    for s in train.iter().chain(&test) {
        assert!(passes_filter(decision_time(s).unwrap()), "{}", s.id);
    }
    let ids: std::collections::HashSet<_> =
        train.iter().chain(&test).map(|s| s.id.clone()).collect();
    assert_eq!(ids.len(), 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn json_round_trip_is_lossless(seed in 0u64..10_000, k in 0usize..3) {
        let s = generate_kind(CRITICAL[k], &GenParams::with_seed(seed)).unwrap();
        let bytes = save_json(&s).unwrap();
        let back = load_json(&bytes).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(save_json(&back).unwrap(), bytes);
    }
}
