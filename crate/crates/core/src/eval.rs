//! Termination statistics, goal-reaching matrices and report files.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::agents::{
    ActorCritic, AgentAction, GreedyA2c, MaintainPolicy, Policy, PolicyTag, RandomPolicy,
};
use crate::env::{ActionMode, DrivingEnv, EnvConfig};
use crate::error::{Error, Result};
use crate::scenario::{Scenario, ScenarioKind};
use crate::sim::TerminationReason;

pub const DEFAULT_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub policy: String,
    pub seed: u64,
    pub reason: TerminationReason,
    pub ret: f64,
    /// Sub-steps.
    pub length: usize,
}

/// Percentage per termination reason, in `TerminationReason::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TerminationDistribution {
    pub percent: [f64; 5],
}

impl TerminationDistribution {
    pub fn get(&self, reason: TerminationReason) -> f64 {
        self.percent[Self::slot(reason)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (TerminationReason, f64)> + '_ {
        TerminationReason::ALL
            .iter()
            .copied()
            .zip(self.percent.iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.percent.iter().sum()
    }

    fn slot(reason: TerminationReason) -> usize {
        TerminationReason::ALL
            .iter()
            .position(|r| *r == reason)
            .expect("ALL lists every reason")
    }
}

pub fn termination_distribution(reasons: &[TerminationReason]) -> Result<TerminationDistribution> {
    if reasons.is_empty() {
        return Err(Error::Empty("termination records"));
    }
    let mut counts = [0usize; 5];
    for r in reasons {
        counts[TerminationDistribution::slot(*r)] += 1;
    }
    let m = reasons.len() as f64;
    Ok(TerminationDistribution {
        percent: counts.map(|c| c as f64 / m * 100.0),
    })
}

/// Trailing mean over the last `min(k + 1, window)` values.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::param("window", "must be at least 1"));
    }
    Ok((0..series.len())
        .map(|k| {
            let w = &series[(k + 1).saturating_sub(window)..=k];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect())
}

pub fn indicator(reasons: &[TerminationReason], which: TerminationReason) -> Vec<f64> {
    reasons
        .iter()
        .map(|r| if *r == which { 1.0 } else { 0.0 })
        .collect()
}

/// Goal-reaching rate in percent.
pub fn goal_rate(reasons: &[TerminationReason]) -> f64 {
    if reasons.is_empty() {
        return 0.0;
    }
    let goals = reasons
        .iter()
        .filter(|r| **r == TerminationReason::GoalReached)
        .count();
    100.0 * goals as f64 / reasons.len() as f64
}

/// Play one episode to termination.
pub fn run_episode(
    env: &mut DrivingEnv,
    scenario: Arc<Scenario>,
    policy: &mut dyn Policy,
    label: &str,
    seed: u64,
) -> Result<EpisodeRecord> {
    policy.begin_episode(seed);
    let obs = env.reset(scenario.clone(), seed)?;
    let mut features = env.features(&obs);
    let mut ret = 0.0;
    let mut length = 0;
    loop {
        let out = match policy.act(&features, &scenario.ego_params) {
            AgentAction::Discrete(a) => env.step(a)?,
            AgentAction::Continuous { accel, steer_rate } => {
                env.step_continuous(accel, steer_rate)?
            }
        };
        ret += out.reward;
        length += out.info.substeps;
        if let Some(reason) = out.reason {
            return Ok(EpisodeRecord {
                scenario: scenario.id.clone(),
                kind: scenario.kind,
                policy: label.to_string(),
                seed,
                reason,
                ret,
                length,
            });
        }
        features = out.features;
    }
}

#[derive(Debug, Clone)]
pub enum PolicySource {
    Maintain,
    Random,
    Trained(Arc<ActorCritic>),
}

impl PolicySource {
    pub fn tag(&self) -> PolicyTag {
        match self {
            PolicySource::Maintain => PolicyTag::Maintain,
            PolicySource::Random => PolicyTag::Random,
            PolicySource::Trained(m) => GreedyA2c {
                model: (**m).clone(),
            }
            .tag(),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, PolicySource::Random)
    }

    pub fn build(&self, seed: u64) -> Box<dyn Policy> {
        match self {
            PolicySource::Maintain => Box::new(MaintainPolicy),
            PolicySource::Random => Box::new(RandomPolicy::new(seed)),
            PolicySource::Trained(m) => Box::new(GreedyA2c {
                model: (**m).clone(),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalPolicy {
    pub label: String,
    pub source: PolicySource,
}

#[derive(Debug, Clone)]
pub struct TestSet {
    pub name: String,
    pub scenarios: Vec<Arc<Scenario>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Hierarchical-mode settings. Continuous policies get the same pilot
    /// and rewards with the shield off.
    pub env: EnvConfig,
    pub seed: u64,
    /// Passes over each test set for stochastic policies.
    pub stochastic_repeats: usize,
    pub window: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            seed: 0,
            stochastic_repeats: 1,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub policy: String,
    pub test_set: String,
    pub episodes: usize,
    pub goal_rate: f64,
    pub distribution: TerminationDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub window: usize,
    pub cells: Vec<CellResult>,
    pub records: Vec<EpisodeRecord>,
}

impl EvalReport {
    pub fn cell(&self, policy: &str, test_set: &str) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.policy == policy && c.test_set == test_set)
    }

    pub fn cell_records<'a>(
        &'a self,
        policy: &'a str,
        test_set: &'a str,
    ) -> impl Iterator<Item = &'a EpisodeRecord> {
        // records carry the test-set name in their position only, so cells
        // are reconstructed from the job order used by `goal_matrix`
        self.cell_ranges()
            .into_iter()
            .filter(move |(p, t, _)| p == policy && t == test_set)
            .flat_map(move |(_, _, r)| self.records[r].iter())
    }

    fn cell_ranges(&self) -> Vec<(String, String, std::ops::Range<usize>)> {
        let mut out = Vec::with_capacity(self.cells.len());
        let mut at = 0;
        for c in &self.cells {
            out.push((c.policy.clone(), c.test_set.clone(), at..at + c.episodes));
            at += c.episodes;
        }
        out
    }
}

fn episode_seed(base: u64, cell: usize, index: usize) -> u64 {
    base ^ ((cell as u64) << 40) ^ index as u64
}

fn env_for(tag: PolicyTag, base: &EnvConfig) -> EnvConfig {
    match tag.mode() {
        ActionMode::Hierarchical => EnvConfig {
            mode: ActionMode::Hierarchical,
            ..*base
        },
        ActionMode::Continuous => {
            let mut c = *base;
            c.mode = ActionMode::Continuous;
            c.shield.enabled = false;
            c
        }
    }
}

/// Evaluate every policy on every test set. Deterministic policies see each
/// scenario once; stochastic ones once per repeat, with seeded episodes.
pub fn goal_matrix(
    policies: &[EvalPolicy],
    sets: &[TestSet],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if opts.window == 0 {
        return Err(Error::param("window", "must be at least 1"));
    }
    for s in sets {
        if s.scenarios.is_empty() {
            return Err(Error::param(
                "test_set",
                format!("`{}` has no scenarios", s.name),
            ));
        }
    }
    let mut jobs = Vec::new();
    let mut cells = Vec::new();
    for p in policies {
        let reps = if p.source.is_stochastic() {
            opts.stochastic_repeats.max(1)
        } else {
            1
        };
        for s in sets {
            let cell = cells.len();
            cells.push((p, s, reps * s.scenarios.len()));
            for rep in 0..reps {
                for (i, sc) in s.scenarios.iter().enumerate() {
                    jobs.push((
                        p,
                        sc.clone(),
                        episode_seed(opts.seed, cell, rep * s.scenarios.len() + i),
                    ));
                }
            }
        }
    }
    let records: Vec<EpisodeRecord> = jobs
        .par_iter()
        .map_init(
            || None::<(PolicyTag, DrivingEnv)>,
            |slot, (p, sc, seed)| {
                let tag = p.source.tag();
                if slot.as_ref().map(|(t, _)| *t) != Some(tag) {
                    *slot = Some((tag, DrivingEnv::new(env_for(tag, &opts.env))?));
                }
                let env = &mut slot.as_mut().expect("just set").1;
                let mut policy = p.source.build(*seed);
                run_episode(env, sc.clone(), policy.as_mut(), &p.label, *seed)
            },
        )
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(cells.len());
    let mut at = 0;
    for (p, s, n) in cells {
        let reasons: Vec<_> = records[at..at + n].iter().map(|r| r.reason).collect();
        at += n;
        out.push(CellResult {
            policy: p.label.clone(),
            test_set: s.name.clone(),
            episodes: n,
            goal_rate: goal_rate(&reasons),
            distribution: termination_distribution(&reasons)?,
        });
    }
    Ok(EvalReport {
        window: opts.window,
        cells: out,
        records,
    })
}

pub const GOAL_MATRIX_HEADER: &str = "policy,test_set,episodes,goal_rate";
pub const TERMINATION_HEADER: &str = "policy,test_set,reason,percent";
pub const EPISODES_HEADER: &str = "policy,test_set,scenario,kind,seed,reason,return,length";

pub fn goal_matrix_csv(report: &EvalReport) -> String {
    let mut s = format!("{GOAL_MATRIX_HEADER}\n");
    for c in &report.cells {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            c.policy, c.test_set, c.episodes, c.goal_rate
        );
    }
    s
}

/// Parse a goal-matrix CSV back into `(policy, test_set, episodes, goal_rate)`.
pub fn parse_goal_matrix_csv(text: &str) -> Result<Vec<(String, String, usize, f64)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(GOAL_MATRIX_HEADER) {
        return Err(Error::schema("header", "not a goal-matrix CSV"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::schema(format!("line {}", i + 2), "malformed row");
            if f.len() != 4 {
                return Err(bad());
            }
            Ok((
                f[0].to_string(),
                f[1].to_string(),
                f[2].parse().map_err(|_| bad())?,
                f[3].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

pub fn termination_csv(report: &EvalReport) -> String {
    let mut s = format!("{TERMINATION_HEADER}\n");
    for c in &report.cells {
        for (r, p) in c.distribution.iter() {
            let _ = writeln!(s, "{},{},{},{}", c.policy, c.test_set, r, p);
        }
    }
    s
}

pub fn episodes_csv(report: &EvalReport) -> String {
    let mut s = format!("{EPISODES_HEADER}\n");
    for (p, t, range) in report.cell_ranges() {
        for r in &report.records[range] {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                p, t, r.scenario, r.kind, r.seed, r.reason, r.ret, r.length
            );
        }
    }
    s
}

/// Two-column `episode value` text: trailing moving average of the
/// indicator for `reason`.
pub fn plot_data(
    reasons: &[TerminationReason],
    reason: TerminationReason,
    window: usize,
) -> Result<String> {
    let ma = moving_average(&indicator(reasons, reason), window)?;
    let mut s = String::new();
    for (k, v) in ma.iter().enumerate() {
        let _ = writeln!(s, "{} {}", k + 1, v);
    }
    Ok(s)
}

/// Write one plot-data file per reason as `{prefix}_{reason}.dat`.
pub fn write_plot_data(
    reasons: &[TerminationReason],
    window: usize,
    dir: &Path,
    prefix: &str,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in TerminationReason::ALL {
        std::fs::write(
            dir.join(format!("{prefix}_{r}.dat")),
            plot_data(reasons, r, window)?,
        )?;
    }
    Ok(())
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Write `goal_matrix.csv`, `termination.csv`, `episodes.csv` and
/// `plots/*.dat` under `dir`.
pub fn emit_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("goal_matrix.csv"), goal_matrix_csv(report))?;
    std::fs::write(dir.join("termination.csv"), termination_csv(report))?;
    std::fs::write(dir.join("episodes.csv"), episodes_csv(report))?;
    let plots = dir.join("plots");
    for (p, t, range) in report.cell_ranges() {
        let reasons: Vec<_> = report.records[range].iter().map(|r| r.reason).collect();
        let prefix = format!("{}__{}", file_safe(&p), file_safe(&t));
        write_plot_data(&reasons, report.window, &plots, &prefix)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::{generate_type_a, GenParams};
    use TerminationReason::*;

    #[test]
    fn distribution_examples() {
        let d =
            termination_distribution(&[GoalReached, Collision, GoalReached, GoalReached]).unwrap();
        assert_eq!(d.get(GoalReached), 75.0);
        assert_eq!(d.get(Collision), 25.0);
        assert_eq!(d.get(Offroad), 0.0);
        assert_eq!(
            termination_distribution(&[GoalReached; 7])
                .unwrap()
                .get(GoalReached),
            100.0
        );
        assert!(matches!(
            termination_distribution(&[]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(
            moving_average(&[0.0, 0.0, 1.0, 1.0], 2).unwrap(),
            vec![0.0, 0.0, 0.5, 1.0]
        );
        assert_eq!(moving_average(&[0.25; 9], 4).unwrap(), vec![0.25; 9]);
        assert!(moving_average(&[1.0], 0).is_err());
        assert!(moving_average(&[], 3).unwrap().is_empty());
    }

    #[test]
    fn maintain_scores_zero_on_critical() {
        let scenarios: Vec<_> = (0..6)
            .map(|s| Arc::new(generate_type_a(&GenParams::with_seed(s)).unwrap()))
            .collect();
        let set = TestSet {
            name: "A".into(),
            scenarios,
        };
        let pols = [
            EvalPolicy {
                label: "maintain".into(),
                source: PolicySource::Maintain,
            },
            EvalPolicy {
                label: "random".into(),
                source: PolicySource::Random,
            },
        ];
        let opts = EvalOptions {
            stochastic_repeats: 2,
            ..Default::default()
        };
        let r = goal_matrix(&pols, std::slice::from_ref(&set), &opts).unwrap();
        assert_eq!(r.cell("maintain", "A").unwrap().goal_rate, 0.0);
        assert_eq!(r.cell("random", "A").unwrap().episodes, 12);
        assert_eq!(r.cell_records("random", "A").count(), 12);
        assert_eq!(r, goal_matrix(&pols, &[set], &opts).unwrap());
    }

    #[test]
    fn emit_is_stable_and_parses_back() {
        let set = TestSet {
            name: "A".into(),
            scenarios: vec![Arc::new(generate_type_a(&GenParams::with_seed(2)).unwrap())],
        };
        let pols = [EvalPolicy {
            label: "random".into(),
            source: PolicySource::Random,
        }];
        let r = goal_matrix(&pols, &[set], &EvalOptions::default()).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        emit_report(&r, a.path()).unwrap();
        emit_report(&r, b.path()).unwrap();
        for f in [
            "goal_matrix.csv",
            "termination.csv",
            "episodes.csv",
            "plots/random__A_goal_reached.dat",
        ] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap()
            );
        }
        let rows = parse_goal_matrix_csv(
            &std::fs::read_to_string(a.path().join("goal_matrix.csv")).unwrap(),
        )
        .unwrap();
        assert_eq!(
            rows,
            vec![("random".into(), "A".into(), 1, r.cells[0].goal_rate)]
        );
    }

    #[test]
    fn empty_test_set_rejected() {
        let set = TestSet {
            name: "none".into(),
            scenarios: vec![],
        };
        let pols = [EvalPolicy {
            label: "maintain".into(),
            source: PolicySource::Maintain,
        }];
        assert!(goal_matrix(&pols, &[set], &EvalOptions::default()).is_err());
    }
}
