use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use sad_sim_core::agents::{train as train_agent, Checkpoint, HeadKind, TrainOptions, TrainingLog};
use sad_sim_core::env::{write_trace, ActionMode, DrivingEnv, EnvConfig};
use sad_sim_core::eval::{
    emit_report, goal_matrix, goal_rate, run_episode, write_plot_data, EvalOptions, TestSet,
};
use sad_sim_core::factory::{load_manifest_scenarios, Split};
use sad_sim_core::scenario::Scenario;

use super::{load_scenario, parse_policy};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::{EvalArgs, SimulateArgs, SplitArg, TrainArgs};

fn split(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    }
}

fn env_for(head: HeadKind, base: &EnvConfig) -> EnvConfig {
    let mut c = *base;
    match head {
        HeadKind::Discrete => c.mode = ActionMode::Hierarchical,
        HeadKind::Gaussian => {
            c.mode = ActionMode::Continuous;
            c.shield.enabled = false;
        }
    }
    c
}

fn load_split(path: &Path, s: SplitArg) -> CliResult<Vec<Arc<Scenario>>> {
    load_manifest_scenarios(path, split(s))
        .map_err(|e| CliError::from(e).context(format!("manifest {}", path.display())))
}

pub fn train(a: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    if let Some(p) = &a.policy {
        cfg.train.policy = p.parse().map_err(|e| CliError::usage(format!("{e}")))?;
    }
    let head = cfg.train.policy.head().ok_or_else(|| {
        CliError::usage(format!(
            "policy `{}` is not trainable",
            cfg.train.policy.as_str()
        ))
    })?;
    cfg.train.budget = a.budget.unwrap_or(cfg.train.budget);
    cfg.train.seed = a.seed.unwrap_or(cfg.train.seed);
    cfg.train.checkpoint_every = a.checkpoint_every.unwrap_or(cfg.train.checkpoint_every);
    cfg.env = env_for(head, &cfg.env);

    let scenarios = load_split(&a.manifest, a.split)?;
    let resume = a.resume.as_deref().map(Checkpoint::load).transpose()?;
    let resumed_from = resume.as_ref().map(|c| c.trainer.episodes);
    let opts = TrainOptions {
        head,
        a2c: resume.as_ref().map_or(cfg.a2c, |c| c.config),
        env: cfg.env,
        budget: cfg.train.budget,
        seed: cfg.train.seed,
        checkpoint_every: (cfg.train.checkpoint_every > 0).then_some(cfg.train.checkpoint_every),
    };
    cfg.a2c = opts.a2c;

    std::fs::create_dir_all(&a.out)?;
    let ck_dir = a.out.join("checkpoints");
    let (ck, log) = train_agent(&scenarios, &opts, resume, |c| {
        std::fs::create_dir_all(&ck_dir)?;
        c.save(ck_dir.join(format!("ckpt_{:010}.json", c.trainer.substeps)))
    })?;

    let log_path = a.out.join("training_log.csv");
    let mut full = match resumed_from {
        Some(n) if log_path.is_file() => {
            let mut prev = TrainingLog::from_csv(&std::fs::read_to_string(&log_path)?)?;
            prev.episodes.retain(|e| e.episode < n);
            prev
        }
        _ => TrainingLog::default(),
    };
    full.episodes.extend(log.episodes);
    std::fs::write(&log_path, full.to_csv())?;
    let ck_path = a.out.join("checkpoint.json");
    ck.save(&ck_path)?;
    std::fs::write(a.out.join("config.toml"), cfg.to_toml())?;
    let reasons = full.reasons();
    write_plot_data(&reasons, cfg.eval.window, &a.out.join("plots"), "train")?;

    let tail = &reasons[reasons.len().saturating_sub(cfg.eval.window)..];
    writeln!(
        out,
        "episodes {} sub-steps {} goal rate (last {}) {:.1}%",
        full.episodes.len(),
        ck.trainer.substeps,
        tail.len(),
        goal_rate(tail)
    )?;
    writeln!(out, "{}", ck_path.display())?;
    Ok(())
}

const SET_ORDER: [&str; 6] = ["TypeA", "TypeB", "Cutout", "RealRoad", "Other", "Easy"];

fn set_name(s: &Scenario) -> String {
    if s.meta.easy {
        "Easy".to_string()
    } else {
        s.kind.as_str().to_string()
    }
}

fn load_sets(args: &[String], sp: SplitArg) -> CliResult<Vec<TestSet>> {
    let mut sets: Vec<TestSet> = Vec::new();
    for arg in args {
        match arg.split_once('=') {
            Some((name, path)) if !name.is_empty() => sets.push(TestSet {
                name: name.to_string(),
                scenarios: load_split(Path::new(path), sp)?,
            }),
            _ => {
                let all = load_split(Path::new(arg), sp)?;
                let order = |n: &str| {
                    SET_ORDER
                        .iter()
                        .position(|k| *k == n)
                        .unwrap_or(SET_ORDER.len())
                };
                let mut groups: BTreeMap<(usize, String), Vec<Arc<Scenario>>> = BTreeMap::new();
                for s in all {
                    let n = set_name(&s);
                    groups.entry((order(&n), n)).or_default().push(s);
                }
                sets.extend(
                    groups
                        .into_iter()
                        .map(|((_, name), scenarios)| TestSet { name, scenarios }),
                );
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    for s in &sets {
        if !seen.insert(s.name.clone()) {
            return Err(CliError::usage(format!(
                "test set `{}` given twice; name manifests with name=path",
                s.name
            )));
        }
        if s.scenarios.is_empty() {
            return Err(CliError::data(format!("test set `{}` is empty", s.name)));
        }
    }
    if sets.is_empty() {
        return Err(CliError::data("no test scenarios in the given manifests"));
    }
    Ok(sets)
}

pub fn eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    cfg.eval.seed = a.seed.unwrap_or(cfg.eval.seed);
    cfg.eval.stochastic_repeats = a.repeats.unwrap_or(cfg.eval.stochastic_repeats);
    cfg.eval.window = a.window.unwrap_or(cfg.eval.window);
    if a.no_shield {
        cfg.env.shield.enabled = false;
    }
    cfg.validate()?;
    let policies = a
        .policies
        .iter()
        .map(|p| parse_policy(p))
        .collect::<CliResult<Vec<_>>>()?;
    let mut seen = std::collections::HashSet::new();
    for p in &policies {
        if !seen.insert(p.label.clone()) {
            return Err(CliError::usage(format!(
                "policy label `{}` given twice; use label=...",
                p.label
            )));
        }
    }
    let sets = load_sets(&a.manifests, a.split)?;
    let opts = EvalOptions {
        env: cfg.env,
        seed: cfg.eval.seed,
        stochastic_repeats: cfg.eval.stochastic_repeats,
        window: cfg.eval.window,
    };
    let report = goal_matrix(&policies, &sets, &opts)?;
    emit_report(&report, &a.out)?;
    std::fs::write(a.out.join("config.toml"), cfg.to_toml())?;

    let w = policies
        .iter()
        .map(|p| p.label.len())
        .max()
        .unwrap_or(6)
        .max(6);
    write!(out, "{:w$}", "G (%)")?;
    for s in &sets {
        write!(out, " {:>9}", s.name)?;
    }
    writeln!(out)?;
    for p in &policies {
        write!(out, "{:w$}", p.label)?;
        for s in &sets {
            let c = report
                .cell(&p.label, &s.name)
                .expect("every cell evaluated");
            write!(out, " {:>9.1}", c.goal_rate)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    if a.no_shield {
        cfg.env.shield.enabled = false;
    }
    let p = parse_policy(&a.policy)?;
    let tag = p.source.tag();
    let mut env_cfg = env_for(tag.head().unwrap_or(HeadKind::Discrete), &cfg.env);
    env_cfg.record_trace = a.trace.is_some();
    let scenario = Arc::new(load_scenario(&a.scenario)?);
    let mut env = DrivingEnv::new(env_cfg)?;
    let mut policy = p.source.build(a.seed);
    let rec = run_episode(&mut env, scenario, policy.as_mut(), &p.label, a.seed)?;
    if let Some(path) = &a.trace {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_trace(env.trace(), &mut f)?;
        f.flush()?;
    }
    writeln!(
        out,
        "{} return {} sub-steps {}",
        rec.reason, rec.ret, rec.length
    )?;
    Ok(())
}
