//! Newline-delimited JSON step protocol. One [`Session`] per connection;
//! sessions share only the read-only scenario [`Catalog`]. Continuous
//! actions are `[accel, steer_rate]` in m/s² and rad/s, clamped to the
//! scenario's actuator bounds.
//!
//! ```text
//! > {"cmd":"hello","mode":"hierarchical"}
//! < {"action_space":{"nvec":[3,4],"type":"multi_discrete"},"mode":"hierarchical","obs_dim":22,"ok":true,"protocol":1,"scenarios":["a"]}
//! > {"cmd":"reset","scenario":"a","seed":3}
//! < {"obs":[...],"ok":true}
//! > {"cmd":"step","action":[1,2]}
//! < {"info":{...},"obs":[...],"ok":true,"reason":null,"reward":0.0,"terminated":false}
//! > {"cmd":"step"}
//! < {"error":"bad_action","message":"...","ok":false}
//! ```

use serde_json::{json, Value};
use std::collections::HashMap;
use std::sync::Arc;

use crate::env::{ActionMode, DrivingEnv, EnvConfig, StepOutcome, OBS_DIM};
use crate::error::{Error, Result};
use crate::pilot::HighLevelAction;
use crate::road::VehicleParams;
use crate::scenario::Scenario;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Default)]
pub struct Catalog {
    scenarios: Vec<Arc<Scenario>>,
    by_id: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(scenarios: Vec<Arc<Scenario>>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(scenarios.len());
        for (i, s) in scenarios.iter().enumerate() {
            if by_id.insert(s.id.clone(), i).is_some() {
                return Err(Error::param(
                    "scenarios",
                    format!("duplicate id `{}`", s.id),
                ));
            }
        }
        Ok(Self { scenarios, by_id })
    }

    pub fn get(&self, id: &str) -> Option<&Arc<Scenario>> {
        self.by_id.get(id).map(|&i| &self.scenarios[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.scenarios.iter().map(|s| s.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub text: String,
    /// The client asked to close the session.
    pub close: bool,
}

fn fail(code: &str, message: impl std::fmt::Display) -> Value {
    json!({"ok": false, "error": code, "message": message.to_string()})
}

fn mode_name(m: ActionMode) -> &'static str {
    match m {
        ActionMode::Hierarchical => "hierarchical",
        ActionMode::Continuous => "continuous",
    }
}

pub struct Session {
    catalog: Arc<Catalog>,
    base: EnvConfig,
    env: DrivingEnv,
    live: bool,
}

impl Session {
    /// `base` is the hierarchical configuration; a continuous session uses
    /// it with the shield disabled.
    pub fn new(catalog: Arc<Catalog>, base: EnvConfig) -> Result<Self> {
        Ok(Self {
            env: DrivingEnv::new(base)?,
            catalog,
            base,
            live: false,
        })
    }

    pub fn mode(&self) -> ActionMode {
        self.env.config().mode
    }

    pub fn env(&self) -> &DrivingEnv {
        &self.env
    }

    pub fn handle_line(&mut self, line: &str) -> Reply {
        let (v, close) = match serde_json::from_str::<Value>(line) {
            Ok(req) => self.handle(&req),
            Err(e) => (fail("bad_request", e), false),
        };
        Reply {
            text: v.to_string(),
            close,
        }
    }

    fn set_mode(&mut self, mode: ActionMode, record: bool) -> Result<()> {
        let mut cfg = self.base;
        cfg.mode = mode;
        cfg.record_trace = record;
        if mode == ActionMode::Continuous {
            cfg.shield.enabled = false;
        }
        self.env = DrivingEnv::new(cfg)?;
        self.live = false;
        Ok(())
    }

    fn handle(&mut self, req: &Value) -> (Value, bool) {
        let Some(cmd) = req.get("cmd").and_then(Value::as_str) else {
            return (fail("bad_request", "missing `cmd`"), false);
        };
        let v = match cmd {
            "hello" => self.hello(req),
            "reset" => self.reset(req),
            "step" => self.step(req),
            "trace" => Ok(json!({"ok": true, "trace": self.env.trace()})),
            "close" => return (json!({"ok": true}), true),
            other => Err(fail("bad_request", format!("unknown cmd `{other}`"))),
        };
        (v.unwrap_or_else(|e| e), false)
    }

    fn hello(&mut self, req: &Value) -> Result<Value, Value> {
        let mode = match req.get("mode").and_then(Value::as_str) {
            None => self.mode(),
            Some("hierarchical") => ActionMode::Hierarchical,
            Some("continuous") => ActionMode::Continuous,
            Some(m) => return Err(fail("bad_mode", format!("unknown mode `{m}`"))),
        };
        let record = req
            .get("record_trace")
            .and_then(Value::as_bool)
            .unwrap_or(self.base.record_trace);
        self.set_mode(mode, record)
            .map_err(|e| fail("internal", e))?;
        let space = match mode {
            ActionMode::Hierarchical => json!({"type": "multi_discrete", "nvec": [3, 4]}),
            ActionMode::Continuous => {
                let p = VehicleParams::default();
                json!({"type": "box", "low": [p.a_min, -p.vdelta_max], "high": [p.a_max, p.vdelta_max]})
            }
        };
        Ok(json!({
            "ok": true,
            "protocol": PROTOCOL_VERSION,
            "mode": mode_name(mode),
            "obs_dim": OBS_DIM,
            "action_space": space,
            "scenarios": self.catalog.ids().collect::<Vec<_>>(),
        }))
    }

    fn reset(&mut self, req: &Value) -> Result<Value, Value> {
        let id = req
            .get("scenario")
            .and_then(Value::as_str)
            .ok_or_else(|| fail("bad_request", "missing `scenario`"))?;
        let seed = match req.get("seed") {
            None | Some(Value::Null) => 0,
            Some(s) => s
                .as_u64()
                .ok_or_else(|| fail("bad_request", "`seed` must be a non-negative integer"))?,
        };
        let s = self
            .catalog
            .get(id)
            .ok_or_else(|| fail("unknown_scenario", format!("no scenario `{id}`")))?
            .clone();
        let obs = self
            .env
            .reset(s, seed)
            .map_err(|e| fail("invalid_scenario", e))?;
        self.live = true;
        Ok(json!({"ok": true, "obs": self.env.features(&obs)}))
    }

    fn step(&mut self, req: &Value) -> Result<Value, Value> {
        if !self.live {
            return Err(fail("no_episode", "reset before stepping"));
        }
        if self.env.is_done() {
            return Err(fail(
                "episode_over",
                "episode has terminated; reset to continue",
            ));
        }
        let action = req
            .get("action")
            .and_then(Value::as_array)
            .filter(|a| a.len() == 2)
            .ok_or_else(|| fail("bad_action", "`action` must be a two-element array"))?;
        let out = match self.mode() {
            ActionMode::Hierarchical => {
                let idx: Vec<usize> = action
                    .iter()
                    .filter_map(|x| x.as_u64().map(|u| u as usize))
                    .collect();
                let a = (idx.len() == 2)
                    .then(|| HighLevelAction::from_pair(idx[0], idx[1]))
                    .flatten()
                    .ok_or_else(|| {
                        fail("bad_action", "expected [lateral 0..3, longitudinal 0..4]")
                    })?;
                self.env.step(a)
            }
            ActionMode::Continuous => {
                let u: Vec<f64> = action.iter().filter_map(Value::as_f64).collect();
                if u.len() != 2 || u.iter().any(|x| !x.is_finite()) {
                    return Err(fail(
                        "bad_action",
                        "expected [accel, steer_rate] as finite numbers",
                    ));
                }
                self.env.step_continuous(u[0], u[1])
            }
        };
        out.map(|o| step_reply(&o)).map_err(|e| fail("internal", e))
    }
}

fn step_reply(o: &StepOutcome) -> Value {
    json!({
        "ok": true,
        "obs": o.features,
        "reward": o.reward,
        "terminated": o.terminated,
        "reason": o.reason.map(|r| r.as_str()),
        "info": {
            "t": o.info.t,
            "substeps": o.info.substeps,
            "shield_overridden": o.info.shield_overridden,
            "shield_reason": o.info.shield_reason,
            "approved": o.info.approved.map(|a| [a.lateral.index(), a.longitudinal.index()]),
        },
    })
}
