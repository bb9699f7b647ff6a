//! Scenario files.
//!
//! A scenario is a text file with one JSON object per line, each object
//! holding exactly one key that names the record kind. Blank lines and lines
//! starting with `#` are skipped.
//!
//! ```text
//! # two units, one second apart in phase
//! {"scenario": {"seed": 7, "duration_s": 30}}
//! {"radio": {"loss_prob": 0.1, "latency_s": 0.03}}
//! {"sync": {"enabled": true, "freq_hz": 1.0}}
//! {"unit": {"id": 1}}
//! {"unit": {"id": 2, "initial": {"pitch_rad": 0.7}}}
//! {"event": {"t_s": 1.0, "frame": {"v":1,"type":"cmd.primitive","src":"console","dst":"*","seq":1,"payload":{"kind":"sway","freq_hz":1.0,"amplitude_rad":0.35,"duration_s":20}}}}
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use koboshi::control::{ControllerConfig, ControllerConfigPatch};
use koboshi::devices::{RadioLink, DEFAULT_NOISE_SIGMA};
use koboshi::dynamics::{BodyState, DeviceParams, DeviceParamsPatch, PayloadSpec, ServoAngles};
use koboshi::swarm::{decode, Endpoint, MessageBody, SyncState, WireMessage, DEFAULT_COUPLING};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}, key {key:?}: {message}")]
    Parse { line: usize, key: String, message: String },
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

/// Run-wide settings from the `"scenario"` record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Globals {
    pub seed: u64,
    /// Physics step.
    pub dt_s: f64,
    pub duration_s: f64,
    /// Control tick rate shared by every unit.
    pub tick_hz: f64,
    /// Accelerometer noise standard deviation, m/s².
    pub noise_sigma: f64,
}

impl Default for Globals {
    fn default() -> Self {
        Self { seed: 0, dt_s: 0.001, duration_s: 10.0, tick_hz: 50.0, noise_sigma: DEFAULT_NOISE_SIGMA }
    }
}

/// The `"radio"` record. The medium's RNG seed is derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSpec {
    pub loss_prob: f64,
    pub latency_s: f64,
    pub jitter_s: f64,
}

impl Default for RadioSpec {
    fn default() -> Self {
        Self { loss_prob: 0.0, latency_s: 0.03, jitter_s: 0.0 }
    }
}

impl RadioSpec {
    pub fn link(&self, seed: u64) -> RadioLink {
        RadioLink { loss_prob: self.loss_prob, latency_s: self.latency_s, jitter_s: self.jitter_s, seed }
    }
}

/// The `"sync"` record: group sway phase reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncSpec {
    pub enabled: bool,
    pub freq_hz: f64,
    pub coupling_k: f64,
}

impl Default for SyncSpec {
    fn default() -> Self {
        Self { enabled: false, freq_hz: 1.0, coupling_k: DEFAULT_COUPLING }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitRecord {
    id: u32,
    #[serde(default)]
    params: DeviceParamsPatch,
    #[serde(default)]
    payload: PayloadSpec,
    #[serde(default)]
    initial: BodyState,
    #[serde(default)]
    controller: ControllerConfigPatch,
    #[serde(default)]
    servo: ServoAngles,
    #[serde(default = "enabled")]
    balance: bool,
    #[serde(default)]
    sync_phase_rad: Option<f64>,
}

fn enabled() -> bool {
    true
}

/// One unit with every default filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitSpec {
    pub id: u32,
    pub params: DeviceParams,
    pub payload: PayloadSpec,
    pub initial: BodyState,
    pub controller: ControllerConfig,
    /// Initial servo angles.
    pub servo: ServoAngles,
    pub balance: bool,
    /// Starting sync phase; drawn from the run seed when absent.
    pub sync_phase_rad: Option<f64>,
}

impl UnitSpec {
    pub fn new(id: u32) -> Self {
        Self {
            id,
            params: DeviceParams::default(),
            payload: PayloadSpec::default(),
            initial: BodyState::default(),
            controller: ControllerConfig::default(),
            servo: ServoAngles::ZERO,
            balance: true,
            sync_phase_rad: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedEvent {
    pub t_s: f64,
    pub frame: WireMessage,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    t_s: f64,
    frame: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub globals: Globals,
    pub radio: RadioSpec,
    pub sync: SyncSpec,
    pub units: Vec<UnitSpec>,
    /// Console commands injected at fixed sim times, sorted by time.
    pub events: Vec<ScriptedEvent>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            globals: Globals::default(),
            radio: RadioSpec::default(),
            sync: SyncSpec::default(),
            units: Vec::new(),
            events: Vec::new(),
        }
    }
}

impl Scenario {
    /// Single unit with defaults everywhere.
    pub fn single(id: u32) -> Self {
        Self { units: vec![UnitSpec::new(id)], ..Self::default() }
    }

    pub fn control_period_s(&self) -> f64 {
        1.0 / self.globals.tick_hz
    }

    /// Number of control ticks in a full run.
    pub fn total_ticks(&self) -> u64 {
        (self.globals.duration_s * self.globals.tick_hz + 1e-9).floor() as u64
    }

    /// Physics steps per control tick.
    pub fn substeps(&self) -> u32 {
        (self.control_period_s() / self.globals.dt_s).round() as u32
    }

    pub fn unit_ids(&self) -> Vec<u32> {
        self.units.iter().map(|u| u.id).collect()
    }

    /// Adds a scripted event, keeping the list time ordered.
    pub fn push_event(&mut self, t_s: f64, frame: WireMessage) {
        let at = self.events.partition_point(|e| e.t_s <= t_s);
        self.events.insert(at, ScriptedEvent { t_s, frame });
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut problems = Vec::new();
        let g = &self.globals;
        if !(g.dt_s > 0.0) || !g.dt_s.is_finite() {
            problems.push(format!("dt_s must be > 0, got {}", g.dt_s));
        }
        if !(g.duration_s > 0.0) || !g.duration_s.is_finite() {
            problems.push(format!("duration_s must be > 0, got {}", g.duration_s));
        }
        if !(g.tick_hz > 0.0) || !g.tick_hz.is_finite() {
            problems.push(format!("tick_hz must be > 0, got {}", g.tick_hz));
        }
        if !(g.noise_sigma >= 0.0) || !g.noise_sigma.is_finite() {
            problems.push(format!("noise_sigma must be >= 0, got {}", g.noise_sigma));
        }
        if g.dt_s > 0.0 && g.tick_hz > 0.0 {
            let ratio = 1.0 / (g.tick_hz * g.dt_s);
            if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
                problems.push(format!(
                    "control period 1/tick_hz = {} s must be a whole multiple of dt_s = {} s",
                    1.0 / g.tick_hz,
                    g.dt_s
                ));
            }
        }
        if let Err(e) = self.radio.link(0).validate() {
            problems.push(format!("radio: {e}"));
        }
        if self.sync.enabled {
            let probe = SyncState::new(self.sync.freq_hz, self.sync.coupling_k, false, 0.0);
            if let Err(e) = probe.validate() {
                problems.push(format!("sync: {e}"));
            }
        }

        if self.units.is_empty() {
            problems.push("at least one unit is required".to_string());
        }
        let mut seen = BTreeSet::new();
        let mut reported = BTreeSet::new();
        for u in &self.units {
            if !seen.insert(u.id) && reported.insert(u.id) {
                problems.push(format!("duplicate unit id {}", u.id));
            }
        }
        for u in &self.units {
            let tag = format!("unit {}", u.id);
            if let Err(e) = u.params.validate() {
                problems.push(format!("{tag}: {e}"));
            }
            if let Err(e) = u.controller.validate() {
                problems.push(format!("{tag}: {e}"));
            }
            if u.controller.tick_hz != g.tick_hz {
                problems.push(format!(
                    "{tag}: controller tick_hz {} differs from scenario tick_hz {}",
                    u.controller.tick_hz, g.tick_hz
                ));
            }
            if !(u.payload.mass_kg >= 0.0) || !u.payload.mass_kg.is_finite() {
                problems.push(format!("{tag}: payload mass_kg must be >= 0, got {}", u.payload.mass_kg));
            }
            if u.payload.offset_m.iter().any(|v| !v.is_finite()) {
                problems.push(format!("{tag}: payload offset_m must be finite"));
            }
            let s = &u.initial;
            let state = [s.pitch_rad, s.roll_rad, s.pitch_rate, s.roll_rate, s.time_s];
            if state.iter().any(|v| !v.is_finite()) || !s.in_domain() {
                problems.push(format!("{tag}: initial tilt must be finite and below 90 degrees"));
            }
            if s.time_s != 0.0 {
                problems.push(format!("{tag}: initial time_s must be 0"));
            }
            let limit = std::f64::consts::FRAC_PI_2;
            if !(u.servo.x.abs() <= limit) || !(u.servo.y.abs() <= limit) {
                problems.push(format!("{tag}: servo angles must be within +/-90 degrees"));
            }
            if let Some(p) = u.sync_phase_rad {
                if !p.is_finite() {
                    problems.push(format!("{tag}: sync_phase_rad must be finite"));
                }
            }
        }

        for (i, e) in self.events.iter().enumerate() {
            let tag = format!("event {} (t_s = {})", i + 1, e.t_s);
            if !(e.t_s >= 0.0) || !e.t_s.is_finite() {
                problems.push(format!("{tag}: t_s must be >= 0"));
            }
            if !e.frame.message_type().is_command() {
                problems.push(format!("{tag}: only cmd.* frames can be scripted"));
            }
            if e.frame.src != Endpoint::Console {
                problems.push(format!("{tag}: src must be \"console\""));
            }
            match e.frame.dst {
                Endpoint::Broadcast => {}
                Endpoint::Unit(id) if seen.contains(&id) => {}
                other => problems.push(format!("{tag}: no unit {other}")),
            }
            if let MessageBody::CmdPrimitive(p) = &e.frame.body {
                if let Err(err) = p.validate() {
                    problems.push(format!("{tag}: {err}"));
                }
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(problems))
        }
    }

    /// Writes the scenario back in file form, every field explicit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |key: &str, v: Value| {
            out.push_str(&serde_json::json!({ key: v }).to_string());
            out.push('\n');
        };
        line("scenario", serde_json::to_value(self.globals).expect("serializable"));
        line("radio", serde_json::to_value(self.radio).expect("serializable"));
        line("sync", serde_json::to_value(self.sync).expect("serializable"));
        for u in &self.units {
            let mut v = serde_json::to_value(u).expect("serializable");
            if u.sync_phase_rad.is_none() {
                v.as_object_mut().expect("object").remove("sync_phase_rad");
            }
            line("unit", v);
        }
        for e in &self.events {
            let frame: Value = serde_json::from_str(&e.frame.to_line()).expect("frame is JSON");
            line("event", serde_json::json!({ "t_s": e.t_s, "frame": frame }));
        }
        out
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Parses scenario text without validating it.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario::default();
    let mut seen_globals = false;
    let mut seen_radio = false;
    let mut seen_sync = false;
    let mut unit_records = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |key: &str, message: String| ScenarioError::Parse { line, key: key.to_string(), message };
        let value: Value = serde_json::from_str(trimmed).map_err(|e| err("", e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(err("", "expected an object".into()));
        };
        if map.len() != 1 {
            return Err(err("", format!("expected exactly one key, found {}", map.len())));
        }
        let (key, body) = map.into_iter().next().expect("one entry");
        let once = |seen: &mut bool| {
            if std::mem::replace(seen, true) {
                Err(err(&key, "may appear only once".into()))
            } else {
                Ok(())
            }
        };
        match key.as_str() {
            "scenario" => {
                once(&mut seen_globals)?;
                sc.globals = serde_json::from_value(body).map_err(|e| err(&key, e.to_string()))?;
            }
            "radio" => {
                once(&mut seen_radio)?;
                sc.radio = serde_json::from_value(body).map_err(|e| err(&key, e.to_string()))?;
            }
            "sync" => {
                once(&mut seen_sync)?;
                sc.sync = serde_json::from_value(body).map_err(|e| err(&key, e.to_string()))?;
            }
            "unit" => {
                let r: UnitRecord = serde_json::from_value(body).map_err(|e| err(&key, e.to_string()))?;
                unit_records.push(r);
            }
            "event" => {
                let r: EventRecord = serde_json::from_value(body).map_err(|e| err(&key, e.to_string()))?;
                let frame = decode(r.frame.to_string().as_bytes())
                    .map_err(|e| err("event.frame", e.to_string()))?;
                sc.events.push(ScriptedEvent { t_s: r.t_s, frame });
            }
            other => return Err(err(other, "unknown record kind".into())),
        }
    }
    // units inherit the run tick rate unless they override it
    let base = ControllerConfig { tick_hz: sc.globals.tick_hz, ..ControllerConfig::default() };
    sc.units = unit_records
        .into_iter()
        .map(|r| UnitSpec {
            id: r.id,
            params: r.params.apply(DeviceParams::default()),
            payload: r.payload,
            initial: r.initial,
            controller: r.controller.apply(base),
            servo: r.servo,
            balance: r.balance,
            sync_phase_rad: r.sync_phase_rad,
        })
        .collect();
    sc.events.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
    Ok(sc)
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let sc = parse_scenario(&text)?;
    sc.validate()?;
    Ok(sc)
}
