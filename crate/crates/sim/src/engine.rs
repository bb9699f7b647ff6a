//! Fixed-step multi-unit engine.
//!
//! Each control tick `k` runs at `t = k / tick_hz`:
//!
//! 1. scripted console commands due by `t` are put on the radio;
//! 2. radio deliveries due by `t` are handed to their units;
//! 3. every unit samples its accelerometer, the sync leader beacons, the
//!    controller picks servo targets, and a telemetry record is taken;
//! 4. physics runs `1 / (tick_hz * dt_s)` substeps and sync phases advance.
//!
//! All randomness comes from streams derived from the scenario seed, so a run
//! is a pure function of the scenario.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::time::Instant;

use koboshi::control::{Controller, MotionPrimitive};
use koboshi::devices::{accel_sample, derive_seed, seeded_rng, Delivery, RadioMedium, SimRng};
use koboshi::dynamics::{BodyState, ServoAngles};
use koboshi::plant::Plant;
use koboshi::swarm::{
    elect_leader, wrap_to_pi, Endpoint, MessageBody, SetParams, SyncState, WireMessage,
};
use koboshi::telemetry::{TelemetryFlags, TelemetryRecord};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::scenario::{Scenario, ScenarioError};
use crate::telemetry::TelemetryWriter;

/// A unit counts as upright once both tilt angles stay below this.
pub const UPRIGHT_TOL_RAD: f64 = 0.5 * std::f64::consts::PI / 180.0;

/// Sync cycles after which the phase spread is tracked in the summary.
pub const SPREAD_AFTER_CYCLES: f64 = 20.0;

const RADIO_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 1 << 32;
const PHASE_STREAM: u64 = 2 << 32;

/// Slack for comparing event and delivery times against tick times.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubmitError {
    #[error("{0} frames cannot be sent to units")]
    NotACommand(&'static str),
    #[error("no unit {0}")]
    UnknownUnit(Endpoint),
    #[error("{0}")]
    InvalidCommand(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("writing telemetry: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitSummary {
    pub id: u32,
    pub final_state: BodyState,
    pub final_servo: ServoAngles,
    /// First time after which the unit stayed upright to the end of the run.
    pub convergence_time_s: Option<f64>,
    pub saturation_ticks: u64,
    pub domain_exceeded: bool,
    pub commands_applied: u64,
    pub commands_rejected: u64,
    pub beacons_sent: u64,
    pub beacons_applied: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub ticks: u64,
    pub records: u64,
    pub sim_time_s: f64,
    pub wall_time_s: f64,
    pub leader: Option<u32>,
    /// Largest pairwise sync phase difference seen from `phase_spread_from_s` on.
    pub max_phase_spread_rad: Option<f64>,
    pub phase_spread_from_s: Option<f64>,
    pub units: Vec<UnitSummary>,
}

#[derive(Debug, Clone)]
struct UnitSim {
    id: u32,
    plant: Plant,
    controller: Controller,
    sync: Option<SyncState>,
    rng: SimRng,
    seq: u64,
    last_seen: BTreeMap<Endpoint, u64>,
    last_tilted_tick: Option<u64>,
    stats: UnitSummary,
}

impl UnitSim {
    fn receive(&mut self, d: Delivery<WireMessage>, now_s: f64, latency_s: f64, tick_hz: f64) {
        let msg = &d.msg;
        if msg.src == Endpoint::Unit(self.id) || !msg.dst.accepts(self.id) {
            return;
        }
        if self.last_seen.get(&msg.src).is_some_and(|&last| msg.seq <= last) {
            return;
        }
        self.last_seen.insert(msg.src, msg.seq);
        match &msg.body {
            MessageBody::CmdPrimitive(p) => {
                let applied = p.validate().is_ok() && self.controller.scheduler.enqueue(*p, now_s).is_ok();
                if applied {
                    if let (MotionPrimitive::Sway { freq_hz, .. }, Some(sync)) = (p, self.sync.as_mut()) {
                        if sync.is_leader {
                            sync.freq_hz = *freq_hz;
                        }
                    }
                }
                self.count(applied);
            }
            MessageBody::CmdSetParams(sp) => {
                let applied = self.set_params(sp, tick_hz);
                self.count(applied);
            }
            MessageBody::CmdBalance(b) => {
                self.controller.set_balance(b.enabled);
                self.count(true);
            }
            MessageBody::SyncBeacon(_) => {
                if let Some(sync) = self.sync.as_mut() {
                    // the beacon also sat in the local queue until this tick
                    let estimate = latency_s + (now_s - d.delivered_s).max(0.0);
                    if sync.sync_apply(msg, estimate) {
                        self.stats.beacons_applied += 1;
                    }
                }
            }
            _ => {}
        }
    }

    fn count(&mut self, applied: bool) {
        if applied {
            self.stats.commands_applied += 1;
        } else {
            self.stats.commands_rejected += 1;
        }
    }

    /// Applies all parts of a set_params command, or none if any is invalid.
    fn set_params(&mut self, sp: &SetParams, tick_hz: f64) -> bool {
        let params = sp.params.map_or(self.plant.params, |p| p.apply(self.plant.params));
        let config = sp.controller.map_or(self.controller.config, |c| c.apply(self.controller.config));
        let payload = sp.payload.unwrap_or(self.plant.payload);
        let payload_ok = payload.mass_kg >= 0.0
            && payload.mass_kg.is_finite()
            && payload.offset_m.iter().all(|v| v.is_finite());
        let ok = params.validate().is_ok()
            && config.validate().is_ok()
            && config.tick_hz == tick_hz
            && payload_ok;
        if ok {
            self.plant.params = params;
            self.plant.payload = payload;
            self.controller.config = config;
        }
        ok
    }
}

/// Live simulation of every unit in a scenario plus the shared radio.
#[derive(Debug, Clone)]
pub struct Engine {
    scenario: Scenario,
    units: Vec<UnitSim>,
    medium: RadioMedium<WireMessage>,
    leader: Option<u32>,
    tick: u64,
    total_ticks: u64,
    substeps: u32,
    next_event: usize,
    console_seq: u64,
    spread_from_s: Option<f64>,
    max_spread_rad: Option<f64>,
}

impl Engine {
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let seed = scenario.globals.seed;
        let sync_on = scenario.sync.enabled;
        let leader = if sync_on { elect_leader(scenario.unit_ids()).ok() } else { None };
        let units = scenario
            .units
            .iter()
            .map(|u| {
                let mut controller = Controller::new(u.controller);
                controller.set_balance(u.balance);
                let sync = sync_on.then(|| {
                    let phase = u.sync_phase_rad.unwrap_or_else(|| {
                        seeded_rng(derive_seed(seed, PHASE_STREAM + u64::from(u.id))).gen::<f64>() * TAU
                    });
                    SyncState::new(scenario.sync.freq_hz, scenario.sync.coupling_k, Some(u.id) == leader, phase)
                });
                UnitSim {
                    id: u.id,
                    plant: Plant::new(u.params, u.payload, u.initial, u.servo),
                    controller,
                    sync,
                    rng: seeded_rng(derive_seed(seed, NOISE_STREAM + u64::from(u.id))),
                    seq: 0,
                    last_seen: BTreeMap::new(),
                    last_tilted_tick: None,
                    stats: UnitSummary {
                        id: u.id,
                        final_state: u.initial,
                        final_servo: u.servo,
                        convergence_time_s: None,
                        saturation_ticks: 0,
                        domain_exceeded: false,
                        commands_applied: 0,
                        commands_rejected: 0,
                        beacons_sent: 0,
                        beacons_applied: 0,
                    },
                }
            })
            .collect();
        let spread_from_s = (sync_on && scenario.units.len() > 1)
            .then(|| SPREAD_AFTER_CYCLES / scenario.sync.freq_hz);
        Ok(Self {
            medium: RadioMedium::new(scenario.radio.link(derive_seed(seed, RADIO_STREAM))),
            units,
            leader,
            tick: 0,
            total_ticks: scenario.total_ticks(),
            substeps: scenario.substeps(),
            next_event: 0,
            console_seq: 0,
            spread_from_s,
            max_spread_rad: None,
            scenario: scenario.clone(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn unit_ids(&self) -> Vec<u32> {
        self.units.iter().map(|u| u.id).collect()
    }

    pub fn leader(&self) -> Option<u32> {
        self.leader
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn total_ticks(&self) -> u64 {
        self.total_ticks
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.total_ticks
    }

    /// Sim time of the next tick to run.
    pub fn now(&self) -> f64 {
        self.tick as f64 / self.scenario.globals.tick_hz
    }

    /// Puts a console command on the radio at the current sim time.
    ///
    /// The frame's `seq` is replaced by the host's own console sequence so
    /// commands from several consoles stay strictly ordered. Returns the
    /// sequence number used.
    pub fn submit(&mut self, frame: WireMessage) -> Result<u64, SubmitError> {
        self.check_command(&frame)?;
        let now = self.now();
        Ok(self.transmit_console(frame, now))
    }

    fn check_command(&self, frame: &WireMessage) -> Result<(), SubmitError> {
        let ty = frame.message_type();
        if !ty.is_command() {
            return Err(SubmitError::NotACommand(ty.as_str()));
        }
        match frame.dst {
            Endpoint::Broadcast => {}
            Endpoint::Unit(id) if self.units.iter().any(|u| u.id == id) => {}
            other => return Err(SubmitError::UnknownUnit(other)),
        }
        if let MessageBody::CmdPrimitive(p) = &frame.body {
            p.validate().map_err(|e| SubmitError::InvalidCommand(e.to_string()))?;
        }
        Ok(())
    }

    fn transmit_console(&mut self, mut frame: WireMessage, sent_s: f64) -> u64 {
        self.console_seq += 1;
        frame.seq = self.console_seq;
        frame.src = Endpoint::Console;
        let receivers: Vec<u32> = match frame.dst {
            Endpoint::Unit(id) => vec![id],
            _ => self.unit_ids(),
        };
        self.medium.transmit(sent_s, frame.seq, &frame, &receivers);
        frame.seq
    }

    /// Runs one control tick and returns one record per unit, in scenario order.
    pub fn step(&mut self) -> Vec<TelemetryRecord> {
        let now = self.now();
        let g = self.scenario.globals;
        let period = 1.0 / g.tick_hz;

        while let Some(e) = self.scenario.events.get(self.next_event) {
            if e.t_s > now + TIME_EPS {
                break;
            }
            let (frame, t_s) = (e.frame.clone(), e.t_s);
            self.next_event += 1;
            self.transmit_console(frame, t_s);
        }

        let latency = self.medium.link().mean_latency_s();
        for d in self.medium.poll(now + TIME_EPS) {
            if let Some(u) = self.units.iter_mut().find(|u| u.id == d.receiver) {
                u.receive(d, now, latency, g.tick_hz);
            }
        }

        let ids = self.unit_ids();
        let mut beacons = Vec::new();
        let mut records = Vec::with_capacity(self.units.len());
        for u in &mut self.units {
            let reading = accel_sample(&u.plant.state, u.plant.params.gravity, g.noise_sigma, &mut u.rng);
            if let Some(sync) = u.sync.as_mut() {
                if let Some(b) = sync.beacon_emit(now, Endpoint::Unit(u.id), u.seq + 1) {
                    u.seq += 1;
                    u.stats.beacons_sent += 1;
                    beacons.push(b);
                }
            }
            let sync_phase = u.sync.as_ref().map(|s| s.phase_rad);
            let servos = [&u.plant.servos[0], &u.plant.servos[1]];
            let out = u.controller.tick(now, &reading, servos, sync_phase);

            let saturated = out.saturation.iter().any(|&s| s);
            if saturated {
                u.stats.saturation_ticks += 1;
            }
            let s = u.plant.state;
            let servo = u.plant.servo_angles();
            if s.pitch_rad.abs() >= UPRIGHT_TOL_RAD || s.roll_rad.abs() >= UPRIGHT_TOL_RAD {
                u.last_tilted_tick = Some(self.tick);
            }
            records.push(TelemetryRecord {
                t_s: now,
                unit_id: u.id,
                pitch_rad: s.pitch_rad,
                roll_rad: s.roll_rad,
                pitch_rate: s.pitch_rate,
                roll_rate: s.roll_rate,
                servo_x_rad: servo.x,
                servo_y_rad: servo.y,
                ax: reading.ax,
                ay: reading.ay,
                az: reading.az,
                active_primitive: out.active,
                sync_phase_rad: sync_phase.unwrap_or(0.0),
                flags: TelemetryFlags { saturation: saturated, model_domain: u.plant.domain_exceeded },
            });

            if let Some(t) = out.targets {
                u.plant.set_targets(t);
            }
            // leaving the modeled range is latched and shows up as a record flag
            let _ = u.plant.advance(g.dt_s, self.substeps);
            u.stats.domain_exceeded = u.plant.domain_exceeded;
            if let Some(sync) = u.sync.as_mut() {
                sync.advance(period);
            }
        }

        for b in beacons {
            let Endpoint::Unit(src) = b.src else { continue };
            let receivers: Vec<u32> = ids.iter().copied().filter(|&id| id != src).collect();
            self.medium.transmit(now, b.seq, &b, &receivers);
        }

        if self.spread_from_s.is_some_and(|from| now >= from - TIME_EPS) {
            let spread = max_pairwise_spread(records.iter().map(|r| r.sync_phase_rad));
            self.max_spread_rad = Some(self.max_spread_rad.map_or(spread, |m| m.max(spread)));
        }
        self.tick += 1;
        records
    }

    pub fn summary(&self, wall_time_s: f64) -> Summary {
        let period = 1.0 / self.scenario.globals.tick_hz;
        let units = self
            .units
            .iter()
            .map(|u| {
                let mut s = u.stats.clone();
                s.final_state = u.plant.state;
                s.final_servo = u.plant.servo_angles();
                s.convergence_time_s = match u.last_tilted_tick {
                    _ if self.tick == 0 => None,
                    None => Some(0.0),
                    Some(k) if k + 1 >= self.tick => None,
                    Some(k) => Some((k + 1) as f64 * period),
                };
                s
            })
            .collect();
        Summary {
            ticks: self.tick,
            records: self.tick * self.units.len() as u64,
            sim_time_s: self.now(),
            wall_time_s,
            leader: self.leader,
            max_phase_spread_rad: self.max_spread_rad,
            phase_spread_from_s: self.spread_from_s,
            units,
        }
    }
}

/// Largest circular distance between any two phases.
pub fn max_pairwise_spread(phases: impl IntoIterator<Item = f64>) -> f64 {
    let phases: Vec<f64> = phases.into_iter().collect();
    let mut worst: f64 = 0.0;
    for (i, a) in phases.iter().enumerate() {
        for b in &phases[i + 1..] {
            worst = worst.max(wrap_to_pi(a - b).abs());
        }
    }
    worst
}

/// Runs a whole scenario in memory.
pub fn run_collect(scenario: &Scenario) -> Result<(Vec<TelemetryRecord>, Summary), ScenarioError> {
    let start = Instant::now();
    let mut engine = Engine::new(scenario)?;
    let mut records = Vec::with_capacity((engine.total_ticks() as usize) * scenario.units.len());
    while !engine.is_finished() {
        records.extend(engine.step());
    }
    let summary = engine.summary(start.elapsed().as_secs_f64());
    Ok((records, summary))
}

/// Runs a whole scenario as fast as possible, streaming telemetry to `out_path`.
pub fn run_headless(scenario: &Scenario, out_path: impl AsRef<Path>) -> Result<Summary, RunError> {
    let start = Instant::now();
    let mut engine = Engine::new(scenario)?;
    let mut out = TelemetryWriter::create(out_path)?;
    while !engine.is_finished() {
        for r in engine.step() {
            out.write(&r)?;
        }
    }
    out.finish()?;
    Ok(engine.summary(start.elapsed().as_secs_f64()))
}
