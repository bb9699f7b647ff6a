use std::collections::VecDeque;

use crate::devices::ServoState;
use crate::dynamics::ServoAngles;

use super::{ControlError, MotionPrimitive, PrimitiveTag};

pub const DEFAULT_QUEUE_CAPACITY: usize = 32;

const REACHED_TOL_RAD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivePrimitive {
    pub primitive: MotionPrimitive,
    pub start_s: f64,
    /// When a tilt reached its pose and started holding.
    pub hold_from_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveOutput {
    pub targets: ServoAngles,
    pub completed: bool,
    pub tag: PrimitiveTag,
}

/// FIFO of motion primitives with at most one active.
///
/// The capacity bounds active plus queued primitives.
#[derive(Debug, Clone)]
pub struct Scheduler {
    queue: VecDeque<MotionPrimitive>,
    active: Option<ActivePrimitive>,
    pub balance_enabled: bool,
    capacity: usize,
}

impl Default for Scheduler {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_QUEUE_CAPACITY)
    }
}

impl Scheduler {
    pub fn with_capacity(capacity: usize) -> Self {
        Self { queue: VecDeque::new(), active: None, balance_enabled: true, capacity }
    }

    pub fn active(&self) -> Option<&ActivePrimitive> {
        self.active.as_ref()
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.active.is_none()
    }

    /// Queues `p`. `Stop` preempts: it cancels the active primitive, clears
    /// the queue, and becomes active itself.
    pub fn enqueue(&mut self, p: MotionPrimitive, now_s: f64) -> Result<(), ControlError> {
        if p == MotionPrimitive::Stop {
            self.queue.clear();
            self.activate(p, now_s);
            return Ok(());
        }
        let pending = self.queue.len() + usize::from(self.active.is_some());
        if pending >= self.capacity {
            return Err(ControlError::QueueFull { capacity: self.capacity });
        }
        if self.active.is_none() {
            self.activate(p, now_s);
        } else {
            self.queue.push_back(p);
        }
        Ok(())
    }

    /// Drops everything immediately, without driving the servos home.
    pub fn cancel(&mut self) {
        self.queue.clear();
        self.active = None;
    }

    fn activate(&mut self, primitive: MotionPrimitive, now_s: f64) {
        self.active = Some(ActivePrimitive { primitive, start_s: now_s, hold_from_s: None });
    }

    /// Targets for the active primitive at `t_s`.
    ///
    /// `sync_phase` replaces the locally timed sway phase when the unit is
    /// following a group phase reference. On completion the next queued
    /// primitive becomes active starting at `t_s`.
    pub fn tick(
        &mut self,
        t_s: f64,
        servos: [&ServoState; 2],
        sync_phase: Option<f64>,
    ) -> Option<PrimitiveOutput> {
        let active = self.active.as_mut()?;
        let elapsed = t_s - active.start_s;
        let p = active.primitive;
        let (targets, completed) = match p {
            MotionPrimitive::Tilt { hold_s, .. } => {
                let targets = p.pattern_targets(0.0);
                let reached = (servos[0].angle_rad - servos[0].clamp(targets.x)).abs() < REACHED_TOL_RAD
                    && (servos[1].angle_rad - servos[1].clamp(targets.y)).abs() < REACHED_TOL_RAD;
                if reached && active.hold_from_s.is_none() {
                    active.hold_from_s = Some(t_s);
                }
                let done = active.hold_from_s.is_some_and(|h| t_s - h >= hold_s);
                (targets, done)
            }
            MotionPrimitive::Sway { duration_s, .. } => {
                let phase = sync_phase.unwrap_or_else(|| p.phase_at(elapsed));
                (p.pattern_targets(phase), elapsed >= duration_s)
            }
            MotionPrimitive::Vibrate { duration_s, .. } => {
                (p.pattern_targets(p.phase_at(elapsed)), elapsed >= duration_s)
            }
            MotionPrimitive::Stop => {
                let home = servos.iter().all(|s| s.angle_rad.abs() < REACHED_TOL_RAD);
                (ServoAngles::ZERO, home)
            }
        };
        let targets = ServoAngles::new(servos[0].clamp(targets.x), servos[1].clamp(targets.y));
        if completed {
            self.active = None;
            if let Some(next) = self.queue.pop_front() {
                self.activate(next, t_s);
            }
        }
        Some(PrimitiveOutput { targets, completed, tag: p.tag() })
    }
}
