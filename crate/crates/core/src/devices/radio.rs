use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{seeded_rng, SimRng};

/// Parameters of the shared broadcast medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioLink {
    pub loss_prob: f64,
    pub latency_s: f64,
    pub jitter_s: f64,
    pub seed: u64,
}

impl Default for RadioLink {
    fn default() -> Self {
        Self { loss_prob: 0.0, latency_s: 0.0, jitter_s: 0.0, seed: 0 }
    }
}

impl RadioLink {
    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if !(0.0..=1.0).contains(&self.loss_prob) {
            problems.push(format!("loss_prob must be in [0, 1], got {}", self.loss_prob));
        }
        if !(self.latency_s >= 0.0) || !self.latency_s.is_finite() {
            problems.push(format!("latency_s must be >= 0, got {}", self.latency_s));
        }
        if !(self.jitter_s >= 0.0) || !self.jitter_s.is_finite() {
            problems.push(format!("jitter_s must be >= 0, got {}", self.jitter_s));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }

    /// Expected one-way latency, used as the receivers' latency estimate.
    pub fn mean_latency_s(&self) -> f64 {
        self.latency_s + 0.5 * self.jitter_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timestamped<M> {
    pub time_s: f64,
    pub seq: u64,
    pub msg: M,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery<M> {
    pub receiver: u32,
    pub sent_s: f64,
    pub delivered_s: f64,
    pub seq: u64,
    pub msg: M,
}

#[derive(Debug, Clone, Copy)]
struct Key {
    delivered_s: f64,
    seq: u64,
    order: u64,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.delivered_s
            .total_cmp(&other.delivered_s)
            .then(self.seq.cmp(&other.seq))
            .then(self.order.cmp(&other.order))
    }
}

/// Broadcast medium: every transmission is offered to every listed receiver,
/// with loss and delay drawn independently per receiver.
#[derive(Debug, Clone)]
pub struct RadioMedium<M> {
    link: RadioLink,
    rng: SimRng,
    pending: BTreeMap<Key, Delivery<M>>,
    order: u64,
}

impl<M: Clone> RadioMedium<M> {
    pub fn new(link: RadioLink) -> Self {
        Self { rng: seeded_rng(link.seed), link, pending: BTreeMap::new(), order: 0 }
    }

    pub fn link(&self) -> &RadioLink {
        &self.link
    }

    pub fn in_flight(&self) -> usize {
        self.pending.len()
    }

    pub fn transmit(&mut self, sent_s: f64, seq: u64, msg: &M, receivers: &[u32]) {
        for &receiver in receivers {
            // both draws always happen so the stream layout is independent of outcomes
            let lost = self.rng.gen::<f64>() < self.link.loss_prob;
            let jitter = self.link.jitter_s * self.rng.gen::<f64>();
            if lost {
                continue;
            }
            let delivered_s = sent_s + self.link.latency_s + jitter;
            let key = Key { delivered_s, seq, order: self.order };
            self.order += 1;
            self.pending.insert(
                key,
                Delivery { receiver, sent_s, delivered_s, seq, msg: msg.clone() },
            );
        }
    }

    /// Removes and returns everything due by `now_s`, in delivery order.
    pub fn poll(&mut self, now_s: f64) -> Vec<Delivery<M>> {
        let mut due = Vec::new();
        while let Some(entry) = self.pending.first_entry() {
            if entry.key().delivered_s > now_s {
                break;
            }
            due.push(entry.remove());
        }
        due
    }
}

/// One-shot delivery of a batch over a single point-to-point hop.
///
/// Returns the survivors that have arrived by `now_s`, stamped with their
/// delivery time and ordered by delivery time, then sequence number.
pub fn radio_deliver<M: Clone>(
    link: &RadioLink,
    msgs: &[Timestamped<M>],
    now_s: f64,
) -> Vec<Timestamped<M>> {
    let mut medium = RadioMedium::new(*link);
    for m in msgs {
        medium.transmit(m.time_s, m.seq, &m.msg, &[0]);
    }
    medium
        .poll(now_s)
        .into_iter()
        .map(|d| Timestamped { time_s: d.delivered_s, seq: d.seq, msg: d.msg })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(n: usize) -> Vec<Timestamped<usize>> {
        (0..n)
            .map(|i| Timestamped { time_s: i as f64 * 1e-3, seq: i as u64, msg: i })
            .collect()
    }

    #[test]
    fn lossless_is_identity() {
        let link = RadioLink { latency_s: 0.03, ..Default::default() };
        let msgs = batch(50);
        let out = radio_deliver(&link, &msgs, 10.0);
        assert_eq!(out.len(), 50);
        assert!(out.iter().zip(&msgs).all(|(a, b)| a.msg == b.msg && a.seq == b.seq));
    }

    #[test]
    fn equal_delivery_times_break_ties_by_seq() {
        let link = RadioLink::default();
        let msgs: Vec<_> = [5u64, 2, 9, 1]
            .iter()
            .map(|&s| Timestamped { time_s: 1.0, seq: s, msg: s })
            .collect();
        let out: Vec<u64> = radio_deliver(&link, &msgs, 1.0).into_iter().map(|m| m.seq).collect();
        assert_eq!(out, vec![1, 2, 5, 9]);
    }

    #[test]
    fn total_loss_delivers_nothing() {
        let link = RadioLink { loss_prob: 1.0, ..Default::default() };
        assert!(radio_deliver(&link, &batch(100), 10.0).is_empty());
    }

    #[test]
    fn loss_rate_is_binomial() {
        let n = 10_000.0;
        let p = 0.1;
        let link = RadioLink { loss_prob: p, seed: 2024, ..Default::default() };
        let delivered = radio_deliver(&link, &batch(10_000), 100.0).len() as f64;
        let bound = 3.0 * (n * p * (1.0 - p)).sqrt();
        assert!((delivered - 9000.0).abs() <= bound, "{delivered}");
    }

    #[test]
    fn nothing_arrives_early() {
        let link = RadioLink { latency_s: 0.03, jitter_s: 0.01, seed: 4, ..Default::default() };
        let mut medium = RadioMedium::new(link);
        medium.transmit(1.0, 1, &"x", &[1, 2, 3]);
        assert!(medium.poll(1.029).is_empty());
        let out = medium.poll(1.05);
        assert_eq!(out.len(), 3);
        assert!(out.windows(2).all(|w| w[0].delivered_s <= w[1].delivered_s));
        assert!(out.iter().all(|d| d.delivered_s >= 1.03 && d.delivered_s <= 1.04));
    }

    #[test]
    fn seeded_outcomes_repeat() {
        let link = RadioLink { loss_prob: 0.3, jitter_s: 0.02, seed: 11, ..Default::default() };
        let a = radio_deliver(&link, &batch(500), 10.0);
        let b = radio_deliver(&link, &batch(500), 10.0);
        assert_eq!(a, b);
    }

    #[test]
    fn link_validation() {
        assert!(RadioLink { loss_prob: 1.5, ..Default::default() }.validate().is_err());
        assert!(RadioLink { latency_s: -1.0, ..Default::default() }.validate().is_err());
        assert!(RadioLink::default().validate().is_ok());
    }
}
