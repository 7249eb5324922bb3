//! In-process message fabric.
//!
//! Every endpoint (LPs and the GVT controller) owns one [`Mailbox`]; any thread
//! can [`Transport::send`] to any endpoint without blocking. Delivery is
//! exactly-once and FIFO per (source, destination) pair; there is no ordering
//! across pairs.
//!
//! With delay injection enabled each envelope carries a random wall-clock
//! delay. The receiving mailbox holds back the head of a pair's queue until
//! its delay has elapsed, and everything behind it in the same pair waits too,
//! so FIFO is preserved while different pairs get reordered.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::digest::mix64;
use crate::event::{EventMessage, Sign, VirtualTime};

/// Index of a mailbox. LPs use `0..num_lps`; the controller uses `num_lps`.
pub type Endpoint = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvelopeKind {
    Positive,
    Negative,
    Ack,
    GvtControl,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Control {
    /// Stop starting new buckets and keep draining until told otherwise.
    Pause { round: u64 },
    /// The system is quiescent: send a report.
    RequestReport { round: u64 },
    Report {
        round: u64,
        local_min: VirtualTime,
        live_events: u64,
    },
    /// Apply `gvt` and continue, or stop when `terminate` is set.
    Resume {
        round: u64,
        gvt: VirtualTime,
        terminate: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Body {
    Event(EventMessage),
    /// Echo of a delivered positive or negative message.
    Ack(EventMessage),
    Control(Control),
}

#[derive(Clone, Copy, Debug)]
pub struct Envelope {
    pub source: Endpoint,
    pub body: Body,
    pub injected_delay: Duration,
    sent_at: Instant,
}

impl Envelope {
    pub fn kind(&self) -> EnvelopeKind {
        match &self.body {
            Body::Event(m) if m.sign == Sign::Positive => EnvelopeKind::Positive,
            Body::Event(_) => EnvelopeKind::Negative,
            Body::Ack(_) => EnvelopeKind::Ack,
            Body::Control(_) => EnvelopeKind::GvtControl,
        }
    }

    fn deliver_at(&self) -> Instant {
        self.sent_at + self.injected_delay
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DelayInjection {
    pub max: Duration,
    pub schedule_seed: u64,
}

pub struct Transport {
    senders: Vec<Sender<Envelope>>,
    delay: Option<DelayInjection>,
    rngs: Vec<Mutex<ChaCha8Rng>>,
    closed: AtomicBool,
    dropped: AtomicU64,
}

impl Transport {
    /// Creates `endpoints` connected mailboxes.
    pub fn new(endpoints: usize, delay: Option<DelayInjection>) -> (Transport, Vec<Mailbox>) {
        let (senders, receivers): (Vec<_>, Vec<_>) = (0..endpoints).map(|_| unbounded()).unzip();
        let seed = delay.map_or(0, |d| d.schedule_seed);
        let rngs = (0..endpoints)
            .map(|src| Mutex::new(ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(src as u64)))))
            .collect();
        let mailboxes = receivers
            .into_iter()
            .enumerate()
            .map(|(owner, rx)| Mailbox::new(owner, endpoints, rx))
            .collect();
        let transport = Transport {
            senders,
            delay,
            rngs,
            closed: AtomicBool::new(false),
            dropped: AtomicU64::new(0),
        };
        (transport, mailboxes)
    }

    pub fn endpoints(&self) -> usize {
        self.senders.len()
    }

    /// Non-blocking send. After [`close`](Self::close) the envelope is dropped
    /// and counted.
    pub fn send(&self, src: Endpoint, dst: Endpoint, body: Body) {
        if self.closed.load(Ordering::Acquire) {
            self.dropped.fetch_add(1, Ordering::Relaxed);
            log::warn!("dropping {body:?} from {src} to {dst}: transport closed");
            return;
        }
        let injected_delay = match (&self.delay, &body) {
            (Some(d), Body::Event(_)) if !d.max.is_zero() => {
                let mut rng = self.rngs[src].lock().expect("rng poisoned");
                Duration::from_micros(rng.random_range(0..=d.max.as_micros() as u64))
            }
            _ => Duration::ZERO,
        };
        let env = Envelope {
            source: src,
            body,
            injected_delay,
            sent_at: Instant::now(),
        };
        // the receiver lives as long as the run; a failed send means it is gone
        if self.senders[dst].send(env).is_err() {
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

/// Receiving side of one endpoint. Only its owner calls into it.
pub struct Mailbox {
    owner: Endpoint,
    rx: Receiver<Envelope>,
    // envelopes held back by delay injection, per source
    held: Vec<VecDeque<Envelope>>,
    held_count: usize,
}

impl Mailbox {
    fn new(owner: Endpoint, endpoints: usize, rx: Receiver<Envelope>) -> Self {
        Mailbox {
            owner,
            rx,
            held: vec![VecDeque::new(); endpoints],
            held_count: 0,
        }
    }

    pub fn owner(&self) -> Endpoint {
        self.owner
    }

    /// Everything deliverable right now, never blocking.
    pub fn drain(&mut self) -> Vec<Envelope> {
        let mut out = Vec::new();
        self.drain_into(&mut out);
        out
    }

    pub fn drain_into(&mut self, out: &mut Vec<Envelope>) {
        for env in self.rx.try_iter() {
            if self.held_count == 0 && env.injected_delay.is_zero() {
                out.push(env);
            } else {
                self.held[env.source].push_back(env);
                self.held_count += 1;
            }
        }
        if self.held_count > 0 {
            self.release_ready(Instant::now(), out);
        }
    }

    /// Blocks up to `timeout` until something may be deliverable.
    pub fn wait(&mut self, timeout: Duration) {
        let now = Instant::now();
        let mut deadline = now + timeout;
        if let Some(next) = self.next_release() {
            if next <= now {
                return;
            }
            deadline = deadline.min(next);
        }
        match self.rx.recv_deadline(deadline) {
            Ok(env) => {
                self.held[env.source].push_back(env);
                self.held_count += 1;
            }
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {}
        }
    }

    /// True when nothing is queued or held.
    pub fn is_empty(&self) -> bool {
        self.held_count == 0 && self.rx.is_empty()
    }

    fn next_release(&self) -> Option<Instant> {
        self.held
            .iter()
            .filter_map(|q| q.front())
            .map(|e| e.deliver_at())
            .min()
    }

    fn release_ready(&mut self, now: Instant, out: &mut Vec<Envelope>) {
        for queue in &mut self.held {
            while queue.front().is_some_and(|e| e.deliver_at() <= now) {
                out.push(queue.pop_front().expect("front exists"));
                self.held_count -= 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{EntityId, EventId};
    use std::sync::Arc;
    use std::thread;

    fn msg(sender: u32, seq: u64) -> EventMessage {
        EventMessage::new(
            EventId::new(EntityId(sender), seq),
            VirtualTime::new(1.0).unwrap(),
            EntityId(sender),
            EntityId(0),
        )
    }

    fn seqs(envs: &[Envelope]) -> Vec<(usize, u64)> {
        envs.iter()
            .map(|e| match e.body {
                Body::Event(m) => (e.source, m.id.sequence),
                _ => panic!("unexpected {e:?}"),
            })
            .collect()
    }

    #[test]
    fn empty_mailbox_drains_nothing() {
        let (_t, mut boxes) = Transport::new(2, None);
        assert!(boxes[1].drain().is_empty());
    }

    #[test]
    fn pair_fifo_and_drain_empties() {
        let (t, mut boxes) = Transport::new(2, None);
        for q in 0..3 {
            t.send(0, 1, Body::Event(msg(0, q)));
        }
        assert_eq!(seqs(&boxes[1].drain()), vec![(0, 0), (0, 1), (0, 2)]);
        assert!(boxes[1].drain().is_empty());
        assert!(boxes[1].is_empty());
    }

    #[test]
    fn kinds_follow_bodies() {
        let (t, mut boxes) = Transport::new(2, None);
        let m = msg(0, 0);
        t.send(0, 1, Body::Event(m));
        t.send(
            0,
            1,
            Body::Event(crate::event::make_antimessage(&m).unwrap()),
        );
        t.send(0, 1, Body::Ack(m));
        t.send(0, 1, Body::Control(Control::Pause { round: 1 }));
        let kinds: Vec<_> = boxes[1].drain().iter().map(|e| e.kind()).collect();
        assert_eq!(
            kinds,
            vec![
                EnvelopeKind::Positive,
                EnvelopeKind::Negative,
                EnvelopeKind::Ack,
                EnvelopeKind::GvtControl
            ]
        );
    }

    #[test]
    fn send_after_close_is_dropped_and_counted() {
        let (t, mut boxes) = Transport::new(2, None);
        t.close();
        t.send(0, 1, Body::Event(msg(0, 0)));
        assert_eq!(t.dropped(), 1);
        assert!(boxes[1].drain().is_empty());
    }

    fn drain_until(mailbox: &mut Mailbox, n: usize) -> Vec<Envelope> {
        let mut got = Vec::new();
        let start = Instant::now();
        while got.len() < n {
            assert!(start.elapsed() < Duration::from_secs(10), "timed out");
            mailbox.drain_into(&mut got);
            mailbox.wait(Duration::from_millis(2));
        }
        got
    }

    #[test]
    fn delayed_head_holds_back_its_pair_only() {
        let (t, mut boxes) = Transport::new(3, None);
        // hand-built envelopes: delays are normally sampled inside send
        let now = Instant::now();
        let mk = |source, seq, delay_ms| Envelope {
            source,
            body: Body::Event(msg(source as u32, seq)),
            injected_delay: Duration::from_millis(delay_ms),
            sent_at: now,
        };
        t.senders[2].send(mk(0, 1, 5)).unwrap();
        t.senders[2].send(mk(0, 2, 0)).unwrap();
        t.senders[2].send(mk(1, 1, 0)).unwrap();
        let first = boxes[2].drain();
        assert_eq!(seqs(&first), vec![(1, 1)]);
        let rest = drain_until(&mut boxes[2], 2);
        assert_eq!(seqs(&rest), vec![(0, 1), (0, 2)]);
        assert!(now.elapsed() >= Duration::from_millis(5));
    }

    #[test]
    fn concurrent_senders_exactly_once_fifo_with_delays() {
        const SENDERS: usize = 4;
        const PER: u64 = 300;
        let delay = DelayInjection {
            max: Duration::from_micros(300),
            schedule_seed: 11,
        };
        let (t, mut boxes) = Transport::new(SENDERS + 1, Some(delay));
        let t = Arc::new(t);
        let handles: Vec<_> = (0..SENDERS)
            .map(|src| {
                let t = Arc::clone(&t);
                thread::spawn(move || {
                    for q in 0..PER {
                        t.send(src, SENDERS, Body::Event(msg(src as u32, q)));
                    }
                })
            })
            .collect();
        // drain while senders are still running
        let got = drain_until(&mut boxes[SENDERS], SENDERS * PER as usize);
        for h in handles {
            h.join().unwrap();
        }
        let mut next = [0u64; SENDERS];
        for (src, q) in seqs(&got) {
            assert_eq!(q, next[src], "gap or reorder from {src}");
            next[src] += 1;
        }
        assert!(next.iter().all(|n| *n == PER));
        assert!(boxes[SENDERS].drain().is_empty());
    }

    #[test]
    fn delay_samples_are_reproducible_per_seed() {
        let delay = Some(DelayInjection {
            max: Duration::from_millis(5),
            schedule_seed: 3,
        });
        let sample = || {
            let (t, boxes) = Transport::new(2, delay);
            for q in 0..20 {
                t.send(0, 1, Body::Event(msg(0, q)));
            }
            let mut v: Vec<Duration> = boxes[1].rx.try_iter().map(|e| e.injected_delay).collect();
            v.truncate(20);
            v
        };
        let a = sample();
        assert_eq!(a, sample());
        assert!(a.iter().any(|d| !d.is_zero()));
        assert!(a.iter().all(|d| *d <= Duration::from_millis(5)));
    }
}
