use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use super::{decide, AdvisorError, AdvisorResult, ChatClient, Exemplar};
use crate::codec::{SceneDescription, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct AdvisorRequest {
    pub tick: u64,
    pub scene: SceneDescription,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorFailure {
    pub issued_tick: u64,
    pub scene_digest: String,
    pub error: String,
}

pub type AdvisorOutcome = Result<AdvisorResult, AdvisorFailure>;

/// Slow-path interface polled once per fast tick. `poll` never blocks.
pub trait Advisor {
    fn submit(&mut self, req: AdvisorRequest);
    fn poll(&mut self, tick: u64) -> Option<AdvisorOutcome>;
    fn in_flight(&self) -> bool;
    /// Drops any outstanding request; its reply is never delivered.
    fn cancel(&mut self);
}

/// Shared decision settings.
#[derive(Clone)]
pub struct DecisionSetup {
    pub client: Arc<dyn ChatClient>,
    pub vocab: Vocabulary,
    pub exemplars: Vec<Exemplar>,
}

impl DecisionSetup {
    fn run(&self, req: &AdvisorRequest) -> AdvisorOutcome {
        decide(&req.scene, self.client.as_ref(), &self.vocab, &self.exemplars, req.tick).map_err(
            |AdvisorError::Unavailable(msg)| AdvisorFailure {
                issued_tick: req.tick,
                scene_digest: req.scene.digest.clone(),
                error: msg,
            },
        )
    }
}

/// Answers on the calling thread but withholds the reply for a fixed number of ticks.
pub struct SyncAdvisor {
    setup: DecisionSetup,
    latency_ticks: u64,
    dt: f64,
    pending: Option<(u64, AdvisorOutcome)>,
}

impl SyncAdvisor {
    pub fn new(setup: DecisionSetup, latency_ticks: u64, dt: f64) -> Self {
        SyncAdvisor {
            setup,
            latency_ticks,
            dt,
            pending: None,
        }
    }
}

impl Advisor for SyncAdvisor {
    fn submit(&mut self, req: AdvisorRequest) {
        let outcome = self.setup.run(&req);
        self.pending = Some((req.tick + self.latency_ticks, outcome));
    }

    fn poll(&mut self, tick: u64) -> Option<AdvisorOutcome> {
        match &self.pending {
            Some((ready, _)) if tick >= *ready => {
                let (_, mut outcome) = self.pending.take().expect("checked");
                if let Ok(r) = &mut outcome {
                    r.mark_received(tick, self.dt);
                }
                Some(outcome)
            }
            _ => None,
        }
    }

    fn in_flight(&self) -> bool {
        self.pending.is_some()
    }

    fn cancel(&mut self) {
        self.pending = None;
    }
}

/// Runs queries on a worker thread; replies are picked up by polling.
pub struct ThreadedAdvisor {
    requests: Sender<(u64, AdvisorRequest)>,
    replies: Receiver<(u64, AdvisorOutcome)>,
    // detached on drop; the worker exits once the request channel closes
    _worker: JoinHandle<()>,
    generation: u64,
    in_flight: bool,
    dt: f64,
}

impl ThreadedAdvisor {
    pub fn new(setup: DecisionSetup, dt: f64) -> Self {
        let (req_tx, req_rx) = mpsc::channel::<(u64, AdvisorRequest)>();
        let (rep_tx, rep_rx) = mpsc::channel();
        let worker = std::thread::spawn(move || {
            for (generation, req) in req_rx {
                if rep_tx.send((generation, setup.run(&req))).is_err() {
                    break;
                }
            }
        });
        ThreadedAdvisor {
            requests: req_tx,
            replies: rep_rx,
            _worker: worker,
            generation: 0,
            in_flight: false,
            dt,
        }
    }
}

impl Advisor for ThreadedAdvisor {
    fn submit(&mut self, req: AdvisorRequest) {
        self.generation += 1;
        self.in_flight = true;
        let _ = self.requests.send((self.generation, req));
    }

    fn poll(&mut self, tick: u64) -> Option<AdvisorOutcome> {
        loop {
            match self.replies.try_recv() {
                Ok((generation, _)) if generation != self.generation => continue,
                Ok((_, mut outcome)) => {
                    self.in_flight = false;
                    if let Ok(r) = &mut outcome {
                        r.mark_received(tick, self.dt);
                    }
                    return Some(outcome);
                }
                Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => return None,
            }
        }
    }

    fn in_flight(&self) -> bool {
        self.in_flight
    }

    fn cancel(&mut self) {
        // bumping the generation makes the outstanding reply stale
        self.generation += 1;
        self.in_flight = false;
    }
}
