//! Deterministic single-threaded executor.
//!
//! Every endpoint has a FIFO mailbox of encoded frames. Sites start in id
//! order, then endpoints are visited round-robin, each handling at most one
//! frame per visit, until the coordinator is complete or nothing is left to
//! deliver.

use std::collections::VecDeque;
use std::time::Instant;

use dcm_core::{decode_message, encode_message, ColumnBlock, Payload, ProtocolMessage, Schedule};

use super::actors::{Coordinator, SiteActor};
use super::metrics::{ms, EdgeMetrics, RunMetrics};
use super::{coordinator_id, RunConfig, RuntimeError};

struct Frame {
    bytes: Vec<u8>,
    encode_ms: f64,
}

struct Router {
    mailboxes: Vec<VecDeque<Frame>>,
    data_messages: usize,
}

impl Router {
    fn post(&mut self, msgs: Vec<ProtocolMessage>) -> Result<(), RuntimeError> {
        for msg in msgs {
            let t0 = Instant::now();
            let bytes = encode_message(&msg)?;
            let encode_ms = ms(t0.elapsed());
            let inbox = self
                .mailboxes
                .get_mut(msg.receiver)
                .ok_or_else(|| RuntimeError::Transport(format!("no endpoint {}", msg.receiver)))?;
            if matches!(msg.payload, Payload::DataBlock(_)) {
                self.data_messages += 1;
            }
            inbox.push_back(Frame { bytes, encode_ms });
        }
        Ok(())
    }
}

// Endpoint ids index both the mailboxes and the sites, and the router is
// borrowed mutably inside the loop.
#[allow(clippy::needless_range_loop)]
pub(super) fn execute(
    blocks: &[ColumnBlock],
    schedule: &Schedule,
    config: &RunConfig,
) -> Result<(Coordinator, RunMetrics), RuntimeError> {
    let t = blocks.len();
    let coord_id = coordinator_id(t);
    let deadline = Instant::now() + config.deadline;
    let mut sites: Vec<SiteActor> =
        blocks.iter().map(|b| SiteActor::new(b.clone(), schedule, coord_id, config.fault)).collect();
    let mut coordinator = Coordinator::new(t);
    let mut router = Router { mailboxes: (0..=t).map(|_| VecDeque::new()).collect(), data_messages: 0 };
    let mut edges = Vec::new();

    for site in &mut sites {
        let out = site.start()?;
        router.post(out)?;
    }

    while !coordinator.is_complete() {
        if Instant::now() > deadline {
            return Err(coordinator.timeout(config.deadline));
        }
        let mut progressed = false;
        for id in 0..=t {
            let Some(frame) = router.mailboxes[id].pop_front() else {
                continue;
            };
            progressed = true;
            let t0 = Instant::now();
            let msg = decode_message(&frame.bytes)?;
            let decode_ms = ms(t0.elapsed());
            if id == coord_id {
                coordinator.handle(msg)?;
            } else {
                edges.push(EdgeMetrics {
                    from: msg.sender,
                    to: id,
                    bytes: frame.bytes.len() as u64,
                    transfer_ms: frame.encode_ms + decode_ms,
                });
                let out = sites[id].handle(msg)?;
                router.post(out)?;
            }
        }
        if !progressed {
            // Nothing in flight and the coordinator is still short: no
            // amount of waiting will complete the run.
            return Err(coordinator.timeout(config.deadline));
        }
    }

    edges.sort_by_key(|e| (e.to, e.from));
    let metrics = RunMetrics {
        sites: sites.into_iter().map(|s| s.metrics).collect(),
        edges,
        data_messages: router.data_messages,
        cov_messages: coordinator.cov_messages,
        done_messages: coordinator.done_messages,
        ..RunMetrics::default()
    };
    Ok((coordinator, metrics))
}
