use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use dcm_core::{
    cross_covariance, local_covariance, merge_blocks, ColumnBlock, CovBlock, DenseMatrix, GlobalCovariance, Payload,
    ProtocolMessage, Schedule, SiteId,
};

use super::metrics::{ms, SiteMetrics};
use super::{Fault, RuntimeError};

/// One site's side of the protocol, independent of the transport.
pub(crate) struct SiteActor {
    block: ColumnBlock,
    predecessors: Vec<SiteId>,
    successors: Vec<SiteId>,
    coordinator: SiteId,
    waiting: BTreeSet<SiteId>,
    fault: Option<Fault>,
    corrupted: bool,
    pub metrics: SiteMetrics,
}

impl SiteActor {
    pub fn new(block: ColumnBlock, schedule: &Schedule, coordinator: SiteId, fault: Option<Fault>) -> Self {
        let site = block.site();
        let predecessors = schedule.predecessors(site).to_vec();
        Self {
            waiting: predecessors.iter().copied().collect(),
            successors: schedule.successors(site),
            predecessors,
            block,
            coordinator,
            fault: if site == 1 { fault } else { None },
            corrupted: false,
            metrics: SiteMetrics { site, ..SiteMetrics::default() },
        }
    }

    pub fn site(&self) -> SiteId {
        self.block.site()
    }

    pub fn predecessors(&self) -> &[SiteId] {
        &self.predecessors
    }

    pub fn successors(&self) -> &[SiteId] {
        &self.successors
    }

    pub fn is_finished(&self) -> bool {
        self.waiting.is_empty()
    }

    fn to_coordinator(&self, payload: Payload) -> ProtocolMessage {
        ProtocolMessage { sender: self.site(), receiver: self.coordinator, payload }
    }

    /// The local block for the coordinator (computed here) and the raw
    /// data for each successor. A site with no predecessors is done at once.
    pub fn start(&mut self) -> Result<Vec<ProtocolMessage>, RuntimeError> {
        let t0 = Instant::now();
        let local = local_covariance(&self.block)?;
        self.metrics.local_ms = ms(t0.elapsed());

        let mut out = vec![self.to_coordinator(Payload::CovBlock(local))];
        out.extend(self.successors.iter().map(|&to| ProtocolMessage {
            sender: self.site(),
            receiver: to,
            payload: Payload::DataBlock(self.block.clone()),
        }));
        if self.is_finished() {
            out.push(self.to_coordinator(Payload::Done));
        }
        Ok(out)
    }

    pub fn handle(&mut self, msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>, RuntimeError> {
        let site = self.site();
        if msg.receiver != site {
            return Err(RuntimeError::Protocol(format!("site {site} got a frame addressed to {}", msg.receiver)));
        }
        let Payload::DataBlock(data) = msg.payload else {
            return Err(RuntimeError::Protocol(format!("site {site} got a non-data frame from {}", msg.sender)));
        };
        if data.site() != msg.sender {
            return Err(RuntimeError::Protocol(format!(
                "site {} sent a block labelled site {}",
                msg.sender,
                data.site()
            )));
        }
        if !self.waiting.remove(&msg.sender) {
            return Err(RuntimeError::Protocol(format!(
                "site {site} got data from {}, which is not an outstanding predecessor",
                msg.sender
            )));
        }

        let t0 = Instant::now();
        let mut cross = cross_covariance(&self.block, &data)?;
        self.metrics.cross_ms += ms(t0.elapsed());

        if self.fault == Some(Fault::CorruptCrossBlock) && !self.corrupted {
            cross = flip_first_bit(cross)?;
            self.corrupted = true;
        }
        if self.fault == Some(Fault::SilentSite) {
            return Ok(Vec::new());
        }
        let mut out = vec![self.to_coordinator(Payload::CovBlock(cross))];
        if self.is_finished() {
            out.push(self.to_coordinator(Payload::Done));
        }
        Ok(out)
    }
}

fn flip_first_bit(mut cov: CovBlock) -> Result<CovBlock, RuntimeError> {
    let mut values = cov.block.values().to_vec();
    if let Some(v) = values.first_mut() {
        *v = f64::from_bits(v.to_bits() ^ 1);
    }
    cov.block = DenseMatrix::new(cov.block.rows(), cov.block.cols(), values, None)?;
    Ok(cov)
}

/// Gathers covariance blocks keyed by site pair, so arrival order never
/// affects the result.
pub(crate) struct Coordinator {
    sites: usize,
    blocks: BTreeMap<(SiteId, SiteId), CovBlock>,
    done: BTreeSet<SiteId>,
    pub cov_messages: usize,
    pub done_messages: usize,
}

impl Coordinator {
    pub fn new(sites: usize) -> Self {
        Self { sites, blocks: BTreeMap::new(), done: BTreeSet::new(), cov_messages: 0, done_messages: 0 }
    }

    pub fn expected_blocks(&self) -> usize {
        self.sites + self.sites * (self.sites - 1) / 2
    }

    pub fn is_complete(&self) -> bool {
        self.blocks.len() == self.expected_blocks() && self.done.len() == self.sites
    }

    pub fn handle(&mut self, msg: ProtocolMessage) -> Result<(), RuntimeError> {
        if msg.sender >= self.sites {
            return Err(RuntimeError::Protocol(format!("coordinator got a frame from unknown site {}", msg.sender)));
        }
        match msg.payload {
            Payload::CovBlock(b) => {
                if b.site_b != msg.sender || b.site_a >= self.sites {
                    return Err(RuntimeError::Protocol(format!(
                        "site {} sent the block for pair ({}, {})",
                        msg.sender, b.site_a, b.site_b
                    )));
                }
                let key = (b.site_a, b.site_b);
                if self.blocks.contains_key(&key) || self.blocks.contains_key(&(key.1, key.0)) {
                    return Err(RuntimeError::Protocol(format!("duplicate block for pair {key:?}")));
                }
                self.blocks.insert(key, b);
                self.cov_messages += 1;
            }
            Payload::Done => {
                if !self.done.insert(msg.sender) {
                    return Err(RuntimeError::Protocol(format!("site {} finished twice", msg.sender)));
                }
                self.done_messages += 1;
            }
            Payload::DataBlock(_) => {
                return Err(RuntimeError::Protocol(format!("site {} sent raw data to the coordinator", msg.sender)));
            }
        }
        Ok(())
    }

    pub fn timeout(&self, deadline: std::time::Duration) -> RuntimeError {
        RuntimeError::Timeout {
            deadline,
            received: self.blocks.len(),
            expected: self.expected_blocks(),
            done: self.done.len(),
            sites: self.sites,
        }
    }

    pub fn merge(&self, total_cols: usize) -> Result<GlobalCovariance, RuntimeError> {
        let (locals, crosses): (Vec<CovBlock>, Vec<CovBlock>) =
            self.blocks.values().cloned().partition(CovBlock::is_local);
        Ok(merge_blocks(&locals, &crosses, total_cols)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dcm_core::build_schedule;

    fn block(site: usize, cols: &[usize]) -> ColumnBlock {
        let v: Vec<f64> = (0..3 * cols.len()).map(|i| (i * i) as f64).collect();
        ColumnBlock::new(site, DenseMatrix::new(3, cols.len(), v, None).unwrap(), cols.to_vec()).unwrap()
    }

    #[test]
    fn site_rejects_non_predecessor_data() {
        let s = build_schedule(4);
        // t = 4: site 0 hears only from site 3 and feeds sites 1 and 2
        let mut a = SiteActor::new(block(0, &[0]), &s, 4, None);
        let out = a.start().unwrap();
        assert_eq!(out.len(), 3);
        let msg = ProtocolMessage { sender: 1, receiver: 0, payload: Payload::DataBlock(block(1, &[1])) };
        assert!(matches!(a.handle(msg), Err(RuntimeError::Protocol(_))));
        let msg = ProtocolMessage { sender: 3, receiver: 0, payload: Payload::DataBlock(block(3, &[3])) };
        let out = a.handle(msg.clone()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].payload, Payload::Done);
        assert!(a.is_finished());
        assert!(matches!(a.handle(msg), Err(RuntimeError::Protocol(_))));
    }

    #[test]
    fn site_rejects_mislabelled_block() {
        let s = build_schedule(2);
        let mut a = SiteActor::new(block(1, &[1]), &s, 2, None);
        let msg = ProtocolMessage { sender: 0, receiver: 1, payload: Payload::DataBlock(block(5, &[0])) };
        assert!(matches!(a.handle(msg), Err(RuntimeError::Protocol(_))));
    }

    #[test]
    fn coordinator_rejects_duplicates_and_impostors() {
        let mut c = Coordinator::new(2);
        let local = local_covariance(&block(0, &[0])).unwrap();
        let msg = ProtocolMessage { sender: 0, receiver: 2, payload: Payload::CovBlock(local) };
        c.handle(msg.clone()).unwrap();
        assert!(matches!(c.handle(msg.clone()), Err(RuntimeError::Protocol(_))));
        let mut impostor = msg;
        impostor.sender = 1;
        assert!(matches!(c.handle(impostor), Err(RuntimeError::Protocol(_))));
        let done = ProtocolMessage { sender: 0, receiver: 2, payload: Payload::Done };
        c.handle(done.clone()).unwrap();
        assert!(c.handle(done).is_err());
        assert!(!c.is_complete());
        assert!(matches!(c.merge(2), Err(RuntimeError::Coverage(_))));
    }
}
