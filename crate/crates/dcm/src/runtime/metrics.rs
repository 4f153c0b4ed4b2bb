use std::time::Duration;

use dcm_core::SiteId;
use serde::{Deserialize, Serialize};

pub(crate) fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiteMetrics {
    pub site: SiteId,
    pub local_ms: f64,
    /// Sum over all received predecessor blocks.
    pub cross_ms: f64,
}

/// One raw-data transfer `from -> to`. `bytes` is the full encoded frame;
/// `transfer_ms` covers encoding, sending and decoding it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub from: SiteId,
    pub to: SiteId,
    pub bytes: u64,
    pub transfer_ms: f64,
}

/// Wall-clock measurements of one run, in milliseconds.
///
/// A centralized run fills only `compute_ms`, `eigen_ms` and
/// `end_to_end_ms`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub sites: Vec<SiteMetrics>,
    pub edges: Vec<EdgeMetrics>,
    pub compute_ms: f64,
    pub merge_ms: f64,
    pub eigen_ms: f64,
    pub end_to_end_ms: f64,
    pub data_messages: usize,
    pub cov_messages: usize,
    pub done_messages: usize,
}

impl RunMetrics {
    /// Covariance time with every site on its own machine: the slowest local
    /// block plus the slowest site's cross work and incoming transfers.
    /// Zero for centralized runs, which report `compute_ms` instead.
    pub fn critical_path_ms(&self) -> f64 {
        let local = self.sites.iter().map(|s| s.local_ms).fold(0.0, f64::max);
        let cross = self
            .sites
            .iter()
            .map(|s| {
                let incoming: f64 = self.edges.iter().filter(|e| e.to == s.site).map(|e| e.transfer_ms).sum();
                s.cross_ms + incoming
            })
            .fold(0.0, f64::max);
        local + cross
    }

    /// Covariance time as comparable between modes: the critical path for a
    /// distributed run, the single computation for a centralized one.
    pub fn covariance_ms(&self) -> f64 {
        if self.sites.is_empty() {
            self.compute_ms
        } else {
            self.critical_path_ms()
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.edges.iter().map(|e| e.bytes).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_path() {
        let m = RunMetrics {
            sites: vec![
                SiteMetrics { site: 0, local_ms: 5.0, cross_ms: 1.0 },
                SiteMetrics { site: 1, local_ms: 2.0, cross_ms: 3.0 },
            ],
            edges: vec![EdgeMetrics { from: 0, to: 1, bytes: 10, transfer_ms: 4.0 }],
            ..RunMetrics::default()
        };
        assert_eq!(m.critical_path_ms(), 5.0 + 7.0);
        assert_eq!(m.covariance_ms(), 12.0);
        assert_eq!(m.total_bytes(), 10);
        let c = RunMetrics { compute_ms: 9.0, ..RunMetrics::default() };
        assert_eq!(c.covariance_ms(), 9.0);
    }
}
