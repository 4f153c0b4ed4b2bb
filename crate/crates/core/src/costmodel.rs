//! Analytical cost model counting column-pair covariance evaluations.
//!
//! Centralized: every unordered pair of the `m` columns, `m(m-1)/2`.
//! Distributed: the slowest site's local pairs plus the slowest site's
//! cross pairs and shipped columns, `sum over predecessors i of m_k*m_i + m_i`.

use alloc::vec::Vec;

use thiserror::Error;

use crate::schedule::{build_schedule, Schedule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("{widths} widths given for a schedule over {sites} sites")]
    WidthMismatch { widths: usize, sites: usize },
    #[error("site {0} has zero width")]
    EmptySite(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostReport {
    pub widths: Vec<u64>,
    pub t_c: u64,
    pub t_l_per_site: Vec<u64>,
    pub t_l: u64,
    pub t_cr_cm_per_site: Vec<u64>,
    pub t_cr_cm: u64,
    pub t_d: u64,
    pub speedup: f64,
}

pub fn centralized_cost(m: u64) -> u64 {
    m * m.saturating_sub(1) / 2
}

pub fn distributed_cost(widths: &[usize], schedule: &Schedule) -> Result<CostReport, CostError> {
    if widths.len() != schedule.sites() {
        return Err(CostError::WidthMismatch { widths: widths.len(), sites: schedule.sites() });
    }
    if let Some(site) = widths.iter().position(|&w| w == 0) {
        return Err(CostError::EmptySite(site));
    }
    let widths: Vec<u64> = widths.iter().map(|&w| w as u64).collect();
    let t_l_per_site: Vec<u64> = widths.iter().map(|&w| centralized_cost(w)).collect();
    let t_cr_cm_per_site: Vec<u64> = (0..widths.len())
        .map(|k| schedule.predecessors(k).iter().map(|&i| widths[k] * widths[i] + widths[i]).sum())
        .collect();
    let t_l = t_l_per_site.iter().copied().max().unwrap_or(0);
    let t_cr_cm = t_cr_cm_per_site.iter().copied().max().unwrap_or(0);
    let t_d = t_l + t_cr_cm;
    let t_c = centralized_cost(widths.iter().sum());
    let speedup = if t_d == 0 { 1.0 } else { t_c as f64 / t_d as f64 };
    Ok(CostReport { widths, t_c, t_l_per_site, t_l, t_cr_cm_per_site, t_cr_cm, t_d, speedup })
}

/// Modeled speedup for `t` sites of `gamma` columns each under the ring schedule.
pub fn speedup_lower_bound(t: usize, gamma: usize) -> f64 {
    let widths = alloc::vec![gamma; t];
    distributed_cost(&widths, &build_schedule(t)).map(|r| r.speedup).unwrap_or(1.0)
}
