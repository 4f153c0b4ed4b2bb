//! Ring predecessor schedule deciding which sites ship their raw columns to
//! which other sites.
//!
//! With `t = 2r` sites, sites `0..r` receive from their `r - 1` nearest
//! predecessors and sites `r..t` from their `r` nearest predecessors. With
//! `t = 2r + 1`, every site receives from its `r` nearest predecessors. Each
//! unordered pair of sites is then joined by exactly one transfer.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::covariance::SiteId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("site {site} out of range for {sites} sites")]
    IndexOutOfRange { site: SiteId, sites: usize },
}

/// Previous site on the ring: `t - 1` for site 0, otherwise `k - 1`.
pub fn predecessor(k: SiteId, t: usize) -> Result<SiteId, ScheduleError> {
    if t < 2 || k >= t {
        return Err(ScheduleError::IndexOutOfRange { site: k, sites: t });
    }
    Ok(if k == 0 { t - 1 } else { k - 1 })
}

/// Per-site predecessor lists, nearest predecessor first.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Schedule {
    t: usize,
    r: usize,
    predecessors: Vec<Vec<SiteId>>,
}

impl Schedule {
    /// Builds a schedule from explicit lists without checking coverage; pair
    /// it with [`validate_schedule`].
    pub fn from_lists(predecessors: Vec<Vec<SiteId>>) -> Self {
        let t = predecessors.len();
        Self { t, r: t / 2, predecessors }
    }

    pub fn sites(&self) -> usize {
        self.t
    }

    /// Half the site count, rounded down.
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn predecessors(&self, site: SiteId) -> &[SiteId] {
        &self.predecessors[site]
    }

    pub fn lists(&self) -> &[Vec<SiteId>] {
        &self.predecessors
    }

    /// Sites that list `site` as a predecessor, i.e. where its data is sent.
    pub fn successors(&self, site: SiteId) -> Vec<SiteId> {
        (0..self.t).filter(|&k| self.predecessors[k].contains(&site)).collect()
    }

    /// Total number of raw-data transfers.
    pub fn transfer_count(&self) -> usize {
        self.predecessors.iter().map(Vec::len).sum()
    }
}

pub fn build_schedule(t: usize) -> Schedule {
    let r = t / 2;
    let mut predecessors = vec![Vec::new(); t];
    if t >= 2 {
        for (k, list) in predecessors.iter_mut().enumerate() {
            let count = if t.is_multiple_of(2) && k < r { r - 1 } else { r };
            let mut p = k;
            for _ in 0..count {
                p = predecessor(p, t).expect("site index below t");
                list.push(p);
            }
        }
    }
    Schedule { t, r, predecessors }
}

/// Outcome of checking a schedule against exact-once pair coverage.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoverageReport {
    pub sites: usize,
    pub pairs_expected: usize,
    pub pairs_covered: usize,
    pub duplicates: Vec<(SiteId, SiteId)>,
    pub gaps: Vec<(SiteId, SiteId)>,
    /// Entries naming the receiving site itself or a site outside `0..t`.
    pub invalid_entries: Vec<(SiteId, SiteId)>,
    pub max_list_len: usize,
    pub r: usize,
    pub valid: bool,
}

pub fn validate_schedule(s: &Schedule) -> CoverageReport {
    let t = s.t;
    let mut hits = vec![0usize; t * t];
    let mut duplicates = Vec::new();
    let mut invalid_entries = Vec::new();
    for (k, list) in s.predecessors.iter().enumerate() {
        for &p in list {
            if p == k || p >= t {
                invalid_entries.push((p, k));
                continue;
            }
            let (lo, hi) = (p.min(k), p.max(k));
            hits[lo * t + hi] += 1;
            if hits[lo * t + hi] == 2 {
                duplicates.push((lo, hi));
            }
        }
    }
    let mut gaps = Vec::new();
    let mut pairs_covered = 0;
    for lo in 0..t {
        for hi in lo + 1..t {
            if hits[lo * t + hi] == 0 {
                gaps.push((lo, hi));
            } else {
                pairs_covered += 1;
            }
        }
    }
    let max_list_len = s.predecessors.iter().map(Vec::len).max().unwrap_or(0);
    let r = t / 2;
    let valid = duplicates.is_empty() && gaps.is_empty() && invalid_entries.is_empty() && max_list_len <= r;
    CoverageReport {
        sites: t,
        pairs_expected: t * t.saturating_sub(1) / 2,
        pairs_covered,
        duplicates,
        gaps,
        invalid_entries,
        max_list_len,
        r,
        valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_predecessor() {
        assert_eq!(predecessor(0, 6), Ok(5));
        assert_eq!(predecessor(3, 6), Ok(2));
        assert_eq!(predecessor(1, 2), Ok(0));
        assert!(predecessor(6, 6).is_err());
        assert!(predecessor(0, 1).is_err());
    }

    #[test]
    fn five_sites() {
        let s = build_schedule(5);
        assert_eq!(s.lists(), &[vec![4, 3], vec![0, 4], vec![1, 0], vec![2, 1], vec![3, 2]]);
        assert_eq!(s.r(), 2);
    }

    #[test]
    fn four_sites_follow_even_branch() {
        let s = build_schedule(4);
        assert_eq!(s.lists(), &[vec![3], vec![0], vec![1, 0], vec![2, 1]]);
        assert!(validate_schedule(&s).valid);
    }

    #[test]
    fn small_cases() {
        assert_eq!(build_schedule(2).lists(), &[vec![], vec![0]]);
        let one = build_schedule(1);
        assert_eq!(one.lists(), &[Vec::<usize>::new()]);
        assert!(validate_schedule(&one).valid);
        assert_eq!(build_schedule(2).successors(0), vec![1]);
    }

    #[test]
    fn six_sites_report() {
        let rep = validate_schedule(&build_schedule(6));
        assert!(rep.valid);
        assert_eq!(rep.pairs_covered, 15);
        assert_eq!(rep.max_list_len, 3);
    }

    #[test]
    fn emptied_list_leaves_gaps() {
        let mut lists = build_schedule(5).lists().to_vec();
        lists[1].clear();
        let rep = validate_schedule(&Schedule::from_lists(lists));
        assert!(!rep.valid);
        assert_eq!(rep.gaps, vec![(0, 1), (1, 4)]);
    }

    #[test]
    fn duplicated_pair_reported() {
        let mut lists = build_schedule(4).lists().to_vec();
        lists[0].push(1); // pair (0, 1) already comes from site 1's list
        let rep = validate_schedule(&Schedule::from_lists(lists));
        assert!(!rep.valid);
        assert_eq!(rep.duplicates, vec![(0, 1)]);
    }

    #[test]
    fn self_and_out_of_range_entries() {
        let rep = validate_schedule(&Schedule::from_lists(vec![vec![0], vec![7]]));
        assert!(!rep.valid);
        assert_eq!(rep.invalid_entries, vec![(0, 0), (7, 1)]);
    }
}
