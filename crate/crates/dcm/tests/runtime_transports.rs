use std::collections::BTreeSet;
use std::time::Duration;

use dcm::ingest::{partition_vertical, synthetic_matrix, PartitionSpec};
use dcm::runtime::{run_centralized, run_distributed, Fault, RunConfig, RuntimeError, Transport};
use dcm_core::{build_schedule, centralized_covariance, ColumnBlock, DenseMatrix};

/// {x, y} | {z, w} | {v}, six rows of small integers.
fn three_site_fixture() -> (DenseMatrix, Vec<ColumnBlock>) {
    let cols = [
        [1.0, 3.0, 2.0, 5.0, 4.0, 6.0],
        [2.0, 1.0, 4.0, 3.0, 6.0, 5.0],
        [7.0, 5.0, 6.0, 2.0, 3.0, 1.0],
        [0.0, 2.0, 1.0, 1.0, 3.0, 2.0],
        [4.0, 4.0, 5.0, 3.0, 6.0, 2.0],
    ];
    let values: Vec<f64> = (0..6).flat_map(|r| cols.iter().map(move |c| c[r])).collect();
    let m = DenseMatrix::new(6, 5, values, None).unwrap();
    let blocks = partition_vertical(&m, &PartitionSpec::from_widths(&[2, 2, 1], None)).unwrap();
    (m, blocks)
}

#[test]
fn fixture_over_both_transports() {
    let (m, blocks) = three_site_fixture();
    let oracle = centralized_covariance(&m).unwrap();
    let schedule = build_schedule(3);
    for transport in [Transport::InProcess, Transport::Tcp] {
        let out = run_distributed(&blocks, &schedule, &RunConfig::with_transport(transport)).unwrap();
        assert!(out.covariance.bit_eq(&oracle), "{transport:?}");
        assert_eq!(out.metrics.data_messages, 3);
        assert_eq!(out.metrics.cov_messages, 6);
        assert_eq!(out.metrics.done_messages, 3);
        assert_eq!(out.metrics.sites.len(), 3);
    }
}

#[test]
fn random_four_site_case_matches_across_transports() {
    let m = synthetic_matrix(200, 30, 4);
    let blocks = partition_vertical(&m, &PartitionSpec::from_widths(&[7, 11, 4, 8], None)).unwrap();
    let schedule = build_schedule(4);
    let a = run_distributed(&blocks, &schedule, &RunConfig::with_transport(Transport::InProcess)).unwrap();
    let b = run_distributed(&blocks, &schedule, &RunConfig::with_transport(Transport::Tcp)).unwrap();
    assert!(a.covariance.bit_eq(&b.covariance));
    assert!(a.covariance.bit_eq(&run_centralized(&blocks).unwrap().covariance));
    assert_eq!(a.eigen.eigenvalues, b.eigen.eigenvalues);

    // Both transports report the same edges with the same frame sizes.
    let edges = |o: &dcm::runtime::RunOutput| -> Vec<(usize, usize, u64)> {
        o.metrics.edges.iter().map(|e| (e.from, e.to, e.bytes)).collect()
    };
    assert_eq!(edges(&a), edges(&b));
}

#[test]
fn data_only_flows_from_predecessors() {
    for t in 1..=7 {
        let m = synthetic_matrix(12, 2 * t + 1, t as u64);
        let spec = PartitionSpec::equal(m.cols(), t).unwrap();
        let blocks = partition_vertical(&m, &spec).unwrap();
        let schedule = build_schedule(t);
        let out = run_distributed(&blocks, &schedule, &RunConfig::default()).unwrap();
        let seen: BTreeSet<(usize, usize)> = out.metrics.edges.iter().map(|e| (e.from, e.to)).collect();
        let expected: BTreeSet<(usize, usize)> =
            (0..t).flat_map(|k| schedule.predecessors(k).iter().map(move |&p| (p, k))).collect();
        assert_eq!(seen, expected, "t = {t}");
        assert_eq!(out.metrics.data_messages, t * (t - 1) / 2);
        assert_eq!(out.metrics.cov_messages, t + t * (t - 1) / 2);
        // frame size: header, site/rows/cols, indices, values
        for e in &out.metrics.edges {
            let w = blocks[e.from].width() as u64;
            assert_eq!(e.bytes, 21 + 12 + 4 * w + 8 * 12 * w);
        }
    }
}

#[test]
fn listed_non_contiguous_columns() {
    let m = synthetic_matrix(20, 6, 9);
    let spec = PartitionSpec::from_json(
        r#"{"total_cols": 6, "groups": [
            {"site": 0, "cols": [5, 0]},
            {"site": 1, "cols": [1, 3]},
            {"site": 2, "cols": [4, 2]}]}"#,
    )
    .unwrap();
    let blocks = partition_vertical(&m, &spec).unwrap();
    let out = run_distributed(&blocks, &build_schedule(3), &RunConfig::default()).unwrap();
    assert!(out.covariance.bit_eq(&centralized_covariance(&m).unwrap()));
    assert!(run_centralized(&blocks).unwrap().covariance.bit_eq(&out.covariance));
}

#[test]
fn silent_site_times_out_over_tcp() {
    let (_, blocks) = three_site_fixture();
    let config =
        RunConfig { transport: Transport::Tcp, deadline: Duration::from_millis(300), fault: Some(Fault::SilentSite) };
    let err = run_distributed(&blocks, &build_schedule(3), &config).unwrap_err();
    assert!(matches!(err, RuntimeError::Timeout { expected: 6, .. }), "{err}");
}

#[test]
fn corrupted_block_is_visible_over_tcp() {
    let (m, blocks) = three_site_fixture();
    let config = RunConfig { transport: Transport::Tcp, fault: Some(Fault::CorruptCrossBlock), ..RunConfig::default() };
    let out = run_distributed(&blocks, &build_schedule(3), &config).unwrap();
    assert!(!out.covariance.bit_eq(&centralized_covariance(&m).unwrap()));
}
