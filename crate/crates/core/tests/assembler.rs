mod common;

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use maptrix::assembler::{layout, layout_two_country, relayout, LayoutConfig, MapTrixLayout};
use maptrix::document::LayoutDocument;
use maptrix::fixtures::{synthetic_country, synthetic_pair};
use maptrix::flow_model::{FlowDataset, Region, RegionGroup};
use maptrix::geometry::Point;
use maptrix::selection::SelectionState;

fn distance_to_line(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    ((p.x - a.x) * dy - (p.y - a.y) * dx).abs() / (dx * dx + dy * dy).sqrt()
}

fn check_geometry(l: &MapTrixLayout) {
    let g = &l.matrix;
    let (left, top, bottom) = (g.grid_point(0.0, 0.0), g.top(), g.bottom());
    for p in &g.row_ports {
        assert!(distance_to_line(p.edge_point, left, top) <= 1e-6);
        assert!(p.edge_point.y >= left.y - 1e-6 && p.edge_point.y <= top.y + 1e-6);
    }
    for p in &g.col_ports {
        assert!(distance_to_line(p.edge_point, left, bottom) <= 1e-6);
        assert!(p.edge_point.y <= left.y + 1e-6 && p.edge_point.y >= bottom.y - 1e-6);
    }
    for (routes, regions) in [
        (&l.leaders.origin, &l.regions.origin),
        (&l.leaders.destination, &l.regions.destination),
    ] {
        assert!(common::crossing_pairs(routes).is_empty());
        for (r, region) in routes.iter().zip(regions) {
            assert!(common::strictly_inside((r.site.x, r.site.y), &common::ring_of(region)));
        }
    }
}

#[test]
fn same_country_invariants() {
    for (n, seed) in [(8, 0), (16, 1), (34, 2), (51, 3)] {
        let l = layout(Arc::new(synthetic_country(n, seed).unwrap()), &LayoutConfig::default()).unwrap();
        assert_eq!(l.ordering.rows, l.ordering.cols);
        assert_eq!(l.leader_count(), 2 * n);
        assert_eq!(l.cell_colors.len(), n);
        assert!(l.cell_colors.iter().all(|row| row.len() == n));
        check_geometry(&l);
    }
}

#[test]
fn single_region() {
    let l = layout(Arc::new(synthetic_country(1, 0).unwrap()), &LayoutConfig::default()).unwrap();
    assert_eq!((l.matrix.rows, l.matrix.cols), (1, 1));
    assert_eq!(l.leader_count(), 2);
    check_geometry(&l);
}

#[test]
fn layouts_are_deterministic() {
    let ds = Arc::new(synthetic_country(34, 9).unwrap());
    let a = LayoutDocument::new(&layout(ds.clone(), &LayoutConfig::default()).unwrap());
    let b = LayoutDocument::new(&layout(Arc::new((*ds).clone()), &LayoutConfig::default()).unwrap());
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn nz_to_us_scale_two_country() {
    let l = layout_two_country(Arc::new(synthetic_pair(16, 51, 5).unwrap()), &LayoutConfig::default()).unwrap();
    assert_eq!(l.leaders.origin.len(), 16);
    assert_eq!(l.leaders.destination.len(), 51);
    assert_eq!(l.cell_colors.len() * l.cell_colors[0].len(), 16 * 51);
    check_geometry(&l);
}

#[test]
fn same_dataset_both_sides_in_two_country_mode() {
    let l = layout_two_country(Arc::new(synthetic_country(16, 2).unwrap()), &LayoutConfig::default()).unwrap();
    assert_eq!(l.leader_count(), 32);
    check_geometry(&l);
}

#[test]
fn mismatched_sides_are_a_mode_error() {
    let err = layout(Arc::new(synthetic_pair(4, 5, 0).unwrap()), &LayoutConfig::default()).unwrap_err();
    assert_eq!(err.code(), "ModeError");
}

#[test]
fn empty_destination_set_is_rejected() {
    let ds = synthetic_country(4, 0).unwrap();
    let err = FlowDataset::new(ds.origins().to_vec(), vec![], vec![vec![]; 4]).unwrap_err();
    assert_eq!(err.code(), "ValidationError");
}

#[test]
fn empty_selection_is_identity() {
    let l = layout(Arc::new(synthetic_country(16, 3).unwrap()), &LayoutConfig::default()).unwrap();
    let again = relayout(&l, &SelectionState::default()).unwrap();
    assert_eq!(LayoutDocument::new(&l), LayoutDocument::new(&again));
}

#[test]
fn full_range_relayout_is_idempotent() {
    let l = layout(Arc::new(synthetic_country(34, 4).unwrap()), &LayoutConfig::default()).unwrap();
    let full = SelectionState {
        range: Some((0.0, l.dataset.max_flow())),
        ..Default::default()
    };
    let once = relayout(&l, &full).unwrap();
    let twice = relayout(&once, &full).unwrap();
    assert_eq!(LayoutDocument::new(&once), LayoutDocument::new(&twice));
    assert_eq!(LayoutDocument::new(&once), LayoutDocument::new(&l));
}

/// Regions that keep at least one in- or out-flow within the range.
fn survivors(ds: &FlowDataset, lo: f64, hi: f64) -> usize {
    (0..ds.m())
        .filter(|&i| (0..ds.n()).any(|j| (lo..=hi).contains(&ds.flow(i, j)) && ds.flow(i, j) > 0.0 || (lo..=hi).contains(&ds.flow(j, i)) && ds.flow(j, i) > 0.0))
        .count()
}

#[test]
fn range_filter_to_eleven_of_fifty_one() {
    // First seed with a lower threshold that keeps exactly 11 regions.
    let (ds, lo, hi) = (0..50)
        .find_map(|seed| {
            let ds = synthetic_country(51, seed).unwrap();
            let hi = ds.max_flow();
            let mut values: Vec<f64> = ds.flows().into_iter().flatten().filter(|&f| f > 0.0).collect();
            values.sort_by(|a, b| b.total_cmp(a));
            let lo = values.iter().copied().find(|&lo| survivors(&ds, lo, hi) >= 11)?;
            (survivors(&ds, lo, hi) == 11).then_some((ds, lo, hi))
        })
        .expect("a seed where 40 regions drop out");
    let expected = survivors(&ds, lo, hi);
    let l = layout(Arc::new(ds), &LayoutConfig::default()).unwrap();
    let filtered = relayout(
        &l,
        &SelectionState {
            range: Some((lo, hi)),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(filtered.leaders.origin.len(), expected);
    assert_eq!(filtered.leaders.destination.len(), expected);
    assert_eq!(filtered.ordering.rows, filtered.ordering.cols);
    check_geometry(&filtered);
    // Rectangles grown for the full layout were reused.
    assert!(filtered.rect_cache().len() >= 51);
}

/// Regions sharing an edge (two or more vertices) with each other.
fn adjacent(a: &Region, b: &Region) -> bool {
    let shared = a
        .boundary()
        .vertices()
        .iter()
        .filter(|p| b.boundary().vertices().contains(p))
        .count();
    shared >= 2
}

/// `size` connected regions found breadth-first from `start`, avoiding `taken`.
fn connected_group(regions: &[Region], start: usize, size: usize, taken: &BTreeSet<usize>) -> Vec<usize> {
    let mut out = vec![start];
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        for j in 0..regions.len() {
            if out.len() == size {
                return out;
            }
            if !out.contains(&j) && !taken.contains(&j) && adjacent(&regions[i], &regions[j]) {
                out.push(j);
                queue.push_back(j);
            }
        }
    }
    out
}

#[test]
fn two_groups_over_us_scale() {
    let ds = synthetic_country(51, 7).unwrap();
    let regions = ds.origins();
    let a = connected_group(regions, 0, 5, &BTreeSet::new());
    let taken: BTreeSet<usize> = a.iter().copied().collect();
    let b = connected_group(regions, 50, 4, &taken);
    assert_eq!((a.len(), b.len()), (5, 4));
    let ids = |g: &[usize]| g.iter().map(|&i| regions[i].id().to_string()).collect::<Vec<_>>();
    let selection = SelectionState {
        groups: vec![RegionGroup::new("A", ids(&a)), RegionGroup::new("B", ids(&b))],
        ..Default::default()
    };
    let l = layout(Arc::new(ds.clone()), &LayoutConfig::default()).unwrap();
    let grouped = relayout(&l, &selection).unwrap();
    assert_eq!(grouped.dataset.m(), 51 - 9 + 2);
    assert_eq!(grouped.leader_count(), 2 * 44);
    assert!((grouped.dataset.grand_total() - ds.grand_total()).abs() <= 1e-9 * ds.grand_total());
    check_geometry(&grouped);
}

#[test]
fn steep_gradient_reports_min_k() {
    let config = LayoutConfig {
        k: 0.1,
        gutter: Some(0.01),
        ..Default::default()
    };
    let err = layout(Arc::new(synthetic_country(8, 0).unwrap()), &config).unwrap_err();
    assert_eq!(err.code(), "SteepLeaderError");
}
