mod common;

use maptrix::fixtures::synthetic_country;
use maptrix::geometry::Point;
use maptrix::labeller::{
    assign_ports, partition_bands, route_all, route_leader, verify_crossing_free, GradientSign, LabellingConfig,
    LeaderRoute, Port, Side,
};
use proptest::prelude::*;

/// `n` ports, top first, spread evenly over `[lo, hi]` on a port line far
/// enough right that every site reaches every port.
fn setup(sites: &[Point], k: f64) -> (Vec<Port>, LabellingConfig) {
    let n = sites.len();
    let lo = sites.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let hi = sites.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let spacing = ((hi - lo) / n as f64).max(1.0);
    let right = sites.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let x = right + (hi - lo + spacing * n as f64) / k + 10.0;
    let ports = (0..n)
        .map(|i| Port::new(i, Point::new(x, hi + spacing * 0.5 - spacing * i as f64), Side::Origin))
        .collect();
    (
        ports,
        LabellingConfig {
            k,
            port_spacing: spacing,
            port_line_x: x,
        },
    )
}

fn labelled(sites: &[Point], k: f64) -> Vec<LeaderRoute> {
    let (ports, config) = setup(sites, k);
    let assignment = assign_ports(sites, &ports, &config).expect("assignment");
    route_all(sites, &ports, &assignment.port_of, &config).expect("routes")
}

fn distinct_sites(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((0.0..300.0f64, 0.0..300.0f64), n).prop_filter_map("distinct sites", |raw| {
        let mut pts: Vec<Point> = raw.into_iter().map(|(x, y)| Point::new(x, y)).collect();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup();
        (pts.len() >= 2).then_some(pts)
    })
}

#[test]
fn au_anchors_are_crossing_free_by_oracle() {
    let ds = synthetic_country(8, 0).unwrap();
    let sites: Vec<Point> = ds.origins().iter().map(|r| r.anchor()).collect();
    let routes = labelled(&sites, 1.0);
    assert_eq!(routes.len(), 8);
    assert!(common::crossing_pairs(&routes).is_empty());
    assert!(verify_crossing_free(&routes).is_empty());
}

#[test]
fn constructed_x_crossing_is_reported_once() {
    let config = LabellingConfig {
        k: 1.0,
        port_spacing: 4.0,
        port_line_x: 10.0,
    };
    let a = route_leader(Point::new(0.0, 0.0), Port::new(1, Point::new(10.0, 5.0), Side::Origin), &config).unwrap();
    let b = route_leader(Point::new(0.0, 4.0), Port::new(0, Point::new(10.0, 1.0), Side::Origin), &config).unwrap();
    assert_eq!(common::crossing_pairs(&[a, b]), vec![(0, 1)]);
    assert_eq!(verify_crossing_free(&[a, b]), vec![(0, 1)]);
}

#[test]
fn separating_line_is_the_midpoint() {
    let config = LabellingConfig {
        k: 1.0,
        port_spacing: 10.0,
        port_line_x: 100.0,
    };
    // Upper band rises to its port (down is false), lower band falls.
    let up = route_leader(Point::new(0.0, 20.0), Port::new(0, Point::new(100.0, 40.0), Side::Origin), &config).unwrap();
    let down = route_leader(Point::new(0.0, 10.0), Port::new(1, Point::new(100.0, 0.0), Side::Origin), &config).unwrap();
    let bands = partition_bands(&[up, down]);
    assert_eq!(bands.bands.len(), 2);
    assert_eq!(bands.lines.len(), 1);
    assert_eq!(bands.lines[0].y, 15.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn assignment_is_crossing_free(sites in distinct_sites(2..52), k in prop::sample::select(vec![0.5, 1.0, 2.0])) {
        let routes = labelled(&sites, k);
        prop_assert_eq!(common::crossing_pairs(&routes), vec![]);
        // Each port used once.
        let mut ports: Vec<usize> = routes.iter().map(|r| r.port.index).collect();
        ports.sort_unstable();
        prop_assert_eq!(ports, (0..sites.len()).collect::<Vec<_>>());
    }

    #[test]
    fn routes_have_exact_shape(sites in distinct_sites(2..20)) {
        for r in labelled(&sites, 1.0) {
            prop_assert_eq!(r.bend.y, r.port.position.y);
            if r.bend != r.site {
                let slope = (r.bend.y - r.site.y) / (r.bend.x - r.site.x);
                let expect = match r.gradient_sign { GradientSign::Up => 1.0, GradientSign::Down => -1.0 };
                prop_assert!((slope - expect).abs() <= 1e-9, "slope {}", slope);
            }
            prop_assert!(r.site.x <= r.bend.x && r.bend.x <= r.port.position.x);
        }
    }
}

// Within a band, port order need not follow site y: here both leaders rise,
// and the only crossing-free matching sends the lower, further-left site to
// the higher port.
#[test]
fn band_order_can_invert_site_order() {
    let config = LabellingConfig {
        k: 1.0,
        port_spacing: 10.0,
        port_line_x: 200.0,
    };
    let sites = [Point::new(0.0, 0.0), Point::new(50.0, 40.0)];
    let ports = [
        Port::new(0, Point::new(200.0, 100.0), Side::Origin),
        Port::new(1, Point::new(200.0, 90.0), Side::Origin),
    ];
    let sorted = route_all(&sites, &ports, &[1, 0], &config).unwrap();
    assert_eq!(common::crossing_pairs(&sorted), vec![(0, 1)]);

    let assignment = assign_ports(&sites, &ports, &config).unwrap();
    assert_eq!(assignment.port_of, vec![0, 1]);
    let routes = route_all(&sites, &ports, &assignment.port_of, &config).unwrap();
    assert!(common::crossing_pairs(&routes).is_empty());
    let bands = partition_bands(&routes);
    assert_eq!(bands.bands.len(), 1);
}
