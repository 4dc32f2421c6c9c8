use proptest::prelude::*;
use radar_marl::topology::{kappa_neighborhood, CommGraph, CoverageFunction, Point};

fn positions() -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..12)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point::new(x, y)).collect::<Vec<_>>())
        .prop_filter("distinct positions", |ps: &Vec<Point>| {
            ps.iter().enumerate().all(|(i, p)| ps[..i].iter().all(|q| p.distance(q) > 1e-6))
        })
}

/// Hop distances by Floyd-Warshall on the radius graph.
fn hops(ps: &[Point], radius: f64) -> Vec<Vec<usize>> {
    let n = ps.len();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                d[i][j] = 0;
            } else if ps[i].distance(&ps[j]) <= radius {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn neighborhoods_match_hop_distance(ps in positions(), radius in 0.5f64..5.0, kappa in 1usize..5) {
        let g = CommGraph::build(&ps, radius, kappa).unwrap();
        let d = hops(&ps, radius);
        for i in 0..ps.len() {
            let expected: Vec<usize> = (0..ps.len()).filter(|&j| d[i][j] <= kappa).collect();
            prop_assert_eq!(g.neighborhood(i), expected.as_slice());
            let bfs: Vec<usize> = kappa_neighborhood(&g, i, kappa).unwrap().into_iter().collect();
            prop_assert_eq!(&bfs, &expected);
        }
    }

    #[test]
    fn neighborhoods_are_symmetric_and_partition(ps in positions(), radius in 0.5f64..5.0, kappa in 1usize..5) {
        let g = CommGraph::build(&ps, radius, kappa).unwrap();
        let n = ps.len();
        for i in 0..n {
            prop_assert!(g.contains(i, i));
            prop_assert_eq!(g.neighborhood(i).len() + g.complement(i).len(), n);
            for j in 0..n {
                prop_assert_eq!(g.contains(i, j), g.contains(j, i));
                prop_assert_eq!(g.contains(i, j), !g.complement(i).contains(&j));
            }
        }
    }

    #[test]
    fn larger_kappa_never_shrinks_neighborhoods(ps in positions(), radius in 0.5f64..5.0, kappa in 1usize..5) {
        let small = CommGraph::build(&ps, radius, kappa).unwrap();
        let large = small.with_kappa(kappa + 1).unwrap();
        for i in 0..ps.len() {
            prop_assert!(small.neighborhood(i).iter().all(|j| large.contains(i, *j)));
        }
        let g = CoverageFunction::linear(radius.max(1.0));
        prop_assert!(g.lower_bound(kappa + 1).unwrap() > g.lower_bound(kappa).unwrap());
    }
}
