use proptest::prelude::*;
use radar_marl::physics::{
    h_direct_path, h_target_path, interference_gap_bound, BoundVariant, ChannelGains, GeometrySnapshot, PairTable,
    PhysicsConstants,
};
use radar_marl::topology::{CommGraph, Point};

#[derive(Debug, Clone)]
struct Instance {
    pc: PhysicsConstants,
    radars: Vec<Point>,
    target: Point,
    powers: Vec<f64>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=6).prop_flat_map(|n| {
        (
            (0.5f64..200.0, 0.5f64..200.0, 0.1f64..5.0, 0.1f64..5.0, 0.1f64..20.0, 0.1f64..10.0),
            prop::collection::vec(0.1f64..5.0, n),
            (0.1f64..5.0, 0.0f64..1.0),
            (-10.0f64..10.0, -10.0f64..10.0),
            prop::collection::vec((1.0f64..15.0, 0.0f64..std::f64::consts::TAU), n),
            prop::collection::vec(0.0f64..1.0, n),
        )
            .prop_map(|((gt, gr, st, sr, lambda, amax), noise, (rcs, cc), (tx, ty), polar, frac)| {
                let target = Point::new(tx, ty);
                let radars = polar.iter().map(|(r, phi)| Point::new(tx + r * phi.cos(), ty + r * phi.sin())).collect();
                Instance {
                    pc: PhysicsConstants {
                        gain_tx: gt,
                        gain_rx: gr,
                        side_gain_tx: st,
                        side_gain_rx: sr,
                        wavelength: lambda,
                        max_power: amax,
                        noise_std: noise,
                        truncated_noise_std: None,
                        rcs: PairTable::Constant(rcs),
                        cross_correlation: PairTable::Constant(cc),
                    },
                    radars,
                    target,
                    powers: frac.iter().map(|f| f * amax).collect(),
                }
            })
            .prop_filter("radars must be distinct", |inst| {
                inst.radars
                    .iter()
                    .enumerate()
                    .all(|(i, p)| inst.radars[..i].iter().all(|q| p.distance(q) > 1e-3))
            })
    })
}

fn gains(inst: &Instance) -> (GeometrySnapshot, ChannelGains) {
    let geo = GeometrySnapshot::new(&inst.radars, inst.target).unwrap();
    let g = ChannelGains::new(&inst.pc, &geo);
    (geo, g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn truncation_never_lowers_sinr(inst in instance(), mask in prop::collection::vec(any::<bool>(), 6)) {
        let (_, g) = gains(&inst);
        let n = inst.radars.len();
        for i in 0..n {
            let hood: Vec<usize> = (0..n).filter(|&j| j == i || mask[j]).collect();
            prop_assert!(g.sinr_truncated(i, &inst.powers, &hood) >= g.sinr(i, &inst.powers));
        }
    }

    #[test]
    fn sinr_is_monotone_in_powers(inst in instance(), bump in 0.0f64..1.0) {
        let (_, g) = gains(&inst);
        let n = inst.radars.len();
        let amax = inst.pc.max_power;
        for i in 0..n {
            let base = g.sinr(i, &inst.powers);
            let mut own = inst.powers.clone();
            own[i] += bump * (amax - own[i]);
            prop_assert!(g.sinr(i, &own) >= base);
            for j in (0..n).filter(|&j| j != i) {
                let mut other = inst.powers.clone();
                other[j] += bump * (amax - other[j]);
                prop_assert!(g.sinr(i, &other) <= base);
            }
        }
    }

    #[test]
    fn channel_gains_scale_with_wavelength_squared(inst in instance()) {
        let (geo, _) = gains(&inst);
        let mut doubled = inst.pc.clone();
        doubled.wavelength *= 2.0;
        let n = inst.radars.len();
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (h_target_path(&inst.pc, &geo, i, j), h_target_path(&doubled, &geo, i, j));
                prop_assert!((b - 4.0 * a).abs() <= 1e-12 * b);
                if i != j {
                    let (a, b) = (h_direct_path(&inst.pc, &geo, i, j).unwrap(), h_direct_path(&doubled, &geo, i, j).unwrap());
                    prop_assert!((b - 4.0 * a).abs() <= 1e-12 * b);
                }
            }
        }
    }

    #[test]
    fn interference_gap_within_bound(inst in instance(), radius in 1.0f64..12.0, kappa in 1usize..3) {
        let (_, g) = gains(&inst);
        let graph = CommGraph::build(&inst.radars, radius, kappa).unwrap();
        for i in 0..inst.radars.len() {
            let comp = graph.complement(i);
            let gap = (g.sinr_truncated(i, &inst.powers, graph.neighborhood(i)) - g.sinr(i, &inst.powers)).abs();
            if comp.is_empty() {
                prop_assert_eq!(gap, 0.0);
                continue;
            }
            let nearest = comp.iter().map(|&j| inst.radars[i].distance(&inst.radars[j])).fold(f64::INFINITY, f64::min);
            let bound = interference_gap_bound(&inst.pc, comp.len(), nearest, BoundVariant::NoiseFloor);
            prop_assert!(gap <= bound * (1.0 + 1e-12), "gap {} bound {}", gap, bound);
        }
    }
}
