use airgrid::adsb::OccupancyTable;
use airgrid::coarse::{node_cost, plan_coarse, SspParams};
use airgrid::geometry::{CuboidObstacle, ObstacleKind, Point3};
use airgrid::replan::{detect_conflicts, repair, RepairParams};
use airgrid::sampling::{birrt_plan, resample_arc_length, rrt_plan, FreeSpace, RrtParams, Waypath};
use airgrid::{Aabb, AirspaceGrid, SubAirspaceId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dense_clear(path: &[Point3], obstacles: &[CuboidObstacle]) -> bool {
    path.windows(2).all(|w| {
        let n = (w[0].distance(&w[1]) / 0.1).ceil().max(1.0) as usize;
        (0..=n).all(|i| {
            let t = i as f64 / n as f64;
            let p = Point3::new(
                w[0].x + (w[1].x - w[0].x) * t,
                w[0].y + (w[1].y - w[0].y) * t,
                w[0].z + (w[1].z - w[0].z) * t,
            );
            obstacles.iter().all(|o| {
                let a = o.anchor;
                !(a.x <= p.x && p.x <= a.x + o.len_x && a.y <= p.y && p.y <= a.y + o.len_y && a.z <= p.z && p.z <= a.z + o.len_z)
            })
        })
    })
}

fn pillars() -> impl Strategy<Value = Vec<CuboidObstacle>> {
    prop::collection::vec((40.0..140.0f64, 10.0..170.0f64, 5.0..25.0f64, 5.0..25.0f64), 0..4).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (x, y, w, d))| CuboidObstacle::new(i as u32, ObstacleKind::Static, Point3::new(x, y, 0.0), [w, d, 40.0]))
            .collect()
    })
}

fn bounds() -> Aabb {
    Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(200.0, 200.0, 50.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coarse_route_is_connected_and_no_dearer_than_axis_order_route(
        counts in prop::collection::vec(0u32..6, 36),
        s in 0usize..36,
        g in 0usize..36,
    ) {
        let grid = AirspaceGrid::new([40.0, 30.0, 30.0], [4, 3, 3], Vec::new()).unwrap();
        let params = SspParams::default();
        let occ = OccupancyTable::from_counts(counts.clone());
        let (start, goal) = (SubAirspaceId(s as u32 + 1), SubAirspaceId(g as u32 + 1));
        let plan = plan_coarse(&grid, &params, &occ, start, goal).unwrap();
        prop_assert!(plan.is_valid(&grid));
        prop_assert_eq!(plan.cells[0], start);
        prop_assert_eq!(*plan.cells.last().unwrap(), goal);
        let cost = |i: usize| node_cost(&params, 0, counts[i]);
        let summed: f64 = plan.cells.iter().map(|c| cost(c.0 as usize - 1)).sum();
        prop_assert!((summed - plan.total_cost).abs() < 1e-9);

        // walk x, then y, then z
        let at = |i: usize| (i % 4, (i / 4) % 3, i / 12);
        let (mut x, mut y, mut z) = at(s);
        let (gx, gy, gz) = at(g);
        let mut walk = cost(s);
        while (x, y, z) != (gx, gy, gz) {
            if x != gx { x = if x < gx { x + 1 } else { x - 1 }; }
            else if y != gy { y = if y < gy { y + 1 } else { y - 1 }; }
            else { z = if z < gz { z + 1 } else { z - 1 }; }
            walk += cost(x + 4 * y + 12 * z);
        }
        prop_assert!(plan.total_cost <= walk + 1e-9);
    }

    #[test]
    fn tree_planners_return_clear_paths(obs in pillars(), seed in 0u64..1000) {
        let space = FreeSpace::new(bounds(), &obs);
        let (start, goal) = (Point3::new(0.0, 100.0, 25.0), Point3::new(200.0, 100.0, 25.0));
        prop_assume!(space.point_free(start) && space.point_free(goal));
        let params = RrtParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Ok(path) = rrt_plan(&space, start, goal, &params, &mut rng) {
            prop_assert_eq!(path[0], start);
            prop_assert_eq!(*path.last().unwrap(), goal);
            prop_assert!(path.windows(2).all(|w| w[0].distance(&w[1]) <= params.step_size + 1e-9));
            prop_assert!(dense_clear(&path, &obs));
        }
        if let Ok(path) = birrt_plan(&space, start, goal, &params, &mut rng) {
            prop_assert_eq!(path[0], start);
            prop_assert_eq!(*path.last().unwrap(), goal);
            prop_assert!(dense_clear(&path, &obs));
        }
    }

    #[test]
    fn resampling_spaces_points_evenly(
        pts in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64, 0.0..50.0f64), 2..8),
        n in 2usize..20,
    ) {
        let path: Vec<Point3> = pts.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
        let total: f64 = path.windows(2).map(|w| w[0].distance(&w[1])).sum();
        prop_assume!(total > 1.0);
        let out = resample_arc_length(&path, n);
        prop_assert_eq!(out.len(), n);
        prop_assert_eq!(out[0], path[0]);
        prop_assert!(out[n - 1].distance(path.last().unwrap()) < 1e-9);
        let chord_sum: f64 = out.windows(2).map(|w| w[0].distance(&w[1])).sum();
        prop_assert!(chord_sum <= total + 1e-6);
    }

    #[test]
    fn repair_only_touches_the_conflict_bracket(side in 2.0..8.0f64, at in 2usize..8, seed in 0u64..1000) {
        let path = Waypath::straight(SubAirspaceId(1), Point3::new(0.0, 100.0, 25.0), Point3::new(180.0, 100.0, 25.0), 10);
        let c = path.waypoints[at];
        let h = side / 2.0;
        let ob = CuboidObstacle::sudden(9, Point3::new(c.x - h, c.y - h, c.z - h), [side, side, side]);
        let (lo, hi) = detect_conflicts(&path.waypoints, &ob, 0.0).bracket().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fixed = repair(&path, &ob, &[], bounds(), &RepairParams::default(), &mut rng).unwrap();
        let w = &path.waypoints;
        let f = &fixed.waypoints;
        prop_assert_eq!(&f[..=lo], &w[..=lo]);
        prop_assert_eq!(&f[f.len() - (w.len() - hi)..], &w[hi..]);
        prop_assert!(dense_clear(f, &[ob]));
    }
}
