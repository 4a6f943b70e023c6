mod common;

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use common::*;
use intentgrid_core::engine::run_actions;
use intentgrid_core::gridworld::{line_of_sight, wrap_angle};
use intentgrid_core::intent::{emission_row, estimate_desires};
use intentgrid_core::pathing::path_orientation;
use intentgrid_core::planner::{build_transition, free_poses};
use intentgrid_core::trace::{read_trace, replay_trace, trace_to_string};
use intentgrid_core::{
    compute_visibility, modified_astar, Action, Cell, DesireFilter, GridMap, Heading, HmmParams, ObservationVector,
    Planner, PlannerParams, Pose, RewardFloor, StepMode, Trace,
};
use proptest::prelude::*;

fn small_map() -> impl Strategy<Value = GridMap> {
    (2usize..=6, 2usize..=6, 1usize..=2, any::<u64>())
        .prop_map(|(w, h, k, seed)| random_map(&mut rng(seed), w, h, 0.25, k))
}

fn map_and_pose() -> impl Strategy<Value = (GridMap, Pose)> {
    (small_map(), any::<u64>()).prop_map(|(map, seed)| {
        let pose = random_pose(&mut rng(seed), &map);
        (map, pose)
    })
}

fn action() -> impl Strategy<Value = Action> {
    (0usize..7).prop_map(|i| ACTIONS[i])
}

fn obs(values: Vec<f64>) -> ObservationVector {
    ObservationVector { state: Pose::new(0, 0, Heading::EAST), action: Action::Stay, values }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn widening_the_cone_never_hides_a_cell((map, pose) in map_and_pose(), a in 0.01f64..PI, b in 0.01f64..PI) {
        let (narrow, wide) = if a <= b { (a, b) } else { (b, a) };
        let n = compute_visibility(&map, &pose, narrow);
        let w = compute_visibility(&map, &pose, wide);
        for (i, (&x, &y)) in n.as_slice().iter().zip(w.as_slice()).enumerate() {
            prop_assert!(!x || y, "cell {i} lost when widening {narrow} -> {wide}");
        }
    }

    #[test]
    fn quarter_turns_rotate_the_visible_set(half in 1usize..=4, h in 0u8..8, turns in 1u8..4) {
        let n = 2 * half + 1;
        let map = GridMap::new(n, n, vec![false; n * n], vec![Cell::new(0, 0)]).unwrap();
        let c = half;
        let pose = Pose::new(c, c, Heading::new(h).unwrap());
        let rotated = Pose::new(c, c, Heading::wrapping(h as i64 + 2 * turns as i64));
        let before = compute_visibility(&map, &pose, PI / 2.0);
        let after = compute_visibility(&map, &rotated, PI / 2.0);
        for cell in map.cells() {
            // Counterclockwise quarter turn about the center with y pointing south.
            let (mut x, mut y) = (cell.x as i64 - c as i64, cell.y as i64 - c as i64);
            for _ in 0..turns {
                (x, y) = (y, -x);
            }
            let image = Cell::new((x + c as i64) as usize, (y + c as i64) as usize);
            prop_assert_eq!(before.is_visible(cell), after.is_visible(image), "{} -> {}", cell, image);
        }
    }

    #[test]
    fn cells_on_a_visible_sight_line_are_visible((map, pose) in map_and_pose()) {
        let vis = compute_visibility(&map, &pose, PI / 2.0);
        for target in vis.visible_cells() {
            for between in centers_on_segment(pose.cell(), target) {
                if intentgrid_core::gridworld::in_cone(&pose, between, PI / 2.0) {
                    prop_assert!(vis.is_visible(between), "{} hidden on the way to {}", between, target);
                }
            }
        }
    }

    #[test]
    fn sight_is_symmetric((map, pose) in map_and_pose(), seed in any::<u64>()) {
        let other = random_free_cell(&mut rng(seed), &map);
        prop_assert_eq!(line_of_sight(&map, pose.cell(), other), line_of_sight(&map, other, pose.cell()));
    }

    #[test]
    fn astar_is_step_optimal_and_deterministic((map, pose) in map_and_pose(), goal in 0usize..2) {
        let goal = map.goals()[goal.min(map.goal_count() - 1)];
        let vis = compute_visibility(&map, &pose, PI / 2.0);
        let first = modified_astar(&map, pose.cell(), goal, &vis);
        let second = modified_astar(&map, pose.cell(), goal, &vis);
        prop_assert_eq!(first.as_ref().map(|p| p.step_count()), bfs_distance(&map, pose.cell(), goal));
        prop_assert_eq!(first, second);
    }

    #[test]
    fn path_orientation_ignores_cell_order((map, pose) in map_and_pose(), seed in any::<u64>()) {
        let goal = map.goals()[0];
        let vis = compute_visibility(&map, &pose, PI / 2.0);
        if let Some(path) = modified_astar(&map, pose.cell(), goal, &vis) {
            let forward = path_orientation(&pose, &path, &vis);
            let mut shuffled = path.clone();
            shuffled.cells.reverse();
            let k = (seed as usize) % shuffled.cells.len().max(1);
            shuffled.cells.rotate_left(k);
            let other = path_orientation(&pose, &shuffled, &vis);
            prop_assert_eq!(forward.visible_count, other.visible_count);
            let d = intentgrid_core::gridworld::angle_diff(forward.theta_goal, other.theta_goal);
            prop_assert!(d < 1e-12, "{} vs {}", forward.theta_goal, other.theta_goal);
        }
    }

    #[test]
    fn wrapped_angles_stay_in_range(theta in -1e6f64..1e6) {
        let w = wrap_angle(theta);
        prop_assert!((0.0..TAU).contains(&w), "{theta} -> {w}");
        let tiny = wrap_angle(-f64::EPSILON * theta.abs().min(1.0));
        prop_assert!((0.0..TAU).contains(&tiny));
    }

    #[test]
    fn transition_rows_sum_to_one((map, pose) in map_and_pose(), a in action(), eps in 0.001f64..0.499) {
        let row = build_transition(&map, &pose, a, eps);
        prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(row.0.iter().all(|p| *p >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn planner_values_and_policies_are_sane(map in small_map(), gamma in 0.5f64..0.97) {
        let params = PlannerParams { gamma, ..PlannerParams::default() };
        let planner = Planner::solve(&map, &params).unwrap();
        let bound = PI / (1.0 - gamma);
        for h in 0..planner.hypothesis_count() {
            let goal = map.goals()[h];
            let tables = &planner.hypotheses()[h];
            for pose in free_poses(&map) {
                // Cut off from the goal the floor −(ε + π) is earned forever, one ε beyond the bound.
                let limit = if bfs_distance(&map, pose.cell(), goal).is_some() { bound } else { (PI + 0.1) / (1.0 - gamma) };
                prop_assert!(tables.values.get(&pose).abs() <= limit + 1e-9, "{}: {}", pose, tables.values.get(&pose));
                let q = planner.action_values(h, &pose);
                let best = q[planner.optimal_action(h, &pose).index()];
                let worst = q[planner.worst_action(h, &pose).index()];
                let stay = q[Action::Stay.index()];
                prop_assert!(best >= stay - 1e-9 && stay >= worst - 1e-9);
                prop_assert!(planner.is_consistent(h, &pose, planner.optimal_action(h, &pose)));
                if pose.cell() != goal {
                    prop_assert!(tables.rewards.get(&pose) < PI);
                }
            }
        }
    }

    #[test]
    fn values_bounded_by_pi_with_pi_floor(map in small_map(), gamma in 0.5f64..0.97) {
        let params = PlannerParams { gamma, reward_floor: RewardFloor::Pi, ..PlannerParams::default() };
        let planner = Planner::solve(&map, &params).unwrap();
        for tables in planner.hypotheses() {
            for pose in free_poses(&map) {
                prop_assert!(tables.values.get(&pose).abs() <= PI / (1.0 - gamma) + 1e-9);
            }
        }
    }

    #[test]
    fn optimal_policy_reaches_goal_on_empty_map(w in 2usize..=6, h in 2usize..=6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let empty = GridMap::new(w, h, vec![false; w * h], vec![Cell::new(0, 0)]).unwrap();
        let goal = random_free_cell(&mut r, &empty);
        let map = GridMap::new(w, h, vec![false; w * h], vec![goal]).unwrap();
        let planner = Planner::solve(&map, &PlannerParams::default()).unwrap();
        let mut pose = random_pose(&mut r, &map);
        let limit = w + h + 8;
        let mut steps = 0;
        while pose.cell() != goal {
            prop_assert!(steps < limit, "no arrival within {} steps", limit);
            let a = planner.optimal_action(0, &pose);
            let realized = build_transition(&map, &pose, a, 0.1).most_likely();
            pose = realized.apply(&map, &pose).unwrap();
            steps += 1;
        }
    }

    #[test]
    fn session_invariants((map, start) in map_and_pose(), actions in prop::collection::vec(action(), 1..25), seed in any::<u64>()) {
        let planner = Arc::new(Planner::solve(&map, &PlannerParams::default()).unwrap());
        for mode in [StepMode::Deterministic, StepMode::Stochastic] {
            let s = run_actions(planner.clone(), HmmParams::default(), start, &actions, mode, seed).unwrap();
            let again = run_actions(planner.clone(), HmmParams::default(), start, &actions, mode, seed).unwrap();
            prop_assert_eq!(s.history(), again.history());
            for r in s.history() {
                prop_assert!((r.estimate.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                for p in &r.estimate[..map.goal_count()] {
                    prop_assert!(*p <= 1.0 - 1e-9);
                }
                prop_assert!(r.observation.iter().all(|o| (0.0..=1.0).contains(o)));
                prop_assert!(build_transition(&map, &r.pose_before, r.intended, 0.1).prob(r.realized) > 0.0);
            }
            let trace = Trace::from_session(&s);
            let text = trace_to_string(&trace);
            let parsed = read_trace(text.as_bytes()).unwrap();
            let replayed = replay_trace(planner.clone(), &parsed).unwrap();
            prop_assert_eq!(trace_to_string(&replayed), text);
        }
    }

    #[test]
    fn optimal_intent_is_marked_consistent((map, start) in map_and_pose()) {
        let planner = Arc::new(Planner::solve(&map, &PlannerParams::default()).unwrap());
        for h in 0..planner.hypothesis_count() {
            let best = planner.optimal_action(h, &start);
            let s = run_actions(planner.clone(), HmmParams::default(), start, &[best], StepMode::Deterministic, 0).unwrap();
            prop_assert!(s.history()[0].consistent[h]);
        }
    }

    #[test]
    fn scaling_emissions_changes_nothing(rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 5), 1..12), scale in 0.001f64..1000.0) {
        let params = HmmParams::default();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        let a = estimate_desires(&params, 3, &rows).unwrap();
        let b = estimate_desires(&params, 3, &scaled).unwrap();
        prop_assert_eq!(&a.best_path, &b.best_path);
        for (x, y) in a.probabilities.iter().flatten().zip(b.probabilities.iter().flatten()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sustained_rational_evidence_wins(target in 0usize..3, others in prop::collection::vec(0.0f64..=0.2, 2), steps in 10usize..30) {
        let params = HmmParams::default();
        let mut values = others.clone();
        values.insert(target, 1.0);
        let mut f = DesireFilter::new(params, 3).unwrap();
        for _ in 0..steps {
            f.push(&emission_row(&obs(values.clone()), 1.0, &params)).unwrap();
        }
        prop_assert!(f.estimate()[target] > 0.8, "{:?}", f.estimate());
    }

    #[test]
    fn sustained_irrational_evidence_climbs(o in prop::collection::vec(0.0f64..=0.3, 3), phi in 0.0f64..=0.3, steps in 2usize..40) {
        let params = HmmParams::default();
        let row = emission_row(&obs(o), phi, &params);
        let mut f = DesireFilter::new(params, 3).unwrap();
        let mut last = 0.0;
        for _ in 0..steps {
            let p = f.push(&row).unwrap()[4];
            prop_assert!(p >= last - 1e-15, "{p} < {last}");
            last = p;
        }
    }
}

/// Pinned value of P(G_1) after ten steps of O = (1, 0.2, 0.2) with φ = 1.
#[test]
fn sustained_rational_golden() {
    let params = HmmParams::default();
    let mut f = DesireFilter::new(params, 3).unwrap();
    for _ in 0..10 {
        f.push(&emission_row(&obs(vec![1.0, 0.2, 0.2]), 1.0, &params)).unwrap();
    }
    println!("{:.17}", f.estimate()[0]);
    assert!((f.estimate()[0] - GOLDEN_RATIONAL).abs() < 1e-12, "{}", f.estimate()[0]);
}

const GOLDEN_RATIONAL: f64 = 0.851103513573948;

#[test]
fn long_runs_do_not_underflow() {
    let params = HmmParams::default();
    let mut f = DesireFilter::new(params, 3).unwrap();
    let rows = [
        emission_row(&obs(vec![1.0, 0.0, 0.1]), 1.0, &params),
        emission_row(&obs(vec![0.0, 0.1, 0.0]), 0.05, &params),
        emission_row(&obs(vec![0.3, 0.9, 0.2]), 0.7, &params),
    ];
    for i in 0..100_000 {
        let est = f.push(&rows[(i / 37) % 3]).unwrap();
        assert!(est.iter().all(|p| p.is_finite() && *p >= 0.0));
        assert!((est.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert_eq!(f.best_path().len(), 100_000);
}
