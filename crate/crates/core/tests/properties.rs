use std::sync::Arc;

use multion_core::agents::{local_policy_step, run_episode, step_with_reward, GoalDriver, RandomAgent, SamOracle};
use multion_core::env::{Action, EnvConfig, Episode, EpisodeSpec, Heading, Pose, EXPLORED_PLANE, OBSTACLE_PLANE};
use multion_core::geodesy::{
    brute_force_multigoal, distance_field_dijkstra, distance_field_fmm, optimal_multigoal_length, MultiGoalQuery, SceneFields,
};
use multion_core::metrics::{gspl, score_episode, EpisodeResult};
use multion_core::reward::{RewardConfig, RewardKind};
use multion_core::scene::{generate_scene, is_connected, Cell, GridScene, SceneGenSpec, Traversable};
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene(w: usize, h: usize, rooms: usize, seed: u64) -> GridScene {
    generate_scene(&SceneGenSpec::new(w, h, rooms, seed)).unwrap()
}

fn random_spec(fields: Arc<SceneFields>, k: usize, max_steps: usize, rng: &mut ChaCha8Rng) -> Option<EpisodeSpec> {
    let s = fields.scene();
    let mut cats = s.categories_present();
    if cats.len() < k {
        return None;
    }
    cats.shuffle(rng);
    cats.truncate(k);
    let start = *s.free_cells().choose(rng)?;
    let heading = Heading::from_degrees(30 * rng.random_range(0..12)).unwrap();
    let cs = s.cell_size();
    Some(EpisodeSpec::new(fields.clone(), Pose::at_cell(start, cs, heading), cats, max_steps))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_scenes_are_connected(w in 6usize..24, h in 6usize..24, rooms in 1usize..4, seed in any::<u64>()) {
        let s = scene(w, h, rooms, seed);
        prop_assert!(is_connected(&s));
        for o in s.objects() {
            prop_assert!(s.is_free(o.cell));
        }
        prop_assert_eq!(GridScene::from_text(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn fmm_sits_between_euclid_and_dijkstra(seed in any::<u64>()) {
        let s = scene(14, 14, 3, seed);
        let free = s.free_cells();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = *free.choose(&mut rng).unwrap();
        let fmm = distance_field_fmm(&s, &[src], 0.25).unwrap();
        let dij = distance_field_dijkstra(&s, &[src], 0.25).unwrap();
        for &c in &free {
            let e = 0.25 * ((c.x as f64 - src.x as f64).hypot(c.y as f64 - src.y as f64));
            prop_assert!(e <= fmm.get(c) + 1e-9, "{c:?}: euclid {e} fmm {}", fmm.get(c));
            prop_assert!(fmm.get(c) <= dij.get(c) + 1e-6, "{c:?}: fmm {} dijkstra {}", fmm.get(c), dij.get(c));
        }
    }

    #[test]
    fn adding_an_obstacle_never_shortens(seed in any::<u64>()) {
        let s = scene(12, 12, 2, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let free = s.free_cells();
        let src = *free.choose(&mut rng).unwrap();
        let block = *free.choose(&mut rng).unwrap();
        prop_assume!(block != src);
        let before = distance_field_fmm(&s, &[src], 0.25).unwrap();
        let mut occ = s.occupancy().to_vec();
        occ[s.index(block)] = true;
        let mask = multion_core::scene::FreeMask::new(12, 12, occ.iter().map(|o| !o).collect());
        let after = distance_field_fmm(&mask, &[src], 0.25).unwrap();
        for &c in &free {
            if c != block {
                prop_assert!(after.get(c) >= before.get(c) - 1e-9);
            }
        }
    }

    #[test]
    fn multigoal_matches_brute_force(seed in any::<u64>(), k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = rng.random_range(7..=10);
        let h = rng.random_range(7..=10);
        let mut gen = SceneGenSpec::new(w, h, 2, seed);
        gen.instances_per_category = 1..=2;
        let s = generate_scene(&gen).unwrap();
        let mut cats = s.categories_present();
        cats.shuffle(&mut rng);
        let goal_sets: Vec<Vec<Cell>> = cats.iter().take(k).map(|&c| s.instances_of(c)).collect();
        let start = *s.free_cells().choose(&mut rng).unwrap();
        let radius = [0.25, 0.5][rng.random_range(0..2)];
        let q = MultiGoalQuery { start, goal_sets, radius };
        let fast = optimal_multigoal_length(&s, &q, 0.25).unwrap();
        let slow = brute_force_multigoal(&s, &q, 0.25, 1 << 40).unwrap();
        prop_assert!((fast - slow).abs() <= 1e-6, "{fast} vs {slow}");
    }

    #[test]
    fn episode_invariants_under_random_actions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = Arc::new(SceneFields::new(scene(16, 16, 3, seed)));
        let spec = random_spec(f, 2, 150, &mut rng).unwrap();
        let targets = spec.targets.clone();
        let mut ep = Episode::reset(spec.clone(), EnvConfig::default()).unwrap();
        let mut agent = RandomAgent::new(seed);
        let mut actions = Vec::new();
        let mut explored = ep.map().explored_count();
        let mut forward = 0;
        while !ep.is_done() {
            let a = agent.next_action();
            let t = ep.state().t;
            let ev = ep.step(a).unwrap();
            actions.push(a);
            prop_assert_eq!(ep.state().t, t + 1);
            if a == Action::MoveForward && !ev.collided {
                forward += 1;
            }
            prop_assert_eq!(ep.state().path_length, 0.25 * forward as f64);
            let now = ep.map().explored_count();
            prop_assert!(now >= explored);
            explored = now;
            let map = ep.map();
            for y in 0..16 {
                for x in 0..16 {
                    let c = Cell::new(x, y);
                    let seen = map.get(EXPLORED_PLANE, c);
                    prop_assert!(map.get(OBSTACLE_PLANE, c) <= seen);
                    for cat in 0..map.categories() {
                        prop_assert!(map.get(map.category_plane(cat), c) <= seen);
                    }
                }
            }
            prop_assert!(ep.fields().scene().is_free(ep.agent_cell()));
            let obs = ep.observe();
            prop_assert_eq!(obs.remaining_encoding.iter().filter(|&&v| v == 1.0).count(), ep.state().remaining.len());
        }
        let st = ep.state().clone();
        let mut seen: Vec<_> = st.found_log.iter().map(|f| f.category).collect();
        seen.extend(st.remaining.iter().copied());
        seen.sort_unstable();
        let mut all = targets.clone();
        all.sort_unstable();
        prop_assert_eq!(seen, all);

        // replay reproduces the state exactly
        let mut again = Episode::reset(spec, EnvConfig::default()).unwrap();
        for a in actions {
            again.step(a).unwrap();
        }
        prop_assert_eq!(again.state(), &st);
        prop_assert_eq!(again.map(), ep.map());
    }

    #[test]
    fn local_policy_reaches_goal_on_known_map(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = scene(16, 16, 3, seed);
        let free = s.free_cells();
        let start = *free.choose(&mut rng).unwrap();
        let goal = *free.choose(&mut rng).unwrap();
        prop_assume!(start.chebyshev(goal) > 1);
        let fmm = distance_field_fmm(&s, &[goal], 0.25).unwrap();
        let f = Arc::new(SceneFields::new(s.clone()));
        let heading = Heading::from_degrees(30 * rng.random_range(0..12)).unwrap();
        let spec = EpisodeSpec::new(f, Pose::at_cell(start, 0.25, heading), vec![s.objects()[0].category], 10_000);
        let cfg = EnvConfig { success_metric: multion_core::env::SuccessMetric::Euclidean, ..Default::default() };
        let mut ep = Episode::reset(EpisodeSpec { success_radius: 0.0, ..spec }, cfg).unwrap();
        let (mut moves, mut turns, mut cells) = (0usize, 0usize, 1usize);
        loop {
            let a = local_policy_step(&s, &ep.state().pose, 0.25, goal).unwrap();
            if a == Action::Stop || ep.is_done() {
                break;
            }
            let before = ep.agent_cell();
            let ev = ep.step(a).unwrap();
            prop_assert!(!ev.collided);
            match a {
                Action::MoveForward => moves += 1,
                _ => turns += 1,
            }
            if ep.agent_cell() != before {
                cells += 1;
            }
            prop_assert!(moves + turns < 2000);
        }
        prop_assert!(ep.agent_cell().chebyshev(goal) <= 1 || ep.is_done());
        let bound = (std::f64::consts::SQRT_2 * fmm.get(start) / 0.25 + 1e-9).ceil() as usize;
        prop_assert!(moves <= bound, "{moves} forward moves, bound {bound}");
        prop_assert!(turns <= 6 * cells);
    }

    #[test]
    fn sam_oracle_path_at_least_optimum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = Arc::new(SceneFields::new(scene(16, 16, 3, seed)));
        let spec = random_spec(f.clone(), 2, 600, &mut rng).unwrap();
        let q = MultiGoalQuery {
            start: spec.start.cell(0.25),
            goal_sets: spec.targets.iter().map(|&c| f.scene().instances_of(c)).collect(),
            radius: spec.success_radius,
        };
        let g = optimal_multigoal_length(f.scene(), &q, 0.25).unwrap();
        let ep = Episode::reset(spec, EnvConfig::default()).unwrap();
        let rec = run_episode(ep, &mut GoalDriver::new(SamOracle), RewardKind::SequenceAgnostic, &RewardConfig::default()).unwrap();
        prop_assert!(rec.success());
        prop_assert!(rec.final_state.path_length >= g - 1e-9, "p {} < g {g}", rec.final_state.path_length);
        let m = score_episode(&EpisodeResult::from(&rec), g).unwrap();
        prop_assert!(m.gspl > 0.0 && m.gspl <= 1.0);
    }

    #[test]
    fn gspl_monotone_in_path(g in 0.0f64..50.0, p1 in 0.0f64..100.0, p2 in 0.0f64..100.0) {
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        prop_assert!(gspl(true, g, lo) >= gspl(true, g, hi));
        prop_assert!((0.0..=1.0).contains(&gspl(true, g, hi)));
        prop_assert_eq!(gspl(false, g, lo), 0.0);
    }
}

#[test]
fn descending_single_field_gives_positive_progress() {
    let s = GridScene::from_text("multion-scene v1 10 10 0.25\n..........\n..........\n..........\n..........\n..........\n..........\n..........\n..........\n..........\n..........\nobj bed 9 9\n").unwrap();
    let f = Arc::new(SceneFields::new(s));
    let spec = EpisodeSpec::new(f, Pose::at_cell(Cell::new(0, 9), 0.25, Heading::default()), vec![3], 100);
    let mut ep = Episode::reset(spec, EnvConfig::default()).unwrap();
    let rec = step_with_reward(&mut ep, Action::MoveForward, RewardKind::SequenceAgnostic, &RewardConfig::default()).unwrap();
    // d_t = 0.25, n = 1, N = 1
    assert!((rec.terms.process - 0.1 * 1.25).abs() < 1e-12);
}
