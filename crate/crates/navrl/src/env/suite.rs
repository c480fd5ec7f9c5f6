//! Procedural arena suites.
//!
//! Easy arenas are obstacle-free move-to-goal episodes, medium arenas add
//! one or two box obstacles, and hard arenas add three to five obstacles
//! plus one required behavior with a trigger zone placed on the planned
//! path (crawl and distinguish at the route midpoint, unload at the goal).
//! Every emitted arena passes the oracle feasibility check; generation is
//! a pure function of (seed, difficulty, index), so a suite is stable under
//! changes to the requested count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::oracle::OraclePlanner;
use super::{Arena, BehaviorZone, Difficulty, EnvConfig, Pose, Rect};
use crate::response::ActionLabel;
use crate::rng;

const ARENA_SIZE: f64 = 15.0;
/// Start and goal are kept this far from the walls.
const EDGE_MARGIN: f64 = 2.0;
const MIN_GOAL_DIST: f64 = 4.0;
const MAX_GOAL_DIST: f64 = 9.0;
/// Obstacles are rejected if they come this close to the start or goal.
const KEEPOUT: f64 = 0.8;
const MAX_ATTEMPTS: usize = 60;

/// Generate `n` feasible arenas for a difficulty tier. Deterministic per
/// (seed, difficulty, index).
pub fn make_arena_suite(seed: u64, n: usize, difficulty: Difficulty) -> Vec<Arena> {
    (0..n).map(|i| generate_arena(seed, difficulty, i)).collect()
}

fn difficulty_tag(d: Difficulty) -> u64 {
    match d {
        Difficulty::Easy => 0,
        Difficulty::Medium => 1,
        Difficulty::Hard => 2,
    }
}

fn generate_arena(seed: u64, difficulty: Difficulty, index: usize) -> Arena {
    let mut r = rng::stream(seed, 0x5317e + difficulty_tag(difficulty), index as u64);
    let mut max_obstacles = match difficulty {
        Difficulty::Easy => 0usize,
        Difficulty::Medium => 2,
        Difficulty::Hard => 5,
    };
    let min_obstacles = match difficulty {
        Difficulty::Easy => 0usize,
        Difficulty::Medium => 1,
        Difficulty::Hard => 3,
    };
    let mut attempt = 0usize;
    loop {
        attempt += 1;
        if attempt % MAX_ATTEMPTS == 0 && max_obstacles > min_obstacles.min(1) {
            // Crowded draws can keep failing feasibility; relax gradually
            // rather than loop forever.
            max_obstacles -= 1;
        }
        if let Some(arena) = try_generate(&mut r, difficulty, index, seed, min_obstacles.min(max_obstacles), max_obstacles) {
            return arena;
        }
    }
}

fn sample_point(r: &mut ChaCha8Rng) -> (f64, f64) {
    (
        r.random_range(EDGE_MARGIN..ARENA_SIZE - EDGE_MARGIN),
        r.random_range(EDGE_MARGIN..ARENA_SIZE - EDGE_MARGIN),
    )
}

fn try_generate(
    r: &mut ChaCha8Rng,
    difficulty: Difficulty,
    index: usize,
    seed: u64,
    min_obstacles: usize,
    max_obstacles: usize,
) -> Option<Arena> {
    let bounds = Rect::new(0.0, 0.0, ARENA_SIZE, ARENA_SIZE);
    let start = sample_point(r);
    let yaw = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let mut goal = None;
    for _ in 0..40 {
        let g = sample_point(r);
        let d = ((g.0 - start.0).powi(2) + (g.1 - start.1).powi(2)).sqrt();
        if (MIN_GOAL_DIST..=MAX_GOAL_DIST).contains(&d) {
            goal = Some(g);
            break;
        }
    }
    let goal = goal?;

    let n_obstacles = if max_obstacles == 0 {
        0
    } else {
        r.random_range(min_obstacles..=max_obstacles)
    };
    let mut obstacles: Vec<Rect> = Vec::new();
    for _ in 0..n_obstacles {
        let mut placed = false;
        for _ in 0..30 {
            let w = r.random_range(1.0..3.0);
            let h = r.random_range(1.0..3.0);
            let cx = r.random_range(1.0 + w / 2.0..ARENA_SIZE - 1.0 - w / 2.0);
            let cy = r.random_range(1.0 + h / 2.0..ARENA_SIZE - 1.0 - h / 2.0);
            let rect = Rect::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0);
            let keep = rect.expand(KEEPOUT);
            if keep.contains(start.0, start.1) || keep.contains(goal.0, goal.1) {
                continue;
            }
            obstacles.push(rect);
            placed = true;
            break;
        }
        if !placed {
            return None;
        }
    }

    let (instruction_id, behavior) = match difficulty {
        Difficulty::Easy | Difficulty::Medium => (0usize, None),
        Difficulty::Hard => match r.random_range(0..3u32) {
            0 => (1, Some("crawl")),
            1 => (2, Some("unload")),
            _ => (3, Some("distinguish")),
        },
    };

    let mut arena = Arena {
        id: format!("{}-{seed}-{index}", difficulty.as_str()),
        difficulty,
        bounds,
        obstacles,
        start_pose: Pose { x: start.0, y: start.1, yaw },
        goal,
        instruction_id,
        required_behaviors: vec![],
        behavior_zones: vec![],
    };

    // Feasibility gate: the oracle must be able to plan start -> goal on
    // the inflated grid.
    let config = EnvConfig::default();
    let planner = OraclePlanner::new(&arena, &config).ok()?;
    if !planner.distance_to_goal(start.0, start.1).is_finite() {
        return None;
    }

    if let Some(name) = behavior {
        let label = ActionLabel::new(name);
        let zone = match name {
            "unload" => BehaviorZone {
                label: label.clone(),
                center: goal,
                radius: config.success_radius * super::oracle::STOP_FACTOR + 0.5,
            },
            _ => {
                let center = midpoint_on_path(&planner, start);
                BehaviorZone { label: label.clone(), center, radius: 1.2 }
            }
        };
        arena.required_behaviors = vec![label];
        arena.behavior_zones = vec![zone];
    }
    Some(arena)
}

/// Waypoint nearest to half the cumulative path length.
fn midpoint_on_path(planner: &OraclePlanner, start: (f64, f64)) -> (f64, f64) {
    let chain = planner.waypoints_from(start.0, start.1);
    let total: f64 = chain
        .windows(2)
        .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
        .sum();
    let mut acc = 0.0;
    for w in chain.windows(2) {
        acc += ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
        if acc >= total / 2.0 {
            return w[1];
        }
    }
    *chain.last().unwrap()
}
