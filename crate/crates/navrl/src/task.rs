//! The navigation training task: contexts drawn from arena suites, rewards
//! scored against the oracle's command at the same state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{build_observation, AgentState, Arena, EnvConfig, EnvError, OraclePlanner};
use crate::grpo::{GrpoTask, TaskInstance};
use crate::response::{ActionRegistry, VelocityLimits};
use crate::reward::{composite_reward, RewardBreakdown, RewardWeights};

/// Draws (observation, oracle target) pairs from a fixed set of arenas.
/// Poses are sampled uniformly over free space with a random heading and a
/// random step index, which covers turn-in-place, cruise, behavior-zone,
/// and stop situations in rough proportion to how rollouts meet them.
pub struct NavTask {
    arenas: Vec<Arena>,
    planners: Vec<OraclePlanner>,
    env: EnvConfig,
    registry: ActionRegistry,
    limits: VelocityLimits,
    weights: RewardWeights,
}

impl NavTask {
    pub fn new(
        arenas: Vec<Arena>,
        env: EnvConfig,
        registry: ActionRegistry,
        weights: RewardWeights,
    ) -> Result<Self, EnvError> {
        assert!(!arenas.is_empty(), "NavTask needs at least one arena");
        let planners = arenas
            .iter()
            .map(|a| OraclePlanner::new(a, &env))
            .collect::<Result<Vec<_>, _>>()?;
        let limits = env.limits();
        Ok(NavTask { arenas, planners, env, registry, limits, weights })
    }

    pub fn weights(&self) -> RewardWeights {
        self.weights
    }

    pub fn with_weights(&self, weights: RewardWeights) -> NavTask {
        NavTask {
            arenas: self.arenas.clone(),
            planners: self
                .arenas
                .iter()
                .map(|a| OraclePlanner::new(a, &self.env).expect("arena was feasible"))
                .collect(),
            env: self.env,
            registry: self.registry.clone(),
            limits: self.limits,
            weights,
        }
    }

    fn sample_state(
        &self,
        arena: &Arena,
        planner: &OraclePlanner,
        rng: &mut ChaCha8Rng,
    ) -> AgentState {
        let b = &arena.bounds;
        let margin = 0.5;
        // Closed-loop trajectories spend most steps roughly aligned with
        // the route and finish near the goal; a uniform pose/heading prior
        // would make turn-in-place the dominant label and leave the
        // stop decision with almost no gradient signal. Mix accordingly:
        // a fifth of the draws inside the stop zone, a fifth on the final
        // approach, half of the rest aligned with the route.
        let stop_radius = self.env.success_radius * crate::env::oracle_stop_factor();
        let u = rng.random_range(0.0..1.0);
        let radial = if u < 0.2 {
            Some((0.0, stop_radius))
        } else if u < 0.4 {
            Some((stop_radius, self.env.success_radius))
        } else {
            None
        };
        let aligned = rng.random_range(0.0..1.0) < 0.5;
        for _ in 0..100 {
            let (x, y) = if let Some((r_lo, r_hi)) = radial {
                let r = rng.random_range(r_lo..r_hi);
                let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                (arena.goal.0 + r * theta.cos(), arena.goal.1 + r * theta.sin())
            } else {
                (
                    rng.random_range(b.min_x + margin..b.max_x - margin),
                    rng.random_range(b.min_y + margin..b.max_y - margin),
                )
            };
            if x < b.min_x + margin || x > b.max_x - margin || y < b.min_y + margin
                || y > b.max_y - margin
            {
                continue;
            }
            if arena.obstacles.iter().any(|o| o.expand(0.2).contains(x, y)) {
                continue;
            }
            let yaw = if aligned {
                let noise = rng.random_range(-0.6..0.6);
                crate::env::wrap_angle(planner.planned_heading(x, y) + noise)
            } else {
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
            };
            let step_index = rng.random_range(0..self.env.max_steps);
            return AgentState { x, y, yaw, collided: false, step_index };
        }
        AgentState::at_start(arena)
    }
}

impl GrpoTask for NavTask {
    fn draw(&self, rng: &mut ChaCha8Rng) -> TaskInstance {
        let idx = rng.random_range(0..self.arenas.len());
        let arena = &self.arenas[idx];
        let state = self.sample_state(arena, &self.planners[idx], rng);
        let context = build_observation(&state, arena, &self.env);
        // Ground truth is what the expert would do here, assuming required
        // behaviors not yet performed.
        let (_, target) = self.planners[idx].command(&state, &[]);
        TaskInstance { context, target }
    }

    fn score(&self, raw: &str, instance: &TaskInstance) -> RewardBreakdown {
        composite_reward(raw, &instance.target, self.weights, &self.registry, self.limits)
    }
}
