//! Deterministic 2D continuous navigation arenas.
//!
//! Kinematics are body-frame velocity integration with first-contact
//! collision clamping: the agent stops 1e-3 m short of whatever it would
//! have hit and the step is flagged as a collision. Episodes terminate on
//! an explicit stop action, on the step budget, or after three consecutive
//! collisions. A response that fails to parse executes the zero command for
//! that tick and is recorded as a format failure.

pub mod grid;
mod oracle;
mod suite;

pub use oracle::{oracle_command, oracle_rollout, OraclePlanner, OracleStep};

/// The oracle stops inside success_radius times this factor.
pub fn oracle_stop_factor() -> f64 {
    oracle::STOP_FACTOR
}
pub use suite::make_arena_suite;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{sample_one, ObservationContext, PolicyError, PolicyParams};
use crate::response::{
    parse_response, ActionLabel, ActionRegistry, ControlCommand, VelocityLimits, STOP_LABEL,
};
use crate::rng;
use crate::vocab::Vocabulary;

/// Stop margin kept between the agent and anything it hits.
pub const CONTACT_MARGIN: f64 = 1e-3;

/// Obstacle-distance features are capped at this range (m).
pub const RAY_CAP: f64 = 5.0;

/// Length of the geometric feature vector built by [`build_observation`].
pub const FEATURE_LEN: usize = 8;

/// Instruction catalog. The index is what the policy conditions on.
pub const INSTRUCTIONS: [&str; 4] = [
    "walk to the goal marker and stop inside the target circle",
    "crawl under the low barrier on the way to the goal, then stop",
    "carry the payload to the goal and unload it there",
    "find the highlighted marker, distinguish it, then stop at the goal",
];

pub const INSTRUCTION_COUNT: usize = INSTRUCTIONS.len();

pub fn instruction_text(id: usize) -> &'static str {
    INSTRUCTIONS[id.min(INSTRUCTIONS.len() - 1)]
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("arena `{0}` is infeasible: no path from start to goal")]
    InfeasibleArena(String),
    #[error("point ({0:.2}, {1:.2}) lies inside an obstacle")]
    PointInsideObstacle(f64, f64),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect { min_x, min_y, max_x, max_y }
    }

    pub fn expand(&self, by: f64) -> Rect {
        Rect::new(self.min_x - by, self.min_y - by, self.max_x + by, self.max_y + by)
    }

    /// Strict interior test.
    pub fn contains_interior(&self, x: f64, y: f64) -> bool {
        x > self.min_x && x < self.max_x && y > self.min_y && y < self.max_y
    }

    /// Closed containment.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    /// Earliest t in [0, 1] at which the segment p + t*d touches the
    /// closed rectangle, if any (slab method).
    pub fn segment_entry(&self, p: (f64, f64), d: (f64, f64)) -> Option<f64> {
        let mut tmin = 0.0f64;
        let mut tmax = 1.0f64;
        for (p0, d0, lo, hi) in
            [(p.0, d.0, self.min_x, self.max_x), (p.1, d.1, self.min_y, self.max_y)]
        {
            if d0 == 0.0 {
                if p0 < lo || p0 > hi {
                    return None;
                }
            } else {
                let mut t0 = (lo - p0) / d0;
                let mut t1 = (hi - p0) / d0;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                tmin = tmin.max(t0);
                tmax = tmax.min(t1);
                if tmin > tmax {
                    return None;
                }
            }
        }
        Some(tmin)
    }

    /// Earliest t in [0, 1] at which the segment p + t*d leaves the closed
    /// rectangle (assuming p starts inside), if it does.
    pub fn segment_exit(&self, p: (f64, f64), d: (f64, f64)) -> Option<f64> {
        let mut t_exit = f64::INFINITY;
        for (p0, d0, lo, hi) in
            [(p.0, d.0, self.min_x, self.max_x), (p.1, d.1, self.min_y, self.max_y)]
        {
            if d0 > 0.0 {
                t_exit = t_exit.min((hi - p0) / d0);
            } else if d0 < 0.0 {
                t_exit = t_exit.min((lo - p0) / d0);
            }
        }
        (t_exit <= 1.0).then_some(t_exit.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

/// A spatial trigger for a required behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorZone {
    pub label: ActionLabel,
    pub center: (f64, f64),
    pub radius: f64,
}

impl BehaviorZone {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        (dx * dx + dy * dy).sqrt() < self.radius
    }
}

/// One instruction-conditioned episode setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub id: String,
    pub difficulty: Difficulty,
    pub bounds: Rect,
    pub obstacles: Vec<Rect>,
    pub start_pose: Pose,
    pub goal: (f64, f64),
    pub instruction_id: usize,
    /// Behaviors that must be emitted in order for behavior_match.
    pub required_behaviors: Vec<ActionLabel>,
    /// Trigger regions, aligned with `required_behaviors`.
    pub behavior_zones: Vec<BehaviorZone>,
}

impl Arena {
    pub fn instruction(&self) -> &'static str {
        instruction_text(self.instruction_id)
    }

    pub fn point_in_obstacle(&self, x: f64, y: f64) -> bool {
        self.obstacles.iter().any(|o| o.contains_interior(x, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub collided: bool,
    pub step_index: usize,
}

impl AgentState {
    pub fn at_start(arena: &Arena) -> Self {
        AgentState {
            x: arena.start_pose.x,
            y: arena.start_pose.y,
            yaw: arena.start_pose.yaw,
            collided: false,
            step_index: 0,
        }
    }

    pub fn distance_to(&self, p: (f64, f64)) -> f64 {
        ((self.x - p.0).powi(2) + (self.y - p.1).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Integration interval, s.
    pub dt: f64,
    /// Max |vx|, |vy|, m/s.
    pub v_max: f64,
    /// Max |wyaw|, rad/s.
    pub w_max: f64,
    pub max_steps: usize,
    /// Success radius around the goal, m.
    pub success_radius: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { dt: 0.5, v_max: 1.0, w_max: 1.0, max_steps: 60, success_radius: 3.0 }
    }
}

impl EnvConfig {
    pub fn limits(&self) -> VelocityLimits {
        VelocityLimits { v_max: self.v_max, w_max: self.w_max }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("w_max", self.w_max),
            ("success_radius", self.success_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("env.{name} must be positive"));
            }
        }
        if self.max_steps == 0 {
            return Err("env.max_steps must be positive".into());
        }
        Ok(())
    }
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    StopAction,
    MaxSteps,
    CollisionHalt,
}

/// Timestamped record of one rollout: poses, executed commands (None where
/// the response failed to parse), raw response texts, and the emitted
/// action labels. `poses.len() == commands.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub poses: Vec<(f64, f64)>,
    pub commands: Vec<Option<ControlCommand>>,
    pub raw_responses: Vec<String>,
    pub terminated_by: Termination,
    pub behaviors_emitted: Vec<ActionLabel>,
}

impl EpisodeTrace {
    pub fn format_failures(&self) -> usize {
        self.commands.iter().filter(|c| c.is_none()).count()
    }

    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
            .sum()
    }
}

/// Integrate one command: body-frame velocities rotated into the world,
/// clamped to limits, with first-contact collision clamping against the
/// obstacles and the arena bounds.
pub fn step(
    state: &AgentState,
    command: &ControlCommand,
    arena: &Arena,
    config: &EnvConfig,
) -> AgentState {
    let vx = command.vx.clamp(-config.v_max, config.v_max);
    let vy = command.vy.clamp(-config.v_max, config.v_max);
    let wyaw = command.wyaw.clamp(-config.w_max, config.w_max);
    let (sin, cos) = state.yaw.sin_cos();
    let dx = (vx * cos - vy * sin) * config.dt;
    let dy = (vx * sin + vy * cos) * config.dt;
    let p = (state.x, state.y);
    let d = (dx, dy);
    let len = (dx * dx + dy * dy).sqrt();
    let mut travel = len;
    let mut collided = false;
    if len > 0.0 {
        let mut t_hit = f64::INFINITY;
        for o in &arena.obstacles {
            if let Some(t) = o.segment_entry(p, d) {
                t_hit = t_hit.min(t);
            }
        }
        if let Some(t) = arena.bounds.segment_exit(p, d) {
            t_hit = t_hit.min(t);
        }
        if t_hit <= 1.0 {
            travel = (t_hit * len - CONTACT_MARGIN).max(0.0);
            collided = true;
        }
    }
    let scale = if len > 0.0 { travel / len } else { 0.0 };
    AgentState {
        x: state.x + dx * scale,
        y: state.y + dy * scale,
        yaw: wrap_angle(state.yaw + wyaw * config.dt),
        collided,
        step_index: state.step_index + 1,
    }
}

/// Distance from a point along a direction to the first obstacle or the
/// arena boundary, capped at [`RAY_CAP`].
fn ray_distance(arena: &Arena, x: f64, y: f64, angle: f64) -> f64 {
    let d = (angle.cos() * RAY_CAP, angle.sin() * RAY_CAP);
    let mut t_hit = 1.0f64;
    for o in &arena.obstacles {
        if let Some(t) = o.segment_entry((x, y), d) {
            t_hit = t_hit.min(t);
        }
    }
    if let Some(t) = arena.bounds.segment_exit((x, y), d) {
        t_hit = t_hit.min(t);
    }
    t_hit * RAY_CAP
}

/// Displacement features are divided by this many meters.
pub const DISP_SCALE: f64 = 7.5;

/// Build the policy observation: goal displacement in the body frame,
/// heading error, clearance along the four body axes (forward, back, left,
/// right), and the remaining-step fraction. Every entry is normalized into
/// roughly [-1, 1] (displacement over [`DISP_SCALE`] m, heading over pi,
/// clearances over [`RAY_CAP`]) so the context encoder sees comparable
/// scales.
pub fn build_observation(state: &AgentState, arena: &Arena, config: &EnvConfig) -> ObservationContext {
    let gx = arena.goal.0 - state.x;
    let gy = arena.goal.1 - state.y;
    let (sin, cos) = state.yaw.sin_cos();
    let dx_body = cos * gx + sin * gy;
    let dy_body = -sin * gx + cos * gy;
    let heading_error = wrap_angle(gy.atan2(gx) - state.yaw);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let features = vec![
        dx_body / DISP_SCALE,
        dy_body / DISP_SCALE,
        heading_error / std::f64::consts::PI,
        ray_distance(arena, state.x, state.y, state.yaw) / RAY_CAP,
        ray_distance(arena, state.x, state.y, state.yaw + std::f64::consts::PI) / RAY_CAP,
        ray_distance(arena, state.x, state.y, state.yaw + half_pi) / RAY_CAP,
        ray_distance(arena, state.x, state.y, state.yaw - half_pi) / RAY_CAP,
        (config.max_steps.saturating_sub(state.step_index)) as f64 / config.max_steps as f64,
    ];
    ObservationContext::new(features, arena.instruction_id)
}

/// Closed-loop policy rollout. Each step samples one response from its own
/// derived stream, parses it, and either executes the command or, on a
/// format failure, holds position for the tick.
pub fn rollout(
    params: &PolicyParams,
    vocab: &Vocabulary,
    arena: &Arena,
    config: &EnvConfig,
    registry: &ActionRegistry,
    limits: VelocityLimits,
    rng_seed: u64,
) -> Result<EpisodeTrace, EnvError> {
    let mut state = AgentState::at_start(arena);
    let mut poses = vec![(state.x, state.y)];
    let mut commands: Vec<Option<ControlCommand>> = Vec::new();
    let mut raw_responses = Vec::new();
    let mut behaviors = Vec::new();
    let mut consecutive_collisions = 0usize;
    let mut terminated_by = Termination::MaxSteps;

    for t in 0..config.max_steps {
        let obs = build_observation(&state, arena, config);
        let mut step_rng: ChaCha8Rng = rng::stream(rng_seed, t as u64, 0);
        let response = sample_one(params, vocab, &obs, &mut step_rng)?;
        raw_responses.push(response.text.clone());
        match parse_response(&response.text, registry, limits) {
            Ok(parsed) => {
                let cmd = parsed.command;
                behaviors.push(cmd.action.clone());
                if cmd.action.as_str() == STOP_LABEL {
                    commands.push(Some(cmd));
                    poses.push((state.x, state.y));
                    terminated_by = Termination::StopAction;
                    break;
                }
                state = step(&state, &cmd, arena, config);
                commands.push(Some(cmd));
                poses.push((state.x, state.y));
                if state.collided {
                    consecutive_collisions += 1;
                    if consecutive_collisions >= 3 {
                        terminated_by = Termination::CollisionHalt;
                        break;
                    }
                } else {
                    consecutive_collisions = 0;
                }
            }
            Err(_) => {
                // Malformed output moves nothing this tick.
                commands.push(None);
                poses.push((state.x, state.y));
                state.step_index += 1;
                consecutive_collisions = 0;
            }
        }
    }
    Ok(EpisodeTrace { poses, commands, raw_responses, terminated_by, behaviors_emitted: behaviors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::ActionLabel;

    fn arena() -> Arena {
        Arena {
            id: "t".into(),
            difficulty: Difficulty::Easy,
            bounds: Rect::new(0.0, 0.0, 15.0, 15.0),
            obstacles: vec![],
            start_pose: Pose { x: 2.0, y: 2.0, yaw: 0.0 },
            goal: (10.0, 2.0),
            instruction_id: 0,
            required_behaviors: vec![],
            behavior_zones: vec![],
        }
    }

    fn cfg() -> EnvConfig {
        EnvConfig::default()
    }

    fn mv(vx: f64, vy: f64, wyaw: f64) -> ControlCommand {
        ControlCommand::new(vx, vy, wyaw, ActionLabel::new("move"))
    }

    #[test]
    fn zero_command_holds_pose() {
        let s = AgentState::at_start(&arena());
        let s2 = step(&s, &mv(0.0, 0.0, 0.0), &arena(), &cfg());
        assert_eq!((s2.x, s2.y, s2.yaw), (s.x, s.y, s.yaw));
        assert!(!s2.collided);
        assert_eq!(s2.step_index, 1);
    }

    #[test]
    fn axis_aligned_integration() {
        let s = AgentState::at_start(&arena());
        let s2 = step(&s, &mv(1.0, 0.0, 0.0), &arena(), &cfg());
        assert!((s2.x - 2.5).abs() < 1e-12);
        assert_eq!(s2.y, 2.0);
    }

    #[test]
    fn wall_contact_stops_with_margin() {
        let mut a = arena();
        a.obstacles.push(Rect::new(2.2, 1.0, 4.0, 3.0));
        let s = AgentState::at_start(&a);
        let s2 = step(&s, &mv(1.0, 0.0, 0.0), &a, &cfg());
        assert!(s2.collided);
        assert!((s2.x - (2.2 - CONTACT_MARGIN)).abs() < 1e-9, "x = {}", s2.x);
        assert_eq!(s2.y, 2.0);
    }

    #[test]
    fn bounds_exit_clamped() {
        let a = arena();
        let s = AgentState { x: 14.8, y: 2.0, yaw: 0.0, collided: false, step_index: 0 };
        let s2 = step(&s, &mv(1.0, 0.0, 0.0), &a, &cfg());
        assert!(s2.collided);
        assert!(s2.x <= 15.0 - CONTACT_MARGIN + 1e-12);
    }

    #[test]
    fn kinematic_reversibility() {
        let a = arena();
        let s0 = AgentState { x: 5.0, y: 5.0, yaw: 0.7, collided: false, step_index: 0 };
        let fwd = step(&s0, &mv(0.8, -0.3, 0.0), &a, &cfg());
        let back = step(&fwd, &mv(-0.8, 0.3, 0.0), &a, &cfg());
        assert!((back.x - s0.x).abs() < 1e-9);
        assert!((back.y - s0.y).abs() < 1e-9);
    }

    #[test]
    fn yaw_wraps() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn observation_shape_and_content() {
        let a = arena();
        let s = AgentState::at_start(&a);
        let obs = build_observation(&s, &a, &cfg());
        assert_eq!(obs.features.len(), FEATURE_LEN);
        // Goal dead ahead 8 m: dx_body = 8 / DISP_SCALE, dy = 0, he = 0.
        assert!((obs.features[0] - 8.0 / DISP_SCALE).abs() < 1e-12);
        assert!(obs.features[1].abs() < 1e-12);
        assert!(obs.features[2].abs() < 1e-12);
        // Forward clearance capped at RAY_CAP, normalized to 1.
        assert_eq!(obs.features[3], 1.0);
        // Remaining fraction starts at 1.
        assert_eq!(obs.features[7], 1.0);
    }
}
