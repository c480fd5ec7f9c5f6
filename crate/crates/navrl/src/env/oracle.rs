//! Scripted expert controller.
//!
//! Plans once per arena on an inflated occupancy grid (Dijkstra from the
//! goal gives a distance field plus descent pointers), then follows the
//! waypoint chain with a rotate-then-translate proportional law:
//!
//! ```text
//! wyaw = clamp(K_TURN * heading_error)
//! vx   = clamp(K_SPEED * target_distance)   gated by |heading_error| < pi/6
//! vy   = 0
//! ```
//!
//! Required behaviors are emitted while the agent is inside their trigger
//! zones (checked before the stop rule, so a zone at the goal fires before
//! the stop), and the controller stops inside half the success radius. The
//! think text is a fixed phrase per maneuver, drawn from the policy
//! vocabulary's phrase bank so oracle transcripts stay tokenizable.

use serde::{Deserialize, Serialize};

use super::grid::{dijkstra, DistField, OccupancyGrid};
use super::{
    build_observation, step, AgentState, Arena, BehaviorZone, EnvConfig, EnvError, EpisodeTrace,
    Termination,
};
use crate::policy::ObservationContext;
use crate::response::{serialize_response, ActionLabel, ControlCommand};
use crate::vocab::phrases;

pub const K_TURN: f64 = 1.5;
pub const K_SPEED: f64 = 1.0;
/// Oracle velocities snap to this grid. Coarse commands steer fine in
/// closed loop and keep the supervised digit patterns a small closed set.
pub const VELOCITY_GRID: f64 = 0.25;
/// Forward motion is gated off when the heading error exceeds this.
pub const HEADING_GATE: f64 = std::f64::consts::FRAC_PI_6;
/// The controller stops inside success_radius * STOP_FACTOR.
pub const STOP_FACTOR: f64 = 0.5;
/// Waypoint lookahead distance, m.
pub const LOOKAHEAD: f64 = 1.0;
/// Obstacle inflation for oracle planning, m.
pub const ORACLE_INFLATION: f64 = 0.35;
/// Grid resolution for oracle planning, m.
pub const ORACLE_RESOLUTION: f64 = 0.25;

fn snap(v: f64) -> f64 {
    (v / VELOCITY_GRID).round() * VELOCITY_GRID
}

/// Cached plan for one arena: inflated grid plus the goal distance field.
pub struct OraclePlanner {
    arena: Arena,
    config: EnvConfig,
    grid: OccupancyGrid,
    field: DistField,
}

impl OraclePlanner {
    pub fn new(arena: &Arena, config: &EnvConfig) -> Result<Self, EnvError> {
        let grid = OccupancyGrid::from_arena(arena, ORACLE_RESOLUTION, ORACLE_INFLATION);
        let goal_cell = grid
            .nearest_free(grid.cell_of(arena.goal.0, arena.goal.1), 4)
            .ok_or_else(|| EnvError::InfeasibleArena(arena.id.clone()))?;
        let field = dijkstra(&grid, goal_cell);
        let start_cell = grid
            .nearest_free(grid.cell_of(arena.start_pose.x, arena.start_pose.y), 4)
            .ok_or_else(|| EnvError::InfeasibleArena(arena.id.clone()))?;
        if !field.distance_at(&grid, start_cell).is_finite() {
            return Err(EnvError::InfeasibleArena(arena.id.clone()));
        }
        Ok(OraclePlanner { arena: arena.clone(), config: *config, grid, field })
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    /// Geodesic distance to the goal from a point, on the inflated grid.
    pub fn distance_to_goal(&self, x: f64, y: f64) -> f64 {
        match self.grid.nearest_free(self.grid.cell_of(x, y), 4) {
            Some(cell) => self.field.distance_at(&self.grid, cell),
            None => f64::INFINITY,
        }
    }

    /// Waypoint chain from a point to the goal: cell centers along the
    /// descent direction of the distance field, ending at the exact goal.
    pub fn waypoints_from(&self, x: f64, y: f64) -> Vec<(f64, f64)> {
        let mut out = vec![(x, y)];
        if let Some(cell) = self.grid.nearest_free(self.grid.cell_of(x, y), 4) {
            if self.field.distance_at(&self.grid, cell).is_finite() {
                out.extend(self.field.chain_toward_source(&self.grid, cell));
            }
        }
        out.push(self.arena.goal);
        out
    }

    /// First pending required behavior (subsequence match against what has
    /// already been emitted), with its trigger zone.
    fn pending_behavior(&self, emitted: &[ActionLabel]) -> Option<(&ActionLabel, &BehaviorZone)> {
        let mut cursor = 0usize;
        for (idx, required) in self.arena.required_behaviors.iter().enumerate() {
            let mut matched = false;
            while cursor < emitted.len() {
                let hit = &emitted[cursor] == required;
                cursor += 1;
                if hit {
                    matched = true;
                    break;
                }
            }
            if !matched {
                return self.arena.behavior_zones.get(idx).map(|z| (required, z));
            }
        }
        None
    }

    fn nav_law(&self, state: &AgentState) -> (f64, f64, f64) {
        let target = self.lookahead_target(state);
        let he = super::wrap_angle((target.1 - state.y).atan2(target.0 - state.x) - state.yaw);
        let wyaw = snap((K_TURN * he).clamp(-self.config.w_max, self.config.w_max));
        let dist = state.distance_to(target);
        let vx = if he.abs() < HEADING_GATE {
            snap((K_SPEED * dist).clamp(0.0, self.config.v_max))
        } else {
            0.0
        };
        (vx, wyaw, he)
    }

    fn lookahead_target(&self, state: &AgentState) -> (f64, f64) {
        let chain = self.waypoints_from(state.x, state.y);
        for p in chain.iter().skip(1) {
            if state.distance_to(*p) >= LOOKAHEAD {
                return *p;
            }
        }
        self.arena.goal
    }

    /// World-frame heading toward the lookahead waypoint from a position.
    pub fn planned_heading(&self, x: f64, y: f64) -> f64 {
        let probe = AgentState { x, y, yaw: 0.0, collided: false, step_index: 0 };
        let target = self.lookahead_target(&probe);
        (target.1 - y).atan2(target.0 - x)
    }

    /// The expert decision at a state, given the behaviors emitted so far.
    pub fn command(&self, state: &AgentState, emitted: &[ActionLabel]) -> (String, ControlCommand) {
        if let Some((label, zone)) = self.pending_behavior(emitted) {
            if zone.contains(state.x, state.y) {
                let (vx, wyaw, _) = self.nav_law(state);
                let think = match label.as_str() {
                    "crawl" => phrases::CRAWL,
                    "unload" => phrases::UNLOAD,
                    _ => phrases::DISTINGUISH,
                };
                return (think.to_string(), ControlCommand::new(vx, 0.0, wyaw, label.clone()));
            }
        }
        let goal_dist = state.distance_to(self.arena.goal);
        if goal_dist < self.config.success_radius * STOP_FACTOR {
            return (phrases::STOP.to_string(), ControlCommand::stop());
        }
        let (vx, wyaw, he) = self.nav_law(state);
        let think = if he.abs() >= std::f64::consts::FRAC_PI_2 {
            phrases::ROTATE
        } else if he > HEADING_GATE {
            phrases::TURN_LEFT
        } else if he < -HEADING_GATE {
            phrases::TURN_RIGHT
        } else {
            phrases::FORWARD
        };
        (think.to_string(), ControlCommand::new(vx, 0.0, wyaw, ActionLabel::new("move")))
    }
}

/// One-shot convenience wrapper over [`OraclePlanner::command`]; plans the
/// arena from scratch, so batch callers should hold a planner instead.
pub fn oracle_command(
    state: &AgentState,
    arena: &Arena,
    config: &EnvConfig,
    emitted: &[ActionLabel],
) -> Result<(String, ControlCommand), EnvError> {
    Ok(OraclePlanner::new(arena, config)?.command(state, emitted))
}

/// One supervised step produced by the oracle: the observation the policy
/// would have seen and the canonical response text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleStep {
    pub context: ObservationContext,
    pub pose: (f64, f64),
    pub yaw: f64,
    pub think: String,
    pub command: ControlCommand,
    pub raw: String,
}

/// Run the expert controller closed-loop and keep the per-step transcripts.
pub fn oracle_rollout(
    arena: &Arena,
    config: &EnvConfig,
) -> Result<(EpisodeTrace, Vec<OracleStep>), EnvError> {
    let planner = OraclePlanner::new(arena, config)?;
    let mut state = AgentState::at_start(arena);
    let mut poses = vec![(state.x, state.y)];
    let mut commands = Vec::new();
    let mut raw_responses = Vec::new();
    let mut behaviors: Vec<ActionLabel> = Vec::new();
    let mut steps = Vec::new();
    let mut terminated_by = Termination::MaxSteps;
    let mut consecutive_collisions = 0usize;

    for _ in 0..config.max_steps {
        let context = build_observation(&state, arena, config);
        let (think, cmd) = planner.command(&state, &behaviors);
        let raw = serialize_response(&think, &cmd).expect("oracle emits canonical text");
        steps.push(OracleStep {
            context,
            pose: (state.x, state.y),
            yaw: state.yaw,
            think,
            command: cmd.clone(),
            raw: raw.clone(),
        });
        raw_responses.push(raw);
        behaviors.push(cmd.action.clone());
        if cmd.action.as_str() == crate::response::STOP_LABEL {
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
    let trace = EpisodeTrace {
        poses,
        commands,
        raw_responses,
        terminated_by,
        behaviors_emitted: behaviors,
    };
    Ok((trace, steps))
}
