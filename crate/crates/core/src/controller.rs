//! Rate-limited Cartesian velocity controller for the end-effector and the
//! catch judge.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ballistics::{plane_crossing, TrueTrajectory, Vec3, DEFAULT_CATCH_PLANE_Z};
use crate::baseline::InterceptionPoint;
use crate::error::{Error, Result};
use crate::util::fmt_sig;

pub const BASKET_RADIUS: f64 = 0.075;
pub const CONTROL_RATE: f64 = 1000.0;

/// Axis-aligned box the end-effector must stay in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            min: Vec3::new(-0.8, 0.0, -0.7),
            max: Vec3::new(0.8, 1.2, -0.1),
        }
    }
}

impl Workspace {
    pub fn contains(&self, p: Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    /// Clamped point and whether clamping changed it.
    pub fn clamp(&self, p: Vec3) -> (Vec3, bool) {
        let q = Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        );
        (q, q != p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Proportional gain, 1/s.
    pub gain: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub deadband: f64,
    pub home: Vec3,
    pub workspace: Workspace,
    pub z_plane: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            gain: 8.0,
            v_max: 0.65,
            a_max: 3.0,
            deadband: 0.002,
            home: Vec3::new(0.0, 0.4, DEFAULT_CATCH_PLANE_Z),
            workspace: Workspace::default(),
            z_plane: DEFAULT_CATCH_PLANE_Z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub v_max: f64,
    pub a_max: f64,
    pub workspace: Workspace,
}

impl RobotState {
    pub fn at_home(cfg: &ControllerConfig) -> Self {
        RobotState {
            position: cfg.home,
            velocity: Vec3::ZERO,
            v_max: cfg.v_max,
            a_max: cfg.a_max,
            workspace: cfg.workspace,
        }
    }

    /// Applies a velocity command for one tick.
    pub fn advance(&mut self, command: Vec3, dt: f64) {
        self.velocity = command;
        let (p, clamped) = self.workspace.clamp(self.position + command * dt);
        if clamped {
            // stopped by the workspace boundary
            let mut v = command.to_array();
            let (a, b) = (p.to_array(), (self.position + command * dt).to_array());
            for i in 0..3 {
                if a[i] != b[i] {
                    v[i] = 0.0;
                }
            }
            self.velocity = Vec3::from_array(v);
        }
        self.position = p;
    }
}

fn axis_command(error: f64, current: f64, gain: f64, cfg: (f64, f64, f64), dt: f64) -> f64 {
    let (v_max, a_max, deadband) = cfg;
    let desired = if error.abs() < deadband {
        0.0
    } else {
        let speed = (gain * error.abs())
            .min(v_max)
            .min((2.0 * a_max * error.abs()).sqrt());
        speed.copysign(error)
    };
    let dv = a_max * dt;
    desired.clamp(current - dv, current + dv).clamp(-v_max, v_max)
}

/// Per-axis velocity command toward `goal`: proportional with saturation at
/// `v_max`, capped by the braking speed `sqrt(2 a_max |e|)`, rate-limited to
/// `a_max * dt` per tick, and zero inside the deadband.
pub fn control_step(cfg: &ControllerConfig, state: &RobotState, goal: Vec3, dt: f64) -> Vec3 {
    let e = (goal - state.position).to_array();
    let v = state.velocity.to_array();
    let lim = (state.v_max, state.a_max, cfg.deadband);
    Vec3::new(
        axis_command(e[0], v[0], cfg.gain, lim, dt),
        axis_command(e[1], v[1], cfg.gain, lim, dt),
        axis_command(e[2], v[2], cfg.gain, lim, dt),
    )
}

/// Goal on the catch plane for a new interception point, clamped to the
/// workspace. The flag reports whether clamping happened.
pub fn update_goal(cfg: &ControllerConfig, point: &InterceptionPoint) -> (Vec3, bool) {
    cfg.workspace.clamp(Vec3::new(point.x, point.y, point.z_plane))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatchOutcome {
    pub success: bool,
    pub miss_distance: f64,
    pub t_cross: f64,
    pub ee_at_cross: Vec3,
}

/// End-effector position at `t` by linear interpolation of the trace.
pub fn trace_position_at(trace: &[TraceSample], t: f64) -> Option<Vec3> {
    let first = trace.first()?;
    if t <= first.t {
        return Some(first.position);
    }
    let idx = trace.partition_point(|s| s.t <= t);
    if idx >= trace.len() {
        return trace.last().map(|s| s.position);
    }
    let (a, b) = (trace[idx - 1], trace[idx]);
    let s = (t - a.t) / (b.t - a.t);
    Some(a.position.lerp(b.position, s))
}

/// Judges the catch at the object's plane crossing. Success is inclusive
/// at exactly `basket_radius`.
pub fn evaluate_catch(
    trace: &[TraceSample],
    object: &TrueTrajectory,
    z_plane: f64,
    basket_radius: f64,
) -> Result<CatchOutcome> {
    let (t_cross, obj) = plane_crossing(object, z_plane)?;
    let ee = trace_position_at(trace, t_cross)
        .ok_or_else(|| Error::InvalidArgument("empty robot trace".into()))?;
    let miss = ee.planar_distance(obj);
    Ok(CatchOutcome {
        success: miss <= basket_radius,
        miss_distance: miss,
        t_cross,
        ee_at_cross: ee,
    })
}

pub const TRACE_CSV_HEADER: &str = "t,x,y,z,vx,vy,vz";

pub fn write_trace_csv<W: Write>(mut out: W, trace: &[TraceSample]) -> std::io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for s in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_sig(s.t),
            fmt_sig(s.position.x),
            fmt_sig(s.position.y),
            fmt_sig(s.position.z),
            fmt_sig(s.velocity.x),
            fmt_sig(s.velocity.y),
            fmt_sig(s.velocity.z)
        )?;
    }
    Ok(())
}

/// Distance covered toward a far static goal within `budget` seconds,
/// starting at rest.
pub fn travel_envelope(cfg: &ControllerConfig, budget: f64) -> f64 {
    let dt = 1.0 / CONTROL_RATE;
    let mut state = RobotState::at_home(cfg);
    state.workspace = Workspace {
        min: Vec3::new(-100.0, -100.0, -100.0),
        max: Vec3::new(100.0, 100.0, 100.0),
    };
    let goal = cfg.home + Vec3::new(50.0, 0.0, 0.0);
    let steps = (budget * CONTROL_RATE).round() as usize;
    for _ in 0..steps {
        let cmd = control_step(cfg, &state, goal, dt);
        state.advance(cmd, dt);
    }
    (state.position - cfg.home).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::PredictorKind;

    const DT: f64 = 1e-3;

    #[test]
    fn at_goal_commands_zero() {
        let cfg = ControllerConfig::default();
        let s = RobotState::at_home(&cfg);
        assert_eq!(control_step(&cfg, &s, cfg.home, DT), Vec3::ZERO);
    }

    #[test]
    fn saturates_after_ramp() {
        let cfg = ControllerConfig {
            v_max: 1.5,
            workspace: Workspace {
                min: Vec3::new(-5.0, -5.0, -5.0),
                max: Vec3::new(5.0, 5.0, 5.0),
            },
            ..ControllerConfig::default()
        };
        let mut s = RobotState::at_home(&cfg);
        s.v_max = 1.5;
        let goal = cfg.home + Vec3::new(1.0, 0.0, 0.0);
        let mut peak: f64 = 0.0;
        let mut prev = Vec3::ZERO;
        for _ in 0..1000 {
            let c = control_step(&cfg, &s, goal, DT);
            assert!((c.x - prev.x).abs() <= cfg.a_max * DT + 1e-12);
            assert!(c.x.abs() <= 1.5);
            prev = c;
            s.advance(c, DT);
            peak = peak.max(c.x);
        }
        assert_eq!(peak, 1.5);
    }

    #[test]
    fn static_goal_converges_without_overshoot() {
        let cfg = ControllerConfig::default();
        let mut s = RobotState::at_home(&cfg);
        let goal = cfg.home + Vec3::new(0.3, -0.2, 0.0);
        let d0 = (goal - s.position).norm();
        let bound = d0 / cfg.v_max + 2.0 * cfg.v_max / cfg.a_max + 0.05;
        let ramp = cfg.v_max / cfg.a_max;
        let mut prev = d0;
        let mut reached = None;
        for k in 1..=3000 {
            let c = control_step(&cfg, &s, goal, DT);
            s.advance(c, DT);
            let d = (goal - s.position).norm();
            let t = k as f64 * DT;
            if t > ramp {
                assert!(d <= prev + 1e-12, "distance grew at t={t}: {prev} -> {d}");
            }
            prev = d;
            if reached.is_none() && (goal - s.position).to_array().iter().all(|e| e.abs() < cfg.deadband) {
                reached = Some(t);
            }
        }
        assert!(reached.expect("reaches deadband") <= bound);
    }

    #[test]
    fn goal_update_inserts_plane_and_clamps() {
        let cfg = ControllerConfig::default();
        let p = InterceptionPoint {
            x: 0.2,
            y: 0.5,
            z_plane: -0.4,
            t_cross: None,
            source: PredictorKind::Ballistic,
        };
        assert_eq!(update_goal(&cfg, &p), (Vec3::new(0.2, 0.5, -0.4), false));
        let far = InterceptionPoint { x: 3.0, ..p };
        let (g, flagged) = update_goal(&cfg, &far);
        assert!(flagged);
        assert_eq!(g.x, cfg.workspace.max.x);
    }

    #[test]
    fn envelope_calibration() {
        // Long throw: 1.206 s TOF minus 176 ms inference latency.
        let cfg = ControllerConfig::default();
        let long = travel_envelope(&cfg, 1.206 - 0.176);
        assert!((long - 0.60).abs() <= 0.03, "long-throw envelope {long}");
        let short = travel_envelope(&cfg, 0.974 - 0.176);
        assert!(short < long);
    }
}
