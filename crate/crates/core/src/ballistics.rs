//! Ground-truth physics of thrown objects in the robot frame.
//!
//! Frame convention: `x` horizontal, `y` vertical (up), `z` depth. The robot
//! sits near the origin and objects are thrown from positive `z` toward it.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;
/// Depth of the fixed catch plane.
pub const DEFAULT_CATCH_PLANE_Z: f64 = -0.4;
/// Integration step, one controller tick.
pub const DEFAULT_DT: f64 = 1e-3;
/// Simulations longer than this are treated as unreachable.
pub const MAX_SIM_TIME: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, other: Vec3, s: f64) -> Vec3 {
        self + (other - self) * s
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    /// Planar (x, y) distance, ignoring depth.
    pub fn planar_distance(self, other: Vec3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Launch state and environment of a single throw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrowParams {
    pub p0: Vec3,
    pub v0: Vec3,
    pub gravity: f64,
    /// Quadratic drag coefficient `k` in `a = -k |v| v`, units 1/m.
    pub drag_coeff: f64,
}

impl ThrowParams {
    pub fn new(p0: Vec3, v0: Vec3) -> Self {
        ThrowParams {
            p0,
            v0,
            gravity: STANDARD_GRAVITY,
            drag_coeff: 0.0,
        }
    }

    pub fn with_drag(mut self, drag_coeff: f64) -> Self {
        self.drag_coeff = drag_coeff;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.p0.is_finite() && self.v0.is_finite()) {
            return Err(Error::InvalidArgument("non-finite launch state".into()));
        }
        if !(self.gravity > 0.0 && self.gravity.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gravity must be positive, got {}",
                self.gravity
            )));
        }
        if !(self.drag_coeff >= 0.0 && self.drag_coeff.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "drag_coeff must be >= 0, got {}",
                self.drag_coeff
            )));
        }
        Ok(())
    }

    fn acceleration(&self, v: Vec3) -> Vec3 {
        let gravity = Vec3::new(0.0, -self.gravity, 0.0);
        if self.drag_coeff == 0.0 {
            gravity
        } else {
            gravity - v * (self.drag_coeff * v.norm())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    DepthReached,
    Floor,
}

/// Integrated ground-truth trajectory.
///
/// `samples` are spaced exactly `dt` apart starting at `t = 0`; `terminal` is
/// the state interpolated onto the stop condition, strictly after the last
/// sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueTrajectory {
    pub samples: Vec<TrajectorySample>,
    pub terminal: TrajectorySample,
    pub dt: f64,
    pub stop: StopReason,
}

impl TrueTrajectory {
    /// Samples followed by the terminal state.
    pub fn states(&self) -> impl Iterator<Item = &TrajectorySample> + '_ {
        self.samples.iter().chain(std::iter::once(&self.terminal))
    }

    pub fn end_time(&self) -> f64 {
        self.terminal.t
    }

    /// State at time `t` by cubic Hermite interpolation between bracketing
    /// samples. Clamped to the trajectory's time span.
    pub fn state_at(&self, t: f64) -> TrajectorySample {
        if t <= 0.0 {
            return self.samples[0];
        }
        if t >= self.terminal.t {
            return self.terminal;
        }
        let idx = ((t / self.dt).floor() as usize).min(self.samples.len() - 1);
        let a = &self.samples[idx];
        let b = self.samples.get(idx + 1).unwrap_or(&self.terminal);
        let h = b.t - a.t;
        let s = ((t - a.t) / h).clamp(0.0, 1.0);
        hermite(a, b, s)
    }
}

fn hermite(a: &TrajectorySample, b: &TrajectorySample, s: f64) -> TrajectorySample {
    let h = b.t - a.t;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let position =
        a.position * h00 + a.velocity * (h10 * h) + b.position * h01 + b.velocity * (h11 * h);
    // derivative of the Hermite basis, divided by h
    let d00 = (6.0 * s2 - 6.0 * s) / h;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = (-6.0 * s2 + 6.0 * s) / h;
    let d11 = 3.0 * s2 - 2.0 * s;
    let velocity = a.position * d00 + a.velocity * d10 + b.position * d01 + b.velocity * d11;
    TrajectorySample {
        t: a.t + s * h,
        position,
        velocity,
    }
}

/// Drag-free closed-form state at time `t`.
pub fn analytic_state(params: &ThrowParams, t: f64) -> Result<(Vec3, Vec3)> {
    params.validate()?;
    if params.drag_coeff != 0.0 {
        return Err(Error::DragNotSupported(params.drag_coeff));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let g = params.gravity;
    let position = params.p0 + params.v0 * t + Vec3::new(0.0, -0.5 * g * t * t, 0.0);
    let velocity = params.v0 + Vec3::new(0.0, -g * t, 0.0);
    Ok((position, velocity))
}

fn rk4_step(params: &ThrowParams, p: Vec3, v: Vec3, dt: f64) -> (Vec3, Vec3) {
    let k1v = params.acceleration(v);
    let k1p = v;
    let v2 = v + k1v * (dt / 2.0);
    let k2v = params.acceleration(v2);
    let k2p = v2;
    let v3 = v + k2v * (dt / 2.0);
    let k3v = params.acceleration(v3);
    let k3p = v3;
    let v4 = v + k3v * dt;
    let k4v = params.acceleration(v4);
    let k4p = v4;
    let p_next = p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (dt / 6.0);
    let v_next = v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
    (p_next, v_next)
}

/// Integrates a throw with fixed-step RK4 until it reaches depth `z_stop` or
/// the floor.
pub fn simulate_throw(params: &ThrowParams, dt: f64, z_stop: f64) -> Result<TrueTrajectory> {
    params.validate()?;
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::InvalidArgument(format!(
            "dt must be in (0, 0.01], got {dt}"
        )));
    }
    if !(z_stop < params.p0.z) {
        return Err(Error::InvalidArgument(format!(
            "z_stop {z_stop} must be below launch depth {}",
            params.p0.z
        )));
    }
    if params.p0.y <= 0.0 {
        return Err(Error::InvalidArgument("launch below the floor".into()));
    }
    // Neither gravity nor drag can create depth motion toward the robot.
    if params.v0.z >= 0.0 {
        return Err(Error::Unreachable(format!(
            "depth velocity {} never approaches z_stop",
            params.v0.z
        )));
    }

    let max_steps = (MAX_SIM_TIME / dt).ceil() as usize;
    let mut samples = Vec::with_capacity(((params.p0.z - z_stop) / -params.v0.z / dt) as usize + 2);
    let mut prev = TrajectorySample {
        t: 0.0,
        position: params.p0,
        velocity: params.v0,
    };
    samples.push(prev);
    for step in 1..=max_steps {
        let (p, v) = rk4_step(params, prev.position, prev.velocity, dt);
        let next = TrajectorySample {
            t: step as f64 * dt,
            position: p,
            velocity: v,
        };
        let depth_hit = next.position.z <= z_stop;
        let floor_hit = next.position.y <= 0.0;
        if depth_hit || floor_hit {
            let fz = if depth_hit {
                (prev.position.z - z_stop) / (prev.position.z - next.position.z)
            } else {
                f64::INFINITY
            };
            let fy = if floor_hit {
                prev.position.y / (prev.position.y - next.position.y)
            } else {
                f64::INFINITY
            };
            let (frac, stop) = if fz <= fy {
                (fz, StopReason::DepthReached)
            } else {
                (fy, StopReason::Floor)
            };
            let frac = frac.clamp(0.0, 1.0);
            let mut terminal = TrajectorySample {
                t: prev.t + frac * dt,
                position: prev.position.lerp(next.position, frac),
                velocity: prev.velocity.lerp(next.velocity, frac),
            };
            match stop {
                StopReason::DepthReached => terminal.position.z = z_stop,
                StopReason::Floor => terminal.position.y = 0.0,
            }
            if frac == 0.0 {
                // stop condition met exactly on the previous sample
                samples.pop();
                if samples.is_empty() {
                    return Err(Error::InvalidArgument(
                        "launch state already satisfies the stop condition".into(),
                    ));
                }
            }
            return Ok(TrueTrajectory {
                samples,
                terminal,
                dt,
                stop,
            });
        }
        samples.push(next);
        prev = next;
    }
    Err(Error::Unreachable(format!(
        "z_stop {z_stop} not reached within {MAX_SIM_TIME} s"
    )))
}

/// Time and point where the trajectory crosses depth `z_plane`.
///
/// The bracketing pair is found by scanning; the crossing time is found on the
/// cubic Hermite interpolant (which reduces to linear interpolation when depth
/// motion is linear), and the point is evaluated on the same interpolant.
pub fn plane_crossing(trajectory: &TrueTrajectory, z_plane: f64) -> Result<(f64, Vec3)> {
    let states: Vec<&TrajectorySample> = trajectory.states().collect();
    for pair in states.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.position.z == z_plane {
            return Ok((a.t, a.position));
        }
        if a.position.z > z_plane && b.position.z <= z_plane {
            let mut s = (a.position.z - z_plane) / (a.position.z - b.position.z);
            for _ in 0..8 {
                let st = hermite(a, b, s);
                let f = st.position.z - z_plane;
                let dfds = st.velocity.z * (b.t - a.t);
                if f == 0.0 || dfds == 0.0 {
                    break;
                }
                let next = (s - f / dfds).clamp(0.0, 1.0);
                if (next - s).abs() < 1e-15 {
                    s = next;
                    break;
                }
                s = next;
            }
            let st = hermite(a, b, s);
            let mut point = st.position;
            point.z = z_plane;
            return Ok((st.t, point));
        }
    }
    Err(Error::PlaneNotCrossed(z_plane))
}

/// Launch geometry shared by calibrated throws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThrowSetup {
    /// Launch (x, y); launch depth is `z_plane + distance`.
    pub launch_x: f64,
    pub launch_y: f64,
    pub z_plane: f64,
    pub gravity: f64,
}

impl Default for ThrowSetup {
    fn default() -> Self {
        ThrowSetup {
            launch_x: 0.0,
            launch_y: 1.5,
            z_plane: DEFAULT_CATCH_PLANE_Z,
            gravity: STANDARD_GRAVITY,
        }
    }
}

/// Drag-free throw with the default launch geometry.
pub fn calibrate_throw(distance: f64, target_tof: f64, apex_height: f64) -> Result<ThrowParams> {
    calibrate_throw_with(&ThrowSetup::default(), distance, target_tof, apex_height)
}

/// Drag-free throw covering `distance` of depth in `target_tof`. The vertical
/// speed is the larger of the one rising `apex_height` above the launch point
/// and the one returning to launch height at `target_tof`.
pub fn calibrate_throw_with(
    setup: &ThrowSetup,
    distance: f64,
    target_tof: f64,
    apex_height: f64,
) -> Result<ThrowParams> {
    if !(distance > 0.0 && target_tof > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distance and target_tof must be positive (got {distance}, {target_tof})"
        )));
    }
    if !(apex_height >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "infeasible apex height {apex_height}"
        )));
    }
    let p0 = Vec3::new(setup.launch_x, setup.launch_y, setup.z_plane + distance);
    let v0 = Vec3::new(
        0.0,
        (2.0 * setup.gravity * apex_height)
            .sqrt()
            .max(0.5 * setup.gravity * target_tof),
        -distance / target_tof,
    );
    Ok(ThrowParams {
        p0,
        v0,
        gravity: setup.gravity,
        drag_coeff: 0.0,
    })
}

/// Rescales the depth velocity of `params` by bisection so the plane crossing
/// happens at `target_tof` under the params' own drag.
pub fn rescale_for_tof(
    params: &ThrowParams,
    z_plane: f64,
    target_tof: f64,
    dt: f64,
) -> Result<ThrowParams> {
    let tof_for = |scale: f64| -> Result<f64> {
        let mut p = *params;
        p.v0.z *= scale;
        let traj = simulate_throw(&p, dt, z_plane - 0.05)?;
        Ok(plane_crossing(&traj, z_plane)?.0)
    };
    let (mut lo, mut hi) = (0.5, 1.0);
    while tof_for(hi)? > target_tof {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::Unreachable(format!(
                "cannot reach TOF {target_tof} s by speeding up the throw"
            )));
        }
    }
    while tof_for(lo)? < target_tof {
        hi = lo;
        lo *= 0.5;
        if lo < 1e-3 {
            return Err(Error::Unreachable(format!(
                "cannot reach TOF {target_tof} s by slowing down the throw"
            )));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if tof_for(mid)? > target_tof {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let mut p = *params;
    p.v0.z *= 0.5 * (lo + hi);
    Ok(p)
}

/// Solves for the launch velocity that crosses the catch plane at
/// `(aim_x, aim_y)` after `tof` seconds, with quadratic drag `drag_coeff`.
///
/// Drag-free throws are solved in closed form; with drag the closed-form
/// solution seeds a fixed-point correction on the integrated trajectory.
pub fn aim_throw(
    setup: &ThrowSetup,
    distance: f64,
    tof: f64,
    aim_x: f64,
    aim_y: f64,
    drag_coeff: f64,
    dt: f64,
) -> Result<ThrowParams> {
    if !(distance > 0.0 && tof > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distance and tof must be positive (got {distance}, {tof})"
        )));
    }
    let g = setup.gravity;
    let p0 = Vec3::new(setup.launch_x, setup.launch_y, setup.z_plane + distance);
    let mut params = ThrowParams {
        p0,
        v0: Vec3::new(
            (aim_x - p0.x) / tof,
            (aim_y - p0.y + 0.5 * g * tof * tof) / tof,
            -distance / tof,
        ),
        gravity: g,
        drag_coeff,
    };
    if drag_coeff == 0.0 {
        return Ok(params);
    }
    // Continuation in the drag coefficient keeps each Newton solve seeded
    // close to its root.
    const STAGES: usize = 4;
    for stage in 1..=STAGES {
        params.drag_coeff = drag_coeff * stage as f64 / STAGES as f64;
        if newton_aim(&mut params, setup.z_plane, [aim_x, aim_y, tof], dt)? {
            if stage == STAGES {
                return Ok(params);
            }
        } else {
            break;
        }
    }
    Err(Error::Unreachable(format!(
        "aim ({aim_x}, {aim_y}) at TOF {tof} s did not converge under drag {drag_coeff}"
    )))
}

/// Newton iterations with a forward-difference Jacobian on
/// `(crossing x, crossing y, crossing time)`. Returns whether it converged.
fn newton_aim(params: &mut ThrowParams, z_plane: f64, target: [f64; 3], dt: f64) -> Result<bool> {
    // Motion does not depend on height, so iterates are evaluated on a
    // lifted copy that cannot reach the floor.
    const LIFT: f64 = 10.0;
    let residual = |v0: Vec3| -> Result<[f64; 3]> {
        let mut p = ThrowParams { v0, ..*params };
        p.p0.y += LIFT;
        let traj = simulate_throw(&p, dt, z_plane - 0.05)?;
        let (t, point) = plane_crossing(&traj, z_plane)?;
        Ok([point.x - target[0], point.y - LIFT - target[1], t - target[2]])
    };
    for _ in 0..30 {
        let r = residual(params.v0)?;
        if r.iter().all(|e| e.abs() < 1e-10) {
            return Ok(true);
        }
        let base = params.v0.to_array();
        let mut jac = [[0.0; 3]; 3];
        for col in 0..3 {
            let mut v = base;
            let h = 1e-6 * v[col].abs().max(1.0);
            v[col] += h;
            let rp = residual(Vec3::from_array(v))?;
            for row in 0..3 {
                jac[row][col] = (rp[row] - r[row]) / h;
            }
        }
        let Some(step) = solve3(jac, r) else {
            return Ok(false);
        };
        params.v0 = Vec3::new(base[0] - step[0], base[1] - step[1], base[2] - step[2]);
    }
    Ok(false)
}

/// Cramer's rule for a 3x3 system.
fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut x = [0.0; 3];
    for (col, xi) in x.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *xi = det(m) / d;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn analytic_identity_at_zero() {
        let p = ThrowParams::new(Vec3::new(0.0, 1.0, 5.0), Vec3::ZERO);
        let (pos, _) = analytic_state(&p, 0.0).unwrap();
        assert_eq!(pos, Vec3::new(0.0, 1.0, 5.0));
    }

    #[test]
    fn analytic_free_fall() {
        let p = ThrowParams::new(Vec3::new(0.0, 1.5, 5.0), Vec3::ZERO);
        let (pos, vel) = analytic_state(&p, 0.5).unwrap();
        assert_close(pos.y, 0.27375, 1e-12);
        assert_eq!((pos.x, pos.z), (0.0, 5.0));
        assert_close(vel.y, -4.905, 1e-12);
    }

    #[test]
    fn analytic_hand_evaluated() {
        let p = ThrowParams::new(Vec3::new(0.0, 1.5, 5.6), Vec3::new(1.0, 3.0, -5.0));
        let (pos, _) = analytic_state(&p, 0.6).unwrap();
        assert_close(pos.x, 0.6, 1e-12);
        assert_close(pos.z, 2.6, 1e-12);
        assert_close(pos.y, 1.5342, 1e-12);
    }

    #[test]
    fn analytic_rejects_drag() {
        let p = ThrowParams::new(Vec3::new(0.0, 1.5, 5.6), Vec3::new(1.0, 3.0, -5.0)).with_drag(0.03);
        assert!(matches!(analytic_state(&p, 0.1), Err(Error::DragNotSupported(_))));
    }

    #[test]
    fn zero_depth_velocity_is_unreachable() {
        let p = ThrowParams::new(Vec3::new(0.0, 1.5, 5.0), Vec3::ZERO);
        assert!(matches!(simulate_throw(&p, 1e-3, 0.0), Err(Error::Unreachable(_))));
    }

    #[test]
    fn rejects_bad_dt() {
        let p = ThrowParams::new(Vec3::new(0.0, 1.5, 5.0), Vec3::new(0.0, 3.0, -5.0));
        assert!(simulate_throw(&p, 0.0, 0.0).is_err());
        assert!(simulate_throw(&p, 0.02, 0.0).is_err());
    }

    #[test]
    fn integrator_matches_closed_form() {
        let p = ThrowParams::new(Vec3::new(0.2, 1.5, 5.6), Vec3::new(0.3, 6.0, -5.0));
        let traj = simulate_throw(&p, 1e-3, -0.6).unwrap();
        assert_eq!(traj.stop, StopReason::DepthReached);
        for s in &traj.samples {
            let (pos, vel) = analytic_state(&p, s.t).unwrap();
            assert!((s.position - pos).norm() < 1e-6);
            assert!((s.velocity - vel).norm() < 1e-6);
        }
        for w in traj.samples.windows(2) {
            assert_close(w[1].t - w[0].t, 1e-3, 1e-12);
        }
        assert!(traj.terminal.t > traj.samples.last().unwrap().t);
        assert_close(traj.terminal.position.z, -0.6, 1e-12);
    }

    #[test]
    fn drag_delays_crossing() {
        let p = ThrowParams::new(Vec3::new(0.0, 1.5, 5.6), Vec3::new(0.0, 6.0, -5.0));
        let free = simulate_throw(&p, 1e-3, -0.4).unwrap();
        let dragged = simulate_throw(&p.with_drag(0.03), 1e-3, -0.4).unwrap();
        assert!(dragged.terminal.t > free.terminal.t);
    }

    #[test]
    fn floor_terminates() {
        let p = ThrowParams::new(Vec3::new(0.0, 0.5, 5.6), Vec3::new(0.0, 0.0, -1.0));
        let traj = simulate_throw(&p, 1e-3, -0.4).unwrap();
        assert_eq!(traj.stop, StopReason::Floor);
        assert_eq!(traj.terminal.position.y, 0.0);
        assert!(matches!(plane_crossing(&traj, -0.4), Err(Error::PlaneNotCrossed(_))));
    }

    #[test]
    fn crossing_constant_depth_velocity() {
        let p = ThrowParams::new(Vec3::new(0.0, 1.5, 5.6), Vec3::new(0.0, 6.0, -5.0));
        let traj = simulate_throw(&p, 1e-3, -0.5).unwrap();
        let (t, point) = plane_crossing(&traj, DEFAULT_CATCH_PLANE_Z).unwrap();
        assert_close(t, 1.2, 1e-12);
        let (truth, _) = analytic_state(&p, t).unwrap();
        assert!((point - truth).norm() < 1e-6);
    }

    #[test]
    fn calibrated_velocities() {
        let a = calibrate_throw(5.12, 0.974, 0.5).unwrap();
        assert_close(a.v0.z, -5.12 / 0.974, 1e-12);
        assert_close(a.v0.z, -5.257, 1e-3);
        let b = calibrate_throw(6.70, 1.206, 0.5).unwrap();
        assert_close(b.v0.z, -5.555, 1e-3);
        assert!(matches!(calibrate_throw(5.0, 1.0, -0.1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn calibrated_unit_throw_round_trip() {
        let p = calibrate_throw(1.0, 1.0, 0.0).unwrap();
        assert_eq!(p.v0.z, -1.0);
        let traj = simulate_throw(&p, 1e-3, -0.5).unwrap();
        let (t, _) = plane_crossing(&traj, DEFAULT_CATCH_PLANE_Z).unwrap();
        assert_close(t, 1.0, 1e-6);
    }

    #[test]
    fn rescale_matches_tof_under_drag() {
        let p = calibrate_throw(6.70, 1.206, 0.6).unwrap().with_drag(0.03);
        let p = rescale_for_tof(&p, DEFAULT_CATCH_PLANE_Z, 1.206, 1e-3).unwrap();
        let traj = simulate_throw(&p, 1e-3, -0.5).unwrap();
        assert_close(plane_crossing(&traj, DEFAULT_CATCH_PLANE_Z).unwrap().0, 1.206, 1e-6);
    }

    #[test]
    fn aimed_throw_hits_under_drag() {
        let setup = ThrowSetup::default();
        let p = aim_throw(&setup, 5.12, 0.974, 0.2, 0.5, 0.03, 1e-3).unwrap();
        let traj = simulate_throw(&p, 1e-3, -0.5).unwrap();
        let (t, point) = plane_crossing(&traj, setup.z_plane).unwrap();
        assert_close(t, 0.974, 1e-6);
        assert_close(point.x, 0.2, 1e-6);
        assert_close(point.y, 0.5, 1e-6);
    }
}
