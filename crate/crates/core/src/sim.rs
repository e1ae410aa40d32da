//! World-frame unicycle simulation around an obstacle at the origin, with
//! safe-set landing, violation counting and principal-set monitors.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{nominal_control, safe_control, ControlError, NominalGains};
use crate::safety_index::SafetyIndex;
use crate::scalar::Scalar;
use crate::system::unicycle::{to_symbolic_state, UnicycleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldState<T> {
    pub position: [T; 2],
    pub heading: T,
    pub speed: T,
}

/// `(d, v, α, β)` relative to the obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeState<T> {
    pub d: T,
    pub v: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> RelativeState<T> {
    pub fn to_vec(&self) -> [T; 4] {
        [self.d, self.v, self.alpha, self.beta]
    }

    /// Inverse of [`WorldState::relative`].
    pub fn to_world(&self) -> WorldState<T> {
        let pi = T::lit(std::f64::consts::PI);
        WorldState {
            position: [self.d * self.beta.cos(), self.d * self.beta.sin()],
            heading: crate::controller::wrap_angle(self.alpha + self.beta + pi),
            speed: self.v,
        }
    }
}

impl<T: Scalar> WorldState<T> {
    /// β is the obstacle-to-agent bearing, α the heading measured from the
    /// direction pointing back at the obstacle.
    pub fn relative(&self) -> RelativeState<T> {
        let [px, py] = self.position;
        let beta = py.atan2(px);
        let pi = T::lit(std::f64::consts::PI);
        RelativeState {
            d: px.hypot(py),
            v: self.speed,
            alpha: crate::controller::wrap_angle(self.heading - beta - pi),
            beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("agent reached the obstacle centre (d = {0:e})")]
    Collision(f64),
    #[error(transparent)]
    Control(#[from] ControlError),
}

const COLLISION_GUARD: f64 = 1e-6;

/// One explicit Euler step with `u = [a, w]`; heading rate is `w + β̇`.
pub fn step<T: Scalar>(world: &WorldState<T>, u: &[T], dt: T) -> Result<WorldState<T>, SimError> {
    let rel = world.relative();
    if rel.d < T::lit(COLLISION_GUARD) {
        return Err(SimError::Collision(rel.d.to_f64_lossy()));
    }
    let beta_dot = -rel.v * rel.alpha.sin() / rel.d;
    let (s, c) = world.heading.sin_cos();
    Ok(WorldState {
        position: [
            world.position[0] + dt * world.speed * c,
            world.position[1] + dt * world.speed * s,
        ],
        heading: world.heading + dt * (u[1] + beta_dot),
        speed: world.speed + dt * u[0],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub trials: usize,
    /// Seconds.
    pub horizon: f64,
    pub seed: u64,
    pub gains: NominalGains,
    /// Initial distance range as multiples of `d_min`.
    pub initial_distance: [f64; 2],
    pub initial_speed: [f64; 2],
    /// Goal distance range (multiples of `d_min`), on the far side of the obstacle.
    pub goal_distance: [f64; 2],
    /// Half-width of the goal bearing window around the antipode, radians.
    pub goal_spread: f64,
    pub goal_tolerance: f64,
    /// Added to `φₙ(0)/η` in the finite-time landing check, seconds.
    pub entry_slack: f64,
    pub record_trajectories: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            horizon: 30.0,
            seed: 0,
            gains: NominalGains::default(),
            initial_distance: [1.5, 5.0],
            initial_speed: [0.0, 0.0],
            goal_distance: [1.5, 5.0],
            goal_spread: 0.25,
            goal_tolerance: 0.1,
            entry_slack: 1.0,
            record_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub px: f64,
    pub py: f64,
    pub psi: f64,
    pub v: f64,
    pub d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub w: f64,
    /// `φ₀ … φₙ` before the step.
    pub phis: Vec<f64>,
    pub constraint_active: bool,
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let order = rows.first().map_or(1, |r| r.phis.len().saturating_sub(1));
    let mut out = String::from("t,px,py,psi,v,d,alpha,beta,a,w");
    for j in 0..=order {
        let _ = write!(out, ",phi{j}");
    }
    out.push_str(",constraint_active\n");
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t, r.px, r.py, r.psi, r.v, r.d, r.alpha, r.beta, r.a, r.w
        );
        for p in &r.phis {
            let _ = write!(out, ",{p}");
        }
        let _ = writeln!(out, ",{}", u8::from(r.constraint_active));
    }
    out
}

/// Forward-invariance check for one principal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalMonitor {
    pub m: usize,
    pub entry_step: Option<usize>,
    /// Largest `φⱼ` over the indices defining the set, after entry.
    pub max_overshoot: f64,
    pub first_failure: Option<usize>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtcMonitor {
    pub initial_phi: f64,
    /// Deadline for entering the safe set, when the trial starts outside it.
    pub deadline: Option<f64>,
    pub entry_time: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub eps_disc: f64,
    pub principal: Vec<PrincipalMonitor>,
    pub ftc: FtcMonitor,
}

impl MonitorReport {
    pub fn passed(&self) -> bool {
        self.ftc.passed && self.principal.iter().all(|p| p.passed)
    }
}

/// Evaluates the invariance and landing monitors over a recorded trajectory.
///
/// `ε_disc` is ten times the largest one-step change of any `φⱼ`.
pub fn monitors(rows: &[TrajectoryRow], eta: f64, entry_slack: f64) -> MonitorReport {
    let n = rows.first().map_or(0, |r| r.phis.len().saturating_sub(1));
    let eps_disc = 10.0
        * rows
            .windows(2)
            .flat_map(|w| w[0].phis.iter().zip(&w[1].phis).map(|(a, b)| (b - a).abs()))
            .fold(0.0, f64::max);
    let principal = (0..=n)
        .map(|m| {
            let idx = n - m..=n;
            let inside = |r: &TrajectoryRow| idx.clone().all(|j| r.phis[j] <= 0.0);
            let entry_step = rows.iter().position(inside);
            let mut max_overshoot = f64::NEG_INFINITY;
            let mut first_failure = None;
            if let Some(e) = entry_step {
                for (s, r) in rows.iter().enumerate().skip(e) {
                    let worst = idx.clone().map(|j| r.phis[j]).fold(f64::NEG_INFINITY, f64::max);
                    max_overshoot = max_overshoot.max(worst);
                    if worst > eps_disc && first_failure.is_none() {
                        first_failure = Some(s);
                    }
                }
            }
            PrincipalMonitor {
                m,
                entry_step,
                max_overshoot,
                first_failure,
                passed: first_failure.is_none(),
            }
        })
        .collect();
    let initial_phi = rows.first().map_or(f64::NAN, |r| r.phis[n]);
    let starts_inside = rows.first().is_some_and(|r| r.phis.iter().all(|&p| p <= 0.0));
    let entry_time = rows
        .iter()
        .position(|r| r.phis.iter().all(|&p| p <= 0.0))
        .map(|s| rows[s].t);
    let deadline = (!starts_inside).then(|| initial_phi.max(0.0) / eta + entry_slack);
    let passed = match (deadline, entry_time) {
        (None, _) => true,
        (Some(dl), Some(t)) => t <= dl,
        (Some(_), None) => false,
    };
    MonitorReport {
        eps_disc,
        principal,
        ftc: FtcMonitor {
            initial_phi,
            deadline,
            entry_time,
            passed,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub index: usize,
    /// Initial `[d, v, α, β]`.
    pub initial: [f64; 4],
    pub goal: [f64; 2],
    pub landed_in_safe_set: bool,
    pub first_entry_time: Option<f64>,
    /// Steps with `φ₀ > 0` strictly after first entry.
    pub violations_after_entry: usize,
    pub monitors: MonitorReport,
    pub reached_goal: bool,
    pub steps: usize,
    /// Set when the trial aborted (no admissible control, collision).
    pub failure: Option<String>,
    #[serde(skip)]
    pub trajectory: Option<Vec<TrajectoryRow>>,
}

impl TrialReport {
    pub fn safe(&self) -> bool {
        self.failure.is_none() && self.landed_in_safe_set && self.violations_after_entry == 0 && self.monitors.passed()
    }
}

fn sample_range(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

/// Initial world state and goal for trial `index`.
pub fn sample_task(params: &UnicycleParams, cfg: &SimConfig, index: usize) -> (WorldState<f64>, [f64; 2]) {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let d0 = params.d_min * sample_range(&mut rng, cfg.initial_distance);
    let beta = rng.gen_range(-PI..PI);
    let alpha = rng.gen_range(-PI..PI);
    let v = sample_range(&mut rng, cfg.initial_speed).clamp(params.v_min, params.v_max);
    let world = RelativeState { d: d0, v, alpha, beta }.to_world();
    let gd = params.d_min * sample_range(&mut rng, cfg.goal_distance);
    let gb = beta + PI + cfg.goal_spread * rng.gen_range(-1.0..=1.0);
    (world, [gd * gb.cos(), gd * gb.sin()])
}

/// Runs one trial of the navigation task under the safe control law.
pub fn run_trial<T: Scalar>(idx: &SafetyIndex<T>, params: &UnicycleParams, cfg: &SimConfig, index: usize) -> TrialReport {
    let (w0, goal) = sample_task(params, cfg, index);
    let lit = |x: f64| T::lit(x);
    let mut world = WorldState {
        position: [lit(w0.position[0]), lit(w0.position[1])],
        heading: lit(w0.heading),
        speed: lit(w0.speed),
    };
    let goal_t = [lit(goal[0]), lit(goal[1])];
    let dt = params.dt;
    let steps = (cfg.horizon / dt).round() as usize;
    let n = idx.order();
    let mut rows = Vec::with_capacity(steps + 1);
    let mut failure = None;
    let mut reached_goal = false;
    let f = |x: T| x.to_f64_lossy();
    for s in 0..=steps {
        let rel = world.relative();
        let sym = to_symbolic_state(&rel.to_vec());
        let phis: Vec<f64> = (0..=n).map(|j| f(idx.phi_j(j, &sym))).collect();
        let mut row = TrajectoryRow {
            t: s as f64 * dt,
            px: f(world.position[0]),
            py: f(world.position[1]),
            psi: f(world.heading),
            v: f(world.speed),
            d: f(rel.d),
            alpha: f(rel.alpha),
            beta: f(rel.beta),
            a: 0.0,
            w: 0.0,
            phis,
            constraint_active: false,
        };
        let gdist = (goal_t[0] - world.position[0]).hypot(goal_t[1] - world.position[1]);
        if gdist < lit(cfg.goal_tolerance) {
            reached_goal = true;
        }
        if s == steps || reached_goal {
            rows.push(row);
            break;
        }
        let outcome = idx
            .system()
            .control_box(&sym)
            .map_err(|e| SimError::Control(e.into()))
            .and_then(|(lo, hi)| {
                let u_ref = nominal_control(&world, goal_t, &cfg.gains, lit(params.v_max), &lo, &hi);
                Ok(safe_control(idx, &sym, &u_ref)?)
            })
            .and_then(|r| {
                let next = step(&world, &r.u, lit(dt))?;
                Ok((r, next))
            });
        match outcome {
            Ok((r, mut next)) => {
                row.a = f(r.u[0]);
                row.w = f(r.u[1]);
                row.constraint_active = r.constraint_active;
                // Euler on v is exact up to rounding under the state-dependent a-bounds
                next.speed = next.speed.max(lit(params.v_min)).min(lit(params.v_max));
                rows.push(row);
                world = next;
            }
            Err(e) => {
                failure = Some(format!("step {s}: {e}"));
                rows.push(row);
                break;
            }
        }
    }
    let entry = rows.iter().position(|r| r.phis.iter().all(|&p| p <= 0.0));
    let violations_after_entry = entry.map_or(0, |e| rows[e + 1..].iter().filter(|r| r.phis[0] > 0.0).count());
    let monitors = monitors(&rows, idx.params().eta().to_f64_lossy(), cfg.entry_slack);
    let rel0 = w0.relative();
    TrialReport {
        index,
        initial: rel0.to_vec(),
        goal,
        landed_in_safe_set: entry.is_some(),
        first_entry_time: entry.map(|e| rows[e].t),
        violations_after_entry,
        monitors,
        reached_goal,
        steps: rows.len() - 1,
        failure,
        trajectory: cfg.record_trajectories.then_some(rows),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub seed: u64,
    /// Gains of the index under test.
    pub k: Vec<f64>,
    pub trials: Vec<TrialReport>,
}

impl BatchReport {
    pub fn landed_percent(&self) -> f64 {
        if self.trials.is_empty() {
            return 100.0;
        }
        100.0 * self.trials.iter().filter(|t| t.landed_in_safe_set).count() as f64 / self.trials.len() as f64
    }

    /// Mean and population standard deviation of post-entry violations.
    pub fn violations(&self) -> (f64, f64) {
        let n = self.trials.len();
        if n == 0 {
            return (0.0, 0.0);
        }
        let xs: Vec<f64> = self.trials.iter().map(|t| t.violations_after_entry as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    }

    pub fn monitor_failures(&self) -> usize {
        self.trials.iter().filter(|t| !t.monitors.passed()).count()
    }

    pub fn aborted(&self) -> usize {
        self.trials.iter().filter(|t| t.failure.is_some()).count()
    }

    /// Trial indices that are not safe; replay with the batch seed.
    pub fn failing(&self) -> Vec<usize> {
        self.trials.iter().filter(|t| !t.safe()).map(|t| t.index).collect()
    }

    pub fn all_safe(&self) -> bool {
        self.trials.iter().all(TrialReport::safe)
    }

    /// Markdown summary: a results table followed by monitor totals.
    pub fn to_markdown(&self, solve_seconds: Option<f64>) -> String {
        let (vm, vs) = self.violations();
        let ks: Vec<String> = self.k.iter().map(|x| format!("{x:.4e}")).collect();
        let solve = solve_seconds.map_or("n/a".to_string(), |s| format!("{:.2} min", s / 60.0));
        let mut out = String::new();
        let _ = writeln!(out, "| k | Solve time | Safe Set (%) | Violations |");
        let _ = writeln!(out, "|---|---|---|---|");
        let _ = writeln!(
            out,
            "| {} | {} | {:.1} | {:.1} ± {:.1} |",
            ks.join(", "),
            solve,
            self.landed_percent(),
            vm,
            vs
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "- trials: {} (seed {})", self.trials.len(), self.seed);
        let _ = writeln!(out, "- goal reached: {}", self.trials.iter().filter(|t| t.reached_goal).count());
        let _ = writeln!(out, "- aborted: {}", self.aborted());
        let _ = writeln!(out, "- monitor failures: {}", self.monitor_failures());
        let max_eps = self.trials.iter().map(|t| t.monitors.eps_disc).fold(0.0, f64::max);
        let _ = writeln!(out, "- largest ε_disc: {max_eps:.4}");
        let failing = self.failing();
        if !failing.is_empty() {
            let list: Vec<String> = failing.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "- failing trials: {}", list.join(", "));
        }
        for t in &self.trials {
            if let Some(f) = &t.failure {
                let _ = writeln!(out, "  - trial {}: {f}", t.index);
            }
        }
        out
    }
}

/// Runs `cfg.trials` trials in parallel; the report is ordered by trial index.
pub fn run_batch<T: Scalar>(idx: &SafetyIndex<T>, params: &UnicycleParams, cfg: &SimConfig) -> BatchReport {
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(idx, params, cfg, i))
        .collect();
    BatchReport {
        seed: cfg.seed,
        k: idx.params().k().iter().map(|x| x.to_f64_lossy()).collect(),
        trials,
    }
}
