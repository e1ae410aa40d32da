//! Grid and random search for manifold states where no admissible control
//! achieves `φ̇ < -η`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::Vars;
use crate::safety_index::SafetyIndex;
use crate::scalar::Scalar;
use crate::system::SymbolicSystem;
use crate::system::unicycle::UnicycleParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FalsifierError {
    #[error("unknown state variable `{0}`")]
    UnknownVar(String),
    #[error("state variable `{0}` is not covered by any axis")]
    Uncovered(String),
    #[error("state variable `{0}` is covered twice")]
    Duplicate(String),
    #[error("axis {0}: need at least 2 points and lo <= hi")]
    BadAxis(usize),
}

/// One sampled coordinate. Angles drive a `(sin, cos)` pair so the identity holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Axis {
    /// `n` evenly spaced points including both ends.
    Linear { var: String, lo: f64, hi: f64, n: usize },
    /// `αᵢ = -π + 2πi/n`, `i < n`.
    Angle { sin: String, cos: String, n: usize },
}

impl Axis {
    pub fn len(&self) -> usize {
        match self {
            Axis::Linear { n, .. } | Axis::Angle { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self) -> String {
        match self {
            Axis::Linear { var, .. } => var.clone(),
            Axis::Angle { sin, cos, .. } => format!("angle({sin},{cos})"),
        }
    }

    /// Grid coordinate `i`.
    pub fn node(&self, i: usize) -> f64 {
        match *self {
            Axis::Linear { lo, hi, n, .. } => lo + (hi - lo) * i as f64 / (n - 1) as f64,
            Axis::Angle { n, .. } => -std::f64::consts::PI + std::f64::consts::TAU * i as f64 / n as f64,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Axis::Linear { lo, hi, .. } => rng.gen_range(lo..=hi),
            Axis::Angle { .. } => rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        }
    }

    /// Grid with every existing node kept.
    pub fn refined(&self) -> Axis {
        match self.clone() {
            Axis::Linear { var, lo, hi, n } => Axis::Linear { var, lo, hi, n: 2 * n - 1 },
            Axis::Angle { sin, cos, n } => Axis::Angle { sin, cos, n: 2 * n },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FalsifierConfig {
    pub axes: Vec<Axis>,
    pub random_samples: usize,
    /// A counterexample needs `worst φ̇ ≥ -η + slack`.
    pub slack: f64,
    pub seed: u64,
    /// Counterexamples kept after sorting; the total is always reported.
    pub max_reported: usize,
}

impl Default for FalsifierConfig {
    fn default() -> Self {
        Self::unicycle(&UnicycleParams::default(), 100)
    }
}

impl FalsifierConfig {
    /// `d ∈ [0.01, 5·d_min]`, full circle of headings, `v ∈ [v_min, v_max]`.
    pub fn unicycle(p: &UnicycleParams, n: usize) -> Self {
        Self {
            axes: vec![
                Axis::Linear {
                    var: "d".into(),
                    lo: 0.01,
                    hi: 5.0 * p.d_min,
                    n,
                },
                Axis::Angle {
                    sin: "sin_a".into(),
                    cos: "cos_a".into(),
                    n,
                },
                Axis::Linear {
                    var: "v".into(),
                    lo: p.v_min,
                    hi: p.v_max,
                    n,
                },
            ],
            random_samples: 10_000,
            slack: 1e-6,
            seed: 0,
            max_reported: 10_000,
        }
    }

    pub fn refined(&self) -> Self {
        Self {
            axes: self.axes.iter().map(Axis::refined).collect(),
            ..self.clone()
        }
    }

    pub fn grid_size(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    /// Axis coordinates (angles in radians).
    pub coords: Vec<f64>,
    /// Symbolic state vector.
    pub state: Vec<f64>,
    pub phi: f64,
    pub worst_phidot: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FalsifyReport {
    pub axis_names: Vec<String>,
    pub state_names: Vec<String>,
    pub counterexamples: Vec<Counterexample>,
    pub total_counterexamples: usize,
    pub evaluated: usize,
    pub on_manifold: usize,
    /// Points outside the state space or with an inverted control box.
    pub skipped: usize,
}

impl FalsifyReport {
    pub fn is_clean(&self) -> bool {
        self.total_counterexamples == 0
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.axis_names.join(",");
        for s in &self.state_names {
            out.push(',');
            out.push_str(s);
        }
        out.push_str(",phi,worst_phidot\n");
        for c in &self.counterexamples {
            let row: Vec<String> = c
                .coords
                .iter()
                .chain(&c.state)
                .chain([&c.phi, &c.worst_phidot])
                .map(|x| format!("{x}"))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Maps axis coordinates to a state vector.
struct Placement {
    /// Per axis: slot(s) in the state vector.
    slots: Vec<(usize, Option<usize>)>,
}

impl Placement {
    fn new<T: Scalar>(cfg: &FalsifierConfig, sys: &SymbolicSystem<T>, vars: &Vars) -> Result<Self, FalsifierError> {
        let slot_of = |name: &str| -> Result<usize, FalsifierError> {
            vars.get(name)
                .and_then(|v| sys.slot(v))
                .ok_or_else(|| FalsifierError::UnknownVar(name.to_string()))
        };
        let mut covered = vec![false; sys.state_dim()];
        let mut mark = |i: usize| -> Result<(), FalsifierError> {
            if std::mem::replace(&mut covered[i], true) {
                Err(FalsifierError::Duplicate(vars.name(sys.state_vars()[i]).to_string()))
            } else {
                Ok(())
            }
        };
        let mut slots = Vec::new();
        for (ai, axis) in cfg.axes.iter().enumerate() {
            match axis {
                Axis::Linear { var, lo, hi, n } => {
                    if *n < 2 || !(lo <= hi) {
                        return Err(FalsifierError::BadAxis(ai));
                    }
                    let s = slot_of(var)?;
                    mark(s)?;
                    slots.push((s, None));
                }
                Axis::Angle { sin, cos, n } => {
                    if *n < 2 {
                        return Err(FalsifierError::BadAxis(ai));
                    }
                    let (s, c) = (slot_of(sin)?, slot_of(cos)?);
                    mark(s)?;
                    mark(c)?;
                    slots.push((s, Some(c)));
                }
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(FalsifierError::Uncovered(vars.name(sys.state_vars()[i]).to_string()));
        }
        Ok(Self { slots })
    }

    fn state<T: Scalar>(&self, coords: &[f64], out: &mut [T]) {
        for (&(s, c), &x) in self.slots.iter().zip(coords) {
            match c {
                None => out[s] = T::lit(x),
                Some(c) => {
                    out[s] = T::lit(x.sin());
                    out[c] = T::lit(x.cos());
                }
            }
        }
    }
}

enum Outcome {
    Skipped,
    OffManifold,
    Fine,
    Violation(Counterexample),
}

fn probe<T: Scalar>(idx: &SafetyIndex<T>, placement: &Placement, coords: Vec<f64>, slack: T, buf: &mut Vec<T>) -> Outcome {
    placement.state(&coords, buf);
    let sys = idx.system();
    if !sys.in_state_space(buf) {
        return Outcome::Skipped;
    }
    let phi = idx.phi(buf);
    if phi < T::zero() {
        return Outcome::OffManifold;
    }
    let Ok(worst) = idx.worst_case_phidot(buf) else {
        return Outcome::Skipped;
    };
    if worst >= -idx.params().eta() + slack {
        Outcome::Violation(Counterexample {
            coords,
            state: buf.iter().map(|x| x.to_f64_lossy()).collect(),
            phi: phi.to_f64_lossy(),
            worst_phidot: worst.to_f64_lossy(),
        })
    } else {
        Outcome::Fine
    }
}

/// Evaluates every grid node and random sample.
pub fn falsify<T: Scalar>(
    idx: &SafetyIndex<T>,
    sys: &SymbolicSystem<T>,
    vars: &Vars,
    cfg: &FalsifierConfig,
) -> Result<FalsifyReport, FalsifierError> {
    let placement = Placement::new(cfg, sys, vars)?;
    let dims: Vec<usize> = cfg.axes.iter().map(Axis::len).collect();
    let grid = cfg.grid_size();
    let slack = T::lit(cfg.slack);
    let n = sys.state_dim();
    let coords_of = |mut flat: usize| -> Vec<f64> {
        let mut c = vec![0.0; dims.len()];
        for a in (0..dims.len()).rev() {
            c[a] = cfg.axes[a].node(flat % dims[a]);
            flat /= dims[a];
        }
        c
    };
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(cfg.random_samples);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random_samples {
        samples.push(cfg.axes.iter().map(|a| a.sample(&mut rng)).collect());
    }
    let total = grid + samples.len();
    let outcomes: Vec<(usize, usize, usize, Vec<Counterexample>)> = (0..total)
        .into_par_iter()
        .fold(
            || (0, 0, 0, Vec::new(), vec![T::zero(); n]),
            |(mut skipped, mut manifold, mut count, mut found, mut buf), i| {
                let coords = if i < grid { coords_of(i) } else { samples[i - grid].clone() };
                match probe(idx, &placement, coords, slack, &mut buf) {
                    Outcome::Skipped => skipped += 1,
                    Outcome::OffManifold => {}
                    Outcome::Fine => manifold += 1,
                    Outcome::Violation(c) => {
                        manifold += 1;
                        count += 1;
                        found.push(c);
                    }
                }
                (skipped, manifold, count, found, buf)
            },
        )
        .map(|(s, m, c, f, _)| (s, m, c, f))
        .collect();
    let mut report = FalsifyReport {
        axis_names: cfg.axes.iter().map(Axis::name).collect(),
        state_names: sys.state_vars().iter().map(|&v| vars.name(v).to_string()).collect(),
        evaluated: total,
        ..FalsifyReport::default()
    };
    for (s, m, c, f) in outcomes {
        report.skipped += s;
        report.on_manifold += m;
        report.total_counterexamples += c;
        report.counterexamples.extend(f);
    }
    report.counterexamples.sort_by(|a, b| {
        b.worst_phidot
            .partial_cmp(&a.worst_phidot)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.coords.partial_cmp(&b.coords).unwrap_or(std::cmp::Ordering::Equal))
    });
    report.counterexamples.truncate(cfg.max_reported);
    Ok(report)
}
