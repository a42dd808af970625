//! Monte Carlo estimates of the invariant measure
//! `lambda(A) = int_0^infty P(C_infty(t) in A) dt` and a paired test of its
//! invariance under the fragmentation semigroup.

use crate::error::{FragError, Result};
use crate::frag_engine::{Engine, Focus, RunOptions, Side, Workspace};
use crate::mass_partition::MassPartition;
use crate::renewal_limit::{LimitSampler, LimitStateSample};
use crate::rng::derive;
use crate::stats;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// Largest block in `[lo, hi]`.
    TopMass { lo: f64, hi: f64 },
    /// Total mass in `[lo, hi]`.
    TotalMass { lo: f64, hi: f64 },
    /// At least `min` blocks heavier than `threshold`.
    BlockCount { min: usize, threshold: f64 },
}

/// An event restricted to `{total <= cap}`, where `lambda` is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPredicate {
    pub cap: f64,
    pub event: Event,
}

impl EventPredicate {
    pub fn new(cap: f64, event: Event) -> Result<Self> {
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(FragError::InvalidArgument(format!("mass cap must be positive and finite, got {cap}")));
        }
        Ok(Self { cap, event })
    }

    pub fn holds(&self, s: &MassPartition) -> bool {
        let total = s.total();
        if total > self.cap {
            return false;
        }
        match self.event {
            Event::TopMass { lo, hi } => (lo..=hi).contains(&s.largest()),
            Event::TotalMass { lo, hi } => (lo..=hi).contains(&total),
            Event::BlockCount { min, threshold } => s.count_above(threshold) >= min,
        }
    }

    pub fn name(&self) -> String {
        let e = match self.event {
            Event::TopMass { lo, hi } => format!("top in [{lo}, {hi}]"),
            Event::TotalMass { lo, hi } => format!("total in [{lo}, {hi}]"),
            Event::BlockCount { min, threshold } => format!("{min}+ blocks > {threshold}"),
        };
        format!("{e}, cap {}", self.cap)
    }
}

/// The fixed six-event family used by the invariance test.
pub fn standard_family(cap: f64) -> Result<Vec<EventPredicate>> {
    [
        Event::TotalMass { lo: 0.2, hi: 0.6 },
        Event::TotalMass { lo: 0.6, hi: 1.0 },
        Event::TopMass { lo: 0.1, hi: 0.3 },
        Event::TopMass { lo: 0.3, hi: 0.6 },
        Event::BlockCount { min: 2, threshold: 0.05 },
        Event::BlockCount { min: 4, threshold: 0.02 },
    ]
    .into_iter()
    .map(|e| EventPredicate::new(cap, e))
    .collect()
}

/// Uniform grid `t_max / n, ..., t_max`; the integrand at 0 is taken from
/// the zero partition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        (1..=self.n).map(|i| self.t_max * i as f64 / self.n as f64).collect()
    }
}

/// Trapezoid integral of `1{state in A}` over `[0, t_max]` along one path.
pub fn path_integral(a: &EventPredicate, times: &[f64], states: &[MassPartition]) -> f64 {
    let mut prev_t = 0.0;
    let mut prev = if a.holds(&MassPartition::zero()) { 1.0 } else { 0.0 };
    let mut acc = 0.0;
    for (t, s) in times.iter().zip(states) {
        let v = if a.holds(s) { 1.0 } else { 0.0 };
        acc += 0.5 * (v + prev) * (t - prev_t);
        prev = v;
        prev_t = *t;
    }
    acc
}

/// Power-law fit of `P(total <= cap)` over the upper half of the grid and
/// the implied integral beyond `t_max`.
#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    pub t_max: f64,
    pub p_end: f64,
    /// `gamma` in `P(total(C(t)) <= cap) ~ t^{-gamma}`.
    pub exponent: f64,
    pub tail: f64,
}

pub fn cap_tail(paths: &[LimitStateSample], cap: f64) -> TailFit {
    let times = &paths[0].query_times;
    let n = paths.len() as f64;
    let p: Vec<f64> =
        (0..times.len()).map(|q| paths.iter().filter(|s| s.states[q].total() <= cap).count() as f64 / n).collect();
    let t_max = *times.last().unwrap();
    let p_end = *p.last().unwrap();
    let (x, y): (Vec<f64>, Vec<f64>) =
        times.iter().zip(&p).filter(|(t, v)| **t >= t_max / 2.0 && **v > 0.0).map(|(t, v)| (t.ln(), v.ln())).unzip();
    let exponent = if x.len() >= 3 { -stats::fit_line(&x, &y).slope } else { f64::NAN };
    let tail = if p_end == 0.0 {
        0.0
    } else if exponent > 1.0 {
        p_end * t_max / (exponent - 1.0)
    } else {
        f64::INFINITY
    };
    TailFit { t_max, p_end, exponent, tail }
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaEstimate {
    pub event: String,
    pub estimate: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub n_paths: usize,
}

/// `lambda(A)` from sampled limit paths, with a path-level bootstrap CI.
/// Fails when the fitted tail beyond the grid exceeds 1% of the estimate.
pub fn lambda_from_paths(
    a: &EventPredicate,
    paths: &[LimitStateSample],
    level: f64,
    seed: u64,
) -> Result<LambdaEstimate> {
    if paths.len() < 2 {
        return Err(FragError::InsufficientData { need: 2, have: paths.len() });
    }
    let v: Vec<f64> = paths.iter().map(|p| path_integral(a, &p.query_times, &p.states)).collect();
    let estimate = stats::mean(&v);
    let tail = cap_tail(paths, a.cap);
    if tail.tail > 0.01 * estimate {
        return Err(FragError::TailBudget { t_max: tail.t_max, tail: tail.tail, estimate });
    }
    Ok(LambdaEstimate {
        event: a.name(),
        estimate,
        se: stats::std_error(&v),
        ci: stats::bootstrap_ci(&v, stats::mean, 1000, level, seed),
        n_paths: v.len(),
    })
}

pub fn estimate_lambda(
    a: &EventPredicate,
    sampler: &LimitSampler,
    grid: TimeGrid,
    n_paths: usize,
    level: f64,
    seed: u64,
) -> Result<LambdaEstimate> {
    let paths = sampler.full_samples(&grid.times(), n_paths, seed)?;
    lambda_from_paths(a, &paths, level, derive(seed, 0xb007))
}

/// Run every block of `state` forward for time `u`, independently.
pub fn evolve(
    state: &MassPartition,
    u: f64,
    engine: &Engine,
    dust: f64,
    key: u64,
    ws: &mut Workspace,
) -> Result<MassPartition> {
    let mut out = Vec::new();
    for (j, &m) in state.masses().iter().enumerate() {
        let opts = RunOptions { focus: Focus::Until { time: u }, root_mass: m, accept: None, dust: Some(dust) };
        engine.run(derive(key, j as u64), &opts, ws)?;
        out.extend_from_slice(ws.record.state_at(u, Side::Value)?.masses());
    }
    Ok(MassPartition::from_nonnegative(out))
}

#[derive(Debug, Clone, Serialize)]
pub struct EventResult {
    pub event: String,
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub u: f64,
    pub n_paths: usize,
    pub n_times: usize,
    pub level: f64,
    /// Bonferroni-corrected two-sided critical value.
    pub threshold: f64,
    pub events: Vec<EventResult>,
    pub max_abs_z: f64,
    pub tail: TailFit,
    pub pass: bool,
}

/// Compare `lambda(A)` with `int P_s(F(u) in A) lambda(ds)` on the same paths.
/// `evolver` supplies the forward dynamics; a deliberately wrong one gives
/// the negative control.
pub fn invariance_test(
    family: &[EventPredicate],
    u: f64,
    paths: &[LimitStateSample],
    evolver: &Engine,
    dust: f64,
    level: f64,
    seed: u64,
) -> Result<InvarianceReport> {
    if !(u > 0.0) {
        return Err(FragError::InvalidArgument(format!("u must be positive, got {u}")));
    }
    if family.is_empty() || paths.len() < 2 {
        return Err(FragError::InsufficientData { need: 2, have: paths.len() });
    }
    let cap = family[0].cap;
    if family.iter().any(|a| a.cap != cap) {
        return Err(FragError::InvalidArgument("events must share one mass cap".into()));
    }
    let evolved: Vec<Vec<MassPartition>> = paths
        .par_iter()
        .enumerate()
        .map_init(Workspace::default, |ws, (p, path)| {
            path.states
                .iter()
                .enumerate()
                .map(|(q, s)| evolve(s, u, evolver, dust, derive(derive(seed, p as u64), q as u64), ws))
                .collect()
        })
        .collect::<Result<_>>()?;
    let m = family.len();
    let threshold = Normal::standard().inverse_cdf(1.0 - level / (2.0 * m as f64));
    let events: Vec<EventResult> = family
        .iter()
        .map(|a| {
            let l: Vec<f64> = paths.iter().map(|p| path_integral(a, &p.query_times, &p.states)).collect();
            let r: Vec<f64> = paths.iter().zip(&evolved).map(|(p, e)| path_integral(a, &p.query_times, e)).collect();
            let d: Vec<f64> = r.iter().zip(&l).map(|(x, y)| x - y).collect();
            let se = stats::std_error(&d);
            let diff = stats::mean(&d);
            EventResult {
                event: a.name(),
                lhs: stats::mean(&l),
                rhs: stats::mean(&r),
                diff,
                se,
                z: if se > 0.0 { diff / se } else { 0.0 },
            }
        })
        .collect();
    let max_abs_z = events.iter().map(|e| e.z.abs()).fold(0.0, f64::max);
    Ok(InvarianceReport {
        u,
        n_paths: paths.len(),
        n_times: paths[0].query_times.len(),
        level,
        threshold,
        max_abs_z,
        pass: max_abs_z <= threshold,
        tail: cap_tail(paths, cap),
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(v: &[f64]) -> MassPartition {
        MassPartition::rearrange(v).unwrap()
    }

    #[test]
    fn predicates_respect_cap() {
        let a = EventPredicate::new(1.0, Event::BlockCount { min: 1, threshold: 0.1 }).unwrap();
        assert!(a.holds(&part(&[0.5, 0.3])));
        assert!(!a.holds(&part(&[0.5, 0.3, 0.4])));
        assert!(!a.holds(&MassPartition::zero()));
        let t = EventPredicate::new(1.0, Event::TopMass { lo: 0.3, hi: 0.6 }).unwrap();
        assert!(t.holds(&part(&[0.1, 0.4])));
        assert!(EventPredicate::new(f64::INFINITY, Event::TotalMass { lo: 0.0, hi: 1.0 }).is_err());
        assert_eq!(standard_family(1.0).unwrap().len(), 6);
    }

    #[test]
    fn trapezoid_along_a_path() {
        let a = EventPredicate::new(1.0, Event::TotalMass { lo: 0.2, hi: 0.6 }).unwrap();
        let times = [1.0, 2.0, 3.0, 4.0];
        let states = [part(&[0.1]), part(&[0.3]), part(&[0.5]), part(&[0.7])];
        // 0 -> 0 -> 1 -> 1 -> 0
        assert!((path_integral(&a, &times, &states) - 2.0).abs() < 1e-12);
        let wider = EventPredicate::new(1.0, Event::TotalMass { lo: 0.1, hi: 0.8 }).unwrap();
        assert!(path_integral(&wider, &times, &states) >= path_integral(&a, &times, &states));
    }

    #[test]
    fn tail_fit_on_power_law() {
        let times: Vec<f64> = (1..=40).map(|i| i as f64 * 0.5).collect();
        // total mass t on every path: P(total <= 1) is 1 up to t = 1, then 0
        let paths: Vec<LimitStateSample> = (0..4)
            .map(|_| LimitStateSample {
                query_times: times.clone(),
                states: times.iter().map(|t| part(&[*t])).collect(),
                spine_values: times.clone(),
                budget: None,
            })
            .collect();
        let tf = cap_tail(&paths, 1.0);
        assert_eq!(tf.tail, 0.0);
        let a = EventPredicate::new(1.0, Event::TotalMass { lo: 0.5, hi: 1.0 }).unwrap();
        let est = lambda_from_paths(&a, &paths, 0.99, 1).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-12);
    }
}
