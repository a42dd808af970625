//! k-ary fragmentations, where every split produces `k` equal blocks.
//!
//! Masses live on the lattice `k^{-N}`, so the extinction time solves
//! `zeta = E + k^alpha max_i zeta^(i)`. Here it is evaluated by a
//! branch-and-bound depth-first search, independent of the generic engine.
//! The driving chain is then stochastically increasing and the rescaled last
//! fragment converges only along subsequences `eps = k^{alpha (x + n)}`.

use crate::error::{FragError, Result};
use crate::rng::{derive, stream};
use crate::spine_chain::{Init, Kernel};
use crate::stats::{self, dkw_band, ks_bootstrap_ci, ks_two_sample};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

/// Per-subtree risk of the pruning bound.
const PRUNE_RISK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KaryConfig {
    pub k: usize,
    pub alpha: f64,
    pub dust: f64,
    pub seed: u64,
}

impl KaryConfig {
    pub fn new(k: usize, alpha: f64, dust: f64, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(FragError::InvalidConfiguration(format!("k must be at least 2, got {k}")));
        }
        if !(alpha < 0.0 && alpha.is_finite()) {
            return Err(FragError::InvalidConfiguration(format!("alpha must be negative, got {alpha}")));
        }
        if !(dust > 0.0 && dust < 1.0) {
            return Err(FragError::InvalidConfiguration(format!("dust must lie in (0, 1), got {dust}")));
        }
        Ok(Self { k, alpha, dust, seed })
    }

    /// Depth `D` at which blocks of mass `k^{-D} <= dust` become dust.
    pub fn depth(&self) -> usize {
        ((1.0 / self.dust).ln() / (self.k as f64).ln()).ceil() as usize
    }
}

/// Bound on `zeta` of a subtree with `levels` real generations, per unit
/// lifetime scale, failing with probability at most `risk`.
///
/// The largest of `k^j` unit exponentials exceeds `j ln k + x` with
/// probability at most `e^{-x}`; the risk is spread over levels as `1/(j+1)^2`.
fn subtree_bound(k: usize, alpha: f64, levels: usize, risk: f64) -> f64 {
    let lk = (k as f64).ln();
    let base = (1.0 / risk).ln() + (std::f64::consts::PI.powi(2) / 6.0).ln();
    (0..levels)
        .map(|j| {
            let jf = j as f64;
            (jf * alpha * lk).exp() * (jf * lk + base + 2.0 * (jf + 1.0).ln())
        })
        .sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct KaryRun {
    pub zeta: f64,
    /// Spine split times `T_0 = 0, T_1, ...`.
    pub t: Vec<f64>,
    /// `Z_n = k^{-n alpha} (zeta - T_n)`.
    pub z: Vec<f64>,
    pub depth: usize,
    /// Residual extinction ignored below the truncation depth, at risk 1e-3.
    pub error_bound: f64,
    pub nodes: usize,
}

struct Search {
    k: usize,
    depth: usize,
    life: Vec<f64>,
    bound: Vec<f64>,
    best: f64,
    deaths: Vec<f64>,
    best_deaths: Vec<f64>,
    nodes: usize,
}

impl Search {
    fn visit(&mut self, id: u64, d: usize, death: f64) {
        self.nodes += 1;
        self.deaths.push(death);
        if death > self.best {
            self.best = death;
            self.best_deaths.clone_from(&self.deaths);
        }
        if d + 1 < self.depth && death + self.bound[d + 1] > self.best {
            let mut kids: Vec<(f64, u64)> = (0..self.k as u64)
                .map(|j| {
                    let c = derive(id, j);
                    let e: f64 = stream(c).sample(Exp1);
                    (death + self.life[d + 1] * e, c)
                })
                .collect();
            kids.sort_by(|a, b| b.0.total_cmp(&a.0));
            for (cd, c) in kids {
                // the child's subtree ends before cd + bound of its own children
                let reach = if d + 2 < self.depth { self.bound[d + 2] } else { 0.0 };
                if cd + reach > self.best || cd > self.best {
                    self.visit(c, d + 1, cd);
                }
            }
        }
        self.deaths.pop();
    }
}

/// Extinction time and spine of one k-ary tree truncated at `cfg.depth()`.
pub fn kary_extinction(cfg: &KaryConfig, key: u64) -> KaryRun {
    let depth = cfg.depth();
    let lk = (cfg.k as f64).ln();
    let life: Vec<f64> = (0..depth).map(|d| (d as f64 * cfg.alpha * lk).exp()).collect();
    let bound: Vec<f64> =
        (0..depth).map(|d| life[d] * subtree_bound(cfg.k, cfg.alpha, depth - d, PRUNE_RISK)).collect();
    let mut s = Search {
        k: cfg.k,
        depth,
        life,
        bound,
        best: f64::NEG_INFINITY,
        deaths: Vec::with_capacity(depth),
        best_deaths: Vec::new(),
        nodes: 0,
    };
    let e: f64 = stream(key).sample(Exp1);
    s.visit(key, 0, e);
    let zeta = s.best;
    let t: Vec<f64> = std::iter::once(0.0).chain(s.best_deaths[..s.best_deaths.len() - 1].iter().copied()).collect();
    let z = t.iter().enumerate().map(|(n, tn)| (-(n as f64) * cfg.alpha * lk).exp() * (zeta - tn)).collect();
    let error_bound = (depth as f64 * cfg.alpha * lk).exp() * subtree_bound(cfg.k, cfg.alpha, 64, 1e-3);
    KaryRun { zeta, t, z, depth, error_bound, nodes: s.nodes }
}

/// `n` independent trees keyed from `cfg.seed`.
pub fn kary_runs(cfg: &KaryConfig, n: usize) -> Vec<KaryRun> {
    (0..n as u64).into_par_iter().map(|i| kary_extinction(cfg, derive(cfg.seed, i))).collect()
}

fn ecdf(sorted: &[f64], t: f64) -> f64 {
    sorted.partition_point(|v| *v <= t) as f64 / sorted.len() as f64
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub n_mc: usize,
    /// `2 * DKW(n_mc, 0.01)`.
    pub band: f64,
    /// `sup_t |F_1(t) - F_0(t)^k|`.
    pub power_relation: f64,
    /// `sup_t (F_{n+1}(t) - F_n(t))` for n = 0..n_levels-1.
    pub consecutive_excess: Vec<f64>,
    /// `sup_t (F_{n_levels}(t) - F_0(t))`.
    pub limit_excess: f64,
    pub power_relation_pass: bool,
    pub ordering_pass: bool,
    pub limit_pass: bool,
}

/// ECDF checks that `Z_n` increases stochastically and that `F_1 = F_0^k`.
pub fn stochastic_monotonicity_check(cfg: &KaryConfig, n_levels: usize, n_mc: usize) -> Result<MonotonicityReport> {
    if n_levels < 2 {
        return Err(FragError::InvalidArgument(format!("need n_levels >= 2, got {n_levels}")));
    }
    if n_levels >= cfg.depth() {
        return Err(FragError::InvalidArgument(format!(
            "n_levels = {n_levels} reaches the truncation depth {}; lower dust",
            cfg.depth()
        )));
    }
    Ok(monotonicity_from_runs(&kary_runs(cfg, n_mc), cfg.k, n_levels))
}

/// The checks of [`stochastic_monotonicity_check`] on existing runs.
pub fn monotonicity_from_runs(runs: &[KaryRun], k: usize, n_levels: usize) -> MonotonicityReport {
    let n_mc = runs.len();
    let levels: Vec<Vec<f64>> = (0..=n_levels).map(|n| sorted(runs.iter().map(|r| r.z[n]).collect())).collect();
    let pooled = sorted(levels.iter().flatten().copied().collect());
    let grid: Vec<f64> = (1..400).map(|i| stats::quantile_sorted(&pooled, i as f64 / 400.0)).collect();
    let sup = |f: &dyn Fn(f64) -> f64| grid.iter().map(|&t| f(t)).fold(f64::NEG_INFINITY, f64::max);
    let band = 2.0 * dkw_band(n_mc);
    let power_relation = sup(&|t| (ecdf(&levels[1], t) - ecdf(&levels[0], t).powi(k as i32)).abs());
    let consecutive_excess: Vec<f64> =
        (0..n_levels).map(|n| sup(&|t| ecdf(&levels[n + 1], t) - ecdf(&levels[n], t))).collect();
    let limit_excess = sup(&|t| ecdf(&levels[n_levels], t) - ecdf(&levels[0], t));
    MonotonicityReport {
        n_mc,
        band,
        power_relation,
        power_relation_pass: power_relation <= band,
        ordering_pass: consecutive_excess.iter().all(|e| *e <= band),
        limit_pass: limit_excess <= band,
        consecutive_excess,
        limit_excess,
    }
}

/// `k^{x+n} F_*(zeta - k^{alpha (x+n)})`, or None when the spine is too
/// short to resolve it.
pub fn subsequence_value(run: &KaryRun, k: usize, alpha: f64, x: f64, n: usize) -> Option<f64> {
    let lk = (k as f64).ln();
    let eps = (alpha * (x + n as f64) * lk).exp();
    let m = run.t[1..].partition_point(|tj| *tj <= run.zeta - eps);
    if m + 1 >= run.t.len() {
        return None;
    }
    Some(((x + n as f64 - m as f64) * lk).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct OffsetReport {
    pub x: f64,
    /// KS between consecutive n.
    pub consecutive_ks: Vec<f64>,
    pub band: f64,
    pub stabilized: bool,
    /// Values off the lattice `k^{x - Z}` (relative tolerance 1e-9).
    pub off_lattice: usize,
    pub unresolved: usize,
    /// Sample at the last n.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossReport {
    pub x_a: f64,
    pub x_b: f64,
    pub ks: f64,
    pub ci: (f64, f64),
    pub distinct: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsequenceReport {
    pub n_range: (usize, usize),
    pub offsets: Vec<OffsetReport>,
    pub cross: Option<CrossReport>,
    /// Some offset did not stabilize within `n_range`.
    pub inconclusive: bool,
}

pub fn subsequence_limits(
    cfg: &KaryConfig,
    x_offsets: &[f64],
    n_range: (usize, usize),
    n_mc: usize,
) -> Result<SubsequenceReport> {
    let (n_lo, n_hi) = n_range;
    if n_lo >= n_hi {
        return Err(FragError::InvalidArgument(format!("empty n range {n_range:?}")));
    }
    for (i, x) in x_offsets.iter().enumerate() {
        if !(0.0..1.0).contains(x) || x_offsets[..i].contains(x) {
            return Err(FragError::InvalidArgument(format!(
                "offsets must be distinct and in [0, 1), got {x_offsets:?}"
            )));
        }
    }
    subsequence_from_runs(&kary_runs(cfg, n_mc), cfg, x_offsets, n_range)
}

/// Subsequence analysis on existing runs of `cfg`.
pub fn subsequence_from_runs(
    runs: &[KaryRun],
    cfg: &KaryConfig,
    x_offsets: &[f64],
    n_range: (usize, usize),
) -> Result<SubsequenceReport> {
    let (n_lo, n_hi) = n_range;
    let lk = (cfg.k as f64).ln();
    let mut offsets = Vec::new();
    for &x in x_offsets {
        let mut unresolved = 0;
        let samples: Vec<Vec<f64>> = (n_lo..=n_hi)
            .map(|n| {
                runs.iter()
                    .filter_map(|r| {
                        let v = subsequence_value(r, cfg.k, cfg.alpha, x, n);
                        unresolved += v.is_none() as usize;
                        v
                    })
                    .collect()
            })
            .collect();
        let consecutive: Vec<_> = samples.windows(2).map(|w| ks_two_sample(&w[0], &w[1])).collect::<Result<_>>()?;
        let band = consecutive.last().unwrap().band;
        let values = samples.last().unwrap().clone();
        let off_lattice = values
            .iter()
            .filter(|v| {
                let e = v.ln() / lk - x;
                (e - e.round()).abs() > 1e-9 * e.abs().max(1.0)
            })
            .count();
        offsets.push(OffsetReport {
            x,
            stabilized: consecutive.last().unwrap().ks <= band,
            consecutive_ks: consecutive.iter().map(|r| r.ks).collect(),
            band,
            off_lattice,
            unresolved,
            values,
        });
    }
    let cross = if offsets.len() >= 2 {
        let (a, b) = (&offsets[0], &offsets[1]);
        let ks = ks_two_sample(&a.values, &b.values)?.ks;
        let ci = ks_bootstrap_ci(&a.values, &b.values, 200, 0.99, derive(cfg.seed, 0xc5));
        Some(CrossReport { x_a: a.x, x_b: b.x, ks, ci, distinct: ks >= 0.1 && ci.0 > 0.0 })
    } else {
        None
    };
    Ok(SubsequenceReport { n_range, inconclusive: offsets.iter().any(|o| !o.stabilized), offsets, cross })
}

/// `k^{x - N(x)}` with `N(x) = sup{n : Z_n >= k^{(x-n) alpha}}` over a
/// two-sided stationary chain, built forwards and with the reverse kernel.
pub fn n_x_oracle(kernel: &Kernel, k: usize, x: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let a = kernel.alpha;
    let lk = (k as f64).ln();
    let level = |i: i64| ((x - i as f64) * a * lk).exp();
    (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(derive(seed, r));
            let z0 = kernel.initial(Init::Stationary, &mut rng)?;
            let mut best = None;
            let mut z = z0;
            let mut i = 0i64;
            // k^{(x-i) alpha} grows without bound in i; stop once it leaves the support
            while level(i) <= kernel.support_max() {
                if z >= level(i) {
                    best = Some(i);
                }
                i += 1;
                z = kernel.step(z, &mut rng)?.z;
            }
            let mut z = z0;
            let mut i = 0i64;
            while best.is_none() {
                i -= 1;
                z = kernel.reverse_step(z, &mut rng)?.z;
                if z >= level(i) {
                    best = Some(i);
                }
            }
            Ok(((x - best.unwrap() as f64) * lk).exp())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spine_is_monotone_and_on_lattice() {
        let cfg = KaryConfig::new(2, -1.0, 1e-4, 3).unwrap();
        assert_eq!(cfg.depth(), 14);
        for key in 0..50 {
            let r = kary_extinction(&cfg, key);
            assert_eq!(r.t.len(), cfg.depth());
            for n in 1..r.z.len() {
                let a = r.z[n] * 2f64.powi(-(n as i32));
                let b = r.z[n - 1] * 2f64.powi(-(n as i32 - 1));
                assert!(a <= b && r.t[n] > r.t[n - 1]);
            }
            assert_eq!(r.z[0], r.zeta);
            let v = subsequence_value(&r, 2, -1.0, 0.5, 3).unwrap();
            let e = v.log2() - 0.5;
            assert!((e - e.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn pruning_matches_exhaustive_search() {
        // with an infinite bound nothing is pruned
        let cfg = KaryConfig::new(3, -0.7, 2e-3, 1).unwrap();
        for key in 0..30 {
            let pruned = kary_extinction(&cfg, key);
            let depth = cfg.depth();
            let life: Vec<f64> = (0..depth).map(|d| (d as f64 * -0.7 * 3f64.ln()).exp()).collect();
            let mut s = Search {
                k: 3,
                depth,
                life,
                bound: vec![f64::INFINITY; depth],
                best: f64::NEG_INFINITY,
                deaths: vec![],
                best_deaths: vec![],
                nodes: 0,
            };
            let e: f64 = stream(key).sample(Exp1);
            s.visit(key, 0, e);
            assert_eq!(s.best, pruned.zeta);
            assert_eq!(s.best_deaths.len(), pruned.t.len());
            assert!(pruned.nodes < s.nodes);
        }
    }

    #[test]
    fn argument_checks() {
        assert!(KaryConfig::new(1, -1.0, 1e-3, 0).is_err());
        assert!(KaryConfig::new(2, 0.5, 1e-3, 0).is_err());
        let cfg = KaryConfig::new(2, -1.0, 1e-3, 0).unwrap();
        assert!(stochastic_monotonicity_check(&cfg, 1, 10).is_err());
        assert!(stochastic_monotonicity_check(&cfg, 10, 10).is_err());
        assert!(subsequence_limits(&cfg, &[0.0, 0.0], (2, 4), 10).is_err());
        assert!(subsequence_limits(&cfg, &[0.0], (4, 4), 10).is_err());
    }

    #[test]
    fn first_level_is_a_power_of_the_root_law() {
        let cfg = KaryConfig::new(2, -1.0, 1e-5, 9).unwrap();
        let r = stochastic_monotonicity_check(&cfg, 4, 4000).unwrap();
        assert!(r.power_relation_pass, "{r:?}");
        assert!(r.ordering_pass, "{r:?}");
    }
}
