//! Event-driven simulation of the fragmentation genealogy.
//!
//! A block of mass `m` born at time `b` lives `m^{-alpha} E` with `E` a
//! standard exponential, then splits by an independent draw from the
//! dislocation law. Every block draws its lifetime and its split from a stream
//! keyed by its own id, and child `i` of block `id` has id `derive(id, i)`, so
//! a subtree does not depend on which other blocks were refined.
//!
//! `Focus::Full` builds the whole tree down to the dust threshold. The other
//! modes refine best-first on an upper bound for each subtree's extinction
//! time (`death + (m s_1)^{-alpha} E_level`, where `E_level` is exceeded by
//! the rescaled extinction time of a fresh block with probability
//! `EXCLUSION_RISK`). Subtrees whose bound falls below the window of interest
//! are left unrefined. The extinction time and every state inside the window
//! are then those of the full tree, except on an event of probability at most
//! `EXCLUSION_RISK` per refined block.

use crate::density_solver::Densities;
use crate::dislocation::DislocationLaw;
use crate::error::{FragError, Result};
use crate::mass_partition::MassPartition;
use crate::rng::{derive, stream};
use crate::spine_chain::SpineStep;
use crate::stats;
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub const DEFAULT_MAX_BLOCKS: usize = 10_000_000;

/// Probability that a single refined block outlives its exclusion level.
pub const EXCLUSION_RISK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FragmentationConfig {
    pub alpha: f64,
    pub law: DislocationLaw,
    /// Blocks lighter than this are dust.
    pub dust: f64,
    pub seed: u64,
}

impl FragmentationConfig {
    pub fn new(alpha: f64, law: DislocationLaw, dust: f64, seed: u64) -> Result<Self> {
        let c = Self { alpha, law, dust, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha < 0.0) || !self.alpha.is_finite() {
            return Err(FragError::InvalidConfiguration(format!("alpha must be negative, got {}", self.alpha)));
        }
        if !(self.dust > 0.0 && self.dust < 1.0) {
            return Err(FragError::InvalidConfiguration(format!(
                "dust threshold must lie in (0,1), got {}",
                self.dust
            )));
        }
        Ok(())
    }
}

/// Which part of the genealogy must be resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Focus {
    /// Every block down to the dust threshold.
    Full,
    /// All blocks alive during `[zeta - window, zeta]`.
    BeforeZeta { window: f64 },
    /// All blocks alive at or after `time`.
    From { time: f64 },
    /// Only the blocks alive at `time`; extinction is left unresolved.
    Until { time: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub focus: Focus,
    pub root_mass: f64,
    /// Stop early unless `lo < zeta < hi`.
    pub accept: Option<(f64, f64)>,
    /// Overrides the configured dust threshold.
    pub dust: Option<f64>,
}

impl RunOptions {
    pub fn new(focus: Focus) -> Self {
        Self { focus, root_mass: 1.0, accept: None, dust: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `F(t-)`: blocks with `birth < t <= death`.
    LeftLimit,
    /// `F(t)`: blocks with `birth <= t < death`.
    Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Block {
    pub id: u64,
    pub parent: Option<u32>,
    pub mass: f64,
    pub birth: f64,
    /// Split time; equal to the birth time for dust.
    pub death: f64,
    /// Extinction time of the subtree. For unrefined blocks this is the
    /// split time, a lower bound.
    pub extinction: f64,
    pub first_child: u32,
    pub n_children: u32,
    pub dust: bool,
    pub expanded: bool,
    #[serde(skip)]
    potential: f64,
    #[serde(skip)]
    split: (u32, u32),
}

impl Block {
    pub fn alive(&self, t: f64, side: Side) -> bool {
        !self.dust
            && match side {
                Side::Value => self.birth <= t && t < self.death,
                Side::LeftLimit => self.birth < t && t <= self.death,
            }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SimulationRecord {
    pub alpha: f64,
    pub dust: f64,
    pub key: u64,
    pub blocks: Vec<Block>,
    #[serde(skip)]
    splits: Vec<f64>,
    pub zeta: f64,
    pub zeta_error_bound: f64,
    pub q_hat: f64,
    pub n_dust: usize,
    /// Indices into `blocks` along the last fragment.
    pub spine_ids: Vec<u32>,
    /// States are resolved on `[resolved_from, resolved_to]`.
    pub resolved_from: f64,
    pub resolved_to: f64,
}

impl SimulationRecord {
    fn clear(&mut self) {
        self.blocks.clear();
        self.splits.clear();
        self.spine_ids.clear();
        self.n_dust = 0;
    }

    /// Relative masses of the split of block `i` (drawn at creation).
    pub fn split_of(&self, i: usize) -> &[f64] {
        let (a, n) = self.blocks[i].split;
        &self.splits[a as usize..(a + n) as usize]
    }

    pub fn children(&self, i: usize) -> &[Block] {
        let b = &self.blocks[i];
        &self.blocks[b.first_child as usize..(b.first_child + b.n_children) as usize]
    }

    pub fn root_mass(&self) -> f64 {
        self.blocks[0].mass
    }

    /// Masses of the non-dust blocks alive at `t`.
    pub fn state_at(&self, t: f64, side: Side) -> Result<MassPartition> {
        if !(t >= self.resolved_from && t <= self.resolved_to) {
            return Err(FragError::Unresolved { t, from: self.resolved_from, to: self.resolved_to });
        }
        let v: Vec<f64> = self.blocks.iter().filter(|b| b.alive(t, side)).map(|b| b.mass).collect();
        Ok(MassPartition::from_nonnegative(v))
    }

    /// Mass of the last fragment at `t`, zero once it is dust.
    pub fn spine_mass_at(&self, t: f64, side: Side) -> f64 {
        self.spine_ids.iter().map(|&i| &self.blocks[i as usize]).find(|b| b.alive(t, side)).map_or(0.0, |b| b.mass)
    }

    /// The chain `(T_n, Z_n, Y_n, Theta_n, Delta_n)` read along the last
    /// fragment. Step 0 has `T = 0`, `Z = m^alpha zeta`, `Theta = 1` and `Y = 1`.
    pub fn spine(&self) -> Vec<SpineStep> {
        let a = self.alpha;
        let root = &self.blocks[0];
        let mut z_prev = root.mass.powf(a) * self.zeta;
        let mut out = vec![SpineStep {
            n: 0,
            t: 0.0,
            z: z_prev,
            y: 1.0,
            theta: 1.0,
            delta: MassPartition::zero(),
            flagged: root.mass < self.dust.sqrt(),
        }];
        for n in 1..self.spine_ids.len() {
            let p = self.spine_ids[n - 1] as usize;
            let c = self.spine_ids[n] as usize;
            let parent = &self.blocks[p];
            let child = &self.blocks[c];
            let k = c - parent.first_child as usize;
            let split = self.split_of(p);
            let theta = split[k];
            let rest: Vec<f64> = split.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, s)| *s).collect();
            let t = parent.death;
            let z = child.mass.powf(a) * (self.zeta - t);
            let y = (z / z_prev).powf(1.0 / a) / theta;
            out.push(SpineStep {
                n,
                t,
                z,
                y,
                theta,
                delta: MassPartition::from_nonnegative(rest),
                flagged: child.mass < self.dust.sqrt(),
            });
            z_prev = z;
        }
        out
    }

    /// Number of refined blocks with two non-dust children of equal extinction time.
    pub fn sibling_ties(&self) -> usize {
        let mut ties = 0;
        let mut ext = Vec::new();
        for i in 0..self.blocks.len() {
            if !self.blocks[i].expanded {
                continue;
            }
            ext.clear();
            ext.extend(self.children(i).iter().filter(|c| !c.dust).map(|c| c.extinction));
            ext.sort_by(f64::total_cmp);
            ties += ext.windows(2).filter(|w| w[0] == w[1]).count();
        }
        ties
    }

    /// Largest relative mass defect over refined splits.
    pub fn max_conservation_error(&self) -> f64 {
        (0..self.blocks.len())
            .filter(|&i| self.blocks[i].expanded)
            .map(|i| {
                let m = self.blocks[i].mass;
                let s: f64 = self.children(i).iter().map(|c| c.mass).sum();
                (s - m).abs() / m
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    potential: f64,
    index: u32,
}

impl PartialEq for Pending {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Pending {
    fn cmp(&self, o: &Self) -> Ordering {
        self.potential.total_cmp(&o.potential).then(o.index.cmp(&self.index))
    }
}

/// Reusable buffers for repeated runs on one thread.
#[derive(Debug, Default)]
pub struct Workspace {
    pub record: SimulationRecord,
    heap: BinaryHeap<Pending>,
    scratch: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    cfg: FragmentationConfig,
    /// Exclusion level for the rescaled extinction time of a fresh block.
    pub e_level: f64,
    /// High quantile of the extinction time, used in the truncation bound.
    pub q_hat: f64,
    pub max_blocks: usize,
}

/// Result of rejection sampling.
#[derive(Debug, Clone)]
pub struct Conditioned {
    pub record: SimulationRecord,
    pub attempts: usize,
}

impl Engine {
    pub fn new(cfg: FragmentationConfig, e_level: f64, q_hat: f64) -> Result<Self> {
        cfg.validate()?;
        if !(e_level > 0.0) || !(q_hat > 0.0) {
            return Err(FragError::InvalidConfiguration("exclusion level and q_hat must be positive".into()));
        }
        Ok(Self { cfg, e_level, q_hat, max_blocks: DEFAULT_MAX_BLOCKS })
    }

    /// Exclusion level and extinction quantile from the solved density.
    pub fn from_densities(cfg: FragmentationConfig, d: &Densities) -> Result<Self> {
        if (cfg.alpha - d.alpha).abs() > 1e-12 {
            return Err(FragError::InvalidConfiguration(format!(
                "densities solved for alpha = {}, engine uses {}",
                d.alpha, cfg.alpha
            )));
        }
        Self::new(cfg, d.exclusion_level(EXCLUSION_RISK), d.zeta_quantile(0.999))
    }

    /// Engine without pruning information; focused runs then refine everything.
    pub fn unfocused(cfg: FragmentationConfig, q_hat: f64) -> Result<Self> {
        Self::new(cfg, f64::INFINITY, q_hat)
    }

    pub fn config(&self) -> &FragmentationConfig {
        &self.cfg
    }

    #[inline]
    fn pow_neg(&self, m: f64) -> f64 {
        if self.cfg.alpha == -1.0 {
            m
        } else {
            m.powf(-self.cfg.alpha)
        }
    }

    /// Build one genealogy into `ws.record`. Returns false if the run was
    /// rejected by `opts.accept`.
    pub fn run(&self, key: u64, opts: &RunOptions, ws: &mut Workspace) -> Result<bool> {
        let Workspace { record: rec, heap, scratch } = ws;
        rec.clear();
        heap.clear();
        rec.alpha = self.cfg.alpha;
        let dust = opts.dust.unwrap_or(self.cfg.dust);
        rec.dust = dust;
        rec.key = key;
        rec.q_hat = self.q_hat;
        let full = opts.focus == Focus::Full;
        let until = match opts.focus {
            Focus::Until { time } => time,
            _ => f64::INFINITY,
        };
        let (lo, hi) = opts.accept.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        let mut lower = 0.0f64;
        self.create(rec, heap, scratch, key, None, opts.root_mass, 0.0, dust, (full, until), &mut lower);

        while let Some(&top) = heap.peek() {
            if lower >= hi || (top.potential < lo && lower < lo) {
                return Ok(false);
            }
            let theta = match opts.focus {
                Focus::Full | Focus::Until { .. } => f64::NEG_INFINITY,
                Focus::BeforeZeta { window } => lower - window,
                Focus::From { time } => time.min(lower),
            };
            if top.potential < theta {
                break;
            }
            heap.pop();
            let i = top.index as usize;
            let (start, n) = rec.blocks[i].split;
            let (id, m, t) = (rec.blocks[i].id, rec.blocks[i].mass, rec.blocks[i].death);
            let first = rec.blocks.len() as u32;
            for j in 0..n {
                let s = rec.splits[(start + j) as usize];
                self.create(
                    rec,
                    heap,
                    scratch,
                    derive(id, j as u64),
                    Some(i as u32),
                    m * s,
                    t,
                    dust,
                    (full, until),
                    &mut lower,
                );
            }
            let b = &mut rec.blocks[i];
            b.first_child = first;
            b.n_children = n;
            b.expanded = true;
            if rec.blocks.len() > self.max_blocks {
                return Err(FragError::ResourceLimit { what: "blocks per tree".into(), limit: self.max_blocks, dust });
            }
        }

        for i in (0..rec.blocks.len()).rev() {
            let b = &rec.blocks[i];
            let ext =
                if b.expanded { rec.children(i).iter().map(|c| c.extinction).fold(b.death, f64::max) } else { b.death };
            rec.blocks[i].extinction = ext;
        }
        if until < f64::INFINITY {
            rec.zeta = f64::NAN;
            rec.zeta_error_bound = f64::NAN;
            rec.resolved_from = f64::NEG_INFINITY;
            rec.resolved_to = until;
            return Ok(true);
        }
        rec.zeta = rec.blocks[0].extinction;
        rec.resolved_to = f64::INFINITY;
        if !(lo < rec.zeta && rec.zeta < hi) {
            return Ok(false);
        }
        rec.resolved_from = match opts.focus {
            Focus::Full => f64::NEG_INFINITY,
            Focus::BeforeZeta { window } => rec.zeta - window,
            Focus::From { time } => time.min(rec.zeta),
            Focus::Until { .. } => unreachable!(),
        };
        rec.zeta_error_bound = self.pow_neg(dust) * self.q_hat * (1.0 + (rec.n_dust.max(1) as f64).ln());

        let mut i = 0usize;
        rec.spine_ids.push(0);
        while rec.blocks[i].expanded {
            let first = rec.blocks[i].first_child as usize;
            let c = (first..first + rec.blocks[i].n_children as usize)
                .max_by(|&a, &b| rec.blocks[a].extinction.total_cmp(&rec.blocks[b].extinction))
                .unwrap();
            if rec.blocks[c].dust {
                break;
            }
            rec.spine_ids.push(c as u32);
            i = c;
        }
        Ok(true)
    }

    #[allow(clippy::too_many_arguments)]
    fn create(
        &self,
        rec: &mut SimulationRecord,
        heap: &mut BinaryHeap<Pending>,
        scratch: &mut Vec<f64>,
        id: u64,
        parent: Option<u32>,
        mass: f64,
        birth: f64,
        dust: f64,
        (full, until): (bool, f64),
        lower: &mut f64,
    ) {
        let index = rec.blocks.len() as u32;
        let mut b = Block {
            id,
            parent,
            mass,
            birth,
            death: birth,
            extinction: birth,
            first_child: 0,
            n_children: 0,
            dust: true,
            expanded: false,
            potential: birth,
            split: (rec.splits.len() as u32, 0),
        };
        if mass < dust {
            rec.n_dust += 1;
            rec.blocks.push(b);
            return;
        }
        let mut rng = stream(id);
        let e: f64 = rng.sample(Exp1);
        b.dust = false;
        b.death = birth + self.pow_neg(mass) * e;
        self.cfg.law.sample_into(&mut rng, scratch);
        rec.splits.extend_from_slice(scratch);
        b.split.1 = scratch.len() as u32;
        let heaviest = mass * scratch[0];
        b.potential = if heaviest >= dust { b.death + self.pow_neg(heaviest) * self.e_level } else { b.death };
        *lower = lower.max(b.death);
        if (full || heaviest >= dust) && b.death < until {
            heap.push(Pending { potential: b.potential, index });
        }
        rec.blocks.push(b);
    }

    /// Complete genealogy down to the dust threshold.
    pub fn simulate(&self, key: u64) -> Result<SimulationRecord> {
        self.simulate_focused(key, Focus::Full)
    }

    pub fn simulate_focused(&self, key: u64, focus: Focus) -> Result<SimulationRecord> {
        let mut ws = Workspace::default();
        self.run(key, &RunOptions::new(focus), &mut ws)?;
        Ok(ws.record)
    }

    /// Rejection sampling of a genealogy with `lo < zeta < hi`; attempt `j`
    /// uses key `derive(key, j)`. Returns the number of attempts.
    pub fn sample_window(&self, key: u64, opts: &RunOptions, max_attempts: usize, ws: &mut Workspace) -> Result<usize> {
        for j in 0..max_attempts {
            if self.run(derive(key, j as u64), opts, ws)? {
                return Ok(j + 1);
            }
        }
        Err(FragError::RejectionBudget { attempts: max_attempts, acceptance: 0.0 })
    }

    /// Genealogy conditioned on `zeta < x`.
    pub fn simulate_conditioned(&self, key: u64, x: f64, focus: Focus, max_attempts: usize) -> Result<Conditioned> {
        if !(x > 0.0) {
            return Err(FragError::InvalidArgument(format!("conditioning bound must be positive, got {x}")));
        }
        let opts = RunOptions { accept: Some((f64::NEG_INFINITY, x)), ..RunOptions::new(focus) };
        let mut ws = Workspace::default();
        let attempts = self.sample_window(key, &opts, max_attempts, &mut ws)?;
        Ok(Conditioned { record: ws.record, attempts })
    }

    /// Apply `f` to `n` independent records (keys `derive(base, i)`), in parallel.
    pub fn map_records<T, F>(&self, base: u64, n: usize, opts: &RunOptions, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&SimulationRecord) -> T + Sync,
    {
        (0..n as u64)
            .into_par_iter()
            .map_init(Workspace::default, |ws, i| {
                self.run(derive(base, i), opts, ws)?;
                Ok(f(&ws.record))
            })
            .collect()
    }
}

/// 0.999-quantile of the extinction time from complete trees at a coarse
/// dust threshold, for use when no solved density is available.
pub fn pilot_q_hat(cfg: &FragmentationConfig, n: usize) -> Result<f64> {
    let coarse = FragmentationConfig { dust: cfg.dust.max(1e-3), ..cfg.clone() };
    let eng = Engine::unfocused(coarse, 1.0)?;
    let z = eng.map_records(derive(cfg.seed, 0x9107), n.max(10), &RunOptions::new(Focus::Full), |r| r.zeta)?;
    Ok(stats::quantile(&z, 0.999))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density_solver::{GridSpec, SolverConfig};

    fn cfg(law: &str, dust: f64) -> FragmentationConfig {
        FragmentationConfig::new(-1.0, DislocationLaw::parse(law).unwrap(), dust, 1).unwrap()
    }

    #[test]
    fn kary_tree_shape_is_deterministic() {
        let eng = Engine::unfocused(cfg("kary:2", 0.4), 1.0).unwrap();
        let r = eng.simulate(5).unwrap();
        assert_eq!(r.blocks.len(), 7);
        assert_eq!(r.n_dust, 4);
        assert_eq!(r.blocks.iter().filter(|b| b.expanded).count(), 3);
        assert_eq!(r.max_conservation_error(), 0.0);
    }

    #[test]
    fn root_lifetime_is_unit_exponential() {
        let eng = Engine::unfocused(cfg("binary-uniform", 0.5), 1.0).unwrap();
        let d = eng.map_records(3, 10_000, &RunOptions::new(Focus::Full), |r| r.blocks[0].death).unwrap();
        let m = stats::mean(&d);
        assert!((m - 1.0).abs() < 0.03, "{m}");
    }

    #[test]
    fn states_and_spine_are_consistent() {
        let eng = Engine::unfocused(cfg("binary-uniform", 1e-3), 10.0).unwrap();
        for key in 0..20 {
            let r = eng.simulate(key).unwrap();
            assert_eq!(r.state_at(0.0, Side::Value).unwrap().masses(), &[1.0]);
            assert!(r.state_at(r.zeta, Side::Value).unwrap().is_empty());
            assert!(!r.state_at(r.zeta, Side::LeftLimit).unwrap().is_empty());
            let mut last = f64::INFINITY;
            for j in 0..100 {
                let m = r.state_at(r.zeta * j as f64 / 99.0, Side::Value).unwrap().total();
                assert!(m <= last + 1e-12);
                last = m;
            }
            let steps = r.spine();
            assert_eq!(steps[0].z, r.zeta);
            for s in &steps[1..] {
                assert!(s.y > 1.0);
                assert!((s.theta + s.delta.total() - 1.0).abs() < 1e-12);
            }
            let tip = &r.blocks[*r.spine_ids.last().unwrap() as usize];
            assert_eq!(tip.death, r.zeta);
        }
    }

    #[test]
    fn focused_runs_agree_with_full_trees() {
        let law = DislocationLaw::binary_uniform();
        let sc = SolverConfig { grid: GridSpec { x_max: 18.0, n_points: 768 }, n_quad: 128, ..SolverConfig::new(-1.0) };
        let d = Densities::solve(&law, &sc).unwrap();
        let c = cfg("binary-uniform", 1e-4);
        let focused = Engine::from_densities(c.clone(), &d).unwrap();
        let full = Engine::unfocused(c, 8.0).unwrap();
        let w = 0.05;
        for key in 0..30 {
            let a = full.simulate(key).unwrap();
            let b = focused.simulate_focused(key, Focus::BeforeZeta { window: w }).unwrap();
            assert!(b.blocks.len() < a.blocks.len());
            assert_eq!(a.zeta, b.zeta);
            assert_eq!(a.spine(), b.spine());
            for t in [0.0, 0.3, 0.7, 1.0] {
                let tau = b.zeta - w * t;
                assert_eq!(a.state_at(tau, Side::LeftLimit).unwrap(), b.state_at(tau, Side::LeftLimit).unwrap());
            }
            assert!(b.state_at(b.zeta - 2.0 * w, Side::Value).is_err());
        }
    }

    #[test]
    fn until_focus_matches_full_states() {
        let full = Engine::unfocused(cfg("binary-uniform", 1e-4), 8.0).unwrap();
        for key in 0..30 {
            let a = full.simulate(key).unwrap();
            let u = 0.3;
            let opts = RunOptions::new(Focus::Until { time: u });
            let mut ws = Workspace::default();
            full.run(key, &opts, &mut ws).unwrap();
            let b = &ws.record;
            assert!(b.blocks.len() <= a.blocks.len());
            for t in [0.0, 0.1, u] {
                assert_eq!(a.state_at(t, Side::Value).unwrap(), b.state_at(t, Side::Value).unwrap());
            }
            assert!(b.state_at(u + 0.1, Side::Value).is_err());
            assert!(b.zeta.is_nan());
        }
    }

    #[test]
    fn window_rejection_respects_bounds() {
        let eng = Engine::unfocused(cfg("binary-uniform", 1e-2), 8.0).unwrap();
        let c = eng.simulate_conditioned(9, 1.5, Focus::Full, 100_000).unwrap();
        assert!(c.record.zeta < 1.5);
        let c = eng.simulate_conditioned(9, f64::INFINITY, Focus::Full, 1).unwrap();
        assert_eq!(c.attempts, 1);
        assert!(matches!(
            eng.simulate_conditioned(9, 1e-3, Focus::Full, 5),
            Err(FragError::RejectionBudget { attempts: 5, .. })
        ));
    }

    #[test]
    fn block_budget_is_enforced() {
        let mut eng = Engine::unfocused(cfg("binary-uniform", 1e-4), 8.0).unwrap();
        eng.max_blocks = 100;
        assert!(matches!(eng.simulate(1), Err(FragError::ResourceLimit { .. })));
    }
}
