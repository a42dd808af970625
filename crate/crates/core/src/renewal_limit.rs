//! Renewal functionals of the spine chain and samplers for the scaling
//! limits near extinction.
//!
//! The limit of the last fragment is read off a size-biased stationary
//! ladder: with `R(0) = Y_1^{-alpha U}` and `R(k+1) = R(k) Y_{k+1}^alpha`,
//! the spine equals `Z_k^{1/alpha} R(k)^{-1/alpha}` on `[R(k+1), R(k))`.
//! The full limit adds, for each split-off fraction `Delta_{i,m}`, a
//! fragmentation conditioned to die before `x = Z_{i-1} Y_i^alpha Delta^alpha`
//! and watched backwards from `x`.

use crate::density_solver::GridFunction;
use crate::dislocation::{DislocationLaw, Geometry};
use crate::error::{FragError, Result};
use crate::frag_engine::{Engine, Focus, RunOptions, Side, SimulationRecord, Workspace};
use crate::mass_partition::MassPartition;
use crate::rng::{derive, stream};
use crate::spine_chain::{ChainRun, Init, Kernel, Move};
use crate::stats;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Default ladder window.
pub const DEFAULT_WINDOW: (i64, i64) = (-40, 40);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Renewal {
    /// Last index with `S_n <= r`.
    pub j: usize,
    pub s_j: f64,
    pub z_j: f64,
    /// `r - S_J`.
    pub overshoot: f64,
}

pub fn renewal_functionals(run: &ChainRun, r: f64) -> Result<Renewal> {
    let s_last = *run.s.last().unwrap();
    if !(s_last > r) {
        return Err(FragError::ChainTooShort { s_last, r });
    }
    if r < 0.0 {
        return Err(FragError::InvalidArgument(format!("renewal level must be non-negative, got {r}")));
    }
    let j = run.s.partition_point(|s| *s <= r) - 1;
    Ok(Renewal { j, s_j: run.s[j], z_j: run.steps[j].z, overshoot: r - run.s[j] })
}

/// Run a chain from `init` until `S_n > r` and return its renewal functionals.
pub fn renewal_sample(kernel: &Kernel, init: Init, r: f64, max_steps: usize, key: u64) -> Result<Renewal> {
    let mut rng = stream(key);
    let z0 = kernel.initial(init, &mut rng)?;
    let mut z = z0;
    let mut s = 0.0;
    for j in 0..max_steps {
        let mv = kernel.step(z, &mut rng)?;
        let y = (mv.z / z).powf(1.0 / kernel.alpha) / kernel.theta(mv.pair);
        let next = s + y.ln();
        if next > r {
            return Ok(Renewal { j, s_j: s, z_j: z, overshoot: r - s });
        }
        s = next;
        z = mv.z;
    }
    Err(FragError::ChainTooShort { s_last: s, r })
}

/// One index of a ladder. For the lowest index `y` and `theta` are NaN.
#[derive(Debug, Clone, Serialize)]
pub struct Rung {
    pub k: i64,
    pub z: f64,
    pub y: f64,
    pub theta: f64,
    pub delta: MassPartition,
    pub r: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasedLadder {
    pub k_min: i64,
    pub k_max: i64,
    pub rungs: Vec<Rung>,
    pub u: f64,
    pub n_candidates: usize,
    /// Effective sample size of the resampling weights.
    pub ess: f64,
    pub weight_degenerate: bool,
}

impl BiasedLadder {
    pub fn rung(&self, k: i64) -> &Rung {
        &self.rungs[(k - self.k_min) as usize]
    }

    /// Times covered by the ladder: `[R(k_max), R(k_min))`.
    pub fn range(&self) -> (f64, f64) {
        (self.rung(self.k_max).r, self.rung(self.k_min).r)
    }

    fn check(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.range();
        if t >= lo && t < hi {
            Ok(())
        } else {
            Err(FragError::WindowExceeded { t, lo, hi })
        }
    }

    /// The `k` with `R(k+1) <= t < R(k)`.
    pub fn index_of(&self, t: f64) -> Result<i64> {
        self.check(t)?;
        let j = self.rungs.partition_point(|g| g.r > t);
        Ok(self.k_min + j as i64 - 1)
    }
}

/// Stationary candidates `(Z_0, Z_1)` weighted by `log Y_1`, for
/// self-normalised importance resampling of the size-biased pair.
#[derive(Debug, Clone)]
pub struct BiasPool {
    cands: Vec<(f64, Move)>,
    cum: Vec<f64>,
    /// Effective sample size of the weights.
    pub ess: f64,
}

impl BiasPool {
    /// `m` stationary candidates; candidate `i` uses stream `derive(key, i)`.
    pub fn new(kernel: &Kernel, m: usize, key: u64) -> Result<Self> {
        if m == 0 {
            return Err(FragError::InvalidArgument("need at least one candidate".into()));
        }
        let a = kernel.alpha;
        let cands: Vec<(f64, Move, f64)> = (0..m as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(derive(key, i));
                let z0 = kernel.initial(Init::Stationary, &mut rng)?;
                let mv = kernel.step(z0, &mut rng)?;
                let y = (mv.z / z0).powf(1.0 / a) / kernel.theta(mv.pair);
                Ok((z0, mv, y.ln()))
            })
            .collect::<Result<_>>()?;
        let mut cum = Vec::with_capacity(m);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for c in &cands {
            sum += c.2;
            sum2 += c.2 * c.2;
            cum.push(sum);
        }
        Ok(Self { cands: cands.into_iter().map(|c| (c.0, c.1)).collect(), cum, ess: sum * sum / sum2 })
    }

    pub fn len(&self) -> usize {
        self.cands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cands.is_empty()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, Move) {
        let target = rng.random::<f64>() * self.cum[self.cum.len() - 1];
        let i = self.cum.partition_point(|c| *c <= target).min(self.cands.len() - 1);
        self.cands[i]
    }
}

/// Size-biased stationary ladder by importance resampling on `log Y_1`
/// from a private pool of `n_candidates`.
pub fn biased_ladder(kernel: &Kernel, window: (i64, i64), n_candidates: usize, key: u64) -> Result<BiasedLadder> {
    let pool = BiasPool::new(kernel, n_candidates, derive(key, 0xb1a5))?;
    ladder_from_pool(kernel, window, &pool, key)
}

/// Ladder whose pair `(Z_0, Y_1)` is resampled from a shared pool; the rest of
/// the ladder uses stream `key`. Ladders sharing a pool are independent given
/// the pool.
pub fn ladder_from_pool(kernel: &Kernel, window: (i64, i64), pool: &BiasPool, key: u64) -> Result<BiasedLadder> {
    let (k_min, k_max) = window;
    if !(k_min < 0 && k_max > 0) {
        return Err(FragError::InvalidArgument(format!("window must satisfy k_min < 0 < k_max, got {window:?}")));
    }
    let a = kernel.alpha;
    let mut rng = stream(key);
    let (z0, mv1) = pool.draw(&mut rng);
    let n_candidates = pool.len();
    let ess = pool.ess;

    let rung = |k, z, prev: f64, mv: crate::spine_chain::Move| {
        let theta = kernel.theta(mv.pair);
        Rung { k, z, y: (z / prev).powf(1.0 / a) / theta, theta, delta: kernel.delta(mv.pair).clone(), r: 0.0 }
    };
    let mut fwd = vec![rung(1, mv1.z, z0, mv1)];
    for k in 2..=k_max {
        let prev = fwd.last().unwrap().z;
        let mv = kernel.step(prev, &mut rng)?;
        fwd.push(rung(k, mv.z, prev, mv));
    }
    // rungs k_min..=0, built from index 0 downwards with the reverse kernel
    let mut back = Vec::new();
    let mut z = z0;
    for k in ((k_min + 1)..=0).rev() {
        let mv = kernel.reverse_step(z, &mut rng)?;
        back.push(rung(k, z, mv.z, mv));
        z = mv.z;
    }
    back.push(Rung { k: k_min, z, y: f64::NAN, theta: f64::NAN, delta: MassPartition::zero(), r: 0.0 });
    back.reverse();
    let mut rungs = back;
    rungs.extend(fwd);

    let u: f64 = rng.random();
    let i0 = (-k_min) as usize;
    rungs[i0].r = rungs[i0 + 1].y.powf(-a * u);
    for i in i0 + 1..rungs.len() {
        rungs[i].r = rungs[i - 1].r * rungs[i].y.powf(a);
    }
    for i in (0..i0).rev() {
        rungs[i].r = rungs[i + 1].r / rungs[i + 1].y.powf(a);
    }
    Ok(BiasedLadder { k_min, k_max, rungs, u, n_candidates, ess, weight_degenerate: ess < n_candidates as f64 / 10.0 })
}

/// Spine of the limit, `C_{infty,*}(t)`, at each query time.
pub fn last_fragment_limit(ladder: &BiasedLadder, times: &[f64], alpha: f64) -> Result<Vec<f64>> {
    times
        .iter()
        .map(|&t| {
            let g = ladder.rung(ladder.index_of(t)?);
            Ok(g.z.powf(1.0 / alpha) * g.r.powf(-1.0 / alpha))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitConfig {
    /// Masses below this, in limit units, are dust.
    pub dust: f64,
    /// Attempts per conditioned block before it is dropped.
    pub rejection_cap: usize,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self { dust: 1e-4, rejection_cap: 200_000 }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TruncationBudget {
    pub k_min: i64,
    pub k_max: i64,
    pub dust: f64,
    pub rejection_cap: usize,
    /// Split-off blocks whose attachment time lies after the first query time.
    pub blocks_considered: usize,
    pub skipped_dust: usize,
    /// Blocks drawn to be extinct before every query time.
    pub skipped_dead: usize,
    pub simulated: usize,
    pub attempts: usize,
    /// Blocks dropped because the rejection cap was reached.
    pub bias_events: usize,
}

/// States of the limit (or of the rescaled process) at the query times.
#[derive(Debug, Clone, Serialize)]
pub struct LimitStateSample {
    pub query_times: Vec<f64>,
    pub states: Vec<MassPartition>,
    pub spine_values: Vec<f64>,
    pub budget: Option<TruncationBudget>,
}

/// One draw of `C_infty` at the query times, built on `ladder`.
pub fn full_limit_sample(
    ladder: &BiasedLadder,
    times: &[f64],
    engine: &Engine,
    cdf: &GridFunction,
    cfg: &LimitConfig,
    key: u64,
) -> Result<LimitStateSample> {
    let a = engine.config().alpha;
    let spine_values = last_fragment_limit(ladder, times, a)?;
    let mut parts: Vec<Vec<f64>> = spine_values.iter().map(|v| vec![*v]).collect();
    let mut budget = TruncationBudget {
        k_min: ladder.k_min,
        k_max: ladder.k_max,
        dust: cfg.dust,
        rejection_cap: cfg.rejection_cap,
        ..Default::default()
    };
    let t_first = times.iter().copied().fold(f64::INFINITY, f64::min);
    let mut ws = Workspace::default();
    for i in (ladder.k_min + 1)..=ladder.k_max {
        let g = ladder.rung(i);
        if g.r <= t_first {
            break;
        }
        let prev = ladder.rung(i - 1);
        for (m, &dm) in g.delta.masses().iter().enumerate() {
            budget.blocks_considered += 1;
            let x = prev.z * g.y.powf(a) * dm.powf(a);
            let scale = dm * prev.z.powf(1.0 / a) * prev.r.powf(-1.0 / a);
            let local_dust = cfg.dust / scale;
            if local_dust >= 1.0 {
                budget.skipped_dust += 1;
                continue;
            }
            // local time of query t is s(t) = t Delta^alpha Z_{i-1} / R(i-1); t < R(i) iff s < x
            let speed = dm.powf(a) * prev.z / prev.r;
            let s_max = times.iter().filter(|&&t| t < g.r).map(|t| t * speed).fold(0.0, f64::max);
            let lo = x - s_max;
            let fx = cdf.eval(x);
            let block_key = derive(derive(key, (i - ladder.k_min) as u64), m as u64);
            if !(fx > 0.0) {
                budget.bias_events += 1;
                continue;
            }
            let p_alive = ((fx - cdf.eval(lo)) / fx).clamp(0.0, 1.0);
            if stream(derive(block_key, 0xa1)).random::<f64>() >= p_alive {
                budget.skipped_dead += 1;
                continue;
            }
            let opts = RunOptions {
                focus: Focus::From { time: lo },
                root_mass: 1.0,
                accept: Some((lo, x)),
                dust: Some(local_dust),
            };
            match engine.sample_window(block_key, &opts, cfg.rejection_cap, &mut ws) {
                Ok(n) => {
                    budget.attempts += n;
                    budget.simulated += 1;
                }
                Err(FragError::RejectionBudget { attempts, .. }) => {
                    budget.attempts += attempts;
                    budget.bias_events += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
            for (q, &t) in times.iter().enumerate() {
                if t < g.r {
                    let st = ws.record.state_at(x - t * speed, Side::LeftLimit)?;
                    parts[q].extend(st.masses().iter().map(|v| v * scale));
                }
            }
        }
    }
    Ok(LimitStateSample {
        query_times: times.to_vec(),
        states: parts.into_iter().map(MassPartition::from_nonnegative).collect(),
        spine_values,
        budget: Some(budget),
    })
}

/// Smallest admissible `eps` for a record: ten times the 0.999-quantile of
/// the residual extinction time of one dust block.
pub fn prelimit_floor(record: &SimulationRecord) -> f64 {
    10.0 * record.dust.powf(-record.alpha) * record.q_hat
}

/// `eps^{1/alpha} F((zeta - eps t)-)` and the matching spine values.
pub fn rescaled_prelimit(record: &SimulationRecord, eps: f64, times: &[f64]) -> Result<LimitStateSample> {
    if !(eps > 0.0 && eps < record.zeta) {
        return Err(FragError::InvalidArgument(format!("eps = {eps} must lie in (0, zeta = {})", record.zeta)));
    }
    let floor = prelimit_floor(record);
    if eps < floor {
        return Err(FragError::Precision { eps, floor, dust: record.dust });
    }
    let scale = eps.powf(1.0 / record.alpha);
    let mut states = Vec::with_capacity(times.len());
    let mut spine = Vec::with_capacity(times.len());
    for &t in times {
        let tau = record.zeta - eps * t;
        if !(tau > 0.0) {
            return Err(FragError::WindowExceeded { t, lo: 0.0, hi: record.zeta / eps });
        }
        states.push(record.state_at(tau, Side::LeftLimit)?.scale(scale)?);
        spine.push(record.spine_mass_at(tau, Side::LeftLimit) * scale);
    }
    Ok(LimitStateSample { query_times: times.to_vec(), states, spine_values: spine, budget: None })
}

/// Limit theorems need a non-arithmetic law.
pub fn require_non_arithmetic(law: &DislocationLaw) -> Result<()> {
    match law.is_geometric() {
        Geometry::Geometric(ratio) => Err(FragError::ArithmeticLaw { ratio }),
        _ => Ok(()),
    }
}

/// Lattice fit over observed spine fractions: `Geometric(r)` when every
/// `log theta` lies on `(log r) N`.
pub fn theta_lattice(thetas: &[f64]) -> Geometry {
    crate::dislocation::lattice_ratio(thetas)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    /// Estimates of `E prod_{i <= n} Y_i^alpha` for n = 1..=n_max.
    pub means: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
}

/// Geometric decay of `E prod Y_i^alpha` along stationary chains.
pub fn product_decay(kernel: &Kernel, n_max: usize, n_rep: usize, seed: u64) -> Result<DecayReport> {
    let a = kernel.alpha;
    let rows: Vec<Vec<f64>> = (0..n_rep as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(derive(seed, r));
            let mut z = kernel.initial(Init::Stationary, &mut rng)?;
            let mut p = 1.0;
            let mut row = Vec::with_capacity(n_max);
            for _ in 0..n_max {
                let mv = kernel.step(z, &mut rng)?;
                let y = (mv.z / z).powf(1.0 / a) / kernel.theta(mv.pair);
                p *= y.powf(a);
                row.push(p);
                z = mv.z;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let means: Vec<f64> = (0..n_max).map(|n| stats::mean(&rows.iter().map(|r| r[n]).collect::<Vec<_>>())).collect();
    let x: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
    let y: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let fit = stats::fit_line(&x, &y);
    Ok(DecayReport { means, slope: fit.slope, slope_se: fit.slope_se })
}

/// Ladders and, optionally, full limit states for `n` replicas, in parallel.
pub struct LimitSampler<'a> {
    pub kernel: &'a Kernel,
    pub engine: &'a Engine,
    pub cdf: &'a GridFunction,
    pub window: (i64, i64),
    /// Smallest resampling pool; a batch of `n` ladders uses at least
    /// `POOL_PER_LADDER * n` candidates.
    pub min_pool: usize,
    pub config: LimitConfig,
}

/// Candidates per ladder in a shared pool. With weights `log Y_1` the
/// effective pool size is then about ten times the number of draws.
pub const POOL_PER_LADDER: usize = 20;

impl LimitSampler<'_> {
    pub fn pool(&self, n: usize, seed: u64) -> Result<BiasPool> {
        BiasPool::new(self.kernel, self.min_pool.max(POOL_PER_LADDER * n), derive(seed, 0xb1a5))
    }

    pub fn ladders(&self, n: usize, seed: u64) -> Result<Vec<BiasedLadder>> {
        let pool = self.pool(n, seed)?;
        (0..n as u64)
            .into_par_iter()
            .map(|r| ladder_from_pool(self.kernel, self.window, &pool, derive(seed, r)))
            .collect()
    }

    pub fn spine_samples(&self, times: &[f64], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let pool = self.pool(n, seed)?;
        (0..n as u64)
            .into_par_iter()
            .map(|r| {
                let l = ladder_from_pool(self.kernel, self.window, &pool, derive(seed, r))?;
                last_fragment_limit(&l, times, self.kernel.alpha)
            })
            .collect()
    }

    pub fn full_samples(&self, times: &[f64], n: usize, seed: u64) -> Result<Vec<LimitStateSample>> {
        let pool = self.pool(n, seed)?;
        (0..n as u64)
            .into_par_iter()
            .map(|r| {
                let key = derive(seed, r);
                let l = ladder_from_pool(self.kernel, self.window, &pool, key)?;
                full_limit_sample(&l, times, self.engine, self.cdf, &self.config, derive(key, 0xf011))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density_solver::{solve_stationary, Densities, GridSpec, SolverConfig};
    use crate::frag_engine::FragmentationConfig;
    use crate::spine_chain::{run_chain, SpineStep};

    fn setup() -> (Densities, Kernel) {
        let cfg =
            SolverConfig { grid: GridSpec { x_max: 18.0, n_points: 1536 }, n_quad: 64, ..SolverConfig::new(-1.0) };
        let mut d = Densities::solve(&DislocationLaw::binary_uniform(), &cfg).unwrap();
        d.stationary = Some(solve_stationary(&d, 1e-10, 2000, 0.7).unwrap());
        let k = Kernel::new(&d).unwrap();
        (d, k)
    }

    fn toy_run(logs: &[f64]) -> ChainRun {
        let mut s = vec![0.0];
        let mut steps = vec![];
        for (n, l) in std::iter::once(&0.0).chain(logs).enumerate() {
            if n > 0 {
                s.push(s[n - 1] + l);
            }
            steps.push(SpineStep {
                n,
                t: 0.0,
                z: n as f64 + 1.0,
                y: l.exp(),
                theta: 0.5,
                delta: MassPartition::zero(),
                flagged: false,
            });
        }
        ChainRun { steps, s }
    }

    #[test]
    fn renewal_examples() {
        let run = toy_run(&[0.5, 0.7, 0.2]);
        let r = renewal_functionals(&run, 0.3).unwrap();
        assert_eq!((r.j, r.overshoot), (0, 0.3));
        let r = renewal_functionals(&run, 1.3).unwrap();
        assert_eq!(r.j, 2);
        assert!(r.overshoot >= 0.0 && r.overshoot < 0.2);
        assert!(matches!(renewal_functionals(&run, 5.0), Err(FragError::ChainTooShort { .. })));
    }

    #[test]
    fn ladder_algebra() {
        let (_, k) = setup();
        for key in 0..20 {
            let l = biased_ladder(&k, (-10, 10), 32, key).unwrap();
            assert!(l.rung(1).r < 1.0 && 1.0 < l.rung(0).r);
            for w in l.rungs.windows(2) {
                assert!(w[1].r < w[0].r);
                assert!((w[1].r / w[0].r - w[1].y.powf(-1.0)).abs() < 1e-12);
            }
            let c = last_fragment_limit(&l, &[0.25, 0.5, 1.0, 2.0], -1.0).unwrap();
            assert!(c.windows(2).all(|w| w[0] <= w[1]));
            let g0 = l.rung(0);
            let expect = l.rung(1).y.powf(l.u) * g0.z.powf(-1.0);
            let c1 = last_fragment_limit(&l, &[1.0], -1.0).unwrap()[0];
            assert!((c1 - expect).abs() < 1e-12 * expect);
            let (lo, hi) = l.range();
            assert!(matches!(last_fragment_limit(&l, &[hi * 2.0], -1.0), Err(FragError::WindowExceeded { .. })));
            assert!(last_fragment_limit(&l, &[lo * 0.5], -1.0).is_err());
        }
    }

    #[test]
    fn full_limit_contains_spine() {
        let (d, k) = setup();
        let cfg = FragmentationConfig::new(-1.0, DislocationLaw::binary_uniform(), 1e-6, 1).unwrap();
        let eng = Engine::from_densities(cfg, &d).unwrap();
        let l = biased_ladder(&k, (-20, 20), 32, 7).unwrap();
        let times = [0.5, 1.0, 2.0];
        let s = full_limit_sample(&l, &times, &eng, &d.cdf, &LimitConfig { dust: 1e-3, rejection_cap: 100_000 }, 3)
            .unwrap();
        for (st, sp) in s.states.iter().zip(&s.spine_values) {
            assert!(st.masses().contains(sp));
        }
    }

    #[test]
    fn prelimit_reads_the_record() {
        let (d, _) = setup();
        let cfg = FragmentationConfig::new(-1.0, DislocationLaw::binary_uniform(), 1e-6, 1).unwrap();
        let eng = Engine::from_densities(cfg, &d).unwrap();
        let r = eng.simulate_focused(11, Focus::BeforeZeta { window: 2e-3 }).unwrap();
        let p = rescaled_prelimit(&r, 1e-3, &[1e-3, 1.0, 2.0]).unwrap();
        for (st, sp) in p.states.iter().zip(&p.spine_values) {
            assert!(st.masses().contains(sp));
        }
        assert!(matches!(rescaled_prelimit(&r, 1e-5, &[1.0]), Err(FragError::Precision { .. })));
        assert!(rescaled_prelimit(&r, r.zeta * 2.0, &[1.0]).is_err());
        assert!(matches!(rescaled_prelimit(&r, 1e-3, &[3.0]), Err(FragError::Unresolved { .. })));
    }

    #[test]
    fn arithmetic_guard() {
        assert!(matches!(
            require_non_arithmetic(&DislocationLaw::kary(2).unwrap()),
            Err(FragError::ArithmeticLaw { .. })
        ));
        assert!(require_non_arithmetic(&DislocationLaw::binary_uniform()).is_ok());
        assert_eq!(theta_lattice(&[0.5, 0.25, 0.125]), Geometry::Geometric(0.5));
        let (_, k) = setup();
        let run = run_chain(&k, 1.0, 200, &mut stream(3)).unwrap();
        let th: Vec<f64> = run.steps[1..].iter().map(|s| s.theta).collect();
        assert_eq!(theta_lattice(&th), Geometry::NonGeometric);
    }
}
