//! The Markov chain driving the last fragment.
//!
//! Given `Z_n = z`, the next state picks a quadrature point `q` of the
//! dislocation law, an index `i` (the fragment that carries the last
//! fragment) and `Z_{n+1} = y` jointly with density proportional to
//! `w_q f(y) e^{b_i y} prod_{j != i} F(a_j b_i y)` on `0 < y < a_i z`, where
//! `a_i = s_i^alpha` and `b_i = s_i^{-alpha}`. Each `(q, i)` pair gets a
//! cumulative table on the density grid, so a step is a categorical draw
//! followed by an inversion inside one grid cell.

use crate::density_solver::{Densities, GridFunction};
use crate::error::{FragError, Result};
use crate::mass_partition::MassPartition;
use crate::rng::{derive, replica_stream, stream};
use crate::stats::{self, EcdfReport};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// One split of the last fragment.
///
/// `z` is the rescaled residual extinction time `F_*(T_n)^alpha (zeta - T_n)`,
/// `theta` the fraction kept by the last fragment and `delta` the fractions
/// split off with it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpineStep {
    pub n: usize,
    pub t: f64,
    pub z: f64,
    pub y: f64,
    pub theta: f64,
    pub delta: MassPartition,
    /// Set once the spine mass falls below the square root of the dust threshold.
    pub flagged: bool,
}

/// Unnormalised piecewise-linear density on a uniform grid with exact
/// cumulative and inverse.
#[derive(Debug, Clone)]
pub struct GridSampler {
    h: f64,
    psi: Vec<f64>,
    cum: Vec<f64>,
}

impl GridSampler {
    pub fn new(psi: Vec<f64>, h: f64) -> Self {
        let mut cum = vec![0.0; psi.len()];
        for j in 1..psi.len() {
            cum[j] = cum[j - 1] + 0.5 * h * (psi[j - 1] + psi[j]);
        }
        Self { h, psi, cum }
    }

    pub fn from_grid(g: &GridFunction) -> Self {
        Self::new(g.values.clone(), g.h())
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn x_max(&self) -> f64 {
        self.h * (self.psi.len() - 1) as f64
    }

    fn partial(&self, j: usize, w: f64) -> f64 {
        let (p0, p1) = (self.psi[j], self.psi[j + 1]);
        p0 * w + (p1 - p0) * w * w / (2.0 * self.h)
    }

    /// Integral of the density over `[0, x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let t = x / self.h;
        let j = t as usize;
        if j + 1 >= self.psi.len() {
            return self.total();
        }
        self.cum[j] + self.partial(j, x - j as f64 * self.h)
    }

    /// The point where the cumulative reaches `target`.
    pub fn invert(&self, target: f64) -> f64 {
        let n = self.psi.len() - 1;
        let j = self.cum.partition_point(|c| *c <= target).clamp(1, n) - 1;
        let r = (target - self.cum[j]).max(0.0);
        let (p0, p1) = (self.psi[j], self.psi[j + 1]);
        let a = (p1 - p0) / (2.0 * self.h);
        let disc = (p0 * p0 + 4.0 * a * r).max(0.0);
        let w = if p0 + disc.sqrt() > 0.0 { 2.0 * r / (p0 + disc.sqrt()) } else { 0.0 };
        j as f64 * self.h + w.clamp(0.0, self.h)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.invert(rng.random::<f64>() * self.total())
    }
}

#[derive(Debug, Clone)]
struct Pair {
    weight: f64,
    s: f64,
    b: f64,
    a: f64,
    /// Products a_j b_i for j != i.
    others: Vec<f64>,
    /// The other fractions, sorted non-increasing.
    rest: MassPartition,
}

/// How the chain is started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Init {
    Fixed(f64),
    /// Drawn from the extinction-time density.
    Zeta,
    /// Drawn from the stationary density.
    Stationary,
}

impl Init {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zeta" => Ok(Init::Zeta),
            "stationary" => Ok(Init::Stationary),
            v => v.parse::<f64>().ok().filter(|z| *z > 0.0).map(Init::Fixed).ok_or_else(|| {
                FragError::InvalidArgument(format!("z0 must be zeta, stationary or a positive number, got {v}"))
            }),
        }
    }
}

/// One transition: the new state and the `(q, i)` pair that produced it.
#[derive(Debug, Clone, Copy)]
pub struct Move {
    pub z: f64,
    pub pair: usize,
}

/// Forward and reverse samplers for the chain built from solved densities.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub alpha: f64,
    pairs: Vec<Pair>,
    tables: Vec<GridSampler>,
    pick: WeightedIndex<f64>,
    cdf: GridFunction,
    zeta: GridSampler,
    stationary: Option<GridSampler>,
    /// e^{-x} pi(x) / f(x), the weight of the reverse kernel.
    reverse: Option<GridSampler>,
}

const MAX_THINNING: usize = 32;

impl Kernel {
    pub fn new(d: &Densities) -> Result<Self> {
        let h = d.f.h();
        let mut pairs = Vec::new();
        let mut tables = Vec::new();
        let mut fv = Vec::new();
        for q in &d.quad {
            let k = q.s.len();
            for i in 0..k {
                let others: Vec<f64> = (0..k).filter(|j| *j != i).map(|j| q.a[j] * q.b[i]).collect();
                let psi: Vec<f64> =
                    d.f.nodes()
                        .map(|(y, fy)| {
                            fv.clear();
                            fv.extend(others.iter().map(|c| d.cdf.eval(c * y)));
                            let p: f64 = fv.iter().product();
                            fy * (q.b[i] * y).exp() * p
                        })
                        .collect();
                let rest: Vec<f64> = (0..k).filter(|j| *j != i).map(|j| q.s[j]).collect();
                pairs.push(Pair {
                    weight: q.weight,
                    s: q.s[i],
                    a: q.a[i],
                    b: q.b[i],
                    others,
                    rest: MassPartition::from_nonnegative(rest),
                });
                tables.push(GridSampler::new(psi, h));
            }
        }
        let full: Vec<f64> = pairs.iter().zip(&tables).map(|(p, t)| p.weight * t.total()).collect();
        let pick = WeightedIndex::new(&full)
            .map_err(|e| FragError::InvalidConfiguration(format!("degenerate kernel weights: {e}")))?;
        let (stationary, reverse) = match &d.stationary {
            Some(st) => {
                let phi: Vec<f64> = st.g.nodes().map(|(x, g)| (-x).exp() * g).collect();
                (Some(GridSampler::from_grid(&st.pi)), Some(GridSampler::new(phi, h)))
            }
            None => (None, None),
        };
        Ok(Self {
            alpha: d.alpha,
            pairs,
            tables,
            pick,
            cdf: d.cdf.clone(),
            zeta: GridSampler::from_grid(&d.f),
            stationary,
            reverse,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn theta(&self, pair: usize) -> f64 {
        self.pairs[pair].s
    }

    pub fn delta(&self, pair: usize) -> &MassPartition {
        &self.pairs[pair].rest
    }

    /// Largest state the chain can move to from `z`, for the pair used.
    pub fn support_bound(&self, z: f64, pair: usize) -> f64 {
        self.pairs[pair].a * z
    }

    /// Largest state the discretised kernel can produce.
    pub fn support_max(&self) -> f64 {
        self.zeta.x_max()
    }

    pub fn has_stationary(&self) -> bool {
        self.stationary.is_some()
    }

    pub fn initial<R: Rng + ?Sized>(&self, init: Init, rng: &mut R) -> Result<f64> {
        match init {
            Init::Fixed(z) => Ok(z),
            Init::Zeta => Ok(self.zeta.sample(rng)),
            Init::Stationary => self
                .stationary
                .as_ref()
                .map(|s| s.sample(rng))
                .ok_or_else(|| FragError::InvalidConfiguration("stationary law not solved".into())),
        }
    }

    fn forward_weight(&self, z: f64, p: usize) -> f64 {
        self.pairs[p].weight * self.tables[p].cdf(self.pairs[p].a * z)
    }

    /// Draw `Z_{n+1}` and the split given `Z_n = z`.
    pub fn step<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> Result<Move> {
        // thinning from the z-free proposal, exact scan when acceptance is low
        for _ in 0..MAX_THINNING {
            let p = self.pick.sample(rng);
            let t = &self.tables[p];
            let c = t.cdf(self.pairs[p].a * z);
            if rng.random::<f64>() * t.total() < c {
                return Ok(Move { z: t.invert(rng.random::<f64>() * c), pair: p });
            }
        }
        let w: Vec<f64> = (0..self.pairs.len()).map(|p| self.forward_weight(z, p)).collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(FragError::UnsupportedPoint(z));
        }
        let p = pick_linear(&w, rng.random::<f64>() * total);
        let c = self.tables[p].cdf(self.pairs[p].a * z);
        Ok(Move { z: self.tables[p].invert(rng.random::<f64>() * c), pair: p })
    }

    /// Draw `Z_{n-1}` and the split leading to `Z_n = y` under the
    /// stationary chain run backwards.
    pub fn reverse_step<R: Rng + ?Sized>(&self, y: f64, rng: &mut R) -> Result<Move> {
        let rev =
            self.reverse.as_ref().ok_or_else(|| FragError::InvalidConfiguration("stationary law not solved".into()))?;
        let total = rev.total();
        let w: Vec<f64> = self
            .pairs
            .iter()
            .map(|p| {
                let u = p.b * y;
                let prod: f64 = p.others.iter().map(|c| self.cdf.eval(c * y)).product();
                p.weight * u.exp() * prod * (total - rev.cdf(u)).max(0.0)
            })
            .collect();
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0) {
            return Err(FragError::UnsupportedPoint(y));
        }
        let p = pick_linear(&w, rng.random::<f64>() * sum);
        let lo = rev.cdf(self.pairs[p].b * y);
        let x = rev.invert(lo + rng.random::<f64>() * (total - lo));
        Ok(Move { z: x.max(self.pairs[p].b * y), pair: p })
    }

    /// Step record for a move from `z_prev`; `t` is the spine split time.
    pub fn spine_step(&self, n: usize, t: f64, z_prev: f64, mv: Move) -> SpineStep {
        let theta = self.theta(mv.pair);
        SpineStep {
            n,
            t,
            z: mv.z,
            y: (mv.z / z_prev).powf(1.0 / self.alpha) / theta,
            theta,
            delta: self.delta(mv.pair).clone(),
            flagged: false,
        }
    }
}

fn pick_linear(w: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    for (i, v) in w.iter().enumerate() {
        acc += v;
        if target < acc {
            return i;
        }
    }
    w.iter().rposition(|v| *v > 0.0).unwrap_or(0)
}

pub fn chain_step<R: Rng + ?Sized>(kernel: &Kernel, z: f64, rng: &mut R) -> Result<SpineStep> {
    let mv = kernel.step(z, rng)?;
    Ok(kernel.spine_step(1, f64::NAN, z, mv))
}

/// A run of the chain with the additive functional `S_n = sum log Y_i`.
#[derive(Debug, Clone, Serialize)]
pub struct ChainRun {
    pub steps: Vec<SpineStep>,
    pub s: Vec<f64>,
}

impl ChainRun {
    pub fn z(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.z).collect()
    }
}

/// Iterate the kernel from `z0`, reading `Z_0` as the extinction time so
/// that `T_n = Z_0 (1 - prod Y_i^alpha)`.
pub fn run_chain<R: Rng + ?Sized>(kernel: &Kernel, z0: f64, n_steps: usize, rng: &mut R) -> Result<ChainRun> {
    if n_steps == 0 {
        return Err(FragError::InvalidArgument("n_steps must be at least 1".into()));
    }
    let mut steps = Vec::with_capacity(n_steps + 1);
    steps.push(SpineStep { n: 0, t: 0.0, z: z0, y: 1.0, theta: 1.0, delta: MassPartition::zero(), flagged: false });
    let mut s = vec![0.0];
    let mut prod = 1.0;
    let mut z = z0;
    for n in 1..=n_steps {
        let mv = kernel.step(z, rng)?;
        let mut st = kernel.spine_step(n, 0.0, z, mv);
        prod *= st.y.powf(kernel.alpha);
        st.t = z0 * (1.0 - prod);
        s.push(s[n - 1] + st.y.ln());
        z = mv.z;
        steps.push(st);
    }
    Ok(ChainRun { steps, s })
}

/// `Z_n` for `n = 0..=n_steps` over independent replicas.
pub fn chain_states(
    kernel: &Kernel,
    init: Init,
    n_steps: usize,
    n_rep: usize,
    seed: u64,
    label: &str,
) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = (0..n_rep as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_stream(seed, label, r);
            let mut z = kernel.initial(init, &mut rng)?;
            let mut row = Vec::with_capacity(n_steps + 1);
            row.push(z);
            for _ in 0..n_steps {
                z = kernel.step(z, &mut rng)?.z;
                row.push(z);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok((0..=n_steps).map(|n| rows.iter().map(|r| r[n]).collect()).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct StartReport {
    pub z0: f64,
    /// KS distance between the law of Z_n and the stationary law, n = 0..=n_steps.
    pub ks: Vec<f64>,
    /// Fitted r in KS(n) ~ C r^{-n}.
    pub decay_rate: f64,
    pub decay_significant: bool,
    /// Number of n >= 5 where KS rose by more than two bands.
    pub increases_after_5: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicityReport {
    pub n_steps: usize,
    pub n_rep: usize,
    /// DKW band of one sample at 99%.
    pub band: f64,
    pub starts: Vec<StartReport>,
    /// Largest KS between final ECDFs of two starts.
    pub cross_start_ks: f64,
    pub contracting: bool,
}

pub fn ergodicity_report(
    kernel: &Kernel,
    pi: &GridFunction,
    z0_list: &[f64],
    n_steps: usize,
    n_rep: usize,
    seed: u64,
) -> Result<ErgodicityReport> {
    if z0_list.len() < 2 {
        return Err(FragError::InvalidArgument("need at least two starting points".into()));
    }
    let pi_cdf = GridSampler::from_grid(pi);
    let total = pi_cdf.total();
    let cdf = |x: f64| pi_cdf.cdf(x) / total;
    let band = stats::dkw_band(n_rep);
    let mut starts = Vec::new();
    let mut finals = Vec::new();
    for (k, &z0) in z0_list.iter().enumerate() {
        let states = chain_states(kernel, Init::Fixed(z0), n_steps, n_rep, derive(seed, k as u64), "ergodicity")?;
        let ks: Vec<f64> = states.iter().map(|s| stats::ks_against_cdf(s, cdf).map(|r| r.ks)).collect::<Result<_>>()?;
        let pts: Vec<(f64, f64)> =
            ks.iter().enumerate().skip(1).filter(|(_, v)| **v > 3.0 * band).map(|(n, v)| (n as f64, v.ln())).collect();
        let pts = if pts.len() >= 2 {
            pts
        } else {
            (1..=n_steps.min(3)).map(|n| (n as f64, ks[n].max(1e-300).ln())).collect()
        };
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let fit = stats::fit_line(&x, &y);
        let increases_after_5 = (5..n_steps).filter(|&n| ks[n + 1] > ks[n] + 2.0 * band).count();
        starts.push(StartReport {
            z0,
            decay_rate: (-fit.slope).exp(),
            decay_significant: fit.slope + 2.0 * fit.slope_se < 0.0,
            increases_after_5,
            ks,
        });
        finals.push(states.into_iter().last().unwrap());
    }
    let mut cross: f64 = 0.0;
    for a in 0..finals.len() {
        for b in a + 1..finals.len() {
            cross = cross.max(stats::ks_two_sample(&finals[a], &finals[b])?.ks);
        }
    }
    Ok(ErgodicityReport { n_steps, n_rep, band, starts, cross_start_ks: cross, contracting: cross <= 2.0 * band })
}

#[derive(Debug, Clone, Serialize)]
pub struct MuEstimate {
    pub mu: f64,
    pub ci: (f64, f64),
    pub level: f64,
    /// E (log Y_1)^2 and E (log Y_1)^4.
    pub m2: f64,
    pub m4: f64,
    pub n: usize,
    pub min_log_y: f64,
}

/// Mean of log Y_1 over steps drawn with Z_0 from the stationary law.
pub fn estimate_mu(steps: &[SpineStep], level: f64, seed: u64) -> Result<MuEstimate> {
    if steps.len() < 100 {
        return Err(FragError::InsufficientData { need: 100, have: steps.len() });
    }
    let ly: Vec<f64> = steps.iter().map(|s| s.y.ln()).collect();
    let ci = stats::bootstrap_ci(&ly, stats::mean, 400, level, seed);
    Ok(MuEstimate {
        mu: stats::mean(&ly),
        ci,
        level,
        m2: stats::mean(&ly.iter().map(|v| v * v).collect::<Vec<_>>()),
        m4: stats::mean(&ly.iter().map(|v| v.powi(4)).collect::<Vec<_>>()),
        n: ly.len(),
        min_log_y: ly.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// First steps of independent stationary chains.
pub fn stationary_first_steps(kernel: &Kernel, n: usize, seed: u64) -> Result<Vec<SpineStep>> {
    (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_stream(seed, "stationary-step", r);
            let z0 = kernel.initial(Init::Stationary, &mut rng)?;
            chain_step(kernel, z0, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Homogeneity {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-square test that the law of `(Y_{n+1}, Theta_{n+1})` given `Z_n` in a
/// bin is the same in two samples of `(z, y, theta)` triples.
pub fn homogeneity_test(a: &[(f64, f64, f64)], b: &[(f64, f64, f64)], z_edges: &[f64], n_cells: usize) -> Homogeneity {
    let mut statistic = 0.0;
    let mut dof = 0usize;
    for w in z_edges.windows(2) {
        let inside = |v: &&(f64, f64, f64)| v.0 >= w[0] && v.0 < w[1];
        let sa: Vec<_> = a.iter().filter(inside).collect();
        let sb: Vec<_> = b.iter().filter(inside).collect();
        if sa.len() < 50 || sb.len() < 50 {
            continue;
        }
        // cells: pooled quantiles of log Y crossed with theta above/below its pooled median
        let mut ly: Vec<f64> = sa.iter().chain(&sb).map(|v| v.1.ln()).collect();
        ly.sort_by(f64::total_cmp);
        let mut th: Vec<f64> = sa.iter().chain(&sb).map(|v| v.2).collect();
        th.sort_by(f64::total_cmp);
        let th_med = stats::quantile_sorted(&th, 0.5);
        let cuts: Vec<f64> = (1..n_cells).map(|c| stats::quantile_sorted(&ly, c as f64 / n_cells as f64)).collect();
        let cell = |v: &(f64, f64, f64)| {
            let c = cuts.partition_point(|q| *q < v.1.ln());
            2 * c + usize::from(v.2 > th_med)
        };
        let mut ca = vec![0.0; 2 * n_cells];
        let mut cb = vec![0.0; 2 * n_cells];
        sa.iter().for_each(|v| ca[cell(v)] += 1.0);
        sb.iter().for_each(|v| cb[cell(v)] += 1.0);
        let (na, nb) = (sa.len() as f64, sb.len() as f64);
        let mut used = 0usize;
        for c in 0..2 * n_cells {
            let tot = ca[c] + cb[c];
            if tot == 0.0 {
                continue;
            }
            used += 1;
            let ea = tot * na / (na + nb);
            let eb = tot * nb / (na + nb);
            statistic += (ca[c] - ea).powi(2) / ea + (cb[c] - eb).powi(2) / eb;
        }
        dof += used.saturating_sub(1);
    }
    let p_value = if dof == 0 { 1.0 } else { 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic) };
    Homogeneity { statistic, dof, p_value }
}

/// KS of kernel draws from `z` against the integrated transition density.
pub fn kernel_marginal_check(kernel: &Kernel, d: &Densities, z: f64, n: usize, seed: u64) -> Result<EcdfReport> {
    let draws: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|r| kernel.step(z, &mut replica_stream(seed, "kernel-marginal", r)).map(|m| m.z))
        .collect::<Result<_>>()?;
    let cdf = transition_cdf(d, z, 4000)?;
    stats::ks_against_cdf(&draws, |y| cdf.cdf(y) / cdf.total())
}

/// Cumulative of `P(x, .)` by trapezoid integration of the transition density.
pub fn transition_cdf(d: &Densities, x: f64, n: usize) -> Result<GridSampler> {
    let top = (x * max_a(d)).min(d.f.x_max);
    let h = top / n as f64;
    let psi: Vec<f64> = (0..=n).map(|j| d.transition_density(x, j as f64 * h)).collect::<Result<_>>()?;
    Ok(GridSampler::new(psi, h))
}

fn max_a(d: &Densities) -> f64 {
    d.quad.iter().flat_map(|q| q.a.iter().copied()).fold(1.0, f64::max)
}

/// Reproducible stream for a chain replica keyed by an integer.
pub fn chain_stream(seed: u64, index: u64) -> crate::rng::Stream {
    stream(derive(seed, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density_solver::{solve_stationary, GridSpec, SolverConfig};
    use crate::dislocation::DislocationLaw;

    fn densities(law: &str) -> Densities {
        let cfg =
            SolverConfig { grid: GridSpec { x_max: 18.0, n_points: 1536 }, n_quad: 64, ..SolverConfig::new(-1.0) };
        let mut d = Densities::solve(&DislocationLaw::parse(law).unwrap(), &cfg).unwrap();
        d.stationary = Some(solve_stationary(&d, 1e-10, 2000, 0.7).unwrap());
        d
    }

    #[test]
    fn grid_sampler_inverts_its_cdf() {
        let g = GridSampler::new(vec![0.0, 1.0, 3.0, 0.5, 0.0], 0.25);
        for x in [0.05, 0.3, 0.61, 0.9] {
            assert!((g.invert(g.cdf(x)) - x).abs() < 1e-12);
        }
        assert_eq!(g.cdf(5.0), g.total());
    }

    #[test]
    fn kary_steps_keep_equal_masses_and_support() {
        let d = densities("kary:2");
        let k = Kernel::new(&d).unwrap();
        let mut rng = chain_stream(1, 2);
        let mut z = 1.0;
        for _ in 0..200 {
            let st = chain_step(&k, z, &mut rng).unwrap();
            assert_eq!(st.theta, 0.5);
            assert_eq!(st.delta.masses(), &[0.5]);
            assert!(st.z < 2.0 * z && st.y > 1.0);
            z = st.z;
        }
    }

    #[test]
    fn kernel_draws_match_transition_density() {
        let d = densities("binary-uniform");
        let k = Kernel::new(&d).unwrap();
        let r = kernel_marginal_check(&k, &d, 1.0, 20_000, 3).unwrap();
        assert!(r.ks < 0.02, "{r:?}");
    }

    #[test]
    fn chain_functionals() {
        let d = densities("binary-uniform");
        let k = Kernel::new(&d).unwrap();
        let run = run_chain(&k, 2.0, 50, &mut chain_stream(4, 0)).unwrap();
        assert!(run.s.windows(2).all(|w| w[1] > w[0]));
        assert!(run.steps.windows(2).all(|w| w[1].t > w[0].t && w[1].t < 2.0));
        for w in run.steps.windows(2) {
            let lhs = w[1].y * w[1].theta;
            let rhs = (w[1].z / w[0].z).powf(-1.0);
            assert!((lhs - rhs).abs() < 1e-12 * rhs);
        }
    }

    #[test]
    fn reverse_step_inverts_forward_support() {
        let d = densities("binary-uniform");
        let k = Kernel::new(&d).unwrap();
        let mut rng = chain_stream(5, 0);
        for y in [0.5, 1.0, 3.0] {
            for _ in 0..100 {
                let mv = k.reverse_step(y, &mut rng).unwrap();
                assert!(y <= k.support_bound(mv.z, mv.pair) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn mu_needs_enough_data() {
        assert!(matches!(estimate_mu(&[], 0.99, 1), Err(FragError::InsufficientData { .. })));
    }
}
