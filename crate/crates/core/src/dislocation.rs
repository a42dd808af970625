//! Dislocation laws on the unit simplex with finitely many fragments.

use crate::error::{FragError, Result};
use crate::mass_partition::MassPartition;
use crate::rng;
use crate::stats;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use std::fmt;

#[derive(Debug, Clone)]
pub enum LawKind {
    BinaryUniform,
    BinaryFixed(f64),
    KaryEqual(usize),
    DirichletSorted { k: usize, theta: f64 },
    FiniteSupport(Vec<(f64, MassPartition)>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Geometric(f64),
    NonGeometric,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct DislocationLaw {
    kind: LawKind,
    geometry: Geometry,
    gamma: Option<Gamma<f64>>,
    picker: Option<WeightedIndex<f64>>,
}

/// One weighted point of a quadrature rule for the law.
#[derive(Debug, Clone)]
pub struct QuadNode {
    pub weight: f64,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct S1PowerReport {
    pub estimate: f64,
    pub ci: (f64, f64),
    pub exact: bool,
    pub divergence_suspected: bool,
}

const SUM_TOL: f64 = 1e-12;

impl DislocationLaw {
    pub fn new(kind: LawKind) -> Result<Self> {
        let mut gamma = None;
        let mut picker = None;
        match &kind {
            LawKind::BinaryUniform => {}
            LawKind::BinaryFixed(a) => {
                if !(*a > 0.0 && *a < 1.0) {
                    return Err(FragError::InvalidConfiguration(format!(
                        "binary-fixed ratio must lie in (0,1), got {a}"
                    )));
                }
            }
            LawKind::KaryEqual(k) => {
                if *k < 2 {
                    return Err(FragError::InvalidConfiguration(format!("kary needs k >= 2, got {k}")));
                }
            }
            LawKind::DirichletSorted { k, theta } => {
                if *k < 2 || !(*theta > 0.0) {
                    return Err(FragError::InvalidConfiguration(format!(
                        "dirichlet needs k >= 2 and theta > 0, got k={k}, theta={theta}"
                    )));
                }
                gamma = Some(
                    Gamma::new(*theta, 1.0)
                        .map_err(|e| FragError::InvalidConfiguration(format!("dirichlet theta: {e}")))?,
                );
            }
            LawKind::FiniteSupport(atoms) => {
                if atoms.is_empty() {
                    return Err(FragError::InvalidConfiguration("finite support law has no atoms".into()));
                }
                let total: f64 = atoms.iter().map(|a| a.0).sum();
                if (total - 1.0).abs() > 1e-9 || atoms.iter().any(|a| !(a.0 >= 0.0)) {
                    return Err(FragError::InvalidConfiguration(format!(
                        "finite support probabilities must be non-negative and sum to 1, got {total}"
                    )));
                }
                for (_, p) in atoms {
                    if (p.total() - 1.0).abs() > SUM_TOL {
                        return Err(FragError::InvalidConfiguration(format!(
                            "support point {:?} does not sum to 1",
                            p.masses()
                        )));
                    }
                    if p.len() < 2 {
                        return Err(FragError::InvalidConfiguration("support point equal to the unit state".into()));
                    }
                }
                picker = Some(
                    WeightedIndex::new(atoms.iter().map(|a| a.0))
                        .map_err(|e| FragError::InvalidConfiguration(e.to_string()))?,
                );
            }
        }
        let geometry = detect_geometry(&kind);
        Ok(Self { kind, geometry, gamma, picker })
    }

    pub fn binary_uniform() -> Self {
        Self::new(LawKind::BinaryUniform).unwrap()
    }

    pub fn kary(k: usize) -> Result<Self> {
        Self::new(LawKind::KaryEqual(k))
    }

    /// Parse `binary-uniform`, `binary-fixed:A`, `kary:K`, `dirichlet:K:THETA`
    /// or `finite:P:m1,m2,...|P:m1,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |m: &str| FragError::InvalidConfiguration(format!("law `{spec}`: {m}"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("not a number: `{s}`")));
        let parts: Vec<&str> = spec.trim().splitn(2, ':').collect();
        let kind = match parts[0] {
            "binary-uniform" if parts.len() == 1 => LawKind::BinaryUniform,
            "binary-fixed" if parts.len() == 2 => LawKind::BinaryFixed(num(parts[1])?),
            "kary" if parts.len() == 2 => {
                LawKind::KaryEqual(parts[1].trim().parse().map_err(|_| bad("k must be an integer"))?)
            }
            "dirichlet" if parts.len() == 2 => {
                let (k, th) = parts[1].split_once(':').ok_or_else(|| bad("expected dirichlet:K:THETA"))?;
                LawKind::DirichletSorted {
                    k: k.trim().parse().map_err(|_| bad("k must be an integer"))?,
                    theta: num(th)?,
                }
            }
            "finite" if parts.len() == 2 => {
                let mut atoms = Vec::new();
                for atom in parts[1].split('|') {
                    let (p, ms) = atom.split_once(':').ok_or_else(|| bad("expected P:m1,m2,..."))?;
                    let masses = ms.split(',').map(num).collect::<Result<Vec<_>>>()?;
                    atoms.push((num(p)?, MassPartition::rearrange(&masses)?));
                }
                LawKind::FiniteSupport(atoms)
            }
            _ => return Err(bad("unknown law")),
        };
        Self::new(kind)
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn is_geometric(&self) -> Geometry {
        self.geometry
    }

    pub fn conservative(&self) -> bool {
        true
    }

    /// Largest possible number of fragments in one split.
    pub fn max_fragments(&self) -> usize {
        match &self.kind {
            LawKind::BinaryUniform | LawKind::BinaryFixed(_) => 2,
            LawKind::KaryEqual(k) | LawKind::DirichletSorted { k, .. } => *k,
            LawKind::FiniteSupport(a) => a.iter().map(|(_, p)| p.len()).max().unwrap_or(1),
        }
    }

    /// True when every split is the same point of the simplex.
    pub fn is_deterministic(&self) -> bool {
        match &self.kind {
            LawKind::BinaryFixed(_) | LawKind::KaryEqual(_) => true,
            LawKind::FiniteSupport(a) => a.iter().filter(|x| x.0 > 0.0).count() == 1,
            _ => false,
        }
    }

    /// Write a non-increasing split into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        match &self.kind {
            LawKind::BinaryUniform => loop {
                let v: f64 = rng.random();
                let (a, b) = if v >= 0.5 { (v, 1.0 - v) } else { (1.0 - v, v) };
                if b > 0.0 {
                    out.push(a);
                    out.push(b);
                    return;
                }
            },
            LawKind::BinaryFixed(a) => {
                let a = a.max(1.0 - a);
                out.push(a);
                out.push(1.0 - a);
            }
            LawKind::KaryEqual(k) => {
                let s = 1.0 / *k as f64;
                out.extend(std::iter::repeat_n(s, *k));
            }
            LawKind::DirichletSorted { k, .. } => {
                let g = self.gamma.as_ref().unwrap();
                loop {
                    out.clear();
                    let mut total = 0.0;
                    for _ in 0..*k {
                        let x = g.sample(rng);
                        total += x;
                        out.push(x);
                    }
                    if total > 0.0 {
                        out.iter_mut().for_each(|x| *x /= total);
                        out.sort_by(|a, b| b.partial_cmp(a).unwrap());
                        while out.last() == Some(&0.0) {
                            out.pop();
                        }
                        if out.len() >= 2 {
                            return;
                        }
                    }
                }
            }
            LawKind::FiniteSupport(atoms) => {
                let i = self.picker.as_ref().unwrap().sample(rng);
                out.extend_from_slice(atoms[i].1.masses());
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MassPartition {
        let mut v = Vec::with_capacity(self.max_fragments());
        self.sample_into(rng, &mut v);
        MassPartition::from_nonnegative(v)
    }

    /// Quadrature rule for integrals against the law.
    ///
    /// Deterministic and finite laws are integrated exactly. The uniform
    /// binary law uses the midpoint rule in s1 on [1/2, 1]; Dirichlet laws
    /// use `n_quad` frozen samples drawn from `seed`.
    pub fn quadrature(&self, n_quad: usize, seed: u64) -> Vec<QuadNode> {
        match &self.kind {
            LawKind::BinaryUniform => (0..n_quad)
                .map(|j| {
                    let s1 = 0.5 + (j as f64 + 0.5) / (2.0 * n_quad as f64);
                    QuadNode { weight: 1.0 / n_quad as f64, s: vec![s1, 1.0 - s1] }
                })
                .collect(),
            LawKind::BinaryFixed(_) | LawKind::KaryEqual(_) => {
                let mut s = Vec::new();
                self.sample_into(&mut rng::stream(0), &mut s);
                vec![QuadNode { weight: 1.0, s }]
            }
            LawKind::FiniteSupport(atoms) => atoms
                .iter()
                .filter(|a| a.0 > 0.0)
                .map(|(p, m)| QuadNode { weight: *p, s: m.masses().to_vec() })
                .collect(),
            LawKind::DirichletSorted { .. } => {
                let mut r = rng::replica_stream(seed, "nu-quadrature", 0);
                (0..n_quad)
                    .map(|_| {
                        let mut s = Vec::new();
                        self.sample_into(&mut r, &mut s);
                        QuadNode { weight: 1.0 / n_quad as f64, s }
                    })
                    .collect()
            }
        }
    }

    /// Estimate of the integral of s1^{-q} against the law.
    pub fn integral_s1_power(&self, q: f64, n_mc: usize, seed: u64) -> Result<S1PowerReport> {
        if !(q > 0.0) || n_mc == 0 {
            return Err(FragError::InvalidArgument("need q > 0 and n_mc >= 1".into()));
        }
        let exact = match &self.kind {
            LawKind::BinaryFixed(_) | LawKind::KaryEqual(_) | LawKind::FiniteSupport(_) => {
                Some(self.quadrature(1, seed).iter().map(|n| n.weight * n.s[0].powf(-q)).sum::<f64>())
            }
            _ => None,
        };
        if let Some(v) = exact {
            return Ok(S1PowerReport { estimate: v, ci: (v, v), exact: true, divergence_suspected: false });
        }
        let mut r = rng::replica_stream(seed, "s1-power", 0);
        let mut buf = Vec::new();
        let draws: Vec<f64> = (0..2 * n_mc)
            .map(|_| {
                self.sample_into(&mut r, &mut buf);
                buf[0].powf(-q)
            })
            .collect();
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let half = mean(&draws[..n_mc]);
        let full = mean(&draws);
        let ci = stats::bootstrap_ci(&draws, mean, 400, 0.99, rng::derive(seed, 17));
        let width = (ci.1 - ci.0).max(f64::EPSILON);
        let divergence_suspected = (half - full).abs() > 2.0 * width;
        Ok(S1PowerReport { estimate: full, ci, exact: false, divergence_suspected })
    }
}

impl fmt::Display for DislocationLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LawKind::BinaryUniform => write!(f, "binary-uniform"),
            LawKind::BinaryFixed(a) => write!(f, "binary-fixed:{a}"),
            LawKind::KaryEqual(k) => write!(f, "kary:{k}"),
            LawKind::DirichletSorted { k, theta } => write!(f, "dirichlet:{k}:{theta}"),
            LawKind::FiniteSupport(atoms) => {
                write!(f, "finite:")?;
                for (i, (p, m)) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, "|")?;
                    }
                    let ms: Vec<String> = m.masses().iter().map(|x| x.to_string()).collect();
                    write!(f, "{p}:{}", ms.join(","))?;
                }
                Ok(())
            }
        }
    }
}

fn detect_geometry(kind: &LawKind) -> Geometry {
    match kind {
        LawKind::BinaryUniform | LawKind::DirichletSorted { .. } => Geometry::NonGeometric,
        LawKind::KaryEqual(k) => Geometry::Geometric(1.0 / *k as f64),
        LawKind::BinaryFixed(a) => lattice_ratio(&[*a, 1.0 - *a]),
        LawKind::FiniteSupport(atoms) => {
            let masses: Vec<f64> =
                atoms.iter().filter(|a| a.0 > 0.0).flat_map(|a| a.1.masses().iter().copied()).collect();
            lattice_ratio(&masses)
        }
    }
}

const LATTICE_TOL: f64 = 1e-9;
const LATTICE_CONFIDENT: usize = 12;
const LATTICE_MAX: usize = 64;

/// Search for r in (0,1) with every mass in r^N.
///
/// The coarsest common spacing g of the log-masses is found by trying
/// g = l_min / n for n = 1, 2, ...; the ratio is then reported in the form
/// 1/b for the smallest integer b with b^j = e^g, when one exists.
/// Lattice structure of a set of masses in (0,1).
pub fn lattice_ratio(masses: &[f64]) -> Geometry {
    let logs: Vec<f64> = masses.iter().filter(|m| **m > 0.0).map(|m| -m.ln()).collect();
    let lmin = logs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lmin > 0.0) || !lmin.is_finite() {
        return Geometry::Unknown;
    }
    for n in 1..=LATTICE_MAX {
        let g = lmin / n as f64;
        let fits = logs.iter().all(|l| {
            let q = l / g;
            (q - q.round()).abs() <= LATTICE_TOL * q.max(1.0)
        });
        if fits {
            if n > LATTICE_CONFIDENT {
                return Geometry::Unknown;
            }
            let base = g.exp();
            for j in (2..=64).rev() {
                let b = (g / j as f64).exp();
                if (b - b.round()).abs() <= LATTICE_TOL * b && b.round() >= 2.0 {
                    return Geometry::Geometric(1.0 / b.round());
                }
            }
            return Geometry::Geometric(1.0 / base);
        }
    }
    Geometry::NonGeometric
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_samples() {
        let mut r = rng::stream(1);
        assert_eq!(DislocationLaw::kary(2).unwrap().sample(&mut r).masses(), &[0.5, 0.5]);
        let fixed = DislocationLaw::parse("binary-fixed:0.7").unwrap();
        let s = fixed.sample(&mut r);
        assert!((s.get(0) - 0.7).abs() < 1e-15 && (s.get(1) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn binary_uniform_mean_of_largest_is_three_quarters() {
        let law = DislocationLaw::binary_uniform();
        let mut r = rng::stream(2);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| law.sample(&mut r).get(0)).sum::<f64>() / n as f64;
        // sd of s1 is 1/sqrt(48); 5 standard errors
        assert!((m - 0.75).abs() < 5.0 * (1.0 / 48f64).sqrt() / (n as f64).sqrt(), "{m}");
    }

    #[test]
    fn s1_power_integrals() {
        let k2 = DislocationLaw::kary(2).unwrap().integral_s1_power(1.0, 10, 0).unwrap();
        assert!(k2.exact && k2.estimate == 2.0);
        let f = DislocationLaw::parse("binary-fixed:0.7").unwrap().integral_s1_power(2.0, 10, 0).unwrap();
        assert!((f.estimate - 1.0 / 0.49).abs() < 1e-12);
        let u = DislocationLaw::binary_uniform().integral_s1_power(1.0, 100_000, 3).unwrap();
        let oracle = 2.0 * 2f64.ln();
        assert!(u.ci.0 <= oracle && oracle <= u.ci.1, "{u:?}");
        assert!(!u.divergence_suspected);
    }

    #[test]
    fn midpoint_quadrature_matches_closed_form() {
        let q = DislocationLaw::binary_uniform().quadrature(512, 0);
        let v: f64 = q.iter().map(|n| n.weight / n.s[0]).sum();
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn geometry_detection() {
        assert_eq!(DislocationLaw::kary(3).unwrap().is_geometric(), Geometry::Geometric(1.0 / 3.0));
        assert_eq!(DislocationLaw::binary_uniform().is_geometric(), Geometry::NonGeometric);
        let four = DislocationLaw::parse("finite:1:0.25,0.25,0.25,0.25").unwrap();
        assert_eq!(four.is_geometric(), Geometry::Geometric(0.5));
        let mixed = DislocationLaw::parse("finite:0.5:0.5,0.25,0.25|0.5:0.5,0.5").unwrap();
        assert_eq!(mixed.is_geometric(), Geometry::Geometric(0.5));
        let odd = DislocationLaw::parse("binary-fixed:0.7").unwrap();
        assert_eq!(odd.is_geometric(), Geometry::NonGeometric);
    }

    #[test]
    fn invalid_configurations() {
        assert!(DislocationLaw::parse("finite:0.5:0.5,0.5").is_err());
        assert!(DislocationLaw::parse("finite:1:1.0").is_err());
        assert!(DislocationLaw::parse("kary:1").is_err());
        assert!(DislocationLaw::parse("nope").is_err());
    }

    #[test]
    fn display_roundtrips_through_parse() {
        for s in ["binary-uniform", "binary-fixed:0.7", "kary:3", "dirichlet:4:1", "finite:1:0.5,0.5"] {
            assert_eq!(DislocationLaw::parse(s).unwrap().to_string(), s);
        }
    }
}
