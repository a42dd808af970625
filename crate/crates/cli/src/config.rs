//! Experiment configuration: a flat TOML file, overridden by flags.

use fragsim::{DislocationLaw, FragError, GridSpec, SolverConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub law: String,
    pub alpha: f64,
    pub dust: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub omega: f64,
    pub n_quad: usize,
    pub reps: usize,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let s = SolverConfig::new(-1.0);
        Self {
            law: "binary-uniform".into(),
            alpha: -1.0,
            dust: 1e-6,
            x_max: s.grid.x_max,
            n_points: s.grid.n_points,
            tol: s.tol,
            max_iter: s.max_iter,
            omega: s.omega,
            n_quad: s.n_quad,
            reps: 10_000,
            seed: None,
            out_dir: PathBuf::from("."),
        }
    }
}

/// Values given on the command line; each one overrides the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub law: Option<String>,
    pub alpha: Option<f64>,
    pub dust: Option<f64>,
    pub x_max: Option<f64>,
    pub n_points: Option<usize>,
    pub tol: Option<f64>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

fn field(name: &str, msg: String) -> FragError {
    FragError::InvalidConfiguration(format!("config field `{name}`: {msg}"))
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, over: &Overrides, env_seed: Option<&str>) -> Result<Self, FragError> {
        let mut c = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| FragError::InvalidConfiguration(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| FragError::InvalidConfiguration(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = &over.$f { c.$f = v.clone(); } )* };
        }
        apply!(law, alpha, dust, x_max, n_points, tol, reps, out_dir);
        if over.seed.is_some() {
            c.seed = over.seed;
        }
        if c.seed.is_none() {
            if let Some(s) = env_seed {
                c.seed =
                    Some(s.trim().parse().map_err(|_| field("seed", format!("FRAGSIM_SEED={s:?} is not an integer")))?);
            }
        }
        c.seed.get_or_insert(DEFAULT_SEED);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), FragError> {
        DislocationLaw::parse(&self.law).map_err(|e| field("law", e.to_string()))?;
        if !(self.alpha < 0.0 && self.alpha.is_finite()) {
            return Err(field("alpha", format!("must be negative and finite, got {}", self.alpha)));
        }
        if !(self.dust > 0.0 && self.dust < 1.0) {
            return Err(field("dust", format!("must lie in (0, 1), got {}", self.dust)));
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return Err(field("x_max", format!("must be positive, got {}", self.x_max)));
        }
        if self.n_points < 8 {
            return Err(field("n_points", format!("must be at least 8, got {}", self.n_points)));
        }
        if !(self.tol > 0.0) {
            return Err(field("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(field("max_iter", "must be positive".into()));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(field("omega", format!("must lie in (0, 1], got {}", self.omega)));
        }
        if self.n_quad == 0 {
            return Err(field("n_quad", "must be positive".into()));
        }
        if self.reps == 0 {
            return Err(field("reps", "must be positive".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn law(&self) -> DislocationLaw {
        DislocationLaw::parse(&self.law).expect("validated at load")
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            grid: GridSpec { x_max: self.x_max, n_points: self.n_points },
            tol: self.tol,
            max_iter: self.max_iter,
            omega: self.omega,
            n_quad: self.n_quad,
            seed: self.seed(),
            ..SolverConfig::new(self.alpha)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_env_is_a_fallback() {
        let dir = std::env::temp_dir().join(format!("fragsim-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("exp.toml");
        std::fs::write(&p, "alpha = -0.5\nseed = 7\nreps = 10\n").unwrap();
        let c = ExperimentConfig::load(Some(&p), &Overrides::default(), Some("99")).unwrap();
        assert_eq!((c.alpha, c.seed(), c.reps), (-0.5, 7, 10));
        let over = Overrides { alpha: Some(-2.0), seed: Some(3), ..Default::default() };
        let c = ExperimentConfig::load(Some(&p), &over, None).unwrap();
        assert_eq!((c.alpha, c.seed()), (-2.0, 3));
        let c = ExperimentConfig::load(None, &Overrides::default(), Some("99")).unwrap();
        assert_eq!(c.seed(), 99);
        assert_eq!(ExperimentConfig::load(None, &Overrides::default(), None).unwrap().seed(), DEFAULT_SEED);
    }

    #[test]
    fn field_precise_errors() {
        let bad = Overrides { dust: Some(2.0), ..Default::default() };
        let e = ExperimentConfig::load(None, &bad, None).unwrap_err().to_string();
        assert!(e.contains("`dust`"), "{e}");
        let bad = Overrides { law: Some("kary:1".into()), ..Default::default() };
        assert!(ExperimentConfig::load(None, &bad, None).unwrap_err().to_string().contains("`law`"));
        let e = ExperimentConfig::load(None, &Overrides::default(), Some("x")).unwrap_err().to_string();
        assert!(e.contains("`seed`"));
        let dir = std::env::temp_dir().join(format!("fragsim-cfg2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("exp.toml");
        std::fs::write(&p, "alhpa = -1\n").unwrap();
        assert!(ExperimentConfig::load(Some(&p), &Overrides::default(), None).is_err());
    }
}
