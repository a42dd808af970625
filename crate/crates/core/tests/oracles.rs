//! Statistical checks of the model-level properties that the acceptance suite
//! does not already cover.

use fragsim::density_solver::{stationary_moments, Densities, GridSpec, SolverConfig};
use fragsim::frag_engine::{Engine, Focus, FragmentationConfig, RunOptions};
use fragsim::geometric::{kary_runs, KaryConfig};
use fragsim::invariant::{lambda_from_paths, Event, EventPredicate, TimeGrid};
use fragsim::renewal_limit::{self, biased_ladder, product_decay, LimitConfig, LimitSampler};
use fragsim::spine_chain::{estimate_mu, homogeneity_test, Kernel};
use fragsim::stats::{self, ks_two_sample};
use fragsim::{DislocationLaw, FragError, Geometry};
use std::sync::OnceLock;

fn densities() -> &'static Densities {
    static D: OnceLock<Densities> = OnceLock::new();
    D.get_or_init(|| Densities::solve_all(&DislocationLaw::binary_uniform(), &SolverConfig::new(-1.0)).unwrap())
}

fn engine(law: DislocationLaw, dust: f64) -> Engine {
    Engine::from_densities(FragmentationConfig::new(-1.0, law, dust, 3).unwrap(), densities()).unwrap()
}

#[test]
fn extinction_time_is_self_similar() {
    let eng = engine(DislocationLaw::binary_uniform(), 1e-6);
    let n = 100_000;
    let zeta = |key, mass: f64| {
        let opts = RunOptions { root_mass: mass, ..RunOptions::new(Focus::BeforeZeta { window: 0.0 }) };
        eng.map_records(key, n, &opts, |r| r.zeta).unwrap()
    };
    let unit = zeta(11, 1.0);
    // started from mass 1/2 with alpha = -1, extinction is twice as fast
    let half: Vec<f64> = zeta(12, 0.5).into_iter().map(|z| 2.0 * z).collect();
    let rep = ks_two_sample(&unit, &half).unwrap();
    assert!(rep.ks <= 0.02, "KS {}", rep.ks);
}

#[test]
fn spine_transitions_do_not_depend_on_the_step_index() {
    let eng = engine(DislocationLaw::binary_uniform(), 1e-9);
    let triples = eng
        .map_records(21, 20_000, &RunOptions::new(Focus::BeforeZeta { window: 0.0 }), |r| {
            let s = r.spine();
            let at = |n: usize| s.get(n + 1).filter(|x| !x.flagged).map(|x| (s[n].z, x.y, x.theta));
            (at(5), at(20))
        })
        .unwrap();
    let a: Vec<_> = triples.iter().filter_map(|t| t.0).collect();
    let b: Vec<_> = triples.iter().filter_map(|t| t.1).collect();
    assert!(b.len() > 15_000, "only {} unflagged steps at n = 20", b.len());
    let h = homogeneity_test(&a, &b, &[0.0, 0.5, 1.0, 1.5, 2.5, 12.0], 5);
    assert!(h.dof > 10);
    assert!(h.p_value > 0.01, "{h:?}");
}

#[test]
fn kary_search_and_generic_engine_agree() {
    let n = 100_000;
    let kc = KaryConfig::new(2, -1.0, 1e-6, 5).unwrap();
    let dfs: Vec<f64> = kary_runs(&kc, n).into_iter().map(|r| r.zeta).collect();
    let law = DislocationLaw::kary(2).unwrap();
    let dk = Densities::solve(&law, &SolverConfig::new(-1.0)).unwrap();
    let eng = Engine::from_densities(FragmentationConfig::new(-1.0, law, 1e-6, 6).unwrap(), &dk).unwrap();
    let generic = eng.map_records(6, n, &RunOptions::new(Focus::BeforeZeta { window: 0.0 }), |r| r.zeta).unwrap();
    let rep = ks_two_sample(&dfs, &generic).unwrap();
    assert!(rep.ks <= 0.02, "KS {}", rep.ks);
}

#[test]
fn ladder_increments_obey_the_law_of_large_numbers() {
    let k = Kernel::new(densities()).unwrap();
    let steps = fragsim::spine_chain::stationary_first_steps(&k, 100_000, 8).unwrap();
    let mu = estimate_mu(&steps, 0.99, 9).unwrap();
    let n = 400;
    let averages: Vec<f64> = (0..n)
        .map(|r| {
            let l = biased_ladder(&k, (-1, 40), 256, 1000 + r).unwrap();
            (1..=40).map(|j| l.rung(j).y.ln()).sum::<f64>() / 40.0
        })
        .collect();
    let (m, se) = (stats::mean(&averages), stats::std_error(&averages));
    let mu_se = ((mu.m2 - mu.mu * mu.mu) / mu.n as f64).sqrt();
    assert!((m - mu.mu).abs() <= 3.0 * se.hypot(mu_se), "ladder {m} +- {se}, mu {} +- {mu_se}", mu.mu);
}

#[test]
fn products_of_stationary_increments_decay_geometrically() {
    let k = Kernel::new(densities()).unwrap();
    let rep = product_decay(&k, 20, 20_000, 4).unwrap();
    assert!(rep.slope < 0.0 && rep.slope + 3.0 * rep.slope_se < 0.0, "{rep:?}");
    assert!(rep.means.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn lattice_guard_separates_geometric_laws() {
    let d = densities();
    let k = Kernel::new(d).unwrap();
    let thetas: Vec<f64> =
        fragsim::spine_chain::stationary_first_steps(&k, 2000, 1).unwrap().iter().map(|s| s.theta).collect();
    assert!(!matches!(renewal_limit::theta_lattice(&thetas), Geometry::Geometric(_)));
    assert!(matches!(
        renewal_limit::require_non_arithmetic(&DislocationLaw::kary(3).unwrap()),
        Err(FragError::ArithmeticLaw { .. })
    ));
    let kary = [0.5, 0.25, 0.5, 0.125];
    assert!(matches!(renewal_limit::theta_lattice(&kary), Geometry::Geometric(r) if (r - 0.5).abs() < 1e-12));
}

#[test]
fn stationary_moments_are_stable_under_grid_doubling() {
    let law = DislocationLaw::binary_uniform();
    let base = densities();
    let wide = SolverConfig { grid: GridSpec { x_max: 36.0, n_points: 6144 }, ..SolverConfig::new(-1.0) };
    let wide = Densities::solve_all(&law, &wide).unwrap();
    let (e1, m1) = stationary_moments(base.pi(), 0.1, 1.5);
    let (e2, m2) = stationary_moments(wide.pi(), 0.1, 1.5);
    assert!(e1.is_finite() && m1.is_finite());
    assert!((e1 - e2).abs() <= 1e-3 * e1, "{e1} vs {e2}");
    assert!((m1 - m2).abs() <= 1e-2 * m1, "{m1} vs {m2}");
}

#[test]
fn lambda_is_non_negative_and_monotone_in_the_event() {
    let d = densities();
    let k = Kernel::new(d).unwrap();
    let eng = engine(DislocationLaw::binary_uniform(), 1e-6);
    let sampler = LimitSampler {
        kernel: &k,
        engine: &eng,
        cdf: &d.cdf,
        window: (-40, 40),
        min_pool: 1024,
        config: LimitConfig::default(),
    };
    let grid = TimeGrid { t_max: 12.0, n: 48 };
    let paths = sampler.full_samples(&grid.times(), 300, 17).unwrap();
    let nested = [(0.3, 0.6), (0.2, 0.7), (0.1, 0.9), (0.0, 1.0)];
    let mut prev = 0.0;
    for (lo, hi) in nested {
        let a = EventPredicate::new(1.0, Event::TotalMass { lo, hi }).unwrap();
        let est = lambda_from_paths(&a, &paths, 0.95, 1).unwrap().estimate;
        assert!(est >= prev, "{est} < {prev} for ({lo}, {hi})");
        prev = est;
    }
    assert!(prev > 0.0);
}
