// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{ExperimentConfig, Overrides};
use fragsim::acceptance::{self, AcceptanceConfig};
use fragsim::density_solver::stationary_closure;
use fragsim::frag_engine::{Engine, Focus, FragmentationConfig, RunOptions};
use fragsim::geometric::{self, KaryConfig};
use fragsim::invariant::{self, EventPredicate, TimeGrid};
use fragsim::renewal_limit::{self, LimitConfig, LimitSampler, LimitStateSample, DEFAULT_WINDOW};
use fragsim::rng::{derive, label_key, stream};
use fragsim::spine_chain::{ergodicity_report, run_chain, Init, Kernel};
use fragsim::{Densities, FragError, LawKind, MassPartition};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const BUILD_ID: &str = env!("FRAGSIM_BUILD_ID");

#[derive(Parser)]
#[command(name = "fragsim", version, about = "Self-similar fragmentations near extinction")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Flat TOML experiment file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    law: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    dust: Option<f64>,
    #[arg(long, global = true)]
    x_max: Option<f64>,
    #[arg(long, global = true)]
    n_points: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Replica count.
    #[arg(long, visible_alias = "n", global = true)]
    reps: Option<usize>,
    /// Seed; falls back to the config file, then FRAGSIM_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write gnuplot scripts next to the CSV files.
    #[arg(long, global = true)]
    gnuplot_stub: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trees and write one JSON object per run.
    Simulate {
        #[arg(long, default_value = "runs.jsonl")]
        out: PathBuf,
        /// Dump complete genealogies.
        #[arg(long)]
        full_tree: bool,
    },
    /// Solve for the density of the extinction time.
    SolveDensity,
    /// Solve for the stationary law of the driving chain.
    Stationary,
    /// Sample the driving chain.
    SpineChain {
        /// `stationary`, `zeta` or a positive number.
        #[arg(long, default_value = "stationary")]
        z0: String,
        #[arg(long, default_value_t = 50)]
        steps: usize,
    },
    /// Convergence of the chain to its stationary law from several starts.
    Ergodicity {
        #[arg(long, value_delimiter = ',', default_value = "0.2,1,4")]
        z0: Vec<f64>,
        #[arg(long, default_value_t = 30)]
        steps: usize,
    },
    /// Sample the scaling limit at the query times.
    Limit {
        #[arg(long, value_enum, default_value = "spine")]
        mode: LimitMode,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2")]
        times: Vec<f64>,
        /// Ladder window `k_min,k_max`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        window: Option<Vec<i64>>,
        /// Dust threshold of the limit, in limit units.
        #[arg(long, default_value_t = 1e-4)]
        limit_dust: f64,
        /// For geometric laws: sample along eps = k^{alpha (x + n)}.
        #[arg(long)]
        subsequence: bool,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long, default_value_t = 12)]
        n_sub: usize,
    },
    /// Rescaled pre-limit states near extinction, in the schema of `limit`.
    Prelimit {
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3")]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2")]
        times: Vec<f64>,
    },
    /// Invariance of the time-integrated limit law under fragmentation.
    Invariance {
        #[arg(long, default_value_t = 0.05)]
        u: f64,
        #[arg(long, default_value_t = 1.0)]
        caps: f64,
        /// JSON list of events; defaults to the fixed six-event family.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long, default_value_t = 12.0)]
        t_max: f64,
        #[arg(long, default_value_t = 48)]
        n_times: usize,
    },
    /// k-ary fragmentations: monotone chain and subsequence limits.
    Geometric {
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, value_enum, default_value = "monotone")]
        mode: GeometricMode,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5")]
        x: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        levels: usize,
        #[arg(long, value_delimiter = ',', default_value = "8,12")]
        n_range: Vec<usize>,
    },
    /// Run the acceptance suite; exits 1 on any failure.
    Accept {
        #[arg(long, value_enum, default_value = "desk")]
        profile: Profile,
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<usize>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LimitMode {
    Spine,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeometricMode {
    Monotone,
    Subseq,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Full sample sizes.
    Desk,
    /// A tenth of the sample sizes.
    Quick,
}

enum Failure {
    Module(FragError),
    Acceptance,
}

impl From<FragError> for Failure {
    fn from(e: FragError) -> Self {
        Failure::Module(e)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> FragError {
    FragError::InvalidArgument(format!("{}: {e}", path.display()))
}

struct Ctx {
    cfg: ExperimentConfig,
    gnuplot: bool,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn densities(&self, with_stationary: bool) -> Result<Densities, FragError> {
        let law = self.cfg.law();
        if with_stationary {
            Densities::solve_all(&law, &self.cfg.solver())
        } else {
            Densities::solve(&law, &self.cfg.solver())
        }
    }

    fn engine(&self, d: &Densities) -> Result<Engine, FragError> {
        let fc = FragmentationConfig::new(self.cfg.alpha, self.cfg.law(), self.cfg.dust, self.cfg.seed())?;
        Engine::from_densities(fc, d)
    }

    fn key(&self, label: &str) -> u64 {
        label_key(self.cfg.seed(), label)
    }

    fn report(&self, name: &str, body: impl Serialize) -> Result<(), FragError> {
        let p = self.path(name);
        let v = json!({ "build": BUILD_ID, "config": self.cfg, "report": body });
        let text = serde_json::to_string_pretty(&v).map_err(|e| io_err(&p, e))?;
        std::fs::write(&p, text + "\n").map_err(|e| io_err(&p, e))?;
        eprintln!("wrote {}", p.display());
        Ok(())
    }

    fn csv(&self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), FragError> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p).map_err(|e| io_err(&p, e))?;
        w.write_record(header).map_err(|e| io_err(&p, e))?;
        for r in rows {
            w.write_record(&r).map_err(|e| io_err(&p, e))?;
        }
        w.flush().map_err(|e| io_err(&p, e))?;
        eprintln!("wrote {}", p.display());
        Ok(())
    }

    /// A gnuplot script plotting column `y` against column `x` of a CSV file.
    fn gnuplot(&self, csv_name: &str, x: usize, y: usize, title: &str) -> Result<(), FragError> {
        if !self.gnuplot {
            return Ok(());
        }
        let p = self.path(&format!("{}.gp", csv_name.trim_end_matches(".csv")));
        let script = format!(
            "set datafile separator ','\nset key autotitle columnhead\nset title '{title}'\nplot '{csv_name}' using {x}:{y} with lines\npause -1\n"
        );
        std::fs::write(&p, script).map_err(|e| io_err(&p, e))
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

fn limit_header() -> Vec<String> {
    let mut h = vec!["replica".to_string(), "t".into()];
    h.extend((1..=8).map(|i| format!("m{i}")));
    h.extend(["spine".to_string(), "total".into()]);
    h
}

fn limit_row(replica: String, t: f64, state: Option<&MassPartition>, spine: f64) -> Vec<String> {
    let mut r = vec![replica, f(t)];
    r.extend((0..8).map(|i| state.map_or(String::new(), |s| f(s.get(i)))));
    r.push(f(spine));
    r.push(state.map_or(String::new(), |s| f(s.total())));
    r
}

fn limit_rows(samples: &[LimitStateSample], tag: impl Fn(usize) -> String) -> Vec<Vec<String>> {
    samples
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            let tag = &tag;
            s.query_times.iter().enumerate().map(move |(q, &t)| {
                let state = s.states.get(q);
                limit_row(tag(i), t, state, s.spine_values[q])
            })
        })
        .collect()
}

fn simulate(cx: &Ctx, out: &Path, full_tree: bool) -> Result<(), Failure> {
    let d = cx.densities(false)?;
    let eng = cx.engine(&d)?;
    let focus = if full_tree { Focus::Full } else { Focus::BeforeZeta { window: 0.0 } };
    let lines = eng.map_records(cx.key("simulate"), cx.cfg.reps, &RunOptions::new(focus), |r| {
        let spine: Vec<Value> = r
            .spine()
            .iter()
            .map(|s| json!({ "n": s.n, "t": s.t, "z": s.z, "y": s.y, "theta": s.theta, "flagged": s.flagged }))
            .collect();
        let mut v = json!({
            "key": r.key,
            "zeta": r.zeta,
            "zeta_error_bound": r.zeta_error_bound,
            "blocks": r.blocks.len(),
            "dust_blocks": r.n_dust,
            "spine": spine,
        });
        if full_tree {
            v["tree"] = serde_json::to_value(&r.blocks).unwrap_or_default();
        }
        v.to_string()
    })?;
    let p = cx.path(&out.to_string_lossy());
    let mut w = BufWriter::new(File::create(&p).map_err(|e| io_err(&p, e))?);
    for l in &lines {
        writeln!(w, "{l}").map_err(|e| io_err(&p, e))?;
    }
    w.flush().map_err(|e| io_err(&p, e))?;
    eprintln!("wrote {}", p.display());
    cx.report("simulate.json", json!({ "runs": lines.len(), "out": p, "full_tree": full_tree }))?;
    Ok(())
}

fn solve_density(cx: &Ctx) -> Result<(), Failure> {
    let d = cx.densities(false)?;
    let rows = d.f.nodes().zip(&d.cdf.values).map(|((x, v), c)| vec![f(x), f(v), f(*c)]);
    cx.csv("density.csv", &["x".into(), "f_zeta".into(), "F_zeta".into()], rows)?;
    cx.gnuplot("density.csv", 1, 2, "density of the extinction time")?;
    cx.report("density.json", json!({ "solve": d.report, "diagnostics": d.diagnostics() }))?;
    Ok(())
}

fn stationary(cx: &Ctx) -> Result<(), Failure> {
    let d = cx.densities(true)?;
    let st = d.stationary.as_ref().expect("solved");
    let rows = st.pi.nodes().map(|(x, v)| vec![f(x), f(v)]);
    cx.csv("stationary.csv", &["x".into(), "pi_stat".into()], rows)?;
    cx.gnuplot("stationary.csv", 1, 2, "stationary law of the driving chain")?;
    cx.report("stationary.json", json!({ "solve": st.report, "closure": stationary_closure(&d) }))?;
    Ok(())
}

fn spine_chain(cx: &Ctx, z0: &str, steps: usize) -> Result<(), Failure> {
    let init = Init::parse(z0)?;
    let d = cx.densities(matches!(init, Init::Stationary))?;
    let k = Kernel::new(&d)?;
    let key = cx.key("spine-chain");
    let runs = (0..cx.cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(derive(key, r));
            let z = k.initial(init, &mut rng)?;
            run_chain(&k, z, steps, &mut rng)
        })
        .collect::<Result<Vec<_>, FragError>>()?;
    let header = ["replica", "n", "t", "z", "y", "theta", "s", "n_delta"].map(String::from);
    let rows = runs.iter().enumerate().flat_map(|(r, run)| {
        run.steps.iter().zip(&run.s).map(move |(s, sn)| {
            vec![r.to_string(), s.n.to_string(), f(s.t), f(s.z), f(s.y), f(s.theta), f(*sn), s.delta.len().to_string()]
        })
    });
    cx.csv("chain.csv", &header, rows)?;
    cx.report("chain.json", json!({ "reps": runs.len(), "steps": steps, "z0": z0 }))?;
    Ok(())
}

fn ergodicity(cx: &Ctx, z0: &[f64], steps: usize) -> Result<(), Failure> {
    let d = cx.densities(true)?;
    let k = Kernel::new(&d)?;
    let rep = ergodicity_report(&k, d.pi(), z0, steps, cx.cfg.reps, cx.key("ergodicity"))?;
    let header: Vec<String> = std::iter::once("n".to_string()).chain(z0.iter().map(|z| format!("ks_z0_{z}"))).collect();
    let rows =
        (0..=steps).map(|n| std::iter::once(n.to_string()).chain(rep.starts.iter().map(|s| f(s.ks[n]))).collect());
    cx.csv("ergodicity.csv", &header, rows)?;
    cx.gnuplot("ergodicity.csv", 1, 2, "KS distance to the stationary law")?;
    cx.report("ergodicity.json", rep)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn limit(
    cx: &Ctx,
    mode: LimitMode,
    times: &[f64],
    window: Option<Vec<i64>>,
    limit_dust: f64,
    subsequence: bool,
    x: f64,
    n_sub: usize,
) -> Result<(), Failure> {
    let law = cx.cfg.law();
    if subsequence {
        let LawKind::KaryEqual(k) = law.kind() else {
            return Err(FragError::InvalidArgument("subsequence mode needs a k-ary law (kary:k)".into()).into());
        };
        let kc = KaryConfig::new(*k, cx.cfg.alpha, cx.cfg.dust, cx.key("subsequence"))?;
        let runs = geometric::kary_runs(&kc, cx.cfg.reps);
        let rows = runs.iter().enumerate().filter_map(|(i, r)| {
            let v = geometric::subsequence_value(r, *k, cx.cfg.alpha, x, n_sub)?;
            Some(limit_row(i.to_string(), 1.0, None, v))
        });
        cx.csv("limit.csv", &limit_header(), rows)?;
        cx.report("limit.json", json!({ "mode": "subsequence", "x": x, "n": n_sub, "reps": runs.len() }))?;
        return Ok(());
    }
    renewal_limit::require_non_arithmetic(&law)?;
    let window = match window.as_deref() {
        None => DEFAULT_WINDOW,
        Some([a, b]) => (*a, *b),
        Some(_) => return Err(FragError::InvalidArgument("window takes two integers k_min,k_max".into()).into()),
    };
    let d = cx.densities(true)?;
    let k = Kernel::new(&d)?;
    let eng = cx.engine(&d)?;
    let sampler = LimitSampler {
        kernel: &k,
        engine: &eng,
        cdf: &d.cdf,
        window,
        min_pool: 1024,
        config: LimitConfig { dust: limit_dust, ..LimitConfig::default() },
    };
    let key = cx.key("limit");
    let samples: Vec<LimitStateSample> = match mode {
        LimitMode::Full => sampler.full_samples(times, cx.cfg.reps, key)?,
        LimitMode::Spine => sampler
            .spine_samples(times, cx.cfg.reps, key)?
            .into_iter()
            .map(|v| LimitStateSample { query_times: times.to_vec(), states: vec![], spine_values: v, budget: None })
            .collect(),
    };
    cx.csv("limit.csv", &limit_header(), limit_rows(&samples, |i| i.to_string()))?;
    let bias: usize = samples.iter().filter_map(|s| s.budget.as_ref()).map(|b| b.bias_events).sum();
    cx.report(
        "limit.json",
        json!({ "mode": matches!(mode, LimitMode::Full).then_some("full").unwrap_or("spine"), "window": window, "times": times, "reps": samples.len(), "bias_events": bias }),
    )?;
    Ok(())
}

fn prelimit(cx: &Ctx, eps: &[f64], times: &[f64]) -> Result<(), Failure> {
    let d = cx.densities(false)?;
    let eng = cx.engine(&d)?;
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::new();
    for &e in eps {
        let samples = eng.map_records(
            cx.key(&format!("prelimit-{e}")),
            cx.cfg.reps,
            &RunOptions::new(Focus::BeforeZeta { window: e * t_max }),
            |r| renewal_limit::rescaled_prelimit(r, e, times),
        )?;
        let samples = samples.into_iter().collect::<Result<Vec<_>, FragError>>()?;
        rows.extend(limit_rows(&samples, |i| format!("{e}:{i}")));
    }
    cx.csv("prelimit.csv", &limit_header(), rows)?;
    cx.report("prelimit.json", json!({ "eps": eps, "times": times, "reps": cx.cfg.reps }))?;
    Ok(())
}

fn invariance(cx: &Ctx, u: f64, cap: f64, events: Option<&Path>, t_max: f64, n_times: usize) -> Result<(), Failure> {
    renewal_limit::require_non_arithmetic(&cx.cfg.law())?;
    let family: Vec<EventPredicate> = match events {
        None => invariant::standard_family(cap)?,
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let family: Vec<EventPredicate> = serde_json::from_str(&text).map_err(|e| io_err(p, e))?;
            family.into_iter().map(|a| EventPredicate::new(a.cap, a.event)).collect::<Result<_, _>>()?
        }
    };
    let d = cx.densities(true)?;
    let k = Kernel::new(&d)?;
    let eng = cx.engine(&d)?;
    let lc = LimitConfig::default();
    let sampler =
        LimitSampler { kernel: &k, engine: &eng, cdf: &d.cdf, window: DEFAULT_WINDOW, min_pool: 1024, config: lc };
    let grid = TimeGrid { t_max, n: n_times };
    let paths = sampler.full_samples(&grid.times(), cx.cfg.reps, cx.key("invariance"))?;
    let lambda = family
        .iter()
        .map(|a| invariant::lambda_from_paths(a, &paths, 0.99, cx.key("lambda")))
        .collect::<Result<Vec<_>, _>>()?;
    let rep = invariant::invariance_test(&family, u, &paths, &eng, lc.dust, 0.01, cx.key("evolve"))?;
    cx.report("invariance.json", json!({ "lambda": lambda, "test": rep, "grid": grid }))?;
    println!(
        "invariance: max |z| {:.2} (critical {:.2}) -> {}",
        rep.max_abs_z,
        rep.threshold,
        if rep.pass { "pass" } else { "fail" }
    );
    Ok(())
}

fn geometric_cmd(
    cx: &Ctx,
    k: usize,
    mode: GeometricMode,
    x: &[f64],
    levels: usize,
    n_range: &[usize],
) -> Result<(), Failure> {
    let kc = KaryConfig::new(k, cx.cfg.alpha, cx.cfg.dust, cx.key("geometric"))?;
    match mode {
        GeometricMode::Monotone => {
            let runs = geometric::kary_runs(&kc, cx.cfg.reps);
            if levels < 2 || levels >= kc.depth() {
                return Err(FragError::InvalidArgument(format!("levels must lie in [2, {})", kc.depth())).into());
            }
            let rep = geometric::monotonicity_from_runs(&runs, k, levels);
            let header: Vec<String> =
                std::iter::once("replica".to_string()).chain((0..=levels).map(|n| format!("z{n}"))).collect();
            let rows = runs
                .iter()
                .enumerate()
                .map(|(i, r)| std::iter::once(i.to_string()).chain(r.z[..=levels].iter().map(|v| f(*v))).collect());
            cx.csv("geometric.csv", &header, rows)?;
            cx.report("geometric.json", rep)?;
        }
        GeometricMode::Subseq => {
            let &[lo, hi] = n_range else {
                return Err(FragError::InvalidArgument("n-range takes two integers".into()).into());
            };
            let rep = geometric::subsequence_limits(&kc, x, (lo, hi), cx.cfg.reps)?;
            let rows = rep
                .offsets
                .iter()
                .flat_map(|o| o.values.iter().enumerate().map(move |(i, v)| vec![f(o.x), i.to_string(), f(*v)]));
            cx.csv("geometric.csv", &["x".into(), "replica".into(), "value".into()], rows)?;
            cx.report("geometric.json", &rep)?;
        }
    }
    Ok(())
}

fn accept(cx: &Ctx, profile: Profile, only: Option<Vec<usize>>) -> Result<(), Failure> {
    let scale = match profile {
        Profile::Desk => 1.0,
        Profile::Quick => 0.1,
    };
    let res = acceptance::run(AcceptanceConfig { seed: cx.cfg.seed(), scale, only }, |c| println!("{}", c.line()));
    let all = res.iter().all(|c| c.pass);
    cx.report("accept.json", json!({ "scale": scale, "criteria": res, "pass": all }))?;
    if all {
        Ok(())
    } else {
        Err(Failure::Acceptance)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let over = Overrides {
        law: g.law.clone(),
        alpha: g.alpha,
        dust: g.dust,
        x_max: g.x_max,
        n_points: g.n_points,
        tol: g.tol,
        reps: g.reps,
        seed: g.seed,
        out_dir: g.out_dir.clone(),
    };
    let env_seed = std::env::var("FRAGSIM_SEED").ok();
    let cfg = match ExperimentConfig::load(g.config.as_deref(), &over, env_seed.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("fragsim: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = g.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("fragsim: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    if let Err(e) = std::fs::create_dir_all(&cfg.out_dir) {
        eprintln!("fragsim: cannot create {}: {e}", cfg.out_dir.display());
        return ExitCode::from(2);
    }
    let cx = Ctx { cfg, gnuplot: g.gnuplot_stub };
    let result = match cli.command {
        Command::Simulate { out, full_tree } => simulate(&cx, &out, full_tree),
        Command::SolveDensity => solve_density(&cx),
        Command::Stationary => stationary(&cx),
        Command::SpineChain { z0, steps } => spine_chain(&cx, &z0, steps),
        Command::Ergodicity { z0, steps } => ergodicity(&cx, &z0, steps),
        Command::Limit { mode, times, window, limit_dust, subsequence, x, n_sub } => {
            limit(&cx, mode, &times, window, limit_dust, subsequence, x, n_sub)
        }
        Command::Prelimit { eps, times } => prelimit(&cx, &eps, &times),
        Command::Invariance { u, caps, events, t_max, n_times } => {
            invariance(&cx, u, caps, events.as_deref(), t_max, n_times)
        }
        Command::Geometric { k, mode, x, levels, n_range } => geometric_cmd(&cx, k, mode, &x, levels, &n_range),
        Command::Accept { profile, only } => accept(&cx, profile, only),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Acceptance) => ExitCode::from(1),
        Err(Failure::Module(e)) => {
            eprintln!("fragsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
