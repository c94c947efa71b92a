use std::collections::BTreeMap;

use serde::Serialize;
use stochwave::ensemble::{run_ensemble, speed_correction, write_jsonl, EnsembleStats, Execution, SpeedCorrection, SpeedOptions};
use stochwave::experiments::{experiment_stability, experiment_steepening, Lab, StabilitySweep};
use stochwave::grid::{shift, GridFn, GridSpec};
use stochwave::modwave::{alpha_sigma, solve_modified_wave, ModifiedWave};
use stochwave::noiseterms::NoiseTerms;
use stochwave::profiles::{ModelSpec, NoiseShape};
use stochwave::simulate::{write_series_csv, PathSummary, SimConfig, Simulator};

use crate::config::{RunConfig, Start, WAVE_KEYS};
use crate::error::CliError;
use crate::store::{Entry, Outcome, Store};
use crate::wavefile::{profile_csv, WaveFile};

pub struct Ctx {
    pub cfg: RunConfig,
    pub store: Store,
    outputs: Vec<String>,
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| CliError::Numeric(e.to_string()))?;
    b.push(b'\n');
    Ok(b)
}

impl Ctx {
    pub fn new(cfg: RunConfig, store: Store) -> Self {
        Self { cfg, store, outputs: Vec::new() }
    }

    fn name(&self, stem: &str, ext: &str) -> String {
        format!("{stem}-{}.{ext}", self.cfg.short_hash())
    }

    fn put(&mut self, name: String, bytes: &[u8]) -> Result<(), CliError> {
        let what = match self.store.put(&name, bytes)? {
            Outcome::Written => "wrote",
            Outcome::Unchanged => "unchanged",
        };
        println!("{what} {}", self.store.path(&name).display());
        self.outputs.push(name);
        Ok(())
    }

    fn finish(self, command: &str, path_seeds: Option<[u64; 2]>) -> Result<(), CliError> {
        let versions = BTreeMap::from([
            ("stochwave".to_string(), stochwave::VERSION.to_string()),
            ("stochwave-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]);
        self.store.record(Entry {
            command: command.into(),
            config_hash: self.cfg.hash.clone(),
            seed: self.cfg.count("seed"),
            path_seeds,
            versions,
            config: self.cfg.values().clone(),
            outputs: self.outputs,
        })
    }

    fn wave_hash(&self) -> String {
        self.cfg.hash_of(WAVE_KEYS)
    }

    fn wave_file(&self) -> String {
        format!("wave-{}.json", &self.wave_hash()[..12])
    }

    fn grid(&self) -> Result<GridSpec, CliError> {
        Ok(GridSpec::new(self.cfg.float("L"), self.cfg.float("dx"), 1)?)
    }

    fn model(&self) -> Result<ModelSpec, CliError> {
        let c = &self.cfg;
        let fhn = c.text("model") == "fhn";
        let shape = match (c.text("noise"), fhn) {
            ("logistic", false) => NoiseShape::LogisticNagumo,
            ("logistic", true) => NoiseShape::LogisticFhn,
            ("quadratic", _) => NoiseShape::QuadraticNagumo,
            _ => NoiseShape::Zero,
        };
        let m = if fhn {
            ModelSpec::fhn(c.float("a"), c.float("varrho"), c.float("gamma_fhn"), c.float("rho"), shape)
        } else {
            ModelSpec::nagumo(c.float("a"), c.float("rho"), shape)
        };
        Ok(m?)
    }

    fn lab(&self) -> Result<Lab, CliError> {
        let model = self.model()?;
        let grid = self.grid()?;
        let path = self.store.path(&self.wave_file());
        if !path.exists() {
            return Err(CliError::Missing(format!(
                "{} not found; run `stochwave wave` with the same model and grid keys first",
                path.display()
            )));
        }
        let bytes = std::fs::read(&path)?;
        let file: WaveFile = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Missing(format!("unreadable wave data {}: {e}", path.display())))?;
        file.into_lab(model, grid, &self.wave_hash())
    }

    fn modified_wave(&self, lab: &Lab) -> Result<(NoiseTerms, ModifiedWave), CliError> {
        let terms = lab.terms(self.cfg.float("sigma"))?;
        let mw = solve_modified_wave(&terms, self.cfg.float("tol"))?;
        Ok((terms, mw))
    }

    fn sim_config(&self) -> SimConfig {
        let c = &self.cfg;
        SimConfig {
            dt: c.float("dt"),
            t_end: c.float("T"),
            epsilon: c.float("epsilon"),
            alpha: c.float("alpha"),
            eta: c.float("eta"),
            seed: c.count("seed"),
            stride: c.count("stride") as usize,
            ..SimConfig::default()
        }
    }

    fn simulator(&self, lab: &Lab) -> Result<(Simulator, ModifiedWave), CliError> {
        let (terms, mw) = self.modified_wave(lab)?;
        let cfg = self.sim_config();
        if let Some(w) = cfg.rate_warning(lab.spectral.beta_gap) {
            eprintln!("warning: {w}");
        }
        Ok((Simulator::new(&terms, &mw, cfg)?, mw))
    }

    fn initial(&self, sim: &Simulator, mw: &ModifiedWave) -> Result<GridFn, CliError> {
        Ok(match self.cfg.start() {
            Start::Wave => mw.phi_sigma.clone(),
            Start::Bump(amp) => {
                let bump = GridFn::from_fn(*mw.phi_sigma.spec(), |x, out| {
                    out.iter_mut().for_each(|o| *o = amp * (-x * x).exp())
                })?;
                mw.phi_sigma.add(&bump)?
            }
            Start::Shift(g) => shift(&mw.phi_sigma, g, sim.terms.ends()),
        })
    }
}

pub fn wave(mut ctx: Ctx) -> Result<(), CliError> {
    let model = ctx.model()?;
    let grid = ctx.grid()?;
    let lab = if ctx.cfg.text("model") == "fhn" {
        Lab::fhn(model, grid)?
    } else {
        Lab::nagumo(model, grid)?
    };
    let file = WaveFile::from_lab(&lab, &ctx.wave_hash());
    eprintln!(
        "c0 = {}, residual = {:e}, beta_gap = {}",
        file.c0, file.residual, file.beta_gap
    );
    let name = ctx.wave_file();
    ctx.put(name.clone(), &json(&file)?)?;
    ctx.put(name.replace(".json", ".csv"), &profile_csv(&lab))?;
    ctx.finish("wave", None)
}

#[derive(Serialize)]
struct ModwaveOut {
    config_hash: String,
    sigma: f64,
    c0: f64,
    c_sigma: f64,
    b_sigma: f64,
    residual: f64,
    iterations: usize,
    contraction_factor: f64,
    theta0: Option<f64>,
    alpha_sigma: Option<f64>,
    phi_sigma: Vec<f64>,
}

pub fn modwave(mut ctx: Ctx) -> Result<(), CliError> {
    let lab = ctx.lab()?;
    let (_, mw) = ctx.modified_wave(&lab)?;
    let theta0 = lab.theta0();
    let out = ModwaveOut {
        config_hash: ctx.cfg.hash.clone(),
        sigma: mw.sigma,
        c0: lab.wave.c0,
        c_sigma: mw.c_sigma,
        b_sigma: mw.b_sigma,
        residual: mw.residual,
        iterations: mw.iterations,
        contraction_factor: mw.contraction_factor,
        theta0,
        alpha_sigma: theta0.map(|t| alpha_sigma(mw.sigma, t, lab.model.rho())),
        phi_sigma: mw.phi_sigma.values().to_vec(),
    };
    ctx.put(ctx.name("modwave", "json"), &json(&out)?)?;
    ctx.finish("modwave", None)
}

#[derive(Serialize)]
struct SimulateOut<'a> {
    config_hash: String,
    c_sigma: f64,
    b_sigma: f64,
    k_kappa: f64,
    #[serde(flatten)]
    summary: &'a PathSummary,
}

pub fn simulate(mut ctx: Ctx) -> Result<(), CliError> {
    let lab = ctx.lab()?;
    let (sim, mw) = ctx.simulator(&lab)?;
    let u0 = ctx.initial(&sim, &mw)?;
    let init = sim.prepare(&u0, &mw)?;
    let summary = sim.run_path(&init, 0)?;
    let mut csv = Vec::new();
    write_series_csv(&summary.samples, &mut csv)?;
    let out = SimulateOut {
        config_hash: ctx.cfg.hash.clone(),
        c_sigma: sim.c_sigma,
        b_sigma: sim.b_sigma,
        k_kappa: sim.kappa_bound(),
        summary: &summary,
    };
    ctx.put(ctx.name("simulate", "csv"), &csv)?;
    ctx.put(ctx.name("simulate", "json"), &json(&out)?)?;
    let seed = summary.seed;
    ctx.finish("simulate", Some([seed, seed]))
}

#[derive(Serialize)]
struct EnsembleOut<'a> {
    config_hash: String,
    n_paths: u64,
    seed: u64,
    #[serde(flatten)]
    stats: &'a EnsembleStats,
}

pub fn ensemble(mut ctx: Ctx, exec: Execution) -> Result<(), CliError> {
    let lab = ctx.lab()?;
    let (sim, mw) = ctx.simulator(&lab)?;
    let u0 = ctx.initial(&sim, &mw)?;
    let init = sim.prepare(&u0, &mw)?;
    let n = ctx.cfg.count("paths");
    if n == 0 {
        return Err(CliError::Config("key `paths`: need at least one path".into()));
    }
    let (records, stats) = run_ensemble(&sim, &init, n, exec)?;
    let mut lines = Vec::new();
    write_jsonl(&records, &mut lines)?;
    let out = EnsembleOut {
        config_hash: ctx.cfg.hash.clone(),
        n_paths: n,
        seed: ctx.cfg.count("seed"),
        stats: &stats,
    };
    ctx.put(ctx.name("ensemble", "jsonl"), &lines)?;
    ctx.put(ctx.name("ensemble", "json"), &json(&out)?)?;
    let seeds = [sim.path_seed(0), sim.path_seed(n - 1)];
    ctx.finish("ensemble", Some(seeds))
}

#[derive(Serialize)]
struct SpeedOut<'a> {
    config_hash: String,
    sigma: f64,
    c0: f64,
    #[serde(flatten)]
    correction: &'a SpeedCorrection,
}

pub fn speed(mut ctx: Ctx, special_case: bool) -> Result<(), CliError> {
    if special_case && (ctx.cfg.text("model") != "nagumo" || ctx.cfg.text("noise") != "logistic") {
        return Err(CliError::Config(
            "--special-case needs model = nagumo and noise = logistic".into(),
        ));
    }
    let lab = ctx.lab()?;
    let (terms, mw) = ctx.modified_wave(&lab)?;
    let sc = speed_correction(&terms, &mw, lab.spectral.beta_gap, SpeedOptions::default())?;
    if special_case && !sc.special_case {
        return Err(CliError::Numeric(format!(
            "noise term not detected as the special case (s0 norm {:e})",
            sc.s0_norm
        )));
    }
    let out = SpeedOut {
        config_hash: ctx.cfg.hash.clone(),
        sigma: mw.sigma,
        c0: lab.wave.c0,
        correction: &sc,
    };
    ctx.put(ctx.name("speed", "json"), &json(&out)?)?;
    ctx.finish("speed", None)
}

pub fn experiment(mut ctx: Ctx, exec: Execution) -> Result<(), CliError> {
    let lab = ctx.lab()?;
    let name = ctx.cfg.text("name").to_string();
    let stem = format!("experiment-{name}");
    let table = if name == "steepening" {
        let r = experiment_steepening(&lab, &ctx.cfg.list("sigmas"), ctx.cfg.float("tol"))?;
        #[derive(Serialize)]
        struct Fit {
            config_hash: String,
            slope: f64,
            r2: f64,
            max_slope_error: f64,
            speed_error: f64,
        }
        let fit = Fit {
            config_hash: ctx.cfg.hash.clone(),
            slope: r.slope,
            r2: r.r2,
            max_slope_error: r.max_slope_error,
            speed_error: r.speed_error,
        };
        ctx.put(ctx.name(&stem, "json"), &json(&fit)?)?;
        r.table
    } else {
        let mut t_ends = ctx.cfg.list("Ts");
        if t_ends.is_empty() {
            t_ends.push(ctx.cfg.float("T"));
        }
        let sweep = StabilitySweep {
            sigmas: ctx.cfg.list("sigmas"),
            etas: ctx.cfg.list("etas"),
            t_ends,
            amplitudes: ctx.cfg.list("amplitudes"),
            n_paths: ctx.cfg.count("paths"),
        };
        experiment_stability(&lab, &ctx.sim_config(), &sweep, exec)?
    };
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    ctx.put(ctx.name(&stem, "csv"), &csv)?;
    let seeds = (name == "stability").then(|| {
        let s = ctx.cfg.count("seed");
        [s, s + ctx.cfg.count("paths").saturating_sub(1)]
    });
    ctx.finish("experiment", seeds)
}
