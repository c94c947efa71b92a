//! Canned experiments: steepening and slowdown of the modified wave, and
//! exit-probability tables over `(σ, η, T)`.

use std::io::Write;

use serde::Serialize;

use crate::ensemble::{map_indexed, wilson_interval, Execution};
use crate::error::{Error, Result};
use crate::grid::{GridFn, GridSpec};
use crate::modwave::{alpha_sigma, solve_modified_wave};
use crate::noiseterms::{fit_theta0, CutoffSpec, NoiseParams, NoiseTerms};
use crate::profiles::{
    adjoint_eigenfunction, fhn_pulse, nagumo_front_rho, solve_wave, ModelSpec, SpectralData, WaveData,
};
use crate::simulate::{SimConfig, Simulator};

/// Misfit below which `ϑ_0` is attached.
pub const THETA0_MISFIT: f64 = 1e-6;

/// Model, wave and spectral data shared by a family of runs.
#[derive(Clone, Debug)]
pub struct Lab {
    pub model: ModelSpec,
    pub wave: WaveData,
    pub spectral: SpectralData,
    pub cutoffs: CutoffSpec,
    /// Fitted `ϑ_0` and misfit; attached to the noise terms only when the
    /// misfit is at most [`THETA0_MISFIT`].
    pub theta_fit: (f64, f64),
}

impl Lab {
    pub fn from_wave(model: ModelSpec, wave: WaveData) -> Result<Self> {
        let spectral = adjoint_eigenfunction(&model, &wave)?;
        let cutoffs = CutoffSpec::from_wave(&model, &wave, &spectral)?;
        let theta_fit = fit_theta0(&model, &wave);
        Ok(Self {
            model,
            wave,
            spectral,
            cutoffs,
            theta_fit,
        })
    }

    /// Newton-polished Nagumo front.
    pub fn nagumo(model: ModelSpec, grid: GridSpec) -> Result<Self> {
        let a = match model.kind {
            crate::profiles::ModelKind::Nagumo { a } => a,
            _ => return Err(Error::InvalidParameter("expected a Nagumo model".into())),
        };
        let guess = nagumo_front_rho(grid, a, model.rho())?;
        let wave = solve_wave(&model, grid, &guess.phi0, guess.c0)?;
        Self::from_wave(model, wave)
    }

    pub fn fhn(model: ModelSpec, grid: GridSpec) -> Result<Self> {
        let wave = fhn_pulse(&model, grid)?;
        Self::from_wave(model, wave)
    }

    pub fn theta0(&self) -> Option<f64> {
        (self.theta_fit.1 <= THETA0_MISFIT).then_some(self.theta_fit.0)
    }

    pub fn terms(&self, sigma: f64) -> Result<NoiseTerms> {
        let mut p = NoiseParams::new(sigma, self.cutoffs)?;
        if let Some(t) = self.theta0() {
            p = p.with_theta0(t, &self.model, &self.wave)?;
        }
        NoiseTerms::new(&self.model, &self.wave, &self.spectral, p)
    }
}

/// Named table of numeric columns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| format!("{x}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Least squares `y ≈ slope x + intercept`, with `R²`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

#[derive(Clone, Debug, Serialize)]
pub struct SteepeningResult {
    pub table: Table,
    /// Fit of `c_σ - c_0` against `σ²`.
    pub slope: f64,
    pub r2: f64,
    pub max_slope_error: f64,
    pub speed_error: f64,
}

fn max_abs_derivative(terms: &NoiseTerms, u: &GridFn) -> f64 {
    terms.d_state(u).sup_norm()
}

/// `max|Φ_σ'|` and `c_σ` from the fixed-point solver against
/// `α_σ max|Φ_0'|` and `c_0 / α_σ`. Needs `ϑ_0`.
pub fn experiment_steepening(lab: &Lab, sigmas: &[f64], tol: f64) -> Result<SteepeningResult> {
    let theta0 = lab
        .theta0()
        .ok_or_else(|| Error::Precondition("steepening needs g(Φ_0) = ϑ_0 Φ_0'".into()))?;
    let base = lab.terms(0.0)?;
    let rho = lab.model.rho();
    let slope0 = max_abs_derivative(&base, &lab.wave.phi0);
    let c0 = lab.wave.c0;
    let mut table = Table::new(
        "steepening",
        &[
            "sigma",
            "alpha",
            "max_slope",
            "max_slope_pred",
            "slope_ratio",
            "c_sigma",
            "c_pred",
            "residual",
        ],
    );
    let (mut max_slope_error, mut speed_error) = (0.0_f64, 0.0_f64);
    for &s in sigmas {
        let terms = lab.terms(s)?;
        let mw = solve_modified_wave(&terms, tol)?;
        let alpha = alpha_sigma(s, theta0, rho);
        let m = max_abs_derivative(&terms, &mw.phi_sigma);
        let pred = alpha * slope0;
        max_slope_error = max_slope_error.max((m - pred).abs());
        speed_error = speed_error.max((mw.c_sigma - c0 / alpha).abs());
        table
            .rows
            .push(vec![s, alpha, m, pred, m / slope0, mw.c_sigma, c0 / alpha, mw.residual]);
    }
    let xs: Vec<f64> = sigmas.iter().map(|s| s * s).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| r[5] - c0).collect();
    let (slope, _, r2) = linear_fit(&xs, &ys);
    Ok(SteepeningResult {
        table,
        slope,
        r2,
        max_slope_error,
        speed_error,
    })
}

/// Sweep for [`experiment_stability`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilitySweep {
    pub sigmas: Vec<f64>,
    pub etas: Vec<f64>,
    /// Checkpoints; the runs go to the largest.
    pub t_ends: Vec<f64>,
    /// Amplitudes of a Gaussian bump added to `Φ_σ` at time 0.
    pub amplitudes: Vec<f64>,
    pub n_paths: u64,
}

/// `sup_{t ≤ T_j} N(t)` for every checkpoint, `None` after a blow-up.
fn running_sups(sim: &Simulator, init: &crate::simulate::InitialState, id: u64, checkpoints: &[usize]) -> Option<Vec<f64>> {
    let mut s = sim.init_path(init, id);
    let mut sup = s.n1 + s.n2;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for k in 1..=sim.n_steps() {
        sim.step(&mut s).ok()?;
        sup = sup.max(s.n1 + s.n2);
        while next < checkpoints.len() && checkpoints[next] == k {
            out.push(sup);
            next += 1;
        }
    }
    Some(out)
}

/// Exit-probability table with columns
/// `sigma, amplitude, T, eta, n, p_hat, ci_lo, ci_hi, mean_supN, se_supN`.
/// One simulation per `(σ, amplitude)`; the `(T, η)` entries are read off
/// the running supremum.
pub fn experiment_stability(lab: &Lab, base: &SimConfig, sweep: &StabilitySweep, exec: Execution) -> Result<Table> {
    if sweep.n_paths == 0 || sweep.t_ends.is_empty() || sweep.etas.is_empty() {
        return Err(Error::InvalidParameter("empty stability sweep".into()));
    }
    let mut ts = sweep.t_ends.clone();
    ts.sort_by(f64::total_cmp);
    let t_max = *ts.last().unwrap();
    let cfg = SimConfig { t_end: t_max, stride: 0, ..base.clone() };
    let mut table = Table::new(
        "stability",
        &["sigma", "amplitude", "T", "eta", "n", "p_hat", "ci_lo", "ci_hi", "mean_supN", "se_supN"],
    );
    let amplitudes = if sweep.amplitudes.is_empty() { vec![0.0] } else { sweep.amplitudes.clone() };
    for &sigma in &sweep.sigmas {
        let terms = lab.terms(sigma)?;
        let mw = solve_modified_wave(&terms, 1e-11)?;
        let sim = Simulator::new(&terms, &mw, cfg.clone())?;
        let dt = sim.dt();
        let checkpoints: Vec<usize> = ts
            .iter()
            .map(|t| ((t / dt) - 1e-9).ceil().max(1.0) as usize)
            .map(|k| k.min(sim.n_steps()))
            .collect();
        for &amp in &amplitudes {
            let bump = GridFn::from_fn(*terms.spec(), |x, out| {
                let e = amp * (-x * x).exp();
                out.iter_mut().for_each(|o| *o = e);
            })?;
            let init = sim.prepare(&mw.phi_sigma.add(&bump)?, &mw)?;
            let sups = map_indexed(exec, sweep.n_paths, |k| running_sups(&sim, &init, k, &checkpoints));
            let done: Vec<&Vec<f64>> = sups.iter().flatten().collect();
            let n = done.len();
            for (j, &t) in ts.iter().enumerate() {
                let col: Vec<f64> = done.iter().map(|s| s[j]).collect();
                let m = crate::ensemble::Moments::of(&col);
                for &eta in &sweep.etas {
                    let k = col.iter().filter(|&&x| x > eta).count();
                    let (lo, hi) = wilson_interval(k, n, 1.96);
                    let p = if n > 0 { k as f64 / n as f64 } else { 0.0 };
                    table
                        .rows
                        .push(vec![sigma, amp, t, eta, n as f64, p, lo, hi, m.mean, m.se_mean]);
                }
            }
        }
    }
    Ok(table)
}
