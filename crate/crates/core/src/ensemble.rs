//! Monte Carlo over independent paths: exit probabilities, phase
//! statistics, the second-order speed correction and the first-order
//! expansion of `V`.
//!
//! Path `k` uses the seed `base + k`. Aggregation always runs over records
//! sorted by path index, so results do not depend on scheduling.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{dot_trapz, norm_l2, GridFn};
use crate::modwave::ModifiedWave;
use crate::noiseterms::NoiseTerms;
use crate::profiles::{LinearOperator, LinearPropagator};
use crate::simulate::{InitialState, PathSummary, Simulator};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon pool of the caller; falls back to sequential without the
    /// `parallel` feature.
    #[default]
    Parallel,
}

/// `f(0), …, f(n-1)` in index order.
pub fn map_indexed<T, F>(exec: Execution, n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Outcome of one path, one JSON line each.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PathRecord {
    Completed(PathSummary),
    BlowUp { path_id: u64, seed: u64, t: f64 },
}

impl PathRecord {
    pub fn path_id(&self) -> u64 {
        match self {
            PathRecord::Completed(p) => p.path_id,
            PathRecord::BlowUp { path_id, .. } => *path_id,
        }
    }

    pub fn summary(&self) -> Option<&PathSummary> {
        match self {
            PathRecord::Completed(p) => Some(p),
            PathRecord::BlowUp { .. } => None,
        }
    }
}

pub fn run_paths(sim: &Simulator, init: &InitialState, n_paths: u64, exec: Execution) -> Vec<PathRecord> {
    map_indexed(exec, n_paths, |k| match sim.run_path(init, k) {
        Ok(p) => PathRecord::Completed(p),
        Err(e) => PathRecord::BlowUp {
            path_id: k,
            seed: sim.path_seed(k),
            t: match e {
                Error::BlowUp { t } => t,
                _ => f64::NAN,
            },
        },
    })
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// Mean, unbiased variance, and the standard errors of both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub se_mean: f64,
    pub var: f64,
    pub se_var: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        if n < 2 {
            return Self { n, mean, ..Self::default() };
        }
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
        let var = m2 * nf / (nf - 1.0);
        // Var(s²) ≈ (μ₄ - σ⁴(n-3)/(n-1)) / n
        let var_s2 = (m4 - var * var * (nf - 3.0) / (nf - 1.0)) / nf;
        Self {
            n,
            mean,
            se_mean: (var / nf).sqrt(),
            var,
            se_var: var_s2.max(0.0).sqrt(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub n_completed: usize,
    pub n_blowups: usize,
    pub sigma: f64,
    pub t_end: f64,
    pub dt: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub seed: u64,
    pub c_sigma: f64,
    pub b_sigma: f64,
    /// Exit fraction among completed paths.
    pub p_hat: f64,
    pub ci_95: [f64; 2],
    pub mean_speed: f64,
    pub se_speed: f64,
    /// Mean speed after removing `σ b_σ β(T) / T`; same expectation,
    /// much smaller spread.
    pub cv_mean_speed: f64,
    pub cv_se_speed: f64,
    pub mean_phase: f64,
    pub se_mean_phase: f64,
    pub var_phase: f64,
    pub se_var_phase: f64,
    /// `σ² b_σ² T`
    pub var_phase_linear: f64,
    #[serde(rename = "mean_supN")]
    pub mean_sup_n: f64,
    pub frac_small_v: f64,
    /// The supremum of `N` is taken over the step grid only.
    pub sup_resolution: f64,
}

/// Fraction of paths with `‖V(T)‖ ≤` this value is reported.
pub const SMALL_V: f64 = 1e-2;

impl EnsembleStats {
    pub fn from_records(sim: &Simulator, records: &[PathRecord]) -> Self {
        let mut order: Vec<&PathRecord> = records.iter().collect();
        order.sort_by_key(|r| r.path_id());
        let done: Vec<&PathSummary> = order.iter().filter_map(|r| r.summary()).collect();
        let n_done = done.len();
        let cfg = &sim.cfg;
        let t_end = done.first().map_or(sim.n_steps() as f64 * sim.dt(), |p| p.t_end);
        let sigma = sim.sigma();
        let exits = done.iter().filter(|p| p.exit_time.is_some()).count();
        let p_hat = if n_done > 0 { exits as f64 / n_done as f64 } else { 0.0 };
        let (lo, hi) = wilson_interval(exits, n_done, 1.96);
        let speed = Moments::of(&done.iter().map(|p| p.speed()).collect::<Vec<_>>());
        let cv = Moments::of(
            &done
                .iter()
                .map(|p| (p.gamma_t - sigma * sim.b_sigma * p.beta_t) / p.t_end)
                .collect::<Vec<_>>(),
        );
        let phase = Moments::of(
            &done
                .iter()
                .map(|p| p.gamma_t - sim.c_sigma * p.t_end)
                .collect::<Vec<_>>(),
        );
        let mean_sup_n = if n_done > 0 {
            done.iter().map(|p| p.sup_n).sum::<f64>() / n_done as f64
        } else {
            0.0
        };
        let small = done.iter().filter(|p| p.l2_v <= SMALL_V).count();
        Self {
            n_paths: records.len(),
            n_completed: n_done,
            n_blowups: records.len() - n_done,
            sigma,
            t_end,
            dt: sim.dt(),
            eta: cfg.eta,
            epsilon: cfg.epsilon,
            alpha: cfg.alpha,
            seed: cfg.seed,
            c_sigma: sim.c_sigma,
            b_sigma: sim.b_sigma,
            p_hat,
            ci_95: [lo, hi],
            mean_speed: speed.mean,
            se_speed: speed.se_mean,
            cv_mean_speed: cv.mean,
            cv_se_speed: cv.se_mean,
            mean_phase: phase.mean,
            se_mean_phase: phase.se_mean,
            var_phase: phase.var,
            se_var_phase: phase.se_var,
            var_phase_linear: (sigma * sim.b_sigma).powi(2) * t_end,
            mean_sup_n,
            frac_small_v: if n_done > 0 { small as f64 / n_done as f64 } else { 0.0 },
            sup_resolution: sim.dt(),
        }
    }
}

pub fn run_ensemble(
    sim: &Simulator,
    init: &InitialState,
    n_paths: u64,
    exec: Execution,
) -> Result<(Vec<PathRecord>, EnsembleStats)> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be >= 1".into()));
    }
    let records = run_paths(sim, init, n_paths, exec);
    let stats = EnsembleStats::from_records(sim, &records);
    Ok((records, stats))
}

pub fn write_jsonl<W: Write>(records: &[PathRecord], mut out: W) -> Result<()> {
    let mut order: Vec<&PathRecord> = records.iter().collect();
    order.sort_by_key(|r| r.path_id());
    for r in order {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Corrupt(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_report<W: Write, T: Serialize>(report: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report).map_err(|e| Error::Corrupt(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseRow {
    pub t: f64,
    pub mean: f64,
    pub se_mean: f64,
    pub var: f64,
    pub se_var: f64,
    /// `σ² b_σ² t`
    pub predicted_var: f64,
    pub z_mean: f64,
    pub z_var: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseDiffusionReport {
    pub sigma: f64,
    pub b_sigma: f64,
    pub n_paths: usize,
    pub n_blowups: usize,
    pub rows: Vec<PhaseRow>,
    /// `Σ z_var²` over the rows (rows share paths, so this is only a
    /// consistency score).
    pub chi2: f64,
    pub dof: usize,
    pub frac_small_v: f64,
}

fn z(x: f64, se: f64) -> f64 {
    if se > 0.0 {
        x / se
    } else if x == 0.0 {
        0.0
    } else {
        f64::INFINITY * x.signum()
    }
}

/// Variance of `Γ(t) - c_σ t` at every recorded time against `σ² b_σ² t`.
/// Needs `ϑ_0` and a positive sampling stride.
pub fn phase_diffusion_test(
    sim: &Simulator,
    init: &InitialState,
    n_paths: u64,
    exec: Execution,
) -> Result<PhaseDiffusionReport> {
    if sim.terms.params.theta0.is_none() {
        return Err(Error::Precondition("phase diffusion needs a validated ϑ_0".into()));
    }
    if sim.cfg.stride == 0 {
        return Err(Error::InvalidParameter("phase diffusion needs stride >= 1".into()));
    }
    let (records, stats) = run_ensemble(sim, init, n_paths, exec)?;
    let mut done: Vec<&PathSummary> = records.iter().filter_map(|r| r.summary()).collect();
    done.sort_by_key(|p| p.path_id);
    let n_rows = done.first().map_or(0, |p| p.samples.len());
    let sb2 = (sim.sigma() * sim.b_sigma).powi(2);
    let mut rows = Vec::new();
    for i in 1..n_rows {
        let t = done[0].samples[i].t;
        let xs: Vec<f64> = done.iter().map(|p| p.samples[i].gamma - sim.c_sigma * t).collect();
        let m = Moments::of(&xs);
        let predicted_var = sb2 * t;
        rows.push(PhaseRow {
            t,
            mean: m.mean,
            se_mean: m.se_mean,
            var: m.var,
            se_var: m.se_var,
            predicted_var,
            z_mean: z(m.mean, m.se_mean),
            z_var: z(m.var - predicted_var, m.se_var),
        });
    }
    let chi2 = rows.iter().map(|r| r.z_var * r.z_var).sum();
    Ok(PhaseDiffusionReport {
        sigma: sim.sigma(),
        b_sigma: sim.b_sigma,
        n_paths: records.len(),
        n_blowups: stats.n_blowups,
        dof: rows.len(),
        rows,
        chi2,
        frac_small_v: stats.frac_small_v,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpeedOptions {
    /// Quadrature and propagation step in `s`.
    pub ds: f64,
    /// Stop once `|integrand| <` this.
    pub tol: f64,
    /// `h ‖w‖`
    pub rel_h: f64,
    /// `‖S_σ(0)‖` at or below this counts as the special case.
    pub special_tol: f64,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        Self {
            ds: 0.02,
            tol: 1e-10,
            rel_h: 1e-4,
            special_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpeedCorrection {
    pub sigma: f64,
    pub c_sigma: f64,
    pub c_inf_2: f64,
    /// Same integral with weight `σ²/2`.
    pub c_inf_2_half: f64,
    /// `∫ D²a[w, w] ds`
    pub integral: f64,
    pub integrand_at_zero: f64,
    pub integrand_decay_time: f64,
    /// Fitted exponential rate of the integrand envelope.
    pub integrand_decay_rate: f64,
    pub beta_gap: f64,
    pub quad_error_estimate: f64,
    pub richardson_error: f64,
    pub s0_norm: f64,
    pub special_case: bool,
    /// `c_σ + σ² ∫…` as computed, before the special-case override.
    pub c_inf_2_raw: f64,
}

/// `(a(Φ+hw) - 2a(Φ) + a(Φ-hw)) / h²` with `h = rel_h / ‖w‖`.
fn second_difference(
    terms: &NoiseTerms,
    mw: &ModifiedWave,
    a0: f64,
    w: &GridFn,
    rel_h: f64,
) -> Result<f64> {
    let nw = norm_l2(w);
    if nw == 0.0 {
        return Ok(0.0);
    }
    let h = rel_h / nw;
    let a = |sign: f64| -> Result<f64> {
        let u = mw.phi_sigma.lin_comb(1.0, sign * h, w)?;
        Ok(terms.coefficients_with(&u, mw.c_sigma, &terms.psi, &terms.a_psi)?.a)
    };
    Ok((a(1.0)? - 2.0 * a0 + a(-1.0)?) / (h * h))
}

/// `c_σ + σ² ∫_0^∞ D²a_σ(Φ_σ, c_σ, ψ_tw)[w(s), w(s)] ds` with
/// `w(s) = S(s) S_σ(0)`.
pub fn speed_correction(
    terms: &NoiseTerms,
    mw: &ModifiedWave,
    beta_gap: f64,
    opts: SpeedOptions,
) -> Result<SpeedCorrection> {
    if !(beta_gap > 0.0) {
        return Err(Error::SpectralHypothesis(format!("gap must be positive, got {beta_gap}")));
    }
    if !(opts.ds > 0.0 && opts.tol > 0.0 && opts.rel_h > 0.0) {
        return Err(Error::InvalidParameter("speed options must be positive".into()));
    }
    let sigma = mw.sigma;
    let zero = GridFn::zeros(*terms.spec());
    let mut w = terms.s_phi(&zero, &mw.phi_sigma)?;
    let s0_norm = norm_l2(&w);
    let special_case = terms.params.theta0.is_some() && s0_norm <= opts.special_tol;

    let a0 = terms
        .coefficients_with(&mw.phi_sigma, mw.c_sigma, &terms.psi, &terms.a_psi)?
        .a;
    let eval = |w: &GridFn| -> Result<(f64, f64)> {
        let d1 = second_difference(terms, mw, a0, w, opts.rel_h)?;
        let d2 = second_difference(terms, mw, a0, w, 0.5 * opts.rel_h)?;
        Ok((d1, (d1 - d2).abs()))
    };

    let prop = LinearPropagator::new(&terms.op, opts.ds)?;
    let s_max = 50.0 / beta_gap;
    let window = (5.0 / beta_gap / opts.ds).ceil() as usize;
    let (i0, r0) = eval(&w)?;
    let mut vals = vec![i0];
    let mut rich = vec![r0];
    let mut s = 0.0;
    let mut k = 0usize;
    while vals[k].abs() >= opts.tol && s < s_max {
        prop.advance(w.values_mut(), 1, k == 0);
        k += 1;
        s = k as f64 * opts.ds;
        let (v, r) = eval(&w)?;
        vals.push(v);
        rich.push(r);
        if k > window && v.abs() > opts.tol {
            let recent = vals[k - window..=k].iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let before = vals[..k - window].iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if recent > before {
                return Err(Error::SpectralDecay(format!(
                    "integrand grows over [{:.3}, {s:.3}] ({before:e} -> {recent:e})",
                    s - window as f64 * opts.ds
                )));
            }
        }
    }

    let trap = |xs: &[f64], h: f64| -> f64 {
        if xs.len() < 2 {
            return 0.0;
        }
        h * (xs.iter().sum::<f64>() - 0.5 * (xs[0] + xs[xs.len() - 1]))
    };
    let integral = trap(&vals, opts.ds);
    let coarse_n = (vals.len() - 1) / 2 * 2 + 1;
    let coarse: Vec<f64> = vals[..coarse_n].iter().step_by(2).copied().collect();
    let fine_part = trap(&vals[..coarse_n], opts.ds);
    let quad = (fine_part - trap(&coarse, 2.0 * opts.ds)).abs() / 3.0
        + vals[vals.len() - 1].abs() / (2.0 * beta_gap);
    let richardson_error = trap(&rich, opts.ds);

    let decay_rate = envelope_rate(&vals, opts.ds, 1.0 / beta_gap, opts.tol);
    let c_raw = mw.c_sigma + sigma * sigma * integral;
    Ok(SpeedCorrection {
        sigma,
        c_sigma: mw.c_sigma,
        c_inf_2: if special_case { mw.c_sigma } else { c_raw },
        c_inf_2_half: if special_case {
            mw.c_sigma
        } else {
            mw.c_sigma + 0.5 * sigma * sigma * integral
        },
        integral,
        integrand_at_zero: vals[0],
        integrand_decay_time: s,
        integrand_decay_rate: decay_rate,
        beta_gap,
        quad_error_estimate: sigma * sigma * (quad + richardson_error),
        richardson_error,
        s0_norm,
        special_case,
        c_inf_2_raw: c_raw,
    })
}

/// Least-squares slope of `-ln(envelope)` for `s ≥ skip` while the
/// envelope stays above `100 tol`. NaN without enough points.
fn envelope_rate(vals: &[f64], ds: f64, skip: f64, tol: f64) -> f64 {
    let mut env = vec![0.0; vals.len()];
    let mut m = 0.0_f64;
    for i in (0..vals.len()).rev() {
        m = m.max(vals[i].abs());
        env[i] = m;
    }
    let pts: Vec<(f64, f64)> = env
        .iter()
        .enumerate()
        .map(|(i, e)| (i as f64 * ds, *e))
        .filter(|(s, e)| *s >= skip && *e > 100.0 * tol)
        .map(|(s, e)| (s, e.ln()))
        .collect();
    if pts.len() < 3 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let sy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - sx) * (p.1 - sy)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - sx).powi(2)).sum();
    -num / den
}

/// `∫_0^{s_max} ⟨S(s) w_0, φ⟩² ds`, the stationary variance of
/// `⟨V^{(1)}, φ⟩`.
pub fn projection_variance(
    op: &LinearOperator,
    w0: &GridFn,
    phi: &GridFn,
    ds: f64,
    s_max: f64,
) -> Result<f64> {
    op.spec().check_same(w0.spec())?;
    op.spec().check_same(phi.spec())?;
    let prop = LinearPropagator::new(op, ds)?;
    let n = w0.spec().n_components();
    let dx = w0.spec().dx();
    let mut w = w0.values().to_vec();
    let steps = (s_max / ds).ceil() as usize;
    let mut prev = dot_trapz(&w, phi.values(), n, dx).powi(2);
    let mut acc = 0.0;
    for k in 0..steps {
        prop.advance(&mut w, 1, k == 0);
        let cur = dot_trapz(&w, phi.values(), n, dx).powi(2);
        acc += 0.5 * ds * (prev + cur);
        prev = cur;
    }
    Ok(acc)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionRow {
    pub t: f64,
    /// `E‖V‖ / σ`
    pub v_over_sigma: f64,
    pub se_v_over_sigma: f64,
    /// `E‖V^{(1)}‖`
    pub v1: f64,
    /// `E‖V - σV^{(1)}‖ / σ²`
    pub remainder: f64,
    pub se_remainder: f64,
    /// `Var⟨V^{(1)}, φ⟩` across paths.
    pub var_probe: f64,
    pub se_var_probe: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionReport {
    pub sigma: f64,
    pub n_paths: usize,
    pub n_blowups: usize,
    pub s0_norm: f64,
    pub rows: Vec<ExpansionRow>,
    /// `∫_0^∞ ⟨S(s) S_σ(0), φ⟩² ds`
    pub predicted_var_probe: f64,
}

struct ExpansionPath {
    /// `(‖V‖, ‖V^{(1)}‖, ‖V - σV^{(1)}‖, ⟨V^{(1)}, φ⟩)` at each recorded time.
    rows: Vec<(f64, f64, f64, f64)>,
    times: Vec<f64>,
}

/// Runs each path alongside `V^{(1)}(t) = ∫_0^t S(t-s) S_σ(0) dβ_s`,
/// driven by the same increments. Rows are taken every `stride` steps.
pub fn expansion_check(
    sim: &Simulator,
    mw: &ModifiedWave,
    init: &InitialState,
    probe: &GridFn,
    beta_gap: f64,
    n_paths: u64,
    exec: Execution,
) -> Result<ExpansionReport> {
    let terms = &sim.terms;
    let spec = *terms.spec();
    spec.check_same(probe.spec())?;
    let stride = sim.cfg.stride.max(1);
    let sigma = sim.sigma();
    let zero = GridFn::zeros(spec);
    let w0 = terms.s_phi(&zero, &mw.phi_sigma)?;
    let prop = LinearPropagator::new(&terms.op, sim.dt())?;
    let n = spec.n_components();
    let dx = spec.dx();

    let run = |k: u64| -> Option<ExpansionPath> {
        let mut s = sim.init_path(init, k);
        let mut v1 = vec![0.0; spec.len()];
        let mut diff = vec![0.0; spec.len()];
        let mut rows = Vec::new();
        let mut times = Vec::new();
        for step in 1..=sim.n_steps() {
            let dw = sim.draw_increment(&mut s);
            sim.step_with(&mut s, dw).ok()?;
            for (v, w) in v1.iter_mut().zip(w0.values()) {
                *v += w * dw;
            }
            prop.advance(&mut v1, 1, false);
            if step % stride == 0 || step == sim.n_steps() {
                for i in 0..diff.len() {
                    diff[i] = s.v[i] - sigma * v1[i];
                }
                rows.push((
                    s.l2_v,
                    dot_trapz(&v1, &v1, n, dx).sqrt(),
                    dot_trapz(&diff, &diff, n, dx).sqrt(),
                    dot_trapz(&v1, probe.values(), n, dx),
                ));
                times.push(s.t);
            }
        }
        Some(ExpansionPath { rows, times })
    };
    let paths = map_indexed(exec, n_paths, run);
    let done: Vec<&ExpansionPath> = paths.iter().flatten().collect();
    let n_rows = done.first().map_or(0, |p| p.rows.len());
    let inv = |x: f64| if x > 0.0 { 1.0 / x } else { f64::NAN };
    let mut rows = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let col = |f: &dyn Fn(&(f64, f64, f64, f64)) -> f64| -> Moments {
            Moments::of(&done.iter().map(|p| f(&p.rows[i])).collect::<Vec<_>>())
        };
        let v = col(&|r| r.0);
        let v1 = col(&|r| r.1);
        let rem = col(&|r| r.2);
        let pr = col(&|r| r.3);
        rows.push(ExpansionRow {
            t: done[0].times[i],
            v_over_sigma: v.mean * inv(sigma),
            se_v_over_sigma: v.se_mean * inv(sigma),
            v1: v1.mean,
            remainder: rem.mean * inv(sigma * sigma),
            se_remainder: rem.se_mean * inv(sigma * sigma),
            var_probe: pr.var,
            se_var_probe: pr.se_var,
        });
    }
    let predicted = projection_variance(&terms.op, &w0, probe, 0.02, 50.0 / beta_gap)?;
    Ok(ExpansionReport {
        sigma,
        n_paths: paths.len(),
        n_blowups: paths.len() - done.len(),
        s0_norm: norm_l2(&w0),
        rows,
        predicted_var_probe: predicted,
    })
}
