//! Path-wise integration of the coupled `(U, Γ)` system, reconstruction of
//! the deviation `V`, the stochastic time transform and the functionals
//! `N_{ε,α}`.
//!
//! `U` is integrated in a frame moving with constant speed `s_f`
//! (default `c_σ`); the lab-frame phase is `s_f t + Γ_f`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::banded::BandedLu;
use crate::error::{Error, Result};
use crate::grid::{
    diffusion_into, dot_trapz, h1_norm_sq_raw, shift_into, stencil_into, Ends, GridFn, D1_WEIGHTS,
};
use crate::modwave::{solve_initial_phase, ModifiedWave, PhaseFit};
use crate::noiseterms::NoiseTerms;
use crate::profiles::assemble_operator;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Implicit diffusion, explicit reaction, Euler-Maruyama noise.
    #[default]
    ImexEm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Record every `stride`-th step; 0 records nothing.
    pub stride: usize,
    /// Speed of the integration frame; `None` uses `c_σ`.
    pub frame_speed: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 10.0,
            epsilon: 0.0,
            alpha: 0.0,
            eta: 1.0,
            seed: 0,
            scheme: Scheme::ImexEm,
            stride: 0,
            frame_speed: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("T must be positive, got {}", self.t_end));
        }
        if !(self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.epsilon >= 0.0 && self.alpha >= 0.0) {
            return bad("epsilon and alpha must be non-negative".into());
        }
        if let Some(s) = self.frame_speed {
            if !s.is_finite() {
                return bad("frame speed must be finite".into());
            }
        }
        Ok(())
    }

    /// Warning text when `α > 0` and `ε + α/2 ≥ β`.
    pub fn rate_warning(&self, beta_gap: f64) -> Option<String> {
        (self.alpha > 0.0 && self.epsilon + 0.5 * self.alpha >= beta_gap).then(|| {
            format!(
                "epsilon + alpha/2 = {} is not below the spectral gap {beta_gap}",
                self.epsilon + 0.5 * self.alpha
            )
        })
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    /// Step actually used: `T / n_steps`.
    pub fn effective_dt(&self) -> f64 {
        self.t_end / self.n_steps() as f64
    }
}

/// One recorded time-series row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub gamma: f64,
    pub n1: f64,
    pub n2: f64,
    pub tau_phi: f64,
    pub l2_v: f64,
    pub h1_v: f64,
}

#[derive(Clone, Debug)]
pub struct PathState {
    pub t: f64,
    /// `U` in the moving frame.
    pub u: Vec<f64>,
    pub gamma_frame: f64,
    pub v: Vec<f64>,
    pub tau_phi: f64,
    pub n1: f64,
    pub n2: f64,
    pub sup_n: f64,
    pub exited: bool,
    pub exit_time: Option<f64>,
    pub l2_v: f64,
    pub h1_v: f64,
    /// `max_t |⟨V(t), ψ_tw⟩|`.
    pub max_v_psi: f64,
    /// Driving Brownian motion `β(t)`.
    pub beta: f64,
    pub step_index: usize,
    rng: ChaCha8Rng,
    work: Work,
}

#[derive(Clone, Debug)]
struct Work {
    du: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    psi: Vec<f64>,
    a_psi: Vec<f64>,
    scratch: Vec<f64>,
}

impl Work {
    fn new(len: usize) -> Self {
        Self {
            du: vec![0.0; len],
            f: vec![0.0; len],
            g: vec![0.0; len],
            psi: vec![0.0; len],
            a_psi: vec![0.0; len],
            scratch: vec![0.0; len],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PathSummary {
    pub path_id: u64,
    pub seed: u64,
    pub exit_time: Option<f64>,
    #[serde(rename = "supN")]
    pub sup_n: f64,
    #[serde(rename = "gammaT")]
    pub gamma_t: f64,
    pub t_end: f64,
    pub tau_t: f64,
    pub l2_v: f64,
    pub h1_v: f64,
    pub max_v_psi: f64,
    pub beta_t: f64,
    #[serde(skip)]
    pub samples: Vec<Sample>,
}

impl PathSummary {
    /// `Γ(T)/T`.
    pub fn speed(&self) -> f64 {
        self.gamma_t / self.t_end
    }
}

/// Precomputed data shared by all paths of one configuration.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub terms: NoiseTerms,
    pub phi_sigma: GridFn,
    pub c_sigma: f64,
    pub b_sigma: f64,
    pub cfg: SimConfig,
    frame_speed: f64,
    dt: f64,
    n_steps: usize,
    lu: BandedLu,
    /// `dt` times the ghost contribution of the implicit operator.
    ghost: Vec<f64>,
    zero: Ends,
}

/// Initial data shared by all paths started from the same `u_0`.
#[derive(Clone, Debug)]
pub struct InitialState {
    pub u0: GridFn,
    pub fit: PhaseFit,
}

impl Simulator {
    pub fn new(terms: &NoiseTerms, mw: &ModifiedWave, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = *terms.spec();
        spec.check_same(mw.phi_sigma.spec())?;
        let rho = terms.model.rho();
        let s_f = cfg.frame_speed.unwrap_or(mw.c_sigma);
        let dt = cfg.effective_dt();
        let mut m = assemble_operator(&spec, rho, s_f, |_, jac| jac.fill(0.0));
        m.scale(-dt);
        m.shift_diagonal(1.0);
        let lu = m.lu()?;
        let n = spec.n_components();
        let zeros = vec![0.0; spec.len()];
        let mut ghost = vec![0.0; spec.len()];
        let mut adv = vec![0.0; spec.len()];
        diffusion_into(&zeros, n, spec.dx(), rho, terms.ends(), &mut ghost);
        stencil_into(&zeros, n, terms.ends(), &D1_WEIGHTS, s_f / spec.dx(), &mut adv);
        for (g, a) in ghost.iter_mut().zip(&adv) {
            *g = dt * (*g + a);
        }
        Ok(Self {
            terms: terms.clone(),
            phi_sigma: mw.phi_sigma.clone(),
            c_sigma: mw.c_sigma,
            b_sigma: mw.b_sigma,
            frame_speed: s_f,
            dt,
            n_steps: cfg.n_steps(),
            cfg,
            lu,
            ghost,
            zero: Ends::zero(n),
        })
    }

    pub fn frame_speed(&self) -> f64 {
        self.frame_speed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn sigma(&self) -> f64 {
        self.terms.sigma()
    }

    /// `K_κ = 1 + σ² K_b² / (2ρ)`.
    pub fn kappa_bound(&self) -> f64 {
        self.terms.kappa_bound()
    }

    pub fn prepare(&self, u0: &GridFn, mw: &ModifiedWave) -> Result<InitialState> {
        let fit = solve_initial_phase(u0, mw, &self.terms)?;
        Ok(InitialState {
            u0: u0.clone(),
            fit,
        })
    }

    /// Seed of path `path_id`: base seed plus path index.
    pub fn path_seed(&self, path_id: u64) -> u64 {
        self.cfg.seed.wrapping_add(path_id)
    }

    pub fn init_path(&self, init: &InitialState, path_id: u64) -> PathState {
        let spec = self.terms.spec();
        let n = spec.n_components();
        let v = init.fit.v_gamma0.values().to_vec();
        let l2sq = dot_trapz(&v, &v, n, spec.dx());
        let mut work = Work::new(spec.len());
        let h1sq = h1_norm_sq_raw(&v, n, spec.dx(), &mut work.scratch);
        let n1 = l2sq;
        let v_psi = dot_trapz(&v, self.terms.psi.values(), n, spec.dx()).abs();
        let exited = n1 > self.cfg.eta;
        PathState {
            t: 0.0,
            u: init.u0.values().to_vec(),
            gamma_frame: init.fit.gamma0,
            v,
            tau_phi: 0.0,
            n1,
            n2: 0.0,
            sup_n: n1,
            exited,
            exit_time: exited.then_some(0.0),
            l2_v: l2sq.sqrt(),
            h1_v: h1sq.sqrt(),
            max_v_psi: v_psi,
            beta: 0.0,
            step_index: 0,
            rng: ChaCha8Rng::seed_from_u64(self.path_seed(path_id)),
            work,
        }
    }

    /// Lab-frame phase of a state.
    pub fn gamma(&self, s: &PathState) -> f64 {
        self.frame_speed * s.t + s.gamma_frame
    }

    /// Next Brownian increment of the path's stream.
    pub fn draw_increment(&self, s: &mut PathState) -> f64 {
        let z: f64 = StandardNormal.sample(&mut s.rng);
        self.dt.sqrt() * z
    }

    /// One step. The single increment `ΔW` drives both `U` and `Γ`.
    pub fn step(&self, s: &mut PathState) -> Result<()> {
        let dw = self.draw_increment(s);
        self.step_with(s, dw)
    }

    pub fn step_with(&self, s: &mut PathState, dw: f64) -> Result<()> {
        let spec = self.terms.spec();
        let n = spec.n_components();
        let dx = spec.dx();
        let dt = self.dt;
        let sigma = self.sigma();
        let w = &mut s.work;

        stencil_into(&s.u, n, self.terms.ends(), &D1_WEIGHTS, 1.0 / dx, &mut w.du);
        shift_into(self.terms.psi.values(), n, dx, s.gamma_frame, &self.zero, &mut w.psi);
        shift_into(self.terms.a_psi.values(), n, dx, s.gamma_frame, &self.zero, &mut w.a_psi);
        let co = self
            .terms
            .coefficients_raw(&s.u, &w.du, &w.psi, &w.a_psi, self.c_sigma);

        let model = &self.terms.model;
        model.reaction_field(&s.u, &mut w.f);
        model.noise_field(&s.u, &mut w.g);
        for i in 0..s.u.len() {
            s.u[i] += dt * w.f[i] + sigma * w.g[i] * dw + self.ghost[i];
        }
        self.lu.solve_in_place(&mut s.u);

        s.gamma_frame += (self.c_sigma - self.frame_speed + co.a) * dt + sigma * co.b * dw;
        s.tau_phi += co.kappa * dt;
        s.beta += dw;
        s.step_index += 1;
        s.t = s.step_index as f64 * dt;

        shift_into(&s.u, n, dx, -s.gamma_frame, self.terms.ends(), &mut s.v);
        for (v, p) in s.v.iter_mut().zip(self.phi_sigma.values()) {
            *v -= p;
        }
        let l2sq = dot_trapz(&s.v, &s.v, n, dx);
        let h1sq = h1_norm_sq_raw(&s.v, n, dx, &mut w.scratch);
        if !(l2sq.is_finite() && h1sq.is_finite() && s.gamma_frame.is_finite()) {
            return Err(Error::BlowUp { t: s.t });
        }
        s.l2_v = l2sq.sqrt();
        s.h1_v = h1sq.sqrt();
        let grow = (self.cfg.alpha * s.t).exp();
        s.n1 = grow * l2sq;
        s.n2 = (-self.cfg.epsilon * dt).exp() * s.n2 + dt * grow * h1sq;
        let v_psi = dot_trapz(&s.v, self.terms.psi.values(), n, dx).abs();
        s.max_v_psi = s.max_v_psi.max(v_psi);
        if !s.exited {
            let total = s.n1 + s.n2;
            s.sup_n = s.sup_n.max(total);
            if total > self.cfg.eta {
                s.exited = true;
                s.exit_time = Some(s.t);
            }
        }
        Ok(())
    }

    pub fn sample(&self, s: &PathState) -> Sample {
        Sample {
            t: s.t,
            gamma: self.gamma(s),
            n1: s.n1,
            n2: s.n2,
            tau_phi: s.tau_phi,
            l2_v: s.l2_v,
            h1_v: s.h1_v,
        }
    }

    /// Integrates one path to `T`. Integration continues after the exit
    /// time so that `Γ(T)` is always available; `sup N` stops at exit.
    pub fn run_path(&self, init: &InitialState, path_id: u64) -> Result<PathSummary> {
        let mut s = self.init_path(init, path_id);
        let stride = self.cfg.stride;
        let mut samples = Vec::new();
        if stride > 0 {
            samples.reserve(self.n_steps / stride + 2);
            samples.push(self.sample(&s));
        }
        for k in 1..=self.n_steps {
            self.step(&mut s)?;
            if stride > 0 && (k % stride == 0 || k == self.n_steps) {
                samples.push(self.sample(&s));
            }
        }
        Ok(PathSummary {
            path_id,
            seed: self.path_seed(path_id),
            exit_time: s.exit_time,
            sup_n: s.sup_n,
            gamma_t: self.gamma(&s),
            t_end: s.t,
            tau_t: s.tau_phi,
            l2_v: s.l2_v,
            h1_v: s.h1_v,
            max_v_psi: s.max_v_psi,
            beta_t: s.beta,
            samples,
        })
    }
}

/// Piecewise-linear inverse `t_Φ(τ)` of a recorded `τ_Φ(t)`.
#[derive(Clone, Debug)]
pub struct TimeTransform {
    t: Vec<f64>,
    tau: Vec<f64>,
}

pub fn time_transform_inverse(samples: &[Sample]) -> Result<TimeTransform> {
    if samples.is_empty() {
        return Err(Error::Corrupt("empty time series".into()));
    }
    for w in samples.windows(2) {
        if !(w[1].t > w[0].t) || !(w[1].tau_phi > w[0].tau_phi) {
            return Err(Error::Corrupt(format!(
                "time transform not increasing near t = {}",
                w[1].t
            )));
        }
    }
    Ok(TimeTransform {
        t: samples.iter().map(|s| s.t).collect(),
        tau: samples.iter().map(|s| s.tau_phi).collect(),
    })
}

impl TimeTransform {
    pub fn tau_max(&self) -> f64 {
        *self.tau.last().unwrap()
    }

    /// `t_Φ(τ)` for `τ` within the recorded range (clamped outside).
    pub fn t_of(&self, tau: f64) -> f64 {
        let k = self.tau.partition_point(|&x| x < tau);
        if k == 0 {
            return self.t[0];
        }
        if k == self.tau.len() {
            return *self.t.last().unwrap();
        }
        let (t0, t1, s0, s1) = (self.t[k - 1], self.t[k], self.tau[k - 1], self.tau[k]);
        t0 + (t1 - t0) * (tau - s0) / (s1 - s0)
    }

    /// `τ_Φ(t)` by linear interpolation.
    pub fn tau_of(&self, t: f64) -> f64 {
        let k = self.t.partition_point(|&x| x < t);
        if k == 0 {
            return self.tau[0];
        }
        if k == self.t.len() {
            return *self.tau.last().unwrap();
        }
        let (t0, t1, s0, s1) = (self.t[k - 1], self.t[k], self.tau[k - 1], self.tau[k]);
        s0 + (s1 - s0) * (t - t0) / (t1 - t0)
    }
}

/// Checks `t ≤ τ_Φ(t) ≤ K_κ t` at every sample; returns the number of
/// violations.
pub fn count_time_transform_violations(samples: &[Sample], k_kappa: f64) -> usize {
    let tol = 1e-12;
    samples
        .iter()
        .filter(|s| s.tau_phi < s.t * (1.0 - tol) - tol || s.tau_phi > k_kappa * s.t * (1.0 + tol) + tol)
        .count()
}

pub fn write_series_csv<W: Write>(samples: &[Sample], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,Gamma,N1,N2,tau_Phi,l2_V,h1_V")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t, s.gamma, s.n1, s.n2, s.tau_phi, s.l2_v, s.h1_v
        )?;
    }
    Ok(())
}
