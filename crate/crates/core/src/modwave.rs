//! Noise-modified wave `(Φ_σ, c_σ)` by fixed-point iteration, its closed
//! form in the rigid case, and the initial phase of a perturbed state.

use serde::Serialize;

use crate::banded::BorderedSolver;
use crate::error::{Error, Result};
use crate::grid::{
    diffusion_into, inner_product_l2, norm_h1, norm_l2, rescale_argument, shift, GridFn,
};
use crate::noiseterms::NoiseTerms;
use crate::profiles::{LinearOperator, SpectralData, WaveData};

/// Noise-modified traveling wave.
#[derive(Clone, Debug)]
pub struct ModifiedWave {
    pub phi_sigma: GridFn,
    pub c_sigma: f64,
    /// `‖A_*Φ_σ + J_σ(Φ_σ, c_σ, ψ_tw)‖_{L²}`
    pub residual: f64,
    pub iterations: usize,
    pub sigma: f64,
    /// Ratio of the last two Picard step sizes (0 for closed forms).
    pub contraction_factor: f64,
    /// `b(Φ_σ, ψ_tw)`.
    pub b_sigma: f64,
}

/// Summary row of a σ-sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub sigma: f64,
    pub c_sigma: f64,
    pub h1_shift: f64,
    pub speed_shift: f64,
    pub iterations: usize,
    pub contraction_factor: f64,
    pub residual: f64,
}

/// Solver for `L_tw v + d Φ_0' = h`, `⟨v, ψ_tw⟩ = 0`.
#[derive(Clone, Debug)]
pub struct Linv {
    solver: BorderedSolver,
    psi: GridFn,
}

impl Linv {
    pub fn new(op: &LinearOperator, psi: &GridFn, wave: &WaveData) -> Result<Self> {
        let spec = *op.spec();
        spec.check_same(psi.spec())?;
        let n = spec.n_components();
        let row: Vec<f64> = psi
            .values()
            .iter()
            .enumerate()
            .map(|(i, p)| spec.weight(i / n) * p)
            .collect();
        let solver = BorderedSolver::new(op.matrix().clone(), wave.dphi0.values().to_vec(), row)?;
        Ok(Self {
            solver,
            psi: psi.clone(),
        })
    }

    /// Returns `(v, d)` with `d = ⟨h, ψ_tw⟩`.
    pub fn apply(&self, h: &GridFn) -> Result<(GridFn, f64)> {
        let d = inner_product_l2(h, &self.psi)?;
        let (v, _) = self.solver.solve(h.values(), 0.0)?;
        Ok((GridFn::from_values(*h.spec(), v)?, d))
    }
}

pub fn apply_linv(
    h: &GridFn,
    op: &LinearOperator,
    spectral: &SpectralData,
    wave: &WaveData,
) -> Result<(GridFn, f64)> {
    Linv::new(op, spectral.psi(), wave)?.apply(h)
}

/// `‖A_*Φ + J_σ(Φ, c, ψ_tw)‖_{L²}`.
pub fn modified_wave_residual(terms: &NoiseTerms, phi: &GridFn, c: f64) -> Result<f64> {
    let j = terms.j_sigma(phi, c, &terms.psi)?;
    let mut a = vec![0.0; phi.values().len()];
    let spec = phi.spec();
    diffusion_into(
        phi.values(),
        spec.n_components(),
        spec.dx(),
        terms.model.rho(),
        terms.ends(),
        &mut a,
    );
    let r = GridFn::from_raw(*spec, a).add(&j)?;
    Ok(norm_l2(&r))
}

/// Picard iteration `(v, d) ← L_inv(-M_σ(v, d))` from `(0, 0)`.
pub fn solve_modified_wave(terms: &NoiseTerms, tol: f64) -> Result<ModifiedWave> {
    let zero = GridFn::zeros(*terms.spec());
    solve_modified_wave_from(terms, tol, zero, 0.0)
}

pub fn solve_modified_wave_from(
    terms: &NoiseTerms,
    tol: f64,
    v0: GridFn,
    d0: f64,
) -> Result<ModifiedWave> {
    let max_iter = 200;
    let wave = &terms.wave;
    let sigma = terms.sigma();
    let linv = Linv::new(&terms.op, &terms.psi, wave)?;
    let (mut v, mut d) = (v0, d0);
    let mut last_step = f64::INFINITY;
    let mut growing = 0usize;
    let mut factor = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let m = terms.m_sigma(&v, d)?;
        let (nv, nd) = linv.apply(&m.scaled(-1.0))?;
        let step = norm_l2(&nv.sub(&v)?) + (nd - d).abs();
        if !step.is_finite() {
            return Err(Error::Contraction {
                sigma,
                residual: f64::NAN,
            });
        }
        if last_step.is_finite() && last_step > 0.0 {
            factor = step / last_step;
        }
        // growth at roundoff scale is noise, not divergence
        let floor = 1e-12 * (1.0 + norm_l2(&v));
        if step > last_step && step > floor {
            growing += 1;
        } else {
            growing = 0;
        }
        v = nv;
        d = nd;
        let phi = wave.phi0.add(&v)?;
        residual = modified_wave_residual(terms, &phi, wave.c0 + d)?;
        if growing >= 5 {
            return Err(Error::Contraction { sigma, residual });
        }
        // stop once the residual is below tol or the iteration has stalled
        if residual <= tol || step <= 1e-14 * (1.0 + norm_l2(&v)) {
            let b_sigma = terms.b(&phi, &terms.psi)?;
            return Ok(ModifiedWave {
                phi_sigma: phi,
                c_sigma: wave.c0 + d,
                residual,
                iterations: it,
                sigma,
                contraction_factor: factor,
                b_sigma,
            });
        }
        last_step = step;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Closed form `Φ_σ(ξ) = Φ_0(α_σ ξ)`, `c_σ = c_0 / α_σ` with
/// `α_σ = [1 + σ²ϑ_0²/(2ρ)]^{1/2}`, valid when `g(Φ_0) = ϑ_0 Φ_0'`.
pub fn explicit_modified_wave(terms: &NoiseTerms) -> Result<ModifiedWave> {
    let theta0 = terms.params.theta0.ok_or_else(|| {
        Error::Precondition("explicit modified wave needs a validated theta0".into())
    })?;
    let sigma = terms.sigma();
    let alpha = alpha_sigma(sigma, theta0, terms.model.rho());
    let wave = &terms.wave;
    let phi = if alpha == 1.0 {
        wave.phi0.clone()
    } else {
        rescale_argument(&wave.phi0, alpha, &wave.ends)
    };
    let c_sigma = wave.c0 / alpha;
    let residual = modified_wave_residual(terms, &phi, c_sigma)?;
    Ok(ModifiedWave {
        phi_sigma: phi,
        c_sigma,
        residual,
        iterations: 0,
        sigma,
        contraction_factor: 0.0,
        b_sigma: -theta0 / alpha,
    })
}

/// Closed form translated so that `⟨Φ_σ - Φ_0, ψ_tw⟩ = 0`, the phase
/// condition the Picard iterate satisfies. Returns the wave and the shift.
pub fn explicit_modified_wave_aligned(terms: &NoiseTerms) -> Result<(ModifiedWave, f64)> {
    let mut mw = explicit_modified_wave(terms)?;
    let (gamma, v, _, _) = align_phase(&mw.phi_sigma, &terms.wave.phi0, terms)?;
    mw.phi_sigma = terms.wave.phi0.add(&v)?;
    mw.residual = modified_wave_residual(terms, &mw.phi_sigma, mw.c_sigma)?;
    Ok((mw, gamma))
}

pub fn alpha_sigma(sigma: f64, theta0: f64, rho: f64) -> f64 {
    (1.0 + sigma * sigma * theta0 * theta0 / (2.0 * rho)).sqrt()
}

/// Runs the Picard solver for each σ, stopping at the first failure.
/// Returns the rows that converged and the first σ that did not.
pub fn sigma_sweep(terms: &NoiseTerms, sigmas: &[f64], tol: f64) -> (Vec<(ModifiedWave, SweepPoint)>, Option<f64>) {
    let mut rows = Vec::new();
    for &s in sigmas {
        let params = match terms.params.with_sigma(s) {
            Ok(p) => p,
            Err(_) => return (rows, Some(s)),
        };
        let t = terms.with_params(params);
        match solve_modified_wave(&t, tol) {
            Ok(mw) => {
                let dv = mw.phi_sigma.sub(&terms.wave.phi0).expect("same grid");
                let point = SweepPoint {
                    sigma: s,
                    c_sigma: mw.c_sigma,
                    h1_shift: norm_h1(&dv),
                    speed_shift: (mw.c_sigma - terms.wave.c0).abs(),
                    iterations: mw.iterations,
                    contraction_factor: mw.contraction_factor,
                    residual: mw.residual,
                };
                rows.push((mw, point));
            }
            Err(_) => return (rows, Some(s)),
        }
    }
    (rows, None)
}

/// Initial phase of `u_0` relative to `Φ_σ`.
#[derive(Clone, Debug)]
pub struct PhaseFit {
    pub gamma0: f64,
    pub v_gamma0: GridFn,
    pub ip_residual: f64,
    pub iterations: usize,
    /// `(|γ_0| + ‖v_{γ_0}‖) / ‖u_0 - Φ_σ‖`, or 0 when `u_0 = Φ_σ`.
    pub bound_ratio: f64,
}

/// Finds `γ_0` with `⟨T_{-γ_0} u_0 - Φ_σ, ψ_tw⟩ = 0`.
pub fn solve_initial_phase(u0: &GridFn, mw: &ModifiedWave, terms: &NoiseTerms) -> Result<PhaseFit> {
    solve_initial_phase_with(u0, mw, terms, 0.2)
}

pub fn solve_initial_phase_with(
    u0: &GridFn,
    mw: &ModifiedWave,
    terms: &NoiseTerms,
    delta0: f64,
) -> Result<PhaseFit> {
    let dist = norm_l2(&u0.sub(&mw.phi_sigma)?);
    if dist >= delta0 {
        return Err(Error::Precondition(format!(
            "‖u_0 - Φ_σ‖ = {dist} is not below δ_0 = {delta0}"
        )));
    }
    let (gamma, v, ip, it) = align_phase(u0, &mw.phi_sigma, terms)?;
    let v_norm = norm_l2(&v);
    let bound_ratio = if dist > 0.0 {
        (gamma.abs() + v_norm) / dist
    } else {
        0.0
    };
    Ok(PhaseFit {
        gamma0: gamma,
        v_gamma0: v,
        ip_residual: ip,
        iterations: it,
        bound_ratio,
    })
}

/// Newton iteration for `γ` with `⟨T_{-γ} u - reference, ψ_tw⟩ = 0`.
/// Returns `(γ, T_{-γ} u - reference, residual inner product, iterations)`.
pub fn align_phase(
    u: &GridFn,
    reference: &GridFn,
    terms: &NoiseTerms,
) -> Result<(f64, GridFn, f64, usize)> {
    let psi = &terms.psi;
    let ends = terms.ends();
    let slope = inner_product_l2(&terms.d_state(reference), psi)?;
    let psi_norm = norm_l2(psi);
    let mut gamma = 0.0_f64;
    let mut v = u.sub(reference)?;
    let mut ip = inner_product_l2(&v, psi)?;
    for it in 0..100 {
        if ip.abs() <= 1e-10 * psi_norm * norm_l2(&v) + 1e-14 {
            return Ok((gamma, v, ip, it));
        }
        gamma -= ip / slope;
        v = shift(u, -gamma, ends).sub(reference)?;
        ip = inner_product_l2(&v, psi)?;
    }
    Err(Error::NonConvergence {
        iterations: 100,
        residual: ip.abs(),
    })
}
