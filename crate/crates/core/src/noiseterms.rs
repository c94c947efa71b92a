//! Phase-coupling functions: cut-offs, `b`, `κ_σ`, `ν_σ`, `J_σ`, `a_σ`
//! and the nonlinearities of the deviation equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    diffusion_into, inner_product_l2, norm_h1, norm_l2, stencil_into, Ends, GridFn,
    GridSpec, D1_WEIGHTS,
};
use crate::profiles::{linearize, LinearOperator, ModelSpec, SpectralData, WaveData};

/// The two scalar clamps entering `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub k_ip: f64,
}

impl CutoffSpec {
    pub fn new(k_ip: f64) -> Result<Self> {
        if !(k_ip > 0.0 && k_ip.is_finite()) {
            return Err(Error::InvalidParameter(format!("K_ip must be positive, got {k_ip}")));
        }
        Ok(Self { k_ip })
    }

    /// `K_ip = [‖g(Φ_0)‖ + 2 K_g] ‖ψ_tw‖`.
    pub fn from_wave(model: &ModelSpec, wave: &WaveData, spectral: &SpectralData) -> Result<Self> {
        let g = noise_of(model, &wave.phi0);
        let k = (norm_l2(&g) + 2.0 * model.noise_lipschitz()) * norm_l2(spectral.psi());
        // g ≡ 0 would give K_ip = 0; any positive value keeps χ_high the identity near 0
        Self::new(k.max(1e-3))
    }

    /// `K_b = 4 (K_ip + 1)`.
    pub fn k_b(&self) -> f64 {
        4.0 * (self.k_ip + 1.0)
    }

    /// `¼` below `¼`, identity above `½`.
    #[inline]
    pub fn chi_low(&self, theta: f64) -> f64 {
        if theta <= 0.25 {
            0.25
        } else if theta >= 0.5 {
            theta
        } else {
            let t = (theta - 0.25) * 4.0;
            0.25 + 0.25 * t * t * t * (6.0 - 8.0 * t + 3.0 * t * t)
        }
    }

    /// Identity on `|θ| ≤ K_ip`, saturates at `±(K_ip + 1)`.
    #[inline]
    pub fn chi_high(&self, theta: f64) -> f64 {
        let x = theta.abs();
        let k = self.k_ip;
        let y = if x <= k {
            x
        } else if x >= k + 1.0 {
            k + 1.0
        } else {
            let t = x - k;
            k + t + t * t * t * (4.0 - 7.0 * t + 3.0 * t * t)
        };
        y.copysign(theta)
    }

    /// Second derivative of [`Self::chi_low`].
    pub fn chi_low_d2(&self, theta: f64) -> f64 {
        if theta <= 0.25 || theta >= 0.5 {
            0.0
        } else {
            let t = (theta - 0.25) * 4.0;
            4.0 * t * (36.0 - 96.0 * t + 60.0 * t * t)
        }
    }

    /// Second derivative of [`Self::chi_high`].
    pub fn chi_high_d2(&self, theta: f64) -> f64 {
        let x = theta.abs();
        let k = self.k_ip;
        if x <= k || x >= k + 1.0 {
            0.0
        } else {
            let t = x - k;
            t * (24.0 - 84.0 * t + 60.0 * t * t) * theta.signum()
        }
    }
}

/// Noise strength and cut-offs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub sigma: f64,
    pub cutoffs: CutoffSpec,
    pub theta0: Option<f64>,
}

impl NoiseParams {
    pub fn new(sigma: f64, cutoffs: CutoffSpec) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self {
            sigma,
            cutoffs,
            theta0: None,
        })
    }

    /// Attaches `ϑ_0` after checking `‖g(Φ_0) - ϑ_0 Φ_0'‖ ≤ 10⁻⁶`.
    pub fn with_theta0(mut self, theta0: f64, model: &ModelSpec, wave: &WaveData) -> Result<Self> {
        let g = noise_of(model, &wave.phi0);
        let r = norm_l2(&g.lin_comb(1.0, -theta0, &wave.dphi0)?);
        if r > 1e-6 {
            return Err(Error::Precondition(format!(
                "g(Φ_0) is not ϑ_0 Φ_0' (ϑ_0 = {theta0}, L² misfit {r:e})"
            )));
        }
        self.theta0 = Some(theta0);
        Ok(self)
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        self.sigma = sigma;
        Ok(self)
    }
}

/// Least-squares ratio `ϑ = ⟨g(Φ_0), Φ_0'⟩ / ‖Φ_0'‖²` and the misfit
/// `‖g(Φ_0) - ϑ Φ_0'‖`.
pub fn fit_theta0(model: &ModelSpec, wave: &WaveData) -> (f64, f64) {
    let g = noise_of(model, &wave.phi0);
    let d = &wave.dphi0;
    let theta = inner_product_l2(&g, d).unwrap_or(0.0) / inner_product_l2(d, d).unwrap_or(1.0);
    let misfit = norm_l2(&g.lin_comb(1.0, -theta, d).expect("same grid"));
    (theta, misfit)
}

pub(crate) fn noise_of(model: &ModelSpec, u: &GridFn) -> GridFn {
    let mut out = vec![0.0; u.values().len()];
    model.noise_field(u.values(), &mut out);
    GridFn::from_raw(*u.spec(), out)
}

/// Order `ϑ` of `ν_σ^{(ϑ)} = κ_σ^ϑ - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NuOrder {
    MinusOne,
    MinusHalf,
    One,
}

impl NuOrder {
    pub fn exponent(self) -> f64 {
        match self {
            NuOrder::MinusOne => -1.0,
            NuOrder::MinusHalf => -0.5,
            NuOrder::One => 1.0,
        }
    }
}

/// Scalar phase coefficients at one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseCoefficients {
    pub b: f64,
    pub kappa: f64,
    pub a: f64,
    /// `⟨∂_ξ u, ψ⟩`
    pub du_psi: f64,
}

/// Everything needed to evaluate the coupling functions for one
/// `(model, wave, σ)`.
#[derive(Clone, Debug)]
pub struct NoiseTerms {
    pub model: ModelSpec,
    pub wave: WaveData,
    pub psi: GridFn,
    /// `A_* ψ_tw` with zero ghost values.
    pub a_psi: GridFn,
    pub params: NoiseParams,
    pub op: LinearOperator,
    ends: Ends,
    zero: Ends,
}

impl NoiseTerms {
    pub fn new(model: &ModelSpec, wave: &WaveData, spectral: &SpectralData, params: NoiseParams) -> Result<Self> {
        wave.spec().check_same(spectral.psi().spec())?;
        let psi = spectral.psi().clone();
        let a_psi = diffusion_zero(&psi, model.rho());
        Ok(Self {
            model: model.clone(),
            wave: wave.clone(),
            a_psi,
            psi,
            params,
            op: linearize(model, wave),
            ends: model.ends(),
            zero: Ends::zero(model.n()),
        })
    }

    pub fn with_params(&self, params: NoiseParams) -> Self {
        let mut s = self.clone();
        s.params = params;
        s
    }

    pub fn spec(&self) -> &GridSpec {
        self.wave.spec()
    }

    pub fn sigma(&self) -> f64 {
        self.params.sigma
    }

    pub fn ends(&self) -> &Ends {
        &self.ends
    }

    /// `∂_ξ u` for a wave state (rest-state ghosts).
    pub fn d_state(&self, u: &GridFn) -> GridFn {
        crate::grid::derivative(u, &self.ends)
    }

    /// `∂_ξ v` for a perturbation (zero ghosts).
    pub fn d_pert(&self, v: &GridFn) -> GridFn {
        crate::grid::derivative(v, &self.zero)
    }

    /// `b(u, ψ) = -χ_high(⟨g(u), ψ⟩) / χ_low(⟨∂_ξ u, ψ⟩)`.
    pub fn b(&self, u: &GridFn, psi: &GridFn) -> Result<f64> {
        let du = self.d_state(u);
        let g = noise_of(&self.model, u);
        Ok(self.b_from(inner_product_l2(&g, psi)?, inner_product_l2(&du, psi)?))
    }

    #[inline]
    fn b_from(&self, g_psi: f64, du_psi: f64) -> f64 {
        let c = &self.params.cutoffs;
        -c.chi_high(g_psi) / c.chi_low(du_psi)
    }

    #[inline]
    fn kappa_from_b(&self, b: f64) -> f64 {
        let s = self.params.sigma;
        1.0 + s * s * b * b / (2.0 * self.model.rho())
    }

    pub fn kappa(&self, u: &GridFn, psi: &GridFn) -> Result<f64> {
        Ok(self.kappa_from_b(self.b(u, psi)?))
    }

    pub fn nu(&self, u: &GridFn, psi: &GridFn, order: NuOrder) -> Result<f64> {
        Ok(nu_from_kappa(self.kappa(u, psi)?, order))
    }

    /// Upper bound `σ² K_b² / (2ρ)` for `|ν|`.
    pub fn nu_bound(&self) -> f64 {
        let s = self.params.sigma;
        s * s * self.params.cutoffs.k_b().powi(2) / (2.0 * self.model.rho())
    }

    /// `K_κ = 1 + σ² K_b² / (2ρ)`.
    pub fn kappa_bound(&self) -> f64 {
        1.0 + self.nu_bound()
    }

    /// `J_σ(u, c, ψ) = κ⁻¹ [f(u) + c u' + σ² b Dg(u) u']`.
    pub fn j_sigma(&self, u: &GridFn, c: f64, psi: &GridFn) -> Result<GridFn> {
        let du = self.d_state(u);
        let b = self.b(u, psi)?;
        Ok(self.j_from(u, &du, c, b))
    }

    fn j_from(&self, u: &GridFn, du: &GridFn, c: f64, b: f64) -> GridFn {
        let s2 = self.params.sigma * self.params.sigma;
        let kappa = self.kappa_from_b(b);
        let len = u.values().len();
        let mut f = vec![0.0; len];
        let mut dg = vec![0.0; len];
        self.model.reaction_field(u.values(), &mut f);
        self.model.noise_jacobian_apply(u.values(), du.values(), &mut dg);
        let out: Vec<f64> = f
            .iter()
            .zip(du.values())
            .zip(&dg)
            .map(|((f, d), g)| (f + c * d + s2 * b * g) / kappa)
            .collect();
        GridFn::from_raw(*u.spec(), out)
    }

    /// `a_σ(u, c, ψ) = -κ χ_low(⟨u', ψ⟩)⁻¹ [⟨u, A_*ψ⟩ + ⟨J_σ, ψ⟩]`.
    pub fn a_sigma(&self, u: &GridFn, c: f64, psi: &GridFn) -> Result<f64> {
        let a_psi = diffusion_zero(psi, self.model.rho());
        Ok(self.coefficients_with(u, c, psi, &a_psi)?.a)
    }

    /// `b`, `κ` and `a` in one pass.
    pub fn coefficients_with(
        &self,
        u: &GridFn,
        c: f64,
        psi: &GridFn,
        a_psi: &GridFn,
    ) -> Result<PhaseCoefficients> {
        u.spec().check_same(psi.spec())?;
        u.spec().check_same(a_psi.spec())?;
        let mut du = vec![0.0; u.values().len()];
        stencil_into(
            u.values(),
            u.spec().n_components(),
            &self.ends,
            &D1_WEIGHTS,
            1.0 / u.spec().dx(),
            &mut du,
        );
        Ok(self.coefficients_raw(u.values(), &du, psi.values(), a_psi.values(), c))
    }

    /// Hot-path evaluation on raw node-major slices; `du` is `∂_ξ u`.
    pub fn coefficients_raw(
        &self,
        u: &[f64],
        du: &[f64],
        psi: &[f64],
        a_psi: &[f64],
        c: f64,
    ) -> PhaseCoefficients {
        let spec = self.spec();
        let n = spec.n_components();
        let np = spec.n_points();
        let (mut s_f, mut s_du, mut s_g, mut s_dg, mut s_ua) = (0.0, 0.0, 0.0, 0.0, 0.0);
        if n == 1 {
            let dx = spec.dx();
            let u = &u[..np];
            let (du, psi, a_psi) = (&du[..np], &psi[..np], &a_psi[..np]);
            for j in 0..np {
                let w = if j == 0 || j + 1 == np { 0.5 * dx } else { dx };
                let p = psi[j] * w;
                let (f, g, dg) = self.model.scalar_terms(u[j]);
                s_f += f * p;
                s_du += du[j] * p;
                s_g += g * p;
                s_dg += dg * du[j] * p;
                s_ua += u[j] * a_psi[j] * w;
            }
        } else {
            let mut fo = vec![0.0; n];
            let mut go = vec![0.0; n];
            let mut dgo = vec![0.0; n];
            for j in 0..np {
                let w = spec.weight(j);
                let r = j * n..(j + 1) * n;
                self.model.reaction(&u[r.clone()], &mut fo);
                self.model.noise(&u[r.clone()], &mut go);
                self.model
                    .noise_jacobian_apply(&u[r.clone()], &du[r.clone()], &mut dgo);
                for k in 0..n {
                    let i = j * n + k;
                    let p = psi[i] * w;
                    s_f += fo[k] * p;
                    s_du += du[i] * p;
                    s_g += go[k] * p;
                    s_dg += dgo[k] * p;
                    s_ua += u[i] * a_psi[i] * w;
                }
            }
        }
        let b = self.b_from(s_g, s_du);
        let kappa = self.kappa_from_b(b);
        let s2 = self.params.sigma * self.params.sigma;
        let j_psi = (s_f + c * s_du + s2 * b * s_dg) / kappa;
        let chi = self.params.cutoffs.chi_low(s_du);
        let a = -kappa / chi * (s_ua + j_psi);
        PhaseCoefficients {
            b,
            kappa,
            a,
            du_psi: s_du,
        }
    }

    /// Drift of the deviation equation,
    /// `R_σ(v) = κ [A_*(Φ+v) + J_σ(Φ+v, c)] + a_σ (Φ' + v')`.
    pub fn r_sigma(&self, v: &GridFn, phi: &GridFn, c: f64) -> Result<GridFn> {
        let u = phi.add(v)?;
        let du = self.d_state(&u);
        let co = self.coefficients_with(&u, c, &self.psi, &self.a_psi)?;
        let j = self.j_from(&u, &du, c, co.b);
        let mut au = vec![0.0; u.values().len()];
        diffusion_into(
            u.values(),
            u.spec().n_components(),
            u.spec().dx(),
            self.model.rho(),
            &self.ends,
            &mut au,
        );
        let out: Vec<f64> = au
            .iter()
            .zip(j.values())
            .zip(du.values())
            .map(|((a, j), d)| co.kappa * (a + j) + co.a * d)
            .collect();
        Ok(GridFn::from_raw(*u.spec(), out))
    }

    /// `S_Φ(v) = g(Φ+v) + b(Φ+v, ψ_tw) (Φ' + v')`.
    pub fn s_phi(&self, v: &GridFn, phi: &GridFn) -> Result<GridFn> {
        let u = phi.add(v)?;
        let du = self.d_state(&u);
        let g = noise_of(&self.model, &u);
        let b = self.b_from(
            inner_product_l2(&g, &self.psi)?,
            inner_product_l2(&du, &self.psi)?,
        );
        g.lin_comb(1.0, b, &du)
    }

    /// `R̄_σ(v) = κ⁻¹ R_σ(v) - L_tw v`.
    pub fn rbar(&self, v: &GridFn, phi: &GridFn, c: f64) -> Result<GridFn> {
        let u = phi.add(v)?;
        let kappa = self.kappa(&u, &self.psi)?;
        let r = self.r_sigma(v, phi, c)?;
        let lv = self.op.apply(v)?;
        r.lin_comb(1.0 / kappa, -1.0, &lv)
    }

    /// `S̄_σ(v) = κ^{-1/2} S_Φ(v)`.
    pub fn sbar(&self, v: &GridFn, phi: &GridFn) -> Result<GridFn> {
        let u = phi.add(v)?;
        let kappa = self.kappa(&u, &self.psi)?;
        Ok(self.s_phi(v, phi)?.scaled(kappa.powf(-0.5)))
    }

    /// `M_σ(v, d) = J_σ(Φ_0+v, c_0+d) - J_0(Φ_0, c_0) - d Φ_0' + (A_* - L_tw) v`.
    pub fn m_sigma(&self, v: &GridFn, d: f64) -> Result<GridFn> {
        let w = &self.wave;
        let u = w.phi0.add(v)?;
        let j = self.j_sigma(&u, w.c0 + d, &self.psi)?;
        let mut j0 = vec![0.0; u.values().len()];
        self.model.reaction_field(w.phi0.values(), &mut j0);
        for (a, b) in j0.iter_mut().zip(w.dphi0.values()) {
            *a += w.c0 * b;
        }
        let a_minus_l = self.a_minus_l(v)?;
        let out: Vec<f64> = j
            .values()
            .iter()
            .zip(&j0)
            .zip(w.dphi0.values())
            .zip(a_minus_l.values())
            .map(|(((j, j0), dp), al)| j - j0 - d * dp + al)
            .collect();
        Ok(GridFn::from_raw(*u.spec(), out))
    }

    /// `(A_* - L_tw) v = -c_0 v' - Df(Φ_0) v`.
    pub fn a_minus_l(&self, v: &GridFn) -> Result<GridFn> {
        self.spec().check_same(v.spec())?;
        let n = self.model.n();
        let dv = self.d_pert(v);
        let mut jac = vec![0.0; n * n];
        let mut out = vec![0.0; v.values().len()];
        let phi = self.wave.phi0.values();
        for j in 0..self.spec().n_points() {
            self.model.reaction_jacobian(&phi[j * n..(j + 1) * n], &mut jac);
            for r in 0..n {
                let i = j * n + r;
                let dfv: f64 = (0..n).map(|c| jac[r * n + c] * v.values()[j * n + c]).sum();
                out[i] = -self.wave.c0 * dv.values()[i] - dfv;
            }
        }
        Ok(GridFn::from_raw(*v.spec(), out))
    }

    /// `min{1, [4 ‖ψ_tw‖_{H¹}]⁻¹}`: radius on which the cut-offs are inactive.
    pub fn inactive_radius(&self) -> f64 {
        (1.0 / (4.0 * norm_h1(&self.psi))).min(1.0)
    }
}

pub fn nu_from_kappa(kappa: f64, order: NuOrder) -> f64 {
    match order {
        NuOrder::One => kappa - 1.0,
        NuOrder::MinusOne => 1.0 / kappa - 1.0,
        NuOrder::MinusHalf => 1.0 / kappa.sqrt() - 1.0,
    }
}

pub(crate) fn diffusion_zero(u: &GridFn, rho: f64) -> GridFn {
    let mut out = vec![0.0; u.values().len()];
    let spec = u.spec();
    diffusion_into(
        u.values(),
        spec.n_components(),
        spec.dx(),
        rho,
        &Ends::zero(spec.n_components()),
        &mut out,
    );
    GridFn::from_raw(*spec, out)
}

/// Plain re-evaluation of `a_σ` from its definition, node by node, with
/// its own quadrature loop. Test oracle for [`NoiseTerms::coefficients_raw`].
pub fn a_sigma_reference(terms: &NoiseTerms, u: &GridFn, c: f64, psi: &GridFn) -> f64 {
    let spec = u.spec();
    let n = spec.n_components();
    let du = terms.d_state(u);
    let g = noise_of(&terms.model, u);
    let ip = |a: &GridFn, b: &GridFn| -> f64 {
        let mut s = 0.0;
        for j in 0..spec.n_points() {
            for k in 0..n {
                s += spec.weight(j) * a.at(j)[k] * b.at(j)[k];
            }
        }
        s
    };
    let cut = &terms.params.cutoffs;
    let b = -cut.chi_high(ip(&g, psi)) / cut.chi_low(ip(&du, psi));
    let s = terms.params.sigma;
    let kappa = 1.0 + s * s * b * b / (2.0 * terms.model.rho());
    let mut j = vec![0.0; u.values().len()];
    let mut f = vec![0.0; n];
    let mut jac = vec![0.0; n * n];
    for node in 0..spec.n_points() {
        terms.model.reaction(u.at(node), &mut f);
        terms.model.noise_jacobian(u.at(node), &mut jac);
        for r in 0..n {
            let dgu: f64 = (0..n).map(|cc| jac[r * n + cc] * du.at(node)[cc]).sum();
            j[node * n + r] = (f[r] + c * du.at(node)[r] + s * s * b * dgu) / kappa;
        }
    }
    let j = GridFn::from_raw(*spec, j);
    let apsi = diffusion_zero(psi, terms.model.rho());
    -kappa / cut.chi_low(ip(&du, psi)) * (ip(u, &apsi) + ip(&j, psi))
}
