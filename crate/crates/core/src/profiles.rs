//! Built-in models, deterministic traveling waves, the linearization about
//! a wave and its spectral data.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::banded::{BandedLu, BandedMatrix, BorderedSolver};
use crate::error::{Error, Result};
use crate::grid::{
    self, derivative, diffusion_into, dot_trapz, inner_product_l2, norm_l2, stencil_into,
    DiffusionSpec, Ends, GridFn, GridSpec, D1_WEIGHTS, D2_WEIGHTS,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `u_t = ρ u_xx + u(1-u)(u-a)`.
    Nagumo { a: f64 },
    /// `u_t = ρ u_xx + u(1-u)(u-a) - w`, `w_t = ρ w_xx + ϱ(u - γ w)`.
    FhnEqualDiffusion { a: f64, varrho: f64, gamma: f64 },
}

/// Shape of the multiplicative noise term `g(U)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum NoiseShape {
    /// `χ(u) u (1-u)`.
    LogisticNagumo,
    /// `(χ(u) u (1-u), u - γ w)`.
    LogisticFhn,
    /// `θ (2ρ)^{-1/2} χ(u) u (1-u)`, which equals `θ Φ_0'` along the
    /// Nagumo front.
    ProportionalToWaveDerivative { theta0: f64 },
    /// `χ(u) u² (1-u)`: vanishes at both rest states but is not
    /// proportional to `Φ_0'`.
    QuadraticNagumo,
    /// `g ≡ 0`.
    Zero,
}

/// Smooth cut-off: 1 on `|u| ≤ 2`, quintic roll-off to 0 on `[2, 3]`.
#[inline]
pub fn chi_state(u: f64) -> (f64, f64) {
    let x = u.abs();
    if x <= 2.0 {
        (1.0, 0.0)
    } else if x >= 3.0 {
        (0.0, 0.0)
    } else {
        let t = x - 2.0;
        let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
        let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
        (1.0 - s, -ds * u.signum())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub diffusion: DiffusionSpec,
    pub noise_shape: NoiseShape,
    pub rest_left: Vec<f64>,
    pub rest_right: Vec<f64>,
}

impl ModelSpec {
    pub fn nagumo(a: f64, rho: f64, noise_shape: NoiseShape) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Nagumo detuning a must lie in (0, 1), got {a}"
            )));
        }
        Self::build(
            ModelKind::Nagumo { a },
            DiffusionSpec::new(rho)?,
            noise_shape,
            vec![0.0],
            vec![1.0],
        )
    }

    pub fn fhn(a: f64, varrho: f64, gamma: f64, rho: f64, noise_shape: NoiseShape) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "FitzHugh-Nagumo a must lie in (0, 1), got {a}"
            )));
        }
        if !(varrho > 0.0 && gamma > 0.0 && varrho.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need varrho > 0 and gamma > 0, got {varrho}, {gamma}"
            )));
        }
        Self::build(
            ModelKind::FhnEqualDiffusion { a, varrho, gamma },
            DiffusionSpec::new(rho)?,
            noise_shape,
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        )
    }

    fn build(
        kind: ModelKind,
        diffusion: DiffusionSpec,
        noise_shape: NoiseShape,
        rest_left: Vec<f64>,
        rest_right: Vec<f64>,
    ) -> Result<Self> {
        let ok = matches!(
            (kind, noise_shape),
            (ModelKind::Nagumo { .. }, NoiseShape::LogisticNagumo)
                | (ModelKind::Nagumo { .. }, NoiseShape::ProportionalToWaveDerivative { .. })
                | (ModelKind::Nagumo { .. }, NoiseShape::QuadraticNagumo)
                | (ModelKind::FhnEqualDiffusion { .. }, NoiseShape::LogisticFhn)
                | (_, NoiseShape::Zero)
        );
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "noise shape {noise_shape:?} is not available for {kind:?}"
            )));
        }
        let m = Self {
            kind,
            diffusion,
            noise_shape,
            rest_left,
            rest_right,
        };
        let n = m.n();
        let mut out = vec![0.0; n];
        for rest in [&m.rest_left, &m.rest_right] {
            m.reaction(rest, &mut out);
            if out.iter().any(|v| v.abs() > 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "f does not vanish at rest state {rest:?}"
                )));
            }
            m.noise(rest, &mut out);
            if out.iter().any(|v| v.abs() > 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "g does not vanish at rest state {rest:?}"
                )));
            }
        }
        Ok(m)
    }

    /// Same model with a different noise shape.
    pub fn with_noise(&self, noise_shape: NoiseShape) -> Result<Self> {
        Self::build(
            self.kind,
            self.diffusion,
            noise_shape,
            self.rest_left.clone(),
            self.rest_right.clone(),
        )
    }

    pub fn n(&self) -> usize {
        match self.kind {
            ModelKind::Nagumo { .. } => 1,
            ModelKind::FhnEqualDiffusion { .. } => 2,
        }
    }

    pub fn rho(&self) -> f64 {
        self.diffusion.rho
    }

    pub fn ends(&self) -> Ends {
        Ends {
            left: self.rest_left.clone(),
            right: self.rest_right.clone(),
        }
    }

    #[inline]
    fn cubic(a: f64, u: f64) -> (f64, f64) {
        (
            u * (1.0 - u) * (u - a),
            -3.0 * u * u + 2.0 * (1.0 + a) * u - a,
        )
    }

    /// `f(u)` at one node.
    #[inline]
    pub fn reaction(&self, u: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::Nagumo { a } => out[0] = Self::cubic(a, u[0]).0,
            ModelKind::FhnEqualDiffusion { a, varrho, gamma } => {
                out[0] = Self::cubic(a, u[0]).0 - u[1];
                out[1] = varrho * (u[0] - gamma * u[1]);
            }
        }
    }

    /// `Df(u)`, row-major `n x n`.
    #[inline]
    pub fn reaction_jacobian(&self, u: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::Nagumo { a } => out[0] = Self::cubic(a, u[0]).1,
            ModelKind::FhnEqualDiffusion { a, varrho, gamma } => {
                out[0] = Self::cubic(a, u[0]).1;
                out[1] = -1.0;
                out[2] = varrho;
                out[3] = -varrho * gamma;
            }
        }
    }

    #[inline]
    fn scalar_noise(&self, u: f64) -> (f64, f64) {
        let (chi, dchi) = chi_state(u);
        let (h, dh) = match self.noise_shape {
            NoiseShape::LogisticNagumo | NoiseShape::LogisticFhn => (u * (1.0 - u), 1.0 - 2.0 * u),
            NoiseShape::ProportionalToWaveDerivative { theta0 } => {
                let s = theta0 / (2.0 * self.rho()).sqrt();
                (s * u * (1.0 - u), s * (1.0 - 2.0 * u))
            }
            NoiseShape::QuadraticNagumo => (u * u * (1.0 - u), 2.0 * u - 3.0 * u * u),
            NoiseShape::Zero => (0.0, 0.0),
        };
        (chi * h, dchi * h + chi * dh)
    }

    /// `(f(u), g(u), g'(u))` for a scalar model.
    #[inline]
    pub(crate) fn scalar_terms(&self, u: f64) -> (f64, f64, f64) {
        let f = match self.kind {
            ModelKind::Nagumo { a } => Self::cubic(a, u).0,
            ModelKind::FhnEqualDiffusion { .. } => unreachable!("scalar_terms on a system"),
        };
        let (g, dg) = self.scalar_noise(u);
        (f, g, dg)
    }

    /// `g(u)` at one node.
    #[inline]
    pub fn noise(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.scalar_noise(u[0]).0;
        if let ModelKind::FhnEqualDiffusion { gamma, .. } = self.kind {
            out[1] = match self.noise_shape {
                NoiseShape::Zero => 0.0,
                _ => u[0] - gamma * u[1],
            };
        }
    }

    /// `Dg(u)`, row-major `n x n`.
    #[inline]
    pub fn noise_jacobian(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.scalar_noise(u[0]).1;
        if let ModelKind::FhnEqualDiffusion { gamma, .. } = self.kind {
            out[1] = 0.0;
            if matches!(self.noise_shape, NoiseShape::Zero) {
                out[2] = 0.0;
                out[3] = 0.0;
            } else {
                out[2] = 1.0;
                out[3] = -gamma;
            }
        }
    }

    /// Applies `f` node by node to a node-major slice.
    pub fn reaction_field(&self, values: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::Nagumo { a } => {
                for (o, &u) in out.iter_mut().zip(values) {
                    *o = Self::cubic(a, u).0;
                }
            }
            _ => {
                let n = self.n();
                for (o, u) in out.chunks_exact_mut(n).zip(values.chunks_exact(n)) {
                    self.reaction(u, o);
                }
            }
        }
    }

    pub fn noise_field(&self, values: &[f64], out: &mut [f64]) {
        let n = self.n();
        if n == 1 {
            for (o, &u) in out.iter_mut().zip(values) {
                *o = self.scalar_noise(u).0;
            }
        } else {
            for (o, u) in out.chunks_exact_mut(n).zip(values.chunks_exact(n)) {
                self.noise(u, o);
            }
        }
    }

    /// `Dg(u) w` node by node.
    pub fn noise_jacobian_apply(&self, values: &[f64], w: &[f64], out: &mut [f64]) {
        let n = self.n();
        if n == 1 {
            for ((o, &u), &wv) in out.iter_mut().zip(values).zip(w) {
                *o = self.scalar_noise(u).1 * wv;
            }
        } else {
            let mut jac = vec![0.0; n * n];
            for ((o, u), wv) in out
                .chunks_exact_mut(n)
                .zip(values.chunks_exact(n))
                .zip(w.chunks_exact(n))
            {
                self.noise_jacobian(u, &mut jac);
                for r in 0..n {
                    o[r] = (0..n).map(|c| jac[r * n + c] * wv[c]).sum();
                }
            }
        }
    }

    /// Global Lipschitz constant `K_g` of `g`, by dense sampling of `|Dg|`
    /// over the support `|u| ≤ 3` of the cut-off.
    pub fn noise_lipschitz(&self) -> f64 {
        let n = self.n();
        let mut jac = vec![0.0; n * n];
        let mut u = vec![0.0; n];
        let mut best = 0.0_f64;
        for i in 0..=6000 {
            u[0] = -3.0 + i as f64 * 1e-3;
            self.noise_jacobian(&u, &mut jac);
            // Frobenius norm bounds the operator norm
            let norm = jac.iter().map(|v| v * v).sum::<f64>().sqrt();
            best = best.max(norm);
        }
        best
    }
}

/// Deterministic traveling wave `(Φ_0, c_0)` on a grid.
#[derive(Clone, Debug)]
pub struct WaveData {
    pub phi0: GridFn,
    pub c0: f64,
    pub phi_ref: GridFn,
    pub residual: f64,
    pub ends: Ends,
    /// `Φ_0'` by the same central difference used everywhere else.
    pub dphi0: GridFn,
}

impl WaveData {
    pub fn new(model: &ModelSpec, phi0: GridFn, c0: f64) -> Result<Self> {
        if phi0.spec().n_components() != model.n() {
            return Err(Error::Shape("wave has wrong component count".into()));
        }
        let ends = model.ends();
        let residual = wave_residual(model, &phi0, c0).sup_norm();
        let dphi0 = derivative(&phi0, &ends);
        Ok(Self {
            phi_ref: phi0.clone(),
            phi0,
            c0,
            residual,
            ends,
            dphi0,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        self.phi0.spec()
    }

    /// Largest deviation of the two edge nodes from `u_∓`.
    pub fn boundary_error(&self) -> f64 {
        let n = self.spec().n_components();
        let last = self.spec().n_points() - 1;
        (0..n).fold(0.0_f64, |m, k| {
            m.max((self.phi0.at(0)[k] - self.ends.left[k]).abs())
                .max((self.phi0.at(last)[k] - self.ends.right[k]).abs())
        })
    }
}

/// `ρ Φ'' + c Φ' + f(Φ)` with rest-state ghosts.
pub fn wave_residual(model: &ModelSpec, phi: &GridFn, c: f64) -> GridFn {
    let spec = *phi.spec();
    let n = spec.n_components();
    let ends = model.ends();
    let mut out = vec![0.0; spec.len()];
    let mut tmp = vec![0.0; spec.len()];
    diffusion_into(phi.values(), n, spec.dx(), model.rho(), &ends, &mut out);
    stencil_into(phi.values(), n, &ends, &D1_WEIGHTS, c / spec.dx(), &mut tmp);
    for (o, t) in out.iter_mut().zip(&tmp) {
        *o += t;
    }
    model.reaction_field(phi.values(), &mut tmp);
    for (o, t) in out.iter_mut().zip(&tmp) {
        *o += t;
    }
    GridFn::from_raw(spec, out)
}

/// Closed-form Nagumo front for `ρ = 1`.
pub fn nagumo_front(grid: GridSpec, a: f64) -> Result<WaveData> {
    nagumo_front_rho(grid, a, 1.0)
}

/// Closed-form Nagumo front `½[1 + tanh(ξ / (2√(2ρ)))]`, speed `√(2ρ)(a - ½)`.
pub fn nagumo_front_rho(grid: GridSpec, a: f64, rho: f64) -> Result<WaveData> {
    let model = ModelSpec::nagumo(a, rho, NoiseShape::Zero)?;
    if grid.n_components() != 1 {
        return Err(Error::Shape("Nagumo front is scalar".into()));
    }
    let scale = 1.0 / (2.0 * (2.0 * rho).sqrt());
    let phi = GridFn::from_scalar_fn(grid, |x| 0.5 * (1.0 + (scale * x).tanh()))?;
    WaveData::new(&model, phi, (2.0 * rho).sqrt() * (a - 0.5))
}

/// Assembles `ρ D² + c D + diag(J_j)` with zero ghost values.
pub(crate) fn assemble_operator(
    spec: &GridSpec,
    rho: f64,
    c: f64,
    mut node_jac: impl FnMut(usize, &mut [f64]),
) -> BandedMatrix {
    let n = spec.n_components();
    let np = spec.n_points();
    let band = 3 * n - 1;
    let mut m = BandedMatrix::zeros(np * n, band, band);
    let (d1s, d2s) = (c / spec.dx(), rho / (spec.dx() * spec.dx()));
    let mut jac = vec![0.0; n * n];
    for j in 0..np {
        for (o, (w1, w2)) in D1_WEIGHTS.iter().zip(&D2_WEIGHTS).enumerate() {
            let jj = j as isize + o as isize - 2;
            if jj < 0 || jj >= np as isize {
                continue;
            }
            let v = w1 * d1s + w2 * d2s;
            for k in 0..n {
                m.add(j * n + k, jj as usize * n + k, v);
            }
        }
        node_jac(j, &mut jac);
        for r in 0..n {
            for col in 0..n {
                m.add(j * n + r, j * n + col, jac[r * n + col]);
            }
        }
    }
    m
}

/// Newton solve of `ρΦ'' + cΦ' + f(Φ) = 0` with the phase condition
/// `⟨Φ - guess, guess'⟩ = 0`.
pub fn solve_wave(
    model: &ModelSpec,
    grid: GridSpec,
    initial_guess: &GridFn,
    c_guess: f64,
) -> Result<WaveData> {
    solve_wave_with(model, grid, initial_guess, c_guess, 1e-10, 50)
}

pub fn solve_wave_with(
    model: &ModelSpec,
    grid: GridSpec,
    initial_guess: &GridFn,
    c_guess: f64,
    tol: f64,
    max_iter: usize,
) -> Result<WaveData> {
    grid.check_same(initial_guess.spec())?;
    if grid.n_components() != model.n() {
        return Err(Error::Shape("grid component count differs from model".into()));
    }
    let n = grid.n_components();
    let ends = model.ends();
    let guess_d = derivative(initial_guess, &ends);
    let phase_row: Vec<f64> = (0..grid.len())
        .map(|i| grid.weight(i / n) * guess_d.values()[i])
        .collect();
    let phase = |phi: &GridFn| -> f64 {
        let diff: Vec<f64> = phi
            .values()
            .iter()
            .zip(initial_guess.values())
            .map(|(a, b)| a - b)
            .collect();
        dot_trapz(&diff, guess_d.values(), n, grid.dx())
    };
    let mut phi = initial_guess.clone();
    let mut c = c_guess;
    let mut res = wave_residual(model, &phi, c);
    let mut res_norm = res.sup_norm().max(phase(&phi).abs());
    for _ in 0..max_iter {
        if res_norm <= tol {
            return WaveData::new(model, phi, c);
        }
        let phi_vals = phi.values().to_vec();
        let a = assemble_operator(&grid, model.rho(), c, |j, out| {
            model.reaction_jacobian(&phi_vals[j * n..(j + 1) * n], out)
        });
        let dphi = derivative(&phi, &ends);
        let solver = BorderedSolver::new(a, dphi.values().to_vec(), phase_row.clone())?;
        let rhs: Vec<f64> = res.values().iter().map(|v| -v).collect();
        let (dx, dc) = solver.solve(&rhs, -phase(&phi))?;
        if dx.iter().any(|v| !v.is_finite()) || !dc.is_finite() {
            return Err(Error::Numerical("Newton step is not finite".into()));
        }
        let mut step = 1.0;
        loop {
            let trial_vals: Vec<f64> = phi_vals
                .iter()
                .zip(&dx)
                .map(|(p, d)| p + step * d)
                .collect();
            let trial = GridFn::from_raw(grid, trial_vals);
            let trial_c = c + step * dc;
            let trial_res = wave_residual(model, &trial, trial_c);
            let trial_norm = trial_res.sup_norm().max(phase(&trial).abs());
            if trial_norm < res_norm || step < 1e-3 {
                phi = trial;
                c = trial_c;
                res = trial_res;
                res_norm = trial_norm;
                break;
            }
            step *= 0.5;
        }
    }
    if res_norm <= tol {
        return WaveData::new(model, phi, c);
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: res_norm,
    })
}

/// Discretized `L_tw = c_0 D + ρ D² + Df(Φ_0)` (zero ghosts).
#[derive(Clone, Debug)]
pub struct LinearOperator {
    spec: GridSpec,
    matrix: BandedMatrix,
    pub c0: f64,
    pub rho: f64,
}

impl LinearOperator {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn matrix(&self) -> &BandedMatrix {
        &self.matrix
    }

    pub fn apply(&self, v: &GridFn) -> Result<GridFn> {
        self.spec.check_same(v.spec())?;
        Ok(GridFn::from_raw(self.spec, self.matrix.matvec(v.values())))
    }

    /// `-c_0 w' + ρ w'' + Df(Φ_0)ᵀ w`: the matrix transpose, which is the
    /// same stencil with the sign of the first-derivative part flipped.
    pub fn adjoint_matrix(&self) -> BandedMatrix {
        self.matrix.transpose()
    }

    pub fn apply_adjoint(&self, w: &GridFn) -> Result<GridFn> {
        self.spec.check_same(w.spec())?;
        Ok(GridFn::from_raw(
            self.spec,
            self.adjoint_matrix().matvec(w.values()),
        ))
    }
}

pub fn linearize(model: &ModelSpec, wave: &WaveData) -> LinearOperator {
    let spec = *wave.spec();
    let n = spec.n_components();
    let vals = wave.phi0.values();
    let matrix = assemble_operator(&spec, model.rho(), wave.c0, |j, out| {
        model.reaction_jacobian(&vals[j * n..(j + 1) * n], out)
    });
    LinearOperator {
        spec,
        matrix,
        c0: wave.c0,
        rho: model.rho(),
    }
}

/// Adjoint eigenfunction and spectral information of `L_tw`.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub psi_tw: GridFn,
    pub beta_gap: f64,
    pub m_const: f64,
    /// Leading part of the coarse-grid spectrum, `(re, im)`, sorted by
    /// decreasing real part.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Eigenvalue of the fine-grid operator nearest 0.
    pub lambda0: f64,
    /// Decay rate fitted to `log ‖S(t) Q v_0‖` across the probes.
    pub fitted_decay_rate: f64,
}

impl SpectralData {
    pub fn psi(&self) -> &GridFn {
        &self.psi_tw
    }
}

/// Inverse iteration on the transposed operator; returns `(k, λ)` with
/// `k` unit Euclidean norm.
fn kernel_vector(matrix: &BandedMatrix, start: &[f64]) -> Result<(Vec<f64>, f64)> {
    let lu = matrix.clone().lu()?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut x: Vec<f64> = start.to_vec();
    let s = norm(&x);
    if s == 0.0 {
        return Err(Error::Numerical("zero start vector for inverse iteration".into()));
    }
    x.iter_mut().for_each(|v| *v /= s);
    for _ in 0..50 {
        let mut y = lu.solve(&x);
        let s = norm(&y);
        if !s.is_finite() || s == 0.0 {
            return Err(Error::Numerical("inverse iteration broke down".into()));
        }
        let sign = if y.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
            -1.0
        } else {
            1.0
        };
        y.iter_mut().for_each(|v| *v *= sign / s);
        let change = norm(
            &y.iter()
                .zip(&x)
                .map(|(a, b)| a - b)
                .collect::<Vec<f64>>(),
        );
        x = y;
        if change < 1e-13 {
            break;
        }
    }
    let ax = matrix.matvec(&x);
    let lambda = ax.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
    Ok((x, lambda))
}

/// Coarse grid used for the dense leading-spectrum solve.
fn coarse_grid(spec: &GridSpec, target_points: usize) -> Result<GridSpec> {
    if spec.n_points() <= target_points + target_points / 2 {
        return Ok(*spec);
    }
    GridSpec::with_points(spec.half_width(), target_points, spec.n_components())
}

/// Leading eigenvalues of the operator rebuilt on `coarse`.
fn coarse_spectrum(model: &ModelSpec, wave: &WaveData, coarse: GridSpec) -> Result<Vec<(f64, f64)>> {
    let coarse_wave = if coarse == *wave.spec() {
        wave.clone()
    } else {
        let guess = grid::resample(&wave.phi0, coarse, &wave.ends)?;
        solve_wave_with(model, coarse, &guess, wave.c0, 1e-10, 30)?
    };
    let op = linearize(model, &coarse_wave);
    let m = coarse.len();
    let dense = DMatrix::from_row_slice(m, m, &op.matrix().to_dense());
    let ev = dense.complex_eigenvalues();
    let mut out: Vec<(f64, f64)> = ev.iter().map(|z| (z.re, z.im)).collect();
    out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out)
}

/// `Q v = v - ⟨v, ψ⟩ Φ_0'`.
pub fn spectral_project_q(v: &GridFn, spec: &SpectralData, wave: &WaveData) -> Result<GridFn> {
    let ip = inner_product_l2(v, spec.psi())?;
    v.lin_comb(1.0, -ip, &wave.dphi0)
}

/// Computes `ψ_tw`, the spectral gap and the semigroup constant.
pub fn adjoint_eigenfunction(model: &ModelSpec, wave: &WaveData) -> Result<SpectralData> {
    let op = linearize(model, wave);
    let spec = *wave.spec();
    let n = spec.n_components();
    let adj = op.adjoint_matrix();
    let (k, lambda0) = kernel_vector(&adj, wave.dphi0.values())?;
    // k is a left null vector in the Euclidean pairing; dividing by the
    // quadrature weights turns it into one for the trapezoidal pairing
    let psi_raw: Vec<f64> = k
        .iter()
        .enumerate()
        .map(|(i, v)| v / spec.weight(i / n))
        .collect();
    let psi = GridFn::from_values(spec, psi_raw)?;
    let norm = inner_product_l2(&wave.dphi0, &psi)?;
    if norm.abs() < 1e-12 {
        return Err(Error::SpectralHypothesis(
            "adjoint kernel is orthogonal to Φ_0'".into(),
        ));
    }
    let psi = psi.scaled(1.0 / norm);
    if lambda0.abs() > 1e-3 {
        return Err(Error::SpectralHypothesis(format!(
            "eigenvalue nearest zero is {lambda0:e}"
        )));
    }

    let coarse = coarse_grid(&spec, 401)?;
    let eigenvalues = coarse_spectrum(model, wave, coarse)?;
    let i0 = eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = a.1 .0.hypot(a.1 .1);
            let db = b.1 .0.hypot(b.1 .1);
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numerical("empty spectrum".into()))?;
    let (l0re, l0im) = eigenvalues[i0];
    if l0re.hypot(l0im) > 1e-3 {
        return Err(Error::SpectralHypothesis(format!(
            "coarse operator has no eigenvalue near 0 (closest {l0re:e})"
        )));
    }
    let rest_max = eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != i0)
        .map(|(_, z)| z.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let beta_gap = -rest_max;
    if !(beta_gap >= 1e-3) {
        return Err(Error::SpectralHypothesis(format!(
            "zero eigenvalue is not isolated (gap {beta_gap:e})"
        )));
    }
    let eigenvalues: Vec<(f64, f64)> = eigenvalues.into_iter().take(40).collect();

    let mut sd = SpectralData {
        psi_tw: psi,
        beta_gap,
        m_const: 1.0,
        eigenvalues,
        lambda0,
        fitted_decay_rate: f64::NAN,
    };
    let probe = probe_semigroup(&op, &sd, wave, 20, 0x5eed)?;
    sd.m_const = probe.m_const;
    sd.fitted_decay_rate = probe.decay_rate;
    Ok(sd)
}

/// Result of propagating random range(Q) data with `S(t)`.
#[derive(Clone, Debug)]
pub struct SemigroupProbe {
    pub m_const: f64,
    pub decay_rate: f64,
    pub times: Vec<f64>,
    /// `‖S(t) v_0‖ / ‖v_0‖`, one row per probe.
    pub ratios: Vec<Vec<f64>>,
}

/// Smooth random field: a few Gaussian bumps inside `|ξ| ≤ L/2`.
pub fn random_bumps(spec: GridSpec, rng: &mut impl Rng, n_bumps: usize) -> GridFn {
    let l = spec.half_width();
    let n = spec.n_components();
    let bumps: Vec<(f64, f64, f64, usize)> = (0..n_bumps)
        .map(|_| {
            (
                rng.random_range(-0.4 * l..0.4 * l).clamp(-8.0, 8.0),
                rng.random_range(0.5..2.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0..n),
            )
        })
        .collect();
    GridFn::from_fn(spec, |x, out| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(x0, w, amp, k) in &bumps {
            out[k] += amp * (-((x - x0) / w).powi(2)).exp();
        }
    })
    .expect("bumps are finite")
}

pub fn probe_semigroup(
    op: &LinearOperator,
    sd: &SpectralData,
    wave: &WaveData,
    n_probes: usize,
    seed: u64,
) -> Result<SemigroupProbe> {
    let dt = 0.05;
    let prop = LinearPropagator::new(op, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times: Vec<f64> = (1..=100).map(|k| 0.1 * k as f64).collect();
    let mut ratios = Vec::with_capacity(n_probes);
    let mut m_const = 1.0_f64;
    let (mut sxx, mut sxy, mut sx, mut sy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n_probes {
        let v0 = random_bumps(*op.spec(), &mut rng, 4);
        let v0 = spectral_project_q(&v0, sd, wave)?;
        let n0 = norm_l2(&v0);
        let mut v = v0.values().to_vec();
        let mut row = Vec::with_capacity(times.len());
        let mut steps_done = 0usize;
        for &t in &times {
            let target = (t / dt).round() as usize;
            prop.advance(&mut v, target - steps_done, steps_done == 0);
            steps_done = target;
            let r = dot_trapz(&v, &v, op.spec().n_components(), op.spec().dx()).sqrt() / n0;
            row.push(r);
            m_const = m_const.max(r * (sd.beta_gap * t).exp());
            if t >= 2.0 {
                let y = r.ln();
                sxx += t * t;
                sxy += t * y;
                sx += t;
                sy += y;
                cnt += 1.0;
            }
        }
        ratios.push(row);
    }
    let slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    Ok(SemigroupProbe {
        m_const,
        decay_rate: -slope,
        times,
        ratios,
    })
}

/// Crank-Nicolson stepper for `v' = L_tw v` with a fixed step.
#[derive(Clone, Debug)]
pub struct LinearPropagator {
    lu: BandedLu,
    explicit: BandedMatrix,
    dt: f64,
}

impl LinearPropagator {
    pub fn new(op: &LinearOperator, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let mut implicit = op.matrix().clone();
        implicit.scale(-0.5 * dt);
        implicit.shift_diagonal(1.0);
        let mut explicit = op.matrix().clone();
        explicit.scale(0.5 * dt);
        explicit.shift_diagonal(1.0);
        Ok(Self {
            lu: implicit.lu()?,
            explicit,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `steps` steps. With `smooth_start` the first step is
    /// replaced by two backward-Euler half steps (Rannacher start), which
    /// damps the non-smooth modes CN would otherwise carry along.
    pub fn advance(&self, v: &mut [f64], steps: usize, smooth_start: bool) {
        let mut tmp = vec![0.0; v.len()];
        for s in 0..steps {
            if s == 0 && smooth_start {
                // (I - dt/2 L) is also the backward Euler matrix for dt/2
                self.lu.solve_in_place(v);
                self.lu.solve_in_place(v);
            } else {
                self.explicit.matvec_into(v, &mut tmp);
                self.lu.solve_in_place(&mut tmp);
                v.copy_from_slice(&tmp);
            }
        }
    }
}

/// `S(t) v_0` by Crank-Nicolson with step at most `dt`.
pub fn propagate_linear(op: &LinearOperator, v0: &GridFn, t: f64, dt: f64) -> Result<GridFn> {
    op.spec().check_same(v0.spec())?;
    if t < 0.0 || !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need t >= 0 and dt > 0 (t = {t}, dt = {dt})"
        )));
    }
    if t == 0.0 {
        return Ok(v0.clone());
    }
    let steps = (t / dt - 1e-9).ceil().max(1.0) as usize;
    let prop = LinearPropagator::new(op, t / steps as f64)?;
    let mut v = v0.values().to_vec();
    prop.advance(&mut v, steps, true);
    GridFn::from_values(*v0.spec(), v)
}

/// Deterministic FitzHugh-Nagumo pulse: relax an excitation with the
/// parabolic flow in a frame that follows the pulse, then polish with
/// Newton.
pub fn fhn_pulse(model: &ModelSpec, grid: GridSpec) -> Result<WaveData> {
    if !matches!(model.kind, ModelKind::FhnEqualDiffusion { .. }) {
        return Err(Error::InvalidParameter("fhn_pulse needs an FHN model".into()));
    }
    let n = 2;
    let spec = grid.with_components(n)?;
    let zero = Ends::zero(n);
    let dt = 0.05;
    let mut u = GridFn::from_fn(spec, |x, out| {
        // excite next to the left edge: the left-going half leaves at once
        let x0 = -spec.half_width() + 2.0;
        out[0] = if (x0..x0 + 6.0).contains(&x) { 1.0 } else { 0.0 };
        out[1] = 0.0;
    })?
    .into_values();
    let mut implicit = assemble_operator(&spec, model.rho(), 0.0, |_, out| {
        out.iter_mut().for_each(|o| *o = 0.0)
    });
    implicit.scale(-dt);
    implicit.shift_diagonal(1.0);
    let lu = implicit.lu()?;
    let mut f = vec![0.0; u.len()];
    let mut shifted = vec![0.0; u.len()];
    let mut travelled = 0.0;
    // rightmost node above the excitation threshold
    let lead = |u: &[f64]| -> Option<f64> {
        (0..spec.n_points()).rev().find(|&j| u[j * n] > 0.5).map(|j| spec.node(j))
    };
    let target = 0.7 * spec.half_width();
    let relax_time = 400.0;
    let steps = (relax_time / dt) as usize;
    let mut speed_window = Vec::new();
    for step in 0..steps {
        model.reaction_field(&u, &mut f);
        for (ui, fi) in u.iter_mut().zip(&f) {
            *ui += dt * fi;
        }
        lu.solve_in_place(&mut u);
        if step % 20 == 19 {
            if let Some(x) = lead(&u) {
                grid::shift_into(&u, n, spec.dx(), target - x, &zero, &mut shifted);
                std::mem::swap(&mut u, &mut shifted);
                travelled += x - target;
            }
            if step as f64 * dt > relax_time / 2.0 {
                speed_window.push((step as f64 * dt, travelled));
            }
        }
        if u.iter().all(|v| v.abs() < 1e-3) {
            return Err(Error::Numerical(
                "excitation decayed; no pulse for these parameters".into(),
            ));
        }
    }
    let (t0, x0) = speed_window.first().copied().unwrap_or((0.0, 0.0));
    let (t1, x1) = speed_window.last().copied().unwrap_or((1.0, 0.0));
    // lab position x = ξ + c t for Φ(x - c t)
    let c_guess = (x1 - x0) / (t1 - t0);
    let guess = GridFn::from_values(spec, u)?;
    solve_wave(model, spec, &guess, c_guess)
}
