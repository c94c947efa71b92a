#![allow(dead_code)]

use std::sync::OnceLock;

use stochwave::grid::GridSpec;
use stochwave::noiseterms::{fit_theta0, CutoffSpec, NoiseParams, NoiseTerms};
use stochwave::profiles::{
    adjoint_eigenfunction, linearize, nagumo_front, LinearOperator, solve_wave, ModelSpec, NoiseShape, SpectralData, WaveData,
};

pub struct Fixture {
    pub model: ModelSpec,
    pub wave: WaveData,
    pub spectral: SpectralData,
    pub theta0: f64,
    pub cutoffs: CutoffSpec,
    pub op: LinearOperator,
}

impl Fixture {
    pub fn build(half_width: f64, dx: f64) -> Self {
        let grid = GridSpec::new(half_width, dx, 1).unwrap();
        let model = ModelSpec::nagumo(0.3, 1.0, NoiseShape::LogisticNagumo).unwrap();
        let guess = nagumo_front(grid, 0.3).unwrap();
        let wave = solve_wave(&model, grid, &guess.phi0, -0.25).unwrap();
        let spectral = adjoint_eigenfunction(&model, &wave).unwrap();
        let (theta0, _) = fit_theta0(&model, &wave);
        let cutoffs = CutoffSpec::from_wave(&model, &wave, &spectral).unwrap();
        let op = linearize(&model, &wave);
        Self {
            op,
            model,
            wave,
            spectral,
            theta0,
            cutoffs,
        }
    }

    /// Terms for the logistic noise with ϑ_0 attached.
    pub fn terms(&self, sigma: f64) -> NoiseTerms {
        let p = NoiseParams::new(sigma, self.cutoffs)
            .unwrap()
            .with_theta0(self.theta0, &self.model, &self.wave)
            .unwrap();
        NoiseTerms::new(&self.model, &self.wave, &self.spectral, p).unwrap()
    }

    /// Terms for a noise shape without ϑ_0.
    pub fn terms_with(&self, shape: NoiseShape, sigma: f64) -> NoiseTerms {
        let model = self.model.with_noise(shape).unwrap();
        let cut = CutoffSpec::from_wave(&model, &self.wave, &self.spectral).unwrap();
        let p = NoiseParams::new(sigma, cut).unwrap();
        NoiseTerms::new(&model, &self.wave, &self.spectral, p).unwrap()
    }
}

/// Nagumo a = 0.3 on [-40, 40] with dx = 0.02.
pub fn fine() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| Fixture::build(40.0, 0.02))
}

/// Cheaper grid for property tests.
pub fn coarse() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| Fixture::build(30.0, 0.05))
}

/// Monte Carlo grid: [-25, 25], dx = 0.1. Narrower domains break the ϑ_0
/// check through truncation.
pub fn mc() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| Fixture::build(25.0, 0.1))
}
