//! On-disk wave and spectral data.

use serde::{Deserialize, Serialize};
use stochwave::experiments::Lab;
use stochwave::grid::{GridFn, GridSpec};
use stochwave::noiseterms::{fit_theta0, CutoffSpec};
use stochwave::profiles::{ModelSpec, SpectralData, WaveData};

use crate::error::CliError;

pub const FORMAT: &str = "stochwave-wave/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WaveFile {
    pub format: String,
    pub wave_hash: String,
    pub model: ModelSpec,
    pub half_width: f64,
    pub dx: f64,
    pub n_points: usize,
    pub n_components: usize,
    pub c0: f64,
    pub residual: f64,
    pub beta_gap: f64,
    pub m_const: f64,
    pub lambda0: f64,
    pub fitted_decay_rate: f64,
    pub eigenvalues: Vec<(f64, f64)>,
    /// Node-major values of `Φ_0`.
    pub phi0: Vec<f64>,
    /// Node-major values of `ψ_tw`.
    pub psi: Vec<f64>,
}

impl WaveFile {
    pub fn from_lab(lab: &Lab, wave_hash: &str) -> Self {
        let spec = *lab.wave.phi0.spec();
        let s = &lab.spectral;
        Self {
            format: FORMAT.into(),
            wave_hash: wave_hash.into(),
            model: lab.model.clone(),
            half_width: spec.half_width(),
            dx: spec.dx(),
            n_points: spec.n_points(),
            n_components: spec.n_components(),
            c0: lab.wave.c0,
            residual: lab.wave.residual,
            beta_gap: s.beta_gap,
            m_const: s.m_const,
            lambda0: s.lambda0,
            fitted_decay_rate: s.fitted_decay_rate,
            eigenvalues: s.eigenvalues.clone(),
            phi0: lab.wave.phi0.values().to_vec(),
            psi: s.psi_tw.values().to_vec(),
        }
    }

    /// Rebuilds the lab for `model`, which may carry a different noise
    /// shape than the one the file was written with.
    pub fn into_lab(self, model: ModelSpec, grid: GridSpec, wave_hash: &str) -> Result<Lab, CliError> {
        let corrupt = |m: String| CliError::Missing(format!("wave data: {m}"));
        if self.format != FORMAT {
            return Err(corrupt(format!("unknown format `{}`", self.format)));
        }
        if self.wave_hash != wave_hash {
            return Err(corrupt("hash does not match the configuration".into()));
        }
        if self.model.kind != model.kind || grid.n_points() != self.n_points {
            return Err(corrupt("model or grid does not match the configuration".into()));
        }
        let spec = grid.with_components(self.n_components)?;
        let phi0 = GridFn::from_values(spec, self.phi0).map_err(|e| corrupt(e.to_string()))?;
        let psi_tw = GridFn::from_values(spec, self.psi).map_err(|e| corrupt(e.to_string()))?;
        let wave = WaveData::new(&model, phi0, self.c0)?;
        let spectral = SpectralData {
            psi_tw,
            beta_gap: self.beta_gap,
            m_const: self.m_const,
            eigenvalues: self.eigenvalues,
            lambda0: self.lambda0,
            fitted_decay_rate: self.fitted_decay_rate,
        };
        let cutoffs = CutoffSpec::from_wave(&model, &wave, &spectral)?;
        let theta_fit = fit_theta0(&model, &wave);
        Ok(Lab {
            model,
            wave,
            spectral,
            cutoffs,
            theta_fit,
        })
    }
}

/// Plot-ready columns `x, phi0_k..., psi_k...`.
pub fn profile_csv(lab: &Lab) -> Vec<u8> {
    let spec = *lab.wave.phi0.spec();
    let n = spec.n_components();
    let mut head = vec!["x".to_string()];
    head.extend((0..n).map(|k| format!("phi0_{k}")));
    head.extend((0..n).map(|k| format!("psi_{k}")));
    let mut out = head.join(",") + "\n";
    for j in 0..spec.n_points() {
        let mut row = vec![format!("{}", spec.node(j))];
        row.extend(lab.wave.phi0.at(j).iter().map(|v| format!("{v}")));
        row.extend(lab.spectral.psi_tw.at(j).iter().map(|v| format!("{v}")));
        out += &(row.join(",") + "\n");
    }
    out.into_bytes()
}
