use std::sync::OnceLock;

use stochwave::ensemble::Execution;
use stochwave::experiments::*;
use stochwave::grid::GridSpec;
use stochwave::profiles::{ModelSpec, NoiseShape};
use stochwave::simulate::SimConfig;

fn lab(shape: NoiseShape) -> Lab {
    let model = ModelSpec::nagumo(0.3, 1.0, shape).unwrap();
    Lab::nagumo(model, GridSpec::new(25.0, 0.1, 1).unwrap()).unwrap()
}

fn logistic() -> &'static Lab {
    static L: OnceLock<Lab> = OnceLock::new();
    L.get_or_init(|| lab(NoiseShape::LogisticNagumo))
}

fn general() -> &'static Lab {
    static L: OnceLock<Lab> = OnceLock::new();
    L.get_or_init(|| lab(NoiseShape::QuadraticNagumo))
}

#[test]
fn theta0_attached_only_when_proportional() {
    assert!((logistic().theta0().unwrap() - 2f64.sqrt()).abs() < 1e-6);
    assert!(general().theta0().is_none());
}

#[test]
fn steepening_and_slowdown() {
    let sigmas = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
    let r = experiment_steepening(logistic(), &sigmas, 1e-11).unwrap();
    let first = &r.table.rows[0];
    assert!((first[4] - 1.0).abs() < 1e-12);
    assert!((first[5] - logistic().wave.c0).abs() < 1e-12);
    let slope = r.table.column("max_slope").unwrap();
    let speed = r.table.column("c_sigma").unwrap();
    for k in 1..slope.len() {
        assert!(slope[k] > slope[k - 1]);
        assert!(speed[k].abs() < speed[k - 1].abs());
    }
    assert!(r.r2 >= 0.999, "R² = {}", r.r2);
    assert!(r.speed_error < 1e-8, "{}", r.speed_error);
    assert!(r.max_slope_error < 1e-3 * slope[0], "{}", r.max_slope_error);
    assert!(experiment_steepening(general(), &sigmas, 1e-11).is_err());
}

#[test]
fn zero_noise_sup_scales_quadratically_with_start() {
    let sweep = StabilitySweep {
        sigmas: vec![0.0],
        etas: vec![1.0],
        t_ends: vec![2.0],
        amplitudes: vec![0.002, 0.004],
        n_paths: 1,
    };
    let cfg = SimConfig { dt: 0.01, ..SimConfig::default() };
    let t = experiment_stability(logistic(), &cfg, &sweep, Execution::Sequential).unwrap();
    let sup = t.column("mean_supN").unwrap();
    let ratio = sup[1] / sup[0];
    assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
}

#[test]
fn exit_table_is_monotone() {
    let sweep = StabilitySweep {
        sigmas: vec![0.05, 0.1],
        etas: vec![3e-4, 1e-3, 3e-3],
        t_ends: vec![1.0, 2.0, 4.0],
        amplitudes: vec![],
        n_paths: 60,
    };
    let cfg = SimConfig { dt: 0.01, seed: 5, ..SimConfig::default() };
    let t = experiment_stability(general(), &cfg, &sweep, Execution::Parallel).unwrap();
    let p = |s: f64, tt: f64, e: f64| {
        t.rows
            .iter()
            .find(|r| r[0] == s && r[2] == tt && r[3] == e)
            .map(|r| r[5])
            .unwrap()
    };
    for s in [0.05, 0.1] {
        for w in [1.0, 2.0, 4.0].windows(2) {
            for e in [3e-4, 1e-3, 3e-3] {
                assert!(p(s, w[0], e) <= p(s, w[1], e));
            }
        }
        for tt in [1.0, 2.0, 4.0] {
            assert!(p(s, tt, 3e-4) >= p(s, tt, 1e-3) && p(s, tt, 1e-3) >= p(s, tt, 3e-3));
        }
    }
    assert!(p(0.05, 4.0, 1e-3) <= p(0.1, 4.0, 1e-3));
    assert!(p(0.1, 4.0, 3e-4) > 0.0);
}

fn weighted_sups(dt: f64, amplitude: f64, n_paths: u64) -> Vec<f64> {
    let beta = logistic().spectral.beta_gap;
    let sweep = StabilitySweep {
        sigmas: vec![0.05],
        etas: vec![1.0],
        t_ends: vec![5.0, 10.0, 20.0],
        amplitudes: vec![amplitude],
        n_paths,
    };
    let cfg = SimConfig { dt, alpha: 0.5 * beta, seed: 9, ..SimConfig::default() };
    experiment_stability(logistic(), &cfg, &sweep, Execution::Parallel)
        .unwrap()
        .column("mean_supN")
        .unwrap()
}

#[test]
fn weighted_functional_bounded_in_time() {
    let m = weighted_sups(0.01, 0.01, 20);
    assert!(m[2] < 1.1 * m[0], "{m:?}");
}

#[test]
fn weighted_growth_from_the_wave_is_a_step_size_floor() {
    // started exactly on Φ_σ the continuum V vanishes; what remains shrinks with dt
    let coarse = weighted_sups(0.01, 0.0, 20);
    let fine = weighted_sups(0.005, 0.0, 20);
    assert!(coarse[2] > 2.0 * fine[2], "{coarse:?} {fine:?}");
    assert!(coarse[2] < 1e-5);
}

#[test]
fn fhn_pulse_lab() {
    // 4/(1-a)^2 > gamma: the rest state is the only equilibrium
    let model = ModelSpec::fhn(0.1, 0.005, 4.0, 1.0, NoiseShape::LogisticFhn).unwrap();
    let lab = Lab::fhn(model, GridSpec::new(60.0, 0.2, 1).unwrap()).unwrap();
    assert!(lab.wave.c0 > 0.3 && lab.wave.c0 < 0.5, "c0 = {}", lab.wave.c0);
    assert!(lab.wave.residual < 1e-9);
    let u = lab.wave.phi0.component(0);
    assert!(u[0].abs() < 1e-4 && u[u.len() - 1].abs() < 1e-4, "{} {}", u[0], u[u.len() - 1]);
    assert!(u.iter().cloned().fold(0.0, f64::max) > 0.8);
    assert!(lab.spectral.lambda0.abs() < 1e-4, "{}", lab.spectral.lambda0);
    assert!(lab.spectral.beta_gap > 0.0);
    assert!(lab.theta0().is_none());

    let mw = stochwave::modwave::solve_modified_wave(&lab.terms(0.001).unwrap(), 1e-10).unwrap();
    assert!(mw.c_sigma < lab.wave.c0 && lab.wave.c0 - mw.c_sigma < 1e-2);
    // the pulse's small gap limits the contraction range
    let far = stochwave::modwave::solve_modified_wave(&lab.terms(0.02).unwrap(), 1e-10);
    assert!(matches!(far, Err(stochwave::Error::Contraction { .. })));
}
