//! Acceptance suite. Runs as a plain binary so the per-criterion lines are
//! always printed; exits non-zero if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stochwave::ensemble::{
    phase_diffusion_test, run_ensemble, speed_correction, write_jsonl, Execution, SpeedOptions,
};
use stochwave::experiments::{linear_fit, Lab};
use stochwave::grid::{inner_product_l2, norm_h1, norm_l2, GridFn, GridSpec};
use stochwave::modwave::{explicit_modified_wave_aligned, sigma_sweep, solve_modified_wave};
use stochwave::profiles::{
    adjoint_eigenfunction, linearize, nagumo_front, probe_semigroup, propagate_linear, random_bumps, solve_wave,
    ModelSpec, NoiseShape,
};
use stochwave::simulate::{count_time_transform_violations, SimConfig, Simulator};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn lab(shape: NoiseShape, l: f64, dx: f64) -> Lab {
    let model = ModelSpec::nagumo(0.3, 1.0, shape).unwrap();
    Lab::nagumo(model, GridSpec::new(l, dx, 1).unwrap()).unwrap()
}

fn c1_wave() -> Outcome {
    let t0 = Instant::now();
    let grid = GridSpec::new(40.0, 0.02, 1).unwrap();
    let model = ModelSpec::nagumo(0.3, 1.0, NoiseShape::LogisticNagumo).unwrap();
    let guess = GridFn::from_scalar_fn(grid, |x| 1.0 / (1.0 + (-0.5 * x).exp())).unwrap();
    let w = solve_wave(&model, grid, &guess, -0.2).unwrap();
    let exact = nagumo_front(grid, 0.3).unwrap();
    let sup = w.phi0.sub(&exact.phi0).unwrap().sup_norm();
    let dc = (w.c0 - 2f64.sqrt() * (0.3 - 0.5)).abs();
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        sup <= 5e-4 && dc <= 2e-3 && secs < 5.0,
        format!("sup error {sup:.2e} (<= 5e-4), speed error {dc:.2e} (<= 2e-3), {secs:.2} s (< 5 s)"),
    )
}

fn c2_spectrum(fine: &Lab) -> Outcome {
    let t0 = Instant::now();
    let sd = adjoint_eigenfunction(&fine.model, &fine.wave).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let near_zero = sd.eigenvalues.iter().filter(|(re, im)| re.hypot(*im) < 1e-3).count();
    let pairing = inner_product_l2(&fine.wave.dphi0, sd.psi()).unwrap();
    let bound = (-0.3_f64).max(0.3 - 1.0).abs();
    let pass = near_zero == 1
        && sd.lambda0.abs() < 1e-3
        && (pairing - 1.0).abs() <= 1e-8
        && sd.beta_gap >= 0.25
        && secs < 30.0;
    outcome(
        pass,
        format!(
            "{near_zero} eigenvalue(s) within 1e-3 of 0 (λ0 = {:.1e}), <Φ0',ψ> - 1 = {:.1e}, β = {:.4} (>= 0.25, essential bound {bound}), {secs:.2} s",
            sd.lambda0,
            pairing - 1.0,
            sd.beta_gap
        ),
    )
}

fn c3_closed_form(fine: &Lab) -> Outcome {
    let t0 = Instant::now();
    let mut worst = (0.0_f64, 0.0_f64);
    for sigma in [0.1, 0.2] {
        let t = fine.terms(sigma).unwrap();
        let mw = solve_modified_wave(&t, 1e-12).unwrap();
        let (cf, _) = explicit_modified_wave_aligned(&t).unwrap();
        worst.0 = worst.0.max(mw.phi_sigma.sub(&cf.phi_sigma).unwrap().sup_norm());
        worst.1 = worst.1.max((mw.c_sigma - cf.c_sigma).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst.0 <= 1e-3 && worst.1 <= 1e-4 && secs < 60.0,
        format!(
            "sigma in {{0.1, 0.2}}: sup gap {:.1e} (<= 1e-3), speed gap {:.1e} (<= 1e-4), {secs:.2} s",
            worst.0, worst.1
        ),
    )
}

fn c4_sigma_squared(fine: &Lab) -> Outcome {
    let sigmas = [0.05, 0.1, 0.2, 0.4];
    let t = fine.terms(0.0).unwrap();
    let (rows, failed) = sigma_sweep(&t, &sigmas, 1e-12);
    if let Some(s) = failed {
        return outcome(false, format!("fixed point failed at sigma = {s}"));
    }
    let xs: Vec<f64> = rows.iter().map(|(_, p)| p.sigma.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|(_, p)| (p.h1_shift + p.speed_shift).ln()).collect();
    let (slope, _, _) = linear_fit(&xs, &ys);
    outcome((slope - 2.0).abs() <= 0.1, format!("log-log slope {slope:.4} (2 ± 0.1)"))
}

fn c5_zero_projection(fine: &Lab) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    for shape in [NoiseShape::LogisticNagumo, NoiseShape::QuadraticNagumo] {
        let model = fine.model.with_noise(shape).unwrap();
        let l = Lab::from_wave(model, fine.wave.clone()).unwrap();
        let t = l.terms(0.1).unwrap();
        let mw = solve_modified_wave(&t, 1e-12).unwrap();
        let r_max = (1.0_f64).min(1.0 / (4.0 * norm_h1(&t.psi)));
        for _ in 0..50 {
            let raw = random_bumps(*t.spec(), &mut rng, 3);
            let v = raw.scaled(rng.random_range(0.0..=r_max) / norm_l2(&raw));
            let scale = 1.0 + norm_h1(&v);
            let r = inner_product_l2(&t.rbar(&v, &mw.phi_sigma, mw.c_sigma).unwrap(), &t.psi).unwrap();
            let s = inner_product_l2(&t.sbar(&v, &mw.phi_sigma).unwrap(), &t.psi).unwrap();
            worst = worst.max(r.abs() / scale).max(s.abs() / scale);
        }
    }
    outcome(
        worst <= 1e-8,
        format!("100 random v, max |<R̄(v),ψ>|, |<S̄(v),ψ>| / (1 + ‖v‖_H1) = {worst:.1e} (<= 1e-8)"),
    )
}

fn c6_phase_diffusion(mc: &Lab) -> Outcome {
    let t0 = Instant::now();
    let t = mc.terms(0.05).unwrap();
    let mw = solve_modified_wave(&t, 1e-12).unwrap();
    let cfg = SimConfig { dt: 0.01, t_end: 10.0, stride: 1000, seed: 600_000, ..SimConfig::default() };
    let sim = Simulator::new(&t, &mw, cfg).unwrap();
    let init = sim.prepare(&mw.phi_sigma, &mw).unwrap();
    let r = phase_diffusion_test(&sim, &init, 2000, Execution::Parallel).unwrap();
    let row = r.rows.last().unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = row.z_var.abs() <= 3.0
        && row.z_mean.abs() <= 3.0
        && r.frac_small_v >= 0.99
        && r.n_blowups == 0
        && secs < 600.0;
    outcome(
        pass,
        format!(
            "var {:.5} vs σ²b²T {:.5} (z {:+.2}), mean {:+.1e} (z {:+.2}), ‖V(T)‖ <= 1e-2 on {:.1}% of paths, {secs:.0} s",
            row.var,
            row.predicted_var,
            row.z_var,
            row.mean,
            row.z_mean,
            100.0 * r.frac_small_v
        ),
    )
}

fn c7_stability_shape(general: &Lab) -> Outcome {
    let sigmas = [0.1, 0.05, 0.025, 0.0];
    let mut ps = Vec::new();
    for &s in &sigmas {
        let t = general.terms(s).unwrap();
        let mw = solve_modified_wave(&t, 1e-12).unwrap();
        let cfg = SimConfig { dt: 0.01, t_end: 5.0, eta: 1e-4, seed: 700_000, ..SimConfig::default() };
        let sim = Simulator::new(&t, &mw, cfg).unwrap();
        let init = sim.prepare(&mw.phi_sigma, &mw).unwrap();
        let (_, st) = run_ensemble(&sim, &init, 400, Execution::Parallel).unwrap();
        ps.push(st.p_hat);
    }
    let monotone = ps.windows(2).all(|w| w[1] <= w[0]);
    let table: Vec<String> = sigmas.iter().zip(&ps).map(|(s, p)| format!("{s}:{p:.4}")).collect();
    outcome(
        monotone && ps[3] == 0.0,
        format!("p̂ by sigma (T = 5, η = 1e-4, 400 paths) {}; p̂(0) = {}", table.join(" "), ps[3]),
    )
}

fn c8_speed(mc: &Lab, general: &Lab) -> (Outcome, String) {
    let t0 = Instant::now();
    let t = mc.terms(0.05).unwrap();
    let mw = solve_modified_wave(&t, 1e-12).unwrap();
    let special = speed_correction(&t, &mw, mc.spectral.beta_gap, SpeedOptions::default()).unwrap();

    let t = general.terms(0.05).unwrap();
    let mw = solve_modified_wave(&t, 1e-12).unwrap();
    let sc = speed_correction(&t, &mw, general.spectral.beta_gap, SpeedOptions::default()).unwrap();
    let cfg = SimConfig { dt: 0.01, t_end: 50.0, seed: 800_000, ..SimConfig::default() };
    let sim = Simulator::new(&t, &mw, cfg).unwrap();
    let init = sim.prepare(&mw.phi_sigma, &mw).unwrap();
    let (_, st) = run_ensemble(&sim, &init, 5000, Execution::Parallel).unwrap();
    let z = (st.mean_speed - sc.c_inf_2) / st.se_speed;
    let secs = t0.elapsed().as_secs_f64();
    let pass = special.c_inf_2 == special.c_sigma && z.abs() <= 3.0 && st.n_blowups == 0 && secs < 1800.0;
    let line = format!(
        "special case c_inf_2 - c_sigma = {:e}; general g: mean Γ(T)/T {:.7} ± {:.1e}, c_inf_2 {:.7} (z {:+.2}), {secs:.0} s",
        special.c_inf_2 - special.c_sigma,
        st.mean_speed,
        st.se_speed,
        sc.c_inf_2,
        z
    );
    let zc = |c: f64| (st.cv_mean_speed - c) / st.cv_se_speed;
    let info = format!(
        "control-variate mean {:.8} ± {:.1e}: z vs c_sigma {:+.1}, vs c_inf_2 {:+.1}, vs half-weight {:+.1}",
        st.cv_mean_speed,
        st.cv_se_speed,
        zc(sc.c_sigma),
        zc(sc.c_inf_2),
        zc(sc.c_inf_2_half)
    );
    (outcome(pass, line), info)
}

fn c9_time_transform(general: &Lab) -> Outcome {
    let t = general.terms(0.3).unwrap();
    let mw = solve_modified_wave(&t, 1e-12).unwrap();
    let cfg = SimConfig { dt: 0.01, t_end: 5.0, stride: 1, seed: 900_000, ..SimConfig::default() };
    let sim = Simulator::new(&t, &mw, cfg).unwrap();
    let init = sim.prepare(&mw.phi_sigma, &mw).unwrap();
    let mut violations = 0;
    let mut samples = 0;
    let mut max_ratio = 1.0_f64;
    for id in 0..100 {
        let p = sim.run_path(&init, id).unwrap();
        violations += count_time_transform_violations(&p.samples, sim.kappa_bound());
        samples += p.samples.len();
        for s in p.samples.iter().filter(|s| s.t > 0.0) {
            max_ratio = max_ratio.max(s.tau_phi / s.t);
        }
    }
    outcome(
        violations == 0,
        format!(
            "{violations} violations over {samples} samples; max τ/t = {max_ratio:.6} <= K_κ = {:.6}",
            sim.kappa_bound()
        ),
    )
}

fn c10_semigroup(fine: &Lab) -> Outcome {
    let op = linearize(&fine.model, &fine.wave);
    let probe = probe_semigroup(&op, &fine.spectral, &fine.wave, 20, 10).unwrap();
    let mut drift = 0.0_f64;
    for t in [1.0, 2.0, 3.0, 4.0, 5.0] {
        let s = propagate_linear(&op, &fine.wave.dphi0, t, 0.01).unwrap();
        drift = drift.max(s.sub(&fine.wave.dphi0).unwrap().sup_norm());
    }
    let beta = fine.spectral.beta_gap;
    outcome(
        probe.decay_rate >= 0.8 * beta && drift <= 1e-4,
        format!(
            "decay rate {:.4} >= 0.8β = {:.4}; sup |S(t)Φ0' - Φ0'| for t <= 5: {drift:.1e} (<= 1e-4)",
            probe.decay_rate,
            0.8 * beta
        ),
    )
}

fn c11_reproducible(general: &Lab) -> Outcome {
    let t = general.terms(0.1).unwrap();
    let mw = solve_modified_wave(&t, 1e-12).unwrap();
    let cfg = SimConfig { dt: 0.01, t_end: 2.0, eta: 1e-4, seed: 42, ..SimConfig::default() };
    let sim = Simulator::new(&t, &mw, cfg).unwrap();
    let init = sim.prepare(&mw.phi_sigma, &mw).unwrap();
    let run = |exec| {
        let (rec, st) = run_ensemble(&sim, &init, 100, exec).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&rec, &mut buf).unwrap();
        buf.extend(serde_json::to_vec(&st).unwrap());
        buf
    };
    let a = run(Execution::Parallel);
    let b = run(Execution::Parallel);
    let c = run(Execution::Sequential);
    outcome(
        a == b && a == c,
        format!("two runs of 100 paths (seed 42): {} bytes, identical: {}, sequential identical: {}", a.len(), a == b, a == c),
    )
}

fn main() {
    let start = Instant::now();
    let fine = lab(NoiseShape::LogisticNagumo, 40.0, 0.02);
    let mc = lab(NoiseShape::LogisticNagumo, 25.0, 0.1);
    let general = lab(NoiseShape::QuadraticNagumo, 20.0, 0.1);

    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!("criterion {n:>2} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "deterministic wave", c1_wave());
    report(2, "spectral hypothesis", c2_spectrum(&fine));
    report(3, "closed-form modified wave", c3_closed_form(&fine));
    report(4, "sigma-squared law", c4_sigma_squared(&fine));
    report(5, "zero projections", c5_zero_projection(&fine));
    report(6, "phase diffusion", c6_phase_diffusion(&mc));
    report(7, "stability probability shape", c7_stability_shape(&general));
    let (o8, info8) = c8_speed(&mc, &general);
    report(8, "speed correction", o8);
    println!("             note: {info8}");
    report(9, "time-transform bounds", c9_time_transform(&general));
    report(10, "semigroup decay", c10_semigroup(&fine));
    report(11, "reproducibility", c11_reproducible(&general));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
