//! Synthetic cycling data: the stand-in for proprietary cell measurements.
//!
//! Each configured C-rate becomes an independent CCCV episode simulated with
//! the full thermal P2D model from the rested initial state, concatenated on
//! a global clock. The surface-temperature input is a first-order response
//! toward a rate-dependent target (rates at or below 1C stay at the
//! reference temperature), and seeded Gaussian noise is added to the
//! voltage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{cccv_cycle_steps, ModelKind, RunConfig};
use crate::error::Result;
use crate::fit::data::{DataSet, Sample};
use crate::params::GroupedParameterSet;
use crate::protocol::{build_model, steps_from_config, Driver, ProtocolStep, TempSignal, Trace};

/// Surface-temperature target for a commanded rate.
fn temp_target(cfg: &RunConfig, rate_abs: f64) -> f64 {
    cfg.cell.t_ref + cfg.synth.temp_rise_k * ((rate_abs - 1.0).max(0.0) / 2.0)
}

/// First-order surface-temperature table along a simulated trace.
fn temp_table_from(cfg: &RunConfig, trace: &Trace) -> Vec<(f64, f64)> {
    let tau = cfg.synth.temp_tau_s;
    let mut t_prev = trace.records[0].t;
    let mut temp = cfg.cell.t_ref;
    let mut table = Vec::with_capacity(trace.len());
    table.push((t_prev, temp));
    for r in &trace.records[1..] {
        let dt = r.t - t_prev;
        let target = temp_target(cfg, (r.current_a / cfg.cell.i_ref).abs());
        temp += dt / tau * (target - temp);
        table.push((r.t, temp));
        t_prev = r.t;
    }
    table
}

fn episode_steps(cfg: &RunConfig, rate: f64) -> Vec<ProtocolStep> {
    let steps = cccv_cycle_steps(rate, cfg.limits.v_min, cfg.limits.v_max, cfg.synth.cv_cutoff_c, cfg.synth.rest_s);
    steps
        .iter()
        .map(|s| ProtocolStep::from_config(s, cfg.cell.i_ref, cfg.synth.cv_cutoff_c))
        .collect()
}

/// Simulate one CCCV episode at the given rate with the thermal P2D model:
/// an isothermal pass shapes the temperature table, the thermal pass
/// produces the recorded trace.
pub fn simulate_episode(cfg: &RunConfig, grouped: &GroupedParameterSet, rate: f64) -> Result<(Trace, Vec<(f64, f64)>)> {
    let steps = episode_steps(cfg, rate);
    let needs_thermal_shaping = rate > 1.0 + 1e-12;
    let temp_table = if needs_thermal_shaping {
        let mut model = build_model(ModelKind::P2dt, grouped, cfg)?;
        let driver = Driver::from_config(cfg, TempSignal::Constant(cfg.cell.t_ref))?;
        let warm = driver.run_protocol(model.as_mut(), &steps)?;
        temp_table_from(cfg, &warm)
    } else {
        vec![(0.0, cfg.cell.t_ref)]
    };
    let mut model = build_model(ModelKind::P2dt, grouped, cfg)?;
    let driver = Driver::from_config(cfg, TempSignal::Table(temp_table.clone()))?;
    let trace = driver.run_protocol(model.as_mut(), &steps)?;
    Ok((trace, temp_table))
}

/// Generate the synthetic data set at the given grouped truth. Returns the
/// data plus header comments recording the generator settings.
pub fn generate_synthetic(cfg: &RunConfig, truth: &GroupedParameterSet) -> Result<(DataSet, Vec<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.synth.seed);
    let sigma_v = cfg.synth.noise_mv * 1e-3;
    let mut samples = Vec::new();
    let mut offset = 0.0;
    for &rate in &cfg.synth.rates_c {
        let (trace, _) = simulate_episode(cfg, truth, rate)?;
        for r in &trace.records {
            let noise = if sigma_v > 0.0 { sigma_v * standard_normal(&mut rng) } else { 0.0 };
            samples.push(Sample {
                t: offset + r.t,
                current_a: r.current_a,
                voltage_v: r.voltage_v + noise,
                temp_k: r.temp_k,
            });
        }
        // A dt gap keeps the global clock strictly increasing between
        // episodes.
        offset += trace.records[trace.records.len() - 1].t + cfg.solver.dt_low_s;
    }
    let data = DataSet::new(samples, cfg.cell.i_ref)?;
    let comments = vec![
        format!("seed = {}", cfg.synth.seed),
        format!("noise_mv = {}", cfg.synth.noise_mv),
        format!("rates_c = {:?}", cfg.synth.rates_c),
        format!("i_1c_A = {}", cfg.cell.i_ref),
    ];
    Ok((data, comments))
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; two uniform draws per sample keeps the stream independent
    // of any distribution-crate internals.
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

/// Simulate the protocol configured in the file (used by `simulate`).
pub fn simulate_configured_protocol(cfg: &RunConfig, grouped: &GroupedParameterSet, model: ModelKind) -> Result<Trace> {
    let steps = steps_from_config(cfg)?;
    let mut m = build_model(model, grouped, cfg)?;
    // The configured protocol runs isothermally unless a synthetic thermal
    // profile is requested via the P2DT model.
    let temp = if model == ModelKind::P2dt {
        let mut warm = build_model(ModelKind::P2dt, grouped, cfg)?;
        let driver = Driver::from_config(cfg, TempSignal::Constant(cfg.cell.t_ref))?;
        let warm_trace = driver.run_protocol(warm.as_mut(), &steps)?;
        TempSignal::Table(temp_table_from(cfg, &warm_trace))
    } else {
        TempSignal::Constant(cfg.cell.t_ref)
    };
    let driver = Driver::from_config(cfg, temp)?;
    driver.run_protocol(m.as_mut(), &steps)
}
