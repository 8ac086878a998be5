//! Scenario objectives: active-parameter subsets, episode replay, and the
//! weighted least-squares voltage residuals.
//!
//! The objective consumes grouped parameters only, so it is invariant by
//! construction under any physical-set scaling transform: distinct physical
//! sets with the same grouped image produce the same residuals.

use crate::config::{ModelKind, RunConfig};
use crate::error::{Error, Result};
use crate::fit::data::{DataSet, Episode, ScenarioKind, SegmentKind};
use crate::fit::optimize::Evaluation;
use crate::params::{Electrode, GroupedParameterSet, Region};
use crate::protocol::{build_model, Driver, ProtocolStep, StepKind, TempSignal, Trace};

/// Penalty objective value [V^2] when a simulation cannot cover its segment.
pub const CUTOFF_PENALTY: f64 = 1e6;

/// One fitted entry of the grouped set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveParam {
    TauCs(Electrode),
    TauDs(Electrode),
    TauK(Electrode),
    FilmDrop,
    /// Ionic conductance shared across the regions, scaled by the nominal
    /// region ratios; the value is the negative-electrode kappa.
    KappaShared,
    /// Electrolyte diffusion time constant shared the same way.
    TauDeShared,
    /// Physical activation energy of the solid diffusion time constant
    /// (positive; the grouped law stores the negated value).
    ActivationTauDs(Electrode),
    /// Physical activation energy of the reaction time scale.
    ActivationTauK(Electrode),
}

impl ActiveParam {
    pub fn name(&self) -> String {
        let tag = |e: &Electrode| match e {
            Electrode::Neg => "neg",
            Electrode::Pos => "pos",
        };
        match self {
            ActiveParam::TauCs(e) => format!("tau_c_s_{}", tag(e)),
            ActiveParam::TauDs(e) => format!("tau_d_s_{}", tag(e)),
            ActiveParam::TauK(e) => format!("tau_k_{}", tag(e)),
            ActiveParam::FilmDrop => "r_f".into(),
            ActiveParam::KappaShared => "kappa".into(),
            ActiveParam::TauDeShared => "tau_d_e".into(),
            ActiveParam::ActivationTauDs(e) => format!("e_tau_s_{}", tag(e)),
            ActiveParam::ActivationTauK(e) => format!("e_tau_k_{}", tag(e)),
        }
    }

    pub fn extract(&self, g: &GroupedParameterSet) -> f64 {
        match self {
            ActiveParam::TauCs(e) => g.electrode(*e).tau_c_s,
            ActiveParam::TauDs(e) => g.electrode(*e).tau_d_s,
            ActiveParam::TauK(e) => g.electrode(*e).tau_k,
            ActiveParam::FilmDrop => g.r_f,
            ActiveParam::KappaShared => g.elyte_neg.kappa,
            ActiveParam::TauDeShared => g.elyte_neg.tau_d_e,
            ActiveParam::ActivationTauDs(e) => -g.electrode(*e).e_tau_s,
            ActiveParam::ActivationTauK(e) => -g.electrode(*e).e_tau_k,
        }
    }

    /// Write the value into the grouped set; shared electrolyte parameters
    /// keep the nominal cross-region ratios.
    pub fn apply(&self, value: f64, g: &mut GroupedParameterSet, nominal: &GroupedParameterSet) {
        match self {
            ActiveParam::TauCs(e) => g.electrode_mut(*e).tau_c_s = value,
            ActiveParam::TauDs(e) => g.electrode_mut(*e).tau_d_s = value,
            ActiveParam::TauK(e) => g.electrode_mut(*e).tau_k = value,
            ActiveParam::FilmDrop => g.r_f = value,
            ActiveParam::KappaShared => {
                let base = nominal.elyte_neg.kappa;
                for r in Region::ALL {
                    g.region_mut(r).kappa = value * nominal.region(r).kappa / base;
                }
            }
            ActiveParam::TauDeShared => {
                let base = nominal.elyte_neg.tau_d_e;
                for r in Region::ALL {
                    g.region_mut(r).tau_d_e = value * nominal.region(r).tau_d_e / base;
                }
            }
            ActiveParam::ActivationTauDs(e) => g.electrode_mut(*e).e_tau_s = -value,
            ActiveParam::ActivationTauK(e) => g.electrode_mut(*e).e_tau_k = -value,
        }
    }
}

/// The fitted subset of each stage, in the staged-methodology order.
pub fn stage_subset(kind: ScenarioKind) -> Vec<ActiveParam> {
    use ActiveParam as P;
    use Electrode::{Neg, Pos};
    match kind {
        ScenarioKind::Eq => vec![P::TauCs(Pos), P::TauCs(Neg)],
        ScenarioKind::S => vec![P::TauDs(Pos), P::TauDs(Neg), P::TauK(Pos), P::TauK(Neg), P::FilmDrop],
        ScenarioKind::E => vec![P::KappaShared, P::TauDeShared],
        ScenarioKind::T => {
            vec![P::ActivationTauDs(Pos), P::ActivationTauDs(Neg), P::ActivationTauK(Pos), P::ActivationTauK(Neg)]
        }
    }
}

/// Fitted subset of the warm-started low-current P2D refinement: the SPM
/// parameters (stages 1 and 2 together).
pub fn refinement_subset() -> Vec<ActiveParam> {
    let mut v = stage_subset(ScenarioKind::Eq);
    v.extend(stage_subset(ScenarioKind::S));
    v
}

pub fn extract_all(params: &[ActiveParam], g: &GroupedParameterSet) -> Vec<f64> {
    params.iter().map(|p| p.extract(g)).collect()
}

pub fn apply_all(params: &[ActiveParam], values: &[f64], g: &mut GroupedParameterSet, nominal: &GroupedParameterSet) {
    for (p, &v) in params.iter().zip(values) {
        p.apply(v, g, nominal);
    }
}

/// Reconstruct the executable step list of one episode from its segments.
/// Durations come from the data timestamps; CV targets from the voltage
/// window by current direction.
pub fn episode_steps(episode: &Episode, data: &DataSet, cfg: &RunConfig) -> Vec<ProtocolStep> {
    let t = |k: usize| data.samples[k].t;
    let t0 = t(episode.segments[0].start);
    let mut steps = Vec::with_capacity(episode.segments.len());
    for (i, seg) in episode.segments.iter().enumerate() {
        let seg_start = if i == 0 { t0 } else { t(seg.start - 1) };
        let duration = t(seg.end - 1) - seg_start;
        if duration <= 0.0 {
            continue;
        }
        let kind = match seg.kind {
            SegmentKind::Cc => StepKind::CurrentControl { current_a: seg.current_a },
            SegmentKind::Rest => StepKind::CurrentControl { current_a: 0.0 },
            SegmentKind::Cv => StepKind::VoltageControl {
                v_target: if seg.current_a > 0.0 { cfg.limits.v_min } else { cfg.limits.v_max },
            },
        };
        steps.push(ProtocolStep { kind, time_limit_s: Some(duration), v_cutoff: None, i_cutoff_a: None });
    }
    steps
}

/// Replay one episode with the given grouped parameters and model kind; the
/// returned trace is shifted to the data clock. The temperature input is the
/// episode's measured (t, T) samples.
pub fn replay_episode(
    episode: &Episode,
    data: &DataSet,
    cfg: &RunConfig,
    grouped: &GroupedParameterSet,
    model: ModelKind,
) -> Result<Trace> {
    let first = episode.segments[0].start;
    let last = episode.segments[episode.segments.len() - 1].end;
    let t0 = data.samples[first].t;
    let temp_table: Vec<(f64, f64)> =
        data.samples[first..last].iter().map(|s| (s.t - t0, s.temp_k)).collect();
    let steps = episode_steps(episode, data, cfg);
    let mut model = build_model(model, grouped, cfg)?;
    let mut driver = Driver::from_config(cfg, TempSignal::Table(temp_table))?;
    driver.stop_on_rail = false;
    let mut trace = driver.run_protocol(model.as_mut(), &steps)?;
    for r in &mut trace.records {
        r.t += t0;
    }
    Ok(trace)
}

/// Weighted voltage residuals of one scenario over all its episodes, or a
/// penalty when a simulation cannot cover its data span.
pub fn scenario_residuals(
    episodes: &[Episode],
    data: &DataSet,
    cfg: &RunConfig,
    grouped: &GroupedParameterSet,
    model: ModelKind,
) -> Evaluation {
    let per_segment = cfg.fit.weights == "per_segment";
    let mut out = Vec::new();
    for ep in episodes {
        let trace = match replay_episode(ep, data, cfg, grouped, model) {
            Ok(t) => t,
            Err(_) => return Evaluation::Penalty(CUTOFF_PENALTY),
        };
        let last_seg = &ep.segments[ep.segments.len() - 1];
        let span_end = data.samples[last_seg.end - 1].t;
        let trace_end = trace.records[trace.records.len() - 1].t;
        if trace_end < span_end - cfg.solver.dt_low_s - 1e-9 {
            // Cutoff inside the segment: the model cannot explain the data
            // at this parameter point.
            return Evaluation::Penalty(CUTOFF_PENALTY);
        }
        for seg in &ep.segments {
            let w = if per_segment { 1.0 / (seg.end - seg.start) as f64 } else { 1.0 };
            let sw = w.sqrt();
            for s in &data.samples[seg.start..seg.end] {
                let vm = trace.voltage_at(s.t).expect("trace non-empty");
                out.push(sw * (vm - s.voltage_v));
            }
        }
    }
    Evaluation::Residuals(out)
}

/// The weighted sum-of-squares objective for a scenario at the given grouped
/// parameters.
pub fn objective(
    episodes: &[Episode],
    data: &DataSet,
    cfg: &RunConfig,
    grouped: &GroupedParameterSet,
    model: ModelKind,
) -> f64 {
    match scenario_residuals(episodes, data, cfg, grouped, model) {
        Evaluation::Residuals(r) => r.iter().map(|v| v * v).sum(),
        Evaluation::Penalty(p) => p,
    }
}

/// Unweighted RMSE [mV] of a model replay against the data over the given
/// episodes.
pub fn replay_rmse_mv(
    episodes: &[Episode],
    data: &DataSet,
    cfg: &RunConfig,
    grouped: &GroupedParameterSet,
    model: ModelKind,
) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for ep in episodes {
        let trace = replay_episode(ep, data, cfg, grouped, model)?;
        for seg in &ep.segments {
            for s in &data.samples[seg.start..seg.end] {
                let vm = trace.voltage_at(s.t).expect("trace non-empty");
                acc += (vm - s.voltage_v) * (vm - s.voltage_v);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::config("no samples in the episode selection"));
    }
    Ok((acc / n as f64).sqrt() * 1000.0)
}
