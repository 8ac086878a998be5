//! Protocol driving: CCCV step programs, PID constant-voltage control,
//! exogenous temperature signals, and the Arrhenius parameter law.

use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, PidConfig, RunConfig, SolverConfig, StepConfig};
use crate::constants::GAS_CONSTANT;
use crate::error::{Error, Result};
use crate::params::{Electrode, GroupedParameterSet};

/// Arrhenius law `Phi(T) = Phi_ref exp(E/R_g (1/T_ref - 1/T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrheniusLaw {
    pub ref_value: f64,
    /// Activation energy [J/mol]. Grouped time constants store a negative
    /// value (the sign flip of tau ~ 1/D), so they shrink as T rises.
    pub activation_energy: f64,
    pub t_ref: f64,
}

/// Evaluate the Arrhenius law at temperature T [K].
pub fn arrhenius(law: &ArrheniusLaw, temp_k: f64) -> f64 {
    debug_assert!(temp_k > 0.0 && law.t_ref > 0.0);
    law.ref_value * ((law.activation_energy / GAS_CONSTANT) * (1.0 / law.t_ref - 1.0 / temp_k)).exp()
}

impl GroupedParameterSet {
    /// Solid diffusion time constant at temperature T.
    pub fn tau_d_s_at(&self, e: Electrode, temp_k: f64) -> f64 {
        let g = self.electrode(e);
        arrhenius(
            &ArrheniusLaw { ref_value: g.tau_d_s, activation_energy: g.e_tau_s, t_ref: self.t_ref },
            temp_k,
        )
    }

    /// Reaction time scale at temperature T.
    pub fn tau_k_at(&self, e: Electrode, temp_k: f64) -> f64 {
        let g = self.electrode(e);
        arrhenius(
            &ArrheniusLaw { ref_value: g.tau_k, activation_energy: g.e_tau_k, t_ref: self.t_ref },
            temp_k,
        )
    }
}

/// PID gains of the constant-voltage controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    /// Proportional gain [A/V].
    pub k_p: f64,
    /// Integral gain [A/(V s)].
    pub k_i: f64,
    /// Derivative gain [A s/V].
    pub k_d: f64,
    /// Anti-windup clamp on the integral term [A].
    pub windup_limit: f64,
}

impl PidGains {
    pub fn from_config(cfg: &PidConfig, i_ref: f64) -> Result<Self> {
        let gains = PidGains {
            k_p: cfg.k_p_per_iref * i_ref,
            k_i: cfg.k_i_per_iref * i_ref,
            k_d: cfg.k_d_per_iref * i_ref,
            windup_limit: cfg.windup_iref * i_ref,
        };
        gains.validate()?;
        Ok(gains)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k_p", self.k_p), ("k_i", self.k_i), ("k_d", self.k_d)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid("k_p", format!("PID gain {name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Controller memory between samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

/// Discrete PID update: trapezoidal integral with anti-windup clamping and a
/// backward-difference derivative, on the error `e = v_ref - v`. Returns the
/// controller output `K_p e + K_i int(e) + K_d de/dt` in amperes.
pub fn pid_current(gains: &PidGains, v_meas: f64, v_ref: f64, state: &mut PidState, dt: f64) -> f64 {
    let e = v_ref - v_meas;
    let prev = state.prev_error.unwrap_or(e);
    state.integral += 0.5 * dt * (e + prev);
    if gains.k_i > 0.0 {
        let cap = gains.windup_limit / gains.k_i;
        state.integral = state.integral.clamp(-cap, cap);
    }
    let derivative = if state.prev_error.is_some() { (e - prev) / dt } else { 0.0 };
    state.prev_error = Some(e);
    gains.k_p * e + gains.k_i * state.integral + gains.k_d * derivative
}

/// Exogenous temperature input.
#[derive(Debug, Clone, PartialEq)]
pub enum TempSignal {
    Constant(f64),
    /// Piecewise-linear interpolation of (t, T) samples; clamped beyond the
    /// table ends.
    Table(Vec<(f64, f64)>),
}

impl TempSignal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TempSignal::Constant(v) => *v,
            TempSignal::Table(pts) => {
                if pts.is_empty() {
                    return 298.15;
                }
                if t <= pts[0].0 {
                    return pts[0].1;
                }
                if t >= pts[pts.len() - 1].0 {
                    return pts[pts.len() - 1].1;
                }
                let idx = pts.partition_point(|p| p.0 <= t);
                let (t0, v0) = pts[idx - 1];
                let (t1, v1) = pts[idx];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }
}

/// Why a model flagged the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffEvent {
    /// Surface stoichiometry left the guarded (0, 1) window.
    StoichiometryRail { electrode: Electrode, stoichiometry: f64 },
    /// The normalized exchange current hit its floor.
    ExchangeCurrentFloor { electrode: Electrode },
    /// The electrolyte concentration collapsed to zero somewhere.
    ElectrolyteDepleted { c_min: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepOutput {
    pub cutoff: Option<CutoffEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageOutput {
    pub v: f64,
    pub cutoff: Option<CutoffEvent>,
}

/// A forward cell model the protocol driver can advance.
pub trait CellModel {
    /// Simulation clock [s].
    fn time(&self) -> f64;
    /// Advance by dt under the given applied current (positive = discharge)
    /// and surface temperature.
    fn step(&mut self, current_a: f64, dt: f64, temp_k: f64) -> Result<StepOutput>;
    /// Terminal voltage for the current state under the given applied
    /// current.
    fn voltage(&self, current_a: f64, temp_k: f64) -> Result<VoltageOutput>;
}

/// Control mode of one protocol step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepKind {
    /// Constant current [A]; rest is CC at 0 A.
    CurrentControl { current_a: f64 },
    /// Constant voltage held by the PID controller.
    VoltageControl { v_target: f64 },
}

/// One executable protocol step with its termination conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolStep {
    pub kind: StepKind,
    pub time_limit_s: Option<f64>,
    /// CC only: stop when the voltage crosses this level (direction from the
    /// current sign).
    pub v_cutoff: Option<f64>,
    /// CV only: stop when the current magnitude decays below this [A].
    pub i_cutoff_a: Option<f64>,
}

impl ProtocolStep {
    pub fn validate(&self, v_min: f64, v_max: f64) -> Result<()> {
        match self.kind {
            StepKind::CurrentControl { .. } => {
                if self.time_limit_s.is_none() && self.v_cutoff.is_none() {
                    return Err(Error::config("CC step needs a time limit or a voltage cutoff"));
                }
            }
            StepKind::VoltageControl { v_target } => {
                if self.time_limit_s.is_none() && self.i_cutoff_a.is_none() {
                    return Err(Error::config("CV step needs a time limit or a current cutoff"));
                }
                if !(v_min..=v_max).contains(&v_target) {
                    return Err(Error::config(format!(
                        "CV target {v_target} V outside the [{v_min}, {v_max}] window"
                    )));
                }
            }
        }
        if let Some(t) = self.time_limit_s {
            if !(t > 0.0) {
                return Err(Error::config(format!("non-positive step time limit {t}")));
            }
        }
        Ok(())
    }

    pub fn from_config(cfg: &StepConfig, i_ref: f64, default_cv_cutoff_c: f64) -> Self {
        match cfg {
            StepConfig::Cc { rate_c, time_limit_s, v_cutoff } => ProtocolStep {
                kind: StepKind::CurrentControl { current_a: rate_c * i_ref },
                time_limit_s: *time_limit_s,
                v_cutoff: *v_cutoff,
                i_cutoff_a: None,
            },
            StepConfig::Cv { v_target, time_limit_s, i_cutoff_c } => ProtocolStep {
                kind: StepKind::VoltageControl { v_target: *v_target },
                time_limit_s: *time_limit_s,
                v_cutoff: None,
                i_cutoff_a: Some(i_cutoff_c.unwrap_or(default_cv_cutoff_c) * i_ref),
            },
            StepConfig::Rest { time_limit_s } => ProtocolStep {
                kind: StepKind::CurrentControl { current_a: 0.0 },
                time_limit_s: Some(*time_limit_s),
                v_cutoff: None,
                i_cutoff_a: None,
            },
        }
    }
}

/// Phase tag of a trace record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseFlag {
    Cc,
    Cv,
    Rest,
    /// The step ended on a model cutoff event.
    Cutoff,
}

impl std::fmt::Display for PhaseFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PhaseFlag::Cc => "cc",
            PhaseFlag::Cv => "cv",
            PhaseFlag::Rest => "rest",
            PhaseFlag::Cutoff => "cutoff",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub current_a: f64,
    pub voltage_v: f64,
    pub temp_k: f64,
    pub flag: PhaseFlag,
}

/// Simulation output: one record per accepted step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Linear interpolation of the voltage at an arbitrary time inside the
    /// trace span.
    pub fn voltage_at(&self, t: f64) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        let first = &self.records[0];
        let last = &self.records[self.records.len() - 1];
        if t <= first.t {
            return Some(first.voltage_v);
        }
        if t >= last.t {
            return Some(last.voltage_v);
        }
        let idx = self.records.partition_point(|r| r.t <= t);
        let a = &self.records[idx - 1];
        let b = &self.records[idx];
        Some(a.voltage_v + (b.voltage_v - a.voltage_v) * (t - a.t) / (b.t - a.t))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time_s,current_A,voltage_V,temperature_K,flag")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{},{}", r.t, r.current_a, r.voltage_v, r.temp_k, r.flag)?;
        }
        Ok(())
    }
}

/// Driver settings shared by every simulated step.
#[derive(Debug, Clone)]
pub struct Driver {
    pub solver: SolverConfig,
    pub gains: PidGains,
    /// Reference current [A] used by the dt rate rule.
    pub i_ref: f64,
    pub temp: TempSignal,
    /// Terminate a step on stoichiometry-rail events. Protocol runs stop
    /// (the physical cell is empty/full); objective replays keep going so a
    /// bad parameter trial still produces a finite, informative trace.
    pub stop_on_rail: bool,
}

impl Driver {
    pub fn from_config(cfg: &RunConfig, temp: TempSignal) -> Result<Self> {
        Ok(Driver {
            solver: cfg.solver,
            gains: PidGains::from_config(&cfg.pid, cfg.cell.i_ref)?,
            i_ref: cfg.cell.i_ref,
            temp,
            stop_on_rail: true,
        })
    }

    fn dt_for(&self, current_a: f64, is_cv: bool) -> f64 {
        if is_cv || current_a.abs() > self.solver.dt_rate_threshold_c * self.i_ref {
            self.solver.dt_high_s
        } else {
            self.solver.dt_low_s
        }
    }

    /// Simulate each step to its termination; emits one record per accepted
    /// model step. Cutoff events flag the record and terminate the step.
    pub fn run_protocol(&self, model: &mut dyn CellModel, steps: &[ProtocolStep]) -> Result<Trace> {
        if steps.is_empty() {
            return Err(Error::config("protocol has no steps"));
        }
        let mut trace = Trace::default();
        // Initial record: the state as seen by the first step's command.
        let t0 = model.time();
        let first_current = match steps[0].kind {
            StepKind::CurrentControl { current_a } => current_a,
            StepKind::VoltageControl { .. } => 0.0,
        };
        let temp0 = self.temp.eval(t0);
        let v0 = model.voltage(first_current, temp0)?;
        let flag0 = initial_flag(&steps[0]);
        trace.records.push(TraceRecord {
            t: t0,
            current_a: first_current,
            voltage_v: v0.v,
            temp_k: temp0,
            flag: flag0,
        });
        let mut last_v = v0.v;
        let mut last_current = first_current;

        for step in steps {
            let start = model.time();
            let mut pid = PidState::default();
            if let StepKind::VoltageControl { .. } = step.kind {
                // Bumpless transfer: seed the integral so the controller
                // starts from the previous applied current.
                if self.gains.k_i > 0.0 {
                    pid.integral = (-last_current / self.gains.k_i)
                        .clamp(-self.gains.windup_limit / self.gains.k_i, self.gains.windup_limit / self.gains.k_i);
                }
            }
            let mut steps_taken = 0usize;
            loop {
                let elapsed = model.time() - start;
                if let Some(limit) = step.time_limit_s {
                    if elapsed >= limit - 1e-9 {
                        break;
                    }
                }
                let (current, flag) = match step.kind {
                    StepKind::CurrentControl { current_a } => {
                        let flag = if current_a == 0.0 { PhaseFlag::Rest } else { PhaseFlag::Cc };
                        (current_a, flag)
                    }
                    StepKind::VoltageControl { v_target } => {
                        let dt = self.dt_for(last_current, true);
                        let u = pid_current(&self.gains, last_v, v_target, &mut pid, dt);
                        // Positive current discharges, so raising the voltage
                        // needs the negated controller output.
                        (-u, PhaseFlag::Cv)
                    }
                };
                let mut dt = self.dt_for(current, matches!(step.kind, StepKind::VoltageControl { .. }));
                if let Some(limit) = step.time_limit_s {
                    dt = dt.min(limit - elapsed);
                }
                if dt <= 0.0 {
                    break;
                }
                // Evaluated at the step end, which is also the record time:
                // a replay driven by recorded (t, T) samples applies exactly
                // the recorded temperatures.
                let temp = self.temp.eval(model.time() + dt);

                let out = model.step(current, dt, temp)?;
                let vout = model.voltage(current, temp)?;
                let cutoff = out.cutoff.or(vout.cutoff);
                let flag = if cutoff.is_some() { PhaseFlag::Cutoff } else { flag };
                trace.records.push(TraceRecord {
                    t: model.time(),
                    current_a: current,
                    voltage_v: vout.v,
                    temp_k: temp,
                    flag,
                });
                last_v = vout.v;
                last_current = current;
                steps_taken += 1;

                match cutoff {
                    Some(CutoffEvent::StoichiometryRail { .. }) | Some(CutoffEvent::ExchangeCurrentFloor { .. })
                        if !self.stop_on_rail => {}
                    Some(ev) => {
                        log::debug!("step terminated by cutoff event {ev:?}");
                        break;
                    }
                    None => {}
                }
                match step.kind {
                    StepKind::CurrentControl { current_a } => {
                        if let Some(vc) = step.v_cutoff {
                            if (current_a > 0.0 && vout.v <= vc) || (current_a < 0.0 && vout.v >= vc) {
                                break;
                            }
                        }
                    }
                    StepKind::VoltageControl { .. } => {
                        if let Some(ic) = step.i_cutoff_a {
                            // Let the controller leave the bumpless-transfer
                            // transient before honoring the cutoff.
                            if steps_taken > 5 && current.abs() <= ic {
                                break;
                            }
                        }
                    }
                }
            }
        }
        Ok(trace)
    }
}

fn initial_flag(step: &ProtocolStep) -> PhaseFlag {
    match step.kind {
        StepKind::CurrentControl { current_a } if current_a == 0.0 => PhaseFlag::Rest,
        StepKind::CurrentControl { .. } => PhaseFlag::Cc,
        StepKind::VoltageControl { .. } => PhaseFlag::Cv,
    }
}

/// Build a forward model of the requested kind from a grouped set and the
/// run configuration.
pub fn build_model(kind: ModelKind, grouped: &GroupedParameterSet, cfg: &RunConfig) -> Result<Box<dyn CellModel>> {
    let (ocp_neg, ocp_pos) = cfg.ocp_curves()?;
    let i_ref = cfg.cell.i_ref;
    let init = cfg.initial;
    Ok(match kind {
        ModelKind::SpmEq => Box::new(crate::spm::SpmEq::new(
            *grouped,
            ocp_neg,
            ocp_pos,
            i_ref,
            init.stoich_neg,
            init.stoich_pos,
        )),
        ModelKind::Spm => Box::new(crate::spm::Spm::new(
            *grouped,
            ocp_neg,
            ocp_pos,
            i_ref,
            cfg.grid.n_r,
            false,
            init.stoich_neg,
            init.stoich_pos,
        )),
        ModelKind::P2d | ModelKind::P2dt => {
            let grid = crate::p2d::P2dGrid::from_config(&cfg.grid)?;
            let thermal = kind == ModelKind::P2dt;
            Box::new(crate::p2d::P2d::new(
                *grouped,
                ocp_neg,
                ocp_pos,
                i_ref,
                grid,
                thermal,
                cfg.solver,
                init.stoich_neg,
                init.stoich_pos,
            ))
        }
    })
}

/// Executable steps for the configured protocol.
pub fn steps_from_config(cfg: &RunConfig) -> Result<Vec<ProtocolStep>> {
    let steps: Vec<ProtocolStep> = cfg
        .protocol
        .steps
        .iter()
        .map(|s| ProtocolStep::from_config(s, cfg.cell.i_ref, cfg.synth.cv_cutoff_c))
        .collect();
    for s in &steps {
        s.validate(cfg.limits.v_min, cfg.limits.v_max)?;
    }
    Ok(steps)
}
