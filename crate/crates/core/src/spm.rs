//! Single-particle model (SPM) and its pseudo-equilibrium reduction (SPM_eq).
//!
//! The SPM represents each electrode by one representative particle with a
//! uniform pore-wall flux obtained by scaling the applied current; the
//! electrolyte is ignored (c_e = 1 in the exchange current). SPM_eq further
//! assumes arbitrarily fast diffusion and kinetics, leaving two averaged
//! concentrations whose voltage is the open-circuit difference.

use crate::constants::{EPS_STOICH, EXCHANGE_CURRENT_FLOOR};
use crate::error::{Error, Result};
use crate::ocp::OcpCurve;
use crate::params::{Electrode, GroupedParameterSet};
use crate::protocol::{CellModel, CutoffEvent, StepOutput, VoltageOutput};
use crate::radial::{RadialProfile, RadialWork};

/// Normalized exchange current `i0 = (3 tau_c_s / tau_k) sqrt(c_e c_ss (1 - c_ss))`,
/// with the surface stoichiometry clamped into the guarded domain and the
/// result floored at [`EXCHANGE_CURRENT_FLOOR`]. Returns the value and
/// whether the floor was hit.
pub(crate) fn exchange_current(tau_c_s: f64, tau_k: f64, c_e: f64, c_ss: f64) -> (f64, bool) {
    let c_ss = c_ss.clamp(EPS_STOICH, 1.0 - EPS_STOICH);
    let c_e = c_e.max(0.0);
    let i0 = 3.0 * tau_c_s / tau_k * (c_e * c_ss * (1.0 - c_ss)).sqrt();
    if i0 < EXCHANGE_CURRENT_FLOOR {
        (EXCHANGE_CURRENT_FLOOR, true)
    } else {
        (i0, false)
    }
}

/// Surface overpotential from the inverted symmetric Butler-Volmer relation:
/// `eta = beta_inv * asinh(j / (2 i0))`.
pub(crate) fn overpotential(beta_inv: f64, j_n: f64, i0: f64) -> f64 {
    beta_inv * (j_n / (2.0 * i0)).asinh()
}

fn rail_event(electrode: Electrode, c_ss: f64) -> Option<CutoffEvent> {
    (!(EPS_STOICH..=1.0 - EPS_STOICH).contains(&c_ss)).then_some(CutoffEvent::StoichiometryRail {
        electrode,
        stoichiometry: c_ss,
    })
}

/// Pseudo-equilibrium state: one averaged normalized concentration per
/// electrode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpmEqState {
    pub c_avg: [f64; 2],
    pub t: f64,
}

impl SpmEqState {
    pub fn new(stoich_neg: f64, stoich_pos: f64) -> Self {
        SpmEqState { c_avg: [stoich_neg, stoich_pos], t: 0.0 }
    }

    pub fn c(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Neg => self.c_avg[0],
            Electrode::Pos => self.c_avg[1],
        }
    }
}

/// Pseudo-equilibrium single-particle model.
#[derive(Debug, Clone)]
pub struct SpmEq {
    pub grouped: GroupedParameterSet,
    pub ocp_neg: OcpCurve,
    pub ocp_pos: OcpCurve,
    /// Reference current [A] defining the normalized applied current.
    pub i_ref: f64,
    pub state: SpmEqState,
}

impl SpmEq {
    pub fn new(
        grouped: GroupedParameterSet,
        ocp_neg: OcpCurve,
        ocp_pos: OcpCurve,
        i_ref: f64,
        stoich_neg: f64,
        stoich_pos: f64,
    ) -> Self {
        SpmEq { grouped, ocp_neg, ocp_pos, i_ref, state: SpmEqState::new(stoich_neg, stoich_pos) }
    }

    /// Explicit update of both electrode averages: the negative electrode
    /// depletes under positive (discharge) current, the positive fills. The
    /// step is exact for piecewise-constant current, and charge balance
    /// closes exactly: tau_c_s+ * dc+ = -tau_c_s- * dc-.
    pub fn step(&mut self, current_a: f64, dt: f64) -> StepOutput {
        debug_assert!(dt > 0.0);
        let i_norm = current_a / self.i_ref;
        self.state.c_avg[0] -= dt * i_norm / self.grouped.neg.tau_c_s;
        self.state.c_avg[1] += dt * i_norm / self.grouped.pos.tau_c_s;
        self.state.t += dt;

        let mut cutoff = None;
        for (idx, e) in Electrode::BOTH.iter().enumerate() {
            let c = self.state.c_avg[idx];
            if !(0.0..=1.0).contains(&c) {
                cutoff = Some(CutoffEvent::StoichiometryRail { electrode: *e, stoichiometry: c });
            }
        }
        StepOutput { cutoff }
    }

    /// Equilibrium voltage U+(c+) - U-(c-).
    pub fn voltage(&self) -> f64 {
        self.ocp_pos.eval(self.state.c(Electrode::Pos)) - self.ocp_neg.eval(self.state.c(Electrode::Neg))
    }
}

impl CellModel for SpmEq {
    fn time(&self) -> f64 {
        self.state.t
    }

    fn step(&mut self, current_a: f64, dt: f64, _temp_k: f64) -> Result<StepOutput> {
        Ok(SpmEq::step(self, current_a, dt))
    }

    fn voltage(&self, _current_a: f64, _temp_k: f64) -> Result<VoltageOutput> {
        Ok(VoltageOutput { v: SpmEq::voltage(self), cutoff: None })
    }
}

/// Single-particle state: one radial profile per electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct SpmState {
    pub particles: [RadialProfile; 2],
    pub t: f64,
}

impl SpmState {
    pub fn new(n_r: usize, stoich_neg: f64, stoich_pos: f64) -> Self {
        SpmState {
            particles: [RadialProfile::uniform(n_r, stoich_neg), RadialProfile::uniform(n_r, stoich_pos)],
            t: 0.0,
        }
    }
}

/// Single-particle model with solid diffusion and interfacial kinetics.
#[derive(Debug, Clone)]
pub struct Spm {
    pub grouped: GroupedParameterSet,
    pub ocp_neg: OcpCurve,
    pub ocp_pos: OcpCurve,
    pub i_ref: f64,
    /// Evaluate tau_d_s, tau_k and beta_inv at the driver temperature.
    pub thermal: bool,
    pub state: SpmState,
    work: RadialWork,
}

impl Spm {
    pub fn new(
        grouped: GroupedParameterSet,
        ocp_neg: OcpCurve,
        ocp_pos: OcpCurve,
        i_ref: f64,
        n_r: usize,
        thermal: bool,
        stoich_neg: f64,
        stoich_pos: f64,
    ) -> Self {
        Spm {
            grouped,
            ocp_neg,
            ocp_pos,
            i_ref,
            thermal,
            state: SpmState::new(n_r, stoich_neg, stoich_pos),
            work: RadialWork::default(),
        }
    }

    fn temp(&self, temp_k: f64) -> f64 {
        if self.thermal {
            temp_k
        } else {
            self.grouped.t_ref
        }
    }

    /// Uniform pore-wall flux: the whole applied current crosses each
    /// electrode, so j_n = ±i_norm.
    fn flux(&self, e: Electrode, i_norm: f64) -> f64 {
        e.flux_sign() * i_norm
    }

    fn surface_gradient(&self, e: Electrode, i_norm: f64, temp_k: f64) -> f64 {
        let g = self.grouped.electrode(e);
        let tau_d = self.grouped.tau_d_s_at(e, self.temp(temp_k));
        -tau_d / (3.0 * g.tau_c_s) * self.flux(e, i_norm)
    }

    /// Implicit (backward Euler) update of both radial diffusion equations.
    pub fn step(&mut self, current_a: f64, dt: f64, temp_k: f64) -> Result<StepOutput> {
        if !(dt > 0.0) {
            return Err(Error::numerical(format!("non-positive step size {dt}")));
        }
        let i_norm = current_a / self.i_ref;
        let temp = self.temp(temp_k);
        let mut cutoff = None;
        for (idx, e) in Electrode::BOTH.iter().enumerate() {
            let tau_d = self.grouped.tau_d_s_at(*e, temp);
            let g_surf = self.surface_gradient(*e, i_norm, temp_k);
            self.state.particles[idx].step_implicit(tau_d, dt, g_surf, &mut self.work);
            let c_ss = self.state.particles[idx].surface(g_surf);
            if let Some(ev) = rail_event(*e, c_ss) {
                cutoff = Some(ev);
            }
            // Tiny negative undershoots from the linear solve are clamped;
            // anything bigger is worth a warning.
            for c in &mut self.state.particles[idx].c {
                if *c < 0.0 || *c > 1.0 {
                    if *c < -1e-9 || *c > 1.0 + 1e-9 {
                        log::warn!("SPM {e:?} concentration {c} clamped to [0,1]");
                    }
                    *c = c.clamp(0.0, 1.0);
                }
            }
        }
        self.state.t += dt;
        Ok(StepOutput { cutoff })
    }

    /// Terminal voltage U+ - U- + eta+ - eta- - r_f * i_norm with the
    /// electrolyte concentration fixed at 1.
    pub fn voltage(&self, current_a: f64, temp_k: f64) -> Result<VoltageOutput> {
        let i_norm = current_a / self.i_ref;
        let temp = self.temp(temp_k);
        let beta_inv = self.grouped.beta_inv_at(temp);
        let mut v = -self.grouped.r_f * i_norm;
        let mut cutoff = None;
        for (idx, e) in Electrode::BOTH.iter().enumerate() {
            let grp = self.grouped.electrode(*e);
            let g_surf = self.surface_gradient(*e, i_norm, temp_k);
            let c_ss = self.state.particles[idx].surface(g_surf);
            if let Some(ev) = rail_event(*e, c_ss) {
                cutoff = Some(ev);
            }
            let tau_k = self.grouped.tau_k_at(*e, temp);
            let (i0, floored) = exchange_current(grp.tau_c_s, tau_k, 1.0, c_ss);
            if floored {
                cutoff = Some(CutoffEvent::ExchangeCurrentFloor { electrode: *e });
            }
            let eta = overpotential(beta_inv, self.flux(*e, i_norm), i0);
            let u = match e {
                Electrode::Neg => self.ocp_neg.eval(c_ss),
                Electrode::Pos => self.ocp_pos.eval(c_ss),
            };
            // v = U+ - U- + eta+ - eta- - r_f i; the negative electrode
            // enters with a minus sign on both terms.
            v -= e.flux_sign() * (u + eta);
        }
        Ok(VoltageOutput { v, cutoff })
    }
}

impl CellModel for Spm {
    fn time(&self) -> f64 {
        self.state.t
    }

    fn step(&mut self, current_a: f64, dt: f64, temp_k: f64) -> Result<StepOutput> {
        Spm::step(self, current_a, dt, temp_k)
    }

    fn voltage(&self, current_a: f64, temp_k: f64) -> Result<VoltageOutput> {
        Spm::voltage(self, current_a, temp_k)
    }
}
