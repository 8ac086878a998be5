//! Physical and grouped parameter sets, the grouping map between them, and
//! the scaling transformations used in the identifiability analysis.
//!
//! The as-made cell description ([`PhysicalParameterSet`]) carries 30
//! modifiable parameters. The normalized model consumes only the grouped set
//! ([`GroupedParameterSet`]), whose 20 main entries are products and ratios of
//! the physical ones (e.g. the solid diffusion time constant `tau_d_s =
//! R_s^2 / D_s`). Distinct physical sets related by a [`ScalingTransform`]
//! map to the same grouped set and therefore to identical model output.

pub mod ident;

use serde::{Deserialize, Serialize};

use crate::constants::{ALPHA, FARADAY};
use crate::error::{Error, Result};

/// Electrode tag. The separator is handled separately where it matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Electrode {
    Neg,
    Pos,
}

impl Electrode {
    pub const BOTH: [Electrode; 2] = [Electrode::Neg, Electrode::Pos];

    /// Sign of the uniform pore-wall flux under positive (discharge) current:
    /// the negative electrode oxidizes (+1), the positive reduces (-1).
    pub fn flux_sign(self) -> f64 {
        match self {
            Electrode::Neg => 1.0,
            Electrode::Pos => -1.0,
        }
    }
}

/// Cell region along the thickness axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Neg,
    Sep,
    Pos,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Neg, Region::Sep, Region::Pos];
}

/// Per-electrode block of the as-made parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectrodePhysical {
    /// Solid diffusion coefficient [m^2/s].
    #[serde(rename = "D_s")]
    pub d_s: f64,
    /// Particle radius [m].
    #[serde(rename = "R_s")]
    pub r_s: f64,
    /// Solid (active material) volume fraction.
    pub eps_s: f64,
    /// Electrolyte volume fraction.
    pub eps_e: f64,
    /// Region thickness [m].
    #[serde(rename = "L")]
    pub l: f64,
    /// Reaction rate constant [m^2.5 mol^-0.5 s^-1].
    pub k_n: f64,
    /// Maximum solid concentration [mol/m^3].
    pub c_s_max: f64,
    /// Electronic conductivity [S/m].
    pub sigma_s: f64,
    /// Activation energy of the solid diffusion coefficient [J/mol].
    #[serde(rename = "E_Ds")]
    pub e_d_s: f64,
    /// Activation energy of the reaction rate constant [J/mol].
    #[serde(rename = "E_kn")]
    pub e_k_n: f64,
}

/// Separator block: no solid phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatorPhysical {
    pub eps_e: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

/// The 30 as-made physical parameters of the P2D model, plus the reference
/// quantities that define the normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParameterSet {
    pub neg: ElectrodePhysical,
    pub sep: SeparatorPhysical,
    pub pos: ElectrodePhysical,

    /// Cross-sectional area [m^2].
    #[serde(rename = "A")]
    pub area: f64,
    /// Electrolyte diffusion coefficient [m^2/s] (space-independent).
    #[serde(rename = "D_e")]
    pub d_e: f64,
    /// Ionic conductivity [S/m].
    pub kappa_e: f64,
    /// Transference number, in (0, 1).
    pub t_plus: f64,
    /// Activity term 1 + d ln f± / d ln c_e.
    pub f_activity_term: f64,
    /// Film resistance [Ohm m^2].
    #[serde(rename = "R_f")]
    pub r_f: f64,
    /// Reference electrolyte concentration [mol/m^3].
    pub c_e_ref: f64,
    /// Bruggeman coefficient.
    pub b: f64,
    /// Reference temperature [K].
    #[serde(rename = "T_ref")]
    pub t_ref: f64,
    /// Reference current [A]; the 1C current of the nominal cell. Normalized
    /// applied current is I / i_ref.
    pub i_ref: f64,
}

fn require_positive(field: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::invalid(field, format!("must be positive and finite, got {value}")));
    }
    Ok(())
}

impl ElectrodePhysical {
    fn validate(&self, tag: &str) -> Result<()> {
        let checks: [(&'static str, f64); 8] = [
            ("D_s", self.d_s),
            ("R_s", self.r_s),
            ("eps_s", self.eps_s),
            ("eps_e", self.eps_e),
            ("L", self.l),
            ("k_n", self.k_n),
            ("c_s_max", self.c_s_max),
            ("sigma_s", self.sigma_s),
        ];
        for (name, value) in checks {
            require_positive(name, value).map_err(|e| match e {
                Error::InvalidParam { field, reason } => Error::InvalidParam {
                    field,
                    reason: format!("[{tag}] {reason}"),
                },
                other => other,
            })?;
        }
        if self.eps_s + self.eps_e > 1.0 {
            return Err(Error::invalid(
                "eps_s",
                format!("[{tag}] eps_s + eps_e = {} exceeds 1 (negative filler fraction)", self.eps_s + self.eps_e),
            ));
        }
        Ok(())
    }
}

impl PhysicalParameterSet {
    /// Check every invariant; returns the offending field on violation.
    pub fn validate(&self) -> Result<()> {
        self.neg.validate("neg")?;
        self.pos.validate("pos")?;
        require_positive("eps_e", self.sep.eps_e)?;
        if self.sep.eps_e > 1.0 {
            return Err(Error::invalid("eps_e", "[sep] exceeds 1".to_string()));
        }
        require_positive("L", self.sep.l)?;
        require_positive("A", self.area)?;
        require_positive("D_e", self.d_e)?;
        require_positive("kappa_e", self.kappa_e)?;
        require_positive("f_activity_term", self.f_activity_term)?;
        require_positive("c_e_ref", self.c_e_ref)?;
        require_positive("T_ref", self.t_ref)?;
        require_positive("i_ref", self.i_ref)?;
        require_positive("b", self.b)?;
        if !(self.t_plus > 0.0 && self.t_plus < 1.0) {
            return Err(Error::invalid("t_plus", format!("must lie in (0,1), got {}", self.t_plus)));
        }
        if !(self.r_f >= 0.0 && self.r_f.is_finite()) {
            return Err(Error::invalid("R_f", format!("must be non-negative, got {}", self.r_f)));
        }
        Ok(())
    }

    pub fn electrode(&self, e: Electrode) -> &ElectrodePhysical {
        match e {
            Electrode::Neg => &self.neg,
            Electrode::Pos => &self.pos,
        }
    }
}

/// Grouped quantities attached to one electrode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeGroup {
    /// Solid diffusion time constant R_s^2 / D_s [s].
    pub tau_d_s: f64,
    /// Electrode charge time F eps_s L A c_s_max / i_ref [s].
    pub tau_c_s: f64,
    /// Reaction time scale R_s / (k_n sqrt(c_e_ref)) [s].
    pub tau_k: f64,
    /// Electronic conductance per unit current A sigma_s_eff / (L i_ref) [1/V].
    pub sigma: f64,
    /// Activation energy of tau_d_s [J/mol]; sign-flipped from E_Ds because
    /// tau_d_s ~ 1/D_s, so the stored value is negative for a positive
    /// physical activation energy.
    pub e_tau_s: f64,
    /// Activation energy of tau_k [J/mol]; sign-flipped from E_kn.
    pub e_tau_k: f64,
}

/// Grouped electrolyte quantities for one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionGroup {
    /// Electrolyte diffusion time constant L^2 eps_e^(1-b) / D_e [s].
    pub tau_d_e: f64,
    /// Electrolyte input coefficient F eps_e L c_e_ref / i_ref [s/m^2].
    pub nu_e: f64,
    /// Ionic conductance per unit current A kappa_e_eff / (L i_ref) [1/V].
    pub kappa: f64,
}

/// The grouped P2D parameter set: 20 main entries plus the secondary
/// quantities needed by the thermal extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupedParameterSet {
    pub neg: ElectrodeGroup,
    pub pos: ElectrodeGroup,
    pub elyte_neg: RegionGroup,
    pub elyte_sep: RegionGroup,
    pub elyte_pos: RegionGroup,

    /// Ohmic drop R_f i_ref / A [V].
    pub r_f: f64,
    /// Transference-related coefficient (1 - t_plus) / A [1/m^2].
    pub gamma: f64,
    /// Activity-related coefficient (1 - t_plus) (1 + d ln f± / d ln c_e),
    /// dimensionless; this is the prefactor of the ln c_e term in the
    /// electrolyte potential equation.
    pub k_gamma_f: f64,
    /// Thermal voltage at the reference temperature R_g T_ref / (alpha F) [V].
    pub beta_inv: f64,
    /// Reference temperature [K] for the Arrhenius laws and beta_inv.
    pub t_ref: f64,
}

impl GroupedParameterSet {
    pub fn electrode(&self, e: Electrode) -> &ElectrodeGroup {
        match e {
            Electrode::Neg => &self.neg,
            Electrode::Pos => &self.pos,
        }
    }

    pub fn electrode_mut(&mut self, e: Electrode) -> &mut ElectrodeGroup {
        match e {
            Electrode::Neg => &mut self.neg,
            Electrode::Pos => &mut self.pos,
        }
    }

    pub fn region(&self, r: Region) -> &RegionGroup {
        match r {
            Region::Neg => &self.elyte_neg,
            Region::Sep => &self.elyte_sep,
            Region::Pos => &self.elyte_pos,
        }
    }

    pub fn region_mut(&mut self, r: Region) -> &mut RegionGroup {
        match r {
            Region::Neg => &mut self.elyte_neg,
            Region::Sep => &mut self.elyte_sep,
            Region::Pos => &mut self.elyte_pos,
        }
    }

    /// Thermal voltage at temperature T: beta_inv scales linearly with T.
    pub fn beta_inv_at(&self, temp_k: f64) -> f64 {
        self.beta_inv * temp_k / self.t_ref
    }

    /// Number of independently fitted main grouped parameters.
    pub fn main_parameter_count() -> usize {
        // tau_d_s, tau_c_s, tau_k, sigma per electrode; tau_d_e, nu_e, kappa
        // per region; r_f, gamma, k_gamma_f cell-level.
        2 * 4 + 3 * 3 + 3
    }

    /// Flattened (name, value) view of the main grouped parameters, used for
    /// reports and golden tests.
    pub fn main_entries(&self) -> Vec<(String, f64)> {
        let mut out = Vec::with_capacity(Self::main_parameter_count());
        for (tag, e) in [("neg", &self.neg), ("pos", &self.pos)] {
            out.push((format!("tau_d_s_{tag}"), e.tau_d_s));
            out.push((format!("tau_c_s_{tag}"), e.tau_c_s));
            out.push((format!("tau_k_{tag}"), e.tau_k));
            out.push((format!("sigma_{tag}"), e.sigma));
        }
        for (tag, r) in [("neg", &self.elyte_neg), ("sep", &self.elyte_sep), ("pos", &self.elyte_pos)] {
            out.push((format!("tau_d_e_{tag}"), r.tau_d_e));
            out.push((format!("nu_e_{tag}"), r.nu_e));
            out.push((format!("kappa_{tag}"), r.kappa));
        }
        out.push(("r_f".into(), self.r_f));
        out.push(("gamma".into(), self.gamma));
        out.push(("k_gamma_f".into(), self.k_gamma_f));
        out
    }

    /// Maximum relative difference over all main entries plus beta_inv and
    /// the grouped activation energies.
    pub fn max_relative_difference(&self, other: &GroupedParameterSet) -> f64 {
        let a = self.all_entries();
        let b = other.all_entries();
        a.iter()
            .zip(&b)
            .map(|((_, x), (_, y))| {
                let scale = x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
                (x - y).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    fn all_entries(&self) -> Vec<(String, f64)> {
        let mut out = self.main_entries();
        out.push(("beta_inv".into(), self.beta_inv));
        for (tag, e) in [("neg", &self.neg), ("pos", &self.pos)] {
            out.push((format!("e_tau_s_{tag}"), e.e_tau_s));
            out.push((format!("e_tau_k_{tag}"), e.e_tau_k));
        }
        out
    }
}

/// Map an as-made physical set onto the grouped set the normalized model
/// consumes. Effective transport properties use the Bruggeman correction
/// `Phi_eff = eps_e^b Phi` and `sigma_s_eff = eps_s sigma_s`.
pub fn group(phys: &PhysicalParameterSet) -> Result<GroupedParameterSet> {
    phys.validate()?;

    let electrode_group = |e: &ElectrodePhysical| ElectrodeGroup {
        tau_d_s: e.r_s * e.r_s / e.d_s,
        tau_c_s: FARADAY * e.eps_s * e.l * phys.area * e.c_s_max / phys.i_ref,
        tau_k: e.r_s / (e.k_n * phys.c_e_ref.sqrt()),
        sigma: phys.area * (e.eps_s * e.sigma_s) / (e.l * phys.i_ref),
        // tau_d_s ~ 1/D_s and tau_k ~ 1/k_n: the grouped laws store the
        // flipped sign so a positive physical activation energy makes the
        // time constants shrink as temperature rises.
        e_tau_s: -e.e_d_s,
        e_tau_k: -e.e_k_n,
    };

    let region_group = |eps_e: f64, l: f64| RegionGroup {
        tau_d_e: l * l * eps_e.powf(1.0 - phys.b) / phys.d_e,
        nu_e: FARADAY * eps_e * l * phys.c_e_ref / phys.i_ref,
        kappa: phys.area * eps_e.powf(phys.b) * phys.kappa_e / (l * phys.i_ref),
    };

    Ok(GroupedParameterSet {
        neg: electrode_group(&phys.neg),
        pos: electrode_group(&phys.pos),
        elyte_neg: region_group(phys.neg.eps_e, phys.neg.l),
        elyte_sep: region_group(phys.sep.eps_e, phys.sep.l),
        elyte_pos: region_group(phys.pos.eps_e, phys.pos.l),
        r_f: phys.r_f * phys.i_ref / phys.area,
        gamma: (1.0 - phys.t_plus) / phys.area,
        k_gamma_f: (1.0 - phys.t_plus) * phys.f_activity_term,
        beta_inv: crate::constants::GAS_CONSTANT * phys.t_ref / (ALPHA * FARADAY),
        t_ref: phys.t_ref,
    })
}

/// One-parameter scaling families of the physical set that leave every
/// grouped parameter unchanged: `mu` rescales the solid phase, `mu1` the
/// region thicknesses, `mu2` the cross-sectional area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingTransform {
    pub mu: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl ScalingTransform {
    pub const IDENTITY: ScalingTransform = ScalingTransform { mu: 1.0, mu1: 1.0, mu2: 1.0 };

    pub fn new(mu: f64, mu1: f64, mu2: f64) -> Result<Self> {
        for (name, v) in [("mu", mu), ("mu1", mu1), ("mu2", mu2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("mu", format!("scaling factor {name} must be positive, got {v}")));
            }
        }
        Ok(ScalingTransform { mu, mu1, mu2 })
    }
}

/// Apply the scaling family to a physical set. The transformed set maps to
/// the same grouped parameters: `group(apply_scaling(p, s)) == group(p)`.
///
/// The rescalings are: R_s -> mu R_s, D_s -> mu^2 D_s, k_n -> mu k_n;
/// L -> mu1 L, eps_e -> eps_e / mu1, eps_s -> eps_s / (mu1 mu2),
/// D_e -> mu1^(b+1) D_e, A -> mu2 A, kappa_e -> mu1^(b+1)/mu2 kappa_e,
/// sigma_s -> mu1^2 sigma_s, R_f -> mu2 R_f, t_plus -> 1 - (1 - t_plus) mu2,
/// f_activity_term -> f_activity_term / mu2.
pub fn apply_scaling(phys: &PhysicalParameterSet, s: &ScalingTransform) -> Result<PhysicalParameterSet> {
    let mut out = *phys;
    let (mu, mu1, mu2) = (s.mu, s.mu1, s.mu2);

    for e in [&mut out.neg, &mut out.pos] {
        e.r_s *= mu;
        e.d_s *= mu * mu;
        e.k_n *= mu;
        e.l *= mu1;
        e.eps_e /= mu1;
        e.eps_s /= mu1 * mu2;
        e.sigma_s *= mu1 * mu1;
    }
    out.sep.l *= mu1;
    out.sep.eps_e /= mu1;

    out.area *= mu2;
    out.d_e *= mu1.powf(phys.b + 1.0);
    out.kappa_e *= mu1.powf(phys.b + 1.0) / mu2;
    out.r_f *= mu2;
    out.t_plus = 1.0 - (1.0 - phys.t_plus) * mu2;
    out.f_activity_term /= mu2;

    out.validate()?;
    Ok(out)
}
