//! Run configuration: cell parameters, OCP curves, grid, protocol, and
//! identification settings, loaded from a sectioned TOML file.
//!
//! Keys inside `[cell]` / `[cell.neg]` / `[cell.sep]` / `[cell.pos]` match
//! the physical parameter names (`D_s`, `R_s`, `eps_s`, ...). Every command
//! falls back to the compiled-in nominal cell when no file is given.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocp::{ExpTerm, OcpCurve, SigmoidTerm};
use crate::params::{Electrode, PhysicalParameterSet};

/// Which forward model a simulation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SpmEq,
    Spm,
    P2d,
    P2dt,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spm_eq" | "spmeq" => Ok(ModelKind::SpmEq),
            "spm" => Ok(ModelKind::Spm),
            "p2d" => Ok(ModelKind::P2d),
            "p2dt" => Ok(ModelKind::P2dt),
            other => Err(Error::config(format!("unknown model kind `{other}` (expected spm_eq|spm|p2d|p2dt)"))),
        }
    }
}

/// Spatial discretization of the P2D model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Cells per region: negative electrode, separator, positive electrode.
    pub n_x: [usize; 3],
    /// Radial cells per particle.
    pub n_r: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_x: [12, 6, 12], n_r: 20 }
    }
}

/// Time stepping and nonlinear solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Step size for commanded currents above `dt_rate_threshold_c` [s].
    pub dt_high_s: f64,
    /// Step size at or below the threshold [s].
    pub dt_low_s: f64,
    /// C-rate threshold between the two step sizes.
    pub dt_rate_threshold_c: f64,
    /// Convergence tolerance of the algebraic Newton solve.
    pub newton_tol: f64,
    /// Newton iteration budget per step.
    pub newton_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt_high_s: 1.0,
            dt_low_s: 10.0,
            dt_rate_threshold_c: 0.5,
            newton_tol: 1e-9,
            newton_max_iter: 50,
        }
    }
}

/// Voltage window of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitsConfig {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        LimitsConfig { v_min: 3.44, v_max: 4.3 }
    }
}

/// Rested initial state: normalized average concentrations per electrode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    pub stoich_neg: f64,
    pub stoich_pos: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { stoich_neg: 0.55, stoich_pos: 0.35 }
    }
}

/// One protocol step as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepConfig {
    /// Constant current; positive rates discharge the cell.
    Cc {
        rate_c: f64,
        #[serde(default)]
        time_limit_s: Option<f64>,
        #[serde(default)]
        v_cutoff: Option<f64>,
    },
    /// Constant voltage held by the PID controller.
    Cv {
        v_target: f64,
        #[serde(default)]
        time_limit_s: Option<f64>,
        /// Terminal current magnitude as a C-rate.
        #[serde(default)]
        i_cutoff_c: Option<f64>,
    },
    Rest { time_limit_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub steps: Vec<StepConfig>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        // One full CCCV discharge/charge cycle at 1C.
        ProtocolConfig { steps: cccv_cycle_steps(1.0, 3.44, 4.3, 0.02, 1800.0) }
    }
}

/// CCCV discharge + charge cycle at the given rate: CC discharge to v_min,
/// CV at v_min to the cutoff rate, rest, CC charge to v_max, CV at v_max,
/// rest.
pub fn cccv_cycle_steps(rate_c: f64, v_min: f64, v_max: f64, cv_cutoff_c: f64, rest_s: f64) -> Vec<StepConfig> {
    vec![
        StepConfig::Cc { rate_c, time_limit_s: None, v_cutoff: Some(v_min) },
        StepConfig::Cv { v_target: v_min, time_limit_s: Some(7200.0), i_cutoff_c: Some(cv_cutoff_c) },
        StepConfig::Rest { time_limit_s: rest_s },
        StepConfig::Cc { rate_c: -rate_c, time_limit_s: None, v_cutoff: Some(v_max) },
        StepConfig::Cv { v_target: v_max, time_limit_s: Some(7200.0), i_cutoff_c: Some(cv_cutoff_c) },
        StepConfig::Rest { time_limit_s: rest_s },
    ]
}

/// PID gains of the constant-voltage controller. Defaults scale with the
/// reference current: K_p = 5 I_1C, K_i = 0.5 I_1C, K_d = 0, anti-windup at
/// 2 I_1C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidConfig {
    /// Proportional gain per ampere of reference current [1/V].
    pub k_p_per_iref: f64,
    /// Integral gain per ampere of reference current [1/(V s)].
    pub k_i_per_iref: f64,
    /// Derivative gain per ampere of reference current [s/V].
    pub k_d_per_iref: f64,
    /// Anti-windup clamp on the integral term, in units of I_1C.
    pub windup_iref: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        PidConfig { k_p_per_iref: 5.0, k_i_per_iref: 0.5, k_d_per_iref: 0.0, windup_iref: 2.0 }
    }
}

/// Synthetic data generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Cycle C-rates, each run as an independent CCCV episode from the rested
    /// initial state.
    pub rates_c: Vec<f64>,
    /// Standard deviation of the added voltage noise [mV].
    pub noise_mv: f64,
    /// RNG seed for the noise.
    pub seed: u64,
    /// Rest duration between non-zero current steps [s].
    pub rest_s: f64,
    /// CV termination current as a C-rate.
    pub cv_cutoff_c: f64,
    /// Surface temperature excursion above T_ref reached at 3C [K]; rates at
    /// or below 1C stay at T_ref, mimicking thermal stress only at high
    /// current.
    pub temp_rise_k: f64,
    /// First-order time constant of the surface temperature response [s].
    pub temp_tau_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rates_c: vec![0.05, 0.2, 1.0 / 3.0, 0.5, 1.0, 3.0],
            noise_mv: 1.0,
            seed: 42,
            rest_s: 1800.0,
            cv_cutoff_c: 0.02,
            temp_rise_k: 15.0,
            temp_tau_s: 400.0,
        }
    }
}

/// Identification settings shared by all stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Bounds default to [theta0 / bounds_factor, theta0 * bounds_factor].
    pub bounds_factor: f64,
    /// Accepted-iteration budget per stage.
    pub max_iters: usize,
    /// Relative forward-difference step on the parameters.
    pub fd_step: f64,
    /// Stop when the objective improves by less than this relative amount.
    pub ftol: f64,
    /// Stop when the log-space step shrinks below this.
    pub xtol: f64,
    /// Stop when the scaled gradient norm falls below this.
    pub gtol: f64,
    /// Multiplicative perturbation applied to the nominal start (0.2 = ±20%).
    pub perturbation: f64,
    /// Weight scheme: "uniform" or "per_segment" (1 / segment length).
    pub weights: String,
    /// Run the warm-started P2D refinement over the low-current segments
    /// after stage 4.
    pub refine: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            bounds_factor: 100.0,
            max_iters: 80,
            fd_step: 1e-6,
            ftol: 1e-10,
            xtol: 1e-9,
            gtol: 1e-10,
            perturbation: 0.2,
            weights: "uniform".into(),
            refine: false,
        }
    }
}

/// Open-circuit potential configuration for one electrode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum OcpConfig {
    Analytic {
        constant: f64,
        #[serde(default)]
        exp_terms: Vec<[f64; 2]>,
        #[serde(default)]
        sigmoid_terms: Vec<[f64; 3]>,
    },
    Table {
        #[serde(default)]
        csv: Option<String>,
        #[serde(default)]
        points: Vec<[f64; 2]>,
    },
}

impl OcpConfig {
    pub fn build(&self, electrode: Electrode) -> Result<OcpCurve> {
        match self {
            OcpConfig::Analytic { constant, exp_terms, sigmoid_terms } => OcpCurve::analytic(
                electrode,
                *constant,
                exp_terms.iter().map(|t| ExpTerm { a: t[0], b: t[1] }).collect(),
                sigmoid_terms.iter().map(|t| SigmoidTerm { c: t[0], d: t[1], e: t[2] }).collect(),
            ),
            OcpConfig::Table { csv, points } => {
                let pts: Vec<(f64, f64)> = if let Some(path) = csv {
                    load_ocp_csv(Path::new(path))?
                } else {
                    points.iter().map(|p| (p[0], p[1])).collect()
                };
                OcpCurve::tabulated(electrode, &pts)
            }
        }
    }
}

/// Two-column CSV (stoichiometry, volts); `#` lines are comments.
fn load_ocp_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read OCP table `{}`: {e}", path.display())))?;
    let mut pts = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',');
        let parse = |v: Option<&str>| -> Result<f64> {
            v.ok_or_else(|| Error::config(format!("{}:{}: expected 2 columns", path.display(), lineno + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::config(format!("{}:{}: {e}", path.display(), lineno + 1)))
        };
        let x = match parse(cols.next()) {
            Ok(v) => v,
            // Allow one header row.
            Err(_) if pts.is_empty() && lineno == 0 => continue,
            Err(e) => return Err(e),
        };
        let y = parse(cols.next())?;
        pts.push((x, y));
    }
    Ok(pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpPair {
    pub neg: OcpConfig,
    pub pos: OcpConfig,
}

/// Root configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub cell: PhysicalParameterSet,
    pub ocp: OcpPair,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub limits: LimitsConfig,
    pub initial: InitialConfig,
    pub protocol: ProtocolConfig,
    pub pid: PidConfig,
    pub synth: SynthConfig,
    pub fit: FitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cell: nominal_cell(),
            ocp: default_ocp_pair(),
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            limits: LimitsConfig::default(),
            initial: InitialConfig::default(),
            protocol: ProtocolConfig::default(),
            pid: PidConfig::default(),
            synth: SynthConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config `{}`: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("cannot parse config `{}`: {e}", path.display())))?;
        cfg.cell.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn ocp_curves(&self) -> Result<(OcpCurve, OcpCurve)> {
        Ok((self.ocp.neg.build(Electrode::Neg)?, self.ocp.pos.build(Electrode::Pos)?))
    }

    /// Applied current [A] for a commanded C-rate (positive = discharge).
    pub fn current_for_rate(&self, rate_c: f64) -> f64 {
        rate_c * self.cell.i_ref
    }
}

/// The compiled-in nominal cell: a graphite | NMC-like pouch cell with a
/// 1C current of 3.4 A.
pub fn nominal_cell() -> PhysicalParameterSet {
    use crate::params::{ElectrodePhysical, SeparatorPhysical};
    PhysicalParameterSet {
        neg: ElectrodePhysical {
            d_s: 6.0e-14,
            r_s: 5.86e-6,
            eps_s: 0.70,
            eps_e: 0.25,
            l: 8.52e-5,
            k_n: 4.5e-11,
            c_s_max: 52000.0,
            sigma_s: 215.0,
            e_d_s: 3.0e4,
            e_k_n: 4.0e4,
        },
        sep: SeparatorPhysical { eps_e: 0.47, l: 1.2e-5 },
        pos: ElectrodePhysical {
            d_s: 4.0e-15,
            r_s: 2.0e-6,
            eps_s: 0.62,
            eps_e: 0.30,
            l: 7.56e-5,
            k_n: 1.2e-11,
            c_s_max: 63104.0,
            sigma_s: 20.0,
            e_d_s: 3.5e4,
            e_k_n: 4.5e4,
        },
        area: 0.1,
        d_e: 3.2e-11,
        kappa_e: 120.0,
        t_plus: 0.9,
        f_activity_term: 0.3,
        r_f: 3.0e-4,
        c_e_ref: 1000.0,
        b: 1.5,
        t_ref: 298.15,
        i_ref: 3.4,
    }
}

/// Default synthetic OCP curves: a plateau-rich decreasing graphite-like
/// negative and a smoothly decreasing NMC-like positive.
pub fn default_ocp(electrode: Electrode) -> OcpCurve {
    match electrode {
        Electrode::Neg => OcpCurve::analytic(
            electrode,
            0.08,
            vec![ExpTerm { a: 0.75, b: -15.0 }],
            vec![
                SigmoidTerm { c: 0.06, d: 25.0, e: 0.20 },
                SigmoidTerm { c: 0.05, d: 45.0, e: 0.30 },
                SigmoidTerm { c: 0.04, d: 30.0, e: 0.55 },
            ],
        )
        .expect("default negative OCP"),
        Electrode::Pos => OcpCurve::analytic(
            electrode,
            3.35,
            vec![ExpTerm { a: 0.85, b: -1.8 }],
            vec![SigmoidTerm { c: 0.06, d: 40.0, e: 0.55 }, SigmoidTerm { c: 0.35, d: 10.0, e: 0.90 }],
        )
        .expect("default positive OCP"),
    }
}

fn default_ocp_pair() -> OcpPair {
    OcpPair {
        neg: OcpConfig::Analytic {
            constant: 0.08,
            exp_terms: vec![[0.75, -15.0]],
            sigmoid_terms: vec![[0.06, 25.0, 0.20], [0.05, 45.0, 0.30], [0.04, 30.0, 0.55]],
        },
        pos: OcpConfig::Analytic {
            constant: 3.35,
            exp_terms: vec![[0.85, -1.8]],
            sigmoid_terms: vec![[0.06, 40.0, 0.55], [0.35, 10.0, 0.90]],
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn cell_section_uses_physical_field_names() {
        let text = RunConfig::default().to_toml();
        for key in ["D_s", "R_s", "eps_s", "eps_e", "k_n", "c_s_max", "sigma_s", "t_plus", "c_e_ref", "i_ref"] {
            assert!(text.contains(key), "missing key {key} in:\n{text}");
        }
        assert!(text.contains("[cell.neg]"));
        assert!(text.contains("[cell.sep]"));
        assert!(text.contains("[cell.pos]"));
    }

    #[test]
    fn nominal_cell_satisfies_invariants() {
        nominal_cell().validate().unwrap();
    }

    #[test]
    fn default_ocps_are_monotone_decreasing() {
        for e in Electrode::BOTH {
            let curve = default_ocp(e);
            let mut prev = f64::INFINITY;
            for k in 0..=200 {
                let v = curve.eval(k as f64 / 200.0);
                assert!(v < prev, "default {e:?} OCP not strictly decreasing");
                prev = v;
            }
        }
    }

    #[test]
    fn partial_config_gets_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }
}
