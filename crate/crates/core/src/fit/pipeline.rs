//! The staged identification pipeline: four scenario stages fitted in order
//! with earlier results frozen, plus the optional warm-started low-current
//! P2D refinement.

use serde::Serialize;

use crate::config::{ModelKind, RunConfig};
use crate::error::{Error, Result};
use crate::fit::data::{DataSet, ScenarioKind};
use crate::fit::objective::{
    apply_all, extract_all, refinement_subset, replay_rmse_mv, scenario_residuals, stage_subset,
};
use crate::fit::optimize::{optimize, Evaluation, FitProblem, FitResult, OptimizerSettings};
use crate::params::GroupedParameterSet;

/// Settings of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Stages to run, in order; stages later in the scenario order keep the
    /// earlier results frozen.
    pub stages: Vec<ScenarioKind>,
    /// Run the final P2D refinement of the SPM parameters over the
    /// low-current episodes, warm-started at the staged optimum.
    pub refine: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { stages: ScenarioKind::STAGES.to_vec(), refine: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub scenario: String,
    pub model: String,
    pub result: FitResult,
    /// Unweighted replay RMSE [mV] of the stage model at its optimum over
    /// the stage's own episodes.
    pub rmse_mv: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub stages: Vec<StageReport>,
    /// Per-scenario RMSE [mV] of the assembled thermal P2D model at the
    /// final parameters.
    pub assembled_rmse_mv: Vec<(String, f64)>,
    pub overall_rmse_mv: f64,
    pub refinement: Option<StageReport>,
    pub grouped: GroupedParameterSet,
    /// Set when a stage failed; the report covers the finished stages.
    pub failure: Option<String>,
}

fn settings_from(cfg: &RunConfig) -> OptimizerSettings {
    OptimizerSettings {
        max_iters: cfg.fit.max_iters,
        fd_step: cfg.fit.fd_step,
        ftol: cfg.fit.ftol,
        xtol: cfg.fit.xtol,
        gtol: cfg.fit.gtol,
    }
}

fn model_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::SpmEq => "SPM_eq",
        ModelKind::Spm => "SPM",
        ModelKind::P2d => "P2D",
        ModelKind::P2dt => "P2DT",
    }
}

/// Fit one scenario's subset starting from (and freezing the rest of) the
/// given grouped set. `nominal` provides the cross-region ratios of the
/// shared electrolyte parameters.
pub fn fit_stage(
    data: &DataSet,
    cfg: &RunConfig,
    scenario: ScenarioKind,
    start: &GroupedParameterSet,
    nominal: &GroupedParameterSet,
) -> Result<(FitResult, GroupedParameterSet)> {
    let episodes = data.episodes_for(scenario);
    if episodes.is_empty() {
        return Err(Error::Pipeline {
            stage: scenario.name().into(),
            reason: "no data segments fall in this scenario's rate window".into(),
        });
    }
    let subset = stage_subset(scenario);
    let theta0 = extract_all(&subset, start);
    let problem = FitProblem::positive_scales(
        subset.iter().map(|p| p.name()).collect(),
        theta0,
        cfg.fit.bounds_factor,
        settings_from(cfg),
    )?;
    let base = *start;
    let nominal = *nominal;
    let subset_cl = subset.clone();
    let model = scenario.model();
    let f = move |theta: &[f64]| -> Evaluation {
        let mut g = base;
        apply_all(&subset_cl, theta, &mut g, &nominal);
        scenario_residuals(&episodes, data, cfg, &g, model)
    };
    let result = optimize(&problem, &f)?;
    let mut fitted = *start;
    apply_all(&subset, &result.theta, &mut fitted, &nominal);
    Ok((result, fitted))
}

/// P2D refinement of the SPM parameter subset over the low-current episodes,
/// started from `start`.
pub fn refine_low_current(
    data: &DataSet,
    cfg: &RunConfig,
    start: &GroupedParameterSet,
    nominal: &GroupedParameterSet,
) -> Result<FitResult> {
    let episodes = data.episodes_for(ScenarioKind::S);
    if episodes.is_empty() {
        return Err(Error::Pipeline {
            stage: "refine".into(),
            reason: "no low-current episodes to refine against".into(),
        });
    }
    let subset = refinement_subset();
    let theta0 = extract_all(&subset, start);
    let problem = FitProblem::positive_scales(
        subset.iter().map(|p| p.name()).collect(),
        theta0,
        cfg.fit.bounds_factor,
        settings_from(cfg),
    )?;
    let base = *start;
    let nominal_c = *nominal;
    let subset_cl = subset.clone();
    let f = move |theta: &[f64]| -> Evaluation {
        let mut g = base;
        apply_all(&subset_cl, theta, &mut g, &nominal_c);
        scenario_residuals(&episodes, data, cfg, &g, ModelKind::P2d)
    };
    optimize(&problem, &f)
}

/// Run the staged pipeline: each stage fits its subset on its scenario's
/// episodes with the earlier stages' results frozen, then the assembled
/// thermal P2D model is scored over every scenario.
pub fn staged_pipeline(
    data: &DataSet,
    start: &GroupedParameterSet,
    cfg: &RunConfig,
    pipeline: &PipelineConfig,
) -> PipelineReport {
    let nominal = *start;
    let mut grouped = *start;
    let mut stages = Vec::new();
    let mut failure = None;

    for &scenario in &pipeline.stages {
        match fit_stage(data, cfg, scenario, &grouped, &nominal) {
            Ok((result, fitted)) => {
                grouped = fitted;
                let rmse = replay_rmse_mv(&data.episodes_for(scenario), data, cfg, &grouped, scenario.model())
                    .unwrap_or(f64::NAN);
                stages.push(StageReport {
                    scenario: scenario.name().into(),
                    model: model_name(scenario.model()).into(),
                    result,
                    rmse_mv: rmse,
                });
            }
            Err(err) => {
                failure = Some(format!("stage {} failed: {err}", scenario.name()));
                break;
            }
        }
    }

    let mut refinement = None;
    if pipeline.refine && failure.is_none() {
        match refine_low_current(data, cfg, &grouped, &nominal) {
            Ok(result) => {
                let subset = refinement_subset();
                apply_all(&subset, &result.theta, &mut grouped, &nominal);
                let rmse =
                    replay_rmse_mv(&data.episodes_for(ScenarioKind::S), data, cfg, &grouped, ModelKind::P2d)
                        .unwrap_or(f64::NAN);
                refinement = Some(StageReport {
                    scenario: "s (refined)".into(),
                    model: "P2D".into(),
                    result,
                    rmse_mv: rmse,
                });
            }
            Err(err) => failure = Some(format!("refinement failed: {err}")),
        }
    }

    // Assembled-model score: the thermal P2D with the final parameters over
    // every scenario present in the data.
    let mut assembled = Vec::new();
    let mut acc = 0.0;
    let mut count = 0usize;
    if failure.is_none() {
        for scenario in ScenarioKind::STAGES {
            let episodes = data.episodes_for(scenario);
            if episodes.is_empty() {
                continue;
            }
            let n: usize = episodes.iter().flat_map(|e| &e.segments).map(|s| s.end - s.start).sum();
            match replay_rmse_mv(&episodes, data, cfg, &grouped, ModelKind::P2dt) {
                Ok(rmse) => {
                    assembled.push((scenario.name().to_string(), rmse));
                    acc += rmse * rmse * n as f64;
                    count += n;
                }
                Err(err) => {
                    failure = Some(format!("assembled replay failed on {}: {err}", scenario.name()));
                    break;
                }
            }
        }
    }
    let overall = if count > 0 { (acc / count as f64).sqrt() } else { f64::NAN };

    PipelineReport {
        stages,
        assembled_rmse_mv: assembled,
        overall_rmse_mv: overall,
        refinement,
        grouped,
        failure,
    }
}

impl PipelineReport {
    /// Human-readable per-stage table (scenario, model, RMSE, iterations,
    /// wall time).
    pub fn table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:<7} {:>10} {:>7} {:>9} {:>8}", "scenario", "model", "e_v [mV]", "iters", "t_opt [s]", "status");
        for s in self.stages.iter().chain(self.refinement.iter()) {
            let _ = writeln!(
                out,
                "{:<12} {:<7} {:>10.3} {:>7} {:>9.2} {:>8}",
                s.scenario, s.model, s.rmse_mv, s.result.iterations, s.result.wall_time_s, s.result.status
            );
        }
        if !self.assembled_rmse_mv.is_empty() {
            let _ = writeln!(out, "assembled P2DT RMSE per scenario:");
            for (name, rmse) in &self.assembled_rmse_mv {
                let _ = writeln!(out, "  {name:<10} {rmse:>10.3} mV");
            }
            let _ = writeln!(out, "  {:<10} {:>10.3} mV", "overall", self.overall_rmse_mv);
        }
        if let Some(f) = &self.failure {
            let _ = writeln!(out, "FAILURE: {f}");
        }
        out
    }
}
