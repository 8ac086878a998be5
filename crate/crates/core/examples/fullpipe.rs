mod dbg_inc { include!("dbg.rs"); }
use dbg_inc::z;
use p2dfit::config::RunConfig;
use p2dfit::fit::objective::{extract_all, stage_subset};
use p2dfit::fit::{generate_synthetic, staged_pipeline, PipelineConfig, ScenarioKind};
use p2dfit::params::group;

pub fn r4() -> RunConfig {
    let mut c = z(5.0e-11, 1.45e-10, 1.25e-11, 4.0e-15, 2.5e-4);
    c.cell.neg.d_s = 1.0e-13;
    c.limits.v_min = 3.33;
    c
}

pub fn perturbed(truth: &p2dfit::params::GroupedParameterSet, factor: f64) -> p2dfit::params::GroupedParameterSet {
    let mut start = *truth;
    let mut up = true;
    for sc in ScenarioKind::STAGES {
        for p in stage_subset(sc) {
            let v = p.extract(truth);
            let f = if up { 1.0 + factor } else { 1.0 - factor };
            p.apply(v * f, &mut start, truth);
            up = !up;
        }
    }
    start
}

#[allow(dead_code)]
fn main() {
    let mut cfg = r4();
    if std::env::args().any(|a| a == "--perseg") {
        cfg.fit.weights = "per_segment".into();
        println!("weights: per_segment");
    }
    for a in std::env::args() {
        if let Some(v) = a.strip_prefix("--vmin=") {
            cfg.limits.v_min = v.parse().unwrap();
            println!("v_min = {}", cfg.limits.v_min);
        }
    }
    let cfg = cfg;
    let truth = group(&cfg.cell).unwrap();
    let t0 = std::time::Instant::now();
    let (data, _) = generate_synthetic(&cfg, &truth).unwrap();
    println!("gen: {} samples in {:.0}s", data.samples.len(), t0.elapsed().as_secs_f64());
    let start = perturbed(&truth, cfg.fit.perturbation);
    let t0 = std::time::Instant::now();
    let report = staged_pipeline(&data, &start, &cfg, &PipelineConfig::default());
    println!("pipeline in {:.0}s; failure: {:?}", t0.elapsed().as_secs_f64(), report.failure);
    print!("{}", report.table());
    for sc in ScenarioKind::STAGES {
        let subset = stage_subset(sc);
        print!("stage {:?}:", sc);
        for ((p, f), t) in subset.iter().zip(extract_all(&subset, &report.grouped)).zip(extract_all(&subset, &truth)) {
            print!(" {}{:+.2}%", p.name(), (f / t - 1.0) * 100.0);
        }
        println!();
    }
    println!("overall assembled RMSE: {:.3} mV", report.overall_rmse_mv);
}
