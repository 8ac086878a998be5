use p2dfit::config::{ModelKind, RunConfig};
use p2dfit::fit::rmse_mv;
use p2dfit::params::group;
use p2dfit::protocol::{build_model, Driver, ProtocolStep, StepKind, TempSignal};

pub fn cc_trace(cfg: &RunConfig, kind: ModelKind, rate: f64) -> p2dfit::protocol::Trace {
    let grouped = group(&cfg.cell).unwrap();
    let mut model = build_model(kind, &grouped, cfg).unwrap();
    let driver = Driver::from_config(cfg, TempSignal::Constant(cfg.cell.t_ref)).unwrap();
    let steps = vec![ProtocolStep {
        kind: StepKind::CurrentControl { current_a: rate * cfg.cell.i_ref },
        time_limit_s: Some(3600.0 * 1.3 / rate),
        v_cutoff: Some(cfg.limits.v_min),
        i_cutoff_a: None,
    }];
    driver.run_protocol(model.as_mut(), &steps).unwrap()
}

pub fn hierarchy(cfg: &RunConfig, label: &str) {
    print!("{label}:");
    for rate in [0.05, 0.5, 3.0] {
        let p2d = cc_trace(cfg, ModelKind::P2d, rate);
        let spm = cc_trace(cfg, ModelKind::Spm, rate);
        let spmeq = cc_trace(cfg, ModelKind::SpmEq, rate);
        let t: Vec<f64> = p2d.records.iter().map(|r| r.t).collect();
        let v: Vec<f64> = p2d.records.iter().map(|r| r.voltage_v).collect();
        let r_spm = rmse_mv(&spm, &t, &v).unwrap();
        let ts2: Vec<f64> = spm.records.iter().map(|r| r.t).collect();
        let vs2: Vec<f64> = spm.records.iter().map(|r| r.voltage_v).collect();
        let r_eq = rmse_mv(&spmeq, &ts2, &vs2).unwrap();
        print!(" | r{rate}: P2D-SPM {r_spm:7.2} SPM-eq {r_eq:7.2}");
    }
    println!();
}

#[allow(dead_code)]
fn main() {
    let mut cfg = RunConfig::default();
    cfg.cell.kappa_e = 120.0;
    cfg.cell.t_plus = 0.9;
    cfg.cell.f_activity_term = 0.3;
    cfg.cell.d_e = 3.5e-11;
    cfg.cell.r_f = 7.35e-4;
    cfg.cell.pos.k_n = 1.4e-11;
    cfg.cell.pos.sigma_s = 20.0;
    hierarchy(&cfg, "T2");
    let mut c2 = cfg.clone();
    c2.cell.d_e = 2.5e-11;
    hierarchy(&c2, "T2+De2.5e-11");
    let mut c3 = cfg.clone();
    c3.cell.pos.k_n = 1.0e-11;
    hierarchy(&c3, "T2+kn+1e-11");
}
