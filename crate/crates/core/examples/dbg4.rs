mod dbg2_inc { include!("dbg2.rs"); }
use dbg2_inc::cc_trace;
use p2dfit::config::{ModelKind, OcpConfig, RunConfig};
use p2dfit::fit::rmse_mv;

fn cb() -> RunConfig {
    let mut c = RunConfig::default();
    c.cell.neg.c_s_max = 52000.0;
    c.cell.neg.d_s = 6.0e-14;
    c.cell.neg.k_n = 3.0e-11;
    c.cell.pos.k_n = 8.0e-12;
    c.cell.pos.sigma_s = 20.0;
    c.cell.kappa_e = 200.0;
    c.cell.t_plus = 0.9;
    c.cell.f_activity_term = 0.05;
    c.cell.d_e = 3.2e-11;
    c.cell.r_f = 3.0e-4;
    c.initial.stoich_neg = 0.55;
    c.initial.stoich_pos = 0.35;
    c.limits.v_min = 3.44;
    c.limits.v_max = 4.30;
    c.ocp.neg = OcpConfig::Analytic {
        constant: 0.08,
        exp_terms: vec![[0.75, -15.0]],
        sigmoid_terms: vec![[0.06, 25.0, 0.20], [0.05, 45.0, 0.30], [0.04, 30.0, 0.55]],
    };
    c.ocp.pos = OcpConfig::Analytic {
        constant: 3.35,
        exp_terms: vec![[0.85, -1.8]],
        sigmoid_terms: vec![[0.06, 40.0, 0.55], [0.35, 10.0, 0.90]],
    };
    c
}

fn eq20(cfg: &RunConfig) -> f64 {
    let spm20 = cc_trace(cfg, ModelKind::Spm, 0.05);
    let eq = cc_trace(cfg, ModelKind::SpmEq, 0.05);
    let t2: Vec<f64> = spm20.records.iter().map(|r| r.t).collect();
    let v2: Vec<f64> = spm20.records.iter().map(|r| r.voltage_v).collect();
    rmse_mv(&eq, &t2, &v2).unwrap()
}

fn main() {
    let base = cb();
    println!("full          : {:.3}", eq20(&base));
    let mut c = cb(); c.cell.r_f = 1e-9;
    println!("r_f ~ 0       : {:.3}", eq20(&c));
    let mut c = cb(); c.cell.neg.k_n = 1e-7; c.cell.pos.k_n = 1e-7;
    println!("kinetics fast : {:.3}", eq20(&c));
    let mut c = cb(); c.cell.neg.d_s = 6e-11; c.cell.pos.d_s = 4e-12;
    println!("diff fast     : {:.3}", eq20(&c));
    let mut c = cb(); c.cell.r_f = 1e-9; c.cell.neg.k_n = 1e-7; c.cell.pos.k_n = 1e-7;
    println!("only lag      : {:.3}", eq20(&c));
    let mut c = cb(); c.cell.r_f = 1e-9; c.cell.neg.d_s = 6e-11; c.cell.pos.d_s = 4e-12;
    println!("only kinetics : {:.3}", eq20(&c));
    let mut c = cb(); c.cell.neg.k_n = 1e-7; c.cell.pos.k_n = 1e-7; c.cell.neg.d_s = 6e-11; c.cell.pos.d_s = 4e-12;
    println!("only r_f      : {:.3}", eq20(&c));
}
