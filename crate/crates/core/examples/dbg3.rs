mod fisher_inc { include!("fisher.rs"); }
mod dbg2_inc { include!("dbg2.rs"); }
use dbg2_inc::cc_trace;
use fisher_inc::fisher;
use p2dfit::config::{ModelKind, OcpConfig, RunConfig};
use p2dfit::fit::rmse_mv;

fn trio(cfg: &RunConfig, label: &str) {
    let p2d = cc_trace(cfg, ModelKind::P2d, 3.0);
    let spm = cc_trace(cfg, ModelKind::Spm, 3.0);
    let t: Vec<f64> = p2d.records.iter().map(|r| r.t).collect();
    let v: Vec<f64> = p2d.records.iter().map(|r| r.voltage_v).collect();
    let gap3c = rmse_mv(&spm, &t, &v).unwrap();
    let spm20 = cc_trace(cfg, ModelKind::Spm, 0.05);
    let eq = cc_trace(cfg, ModelKind::SpmEq, 0.05);
    let t2: Vec<f64> = spm20.records.iter().map(|r| r.t).collect();
    let v2: Vec<f64> = spm20.records.iter().map(|r| r.voltage_v).collect();
    let eq20 = rmse_mv(&eq, &t2, &v2).unwrap();
    println!("{label}: eq20 {eq20:.2} gap3C {gap3c:.2}");
}

fn cb() -> RunConfig {
    let mut c = RunConfig::default();
    c.cell.neg.c_s_max = 52000.0;
    c.cell.neg.d_s = 6.0e-14;
    c.cell.neg.k_n = 5.8e-11;
    c.cell.pos.k_n = 6.5e-12;
    c.cell.pos.sigma_s = 20.0;
    c.cell.kappa_e = 200.0;
    c.cell.t_plus = 0.9;
    c.cell.f_activity_term = 0.05;
    c.cell.d_e = 3.2e-11;
    c.cell.r_f = 1.0e-4;
    c.initial.stoich_neg = 0.55;
    c.initial.stoich_pos = 0.35;
    c.limits.v_min = 3.44;
    c.limits.v_max = 4.30;
    // Staging-like steps inside the swept windows: strong localized
    // signatures for the solid diffusion time constants.
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

fn main() {
    let c1 = cb();
    fisher(&c1, "CB+steps            ");
    trio(&c1, "CB+steps");
    let mut c2 = cb();
    c2.cell.neg.k_n = 2.4e-11;
    c2.cell.r_f = 3.0e-5;
    fisher(&c2, "CB+steps k-2.4 Rf.3 ");
    trio(&c2, "CB+steps k-2.4 Rf.3");
}
