pub mod fisher_inc { include!("fisher.rs"); }
pub mod dbg2_inc { include!("dbg2.rs"); }
use dbg2_inc::hierarchy;
use fisher_inc::fisher;
use p2dfit::config::{OcpConfig, RunConfig};

pub fn z(de: f64, kn: f64, kp: f64, dsp: f64, rf: f64) -> RunConfig {
    let mut c = RunConfig::default();
    c.cell.i_ref = 5.2;
    c.cell.neg.c_s_max = 33100.0;
    c.cell.neg.d_s = 6.0e-14;
    c.cell.neg.k_n = kn;
    c.cell.pos.d_s = dsp;
    c.cell.pos.k_n = kp;
    c.cell.r_f = rf;
    c.cell.d_e = de;
    c.initial.stoich_neg = 0.93;
    c.initial.stoich_pos = 0.34;
    c.limits.v_min = 3.25;
    c.limits.v_max = 4.05;
    c.ocp.pos = OcpConfig::Analytic {
        constant: 3.58,
        exp_terms: vec![[0.5, -45.0]],
        sigmoid_terms: vec![[0.12, 14.0, 0.35], [0.06, 40.0, 0.55], [0.45, 9.0, 0.92]],
    };
    c
}

#[allow(dead_code)]
fn main() {
    let a = z(6.5e-11, 1.2e-10, 1.05e-11, 2.0e-15, 2.5e-4);
    hierarchy(&a, "R1 de6.5 k-12 k+1.05 ds+2e-15 rf2.5");
    fisher(&a, "R1");
    let b = z(5.0e-11, 1.2e-10, 1.05e-11, 2.0e-15, 2.5e-4);
    hierarchy(&b, "R2 de5.0                          ");
    fisher(&b, "R2");
}
