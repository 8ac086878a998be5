use nalgebra::DMatrix;
use p2dfit::config::{ModelKind, RunConfig};
use p2dfit::fit::objective::{extract_all, scenario_residuals, stage_subset};
use p2dfit::fit::{generate_synthetic, Evaluation, ScenarioKind};
use p2dfit::params::group;

pub fn fisher(cfg: &RunConfig, label: &str) {
    let mut cfg = cfg.clone();
    cfg.synth.rates_c = vec![0.2, 1.0 / 3.0, 0.5];
    cfg.synth.noise_mv = 0.0;
    let truth = group(&cfg.cell).unwrap();
    let (data, _) = generate_synthetic(&cfg, &truth).unwrap();
    let eps = data.episodes_for(ScenarioKind::S);
    let subset = stage_subset(ScenarioKind::S);
    let theta0 = extract_all(&subset, &truth);
    let r0 = match scenario_residuals(&eps, &data, &cfg, &truth, ModelKind::Spm) {
        Evaluation::Residuals(r) => r,
        _ => panic!("penalty at truth"),
    };
    let sysrms = (r0.iter().map(|v| v * v).sum::<f64>() / r0.len() as f64).sqrt() * 1e3;
    let p = subset.len();
    let h = 1e-4;
    let mut cols = Vec::new();
    for j in 0..p {
        let mut g = truth;
        let mut th = theta0.clone();
        th[j] *= 1.0 + h;
        p2dfit::fit::objective::apply_all(&subset, &th, &mut g, &truth);
        let rj = match scenario_residuals(&eps, &data, &cfg, &g, ModelKind::Spm) {
            Evaluation::Residuals(r) => r,
            _ => panic!("penalty"),
        };
        // d residual / d ln theta
        let col: Vec<f64> = rj.iter().zip(&r0).map(|(a, b)| (a - b) / h).collect();
        cols.push(col);
    }
    let mut jtj = DMatrix::<f64>::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            jtj[(a, b)] = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
        }
    }
    let sigma = 1e-3;
    print!("{label}: sys {sysrms:.3} mV | CRLB%:");
    match jtj.clone().try_inverse() {
        Some(inv) => {
            for (j, par) in subset.iter().enumerate() {
                let std = sigma * inv[(j, j)].sqrt() * 100.0;
                print!(" {} {:.2}", par.name().replace("tau_", "").replace("_pos", "+").replace("_neg", "-"), std);
            }
        }
        None => print!(" singular"),
    }
    // Also bias estimate: delta = (JtJ)^-1 Jt r0 (systematic projection)
    let mut g = vec![0.0; p];
    for a in 0..p {
        g[a] = cols[a].iter().zip(&r0).map(|(x, y)| x * y).sum();
    }
    if let Some(inv) = jtj.try_inverse() {
        print!(" | sys-bias%:");
        for a in 0..p {
            let mut d = 0.0;
            for b in 0..p {
                d += inv[(a, b)] * g[b];
            }
            print!(" {:+.2}", -d * 100.0);
        }
    }
    println!();
}

#[allow(dead_code)]
fn main() {
    let mut base = RunConfig::default();
    base.cell.kappa_e = 200.0;
    base.cell.t_plus = 0.9;
    base.cell.f_activity_term = 0.05;
    base.cell.r_f = 2.0e-4;
    base.cell.pos.k_n = 1.07e-11;
    base.cell.neg.k_n = 9.5e-11;
    base.cell.d_e = 3.5e-11;
    base.limits.v_min = 3.3;
    fisher(&base, "vmin3.3");
    let mut c = base.clone();
    c.limits.v_min = 3.0;
    fisher(&c, "vmin3.0");
}
