mod fullpipe_inc { include!("fullpipe.rs"); }
use fullpipe_inc::{perturbed, r4};
use p2dfit::fit::objective::{extract_all, stage_subset};
use p2dfit::fit::pipeline::fit_stage;
use p2dfit::fit::{generate_synthetic, ScenarioKind};
use p2dfit::params::group;

fn main() {
    let cfg = r4();
    let truth = group(&cfg.cell).unwrap();
    let (data, _) = generate_synthetic(&cfg, &truth).unwrap();
    let start = perturbed(&truth, cfg.fit.perturbation);
    let subset = stage_subset(ScenarioKind::S);

    // A: stage 2 with exact-truth tau_c (frozen), S-subset from perturbed.
    let mut a_start = truth;
    for p in &subset {
        p.apply(p.extract(&start), &mut a_start, &truth);
    }
    let (res, fitted) = fit_stage(&data, &cfg, ScenarioKind::S, &a_start, &truth).unwrap();
    print!("A truth-tau_c : it{} rmse {:.3} |", res.iterations, res.rmse_mv);
    for ((p, f), t) in subset.iter().zip(extract_all(&subset, &fitted)).zip(extract_all(&subset, &truth)) {
        print!(" {}{:+.2}%", p.name().replace("tau_", ""), (f / t - 1.0) * 100.0);
    }
    println!();

    // B: same but tau_c biased by the eq-stage's landing (+0.24% / -0.41%).
    let mut b_start = a_start;
    b_start.pos.tau_c_s = truth.pos.tau_c_s * 1.0024;
    b_start.neg.tau_c_s = truth.neg.tau_c_s * 0.9959;
    let (res, fitted) = fit_stage(&data, &cfg, ScenarioKind::S, &b_start, &truth).unwrap();
    print!("B biased tau_c: it{} rmse {:.3} |", res.iterations, res.rmse_mv);
    for ((p, f), t) in subset.iter().zip(extract_all(&subset, &fitted)).zip(extract_all(&subset, &truth)) {
        print!(" {}{:+.2}%", p.name().replace("tau_", ""), (f / t - 1.0) * 100.0);
    }
    println!();
}
