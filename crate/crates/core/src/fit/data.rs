//! Cycling data sets, rate segmentation, and identification scenarios.
//!
//! Segmentation splits the samples into runs of constant current (CC or
//! rest) and varying current (CV). Each segment carries a C-rate label: CC
//! segments by their plateau magnitude, CV and rest segments by the label of
//! the adjacent CC step. Contiguous same-rate segments form an episode,
//! replayed from the rested initial state during fitting.

use serde::{Deserialize, Serialize};

use crate::config::ModelKind;
use crate::error::{Error, Result};

/// One measurement sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub current_a: f64,
    pub voltage_v: f64,
    pub temp_k: f64,
}

/// Control mode inferred for a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    Cc,
    Cv,
    Rest,
}

/// A contiguous sample range with one control mode and rate label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Sample index range [start, end).
    pub start: usize,
    pub end: usize,
    pub kind: SegmentKind,
    /// Plateau current [A] for CC (signed), 0 for rest; CV stores the entry
    /// current.
    pub current_a: f64,
    /// C-rate label (magnitude, from the owning CC step).
    pub rate_c: f64,
}

/// The four identification scenarios, in stage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Pseudo-equilibrium currents (<= C/20): SPM_eq fits the charge times.
    Eq,
    /// Low currents (C/20, C/2]: SPM fits solid diffusion, kinetics, film.
    S,
    /// Mid currents (C/2, 1C]: P2D fits the shared electrolyte parameters.
    E,
    /// High currents (> 1C): P2DT fits the activation energies.
    T,
}

impl ScenarioKind {
    pub const STAGES: [ScenarioKind; 4] =
        [ScenarioKind::Eq, ScenarioKind::S, ScenarioKind::E, ScenarioKind::T];

    pub fn model(self) -> ModelKind {
        match self {
            ScenarioKind::Eq => ModelKind::SpmEq,
            ScenarioKind::S => ModelKind::Spm,
            ScenarioKind::E => ModelKind::P2d,
            ScenarioKind::T => ModelKind::P2dt,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Eq => "eq",
            ScenarioKind::S => "s",
            ScenarioKind::E => "e",
            ScenarioKind::T => "T",
        }
    }

    /// Classify a C-rate against the scenario thresholds.
    pub fn of_rate(rate_c: f64) -> ScenarioKind {
        // A small tolerance keeps nominal rates on their intended side of
        // the thresholds despite float formatting.
        let r = rate_c * (1.0 - 1e-9);
        if r <= 0.05 {
            ScenarioKind::Eq
        } else if r <= 0.5 {
            ScenarioKind::S
        } else if r <= 1.0 {
            ScenarioKind::E
        } else {
            ScenarioKind::T
        }
    }
}

/// A scenario paired with the model kind its stage uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub model: ModelKind,
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        Scenario { kind, model: kind.model() }
    }
}

/// A maximal run of same-rate segments; episodes replay from the rested
/// initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub rate_c: f64,
    pub scenario: ScenarioKind,
    pub segments: Vec<Segment>,
}

/// Cycling data with its segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub samples: Vec<Sample>,
    pub segments: Vec<Segment>,
}

impl DataSet {
    /// Build a data set and segment it. The sample times must be strictly
    /// increasing and all values finite.
    pub fn new(samples: Vec<Sample>, i_1c: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::config("empty data set"));
        }
        for pair in samples.windows(2) {
            if !(pair[1].t > pair[0].t) {
                return Err(Error::config(format!(
                    "sample times must be strictly increasing ({} then {})",
                    pair[0].t, pair[1].t
                )));
            }
        }
        for s in &samples {
            if ![s.t, s.current_a, s.voltage_v, s.temp_k].iter().all(|v| v.is_finite()) {
                return Err(Error::config(format!("non-finite sample at t = {}", s.t)));
            }
        }
        let segments = segment(&samples, i_1c)?;
        Ok(DataSet { samples, segments })
    }

    /// Group contiguous same-rate segments into episodes.
    pub fn episodes(&self) -> Vec<Episode> {
        let mut out: Vec<Episode> = Vec::new();
        for seg in &self.segments {
            match out.last_mut() {
                Some(ep) if relative_eq(ep.rate_c, seg.rate_c) => ep.segments.push(*seg),
                _ => out.push(Episode {
                    rate_c: seg.rate_c,
                    scenario: ScenarioKind::of_rate(seg.rate_c),
                    segments: vec![*seg],
                }),
            }
        }
        out
    }

    pub fn episodes_for(&self, scenario: ScenarioKind) -> Vec<Episode> {
        self.episodes().into_iter().filter(|e| e.scenario == scenario).collect()
    }

    /// Parse the CSV form (`time_s,current_A,voltage_V,temperature_K`,
    /// `#` comments allowed). Errors carry the 1-based line number.
    pub fn from_csv(text: &str, i_1c: f64) -> Result<Self> {
        let mut samples = Vec::new();
        let mut header_seen = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen && line.starts_with("time_s") {
                header_seen = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 4 {
                return Err(Error::config(format!(
                    "data line {}: expected 4 columns (time_s,current_A,voltage_V,temperature_K), got {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let mut vals = [0.0; 4];
            for (k, col) in cols[..4].iter().enumerate() {
                vals[k] = col.trim().parse::<f64>().map_err(|e| {
                    Error::config(format!("data line {}: column {}: {e}", lineno + 1, k + 1))
                })?;
            }
            samples.push(Sample { t: vals[0], current_a: vals[1], voltage_v: vals[2], temp_k: vals[3] });
        }
        DataSet::new(samples, i_1c)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "time_s,current_A,voltage_V,temperature_K")?;
        for s in &self.samples {
            writeln!(w, "{},{},{},{}", s.t, s.current_a, s.voltage_v, s.temp_k)?;
        }
        Ok(())
    }
}

fn relative_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-30)
}

/// Split samples into constant-current runs (CC/rest) and varying runs (CV),
/// then label every segment with a C-rate.
///
/// A plateau is a maximal run of samples within tolerance of its first
/// sample; single-sample leftovers between plateaus are the decaying CV
/// regions and are merged into varying segments.
pub fn segment(samples: &[Sample], i_1c: f64) -> Result<Vec<Segment>> {
    if !(i_1c > 0.0) {
        return Err(Error::config(format!("unknown 1C current: {i_1c}")));
    }
    let tol = 2e-6 * i_1c;
    let n = samples.len();

    // Plateau runs: (start, end) half-open.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    for k in 1..=n {
        if k == n || (samples[k].current_a - samples[start].current_a).abs() > tol {
            runs.push((start, k));
            start = k;
        }
    }

    // Merge consecutive short runs into varying (CV) segments.
    let mut raw: Vec<Segment> = Vec::new();
    let mut i = 0usize;
    while i < runs.len() {
        let (s, e) = runs[i];
        if e - s >= 2 {
            let plateau = samples[s].current_a;
            let kind = if plateau.abs() <= tol { SegmentKind::Rest } else { SegmentKind::Cc };
            raw.push(Segment {
                start: s,
                end: e,
                kind,
                current_a: if kind == SegmentKind::Rest { 0.0 } else { plateau },
                rate_c: 0.0,
            });
            i += 1;
        } else {
            let mut j = i;
            while j < runs.len() && runs[j].1 - runs[j].0 < 2 {
                j += 1;
            }
            raw.push(Segment {
                start: s,
                end: runs[j - 1].1,
                kind: SegmentKind::Cv,
                current_a: samples[s].current_a,
                rate_c: 0.0,
            });
            i = j;
        }
    }

    // Rate labels: CC from its plateau; CV and rest inherit from the nearest
    // preceding CC, or the following one at the head of the file.
    let cc_rate = |seg: &Segment| (seg.current_a / i_1c).abs();
    let mut labels = vec![None; raw.len()];
    let mut last = None;
    for (i, seg) in raw.iter().enumerate() {
        if seg.kind == SegmentKind::Cc {
            last = Some(cc_rate(seg));
        }
        labels[i] = last;
    }
    let mut next = None;
    for (i, seg) in raw.iter().enumerate().rev() {
        if seg.kind == SegmentKind::Cc {
            next = Some(cc_rate(seg));
        }
        if labels[i].is_none() {
            labels[i] = next;
        }
    }
    let mut segments = raw;
    for (seg, label) in segments.iter_mut().zip(labels) {
        seg.rate_c = label.ok_or_else(|| Error::config("data set contains no constant-current step"))?;
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mk(t: f64, i: f64) -> Sample {
        Sample { t, current_a: i, voltage_v: 3.7, temp_k: 298.15 }
    }

    #[test]
    fn scenario_thresholds_match_the_rate_table() {
        assert_eq!(ScenarioKind::of_rate(0.05), ScenarioKind::Eq);
        assert_eq!(ScenarioKind::of_rate(0.2), ScenarioKind::S);
        assert_eq!(ScenarioKind::of_rate(1.0 / 3.0), ScenarioKind::S);
        assert_eq!(ScenarioKind::of_rate(0.5), ScenarioKind::S);
        assert_eq!(ScenarioKind::of_rate(1.0), ScenarioKind::E);
        assert_eq!(ScenarioKind::of_rate(3.0), ScenarioKind::T);
    }

    #[test]
    fn scenario_models_follow_the_scenario_table() {
        assert_eq!(ScenarioKind::Eq.model(), ModelKind::SpmEq);
        assert_eq!(ScenarioKind::S.model(), ModelKind::Spm);
        assert_eq!(ScenarioKind::E.model(), ModelKind::P2d);
        assert_eq!(ScenarioKind::T.model(), ModelKind::P2dt);
    }

    #[test]
    fn segmentation_splits_cc_cv_rest() {
        let mut samples = Vec::new();
        let mut t = 0.0;
        for _ in 0..10 {
            samples.push(mk(t, 1.7));
            t += 1.0;
        }
        // CV decay, continuous at the switch.
        let mut i = 1.7;
        for _ in 0..10 {
            i *= 0.8;
            samples.push(mk(t, i));
            t += 1.0;
        }
        // Rest (a jump down to 0).
        for _ in 0..5 {
            samples.push(mk(t, 0.0));
            t += 1.0;
        }
        let segs = segment(&samples, 3.4).unwrap();
        let kinds: Vec<SegmentKind> = segs.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, vec![SegmentKind::Cc, SegmentKind::Cv, SegmentKind::Rest]);
        for s in &segs {
            assert!((s.rate_c - 0.5).abs() < 1e-12, "rate label {}", s.rate_c);
        }
    }

    #[test]
    fn adjacent_plateaus_split_at_the_jump() {
        let mut samples = Vec::new();
        let mut t = 0.0;
        for _ in 0..5 {
            samples.push(mk(t, 3.4));
            t += 1.0;
        }
        for _ in 0..5 {
            samples.push(mk(t, -3.4));
            t += 1.0;
        }
        let segs = segment(&samples, 3.4).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].kind, SegmentKind::Cc);
        assert_eq!(segs[1].kind, SegmentKind::Cc);
        assert!(segs[1].current_a < 0.0);
    }

    #[test]
    fn leading_rest_inherits_the_following_label() {
        let mut samples = Vec::new();
        let mut t = 0.0;
        for _ in 0..5 {
            samples.push(mk(t, 0.0));
            t += 1.0;
        }
        for _ in 0..5 {
            samples.push(mk(t, 0.17));
            t += 1.0;
        }
        let segs = segment(&samples, 3.4).unwrap();
        assert_eq!(segs[0].kind, SegmentKind::Rest);
        assert!((segs[0].rate_c - 0.05).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_and_line_errors() {
        let text =
            "# seed = 7\ntime_s,current_A,voltage_V,temperature_K\n0,1.7,3.9,298.15\n1,1.7,3.89,298.15\n";
        let ds = DataSet::from_csv(text, 3.4).unwrap();
        assert_eq!(ds.samples.len(), 2);
        let mut out = Vec::new();
        ds.write_csv(&mut out, &["seed = 7".into()]).unwrap();
        let ds2 = DataSet::from_csv(std::str::from_utf8(&out).unwrap(), 3.4).unwrap();
        assert_eq!(ds, ds2);

        let bad = "time_s,current_A,voltage_V,temperature_K\n0,1.7,3.9,298.15\n1,xx,3.89,298.15\n";
        let err = DataSet::from_csv(bad, 3.4).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn empty_data_is_rejected() {
        assert!(DataSet::from_csv("time_s,current_A,voltage_V,temperature_K\n", 3.4).is_err());
    }

    #[test]
    fn non_monotone_times_are_rejected() {
        let text = "0,1,3.9,298\n0,1,3.9,298\n";
        assert!(DataSet::from_csv(text, 3.4).is_err());
    }
}
