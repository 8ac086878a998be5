//! Open-circuit potential curves U(stoichiometry) for each electrode.
//!
//! Curves come either as an analytic sum of constant, exponential and sigmoid
//! terms, or as monotone tabulated samples interpolated with a
//! Fritsch-Carlson monotone piecewise cubic. Evaluation clamps the
//! stoichiometry into [1e-6, 1 - 1e-6] because Newton iterations may
//! transiently overshoot the physical range.

use serde::{Deserialize, Serialize};

use crate::constants::EPS_STOICH;
use crate::error::{Error, Result};
use crate::params::Electrode;

/// One exponential term `a * exp(b * x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub a: f64,
    pub b: f64,
}

/// One sigmoid term `c / (1 + exp(d * (x - e)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidTerm {
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Form {
    Analytic {
        constant: f64,
        exp_terms: Vec<ExpTerm>,
        sigmoid_terms: Vec<SigmoidTerm>,
    },
    Table {
        x: Vec<f64>,
        y: Vec<f64>,
        /// Fritsch-Carlson node slopes.
        slopes: Vec<f64>,
    },
}

/// An electrode open-circuit potential curve.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpCurve {
    pub electrode: Electrode,
    form: Form,
}

impl OcpCurve {
    pub fn analytic(
        electrode: Electrode,
        constant: f64,
        exp_terms: Vec<ExpTerm>,
        sigmoid_terms: Vec<SigmoidTerm>,
    ) -> Result<Self> {
        let curve = OcpCurve {
            electrode,
            form: Form::Analytic { constant, exp_terms, sigmoid_terms },
        };
        for probe in [EPS_STOICH, 0.25, 0.5, 0.75, 1.0 - EPS_STOICH] {
            if !curve.eval(probe).is_finite() {
                return Err(Error::config(format!(
                    "analytic OCP for {:?} is not finite at stoichiometry {probe}",
                    electrode
                )));
            }
        }
        Ok(curve)
    }

    /// Build a tabulated curve from (stoichiometry, volts) samples. The
    /// stoichiometry column must be strictly increasing.
    pub fn tabulated(electrode: Electrode, points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::config(format!(
                "tabulated OCP for {electrode:?} needs at least 2 points, got {}",
                points.len()
            )));
        }
        let x: Vec<f64> = points.iter().map(|p| p.0).collect();
        let y: Vec<f64> = points.iter().map(|p| p.1).collect();
        for w in x.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::config(format!(
                    "tabulated OCP for {electrode:?}: stoichiometry column must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::config(format!("tabulated OCP for {electrode:?} contains non-finite values")));
        }
        let slopes = fritsch_carlson_slopes(&x, &y);
        Ok(OcpCurve { electrode, form: Form::Table { x, y, slopes } })
    }

    fn clamp(&self, stoich: f64) -> f64 {
        stoich.clamp(EPS_STOICH, 1.0 - EPS_STOICH)
    }

    /// Potential [V] at the given stoichiometry (clamped into the guarded
    /// domain).
    pub fn eval(&self, stoich: f64) -> f64 {
        let s = self.clamp(stoich);
        match &self.form {
            Form::Analytic { constant, exp_terms, sigmoid_terms } => {
                let mut u = *constant;
                for t in exp_terms {
                    u += t.a * (t.b * s).exp();
                }
                for t in sigmoid_terms {
                    u += t.c / (1.0 + (t.d * (s - t.e)).exp());
                }
                u
            }
            Form::Table { x, y, slopes } => {
                let (i, t, h) = locate(x, s);
                hermite(y[i], y[i + 1], slopes[i], slopes[i + 1], t, h).0
            }
        }
    }

    /// dU/dstoichiometry [V] at the given stoichiometry.
    pub fn eval_deriv(&self, stoich: f64) -> f64 {
        let s = self.clamp(stoich);
        match &self.form {
            Form::Analytic { exp_terms, sigmoid_terms, .. } => {
                let mut du = 0.0;
                for t in exp_terms {
                    du += t.a * t.b * (t.b * s).exp();
                }
                for t in sigmoid_terms {
                    let z = (t.d * (s - t.e)).exp();
                    let denom = 1.0 + z;
                    du -= t.c * t.d * z / (denom * denom);
                }
                du
            }
            Form::Table { x, y, slopes } => {
                let (i, t, h) = locate(x, s);
                hermite(y[i], y[i + 1], slopes[i], slopes[i + 1], t, h).1
            }
        }
    }
}

/// Find the interval containing s (clamping into the table domain); returns
/// (interval index, local coordinate in [0,1], interval width).
fn locate(x: &[f64], s: f64) -> (usize, f64, f64) {
    let s = s.clamp(x[0], x[x.len() - 1]);
    let mut i = match x.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    };
    if i >= x.len() - 1 {
        i = x.len() - 2;
    }
    let h = x[i + 1] - x[i];
    ((i), (s - x[i]) / h, h)
}

/// Cubic Hermite value and derivative on a unit interval of width h.
fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, t: f64, h: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
    let d00 = 6.0 * t2 - 6.0 * t;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d01 = -6.0 * t2 + 6.0 * t;
    let d11 = 3.0 * t2 - 2.0 * t;
    let deriv = (d00 * y0 + d01 * y1) / h + d10 * m0 + d11 * m1;
    (value, deriv)
}

/// Monotonicity-preserving node slopes (Fritsch & Carlson 1980).
fn fritsch_carlson_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n - 1];
    for i in 0..n - 1 {
        d[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    }
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        m[i] = if d[i - 1] * d[i] <= 0.0 { 0.0 } else { 0.5 * (d[i - 1] + d[i]) };
    }
    for i in 0..n - 1 {
        if d[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / d[i];
        let b = m[i + 1] / d[i];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * d[i];
            m[i + 1] = tau * b * d[i];
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn linear_table() -> OcpCurve {
        OcpCurve::tabulated(Electrode::Neg, &[(0.0, 1.0), (1.0, 0.0)]).unwrap()
    }

    #[test]
    fn linear_interpolation_midpoint() {
        assert_relative_eq!(linear_table().eval(0.5), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn interpolant_reproduces_knots() {
        let pts = [(0.0, 1.2), (0.2, 0.9), (0.45, 0.6), (0.8, 0.25), (1.0, 0.1)];
        let curve = OcpCurve::tabulated(Electrode::Pos, &pts).unwrap();
        for (x, y) in &pts[1..pts.len() - 1] {
            assert_relative_eq!(curve.eval(*x), *y, max_relative = 1e-13);
        }
        // Endpoint evaluation happens at the clamped stoichiometry guard.
        assert_relative_eq!(curve.eval(crate::constants::EPS_STOICH), pts[0].1, epsilon = 1e-5);
    }

    #[test]
    fn empty_table_rejected() {
        assert!(OcpCurve::tabulated(Electrode::Neg, &[]).is_err());
        assert!(OcpCurve::tabulated(Electrode::Neg, &[(0.0, 1.0)]).is_err());
    }

    #[test]
    fn non_increasing_table_rejected() {
        assert!(OcpCurve::tabulated(Electrode::Neg, &[(0.0, 1.0), (0.0, 0.5)]).is_err());
        assert!(OcpCurve::tabulated(Electrode::Neg, &[(0.5, 1.0), (0.2, 0.5)]).is_err());
    }

    #[test]
    fn out_of_range_stoichiometry_is_clamped() {
        let curve = linear_table();
        assert!(curve.eval(-0.5).is_finite());
        assert_relative_eq!(curve.eval(1.5), curve.eval(1.0), max_relative = 1e-12);
    }

    #[test]
    fn analytic_derivative_matches_finite_difference() {
        let curve = crate::config::default_ocp(Electrode::Neg);
        let h = 1e-7;
        for s in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let fd = (curve.eval(s + h) - curve.eval(s - h)) / (2.0 * h);
            assert_relative_eq!(curve.eval_deriv(s), fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn table_derivative_matches_finite_difference() {
        let pts = [(0.0, 1.2), (0.25, 0.8), (0.5, 0.55), (0.75, 0.4), (1.0, 0.1)];
        let curve = OcpCurve::tabulated(Electrode::Neg, &pts).unwrap();
        let h = 1e-7;
        for s in [0.1, 0.4, 0.6, 0.9] {
            let fd = (curve.eval(s + h) - curve.eval(s - h)) / (2.0 * h);
            assert_relative_eq!(curve.eval_deriv(s), fd, max_relative = 1e-4);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn monotone_tables_stay_monotone(steps in proptest::collection::vec(0.01f64..1.0, 3..12)) {
            // Build a strictly decreasing table from positive increments.
            let mut x = vec![0.0];
            let mut y = vec![1.0];
            let n = steps.len();
            for (i, s) in steps.iter().enumerate() {
                x.push((i as f64 + 1.0) / n as f64);
                y.push(y.last().unwrap() - s);
            }
            let pts: Vec<(f64, f64)> = x.iter().cloned().zip(y.iter().cloned()).collect();
            let curve = OcpCurve::tabulated(Electrode::Neg, &pts).unwrap();
            let mut prev = f64::INFINITY;
            for k in 0..=400 {
                let s = k as f64 / 400.0;
                let v = curve.eval(s);
                prop_assert!(v <= prev + 1e-12, "not monotone at {s}: {v} > {prev}");
                prev = v;
            }
        }
    }
}
