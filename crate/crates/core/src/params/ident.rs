//! Log-linear identifiability analysis of the grouping map.
//!
//! Taking logarithms of the grouped-parameter expressions turns the grouping
//! map into a linear system `log(theta_group) = M log(theta_phys)`. A
//! rank-deficient column space of `M` means an infinite family of physical
//! sets produces the same grouped set; the right-nullspace directions are the
//! generators of those scaling families. All eliminations run over exact
//! rationals so rank and nullspace are free of floating-point ambiguity.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use std::fmt;

use super::PhysicalParameterSet;

/// One entry of the exponent matrix: either an exact rational constant or
/// the affine placeholder `1 - b` (Bruggeman coefficient left symbolic).
#[derive(Debug, Clone, PartialEq)]
pub enum ExponentEntry {
    Const(BigRational),
    OneMinusB,
}

impl ExponentEntry {
    fn int(v: i64) -> Self {
        ExponentEntry::Const(BigRational::from_integer(BigInt::from(v)))
    }

    fn evaluate(&self, b: &BigRational) -> BigRational {
        match self {
            ExponentEntry::Const(c) => c.clone(),
            ExponentEntry::OneMinusB => BigRational::one() - b,
        }
    }
}

impl fmt::Display for ExponentEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExponentEntry::Const(c) => write!(f, "{c}"),
            ExponentEntry::OneMinusB => write!(f, "1-b"),
        }
    }
}

/// Exponent matrix of a log-linear grouping system, with row and column
/// labels for reporting.
#[derive(Debug, Clone)]
pub struct ExponentMatrix {
    pub rows: Vec<Vec<ExponentEntry>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

/// Column order of the electrolyte-phase system. The epsilon_e columns are
/// ordered (+, s, -) so each tau_d,e / nu_e row pairs its thickness and
/// porosity entries region by region.
pub const P2D_PHYS_COLUMNS: [&str; 10] =
    ["L+", "Ls", "L-", "eps_e+", "eps_e_s", "eps_e-", "D_e", "eps_s+", "eps_s-", "A"];

/// Row order: three electrolyte diffusion time constants, three input
/// coefficients, two electrode charge times.
pub const P2D_GROUP_ROWS: [&str; 8] = [
    "tau_d_e+", "tau_d_e_s", "tau_d_e-", "nu_e+", "nu_e_s", "nu_e-", "tau_c_s+", "tau_c_s-",
];

/// The 8x10 exponent matrix of the electrolyte-phase grouping system.
pub fn identifiability_matrix() -> ExponentMatrix {
    use ExponentEntry as E;
    let z = || E::int(0);
    let rows = vec![
        // log tau_d_e^m = 2 log L^m + (1-b) log eps_e^m - log D_e
        vec![E::int(2), z(), z(), E::OneMinusB, z(), z(), E::int(-1), z(), z(), z()],
        vec![z(), E::int(2), z(), z(), E::OneMinusB, z(), E::int(-1), z(), z(), z()],
        vec![z(), z(), E::int(2), z(), z(), E::OneMinusB, E::int(-1), z(), z(), z()],
        // log nu_e^m = log L^m + log eps_e^m
        vec![E::int(1), z(), z(), E::int(1), z(), z(), z(), z(), z(), z()],
        vec![z(), E::int(1), z(), z(), E::int(1), z(), z(), z(), z(), z()],
        vec![z(), z(), E::int(1), z(), z(), E::int(1), z(), z(), z(), z()],
        // log tau_c_s^± = log L^± + log eps_s^± + log A
        vec![E::int(1), z(), z(), z(), z(), z(), z(), E::int(1), z(), E::int(1)],
        vec![z(), z(), E::int(1), z(), z(), z(), z(), z(), E::int(1), E::int(1)],
    ];
    ExponentMatrix {
        rows,
        row_labels: P2D_GROUP_ROWS.iter().map(|s| s.to_string()).collect(),
        col_labels: P2D_PHYS_COLUMNS.iter().map(|s| s.to_string()).collect(),
    }
}

/// The 2x3 solid-phase system over (R_s, D_s, k_n):
/// log tau_d_s = 2 log R_s - log D_s, log tau_k_bar = log R_s - log k_n.
pub fn solid_phase_matrix() -> ExponentMatrix {
    use ExponentEntry as E;
    ExponentMatrix {
        rows: vec![
            vec![E::int(2), E::int(-1), E::int(0)],
            vec![E::int(1), E::int(0), E::int(-1)],
        ],
        row_labels: vec!["tau_d_s".into(), "tau_k_bar".into()],
        col_labels: vec!["R_s".into(), "D_s".into(), "k_n".into()],
    }
}

impl ExponentMatrix {
    /// Build a matrix from plain numeric exponents (user-supplied groupings).
    pub fn from_numeric(rows: Vec<Vec<f64>>, row_labels: Vec<String>, col_labels: Vec<String>) -> Self {
        let rows = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|v| ExponentEntry::Const(BigRational::from_float(v).expect("finite exponent")))
                    .collect()
            })
            .collect();
        ExponentMatrix { rows, row_labels, col_labels }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Evaluate symbolic entries at a numeric Bruggeman coefficient.
    pub fn evaluate(&self, b: f64) -> Vec<Vec<BigRational>> {
        let b = BigRational::from_float(b).expect("finite b");
        self.rows.iter().map(|r| r.iter().map(|e| e.evaluate(&b)).collect()).collect()
    }

    pub fn rank(&self, b: f64) -> usize {
        let mut m = self.evaluate(b);
        reduce_to_rref(&mut m)
    }

    /// Basis of the right-nullspace at the given b. Empty for a full-column-rank
    /// matrix. Vectors are scaled to coprime integer entries.
    pub fn nullspace(&self, b: f64) -> Vec<Vec<BigRational>> {
        rational_nullspace(self.evaluate(b))
    }
}

impl fmt::Display for ExponentMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells: Vec<Vec<String>> =
            self.rows.iter().map(|r| r.iter().map(|e| e.to_string()).collect()).collect();
        let label_w = self.row_labels.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut widths: Vec<usize> = self.col_labels.iter().map(|s| s.len()).collect();
        for row in &cells {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        write!(f, "{:label_w$} ", "")?;
        for (lbl, w) in self.col_labels.iter().zip(&widths) {
            write!(f, " {lbl:>w$}")?;
        }
        writeln!(f)?;
        for (lbl, row) in self.row_labels.iter().zip(&cells) {
            write!(f, "{lbl:label_w$} ")?;
            for (cell, w) in row.iter().zip(&widths) {
                write!(f, " {cell:>w$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Reduce to reduced row echelon form in place; returns the rank.
fn reduce_to_rref(m: &mut [Vec<BigRational>]) -> usize {
    let nrows = m.len();
    let ncols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..ncols {
        let Some(pivot) = (rank..nrows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        let p = m[rank][col].clone();
        for entry in &mut m[rank] {
            *entry = &*entry / &p;
        }
        let pivot_row = m[rank].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != rank && !row[col].is_zero() {
                let factor = row[col].clone();
                for (entry, pe) in row.iter_mut().zip(&pivot_row) {
                    *entry = &*entry - pe * &factor;
                }
            }
        }
        rank += 1;
        if rank == nrows {
            break;
        }
    }
    rank
}

/// Right-nullspace basis via RREF; one basis vector per free column.
fn rational_nullspace(mut m: Vec<Vec<BigRational>>) -> Vec<Vec<BigRational>> {
    let ncols = m.first().map_or(0, Vec::len);
    let rank = reduce_to_rref(&mut m);
    let mut pivot_cols = Vec::with_capacity(rank);
    let mut col = 0;
    for row in 0..rank {
        while col < ncols && m[row][col].is_zero() {
            col += 1;
        }
        pivot_cols.push(col);
        col += 1;
    }
    let mut basis = Vec::new();
    for free in 0..ncols {
        if pivot_cols.contains(&free) {
            continue;
        }
        let mut v = vec![BigRational::zero(); ncols];
        v[free] = BigRational::one();
        for (row, &pc) in pivot_cols.iter().enumerate() {
            v[pc] = -m[row][free].clone();
        }
        basis.push(scale_to_integers(v));
    }
    basis
}

fn scale_to_integers(v: Vec<BigRational>) -> Vec<BigRational> {
    let mut denom_lcm = BigInt::one();
    for x in &v {
        denom_lcm = denom_lcm.lcm(x.denom());
    }
    let scaled: Vec<BigInt> =
        v.iter().map(|x| (x * BigRational::from_integer(denom_lcm.clone())).to_integer()).collect();
    let mut g = BigInt::zero();
    for x in &scaled {
        g = g.gcd(x);
    }
    if g.is_zero() {
        g = BigInt::one();
    }
    scaled.into_iter().map(|x| BigRational::from_integer(x / &g)).collect()
}

/// One log-space direction that leaves every grouped parameter of the system
/// fixed. Exponentiating it yields a one-parameter family of physical sets.
#[derive(Debug, Clone)]
pub struct ScalingDirection {
    /// Exponent per physical column: the column's multiplier is
    /// `lambda^exponent`.
    pub exponents: Vec<f64>,
    pub col_labels: Vec<String>,
}

/// Nullspace basis of a grouping exponent matrix, as scaling directions.
/// An empty result means no scaling freedom (globally identifiable up to the
/// modeled structure).
pub fn nullspace_scalings(m: &ExponentMatrix, b: f64) -> Vec<ScalingDirection> {
    m.nullspace(b)
        .into_iter()
        .map(|v| ScalingDirection {
            exponents: v.iter().map(|r| r.to_f64().expect("small integer exponent")).collect(),
            col_labels: m.col_labels.clone(),
        })
        .collect()
}

/// Apply a scaling direction of the electrolyte-phase system (columns in
/// [`P2D_PHYS_COLUMNS`] order) to a physical set with family parameter
/// `lambda`. Companion parameters that have an independent physical knob
/// (kappa_e, sigma_s, R_f, t_plus, f_activity_term) are co-scaled so the
/// full grouped set stays fixed.
pub fn exponentiate_p2d_direction(
    phys: &PhysicalParameterSet,
    dir: &ScalingDirection,
    lambda: f64,
) -> crate::error::Result<PhysicalParameterSet> {
    assert_eq!(dir.exponents.len(), 10, "expected a direction over the 10 electrolyte-phase columns");
    let mult = |idx: usize| lambda.powf(dir.exponents[idx]);
    let mut out = *phys;
    out.pos.l *= mult(0);
    out.sep.l *= mult(1);
    out.neg.l *= mult(2);
    out.pos.eps_e *= mult(3);
    out.sep.eps_e *= mult(4);
    out.neg.eps_e *= mult(5);
    out.d_e *= mult(6);
    out.pos.eps_s *= mult(7);
    out.neg.eps_s *= mult(8);
    out.area *= mult(9);

    // In-nullspace directions rescale thicknesses and porosities uniformly;
    // read the multipliers off the transformed columns.
    let lam_l = mult(2);
    let lam_a = mult(9);
    let lam_eps_e = mult(5);
    let sigma_factor = lam_l / (lam_a * mult(8));
    out.kappa_e *= lam_l / (lam_a * lam_eps_e.powf(phys.b));
    out.neg.sigma_s *= sigma_factor;
    out.pos.sigma_s *= sigma_factor;
    out.r_f *= lam_a;
    out.t_plus = 1.0 - (1.0 - phys.t_plus) * lam_a;
    out.f_activity_term /= lam_a;

    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::nominal_cell;
    use crate::params::group;

    #[test]
    fn rank_is_eight_at_default_bruggeman() {
        let m = identifiability_matrix();
        assert_eq!(m.nrows(), 8);
        assert_eq!(m.ncols(), 10);
        assert_eq!(m.rank(1.5), 8);
    }

    #[test]
    fn nu_e_neg_row_structure() {
        let m = identifiability_matrix();
        let row = &m.evaluate(1.5)[5];
        let nonzero: Vec<usize> = row
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzero, vec![2, 5]); // L-, eps_e-
        assert!(row[2].is_one());
        assert!(row[5].is_one());
    }

    #[test]
    fn nullspace_dimension_is_two_and_annihilates_hand_generators() {
        let m = identifiability_matrix();
        let b = 1.5;
        let ns = m.nullspace(b);
        assert_eq!(ns.len(), 2);

        // Hand-written generators of the thickness (mu1) and area (mu2)
        // families over [L+, Ls, L-, eps_e+, eps_e_s, eps_e-, D_e, eps_s+, eps_s-, A].
        let g_mu1 = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0, b + 1.0, -1.0, -1.0, 0.0];
        let g_mu2 = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, -1.0, 1.0];
        let eval = m.evaluate(b);
        for g in [g_mu1, g_mu2] {
            for row in &eval {
                let dot: f64 = row.iter().zip(&g).map(|(r, &x)| r.to_f64().unwrap() * x).sum();
                assert!(dot.abs() < 1e-12, "generator not annihilated: {dot}");
            }
        }
    }

    #[test]
    fn solid_system_single_direction() {
        let m = solid_phase_matrix();
        let dirs = nullspace_scalings(&m, 1.5);
        assert_eq!(dirs.len(), 1);
        let v = &dirs[0].exponents;
        // Proportional to (1, 2, 1) over (R_s, D_s, k_n).
        let k = v[0];
        assert!(k != 0.0);
        assert!((v[1] / k - 2.0).abs() < 1e-14);
        assert!((v[2] / k - 1.0).abs() < 1e-14);
    }

    #[test]
    fn full_rank_grouping_has_no_scalings() {
        let m = ExponentMatrix::from_numeric(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
        );
        assert!(nullspace_scalings(&m, 1.5).is_empty());
    }

    #[test]
    fn exponentiated_directions_leave_grouped_set_fixed() {
        let mut phys = nominal_cell();
        // Headroom for the eps multipliers along the directions.
        phys.neg.eps_s = 0.2;
        phys.pos.eps_s = 0.2;
        phys.neg.eps_e = 0.2;
        phys.pos.eps_e = 0.2;
        phys.sep.eps_e = 0.3;
        let m = identifiability_matrix();
        let dirs = nullspace_scalings(&m, phys.b);
        assert_eq!(dirs.len(), 2);
        let g0 = group(&phys).unwrap();
        for dir in &dirs {
            for lambda in [0.9, 1.15] {
                let scaled = exponentiate_p2d_direction(&phys, dir, lambda).unwrap();
                let g1 = group(&scaled).unwrap();
                assert!(
                    g0.max_relative_difference(&g1) <= 1e-12,
                    "direction {:?} lambda {lambda} moved the grouped set",
                    dir.exponents
                );
            }
        }
    }

    #[test]
    fn display_shows_symbolic_entry() {
        let m = identifiability_matrix();
        let s = m.to_string();
        assert!(s.contains("1-b"));
        assert!(s.contains("tau_c_s-"));
    }
}
