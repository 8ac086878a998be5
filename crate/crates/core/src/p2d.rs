//! Normalized pseudo-two-dimensional model with optional Arrhenius thermal
//! coupling, solved as a semi-discrete DAE.
//!
//! Diffusion states (radial solid concentrations per electrode node and the
//! electrolyte concentration across the three regions) advance by implicit
//! Euler; the algebraic kinetics/potential system in (phi_s, phi_e, j_n) is
//! solved by a damped Newton iteration each step, with one outer fixed-point
//! sweep coupling the two. Everything is finite-volume, so lithium balances
//! telescope structurally:
//!
//! * the electrolyte source is the discrete divergence of the face ionic
//!   currents, which sums to zero across the cell exactly;
//! * each particle's average obeys `d<c>/dt = -j_n / tau_c_s` step by step.

use nalgebra::{DMatrix, DVector};

use crate::config::{GridConfig, SolverConfig};
use crate::constants::EPS_STOICH;
use crate::error::{Error, Result};
use crate::ocp::OcpCurve;
use crate::params::{Electrode, GroupedParameterSet, Region};
use crate::protocol::{CellModel, CutoffEvent, StepOutput, VoltageOutput};
use crate::radial::{solve_tridiagonal, RadialProfile, RadialWork};


/// Electrolyte concentration floor treated as depletion.
const C_E_FLOOR: f64 = 1e-6;
/// Newton step rejections tolerated before the time step is halved.
const MAX_BACKTRACKS: usize = 8;
/// Time-step halvings before a hard numerical error.
const MAX_HALVINGS: usize = 10;

/// Discretization of the cell: cells per region and radial cells per
/// particle, uniform spacing in the per-region normalized coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2dGrid {
    pub n_neg: usize,
    pub n_sep: usize,
    pub n_pos: usize,
    pub n_r: usize,
}

impl P2dGrid {
    pub fn new(n_neg: usize, n_sep: usize, n_pos: usize, n_r: usize) -> Result<Self> {
        for (name, n) in [("n_neg", n_neg), ("n_sep", n_sep), ("n_pos", n_pos), ("n_r", n_r)] {
            if n < 4 {
                return Err(Error::config(format!("grid {name} = {n} is below the minimum of 4")));
            }
        }
        Ok(P2dGrid { n_neg, n_sep, n_pos, n_r })
    }

    pub fn from_config(cfg: &GridConfig) -> Result<Self> {
        P2dGrid::new(cfg.n_x[0], cfg.n_x[1], cfg.n_x[2], cfg.n_r)
    }

    pub fn n_tot(&self) -> usize {
        self.n_neg + self.n_sep + self.n_pos
    }

    pub fn n_el(&self) -> usize {
        self.n_neg + self.n_pos
    }

    pub fn region_of(&self, cell: usize) -> Region {
        if cell < self.n_neg {
            Region::Neg
        } else if cell < self.n_neg + self.n_sep {
            Region::Sep
        } else {
            Region::Pos
        }
    }

    pub fn dx(&self, region: Region) -> f64 {
        match region {
            Region::Neg => 1.0 / self.n_neg as f64,
            Region::Sep => 1.0 / self.n_sep as f64,
            Region::Pos => 1.0 / self.n_pos as f64,
        }
    }

    /// Electrode-node index (0..n_el) -> x-cell index (0..n_tot).
    pub fn cell_of_node(&self, node: usize) -> usize {
        if node < self.n_neg {
            node
        } else {
            node + self.n_sep
        }
    }

    pub fn electrode_of_node(&self, node: usize) -> Electrode {
        if node < self.n_neg {
            Electrode::Neg
        } else {
            Electrode::Pos
        }
    }
}

/// Discretized state of the P2D model.
#[derive(Debug, Clone, PartialEq)]
pub struct P2dState {
    /// One radial profile per electrode node (negative nodes first).
    pub solid: Vec<RadialProfile>,
    /// Normalized electrolyte concentration per x-cell.
    pub c_e: Vec<f64>,
    /// Solid potential per electrode node [V].
    pub phi_s: Vec<f64>,
    /// Electrolyte potential per x-cell [V].
    pub phi_e: Vec<f64>,
    /// Normalized reaction current per electrode node.
    pub j_n: Vec<f64>,
    /// Simulation clock [s].
    pub t: f64,
    /// Last surface temperature input [K].
    pub temp_k: f64,
    /// Infinity norm of the algebraic residual after the last accepted step.
    pub last_residual: f64,
    /// Residual contraction ratio over the last two Newton iterations.
    pub last_newton_ratio: f64,
}

/// The P2D forward model (P2DT when `thermal` is set).
#[derive(Debug, Clone)]
pub struct P2d {
    pub grouped: GroupedParameterSet,
    pub ocp_neg: OcpCurve,
    pub ocp_pos: OcpCurve,
    /// Reference current [A].
    pub i_ref: f64,
    pub grid: P2dGrid,
    /// Evaluate tau_d_s, tau_k and beta_inv at the driver temperature.
    pub thermal: bool,
    pub solver: SolverConfig,
    pub state: P2dState,
    work: RadialWork,
}

impl P2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grouped: GroupedParameterSet,
        ocp_neg: OcpCurve,
        ocp_pos: OcpCurve,
        i_ref: f64,
        grid: P2dGrid,
        thermal: bool,
        solver: SolverConfig,
        stoich_neg: f64,
        stoich_pos: f64,
    ) -> Self {
        let state = init_equilibrium((stoich_neg, stoich_pos), &grouped, &grid, &ocp_neg, &ocp_pos);
        P2d { grouped, ocp_neg, ocp_pos, i_ref, grid, thermal, solver, state, work: RadialWork::default() }
    }

    fn temp(&self, temp_k: f64) -> f64 {
        if self.thermal {
            temp_k
        } else {
            self.grouped.t_ref
        }
    }

    fn kappa(&self, region: Region) -> f64 {
        self.grouped.region(region).kappa
    }

    /// Electrolyte-current face resistance between cells `left` and `right`
    /// (half-cell resistances in series; handles region interfaces).
    fn face_resistance_ie(&self, left: usize, right: usize) -> f64 {
        let rl = self.grid.region_of(left);
        let rr = self.grid.region_of(right);
        0.5 * self.grid.dx(rl) / self.kappa(rl) + 0.5 * self.grid.dx(rr) / self.kappa(rr)
    }

    /// Electrolyte-diffusion face resistance (flux (nu/tau) dc/dx continuous).
    fn face_resistance_diff(&self, left: usize, right: usize) -> f64 {
        let res = |cell: usize| {
            let r = self.grid.region_of(cell);
            let g = self.grouped.region(r);
            0.5 * self.grid.dx(r) * g.tau_d_e / g.nu_e
        };
        res(left) + res(right)
    }

    /// Face ionic currents including the zero outer boundaries; index k is
    /// the face left of cell k.
    fn ie_faces(&self, phi_e: &[f64], c_e: &[f64], temp: f64) -> Vec<f64> {
        let n = self.grid.n_tot();
        let emf_coeff = self.grouped.k_gamma_f * self.grouped.beta_inv_at(temp);
        let mut faces = vec![0.0; n + 1];
        for k in 1..n {
            let (l, r) = (k - 1, k);
            let drive = phi_e[l] - phi_e[r] + emf_coeff * (c_e[r] / c_e[l]).ln();
            faces[k] = drive / self.face_resistance_ie(l, r);
        }
        faces
    }

    /// Per-cell divergence of the face ionic currents. Sums to zero across
    /// the whole cell exactly (telescoping with zero outer faces).
    fn divergence(&self, faces: &[f64]) -> Vec<f64> {
        (0..self.grid.n_tot())
            .map(|i| (faces[i + 1] - faces[i]) / self.grid.dx(self.grid.region_of(i)))
            .collect()
    }

    /// Surface stoichiometry of an electrode node under reaction current j.
    fn surface_stoich(&self, node: usize, j: f64, temp: f64) -> f64 {
        let e = self.grid.electrode_of_node(node);
        let g = self.grouped.electrode(e);
        let tau_d = self.grouped.tau_d_s_at(e, temp);
        let g_surf = -tau_d / (3.0 * g.tau_c_s) * j;
        self.solid[node].surface(g_surf)
    }

    /// Implicit Euler update of the electrolyte concentrations with the given
    /// per-cell source (gamma / nu_e * j_src), starting from `c_from`.
    ///
    /// Solved in increment form: the lithium content change per step is
    /// exactly dt * gamma * sum(dx j_src), which telescopes to zero across
    /// the cell for divergence-form sources.
    fn elyte_step(&self, c_from: &[f64], j_src: &[f64], dt: f64) -> Vec<f64> {
        let n = self.grid.n_tot();
        let gamma = self.grouped.gamma;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let region = self.grid.region_of(i);
            let dx = self.grid.dx(region);
            let m = self.grouped.region(region).nu_e * dx;
            let g_w = if i == 0 { 0.0 } else { 1.0 / self.face_resistance_diff(i - 1, i) };
            let g_e = if i == n - 1 { 0.0 } else { 1.0 / self.face_resistance_diff(i, i + 1) };
            lower[i] = -g_w * dt;
            diag[i] = m + (g_w + g_e) * dt;
            upper[i] = -g_e * dt;
            let flux_w = if i == 0 { 0.0 } else { g_w * (c_from[i] - c_from[i - 1]) };
            let flux_e = if i == n - 1 { 0.0 } else { g_e * (c_from[i + 1] - c_from[i]) };
            rhs[i] = dt * (flux_e - flux_w + gamma * dx * j_src[i]);
        }
        solve_tridiagonal(&lower, &mut diag, &upper, &mut rhs);
        rhs.iter_mut().zip(c_from).for_each(|(d, c)| *d += c);
        rhs
    }

    /// Assemble and solve the algebraic system for (phi_s, phi_e, j_n).
    /// `c_outer` is the zero-flux advanced outer-cell concentration per node
    /// and `slope_c` the exact per-node response dc_ss/dj of the implicit
    /// radial step, so the solve is fully coupled to the solid surface.
    /// Returns the final residual norm and the contraction ratio of the last
    /// two iterations.
    fn newton_solve(&mut self, i_norm: f64, temp: f64, c_outer: &[f64], slope_c: &[f64]) -> Result<(f64, f64)> {
        let n_el = self.grid.n_el();
        let n_tot = self.grid.n_tot();
        let n = 2 * n_el + n_tot;
        let idx_phis = |k: usize| k;
        let idx_phie = |k: usize| n_el + k;
        let idx_j = |k: usize| n_el + n_tot + k;

        let beta_inv = self.grouped.beta_inv_at(temp);
        let beta = 1.0 / beta_inv;
        let emf_coeff = self.grouped.k_gamma_f * beta_inv;

        let i0_coeff: Vec<f64> = (0..n_el)
            .map(|k| {
                let e = self.grid.electrode_of_node(k);
                let g = self.grouped.electrode(e);
                let tau_k = self.grouped.tau_k_at(e, temp);
                3.0 * g.tau_c_s / tau_k * self.state.c_e[self.grid.cell_of_node(k)].max(0.0).sqrt()
            })
            .collect();
        // Exchange current, OCP, and their derivatives along c_ss(j); the
        // derivatives vanish at the stoichiometry clamp and the exchange
        // current floor.
        let kinetics = |k: usize, j: f64| -> (f64, f64, f64, f64) {
            let raw = c_outer[k] + slope_c[k] * j;
            let clamped = raw.clamp(EPS_STOICH, 1.0 - EPS_STOICH);
            let inside = raw == clamped;
            let curve = match self.grid.electrode_of_node(k) {
                Electrode::Neg => &self.ocp_neg,
                Electrode::Pos => &self.ocp_pos,
            };
            let u_ocp = curve.eval(clamped);
            let du_dj = if inside { curve.eval_deriv(clamped) * slope_c[k] } else { 0.0 };
            let s = (clamped * (1.0 - clamped)).sqrt();
            let mut i0 = i0_coeff[k] * s;
            let mut di0_dj =
                if inside { i0_coeff[k] * (1.0 - 2.0 * clamped) / (2.0 * s) * slope_c[k] } else { 0.0 };
            if i0 < crate::constants::EXCHANGE_CURRENT_FLOOR {
                i0 = crate::constants::EXCHANGE_CURRENT_FLOOR;
                di0_dj = 0.0;
            }
            (i0, di0_dj, u_ocp, du_dj)
        };

        let mut u = DVector::<f64>::zeros(n);
        for k in 0..n_el {
            u[idx_phis(k)] = self.state.phi_s[k];
            u[idx_j(k)] = self.state.j_n[k];
        }
        for k in 0..n_tot {
            u[idx_phie(k)] = self.state.phi_e[k];
        }

        let residual = |u: &DVector<f64>| -> DVector<f64> {
            let mut r = DVector::<f64>::zeros(n);
            // Solid-phase charge balance per electrode cell, with the first
            // negative-electrode row replaced by the gauge phi_s[0] = 0.
            for (el, n_cells, node0) in
                [(Electrode::Neg, self.grid.n_neg, 0usize), (Electrode::Pos, self.grid.n_pos, self.grid.n_neg)]
            {
                let dx = self.grid.dx(if el == Electrode::Neg { Region::Neg } else { Region::Pos });
                let sigma = self.grouped.electrode(el).sigma;
                let (left_bc, right_bc) = match el {
                    Electrode::Neg => (i_norm, 0.0),
                    Electrode::Pos => (0.0, i_norm),
                };
                for c in 0..n_cells {
                    let node = node0 + c;
                    let f_left = if c == 0 {
                        left_bc
                    } else {
                        sigma * (u[idx_phis(node - 1)] - u[idx_phis(node)]) / dx
                    };
                    let f_right = if c == n_cells - 1 {
                        right_bc
                    } else {
                        sigma * (u[idx_phis(node)] - u[idx_phis(node + 1)]) / dx
                    };
                    r[idx_phis(node)] = (f_right - f_left) + dx * u[idx_j(node)];
                }
            }
            r[idx_phis(0)] = u[idx_phis(0)]; // gauge

            // Electrolyte charge balance per x-cell.
            for i in 0..n_tot {
                let region = self.grid.region_of(i);
                let dx = self.grid.dx(region);
                let f = |k: usize| -> f64 {
                    if k == 0 || k == n_tot {
                        return 0.0;
                    }
                    let (l, rr) = (k - 1, k);
                    let drive = u[idx_phie(l)] - u[idx_phie(rr)]
                        + emf_coeff * (self.state.c_e[rr] / self.state.c_e[l]).ln();
                    drive / self.face_resistance_ie(l, rr)
                };
                let mut res = f(i + 1) - f(i);
                if let Some(node) = self.node_of_cell(i) {
                    res -= dx * u[idx_j(node)];
                }
                r[idx_phie(i)] = res;
            }

            // Butler-Volmer per electrode cell.
            for k in 0..n_el {
                let j = u[idx_j(k)];
                let (i0, _, u_ocp, _) = kinetics(k, j);
                let eta = u[idx_phis(k)] - u[idx_phie(self.grid.cell_of_node(k))] - u_ocp;
                r[idx_j(k)] = j - 2.0 * i0 * (beta * eta).sinh();
            }
            r
        };

        let mut r = residual(&u);
        let mut norm = r.amax();
        if !norm.is_finite() {
            return Err(Error::numerical("non-finite algebraic residual at step start"));
        }
        if norm <= self.solver.newton_tol {
            // Already consistent (e.g. resting at equilibrium): leave the
            // state untouched.
            return Ok((norm, 0.0));
        }

        let mut prev_norm;
        #[allow(unused_assignments)]
        let mut ratio = f64::NAN;
        for _iter in 0..self.solver.newton_max_iter {
            // Assemble the Jacobian.
            let mut jac = DMatrix::<f64>::zeros(n, n);
            for (el, n_cells, node0) in
                [(Electrode::Neg, self.grid.n_neg, 0usize), (Electrode::Pos, self.grid.n_pos, self.grid.n_neg)]
            {
                let dx = self.grid.dx(if el == Electrode::Neg { Region::Neg } else { Region::Pos });
                let sigma = self.grouped.electrode(el).sigma;
                for c in 0..n_cells {
                    let node = node0 + c;
                    if node == 0 {
                        continue; // gauge row filled below
                    }
                    let row = idx_phis(node);
                    if c > 0 {
                        jac[(row, idx_phis(node - 1))] -= sigma / dx;
                        jac[(row, idx_phis(node))] += sigma / dx;
                    }
                    if c < n_cells - 1 {
                        jac[(row, idx_phis(node))] += sigma / dx;
                        jac[(row, idx_phis(node + 1))] -= sigma / dx;
                    }
                    jac[(row, idx_j(node))] = dx;
                }
            }
            jac[(idx_phis(0), idx_phis(0))] = 1.0;

            for i in 0..n_tot {
                let row = idx_phie(i);
                if i > 0 {
                    let g = 1.0 / self.face_resistance_ie(i - 1, i);
                    jac[(row, idx_phie(i - 1))] -= g;
                    jac[(row, idx_phie(i))] += g;
                }
                if i < n_tot - 1 {
                    let g = 1.0 / self.face_resistance_ie(i, i + 1);
                    jac[(row, idx_phie(i))] += g;
                    jac[(row, idx_phie(i + 1))] -= g;
                }
                if let Some(node) = self.node_of_cell(i) {
                    let dx = self.grid.dx(self.grid.region_of(i));
                    jac[(row, idx_j(node))] = -dx;
                }
            }

            for k in 0..n_el {
                let row = idx_j(k);
                let j = u[idx_j(k)];
                let (i0, di0_dj, u_ocp, du_dj) = kinetics(k, j);
                let eta = u[idx_phis(k)] - u[idx_phie(self.grid.cell_of_node(k))] - u_ocp;
                let sh = (beta * eta).sinh();
                let ch = (beta * eta).cosh();
                let slope = 2.0 * i0 * beta * ch;
                jac[(row, idx_j(k))] = 1.0 - 2.0 * di0_dj * sh + slope * du_dj;
                jac[(row, idx_phis(k))] = -slope;
                jac[(row, idx_phie(self.grid.cell_of_node(k)))] = slope;
            }

            let lu = jac.lu();
            let Some(delta) = lu.solve(&(-&r)) else {
                return Err(Error::numerical(format!(
                    "singular algebraic Jacobian at t = {:.3e} s (residual {norm:.3e})",
                    self.state.t
                )));
            };

            // Backtracking on the residual norm.
            prev_norm = norm;
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_BACKTRACKS {
                let trial = &u + &delta * scale;
                let r_trial = residual(&trial);
                let trial_norm = r_trial.amax();
                if trial_norm.is_finite() && trial_norm < prev_norm {
                    u = trial;
                    r = r_trial;
                    norm = trial_norm;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                return Err(Error::numerical(format!(
                    "Newton backtracking stalled at t = {:.3e} s (residual {norm:.3e})",
                    self.state.t
                )));
            }
            ratio = norm / prev_norm;
            if norm <= self.solver.newton_tol {
                for k in 0..n_el {
                    self.state.phi_s[k] = u[idx_phis(k)];
                    self.state.j_n[k] = u[idx_j(k)];
                }
                for k in 0..n_tot {
                    self.state.phi_e[k] = u[idx_phie(k)];
                }
                return Ok((norm, ratio));
            }
        }
        Err(Error::numerical(format!(
            "Newton did not converge after {} iterations at t = {:.3e} s (worst residual {norm:.3e})",
            self.solver.newton_max_iter, self.state.t
        )))
    }

    fn node_of_cell(&self, cell: usize) -> Option<usize> {
        match self.grid.region_of(cell) {
            Region::Neg => Some(cell),
            Region::Sep => None,
            Region::Pos => Some(cell - self.grid.n_sep),
        }
    }

    /// One attempted step at the given dt. The radial solves are folded into
    /// the algebraic system through superposition (the implicit radial step
    /// is linear in the surface flux), so the stiff kinetics/surface coupling
    /// is solved exactly; the electrolyte source keeps a one-sweep
    /// fixed-point refresh (diffuse with lagged currents, solve, rediffuse,
    /// final solve).
    fn try_step(&mut self, i_norm: f64, dt: f64, temp: f64) -> Result<Option<CutoffEvent>> {
        let c_e_old = self.state.c_e.clone();
        let solid_old = self.state.solid.clone();
        let phi_s_old = self.state.phi_s.clone();
        let phi_e_old = self.state.phi_e.clone();
        let j_old = self.state.j_n.clone();

        let mut outcome = (|| -> Result<Option<CutoffEvent>> {
            // Zero-flux advanced profiles (interior redistribution) and the
            // exact response of the radial step to a unit surface gradient.
            let n_el = self.grid.n_el();
            let h_r = 1.0 / self.grid.n_r as f64;
            let mut base = Vec::with_capacity(n_el);
            for node in 0..n_el {
                let e = self.grid.electrode_of_node(node);
                let tau_d = self.grouped.tau_d_s_at(e, temp);
                let mut p = solid_old[node].clone();
                p.step_implicit(tau_d, dt, 0.0, &mut self.work);
                base.push(p);
            }
            let mut response = Vec::with_capacity(2);
            for e in Electrode::BOTH {
                let tau_d = self.grouped.tau_d_s_at(e, temp);
                let mut p = RadialProfile::uniform(self.grid.n_r, 0.0);
                p.step_implicit(tau_d, dt, 1.0, &mut self.work);
                response.push(p);
            }
            let c_outer: Vec<f64> = base.iter().map(|p| p.c[p.c.len() - 1]).collect();
            // dc_ss/dj: outer-cell response plus the half-cell extrapolation,
            // through the surface-gradient coefficient.
            let slope_c: Vec<f64> = (0..n_el)
                .map(|node| {
                    let e = self.grid.electrode_of_node(node);
                    let g = self.grouped.electrode(e);
                    let tau_d = self.grouped.tau_d_s_at(e, temp);
                    let resp = &response[if node < self.grid.n_neg { 0 } else { 1 }];
                    let w_r = resp.c[resp.c.len() - 1];
                    -(w_r + 0.5 * h_r) * tau_d / (3.0 * g.tau_c_s)
                })
                .collect();

            // Pass 1: electrolyte with the previous step's current pattern.
            let faces = self.ie_faces(&phi_e_old, &c_e_old, temp);
            let j_src = self.divergence(&faces);
            let c_e_1 = self.elyte_step(&c_e_old, &j_src, dt);
            if let Some(&min) = c_e_1.iter().min_by(|a, b| a.partial_cmp(b).unwrap()) {
                if min <= C_E_FLOOR {
                    return Ok(Some(CutoffEvent::ElectrolyteDepleted { c_min: min }));
                }
            }
            self.state.c_e = c_e_1;
            self.newton_solve(i_norm, temp, &c_outer, &slope_c)?;

            // Pass 2: rediffuse the electrolyte from the original state with
            // the refreshed currents, then re-solve.
            let faces = self.ie_faces(&self.state.phi_e, &self.state.c_e, temp);
            let j_src = self.divergence(&faces);
            let c_e_2 = self.elyte_step(&c_e_old, &j_src, dt);
            if let Some(&min) = c_e_2.iter().min_by(|a, b| a.partial_cmp(b).unwrap()) {
                if min <= C_E_FLOOR {
                    return Ok(Some(CutoffEvent::ElectrolyteDepleted { c_min: min }));
                }
            }
            self.state.c_e = c_e_2;
            let (residual, ratio) = self.newton_solve(i_norm, temp, &c_outer, &slope_c)?;
            self.state.last_residual = residual;
            self.state.last_newton_ratio = ratio;

            // Commit the radial profiles consistent with the final currents.
            for node in 0..n_el {
                let e = self.grid.electrode_of_node(node);
                let g = self.grouped.electrode(e);
                let tau_d = self.grouped.tau_d_s_at(e, temp);
                let g_surf = -tau_d / (3.0 * g.tau_c_s) * self.state.j_n[node];
                let resp = &response[if node < self.grid.n_neg { 0 } else { 1 }];
                let p = &mut self.state.solid[node];
                for (i, c) in p.c.iter_mut().enumerate() {
                    *c = base[node].c[i] + g_surf * resp.c[i];
                }
            }
            Ok(None)
        })();

        // Reaction currents can push surface stoichiometry onto a rail;
        // that is a cutoff, not an error.
        if let Ok(None) = outcome {
            for node in 0..self.grid.n_el() {
                let c_ss = self.surface_stoich(node, self.state.j_n[node], temp);
                if !(EPS_STOICH..=1.0 - EPS_STOICH).contains(&c_ss) {
                    outcome = Ok(Some(CutoffEvent::StoichiometryRail {
                        electrode: self.grid.electrode_of_node(node),
                        stoichiometry: c_ss,
                    }));
                    break;
                }
            }
            return outcome;
        }

        // Roll back on failure or depletion so the caller can retry.
        self.state.c_e = c_e_old;
        self.state.solid = solid_old;
        self.state.phi_s = phi_s_old;
        self.state.phi_e = phi_e_old;
        self.state.j_n = j_old;
        outcome
    }

    /// Advance by dt, halving the step on Newton failure or depletion, up to
    /// [`MAX_HALVINGS`] times.
    pub fn step(&mut self, current_a: f64, dt: f64, temp_k: f64) -> Result<StepOutput> {
        if !(dt > 0.0) {
            return Err(Error::numerical(format!("non-positive step size {dt}")));
        }
        let i_norm = current_a / self.i_ref;
        let temp = self.temp(temp_k);
        self.state.temp_k = temp_k;
        let cutoff = self.step_recursive(i_norm, dt, temp, 0)?;
        self.state.t += dt;
        Ok(StepOutput { cutoff })
    }

    fn step_recursive(&mut self, i_norm: f64, dt: f64, temp: f64, depth: usize) -> Result<Option<CutoffEvent>> {
        match self.try_step(i_norm, dt, temp) {
            Ok(None) => Ok(None),
            Ok(Some(cutoff)) => {
                // Rails and depletion are physical terminations; report the
                // event once the step cannot be completed even when split.
                if depth >= MAX_HALVINGS {
                    return Ok(Some(cutoff));
                }
                match cutoff {
                    CutoffEvent::StoichiometryRail { .. } => Ok(Some(cutoff)),
                    _ => {
                        let half = dt / 2.0;
                        match self.step_recursive(i_norm, half, temp, depth + 1)? {
                            Some(ev) => Ok(Some(ev)),
                            None => self.step_recursive(i_norm, half, temp, depth + 1),
                        }
                    }
                }
            }
            Err(err) => {
                if depth >= MAX_HALVINGS {
                    return Err(Error::numerical(format!(
                        "step failed after {MAX_HALVINGS} halvings (dt = {dt:.3e}): {err}"
                    )));
                }
                let half = dt / 2.0;
                match self.step_recursive(i_norm, half, temp, depth + 1)? {
                    Some(ev) => Ok(Some(ev)),
                    None => self.step_recursive(i_norm, half, temp, depth + 1),
                }
            }
        }
    }

    /// Terminal voltage: solid potential at the positive collector face minus
    /// the negative collector face, minus the film drop.
    pub fn voltage(&self, current_a: f64, temp_k: f64) -> Result<VoltageOutput> {
        let i_norm = current_a / self.i_ref;
        let temp = self.temp(temp_k);
        let dx_n = self.grid.dx(Region::Neg);
        let dx_p = self.grid.dx(Region::Pos);
        let phi_neg_face = self.state.phi_s[0] + 0.5 * dx_n * i_norm / self.grouped.neg.sigma;
        let n_el = self.grid.n_el();
        let phi_pos_face = self.state.phi_s[n_el - 1] - 0.5 * dx_p * i_norm / self.grouped.pos.sigma;
        let v = phi_pos_face - phi_neg_face - self.grouped.r_f * i_norm;

        let mut cutoff = None;
        for node in [0, n_el - 1] {
            let c_ss = self.surface_stoich(node, self.state.j_n[node], temp);
            if !(EPS_STOICH..=1.0 - EPS_STOICH).contains(&c_ss) {
                cutoff = Some(CutoffEvent::StoichiometryRail {
                    electrode: self.grid.electrode_of_node(node),
                    stoichiometry: c_ss,
                });
            }
        }
        Ok(VoltageOutput { v, cutoff })
    }

    /// Total normalized electrolyte lithium: sum over regions of nu_e times
    /// the region-mean concentration.
    pub fn electrolyte_content(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.grid.n_tot() {
            let region = self.grid.region_of(i);
            acc += self.grouped.region(region).nu_e * self.grid.dx(region) * self.state.c_e[i];
        }
        acc
    }

    /// Electrode-mean normalized solid concentration.
    pub fn solid_average(&self, e: Electrode) -> f64 {
        let (start, count) = match e {
            Electrode::Neg => (0, self.grid.n_neg),
            Electrode::Pos => (self.grid.n_neg, self.grid.n_pos),
        };
        let sum: f64 = (start..start + count).map(|k| self.solid[k].average()).sum();
        sum / count as f64
    }

    /// Worst deviation of the per-face current split i_s + i_e from the
    /// applied current, over all interior faces.
    pub fn current_split_error(&self, current_a: f64, temp_k: f64) -> f64 {
        let i_norm = current_a / self.i_ref;
        let temp = self.temp(temp_k);
        let ie = self.ie_faces(&self.state.phi_e, &self.state.c_e, temp);
        let mut worst = 0.0f64;
        // Solid faces inside each electrode; i_e faces at the matching
        // global face index (neg face k <-> global face k; pos face k <->
        // global face n_neg + n_sep + k).
        for (el, n_cells, node0, face0) in [
            (Electrode::Neg, self.grid.n_neg, 0usize, 0usize),
            (Electrode::Pos, self.grid.n_pos, self.grid.n_neg, self.grid.n_neg + self.grid.n_sep),
        ] {
            let region = if el == Electrode::Neg { Region::Neg } else { Region::Pos };
            let dx = self.grid.dx(region);
            let sigma = self.grouped.electrode(el).sigma;
            for f in 1..n_cells {
                let is = sigma * (self.state.phi_s[node0 + f - 1] - self.state.phi_s[node0 + f]) / dx;
                worst = worst.max((is + ie[face0 + f] - i_norm).abs());
            }
        }
        // Separator faces (including both interfaces) carry the whole
        // current ionically.
        for f in 0..=self.grid.n_sep {
            let k = self.grid.n_neg + f;
            worst = worst.max((ie[k] - i_norm).abs());
        }
        worst
    }

    pub fn min_max_surface_stoich(&self) -> (f64, f64) {
        let temp = self.state.temp_k;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for node in 0..self.grid.n_el() {
            let c = self.surface_stoich(node, self.state.j_n[node], self.temp(temp));
            lo = lo.min(c);
            hi = hi.max(c);
        }
        (lo, hi)
    }

    pub fn mean_c_e(&self) -> f64 {
        let n = self.grid.n_tot() as f64;
        self.state.c_e.iter().sum::<f64>() / n
    }
}

impl std::ops::Deref for P2d {
    type Target = P2dState;
    fn deref(&self) -> &P2dState {
        &self.state
    }
}

impl CellModel for P2d {
    fn time(&self) -> f64 {
        self.state.t
    }

    fn step(&mut self, current_a: f64, dt: f64, temp_k: f64) -> Result<StepOutput> {
        P2d::step(self, current_a, dt, temp_k)
    }

    fn voltage(&self, current_a: f64, temp_k: f64) -> Result<VoltageOutput> {
        P2d::voltage(self, current_a, temp_k)
    }
}

/// Rested state at the given normalized concentrations: uniform solid
/// profiles, c_e = 1, j_n = 0, and potentials consistent with zero current
/// (phi_s at the negative collector pinned to 0, so phi_e = -U-(c-) and
/// phi_s+ = U+(c+) - U-(c-)); every algebraic residual is exactly zero.
pub fn init_equilibrium(
    soc_pair: (f64, f64),
    grouped: &GroupedParameterSet,
    grid: &P2dGrid,
    ocp_neg: &OcpCurve,
    ocp_pos: &OcpCurve,
) -> P2dState {
    let (c_neg, c_pos) = soc_pair;
    assert!(c_neg > 0.0 && c_neg < 1.0, "initial negative stoichiometry must lie in (0,1)");
    assert!(c_pos > 0.0 && c_pos < 1.0, "initial positive stoichiometry must lie in (0,1)");
    let u_neg = ocp_neg.eval(c_neg);
    let u_pos = ocp_pos.eval(c_pos);
    let mut solid = Vec::with_capacity(grid.n_el());
    for node in 0..grid.n_el() {
        let c0 = if node < grid.n_neg { c_neg } else { c_pos };
        solid.push(RadialProfile::uniform(grid.n_r, c0));
    }
    let phi_s: Vec<f64> =
        (0..grid.n_el()).map(|k| if k < grid.n_neg { 0.0 } else { u_pos - u_neg }).collect();
    P2dState {
        solid,
        c_e: vec![1.0; grid.n_tot()],
        phi_s,
        phi_e: vec![-u_neg; grid.n_tot()],
        j_n: vec![0.0; grid.n_el()],
        t: 0.0,
        temp_k: grouped.t_ref,
        last_residual: 0.0,
        last_newton_ratio: 0.0,
    }
}
