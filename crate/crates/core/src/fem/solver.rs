//! Newton iteration, load stepping and arc-length continuation.

use serde::{Deserialize, Serialize};

use super::assembly::{gather, ordered_map, Assembler, Execution};
use super::kernel::{point_kinematics, KappaMode};
use super::post::{element_fields, summarize, ElementFields};
use super::shape::QUAD_POINTS;
use super::sparse::factor;
use super::{FemError, Problem, Scheme};
use crate::damage::{return_map, ReturnMapOptions};
use crate::materials::{degradation, MaterialModel, FAILURE_DEGRADATION};
use crate::tensor::Tensor2;

/// Residual norm below which a state counts as equilibrated regardless of
/// the reference force. Heavily degraded elements carry residuals scaled by
/// the degradation factor, so the floor sits near underflow.
pub const ABS_RESIDUAL_FLOOR: f64 = 1e-280;

/// Newton corrections below this multiple of the state magnitude count as
/// stagnation at machine precision.
const STAGNATION: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Continuation {
    #[default]
    LoadStepping,
    ArcLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArcLengthConfig {
    /// Radius of the constraint sphere in the combined
    /// `(Δu, ψ Δλ)` norm.
    pub radius: f64,
    /// Weight of the load factor in the constraint.
    pub psi: f64,
    pub max_steps: usize,
    /// Stop once the load factor reaches this value.
    pub max_load_factor: f64,
}

impl Default for ArcLengthConfig {
    fn default() -> Self {
        Self { radius: 0.01, psi: 1.0, max_steps: 1000, max_load_factor: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub continuation: Continuation,
    pub steps: usize,
    /// Relative residual tolerance.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub local_tol: f64,
    pub local_max_iter: usize,
    /// Runs stop once the largest point damage reaches this value.
    pub d_max: f64,
    /// Consecutive increment halvings before a run is aborted.
    pub max_cuts: usize,
    pub arc_length: ArcLengthConfig,
    pub execution: Execution,
    /// Symmetric diagonal scaling of the linear systems before factoring.
    pub diagonal_scaling: bool,
    /// Keep every committed state in the trajectory.
    pub record_states: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Monolithic,
            continuation: Continuation::LoadStepping,
            steps: 100,
            newton_tol: 1e-8,
            newton_max_iter: 25,
            local_tol: crate::damage::DEFAULT_TOL,
            local_max_iter: crate::damage::DEFAULT_MAX_ITER,
            d_max: 1.0 - FAILURE_DEGRADATION,
            max_cuts: 8,
            arc_length: ArcLengthConfig::default(),
            execution: Execution::Parallel,
            diagonal_scaling: false,
            record_states: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), FemError> {
        let positive = [
            ("steps", self.steps as f64),
            ("newton_tol", self.newton_tol),
            ("newton_max_iter", self.newton_max_iter as f64),
            ("local_tol", self.local_tol),
            ("local_max_iter", self.local_max_iter as f64),
            ("d_max", self.d_max),
            ("arc_length.radius", self.arc_length.radius),
            ("arc_length.max_steps", self.arc_length.max_steps as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(FemError::Problem(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if !(self.arc_length.psi >= 0.0) {
            return Err(FemError::Problem("solver.arc_length.psi must be non-negative".into()));
        }
        Ok(())
    }

    pub fn local_options(&self) -> ReturnMapOptions {
        ReturnMapOptions { tol: self.local_tol, max_iter: self.local_max_iter }
    }
}

/// Committed and working history at every quadrature point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadHistory {
    pub committed: Vec<[f64; QUAD_POINTS]>,
    pub trial: Vec<[f64; QUAD_POINTS]>,
}

impl QuadHistory {
    pub fn new(elements: usize) -> Self {
        Self { committed: vec![[0.0; QUAD_POINTS]; elements], trial: vec![[0.0; QUAD_POINTS]; elements] }
    }

    pub fn commit(&mut self) {
        debug_assert!(self.committed.iter().flatten().zip(self.trial.iter().flatten()).all(|(a, b)| b >= a));
        self.committed.clone_from(&self.trial);
    }

    pub fn reset_trial(&mut self) {
        self.trial.clone_from(&self.committed);
    }

    /// Points whose damage reached `d_max`.
    pub fn failed(&self, model: &MaterialModel, d_max: f64) -> Vec<[bool; QUAD_POINTS]> {
        let dp = model.damage();
        self.committed.iter().map(|k| k.map(|k| degradation(k, dp.eta_d, dp.kappa_d).1 >= d_max)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// All nodal unknowns, node-major `(u_x, u_y, u_z, φ)`.
    pub x: Vec<f64>,
    pub history: QuadHistory,
    pub step: usize,
    pub load_factor: f64,
}

impl SystemState {
    pub fn virgin(problem: &Problem) -> Self {
        Self {
            x: vec![0.0; problem.num_dofs()],
            history: QuadHistory::new(problem.mesh.num_elements()),
            step: 0,
            load_factor: 0.0,
        }
    }

    pub fn displacement(&self, node: usize) -> [f64; 3] {
        let b = super::DOFS_PER_NODE * node;
        [self.x[b], self.x[b + 1], self.x[b + 2]]
    }

    pub fn phi(&self, node: usize) -> f64 {
        self.x[super::DOFS_PER_NODE * node + super::PHI]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_norms: Vec<f64>,
    pub resolution_limited: usize,
}

/// One row of a history file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub load_factor: f64,
    pub displacement: f64,
    pub reaction_force: f64,
    pub max_sigma11: f64,
    pub max_kappa: f64,
    pub max_d: f64,
    pub max_phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    DamageLimit,
    StepLimit,
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    /// Committed states, when requested.
    pub states: Vec<SystemState>,
    pub final_state: SystemState,
    pub termination: Termination,
    pub newton_iterations: Vec<usize>,
}

impl Trajectory {
    pub fn aborted(&self) -> bool {
        matches!(self.termination, Termination::Aborted(_))
    }
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub struct Solver<'p> {
    pub problem: &'p Problem,
    pub model: MaterialModel,
    pub cfg: SolverConfig,
    assembler: Assembler,
    constraints: Vec<(usize, f64)>,
    constrained: Vec<bool>,
    f_ext: Vec<f64>,
}

impl<'p> Solver<'p> {
    pub fn new(problem: &'p Problem, cfg: SolverConfig) -> Result<Self, FemError> {
        cfg.validate()?;
        problem.check()?;
        let n = problem.num_dofs();
        let constraints: Vec<(usize, f64)> = problem.constraints(cfg.scheme).into_iter().collect();
        let mut constrained = vec![false; n];
        for &(d, _) in &constraints {
            constrained[d] = true;
        }
        let mut f_ext = vec![0.0; n];
        for (&d, &v) in &problem.loads {
            if !constrained[d] {
                f_ext[d] += v;
            }
        }
        Ok(Self {
            problem,
            model: cfg.scheme.effective_model(&problem.model),
            assembler: Assembler::new(problem, cfg.execution),
            constraints,
            constrained,
            f_ext,
            cfg,
        })
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState::virgin(self.problem)
    }

    fn mode(&self) -> KappaMode {
        if self.cfg.scheme.resolves_history() {
            KappaMode::Resolve(self.cfg.local_options())
        } else {
            KappaMode::Frozen
        }
    }

    fn assemble(&mut self, state: &mut SystemState, tangent: bool) -> Result<(Vec<f64>, usize), FemError> {
        let mode = self.mode();
        let asm = self.assembler.assemble(
            self.problem,
            &self.model,
            &state.x,
            &state.history.committed,
            &state.history.trial,
            mode,
            tangent,
        )?;
        if matches!(mode, KappaMode::Resolve(_)) {
            state.history.trial = asm.kappa;
        }
        Ok((asm.residual, asm.resolution_limited))
    }

    /// Replaces constrained rows and columns of the assembled tangent by the
    /// identity and returns the matching right-hand side for the increment
    /// `lift` on constrained dofs.
    fn condense(&mut self, r: &[f64], lift: &[f64]) -> Vec<f64> {
        let k = &mut self.assembler.matrix;
        let mut rhs = vec![0.0; r.len()];
        for i in 0..r.len() {
            let range = k.row_range(i);
            if self.constrained[i] {
                rhs[i] = lift[i];
                for p in range {
                    k.values[p] = if k.col_index(p) == i { 1.0 } else { 0.0 };
                }
            } else {
                rhs[i] = -r[i];
                for p in range {
                    let j = k.col_index(p);
                    if self.constrained[j] {
                        rhs[i] -= k.values[p] * lift[j];
                        k.values[p] = 0.0;
                    }
                }
            }
        }
        rhs
    }

    /// Factors the condensed tangent and solves for each right-hand side.
    fn solve_condensed(&mut self, rhs: &[&[f64]]) -> Result<Vec<Vec<f64>>, FemError> {
        let k = &mut self.assembler.matrix;
        let n = k.dim();
        let scale: Vec<f64> = if self.cfg.diagonal_scaling {
            (0..n)
                .map(|i| {
                    let d = k.get(i, i).abs();
                    if d > 0.0 && d.is_finite() {
                        1.0 / d.sqrt()
                    } else {
                        1.0
                    }
                })
                .collect()
        } else {
            vec![1.0; n]
        };
        if self.cfg.diagonal_scaling {
            for i in 0..n {
                for p in k.row_range(i) {
                    k.values[p] *= scale[i] * scale[k.col_index(p)];
                }
            }
        }
        let lu = factor(self.assembler.profile(), &self.assembler.matrix)?;
        rhs.iter()
            .map(|b| {
                let sb: Vec<f64> = b.iter().zip(&scale).map(|(v, s)| v * s).collect();
                let y = lu.solve(&sb)?;
                let x: Vec<f64> = y.iter().zip(&scale).map(|(v, s)| v * s).collect();
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(FemError::NotFinite);
                }
                Ok(x)
            })
            .collect()
    }

    fn free_norm(&self, v: &[f64]) -> f64 {
        norm(v.iter().zip(&self.constrained).filter(|(_, &c)| !c).map(|(x, _)| *x))
    }

    /// Equilibrium at load factor `lambda`, starting from `state.x`.
    pub fn newton(&mut self, state: &mut SystemState, lambda: f64) -> Result<NewtonReport, FemError> {
        let n = self.problem.num_dofs();
        let mut lift = vec![0.0; n];
        for &(d, v) in &self.constraints {
            lift[d] = lambda * v - state.x[d];
        }
        let ext_norm = lambda.abs() * self.free_norm(&self.f_ext);
        let mut reference = ext_norm;
        let mut report = NewtonReport::default();
        let mut stagnated = false;
        for it in 0..=self.cfg.newton_max_iter {
            let (mut r, limited) = self.assemble(state, true)?;
            report.resolution_limited = limited;
            for (ri, fi) in r.iter_mut().zip(&self.f_ext) {
                *ri -= lambda * fi;
            }
            let rn = self.free_norm(&r);
            if !rn.is_finite() {
                return Err(FemError::NotFinite);
            }
            report.residual_norms.push(rn);
            let lifted = lift.iter().any(|&v| v != 0.0);
            let stalled = stagnated && rn <= self.cfg.newton_tol.sqrt() * reference;
            if !lifted && (rn <= self.cfg.newton_tol * reference || rn <= ABS_RESIDUAL_FLOOR || stalled) {
                report.iterations = it;
                return Ok(report);
            }
            if it == self.cfg.newton_max_iter {
                break;
            }
            let rhs = self.condense(&r, &lift);
            if it == 0 || lifted {
                reference = reference.max(self.free_norm(&rhs));
            }
            let dx = self.solve_condensed(&[&rhs])?.pop().expect("one solution");
            for (xi, di) in state.x.iter_mut().zip(&dx) {
                *xi += di;
            }
            let scale = state.x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            stagnated = !lifted && dx.iter().all(|d| d.abs() <= STAGNATION * scale);
            lift.fill(0.0);
        }
        Err(FemError::NonConvergence {
            iterations: self.cfg.newton_max_iter,
            residual: report.residual_norms.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// Return map at every point for the current fields, from the committed
    /// history (the staggered history update).
    pub fn sweep_history(&self, state: &mut SystemState) -> Result<(), FemError> {
        let problem = self.problem;
        let opts = self.cfg.local_options();
        let x = &state.x;
        let committed = &state.history.committed;
        let results = ordered_map(problem.mesh.num_elements(), self.cfg.execution, |e| {
            let (u, phi) = gather(&problem.mesh.elements[e], x);
            let mut k = [0.0; QUAD_POINTS];
            for (q, kq) in k.iter_mut().enumerate() {
                let y = point_kinematics(&problem.geometry[e], q, &u, &phi);
                let f = Tensor2(std::array::from_fn(|i| y[i]));
                let rm = return_map(&f, y[9], &[y[10], y[11], y[12]], committed[e][q], &self.model, opts)
                    .map_err(|source| FemError::History { element: e, source })?;
                *kq = rm.kappa_next;
            }
            Ok(k)
        });
        state.history.trial = results.into_iter().collect::<Result<Vec<_>, FemError>>()?;
        Ok(())
    }

    /// Solves one increment to `lambda` with the configured scheme.
    pub fn increment(&mut self, state: &mut SystemState, lambda: f64) -> Result<NewtonReport, FemError> {
        state.history.reset_trial();
        let report = self.newton(state, lambda)?;
        if !self.cfg.scheme.resolves_history() {
            self.sweep_history(state)?;
        }
        Ok(report)
    }

    pub fn fields(&self, state: &SystemState) -> Result<Vec<ElementFields>, FemError> {
        element_fields(self.problem, &self.model, &state.x, &state.history.committed, self.cfg.execution)
    }

    /// History row of a committed state.
    pub fn record(&mut self, state: &SystemState) -> Result<StepRecord, FemError> {
        let fields = self.fields(state)?;
        let s = summarize(&fields, &state.x);
        let mut tmp = state.clone();
        tmp.history.reset_trial();
        let asm = self.assembler.assemble(
            self.problem,
            &self.model,
            &tmp.x,
            &tmp.history.committed,
            &tmp.history.committed,
            KappaMode::Frozen,
            false,
        )?;
        let reaction = self.problem.reaction_dofs.iter().map(|&d| asm.residual[d]).sum();
        let displacement = self.problem.control_dof.map_or(0.0, |d| state.x[d]);
        Ok(StepRecord {
            step: state.step,
            load_factor: state.load_factor,
            displacement,
            reaction_force: reaction,
            max_sigma11: s.max_sigma11,
            max_kappa: s.max_kappa,
            max_d: s.max_d,
            max_phi: s.max_phi,
        })
    }

    pub fn load_stepping(&mut self) -> Result<Trajectory, FemError> {
        self.load_stepping_with(|_, _| false)
    }

    /// Load stepping with a fault-injection hook: `fail(committed_steps,
    /// target_load_factor)` returning true makes that attempt fail.
    pub fn load_stepping_with(&mut self, mut fail: impl FnMut(usize, f64) -> bool) -> Result<Trajectory, FemError> {
        let mut state = self.initial_state();
        let base = 1.0 / self.cfg.steps as f64;
        // The floor bounds the number of increments near a limit point.
        let h_min = base * 0.5f64.powi(self.cfg.max_cuts.min(60) as i32);
        let mut h = base;
        let mut traj = Trajectory {
            records: Vec::new(),
            states: Vec::new(),
            final_state: state.clone(),
            termination: Termination::Completed,
            newton_iterations: Vec::new(),
        };
        while state.load_factor < 1.0 - 1e-12 {
            let target = if state.load_factor + h > 1.0 - 1e-12 { 1.0 } else { state.load_factor + h };
            let mut trial = state.clone();
            let result = if fail(state.step, target) {
                Err(FemError::NonConvergence { iterations: 0, residual: f64::NAN })
            } else {
                self.increment(&mut trial, target)
            };
            match result {
                Ok(report) => {
                    trial.history.commit();
                    trial.step += 1;
                    trial.load_factor = target;
                    state = trial;
                    let rec = self.record(&state)?;
                    traj.records.push(rec);
                    traj.newton_iterations.push(report.iterations);
                    if self.cfg.record_states {
                        traj.states.push(state.clone());
                    }
                    h = (2.0 * h).min(base);
                    if rec.max_d >= self.cfg.d_max {
                        traj.termination = Termination::DamageLimit;
                        break;
                    }
                }
                Err(e) => {
                    if h <= h_min {
                        traj.termination = Termination::Aborted(e.to_string());
                        break;
                    }
                    h = (0.5 * h).max(h_min);
                }
            }
        }
        traj.final_state = state;
        Ok(traj)
    }

    fn tangent_solves(&mut self, r: &[f64]) -> Result<(Vec<f64>, Vec<f64>), FemError> {
        let zero = vec![0.0; r.len()];
        let rhs_r = self.condense(r, &zero);
        let ft: Vec<f64> = self.f_ext.iter().zip(&self.constrained).map(|(&f, &c)| if c { 0.0 } else { f }).collect();
        let mut sols = self.solve_condensed(&[&rhs_r, &ft])?;
        let dt = sols.pop().expect("two solutions");
        let dr = sols.pop().expect("two solutions");
        Ok((dr, dt))
    }

    /// One arc-length step of radius `radius` from `state`; returns the new
    /// state and the accepted increments.
    fn arc_step(
        &mut self,
        state: &SystemState,
        radius: f64,
        previous: Option<&(Vec<f64>, f64)>,
    ) -> Result<(SystemState, Vec<f64>, f64, usize), FemError> {
        let psi2 = self.cfg.arc_length.psi.powi(2);
        let mut trial = state.clone();
        trial.history.reset_trial();
        let (r0, _) = self.assemble(&mut trial, true)?;
        let residual0: Vec<f64> = r0.iter().zip(&self.f_ext).map(|(r, f)| r - state.load_factor * f).collect();
        let (_, dt) = self.tangent_solves(&residual0)?;
        let sign = previous.map_or(1.0, |(dx, dl)| if dot(dx, &dt) + psi2 * dl >= 0.0 { 1.0 } else { -1.0 });
        let mut dlam = sign * radius / (dot(&dt, &dt) + psi2).sqrt();
        let mut dx: Vec<f64> = dt.iter().map(|v| dlam * v).collect();
        let f_norm = self.free_norm(&self.f_ext);
        for it in 0..=self.cfg.newton_max_iter {
            trial.x = state.x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let lambda = state.load_factor + dlam;
            let (mut r, _) = self.assemble(&mut trial, true)?;
            for (ri, fi) in r.iter_mut().zip(&self.f_ext) {
                *ri -= lambda * fi;
            }
            let rn = self.free_norm(&r);
            if !rn.is_finite() {
                return Err(FemError::NotFinite);
            }
            if rn <= self.cfg.newton_tol * (lambda.abs() * f_norm).max(f_norm * 1e-3) || rn <= ABS_RESIDUAL_FLOOR {
                trial.load_factor = lambda;
                return Ok((trial, dx, dlam, it));
            }
            if it == self.cfg.newton_max_iter {
                return Err(FemError::NonConvergence { iterations: it, residual: rn });
            }
            let (dr, dt) = self.tangent_solves(&r)?;
            let base: Vec<f64> = dx.iter().zip(&dr).map(|(a, b)| a + b).collect();
            let a = dot(&dt, &dt) + psi2;
            let b = 2.0 * (dot(&base, &dt) + psi2 * dlam);
            let c = dot(&base, &base) + psi2 * dlam * dlam - radius * radius;
            let disc = b * b - 4.0 * a * c;
            if disc.is_nan() {
                return Err(FemError::ArcLengthRoot);
            }
            // Without a real root, the closest point to the sphere is taken.
            let sq = disc.max(0.0).sqrt();
            let roots = [(-b + sq) / (2.0 * a), (-b - sq) / (2.0 * a)];
            let score = |dl: f64| {
                let cand: f64 = base.iter().zip(&dt).zip(&dx).map(|((p, t), o)| (p + dl * t) * o).sum();
                cand + psi2 * (dlam + dl) * dlam
            };
            let dl = if score(roots[0]) >= score(roots[1]) { roots[0] } else { roots[1] };
            dx = base.iter().zip(&dt).map(|(p, t)| p + dl * t).collect();
            dlam += dl;
        }
        unreachable!("loop returns on its last iteration")
    }

    /// Crisfield spherical arc-length continuation under nodal loads scaled
    /// by the load factor. Prescribed displacements must be zero.
    pub fn arc_length(&mut self) -> Result<Trajectory, FemError> {
        let arc = self.cfg.arc_length;
        if !(arc.radius > 0.0) {
            return Err(FemError::Problem("arc-length radius must be positive".into()));
        }
        if self.problem.dirichlet.values().any(|&v| v != 0.0) {
            return Err(FemError::Problem("arc-length requires homogeneous prescribed displacements".into()));
        }
        if self.free_norm(&self.f_ext) == 0.0 {
            return Err(FemError::Problem("arc-length requires nodal loads".into()));
        }
        let mut state = self.initial_state();
        let mut traj = Trajectory {
            records: Vec::new(),
            states: Vec::new(),
            final_state: state.clone(),
            termination: Termination::StepLimit,
            newton_iterations: Vec::new(),
        };
        let mut radius = arc.radius;
        let radius_min = arc.radius * 0.5f64.powi(self.cfg.max_cuts.min(60) as i32);
        let mut previous: Option<(Vec<f64>, f64)> = None;
        'steps: while state.step < arc.max_steps {
            let mut cuts = 0;
            let (next, dx, dlam, its) = loop {
                match self.arc_step(&state, radius, previous.as_ref()) {
                    Ok(v) => break v,
                    Err(e) => {
                        cuts += 1;
                        if radius <= radius_min {
                            traj.termination = Termination::Aborted(e.to_string());
                            break 'steps;
                        }
                        radius = (0.5 * radius).max(radius_min);
                    }
                }
            };
            state = next;
            state.history.commit();
            state.step += 1;
            previous = Some((dx, dlam));
            if cuts == 0 {
                radius = (2.0 * radius).min(arc.radius);
            }
            let rec = self.record(&state)?;
            traj.records.push(rec);
            traj.newton_iterations.push(its);
            if self.cfg.record_states {
                traj.states.push(state.clone());
            }
            if rec.max_d >= self.cfg.d_max {
                traj.termination = Termination::DamageLimit;
                break;
            }
            if state.load_factor >= arc.max_load_factor {
                traj.termination = Termination::Completed;
                break;
            }
        }
        traj.final_state = state;
        Ok(traj)
    }

    /// Runs the configured continuation method.
    pub fn run(&mut self) -> Result<Trajectory, FemError> {
        match self.cfg.continuation {
            Continuation::LoadStepping => self.load_stepping(),
            Continuation::ArcLength => self.arc_length(),
        }
    }
}
