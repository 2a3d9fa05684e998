//! Drivers for the single-element, plate and notched-plate studies.

use serde::{Deserialize, Serialize};

use crate::damage::{uniaxial_stress_path, DamageError, ReturnMapOptions};
use crate::fem::mesh::{box_mesh, graded, structured_mesh, NotchedPlate};
use crate::fem::post::ElementFields;
use crate::fem::solver::{Continuation, Solver, SolverConfig, StepRecord, SystemState, Termination, Trajectory};
use crate::fem::{Execution, FemError, Mesh, Problem, Scheme};
use crate::materials::{lame, ClosedFormParams, DataDrivenParams, MaterialModel};
use crate::networks::{fit, synthetic_dataset, FitConfig, FitDataset, FitReport, NetworkError};

/// Unit cube with symmetry planes at `x = 0`, `y = 0`, `z = 0`.
fn unit_element(model: MaterialModel) -> Result<Problem, FemError> {
    let mut p = Problem::new(box_mesh([1.0; 3], [1, 1, 1])?, model)?;
    p.prescribe("x0", 0, 0.0)?;
    p.prescribe("y0", 1, 0.0)?;
    p.prescribe("z0", 2, 0.0)?;
    p.monitor("x1", 0)?;
    Ok(p)
}

/// Single element in uniaxial tension under prescribed end displacement.
pub fn uniaxial_element(model: MaterialModel, displacement: f64) -> Result<Problem, FemError> {
    let mut p = unit_element(model)?;
    p.prescribe("x1", 0, displacement)?;
    Ok(p)
}

/// Single element in uniaxial tension under a total end force.
pub fn uniaxial_element_force(model: MaterialModel, force: f64) -> Result<Problem, FemError> {
    let mut p = unit_element(model)?;
    p.load("x1", 0, force)?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleElementConfig {
    pub young: f64,
    pub poisson: f64,
    pub displacement: f64,
    pub steps: usize,
    /// Values of `eta_d` swept at `kappa_fixed`.
    pub eta_values: Vec<f64>,
    pub kappa_fixed: f64,
    /// Values of `kappa_d` swept at `eta_fixed`.
    pub kappa_values: Vec<f64>,
    pub eta_fixed: f64,
    pub newton_tol: f64,
    /// Gradient schemes map to their local counterparts.
    pub scheme: Scheme,
}

impl Default for SingleElementConfig {
    fn default() -> Self {
        Self {
            young: 42.0,
            poisson: 0.45,
            displacement: 0.5,
            steps: 200,
            eta_values: vec![1.0, 10.0, 100.0],
            kappa_fixed: 1.0,
            kappa_values: vec![0.0, 0.5, 1.0, 2.0],
            eta_fixed: 10.0,
            newton_tol: 1e-12,
            scheme: Scheme::LocalMonolithic,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ElementRun {
    pub eta_d: f64,
    pub kappa_d: f64,
    pub records: Vec<StepRecord>,
    pub termination: Termination,
}

impl ElementRun {
    pub fn stretches(&self) -> Vec<f64> {
        self.records.iter().map(|r| 1.0 + r.displacement).collect()
    }

    /// Axial first Piola–Kirchhoff stress (the reaction on a unit face).
    pub fn stresses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reaction_force).collect()
    }

    pub fn label(&self) -> String {
        format!("eta{}_kappa{}", self.eta_d, self.kappa_d)
    }
}

impl SingleElementConfig {
    pub fn params(&self, eta_d: f64, kappa_d: f64) -> ClosedFormParams {
        ClosedFormParams::from_young(self.young, self.poisson, eta_d, kappa_d)
    }

    fn solver(&self, execution: Execution) -> SolverConfig {
        SolverConfig {
            scheme: self.scheme.without_gradient(),
            steps: self.steps,
            newton_tol: self.newton_tol,
            d_max: 1.0,
            execution,
            ..Default::default()
        }
    }

    /// Local single-element response for one parameter pair.
    pub fn run(&self, eta_d: f64, kappa_d: f64, execution: Execution) -> Result<ElementRun, FemError> {
        let p = uniaxial_element(MaterialModel::ClosedForm(self.params(eta_d, kappa_d)), self.displacement)?;
        let traj = Solver::new(&p, self.solver(execution))?.load_stepping()?;
        Ok(ElementRun { eta_d, kappa_d, records: traj.records, termination: traj.termination })
    }

    /// The `eta_d` sweep followed by the `kappa_d` sweep.
    pub fn sweep(&self, execution: Execution) -> Result<Vec<ElementRun>, FemError> {
        let pairs = self
            .eta_values
            .iter()
            .map(|&e| (e, self.kappa_fixed))
            .chain(self.kappa_values.iter().map(|&k| (self.eta_fixed, k)));
        pairs.map(|(e, k)| self.run(e, k, execution)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SofteningConfig {
    pub young: f64,
    pub poisson: f64,
    pub eta_d: f64,
    pub kappa_d: f64,
    /// Applied force as a multiple of the peak force.
    pub overload: f64,
    pub steps: usize,
    pub arc_radius: f64,
    pub max_arc_steps: usize,
    /// Damage at which the arc-length run stops.
    pub d_target: f64,
}

impl Default for SofteningConfig {
    fn default() -> Self {
        Self {
            young: 42.0,
            poisson: 0.45,
            eta_d: 0.5,
            kappa_d: 0.5,
            overload: 1.2,
            steps: 50,
            arc_radius: 0.02,
            max_arc_steps: 2000,
            d_target: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SofteningResult {
    /// Peak uniaxial stress of the point driver.
    pub peak_stress: f64,
    pub force: f64,
    pub stepping: Trajectory,
    pub arc_length: Trajectory,
}

impl SofteningConfig {
    pub fn model(&self) -> MaterialModel {
        MaterialModel::ClosedForm(ClosedFormParams::from_young(self.young, self.poisson, self.eta_d, self.kappa_d))
    }

    /// Peak of the local uniaxial stress–stretch curve, located on a fine
    /// stretch grid and refined by golden-section search.
    pub fn peak_stress(&self) -> Result<f64, DamageError> {
        let m = self.model();
        let opts = ReturnMapOptions::default();
        let stress = |l: f64| -> Result<f64, DamageError> { Ok(uniaxial_stress_path(&m, &[l], opts)?[0].stress) };
        let grid: Vec<f64> = (0..=2000).map(|i| 1.0 + 1e-3 * i as f64).collect();
        let path = uniaxial_stress_path(&m, &grid, opts)?;
        let (imax, _) =
            path.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, p)| {
                    if p.stress > acc.1 {
                        (i, p.stress)
                    } else {
                        acc
                    }
                },
            );
        let (mut a, mut b) = (grid[imax.saturating_sub(1)], grid[(imax + 1).min(grid.len() - 1)]);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let (c, d) = (b - g * (b - a), a + g * (b - a));
            if stress(c)? > stress(d)? {
                b = d;
            } else {
                a = c;
            }
        }
        Ok(stress(0.5 * (a + b))?.max(path[imax].stress))
    }

    /// Force-controlled single element beyond its peak: plain load stepping
    /// and arc-length continuation.
    pub fn run(&self, execution: Execution) -> Result<SofteningResult, FemError> {
        let peak_stress = self.peak_stress().map_err(|source| FemError::History { element: 0, source })?;
        let force = self.overload * peak_stress;
        let p = uniaxial_element_force(self.model(), force)?;
        let base = SolverConfig {
            scheme: Scheme::LocalMonolithic,
            steps: self.steps,
            d_max: self.d_target,
            execution,
            ..Default::default()
        };
        let stepping = Solver::new(&p, base)?.load_stepping()?;
        let mut arc = base;
        arc.continuation = Continuation::ArcLength;
        arc.arc_length.radius = self.arc_radius;
        arc.arc_length.max_steps = self.max_arc_steps;
        arc.arc_length.max_load_factor = f64::INFINITY;
        let arc_length = Solver::new(&p, arc)?.run()?;
        Ok(SofteningResult { peak_stress, force, stepping, arc_length })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlateMesh {
    Coarse,
    Refined,
    NonUniform,
}

impl PlateMesh {
    pub const ALL: [PlateMesh; 3] = [PlateMesh::Coarse, PlateMesh::Refined, PlateMesh::NonUniform];

    pub fn name(self) -> &'static str {
        match self {
            PlateMesh::Coarse => "coarse",
            PlateMesh::Refined => "refined",
            PlateMesh::NonUniform => "non-uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshStudyConfig {
    pub young: f64,
    pub poisson: f64,
    pub eta_d: f64,
    pub kappa_d: f64,
    pub c_d: f64,
    pub beta_d: f64,
    /// Plate dimensions.
    pub size: [f64; 3],
    /// Right-edge displacement at the end of the ramp.
    pub displacement: f64,
    pub steps: usize,
    pub coarse: [usize; 3],
    pub refined: [usize; 3],
    /// In-plane element counts of the graded mesh.
    pub non_uniform: [usize; 3],
    /// Ratio of consecutive element sizes in the graded mesh.
    pub grading: f64,
}

impl Default for MeshStudyConfig {
    fn default() -> Self {
        Self {
            young: 210.0,
            poisson: 0.3,
            eta_d: 0.002,
            kappa_d: 0.1,
            c_d: 1.0,
            beta_d: 1000.0,
            size: [10.0, 10.0, 1.0],
            displacement: 1.0,
            steps: 100,
            coarse: [10, 10, 1],
            refined: [20, 20, 1],
            non_uniform: [14, 14, 1],
            grading: 1.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlateRun {
    pub mesh: PlateMesh,
    pub scheme: Scheme,
    pub records: Vec<StepRecord>,
    pub termination: Termination,
    pub final_state: SystemState,
    pub fields: Vec<ElementFields>,
}

impl PlateRun {
    pub fn label(&self) -> String {
        format!("{}_{}", self.mesh.name(), self.scheme.name())
    }
}

/// Largest element-averaged damage minus the median.
pub fn localization_indicator(fields: &[ElementFields]) -> f64 {
    let mut d: Vec<f64> = fields.iter().map(|f| f.damage).collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let median = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    d[n - 1] - median
}

/// Element-averaged damage at the given quantile (linear interpolation).
pub fn damage_quantile(fields: &[ElementFields], q: f64) -> f64 {
    let mut d: Vec<f64> = fields.iter().map(|f| f.damage).collect();
    d.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (d.len() - 1) as f64;
    let (i, t) = (pos.floor() as usize, pos.fract());
    if i + 1 < d.len() {
        d[i] * (1.0 - t) + d[i + 1] * t
    } else {
        d[i]
    }
}

/// Clamps the left edge in `x` and the right edge in all directions; two
/// left corner points suppress the remaining rigid-body motion.
fn plate_problem(mesh: Mesh, model: MaterialModel, displacement: f64) -> Result<Problem, FemError> {
    let (lo, hi) = mesh.bounds();
    let origin = mesh.find_node(lo, 1e-9).ok_or_else(|| FemError::Problem("no node at the plate origin".into()))?;
    let top = mesh
        .find_node([lo[0], hi[1], lo[2]], 1e-9)
        .ok_or_else(|| FemError::Problem("no node at the upper left corner".into()))?;
    let mut p = Problem::new(mesh, model)?;
    p.prescribe("x0", 0, 0.0)?;
    p.prescribe_node(origin, 1, 0.0).prescribe_node(origin, 2, 0.0).prescribe_node(top, 2, 0.0);
    p.prescribe("x1", 0, displacement)?;
    p.prescribe("x1", 1, 0.0)?;
    p.prescribe("x1", 2, 0.0)?;
    p.monitor("x1", 0)?;
    Ok(p)
}

impl MeshStudyConfig {
    pub fn model(&self) -> MaterialModel {
        MaterialModel::ClosedForm(
            ClosedFormParams::from_young(self.young, self.poisson, self.eta_d, self.kappa_d)
                .with_nonlocal(self.c_d, self.beta_d),
        )
    }

    pub fn mesh(&self, kind: PlateMesh) -> Result<Mesh, FemError> {
        let s = self.size;
        Ok(match kind {
            PlateMesh::Coarse => box_mesh(s, self.coarse)?,
            PlateMesh::Refined => box_mesh(s, self.refined)?,
            PlateMesh::NonUniform => {
                let [nx, ny, nz] = self.non_uniform;
                structured_mesh(
                    &graded(s[0], nx, self.grading),
                    &graded(s[1], ny, self.grading),
                    &graded(s[2], nz, 1.0),
                )?
            }
        })
    }

    pub fn problem(&self, kind: PlateMesh) -> Result<Problem, FemError> {
        plate_problem(self.mesh(kind)?, self.model(), self.displacement)
    }

    pub fn run(&self, kind: PlateMesh, scheme: Scheme, execution: Execution) -> Result<PlateRun, FemError> {
        let p = self.problem(kind)?;
        let cfg = SolverConfig { scheme, steps: self.steps, execution, ..Default::default() };
        let mut solver = Solver::new(&p, cfg)?;
        let traj = solver.load_stepping()?;
        let fields = solver.fields(&traj.final_state)?;
        Ok(PlateRun {
            mesh: kind,
            scheme,
            records: traj.records,
            termination: traj.termination,
            final_state: traj.final_state,
            fields,
        })
    }

    /// Every mesh with the local staggered, gradient monolithic and gradient
    /// staggered schemes.
    pub fn run_all(&self, execution: Execution) -> Result<Vec<PlateRun>, FemError> {
        let mut out = Vec::new();
        for kind in PlateMesh::ALL {
            for scheme in [Scheme::Local, Scheme::Monolithic, Scheme::Staggered] {
                out.push(self.run(kind, scheme, execution)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NotchedStudyConfig {
    /// Geometry; element counts are taken from `meshes`.
    pub plate: NotchedPlate,
    /// `(nx, ny)` per mesh, coarse to fine.
    pub meshes: Vec<[usize; 2]>,
    /// Increment counts of the step study, run on the first mesh.
    pub step_counts: Vec<usize>,
    /// Increments of the mesh study.
    pub mesh_steps: usize,
    /// Right-edge displacement as a fraction of the plate width.
    pub strain: f64,
    pub scheme: Scheme,
}

impl Default for NotchedStudyConfig {
    fn default() -> Self {
        Self {
            plate: NotchedPlate::desk_scale(16, 15),
            meshes: vec![[16, 15], [25, 25], [50, 47]],
            step_counts: vec![25, 50, 100],
            mesh_steps: 25,
            strain: 0.25,
            scheme: Scheme::Monolithic,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NotchedRun {
    pub counts: [usize; 2],
    pub steps: usize,
    pub records: Vec<StepRecord>,
    pub termination: Termination,
    pub final_state: SystemState,
    pub fields: Vec<ElementFields>,
    pub mesh: Mesh,
}

impl NotchedRun {
    pub fn label(&self) -> String {
        format!("mesh{}x{}_steps{}", self.counts[0], self.counts[1], self.steps)
    }

    pub fn max_damage(&self) -> f64 {
        self.fields.iter().map(|f| f.damage).fold(0.0, f64::max)
    }
}

/// Left edge clamped in `x` with two corner points fixing rigid motion; the
/// right edge moves by `displacement` in `x`.
pub fn notched_problem(mesh: Mesh, model: MaterialModel, displacement: f64) -> Result<Problem, FemError> {
    let (lo, hi) = mesh.bounds();
    let origin = mesh.find_node(lo, 1e-9).ok_or_else(|| FemError::Problem("no node at the plate origin".into()))?;
    let top = mesh
        .find_node([lo[0], hi[1], lo[2]], 1e-9)
        .ok_or_else(|| FemError::Problem("no node at the upper left corner".into()))?;
    let mut p = Problem::new(mesh, model)?;
    p.prescribe("x0", 0, 0.0)?;
    p.prescribe_node(origin, 1, 0.0).prescribe_node(origin, 2, 0.0).prescribe_node(top, 2, 0.0);
    p.prescribe("x1", 0, displacement)?;
    p.monitor("x1", 0)?;
    Ok(p)
}

impl NotchedStudyConfig {
    pub fn geometry(&self, counts: [usize; 2]) -> NotchedPlate {
        NotchedPlate { nx: counts[0], ny: counts[1], ..self.plate }
    }

    pub fn run(
        &self,
        model: &MaterialModel,
        counts: [usize; 2],
        steps: usize,
        execution: Execution,
    ) -> Result<NotchedRun, FemError> {
        self.run_on(model, self.geometry(counts).mesh()?, counts, steps, execution)
    }

    /// Runs on a given mesh; `counts` only labels the run.
    pub fn run_on(
        &self,
        model: &MaterialModel,
        mesh: Mesh,
        counts: [usize; 2],
        steps: usize,
        execution: Execution,
    ) -> Result<NotchedRun, FemError> {
        let (lo, hi) = mesh.bounds();
        let p = notched_problem(mesh.clone(), model.clone(), self.strain * (hi[0] - lo[0]))?;
        let cfg = SolverConfig { scheme: self.scheme, steps, execution, ..Default::default() };
        let mut solver = Solver::new(&p, cfg)?;
        let traj = solver.load_stepping()?;
        let fields = solver.fields(&traj.final_state)?;
        Ok(NotchedRun {
            counts,
            steps,
            records: traj.records,
            termination: traj.termination,
            final_state: traj.final_state,
            fields,
            mesh,
        })
    }

    /// Step study on the first mesh, then the remaining meshes. `coarse`
    /// replaces the generated first mesh.
    pub fn run_all(
        &self,
        model: &MaterialModel,
        coarse: Option<&Mesh>,
        execution: Execution,
    ) -> Result<(Vec<NotchedRun>, Vec<NotchedRun>), FemError> {
        let first = *self.meshes.first().ok_or_else(|| FemError::Problem("no meshes configured".into()))?;
        let first_mesh = match coarse {
            Some(m) => m.clone(),
            None => self.geometry(first).mesh()?,
        };
        let steps = self
            .step_counts
            .iter()
            .map(|&s| self.run_on(model, first_mesh.clone(), first, s, execution))
            .collect::<Result<Vec<_>, _>>()?;
        let mut meshes = Vec::new();
        for (i, &counts) in self.meshes.iter().enumerate() {
            match steps.iter().find(|r| i == 0 && r.steps == self.mesh_steps) {
                Some(r) => meshes.push(r.clone()),
                None if i == 0 => {
                    meshes.push(self.run_on(model, first_mesh.clone(), counts, self.mesh_steps, execution)?)
                }
                None => meshes.push(self.run(model, counts, self.mesh_steps, execution)?),
            }
        }
        Ok((steps, meshes))
    }
}

/// Relative difference of two element damage fields in the max norm.
pub fn damage_field_difference(a: &[ElementFields], b: &[ElementFields]) -> f64 {
    let scale = a.iter().chain(b).map(|f| f.damage.abs()).fold(0.0, f64::max);
    let diff = a.iter().zip(b).map(|(x, y)| (x.damage - y.damage).abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Synthetic uniaxial data from the closed-form model and the fit settings
/// used to train the shipped weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitStudyConfig {
    pub young: f64,
    pub poisson: f64,
    pub eta_d: f64,
    pub kappa_d: f64,
    /// Peak stretches of the loading cycles.
    pub peaks: Vec<f64>,
    pub points_per_leg: usize,
    pub fit: FitConfig,
    /// End displacement of the finite-element check on a unit element.
    pub element_displacement: f64,
    pub element_steps: usize,
}

impl Default for FitStudyConfig {
    fn default() -> Self {
        let (young, poisson, eta_d, kappa_d) = (42.0, 0.45, 5.0, 0.5);
        let (mu_e, lambda_e) = lame(young, poisson);
        Self {
            young,
            poisson,
            eta_d,
            kappa_d,
            peaks: vec![1.2, 1.4, 1.6],
            points_per_leg: 20,
            fit: FitConfig { epochs: 2000, mu_e, lambda_e, eta_d, kappa_d, ..FitConfig::default() },
            element_displacement: 0.5,
            element_steps: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitCheck {
    pub report: FitReport,
    pub params: DataDrivenParams,
    /// Largest stress mismatch between the element and the point driver,
    /// relative to `max(|P|, 1)`.
    pub element_error: f64,
    pub element_termination: Termination,
}

impl FitStudyConfig {
    pub fn generator(&self) -> ClosedFormParams {
        ClosedFormParams::from_young(self.young, self.poisson, self.eta_d, self.kappa_d)
    }

    pub fn dataset(&self) -> FitDataset {
        synthetic_dataset(&self.generator(), &self.peaks, self.points_per_leg)
    }

    /// Uniaxial single element with `model` against the point driver.
    pub fn element_error(&self, model: &MaterialModel, execution: Execution) -> Result<(f64, Termination), FemError> {
        let p = uniaxial_element(model.clone(), self.element_displacement)?;
        let cfg = SolverConfig {
            scheme: Scheme::LocalMonolithic,
            steps: self.element_steps,
            d_max: 1.0,
            newton_tol: 1e-12,
            execution,
            ..Default::default()
        };
        let traj = Solver::new(&p, cfg)?.load_stepping()?;
        let stretches: Vec<f64> = traj.records.iter().map(|r| 1.0 + r.displacement).collect();
        let points = uniaxial_stress_path(model, &stretches, ReturnMapOptions::default())
            .map_err(|source| FemError::History { element: 0, source })?;
        let err = traj
            .records
            .iter()
            .zip(&points)
            .map(|(r, p)| (r.reaction_force - p.stress).abs() / p.stress.abs().max(1.0))
            .fold(0.0, f64::max);
        Ok((err, traj.termination))
    }

    /// Generates the data, fits both networks and checks the fitted model
    /// in the finite-element driver.
    pub fn run(&self, execution: Execution) -> Result<FitCheck, StudyError> {
        let (params, report) = fit(&self.dataset(), &self.fit)?;
        let (element_error, element_termination) =
            self.element_error(&MaterialModel::DataDriven(params.clone()), execution)?;
        Ok(FitCheck { report, params, element_error, element_termination })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// The fitted networks with the notched-plate damage constants.
pub fn notched_material(fitted: &DataDrivenParams) -> DataDrivenParams {
    DataDrivenParams { eta_d: 0.001, c_d: 1.0, beta_d: 1000.0, gamma_d: 1.0, ..fitted.clone() }
}
