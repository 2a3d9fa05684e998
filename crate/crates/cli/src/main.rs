//! Command-line front end: general runs, the three example studies, network
//! fitting and the property suites.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gedamage::fem::assembly::configure_threads;
use gedamage::fem::post::ElementFields;
use gedamage::fem::solver::{Solver, StepRecord, Termination};
use gedamage::fem::{Execution, FemError, Mesh, Scheme};
use gedamage::io::config::load_json;
use gedamage::io::history::HistoryError;
use gedamage::io::{write_history, write_vtk, ConfigError, InpError, NotchedPlateConfig, RunConfig, VtkField};
use gedamage::networks::{fit, read_dataset, save_weights, FitConfig, NetworkError};
use gedamage::studies::{
    damage_field_difference, damage_quantile, localization_indicator, MeshStudyConfig, NotchedRun, PlateMesh,
    SingleElementConfig, StudyError,
};
use gedamage::verify::{self, VerifyConfig};

#[derive(Parser, Debug)]
#[command(name = "gedamage", version, about = "Gradient-enhanced damage for hyperelastic solids")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON file with study or fit settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Number of load increments (epochs for `fit`).
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for element loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulation from a run configuration.
    Run { config: PathBuf },
    /// Uniaxial single-element sweep over the damage parameters.
    SingleElement,
    /// Plate on three meshes with local and gradient schemes.
    MeshStudy,
    /// Notched plate step and mesh studies.
    NotchedPlate { config: PathBuf },
    /// Fits both networks to uniaxial stress–stretch data.
    Fit { data: PathBuf, weights: PathBuf },
    /// Runs the property suites.
    Verify,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SchemeArg {
    Monolithic,
    Staggered,
    Local,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Monolithic => Scheme::Monolithic,
            SchemeArg::Staggered => Scheme::Staggered,
            SchemeArg::Local => Scheme::Local,
        }
    }
}

/// Failure categories and their exit codes.
#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
            CliError::Format(_) => 5,
            CliError::Numerical(_) => 6,
            CliError::Verification(_) => 7,
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            ConfigError::Mesh(m) => m.into(),
            ConfigError::Weights(w) => w.into(),
            ConfigError::Fem(f) => f.into(),
            ConfigError::Schema { .. } | ConfigError::Invalid { .. } => CliError::Config(e.to_string()),
        }
    }
}

impl From<InpError> for CliError {
    fn from(e: InpError) -> Self {
        match e {
            InpError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Format(e.to_string()),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Format(e.to_string()),
        }
    }
}

impl From<FemError> for CliError {
    fn from(e: FemError) -> Self {
        match e {
            FemError::Problem(_) => CliError::Config(e.to_string()),
            FemError::Mesh(_) => CliError::Format(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Fem(f) => f.into(),
            StudyError::Network(n) => n.into(),
        }
    }
}

impl From<HistoryError> for CliError {
    fn from(e: HistoryError) -> Self {
        CliError::Format(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads(cli.global.threads) {
        eprintln!("error: cannot configure threads: {e}");
        return ExitCode::from(3);
    }
    let result = match &cli.command {
        Command::Run { config } => run(config, &cli.global),
        Command::SingleElement => single_element(&cli.global),
        Command::MeshStudy => mesh_study(&cli.global),
        Command::NotchedPlate { config } => notched_plate(config, &cli.global),
        Command::Fit { data, weights } => fit_networks(data, weights, &cli.global),
        Command::Verify => verify_all(&cli.global),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_optional<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, CliError> {
    match path {
        Some(p) => Ok(load_json(p)?),
        None => Ok(T::default()),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| io_error(path, e))
}

fn save_history(path: &Path, records: &[StepRecord]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    write_history(BufWriter::new(file), records).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn save_vtk(
    path: &Path,
    mesh: &Mesh,
    x: &[f64],
    cells: &[ElementFields],
    fields: &[VtkField],
    title: &str,
) -> Result<(), CliError> {
    write_file(path, |w| write_vtk(w, mesh, x, cells, fields, title))
}

fn check_termination(label: &str, t: &Termination) -> Result<(), CliError> {
    match t {
        Termination::Aborted(msg) => Err(CliError::Numerical(format!("{label}: aborted: {msg}"))),
        _ => Ok(()),
    }
}

fn run(config: &Path, g: &Global) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = g.steps {
        cfg.solver.steps = s;
    }
    if let Some(s) = g.scheme {
        cfg.solver.scheme = s.into();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let base = config_dir(config);
    let out = g.out_dir.clone().unwrap_or_else(|| base.join(&cfg.output.directory));
    let problem = cfg.build_problem(&base)?;
    let mut solver_cfg = cfg.solver;
    solver_cfg.record_states = cfg.output.every > 0;
    let mut solver = Solver::new(&problem, solver_cfg)?;
    let traj = solver.run()?;
    create_dir(&out)?;
    if cfg.output.history {
        save_history(&out.join("history.csv"), &traj.records)?;
    }
    if !cfg.output.fields.is_empty() {
        let every = cfg.output.every;
        for s in traj.states.iter().filter(|s| every > 0 && s.step % every == 0) {
            let cells = solver.fields(s)?;
            let path = out.join(format!("step_{:04}.vtk", s.step));
            save_vtk(&path, &problem.mesh, &s.x, &cells, &cfg.output.fields, &format!("step {}", s.step))?;
        }
        let last = &traj.final_state;
        let cells = solver.fields(last)?;
        save_vtk(&out.join("final.vtk"), &problem.mesh, &last.x, &cells, &cfg.output.fields, "final state")?;
    }
    let last = traj.records.last();
    println!(
        "{} increments, {:?}; max d {:.6e}; output in {}",
        traj.records.len(),
        traj.termination,
        last.map_or(0.0, |r| r.max_d),
        out.display()
    );
    check_termination("run", &traj.termination)
}

fn execution() -> Execution {
    Execution::Parallel
}

fn single_element(g: &Global) -> Result<(), CliError> {
    let mut cfg: SingleElementConfig = load_optional(&g.config)?;
    if let Some(s) = g.steps {
        cfg.steps = s;
    }
    if let Some(s) = g.scheme {
        cfg.scheme = s.into();
    }
    let out = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("out/single_element"));
    create_dir(&out)?;
    let runs = cfg.sweep(execution())?;
    for r in &runs {
        save_history(&out.join(format!("{}.csv", r.label())), &r.records)?;
        let last = r.records.last();
        println!(
            "{:<20} {:?}; final stress {:.6e}, max d {:.6e}",
            r.label(),
            r.termination,
            last.map_or(0.0, |x| x.reaction_force),
            last.map_or(0.0, |x| x.max_d)
        );
    }
    for r in &runs {
        check_termination(&r.label(), &r.termination)?;
    }
    Ok(())
}

fn mesh_study(g: &Global) -> Result<(), CliError> {
    let mut cfg: MeshStudyConfig = load_optional(&g.config)?;
    if let Some(s) = g.steps {
        cfg.steps = s;
    }
    let schemes = match g.scheme {
        Some(s) => vec![s.into()],
        None => vec![Scheme::Local, Scheme::Monolithic, Scheme::Staggered],
    };
    let out = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("out/mesh_study"));
    create_dir(&out)?;
    let mut runs = Vec::new();
    for kind in PlateMesh::ALL {
        let mesh = cfg.mesh(kind)?;
        for &scheme in &schemes {
            let r = cfg.run(kind, scheme, execution())?;
            save_history(&out.join(format!("{}.csv", r.label())), &r.records)?;
            save_vtk(
                &out.join(format!("{}.vtk", r.label())),
                &mesh,
                &r.final_state.x,
                &r.fields,
                &VtkField::ALL,
                &r.label(),
            )?;
            println!(
                "{:<26} {:?}; max d {:.6e}, localization {:.6e}",
                r.label(),
                r.termination,
                r.records.last().map_or(0.0, |x| x.max_d),
                localization_indicator(&r.fields)
            );
            runs.push((r, mesh.num_elements()));
        }
    }
    write_file(&out.join("comparison.csv"), |w| {
        writeln!(w, "mesh,scheme,elements,increments,termination,max_d,median_d,localization,reaction_force")?;
        for (r, ne) in &runs {
            let last = r.records.last();
            writeln!(
                w,
                "{},{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.mesh.name(),
                r.scheme.name(),
                ne,
                r.records.len(),
                termination_name(&r.termination),
                last.map_or(0.0, |x| x.max_d),
                damage_quantile(&r.fields, 0.5),
                localization_indicator(&r.fields),
                last.map_or(0.0, |x| x.reaction_force)
            )?;
        }
        Ok(())
    })?;
    for (r, _) in &runs {
        check_termination(&r.label(), &r.termination)?;
    }
    Ok(())
}

fn termination_name(t: &Termination) -> &'static str {
    match t {
        Termination::Completed => "completed",
        Termination::DamageLimit => "damage-limit",
        Termination::StepLimit => "step-limit",
        Termination::Aborted(_) => "aborted",
    }
}

fn notched_plate(config: &Path, g: &Global) -> Result<(), CliError> {
    let mut cfg = NotchedPlateConfig::load(config)?;
    if let Some(s) = g.steps {
        cfg.study.mesh_steps = s;
    }
    if let Some(s) = g.scheme {
        cfg.study.scheme = s.into();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let base = config_dir(config);
    let out = g.out_dir.clone().unwrap_or_else(|| base.join(&cfg.output.directory));
    let model = cfg.build_model(&base)?;
    let coarse = cfg.coarse_mesh(&base)?;
    let (steps, meshes) = cfg.study.run_all(&model, coarse.as_ref(), execution())?;
    create_dir(&out)?;
    let mut seen = std::collections::HashSet::new();
    for r in steps.iter().chain(&meshes).filter(|r| seen.insert(r.label())) {
        if cfg.output.history {
            save_history(&out.join(format!("{}.csv", r.label())), &r.records)?;
        }
        if !cfg.output.fields.is_empty() {
            let path = out.join(format!("{}.vtk", r.label()));
            save_vtk(&path, &r.mesh, &r.final_state.x, &r.fields, &cfg.output.fields, &r.label())?;
        }
    }
    let reference = steps.last();
    let summary = |w: &mut BufWriter<File>, study: &str, runs: &[NotchedRun]| -> std::io::Result<()> {
        for r in runs {
            let diff = match (study, reference) {
                ("steps", Some(f)) => damage_field_difference(&r.fields, &f.fields),
                _ => f64::NAN,
            };
            writeln!(
                w,
                "{study},{},{},{},{},{:.16e},{:.16e},{:.16e}",
                r.label(),
                r.mesh.num_elements(),
                r.steps,
                termination_name(&r.termination),
                r.max_damage(),
                damage_quantile(&r.fields, 0.9),
                diff
            )?;
            println!(
                "{study:<6} {:<22} elements {:>5}; max d {:.6e}, p90 d {:.6e}",
                r.label(),
                r.mesh.num_elements(),
                r.max_damage(),
                damage_quantile(&r.fields, 0.9)
            );
        }
        Ok(())
    };
    write_file(&out.join("comparison.csv"), |w| {
        writeln!(w, "study,label,elements,increments,termination,max_d,p90_d,difference_to_finest_steps")?;
        summary(w, "steps", &steps)?;
        summary(w, "meshes", &meshes)
    })?;
    for r in steps.iter().chain(&meshes) {
        check_termination(&r.label(), &r.termination)?;
    }
    Ok(())
}

fn fit_networks(data: &Path, weights: &Path, g: &Global) -> Result<(), CliError> {
    let mut cfg: FitConfig = load_optional(&g.config)?;
    if let Some(s) = g.steps {
        cfg.epochs = s;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let dataset = read_dataset(data)?;
    let (params, report) = fit(&dataset, &cfg)?;
    if let Some(dir) = weights.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_weights(&params, weights)?;
    println!(
        "{} samples, {} epochs: relative RMSE {:.4e}; weights written to {}",
        dataset.samples.len(),
        report.epochs,
        report.relative_rmse,
        weights.display()
    );
    if report.converged {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "training loss {:.3e} above threshold {:.3e}",
            report.loss, cfg.loss_threshold
        )))
    }
}

fn verify_all(g: &Global) -> Result<(), CliError> {
    let mut cfg: VerifyConfig = load_optional(&g.config)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let checks = verify::run(&cfg);
    let mut failed = Vec::new();
    for c in &checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        println!("{status} {:<38} worst {:.3e} (tolerance {:.0e}, {} cases)", c.name, c.worst, c.tolerance, c.cases);
        if !c.passed() {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("failed: {}", failed.join(", "))))
    }
}
