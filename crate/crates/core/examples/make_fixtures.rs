//! Regenerates the files under `data/`: synthetic uniaxial data, fitted
//! weights, the coarse notched-plate mesh and example configurations.
//!
//! `cargo run --release -p gedamage --example make_fixtures -- data`

use std::fs;
use std::path::PathBuf;

use gedamage::fem::mesh::NotchedPlate;
use gedamage::fem::Execution;
use gedamage::io::config::{DataDrivenConfig, Dof, MaterialConfig, MeshSource, Monitor, OutputConfig, Prescribed};
use gedamage::io::{write_inp, NotchedPlateConfig, RunConfig};
use gedamage::networks::{save_weights, write_dataset};
use gedamage::studies::{notched_material, FitStudyConfig, MeshStudyConfig, NotchedStudyConfig, SingleElementConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    fs::create_dir_all(&dir)?;

    let fit_cfg = FitStudyConfig::default();
    write_dataset(&fit_cfg.dataset(), &dir.join("synthetic_uniaxial.csv"))?;
    let check = fit_cfg.run(Execution::default())?;
    println!("fit: rmse {:.3e}, element error {:.3e}", check.report.relative_rmse, check.element_error);
    save_weights(&check.params, &dir.join("fitted.weights.json"))?;
    fs::write(dir.join("fit.json"), serde_json::to_string_pretty(&fit_cfg.fit)? + "\n")?;

    let study = NotchedStudyConfig::default();
    let coarse = NotchedPlate { nx: study.meshes[0][0], ny: study.meshes[0][1], ..study.plate };
    let mut inp = Vec::new();
    write_inp(&mut inp, &coarse.mesh()?, "notched plate, desk scale, coarse mesh")?;
    fs::write(dir.join("notched_plate_coarse.inp"), inp)?;

    let notched = notched_material(&check.params);
    let notched_cfg = NotchedPlateConfig {
        seed: 0,
        material: MaterialConfig::DataDriven(DataDrivenConfig {
            weights: Some("fitted.weights.json".into()),
            mu_e: None,
            lambda_e: None,
            eta_d: Some(notched.eta_d),
            kappa_d: None,
            c_d: notched.c_d,
            beta_d: notched.beta_d,
            gamma_d: notched.gamma_d,
            init_scale: 0.3,
        }),
        study,
        coarse_mesh: Some("notched_plate_coarse.inp".into()),
        output: OutputConfig { directory: "out/notched_plate".into(), ..OutputConfig::default() },
    };
    fs::write(dir.join("notched_plate.json"), serde_json::to_string_pretty(&notched_cfg)? + "\n")?;

    let plate = MeshStudyConfig::default();
    let run = RunConfig {
        seed: 0,
        mesh: MeshSource::Box { size: plate.size, counts: plate.coarse },
        material: MaterialConfig::ClosedForm(match plate.model() {
            gedamage::materials::MaterialModel::ClosedForm(p) => p,
            _ => unreachable!("closed-form plate"),
        }),
        boundary: vec![
            Prescribed { set: "x0".into(), dof: Dof::X, value: 0.0 },
            Prescribed { set: "y0".into(), dof: Dof::Y, value: 0.0 },
            Prescribed { set: "z0".into(), dof: Dof::Z, value: 0.0 },
            Prescribed { set: "x1".into(), dof: Dof::X, value: plate.displacement },
        ],
        loads: Vec::new(),
        monitor: Some(Monitor { set: "x1".into(), dof: Dof::X }),
        solver: Default::default(),
        output: OutputConfig { directory: "out/plate".into(), every: 25, ..OutputConfig::default() },
    };
    fs::write(dir.join("plate.json"), run.to_json() + "\n")?;
    fs::write(dir.join("mesh_study.json"), serde_json::to_string_pretty(&plate)? + "\n")?;
    fs::write(dir.join("single_element.json"), serde_json::to_string_pretty(&SingleElementConfig::default())? + "\n")?;
    Ok(())
}
