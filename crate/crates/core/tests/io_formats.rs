use std::path::{Path, PathBuf};

use gedamage::fem::mesh::box_mesh;
use gedamage::fem::post::ElementFields;
use gedamage::fem::solver::StepRecord;
use gedamage::fem::{DOFS_PER_NODE, PHI};
use gedamage::io::config::{ConfigError, MeshSource};
use gedamage::io::{
    read_history, read_inp, write_history, write_vtk, NotchedPlateConfig, RunConfig, VtkField, HISTORY_HEADER,
};
use gedamage::materials::MaterialModel;
use gedamage::networks::{load_weights, read_dataset};
use gedamage::studies::{FitStudyConfig, MeshStudyConfig, NotchedStudyConfig, SingleElementConfig};
use proptest::prelude::*;
use vtkio::model::{Attribute, DataSet, Piece, VertexNumbers};
use vtkio::Vtk;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn cell(damage: f64, kappa: f64, von_mises: f64) -> ElementFields {
    ElementFields { damage, kappa, von_mises, cauchy: [0.0; 9], max_damage: damage, max_kappa: kappa, max_sigma11: 0.0 }
}

fn scalars(attrs: &[Attribute], name: &str) -> Vec<f64> {
    attrs
        .iter()
        .find_map(|a| match a {
            Attribute::DataArray(d) if d.name == name => Some(d.data.clone().cast_into::<f64>().expect("numeric data")),
            _ => None,
        })
        .unwrap_or_else(|| panic!("attribute {name} missing"))
}

#[test]
fn vtk_output_is_readable_by_an_independent_parser() {
    let mesh = box_mesh([2.0, 1.0, 1.0], [2, 1, 1]).unwrap();
    let n = mesh.num_nodes();
    let x: Vec<f64> = (0..DOFS_PER_NODE * n).map(|i| 0.25 * i as f64 - 1.5).collect();
    let cells = vec![cell(0.125, 0.5, 3.0), cell(0.75, 1.25, 4.5)];
    let mut buf = Vec::new();
    write_vtk(&mut buf, &mesh, &x, &cells, &VtkField::ALL, "round trip").unwrap();

    let vtk = Vtk::parse_legacy_be(buf.as_slice()).unwrap();
    assert_eq!(vtk.title, "round trip");
    let DataSet::UnstructuredGrid { pieces, .. } = vtk.data else { panic!("not an unstructured grid") };
    let Piece::Inline(piece) = &pieces[0] else { panic!("piece not inline") };

    let points = piece.points.clone().cast_into::<f64>().unwrap();
    let expected: Vec<f64> = mesh.nodes.iter().flatten().copied().collect();
    assert_eq!(points, expected);

    let VertexNumbers::Legacy { num_cells, vertices } = &piece.cells.cell_verts else {
        panic!("legacy cells expected")
    };
    assert_eq!(*num_cells as usize, mesh.num_elements());
    for (e, conn) in mesh.elements.iter().enumerate() {
        let row = &vertices[9 * e..9 * e + 9];
        assert_eq!(row[0], 8);
        assert!(row[1..].iter().zip(conn).all(|(&a, &b)| a as usize == b));
    }

    let phi = scalars(&piece.data.point, "phi");
    assert_eq!(phi, (0..n).map(|a| x[DOFS_PER_NODE * a + PHI]).collect::<Vec<_>>());
    let u = scalars(&piece.data.point, "u");
    let expected_u: Vec<f64> = (0..n).flat_map(|a| x[DOFS_PER_NODE * a..DOFS_PER_NODE * a + 3].to_vec()).collect();
    assert_eq!(u, expected_u);
    assert_eq!(scalars(&piece.data.cell, "d"), vec![0.125, 0.75]);
    assert_eq!(scalars(&piece.data.cell, "kappa"), vec![0.5, 1.25]);
    assert_eq!(scalars(&piece.data.cell, "von_mises"), vec![3.0, 4.5]);
}

#[test]
fn vtk_field_selection_omits_sections() {
    let mesh = box_mesh([1.0; 3], [1, 1, 1]).unwrap();
    let x = vec![0.0; DOFS_PER_NODE * mesh.num_nodes()];
    let mut buf = Vec::new();
    write_vtk(&mut buf, &mesh, &x, &[cell(0.0, 0.0, 0.0)], &[VtkField::D], "d only").unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(!text.contains("POINT_DATA"));
    assert!(text.contains("SCALARS d double 1"));
    assert!(!text.contains("kappa"));
}

#[test]
fn shipped_coarse_mesh_matches_the_generator() {
    let mesh = read_inp(&data_dir().join("notched_plate_coarse.inp")).unwrap();
    let study = NotchedStudyConfig::default();
    let generated = study.geometry(study.meshes[0]).mesh().unwrap();
    assert_eq!(mesh.elements, generated.elements);
    assert_eq!(mesh.nodes.len(), generated.nodes.len());
    for (a, b) in mesh.nodes.iter().zip(&generated.nodes) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 1e-12 * b[k].abs().max(1.0), "{a:?} vs {b:?}");
        }
    }
    for set in ["x0", "x1"] {
        assert_eq!(mesh.node_sets.get(set), generated.node_sets.get(set), "node set {set}");
    }
}

#[test]
fn shipped_configs_load_and_build() {
    let dir = data_dir();
    let plate = RunConfig::load(&dir.join("plate.json")).unwrap();
    assert!(matches!(plate.mesh, MeshSource::Box { .. }));
    let p = plate.build_problem(&dir).unwrap();
    assert_eq!(p.mesh.num_elements(), 100);

    let notched = NotchedPlateConfig::load(&dir.join("notched_plate.json")).unwrap();
    assert!(matches!(notched.build_model(&dir).unwrap(), MaterialModel::DataDriven(_)));
    assert!(notched.coarse_mesh(&dir).unwrap().is_some());

    let mesh_study: MeshStudyConfig = gedamage::io::config::load_json(&dir.join("mesh_study.json")).unwrap();
    assert_eq!(mesh_study, MeshStudyConfig::default());
    let single: SingleElementConfig = gedamage::io::config::load_json(&dir.join("single_element.json")).unwrap();
    assert_eq!(single, SingleElementConfig::default());

    let weights = load_weights(&dir.join("fitted.weights.json")).unwrap();
    assert!(weights.mu_e > 0.0 && weights.lambda_e > 0.0);
    let data = read_dataset(&dir.join("synthetic_uniaxial.csv")).unwrap();
    assert_eq!(data.samples.len(), FitStudyConfig::default().dataset().samples.len());
}

#[test]
fn notched_config_errors_name_the_key() {
    let text = std::fs::read_to_string(data_dir().join("notched_plate.json")).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["study"]["mesh_steps"] = serde_json::json!("lots");
    let e = gedamage::io::config::from_json::<NotchedPlateConfig>(&value.to_string()).unwrap_err();
    assert!(matches!(&e, ConfigError::Schema { key, .. } if key == "study.mesh_steps"), "{e}");
}

#[test]
fn history_header_is_fixed() {
    let mut buf = Vec::new();
    write_history(&mut buf, &[]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), HISTORY_HEADER.join(","));
    assert_eq!(
        HISTORY_HEADER.join(","),
        "step,load_factor,displacement,reaction_force,max_sigma11,max_kappa,max_d,max_phi"
    );
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        -1e-6..1e-6f64,
        Just(0.0),
        (-300i32..300).prop_map(|e| 10f64.powi(e) * 1.2345678901234567)
    ]
}

proptest! {
    #[test]
    fn history_round_trip_is_bit_exact(rows in prop::collection::vec(prop::array::uniform7(finite()), 0..8)) {
        let records: Vec<StepRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| StepRecord {
                step: i + 1,
                load_factor: r[0],
                displacement: r[1],
                reaction_force: r[2],
                max_sigma11: r[3],
                max_kappa: r[4],
                max_d: r[5],
                max_phi: r[6],
            })
            .collect();
        let mut buf = Vec::new();
        write_history(&mut buf, &records).unwrap();
        let back = read_history(buf.as_slice()).unwrap();
        prop_assert_eq!(back, records);
    }
}
