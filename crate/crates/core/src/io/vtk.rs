//! Legacy ASCII VTK unstructured-grid output.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::fem::post::ElementFields;
use crate::fem::{Mesh, DOFS_PER_NODE, PHI};

/// Selectable output fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VtkField {
    /// Nodal non-local damage field.
    Phi,
    /// Nodal displacement vector.
    U,
    /// Element-averaged damage.
    D,
    /// Element-averaged history variable.
    Kappa,
    /// Von Mises stress of the element-averaged Cauchy stress.
    VonMises,
}

impl VtkField {
    pub const ALL: [VtkField; 5] = [VtkField::Phi, VtkField::U, VtkField::D, VtkField::Kappa, VtkField::VonMises];

    pub fn name(self) -> &'static str {
        match self {
            VtkField::Phi => "phi",
            VtkField::U => "u",
            VtkField::D => "d",
            VtkField::Kappa => "kappa",
            VtkField::VonMises => "von_mises",
        }
    }
}

type CellGetter = fn(&ElementFields) -> f64;

/// VTK hexahedron cell type.
pub const VTK_HEXAHEDRON: u8 = 12;

/// Writes the reference configuration with the selected fields.
/// `x` holds the nodal unknowns and `cells` one entry per element.
pub fn write_vtk(
    w: &mut impl Write,
    mesh: &Mesh,
    x: &[f64],
    cells: &[ElementFields],
    fields: &[VtkField],
    title: &str,
) -> std::io::Result<()> {
    assert_eq!(x.len(), DOFS_PER_NODE * mesh.num_nodes(), "state does not match mesh");
    assert_eq!(cells.len(), mesh.num_elements(), "cell data does not match mesh");
    let n = mesh.num_nodes();
    let ne = mesh.num_elements();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n} double")?;
    for p in &mesh.nodes {
        writeln!(w, "{:e} {:e} {:e}", p[0], p[1], p[2])?;
    }
    writeln!(w, "CELLS {ne} {}", 9 * ne)?;
    for conn in &mesh.elements {
        write!(w, "8")?;
        for a in conn {
            write!(w, " {a}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {ne}")?;
    for _ in 0..ne {
        writeln!(w, "{VTK_HEXAHEDRON}")?;
    }
    let has = |f: VtkField| fields.contains(&f);
    if has(VtkField::Phi) || has(VtkField::U) {
        writeln!(w, "POINT_DATA {n}")?;
        if has(VtkField::Phi) {
            writeln!(w, "SCALARS phi double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for node in 0..n {
                writeln!(w, "{:e}", x[DOFS_PER_NODE * node + PHI])?;
            }
        }
        if has(VtkField::U) {
            writeln!(w, "VECTORS u double")?;
            for node in 0..n {
                let b = DOFS_PER_NODE * node;
                writeln!(w, "{:e} {:e} {:e}", x[b], x[b + 1], x[b + 2])?;
            }
        }
    }
    let cell_fields: Vec<(VtkField, CellGetter)> =
        vec![(VtkField::D, |c| c.damage), (VtkField::Kappa, |c| c.kappa), (VtkField::VonMises, |c| c.von_mises)];
    let selected: Vec<_> = cell_fields.into_iter().filter(|(f, _)| has(*f)).collect();
    if !selected.is_empty() {
        writeln!(w, "CELL_DATA {ne}")?;
        for (f, get) in selected {
            writeln!(w, "SCALARS {} double 1", f.name())?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for c in cells {
                writeln!(w, "{:e}", get(c))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::box_mesh;

    #[test]
    fn layout() {
        let m = box_mesh([1.0; 3], [2, 1, 1]).unwrap();
        let x = vec![0.0; DOFS_PER_NODE * m.num_nodes()];
        let cells = vec![ElementFields::default(); 2];
        let mut buf = Vec::new();
        write_vtk(&mut buf, &m, &x, &cells, &VtkField::ALL, "t").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("POINTS 12 double"));
        assert!(text.contains("CELLS 2 18"));
        assert!(text.contains("CELL_DATA 2"));
        assert!(text.contains("SCALARS von_mises double 1"));
        let mut buf = Vec::new();
        write_vtk(&mut buf, &m, &x, &cells, &[VtkField::D], "t").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains("POINT_DATA"));
    }
}
