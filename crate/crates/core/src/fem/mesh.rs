//! Hexahedral meshes, named node/element sets and built-in generators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::shape::ElementGeometry;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("element {element} references node {node}, but the mesh has {count} nodes")]
    NodeOutOfRange { element: usize, node: usize, count: usize },
    #[error("element {element} is inverted or degenerate (Jacobian determinant {det:e})")]
    InvertedElement { element: usize, det: f64 },
    #[error("set `{set}` references {kind} {index} out of range")]
    SetOutOfRange { set: String, kind: &'static str, index: usize },
    #[error("unknown node set `{0}`")]
    UnknownSet(String),
    #[error("invalid mesh generator input: {0}")]
    Generator(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 3]>,
    pub elements: Vec<[usize; 8]>,
    pub node_sets: BTreeMap<String, Vec<usize>>,
    pub element_sets: BTreeMap<String, Vec<usize>>,
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 3]; 8] {
        self.elements[e].map(|n| self.nodes[n])
    }

    pub fn node_set(&self, name: &str) -> Result<&[usize], MeshError> {
        self.node_sets.get(name).map(Vec::as_slice).ok_or_else(|| MeshError::UnknownSet(name.to_string()))
    }

    /// Checks connectivity, set indices and reference Jacobians, and returns
    /// the quadrature geometry of every element.
    pub fn geometry(&self) -> Result<Vec<ElementGeometry>, MeshError> {
        let count = self.nodes.len();
        for (element, conn) in self.elements.iter().enumerate() {
            if let Some(&node) = conn.iter().find(|&&n| n >= count) {
                return Err(MeshError::NodeOutOfRange { element, node, count });
            }
        }
        for (set, ids) in &self.node_sets {
            if let Some(&index) = ids.iter().find(|&&n| n >= count) {
                return Err(MeshError::SetOutOfRange { set: set.clone(), kind: "node", index });
            }
        }
        for (set, ids) in &self.element_sets {
            if let Some(&index) = ids.iter().find(|&&e| e >= self.elements.len()) {
                return Err(MeshError::SetOutOfRange { set: set.clone(), kind: "element", index });
            }
        }
        (0..self.elements.len())
            .map(|e| {
                ElementGeometry::new(&self.element_coords(e))
                    .map_err(|det| MeshError::InvertedElement { element: e, det })
            })
            .collect()
    }

    /// Nodes whose coordinate along `axis` lies within `tol` of `value`.
    pub fn nodes_on_plane(&self, axis: usize, value: f64, tol: f64) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&n| (self.nodes[n][axis] - value).abs() <= tol).collect()
    }

    /// Node closest to `p`, if one lies within `tol`.
    pub fn find_node(&self, p: [f64; 3], tol: f64) -> Option<usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, x)| (i, ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2) + (x[2] - p[2]).powi(2)).sqrt()))
            .filter(|&(_, d)| d <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for x in &self.nodes {
            for k in 0..3 {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        (lo, hi)
    }

    /// Adds the six bounding-box faces as node sets `x0`, `x1`, `y0`, `y1`,
    /// `z0`, `z1`, plus `all` for nodes and elements.
    pub fn add_face_sets(&mut self) {
        let (lo, hi) = self.bounds();
        for (k, axis) in ["x", "y", "z"].iter().enumerate() {
            let tol = 1e-9 * (hi[k] - lo[k]).abs().max(1.0);
            self.node_sets.insert(format!("{axis}0"), self.nodes_on_plane(k, lo[k], tol));
            self.node_sets.insert(format!("{axis}1"), self.nodes_on_plane(k, hi[k], tol));
        }
        self.node_sets.insert("all".into(), (0..self.nodes.len()).collect());
        self.element_sets.insert("all".into(), (0..self.elements.len()).collect());
    }
}

/// Tensor-product mesh on the given coordinate lines.
pub fn structured_mesh(xs: &[f64], ys: &[f64], zs: &[f64]) -> Result<Mesh, MeshError> {
    for (name, v) in [("x", xs), ("y", ys), ("z", zs)] {
        if v.len() < 2 || v.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MeshError::Generator(format!("{name} coordinates must be strictly increasing, at least two")));
        }
    }
    let (nx, ny) = (xs.len(), ys.len());
    let id = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut mesh = Mesh::default();
    for &z in zs {
        for &y in ys {
            for &x in xs {
                mesh.nodes.push([x, y, z]);
            }
        }
    }
    for k in 0..zs.len() - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                mesh.elements.push([
                    id(i, j, k),
                    id(i + 1, j, k),
                    id(i + 1, j + 1, k),
                    id(i, j + 1, k),
                    id(i, j, k + 1),
                    id(i + 1, j, k + 1),
                    id(i + 1, j + 1, k + 1),
                    id(i, j + 1, k + 1),
                ]);
            }
        }
    }
    mesh.add_face_sets();
    Ok(mesh)
}

/// `n + 1` points on `[0, length]` with consecutive spacings in ratio
/// `ratio`.
pub fn graded(length: f64, n: usize, ratio: f64) -> Vec<f64> {
    let spacings: Vec<f64> = (0..n).map(|i| ratio.powi(i as i32)).collect();
    let total: f64 = spacings.iter().sum();
    let mut out = Vec::with_capacity(n + 1);
    let mut x = 0.0;
    out.push(0.0);
    for (i, s) in spacings.iter().enumerate() {
        x += s / total * length;
        out.push(if i + 1 == n { length } else { x });
    }
    out
}

pub fn uniform(length: f64, n: usize) -> Vec<f64> {
    graded(length, n, 1.0)
}

/// Uniform box `[0, size]` with `counts` elements per direction.
pub fn box_mesh(size: [f64; 3], counts: [usize; 3]) -> Result<Mesh, MeshError> {
    if counts.contains(&0) || size.iter().any(|&s| !(s > 0.0)) {
        return Err(MeshError::Generator(format!("box {size:?} with {counts:?} elements")));
    }
    structured_mesh(&uniform(size[0], counts[0]), &uniform(size[1], counts[1]), &uniform(size[2], counts[2]))
}

/// Plate `[0, width] × [0, height] × [0, thickness]` with two symmetric
/// rounded notches cut into the edges `y = 0` and `y = height` at
/// `x = width / 2`. The notch profile is `depth (1 + cos(π s / half_width)) / 2`
/// for `|s| < half_width`, where `s` is the distance from the notch axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotchedPlate {
    pub width: f64,
    pub height: f64,
    pub thickness: f64,
    pub notch_depth: f64,
    pub notch_half_width: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "one")]
    pub nz: usize,
}

fn one() -> usize {
    1
}

impl NotchedPlate {
    /// 1/10-scale plate (10 × 10 × 0.1 mm).
    pub fn desk_scale(nx: usize, ny: usize) -> Self {
        Self { width: 10.0, height: 10.0, thickness: 0.1, notch_depth: 2.0, notch_half_width: 1.5, nx, ny, nz: 1 }
    }

    /// The same geometry multiplied by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            width: self.width * factor,
            height: self.height * factor,
            thickness: self.thickness * factor,
            notch_depth: self.notch_depth * factor,
            notch_half_width: self.notch_half_width * factor,
            ..self
        }
    }

    pub fn notch_profile(&self, x: f64) -> f64 {
        let s = (x - 0.5 * self.width).abs();
        if s >= self.notch_half_width {
            0.0
        } else {
            0.5 * self.notch_depth * (1.0 + (std::f64::consts::PI * s / self.notch_half_width).cos())
        }
    }

    /// Structured grid whose columns are compressed between the two notch
    /// profiles. Node sets: `left`, `right`, the box faces, and
    /// `notch_tips`.
    pub fn mesh(&self) -> Result<Mesh, MeshError> {
        if !(2.0 * self.notch_depth < self.height) || !(2.0 * self.notch_half_width < self.width) {
            return Err(MeshError::Generator("notches do not fit into the plate".into()));
        }
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(MeshError::Generator("element counts must be positive".into()));
        }
        let xs = uniform(self.width, self.nx);
        let ys = uniform(1.0, self.ny);
        let zs = uniform(self.thickness, self.nz);
        let mut mesh = structured_mesh(&xs, &ys, &zs)?;
        for p in mesh.nodes.iter_mut() {
            let d = self.notch_profile(p[0]);
            p[1] = d + p[1] * (self.height - 2.0 * d);
        }
        mesh.add_face_sets();
        mesh.node_sets.insert("left".into(), mesh.node_sets["x0"].clone());
        mesh.node_sets.insert("right".into(), mesh.node_sets["x1"].clone());
        let mid = 0.5 * self.width;
        let tips: Vec<usize> = (0..mesh.nodes.len())
            .filter(|&n| {
                let p = mesh.nodes[n];
                (p[0] - mid).abs() <= 0.5 * self.width / self.nx as f64 + 1e-12
                    && ((p[1] - self.notch_profile(p[0])).abs() < 1e-12
                        || (p[1] - self.height + self.notch_profile(p[0])).abs() < 1e-12)
            })
            .collect();
        mesh.node_sets.insert("notch_tips".into(), tips);
        Ok(mesh)
    }
}
