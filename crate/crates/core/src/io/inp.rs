//! Abaqus input-file subset: `*NODE`, `*ELEMENT` (C3D8 family), `*NSET`
//! and `*ELSET` in plain and `GENERATE` form.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fem::Mesh;

#[derive(Debug, Error)]
pub enum InpError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: unsupported {feature}")]
    Unsupported { line: usize, feature: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: duplicate {kind} id {id}")]
    Duplicate { line: usize, kind: &'static str, id: i64 },
    #[error("line {line}: undefined node id {id}")]
    UndefinedNode { line: usize, id: i64 },
    #[error("line {line}: undefined element id {id}")]
    UndefinedElement { line: usize, id: i64 },
    #[error(transparent)]
    Mesh(#[from] crate::fem::MeshError),
}

const HEX8_TYPES: [&str; 6] = ["C3D8", "C3D8R", "C3D8H", "C3D8I", "C3D8RH", "C3D8IH"];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Block {
    None,
    Node,
    Element,
    NodeSet { generate: bool },
    ElementSet { generate: bool },
}

struct Keyword {
    name: String,
    params: HashMap<String, String>,
}

fn parse_keyword(line: &str) -> Keyword {
    let mut parts = line[1..].split(',');
    let name = parts.next().unwrap_or("").trim().to_ascii_uppercase();
    let params = parts
        .filter(|p| !p.trim().is_empty())
        .map(|p| match p.split_once('=') {
            Some((k, v)) => (k.trim().to_ascii_uppercase(), v.trim().to_string()),
            None => (p.trim().to_ascii_uppercase(), String::new()),
        })
        .collect();
    Keyword { name, params }
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_id(s: &str, line: usize) -> Result<i64, InpError> {
    s.parse().map_err(|_| InpError::Format { line, message: format!("expected an integer id, found `{s}`") })
}

fn parse_real(s: &str, line: usize) -> Result<f64, InpError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| InpError::Format { line, message: format!("expected a number, found `{s}`") })
}

fn generated(ids: &[i64], line: usize) -> Result<Vec<i64>, InpError> {
    let (start, end, step) = match *ids {
        [a, b] => (a, b, 1),
        [a, b, c] => (a, b, c),
        _ => return Err(InpError::Format { line, message: "GENERATE expects start, end[, increment]".into() }),
    };
    if step <= 0 || end < start {
        return Err(InpError::Format { line, message: format!("invalid GENERATE range {start}, {end}, {step}") });
    }
    Ok((start..=end).step_by(step as usize).collect())
}

struct Parser {
    node_ids: HashMap<i64, usize>,
    element_ids: HashMap<i64, usize>,
    nodes: Vec<[f64; 3]>,
    /// External node ids per element with the line they were read on.
    elements: Vec<([i64; 8], usize)>,
    node_sets: BTreeMap<String, Vec<(i64, usize)>>,
    element_sets: BTreeMap<String, Vec<(i64, usize)>>,
    pending: Vec<i64>,
    pending_line: usize,
    current_nset: Option<String>,
    current_elset: Option<String>,
}

impl Parser {
    fn finish_element(&mut self) -> Result<(), InpError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let line = self.pending_line;
        if self.pending.len() != 9 {
            return Err(InpError::Format {
                line,
                message: format!("C3D8 record needs an id and 8 nodes, found {} values", self.pending.len()),
            });
        }
        let id = self.pending[0];
        if self.element_ids.insert(id, self.elements.len()).is_some() {
            return Err(InpError::Duplicate { line, kind: "element", id });
        }
        let conn: [i64; 8] = std::array::from_fn(|a| self.pending[a + 1]);
        if let Some(set) = &self.current_elset {
            self.element_sets.entry(set.clone()).or_default().push((id, line));
        }
        self.elements.push((conn, line));
        self.pending.clear();
        Ok(())
    }
}

/// Parses the supported subset. External ids are remapped to dense
/// zero-based indices in order of appearance.
pub fn parse_inp(text: &str) -> Result<Mesh, InpError> {
    let mut p = Parser {
        node_ids: HashMap::new(),
        element_ids: HashMap::new(),
        nodes: Vec::new(),
        elements: Vec::new(),
        node_sets: BTreeMap::new(),
        element_sets: BTreeMap::new(),
        pending: Vec::new(),
        pending_line: 0,
        current_nset: None,
        current_elset: None,
    };
    let mut block = Block::None;
    let mut set_name = String::new();
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with("**") {
            continue;
        }
        if line.starts_with('*') {
            if block == Block::Element {
                p.finish_element()?;
            }
            let kw = parse_keyword(line);
            let generate = kw.params.contains_key("GENERATE");
            block = match kw.name.as_str() {
                "NODE" => {
                    p.current_nset = kw.params.get("NSET").cloned();
                    Block::Node
                }
                "ELEMENT" => {
                    let ty = kw.params.get("TYPE").map(|t| t.to_ascii_uppercase()).unwrap_or_default();
                    if !HEX8_TYPES.contains(&ty.as_str()) {
                        let shown = if ty.is_empty() { "missing".to_string() } else { ty };
                        return Err(InpError::Unsupported { line: line_no, feature: format!("element type {shown}") });
                    }
                    p.current_elset = kw.params.get("ELSET").cloned();
                    Block::Element
                }
                "NSET" => {
                    set_name = kw.params.get("NSET").cloned().ok_or_else(|| InpError::Format {
                        line: line_no,
                        message: "*NSET without NSET= name".into(),
                    })?;
                    p.node_sets.entry(set_name.clone()).or_default();
                    Block::NodeSet { generate }
                }
                "ELSET" => {
                    set_name = kw.params.get("ELSET").cloned().ok_or_else(|| InpError::Format {
                        line: line_no,
                        message: "*ELSET without ELSET= name".into(),
                    })?;
                    p.element_sets.entry(set_name.clone()).or_default();
                    Block::ElementSet { generate }
                }
                _ => Block::None,
            };
            continue;
        }
        match block {
            Block::None => {}
            Block::Node => {
                let f: Vec<&str> = fields(line).collect();
                if f.len() < 3 || f.len() > 4 {
                    return Err(InpError::Format {
                        line: line_no,
                        message: "node record needs an id and 2 or 3 coordinates".into(),
                    });
                }
                let id = parse_id(f[0], line_no)?;
                let mut x = [0.0; 3];
                for (k, s) in f[1..].iter().enumerate() {
                    x[k] = parse_real(s, line_no)?;
                }
                if p.node_ids.insert(id, p.nodes.len()).is_some() {
                    return Err(InpError::Duplicate { line: line_no, kind: "node", id });
                }
                p.nodes.push(x);
                if let Some(set) = &p.current_nset {
                    p.node_sets.entry(set.clone()).or_default().push((id, line_no));
                }
            }
            Block::Element => {
                if p.pending.is_empty() {
                    p.pending_line = line_no;
                }
                for s in fields(line) {
                    p.pending.push(parse_id(s, line_no)?);
                }
                if !line.ends_with(',') || p.pending.len() >= 9 {
                    p.finish_element()?;
                }
            }
            Block::NodeSet { generate } | Block::ElementSet { generate } => {
                let ids = fields(line).map(|s| parse_id(s, line_no)).collect::<Result<Vec<_>, _>>()?;
                let ids = if generate { generated(&ids, line_no)? } else { ids };
                let target =
                    if matches!(block, Block::NodeSet { .. }) { &mut p.node_sets } else { &mut p.element_sets };
                target.get_mut(&set_name).expect("set opened").extend(ids.into_iter().map(|id| (id, line_no)));
            }
        }
    }
    if block == Block::Element {
        p.finish_element()?;
    }
    build_mesh(p)
}

fn build_mesh(p: Parser) -> Result<Mesh, InpError> {
    let mut mesh = Mesh { nodes: p.nodes, ..Default::default() };
    for (conn, line) in &p.elements {
        let mut c = [0usize; 8];
        for (a, id) in conn.iter().enumerate() {
            c[a] = *p.node_ids.get(id).ok_or(InpError::UndefinedNode { line: *line, id: *id })?;
        }
        mesh.elements.push(c);
    }
    for (name, members) in p.node_sets {
        let mut ids = Vec::with_capacity(members.len());
        for (id, line) in members {
            ids.push(*p.node_ids.get(&id).ok_or(InpError::UndefinedNode { line, id })?);
        }
        ids.sort_unstable();
        ids.dedup();
        mesh.node_sets.insert(name, ids);
    }
    for (name, members) in p.element_sets {
        let mut ids = Vec::with_capacity(members.len());
        for (id, line) in members {
            ids.push(*p.element_ids.get(&id).ok_or(InpError::UndefinedElement { line, id })?);
        }
        ids.sort_unstable();
        ids.dedup();
        mesh.element_sets.insert(name, ids);
    }
    if mesh.nodes.is_empty() || mesh.elements.is_empty() {
        return Err(InpError::Format { line: 0, message: "file defines no C3D8 elements".into() });
    }
    let named: Vec<(String, Vec<usize>)> = mesh.node_sets.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let named_el: Vec<(String, Vec<usize>)> = mesh.element_sets.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    mesh.add_face_sets();
    mesh.node_sets.extend(named);
    mesh.element_sets.extend(named_el);
    mesh.geometry()?;
    Ok(mesh)
}

pub fn read_inp(path: &Path) -> Result<Mesh, InpError> {
    let text = std::fs::read_to_string(path).map_err(|source| InpError::Io { path: path.to_path_buf(), source })?;
    parse_inp(&text)
}

fn write_ids(w: &mut impl Write, ids: &[usize]) -> std::io::Result<()> {
    for chunk in ids.chunks(16) {
        let line: Vec<String> = chunk.iter().map(|i| (i + 1).to_string()).collect();
        writeln!(w, "{}", line.join(", "))?;
    }
    Ok(())
}

/// Writes a mesh with one-based ids; sets named like the generated face
/// sets are skipped.
pub fn write_inp(w: &mut impl Write, mesh: &Mesh, heading: &str) -> std::io::Result<()> {
    const FACE_SETS: [&str; 7] = ["x0", "x1", "y0", "y1", "z0", "z1", "all"];
    writeln!(w, "*HEADING")?;
    writeln!(w, "{heading}")?;
    writeln!(w, "*NODE")?;
    for (i, x) in mesh.nodes.iter().enumerate() {
        writeln!(w, "{}, {:.17e}, {:.17e}, {:.17e}", i + 1, x[0], x[1], x[2])?;
    }
    writeln!(w, "*ELEMENT, TYPE=C3D8, ELSET=solid")?;
    for (e, conn) in mesh.elements.iter().enumerate() {
        let ids: Vec<String> = conn.iter().map(|n| (n + 1).to_string()).collect();
        writeln!(w, "{}, {}", e + 1, ids.join(", "))?;
    }
    for (name, ids) in mesh.node_sets.iter().filter(|(k, _)| !FACE_SETS.contains(&k.as_str())) {
        writeln!(w, "*NSET, NSET={name}")?;
        write_ids(w, ids)?;
    }
    for (name, ids) in mesh.element_sets.iter().filter(|(k, _)| !FACE_SETS.contains(&k.as_str()) && *k != "solid") {
        writeln!(w, "*ELSET, ELSET={name}")?;
        write_ids(w, ids)?;
    }
    Ok(())
}
