//! File formats: Abaqus meshes, JSON configurations, VTK fields and CSV
//! histories.

pub mod config;
pub mod history;
pub mod inp;
pub mod vtk;

pub use config::{ConfigError, NotchedPlateConfig, RunConfig};
pub use history::{read_history, write_history, HISTORY_HEADER};
pub use inp::{parse_inp, read_inp, write_inp, InpError};
pub use vtk::{write_vtk, VtkField};
