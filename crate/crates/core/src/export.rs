//! Plot-ready output: legacy ASCII VTK structured grids and CSV node tables.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::StructuredMesh;
use crate::thermal::ScalarField;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Vtk,
    Csv,
}

impl Format {
    /// By file extension: `.vtk` or `.csv`.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("vtk") => Ok(Format::Vtk),
            Some("csv") => Ok(Format::Csv),
            _ => Err(Error::InputDomain(format!(
                "cannot infer output format of {} (use .vtk or .csv)",
                path.display()
            ))),
        }
    }
}

fn check(mesh: &StructuredMesh, field: Option<&ScalarField>) -> Result<()> {
    match field {
        Some(f) if f.dims() != mesh.dims() => Err(Error::Data(format!(
            "field {:?} does not match mesh {:?}",
            f.dims(),
            mesh.dims()
        ))),
        _ => Ok(()),
    }
}

/// Points run ξ-fastest, matching the VTK `DIMENSIONS n_xi n_eta 1` ordering.
pub fn to_vtk(mesh: &StructuredMesh, field: Option<&ScalarField>, title: &str) -> Result<String> {
    check(mesh, field)?;
    let (n_eta, n_xi) = mesh.dims();
    let n = n_eta * n_xi;
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let mut s = String::with_capacity(n * 48);
    s.push_str("# vtk DataFile Version 3.0\n");
    writeln!(s, "{title}").unwrap();
    s.push_str("ASCII\nDATASET STRUCTURED_GRID\n");
    writeln!(s, "DIMENSIONS {n_xi} {n_eta} 1").unwrap();
    writeln!(s, "POINTS {n} double").unwrap();
    for (x, y) in mesh.x().iter().zip(mesh.y().iter()) {
        writeln!(s, "{x:e} {y:e} 0").unwrap();
    }
    if let Some(f) = field {
        writeln!(s, "POINT_DATA {n}").unwrap();
        s.push_str("SCALARS temperature double 1\nLOOKUP_TABLE default\n");
        for v in f.values.iter() {
            writeln!(s, "{v:e}").unwrap();
        }
    }
    Ok(s)
}

pub fn to_csv(mesh: &StructuredMesh, field: Option<&ScalarField>) -> Result<String> {
    check(mesh, field)?;
    let mut s = String::from(if field.is_some() { "i,j,x,y,temperature\n" } else { "i,j,x,y\n" });
    for ((i, j), x) in mesh.x().indexed_iter() {
        let y = mesh.y()[[i, j]];
        match field {
            Some(f) => writeln!(s, "{i},{j},{x:e},{y:e},{:e}", f.values[[i, j]]).unwrap(),
            None => writeln!(s, "{i},{j},{x:e},{y:e}").unwrap(),
        }
    }
    Ok(s)
}

/// Write in the format implied by the extension.
pub fn write(path: &Path, mesh: &StructuredMesh, field: Option<&ScalarField>, title: &str) -> Result<()> {
    let text = match Format::from_path(path)? {
        Format::Vtk => to_vtk(mesh, field, title)?,
        Format::Csv => to_csv(mesh, field)?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
