//! Legacy-ASCII VTK export of cell fields on the structured grid.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::mesh::Mesh;

/// Writes an unstructured-grid VTK file with one scalar CELL_DATA section
/// per named field. Field lengths must equal the cell count.
pub fn write_vtk<W: Write>(w: &mut W, mesh: &Mesh, fields: &[(&str, &[f64])]) -> io::Result<()> {
    let n_cells = mesh.cell_count();
    for (name, values) in fields {
        assert_eq!(
            values.len(),
            n_cells,
            "field '{name}' has {} values for {n_cells} cells",
            values.len()
        );
    }
    let [nx, ny, nz] = mesh.grid.counts;
    let [dx, dy, dz] = mesh.grid.spacing;
    let (px, py) = (nx + 1, ny + 1);
    let n_points = px * py * (nz + 1);

    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "hydraulic head and saturation fields")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n_points} double")?;
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                writeln!(w, "{} {} {}", i as f64 * dx, j as f64 * dy, k as f64 * dz)?;
            }
        }
    }
    let node = |i: usize, j: usize, k: usize| i + px * (j + py * k);
    writeln!(w, "CELLS {n_cells} {}", n_cells * 9)?;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                writeln!(
                    w,
                    "8 {} {} {} {} {} {} {} {}",
                    node(i, j, k),
                    node(i + 1, j, k),
                    node(i + 1, j + 1, k),
                    node(i, j + 1, k),
                    node(i, j, k + 1),
                    node(i + 1, j, k + 1),
                    node(i + 1, j + 1, k + 1),
                    node(i, j + 1, k + 1),
                )?;
            }
        }
    }
    writeln!(w, "CELL_TYPES {n_cells}")?;
    for _ in 0..n_cells {
        writeln!(w, "12")?;
    }
    writeln!(w, "CELL_DATA {n_cells}")?;
    for (name, values) in fields {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in *values {
            writeln!(w, "{v:.12e}")?;
        }
    }
    Ok(())
}

pub fn write_vtk_file(path: &Path, mesh: &Mesh, fields: &[(&str, &[f64])]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vtk(&mut w, mesh, fields)?;
    w.flush()
}
