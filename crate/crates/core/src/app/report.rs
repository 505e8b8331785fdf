//! Bound violations, cross-sections, VTK export and run metadata.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fespace::{Continuity, DiscreteFunction};
use crate::forms::Bounds;
use crate::mesh::{Mesh, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ViolationReport {
    pub min: f64,
    pub max: f64,
    /// `max(0, u_min - min u_h)`.
    pub undershoot: f64,
    /// `max(0, max u_h - u_max)`.
    pub overshoot: f64,
    /// Both as percentages of `u_max - u_min` (absent for one-sided bounds).
    pub undershoot_percent: Option<f64>,
    pub overshoot_percent: Option<f64>,
}

impl ViolationReport {
    pub fn worst(&self) -> f64 {
        self.undershoot.max(self.overshoot)
    }
}

/// Extrema of `u_h` over all Lagrange nodes and quadrature points, compared
/// with the bounds.
pub fn bound_violation_report(uh: &DiscreteFunction, bounds: &Bounds) -> Result<ViolationReport> {
    if bounds.is_empty() {
        return Err(Error::InvalidArgument("no bounds to check against".into()));
    }
    let (min, max) = uh.sampled_range();
    let undershoot = bounds.lower.map_or(0.0, |lo| (lo - min).max(0.0));
    let overshoot = bounds.upper.map_or(0.0, |hi| (max - hi).max(0.0));
    let range = match (bounds.lower, bounds.upper) {
        (Some(lo), Some(hi)) => Some(hi - lo),
        _ => None,
    };
    Ok(ViolationReport {
        min,
        max,
        undershoot,
        overshoot,
        undershoot_percent: range.map(|r| 100.0 * undershoot / r),
        overshoot_percent: range.map(|r| 100.0 * overshoot / r),
    })
}

/// `n` equispaced points from `a` to `b`.
pub fn line_points(a: Point, b: Point, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let s = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
        })
        .collect()
}

/// Samples named fields along a segment; points outside the mesh give `NaN`.
/// Columns: `s` (arc length), `x`, `y`, then one per field.
pub fn write_cross_section(
    w: impl Write,
    a: Point,
    b: Point,
    n: usize,
    fields: &[(&str, &DiscreteFunction)],
) -> Result<Vec<Vec<f64>>> {
    let points = line_points(a, b, n);
    let values: Vec<Vec<f64>> = fields
        .iter()
        .map(|(_, f)| f.evaluate_many(&points).into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect();
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["s".to_string(), "x".into(), "y".into()];
    header.extend(fields.iter().map(|(name, _)| name.to_string()));
    out.write_record(&header)?;
    for (i, p) in points.iter().enumerate() {
        let s = (p[0] - a[0]).hypot(p[1] - a[1]);
        let mut row = vec![s.to_string(), p[0].to_string(), p[1].to_string()];
        row.extend(values.iter().map(|v| v[i].to_string()));
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(values)
}

/// Legacy ASCII VTK unstructured grid. Continuous fields become point data
/// (vertex values); broken fields become cell data (element means).
pub fn vtk_string(mesh: &Mesh, fields: &[(&str, &DiscreteFunction)]) -> Result<String> {
    let mut s = String::new();
    let nv = mesh.num_vertices();
    let ne = mesh.num_elements();
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "dg-resmin output").unwrap();
    writeln!(s, "ASCII").unwrap();
    writeln!(s, "DATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {nv} double").unwrap();
    for p in mesh.vertices() {
        writeln!(s, "{:?} {:?} 0.0", p[0], p[1]).unwrap();
    }
    writeln!(s, "CELLS {ne} {}", 4 * ne).unwrap();
    for e in mesh.elements() {
        writeln!(s, "3 {} {} {}", e[0], e[1], e[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {ne}").unwrap();
    for _ in 0..ne {
        writeln!(s, "5").unwrap();
    }
    let mut point_fields = Vec::new();
    let mut cell_fields = Vec::new();
    for &(name, f) in fields {
        let other = f.space().mesh().as_ref();
        if !std::ptr::eq(other, mesh) && (other.vertices() != mesh.vertices() || other.elements() != mesh.elements()) {
            return Err(Error::InvalidArgument(format!("field `{name}` lives on another mesh")));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("bad VTK field name `{name}`")));
        }
        match f.space().continuity() {
            Continuity::Continuous => point_fields.push((name, f)),
            Continuity::Broken => cell_fields.push((name, f)),
        }
    }
    if !point_fields.is_empty() {
        writeln!(s, "POINT_DATA {nv}").unwrap();
        for (name, f) in point_fields {
            let mut values = vec![0.0; nv];
            for (t, e) in mesh.elements().iter().enumerate() {
                let local: Vec<f64> = f.local(t).collect();
                for k in 0..3 {
                    values[e[k]] = local[k];
                }
            }
            writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
            for v in values {
                writeln!(s, "{v:?}").unwrap();
            }
        }
    }
    if !cell_fields.is_empty() {
        writeln!(s, "CELL_DATA {ne}").unwrap();
        for (name, f) in cell_fields {
            writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
            for t in 0..ne {
                writeln!(s, "{:?}", f.value(t, [1.0 / 3.0; 3])).unwrap();
            }
        }
    }
    Ok(s)
}

pub fn export_vtk(mesh: &Mesh, fields: &[(&str, &DiscreteFunction)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = vtk_string(mesh, fields)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `key = value` lines describing a run.
#[derive(Clone, Debug, Default)]
pub struct RunMetadata {
    entries: Vec<(String, String)>,
}

impl RunMetadata {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
