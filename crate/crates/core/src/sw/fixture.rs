//! On-disk fixtures for the shallow-water model: plain CSV grids plus a
//! JSON manifest.
//!
//! Layout of a fixture directory:
//!
//! ```text
//! manifest.json        grid, physical constants, units, file names, frame times
//! bathymetry.csv       H, one CSV row per grid row j (y), one column per i (x)
//! eta0.csv u0.csv v0.csv
//! boundary_0000.csv    one file per frame: edge,index,eta,u,v
//! ```
//!
//! Real ocean extracts map onto the same manifest: a reanalysis product
//! (sea-surface height plus a depth climatology, surface currents) is
//! regridded onto the uniform node grid, `eta = ssh + depth` is written to
//! `eta0.csv`, the depth field to `bathymetry.csv`, and the hourly edge
//! values to one boundary file per timestamp. Drifter tracks use the
//! separate CSV schema in [`crate::drifters`]. Downloading and regridding
//! are out of scope; [`SwFixture::load`] only consumes the regridded files.

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::grid::SwGrid;
use super::solver::{BoundaryForcing, BoundaryFrame, EdgeValues, SwParams};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub length: String,
    pub time: String,
    pub velocity: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            length: "m".into(),
            time: "s".into(),
            velocity: "m/s".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub t: f64,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub grid: SwGrid,
    #[serde(default)]
    pub units: Units,
    pub g: f64,
    pub f0: f64,
    pub beta: f64,
    pub y0: f64,
    pub bathymetry: String,
    pub eta0: String,
    pub u0: String,
    pub v0: String,
    pub boundary: Vec<FrameEntry>,
}

/// Everything the model needs from a fixture directory.
#[derive(Clone, Debug, PartialEq)]
pub struct SwFixture {
    pub grid: SwGrid,
    pub params: SwParams,
    /// `[η | u | v]`.
    pub z0: DVector<f64>,
    pub forcing: BoundaryForcing,
}

/// Reads an `N_y × N_x` grid (rows are `j`) into column-major order.
pub fn read_grid_csv(path: &Path, grid: &SwGrid) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{}: {e}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        check_len("grid csv columns", grid.nx, row.len())?;
        rows.push(row);
    }
    check_len("grid csv rows", grid.ny, rows.len())?;
    let mut out = vec![0.0; grid.cells()];
    for (j, row) in rows.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            out[grid.flat(i, j)] = *v;
        }
    }
    Ok(out)
}

pub fn write_grid_csv(path: &Path, grid: &SwGrid, values: &[f64]) -> Result<()> {
    check_len("grid values", grid.cells(), values.len())?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for j in 0..grid.ny {
        w.write_record((0..grid.nx).map(|i| values[grid.flat(i, j)].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    edge: String,
    index: usize,
    eta: f64,
    u: f64,
    v: f64,
}

fn write_frame(path: &Path, frame: &BoundaryFrame) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let edges: [(&str, fn(&EdgeValues) -> &Vec<f64>); 4] = [
        ("west", |e| &e.west),
        ("east", |e| &e.east),
        ("south", |e| &e.south),
        ("north", |e| &e.north),
    ];
    for (name, get) in edges {
        for index in 0..get(&frame.eta).len() {
            w.serialize(EdgeRow {
                edge: name.into(),
                index,
                eta: get(&frame.eta)[index],
                u: get(&frame.u)[index],
                v: get(&frame.v)[index],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn edge_mut<'a>(e: &'a mut EdgeValues, name: &str, path: &Path) -> Result<&'a mut Vec<f64>> {
    Ok(match name {
        "west" => &mut e.west,
        "east" => &mut e.east,
        "south" => &mut e.south,
        "north" => &mut e.north,
        other => return Err(Error::Parse(format!("unknown edge '{other}' in {}", path.display()))),
    })
}

fn read_frame(path: &Path, grid: &SwGrid, t: f64) -> Result<BoundaryFrame> {
    let blank = || EdgeValues {
        west: vec![f64::NAN; grid.ny],
        east: vec![f64::NAN; grid.ny],
        south: vec![f64::NAN; grid.nx],
        north: vec![f64::NAN; grid.nx],
    };
    let mut frame = BoundaryFrame {
        t,
        eta: blank(),
        u: blank(),
        v: blank(),
    };
    let mut rdr = csv::Reader::from_path(path)?;
    for row in rdr.deserialize::<EdgeRow>() {
        let row = row?;
        for (target, value) in [(&mut frame.eta, row.eta), (&mut frame.u, row.u), (&mut frame.v, row.v)] {
            let edge = edge_mut(target, &row.edge, path)?;
            let len = edge.len();
            *edge
                .get_mut(row.index)
                .ok_or(Error::IndexOutOfBounds { index: row.index, len })? = value;
        }
    }
    Ok(frame)
}

impl SwFixture {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest: Manifest = serde_json::from_reader(File::open(manifest_path)?)?;
        let grid = manifest.grid;
        grid.validate()?;
        let file = |name: &str| -> PathBuf { dir.join(name) };
        let bathymetry = read_grid_csv(&file(&manifest.bathymetry), &grid)?;
        let mut z0 = read_grid_csv(&file(&manifest.eta0), &grid)?;
        z0.extend(read_grid_csv(&file(&manifest.u0), &grid)?);
        z0.extend(read_grid_csv(&file(&manifest.v0), &grid)?);
        let frames = manifest
            .boundary
            .iter()
            .map(|f| read_frame(&file(&f.file), &grid, f.t))
            .collect::<Result<Vec<_>>>()?;
        Ok(SwFixture {
            grid,
            params: SwParams {
                g: manifest.g,
                f0: manifest.f0,
                beta: manifest.beta,
                y0: manifest.y0,
                bathymetry,
            },
            z0: DVector::from_vec(z0),
            forcing: BoundaryForcing::new(&grid, frames)?,
        })
    }

    /// Writes the fixture into `dir` and returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let n = self.grid.cells();
        let z = self.z0.as_slice();
        write_grid_csv(&dir.join("bathymetry.csv"), &self.grid, &self.params.bathymetry)?;
        write_grid_csv(&dir.join("eta0.csv"), &self.grid, &z[..n])?;
        write_grid_csv(&dir.join("u0.csv"), &self.grid, &z[n..2 * n])?;
        write_grid_csv(&dir.join("v0.csv"), &self.grid, &z[2 * n..])?;
        let mut boundary = Vec::new();
        for (k, frame) in self.forcing.frames().iter().enumerate() {
            let name = format!("boundary_{k:04}.csv");
            write_frame(&dir.join(&name), frame)?;
            boundary.push(FrameEntry { t: frame.t, file: name });
        }
        let manifest = Manifest {
            grid: self.grid,
            units: Units::default(),
            g: self.params.g,
            f0: self.params.f0,
            beta: self.params.beta,
            y0: self.params.y0,
            bathymetry: "bathymetry.csv".into(),
            eta0: "eta0.csv".into(),
            u0: "u0.csv".into(),
            v0: "v0.csv".into(),
            boundary,
        };
        let path = dir.join("manifest.json");
        serde_json::to_writer_pretty(File::create(&path)?, &manifest)?;
        Ok(path)
    }
}
