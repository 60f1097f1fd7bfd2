//! File formats.
//!
//! * Step profiles: CSV with one value per line, or `{"n": N, "values": [...]}`.
//! * Step graphons: row-major CSV matrix, or `{"n": N, "values": [...]}` with
//!   `N²` row-major entries.
//! * Analytic graphons: `{"family": "...", "params": {...}}`.
//! * Games: `{"graphon": {...}, "utility": {...}, "L": ..., "grid_n": ...}`;
//!   network games give `"adjacency"` inline or `"adjacency_csv"` as a path
//!   relative to the descriptor.
//! * Regret reports: CSV `cell_index,midpoint,strategy,aggregate,regret`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{GraphonGame, NetworkGame, RegretReport};
use crate::graphon::{Graphon, StepGraphon};
use crate::grid::{GridSpec, StepProfile};
use crate::utility::{UtilityDescriptor, UtilitySpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileEnvelope {
    pub n: usize,
    pub values: Vec<f64>,
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn read_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: '{f}' is not a number", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_profile_csv<R: Read>(reader: R) -> Result<StepProfile> {
    let rows = read_rows(reader)?;
    if rows.iter().any(|r| r.len() != 1) {
        return Err(Error::Format(
            "profile CSV must hold one value per line".into(),
        ));
    }
    StepProfile::new(rows.into_iter().map(|r| r[0]).collect())
}

pub fn write_profile_csv<W: Write>(writer: W, f: &StepProfile) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for v in f.values() {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let rows = read_rows(reader)?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::Format(
            "matrix CSV must be a non-empty rectangle".into(),
        ));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(n, rows[0].len(), &flat))
}

pub fn write_matrix_csv<W: Write>(writer: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_profile(path: &Path) -> Result<StepProfile> {
    let file = File::open(path)?;
    if is_json(path) {
        let env: ProfileEnvelope = serde_json::from_reader(file)?;
        if env.values.len() != env.n {
            return Err(Error::Format(format!(
                "profile envelope declares n = {} but holds {} values",
                env.n,
                env.values.len()
            )));
        }
        StepProfile::new(env.values)
    } else {
        read_profile_csv(file)
    }
}

pub fn save_profile(path: &Path, f: &StepProfile) -> Result<()> {
    let file = File::create(path)?;
    if is_json(path) {
        let env = ProfileEnvelope {
            n: f.len(),
            values: f.values().to_vec(),
        };
        serde_json::to_writer_pretty(file, &env)?;
        Ok(())
    } else {
        write_profile_csv(file, f)
    }
}

/// `const:<v>` gives a constant profile on `grid`; anything else is a profile
/// file, refined onto `grid` when its resolution divides it.
pub fn parse_profile_arg(arg: &str, grid: GridSpec) -> Result<StepProfile> {
    if let Some(v) = arg.strip_prefix("const:") {
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("'{arg}': expected const:<number>")))?;
        return Ok(StepProfile::constant(grid, v));
    }
    let f = load_profile(Path::new(arg))?;
    if f.len() == grid.n_cells() {
        Ok(f)
    } else {
        f.refine(grid.n_cells())
    }
}

pub fn load_step_graphon(path: &Path) -> Result<StepGraphon> {
    let file = File::open(path)?;
    if is_json(path) {
        Ok(serde_json::from_reader(file)?)
    } else {
        StepGraphon::new(read_matrix_csv(file)?)
    }
}

pub fn save_step_graphon(path: &Path, w: &StepGraphon) -> Result<()> {
    let file = File::create(path)?;
    if is_json(path) {
        serde_json::to_writer_pretty(file, w)?;
        Ok(())
    } else {
        write_matrix_csv(file, w.matrix())
    }
}

/// Loads a graphon from a family descriptor, a step envelope, or a CSV matrix.
pub fn load_graphon(path: &Path) -> Result<Graphon> {
    if !is_json(path) {
        return Ok(Graphon::Step(load_step_graphon(path)?));
    }
    let value: serde_json::Value = serde_json::from_reader(File::open(path)?)?;
    if value.get("family").is_some() {
        Ok(serde_json::from_value(value)?)
    } else {
        Ok(Graphon::Step(serde_json::from_value(value)?))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameDescriptor {
    pub graphon: Graphon,
    pub utility: UtilityDescriptor,
    #[serde(rename = "L")]
    pub cap: f64,
    pub grid_n: usize,
}

impl GameDescriptor {
    pub fn build(&self) -> Result<GraphonGame> {
        let grid = GridSpec::new(self.grid_n)?;
        let utilities = UtilitySpec::from_descriptor(&self.utility, grid)?;
        GraphonGame::new(self.graphon.clone(), utilities, self.cap, grid)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDescriptor {
    #[serde(default)]
    pub adjacency: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub adjacency_csv: Option<PathBuf>,
    pub utility: UtilityDescriptor,
    #[serde(rename = "L")]
    pub cap: f64,
}

impl NetworkDescriptor {
    /// `base` resolves a relative `adjacency_csv`.
    pub fn build(&self, base: &Path) -> Result<NetworkGame> {
        let adjacency = match (&self.adjacency, &self.adjacency_csv) {
            (Some(rows), None) => StepGraphon::from_rows(rows)?.into_matrix(),
            (None, Some(p)) => read_matrix_csv(File::open(base.join(p))?)?,
            _ => {
                return Err(Error::Format(
                    "network descriptor needs exactly one of adjacency, adjacency_csv".into(),
                ))
            }
        };
        let grid = GridSpec::new(adjacency.nrows())?;
        let utilities = UtilitySpec::from_descriptor(&self.utility, grid)?;
        NetworkGame::new(adjacency, utilities, self.cap)
    }
}

pub fn load_game(path: &Path) -> Result<GraphonGame> {
    let desc: GameDescriptor = serde_json::from_reader(File::open(path)?)?;
    desc.build()
}

pub fn load_network_game(path: &Path) -> Result<NetworkGame> {
    let desc: NetworkDescriptor = serde_json::from_reader(File::open(path)?)?;
    desc.build(path.parent().unwrap_or(Path::new(".")))
}

pub fn write_regret_report<W: Write>(writer: W, report: &RegretReport) -> Result<()> {
    let grid = report.grid();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cell_index", "midpoint", "strategy", "aggregate", "regret"])?;
    for i in 0..grid.n_cells() {
        w.write_record([
            (i + 1).to_string(),
            grid.midpoint(i).to_string(),
            report.strategy[i].to_string(),
            report.aggregate[i].to_string(),
            report.regrets[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
