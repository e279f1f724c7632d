use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kl::PatchKLMap;
use crate::error::Result;

/// Where an analysis output came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub checkpoints: Vec<String>,
    pub dataset_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// An output summary: provenance plus the analysis-specific body.
#[derive(Clone, Debug, Serialize)]
pub struct Summary<'a, B: Serialize> {
    pub provenance: &'a Provenance,
    pub result: B,
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Header plus raw records, for tables with a variable column count.
pub fn write_csv_records(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlMapSidecar {
    pub image_id: usize,
    pub side: usize,
    pub total_kl: f64,
    /// Colour scale range for plotting.
    pub vmin: f64,
    pub vmax: f64,
}

/// Writes `<stem>.csv` (one grid row per line) and `<stem>.json`.
pub fn write_kl_map(dir: &Path, stem: &str, map: &PatchKLMap) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(dir.join(format!("{stem}.csv")))?;
    for r in 0..map.side {
        w.write_record((0..map.side).map(|c| map.get(r, c).to_string()))?;
    }
    w.flush()?;
    write_json(
        &dir.join(format!("{stem}.json")),
        &KlMapSidecar {
            image_id: map.image_id,
            side: map.side,
            total_kl: map.total(),
            vmin: 0.0,
            vmax: map.max(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_map_files() {
        let dir = tempfile::tempdir().unwrap();
        let map = PatchKLMap { image_id: 4, side: 2, values: vec![0.0, 0.5, 1.25, 0.0] };
        write_kl_map(dir.path(), "map", &map).unwrap();
        let grid = fs::read_to_string(dir.path().join("map.csv")).unwrap();
        assert_eq!(grid, "0,0.5\n1.25,0\n");
        let side: KlMapSidecar = serde_json::from_slice(&fs::read(dir.path().join("map.json")).unwrap()).unwrap();
        assert_eq!(side.vmax, 1.25);
        assert_eq!(side.total_kl, 1.75);
    }
}
