//! File formats: trajectory, estimator, oracle and summary CSVs, the
//! run manifest, and the verdict table.
//!
//! Times are written in hours with 6 decimal places. Undefined statistics
//! become empty fields, never zeros. All other floats use shortest
//! round-trip formatting, so identically produced ensembles are
//! byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::estimator::EstimatorPoint;
use crate::oracle::{MomentGrid, MomentId};
use crate::stats::EnsembleSummary;

fn fmt_time(t: f64) -> String {
    format!("{t:.6}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `replicate,t,type,Z,G,Zpos,GB,GD,extinct,capped` — one row per
/// (replicate, observation time, type).
pub fn write_trajectories<W: Write>(writer: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "replicate", "t", "type", "Z", "G", "Zpos", "GB", "GD", "extinct", "capped",
    ])?;
    for trajectory in trajectories {
        for snapshot in &trajectory.snapshots {
            for (i, counts) in snapshot.types.iter().enumerate() {
                csv.write_record([
                    trajectory.stream_index.to_string(),
                    fmt_time(snapshot.t),
                    (i + 1).to_string(),
                    counts.z.to_string(),
                    counts.g.to_string(),
                    counts.zpos.to_string(),
                    counts.gb.to_string(),
                    counts.gd.to_string(),
                    u8::from(trajectory.extinct).to_string(),
                    u8::from(trajectory.capped).to_string(),
                ])?;
            }
        }
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub replicate: u64,
    pub t: f64,
    pub cell_type: u8,
    pub z: u64,
    pub g: u64,
    pub zpos: u64,
    pub gb: u64,
    pub gd: u64,
    pub extinct: bool,
    pub capped: bool,
}

pub fn read_trajectory_rows<R: Read>(reader: R) -> Result<Vec<TrajectoryRow>> {
    let mut csv = csv::Reader::from_reader(reader);
    let parse =
        |field: &str| -> Result<u64> {
            field
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad integer field {field:?}")))
        };
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record?;
        if record.len() != 10 {
            return Err(Error::InvalidConfig(
                "trajectory CSV must have 10 columns".into(),
            ));
        }
        rows.push(TrajectoryRow {
            replicate: parse(&record[0])?,
            t: record[1]
                .parse()
                .map_err(|_| Error::InvalidConfig("bad time field".into()))?,
            cell_type: parse(&record[2])? as u8,
            z: parse(&record[3])?,
            g: parse(&record[4])?,
            zpos: parse(&record[5])?,
            gb: parse(&record[6])?,
            gd: parse(&record[7])?,
            extinct: &record[8] == "1",
            capped: &record[9] == "1",
        });
    }
    Ok(rows)
}

/// `replicate,t,type,avg_gen,label_est,w_z,w_g` with empty fields for
/// undefined values.
pub fn write_estimator_points<W: Write>(
    writer: W,
    points_per_replicate: &[(u64, &[EstimatorPoint])],
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["replicate", "t", "type", "avg_gen", "label_est", "w_z", "w_g"])?;
    for (replicate, points) in points_per_replicate {
        for point in *points {
            csv.write_record([
                replicate.to_string(),
                fmt_time(point.t),
                point.cell_type.to_string(),
                fmt_opt(point.avg_gen),
                fmt_opt(point.label_est),
                point.w_z.to_string(),
                fmt_opt(point.w_g),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorRow {
    pub replicate: u64,
    pub t: f64,
    pub cell_type: u8,
    pub avg_gen: Option<f64>,
    pub label_est: Option<f64>,
    pub w_z: f64,
    pub w_g: Option<f64>,
}

pub fn read_estimator_rows<R: Read>(reader: R) -> Result<Vec<EstimatorRow>> {
    let mut csv = csv::Reader::from_reader(reader);
    let opt = |field: &str| -> Result<Option<f64>> {
        if field.is_empty() {
            Ok(None)
        } else {
            field
                .parse()
                .map(Some)
                .map_err(|_| Error::InvalidConfig(format!("bad float field {field:?}")))
        }
    };
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record?;
        if record.len() != 7 {
            return Err(Error::InvalidConfig(
                "estimator CSV must have 7 columns".into(),
            ));
        }
        rows.push(EstimatorRow {
            replicate: record[0]
                .parse()
                .map_err(|_| Error::InvalidConfig("bad replicate field".into()))?,
            t: record[1]
                .parse()
                .map_err(|_| Error::InvalidConfig("bad time field".into()))?,
            cell_type: record[2]
                .parse()
                .map_err(|_| Error::InvalidConfig("bad type field".into()))?,
            avg_gen: opt(&record[3])?,
            label_est: opt(&record[4])?,
            w_z: record[5]
                .parse()
                .map_err(|_| Error::InvalidConfig("bad w_z field".into()))?,
            w_g: opt(&record[6])?,
        });
    }
    Ok(rows)
}

/// `t,moment_id,value`, grids concatenated.
pub fn write_oracle<W: Write>(writer: W, grids: &[MomentGrid]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["t", "moment_id", "value"])?;
    for grid in grids {
        for (i, t) in grid.times().enumerate() {
            csv.write_record([
                fmt_time(t),
                grid.moment.as_str().to_string(),
                grid.values[i].to_string(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn read_oracle<R: Read>(reader: R) -> Result<Vec<MomentGrid>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut grids: Vec<(MomentId, Vec<(f64, f64)>)> = Vec::new();
    for record in csv.records() {
        let record = record?;
        if record.len() != 3 {
            return Err(Error::InvalidConfig("oracle CSV must have 3 columns".into()));
        }
        let t: f64 = record[0]
            .parse()
            .map_err(|_| Error::InvalidConfig("bad time field".into()))?;
        let moment = MomentId::parse(&record[1])?;
        let value: f64 = record[2]
            .parse()
            .map_err(|_| Error::InvalidConfig("bad value field".into()))?;
        match grids.iter_mut().find(|(id, _)| *id == moment) {
            Some((_, values)) => values.push((t, value)),
            None => grids.push((moment, vec![(t, value)])),
        }
    }
    grids
        .into_iter()
        .map(|(moment, rows)| {
            if rows.len() < 2 {
                return Err(Error::InvalidConfig(format!(
                    "oracle grid {} too short",
                    moment.as_str()
                )));
            }
            let dt = rows[1].0 - rows[0].0;
            if rows[0].0 != 0.0 || dt <= 0.0 {
                return Err(Error::InvalidConfig(
                    "oracle grid must start at t = 0 with positive step".into(),
                ));
            }
            for (i, (t, _)) in rows.iter().enumerate() {
                if (t - i as f64 * dt).abs() > 1e-6 {
                    return Err(Error::InvalidConfig(
                        "oracle grid must be uniform in t".into(),
                    ));
                }
            }
            Ok(MomentGrid {
                moment,
                dt,
                values: rows.into_iter().map(|(_, v)| v).collect(),
            })
        })
        .collect()
}

/// Long-format summary table:
/// `t,type,statistic,conditioning,n,mean,stderr` plus the scalar rows
/// (`ks_wz_wg`, correlations) with empty t.
pub fn write_summary<W: Write>(writer: W, summary: &EnsembleSummary) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["t", "type", "statistic", "conditioning", "n", "mean", "stderr"])?;
    let mut row = |t: Option<f64>,
                   cell_type: Option<u8>,
                   stat: &str,
                   conditioning: &str,
                   n: Option<usize>,
                   mean: Option<f64>,
                   stderr: Option<f64>|
     -> Result<()> {
        csv.write_record([
            t.map(fmt_time).unwrap_or_default(),
            cell_type.map(|c| c.to_string()).unwrap_or_default(),
            stat.to_string(),
            conditioning.to_string(),
            n.map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt(mean),
            fmt_opt(stderr),
        ])?;
        Ok(())
    };

    row(
        None,
        None,
        "n_total",
        "",
        Some(summary.n_total),
        None,
        None,
    )?;
    row(
        None,
        None,
        "n_surviving",
        "",
        Some(summary.n_surviving),
        None,
        None,
    )?;
    row(None, None, "n_capped", "", Some(summary.n_capped), None, None)?;

    for cell in &summary.cells {
        let stats = [
            ("Z", &cell.z),
            ("G", &cell.g),
            ("w_z", &cell.w_z),
            ("w_g", &cell.w_g),
            ("avg_gen", &cell.avg_gen),
            ("label_est", &cell.label_est),
        ];
        for (name, pair) in stats {
            if let Some(m) = pair.unconditional {
                row(
                    Some(cell.t),
                    Some(cell.cell_type),
                    name,
                    "unconditional",
                    Some(m.n),
                    Some(m.mean),
                    m.stderr,
                )?;
            }
            if let Some(m) = pair.surviving {
                row(
                    Some(cell.t),
                    Some(cell.cell_type),
                    name,
                    "surviving",
                    Some(m.n),
                    Some(m.mean),
                    m.stderr,
                )?;
            }
        }
        if let Some(median) = cell.median_abs_diff {
            row(
                Some(cell.t),
                Some(cell.cell_type),
                "median_abs_wz_wg_diff",
                "surviving",
                None,
                Some(median),
                None,
            )?;
        }
    }

    for &(cell_type, value) in &summary.ks_wz_wg {
        row(None, Some(cell_type), "ks_wz_wg", "surviving", None, Some(value), None)?;
    }
    for &(cell_type, value) in &summary.pearson_wz_wg {
        row(
            None,
            Some(cell_type),
            "pearson_wz_wg",
            "surviving",
            None,
            Some(value),
            None,
        )?;
    }
    if let Some(r) = summary.pearson_wz1_wz2 {
        row(None, None, "pearson_wz1_wz2", "surviving", None, Some(r), None)?;
    }
    if let Some(r) = summary.pearson_wg1_wg2 {
        row(None, None, "pearson_wg1_wg2", "surviving", None, Some(r), None)?;
    }
    csv.flush()?;
    Ok(())
}

/// Written next to every ensemble so downstream commands can re-derive the
/// spec, constants and expectations without guessing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub version: u32,
    pub spec_digest: String,
    pub master_seed: u64,
    pub replicates: u32,
    pub observation_times: Vec<f64>,
    pub p_label_loss: f64,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleManifest {
    pub version: u32,
    pub spec_digest: String,
    pub dt: f64,
    pub t_max: f64,
}

pub fn digest_hex(digest: u64) -> String {
    format!("{digest:016x}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Pass,
    Fail,
    Info,
    Skip,
}

impl VerdictStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Info => "info",
            Self::Skip => "skip",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictRow {
    pub check: String,
    pub status: VerdictStatus,
    pub measured: Option<f64>,
    pub bound: Option<f64>,
    pub detail: String,
}

/// `check,status,measured,bound,detail`.
pub fn write_verdict<W: Write>(writer: W, rows: &[VerdictRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["check", "status", "measured", "bound", "detail"])?;
    for row in rows {
        csv.write_record([
            row.check.clone(),
            row.status.as_str().to_string(),
            fmt_opt(row.measured),
            fmt_opt(row.bound),
            row.detail.clone(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
