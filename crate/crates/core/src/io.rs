//! File formats: map JSON, measurement-dataset CSV, model JSON and the
//! experiment outputs. Double precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdsmm::{Features, MeasurementDataset, MeasurementRecord, NoiseModel, SdsmmError};
use crate::sim::{MapOutcome, TrajectoryLog};
use crate::world::{Obstacle, WorldError, WorldModel, Workspace};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Model(#[from] SdsmmError),
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleRecord {
    pub x: f64,
    pub y: f64,
    pub diameter: f64,
    pub height: f64,
}

/// On-disk map. The voxel grid is rebuilt from the obstacles on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    pub seed: u64,
    /// `[xmin, ymin, xmax, ymax]`.
    pub workspace: [f64; 4],
    pub resolution: f64,
    pub obstacles: Vec<ObstacleRecord>,
    /// Unit vector from the sun toward the ground.
    pub sun: [f64; 3],
    #[serde(default = "default_glare")]
    pub glare_exponent: f64,
}

fn default_glare() -> f64 {
    crate::world::DEFAULT_GLARE_EXPONENT
}

impl MapFile {
    pub fn from_world(w: &WorldModel<f64>) -> Self {
        Self {
            seed: w.seed,
            workspace: w.workspace.as_array(),
            resolution: w.grid.resolution,
            obstacles: w
                .obstacles
                .iter()
                .map(|o| ObstacleRecord {
                    x: o.center.x,
                    y: o.center.y,
                    diameter: o.diameter,
                    height: o.height,
                })
                .collect(),
            sun: [w.sun_direction.x, w.sun_direction.y, w.sun_direction.z],
            glare_exponent: w.glare_exponent,
        }
    }

    pub fn to_world(&self) -> Result<WorldModel<f64>, WorldError> {
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| Obstacle {
                center: Vector2::new(o.x, o.y),
                diameter: o.diameter,
                height: o.height,
            })
            .collect();
        let sun = Vector3::new(self.sun[0], self.sun[1], self.sun[2]);
        Ok(
            WorldModel::new(self.seed, Workspace::from_array(self.workspace), self.resolution, obstacles, sun)?
                .with_glare_exponent(self.glare_exponent),
        )
    }
}

pub fn write_json<W: Write, S: Serialize>(mut w: W, value: &S) -> Result<(), IoError> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_json_file<S: Serialize>(path: &Path, value: &S) -> Result<(), IoError> {
    write_json(BufWriter::new(File::create(path)?), value)
}

pub fn save_map(path: &Path, world: &WorldModel<f64>) -> Result<(), IoError> {
    write_json_file(path, &MapFile::from_world(world))
}

pub fn read_map<R: Read>(r: R) -> Result<WorldModel<f64>, IoError> {
    let file: MapFile = serde_json::from_reader(r)?;
    Ok(file.to_world()?)
}

pub fn load_map(path: &Path) -> Result<WorldModel<f64>, IoError> {
    read_map(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct DatasetRow {
    err_x: f64,
    err_y: f64,
    edge_proximity: f64,
    range_frac: f64,
    reflection: f64,
}

pub const DATASET_HEADER: [&str; 5] = ["err_x", "err_y", "edge_proximity", "range_frac", "reflection"];

pub fn read_dataset<R: Read>(r: R) -> Result<MeasurementDataset<f64>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != DATASET_HEADER {
        return Err(IoError::Format(format!(
            "dataset header must be {}, got {}",
            DATASET_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut records = Vec::new();
    for (line, row) in rdr.deserialize::<DatasetRow>().enumerate() {
        let row = row?;
        let features = Features::new(row.edge_proximity, row.range_frac, row.reflection);
        if !features.is_valid() || !row.err_x.is_finite() || !row.err_y.is_finite() {
            return Err(IoError::Format(format!("record {}: value out of range", line + 1)));
        }
        records.push(MeasurementRecord {
            error: Vector2::new(row.err_x, row.err_y),
            features,
        });
    }
    Ok(MeasurementDataset::new(records))
}

pub fn write_dataset<W: Write>(w: W, data: &MeasurementDataset<f64>) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in &data.records {
        wtr.serialize(DatasetRow {
            err_x: r.error.x,
            err_y: r.error.y,
            edge_proximity: r.features.edge_proximity,
            range_frac: r.features.range_frac,
            reflection: r.features.reflection,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<MeasurementDataset<f64>, IoError> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Trained-model file: variant tag plus flat parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub variant: String,
    pub params: Vec<f64>,
}

impl ModelFile {
    pub fn from_model(m: &NoiseModel<f64>) -> Self {
        Self {
            variant: m.variant_name().to_string(),
            params: m.params(),
        }
    }

    pub fn to_model(&self) -> Result<NoiseModel<f64>, SdsmmError> {
        NoiseModel::from_params(&self.variant, &self.params)
    }
}

pub fn save_model(path: &Path, model: &NoiseModel<f64>) -> Result<(), IoError> {
    write_json_file(path, &ModelFile::from_model(model))
}

pub fn load_model(path: &Path) -> Result<NoiseModel<f64>, IoError> {
    let file: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    Ok(file.to_model()?)
}

#[derive(Serialize)]
struct TrajectoryRow {
    waypoint: usize,
    true_x: f64,
    true_y: f64,
    est_x: f64,
    est_y: f64,
    cov_xx: f64,
    cov_xy: f64,
    cov_yy: f64,
    cost: f64,
    err_m: f64,
}

pub fn write_trajectory<W: Write>(w: W, log: &TrajectoryLog) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in &log.records {
        let p = &r.estimate.covariance;
        wtr.serialize(TrajectoryRow {
            waypoint: r.waypoint,
            true_x: r.true_pose.x,
            true_y: r.true_pose.y,
            est_x: r.estimate.mean.x,
            est_y: r.estimate.mean.y,
            cov_xx: p[(0, 0)],
            cov_xy: p[(0, 1)],
            cov_yy: p[(1, 1)],
            cost: r.cost,
            err_m: r.error_m,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PerMapRow {
    map_seed: u64,
    strategy: String,
    best_cost: f64,
    evaluations: usize,
    feasible_evaluations: usize,
    wall_time_s: f64,
}

pub fn write_per_map<W: Write>(w: W, maps: &[MapOutcome]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    for m in maps {
        for o in &m.outcomes {
            wtr.serialize(PerMapRow {
                map_seed: m.seed,
                strategy: o.strategy.name().to_string(),
                best_cost: o.cost(),
                evaluations: o.evaluations,
                feasible_evaluations: o.feasible_evaluations,
                wall_time_s: o.wall_time_s,
            })?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{random_map, MapSpec};

    #[test]
    fn map_round_trip_is_exact() {
        let world = random_map(11, &MapSpec::<f64>::default(), &[]).unwrap();
        let mut buf = Vec::new();
        write_json(&mut buf, &MapFile::from_world(&world)).unwrap();
        let back = read_map(buf.as_slice()).unwrap();
        assert_eq!(back, world);
    }

    #[test]
    fn dataset_round_trip_and_header() {
        let data = MeasurementDataset::new(vec![
            MeasurementRecord {
                error: Vector2::new(0.01, -0.2),
                features: Features::new(0.1, 0.5, 1.5),
            },
            MeasurementRecord {
                error: Vector2::new(1e-17, 3.0),
                features: Features::zero(),
            },
        ]);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        assert!(buf.starts_with(b"err_x,err_y,edge_proximity,range_frac,reflection\n"));
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);

        assert!(read_dataset("a,b\n1,2\n".as_bytes()).is_err());
        let bad = "err_x,err_y,edge_proximity,range_frac,reflection\n0,0,1.5,0,0\n";
        assert!(read_dataset(bad.as_bytes()).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let m = NoiseModel::<f64>::default();
        let f = ModelFile::from_model(&m);
        assert_eq!(f.variant, "reflective_linear");
        assert_eq!(f.to_model().unwrap(), m);
        let bad = ModelFile {
            variant: "trainable_diagonal".into(),
            params: vec![0.0; 3],
        };
        assert!(bad.to_model().is_err());
    }
}
