//! File formats: model config, limits and parameter JSON, trajectory, data,
//! target, log and drift-report CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{SMatrix, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsError, ParamVector};
use crate::excitation::JointLimits;
use crate::gravsim::{display_units, DriftReport, SimLog};
use crate::identification::{DataSource, DatasetMeta, IdentDataset, Sample};
use crate::kinematics::RobotState;
use crate::model::{
    build_psm_preset_with, default_gravity, default_motor_coupling, example_psm_lengths, ChainModel, Handedness,
    InertialMode, ModelError, ParamGroup, ParamLayout, PsmOptions, PSM_LENGTH_KEYS,
};
use crate::{JointVector, INSERTION_JOINT, N_JOINTS};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Invalid { path: String, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn invalid(path: &Path, detail: impl Into<String>) -> IoError {
    IoError::Invalid {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Read {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| invalid(path, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_text(path, &to_json(value))
}

fn default_gravity_array() -> [f64; 3] {
    default_gravity().into()
}

fn default_coupling_rows() -> [[f64; N_JOINTS]; 2] {
    let m = default_motor_coupling();
    [0, 1].map(|r| std::array::from_fn(|c| m[(r, c)]))
}

fn default_handedness() -> Handedness {
    Handedness::Right
}

/// PSM model configuration. Lengths and hull vertices in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lengths: BTreeMap<String, f64>,
    /// m/s², base-frame axes.
    #[serde(default = "default_gravity_array")]
    pub gravity: [f64; 3],
    /// Rows map q to the motor coordinates of joints 6 and 7.
    #[serde(default = "default_coupling_rows")]
    pub motor_coupling: [[f64; N_JOINTS]; 2],
    #[serde(default = "default_handedness")]
    pub handedness: Handedness,
    /// Per-frame hull vertices in frame axes, replacing the preset boxes.
    #[serde(default)]
    pub hulls: BTreeMap<String, Vec<[f64; 3]>>,
    #[serde(default)]
    pub spring_rest_deg: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lengths: example_psm_lengths().into_iter().map(|(k, v)| (k, v * 1e3)).collect(),
            gravity: default_gravity_array(),
            motor_coupling: default_coupling_rows(),
            handedness: Handedness::Right,
            hulls: BTreeMap::new(),
            spring_rest_deg: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<ChainModel, ModelError> {
        if let Some(k) = self.lengths.keys().find(|k| !PSM_LENGTH_KEYS.contains(&k.as_str())) {
            return Err(ModelError::UnknownLength(k.clone()));
        }
        let lengths = self.lengths.iter().map(|(k, v)| (k.clone(), v * 1e-3)).collect();
        let coupling = SMatrix::<f64, 2, N_JOINTS>::from_fn(|r, c| self.motor_coupling[r][c]);
        let options = PsmOptions {
            handedness: self.handedness,
            spring_rest: self.spring_rest_deg.to_radians(),
            hulls: self
                .hulls
                .iter()
                .map(|(k, vs)| (k.clone(), vs.iter().map(|v| Vector3::from(*v) * 1e-3).collect()))
                .collect(),
        };
        let model = build_psm_preset_with(&lengths, Vector3::from(self.gravity), coupling, &options)?;
        if let Some(k) = self.hulls.keys().find(|k| model.frame_index(k).is_none()) {
            return Err(ModelError::UnknownFrame(k.clone()));
        }
        Ok(model)
    }
}

pub fn load_model(path: &Path) -> Result<ChainModel, IoError> {
    let cfg: ModelConfig = read_json(path)?;
    cfg.build().map_err(|e| invalid(path, e.to_string()))
}

/// Joint limits in SI units (rad, rad/s, rad/s²; joint 3 in m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsFile {
    q_min: [f64; N_JOINTS],
    q_max: [f64; N_JOINTS],
    qd_max: [f64; N_JOINTS],
    qdd_max: [f64; N_JOINTS],
}

pub fn load_limits(path: &Path) -> Result<JointLimits, IoError> {
    let f: LimitsFile = read_json(path)?;
    let limits = JointLimits {
        q_min: f.q_min,
        q_max: f.q_max,
        qd_max: f.qd_max,
        qdd_max: f.qdd_max,
    };
    limits.validate().map_err(|e| invalid(path, e.to_string()))?;
    Ok(limits)
}

pub fn limits_json(limits: &JointLimits) -> String {
    to_json(&LimitsFile {
        q_min: limits.q_min,
        q_max: limits.q_max,
        qd_max: limits.qd_max,
        qdd_max: limits.qdd_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntryFile {
    pub frame: String,
    pub group: ParamGroup,
    pub name: String,
    pub value: f64,
    pub unit: String,
}

/// Parameter file: layout mode plus one entry per layout slot, in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub layout_mode: InertialMode,
    pub entries: Vec<ParamEntryFile>,
}

impl ParamsFile {
    pub fn from_params(model: &ChainModel, params: &ParamVector) -> Self {
        let layout = &params.layout;
        let entries = layout
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| ParamEntryFile {
                frame: e.frame.clone(),
                group: e.group,
                name: e.group.param_name(e.index).to_owned(),
                value: params.values[i],
                unit: layout.unit(model, i).to_owned(),
            })
            .collect();
        Self {
            layout_mode: layout.mode,
            entries,
        }
    }

    /// Values in the model's layout. Every slot must appear exactly once.
    pub fn to_params(&self, model: &ChainModel) -> Result<ParamVector, String> {
        let layout = ParamLayout::for_model(model, self.layout_mode);
        let mut values = vec![None; layout.dim()];
        for e in &self.entries {
            let index = (0..layout.dim())
                .find(|&i| {
                    let l = &layout.entries[i];
                    l.frame == e.frame && l.group == e.group && l.group.param_name(l.index) == e.name
                })
                .ok_or_else(|| format!("unknown parameter {}.{}.{}", e.frame, e.group.as_str(), e.name))?;
            if !e.value.is_finite() {
                return Err(format!("{} is not finite", layout.name(index)));
            }
            let unit = layout.unit(model, index);
            if e.unit != unit {
                return Err(format!("{} has unit `{}`, expected `{unit}`", layout.name(index), e.unit));
            }
            if values[index].replace(e.value).is_some() {
                return Err(format!("duplicate parameter {}", layout.name(index)));
            }
        }
        if let Some(i) = values.iter().position(Option::is_none) {
            return Err(format!("missing parameter {}", layout.name(i)));
        }
        let values = values.into_iter().map(|v| v.expect("checked")).collect::<Vec<_>>();
        ParamVector::new(layout, values.into()).map_err(|e| e.to_string())
    }
}

pub fn load_params(path: &Path, model: &ChainModel) -> Result<ParamVector, IoError> {
    let file: ParamsFile = read_json(path)?;
    file.to_params(model).map_err(|e| invalid(path, e))
}

pub fn params_json(model: &ChainModel, params: &ParamVector) -> String {
    to_json(&ParamsFile::from_params(model, params))
}

fn joint_cols(prefix: &str) -> impl Iterator<Item = String> + '_ {
    (1..=N_JOINTS).map(move |j| format!("{prefix}{j}"))
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

/// Header `t,q1..q7,qd1..qd7,qdd1..qdd7`, SI values.
pub fn trajectory_header() -> String {
    std::iter::once("t".to_owned())
        .chain(joint_cols("q"))
        .chain(joint_cols("qd"))
        .chain(joint_cols("qdd"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn trajectory_csv(times: &[f64], states: &[RobotState]) -> String {
    let mut out = trajectory_header();
    out.push('\n');
    for (t, s) in times.iter().zip(states) {
        push_row(
            &mut out,
            std::iter::once(*t)
                .chain(s.q.iter().copied())
                .chain(s.qd.iter().copied())
                .chain(s.qdd.iter().copied()),
        );
    }
    out
}

/// Parsed numeric table with its header.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
    comments: Vec<String>,
}

fn parse_table(path: &Path, text: &str, units_row: bool) -> Result<(Table, Option<Vec<String>>), IoError> {
    let mut comments = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    while let Some((_, l)) = lines.peek() {
        if let Some(c) = l.trim_start().strip_prefix('#') {
            comments.push(c.trim().to_owned());
            lines.next();
        } else {
            break;
        }
    }
    let split = |l: &str| l.split(',').map(|c| c.trim().to_owned()).collect::<Vec<_>>();
    let (_, head) = lines.next().ok_or_else(|| invalid(path, "empty file"))?;
    let header = split(head);
    let units = if units_row { lines.next().map(|(_, u)| split(u)) } else { None };
    let mut rows = Vec::new();
    for (n, line) in lines {
        let cells = split(line);
        if cells.len() != header.len() {
            return Err(invalid(path, format!("line {}: {} fields, header has {}", n + 1, cells.len(), header.len())));
        }
        let row = cells
            .iter()
            .zip(&header)
            .map(|(c, h)| {
                c.parse::<f64>()
                    .map_err(|_| invalid(path, format!("line {}: column `{h}`: `{c}` is not a number", n + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((
        Table {
            header,
            rows,
            comments,
        },
        units,
    ))
}

fn check_header(path: &Path, got: &[String], expected: &[String]) -> Result<(), IoError> {
    for (i, e) in expected.iter().enumerate() {
        match got.get(i) {
            Some(g) if g == e => {}
            Some(g) => return Err(invalid(path, format!("column {}: expected `{e}`, found `{g}`", i + 1))),
            None => return Err(invalid(path, format!("missing column `{e}`"))),
        }
    }
    if let Some(extra) = got.get(expected.len()) {
        return Err(invalid(path, format!("unexpected column `{extra}`")));
    }
    Ok(())
}

fn joint(row: &[f64], start: usize) -> JointVector {
    JointVector::from_column_slice(&row[start..start + N_JOINTS])
}

/// Reads a trajectory CSV back into timestamps and states.
pub fn read_trajectory(path: &Path) -> Result<(Vec<f64>, Vec<RobotState>), IoError> {
    let (table, _) = parse_table(path, &read_text(path)?, false)?;
    let expected: Vec<String> = trajectory_header().split(',').map(str::to_owned).collect();
    check_header(path, &table.header, &expected)?;
    let times = table.rows.iter().map(|r| r[0]).collect();
    let states = table
        .rows
        .iter()
        .map(|r| RobotState::new(joint(r, 1), joint(r, 8), joint(r, 15)))
        .collect();
    Ok((times, states))
}

fn position_unit(j: usize) -> &'static str {
    if j == INSERTION_JOINT {
        "m"
    } else {
        "rad"
    }
}

fn effort_unit(j: usize) -> &'static str {
    if j == INSERTION_JOINT {
        "N"
    } else {
        "N*m"
    }
}

fn data_columns(with_derivatives: bool) -> (Vec<String>, Vec<String>) {
    let mut header = vec!["t".to_owned()];
    let mut units = vec!["s".to_owned()];
    header.extend(joint_cols("q"));
    units.extend((0..N_JOINTS).map(|j| position_unit(j).to_owned()));
    header.extend(joint_cols("tau"));
    units.extend((0..N_JOINTS).map(|j| effort_unit(j).to_owned()));
    if with_derivatives {
        header.extend(joint_cols("qd"));
        units.extend((0..N_JOINTS).map(|j| format!("{}/s", position_unit(j))));
        header.extend(joint_cols("qdd"));
        units.extend((0..N_JOINTS).map(|j| format!("{}/s^2", position_unit(j))));
    }
    (header, units)
}

/// Data CSV: `# key: value` meta lines, header `t,q1..q7,tau1..tau7`
/// (optionally `qd1..qd7,qdd1..qdd7`), a units row, then samples.
pub fn dataset_csv(data: &IdentDataset) -> String {
    let with_derivatives = data.has_derivatives() && !data.samples.is_empty();
    let (header, units) = data_columns(with_derivatives);
    let source = match data.meta.source {
        DataSource::Hardware => "hardware",
        DataSource::Simulated => "simulated",
    };
    let mut out = format!("# source: {source}\n# noise: {}\n", data.meta.noise);
    out.push_str(&header.join(","));
    out.push('\n');
    out.push_str(&units.join(","));
    out.push('\n');
    for s in &data.samples {
        let mut row: Vec<f64> = std::iter::once(s.t).chain(s.q.iter().copied()).chain(s.tau.iter().copied()).collect();
        if with_derivatives {
            row.extend(s.qd.expect("checked").iter());
            row.extend(s.qdd.expect("checked").iter());
        }
        push_row(&mut out, row);
    }
    out
}

pub fn read_dataset(path: &Path) -> Result<IdentDataset, IoError> {
    let (table, units) = parse_table(path, &read_text(path)?, true)?;
    let with_derivatives = table.header.len() > 1 + 2 * N_JOINTS;
    let (header, expected_units) = data_columns(with_derivatives);
    check_header(path, &table.header, &header)?;
    let units = units.ok_or_else(|| invalid(path, "missing units row"))?;
    for (i, (u, e)) in units.iter().zip(&expected_units).enumerate() {
        if u != e {
            return Err(invalid(path, format!("column `{}`: unit `{u}`, expected `{e}`", header[i])));
        }
    }
    if units.len() != expected_units.len() {
        return Err(invalid(path, format!("units row has {} fields, expected {}", units.len(), expected_units.len())));
    }
    let mut meta = DatasetMeta {
        sample_rate: 0.0,
        source: DataSource::Hardware,
        noise: "unspecified".into(),
    };
    for c in &table.comments {
        if let Some((k, v)) = c.split_once(':') {
            match (k.trim(), v.trim()) {
                ("source", "simulated") => meta.source = DataSource::Simulated,
                ("source", "hardware") => meta.source = DataSource::Hardware,
                ("noise", v) => meta.noise = v.to_owned(),
                _ => {}
            }
        }
    }
    let samples: Vec<Sample> = table
        .rows
        .iter()
        .map(|r| Sample {
            t: r[0],
            q: joint(r, 1),
            tau: joint(r, 8),
            qd: with_derivatives.then(|| joint(r, 15)),
            qdd: with_derivatives.then(|| joint(r, 22)),
        })
        .collect();
    let n = samples.len();
    if n >= 2 {
        let span = samples[n - 1].t - samples[0].t;
        if span > 0.0 {
            meta.sample_rate = (n - 1) as f64 / span;
        }
    }
    Ok(IdentDataset { samples, meta })
}

/// Joint-target file: header `q1..q7`, one SI row per target.
pub fn targets_csv(targets: &[JointVector]) -> String {
    let mut out = joint_cols("q").collect::<Vec<_>>().join(",");
    out.push('\n');
    for q in targets {
        push_row(&mut out, q.iter().copied());
    }
    out
}

pub fn read_targets(path: &Path) -> Result<Vec<JointVector>, IoError> {
    let (table, _) = parse_table(path, &read_text(path)?, false)?;
    check_header(path, &table.header, &joint_cols("q").collect::<Vec<_>>())?;
    Ok(table.rows.iter().map(|r| joint(r, 0)).collect())
}

/// Exact drift-report header.
pub const DRIFT_HEADER: &str = "joint,pose_id,pd_pos_err,gc_pos_err,pd_tau,gc_tau,lb_tau,ub_tau,drifted";
pub const POSE_HEADER: &str = "pose_id,x,y,z,rx,ry,rz";
pub const ERROR_HEADER: &str = "pose_id,error";

/// Drift report: one row per reported joint and pose (positions in deg or
/// mm, efforts in N·m or N), a blank line, then the pose block in mm/deg.
/// Poses that failed to simulate get a third block of error rows.
pub fn drift_csv(reports: &[DriftReport], failures: &[(usize, String)]) -> String {
    let mut out = String::from(DRIFT_HEADER);
    out.push('\n');
    let mut joints: Vec<usize> = reports.iter().flat_map(|r| r.joints.iter().map(|j| j.joint)).collect();
    joints.sort_unstable();
    joints.dedup();
    for j in joints {
        for r in reports {
            if let Some(d) = r.joints.iter().find(|d| d.joint == j) {
                let _ = writeln!(
                    out,
                    "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
                    j,
                    r.pose_id,
                    display_units(j - 1, d.pd_pos_err),
                    display_units(j - 1, d.gc_pos_err),
                    d.pd_tau,
                    d.gc_tau,
                    d.lb_tau,
                    d.ub_tau,
                    r.drifted
                );
            }
        }
    }
    out.push('\n');
    out.push_str(POSE_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{},{}", r.pose_id, r.pose.to_csv_row());
    }
    if !failures.is_empty() {
        out.push('\n');
        out.push_str(ERROR_HEADER);
        out.push('\n');
        for (id, msg) in failures {
            let _ = writeln!(out, "{id},{}", msg.replace([',', '\n'], ";"));
        }
    }
    out
}

/// Rows of the drift table, split by field, for readers and tests.
pub fn parse_drift_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .take_while(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

/// Time series `phase,t,q1..q7,qd1..qd7,tau1..tau7` of several simulation phases.
pub fn log_csv(phases: &[(&str, &SimLog)]) -> String {
    let mut out = ["phase".to_owned(), "t".to_owned()]
        .into_iter()
        .chain(joint_cols("q"))
        .chain(joint_cols("qd"))
        .chain(joint_cols("tau"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for (name, log) in phases {
        for i in 0..log.len() {
            out.push_str(name);
            out.push(',');
            push_row(
                &mut out,
                std::iter::once(log.t[i])
                    .chain(log.q[i].iter().copied())
                    .chain(log.qd[i].iter().copied())
                    .chain(log.tau[i].iter().copied()),
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example_psm, InertialMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_config_builds_the_example_model() {
        let cfg = ModelConfig::default();
        let built = cfg.build().unwrap();
        let example = example_psm();
        for (k, v) in example.lengths() {
            assert!((built.length(k).unwrap() - v).abs() < 1e-15);
        }
        let text = to_json(&cfg);
        let back: ModelConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = serde_json::to_value(ModelConfig::default()).unwrap();
        v["colour"] = serde_json::json!("red");
        assert!(serde_json::from_value::<ModelConfig>(v).is_err());
        let mut cfg = ModelConfig::default();
        cfg.lengths.insert("l9".into(), 1.0);
        assert!(matches!(cfg.build(), Err(ModelError::UnknownLength(_))));
        let mut cfg = ModelConfig::default();
        cfg.hulls.insert("99".into(), vec![[0.0; 3]; 4]);
        assert!(cfg.build().is_err());
    }

    #[test]
    fn params_round_trip_exactly() {
        let model = example_psm();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for mode in [InertialMode::Gravity, InertialMode::Full] {
            let p = ParamVector::sample_physical(&model, mode, &mut rng);
            let file: ParamsFile = serde_json::from_str(&params_json(&model, &p)).unwrap();
            assert_eq!(file.to_params(&model).unwrap(), p);
        }
    }

    #[test]
    fn params_errors_name_the_entry() {
        let model = example_psm();
        let p = ParamVector::zeros(ParamLayout::for_model(&model, InertialMode::Gravity));
        let mut file = ParamsFile::from_params(&model, &p);
        let last = file.entries.pop().unwrap();
        assert_eq!(file.to_params(&model).unwrap_err(), "missing parameter F67.friction.fo");
        file.entries.push(last.clone());
        file.entries.push(last);
        assert!(file.to_params(&model).unwrap_err().starts_with("duplicate"));
        file.entries.pop();
        file.entries[0].unit = "g".into();
        assert_eq!(file.to_params(&model).unwrap_err(), "1.inertial.m has unit `g`, expected `kg`");
    }

    #[test]
    fn dataset_round_trip_and_header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let samples = (0..5)
            .map(|i| Sample {
                t: i as f64 * 0.01,
                q: JointVector::from_element(0.1 * i as f64),
                tau: JointVector::from_element(-0.3 * i as f64),
                qd: None,
                qdd: None,
            })
            .collect();
        let data = IdentDataset {
            samples,
            meta: DatasetMeta {
                sample_rate: 100.0,
                source: DataSource::Simulated,
                noise: "none".into(),
            },
        };
        write_text(&path, &dataset_csv(&data)).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.samples, data.samples);
        assert_eq!(back.meta.source, DataSource::Simulated);
        assert!((back.meta.sample_rate - 100.0).abs() < 1e-9);

        let text = dataset_csv(&data).replace("tau3", "torque3");
        write_text(&path, &text).unwrap();
        let err = read_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("torque3"), "{err}");
        let text = dataset_csv(&data).replacen(",N,", ",N*m,", 1);
        write_text(&path, &text).unwrap();
        let err = read_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("tau3"), "{err}");
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let states: Vec<RobotState> = (0..3)
            .map(|i| {
                let v = JointVector::from_element(i as f64 / 3.0);
                RobotState::new(v, -v, v * 2.0)
            })
            .collect();
        let times = vec![0.0, 0.1, 0.2];
        write_text(&path, &trajectory_csv(&times, &states)).unwrap();
        let (t, s) = read_trajectory(&path).unwrap();
        assert_eq!(t, times);
        assert_eq!(s, states);
    }
}
