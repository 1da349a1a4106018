//! Batch identification: preprocessing, stacking and the physically
//! constrained least-squares solve.
//!
//! The objective is `‖Wδ − T‖² + λ‖P_N δ‖²` where `P_N` projects onto the
//! unidentifiable directions of `W`. It is solved in whitened coordinates
//! `δ = B·Σ⁻¹·β + N·γ/√λ`, where the Hessian is close to `2I`.
//!
//! Constraints: `m ≥ m_min`, CoM inside the link hull written as facet
//! inequalities `a·l ≤ b·m`, and nonnegative Coulomb, viscous, rotor and
//! spring coefficients.

mod filter;
mod hull;
mod qp;

pub use filter::{differentiate, Biquad};
pub use hull::{centroid, facets, outside_distance, Facet};
pub use qp::{solve_qp, QpProblem, QpSettings, QpSolution, QpStatus};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{identifiable_subspace, ParamGroup, ParamLayout, ParamVector};
use crate::excitation::stack_states;
use crate::kinematics::RobotState;
use crate::model::ChainModel;
use crate::{JointVector, N_JOINTS};

/// Default lower mass bound (kg).
pub const DEFAULT_M_MIN: f64 = 1e-6;
/// Default Tikhonov weight relative to σ_r(W)², the smallest identifiable
/// singular value squared.
pub const DEFAULT_REGULARIZATION: f64 = 1e-8;
pub const MIN_SAMPLES: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdentError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("timestamps: {0}")]
    Timestamps(String),
    #[error("dataset has no {0}; preprocess it first")]
    MissingDerivatives(&'static str),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("frame {frame}: degenerate hull ({detail})")]
    DegenerateHull { frame: String, detail: String },
    #[error("solver did not converge within {iterations} iterations")]
    NotConverged { iterations: usize, best: Box<ParamVector> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Hardware,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub sample_rate: f64,
    pub source: DataSource,
    pub noise: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub q: JointVector,
    pub tau: JointVector,
    pub qd: Option<JointVector>,
    pub qdd: Option<JointVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentDataset {
    pub samples: Vec<Sample>,
    pub meta: DatasetMeta,
}

impl IdentDataset {
    /// Fails unless timestamps increase strictly with ≤ 1 % jitter.
    pub fn check_timestamps(&self) -> Result<f64, IdentError> {
        let n = self.samples.len();
        if n < 2 {
            return Err(IdentError::TooFewSamples { needed: 2, got: n });
        }
        let span = self.samples[n - 1].t - self.samples[0].t;
        let dt = span / (n - 1) as f64;
        for w in self.samples.windows(2) {
            let step = w[1].t - w[0].t;
            if step <= 0.0 || !step.is_finite() {
                return Err(IdentError::Timestamps(format!("not strictly increasing at t = {}", w[1].t)));
            }
            if (step - dt).abs() > 0.01 * dt {
                return Err(IdentError::Timestamps(format!("step {step} deviates from mean {dt} by more than 1 %")));
            }
        }
        Ok(dt)
    }

    pub fn states(&self) -> Result<Vec<RobotState>, IdentError> {
        self.samples
            .iter()
            .map(|s| {
                let qd = s.qd.ok_or(IdentError::MissingDerivatives("velocities"))?;
                let qdd = s.qdd.ok_or(IdentError::MissingDerivatives("accelerations"))?;
                Ok(RobotState::new(s.q, qd, qdd))
            })
            .collect()
    }

    pub fn has_derivatives(&self) -> bool {
        self.samples.iter().all(|s| s.qd.is_some() && s.qdd.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Low-pass cutoff; `None` skips filtering.
    pub cutoff_hz: Option<f64>,
    /// Keep derivatives present in the data instead of differentiating.
    pub use_provided_derivatives: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            cutoff_hz: Some(10.0),
            use_provided_derivatives: false,
        }
    }
}

/// Zero-phase low-pass on q and τ, central differences, end trimming.
pub fn preprocess(raw: &IdentDataset, cutoff_hz: f64) -> Result<IdentDataset, IdentError> {
    preprocess_with(
        raw,
        &PreprocessOptions {
            cutoff_hz: Some(cutoff_hz),
            use_provided_derivatives: false,
        },
    )
}

pub fn preprocess_with(raw: &IdentDataset, opts: &PreprocessOptions) -> Result<IdentDataset, IdentError> {
    let n = raw.samples.len();
    if n < MIN_SAMPLES {
        return Err(IdentError::TooFewSamples {
            needed: MIN_SAMPLES,
            got: n,
        });
    }
    let dt = raw.check_timestamps()?;
    let fs = 1.0 / dt;
    let provided = opts.use_provided_derivatives && raw.has_derivatives();
    if opts.use_provided_derivatives && !provided {
        return Err(IdentError::MissingDerivatives("velocities or accelerations"));
    }
    let filter = match opts.cutoff_hz {
        Some(fc) => Some(
            Biquad::butterworth_lowpass(fc, fs)
                .ok_or_else(|| IdentError::InvalidOption(format!("cutoff {fc} Hz must lie in (0, {} Hz)", fs / 2.0)))?,
        ),
        None => None,
    };
    let column = |f: &dyn Fn(&Sample) -> f64| -> Vec<f64> { raw.samples.iter().map(f).collect() };
    let smooth = |x: Vec<f64>| match &filter {
        Some(bq) => bq.filtfilt(&x),
        None => x,
    };
    let mut out: Vec<Sample> = raw.samples.clone();
    for j in 0..N_JOINTS {
        let q = smooth(column(&|s: &Sample| s.q[j]));
        let tau = smooth(column(&|s: &Sample| s.tau[j]));
        let (qd, qdd) = if provided {
            (
                smooth(column(&|s: &Sample| s.qd.expect("checked")[j])),
                smooth(column(&|s: &Sample| s.qdd.expect("checked")[j])),
            )
        } else {
            differentiate(&q, dt)
        };
        for (i, s) in out.iter_mut().enumerate() {
            s.q[j] = q[i];
            s.tau[j] = tau[i];
            s.qd.get_or_insert_with(JointVector::zeros)[j] = qd[i];
            s.qdd.get_or_insert_with(JointVector::zeros)[j] = qdd[i];
        }
    }
    let trim = match opts.cutoff_hz {
        Some(fc) => (2.0 * fs / fc).ceil() as usize,
        None if provided => 0,
        None => 1,
    };
    if n <= 2 * trim + 1 {
        return Err(IdentError::TooFewSamples {
            needed: 2 * trim + 2,
            got: n,
        });
    }
    Ok(IdentDataset {
        samples: out[trim..n - trim].to_vec(),
        meta: raw.meta.clone(),
    })
}

/// Stacked regressor `W` (7n × p) and torque vector `T` (7n).
pub fn assemble(model: &ChainModel, layout: &ParamLayout, data: &IdentDataset) -> Result<(DMatrix<f64>, DVector<f64>), IdentError> {
    let states = data.states()?;
    let w = stack_states(model, layout, &states);
    let t = DVector::from_iterator(
        N_JOINTS * data.samples.len(),
        data.samples.iter().flat_map(|s| s.tau.iter().copied()),
    );
    Ok((w, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub m_min: f64,
    /// λ as a multiple of σ_r(W)².
    pub regularization: f64,
    pub qp: QpSettings,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            m_min: DEFAULT_M_MIN,
            regularization: DEFAULT_REGULARIZATION,
            qp: QpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub name: String,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentResult {
    pub params: ParamVector,
    /// Per-joint training residual RMS (N·m, joint 3 in N).
    pub residual_rms: [f64; N_JOINTS],
    pub cond: f64,
    pub rank: usize,
    pub active_constraints: Vec<ConstraintRow>,
    pub iterations: usize,
    pub status: QpStatus,
    /// ‖2Wᵀ(Wδ−T) + 2λP_Nδ + Aᵀy‖∞ / ‖WᵀT‖∞.
    pub kkt_residual: f64,
    /// One multiplier per constraint row (positive at an upper bound).
    pub multipliers: Vec<f64>,
    pub lambda: f64,
    pub m_min: f64,
    pub tolerances: (f64, f64),
}

/// Linear constraint rows `l ≤ A·δ ≤ u` with names.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    dim: usize,
    rows: Vec<(Vec<(usize, f64)>, f64, f64)>,
    names: Vec<String>,
    /// Inertial block offset, facet row range and hull centroid.
    hull_rows: Vec<(usize, std::ops::Range<usize>, Vector3<f64>)>,
}

impl ConstraintSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            names: Vec::new(),
            hull_rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, coeffs: Vec<(usize, f64)>, lower: f64, upper: f64, name: String) {
        self.rows.push((coeffs, lower, upper));
        self.names.push(name);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Masses, CoM-in-hull facets and coefficient signs for `layout`.
    pub fn physical(layout: &ParamLayout, hulls: &[Vec<Vector3<f64>>], m_min: f64) -> Result<Self, IdentError> {
        let mut set = Self::empty(layout.dim());
        for b in layout.blocks() {
            let frame = &layout.entries[b.offset].frame;
            let o = b.offset;
            match b.group {
                ParamGroup::Inertial => {
                    set.push_row(vec![(o, 1.0)], m_min, f64::INFINITY, format!("{frame}.inertial.m >= m_min"));
                    let vertices = hulls.get(b.frame_index).filter(|h| !h.is_empty()).ok_or_else(|| {
                        IdentError::DegenerateHull {
                            frame: frame.clone(),
                            detail: "no vertices".into(),
                        }
                    })?;
                    let fs = facets(vertices).ok_or_else(|| IdentError::DegenerateHull {
                        frame: frame.clone(),
                        detail: format!("{} vertices span no volume", vertices.len()),
                    })?;
                    let first = set.len();
                    for (k, f) in fs.iter().enumerate() {
                        set.push_row(
                            vec![(o, -f.offset), (o + 1, f.normal.x), (o + 2, f.normal.y), (o + 3, f.normal.z)],
                            f64::NEG_INFINITY,
                            0.0,
                            format!("{frame}.inertial hull facet {k}"),
                        );
                    }
                    set.hull_rows.push((o, first..set.len(), centroid(vertices)));
                }
                ParamGroup::Friction => {
                    for (k, name) in ["fc", "fv"].iter().enumerate() {
                        set.push_row(vec![(o + k, 1.0)], 0.0, f64::INFINITY, format!("{frame}.friction.{name} >= 0"));
                    }
                }
                ParamGroup::Motor => set.push_row(vec![(o, 1.0)], 0.0, f64::INFINITY, format!("{frame}.motor.im >= 0")),
                ParamGroup::Stiffness => {
                    set.push_row(vec![(o, 1.0)], 0.0, f64::INFINITY, format!("{frame}.stiffness.ks >= 0"))
                }
            }
        }
        Ok(set)
    }

    fn matrices(&self) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let m = self.rows.len();
        let mut a = DMatrix::zeros(m, self.dim);
        let mut l = DVector::zeros(m);
        let mut u = DVector::zeros(m);
        for (i, (coeffs, lo, hi)) in self.rows.iter().enumerate() {
            for &(j, v) in coeffs {
                a[(i, j)] = v;
            }
            l[i] = *lo;
            u[i] = *hi;
        }
        (a, l, u)
    }

    /// Removes round-off level violations: single-entry bounds are clamped,
    /// first moments are pulled toward `m·centroid` until every facet holds.
    fn snap(&self, v: &mut DVector<f64>) {
        for (coeffs, lo, hi) in &self.rows {
            if let [(j, c)] = coeffs.as_slice() {
                if *c == 1.0 {
                    v[*j] = v[*j].clamp(*lo, *hi);
                }
            }
        }
        for (o, range, c) in &self.hull_rows {
            let o = *o;
            let m = v[o];
            let l = Vector3::new(v[o + 1], v[o + 2], v[o + 3]);
            let facet = |i: usize| {
                let coeffs = &self.rows[i].0;
                (Vector3::new(coeffs[1].1, coeffs[2].1, coeffs[3].1), -coeffs[0].1)
            };
            if range.clone().all(|i| {
                let (n, off) = facet(i);
                n.dot(&l) - off * m <= 0.0
            }) {
                continue;
            }
            let d = l / m - c;
            let mut s: f64 = 1.0;
            for i in range.clone() {
                let (n, off) = facet(i);
                let step = n.dot(&d);
                if step > 0.0 {
                    s = s.min((off - n.dot(c)) / step);
                }
            }
            let cm = c + d * (s.max(0.0) * (1.0 - 1e-12));
            v[o + 1] = m * cm.x;
            v[o + 2] = m * cm.y;
            v[o + 3] = m * cm.z;
        }
    }
}

/// Hull vertex lists indexed by frame, taken from the model.
pub fn model_hulls(model: &ChainModel) -> Vec<Vec<Vector3<f64>>> {
    model.frames().iter().map(|f| f.hull.clone()).collect()
}

/// Constrained least squares under the physical-consistency set.
pub fn solve_constrained(
    w: &DMatrix<f64>,
    t: &DVector<f64>,
    layout: &ParamLayout,
    hulls: &[Vec<Vector3<f64>>],
    opts: &SolveOptions,
) -> Result<IdentResult, IdentError> {
    if !(opts.m_min > 0.0) {
        return Err(IdentError::InvalidOption("m_min must be positive".into()));
    }
    let cons = ConstraintSet::physical(layout, hulls, opts.m_min)?;
    solve_with_constraints(w, t, layout, &cons, opts)
}

/// Constrained least squares under an arbitrary constraint set.
pub fn solve_with_constraints(
    w: &DMatrix<f64>,
    t: &DVector<f64>,
    layout: &ParamLayout,
    cons: &ConstraintSet,
    opts: &SolveOptions,
) -> Result<IdentResult, IdentError> {
    let p = layout.dim();
    if w.ncols() != p || w.nrows() != t.len() || w.nrows() == 0 || cons.dim != p {
        return Err(IdentError::Shape(format!(
            "W is {}×{}, T has {} rows, layout has {p} entries",
            w.nrows(),
            w.ncols(),
            t.len()
        )));
    }
    if !(opts.regularization > 0.0) {
        return Err(IdentError::InvalidOption("regularization must be positive".into()));
    }
    let sub = identifiable_subspace(w);
    let r = sub.rank;
    // The bias λ puts on the identifiable part scales with λ/σ_r², so σ_r is the reference.
    let sigma_r = if r == 0 { 0.0 } else { sub.singular_values[r - 1] };
    let lambda = opts.regularization * sigma_r * sigma_r;
    if r < p && !(lambda > 0.0) {
        return Err(IdentError::InvalidOption("regressor is identically zero".into()));
    }
    // δ = M·x with M = [B·Σ⁻¹, N/√λ].
    let mut map = DMatrix::zeros(p, p);
    for k in 0..r {
        map.set_column(k, &(sub.basis.column(k) / sub.singular_values[k]));
    }
    for k in 0..p - r {
        map.set_column(r + k, &(sub.null_basis.column(k) / lambda.sqrt()));
    }
    // ‖W·M·x − T‖² over the identifiable block; W·N is zero to rank tolerance.
    let wm = w * map.columns(0, r);
    let mut hess = DMatrix::identity(p, p) * 2.0;
    hess.view_mut((0, 0), (r, r)).copy_from(&(wm.transpose() * &wm * 2.0));
    let mut q = DVector::zeros(p);
    q.rows_mut(0, r).copy_from(&(wm.transpose() * t * -2.0));
    let (a, l, u) = cons.matrices();
    let prob = QpProblem {
        p: hess,
        q,
        a: &a * &map,
        l,
        u,
    };
    let sol = solve_qp(&prob, &opts.qp);
    let mut params = ParamVector::new(layout.clone(), &map * &sol.x).map_err(|e| IdentError::Shape(e.to_string()))?;
    if !sol.converged() {
        return Err(IdentError::NotConverged {
            iterations: sol.iterations,
            best: Box::new(params),
        });
    }
    cons.snap(&mut params.values);

    let resid = w * &params.values - t;
    let n = t.len() / N_JOINTS;
    let mut rms = [0.0; N_JOINTS];
    if t.len() % N_JOINTS == 0 {
        for (j, v) in rms.iter_mut().enumerate() {
            let s: f64 = (0..n).map(|k| resid[k * N_JOINTS + j].powi(2)).sum();
            *v = (s / n.max(1) as f64).sqrt();
        }
    }
    let null_part = &sub.null_basis * (sub.null_basis.transpose() * &params.values);
    let grad = w.transpose() * &resid * 2.0 + null_part * (2.0 * lambda) + a.transpose() * &sol.y;
    let wtt = (w.transpose() * t).amax().max(f64::MIN_POSITIVE);
    let y_scale = sol.y.amax();
    let active_constraints = (0..cons.len())
        .filter(|&i| sol.y[i] != 0.0 && sol.y[i].abs() > 1e-14 * y_scale)
        .map(|i| ConstraintRow {
            name: cons.names[i].clone(),
            multiplier: sol.y[i],
        })
        .collect();
    let cond = if r == 0 {
        f64::INFINITY
    } else {
        sub.singular_values[0] / sub.singular_values[r - 1]
    };
    Ok(IdentResult {
        params,
        residual_rms: rms,
        cond,
        rank: r,
        active_constraints,
        iterations: sol.iterations,
        status: sol.status,
        kkt_residual: grad.amax() / wtt,
        multipliers: sol.y.iter().copied().collect(),
        lambda,
        m_min: opts.m_min,
        tolerances: (opts.qp.eps_abs, opts.qp.eps_rel),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub rms: [f64; N_JOINTS],
    pub peak: [f64; N_JOINTS],
}

/// Prediction error of `params` on held-out data.
pub fn crossvalidate(model: &ChainModel, params: &ParamVector, held_out: &IdentDataset) -> Result<CrossValidation, IdentError> {
    let (w, t) = assemble(model, &params.layout, held_out)?;
    let e = w * &params.values - t;
    let n = held_out.samples.len();
    let mut rms = [0.0; N_JOINTS];
    let mut peak = [0.0; N_JOINTS];
    for j in 0..N_JOINTS {
        let mut s = 0.0;
        for k in 0..n {
            let v = e[k * N_JOINTS + j];
            s += v * v;
            peak[j] = f64::max(peak[j], v.abs());
        }
        rms[j] = (s / n.max(1) as f64).sqrt();
    }
    Ok(CrossValidation { rms, peak })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub entry: String,
    pub detail: String,
}

/// Independent check of physical consistency. Hull membership uses a
/// simplex decomposition, not the solver's facet rows.
pub fn check_constraints(params: &ParamVector, hulls: &[Vec<Vector3<f64>>], m_min: f64) -> Vec<ConstraintViolation> {
    let mut out = Vec::new();
    let layout = &params.layout;
    let v = &params.values;
    for b in layout.blocks() {
        let o = b.offset;
        let frame = &layout.entries[o].frame;
        let mut flag = |entry: String, detail: String| out.push(ConstraintViolation { entry, detail });
        match b.group {
            ParamGroup::Inertial => {
                let m = v[o];
                if !(m >= m_min) {
                    flag(format!("{frame}.inertial.m"), format!("mass {m} below {m_min}"));
                    continue;
                }
                let c = Vector3::new(v[o + 1], v[o + 2], v[o + 3]) / m;
                match hulls.get(b.frame_index).filter(|h| !h.is_empty()) {
                    None => flag(format!("{frame}.inertial"), "no hull".into()),
                    Some(h) => {
                        let d = outside_distance(h, &c);
                        if !(d <= 1e-9) {
                            flag(format!("{frame}.inertial"), format!("CoM {:.3e} m outside hull", d));
                        }
                    }
                }
            }
            ParamGroup::Friction => {
                for (k, name) in ["fc", "fv"].iter().enumerate() {
                    if !(v[o + k] >= 0.0) {
                        flag(format!("{frame}.friction.{name}"), format!("negative value {}", v[o + k]));
                    }
                }
            }
            ParamGroup::Motor | ParamGroup::Stiffness => {
                if !(v[o] >= 0.0) {
                    flag(layout.name(o), format!("negative value {}", v[o]));
                }
            }
        }
    }
    out
}
