//! System identification for the lifted bilinear model.
//!
//! Given ground-truth transitions `{prev, next, input}` and landmark
//! measurements `{step, landmark, value}`, the lifted data matrices are
//!
//! ```text
//!   X  = [x_1 .. x_P]      lifted next states
//!   X̆  = [x̆_1 .. x̆_P]      lifted previous states
//!   U  = [u_1 .. u_P]      lifted inputs
//!   V  = U ⊙ X̆             column-wise Kronecker (Khatri-Rao)
//!   Y  = [y_11 .. y_PβP]   lifted measurements
//!   Z  = L ⊙ X̂             lifted landmarks ⊙ duplicated states
//!   Ξ  = [ξ_1 .. ξ_P]      augmented raw next states (reduced target)
//! ```
//!
//! and the regularized least-squares training problem solves the 3×3-block
//! normal equations for (A, B, H), a ridge system for C, and closed-form
//! expressions for Q and R. The reduced variant regresses Ξ instead of X, so
//! the transitioned state is not lifted. Gram matrices are accumulated in
//! column chunks (data-parallel when the `parallel` feature is on, summed in
//! a fixed order so results are reproducible); the cost is linear in the
//! number of training points.

use nalgebra::{DMatrix, DVector};

use crate::exec;
use crate::geom::RigidTransform2;
use crate::lifting::{LiftingSpec, StateConvention};
use crate::linalg::{kron_vec, symmetrize};
use crate::{Error, Result};

const CHUNK: usize = 512;

/// One ground-truth state transition in original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub prev: DVector<f64>,
    pub next: DVector<f64>,
    pub input: DVector<f64>,
}

/// One ground-truth landmark measurement, attached to the transitioned state
/// of transition `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeasurement {
    pub step: usize,
    pub landmark: DVector<f64>,
    pub value: DVector<f64>,
    pub sensor: usize,
}

/// Ground-truth training data in original coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub transitions: Vec<Transition>,
    pub measurements: Vec<TrainingMeasurement>,
}

impl TrainingSet {
    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn num_measurements(&self) -> usize {
        self.measurements.len()
    }

    pub fn num_sensors(&self) -> usize {
        self.measurements.iter().map(|m| m.sensor + 1).max().unwrap_or(0)
    }

    /// Measurement counts per transition (β_i).
    pub fn measurements_per_step(&self) -> Vec<usize> {
        let mut beta = vec![0usize; self.transitions.len()];
        for m in &self.measurements {
            beta[m.step] += 1;
        }
        beta
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.measurements {
            if m.step >= self.transitions.len() {
                return Err(Error::Config(format!(
                    "measurement references transition {} of {}",
                    m.step,
                    self.transitions.len()
                )));
            }
        }
        Ok(())
    }
}

/// Regularization weights for the training loss.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub tau_a: f64,
    pub tau_b: f64,
    pub tau_h: f64,
    pub tau_c: f64,
    pub tau_q: f64,
    pub tau_r: f64,
    /// Disables the bilinear H term (for purely linear-in-state systems).
    pub use_h_term: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            tau_a: 1e-6,
            tau_b: 1e-6,
            tau_h: 1e-6,
            tau_c: 1e-6,
            tau_q: 1e-4,
            tau_r: 1e-4,
            use_h_term: true,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.tau_a, self.tau_b, self.tau_h, self.tau_c];
        if nonneg.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("ridge weights must be nonnegative".into()));
        }
        if !(self.tau_q > 0.0) || !(self.tau_r > 0.0) {
            return Err(Error::Config("tau_q and tau_r must be positive".into()));
        }
        Ok(())
    }
}

/// Lifting definitions for all four embedded quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpecs {
    /// Angle handling for the state; `None` when the raw state is already a
    /// vector-space quantity.
    pub conv: Option<StateConvention>,
    /// Lifting of the (augmented) state.
    pub state: LiftingSpec,
    pub input: LiftingSpec,
    pub landmark: LiftingSpec,
    pub measurement: LiftingSpec,
}

impl ModelSpecs {
    /// Augments a raw state (inserts the cos/sin pair) when a convention is
    /// set, otherwise returns it unchanged.
    pub fn augment_state(&self, raw: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.conv {
            Some(conv) => conv.augment(raw),
            None => Ok(raw.clone()),
        }
    }

    /// Inverse of [`Self::augment_state`] on the head of a lifted state.
    pub fn recover_state(&self, augmented: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.conv {
            Some(conv) => conv.recover(augmented),
            None => Ok(augmented.clone()),
        }
    }

    pub fn lift_state(&self, raw: &DVector<f64>) -> Result<DVector<f64>> {
        self.state.lift(&self.augment_state(raw)?)
    }

    /// Dimension of the augmented (pre-lift) state.
    pub fn pre_lift_state_dim(&self) -> usize {
        self.state.pre_lift_dim()
    }
}

/// One measurement model (per-sensor C and R).
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    /// N_y × (N_l · N_x) bilinear measurement operator.
    pub c: DMatrix<f64>,
    /// N_y × N_y measurement noise covariance, symmetric positive definite.
    pub r: DMatrix<f64>,
}

/// Fully lifted process model plus measurement models.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// N_x × (N_u · N_x), zero when the H term is disabled.
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub sensors: Vec<SensorModel>,
    pub specs: ModelSpecs,
}

/// Reduced process model: only the original state components are predicted;
/// the lifted features are left to the manifold constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedLiftedModel {
    pub a_xi: DMatrix<f64>,
    pub b_xi: DMatrix<f64>,
    pub h_xi: DMatrix<f64>,
    pub q_xi: DMatrix<f64>,
    pub sensors: Vec<SensorModel>,
    pub specs: ModelSpecs,
}

fn check_spd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-9 * m.diagonal().abs().max().max(1.0) {
        return Err(Error::Training(format!("{name} is not symmetric (skew {asym:.3e})")));
    }
    if nalgebra::Cholesky::new(m.clone()).is_none() {
        return Err(Error::Training(format!("{name} is not positive definite")));
    }
    Ok(())
}

impl LiftedModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        h: DMatrix<f64>,
        q: DMatrix<f64>,
        sensors: Vec<SensorModel>,
        specs: ModelSpecs,
    ) -> Result<Self> {
        check_spd("Q", &q)?;
        for (s, sensor) in sensors.iter().enumerate() {
            check_spd(&format!("R[{s}]"), &sensor.r)?;
        }
        Ok(Self { a, b, h, q, sensors, specs })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
}

impl ReducedLiftedModel {
    pub fn new(
        a_xi: DMatrix<f64>,
        b_xi: DMatrix<f64>,
        h_xi: DMatrix<f64>,
        q_xi: DMatrix<f64>,
        sensors: Vec<SensorModel>,
        specs: ModelSpecs,
    ) -> Result<Self> {
        check_spd("Q_xi", &q_xi)?;
        for (s, sensor) in sensors.iter().enumerate() {
            check_spd(&format!("R[{s}]"), &sensor.r)?;
        }
        Ok(Self { a_xi, b_xi, h_xi, q_xi, sensors, specs })
    }

    pub fn state_dim(&self) -> usize {
        self.a_xi.ncols()
    }

    /// Dimension of the predicted (augmented raw) state.
    pub fn reduced_dim(&self) -> usize {
        self.a_xi.nrows()
    }
}

/// Column-wise Kronecker product: column p of the result is
/// `kron(col_p(a), col_p(b))`.
pub fn khatri_rao(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "Khatri-Rao factors need equal column counts ({} vs {})",
            a.ncols(),
            b.ncols()
        )));
    }
    let mut out = DMatrix::zeros(a.nrows() * b.nrows(), a.ncols());
    for p in 0..a.ncols() {
        let col = kron_vec(&a.column(p).into_owned(), &b.column(p).into_owned());
        out.column_mut(p).copy_from(&col);
    }
    Ok(out)
}

/// Dense block matrices of a training set (small-scale / oracle use; the fit
/// routines accumulate Gram matrices chunk-wise instead).
#[derive(Debug, Clone)]
pub struct BlockMatrices {
    pub x: DMatrix<f64>,
    pub x_prev: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    /// States duplicated β_i times (measurement columns).
    pub x_dup: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

/// Lifts a training set into its block-matrix form. Measurement columns are
/// ordered by timestep (then input order), matching the duplicated-state
/// construction.
pub fn assemble_blocks(ts: &TrainingSet, specs: &ModelSpecs) -> Result<BlockMatrices> {
    ts.validate()?;
    let p = ts.num_transitions();
    if p == 0 {
        return Err(Error::Training("empty transition set".into()));
    }
    let nx = specs.state.lifted_dim();
    let nu = specs.input.lifted_dim();
    let d = specs.pre_lift_state_dim();

    let mut x = DMatrix::zeros(nx, p);
    let mut x_prev = DMatrix::zeros(nx, p);
    let mut u = DMatrix::zeros(nu, p);
    let mut xi = DMatrix::zeros(d, p);
    for (i, tr) in ts.transitions.iter().enumerate() {
        x.column_mut(i).copy_from(&specs.lift_state(&tr.next)?);
        x_prev.column_mut(i).copy_from(&specs.lift_state(&tr.prev)?);
        u.column_mut(i).copy_from(&specs.input.lift(&tr.input)?);
        xi.column_mut(i).copy_from(&specs.augment_state(&tr.next)?);
    }
    let v = khatri_rao(&u, &x_prev)?;

    let mut order: Vec<usize> = (0..ts.measurements.len()).collect();
    order.sort_by_key(|&m| ts.measurements[m].step);
    let s = ts.num_measurements();
    let ny = specs.measurement.lifted_dim();
    let nl = specs.landmark.lifted_dim();
    let mut y = DMatrix::zeros(ny, s);
    let mut l = DMatrix::zeros(nl, s);
    let mut x_dup = DMatrix::zeros(nx, s);
    for (col, &mi) in order.iter().enumerate() {
        let m = &ts.measurements[mi];
        y.column_mut(col).copy_from(&specs.measurement.lift(&m.value)?);
        l.column_mut(col).copy_from(&specs.landmark.lift(&m.landmark)?);
        x_dup.column_mut(col).copy_from(&x.column(m.step));
    }
    let z = khatri_rao(&l, &x_dup)?;

    Ok(BlockMatrices { x, x_prev, u, v, y, z, xi, x_dup, l })
}

/// Lifted columns shared by both fit variants.
struct LiftedColumns {
    x: Vec<DVector<f64>>,
    x_prev: Vec<DVector<f64>>,
    u: Vec<DVector<f64>>,
    xi: Vec<DVector<f64>>,
}

fn lift_columns(ts: &TrainingSet, specs: &ModelSpecs) -> Result<LiftedColumns> {
    let lifted: Vec<Result<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)>> =
        exec::map_collect(&ts.transitions, |tr| {
            Ok((
                specs.lift_state(&tr.next)?,
                specs.lift_state(&tr.prev)?,
                specs.input.lift(&tr.input)?,
                specs.augment_state(&tr.next)?,
            ))
        });
    let mut cols = LiftedColumns {
        x: Vec::with_capacity(lifted.len()),
        x_prev: Vec::with_capacity(lifted.len()),
        u: Vec::with_capacity(lifted.len()),
        xi: Vec::with_capacity(lifted.len()),
    };
    for item in lifted {
        let (x, xp, u, xi) = item?;
        cols.x.push(x);
        cols.x_prev.push(xp);
        cols.u.push(u);
        cols.xi.push(xi);
    }
    Ok(cols)
}

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(CHUNK).map(|start| (start, (start + CHUNK).min(n))).collect()
}

/// Stacks `[x̆; u; (v)]` for the given column range.
fn dynamics_chunk(cols: &LiftedColumns, range: (usize, usize), use_h: bool) -> DMatrix<f64> {
    let nx = cols.x_prev[0].len();
    let nu = cols.u[0].len();
    let nm = if use_h { nx + nu + nu * nx } else { nx + nu };
    let mut m = DMatrix::zeros(nm, range.1 - range.0);
    for (c, i) in (range.0..range.1).enumerate() {
        m.view_mut((0, c), (nx, 1)).copy_from(&cols.x_prev[i]);
        m.view_mut((nx, c), (nu, 1)).copy_from(&cols.u[i]);
        if use_h {
            m.view_mut((nx + nu, c), (nu * nx, 1))
                .copy_from(&kron_vec(&cols.u[i], &cols.x_prev[i]));
        }
    }
    m
}

fn target_chunk(cols: &[DVector<f64>], range: (usize, usize)) -> DMatrix<f64> {
    let rows = cols[0].len();
    let mut m = DMatrix::zeros(rows, range.1 - range.0);
    for (c, i) in (range.0..range.1).enumerate() {
        m.column_mut(c).copy_from(&cols[i]);
    }
    m
}

struct DynamicsFit {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    h: DMatrix<f64>,
    q: DMatrix<f64>,
}

/// Solves the regularized normal equations for one regression target
/// (`X` for the full model, `Ξ` for the reduced one) and the matching noise
/// covariance.
fn fit_dynamics(
    cols: &LiftedColumns,
    target: &[DVector<f64>],
    hp: &Hyperparameters,
) -> Result<DynamicsFit> {
    let p = cols.x.len();
    let nx = cols.x_prev[0].len();
    let nu = cols.u[0].len();
    let use_h = hp.use_h_term;
    let nm = if use_h { nx + nu + nu * nx } else { nx + nu };
    let nt = target[0].len();

    let ranges = chunk_ranges(p);
    let partials: Vec<(DMatrix<f64>, DMatrix<f64>)> = exec::map_collect(&ranges, |&range| {
        let m = dynamics_chunk(cols, range, use_h);
        let t = target_chunk(target, range);
        (&m * m.transpose(), &m * t.transpose())
    });
    let mut gram = DMatrix::zeros(nm, nm);
    let mut rhs = DMatrix::zeros(nm, nt);
    for (g, r) in partials {
        gram += g;
        rhs += r;
    }

    let pf = p as f64;
    for i in 0..nx {
        gram[(i, i)] += pf * hp.tau_a;
    }
    for i in nx..nx + nu {
        gram[(i, i)] += pf * hp.tau_b;
    }
    if use_h {
        for i in nx + nu..nm {
            gram[(i, i)] += pf * hp.tau_h;
        }
    }

    let chol = nalgebra::Cholesky::new(gram)
        .ok_or_else(|| Error::Training("singular regularized normal matrix".into()))?;
    let theta = chol.solve(&rhs); // [Aᵀ; Bᵀ; Hᵀ]
    let a = theta.rows(0, nx).transpose();
    let b = theta.rows(nx, nu).transpose();
    let h = if use_h {
        theta.rows(nx + nu, nu * nx).transpose()
    } else {
        DMatrix::zeros(nt, nu * nx)
    };

    // Residual outer product in a second pass keeps J Jᵀ positive
    // semidefinite to rounding even on noiseless data.
    let mut w = DMatrix::zeros(nt, nm);
    w.view_mut((0, 0), (nt, nx)).copy_from(&a);
    w.view_mut((0, nx), (nt, nu)).copy_from(&b);
    if use_h {
        w.view_mut((0, nx + nu), (nt, nu * nx)).copy_from(&h);
    }
    let res_partials: Vec<DMatrix<f64>> = exec::map_collect(&ranges, |&range| {
        let m = dynamics_chunk(cols, range, use_h);
        let t = target_chunk(target, range);
        let j = t - &w * m;
        &j * j.transpose()
    });
    let mut jjt = DMatrix::zeros(nt, nt);
    for part in res_partials {
        jjt += part;
    }

    let mut q = jjt / pf;
    q += hp.tau_a * (&a * a.transpose());
    q += hp.tau_b * (&b * b.transpose());
    if use_h {
        q += hp.tau_h * (&h * h.transpose());
    }
    for i in 0..nt {
        q[(i, i)] += hp.tau_q;
    }
    symmetrize(&mut q);
    Ok(DynamicsFit { a, b, h, q })
}

/// Fits all per-sensor measurement models `C = (Y Zᵀ)(Z Zᵀ + S τ_C I)⁻¹` and
/// `R = T Tᵀ/S + τ_C C Cᵀ + τ_R I`.
fn fit_sensors(
    ts: &TrainingSet,
    specs: &ModelSpecs,
    cols: &LiftedColumns,
    hp: &Hyperparameters,
) -> Result<Vec<SensorModel>> {
    let num_sensors = ts.num_sensors();
    if num_sensors == 0 {
        return Err(Error::Training("training set has no measurements".into()));
    }
    let nx = specs.state.lifted_dim();
    let nl = specs.landmark.lifted_dim();
    let ny = specs.measurement.lifted_dim();
    let nz = nl * nx;

    let mut sensors = Vec::with_capacity(num_sensors);
    for sensor in 0..num_sensors {
        let idx: Vec<usize> = (0..ts.measurements.len())
            .filter(|&m| ts.measurements[m].sensor == sensor)
            .collect();
        if idx.is_empty() {
            return Err(Error::Training(format!("sensor {sensor} has no measurements")));
        }
        let s_count = idx.len() as f64;

        let lift_chunk = |range: &(usize, usize)| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
            let w = range.1 - range.0;
            let mut z = DMatrix::zeros(nz, w);
            let mut y = DMatrix::zeros(ny, w);
            for (c, &mi) in idx[range.0..range.1].iter().enumerate() {
                let m = &ts.measurements[mi];
                let l = specs.landmark.lift(&m.landmark)?;
                z.column_mut(c).copy_from(&kron_vec(&l, &cols.x[m.step]));
                y.column_mut(c).copy_from(&specs.measurement.lift(&m.value)?);
            }
            Ok((z, y))
        };

        let ranges = chunk_ranges(idx.len());
        let partials: Vec<Result<(DMatrix<f64>, DMatrix<f64>)>> =
            exec::map_collect(&ranges, |range| {
                let (z, y) = lift_chunk(range)?;
                Ok((&z * z.transpose(), &y * z.transpose()))
            });
        let mut gz = DMatrix::zeros(nz, nz);
        let mut gyz = DMatrix::zeros(ny, nz);
        for part in partials {
            let (pz, pyz) = part?;
            gz += pz;
            gyz += pyz;
        }
        for i in 0..nz {
            gz[(i, i)] += s_count * hp.tau_c;
        }
        let chol = nalgebra::Cholesky::new(gz)
            .ok_or_else(|| Error::Training("singular measurement normal matrix".into()))?;
        // C = Gyz Gz⁻¹ via Gzᵀ Xᵀ = Gyzᵀ (Gz symmetric).
        let c = chol.solve(&gyz.transpose()).transpose();

        let res_partials: Vec<Result<DMatrix<f64>>> = exec::map_collect(&ranges, |range| {
            let (z, y) = lift_chunk(range)?;
            let t = y - &c * z;
            Ok(&t * t.transpose())
        });
        let mut ttt = DMatrix::zeros(ny, ny);
        for part in res_partials {
            ttt += part?;
        }
        let mut r = ttt / s_count;
        r += hp.tau_c * (&c * c.transpose());
        for i in 0..ny {
            r[(i, i)] += hp.tau_r;
        }
        symmetrize(&mut r);
        sensors.push(SensorModel { c, r });
    }
    Ok(sensors)
}

fn prepare(ts: &TrainingSet, hp: &Hyperparameters) -> Result<()> {
    ts.validate()?;
    hp.validate()?;
    if ts.num_transitions() == 0 {
        return Err(Error::Training("empty transition set".into()));
    }
    if ts.num_measurements() == 0 {
        return Err(Error::Training("training set has no measurements".into()));
    }
    Ok(())
}

/// Trains the fully lifted model (Gauss-Newton UKL/CKL engines).
pub fn fit_full(ts: &TrainingSet, specs: &ModelSpecs, hp: &Hyperparameters) -> Result<LiftedModel> {
    prepare(ts, hp)?;
    let cols = lift_columns(ts, specs)?;
    let fit = fit_dynamics(&cols, &cols.x, hp)?;
    let sensors = fit_sensors(ts, specs, &cols, hp)?;
    LiftedModel::new(fit.a, fit.b, fit.h, fit.q, sensors, specs.clone())
}

/// Trains the reduced model: the regression target is the augmented raw next
/// state, so only the original variables get a learned process model.
pub fn fit_reduced(
    ts: &TrainingSet,
    specs: &ModelSpecs,
    hp: &Hyperparameters,
) -> Result<ReducedLiftedModel> {
    prepare(ts, hp)?;
    let cols = lift_columns(ts, specs)?;
    let fit = fit_dynamics(&cols, &cols.xi, hp)?;
    let sensors = fit_sensors(ts, specs, &cols, hp)?;
    ReducedLiftedModel::new(fit.a, fit.b, fit.h, fit.q, sensors, specs.clone())
}

/// Trains both variants off one pass of lifted columns and one measurement
/// fit (they share C and R).
pub fn fit_both(
    ts: &TrainingSet,
    specs: &ModelSpecs,
    hp: &Hyperparameters,
) -> Result<(LiftedModel, ReducedLiftedModel)> {
    prepare(ts, hp)?;
    let cols = lift_columns(ts, specs)?;
    let full = fit_dynamics(&cols, &cols.x, hp)?;
    let reduced = fit_dynamics(&cols, &cols.xi, hp)?;
    let sensors = fit_sensors(ts, specs, &cols, hp)?;
    Ok((
        LiftedModel::new(full.a, full.b, full.h, full.q, sensors.clone(), specs.clone())?,
        ReducedLiftedModel::new(
            reduced.a,
            reduced.b,
            reduced.h,
            reduced.q,
            sensors,
            specs.clone(),
        )?,
    ))
}

/// Appends rigidly transformed copies of the data. States and landmark
/// positions move with the transform; inputs and range-type measurement
/// values are invariant under rigid motion and are copied unchanged.
///
/// Requires planar (x, y, theta) states and planar landmarks.
pub fn augment(ts: &TrainingSet, transforms: &[RigidTransform2]) -> Result<TrainingSet> {
    let p = ts.num_transitions();
    for tr in &ts.transitions {
        if tr.prev.len() != 3 || tr.next.len() != 3 {
            return Err(Error::Dimension(
                "augmentation requires planar (x, y, theta) states".into(),
            ));
        }
    }
    let mut out = ts.clone();
    for (t, tf) in transforms.iter().enumerate() {
        let offset = (t + 1) * p;
        for tr in &ts.transitions {
            out.transitions.push(Transition {
                prev: tf.apply_pose(&tr.prev),
                next: tf.apply_pose(&tr.next),
                input: tr.input.clone(),
            });
        }
        for m in &ts.measurements {
            if m.landmark.len() != 2 {
                return Err(Error::Dimension("augmentation requires planar landmarks".into()));
            }
            let lm = tf.apply_point(&nalgebra::Vector2::new(m.landmark[0], m.landmark[1]));
            out.measurements.push(TrainingMeasurement {
                step: m.step + offset,
                landmark: DVector::from_vec(vec![lm.x, lm.y]),
                value: m.value.clone(),
                sensor: m.sensor,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_specs() -> ModelSpecs {
        ModelSpecs {
            conv: None,
            state: LiftingSpec::identity(1),
            input: LiftingSpec::identity(1),
            landmark: LiftingSpec::identity(1),
            measurement: LiftingSpec::identity(1),
        }
    }

    fn scalar_ts(p: usize) -> TrainingSet {
        // x_k = 0.9 x_{k-1} + 0.5 u_k, measurements gamma = x with psi = 1.
        let mut ts = TrainingSet::default();
        let mut x = 1.0;
        for i in 0..p {
            let u = ((i as f64) * 0.7).sin() + 0.3;
            let next = 0.9 * x + 0.5 * u;
            ts.transitions.push(Transition {
                prev: DVector::from_vec(vec![x]),
                next: DVector::from_vec(vec![next]),
                input: DVector::from_vec(vec![u]),
            });
            ts.measurements.push(TrainingMeasurement {
                step: i,
                landmark: DVector::from_vec(vec![1.0]),
                value: DVector::from_vec(vec![next]),
                sensor: 0,
            });
            x = next;
        }
        ts
    }

    #[test]
    fn khatri_rao_definition() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 5.0, 6.0]);
        let k = khatri_rao(&a, &b).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[3.0, 8.0, 5.0, 12.0]));
        // Ones row leaves the other factor unchanged.
        let ones = DMatrix::from_element(1, 2, 1.0);
        assert_eq!(khatri_rao(&ones, &b).unwrap(), b);
        assert!(khatri_rao(&a, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn khatri_rao_matches_per_column_kron() {
        let a = DMatrix::from_fn(2, 3, |r, c| (r * 3 + c) as f64 + 0.5);
        let b = DMatrix::from_fn(3, 3, |r, c| (r as f64 - c as f64) * 1.25);
        let k = khatri_rao(&a, &b).unwrap();
        for p in 0..3 {
            let expect = kron_vec(&a.column(p).into_owned(), &b.column(p).into_owned());
            assert_relative_eq!(k.column(p).into_owned(), expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn assemble_duplicates_states_per_measurement() {
        let mut ts = scalar_ts(1);
        ts.measurements.push(TrainingMeasurement {
            step: 0,
            landmark: DVector::from_vec(vec![2.0]),
            value: DVector::from_vec(vec![0.1]),
            sensor: 0,
        });
        let blocks = assemble_blocks(&ts, &scalar_specs()).unwrap();
        assert_eq!(blocks.x_dup.ncols(), 2);
        assert_eq!(blocks.x_dup.column(0), blocks.x_dup.column(1));
        assert_eq!(blocks.v.ncols(), 1);
        assert_eq!(blocks.z.ncols(), 2);
        // Identity lifting: X equals the raw next-state matrix.
        assert_eq!(blocks.x[(0, 0)], ts.transitions[0].next[0]);
    }

    #[test]
    fn recovers_scalar_linear_system() {
        let ts = scalar_ts(200);
        let hp = Hyperparameters {
            tau_a: 1e-10,
            tau_b: 1e-10,
            tau_h: 1e-10,
            tau_c: 1e-10,
            tau_q: 1e-10,
            tau_r: 1e-10,
            use_h_term: false,
        };
        let model = fit_full(&ts, &scalar_specs(), &hp).unwrap();
        assert_relative_eq!(model.a[(0, 0)], 0.9, epsilon = 1e-6);
        assert_relative_eq!(model.b[(0, 0)], 0.5, epsilon = 1e-6);
        // Noiseless fit: Q collapses to the ridge terms.
        assert!(model.q[(0, 0)] < 1e-8);

        let reduced = fit_reduced(&ts, &scalar_specs(), &hp).unwrap();
        assert_relative_eq!(reduced.a_xi[(0, 0)], model.a[(0, 0)], epsilon = 1e-9);
        assert_relative_eq!(reduced.b_xi[(0, 0)], model.b[(0, 0)], epsilon = 1e-9);
        assert_eq!(reduced.a_xi.nrows(), 1);
    }

    #[test]
    fn single_transition_with_ridge_is_solvable() {
        let ts = scalar_ts(1);
        let model = fit_full(&ts, &scalar_specs(), &Hyperparameters::default()).unwrap();
        assert!(model.a[(0, 0)].is_finite());
    }

    #[test]
    fn augment_counts_and_rigid_invariance() {
        let mut ts = TrainingSet::default();
        ts.transitions.push(Transition {
            prev: DVector::from_vec(vec![1.0, 0.0, 0.0]),
            next: DVector::from_vec(vec![1.1, 0.0, 0.0]),
            input: DVector::from_vec(vec![1.0, 0.0]),
        });
        ts.measurements.push(TrainingMeasurement {
            step: 0,
            landmark: DVector::from_vec(vec![4.0, 0.0]),
            value: DVector::from_vec(vec![2.9]),
            sensor: 0,
        });
        let quarter = RigidTransform2::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let aug = augment(&ts, &[RigidTransform2::identity(), quarter]).unwrap();
        assert_eq!(aug.num_transitions(), 3);
        assert_eq!(aug.num_measurements(), 3);
        // Identity copy is exact.
        assert_eq!(aug.transitions[1], ts.transitions[0]);
        // Quarter turn moves (1, 0, 0) to (0, 1, pi/2); input and range stay.
        let rotated = &aug.transitions[2];
        assert_relative_eq!(rotated.prev[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(rotated.prev[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(rotated.prev[2], std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert_eq!(rotated.input, ts.transitions[0].input);
        assert_eq!(aug.measurements[2].value, ts.measurements[0].value);
        assert_eq!(aug.measurements[2].step, 2);
    }
}
