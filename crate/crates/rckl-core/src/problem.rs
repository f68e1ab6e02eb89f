//! Batch estimation problems and sparse system assembly.
//!
//! A problem couples a process model (lifted LTV, reduced LTV, or an
//! analytic vehicle model for the model-based baselines), a measurement
//! model (lifted bilinear or analytic range), the known/unknown pattern of
//! poses and landmarks, and the measurement stream. The Gauss-Newton normal
//! equations are accumulated factor by factor into an [`ArrowheadSystem`]:
//! block-tridiagonal over states, block-diagonal over landmarks, with one
//! cross block per observed (timestep, landmark) pair. The big stacked
//! Jacobian is never materialized.
//!
//! Known variables are eliminated at assembly: factors are evaluated with
//! the known values substituted and only the blocks of free variables are
//! written, which moves the known columns onto the right-hand side.

use nalgebra::{DMatrix, DVector};

use crate::exec;
use crate::lifting::{ConstraintBasis, LiftingSpec};
use crate::linalg::{bilinear_apply, bilinear_jac_l, bilinear_jac_x, contract_input};
use crate::model::{LiftedModel, ReducedLiftedModel};
use crate::sim::{AnalyticMeasurement, AnalyticProcess};
use crate::{Error, Result};

/// Which estimation problem is being solved. Knowledge flags on poses and
/// landmarks are authoritative; the variant is carried for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    DeadReckon,
    Localize,
    Map,
    Slam,
}

/// One observed measurement `y` of landmark `j` at timestep `k` (already in
/// the problem's coordinates: lifted for Koopman engines, raw otherwise).
#[derive(Debug, Clone)]
pub struct MeasurementObs {
    pub k: usize,
    pub j: usize,
    pub y: DVector<f64>,
    pub sensor: usize,
}

/// Time-varying linear process coefficients obtained by contracting the
/// bilinear term with the known inputs: `A_{k-1} = A + H (u_k ⊗ 1)`,
/// `v_k = B u_k`. Entry `k-1` of each vec belongs to the transition into
/// timestep `k`.
#[derive(Debug, Clone)]
pub struct LtvCoefficients {
    pub a: Vec<DMatrix<f64>>,
    pub v: Vec<DVector<f64>>,
}

/// Builds LTV coefficients for a full lifted model.
pub fn build_ltv(model: &LiftedModel, lifted_inputs: &[DVector<f64>]) -> Result<LtvCoefficients> {
    build_ltv_from(&model.a, &model.b, &model.h, lifted_inputs)
}

/// Builds LTV coefficients for a reduced model (`A_{ξ,k-1}` has one row per
/// augmented raw state dimension; it is never padded with zero rows).
pub fn build_ltv_reduced(
    model: &ReducedLiftedModel,
    lifted_inputs: &[DVector<f64>],
) -> Result<LtvCoefficients> {
    build_ltv_from(&model.a_xi, &model.b_xi, &model.h_xi, lifted_inputs)
}

fn build_ltv_from(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    h: &DMatrix<f64>,
    lifted_inputs: &[DVector<f64>],
) -> Result<LtvCoefficients> {
    let nu = b.ncols();
    let mut coeffs = LtvCoefficients {
        a: Vec::with_capacity(lifted_inputs.len()),
        v: Vec::with_capacity(lifted_inputs.len()),
    };
    for u in lifted_inputs {
        if u.len() != nu {
            return Err(Error::Dimension(format!(
                "lifted input has length {}, model expects {}",
                u.len(),
                nu
            )));
        }
        coeffs.a.push(contract_input(a, h, u));
        coeffs.v.push(b * u);
    }
    Ok(coeffs)
}

/// Process-model side of a problem.
#[derive(Debug, Clone)]
pub enum ProcessKind {
    /// Full lifted LTV chain: error `A_{k-1} x_{k-1} + v_k - x_k` (length
    /// N_x), weighted by Q⁻¹.
    LiftedFull(LtvCoefficients),
    /// Reduced chain: error `A_{ξ,k-1} x_{k-1} + v_k - ξ_k` (length N_ξ'),
    /// weighted by Q_ξ⁻¹; the feature part of `x_k` carries no process
    /// weight, exactly as if Q⁻¹ were padded with zero blocks.
    LiftedReduced(LtvCoefficients),
    /// Analytic vehicle model on raw states, linearized at the operating
    /// point; the orientation component of the error is angle-wrapped.
    Analytic { model: AnalyticProcess, inputs: Vec<DVector<f64>> },
}

/// Measurement-model side of a problem.
#[derive(Debug, Clone)]
pub enum MeasKind {
    /// Lifted bilinear `C (l ⊗ x)`, one operator per sensor.
    Bilinear { c: Vec<DMatrix<f64>> },
    /// Analytic scaled range / squared range on raw coordinates.
    Analytic(AnalyticMeasurement),
}

/// Per-factor noise information (inverse covariance).
#[derive(Debug, Clone)]
pub enum NoiseInfo {
    Shared(DMatrix<f64>),
    PerStep(Vec<DMatrix<f64>>),
}

impl NoiseInfo {
    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        match self {
            NoiseInfo::Shared(m) => m,
            NoiseInfo::PerStep(v) => &v[k],
        }
    }
}

/// Manifold constraints on the unknowns (None for UKL and the model-based
/// baselines).
#[derive(Debug, Clone)]
pub struct ConstraintSpecs {
    pub state: LiftingSpec,
    pub landmark: LiftingSpec,
}

/// A fully specified batch estimation problem over timesteps `0..=K` and a
/// set of landmarks. `x_0` is the known anchor; additional poses or
/// landmarks may be known as well.
pub struct EstimationProblem {
    pub variant: Variant,
    pub process: ProcessKind,
    /// Process noise information per transition k = 1..=K (index k-1).
    pub process_info: NoiseInfo,
    pub measurement: MeasKind,
    /// Measurement noise information per sensor.
    pub meas_info: Vec<DMatrix<f64>>,
    pub measurements: Vec<MeasurementObs>,
    /// Anchor state x_0 in problem coordinates.
    pub anchor: DVector<f64>,
    /// Number of transitions K (states are 0..=K).
    pub num_steps: usize,
    /// Known poses for k = 1..=K (entry k-1); None marks an unknown.
    pub known_poses: Vec<Option<DVector<f64>>>,
    /// Landmark values; None marks an unknown landmark.
    pub known_landmarks: Vec<Option<DVector<f64>>>,
    /// State/landmark vector dimensions in problem coordinates.
    pub state_dim: usize,
    pub lmk_dim: usize,
    pub constraints: Option<ConstraintSpecs>,
}

impl EstimationProblem {
    pub fn num_landmarks(&self) -> usize {
        self.known_landmarks.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.known_poses.len() != self.num_steps {
            return Err(Error::Dimension("known_poses must have one entry per step".into()));
        }
        if self.anchor.len() != self.state_dim {
            return Err(Error::Dimension("anchor dimension mismatch".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.measurements {
            if m.k > self.num_steps || m.j >= self.num_landmarks() {
                return Err(Error::Dimension(format!(
                    "measurement ({}, {}) outside problem of K={}, V={}",
                    m.k,
                    m.j,
                    self.num_steps,
                    self.num_landmarks()
                )));
            }
            if !seen.insert((m.k, m.j, m.sensor)) {
                return Err(Error::Config(format!(
                    "duplicate measurement for (k={}, j={}, sensor={})",
                    m.k, m.j, m.sensor
                )));
            }
            if m.sensor >= self.meas_info.len() {
                return Err(Error::Config(format!("sensor {} has no noise model", m.sensor)));
            }
        }
        Ok(())
    }

    /// Process error for the transition into timestep `k` (1-based).
    pub fn pose_error(
        &self,
        k: usize,
        x_prev: &DVector<f64>,
        x_curr: &DVector<f64>,
    ) -> DVector<f64> {
        match &self.process {
            ProcessKind::LiftedFull(ltv) => &ltv.a[k - 1] * x_prev + &ltv.v[k - 1] - x_curr,
            ProcessKind::LiftedReduced(ltv) => {
                let d = ltv.v[k - 1].len();
                &ltv.a[k - 1] * x_prev + &ltv.v[k - 1] - x_curr.rows(0, d).into_owned()
            }
            ProcessKind::Analytic { model, inputs } => {
                let mut e = model.step(x_prev, &inputs[k - 1]) - x_curr;
                e[2] = crate::geom::wrap_angle(e[2]);
                e
            }
        }
    }

    /// Jacobians of the process error with respect to (x_{k-1}, x_k).
    pub fn pose_jacobians(&self, k: usize, x_prev: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        match &self.process {
            ProcessKind::LiftedFull(ltv) => {
                let n = x_prev.len();
                (ltv.a[k - 1].clone(), -DMatrix::identity(n, n))
            }
            ProcessKind::LiftedReduced(ltv) => {
                let n = x_prev.len();
                let d = ltv.v[k - 1].len();
                let mut curr = DMatrix::zeros(d, n);
                curr.view_mut((0, 0), (d, d)).fill_with_identity();
                (ltv.a[k - 1].clone(), -curr)
            }
            ProcessKind::Analytic { model, inputs } => {
                (model.jacobian(x_prev, &inputs[k - 1]), -DMatrix::identity(3, 3))
            }
        }
    }

    /// Measurement error and its Jacobians with respect to (x_k, l_j). The
    /// bilinear identities give `G_x x = G_l l = C(l ⊗ x)`.
    pub fn meas_error_and_jacobians(
        &self,
        obs: &MeasurementObs,
        x: &DVector<f64>,
        l: &DVector<f64>,
    ) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        match &self.measurement {
            MeasKind::Bilinear { c } => {
                let cs = &c[obs.sensor];
                let e = bilinear_apply(cs, l, x) - &obs.y;
                let gx = bilinear_jac_x(cs, l, x.len());
                let gl = bilinear_jac_l(cs, x, l.len());
                (e, gx, gl)
            }
            MeasKind::Analytic(meas) => {
                let e = meas.value(x, l) - &obs.y;
                let (gx, gl) = meas.jacobians(x, l);
                (e, gx, gl)
            }
        }
    }

    fn meas_error(&self, obs: &MeasurementObs, x: &DVector<f64>, l: &DVector<f64>) -> DVector<f64> {
        match &self.measurement {
            MeasKind::Bilinear { c } => bilinear_apply(&c[obs.sensor], l, x) - &obs.y,
            MeasKind::Analytic(meas) => meas.value(x, l) - &obs.y,
        }
    }

    pub fn process_error_dim(&self) -> usize {
        match &self.process {
            ProcessKind::LiftedFull(_) => self.state_dim,
            ProcessKind::LiftedReduced(ltv) => ltv.v.first().map_or(0, |v| v.len()),
            ProcessKind::Analytic { .. } => 3,
        }
    }
}

/// Operating point for all variables; known entries hold their fixed values
/// and are never updated.
#[derive(Debug, Clone)]
pub struct OpPoint {
    /// States x_0..x_K ([0] is the anchor).
    pub states: Vec<DVector<f64>>,
    pub landmarks: Vec<DVector<f64>>,
}

impl OpPoint {
    /// Applies a scaled update to the free variables only.
    pub fn step(
        &self,
        layout: &Layout,
        dx: &[DVector<f64>],
        dl: &[DVector<f64>],
        alpha: f64,
    ) -> Self {
        let mut out = self.clone();
        for (i, &k) in layout.free_states.iter().enumerate() {
            out.states[k] += alpha * &dx[i];
        }
        for (i, &j) in layout.free_lmks.iter().enumerate() {
            out.landmarks[j] += alpha * &dl[i];
        }
        out
    }
}

/// Index maps from free variables to block positions.
#[derive(Debug, Clone)]
pub struct Layout {
    /// Timesteps (1..=K) of the free states, in increasing order.
    pub free_states: Vec<usize>,
    /// Landmark ids of the free landmarks, in increasing order.
    pub free_lmks: Vec<usize>,
    state_block: Vec<Option<usize>>,
    lmk_block: Vec<Option<usize>>,
}

impl Layout {
    pub fn of(problem: &EstimationProblem) -> Self {
        let mut free_states = Vec::new();
        let mut state_block = vec![None; problem.num_steps + 1];
        for k in 1..=problem.num_steps {
            if problem.known_poses[k - 1].is_none() {
                state_block[k] = Some(free_states.len());
                free_states.push(k);
            }
        }
        let mut free_lmks = Vec::new();
        let mut lmk_block = vec![None; problem.num_landmarks()];
        for j in 0..problem.num_landmarks() {
            if problem.known_landmarks[j].is_none() {
                lmk_block[j] = Some(free_lmks.len());
                free_lmks.push(j);
            }
        }
        Self { free_states, free_lmks, state_block, lmk_block }
    }

    pub fn state_block_of(&self, k: usize) -> Option<usize> {
        self.state_block.get(k).copied().flatten()
    }

    pub fn lmk_block_of(&self, j: usize) -> Option<usize> {
        self.lmk_block.get(j).copied().flatten()
    }

    pub fn is_empty(&self) -> bool {
        self.free_states.is_empty() && self.free_lmks.is_empty()
    }
}

/// Gauss-Newton normal equations with the SLAM arrowhead sparsity pattern.
///
/// `fx_off[i]` is the sub-diagonal block `F[x_{i+1}, x_i]`. `cross[j]` lists
/// the nonzero `F[x_i, l_j]` blocks of landmark block `j`, sorted by state
/// block index; a cross block exists iff some measurement couples the pair.
#[derive(Debug, Clone)]
pub struct ArrowheadSystem {
    pub state_dim: usize,
    pub lmk_dim: usize,
    pub fx_diag: Vec<DMatrix<f64>>,
    pub fx_off: Vec<DMatrix<f64>>,
    pub fl_diag: Vec<DMatrix<f64>>,
    pub cross: Vec<Vec<(usize, DMatrix<f64>)>>,
    pub gx: Vec<DVector<f64>>,
    pub gl: Vec<DVector<f64>>,
}

impl ArrowheadSystem {
    pub fn zeros(num_states: usize, state_dim: usize, num_lmks: usize, lmk_dim: usize) -> Self {
        Self {
            state_dim,
            lmk_dim,
            fx_diag: vec![DMatrix::zeros(state_dim, state_dim); num_states],
            fx_off: vec![DMatrix::zeros(state_dim, state_dim); num_states.saturating_sub(1)],
            fl_diag: vec![DMatrix::zeros(lmk_dim, lmk_dim); num_lmks],
            cross: vec![Vec::new(); num_lmks],
            gx: vec![DVector::zeros(state_dim); num_states],
            gl: vec![DVector::zeros(lmk_dim); num_lmks],
        }
    }

    pub fn num_state_blocks(&self) -> usize {
        self.fx_diag.len()
    }

    pub fn num_lmk_blocks(&self) -> usize {
        self.fl_diag.len()
    }

    pub fn total_dim(&self) -> usize {
        self.num_state_blocks() * self.state_dim + self.num_lmk_blocks() * self.lmk_dim
    }

    fn cross_block_mut(&mut self, j: usize, i: usize) -> &mut DMatrix<f64> {
        let state_dim = self.state_dim;
        let lmk_dim = self.lmk_dim;
        let list = &mut self.cross[j];
        match list.binary_search_by_key(&i, |(bi, _)| *bi) {
            Ok(pos) => &mut list[pos].1,
            Err(pos) => {
                list.insert(pos, (i, DMatrix::zeros(state_dim, lmk_dim)));
                &mut list[pos].1
            }
        }
    }

    /// `F · [vx; vl]` exploiting the sparsity pattern.
    pub fn matvec(
        &self,
        vx: &[DVector<f64>],
        vl: &[DVector<f64>],
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let ns = self.num_state_blocks();
        let mut ox: Vec<DVector<f64>> = self.fx_diag.iter().zip(vx).map(|(f, v)| f * v).collect();
        for i in 0..ns.saturating_sub(1) {
            let off = &self.fx_off[i];
            ox[i + 1] += off * &vx[i];
            ox[i] += off.transpose() * &vx[i + 1];
        }
        let mut ol: Vec<DVector<f64>> = self.fl_diag.iter().zip(vl).map(|(f, v)| f * v).collect();
        for (j, list) in self.cross.iter().enumerate() {
            for (i, blk) in list {
                ox[*i] += blk * &vl[j];
                ol[j] += blk.transpose() * &vx[*i];
            }
        }
        (ox, ol)
    }

    /// Dense assembly, for oracle tests and small problems.
    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let ns = self.num_state_blocks();
        let nd = self.state_dim;
        let ld = self.lmk_dim;
        let n = self.total_dim();
        let mut f = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for i in 0..ns {
            f.view_mut((i * nd, i * nd), (nd, nd)).copy_from(&self.fx_diag[i]);
            g.rows_mut(i * nd, nd).copy_from(&self.gx[i]);
        }
        for i in 0..ns.saturating_sub(1) {
            f.view_mut(((i + 1) * nd, i * nd), (nd, nd)).copy_from(&self.fx_off[i]);
            f.view_mut((i * nd, (i + 1) * nd), (nd, nd)).copy_from(&self.fx_off[i].transpose());
        }
        let base = ns * nd;
        for j in 0..self.num_lmk_blocks() {
            f.view_mut((base + j * ld, base + j * ld), (ld, ld)).copy_from(&self.fl_diag[j]);
            g.rows_mut(base + j * ld, ld).copy_from(&self.gl[j]);
            for (i, blk) in &self.cross[j] {
                f.view_mut((i * nd, base + j * ld), (nd, ld)).copy_from(blk);
                f.view_mut((base + j * ld, i * nd), (ld, nd)).copy_from(&blk.transpose());
            }
        }
        (f, g)
    }
}

/// Per-timestep contribution of the measurement factors (parallel assembly
/// with a deterministic sequential merge).
struct MeasContribution {
    state_block: Option<usize>,
    fx_add: DMatrix<f64>,
    gx_add: DVector<f64>,
    per_lmk: Vec<(usize, DMatrix<f64>, DVector<f64>, Option<DMatrix<f64>>)>,
}

/// Assembles the Gauss-Newton system `F δq = g` at the operating point.
///
/// `F = Σ Eᵀ W⁻¹ E` and `g = -Σ Eᵀ W⁻¹ e` over all factors, with `E` the
/// error Jacobians restricted to free variables. Known variables contribute
/// through the errors only; missing measurements contribute nothing.
pub fn build_gn_system(problem: &EstimationProblem, op: &OpPoint) -> Result<ArrowheadSystem> {
    let layout = Layout::of(problem);
    build_gn_system_with(problem, op, &layout)
}

pub fn build_gn_system_with(
    problem: &EstimationProblem,
    op: &OpPoint,
    layout: &Layout,
) -> Result<ArrowheadSystem> {
    if layout.is_empty() {
        return Err(Error::NothingToSolve);
    }
    let mut sys = ArrowheadSystem::zeros(
        layout.free_states.len(),
        problem.state_dim,
        layout.free_lmks.len(),
        problem.lmk_dim,
    );

    // Process factors, sequential (cheap relative to measurements).
    for k in 1..=problem.num_steps {
        let prev_free = layout.state_block_of(k - 1);
        let curr_free = layout.state_block_of(k);
        if prev_free.is_none() && curr_free.is_none() {
            continue;
        }
        let x_prev = &op.states[k - 1];
        let x_curr = &op.states[k];
        let e = problem.pose_error(k, x_prev, x_curr);
        let (jp, jc) = problem.pose_jacobians(k, x_prev);
        let w = problem.process_info.at(k - 1);
        let we = w * &e;
        if let Some(bp) = prev_free {
            let wjp = w * &jp;
            sys.fx_diag[bp] += jp.transpose() * &wjp;
            sys.gx[bp] -= jp.transpose() * &we;
            if let Some(bc) = curr_free {
                debug_assert_eq!(bc, bp + 1);
                sys.fx_off[bp] += jc.transpose() * &wjp;
            }
        }
        if let Some(bc) = curr_free {
            sys.fx_diag[bc] += jc.transpose() * (w * &jc);
            sys.gx[bc] -= jc.transpose() * &we;
        }
    }

    // Measurement factors, grouped per timestep and merged in input order.
    let mut by_step: Vec<Vec<&MeasurementObs>> = vec![Vec::new(); problem.num_steps + 1];
    for m in &problem.measurements {
        by_step[m.k].push(m);
    }
    let steps: Vec<usize> = (0..=problem.num_steps).filter(|&k| !by_step[k].is_empty()).collect();
    let contributions: Vec<MeasContribution> = exec::map_collect(&steps, |&k| {
        let state_block = layout.state_block_of(k);
        let mut fx_add = DMatrix::zeros(problem.state_dim, problem.state_dim);
        let mut gx_add = DVector::zeros(problem.state_dim);
        let mut per_lmk = Vec::new();
        for m in &by_step[k] {
            let x = &op.states[m.k];
            let l = &op.landmarks[m.j];
            let (e, gxj, glj) = problem.meas_error_and_jacobians(m, x, l);
            let w = &problem.meas_info[m.sensor];
            let we = w * &e;
            let lmk_block = layout.lmk_block_of(m.j);
            if state_block.is_some() {
                let wgx = w * &gxj;
                fx_add += gxj.transpose() * &wgx;
                gx_add -= gxj.transpose() * &we;
                if let Some(bj) = lmk_block {
                    let fl_add = glj.transpose() * w * &glj;
                    let gl_add = -(glj.transpose() * &we);
                    let cross = gxj.transpose() * (w * &glj);
                    per_lmk.push((bj, fl_add, gl_add, Some(cross)));
                }
            } else if let Some(bj) = lmk_block {
                let fl_add = glj.transpose() * w * &glj;
                let gl_add = -(glj.transpose() * &we);
                per_lmk.push((bj, fl_add, gl_add, None));
            }
        }
        MeasContribution { state_block, fx_add, gx_add, per_lmk }
    });
    for contrib in contributions {
        if let Some(bi) = contrib.state_block {
            sys.fx_diag[bi] += &contrib.fx_add;
            sys.gx[bi] += &contrib.gx_add;
        }
        for (bj, fl_add, gl_add, cross) in contrib.per_lmk {
            sys.fl_diag[bj] += fl_add;
            sys.gl[bj] += gl_add;
            if let (Some(bi), Some(c)) = (contrib.state_block, cross) {
                *sys.cross_block_mut(bj, bi) += c;
            }
        }
    }
    Ok(sys)
}

/// Blockwise constraint linearization at one variable: residual, Jacobian,
/// and tangent/normal bases.
#[derive(Debug, Clone)]
pub struct BlockConstraint {
    pub h: DVector<f64>,
    pub s: DMatrix<f64>,
    pub basis: ConstraintBasis,
}

/// Constraint system for all free variables; blocks exist only for unknowns,
/// so the stacked Jacobian stays strictly block-diagonal.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub state: Vec<BlockConstraint>,
    pub lmk: Vec<BlockConstraint>,
}

impl ConstraintSystem {
    pub fn max_violation(&self) -> f64 {
        self.state
            .iter()
            .chain(self.lmk.iter())
            .map(|b| if b.h.is_empty() { 0.0 } else { b.h.amax() })
            .fold(0.0, f64::max)
    }
}

/// Evaluates the blockwise constraints at `op` (CKL and RCKL share this; the
/// constraints do not depend on the process model).
pub fn build_constraints(
    problem: &EstimationProblem,
    op: &OpPoint,
    layout: &Layout,
) -> Result<ConstraintSystem> {
    let specs = problem
        .constraints
        .as_ref()
        .ok_or_else(|| Error::Config("problem has no constraint specs".into()))?;
    let state: Vec<Result<BlockConstraint>> = exec::map_collect(&layout.free_states, |&k| {
        let x = &op.states[k];
        Ok(BlockConstraint {
            h: specs.state.constraint_residual(x)?,
            s: specs.state.constraint_jacobian(x)?,
            basis: specs.state.nullspace_basis(x)?,
        })
    });
    let lmk: Vec<Result<BlockConstraint>> = exec::map_collect(&layout.free_lmks, |&j| {
        let l = &op.landmarks[j];
        Ok(BlockConstraint {
            h: specs.landmark.constraint_residual(l)?,
            s: specs.landmark.constraint_jacobian(l)?,
            basis: specs.landmark.nullspace_basis(l)?,
        })
    });
    Ok(ConstraintSystem {
        state: state.into_iter().collect::<Result<_>>()?,
        lmk: lmk.into_iter().collect::<Result<_>>()?,
    })
}

/// Total weighted least-squares cost at an operating point.
pub fn total_cost(problem: &EstimationProblem, op: &OpPoint) -> f64 {
    let mut cost = 0.0;
    for k in 1..=problem.num_steps {
        let e = problem.pose_error(k, &op.states[k - 1], &op.states[k]);
        let w = problem.process_info.at(k - 1);
        cost += 0.5 * e.dot(&(w * &e));
    }
    for m in &problem.measurements {
        let e = problem.meas_error(m, &op.states[m.k], &op.landmarks[m.j]);
        let w = &problem.meas_info[m.sensor];
        cost += 0.5 * e.dot(&(w * &e));
    }
    cost
}

/// Constraint L1 norm over the free variables (merit-function term; zero for
/// unconstrained problems).
pub fn constraint_l1(problem: &EstimationProblem, op: &OpPoint, layout: &Layout) -> Result<f64> {
    match &problem.constraints {
        None => Ok(0.0),
        Some(specs) => {
            let mut total = 0.0;
            for &k in &layout.free_states {
                total += specs
                    .state
                    .constraint_residual(&op.states[k])?
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>();
            }
            for &j in &layout.free_lmks {
                total += specs
                    .landmark
                    .constraint_residual(&op.landmarks[j])?
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>();
            }
            Ok(total)
        }
    }
}
