//! Feature embeddings and their manifold constraints.
//!
//! A lifted vector always starts with the original (pre-lift) variables,
//! followed by random Fourier feature blocks and an optional constant bias
//! entry:
//!
//! ```text
//!   x = [ v ; f_1(v_sub1) ; f_2(v_sub2) ; ... ; 1 ]
//! ```
//!
//! Each block draws `D` frequencies from a zero-mean Gaussian with standard
//! deviation `1/length_scale` per input dimension (the squared-exponential
//! spectral density) and evaluates `sqrt(2/D) · cos(F v_sub + b)`. Frequencies
//! and phases are a pure function of the block seed, so a spec embedded in a
//! saved model reproduces its features bit-exactly.
//!
//! Circular quantities are handled by replacing an angle `theta` with the
//! pair `(cos theta, sin theta)` in the pre-lift vector ([`StateConvention`])
//! and adding a unit-circle constraint on that pair.
//!
//! The manifold membership of a lifted vector `x = [v; x_tail]` is expressed
//! as equality constraints `x_tail - features(v) = 0` plus `c² + s² - 1 = 0`
//! per orientation pair. [`LiftingSpec::nullspace_basis`] returns a basis of
//! the constraint tangent space with the identity on top (the circle pair
//! contributes a single tangent column `(-s, c)`, which has unit angular
//! speed, so tangent coordinates read as updates of the original variables).

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::geom::TAU;
use crate::{Error, Result};

/// Below this norm a (cos, sin) pair is considered degenerate: the angle is
/// undefined and the circle constraint row vanishes.
const CIRCLE_NORM_TOL: f64 = 1e-9;

/// One random Fourier feature block acting on a subset of the pre-lift
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RffBlock {
    /// Indices into the pre-lift vector this block reads.
    pub input_indices: Vec<usize>,
    /// Number of features D produced by this block.
    pub num_features: usize,
    /// One positive length scale per input dimension.
    pub length_scales: Vec<f64>,
    /// D × |input_indices| frequency matrix.
    pub frequencies: DMatrix<f64>,
    /// D phases in [0, 2π).
    pub phases: DVector<f64>,
    /// Seed the frequencies/phases were drawn from (kept for audit).
    pub seed: u64,
}

impl RffBlock {
    /// Draws a block deterministically from `seed`.
    pub fn generate(
        input_indices: Vec<usize>,
        num_features: usize,
        length_scales: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if length_scales.len() != input_indices.len() {
            return Err(Error::Config(format!(
                "block needs one length scale per input index ({} vs {})",
                length_scales.len(),
                input_indices.len()
            )));
        }
        if input_indices.is_empty() && num_features > 0 {
            return Err(Error::Config("feature block with no input indices".into()));
        }
        for &ls in &length_scales {
            if !(ls > 0.0) || !ls.is_finite() {
                return Err(Error::Config(format!("non-positive length scale {ls}")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut frequencies = DMatrix::zeros(num_features, input_indices.len());
        for r in 0..num_features {
            for c in 0..input_indices.len() {
                let normal = Normal::new(0.0, 1.0 / length_scales[c]).expect("positive std");
                frequencies[(r, c)] = normal.sample(&mut rng);
            }
        }
        let uniform = Uniform::new(0.0, TAU);
        let phases = DVector::from_fn(num_features, |_, _| uniform.sample(&mut rng));
        Ok(Self { input_indices, num_features, length_scales, frequencies, phases, seed })
    }

    fn amplitude(&self) -> f64 {
        if self.num_features == 0 {
            0.0
        } else {
            (2.0 / self.num_features as f64).sqrt()
        }
    }

    fn gather(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.input_indices.len(), |i, _| v[self.input_indices[i]])
    }

    /// Feature values `sqrt(2/D) cos(F v_sub + b)`; every entry lies in
    /// `[-sqrt(2/D), sqrt(2/D)]`.
    pub fn eval(&self, v: &DVector<f64>) -> DVector<f64> {
        let z = &self.frequencies * self.gather(v) + &self.phases;
        let amp = self.amplitude();
        z.map(|t| amp * t.cos())
    }

    /// Jacobian of [`Self::eval`] with respect to the gathered inputs
    /// (D × |input_indices|).
    pub fn jacobian(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let z = &self.frequencies * self.gather(v) + &self.phases;
        let amp = self.amplitude();
        let mut jac = self.frequencies.clone();
        for r in 0..self.num_features {
            let scale = -amp * z[r].sin();
            jac.row_mut(r).scale_mut(scale);
        }
        jac
    }
}

/// Definition of a feature block before the random draw.
#[derive(Debug, Clone, PartialEq)]
pub struct RffBlockDef {
    pub indices: Vec<usize>,
    pub features: usize,
    pub length_scales: Vec<f64>,
}

impl RffBlockDef {
    /// Block with the same length scale on every input dimension.
    pub fn iso(indices: Vec<usize>, features: usize, length_scale: f64) -> Self {
        let n = indices.len();
        Self { indices, features, length_scales: vec![length_scale; n] }
    }
}

/// Tangent basis of the lifting manifold at a point, with a completion.
///
/// `s_par` spans the nullspace of the constraint Jacobian `S` and carries the
/// identity-top structure; `s_perp` completes the basis so `[s_par | s_perp]`
/// is square and nonsingular, and `S · s_perp` is symmetric positive
/// definite (we take `s_perp = Sᵀ`).
#[derive(Debug, Clone)]
pub struct ConstraintBasis {
    pub s_par: DMatrix<f64>,
    pub s_perp: DMatrix<f64>,
}

/// Deterministic lifting-function definition.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftingSpec {
    pre_lift_dim: usize,
    blocks: Vec<RffBlock>,
    orientation_pairs: Vec<(usize, usize)>,
    with_bias: bool,
    lifted_dim: usize,
}

impl LiftingSpec {
    /// Builds a spec; per-block seeds are derived from `seed` with a fixed
    /// stride so the construction is reproducible.
    pub fn new(
        pre_lift_dim: usize,
        block_defs: &[RffBlockDef],
        orientation_pairs: Vec<(usize, usize)>,
        seed: u64,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(block_defs.len());
        for (b, def) in block_defs.iter().enumerate() {
            for &i in &def.indices {
                if i >= pre_lift_dim {
                    return Err(Error::Config(format!(
                        "block {b} index {i} out of range for pre-lift dim {pre_lift_dim}"
                    )));
                }
            }
            let block_seed = seed.wrapping_add((b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            blocks.push(RffBlock::generate(
                def.indices.clone(),
                def.features,
                def.length_scales.clone(),
                block_seed,
            )?);
        }
        let mut seen = vec![false; pre_lift_dim];
        for &(c, s) in &orientation_pairs {
            if c >= pre_lift_dim || s >= pre_lift_dim || c == s {
                return Err(Error::Config(format!("invalid orientation pair ({c}, {s})")));
            }
            if seen[c] || seen[s] {
                return Err(Error::Config("orientation pairs must be disjoint".into()));
            }
            seen[c] = true;
            seen[s] = true;
        }
        let lifted_dim = pre_lift_dim + blocks.iter().map(|b| b.num_features).sum::<usize>();
        Ok(Self { pre_lift_dim, blocks, orientation_pairs, with_bias: false, lifted_dim })
    }

    /// Spec whose lift is the identity (no features, no constraints).
    pub fn identity(dim: usize) -> Self {
        Self {
            pre_lift_dim: dim,
            blocks: Vec::new(),
            orientation_pairs: Vec::new(),
            with_bias: false,
            lifted_dim: dim,
        }
    }

    /// Appends a constant-one entry to the feature vector. The bias behaves
    /// like a feature whose generating function is 1 (zero Jacobian), so the
    /// constraint machinery pins it exactly.
    pub fn with_bias(mut self) -> Self {
        if !self.with_bias {
            self.with_bias = true;
            self.lifted_dim += 1;
        }
        self
    }

    /// Rebuilds a spec from stored parts (deserialization path).
    pub fn from_parts(
        pre_lift_dim: usize,
        blocks: Vec<RffBlock>,
        orientation_pairs: Vec<(usize, usize)>,
        with_bias: bool,
    ) -> Self {
        let lifted_dim = pre_lift_dim
            + blocks.iter().map(|b| b.num_features).sum::<usize>()
            + usize::from(with_bias);
        Self { pre_lift_dim, blocks, orientation_pairs, with_bias, lifted_dim }
    }

    pub fn pre_lift_dim(&self) -> usize {
        self.pre_lift_dim
    }

    pub fn lifted_dim(&self) -> usize {
        self.lifted_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.lifted_dim - self.pre_lift_dim
    }

    pub fn blocks(&self) -> &[RffBlock] {
        &self.blocks
    }

    pub fn orientation_pairs(&self) -> &[(usize, usize)] {
        &self.orientation_pairs
    }

    pub fn has_bias(&self) -> bool {
        self.with_bias
    }

    /// Number of equality constraints at a point.
    pub fn num_constraints(&self) -> usize {
        self.feature_dim() + self.orientation_pairs.len()
    }

    /// Dimension of the constraint tangent space (original degrees of
    /// freedom: one per pre-lift dim, minus one per circle pair).
    pub fn tangent_dim(&self) -> usize {
        self.pre_lift_dim - self.orientation_pairs.len()
    }

    fn check_pre(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.pre_lift_dim {
            return Err(Error::Dimension(format!(
                "pre-lift vector has length {}, spec expects {}",
                v.len(),
                self.pre_lift_dim
            )));
        }
        Ok(())
    }

    fn check_lifted(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.lifted_dim {
            return Err(Error::Dimension(format!(
                "lifted vector has length {}, spec expects {}",
                x.len(),
                self.lifted_dim
            )));
        }
        Ok(())
    }

    /// Feature part of the lift, `p̃(v)` (includes the bias entry if any).
    pub fn features(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.feature_dim());
        let mut offset = 0;
        for block in &self.blocks {
            out.rows_mut(offset, block.num_features).copy_from(&block.eval(v));
            offset += block.num_features;
        }
        if self.with_bias {
            out[offset] = 1.0;
        }
        out
    }

    /// Jacobian of the feature part with respect to the pre-lift vector.
    pub fn features_jacobian(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.feature_dim(), self.pre_lift_dim);
        let mut offset = 0;
        for block in &self.blocks {
            let local = block.jacobian(v);
            for (c, &idx) in block.input_indices.iter().enumerate() {
                for r in 0..block.num_features {
                    jac[(offset + r, idx)] += local[(r, c)];
                }
            }
            offset += block.num_features;
        }
        // Bias row stays zero.
        jac
    }

    /// Lifts a pre-lift vector; the output starts with `v` verbatim.
    pub fn lift(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_pre(v)?;
        let mut out = DVector::zeros(self.lifted_dim);
        out.rows_mut(0, self.pre_lift_dim).copy_from(v);
        out.rows_mut(self.pre_lift_dim, self.feature_dim()).copy_from(&self.features(v));
        Ok(out)
    }

    /// The pre-lift (head) part of a lifted vector.
    pub fn head(&self, x: &DVector<f64>) -> DVector<f64> {
        x.rows(0, self.pre_lift_dim).into_owned()
    }

    /// Manifold residual `[x_tail - p̃(head); per pair c² + s² - 1]`; zero iff
    /// `x` lies on the lifting manifold.
    pub fn constraint_residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_lifted(x)?;
        let head = self.head(x);
        let mut r = DVector::zeros(self.num_constraints());
        let fd = self.feature_dim();
        r.rows_mut(0, fd)
            .copy_from(&(x.rows(self.pre_lift_dim, fd).into_owned() - self.features(&head)));
        for (p, &(ci, si)) in self.orientation_pairs.iter().enumerate() {
            r[fd + p] = x[ci] * x[ci] + x[si] * x[si] - 1.0;
        }
        Ok(r)
    }

    /// Analytic Jacobian of [`Self::constraint_residual`].
    pub fn constraint_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_lifted(x)?;
        let head = self.head(x);
        let fd = self.feature_dim();
        let m = self.num_constraints();
        let mut s = DMatrix::zeros(m, self.lifted_dim);
        s.view_mut((0, 0), (fd, self.pre_lift_dim)).copy_from(&(-self.features_jacobian(&head)));
        s.view_mut((0, self.pre_lift_dim), (fd, fd)).fill_with_identity();
        for (p, &(ci, si)) in self.orientation_pairs.iter().enumerate() {
            s[(fd + p, ci)] = 2.0 * x[ci];
            s[(fd + p, si)] = 2.0 * x[si];
        }
        Ok(s)
    }

    /// Head-dim to tangent-column map: linear dims map to their own column,
    /// a circle pair maps (cos member) to the single angle column, and sin
    /// members return `None`.
    pub fn tangent_column_of(&self, head_index: usize) -> Option<usize> {
        let mut col = 0;
        for i in 0..self.pre_lift_dim {
            if self.orientation_pairs.iter().any(|&(_, s)| s == i) {
                if i == head_index {
                    // Sin member shares the cos member's column.
                    let (c, _) = *self
                        .orientation_pairs
                        .iter()
                        .find(|&&(_, s)| s == head_index)
                        .expect("checked");
                    return self.tangent_column_of(c);
                }
                continue;
            }
            if i == head_index {
                return Some(col);
            }
            col += 1;
        }
        None
    }

    /// Tangent basis `s_par` (nullspace of the constraint Jacobian, identity
    /// top / circle tangent) and the completion `s_perp = Sᵀ`.
    ///
    /// The circle tangent column is `(-sin, cos)` unnormalized, so its
    /// tangent coordinate advances the angle at unit speed.
    pub fn nullspace_basis(&self, x: &DVector<f64>) -> Result<ConstraintBasis> {
        self.check_lifted(x)?;
        for &(ci, si) in &self.orientation_pairs {
            let norm = (x[ci] * x[ci] + x[si] * x[si]).sqrt();
            if norm < CIRCLE_NORM_TOL {
                return Err(Error::Infeasible(format!(
                    "circle pair ({ci}, {si}) has norm {norm:.3e}; constraint Jacobian is rank deficient"
                )));
            }
        }
        let head = self.head(x);
        let t = self.tangent_dim();
        let mut w = DMatrix::zeros(self.pre_lift_dim, t);
        let mut col = 0;
        for i in 0..self.pre_lift_dim {
            if let Some(&(ci, si)) = self.orientation_pairs.iter().find(|&&(c, _)| c == i) {
                w[(ci, col)] = -x[si];
                w[(si, col)] = x[ci];
                col += 1;
            } else if self.orientation_pairs.iter().any(|&(_, s)| s == i) {
                continue;
            } else {
                w[(i, col)] = 1.0;
                col += 1;
            }
        }
        debug_assert_eq!(col, t);
        let mut s_par = DMatrix::zeros(self.lifted_dim, t);
        s_par.view_mut((0, 0), (self.pre_lift_dim, t)).copy_from(&w);
        if self.feature_dim() > 0 {
            let jw = self.features_jacobian(&head) * &w;
            s_par.view_mut((self.pre_lift_dim, 0), (self.feature_dim(), t)).copy_from(&jw);
        }
        let s_perp = self.constraint_jacobian(x)?.transpose();
        Ok(ConstraintBasis { s_par, s_perp })
    }
}

/// Conversion between a raw state containing an angle and its augmented
/// (cos, sin) form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateConvention {
    /// Dimension of the raw state (angle included).
    pub raw_dim: usize,
    /// Position of the angle in the raw state.
    pub theta_index: usize,
}

impl StateConvention {
    /// Planar robot state (x, y, theta).
    pub fn planar() -> Self {
        Self { raw_dim: 3, theta_index: 2 }
    }

    pub fn augmented_dim(&self) -> usize {
        self.raw_dim + 1
    }

    /// The (cos, sin) index pair in the augmented vector.
    pub fn orientation_pair(&self) -> (usize, usize) {
        (self.theta_index, self.theta_index + 1)
    }

    /// Replaces the angle with (cos, sin); the result satisfies the circle
    /// constraint to machine precision.
    pub fn augment(&self, raw: &DVector<f64>) -> Result<DVector<f64>> {
        if raw.len() != self.raw_dim {
            return Err(Error::Dimension(format!(
                "raw state has length {}, convention expects {}",
                raw.len(),
                self.raw_dim
            )));
        }
        let theta = raw[self.theta_index];
        if !theta.is_finite() {
            return Err(Error::Numerical("non-finite angle in raw state".into()));
        }
        let mut out = DVector::zeros(self.augmented_dim());
        for i in 0..self.theta_index {
            out[i] = raw[i];
        }
        out[self.theta_index] = theta.cos();
        out[self.theta_index + 1] = theta.sin();
        for i in self.theta_index + 1..self.raw_dim {
            out[i + 1] = raw[i];
        }
        Ok(out)
    }

    /// Recovers the raw state, `theta = atan2(sin, cos)`.
    pub fn recover(&self, aug: &DVector<f64>) -> Result<DVector<f64>> {
        if aug.len() != self.augmented_dim() {
            return Err(Error::Dimension(format!(
                "augmented state has length {}, convention expects {}",
                aug.len(),
                self.augmented_dim()
            )));
        }
        let c = aug[self.theta_index];
        let s = aug[self.theta_index + 1];
        if (c * c + s * s).sqrt() < CIRCLE_NORM_TOL {
            return Err(Error::DegenerateOrientation);
        }
        let mut out = DVector::zeros(self.raw_dim);
        for i in 0..self.theta_index {
            out[i] = aug[i];
        }
        out[self.theta_index] = s.atan2(c);
        for i in self.theta_index + 1..self.raw_dim {
            out[i] = aug[i + 1];
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_spec_lifts_verbatim() {
        let spec = LiftingSpec::identity(2);
        let v = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(spec.lift(&v).unwrap(), v);
        assert_eq!(spec.num_constraints(), 0);
        let basis = spec.nullspace_basis(&v).unwrap();
        assert_eq!(basis.s_par, DMatrix::identity(2, 2));
        assert_eq!(basis.s_perp.ncols(), 0);
    }

    #[test]
    fn spec_dimensions_and_determinism() {
        let defs = vec![RffBlockDef::iso(vec![0, 1], 50, 1.0)];
        let a = LiftingSpec::new(2, &defs, vec![], 42).unwrap();
        let b = LiftingSpec::new(2, &defs, vec![], 42).unwrap();
        assert_eq!(a.lifted_dim(), 52);
        assert_eq!(a.blocks()[0].frequencies, b.blocks()[0].frequencies);
        assert_eq!(a.blocks()[0].phases, b.blocks()[0].phases);
        let c = LiftingSpec::new(2, &defs, vec![], 43).unwrap();
        assert_ne!(a.blocks()[0].frequencies, c.blocks()[0].frequencies);
    }

    #[test]
    fn all_pairs_dimension_arithmetic() {
        // 4 pre-lift dims, features on all 6 index pairs with D = 20 each.
        let mut defs = Vec::new();
        for i in 0..4usize {
            for j in (i + 1)..4 {
                defs.push(RffBlockDef::iso(vec![i, j], 20, 1.0));
            }
        }
        let spec = LiftingSpec::new(4, &defs, vec![(2, 3)], 1).unwrap();
        assert_eq!(spec.lifted_dim(), 4 + 6 * 20);
        assert_eq!(spec.tangent_dim(), 3);
    }

    #[test]
    fn zero_frequency_block_gives_unit_features() {
        let mut spec = LiftingSpec::new(2, &[RffBlockDef::iso(vec![0, 1], 2, 1.0)], vec![], 0)
            .unwrap();
        spec.blocks[0].frequencies.fill(0.0);
        spec.blocks[0].phases.fill(0.0);
        let x = spec.lift(&DVector::from_vec(vec![0.3, -0.7])).unwrap();
        // sqrt(2/2) * cos(0) = 1 for both features.
        assert_relative_eq!(x[2], 1.0);
        assert_relative_eq!(x[3], 1.0);
    }

    #[test]
    fn feature_bound_holds() {
        let spec =
            LiftingSpec::new(3, &[RffBlockDef::iso(vec![0, 2], 7, 0.5)], vec![], 9).unwrap();
        let bound = (2.0 / 7.0f64).sqrt() + 1e-15;
        for trial in 0..20 {
            let v = DVector::from_fn(3, |i, _| ((trial * 3 + i) as f64 * 0.731).sin() * 10.0);
            let x = spec.lift(&v).unwrap();
            for f in x.rows(3, 7).iter() {
                assert!(f.abs() <= bound);
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(LiftingSpec::new(2, &[RffBlockDef::iso(vec![2], 4, 1.0)], vec![], 0).is_err());
        assert!(LiftingSpec::new(2, &[RffBlockDef::iso(vec![0], 4, 0.0)], vec![], 0).is_err());
        assert!(LiftingSpec::new(2, &[], vec![(0, 2)], 0).is_err());
        assert!(LiftingSpec::new(3, &[], vec![(0, 1), (1, 2)], 0).is_err());
    }

    #[test]
    fn augment_recover_examples() {
        let conv = StateConvention::planar();
        let a = conv.augment(&DVector::from_vec(vec![1.0, 2.0, 0.0])).unwrap();
        assert_eq!(a, DVector::from_vec(vec![1.0, 2.0, 1.0, 0.0]));
        let b = conv
            .augment(&DVector::from_vec(vec![0.0, 0.0, std::f64::consts::FRAC_PI_2]))
            .unwrap();
        assert_relative_eq!(b, DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]), epsilon = 1e-15);
        let c = conv.augment(&DVector::from_vec(vec![3.0, -1.0, std::f64::consts::PI])).unwrap();
        assert_relative_eq!(c, DVector::from_vec(vec![3.0, -1.0, -1.0, 0.0]), epsilon = 1e-12);

        let r = conv.recover(&DVector::from_vec(vec![0.0, 0.0, 0.6, 0.8])).unwrap();
        assert_relative_eq!(r[2], 0.8f64.atan2(0.6), epsilon = 1e-15);
        assert!(conv.recover(&DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0])).is_err());

        // Round trip up to wrapping.
        for k in 0..12 {
            let theta = -3.3 + 0.61 * k as f64;
            let raw = DVector::from_vec(vec![0.5, -0.25, theta]);
            let back = conv.recover(&conv.augment(&raw).unwrap()).unwrap();
            assert_relative_eq!(
                crate::geom::angle_diff(back[2], theta),
                0.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn on_manifold_residual_is_zero_and_tail_linear() {
        let conv = StateConvention::planar();
        let spec = LiftingSpec::new(
            4,
            &[RffBlockDef::iso(vec![0, 1], 6, 2.0), RffBlockDef::iso(vec![2, 3], 4, 1.0)],
            vec![conv.orientation_pair()],
            5,
        )
        .unwrap()
        .with_bias();
        let raw = DVector::from_vec(vec![1.2, -0.4, 0.9]);
        let x = spec.lift(&conv.augment(&raw).unwrap()).unwrap();
        let r = spec.constraint_residual(&x).unwrap();
        assert_relative_eq!(r.norm(), 0.0, epsilon = 1e-12);

        // Perturbing the tail moves the residual top block by exactly delta.
        let mut xp = x.clone();
        xp[6] += 0.125;
        let rp = spec.constraint_residual(&xp).unwrap();
        assert_relative_eq!(rp[6 - 4], 0.125, epsilon = 1e-15);
    }

    #[test]
    fn circle_residual_and_tangent() {
        let spec = LiftingSpec::new(2, &[], vec![(0, 1)], 0).unwrap();
        let x = DVector::from_vec(vec![0.6, 0.8]);
        let r = spec.constraint_residual(&x).unwrap();
        assert_relative_eq!(r[0], 0.0, epsilon = 1e-15);
        let basis = spec.nullspace_basis(&x).unwrap();
        // Tangent column proportional to (-0.8, 0.6), unit angular speed.
        assert_relative_eq!(basis.s_par[(0, 0)], -0.8, epsilon = 1e-15);
        assert_relative_eq!(basis.s_par[(1, 0)], 0.6, epsilon = 1e-15);
        assert!(spec
            .nullspace_basis(&DVector::from_vec(vec![0.0, 0.0]))
            .is_err());
    }

    #[test]
    fn nullspace_annihilates_jacobian() {
        let spec = LiftingSpec::new(
            4,
            &[RffBlockDef::iso(vec![0, 1], 5, 1.5), RffBlockDef::iso(vec![1, 2], 3, 0.8)],
            vec![(2, 3)],
            11,
        )
        .unwrap()
        .with_bias();
        let v = DVector::from_vec(vec![0.3, -1.1, 0.8f64.cos(), 0.8f64.sin()]);
        let x = spec.lift(&v).unwrap();
        let s = spec.constraint_jacobian(&x).unwrap();
        let basis = spec.nullspace_basis(&x).unwrap();
        assert_relative_eq!((&s * &basis.s_par).abs().max(), 0.0, epsilon = 1e-10);
        // [s_par | s_perp] square and nonsingular.
        let n = spec.lifted_dim();
        let mut full = DMatrix::zeros(n, n);
        full.view_mut((0, 0), (n, basis.s_par.ncols())).copy_from(&basis.s_par);
        full.view_mut((0, basis.s_par.ncols()), (n, basis.s_perp.ncols()))
            .copy_from(&basis.s_perp);
        assert!(full.lu().is_invertible());
    }
}
