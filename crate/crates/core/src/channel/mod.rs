//! The delay line as a single-qubit polarization channel acting on the signal
//! photon.
//!
//! Conventions used throughout: single-qubit basis (H, V); two-photon basis
//! (HH, HV, VH, VV) with the signal photon as the first factor; Pauli order
//! (I, X, Y, Z). Process matrices use the trace-one normalization, so a
//! trace-preserving channel has `Tr χ = 1` and the identity channel has
//! `χ₀₀ = 1` as its only non-zero entry.

pub mod random;
mod visibility;

use std::ops::Mul;

use nalgebra::{DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TracePath;
use crate::linalg::{
    self, c, eigenvalues, from_rows, hermiticity_error, kron, paulis, to_dyn, to_rows,
    CMatrix, ComplexRows, ONE, ZERO,
};

pub use visibility::{
    fit_fringe, fringe_samples, visibility, visibility_report, FringeBasis, FringeFit,
    VisibilityReport,
};

/// Tolerance for the Hermitian / unit-trace / PSD invariants.
pub const PHYSICALITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid process matrix: {0}")]
    InvalidChi(String),
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("normalization mismatch: trace {0} vs {1}")]
    NormalizationMismatch(f64, f64),
    #[error("channel transmits nothing (survival {0:e})")]
    ZeroTrace(f64),
    #[error("fringe fit failed: {0}")]
    FitFailure(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

type Op2 = Matrix2<Complex64>;

/// Hermitian, unit-trace, positive-semidefinite 2×2 or 4×4 matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexRows", into = "ComplexRows")]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self, ChannelError> {
        let dim = m.nrows();
        if m.ncols() != dim || !(dim == 2 || dim == 4) {
            return Err(ChannelError::InvalidState(format!(
                "shape {}x{}, expected 2x2 or 4x4",
                m.nrows(),
                m.ncols()
            )));
        }
        let herm = hermiticity_error(&m);
        if herm > PHYSICALITY_TOL {
            return Err(ChannelError::InvalidState(format!("not Hermitian ({herm:e})")));
        }
        let tr = linalg::trace(&m).re;
        if (tr - 1.0).abs() > PHYSICALITY_TOL {
            return Err(ChannelError::InvalidState(format!("trace {tr}")));
        }
        let min = eigenvalues(&m)[0];
        if min < -PHYSICALITY_TOL {
            return Err(ChannelError::InvalidState(format!("eigenvalue {min:e}")));
        }
        Ok(DensityMatrix { m })
    }

    /// Pure state `|ψ⟩⟨ψ|`, normalizing `psi`.
    pub fn pure(psi: &[Complex64]) -> Result<Self, ChannelError> {
        let v = DVector::from_column_slice(psi);
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(ChannelError::InvalidState("zero state vector".into()));
        }
        let v = v / c(norm, 0.0);
        Self::new(&v * v.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self, ChannelError> {
        Self::new(linalg::identity(dim).scale(1.0 / dim as f64))
    }

    /// `p·|φ⁺⟩⟨φ⁺| + (1 − p)·I/4`.
    pub fn werner(p: f64) -> Result<Self, ChannelError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ChannelError::InvalidParameter(format!("werner weight {p}")));
        }
        let m = bell_phi_plus().m.scale(p) + linalg::identity(4).scale((1.0 - p) / 4.0);
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigenvalues(&self.m)
    }

    pub fn purity(&self) -> f64 {
        linalg::trace(&(&self.m * &self.m)).re
    }

    /// Reduced state of the signal photon (traces out the idler).
    pub fn signal_state(&self) -> Result<DensityMatrix, ChannelError> {
        if self.dim() != 4 {
            return Err(ChannelError::DimensionMismatch(self.dim(), 4));
        }
        let r = CMatrix::from_fn(2, 2, |i, j| {
            self.m[(2 * i, 2 * j)] + self.m[(2 * i + 1, 2 * j + 1)]
        });
        Self::new(r)
    }

    /// Reduced state of the idler photon.
    pub fn idler_state(&self) -> Result<DensityMatrix, ChannelError> {
        if self.dim() != 4 {
            return Err(ChannelError::DimensionMismatch(self.dim(), 4));
        }
        let r = CMatrix::from_fn(2, 2, |i, j| self.m[(i, j)] + self.m[(i + 2, j + 2)]);
        Self::new(r)
    }

    /// `Tr(ρ O)` for an observable or projector `O`.
    pub fn expectation(&self, op: &CMatrix) -> Result<f64, ChannelError> {
        if op.nrows() != self.dim() {
            return Err(ChannelError::DimensionMismatch(self.dim(), op.nrows()));
        }
        Ok(linalg::trace(&(&self.m * op)).re)
    }
}

impl TryFrom<ComplexRows> for DensityMatrix {
    type Error = ChannelError;
    fn try_from(rows: ComplexRows) -> Result<Self, ChannelError> {
        let m = from_rows(&rows).ok_or_else(|| ChannelError::InvalidState("ragged rows".into()))?;
        DensityMatrix::new(m)
    }
}

impl From<DensityMatrix> for ComplexRows {
    fn from(d: DensityMatrix) -> Self {
        to_rows(&d.m)
    }
}

/// `(|HH⟩ + |VV⟩)/√2`.
pub fn bell_phi_plus() -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DensityMatrix::pure(&[c(s, 0.0), ZERO, ZERO, c(s, 0.0)]).expect("valid Bell state")
}

/// `(|HH⟩ − |VV⟩)/√2`.
pub fn bell_phi_minus() -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DensityMatrix::pure(&[c(s, 0.0), ZERO, ZERO, c(-s, 0.0)]).expect("valid Bell state")
}

/// Passive 2×2 Jones operator (spectral norm ≤ 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(Op2);

impl JonesMatrix {
    pub fn new(m: Op2) -> Result<Self, ChannelError> {
        let norm = linalg::spectral_norm(&to_dyn(&m));
        if !(norm <= 1.0 + 1e-12) {
            return Err(ChannelError::InvalidOperator(format!(
                "Jones matrix gains power (norm {norm})"
            )));
        }
        Ok(JonesMatrix(m))
    }

    pub fn identity() -> Self {
        JonesMatrix(Op2::identity())
    }

    pub fn matrix(&self) -> &Op2 {
        &self.0
    }
}

impl Mul for JonesMatrix {
    type Output = JonesMatrix;
    /// `a * b` applies `b` first.
    fn mul(self, rhs: JonesMatrix) -> JonesMatrix {
        JonesMatrix(self.0 * rhs.0)
    }
}

fn rotation(theta: f64) -> Op2 {
    let (s, co) = theta.sin_cos();
    Op2::new(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0))
}

/// Rotated retarder–diattenuator `Rot(−θ)·diag(1, √(1−D)·e^{iδ})·Rot(θ)`.
pub fn bounce_jones(
    retardance: f64,
    diattenuation: f64,
    axis_azimuth: f64,
) -> Result<JonesMatrix, ChannelError> {
    if !(0.0..1.0).contains(&diattenuation) || !retardance.is_finite() || !axis_azimuth.is_finite() {
        return Err(ChannelError::InvalidParameter(format!(
            "retardance {retardance}, diattenuation {diattenuation}, axis {axis_azimuth}"
        )));
    }
    let slow = Complex64::from_polar((1.0 - diattenuation).sqrt(), retardance);
    let core = Op2::new(ONE, ZERO, ZERO, slow);
    JonesMatrix::new(rotation(-axis_azimuth) * core * rotation(axis_azimuth))
}

/// Per-reflection polarization parameters (radians, fraction, radians).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BounceParams {
    #[serde(default)]
    pub retardance: f64,
    #[serde(default)]
    pub diattenuation: f64,
    #[serde(default)]
    pub axis_azimuth: f64,
}

impl BounceParams {
    pub fn jones(&self) -> Result<JonesMatrix, ChannelError> {
        bounce_jones(self.retardance, self.diattenuation, self.axis_azimuth)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Applied at every reflection unless `per_bounce` is given.
    #[serde(default)]
    pub bounce: BounceParams,
    /// Explicit parameters for reflections 1, 2, …; must cover the path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_bounce: Option<Vec<BounceParams>>,
    /// Depolarizing admixture `ρ → (1−p)·KρK† + p·Tr(KρK†)·I/2`.
    #[serde(default)]
    pub depolarizing_p: f64,
    /// Per-reflection power reflectance; when set, the channel loses photons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflectance: Option<f64>,
}

/// Set of Kraus operators with `Σ K†K ⪯ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    ops: Vec<Op2>,
}

impl KrausSet {
    pub fn new(ops: Vec<Op2>) -> Result<Self, ChannelError> {
        if ops.is_empty() {
            return Err(ChannelError::InvalidOperator("empty Kraus set".into()));
        }
        let set = KrausSet { ops };
        let top = *eigenvalues(&to_dyn(&set.completeness())).last().unwrap();
        if top > 1.0 + PHYSICALITY_TOL {
            return Err(ChannelError::InvalidOperator(format!(
                "Σ K†K exceeds identity (largest eigenvalue {top})"
            )));
        }
        Ok(set)
    }

    pub fn identity() -> Self {
        KrausSet { ops: vec![Op2::identity()] }
    }

    pub fn from_jones(j: JonesMatrix) -> Self {
        KrausSet { ops: vec![j.0] }
    }

    /// Pauli operator `k` in order (I, X, Y, Z).
    pub fn pauli(k: usize) -> Self {
        KrausSet { ops: vec![paulis()[k]] }
    }

    /// `{√(1−p)·I, √(p/3)·X, √(p/3)·Y, √(p/3)·Z}`: error probability `p`.
    pub fn pauli_error(p: f64) -> Result<Self, ChannelError> {
        check_probability(p)?;
        Self::pauli_channel(p / 3.0, p / 3.0, p / 3.0)
    }

    /// `ρ → (1−px−py−pz)ρ + px·XρX + py·YρY + pz·ZρZ`.
    pub fn pauli_channel(px: f64, py: f64, pz: f64) -> Result<Self, ChannelError> {
        let p0 = 1.0 - px - py - pz;
        for p in [p0, px, py, pz] {
            check_probability(p)?;
        }
        let s = paulis();
        Ok(KrausSet {
            ops: [p0, px, py, pz]
                .iter()
                .zip(s.iter())
                .map(|(&p, e)| e * c(p.sqrt(), 0.0))
                .collect(),
        })
    }

    /// `ρ → (1−p)·ρ + p·Tr(ρ)·I/2`; `p = 1` is fully depolarizing.
    pub fn depolarizing(p: f64) -> Result<Self, ChannelError> {
        Self::identity().with_depolarizing(p)
    }

    /// Follows this channel by a depolarizing admixture of weight `p`.
    pub fn with_depolarizing(&self, p: f64) -> Result<Self, ChannelError> {
        check_probability(p)?;
        if p == 0.0 {
            return Ok(self.clone());
        }
        let s = paulis();
        let weights = [1.0 - 0.75 * p, p / 4.0, p / 4.0, p / 4.0];
        let mut ops = Vec::with_capacity(4 * self.ops.len());
        for (w, e) in weights.iter().zip(s.iter()) {
            for k in &self.ops {
                ops.push(e * k * c(w.sqrt(), 0.0));
            }
        }
        Ok(KrausSet { ops })
    }

    pub fn operators(&self) -> &[Op2] {
        &self.ops
    }

    /// `Σ K†K`.
    pub fn completeness(&self) -> Op2 {
        self.ops.iter().map(|k| k.adjoint() * k).sum()
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        (self.completeness() - Op2::identity()).iter().all(|z| z.norm() <= tol)
    }

    /// `self` then `after`: Kraus operators `{A_j K_i}`.
    pub fn then(&self, after: &KrausSet) -> KrausSet {
        let mut ops = Vec::with_capacity(self.ops.len() * after.ops.len());
        for a in &after.ops {
            for k in &self.ops {
                ops.push(a * k);
            }
        }
        KrausSet { ops }
    }

    /// Unnormalized output `Σ K ρ K†` on a single qubit.
    pub fn apply_raw(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(2, 2);
        for k in &self.ops {
            let kd = to_dyn(k);
            out += &kd * rho * kd.adjoint();
        }
        out
    }

    /// Channel output on a single-qubit state, renormalized.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix, ChannelError> {
        if rho.dim() != 2 {
            return Err(ChannelError::DimensionMismatch(rho.dim(), 2));
        }
        renormalize(self.apply_raw(&rho.m)).map(|o| o.state)
    }
}

fn check_probability(p: f64) -> Result<(), ChannelError> {
    if (-1e-15..=1.0 + 1e-15).contains(&p) {
        Ok(())
    } else {
        Err(ChannelError::InvalidParameter(format!("probability {p}")))
    }
}

/// Kraus representation of one transit along `path`.
///
/// The single Jones operator is the ordered product of the per-reflection
/// matrices (first reflection applied first), scaled by `√R` per bounce when
/// `reflectance` is set; a non-zero `depolarizing_p` expands it to four
/// operators.
pub fn channel_from_path(path: &TracePath, params: &ChannelParams) -> Result<KrausSet, ChannelError> {
    channel_for_bounces(path.n_reflections(), params)
}

/// Same as [`channel_from_path`] for a bare reflection count.
pub fn channel_for_bounces(n: usize, params: &ChannelParams) -> Result<KrausSet, ChannelError> {
    let mut total = Op2::identity();
    match &params.per_bounce {
        Some(list) => {
            if list.len() < n {
                return Err(ChannelError::InvalidParameter(format!(
                    "{} per-bounce entries for {n} reflections",
                    list.len()
                )));
            }
            for b in &list[..n] {
                total = b.jones()?.0 * total;
            }
        }
        None => {
            let j = params.bounce.jones()?.0;
            for _ in 0..n {
                total = j * total;
            }
        }
    }
    if let Some(r) = params.reflectance {
        if !(r > 0.0 && r <= 1.0) {
            return Err(ChannelError::InvalidParameter(format!("reflectance {r}")));
        }
        total *= c(r.powf(n as f64 / 2.0), 0.0);
    }
    KrausSet::from_jones(JonesMatrix(total)).with_depolarizing(params.depolarizing_p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOutput {
    pub state: DensityMatrix,
    /// Trace of the output before renormalization.
    pub survival: f64,
}

fn renormalize(m: CMatrix) -> Result<ChannelOutput, ChannelError> {
    let survival = linalg::trace(&m).re;
    if !(survival > 1e-300) {
        return Err(ChannelError::ZeroTrace(survival));
    }
    let m = linalg::hermitian_part(&m).scale(1.0 / survival);
    Ok(ChannelOutput {
        state: DensityMatrix::new(m)?,
        survival,
    })
}

/// `Σ (K⊗I) ρ (K⊗I)†` on the signal factor of a two-photon state.
pub fn apply_channel_signal(
    rho: &DensityMatrix,
    channel: &KrausSet,
) -> Result<ChannelOutput, ChannelError> {
    if rho.dim() != 4 {
        return Err(ChannelError::DimensionMismatch(rho.dim(), 4));
    }
    let id = linalg::identity(2);
    let mut out = CMatrix::zeros(4, 4);
    for k in &channel.ops {
        let big = kron(&to_dyn(k), &id);
        out += &big * &rho.m * big.adjoint();
    }
    renormalize(out)
}

/// Process matrix over the Pauli basis, trace-one normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexRows", into = "ComplexRows")]
pub struct ChiMatrix {
    m: CMatrix,
}

impl ChiMatrix {
    /// Validates Hermiticity, positivity and `Tr χ ≤ 1`.
    pub fn new(m: CMatrix) -> Result<Self, ChannelError> {
        if m.nrows() != 4 || m.ncols() != 4 {
            return Err(ChannelError::InvalidChi(format!("shape {}x{}", m.nrows(), m.ncols())));
        }
        let herm = hermiticity_error(&m);
        if herm > PHYSICALITY_TOL {
            return Err(ChannelError::InvalidChi(format!("not Hermitian ({herm:e})")));
        }
        let min = eigenvalues(&m)[0];
        if min < -PHYSICALITY_TOL {
            return Err(ChannelError::InvalidChi(format!("eigenvalue {min:e}")));
        }
        let tr = linalg::trace(&m).re;
        if tr > 1.0 + PHYSICALITY_TOL {
            return Err(ChannelError::InvalidChi(format!("trace {tr}")));
        }
        Ok(ChiMatrix { m })
    }

    pub fn identity_channel() -> Self {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = ONE;
        ChiMatrix { m }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.m).re
    }

    pub fn entry(&self, m: usize, n: usize) -> Complex64 {
        self.m[(m, n)]
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigenvalues(&self.m)
    }

    /// `Σ χ_mn E_m ρ E_n†` on a single-qubit state (unnormalized).
    pub fn apply_raw(&self, rho: &CMatrix) -> CMatrix {
        let e: Vec<CMatrix> = paulis().iter().map(to_dyn).collect();
        let mut out = CMatrix::zeros(2, 2);
        for a in 0..4 {
            for b in 0..4 {
                let w = self.m[(a, b)];
                if w != ZERO {
                    out += (&e[a] * rho * e[b].adjoint()) * w;
                }
            }
        }
        out
    }
}

impl TryFrom<ComplexRows> for ChiMatrix {
    type Error = ChannelError;
    fn try_from(rows: ComplexRows) -> Result<Self, ChannelError> {
        let m = from_rows(&rows).ok_or_else(|| ChannelError::InvalidChi("ragged rows".into()))?;
        ChiMatrix::new(m)
    }
}

impl From<ChiMatrix> for ComplexRows {
    fn from(d: ChiMatrix) -> Self {
        to_rows(&d.m)
    }
}

/// Pauli coefficients `c_m = Tr(E_m K)/2` of a 2×2 operator.
pub fn pauli_coefficients(k: &Op2) -> [Complex64; 4] {
    let s = paulis();
    std::array::from_fn(|m| (s[m] * k).trace() * 0.5)
}

/// `χ_mn = Σ_i c_im c*_in`.
pub fn chi_from_kraus(channel: &KrausSet) -> ChiMatrix {
    let mut m = CMatrix::zeros(4, 4);
    for k in &channel.ops {
        let coef = pauli_coefficients(k);
        for a in 0..4 {
            for b in 0..4 {
                m[(a, b)] += coef[a] * coef[b].conj();
            }
        }
    }
    ChiMatrix { m: linalg::hermitian_part(&m) }
}

/// `‖√a √b‖₁²`: the trace norm is symmetric in its arguments, unlike the
/// nested-root form, and eigenvalues at round-off level are dropped so that
/// rank-deficient states do not pick up spurious `√ε` terms.
fn uhlmann(a: &CMatrix, b: &CMatrix) -> f64 {
    let root = |m: &CMatrix| {
        let (values, vectors) = linalg::eigh(m);
        let cut = 1e-13 * values.last().copied().unwrap_or(0.0).max(0.0);
        let r: Vec<f64> = values.iter().map(|&v| if v > cut { v.sqrt() } else { 0.0 }).collect();
        linalg::from_eigen(&r, &vectors)
    };
    let prod = root(a) * root(b);
    let nuclear: f64 = prod.svd(false, false).singular_values.iter().sum();
    (nuclear * nuclear).clamp(0.0, 1.0)
}

/// `(Tr √(√ρ σ √ρ))²`.
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, ChannelError> {
    if rho.dim() != sigma.dim() {
        return Err(ChannelError::DimensionMismatch(rho.dim(), sigma.dim()));
    }
    Ok(uhlmann(&rho.m, &sigma.m))
}

/// Uhlmann fidelity between process matrices viewed as density operators;
/// equals `χ₀₀` for the identity target.
pub fn process_fidelity(chi: &ChiMatrix, target: &ChiMatrix) -> Result<f64, ChannelError> {
    let (a, b) = (chi.trace(), target.trace());
    if (a - b).abs() > 1e-8 || a <= 0.0 {
        return Err(ChannelError::NormalizationMismatch(a, b));
    }
    Ok(uhlmann(&chi.m.scale(1.0 / a), &target.m.scale(1.0 / b)))
}

/// Largest overlap with any maximally entangled two-qubit state: the top
/// eigenvalue of the real part of ρ written in the magic basis.
pub fn fully_entangled_fraction(rho: &DensityMatrix) -> Result<f64, ChannelError> {
    if rho.dim() != 4 {
        return Err(ChannelError::DimensionMismatch(rho.dim(), 4));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let i = linalg::I;
    // columns: Φ+, iΦ−, iΨ+, Ψ−
    #[rustfmt::skip]
    let magic = CMatrix::from_row_slice(4, 4, &[
        c(s, 0.0), i * s,      ZERO,        ZERO,
        ZERO,      ZERO,       i * s,       c(s, 0.0),
        ZERO,      ZERO,       i * s,       c(-s, 0.0),
        c(s, 0.0), -i * s,     ZERO,        ZERO,
    ]);
    let rm = magic.adjoint() * &rho.m * &magic;
    let re = CMatrix::from_fn(4, 4, |a, b| c(rm[(a, b)].re, 0.0));
    Ok(*eigenvalues(&re).last().unwrap())
}

#[cfg(test)]
mod tests {
    use super::random::{random_density, random_kraus, random_unitary};
    use super::*;
    use crate::geometry::{trace_cell, CellConfig, Injection};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        linalg::max_abs_diff(a, b) <= tol
    }

    #[test]
    fn bell_state_entries() {
        let b = bell_phi_plus();
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert_relative_eq!(b.m[(i, j)].re, 0.5, epsilon = 1e-15);
        }
        let total: f64 = b.m.iter().map(|z| z.norm()).sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-14);
        assert_relative_eq!(linalg::trace(&b.m).re, 1.0, epsilon = 1e-15);
        let reduced = b.idler_state().unwrap();
        assert!(close(reduced.matrix(), &linalg::identity(2).scale(0.5), 1e-15));
        assert!(close(b.signal_state().unwrap().matrix(), &linalg::identity(2).scale(0.5), 1e-15));
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(linalg::identity(2)).is_err());
        let mut m = linalg::identity(2).scale(0.5);
        m[(0, 1)] = c(0.6, 0.0);
        m[(1, 0)] = c(0.6, 0.0);
        assert!(DensityMatrix::new(m).is_err());
        assert!(DensityMatrix::new(linalg::identity(3).scale(1.0 / 3.0)).is_err());
    }

    #[test]
    fn density_json_round_trip() {
        let b = bell_phi_plus();
        let text = serde_json::to_string(&b).unwrap();
        assert!(text.starts_with("[[[0.5"));
        let back: DensityMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn jones_examples() {
        assert!(close(
            &to_dyn(bounce_jones(0.0, 0.0, 1.234).unwrap().matrix()),
            &linalg::identity(2),
            1e-15
        ));
        let hw = bounce_jones(PI, 0.0, 0.0).unwrap();
        assert!(close(&to_dyn(hw.matrix()), &to_dyn(&paulis()[3]), 1e-15));
        let qw = bounce_jones(FRAC_PI_2, 0.0, FRAC_PI_4).unwrap();
        let out = qw.matrix() * nalgebra::Vector2::new(ONE, ZERO);
        // compare to (|H⟩ + i|V⟩)/√2 up to a global phase
        let target = nalgebra::Vector2::new(ONE, linalg::I) / c(2f64.sqrt(), 0.0);
        let overlap = (target.adjoint() * out)[(0, 0)].norm();
        assert_relative_eq!(overlap, 1.0, epsilon = 1e-14);
        assert!(bounce_jones(0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn diattenuator_is_passive() {
        let j = bounce_jones(0.3, 0.2, 0.4).unwrap();
        assert!(linalg::spectral_norm(&to_dyn(j.matrix())) <= 1.0 + 1e-12);
        assert!(JonesMatrix::new(Op2::identity() * c(1.1, 0.0)).is_err());
    }

    #[test]
    fn path_channel_examples() {
        let c0 = CellConfig::reference();
        let path = trace_cell(&c0, &c0.entry_ray(&Injection::reference()), 1000).unwrap();
        let k = channel_from_path(&path, &ChannelParams::default()).unwrap();
        assert_eq!(k.operators().len(), 1);
        assert!(close(&to_dyn(&k.operators()[0]), &linalg::identity(2), 1e-15));

        let delta = 0.01;
        let params = ChannelParams {
            bounce: BounceParams { retardance: delta, ..Default::default() },
            ..Default::default()
        };
        let k = channel_from_path(&path, &params).unwrap();
        let n = path.n_reflections() as f64;
        let expect = Op2::new(ONE, ZERO, ZERO, Complex64::from_polar(1.0, n * delta));
        assert!(close(&to_dyn(&k.operators()[0]), &to_dyn(&expect), 1e-12));

        let params = ChannelParams { depolarizing_p: 1.0, ..Default::default() };
        let k = channel_from_path(&path, &params).unwrap();
        assert_eq!(k.operators().len(), 4);
        let h = DensityMatrix::pure(&[ONE, ZERO]).unwrap();
        let out = k.apply(&h).unwrap();
        assert!(close(out.matrix(), &linalg::identity(2).scale(0.5), 1e-14));
    }

    #[test]
    fn loss_tracking_reports_survival() {
        let params = ChannelParams { reflectance: Some(0.9999), ..Default::default() };
        let k = channel_for_bounces(378, &params).unwrap();
        let out = apply_channel_signal(&bell_phi_plus(), &k).unwrap();
        assert_relative_eq!(out.survival, 0.9999f64.powi(378), epsilon = 1e-12);
        assert_relative_eq!(state_fidelity(&out.state, &bell_phi_plus()).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn signal_channel_examples() {
        let b = bell_phi_plus();
        let out = apply_channel_signal(&b, &KrausSet::identity()).unwrap();
        assert!(close(out.state.matrix(), b.matrix(), 1e-15));
        let out = apply_channel_signal(&b, &KrausSet::pauli(3)).unwrap();
        assert!(close(out.state.matrix(), bell_phi_minus().matrix(), 1e-15));
        let out = apply_channel_signal(&b, &KrausSet::depolarizing(1.0).unwrap()).unwrap();
        assert!(close(out.state.matrix(), &linalg::identity(4).scale(0.25), 1e-15));
    }

    #[test]
    fn zero_channel_is_rejected() {
        let k = KrausSet::new(vec![Op2::zeros()]).unwrap();
        assert!(matches!(
            apply_channel_signal(&bell_phi_plus(), &k),
            Err(ChannelError::ZeroTrace(_))
        ));
    }

    #[test]
    fn chi_examples() {
        let id = chi_from_kraus(&KrausSet::identity());
        assert!(close(id.matrix(), ChiMatrix::identity_channel().matrix(), 1e-15));
        let x = chi_from_kraus(&KrausSet::pauli(1));
        assert_relative_eq!(x.entry(1, 1).re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(x.matrix().iter().map(|z| z.norm()).sum::<f64>(), 1.0, epsilon = 1e-15);
        let p = 0.12;
        let dep = chi_from_kraus(&KrausSet::pauli_error(p).unwrap());
        let mut expect = CMatrix::zeros(4, 4);
        for (k, v) in [1.0 - p, p / 3.0, p / 3.0, p / 3.0].iter().enumerate() {
            expect[(k, k)] = c(*v, 0.0);
        }
        assert!(close(dep.matrix(), &expect, 1e-15));
        let f = process_fidelity(&dep, &ChiMatrix::identity_channel()).unwrap();
        assert_relative_eq!(f, 1.0 - p, epsilon = 1e-12);
        assert_relative_eq!(process_fidelity(&id, &id).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn chi_reproduces_kraus_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let k = random_kraus(&mut rng, 3);
            let chi = chi_from_kraus(&k);
            assert_relative_eq!(chi.trace(), 1.0, epsilon = 1e-12);
            let rho = random_density(&mut rng, 2, 2);
            assert!(close(&chi.apply_raw(rho.matrix()), &k.apply_raw(rho.matrix()), 1e-12));
        }
    }

    #[test]
    fn normalization_mismatch() {
        let half = ChiMatrix::new(ChiMatrix::identity_channel().matrix().scale(0.5)).unwrap();
        assert!(matches!(
            process_fidelity(&half, &ChiMatrix::identity_channel()),
            Err(ChannelError::NormalizationMismatch(..))
        ));
    }

    #[test]
    fn fidelity_examples() {
        let b = bell_phi_plus();
        assert_relative_eq!(state_fidelity(&b, &b).unwrap(), 1.0, epsilon = 1e-12);
        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        assert_relative_eq!(state_fidelity(&b, &mixed).unwrap(), 0.25, epsilon = 1e-12);
        let h = DensityMatrix::pure(&[ONE, ZERO]).unwrap();
        let v = DensityMatrix::pure(&[ZERO, ONE]).unwrap();
        assert!(state_fidelity(&h, &v).unwrap() < 1e-12);
        assert!(matches!(
            state_fidelity(&h, &b),
            Err(ChannelError::DimensionMismatch(2, 4))
        ));
    }

    #[test]
    fn entangled_fraction_of_bell_and_mixed_states() {
        assert_relative_eq!(fully_entangled_fraction(&bell_phi_plus()).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(fully_entangled_fraction(&bell_phi_minus()).unwrap(), 1.0, epsilon = 1e-12);
        let hh = DensityMatrix::pure(&[ONE, ZERO, ZERO, ZERO]).unwrap();
        assert_relative_eq!(fully_entangled_fraction(&hh).unwrap(), 0.5, epsilon = 1e-12);
        let w = DensityMatrix::werner(0.6).unwrap();
        assert_relative_eq!(fully_entangled_fraction(&w).unwrap(), 0.6 + 0.1, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn composition_matches_kraus_product(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_kraus(&mut rng, 2);
                let b = random_kraus(&mut rng, 3);
                let composed = a.then(&b);
                // χ of the composition acts like b after a
                let chi = chi_from_kraus(&composed);
                let rho = random_density(&mut rng, 2, 2);
                let direct = b.apply_raw(&a.apply_raw(rho.matrix()));
                prop_assert!(close(&chi.apply_raw(rho.matrix()), &direct, 1e-9));
                let again = chi_from_kraus(&KrausSet::new(composed.operators().to_vec()).unwrap());
                prop_assert!(close(chi.matrix(), again.matrix(), 1e-9));
            }

            #[test]
            fn lossless_channels_preserve_trace(
                delta in -PI..PI, axis in -PI..PI, p in 0.0f64..=1.0, seed in any::<u64>()
            ) {
                let params = ChannelParams {
                    bounce: BounceParams { retardance: delta, diattenuation: 0.0, axis_azimuth: axis },
                    depolarizing_p: p,
                    ..Default::default()
                };
                let k = channel_for_bounces(17, &params).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rho = random_density(&mut rng, 4, 4);
                let out = apply_channel_signal(&rho, &k).unwrap();
                prop_assert!((out.survival - 1.0).abs() < 1e-10);
            }

            #[test]
            fn fidelity_bounds_and_symmetry(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_density(&mut rng, 4, 1 + (seed % 4) as usize);
                let b = random_density(&mut rng, 4, 4);
                let f = state_fidelity(&a, &b).unwrap();
                prop_assert!((0.0..=1.0).contains(&f));
                prop_assert!((f - state_fidelity(&b, &a).unwrap()).abs() < 1e-8);
                prop_assert!(f < 1.0 - 1e-6);
                prop_assert!((state_fidelity(&b, &b).unwrap() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn fidelity_unitary_invariance(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_density(&mut rng, 4, 2);
                let b = random_density(&mut rng, 4, 4);
                let u = random_unitary(&mut rng, 4);
                let rot = |d: &DensityMatrix| {
                    DensityMatrix::new(linalg::hermitian_part(&(&u * d.matrix() * u.adjoint()))).unwrap()
                };
                let f0 = state_fidelity(&a, &b).unwrap();
                let f1 = state_fidelity(&rot(&a), &rot(&b)).unwrap();
                prop_assert!((f0 - f1).abs() < 1e-9);
            }

            #[test]
            fn local_unitaries_keep_maximal_entanglement(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let u = random_unitary(&mut rng, 2);
                let k = KrausSet::new(vec![Op2::from_fn(|i, j| u[(i, j)])]).unwrap();
                let out = apply_channel_signal(&bell_phi_plus(), &k).unwrap();
                prop_assert!((fully_entangled_fraction(&out.state).unwrap() - 1.0).abs() < 1e-10);
            }
        }
    }
}
