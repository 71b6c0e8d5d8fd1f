use nalgebra::{DMatrix, DVector};

use super::optimize::{maximize, PoissonProblem};
use super::{CountRecord, MleOptions, MleResult, TomographyError};
use crate::channel::DensityMatrix;
use crate::linalg::{self, c, pauli_product_basis, project_psd_unit_trace, CMatrix};

/// Linear-inversion estimate: Hermitian and unit trace, possibly not PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEstimate {
    pub matrix: CMatrix,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
}

impl LinearEstimate {
    /// Nearest physical state by eigenvalue clipping.
    pub fn physical(&self) -> Result<DensityMatrix, TomographyError> {
        let m = project_psd_unit_trace(&self.matrix)
            .ok_or_else(|| TomographyError::DegenerateData("estimate has no positive part".into()))?;
        Ok(DensityMatrix::new(m)?)
    }
}

/// Least-squares inversion of `r_s = Tr(Π_s ρ)·N` over the Pauli-product basis.
pub(crate) fn linear_inversion(
    projectors: &[CMatrix],
    rates: &[f64],
    dim: usize,
) -> Result<LinearEstimate, TomographyError> {
    let basis = pauli_product_basis(dim);
    let k = basis.len();
    let design = DMatrix::from_fn(projectors.len(), k, |s, j| {
        linalg::trace(&(&projectors[s] * &basis[j])).re
    });
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&v| v > 1e-10 * smax).count();
    if rank < k {
        return Err(TomographyError::SingularDesign { rank, needed: k });
    }
    let y = DVector::from_column_slice(rates);
    let x = svd
        .solve(&y, 1e-10 * smax)
        .map_err(|e| TomographyError::DegenerateData(e.to_string()))?;
    // Tr(σ_0) = dim and every other basis element is traceless
    let norm = x[0] * dim as f64;
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(TomographyError::DegenerateData(
            "counts carry no signal (zero or negative total)".into(),
        ));
    }
    let mut m = CMatrix::zeros(dim, dim);
    for (j, b) in basis.iter().enumerate() {
        m += b * c(x[j] / norm, 0.0);
    }
    let matrix = linalg::hermitian_part(&m);
    let eigenvalues = linalg::eigenvalues(&matrix);
    Ok(LinearEstimate {
        min_eigenvalue: eigenvalues[0],
        eigenvalues,
        matrix,
    })
}

/// Linear two-photon state tomography with no accidental subtraction.
pub fn linear_qst(records: &[CountRecord]) -> Result<LinearEstimate, TomographyError> {
    linear_qst_with(records, 0.0)
}

/// Subtracts `accidental_rate·t` from each count (floored at zero) before
/// inverting.
pub fn linear_qst_with(
    records: &[CountRecord],
    accidental_rate: f64,
) -> Result<LinearEstimate, TomographyError> {
    check_records(records)?;
    let projectors: Vec<CMatrix> = records.iter().map(|r| r.setting.projector()).collect();
    let rates: Vec<f64> = records
        .iter()
        .map(|r| (r.counts as f64 - accidental_rate * r.integration_time).max(0.0) / r.integration_time)
        .collect();
    linear_inversion(&projectors, &rates, 4)
}

fn check_records(records: &[CountRecord]) -> Result<(), TomographyError> {
    if records.is_empty() {
        return Err(TomographyError::SingularDesign { rank: 0, needed: 16 });
    }
    if let Some(r) = records.iter().find(|r| !(r.integration_time > 0.0)) {
        return Err(TomographyError::InvalidParameter(format!(
            "integration time {} for setting {}",
            r.integration_time,
            r.setting.label()
        )));
    }
    Ok(())
}

/// Maximum-likelihood two-photon state; starts from `init` or from the
/// PSD-clipped linear estimate.
pub fn mle_qst(
    records: &[CountRecord],
    init: Option<&DensityMatrix>,
) -> Result<MleResult, TomographyError> {
    mle_qst_with(records, init, &MleOptions::default())
}

pub fn mle_qst_with(
    records: &[CountRecord],
    init: Option<&DensityMatrix>,
    options: &MleOptions,
) -> Result<MleResult, TomographyError> {
    check_records(records)?;
    let projectors: Vec<CMatrix> = records.iter().map(|r| r.setting.projector()).collect();
    mle_from_counts(
        projectors,
        records.iter().map(|r| r.counts as f64).collect(),
        records.iter().map(|r| r.integration_time).collect(),
        4,
        init,
        options,
    )
}

pub(crate) fn mle_from_counts(
    projectors: Vec<CMatrix>,
    counts: Vec<f64>,
    times: Vec<f64>,
    dim: usize,
    init: Option<&DensityMatrix>,
    options: &MleOptions,
) -> Result<MleResult, TomographyError> {
    let rates: Vec<f64> = counts
        .iter()
        .zip(&times)
        .map(|(n, t)| (n - options.accidental_rate * t).max(0.0) / t)
        .collect();
    // also verifies informational completeness
    let linear = linear_inversion(&projectors, &rates, dim)?;
    let start = match init {
        Some(d) if d.dim() == dim => d.matrix().clone(),
        Some(d) => {
            return Err(crate::channel::ChannelError::DimensionMismatch(d.dim(), dim).into());
        }
        None => linear.physical()?.matrix().clone(),
    };
    let problem = PoissonProblem {
        background: times.iter().map(|t| options.accidental_rate * t).collect(),
        projectors,
        counts,
        times,
        dim,
    };
    maximize(&problem, &start, options)
}
