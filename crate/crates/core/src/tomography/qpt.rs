//! Process tomography from six probe inputs.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::qst::mle_from_counts;
use super::{draw, AcquisitionParams, Eigenstate, MleOptions, TomographyError};
use crate::channel::{ChiMatrix, DensityMatrix, KrausSet};
use crate::linalg::{self, paulis, project_psd_unit_trace, to_dyn, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleCount {
    pub analyzer: Eigenstate,
    pub counts: u64,
    pub integration_time: f64,
}

/// Output-state measurements for one prepared input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessInput {
    pub input: Eigenstate,
    pub counts: Vec<SingleCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessData {
    pub inputs: Vec<ProcessInput>,
}

/// Prepares each of the six eigenstates, sends it through `channel` and
/// measures the output in all six analyzer states.
pub fn simulate_process_counts(
    channel: &KrausSet,
    params: &AcquisitionParams,
    seed: u64,
) -> Result<ProcessData, TomographyError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.pair_rate * params.integration_time;
    let inputs = Eigenstate::ALL
        .iter()
        .map(|&input| {
            // unnormalized: loss lowers the counts
            let out = channel.apply_raw(input.state().matrix());
            let counts = Eigenstate::ALL
                .iter()
                .map(|&a| {
                    let p = linalg::trace(&(&a.projector() * &out)).re.max(0.0);
                    SingleCount {
                        analyzer: a,
                        counts: draw(n * p + params.accidentals(), params.model, &mut rng),
                        integration_time: params.integration_time,
                    }
                })
                .collect();
            ProcessInput { input, counts }
        })
        .collect();
    Ok(ProcessData { inputs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QptOptions {
    #[serde(default)]
    pub mle: MleOptions,
    /// Largest tolerated relative residual of the linear χ fit.
    #[serde(default = "default_bound")]
    pub residual_bound: f64,
}

fn default_bound() -> f64 {
    0.1
}

impl Default for QptOptions {
    fn default() -> Self {
        QptOptions {
            mle: MleOptions::default(),
            residual_bound: default_bound(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QptResult {
    pub chi: ChiMatrix,
    /// `‖Aχ − b‖ / ‖b‖` before projection onto physical process matrices.
    pub residual: f64,
    /// Smallest eigenvalue of the unprojected χ.
    pub raw_min_eigenvalue: f64,
    pub outputs: Vec<(Eigenstate, DensityMatrix)>,
}

/// Reconstructs each output by single-qubit MLE, solves
/// `ρ_out = Σ χ_mn E_m ρ_in E_n†` by least squares and clips χ to the PSD cone
/// with unit trace.
pub fn process_tomography(
    data: &ProcessData,
    options: &QptOptions,
) -> Result<QptResult, TomographyError> {
    let mut outputs = Vec::with_capacity(data.inputs.len());
    for inp in &data.inputs {
        if inp.counts.is_empty() {
            return Err(TomographyError::DegenerateData(format!(
                "no measurements for input {}",
                inp.input
            )));
        }
        let r = mle_from_counts(
            inp.counts.iter().map(|c| c.analyzer.projector()).collect(),
            inp.counts.iter().map(|c| c.counts as f64).collect(),
            inp.counts.iter().map(|c| c.integration_time).collect(),
            2,
            None,
            &options.mle,
        )?;
        outputs.push((inp.input, r.state));
    }

    let e: Vec<CMatrix> = paulis().iter().map(to_dyn).collect();
    let rows = 4 * outputs.len();
    let mut a = CMatrix::zeros(rows, 16);
    let mut b = DVector::zeros(rows);
    for (k, (input, out)) in outputs.iter().enumerate() {
        let rho = input.projector();
        for m in 0..4 {
            for n in 0..4 {
                let term = &e[m] * &rho * e[n].adjoint();
                for idx in 0..4 {
                    a[(4 * k + idx, 4 * m + n)] = term[(idx / 2, idx % 2)];
                }
            }
        }
        for idx in 0..4 {
            b[4 * k + idx] = out.matrix()[(idx / 2, idx % 2)];
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&v| v > 1e-10 * smax).count();
    if rank < 16 {
        return Err(TomographyError::SingularDesign { rank, needed: 16 });
    }
    let x = svd
        .solve(&b, 1e-10 * smax)
        .map_err(|e| TomographyError::DegenerateData(e.to_string()))?;
    let residual = (&a * &x - &b).norm() / b.norm();
    if !(residual <= options.residual_bound) {
        return Err(TomographyError::InconsistentData {
            residual,
            bound: options.residual_bound,
        });
    }
    let raw = linalg::hermitian_part(&CMatrix::from_fn(4, 4, |m, n| x[4 * m + n]));
    let raw_min_eigenvalue = linalg::eigenvalues(&raw)[0];
    let projected = project_psd_unit_trace(&raw)
        .ok_or_else(|| TomographyError::DegenerateData("χ has no positive part".into()))?;
    Ok(QptResult {
        chi: ChiMatrix::new(projected)?,
        residual,
        raw_min_eigenvalue,
        outputs,
    })
}
