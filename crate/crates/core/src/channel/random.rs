//! Haar-random unitaries, random mixed states and random channels for
//! sampling-based checks.

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{DensityMatrix, KrausSet};
use crate::linalg::{self, c, CMatrix};

fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Haar-distributed unitary via QR of a Ginibre matrix with phase fix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let qr = ginibre(rng, dim, dim).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q;
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..dim {
            u[(i, j)] *= phase;
        }
    }
    u
}

/// Random state `G G† / Tr` with `G` a `dim × rank` Ginibre matrix.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> DensityMatrix {
    let g = ginibre(rng, dim, rank.max(1));
    let m = &g * g.adjoint();
    let tr = linalg::trace(&m).re;
    DensityMatrix::new(linalg::hermitian_part(&m.scale(1.0 / tr))).expect("Ginibre state is physical")
}

/// Random trace-preserving qubit channel with `n_ops` Kraus operators, cut
/// from a Haar-random isometry.
pub fn random_kraus<R: Rng + ?Sized>(rng: &mut R, n_ops: usize) -> KrausSet {
    let n = n_ops.max(1);
    let u = random_unitary(rng, 2 * n);
    let ops = (0..n)
        .map(|k| Matrix2::from_fn(|i, j| u[(2 * k + i, j)]))
        .collect();
    KrausSet::new(ops).expect("isometry blocks are complete")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(&mut rng, 4);
        assert!(linalg::max_abs_diff(&(&u * u.adjoint()), &linalg::identity(4)) < 1e-12);
    }

    #[test]
    fn kraus_is_trace_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..5 {
            assert!(random_kraus(&mut rng, n).is_trace_preserving(1e-12));
        }
    }

    #[test]
    fn rank_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_density(&mut rng, 4, 1);
        assert!((rho.purity() - 1.0).abs() < 1e-12);
    }
}
