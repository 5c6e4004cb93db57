//! Hermitian eigendecomposition via cyclic complex Jacobi rotations.
//!
//! Adequate and robust for the dimensions this crate works at (d ≤ ~64).
//! Off-diagonal norm tolerance 1e-12 (relative to the input scale), at most
//! 100 sweeps.

use super::{c64, Ket, Operator, C64};
use crate::error::{Error, Result};

const OFF_DIAG_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Ket>,
}

impl HermitianEigen {
    /// Σ λ_k |v_k⟩⟨v_k|.
    pub fn reconstruct(&self) -> Operator {
        let d = self.vectors[0].dim();
        let mut out = Operator::zeros(d);
        for (lam, v) in self.values.iter().zip(&self.vectors) {
            out = out.add(&v.projector().scaled_re(*lam));
        }
        out
    }
}

fn off_diagonal_norm(a: &Operator) -> f64 {
    let d = a.dim();
    let mut s = 0.0;
    for r in 0..d {
        for c in 0..d {
            if r != c {
                s += a.get(r, c).norm_sqr();
            }
        }
    }
    s.sqrt()
}

pub fn hermitian_eigen(op: &Operator) -> Result<HermitianEigen> {
    let residual = op.sub(&op.adjoint()).frobenius_norm();
    let scale = 1.0 + op.frobenius_norm();
    if residual > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian {
            residual,
            tol: HERMITIAN_TOL * scale,
        });
    }

    let d = op.dim();
    let mut a = op.hermitian_part();
    let mut v = Operator::identity(d);
    let tol = OFF_DIAG_TOL * scale;

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= tol {
            break;
        }
        for p in 0..d - 1 {
            for q in p + 1..d {
                let apq = a.get(p, q);
                let mag = apq.norm();
                if mag <= tol / (d as f64) {
                    continue;
                }
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                // phase of the off-diagonal entry and real rotation size
                let phase = apq / mag;
                // zero the rotated (p,q) entry: t² − 2τt − 1 = 0, small root
                let tau = (app - aqq) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (tau * tau + 1.0).sqrt())
                } else {
                    1.0 / (-tau + (tau * tau + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = phase * (t * c);

                // A <- U† A U with U = I except U[p][p]=c, U[p][q]=s, U[q][p]=-s̄, U[q][q]=c
                for k in 0..d {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, akp * c - akq * s.conj());
                    a.set(k, q, akp * s + akq * c);
                }
                for k in 0..d {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, apk * c - aqk * s);
                    a.set(q, k, apk * s.conj() + aqk * c);
                }
                // keep the diagonal exactly real against round-off drift
                let app_new = a.get(p, p).re;
                let aqq_new = a.get(q, q).re;
                a.set(p, p, c64(app_new, 0.0));
                a.set(q, q, c64(aqq_new, 0.0));

                for k in 0..d {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp * c - vkq * s.conj());
                    v.set(k, q, vkp * s + vkq * c);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    let diag: Vec<f64> = (0..d).map(|k| a.get(k, k).re).collect();
    order.sort_by(|&x, &y| diag[y].partial_cmp(&diag[x]).expect("finite eigenvalues"));

    let values: Vec<f64> = order.iter().map(|&k| diag[k]).collect();
    let vectors: Vec<Ket> = order
        .iter()
        .map(|&k| Ket::new((0..d).map(|r| v.get(r, k)).collect()))
        .collect();

    Ok(HermitianEigen { values, vectors })
}

/// Apply a scalar function to a Hermitian operator through its spectrum:
/// V f(Λ) V†.
pub fn hermitian_map(op: &Operator, f: impl Fn(f64) -> C64) -> Result<Operator> {
    let eig = hermitian_eigen(op)?;
    let d = op.dim();
    let mut out = Operator::zeros(d);
    for (lam, vec) in eig.values.iter().zip(&eig.vectors) {
        out = out.add(&vec.projector().scaled(f(*lam)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, test_rng};

    #[test]
    fn diagonal_matrix_has_its_diagonal_as_spectrum() {
        let eig = hermitian_eigen(&Operator::diag(&[3.0, 1.0])).unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
        assert!((eig.vectors[0].get(0).norm() - 1.0).abs() < 1e-12);
        assert!((eig.vectors[1].get(1).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pauli_x_spectrum_is_plus_minus_one() {
        let x = Operator::new(
            2,
            vec![C64::default(), c64(1.0, 0.0), c64(1.0, 0.0), C64::default()],
        );
        let eig = hermitian_eigen(&x).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] + 1.0).abs() < 1e-12);
        for (lam, v) in eig.values.iter().zip(&eig.vectors) {
            let r = x.apply(v).sub(&v.scaled(c64(*lam, 0.0)));
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn random_hermitian_reconstructs_within_1e10() {
        let mut rng = test_rng(23);
        for _ in 0..20 {
            let h = random_hermitian(4, &mut rng);
            let eig = hermitian_eigen(&h).unwrap();
            let residual = eig.reconstruct().sub(&h).frobenius_norm();
            assert!(residual < 1e-10, "residual {residual}");
        }
    }

    #[test]
    fn eigenvalue_sum_matches_trace_and_vectors_are_orthonormal() {
        let mut rng = test_rng(29);
        for dim in [2usize, 3, 5, 8] {
            let h = random_hermitian(dim, &mut rng);
            let eig = hermitian_eigen(&h).unwrap();
            let sum: f64 = eig.values.iter().sum();
            assert!((sum - h.trace().re).abs() < 1e-10);
            for (j, vj) in eig.vectors.iter().enumerate() {
                for (k, vk) in eig.vectors.iter().enumerate() {
                    let g = vj.inner(vk);
                    let want = if j == k { 1.0 } else { 0.0 };
                    assert!((g - c64(want, 0.0)).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let mut m = Operator::zeros(2);
        m.set(0, 1, c64(1.0, 0.0));
        assert!(matches!(
            hermitian_eigen(&m),
            Err(Error::NotHermitian { .. })
        ));
    }
}
