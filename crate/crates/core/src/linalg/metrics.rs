//! State metrics: PSD square root, Uhlmann fidelity, purity.

use super::eigen::hermitian_eigen;
use super::{c64, Operator};
use crate::error::{Error, Result};

/// Eigenvalues in [-1e-6, 0) count as round-off and clip to zero; anything
/// below -1e-6 is genuinely unphysical input.
const REJECT_FLOOR: f64 = -1e-6;

/// Matrix square root of a PSD operator.
pub fn psd_sqrt(op: &Operator) -> Result<Operator> {
    let eig = hermitian_eigen(op)?;
    let min = *eig.values.last().expect("eigenvalues nonempty");
    if min < REJECT_FLOOR {
        return Err(Error::NotPsd(min));
    }
    let d = op.dim();
    let mut out = Operator::zeros(d);
    for (lam, v) in eig.values.iter().zip(&eig.vectors) {
        out = out.add(&v.projector().scaled_re(lam.max(0.0).sqrt()));
    }
    Ok(out)
}

/// Uhlmann fidelity F(ρ₁, ρ₂) = [Tr √(√ρ₁ ρ₂ √ρ₁)]².
///
/// Inputs only need to be PSD with positive trace; both are normalized by
/// their trace first, so subnormalized POVM elements compare through their
/// retrodicted states.
pub fn fidelity(rho1: &Operator, rho2: &Operator) -> Result<f64> {
    if rho1.dim() != rho2.dim() {
        return Err(Error::DimensionMismatch(rho1.dim(), rho2.dim()));
    }
    let n1 = normalize_density(rho1)?;
    let n2 = normalize_density(rho2)?;
    let s1 = psd_sqrt(&n1)?;
    let inner = s1.mul(&n2).mul(&s1);
    let eig = hermitian_eigen(&inner.hermitian_part())?;
    let root_sum: f64 = eig.values.iter().map(|&l| l.max(0.0).sqrt()).sum();
    Ok(root_sum * root_sum)
}

fn normalize_density(op: &Operator) -> Result<Operator> {
    let eig = hermitian_eigen(op)?;
    let min = *eig.values.last().expect("eigenvalues nonempty");
    if min < REJECT_FLOOR {
        return Err(Error::NotPsd(min));
    }
    let tr = op.trace().re;
    if tr <= 1e-300 {
        return Err(Error::ZeroElement);
    }
    Ok(op.scaled(c64(1.0 / tr, 0.0)))
}

/// Tr(ρ²) of a trace-one state.
pub fn purity(rho: &Operator) -> f64 {
    rho.mul(rho).trace().re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Ket, C64};
    use crate::random::{random_density, random_unitary, test_rng};

    #[test]
    fn sqrt_of_identity_is_identity() {
        let i = Operator::identity(3);
        let s = psd_sqrt(&i).unwrap();
        assert!(s.sub(&i).frobenius_norm() < 1e-12);
    }

    #[test]
    fn sqrt_of_diag_4_9_is_diag_2_3() {
        let s = psd_sqrt(&Operator::diag(&[4.0, 9.0])).unwrap();
        assert!(s.sub(&Operator::diag(&[2.0, 3.0])).frobenius_norm() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back_to_input() {
        let mut rng = test_rng(31);
        for _ in 0..20 {
            let rho = random_density(3, &mut rng);
            let s = psd_sqrt(&rho).unwrap();
            assert!(s.mul(&s).sub(&rho).frobenius_norm() < 1e-9);
        }
    }

    #[test]
    fn significantly_negative_eigenvalue_is_rejected() {
        let bad = Operator::diag(&[1.0, -0.01]);
        assert!(matches!(psd_sqrt(&bad), Err(Error::NotPsd(_))));
    }

    #[test]
    fn fidelity_of_state_with_itself_is_one() {
        let mut rng = test_rng(37);
        for _ in 0..10 {
            let rho = random_density(2, &mut rng);
            let f = fidelity(&rho, &rho).unwrap();
            assert!((f - 1.0).abs() < 1e-9, "f = {f}");
        }
    }

    #[test]
    fn fidelity_of_orthogonal_pure_states_is_zero() {
        let h = Ket::basis_state(2, 0).projector();
        let v = Ket::basis_state(2, 1).projector();
        assert!(fidelity(&h, &v).unwrap() < 1e-12);
    }

    #[test]
    fn fidelity_of_h_and_d_is_half() {
        let h = Ket::basis_state(2, 0).projector();
        let d = Ket::uniform(2).projector();
        assert!((fidelity(&h, &d).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fidelity_is_symmetric_over_random_pairs() {
        let mut rng = test_rng(41);
        for _ in 0..100 {
            let a = random_density(2, &mut rng);
            let b = random_density(2, &mut rng);
            let fab = fidelity(&a, &b).unwrap();
            let fba = fidelity(&b, &a).unwrap();
            assert!((fab - fba).abs() < 1e-9);
            assert!((-1e-9..=1.0 + 1e-9).contains(&fab));
        }
    }

    #[test]
    fn fidelity_is_unitarily_invariant() {
        let mut rng = test_rng(43);
        for _ in 0..20 {
            let a = random_density(3, &mut rng);
            let b = random_density(3, &mut rng);
            let u = random_unitary(3, &mut rng);
            let ua = u.mul(&a).mul(&u.adjoint());
            let ub = u.mul(&b).mul(&u.adjoint());
            let f1 = fidelity(&a, &b).unwrap();
            let f2 = fidelity(&ua, &ub).unwrap();
            assert!((f1 - f2).abs() < 1e-9, "|{f1} - {f2}|");
        }
    }

    #[test]
    fn fidelity_matches_pure_state_overlap() {
        let mut rng = test_rng(47);
        for _ in 0..20 {
            let psi = crate::random::random_ket(2, &mut rng);
            let phi = crate::random::random_ket(2, &mut rng);
            let f = fidelity(&psi.projector(), &phi.projector()).unwrap();
            let overlap: C64 = psi.inner(&phi);
            assert!((f - overlap.norm_sqr()).abs() < 1e-10);
        }
    }

    #[test]
    fn purity_distinguishes_pure_from_mixed() {
        let pure = Ket::uniform(2).projector();
        assert!((purity(&pure) - 1.0).abs() < 1e-12);
        let mixed = Operator::diag(&[0.5, 0.5]);
        assert!((purity(&mixed) - 0.5).abs() < 1e-12);
    }
}
