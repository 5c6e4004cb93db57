//! Mutually unbiased basis pair and the orthonormal Hermitian operator basis.

use super::{c64, Ket, Operator};
use crate::error::{Error, Result};
use std::f64::consts::PI;

/// A pair of orthonormal bases with all cross overlaps of magnitude 1/√d.
///
/// `basis_i` is the computational basis; `basis_s` is the discrete-Fourier
/// basis |s_k⟩ = (1/√d) Σ_j ω^{jk} |j⟩ with ω = exp(2πi/d). For d = 2 this
/// makes s_0 the diagonal state and s_1 the anti-diagonal state.
#[derive(Clone, Debug)]
pub struct BasisPair {
    basis_i: Vec<Ket>,
    basis_s: Vec<Ket>,
}

impl BasisPair {
    pub fn dim(&self) -> usize {
        self.basis_i.len()
    }

    pub fn basis_i(&self) -> &[Ket] {
        &self.basis_i
    }

    pub fn basis_s(&self) -> &[Ket] {
        &self.basis_s
    }

    pub fn i_ket(&self, k: usize) -> &Ket {
        &self.basis_i[k]
    }

    pub fn s_ket(&self, k: usize) -> &Ket {
        &self.basis_s[k]
    }

    /// ⟨i| s_k⟩.
    pub fn overlap(&self, i: usize, k: usize) -> super::C64 {
        self.basis_i[i].inner(&self.basis_s[k])
    }
}

/// Computational basis paired with its Fourier conjugate.
pub fn mub_pair(dim: usize) -> Result<BasisPair> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let basis_i = (0..dim).map(|k| Ket::basis_state(dim, k)).collect();
    let norm = 1.0 / (dim as f64).sqrt();
    let basis_s = (0..dim)
        .map(|k| {
            Ket::new(
                (0..dim)
                    .map(|j| {
                        let angle = 2.0 * PI * (j * k) as f64 / dim as f64;
                        c64(norm * angle.cos(), norm * angle.sin())
                    })
                    .collect(),
            )
        })
        .collect();
    Ok(BasisPair { basis_i, basis_s })
}

/// Orthonormal Hermitian basis of the d×d operator space under the
/// Hilbert-Schmidt inner product: I/√d, the off-diagonal symmetric and
/// antisymmetric generators, and the diagonal generators.
pub fn hermitian_basis(dim: usize) -> Vec<Operator> {
    let mut out = Vec::with_capacity(dim * dim);
    out.push(Operator::identity(dim).scaled_re(1.0 / (dim as f64).sqrt()));
    let inv_sqrt2 = 1.0 / 2f64.sqrt();
    for j in 0..dim {
        for k in j + 1..dim {
            let mut sym = Operator::zeros(dim);
            sym.set(j, k, c64(inv_sqrt2, 0.0));
            sym.set(k, j, c64(inv_sqrt2, 0.0));
            out.push(sym);
            let mut asym = Operator::zeros(dim);
            asym.set(j, k, c64(0.0, -inv_sqrt2));
            asym.set(k, j, c64(0.0, inv_sqrt2));
            out.push(asym);
        }
    }
    for l in 1..dim {
        // diag(1,..,1,-l,0,..)/√(l(l+1)) with l ones
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut diag = vec![0.0; dim];
        for entry in diag.iter_mut().take(l) {
            *entry = norm;
        }
        diag[l] = -(l as f64) * norm;
        out.push(Operator::diag(&diag));
    }
    out
}
