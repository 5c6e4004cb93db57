//! Direct tomography proper: assembling POVM elements from weak values on
//! the pure-retrodiction path and the Dirac-distribution path, the
//! physicality adjustment, and the symmetric pre-state reconstruction.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, mub_pair, BasisPair, Ket, Operator, C64};
use crate::povm::Povm;
use crate::weakval::WeakValueEstimate;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Complex quasiprobability table T_{s,i} = ⟨s|Π|i⟩⟨i|s⟩ of one POVM element
/// over a mutually unbiased basis pair, stored s-major.
#[derive(Clone, Debug)]
pub struct DiracDistribution {
    pub dim: usize,
    pub outcome: usize,
    pub t: Vec<C64>,
    pub basis: BasisPair,
}

impl DiracDistribution {
    pub fn entry(&self, s: usize, i: usize) -> C64 {
        self.t[s * self.dim + i]
    }

    /// Σ_i T_{s,i}, which equals ⟨s|Π|s⟩ on exact tables.
    pub fn row_sum(&self, s: usize) -> C64 {
        (0..self.dim).map(|i| self.entry(s, i)).sum()
    }

    /// Σ_s T_{s,i}, which equals ⟨i|Π|i⟩ on exact tables.
    pub fn column_sum(&self, i: usize) -> C64 {
        (0..self.dim).map(|s| self.entry(s, i)).sum()
    }
}

/// Which assembly route produced a reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconstructionPath {
    Pure,
    Dirac,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    /// ‖Π̃ − Π̃†‖_F / 2 of the pre-Hermitization assembly.
    pub hermiticity_residual: f64,
    /// Minimum eigenvalue of the raw element.
    pub psd_margin: f64,
}

/// One reconstructed POVM element before and after the per-element PSD clip.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub element_raw: Operator,
    pub element: Operator,
    pub eta: f64,
    pub rho: Operator,
    pub path: ReconstructionPath,
    pub diagnostics: Diagnostics,
}

/// Clip negative eigenvalues of a Hermitian operator to zero.
pub fn clip_psd(op: &Operator) -> Result<Operator> {
    let eig = hermitian_eigen(op)?;
    let d = op.dim();
    let mut out = Operator::zeros(d);
    for (lam, v) in eig.values.iter().zip(&eig.vectors) {
        if *lam > 0.0 {
            out = out.add(&v.projector().scaled_re(*lam));
        }
    }
    Ok(out)
}

fn finish(
    element_raw: Operator,
    path: ReconstructionPath,
    hermiticity_residual: f64,
) -> Result<ReconstructionResult> {
    let eig = hermitian_eigen(&element_raw)?;
    let psd_margin = *eig.values.last().expect("nonempty spectrum");
    let element = clip_psd(&element_raw)?;
    let eta = element.trace().re;
    if eta <= 1e-15 {
        return Err(Error::ZeroElement);
    }
    let rho = element.scaled_re(1.0 / eta);
    Ok(ReconstructionResult {
        element_raw,
        element,
        eta,
        rho,
        path,
        diagnostics: Diagnostics {
            hermiticity_residual,
            psd_margin,
        },
    })
}

/// Rank-one element assembly from per-i weak values taken with the uniform
/// pre-selected state: c_i = μ_i·conj(w_i), |φ⟩ = Σ c_i |i⟩, Π = |φ⟩⟨φ|.
/// The global phase is fixed by ⟨s|φ⟩ ≥ 0. Estimates must carry μ in their
/// coefficient slot (see [`WeakValueEstimate::with_pure_coeff`]).
pub fn reconstruct_pure(estimates: &[WeakValueEstimate]) -> Result<ReconstructionResult> {
    let dim = estimates.len();
    assert!(dim >= 2, "need one estimate per basis index");
    let mut coeffs: Vec<C64> = estimates.iter().map(|e| e.coeff * e.w.conj()).collect();
    let norm_sqr: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    if norm_sqr <= 1e-24 {
        return Err(Error::NullElement);
    }
    let overlap: C64 = coeffs.iter().sum();
    if overlap.norm() > 1e-15 {
        let phase = overlap.conj() / overlap.norm();
        for c in &mut coeffs {
            *c *= phase;
        }
    }
    let phi = Ket::new(coeffs);
    finish(phi.projector(), ReconstructionPath::Pure, 0.0)
}

/// Assemble the measured Dirac table T_{s,i} = ν_{s,i}·w_{s,i} from a full
/// (s, i) estimate grid (s-major).
pub fn dirac_from_weak(
    dim: usize,
    outcome: usize,
    grid: &[Option<WeakValueEstimate>],
) -> Result<DiracDistribution> {
    assert_eq!(grid.len(), dim * dim, "grid must cover all (s, i) pairs");
    let mut t = Vec::with_capacity(dim * dim);
    for s in 0..dim {
        for i in 0..dim {
            match &grid[s * dim + i] {
                Some(est) => t.push(est.coeff * est.w),
                None => return Err(Error::IncompleteGrid { s, i }),
            }
        }
    }
    Ok(DiracDistribution {
        dim,
        outcome,
        t,
        basis: mub_pair(dim)?,
    })
}

/// Exact Dirac table of a known element; the oracle for the inversion tests.
pub fn exact_dirac(element: &Operator, outcome: usize) -> Result<DiracDistribution> {
    let dim = element.dim();
    let pair = mub_pair(dim)?;
    let mut t = Vec::with_capacity(dim * dim);
    for s in 0..dim {
        for i in 0..dim {
            let s_ket = pair.s_ket(s);
            let i_ket = pair.i_ket(i);
            t.push(s_ket.inner(&element.apply(i_ket)) * i_ket.inner(s_ket));
        }
    }
    Ok(DiracDistribution {
        dim,
        outcome,
        t,
        basis: pair,
    })
}

/// Invert a Dirac table to the matrix representation:
/// Π̃ = Σ_{s,i} T_{s,i}·|s⟩⟨i|/⟨i|s⟩, then Hermitize. Returns the Hermitized
/// operator and the hermiticity residual ‖Π̃ − Π̃†‖_F/2.
pub fn dirac_to_operator(dist: &DiracDistribution) -> (Operator, f64) {
    let d = dist.dim;
    let mut raw = Operator::zeros(d);
    for s in 0..d {
        for i in 0..d {
            let denom = dist.basis.overlap(i, s);
            let coeff = dist.entry(s, i) / denom;
            raw = raw.add(&dist.basis.s_ket(s).outer(dist.basis.i_ket(i)).scaled(coeff));
        }
    }
    let residual = raw.hermiticity_residual();
    (raw.hermitian_part(), residual)
}

/// Dirac-path element reconstruction with diagnostics.
pub fn reconstruct_dirac(dist: &DiracDistribution) -> Result<ReconstructionResult> {
    let (hermitized, residual) = dirac_to_operator(dist);
    finish(hermitized, ReconstructionPath::Dirac, residual)
}

/// Two-step projection of raw elements onto the physical set: clip each
/// element to PSD, then repair completeness by the symmetric conjugation
/// Π_n ← S^{-1/2} Π_n S^{-1/2} with S = Σ Π_n. Idempotent on already
/// physical sets.
pub fn physicality_adjust(raw_elements: &[Operator]) -> Result<Povm> {
    if raw_elements.len() < 2 {
        return Err(Error::InvalidPovm("need at least 2 elements".into()));
    }
    let dim = raw_elements[0].dim();
    let clipped: Vec<Operator> = raw_elements
        .iter()
        .map(|e| clip_psd(&e.hermitian_part()))
        .collect::<Result<_>>()?;
    let mut sum = Operator::zeros(dim);
    for e in &clipped {
        sum = sum.add(e);
    }
    let eig = hermitian_eigen(&sum)?;
    let max = eig.values[0];
    let floor = 1e-12 * max.max(1.0);
    if eig.values.iter().any(|&l| l <= floor) {
        return Err(Error::DegenerateData);
    }
    let mut inv_sqrt = Operator::zeros(dim);
    for (lam, v) in eig.values.iter().zip(&eig.vectors) {
        inv_sqrt = inv_sqrt.add(&v.projector().scaled_re(1.0 / lam.sqrt()));
    }
    let adjusted: Vec<Operator> = clipped
        .iter()
        .map(|e| inv_sqrt.mul(e).mul(&inv_sqrt).hermitian_part())
        .collect();
    let labels = (1..=adjusted.len()).map(|n| format!("e{n}")).collect();
    Povm::with_tolerance(dim, adjusted, labels, 1e-9)
}

/// Reconstruct a pre-selected state from per-i weak values taken against the
/// uniform-superposition post-selection: α_i ∝ w_i, normalized, with the
/// global phase fixed by a nonnegative overlap with the uniform state.
pub fn direct_state_coefficients(estimates: &[WeakValueEstimate]) -> Result<Ket> {
    let dim = estimates.len();
    assert!(dim >= 2, "need one estimate per basis index");
    let amps: Vec<C64> = estimates.iter().map(|e| e.w).collect();
    let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if norm_sqr <= 1e-24 {
        return Err(Error::NullElement);
    }
    let mut ket = Ket::new(amps).normalized()?;
    let overlap: C64 = ket.amp().iter().sum();
    if overlap.norm() > 1e-15 {
        let phase = overlap.conj() / overlap.norm();
        ket = ket.scaled(phase);
    }
    Ok(ket)
}

// ---------------------------------------------------------------------------
// CSV encoding of Dirac tables
// ---------------------------------------------------------------------------

const DIRAC_HEADER: [&str; 5] = ["outcome", "s_label", "i", "re_t", "im_t"];

pub fn write_dirac_csv<W: Write>(dists: &[DiracDistribution], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DIRAC_HEADER)?;
    for dist in dists {
        for s in 0..dist.dim {
            for i in 0..dist.dim {
                let t = dist.entry(s, i);
                w.write_record([
                    dist.outcome.to_string(),
                    format!("s{s}"),
                    i.to_string(),
                    crate::fmt_sig(t.re),
                    crate::fmt_sig(t.im),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
