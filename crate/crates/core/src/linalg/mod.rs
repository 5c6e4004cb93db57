//! Dense complex linear algebra over small dimensions, plus the quantum
//! metrics and basis constructions the tomography routines are built on.
//!
//! Everything here is immutable after construction and safe to share across
//! threads; operations are pure functions. Matrices are stored row-major.

mod basis;
mod eigen;
mod metrics;

pub use basis::{hermitian_basis, mub_pair, BasisPair};
pub use eigen::{hermitian_eigen, hermitian_map, HermitianEigen};
pub use metrics::{fidelity, psd_sqrt, purity};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Complex scalar used throughout: an explicit (re, im) pair in f64.
pub type C64 = num_complex::Complex<f64>;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Complex amplitude vector |ψ⟩ of dimension ≥ 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KetRepr", into = "KetRepr")]
pub struct Ket {
    amp: Vec<C64>,
}

impl Ket {
    pub fn new(amp: Vec<C64>) -> Self {
        assert!(amp.len() >= 2, "kets need dimension >= 2");
        assert!(
            amp.iter().all(|a| a.re.is_finite() && a.im.is_finite()),
            "ket amplitudes must be finite"
        );
        Self { amp }
    }

    pub fn from_reals(amp: &[f64]) -> Self {
        Self::new(amp.iter().map(|&r| c64(r, 0.0)).collect())
    }

    /// Computational basis state |k⟩.
    pub fn basis_state(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index {k} out of range for dim {dim}");
        let mut amp = vec![C64::default(); dim];
        amp[k] = c64(1.0, 0.0);
        Self::new(amp)
    }

    /// Uniform superposition (1/√d) Σ_k |k⟩.
    pub fn uniform(dim: usize) -> Self {
        let a = 1.0 / (dim as f64).sqrt();
        Self::new(vec![c64(a, 0.0); dim])
    }

    pub fn dim(&self) -> usize {
        self.amp.len()
    }

    pub fn amp(&self) -> &[C64] {
        &self.amp
    }

    pub fn get(&self, k: usize) -> C64 {
        self.amp[k]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<Ket> {
        let n = self.norm();
        if n <= 1e-300 {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scaled(c64(1.0 / n, 0.0)))
    }

    /// ⟨self|rhs⟩.
    pub fn inner(&self, rhs: &Ket) -> C64 {
        assert_eq!(self.dim(), rhs.dim(), "inner product dimension mismatch");
        self.amp
            .iter()
            .zip(&rhs.amp)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// |self⟩⟨rhs|.
    pub fn outer(&self, rhs: &Ket) -> Operator {
        let (r, c) = (self.dim(), rhs.dim());
        assert_eq!(r, c, "outer product dimension mismatch");
        Operator::from_fn(r, |j, k| self.amp[j] * rhs.amp[k].conj())
    }

    /// |self⟩⟨self|.
    pub fn projector(&self) -> Operator {
        self.outer(self)
    }

    pub fn tensor(&self, rhs: &Ket) -> Ket {
        let mut amp = Vec::with_capacity(self.dim() * rhs.dim());
        for a in &self.amp {
            for b in &rhs.amp {
                amp.push(a * b);
            }
        }
        Ket::new(amp)
    }

    pub fn scaled(&self, z: C64) -> Ket {
        Ket::new(self.amp.iter().map(|a| a * z).collect())
    }

    pub fn add(&self, rhs: &Ket) -> Ket {
        assert_eq!(self.dim(), rhs.dim(), "ket addition dimension mismatch");
        Ket::new(self.amp.iter().zip(&rhs.amp).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, rhs: &Ket) -> Ket {
        assert_eq!(self.dim(), rhs.dim(), "ket subtraction dimension mismatch");
        Ket::new(self.amp.iter().zip(&rhs.amp).map(|(a, b)| a - b).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct KetRepr {
    dim: usize,
    amp: Vec<[f64; 2]>,
    normalized: bool,
}

impl From<Ket> for KetRepr {
    fn from(k: Ket) -> Self {
        let normalized = k.is_normalized(1e-12);
        KetRepr {
            dim: k.dim(),
            amp: k.amp.iter().map(|a| [a.re, a.im]).collect(),
            normalized,
        }
    }
}

impl TryFrom<KetRepr> for Ket {
    type Error = Error;

    fn try_from(r: KetRepr) -> Result<Self> {
        if r.dim < 2 {
            return Err(Error::InvalidDimension(r.dim));
        }
        if r.amp.len() != r.dim {
            return Err(Error::DimensionMismatch(r.amp.len(), r.dim));
        }
        let amp: Vec<C64> = r.amp.iter().map(|&[re, im]| c64(re, im)).collect();
        if !amp.iter().all(|a| a.re.is_finite() && a.im.is_finite()) {
            return Err(Error::Serialization("non-finite ket amplitude".into()));
        }
        let ket = Ket { amp };
        if r.normalized && !ket.is_normalized(1e-12) {
            return Err(Error::Serialization(format!(
                "ket flagged normalized but |ψ|² = {:.15}",
                ket.norm_sqr()
            )));
        }
        Ok(ket)
    }
}

/// Dense d×d complex matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorRepr", into = "OperatorRepr")]
pub struct Operator {
    dim: usize,
    data: Vec<C64>,
}

impl Operator {
    pub fn new(dim: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), dim * dim, "operator data length must be dim²");
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(dim, vec![C64::default(); dim * dim])
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |r, c| if r == c { c64(1.0, 0.0) } else { C64::default() })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self::new(dim, data)
    }

    pub fn diag(entries: &[f64]) -> Self {
        Self::from_fn(entries.len(), |r, c| {
            if r == c {
                c64(entries[r], 0.0)
            } else {
                C64::default()
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.dim + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.dim + c] = v;
    }

    pub fn mul(&self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "matrix product dimension mismatch");
        let d = self.dim;
        let mut out = Operator::zeros(d);
        for r in 0..d {
            for k in 0..d {
                let a = self.get(r, k);
                if a == C64::default() {
                    continue;
                }
                for c in 0..d {
                    out.data[r * d + c] += a * rhs.get(k, c);
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "matrix sum dimension mismatch");
        Operator::new(
            self.dim,
            self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        )
    }

    pub fn sub(&self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "matrix difference dimension mismatch");
        Operator::new(
            self.dim,
            self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        )
    }

    pub fn scaled(&self, z: C64) -> Operator {
        Operator::new(self.dim, self.data.iter().map(|a| a * z).collect())
    }

    pub fn scaled_re(&self, x: f64) -> Operator {
        self.scaled(c64(x, 0.0))
    }

    pub fn adjoint(&self) -> Operator {
        Operator::from_fn(self.dim, |r, c| self.get(c, r).conj())
    }

    /// Closest Hermitian matrix in Frobenius norm, (A + A†)/2.
    pub fn hermitian_part(&self) -> Operator {
        Operator::from_fn(self.dim, |r, c| {
            (self.get(r, c) + self.get(c, r).conj()) * 0.5
        })
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|k| self.get(k, k)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// A|ψ⟩.
    pub fn apply(&self, ket: &Ket) -> Ket {
        assert_eq!(self.dim, ket.dim(), "operator application dimension mismatch");
        let amp = (0..self.dim)
            .map(|r| {
                (0..self.dim)
                    .map(|c| self.get(r, c) * ket.get(c))
                    .sum::<C64>()
            })
            .collect();
        Ket::new(amp)
    }

    /// ⟨ψ|A|ψ⟩.
    pub fn expectation(&self, ket: &Ket) -> C64 {
        ket.inner(&self.apply(ket))
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.sub(&self.adjoint()).frobenius_norm() / 2.0
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.sub(&self.adjoint()).frobenius_norm() <= tol * (1.0 + self.frobenius_norm())
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        if !self.is_hermitian(1e-10) {
            return false;
        }
        match hermitian_eigen(&self.hermitian_part()) {
            Ok(e) => e.values.iter().all(|&v| v >= -tol),
            Err(_) => false,
        }
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let gram = self.adjoint().mul(self);
        gram.sub(&Operator::identity(self.dim)).frobenius_norm() <= tol * (self.dim as f64)
    }

    /// Minimum eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let e = hermitian_eigen(&self.hermitian_part())?;
        Ok(*e.values.last().expect("eigenvalues nonempty"))
    }
}

impl std::ops::Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator::mul(self, rhs)
    }
}

impl std::ops::Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator::add(self, rhs)
    }
}

impl std::ops::Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator::sub(self, rhs)
    }
}

#[derive(Serialize, Deserialize)]
struct OperatorRepr {
    dim: usize,
    entries: Vec<Vec<[f64; 2]>>,
    hermitian: bool,
}

impl From<Operator> for OperatorRepr {
    fn from(op: Operator) -> Self {
        let hermitian = op.is_hermitian(1e-10);
        let entries = (0..op.dim)
            .map(|r| {
                (0..op.dim)
                    .map(|c| {
                        let v = op.get(r, c);
                        [v.re, v.im]
                    })
                    .collect()
            })
            .collect();
        OperatorRepr {
            dim: op.dim,
            entries,
            hermitian,
        }
    }
}

impl TryFrom<OperatorRepr> for Operator {
    type Error = Error;

    fn try_from(r: OperatorRepr) -> Result<Self> {
        if r.entries.len() != r.dim || r.entries.iter().any(|row| row.len() != r.dim) {
            return Err(Error::Serialization("operator entries are not dim×dim".into()));
        }
        let mut data = Vec::with_capacity(r.dim * r.dim);
        for row in &r.entries {
            for &[re, im] in row {
                if !re.is_finite() || !im.is_finite() {
                    return Err(Error::Serialization("non-finite operator entry".into()));
                }
                data.push(c64(re, im));
            }
        }
        let op = Operator::new(r.dim, data);
        if r.hermitian && !op.is_hermitian(1e-10) {
            return Err(Error::Serialization(
                "operator flagged Hermitian but is not".into(),
            ));
        }
        Ok(op)
    }
}

/// Kronecker product a ⊗ b, first factor major:
/// entry (d_b·j + l, d_b·k + m) = a_{jk} b_{lm}.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    let (da, db) = (a.dim(), b.dim());
    let d = da * db;
    Operator::from_fn(d, |r, c| {
        let (j, l) = (r / db, r % db);
        let (k, m) = (c / db, c % db);
        a.get(j, k) * b.get(l, m)
    })
}

/// Partial trace over the first tensor factor of a (da·db)-dimensional
/// operator laid out first-factor major; returns the db×db reduced operator.
pub fn trace_out_first(joint: &Operator, da: usize, db: usize) -> Operator {
    assert_eq!(joint.dim(), da * db, "joint dimension mismatch");
    Operator::from_fn(db, |r, c| {
        (0..da).map(|j| joint.get(j * db + r, j * db + c)).sum()
    })
}
