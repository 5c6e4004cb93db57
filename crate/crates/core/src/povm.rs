//! POVM data model, validity checking, retrodictive decomposition, and the
//! built-in measurement fixtures.

use crate::error::{Error, Result};
use crate::linalg::{c64, hermitian_eigen, Ket, Operator};
use crate::random::small_random_unitary;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const DEFAULT_TOL: f64 = 1e-9;

/// Ordered set of PSD operators summing to the identity.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "PovmRepr", into = "PovmRepr")]
pub struct Povm {
    dim: usize,
    elements: Vec<Operator>,
    labels: Vec<String>,
    metadata: BTreeMap<String, String>,
}

/// Diagnostic numbers for positivity and completeness.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Minimum eigenvalue over all elements.
    pub psd_margin: f64,
    /// Frobenius norm of ΣΠ_n − I.
    pub completeness_residual: f64,
}

/// Decomposition Π = η·ρ into detection efficiency and retrodicted state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Retrodiction {
    pub eta: f64,
    pub rho: Operator,
}

impl Povm {
    /// Build a POVM, checking positivity and completeness at `tol`.
    pub fn with_tolerance(
        dim: usize,
        elements: Vec<Operator>,
        labels: Vec<String>,
        tol: f64,
    ) -> Result<Self> {
        if elements.len() < 2 {
            return Err(Error::InvalidPovm(format!(
                "need at least 2 elements, got {}",
                elements.len()
            )));
        }
        if labels.len() != elements.len() {
            return Err(Error::InvalidPovm("label count must match elements".into()));
        }
        for (n, e) in elements.iter().enumerate() {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch(e.dim(), dim));
            }
            if !e.is_hermitian(1e-9) {
                return Err(Error::InvalidPovm(format!("element {n} is not Hermitian")));
            }
        }
        let report = validation_report(dim, &elements)?;
        if report.psd_margin < -tol {
            return Err(Error::InvalidPovm(format!(
                "PSD margin {:.3e} below -{tol:.1e}",
                report.psd_margin
            )));
        }
        if report.completeness_residual > tol {
            return Err(Error::InvalidPovm(format!(
                "completeness residual {:.3e} above {tol:.1e}",
                report.completeness_residual
            )));
        }
        Ok(Self {
            dim,
            elements,
            labels,
            metadata: BTreeMap::new(),
        })
    }

    pub fn new(dim: usize, elements: Vec<Operator>, labels: Vec<String>) -> Result<Self> {
        Self::with_tolerance(dim, elements, labels, DEFAULT_TOL)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Operator] {
        &self.elements
    }

    pub fn element(&self, n: usize) -> &Operator {
        &self.elements[n]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Self {
        self.metadata = metadata;
        self
    }

    /// Positivity margin and completeness residual of this set.
    pub fn validate(&self) -> ValidationReport {
        validation_report(self.dim, &self.elements).expect("elements validated at construction")
    }

    /// Retrodicted states and efficiencies for every element.
    pub fn retrodictions(&self) -> Result<Vec<Retrodiction>> {
        self.elements.iter().map(retrodict).collect()
    }

    /// Same elements under new labels.
    pub fn relabeled(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.elements.len() {
            return Err(Error::InvalidPovm("label count must match elements".into()));
        }
        self.labels = labels;
        Ok(self)
    }
}

/// Diagnostics over a raw element list (no validity requirement).
pub fn validation_report(dim: usize, elements: &[Operator]) -> Result<ValidationReport> {
    let mut margin = f64::INFINITY;
    let mut sum = Operator::zeros(dim);
    for e in elements {
        let eig = hermitian_eigen(&e.hermitian_part())?;
        margin = margin.min(*eig.values.last().expect("nonempty spectrum"));
        sum = sum.add(e);
    }
    let residual = sum.sub(&Operator::identity(dim)).frobenius_norm();
    Ok(ValidationReport {
        psd_margin: margin,
        completeness_residual: residual,
    })
}

/// Split an element into η = Tr(Π) and ρ = Π/η.
pub fn retrodict(element: &Operator) -> Result<Retrodiction> {
    let eta = element.trace().re;
    if eta <= 1e-15 {
        return Err(Error::ZeroElement);
    }
    Ok(Retrodiction {
        eta,
        rho: element.scaled_re(1.0 / eta),
    })
}

/// |ξ⟩ = a|H⟩ + b e^{iφ}|V⟩ and its orthogonal complement
/// |ξ⊥⟩ = b|H⟩ − a e^{iφ}|V⟩.
fn xi_pair(a: f64, b: f64, phi: f64) -> (Ket, Ket) {
    let phase = c64(phi.cos(), phi.sin());
    let xi = Ket::new(vec![c64(a, 0.0), phase * b]);
    let xi_perp = Ket::new(vec![c64(b, 0.0), phase * (-a)]);
    (xi, xi_perp)
}

/// One of the four built-in projective measurements {|ξ_n⟩⟨ξ_n|, |ξ_n⊥⟩⟨ξ_n⊥|}.
///
/// Retrodicted states use a = 1/√3, b = √(2/3) with phases π/3, −π/3, 0 for
/// n = 1, 2, 3 and the computational pair for n = 4. The nominal amplitude
/// b = 2/√3 quoted for these configurations violates normalization, so the
/// unique normalized amplitude with the same a is used; the nominal values
/// are kept in the fixture metadata.
pub fn fixture_projective(n: usize) -> Result<Povm> {
    if !(1..=4).contains(&n) {
        return Err(Error::FixtureOutOfRange(n));
    }
    let a3 = 1.0 / 3f64.sqrt();
    let b3 = (2f64 / 3.0).sqrt();
    let (a, b, phi) = match n {
        1 => (a3, b3, PI / 3.0),
        2 => (a3, b3, -PI / 3.0),
        3 => (a3, b3, 0.0),
        _ => (1.0, 0.0, 0.0),
    };
    let (xi, xi_perp) = xi_pair(a, b, phi);
    let povm = Povm::new(
        2,
        vec![xi.projector(), xi_perp.projector()],
        vec![format!("xi{n}"), format!("xi{n}_perp")],
    )?;
    let mut metadata = BTreeMap::new();
    metadata.insert(
        "parameterization".into(),
        "|xi> = a|H> + b e^{i phi}|V>, |xi_perp> = b|H> - a e^{i phi}|V>".into(),
    );
    metadata.insert("a".into(), format!("{a:.15}"));
    metadata.insert("b".into(), format!("{b:.15}"));
    metadata.insert("phi_rad".into(), format!("{phi:.15}"));
    if n < 4 {
        metadata.insert("nominal_2a".into(), "2/sqrt(3)".into());
        metadata.insert("nominal_b".into(), "2/sqrt(3)".into());
        metadata.insert(
            "normalization_note".into(),
            "nominal b violates a^2 + b^2 = 1; b rescaled to sqrt(2/3)".into(),
        );
    }
    Ok(povm.with_metadata(metadata))
}

/// Qubit tetrahedron SIC POVM: Π_n = 0.5 |ξ_n⟩⟨ξ_n| with |ξ₄⟩ = |H⟩ and
/// |ξ_n⟩ = (1/√3)|H⟩ + √(2/3) e^{iθ_n}|V⟩, θ_n ∈ {0, 2π/3, 4π/3}, so every
/// pairwise overlap satisfies |⟨ξ_m|ξ_n⟩|² = 1/3.
pub fn fixture_sic() -> Povm {
    let a = 1.0 / 3f64.sqrt();
    let b = (2f64 / 3.0).sqrt();
    let mut kets: Vec<Ket> = (0..3)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / 3.0;
            Ket::new(vec![c64(a, 0.0), c64(theta.cos(), theta.sin()) * b])
        })
        .collect();
    kets.push(Ket::basis_state(2, 0));
    let elements = kets.iter().map(|k| k.projector().scaled_re(0.5)).collect();
    let labels = (1..=4).map(|n| format!("xi{n}")).collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("eta".into(), "0.5".into());
    metadata.insert(
        "tetrahedron_phases".into(),
        "theta_n in {0, 2pi/3, 4pi/3}; |xi4> = |H>".into(),
    );
    Povm::new(2, elements, labels)
        .expect("SIC fixture is physical")
        .with_metadata(metadata)
}

/// Built-in fixture selector used by the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureKind {
    Proj1,
    Proj2,
    Proj3,
    Proj4,
    Sic,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 5] = [
        FixtureKind::Proj1,
        FixtureKind::Proj2,
        FixtureKind::Proj3,
        FixtureKind::Proj4,
        FixtureKind::Sic,
    ];

    pub fn build(self) -> Povm {
        match self {
            FixtureKind::Proj1 => fixture_projective(1).expect("in range"),
            FixtureKind::Proj2 => fixture_projective(2).expect("in range"),
            FixtureKind::Proj3 => fixture_projective(3).expect("in range"),
            FixtureKind::Proj4 => fixture_projective(4).expect("in range"),
            FixtureKind::Sic => fixture_sic(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::Proj1 => "proj1",
            FixtureKind::Proj2 => "proj2",
            FixtureKind::Proj3 => "proj3",
            FixtureKind::Proj4 => "proj4",
            FixtureKind::Sic => "sic",
        }
    }
}

impl std::str::FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proj1" => Ok(FixtureKind::Proj1),
            "proj2" => Ok(FixtureKind::Proj2),
            "proj3" => Ok(FixtureKind::Proj3),
            "proj4" => Ok(FixtureKind::Proj4),
            "sic" => Ok(FixtureKind::Sic),
            other => Err(Error::InvalidPovm(format!(
                "unknown fixture '{other}' (expected proj1..proj4 or sic)"
            ))),
        }
    }
}

impl std::fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Emulate an imperfect apparatus: mix each element toward Tr(Π_n)·I/d with
/// weight `depol`, conjugate it by its own small random unitary (angle at
/// most `rot`), then repair completeness with the shared physicality
/// adjustment. Deterministic for a fixed seed.
pub fn perturb(povm: &Povm, depol: f64, rot: f64, seed: u64) -> Result<Povm> {
    if !(0.0..=1.0).contains(&depol) {
        return Err(Error::InvalidDepolarization(depol));
    }
    if depol == 0.0 && rot == 0.0 {
        return Ok(povm.clone());
    }
    let d = povm.dim();
    let mut rng: ChaCha8Rng = crate::random::derive_rng(seed, &[0x706f766d]);
    let id = Operator::identity(d);
    let raw: Vec<Operator> = povm
        .elements()
        .iter()
        .map(|e| {
            let tr = e.trace().re;
            let mixed = e
                .scaled_re(1.0 - depol)
                .add(&id.scaled_re(depol * tr / d as f64));
            let u = small_random_unitary(d, rot, &mut rng);
            u.mul(&mixed).mul(&u.adjoint()).hermitian_part()
        })
        .collect();
    let adjusted = crate::direct::physicality_adjust(&raw)?;
    Ok(Povm {
        dim: d,
        elements: adjusted.elements,
        labels: povm.labels.clone(),
        metadata: povm.metadata.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct PovmRepr {
    dim: usize,
    elements: Vec<Operator>,
    labels: Vec<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

impl From<Povm> for PovmRepr {
    fn from(p: Povm) -> Self {
        PovmRepr {
            dim: p.dim,
            elements: p.elements,
            labels: p.labels,
            metadata: p.metadata,
        }
    }
}

impl TryFrom<PovmRepr> for Povm {
    type Error = Error;

    fn try_from(r: PovmRepr) -> Result<Self> {
        Ok(Povm::new(r.dim, r.elements, r.labels)?.with_metadata(r.metadata))
    }
}
