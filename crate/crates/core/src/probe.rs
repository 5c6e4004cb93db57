//! Conventional detector tomography: probe a POVM with an informationally
//! complete state ensemble and reconstruct it by linear least squares in a
//! Hermitian operator basis, followed by the shared physicality adjustment.
//! Serves as the cross-validation oracle for the direct route.

use crate::error::{Error, Result};
use crate::linalg::{c64, hermitian_basis, hermitian_eigen, Ket, Operator};
use crate::povm::Povm;
use crate::random::derive_rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use std::io::Write;

const RANK_TOL: f64 = 1e-9;

/// Probe ensemble spanning the d²-dimensional Hermitian operator space.
#[derive(Clone, Debug)]
pub struct ProbeSet {
    dim: usize,
    states: Vec<Operator>,
    labels: Vec<String>,
}

impl ProbeSet {
    /// Validate that the states are informationally complete (their Gram
    /// matrix in the Hilbert-Schmidt inner product has rank d²).
    pub fn new(dim: usize, states: Vec<Operator>, labels: Vec<String>) -> Result<Self> {
        assert_eq!(states.len(), labels.len(), "one label per probe");
        for s in &states {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch(s.dim(), dim));
            }
        }
        let needed = dim * dim;
        let rank = hs_rank(&states)?;
        if rank < needed {
            return Err(Error::NotInformationallyComplete { rank, needed });
        }
        Ok(Self { dim, states, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Operator] {
        &self.states
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Rank of the span of Hermitian operators under ⟨A,B⟩ = Tr(A·B).
fn hs_rank(states: &[Operator]) -> Result<usize> {
    let m = states.len();
    let gram = Operator::from_fn(m, |j, k| c64(states[j].mul(&states[k]).trace().re, 0.0));
    let eig = hermitian_eigen(&gram)?;
    let max = eig.values[0].max(0.0);
    if max <= 0.0 {
        return Ok(0);
    }
    Ok(eig.values.iter().filter(|&&l| l > RANK_TOL * max).count())
}

/// Built-in qubit probe set: the six Pauli eigenstates
/// {|H⟩, |V⟩, |D⟩, |A⟩, |R⟩, |L⟩}.
pub fn probe_set(dim: usize) -> Result<ProbeSet> {
    if dim != 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let s = 1.0 / 2f64.sqrt();
    let kets = [
        ("H", Ket::basis_state(2, 0)),
        ("V", Ket::basis_state(2, 1)),
        ("D", Ket::new(vec![c64(s, 0.0), c64(s, 0.0)])),
        ("A", Ket::new(vec![c64(s, 0.0), c64(-s, 0.0)])),
        ("R", Ket::new(vec![c64(s, 0.0), c64(0.0, s)])),
        ("L", Ket::new(vec![c64(s, 0.0), c64(0.0, -s)])),
    ];
    let (labels, states): (Vec<String>, Vec<Operator>) = kets
        .into_iter()
        .map(|(l, k)| (l.to_string(), k.projector()))
        .unzip();
    ProbeSet::new(2, states, labels)
}

/// Outcome frequencies per probe. `trials = 0` marks exact probabilities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencyTable {
    /// f[probe][outcome] in [0, 1].
    pub f: Vec<Vec<f64>>,
    pub trials: u64,
}

/// Measure every probe with the POVM: exact probabilities Tr(Π_n ρ_j) for
/// `trials = 0`, otherwise one multinomial draw of `trials` shots per probe.
pub fn simulate_probe_frequencies(
    povm: &Povm,
    probes: &ProbeSet,
    trials: u64,
    seed: u64,
) -> Result<FrequencyTable> {
    if probes.dim() != povm.dim() {
        return Err(Error::DimensionMismatch(probes.dim(), povm.dim()));
    }
    let mut f = Vec::with_capacity(probes.len());
    for (j, rho) in probes.states().iter().enumerate() {
        let probs: Vec<f64> = povm
            .elements()
            .iter()
            .map(|e| e.mul(rho).trace().re.clamp(0.0, 1.0))
            .collect();
        if trials == 0 {
            f.push(probs);
            continue;
        }
        let mut rng = derive_rng(seed, &[0x70726f62, j as u64]);
        let mut counts = vec![0u64; probs.len()];
        let mut remaining_trials = trials;
        let mut remaining_prob: f64 = probs.iter().sum();
        for (n, &p) in probs.iter().enumerate() {
            if remaining_trials == 0 {
                break;
            }
            if n + 1 == probs.len() {
                counts[n] = remaining_trials;
                break;
            }
            let cond = if remaining_prob > 1e-15 {
                (p / remaining_prob).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let draw = Binomial::new(remaining_trials, cond)
                .expect("probability in range")
                .sample(&mut rng);
            counts[n] = draw;
            remaining_trials -= draw;
            remaining_prob -= p;
        }
        f.push(counts.iter().map(|&c| c as f64 / trials as f64).collect());
    }
    Ok(FrequencyTable { f, trials })
}

/// Per-outcome linear least squares in the Hermitian basis, then the joint
/// physicality adjustment shared with the direct route. Recovers exact
/// inputs to machine precision.
pub fn reconstruct_cqdt(f: &FrequencyTable, probes: &ProbeSet) -> Result<Povm> {
    let dim = probes.dim();
    let n_params = dim * dim;
    let m = probes.len();
    if f.f.len() != m {
        return Err(Error::DimensionMismatch(f.f.len(), m));
    }
    let n_outcomes = f.f[0].len();
    if n_outcomes < 2 {
        return Err(Error::InvalidPovm("need at least 2 outcomes".into()));
    }
    let basis = hermitian_basis(dim);
    // design matrix A[j][k] = Tr(B_k ρ_j), real by Hermiticity
    let design: Vec<Vec<f64>> = probes
        .states()
        .iter()
        .map(|rho| basis.iter().map(|b| b.mul(rho).trace().re).collect())
        .collect();

    // normal matrix and its eigen-based pseudoinverse, shared across outcomes
    let normal = Operator::from_fn(n_params, |p, q| {
        c64(design.iter().map(|row| row[p] * row[q]).sum(), 0.0)
    });
    let eig = hermitian_eigen(&normal)?;
    let max = eig.values[0].max(0.0);
    let min = *eig.values.last().expect("nonempty spectrum");
    if max <= 0.0 || min < RANK_TOL * max {
        return Err(Error::RankDeficient);
    }

    let mut raw_elements = Vec::with_capacity(n_outcomes);
    for n in 0..n_outcomes {
        let mut rhs = vec![0.0f64; n_params];
        for (row, frow) in design.iter().zip(&f.f) {
            for p in 0..n_params {
                rhs[p] += row[p] * frow[n];
            }
        }
        let mut x = vec![0.0f64; n_params];
        for (lam, vec) in eig.values.iter().zip(&eig.vectors) {
            let proj: f64 = (0..n_params).map(|p| vec.get(p).re * rhs[p]).sum();
            let gain = proj / lam;
            for p in 0..n_params {
                x[p] += gain * vec.get(p).re;
            }
        }
        let mut element = Operator::zeros(dim);
        for (coef, b) in x.iter().zip(&basis) {
            element = element.add(&b.scaled_re(*coef));
        }
        raw_elements.push(element.hermitian_part());
    }
    crate::direct::physicality_adjust(&raw_elements)
}

// ---------------------------------------------------------------------------
// CSV encoding of frequency tables
// ---------------------------------------------------------------------------

const FREQ_HEADER: [&str; 4] = ["probe_label", "outcome", "frequency", "trials"];

pub fn write_frequencies_csv<W: Write>(
    table: &FrequencyTable,
    probes: &ProbeSet,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FREQ_HEADER)?;
    for (label, row) in probes.labels().iter().zip(&table.f) {
        for (outcome, freq) in row.iter().enumerate() {
            w.write_record([
                label.clone(),
                outcome.to_string(),
                crate::fmt_sig(*freq),
                table.trials.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fidelity;
    use crate::povm::{fixture_projective, fixture_sic, Povm};
    use crate::random::{random_povm_elements, test_rng};
    use rand::Rng;

    #[test]
    fn pauli_probe_set_is_informationally_complete() {
        let probes = probe_set(2).unwrap();
        assert_eq!(probes.len(), 6);
        assert_eq!(hs_rank(probes.states()).unwrap(), 4);
    }

    #[test]
    fn four_state_subset_is_still_complete() {
        let probes = probe_set(2).unwrap();
        let subset: Vec<Operator> = [0usize, 1, 2, 4]
            .iter()
            .map(|&j| probes.states()[j].clone())
            .collect();
        let labels = vec!["H".into(), "V".into(), "D".into(), "R".into()];
        assert!(ProbeSet::new(2, subset, labels).is_ok());
    }

    #[test]
    fn two_state_subset_is_rejected() {
        let probes = probe_set(2).unwrap();
        let subset: Vec<Operator> = probes.states()[..2].to_vec();
        let labels = vec!["H".into(), "V".into()];
        let res = ProbeSet::new(2, subset, labels);
        assert!(matches!(
            res,
            Err(Error::NotInformationallyComplete { rank: 2, needed: 4 })
        ));
    }

    #[test]
    fn exact_frequencies_are_probabilities() {
        let povm = fixture_sic();
        let probes = probe_set(2).unwrap();
        let table = simulate_probe_frequencies(&povm, &probes, 0, 0).unwrap();
        // |H⟩ against Π₄ = 0.5|H⟩⟨H| gives probability 0.5
        assert!((table.f[0][3] - 0.5).abs() < 1e-12);
        for row in &table.f {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_frequencies_are_reproducible() {
        let povm = fixture_sic();
        let probes = probe_set(2).unwrap();
        let a = simulate_probe_frequencies(&povm, &probes, 10_000, 5).unwrap();
        let b = simulate_probe_frequencies(&povm, &probes, 10_000, 5).unwrap();
        assert_eq!(a.f, b.f);
        for row in &a.f {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_reconstruction_recovers_fixtures() {
        let probes = probe_set(2).unwrap();
        for povm in [fixture_sic(), fixture_projective(1).unwrap()] {
            let table = simulate_probe_frequencies(&povm, &probes, 0, 0).unwrap();
            let rec = reconstruct_cqdt(&table, &probes).unwrap();
            for (got, want) in rec.elements().iter().zip(povm.elements()) {
                assert!(got.sub(want).frobenius_norm() < 1e-10);
                let f = fidelity(got, want).unwrap();
                assert!(f >= 1.0 - 1e-10);
                assert!((got.trace().re - want.trace().re).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn noiseless_round_trip_on_random_povms() {
        let probes = probe_set(2).unwrap();
        let mut rng = test_rng(139);
        for _ in 0..20 {
            let n = rng.gen_range(2..=4usize);
            let elements = random_povm_elements(2, n, &mut rng);
            let labels = (0..n).map(|k| format!("e{k}")).collect();
            let povm = Povm::new(2, elements, labels).unwrap();
            let table = simulate_probe_frequencies(&povm, &probes, 0, 0).unwrap();
            let rec = reconstruct_cqdt(&table, &probes).unwrap();
            for (got, want) in rec.elements().iter().zip(povm.elements()) {
                assert!(got.sub(want).frobenius_norm() < 1e-9);
            }
        }
    }

    #[test]
    fn reconstruction_error_shrinks_with_trials() {
        let povm = fixture_sic();
        let probes = probe_set(2).unwrap();
        let mut med = |trials: u64| -> f64 {
            let mut errs: Vec<f64> = (0..20)
                .map(|seed| {
                    let table =
                        simulate_probe_frequencies(&povm, &probes, trials, seed).unwrap();
                    let rec = reconstruct_cqdt(&table, &probes).unwrap();
                    rec.elements()
                        .iter()
                        .zip(povm.elements())
                        .map(|(a, b)| a.sub(b).frobenius_norm())
                        .fold(0.0f64, f64::max)
                })
                .collect();
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            errs[10]
        };
        let coarse = med(1_000);
        let fine = med(100_000);
        assert!(
            fine < coarse,
            "median error should drop: {coarse} -> {fine}"
        );
    }

    #[test]
    fn reconstructed_sets_always_validate() {
        let povm = fixture_sic();
        let probes = probe_set(2).unwrap();
        for seed in 0..5 {
            let table = simulate_probe_frequencies(&povm, &probes, 2_000, seed).unwrap();
            let rec = reconstruct_cqdt(&table, &probes).unwrap();
            let report = rec.validate();
            assert!(report.psd_margin >= -1e-9);
            assert!(report.completeness_residual <= 1e-9);
        }
    }

    #[test]
    fn frequency_csv_has_one_row_per_cell() {
        let povm = fixture_sic();
        let probes = probe_set(2).unwrap();
        let table = simulate_probe_frequencies(&povm, &probes, 0, 0).unwrap();
        let mut buf = Vec::new();
        write_frequencies_csv(&table, &probes, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 6 * 4);
    }
}
