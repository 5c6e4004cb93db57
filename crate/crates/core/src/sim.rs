//! Exact forward simulation of pre-selection, projector–meter coupling,
//! post-selection by a POVM, and meter readout, plus finite-shot sampling.
//!
//! Conventions (everything downstream is calibrated to these):
//! the meter is a qubit starting in |0⟩_m; the coupling unitary is
//! U = exp(−i g π̂_i ⊗ M̂) with M̂ = i(|0⟩_m⟨1| − |1⟩_m⟨0|), which acts as
//! identity off the projector and rotates the meter by
//! R(g) = [[cos g, sin g], [−sin g, cos g]] on it, so |0⟩_m goes to
//! cos g|0⟩_m − sin g|1⟩_m.

use crate::error::{Error, Result};
use crate::linalg::{c64, tensor, trace_out_first, Ket, Operator};
use crate::povm::Povm;
use crate::random::derive_rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

/// Coupling strength and which basis projector the meter couples to.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CouplingConfig {
    /// Coupling angle in radians.
    pub g: f64,
    /// Index of π̂_i = |i⟩⟨i| in the computational basis.
    pub projector_index: usize,
    /// System dimension.
    pub dim: usize,
}

impl CouplingConfig {
    pub fn new(g: f64, projector_index: usize, dim: usize) -> Self {
        assert!(g.is_finite(), "coupling strength must be finite");
        assert!(projector_index < dim, "projector index out of range");
        Self {
            g,
            projector_index,
            dim,
        }
    }
}

/// Meter readout basis. `Z` distinguishes |0⟩/|1⟩; `X` the σ̂₁ = σ_x
/// eigenstates; `Y` the σ̂₂ = i(|0⟩⟨1| − |1⟩⟨0|) eigenstates. Result r = 0
/// always tags the +1 eigenstate, so noiseless frequencies reproduce the
/// exact meter statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeterBasis {
    Z,
    X,
    Y,
}

impl MeterBasis {
    pub const ALL: [MeterBasis; 3] = [MeterBasis::Z, MeterBasis::X, MeterBasis::Y];

    /// Measurement kets [r=0, r=1].
    pub fn kets(self) -> [Ket; 2] {
        let s = 1.0 / 2f64.sqrt();
        match self {
            MeterBasis::Z => [Ket::basis_state(2, 0), Ket::basis_state(2, 1)],
            MeterBasis::X => [
                Ket::new(vec![c64(s, 0.0), c64(s, 0.0)]),
                Ket::new(vec![c64(s, 0.0), c64(-s, 0.0)]),
            ],
            MeterBasis::Y => [
                Ket::new(vec![c64(s, 0.0), c64(0.0, -s)]),
                Ket::new(vec![c64(s, 0.0), c64(0.0, s)]),
            ],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeterBasis::Z => "Z",
            MeterBasis::X => "X",
            MeterBasis::Y => "Y",
        }
    }

    fn index(self) -> u64 {
        match self {
            MeterBasis::Z => 0,
            MeterBasis::X => 1,
            MeterBasis::Y => 2,
        }
    }
}

impl std::str::FromStr for MeterBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Z" | "z" => Ok(MeterBasis::Z),
            "X" | "x" => Ok(MeterBasis::X),
            "Y" | "y" => Ok(MeterBasis::Y),
            other => Err(Error::Serialization(format!("unknown meter basis '{other}'"))),
        }
    }
}

/// Exact conditional meter statistics for one (pre-state, coupling, element).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MeterStats {
    /// Post-selection success probability P.
    pub success_prob: f64,
    /// ⟨0|ρ'_m|0⟩ of the conditional meter state.
    pub p0: f64,
    /// Tr(ρ'_m σ̂₁).
    pub e1: f64,
    /// Tr(ρ'_m σ̂₂).
    pub e2: f64,
}

/// Counts for one (pre-state, projector, coupling, meter basis) setting,
/// keyed by (outcome n, meter result r) and split over `trials` shots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingRecord {
    pub s_label: String,
    pub s_index: usize,
    pub i: usize,
    /// Coupling angle in radians.
    pub g: f64,
    pub basis: MeterBasis,
    pub counts: BTreeMap<(usize, u8), u64>,
    pub trials: u64,
}

impl SettingRecord {
    pub fn count(&self, outcome: usize, r: u8) -> u64 {
        self.counts.get(&(outcome, r)).copied().unwrap_or(0)
    }

    pub fn successes(&self, outcome: usize) -> u64 {
        self.count(outcome, 0) + self.count(outcome, 1)
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// U = exp(−i g π̂_i ⊗ M̂) on the (d·2)-dimensional joint space,
/// system-major ordering.
pub fn coupling_unitary(cfg: &CouplingConfig) -> Operator {
    let proj = Ket::basis_state(cfg.dim, cfg.projector_index).projector();
    let rest = Operator::identity(cfg.dim).sub(&proj);
    let (cg, sg) = (cfg.g.cos(), cfg.g.sin());
    let rot = Operator::new(
        2,
        vec![c64(cg, 0.0), c64(sg, 0.0), c64(-sg, 0.0), c64(cg, 0.0)],
    );
    tensor(&rest, &Operator::identity(2)).add(&tensor(&proj, &rot))
}

/// Success probability and conditional meter state observables after
/// post-selecting the coupled joint state on `element`.
pub fn post_selected_meter(s: &Ket, cfg: &CouplingConfig, element: &Operator) -> Result<MeterStats> {
    assert_eq!(s.dim(), cfg.dim, "pre-state dimension mismatch");
    assert_eq!(element.dim(), cfg.dim, "element dimension mismatch");
    let u = coupling_unitary(cfg);
    let joint0 = tensor(&s.projector(), &Ket::basis_state(2, 0).projector());
    let joint = u.mul(&joint0).mul(&u.adjoint());
    let selected = tensor(element, &Operator::identity(2)).mul(&joint);
    let p = selected.trace().re;
    if p <= 1e-15 {
        return Err(Error::PostSelectionVanishes);
    }
    let meter = trace_out_first(&selected, cfg.dim, 2).scaled_re(1.0 / p);
    let m01 = meter.get(0, 1);
    Ok(MeterStats {
        success_prob: p,
        p0: meter.get(0, 0).re,
        e1: 2.0 * m01.re,
        e2: 2.0 * m01.im,
    })
}

/// Exact joint probabilities p(n, r) = Tr[(Π_n ⊗ |r_B⟩⟨r_B|)·joint] for one
/// setting, in (outcome-major, meter-result-minor) order.
pub fn joint_probabilities(
    povm: &Povm,
    s: &Ket,
    cfg: &CouplingConfig,
    basis: MeterBasis,
) -> Result<Vec<f64>> {
    assert_eq!(povm.dim(), cfg.dim, "POVM dimension mismatch");
    let u = coupling_unitary(cfg);
    let joint0 = tensor(&s.projector(), &Ket::basis_state(2, 0).projector());
    let joint = u.mul(&joint0).mul(&u.adjoint());
    let meter_projs: Vec<Operator> = basis.kets().iter().map(Ket::projector).collect();
    let mut probs = Vec::with_capacity(povm.len() * 2);
    for element in povm.elements() {
        for mp in &meter_projs {
            let p = tensor(element, mp).mul(&joint).trace().re;
            probs.push(p.clamp(0.0, 1.0));
        }
    }
    let total: f64 = probs.iter().sum();
    if total < 1.0 - 1e-9 {
        return Err(Error::IncompleteOutcomes(total));
    }
    Ok(probs)
}

/// Multinomial draw of `trials` shots over the joint (outcome, meter result)
/// distribution of one setting. Reproducible for a fixed seed.
pub fn sample_counts(
    povm: &Povm,
    s: &Ket,
    s_index: usize,
    s_label: &str,
    cfg: &CouplingConfig,
    basis: MeterBasis,
    trials: u64,
    seed: u64,
) -> Result<SettingRecord> {
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    let probs = joint_probabilities(povm, s, cfg, basis)?;
    let mut rng = derive_rng(
        seed,
        &[
            s_index as u64,
            cfg.projector_index as u64,
            cfg.g.to_bits(),
            basis.index(),
        ],
    );
    // sequential conditional binomials realize an exact multinomial draw
    let mut counts = BTreeMap::new();
    let mut remaining_trials = trials;
    let mut remaining_prob: f64 = probs.iter().sum();
    for (flat, &p) in probs.iter().enumerate() {
        if remaining_trials == 0 {
            break;
        }
        let cond = if remaining_prob > 1e-15 {
            (p / remaining_prob).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let draw = if flat + 1 == probs.len() {
            remaining_trials
        } else {
            Binomial::new(remaining_trials, cond)
                .expect("probability in range")
                .sample(&mut rng)
        };
        let outcome = flat / 2;
        let r = (flat % 2) as u8;
        if draw > 0 {
            counts.insert((outcome, r), draw);
        }
        remaining_trials -= draw;
        remaining_prob -= p;
    }
    Ok(SettingRecord {
        s_label: s_label.to_string(),
        s_index,
        i: cfg.projector_index,
        g: cfg.g,
        basis,
        counts,
        trials,
    })
}

/// Fractional tallies per meter basis for one outcome:
/// (successes, count(r=0), count(r=1), trials) as floats.
#[derive(Clone, Copy, Debug, Default)]
struct BasisTally {
    c0: f64,
    c1: f64,
    trials: f64,
}

fn basis_tally(record: &SettingRecord, outcome: usize) -> BasisTally {
    BasisTally {
        c0: record.count(outcome, 0) as f64,
        c1: record.count(outcome, 1) as f64,
        trials: record.trials as f64,
    }
}

/// Meter statistics for one outcome estimated from the Z/X/Y records of a
/// single (s, i, g) setting.
pub fn stats_from_counts(records: &[&SettingRecord], outcome: usize) -> Result<MeterStats> {
    let mut z = None;
    let mut x = None;
    let mut y = None;
    for rec in records {
        match rec.basis {
            MeterBasis::Z => z = Some(basis_tally(rec, outcome)),
            MeterBasis::X => x = Some(basis_tally(rec, outcome)),
            MeterBasis::Y => y = Some(basis_tally(rec, outcome)),
        }
    }
    let missing = |name: &str| Error::NoSuccesses {
        outcome,
        basis: name.into(),
    };
    let z = z.ok_or_else(|| missing("Z"))?;
    let x = x.ok_or_else(|| missing("X"))?;
    let y = y.ok_or_else(|| missing("Y"))?;
    stats_from_tallies(&z, &x, &y, outcome)
}

fn stats_from_tallies(z: &BasisTally, x: &BasisTally, y: &BasisTally, outcome: usize) -> Result<MeterStats> {
    for (tally, name) in [(z, "Z"), (x, "X"), (y, "Y")] {
        if tally.c0 + tally.c1 <= 0.0 {
            return Err(Error::NoSuccesses {
                outcome,
                basis: name.into(),
            });
        }
    }
    let succ = |t: &BasisTally| t.c0 + t.c1;
    let p = (succ(z) + succ(x) + succ(y)) / (z.trials + x.trials + y.trials);
    Ok(MeterStats {
        success_prob: p,
        p0: z.c0 / succ(z),
        e1: 2.0 * x.c0 / succ(x) - 1.0,
        e2: 2.0 * y.c0 / succ(y) - 1.0,
    })
}

/// One simulated experiment grid: all (pre-state, projector, coupling,
/// basis) settings for a POVM, fanned out in parallel. Each setting draws
/// from an independent generator derived from (seed, s, i, g, basis), so the
/// result is deterministic regardless of scheduling.
pub fn simulate_grid(
    povm: &Povm,
    pre_states: &[(usize, String, Ket)],
    g_grid: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<SettingRecord>> {
    let dim = povm.dim();
    let mut settings = Vec::new();
    for (s_index, s_label, s) in pre_states {
        for i in 0..dim {
            for &g in g_grid {
                for basis in MeterBasis::ALL {
                    settings.push((*s_index, s_label.clone(), s.clone(), i, g, basis));
                }
            }
        }
    }
    settings
        .into_par_iter()
        .map(|(s_index, s_label, s, i, g, basis)| {
            let cfg = CouplingConfig::new(g, i, dim);
            sample_counts(povm, &s, s_index, &s_label, &cfg, basis, trials, seed)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV encoding of setting records
// ---------------------------------------------------------------------------

const RECORD_HEADER: [&str; 8] = [
    "s_label",
    "i",
    "g_degrees",
    "basis",
    "outcome",
    "meter_result",
    "count",
    "trials",
];

/// Write records as CSV rows, one per (setting, outcome, meter result).
pub fn write_records_csv<W: Write>(records: &[SettingRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for rec in records {
        for ((outcome, r), count) in &rec.counts {
            w.write_record([
                rec.s_label.as_str(),
                &rec.i.to_string(),
                &crate::fmt_sig(rec.g.to_degrees()),
                rec.basis.name(),
                &outcome.to_string(),
                &r.to_string(),
                &count.to_string(),
                &rec.trials.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read records back from CSV, regrouping rows into settings.
pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<SettingRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut grouped: BTreeMap<(String, usize, String, MeterBasis), SettingRecord> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: RecordRow = row?;
        let basis: MeterBasis = row.basis.parse()?;
        let key = (row.s_label.clone(), row.i, row.g_degrees.clone(), basis);
        let g = row
            .g_degrees
            .parse::<f64>()
            .map_err(|e| Error::Serialization(format!("bad g_degrees: {e}")))?
            .to_radians();
        let s_index = row
            .s_label
            .strip_prefix('s')
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| Error::Serialization(format!("bad s_label '{}'", row.s_label)))?;
        let entry = grouped.entry(key).or_insert_with(|| SettingRecord {
            s_label: row.s_label.clone(),
            s_index,
            i: row.i,
            g,
            basis,
            counts: BTreeMap::new(),
            trials: row.trials,
        });
        if row.count > 0 {
            *entry.counts.entry((row.outcome, row.meter_result)).or_insert(0) += row.count;
        }
    }
    Ok(grouped.into_values().collect())
}

#[derive(Deserialize)]
struct RecordRow {
    s_label: String,
    i: usize,
    g_degrees: String,
    basis: String,
    outcome: usize,
    meter_result: u8,
    count: u64,
    trials: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigen, purity, C64};
    use crate::povm::{fixture_projective, fixture_sic};
    use crate::random::{random_ket, test_rng};
    use rand::Rng;

    fn diag_ket() -> Ket {
        Ket::uniform(2)
    }

    #[test]
    fn zero_coupling_gives_identity() {
        let u = coupling_unitary(&CouplingConfig::new(0.0, 0, 2));
        assert!(u.sub(&Operator::identity(4)).frobenius_norm() < 1e-15);
    }

    #[test]
    fn coupling_is_unitary_for_random_settings() {
        let mut rng = test_rng(53);
        for _ in 0..20 {
            let dim = rng.gen_range(2..=4);
            let i = rng.gen_range(0..dim);
            let g: f64 = rng.gen_range(-1.5..1.5);
            let u = coupling_unitary(&CouplingConfig::new(g, i, dim));
            assert!(u.is_unitary(1e-12));
        }
    }

    #[test]
    fn coupled_branch_rotates_meter() {
        let g: f64 = 0.31;
        let cfg = CouplingConfig::new(g, 1, 3);
        let u = coupling_unitary(&cfg);
        let joint_in = Ket::basis_state(3, 1).tensor(&Ket::basis_state(2, 0));
        let out = u.apply(&joint_in);
        let expect = Ket::basis_state(3, 1).tensor(&Ket::new(vec![
            c64(g.cos(), 0.0),
            c64(-g.sin(), 0.0),
        ]));
        assert!(out.sub(&expect).norm() < 1e-12);
    }

    /// Scaling-and-squaring Taylor exponential, independent of the
    /// eigen-based construction in the implementation.
    fn expm_taylor(h: &Operator) -> Operator {
        // exp(A) with A = -i g (π ⊗ M); scale so the norm is small
        let mut norm = h.frobenius_norm();
        let mut squarings = 0u32;
        while norm > 0.25 {
            norm /= 2.0;
            squarings += 1;
        }
        let scale = 1.0 / f64::from(1u32 << squarings.min(31));
        let a = h.scaled_re(scale);
        let d = h.dim();
        let mut term = Operator::identity(d);
        let mut sum = Operator::identity(d);
        for k in 1..40 {
            term = term.mul(&a).scaled_re(1.0 / k as f64);
            sum = sum.add(&term);
            if term.frobenius_norm() < 1e-18 {
                break;
            }
        }
        let mut result = sum;
        for _ in 0..squarings {
            result = result.mul(&result);
        }
        result
    }

    #[test]
    fn coupling_matches_independent_matrix_exponential() {
        let mut rng = test_rng(59);
        for _ in 0..50 {
            let dim = rng.gen_range(2..=4);
            let i = rng.gen_range(0..dim);
            let g: f64 = rng.gen_range(-1.2..1.2);
            let cfg = CouplingConfig::new(g, i, dim);
            let proj = Ket::basis_state(dim, i).projector();
            let m_op = Operator::new(
                2,
                vec![C64::default(), c64(0.0, 1.0), c64(0.0, -1.0), C64::default()],
            );
            let generator = tensor(&proj, &m_op).scaled(c64(0.0, -g));
            let expected = expm_taylor(&generator);
            let got = coupling_unitary(&cfg);
            assert!(
                got.sub(&expected).frobenius_norm() < 1e-10,
                "g={g} i={i} dim={dim}"
            );
        }
    }

    #[test]
    fn decoupled_meter_stays_in_zero() {
        let povm = fixture_projective(4).unwrap();
        let cfg = CouplingConfig::new(0.0, 0, 2);
        let stats = post_selected_meter(&diag_ket(), &cfg, povm.element(0)).unwrap();
        assert!((stats.p0 - 1.0).abs() < 1e-12);
        assert!(stats.e1.abs() < 1e-12);
        assert!(stats.e2.abs() < 1e-12);
        assert!((stats.success_prob - 0.5).abs() < 1e-12);
    }

    /// Independent closed form from the branch decomposition
    /// |u⟩ = |s⟩ − (1−cos g) π̂|s⟩, |v⟩ = −sin g π̂|s⟩.
    fn stats_by_hand(s: &Ket, cfg: &CouplingConfig, element: &Operator) -> MeterStats {
        let proj = Ket::basis_state(cfg.dim, cfg.projector_index).projector();
        let ps = proj.apply(s);
        let u = s.sub(&ps.scaled(c64(1.0 - cfg.g.cos(), 0.0)));
        let v = ps.scaled(c64(-cfg.g.sin(), 0.0));
        let m00 = u.inner(&element.apply(&u)).re;
        let m11 = v.inner(&element.apply(&v)).re;
        let m01 = v.inner(&element.apply(&u));
        let p = m00 + m11;
        MeterStats {
            success_prob: p,
            p0: m00 / p,
            e1: 2.0 * m01.re / p,
            e2: 2.0 * m01.im / p,
        }
    }

    #[test]
    fn matrix_and_branch_derivations_agree() {
        let mut rng = test_rng(61);
        for _ in 0..30 {
            let dim = rng.gen_range(2..=3);
            let s = random_ket(dim, &mut rng);
            let element = crate::random::random_psd(dim, &mut rng).scaled_re(0.3);
            let cfg = CouplingConfig::new(rng.gen_range(-1.0..1.0), rng.gen_range(0..dim), dim);
            let a = post_selected_meter(&s, &cfg, &element).unwrap();
            let b = stats_by_hand(&s, &cfg, &element);
            assert!((a.success_prob - b.success_prob).abs() < 1e-12);
            assert!((a.p0 - b.p0).abs() < 1e-12);
            assert!((a.e1 - b.e1).abs() < 1e-12);
            assert!((a.e2 - b.e2).abs() < 1e-12);
        }
    }

    #[test]
    fn success_probabilities_sum_to_one_over_complete_povm() {
        let povm = fixture_sic();
        let mut rng = test_rng(67);
        for _ in 0..10 {
            let s = random_ket(2, &mut rng);
            let g: f64 = rng.gen_range(-0.8..0.8);
            for i in 0..2 {
                let cfg = CouplingConfig::new(g, i, 2);
                let total: f64 = povm
                    .elements()
                    .iter()
                    .map(|e| post_selected_meter(&s, &cfg, e).unwrap().success_prob)
                    .sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_one_post_selection_gives_pure_meter_and_closed_form_p0() {
        let mut rng = test_rng(71);
        for _ in 0..20 {
            let s = random_ket(2, &mut rng);
            let phi = random_ket(2, &mut rng);
            let element = phi.projector().scaled_re(rng.gen_range(0.2..1.0));
            let g: f64 = rng.gen_range(-1.0..1.0);
            let cfg = CouplingConfig::new(g, 0, 2);
            let stats = match post_selected_meter(&s, &cfg, &element) {
                Ok(st) => st,
                Err(_) => continue,
            };
            // Bloch vector length 1 for pure conditional meter states
            let bz = 2.0 * stats.p0 - 1.0;
            let len = (stats.e1 * stats.e1 + stats.e2 * stats.e2 + bz * bz).sqrt();
            assert!((len - 1.0).abs() < 1e-10);
            // P·p0 = |⟨φ|s⟩ − (1−cos g)⟨φ|π̂|s⟩|² (times the element weight)
            let proj = Ket::basis_state(2, 0).projector();
            let amp = phi.inner(&s) - phi.inner(&proj.apply(&s)) * (1.0 - g.cos());
            let weight = element.trace().re / phi.norm_sqr();
            assert!((stats.success_prob * stats.p0 - weight * amp.norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn meter_purity_bounded_for_mixed_elements() {
        let mut rng = test_rng(73);
        let s = diag_ket();
        for _ in 0..10 {
            let element = crate::random::random_psd(2, &mut rng).scaled_re(0.2);
            let cfg = CouplingConfig::new(0.4, 0, 2);
            let stats = post_selected_meter(&s, &cfg, &element).unwrap();
            let bz = 2.0 * stats.p0 - 1.0;
            let len2 = stats.e1 * stats.e1 + stats.e2 * stats.e2 + bz * bz;
            assert!(len2 <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn orthogonal_post_selection_is_signalled() {
        let povm = fixture_projective(4).unwrap();
        let cfg = CouplingConfig::new(0.0, 0, 2);
        let h = Ket::basis_state(2, 0);
        let result = post_selected_meter(&h, &cfg, povm.element(1));
        assert!(matches!(result, Err(Error::PostSelectionVanishes)));
    }

    #[test]
    fn sampling_is_deterministic_and_matches_probabilities() {
        let povm = fixture_sic();
        let s = diag_ket();
        let cfg = CouplingConfig::new(6f64.to_radians(), 0, 2);
        let a = sample_counts(&povm, &s, 0, "s0", &cfg, MeterBasis::X, 1_000_000, 99).unwrap();
        let b = sample_counts(&povm, &s, 0, "s0", &cfg, MeterBasis::X, 1_000_000, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total_counts(), 1_000_000);
        let probs = joint_probabilities(&povm, &s, &cfg, MeterBasis::X).unwrap();
        for (flat, &p) in probs.iter().enumerate() {
            let emp = a.count(flat / 2, (flat % 2) as u8) as f64 / 1e6;
            assert!((emp - p).abs() < 5e-3, "flat {flat}: {emp} vs {p}");
        }
    }

    #[test]
    fn zero_coupling_z_basis_never_flips_meter() {
        let povm = fixture_sic();
        let cfg = CouplingConfig::new(0.0, 0, 2);
        let rec = sample_counts(&povm, &diag_ket(), 0, "s0", &cfg, MeterBasis::Z, 5000, 5).unwrap();
        for ((_, r), count) in &rec.counts {
            if *count > 0 {
                assert_eq!(*r, 0u8);
            }
        }
    }

    #[test]
    fn incomplete_povm_is_rejected_by_sampler() {
        // fabricate an incomplete set by reusing one projective element twice
        let base = fixture_projective(4).unwrap();
        let half = Povm::with_tolerance(
            2,
            vec![base.element(0).scaled_re(0.5), base.element(1).scaled_re(0.5)],
            vec!["a".into(), "b".into()],
            1.0,
        )
        .unwrap();
        let cfg = CouplingConfig::new(0.2, 0, 2);
        let res = sample_counts(&half, &diag_ket(), 0, "s0", &cfg, MeterBasis::Z, 100, 1);
        assert!(matches!(res, Err(Error::IncompleteOutcomes(_))));
    }

    #[test]
    fn exact_tallies_reproduce_exact_stats() {
        let povm = fixture_sic();
        let s = diag_ket();
        let cfg = CouplingConfig::new(0.3, 1, 2);
        let outcome = 2;
        // fractional expected tallies stand in for infinite statistics
        let tallies: Vec<BasisTally> = MeterBasis::ALL
            .iter()
            .map(|&basis| {
                let probs = joint_probabilities(&povm, &s, &cfg, basis).unwrap();
                BasisTally {
                    c0: probs[outcome * 2],
                    c1: probs[outcome * 2 + 1],
                    trials: 1.0,
                }
            })
            .collect();
        let est = stats_from_tallies(&tallies[0], &tallies[1], &tallies[2], outcome).unwrap();
        let exact = post_selected_meter(&s, &cfg, povm.element(outcome)).unwrap();
        assert!((est.success_prob - exact.success_prob).abs() < 1e-12);
        assert!((est.p0 - exact.p0).abs() < 1e-12);
        assert!((est.e1 - exact.e1).abs() < 1e-12);
        assert!((est.e2 - exact.e2).abs() < 1e-12);
    }

    #[test]
    fn sampled_stats_stay_within_binomial_error() {
        let povm = fixture_sic();
        let s = diag_ket();
        let cfg = CouplingConfig::new(12f64.to_radians(), 0, 2);
        let trials = 100_000u64;
        let records: Vec<SettingRecord> = MeterBasis::ALL
            .iter()
            .map(|&b| sample_counts(&povm, &s, 0, "s0", &cfg, b, trials, 77).unwrap())
            .collect();
        let refs: Vec<&SettingRecord> = records.iter().collect();
        for outcome in 0..4 {
            let est = stats_from_counts(&refs, outcome).unwrap();
            let exact = post_selected_meter(&s, &cfg, povm.element(outcome)).unwrap();
            let n_x = records[1].successes(outcome) as f64;
            let sigma_e1 = ((1.0 - exact.e1 * exact.e1).max(1e-12) / n_x).sqrt();
            assert!(
                (est.e1 - exact.e1).abs() <= 5.0 * sigma_e1,
                "outcome {outcome}: {} vs {}",
                est.e1,
                exact.e1
            );
        }
    }

    #[test]
    fn missing_successes_are_signalled() {
        let povm = fixture_projective(4).unwrap();
        let h = Ket::basis_state(2, 0);
        let cfg = CouplingConfig::new(0.1, 0, 2);
        let records: Vec<SettingRecord> = MeterBasis::ALL
            .iter()
            .map(|&b| sample_counts(&povm, &h, 0, "s0", &cfg, b, 200, 3).unwrap())
            .collect();
        let refs: Vec<&SettingRecord> = records.iter().collect();
        // outcome 1 is |V⟩⟨V| which (almost) never fires from |H⟩
        let res = stats_from_counts(&refs, 1);
        assert!(matches!(res, Err(Error::NoSuccesses { .. })));
    }

    #[test]
    fn records_round_trip_through_csv() {
        let povm = fixture_sic();
        let pre = vec![(0usize, "s0".to_string(), diag_ket())];
        let grid = [-0.2f64, 0.1];
        let records = simulate_grid(&povm, &pre, &grid, 500, 13).unwrap();
        let mut buf = Vec::new();
        write_records_csv(&records, &mut buf).unwrap();
        let back = read_records_csv(&buf[..]).unwrap();
        assert_eq!(records.len(), back.len());
        let total_in: u64 = records.iter().map(SettingRecord::total_counts).sum();
        let total_out: u64 = back.iter().map(SettingRecord::total_counts).sum();
        assert_eq!(total_in, total_out);
        // same keyed counts regardless of row order
        for rec in &records {
            let twin = back
                .iter()
                .find(|r| {
                    r.s_label == rec.s_label
                        && r.i == rec.i
                        && r.basis == rec.basis
                        && (r.g - rec.g).abs() < 1e-9
                })
                .expect("matching setting");
            assert_eq!(twin.counts, rec.counts);
            assert_eq!(twin.trials, rec.trials);
        }
    }

    #[test]
    fn simulated_grid_is_order_independent() {
        let povm = fixture_sic();
        let pair = crate::linalg::mub_pair(2).unwrap();
        let pre: Vec<(usize, String, Ket)> = pair
            .basis_s()
            .iter()
            .enumerate()
            .map(|(k, ket)| (k, format!("s{k}"), ket.clone()))
            .collect();
        let grid = [0.1f64, -0.3];
        let a = simulate_grid(&povm, &pre, &grid, 300, 21).unwrap();
        let b = simulate_grid(&povm, &pre, &grid, 300, 21).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditional_meter_state_is_physical() {
        let mut rng = test_rng(79);
        for _ in 0..20 {
            let s = random_ket(2, &mut rng);
            let element = crate::random::random_psd(2, &mut rng).scaled_re(0.4);
            let cfg = CouplingConfig::new(rng.gen_range(-1.0..1.0), 0, 2);
            if let Ok(stats) = post_selected_meter(&s, &cfg, &element) {
                assert!((0.0..=1.0 + 1e-12).contains(&stats.p0));
                assert!(stats.e1 * stats.e1 + stats.e2 * stats.e2 <= 1.0 + 1e-9);
                assert!((0.0..=1.0 + 1e-12).contains(&stats.success_prob));
            }
        }
    }

    #[test]
    fn meter_basis_kets_are_eigenstates() {
        // σ̂₂ = i(|0⟩⟨1| − |1⟩⟨0|); r = 0 must tag the +1 eigenstate
        let sigma2 = Operator::new(
            2,
            vec![C64::default(), c64(0.0, 1.0), c64(0.0, -1.0), C64::default()],
        );
        let [plus, minus] = MeterBasis::Y.kets();
        assert!(sigma2.apply(&plus).sub(&plus).norm() < 1e-12);
        assert!(sigma2.apply(&minus).add(&minus).norm() < 1e-12);
        let sigma1 = Operator::new(
            2,
            vec![C64::default(), c64(1.0, 0.0), c64(1.0, 0.0), C64::default()],
        );
        let [xp, xm] = MeterBasis::X.kets();
        assert!(sigma1.apply(&xp).sub(&xp).norm() < 1e-12);
        assert!(sigma1.apply(&xm).add(&xm).norm() < 1e-12);
        let _ = hermitian_eigen(&sigma1).unwrap();
        let _ = purity(&Ket::basis_state(2, 0).projector());
    }
}
