//! In-memory experiment orchestration: simulate → estimate → reconstruct →
//! compare. The CLI wraps these stages with file I/O; tests drive them
//! directly.

use crate::direct::{
    dirac_from_weak, physicality_adjust, reconstruct_dirac, reconstruct_pure, DiracDistribution,
    ReconstructionResult,
};
use crate::error::{Error, Result};
use crate::linalg::{fidelity, mub_pair, Ket};
use crate::povm::{retrodict, validation_report, Povm};
use crate::probe::{probe_set, reconstruct_cqdt, simulate_probe_frequencies, FrequencyTable};
use crate::sim::{post_selected_meter, simulate_grid, CouplingConfig, SettingRecord};
use crate::weakval::{
    estimate_per_g_from_tallies, fit_multi_g, EstimateRow, MeterTallies, WeakValueEstimate,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Which reconstruction routes a run should exercise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathChoice {
    Pure,
    Dirac,
    Cqdt,
    All,
}

impl PathChoice {
    pub fn wants_pure(self) -> bool {
        matches!(self, PathChoice::Pure | PathChoice::All)
    }

    pub fn wants_dirac(self) -> bool {
        matches!(self, PathChoice::Dirac | PathChoice::All)
    }

    pub fn wants_cqdt(self) -> bool {
        matches!(self, PathChoice::Cqdt | PathChoice::All)
    }

    pub fn name(self) -> &'static str {
        match self {
            PathChoice::Pure => "pure",
            PathChoice::Dirac => "dirac",
            PathChoice::Cqdt => "cqdt",
            PathChoice::All => "all",
        }
    }
}

impl std::str::FromStr for PathChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure" => Ok(PathChoice::Pure),
            "dirac" => Ok(PathChoice::Dirac),
            "cqdt" => Ok(PathChoice::Cqdt),
            "all" => Ok(PathChoice::All),
            other => Err(Error::Serialization(format!(
                "unknown path '{other}' (expected pure, dirac, cqdt or all)"
            ))),
        }
    }
}

/// Grid, statistics budget and seed of one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Coupling angles in radians; never contains zero.
    pub g_grid: Vec<f64>,
    /// Shots per (s, i, g, basis) setting; 0 selects the exact noiseless mode.
    pub trials: u64,
    pub seed: u64,
}

/// One per-g calibrated estimate, kept for the weak-value-vs-g plot data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub s_label: String,
    pub i: usize,
    pub outcome: usize,
    /// Coupling angle in radians.
    pub g: f64,
    pub w: crate::linalg::C64,
}

/// Per-outcome reconstruction, or the error that stopped it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutcomeReconstruction {
    pub outcome: usize,
    pub result: Option<ReconstructionResult>,
    pub error: Option<String>,
}

impl OutcomeReconstruction {
    fn from_result(outcome: usize, res: Result<ReconstructionResult>) -> Self {
        match res {
            Ok(result) => Self {
                outcome,
                result: Some(result),
                error: None,
            },
            Err(e) => Self {
                outcome,
                result: None,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Everything a direct-tomography run produces in memory.
#[derive(Debug)]
pub struct DirectRun {
    pub records: Vec<SettingRecord>,
    pub estimates: Vec<EstimateRow>,
    pub curves: Vec<CurvePoint>,
    pub pure: Option<Vec<OutcomeReconstruction>>,
    pub dirac_tables: Option<Vec<DiracDistribution>>,
    pub dirac: Option<Vec<OutcomeReconstruction>>,
    /// Jointly adjusted POVM per route, when every outcome reconstructed.
    pub adjusted_pure: Option<Povm>,
    pub adjusted_dirac: Option<Povm>,
}

type TallyKey = (usize, usize, usize); // (s_index, i, outcome)

struct TallyGrid {
    dim: usize,
    n_outcomes: usize,
    s_indices: Vec<usize>,
    tallies: BTreeMap<TallyKey, (Vec<MeterTallies>, Option<Vec<[f64; 3]>>)>,
}

fn pre_states(dim: usize, full_s_basis: bool) -> Result<Vec<(usize, String, Ket)>> {
    let pair = mub_pair(dim)?;
    let take = if full_s_basis { dim } else { 1 };
    Ok(pair
        .basis_s()
        .iter()
        .take(take)
        .enumerate()
        .map(|(k, ket)| (k, format!("s{k}"), ket.clone()))
        .collect())
}

fn collect_exact_tallies(
    povm: &Povm,
    pre: &[(usize, String, Ket)],
    g_grid: &[f64],
) -> TallyGrid {
    let dim = povm.dim();
    let mut tallies: BTreeMap<TallyKey, (Vec<MeterTallies>, Option<Vec<[f64; 3]>>)> =
        BTreeMap::new();
    for (s_index, _, s) in pre {
        for i in 0..dim {
            for &g in g_grid {
                let cfg = CouplingConfig::new(g, i, dim);
                for (n, element) in povm.elements().iter().enumerate() {
                    if let Ok(stats) = post_selected_meter(s, &cfg, element) {
                        tallies
                            .entry((*s_index, i, n))
                            .or_insert_with(|| (Vec::new(), None))
                            .0
                            .push(MeterTallies::from_stats(g, &stats));
                    }
                }
            }
        }
    }
    TallyGrid {
        dim,
        n_outcomes: povm.len(),
        s_indices: pre.iter().map(|(k, _, _)| *k).collect(),
        tallies,
    }
}

fn collect_sampled_tallies(
    povm: &Povm,
    pre: &[(usize, String, Ket)],
    spec: &ExperimentSpec,
) -> Result<(Vec<SettingRecord>, TallyGrid)> {
    let dim = povm.dim();
    let records = simulate_grid(povm, pre, &spec.g_grid, spec.trials, spec.seed)?;
    // regroup records by (s, i, g) so each outcome can pull its three bases
    let mut by_setting: BTreeMap<(usize, usize, u64), Vec<&SettingRecord>> = BTreeMap::new();
    for rec in &records {
        by_setting
            .entry((rec.s_index, rec.i, rec.g.to_bits()))
            .or_default()
            .push(rec);
    }
    let mut tallies: BTreeMap<TallyKey, (Vec<MeterTallies>, Option<Vec<[f64; 3]>>)> =
        BTreeMap::new();
    for ((s_index, i, _), recs) in &by_setting {
        for n in 0..povm.len() {
            if let Ok((t, w)) = MeterTallies::from_records(recs, n) {
                let entry = tallies
                    .entry((*s_index, *i, n))
                    .or_insert_with(|| (Vec::new(), Some(Vec::new())));
                entry.0.push(t);
                entry.1.as_mut().expect("weights present").push(w);
            }
        }
    }
    Ok((
        records,
        TallyGrid {
            dim,
            n_outcomes: povm.len(),
            s_indices: pre.iter().map(|(k, _, _)| *k).collect(),
            tallies,
        },
    ))
}

fn estimate_all(grid: &TallyGrid) -> (Vec<EstimateRow>, Vec<CurvePoint>) {
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for ((s_index, i, outcome), (tallies, weights)) in &grid.tallies {
        let s_label = format!("s{s_index}");
        for t in tallies {
            if let Ok(w) = estimate_per_g_from_tallies(t) {
                curves.push(CurvePoint {
                    s_label: s_label.clone(),
                    i: *i,
                    outcome: *outcome,
                    g: t.g,
                    w,
                });
            }
        }
        if let Ok((fit, estimate)) = fit_multi_g(tallies, weights.as_deref()) {
            rows.push(EstimateRow {
                s_label,
                s_index: *s_index,
                i: *i,
                outcome: *outcome,
                estimate,
                residual: fit.residual,
            });
        }
    }
    (rows, curves)
}

fn estimate_lookup<'a>(
    rows: &'a [EstimateRow],
) -> BTreeMap<(usize, usize, usize), &'a WeakValueEstimate> {
    rows.iter()
        .map(|r| ((r.s_index, r.i, r.outcome), &r.estimate))
        .collect()
}

/// Pure-retrodiction reconstruction of every outcome from the s0 estimates.
pub fn reconstruct_pure_all(
    rows: &[EstimateRow],
    dim: usize,
    n_outcomes: usize,
) -> Vec<OutcomeReconstruction> {
    let lookup = estimate_lookup(rows);
    (0..n_outcomes)
        .map(|n| {
            let mut estimates = Vec::with_capacity(dim);
            for i in 0..dim {
                match lookup.get(&(0, i, n)) {
                    Some(est) => estimates.push((**est).with_pure_coeff(dim)),
                    None => {
                        return OutcomeReconstruction {
                            outcome: n,
                            result: None,
                            error: Some(format!(
                                "no usable estimate for (s0, i={i}, outcome {n})"
                            )),
                        }
                    }
                }
            }
            OutcomeReconstruction::from_result(n, reconstruct_pure(&estimates))
        })
        .collect()
}

/// Dirac-path reconstruction of every outcome from the full (s, i) grid.
pub fn reconstruct_dirac_all(
    rows: &[EstimateRow],
    dim: usize,
    n_outcomes: usize,
) -> (Vec<DiracDistribution>, Vec<OutcomeReconstruction>) {
    let lookup = estimate_lookup(rows);
    let mut tables = Vec::new();
    let mut outcomes = Vec::new();
    for n in 0..n_outcomes {
        let grid: Vec<Option<WeakValueEstimate>> = (0..dim * dim)
            .map(|flat| {
                let (s, i) = (flat / dim, flat % dim);
                lookup.get(&(s, i, n)).map(|e| **e)
            })
            .collect();
        match dirac_from_weak(dim, n, &grid) {
            Ok(dist) => {
                let res = reconstruct_dirac(&dist);
                tables.push(dist);
                outcomes.push(OutcomeReconstruction::from_result(n, res));
            }
            Err(e) => outcomes.push(OutcomeReconstruction {
                outcome: n,
                result: None,
                error: Some(e.to_string()),
            }),
        }
    }
    (tables, outcomes)
}

fn adjust_if_complete(outcomes: &[OutcomeReconstruction], labels: &[String]) -> Option<Povm> {
    let raw: Option<Vec<_>> = outcomes
        .iter()
        .map(|o| o.result.as_ref().map(|r| r.element_raw.clone()))
        .collect();
    let adjusted = physicality_adjust(&raw?).ok()?;
    adjusted.relabeled(labels.to_vec()).ok()
}

/// Run the direct route(s) against a POVM.
pub fn run_direct(povm: &Povm, spec: &ExperimentSpec, path: PathChoice) -> Result<DirectRun> {
    assert!(
        path.wants_pure() || path.wants_dirac(),
        "direct run needs a direct path"
    );
    let pre = pre_states(povm.dim(), path.wants_dirac())?;
    let (records, grid) = if spec.trials == 0 {
        (Vec::new(), collect_exact_tallies(povm, &pre, &spec.g_grid))
    } else {
        collect_sampled_tallies(povm, &pre, spec)?
    };
    let (estimates, curves) = estimate_all(&grid);
    let mut run = DirectRun {
        records,
        estimates,
        curves,
        pure: None,
        dirac_tables: None,
        dirac: None,
        adjusted_pure: None,
        adjusted_dirac: None,
    };
    if path.wants_pure() {
        let outcomes = reconstruct_pure_all(&run.estimates, grid.dim, grid.n_outcomes);
        run.adjusted_pure = adjust_if_complete(&outcomes, povm.labels());
        run.pure = Some(outcomes);
    }
    if path.wants_dirac() {
        let (tables, outcomes) = reconstruct_dirac_all(&run.estimates, grid.dim, grid.n_outcomes);
        run.adjusted_dirac = adjust_if_complete(&outcomes, povm.labels());
        run.dirac_tables = Some(tables);
        run.dirac = Some(outcomes);
    }
    let _ = grid.s_indices;
    Ok(run)
}

/// Conventional-tomography cross-validation run.
pub fn run_probe_tomography(
    povm: &Povm,
    trials: u64,
    seed: u64,
) -> Result<(FrequencyTable, Povm)> {
    let probes = probe_set(povm.dim())?;
    let table = simulate_probe_frequencies(povm, &probes, trials, seed)?;
    let reconstructed = reconstruct_cqdt(&table, &probes)?;
    let relabeled = reconstructed.relabeled(povm.labels().to_vec())?;
    Ok((table, relabeled))
}

/// One row of the comparison table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub outcome: usize,
    pub label: String,
    pub f_md_truth: Option<f64>,
    pub f_md_cr: Option<f64>,
    pub f_cr_truth: Option<f64>,
    pub eta_md: Option<f64>,
    pub eta_cr: Option<f64>,
    pub eta_truth: f64,
    pub error: Option<String>,
}

/// Comparison rows for one reconstruction route, with the pre-adjustment
/// physicality diagnostics of the directly measured elements.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonSection {
    pub path: String,
    pub rows: Vec<ComparisonRow>,
    pub raw_psd_margin: Option<f64>,
    pub raw_completeness_residual: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub sections: Vec<ComparisonSection>,
}

/// Build the comparison section for one route against the ground truth and,
/// when present, the conventional reconstruction.
pub fn compare_section(
    path: &str,
    truth: &Povm,
    md: Option<&[OutcomeReconstruction]>,
    cr: Option<&Povm>,
) -> Result<ComparisonSection> {
    let mut rows = Vec::with_capacity(truth.len());
    for (n, element) in truth.elements().iter().enumerate() {
        let truth_retro = retrodict(element)?;
        let md_result = md.and_then(|m| m.get(n));
        let md_recon = md_result.and_then(|o| o.result.as_ref());
        let cr_element = cr.map(|p| p.element(n));

        let f_md_truth = md_recon
            .map(|r| fidelity(&r.rho, &truth_retro.rho))
            .transpose()?;
        let f_cr_truth = cr_element
            .map(|e| fidelity(e, &truth_retro.rho))
            .transpose()?;
        let f_md_cr = match (md_recon, cr_element) {
            (Some(r), Some(e)) => Some(fidelity(&r.rho, e)?),
            _ => None,
        };
        rows.push(ComparisonRow {
            outcome: n,
            label: truth.labels()[n].clone(),
            f_md_truth,
            f_md_cr,
            f_cr_truth,
            eta_md: md_recon.map(|r| r.eta),
            eta_cr: cr_element.map(|e| e.trace().re),
            eta_truth: truth_retro.eta,
            error: md_result.and_then(|o| o.error.clone()),
        });
    }
    let (mut margin, mut residual) = (None, None);
    if let Some(m) = md {
        let raw: Option<Vec<_>> = m
            .iter()
            .map(|o| o.result.as_ref().map(|r| r.element_raw.clone()))
            .collect();
        if let Some(raw) = raw {
            let report = validation_report(truth.dim(), &raw)?;
            margin = Some(report.psd_margin);
            residual = Some(report.completeness_residual);
        }
    }
    Ok(ComparisonSection {
        path: path.to_string(),
        rows,
        raw_psd_margin: margin,
        raw_completeness_residual: residual,
    })
}

/// Default coupling grid: −42° to 42° in 6° steps, excluding zero, in radians.
pub fn default_g_grid() -> Vec<f64> {
    let mut grid = Vec::new();
    let mut deg = -42i64;
    while deg <= 42 {
        if deg != 0 {
            grid.push((deg as f64).to_radians());
        }
        deg += 6;
    }
    grid
}
