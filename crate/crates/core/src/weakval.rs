//! Weak-value extraction from meter statistics: the per-g estimator and the
//! multi-g least-squares fit against the exact forward model.
//!
//! With the coupling convention of [`crate::sim`], the unnormalized meter
//! tallies of one (s, i, n) setting obey, writing k = 1 − cos g,
//!
//! ```text
//! T00(g) = a − 2k·Re b + k²·c          a = ⟨s|Π_n|s⟩
//! Tσ1(g) = −2 sin g·(Re b − k·c)       b = ⟨s|Π_n π̂_i|s⟩
//! Tσ2(g) = +2 sin g·Im b               c = ⟨s|π̂_i Π_n π̂_i|s⟩
//! ```
//!
//! so the raw readout combination (e1 + i·e2)/(2 tan g · p0) converges to
//! −conj(b)/a as g → 0. The calibrated estimator therefore returns
//! w = −conj(raw), which recovers the weak value b/a; the multi-g fit
//! recovers (a, b, c) directly and is exact at any finite g.

use crate::error::{Error, Result};
use crate::linalg::{c64, hermitian_eigen, Ket, Operator, C64};
use crate::sim::{MeterBasis, MeterStats, SettingRecord};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

const TIKHONOV_DAMPING: f64 = 1e-12;
const RANK_TOL: f64 = 1e-9;

/// How a weak-value estimate was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PerG,
    MultiGFit,
    Exact,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::PerG => "per_g",
            Method::MultiGFit => "multi_g_fit",
            Method::Exact => "exact",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_g" => Ok(Method::PerG),
            "multi_g_fit" => Ok(Method::MultiGFit),
            "exact" => Ok(Method::Exact),
            other => Err(Error::Serialization(format!("unknown method '{other}'"))),
        }
    }
}

/// A complex weak-value estimate together with its pairing coefficient
/// (ν = ⟨s|Π|s⟩, or μ = √(ν·d) on the pure-state path).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WeakValueEstimate {
    pub w: C64,
    pub coeff: C64,
    pub stderr: f64,
    pub method: Method,
}

impl WeakValueEstimate {
    /// Convert the ν coefficient into μ = √(ν·d) for pure-element
    /// reconstruction. Uses the phase convention ⟨s|φ_n⟩ ≥ 0, so μ is real
    /// and nonnegative.
    pub fn with_pure_coeff(mut self, dim: usize) -> Self {
        self.coeff = c64(coeff_mu(self.coeff.re, dim), 0.0);
        self
    }
}

/// Quadratic forms recovered by the multi-g fit.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitParams {
    /// ⟨s|Π|s⟩ ≥ 0.
    pub a: f64,
    /// ⟨s|Π π̂_i|s⟩.
    pub b: C64,
    /// ⟨s|π̂_i Π π̂_i|s⟩ ≥ 0.
    pub c: f64,
    /// Root-mean-square tally residual of the fit.
    pub residual: f64,
}

impl FitParams {
    /// Project onto the physical set a ≥ 0, c ≥ 0, |b|² ≤ a·c.
    fn projected(mut self) -> Self {
        self.a = self.a.max(0.0);
        self.c = self.c.max(0.0);
        let bound = self.a * self.c;
        let b2 = self.b.norm_sqr();
        if b2 > bound {
            self.b = if bound > 0.0 {
                self.b * (bound / b2).sqrt()
            } else {
                C64::default()
            };
        }
        self
    }
}

/// Per-g unnormalized tallies (T00, Tσ1, Tσ2) for one outcome.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MeterTallies {
    /// Coupling angle in radians.
    pub g: f64,
    pub t00: f64,
    pub t1: f64,
    pub t2: f64,
}

impl MeterTallies {
    pub fn from_stats(g: f64, stats: &MeterStats) -> Self {
        Self {
            g,
            t00: stats.success_prob * stats.p0,
            t1: stats.success_prob * stats.e1,
            t2: stats.success_prob * stats.e2,
        }
    }

    /// Frequency-normalized tallies for one outcome from the Z/X/Y records
    /// of a single (s, i, g) setting, with inverse-variance weights.
    pub fn from_records(records: &[&SettingRecord], outcome: usize) -> Result<(Self, [f64; 3])> {
        let mut g = None;
        let mut t = [0.0f64; 3];
        let mut w = [0.0f64; 3];
        let mut seen = [false; 3];
        for rec in records {
            let slot = match rec.basis {
                MeterBasis::Z => 0,
                MeterBasis::X => 1,
                MeterBasis::Y => 2,
            };
            seen[slot] = true;
            g.get_or_insert(rec.g);
            let n = rec.trials as f64;
            let c0 = rec.count(outcome, 0) as f64;
            let c1 = rec.count(outcome, 1) as f64;
            // smoothed frequencies keep the variance estimate strictly positive
            let p0 = (c0 + 0.5) / (n + 1.0);
            let p1 = (c1 + 0.5) / (n + 1.0);
            if slot == 0 {
                t[0] = c0 / n;
                w[0] = n / (p0 * (1.0 - p0));
            } else {
                t[slot] = (c0 - c1) / n;
                let var = (p0 + p1 - (p0 - p1) * (p0 - p1)) / n;
                w[slot] = 1.0 / var;
            }
        }
        for (flag, name) in seen.iter().zip(["Z", "X", "Y"]) {
            if !flag {
                return Err(Error::NoSuccesses {
                    outcome,
                    basis: name.into(),
                });
            }
        }
        Ok((
            Self {
                g: g.expect("at least one record"),
                t00: t[0],
                t1: t[1],
                t2: t[2],
            },
            w,
        ))
    }
}

/// Exact weak value ⟨s|Π π̂_i|s⟩ / ⟨s|Π|s⟩; the reference oracle for all
/// estimators.
pub fn true_weak_value(s: &Ket, element: &Operator, i: usize) -> Result<C64> {
    assert_eq!(s.dim(), element.dim(), "dimension mismatch");
    let e_i = Ket::basis_state(s.dim(), i);
    let denom = element.expectation(s).re;
    if denom <= 1e-15 {
        return Err(Error::OrthogonalPostSelection);
    }
    let numer = s.inner(&element.apply(&e_i)) * e_i.inner(s);
    Ok(numer / denom)
}

/// Oracle estimate carrying the exact weak value and ν = ⟨s|Π|s⟩.
pub fn exact_estimate(s: &Ket, element: &Operator, i: usize) -> Result<WeakValueEstimate> {
    let w = true_weak_value(s, element, i)?;
    Ok(WeakValueEstimate {
        w,
        coeff: c64(element.expectation(s).re, 0.0),
        stderr: 0.0,
        method: Method::Exact,
    })
}

fn check_coupling(g: f64) -> Result<()> {
    if !g.is_finite() || g.sin().abs() < 1e-9 || g.cos().abs() < 1e-9 {
        return Err(Error::InvalidCoupling(g));
    }
    Ok(())
}

/// Single-g estimator from conditional meter statistics:
/// w = −conj[(e1 + i·e2)/(2 tan g · p0)], ν = P.
pub fn estimate_per_g(stats: &MeterStats, g: f64) -> Result<WeakValueEstimate> {
    check_coupling(g)?;
    if stats.p0 <= 1e-12 {
        return Err(Error::MeterSingular(stats.p0));
    }
    let raw = c64(stats.e1, stats.e2) / (2.0 * g.tan() * stats.p0);
    Ok(WeakValueEstimate {
        w: -raw.conj(),
        coeff: c64(stats.success_prob, 0.0),
        stderr: 0.0,
        method: Method::PerG,
    })
}

/// Single-g estimator from unnormalized tallies (used for the per-g curve
/// artifacts, where only tallies survive).
pub fn estimate_per_g_from_tallies(t: &MeterTallies) -> Result<C64> {
    check_coupling(t.g)?;
    if t.t00.abs() <= 1e-12 {
        return Err(Error::MeterSingular(t.t00));
    }
    let raw = c64(t.t1, t.t2) / (2.0 * t.g.tan() * t.t00);
    Ok(-raw.conj())
}

/// Weak-limit coefficient μ ≈ √(P·d); in exact mode P is the fitted a.
pub fn coeff_mu(p: f64, dim: usize) -> f64 {
    (p.max(0.0) * dim as f64).sqrt()
}

/// Weak-limit coefficient ν ≈ P; in exact mode the fitted a.
pub fn coeff_nu(p: f64) -> f64 {
    p.max(0.0)
}

/// Least-squares fit of (a, Re b, Im b, c) to tallies over a g-grid.
///
/// Weights are per-point inverse variances for the three tally channels;
/// uniform when absent. The g = 0 point is always excluded. Solved by
/// damped normal equations (damping 1e-12) through an eigendecomposition,
/// with a rank check first.
pub fn fit_multi_g(
    tallies: &[MeterTallies],
    weights: Option<&[[f64; 3]]>,
) -> Result<(FitParams, WeakValueEstimate)> {
    if let Some(w) = weights {
        assert_eq!(w.len(), tallies.len(), "one weight triple per tally point");
    }
    let usable: Vec<(usize, &MeterTallies)> = tallies
        .iter()
        .enumerate()
        .filter(|(_, t)| t.g.abs() > 1e-12)
        .collect();
    let mut distinct: Vec<f64> = usable.iter().map(|(_, t)| t.g).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite g"));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::NotEnoughSettings {
            needed: 3,
            got: distinct.len(),
        });
    }

    // rows of the design matrix for one tally point
    let rows = |g: f64| -> [[f64; 4]; 3] {
        let k = 1.0 - g.cos();
        let s = g.sin();
        [
            [1.0, -2.0 * k, 0.0, k * k],
            [0.0, -2.0 * s, 0.0, 2.0 * s * k],
            [0.0, 0.0, 2.0 * s, 0.0],
        ]
    };

    let mut m = [[0.0f64; 4]; 4];
    let mut rhs = [0.0f64; 4];
    for (idx, t) in &usable {
        let w = weights.map_or([1.0; 3], |ws| ws[*idx]);
        let design = rows(t.g);
        let ys = [t.t00, t.t1, t.t2];
        for (row, (&y, &wt)) in design.iter().zip(ys.iter().zip(w.iter())) {
            for p in 0..4 {
                rhs[p] += wt * y * row[p];
                for q in 0..4 {
                    m[p][q] += wt * row[p] * row[q];
                }
            }
        }
    }

    let m_op = Operator::from_fn(4, |r, c| c64(m[r][c], 0.0));
    let eig = hermitian_eigen(&m_op)?;
    let max_eig = eig.values[0].max(0.0);
    let min_eig = *eig.values.last().expect("4 eigenvalues");
    if max_eig <= 0.0 || min_eig < RANK_TOL * max_eig {
        return Err(Error::RankDeficient);
    }

    // x = V (Λ + λI)^{-1} Vᵀ rhs
    let mut x = [0.0f64; 4];
    for (lam, vec) in eig.values.iter().zip(&eig.vectors) {
        let proj: f64 = (0..4).map(|p| vec.get(p).re * rhs[p]).sum();
        let gain = proj / (lam + TIKHONOV_DAMPING);
        for p in 0..4 {
            x[p] += gain * vec.get(p).re;
        }
    }

    // residuals of the raw (unweighted) tally model
    let mut ss = 0.0;
    let mut wss = 0.0;
    let mut count = 0usize;
    for (idx, t) in &usable {
        let w = weights.map_or([1.0; 3], |ws| ws[*idx]);
        let design = rows(t.g);
        let ys = [t.t00, t.t1, t.t2];
        for (row, (&y, &wt)) in design.iter().zip(ys.iter().zip(w.iter())) {
            let fitted: f64 = (0..4).map(|p| row[p] * x[p]).sum();
            let r = y - fitted;
            ss += r * r;
            wss += wt * r * r;
            count += 1;
        }
    }
    let residual = (ss / count as f64).sqrt();

    let fit = FitParams {
        a: x[0],
        b: c64(x[1], x[2]),
        c: x[3],
        residual,
    }
    .projected();

    if fit.a <= 1e-15 {
        return Err(Error::OrthogonalPostSelection);
    }
    let w_est = fit.b / fit.a;

    // delta-method standard error from the damped normal-equation covariance
    let stderr = if count > 4 {
        let s2 = wss / (count - 4) as f64;
        let mut var = 0.0;
        // gradient of (Re w, Im w) wrt (a, Re b, Im b, c)
        let ga = [-fit.b.re / (fit.a * fit.a), 1.0 / fit.a, 0.0, 0.0];
        let gb = [-fit.b.im / (fit.a * fit.a), 0.0, 1.0 / fit.a, 0.0];
        for grad in [ga, gb] {
            for (lam, vec) in eig.values.iter().zip(&eig.vectors) {
                let proj: f64 = (0..4).map(|p| vec.get(p).re * grad[p]).sum();
                var += s2 * proj * proj / (lam + TIKHONOV_DAMPING);
            }
        }
        var.max(0.0).sqrt()
    } else {
        0.0
    };

    let estimate = WeakValueEstimate {
        w: w_est,
        coeff: c64(fit.a, 0.0),
        stderr,
        method: Method::MultiGFit,
    };
    Ok((fit, estimate))
}

// ---------------------------------------------------------------------------
// CSV encoding of estimates
// ---------------------------------------------------------------------------

/// One estimate row keyed by pre-state, projector index and outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateRow {
    pub s_label: String,
    pub s_index: usize,
    pub i: usize,
    pub outcome: usize,
    pub estimate: WeakValueEstimate,
    pub residual: f64,
}

const ESTIMATE_HEADER: [&str; 10] = [
    "s_label", "i", "outcome", "method", "re_w", "im_w", "coeff_re", "coeff_im", "stderr",
    "residual",
];

pub fn write_estimates_csv<W: Write>(rows: &[EstimateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATE_HEADER)?;
    for row in rows {
        w.write_record([
            row.s_label.as_str(),
            &row.i.to_string(),
            &row.outcome.to_string(),
            row.estimate.method.name(),
            &crate::fmt_sig(row.estimate.w.re),
            &crate::fmt_sig(row.estimate.w.im),
            &crate::fmt_sig(row.estimate.coeff.re),
            &crate::fmt_sig(row.estimate.coeff.im),
            &crate::fmt_sig(row.estimate.stderr),
            &crate::fmt_sig(row.residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_estimates_csv<R: Read>(input: R) -> Result<Vec<EstimateRow>> {
    #[derive(Deserialize)]
    struct Row {
        s_label: String,
        i: usize,
        outcome: usize,
        method: String,
        re_w: f64,
        im_w: f64,
        coeff_re: f64,
        coeff_im: f64,
        stderr: f64,
        residual: f64,
    }
    let mut reader = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        let s_index = row
            .s_label
            .strip_prefix('s')
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| Error::Serialization(format!("bad s_label '{}'", row.s_label)))?;
        rows.push(EstimateRow {
            s_label: row.s_label,
            s_index,
            i: row.i,
            outcome: row.outcome,
            estimate: WeakValueEstimate {
                w: c64(row.re_w, row.im_w),
                coeff: c64(row.coeff_re, row.coeff_im),
                stderr: row.stderr,
                method: row.method.parse()?,
            },
            residual: row.residual,
        });
    }
    Ok(rows)
}
