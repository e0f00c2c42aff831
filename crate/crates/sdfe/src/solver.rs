//! Best-reply fixed point with upper/lower bracketing.

use nalgebra::{DMatrix, DVector};

use crate::analysis;
use crate::clearing::{self, assemble_system, PriceQuantityState};
use crate::economy::Economy;
use crate::error::{Result, SdfeError};
use crate::linalg;
use crate::regimes::{lambda_for, Regime};

/// Bracket gap below which the equilibrium is reported as unique.
pub const CERTIFY_TOL: f64 = 1e-8;

/// Slopes below this fraction of the upper start count as collapsed.
const COLLAPSE: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Upper starting slope for firms with `kappa = 0`; defaults to
    /// `1e3 * max demand slope`.
    pub cap: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-12, max_iter: 10_000, damping: 1.0, cap: None }
    }
}

impl SolveOptions {
    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SdfeError::Invalid("solver options: need tol > 0, max_iter >= 1, damping in (0, 1]".into()));
        }
        if let Some(c) = self.cap {
            if !(c > 0.0 && c.is_finite()) {
                return Err(SdfeError::Invalid("solver options: cap must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveDiagnostics {
    pub iterations_upper: usize,
    pub iterations_lower: usize,
    pub bracket_gap: f64,
    pub converged: bool,
    pub unique_certified: bool,
    /// The lower iteration starts at this multiple of the upper limit (0 when
    /// the zero profile can be iterated).
    pub lower_start: f64,
    /// Upper iterates never rose and lower iterates never fell.
    pub monotone: bool,
    pub lower: Vec<f64>,
    /// `max_i |B_i - BR_i(B)|` at the returned profile.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub slopes: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

/// `(v' Λ v + κ)^{-1}`.
pub fn best_reply_slope(impact: &DMatrix<f64>, v: &DVector<f64>, kappa: f64) -> Result<f64> {
    let denom = clearing::aggregate_impact(impact, v)? + kappa;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(SdfeError::DegenerateReply(format!("v'Λv + κ = {denom}")));
    }
    Ok(1.0 / denom)
}

pub fn best_reply(e: &Economy, regime: &Regime, slopes: &[f64]) -> Result<Vec<f64>> {
    (0..e.n_firms())
        .map(|i| {
            let l = lambda_for(regime, e, slopes, i)?;
            best_reply_slope(&l, &e.tech_vector(i)?, e.firms()[i].kappa)
                .map_err(|err| SdfeError::DegenerateReply(format!("firm {}: {err}", e.firms()[i].name)))
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct Run {
    profile: Vec<f64>,
    iterations: usize,
    monotone: bool,
}

fn iterate(
    e: &Economy,
    regime: &Regime,
    start: Vec<f64>,
    opts: &SolveOptions,
    cap: f64,
    descending: bool,
) -> Result<Run> {
    let mut cur = start;
    let mut monotone = true;
    for it in 1..=opts.max_iter {
        let br = best_reply(e, regime, &cur)?;
        let next: Vec<f64> = cur.iter().zip(&br).map(|(c, b)| c + opts.damping * (b - c)).collect();
        // A firm without capacity cost may overshoot the cap for a few rounds
        // while its neighbours settle; persistent growth means no equilibrium.
        let settling = it <= e.n_firms() + 1;
        for (i, f) in e.firms().iter().enumerate() {
            let limit = if settling { 1e6 * cap } else { cap * (1.0 + 1e-12) };
            if f.kappa == 0.0 && next[i] > limit {
                return Err(SdfeError::NotConverged { iterations: it, step: next[i] - cap });
            }
        }
        let wrong_way = cur.iter().zip(&next).any(|(c, n)| {
            let slack = 1e-12 * (1.0 + c.abs());
            if descending {
                *n > c + slack
            } else {
                *n < c - slack
            }
        });
        monotone &= !wrong_way;
        let step = max_abs_diff(&cur, &next);
        cur = next;
        if step < opts.tol {
            return Ok(Run { profile: cur, iterations: it, monotone });
        }
        if it == opts.max_iter {
            return Err(SdfeError::NotConverged { iterations: it, step });
        }
    }
    unreachable!("max_iter >= 1")
}

/// Scale of the lower start relative to the upper limit.
const LOWER_SCALE: f64 = 1e-6;

/// Whether the lower iteration can start at zero: the clearing system must
/// stay solvable with all slopes at zero (every good consumed). Otherwise the
/// trivial profile is a degenerate fixed point, and the run starts at `t·B̄`
/// instead, `B̄` being the upper limit. Scaling every slope by `t ≤ 1` scales
/// `M - B̂_i` by at least `t`, so `BR(t·B̄) ≥ t·BR(B̄) = t·B̄`: a sub-solution
/// lying below every equilibrium that is at least `t·B̄`.
fn zero_start_ok(e: &Economy, regime: &Regime) -> bool {
    best_reply(e, regime, &vec![0.0; e.n_firms()]).is_ok()
}

pub fn solve(e: &Economy, regime: &Regime, opts: &SolveOptions) -> Result<Solved> {
    opts.check()?;
    let cap = opts.cap.unwrap_or(1e3 * e.max_demand_slope());
    let upper_start: Vec<f64> = e.firms().iter().map(|f| if f.kappa > 0.0 { 1.0 / f.kappa } else { cap }).collect();
    let upper = iterate(e, regime, upper_start.clone(), opts, cap, true)?;
    // The step test is absolute, so a run sliding towards the trivial profile
    // would otherwise look converged.
    if let Some(i) = (0..e.n_firms()).find(|&i| upper.profile[i] < COLLAPSE * upper_start[i]) {
        return Err(SdfeError::DegenerateReply(format!(
            "slopes collapse towards zero (firm {} at {:e}); no interior equilibrium",
            e.firms()[i].name,
            upper.profile[i]
        )));
    }

    let t = if zero_start_ok(e, regime) { 0.0 } else { LOWER_SCALE };
    let start = upper.profile.iter().map(|b| t * b).collect();
    let run = iterate(e, regime, start, opts, cap, false)?;
    let (lower, lower_iters, lower_monotone) = (run.profile, run.iterations, run.monotone);

    let bracket_gap = max_abs_diff(&upper.profile, &lower);
    let br = best_reply(e, regime, &upper.profile)?;
    let residual = max_abs_diff(&upper.profile, &br);
    let diagnostics = SolveDiagnostics {
        iterations_upper: upper.iterations,
        iterations_lower: lower_iters,
        bracket_gap,
        converged: true,
        unique_certified: bracket_gap <= CERTIFY_TOL,
        lower_start: t,
        monotone: upper.monotone && lower_monotone,
        lower,
        residual,
    };
    Ok(Solved { slopes: upper.profile, diagnostics })
}

#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub slopes: Vec<f64>,
    pub state: PriceQuantityState,
    pub impacts: Vec<DMatrix<f64>>,
    pub markups: Vec<DVector<f64>>,
    pub profits: Vec<f64>,
    pub welfare: f64,
    pub consumer_surplus: f64,
}

impl EquilibriumSolution {
    pub fn prices(&self) -> &DVector<f64> {
        &self.state.prices
    }
}

/// Everything observable at a slope profile, with price impacts (and hence
/// markups) taken from `regime`.
pub fn solution(e: &Economy, regime: &Regime, slopes: &[f64]) -> Result<EquilibriumSolution> {
    let state = clearing::clear(e, slopes)?;
    let mut impacts = Vec::with_capacity(e.n_firms());
    let mut markups = Vec::with_capacity(e.n_firms());
    let mut profits = Vec::with_capacity(e.n_firms());
    for (i, f) in e.firms().iter().enumerate() {
        let l = lambda_for(regime, e, slopes, i)?;
        markups.push(analysis::markup_vector(&l, &state.net_trades[i])?);
        impacts.push(l);
        let q = state.output_qty[i];
        profits.push(if slopes[i] == 0.0 { 0.0 } else { (1.0 / slopes[i] - 0.5 * f.kappa) * q * q });
    }
    let welfare = analysis::welfare(e, &state);
    let consumer_surplus = analysis::consumer_surplus(e, &state);
    Ok(EquilibriumSolution { slopes: slopes.to_vec(), state, impacts, markups, profits, welfare, consumer_surplus })
}

/// Hessian of the potential in slope space at `slopes`.
pub fn potential_hessian(e: &Economy, slopes: &[f64]) -> Result<DMatrix<f64>> {
    e.check_slopes(slopes)?;
    if slopes.iter().any(|&b| b <= 0.0) {
        return Err(SdfeError::DegenerateInput("potential Hessian needs all slopes > 0".into()));
    }
    let n = e.n_firms();
    let minv = linalg::inverse(&assemble_system(e, slopes)?.m)?;
    let vs: Vec<DVector<f64>> = (0..n).map(|i| e.lifted_tech(i)).collect::<Result<_>>()?;
    let a = DMatrix::from_fn(n, n, |i, j| (vs[i].transpose() * &minv * &vs[j])[(0, 0)]);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let bi = slopes[i];
        for j in 0..n {
            if i != j {
                h[(i, j)] = 2.0 * bi * slopes[j] * a[(i, j)].powi(2);
            }
        }
        let k = e.firms()[i].kappa;
        let curv = if k > 0.0 { 0.5 * k * bi / (1.0 - 0.5 * k * bi).powi(2) } else { 0.0 };
        h[(i, i)] = -curv - 2.0 * bi * a[(i, i)] + 2.0 * bi * bi * a[(i, i)].powi(2);
    }
    Ok(h)
}

/// `-H` strictly diagonally dominant by rows.
pub fn neg_strictly_diagonally_dominant(h: &DMatrix<f64>) -> bool {
    (0..h.nrows()).all(|i| {
        let off: f64 = (0..h.ncols()).filter(|&j| j != i).map(|j| h[(i, j)].abs()).sum();
        -h[(i, i)] > off
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::{horizontal_economy, vertical_economy};
    use crate::regimes::RegimeKind;
    use approx::assert_abs_diff_eq;

    const S2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn best_reply_examples() {
        let v1 = DVector::from_element(1, 1.0);
        assert_abs_diff_eq!(best_reply_slope(&DMatrix::identity(1, 1), &v1, 0.0).unwrap(), 1.0);
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, S2 - 1.0]);
        let v = DVector::from_vec(vec![1.0, -1.0]);
        assert_abs_diff_eq!(best_reply_slope(&l, &v, 0.0).unwrap(), 1.0 / S2, epsilon = 1e-14);
        assert_abs_diff_eq!(best_reply_slope(&DMatrix::zeros(1, 1), &v1, 0.5).unwrap(), 2.0);
        assert!(matches!(best_reply_slope(&DMatrix::zeros(1, 1), &v1, 0.0), Err(SdfeError::DegenerateReply(_))));
    }

    #[test]
    fn vertical_multilateral() {
        let e = vertical_economy();
        let s = solve(&e, &RegimeKind::Multilateral.into(), &SolveOptions::default()).unwrap();
        assert_abs_diff_eq!(s.slopes[0], S2, epsilon = 1e-9);
        assert_abs_diff_eq!(s.slopes[1], 1.0 / S2, epsilon = 1e-9);
        assert!(s.diagnostics.unique_certified, "{:?}", s.diagnostics);
        assert!(s.diagnostics.monotone);
    }

    #[test]
    fn vertical_unilateral() {
        let e = vertical_economy();
        let s = solve(&e, &RegimeKind::UnilateralInputs.into(), &SolveOptions::default()).unwrap();
        assert_abs_diff_eq!(s.slopes[0], 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(s.slopes[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn horizontal_three_firms() {
        let e = horizontal_economy(3, 1.0, 1.0, 1.0);
        let s = solve(&e, &RegimeKind::Multilateral.into(), &SolveOptions::default()).unwrap();
        for b in &s.slopes {
            assert_abs_diff_eq!(*b, 1.0 / S2, epsilon = 1e-10);
        }
    }

    #[test]
    fn competitive_blow_up_is_reported() {
        let e = horizontal_economy(3, 0.0, 1.0, 1.0);
        let r = solve(&e, &RegimeKind::Multilateral.into(), &SolveOptions::default());
        assert!(matches!(r, Err(SdfeError::NotConverged { .. })), "{r:?}");
    }

    #[test]
    fn profits() {
        let e = vertical_economy();
        let sol = solution(&e, &RegimeKind::Multilateral.into(), &[S2, 1.0 / S2]).unwrap();
        assert_abs_diff_eq!(sol.profits[0], (1.0 / S2) * (S2 * 0.5).powi(2), epsilon = 1e-12);
        assert_abs_diff_eq!(sol.profits[1], S2 * (1.0 - (3.0 - S2) / 2.0).powi(2), epsilon = 1e-12);
        let mono = horizontal_economy(1, 0.0, 1.0, 1.0);
        let sol = solution(&mono, &RegimeKind::Multilateral.into(), &[1.0]).unwrap();
        assert_abs_diff_eq!(sol.profits[0], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn walrasian_profit_is_labor_rent() {
        let e = horizontal_economy(2, 2.0, 1.0, 1.0);
        let sol = solution(&e, &RegimeKind::Multilateral.into(), &[0.5, 0.5]).unwrap();
        let q = sol.state.output_qty[0];
        assert_abs_diff_eq!(sol.profits[0], 1.0 * q * q, epsilon = 1e-14);
    }

    #[test]
    fn hessian_examples() {
        let e = vertical_economy();
        let h = potential_hessian(&e, &[S2, 1.0 / S2]).unwrap();
        assert!(neg_strictly_diagonally_dominant(&h));
        let mono = horizontal_economy(1, 0.0, 1.0, 1.0);
        let h = potential_hessian(&mono, &[1.0]).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], -0.5, epsilon = 1e-14);
        assert!(potential_hessian(&e, &[0.0, 1.0]).is_err());
    }
}
