//! Comparative experiments: regime comparison, vertical merger, depth sweep,
//! and per-layer surplus profiles. Every ordering reported here is recomputed
//! from solves.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::chain::{solve_chain, ChainRegime, ChainSolution, ChainSpec};
use crate::economy::Economy;
use crate::error::{Result, SdfeError};
use crate::regimes::RegimeKind;
use crate::solver::{solution, solve, SolveDiagnostics, SolveOptions};

#[derive(Debug, Clone)]
pub struct RegimeRow {
    pub regime: RegimeKind,
    pub slopes: Vec<f64>,
    pub prices: DVector<f64>,
    pub profits: Vec<f64>,
    /// Price of the consumed good when the consumer buys exactly one good.
    pub p0: Option<f64>,
    pub welfare: f64,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone)]
pub struct RegimeComparison {
    pub rows: Vec<RegimeRow>,
    /// Smallest `B^unilateral_i - B^multilateral_i` over firms.
    pub unilateral_margin: f64,
    /// Smallest `B^local_i - B^multilateral_i` over firms.
    pub local_margin: f64,
    /// `p0` strictly highest under multilateral (single consumed good only).
    pub p0_highest_multilateral: Option<bool>,
}

impl RegimeComparison {
    pub fn row(&self, regime: RegimeKind) -> Option<&RegimeRow> {
        self.rows.iter().find(|r| r.regime == regime)
    }

    pub fn slopes_dominate(&self) -> bool {
        self.unilateral_margin > 0.0 && self.local_margin > 0.0
    }
}

/// Solves under multilateral, unilateral-inputs and local price impact.
pub fn compare_regimes(e: &Economy, opts: &SolveOptions) -> Result<RegimeComparison> {
    let kinds = [RegimeKind::Multilateral, RegimeKind::UnilateralInputs, RegimeKind::Local];
    let mut rows = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let regime = kind.into();
        let solved = solve(e, &regime, opts)?;
        let sol = solution(e, &regime, &solved.slopes)?;
        let c = e.consumer();
        let p0 = (c.goods.len() == 1).then(|| sol.state.prices[c.goods[0]]);
        rows.push(RegimeRow {
            regime: kind,
            slopes: solved.slopes,
            prices: sol.state.prices,
            profits: sol.profits,
            p0,
            welfare: sol.welfare,
            diagnostics: solved.diagnostics,
        });
    }
    let margin = |r: &RegimeRow| r.slopes.iter().zip(&rows[0].slopes).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
    let unilateral_margin = margin(&rows[1]);
    let local_margin = margin(&rows[2]);
    let p0_highest_multilateral = rows[0].p0.map(|p| rows[1..].iter().all(|r| p > r.p0.unwrap()));
    Ok(RegimeComparison { rows, unilateral_margin, local_margin, p0_highest_multilateral })
}

/// Regimes the merger study compares.
pub const MERGER_REGIMES: [ChainRegime; 3] =
    [ChainRegime::Multilateral, ChainRegime::UnilateralInputs, ChainRegime::SequentialCournot];

#[derive(Debug, Clone)]
pub struct MergerPoint {
    pub n1: f64,
    pub regime: ChainRegime,
    pub b1: f64,
    pub b2: f64,
    pub p_pre: f64,
    pub cs_pre: f64,
    pub w_pre: f64,
    /// Consumer surplus after minus before; positive means the merger helps.
    pub delta_cs: f64,
    /// Total welfare (utility minus labor) after minus before.
    pub delta_w: f64,
}

#[derive(Debug, Clone)]
pub struct Threshold {
    pub regime: ChainRegime,
    /// Bisection bracket for the root of `n1 B_1(n1) = 2k`.
    pub lo: f64,
    pub hi: f64,
    /// Consumer-surplus change is positive at `lo` and negative at `hi`.
    pub welfare_flips: bool,
}

impl Threshold {
    pub fn n(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone)]
pub struct MergerStudy {
    pub k: f64,
    pub b_c: f64,
    pub a: f64,
    pub b_m: f64,
    pub p_post: f64,
    pub cs_post: f64,
    pub w_post: f64,
    pub grid: Vec<MergerPoint>,
    /// `n_*` (unilateral).
    pub lower: Threshold,
    /// `n^*` (multilateral).
    pub upper: Threshold,
    /// Sequential Cournot threshold, when it falls inside the search range.
    pub cournot: Option<Threshold>,
    /// Inside `(n_*, n^*)` multilateral finds the merger beneficial while
    /// unilateral finds it harmful.
    pub disagree_inside: bool,
    /// Where the change in total welfare (not consumer surplus) changes sign,
    /// per regime, when it does so inside the search range.
    pub total_welfare_roots: Vec<(ChainRegime, f64)>,
}

pub const MERGER_TOL: f64 = 1e-6;

fn pre_merger_spec(n1: f64, k: f64, b_c: f64, a: f64) -> ChainSpec {
    ChainSpec { firms: vec![n1, 1.0], kappa: vec![1.0 / k, 0.0], b_c, a, last_layer_labor: 0.0 }
}

fn merger_point(n1: f64, regime: ChainRegime, k: f64, b_c: f64, a: f64, post: (f64, f64)) -> Result<MergerPoint> {
    let spec = pre_merger_spec(n1, k, b_c, a);
    let sol = solve_chain(&spec, regime)?;
    let q = sol.total_quantity;
    let cs_pre = q * q / (2.0 * b_c);
    Ok(MergerPoint {
        n1,
        regime,
        b1: sol.slopes[0],
        b2: sol.slopes[1],
        p_pre: sol.prices[0],
        cs_pre,
        w_pre: sol.welfare,
        delta_cs: post.0 - cs_pre,
        delta_w: post.1 - sol.welfare,
    })
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let flo = f(lo)?;
    while hi - lo > MERGER_TOL {
        let mid = 0.5 * (lo + hi);
        if (f(mid)? < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Vertical merger between the single upstream supplier (unbounded capacity)
/// and one of `n1` downstream firms (capacity `k`), after which the merged
/// firm forecloses its rivals and becomes a monopolist.
pub fn merger_study(n1_max: usize, k: f64, b_c: f64, a: f64) -> Result<MergerStudy> {
    if n1_max < 2 || !(k > 0.0 && b_c > 0.0 && a > 0.0) {
        return Err(SdfeError::Invalid("merger study needs n1_max >= 2 and k, B_c, A > 0".into()));
    }
    let b_m = 1.0 / (1.0 / k + 1.0 / b_c);
    let p_post = a / (b_c + b_m);
    let q_post = b_m * p_post;
    let cs_post = q_post * q_post / (2.0 * b_c);
    let w_post = q_post * (a / b_c - q_post / (2.0 * b_c) - 0.5 * q_post / k);
    let post = (cs_post, w_post);

    let grid = (2..=n1_max)
        .flat_map(|n| MERGER_REGIMES.iter().map(move |&r| (n as f64, r)))
        .map(|(n, r)| merger_point(n, r, k, b_c, a, post))
        .collect::<Result<Vec<_>>>()?;

    let hi = n1_max as f64;
    let threshold = |regime: ChainRegime| -> Result<Option<Threshold>> {
        let g = |n: f64| -> Result<f64> {
            let sol = solve_chain(&pre_merger_spec(n, k, b_c, a), regime)?;
            Ok(n * sol.slopes[0] - 2.0 * k)
        };
        if !(g(2.0)? < 0.0 && g(hi)? > 0.0) {
            return Ok(None);
        }
        let (lo, hi) = bisect(2.0, hi, g)?;
        let at_lo = merger_point(lo, regime, k, b_c, a, post)?;
        let at_hi = merger_point(hi, regime, k, b_c, a, post)?;
        Ok(Some(Threshold { regime, lo, hi, welfare_flips: at_lo.delta_cs > 0.0 && at_hi.delta_cs < 0.0 }))
    };
    let not_bracketed = |r: ChainRegime| SdfeError::ThresholdNotBracketed { regime: r.name().into(), lo: 2.0, hi };
    let lower =
        threshold(ChainRegime::UnilateralInputs)?.ok_or_else(|| not_bracketed(ChainRegime::UnilateralInputs))?;
    let upper = threshold(ChainRegime::Multilateral)?.ok_or_else(|| not_bracketed(ChainRegime::Multilateral))?;
    let cournot = threshold(ChainRegime::SequentialCournot)?;

    let disagree_inside = if lower.hi < upper.lo {
        let mid = 0.5 * (lower.n() + upper.n());
        merger_point(mid, ChainRegime::Multilateral, k, b_c, a, post)?.delta_cs > 0.0
            && merger_point(mid, ChainRegime::UnilateralInputs, k, b_c, a, post)?.delta_cs < 0.0
    } else {
        false
    };

    let mut total_welfare_roots = Vec::new();
    for regime in MERGER_REGIMES {
        let dw = |n: f64| Ok(merger_point(n, regime, k, b_c, a, post)?.delta_w);
        if dw(2.0)? * dw(hi)? < 0.0 {
            let (lo, h) = bisect(2.0, hi, dw)?;
            total_welfare_roots.push((regime, 0.5 * (lo + h)));
        }
    }

    Ok(MergerStudy {
        k,
        b_c,
        a,
        b_m,
        p_post,
        cs_post,
        w_post,
        grid,
        lower,
        upper,
        cournot,
        disagree_inside,
        total_welfare_roots,
    })
}

#[derive(Debug, Clone)]
pub struct DepthRow {
    pub n_layers: usize,
    pub q_multi: f64,
    pub q_local: f64,
    pub w_multi: f64,
    pub w_local: f64,
}

impl DepthRow {
    pub fn q_ratio(&self) -> f64 {
        self.q_local / self.q_multi
    }

    pub fn w_ratio(&self) -> f64 {
        self.w_local / self.w_multi
    }
}

/// Chains of depth 2..=n_max with two firms per layer, multilateral vs local.
pub fn depth_sweep(n_max: usize, k: f64, b_c: f64, a: f64) -> Result<Vec<DepthRow>> {
    if n_max < 2 {
        return Err(SdfeError::Invalid("depth sweep needs N_max >= 2".into()));
    }
    (2..=n_max)
        .into_par_iter()
        .map(|n| {
            let spec = ChainSpec::homogeneous(n, 2, k, b_c, a);
            let m = solve_chain(&spec, ChainRegime::Multilateral)?;
            let l = solve_chain(&spec, ChainRegime::Local)?;
            Ok(DepthRow {
                n_layers: n,
                q_multi: m.total_quantity,
                q_local: l.total_quantity,
                w_multi: m.welfare,
                w_local: l.welfare,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SurplusProfile {
    pub solution: ChainSolution,
    /// All firm profits equal within relative `1e-8`.
    pub equal_profits: bool,
    pub profits_increasing_upstream: bool,
    pub profits_increasing_downstream: bool,
    pub markups_increasing_upstream: bool,
    pub markdowns_increasing_downstream: bool,
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

/// Per-layer markups, markdowns and profits with the orderings flagged.
/// Layer 1 is the most downstream, so "upstream" means increasing index.
pub fn surplus_profile(spec: &ChainSpec, regime: ChainRegime) -> Result<SurplusProfile> {
    let solution = solve_chain(spec, regime)?;
    let p = &solution.profits;
    let scale = p.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let equal_profits = p.iter().all(|x| (x - p[0]).abs() <= 1e-8 * scale);
    let down_profits: Vec<f64> = p.iter().rev().copied().collect();
    let n = spec.n_layers();
    // the last layer has no inputs, so its markdown is not part of the ordering
    let md: Vec<f64> = solution.markdown_in[..n.saturating_sub(1)].iter().rev().copied().collect();
    Ok(SurplusProfile {
        equal_profits,
        profits_increasing_upstream: strictly_increasing(p),
        profits_increasing_downstream: strictly_increasing(&down_profits),
        markups_increasing_upstream: strictly_increasing(&solution.markup_out),
        markdowns_increasing_downstream: strictly_increasing(&md),
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::vertical_economy;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vertical_comparison() {
        let c = compare_regimes(&vertical_economy(), &SolveOptions::default()).unwrap();
        let uni = c.row(RegimeKind::UnilateralInputs).unwrap();
        assert_abs_diff_eq!(uni.slopes[0], 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(uni.slopes[1], 1.0, epsilon = 1e-9);
        assert!(c.unilateral_margin > 0.0);
        // both goods are consumed, so no single final price
        assert!(c.p0_highest_multilateral.is_none());
        let multi = c.row(RegimeKind::Multilateral).unwrap();
        assert!(uni.prices[1] < multi.prices[1]);
        assert!(uni.welfare > multi.welfare);
    }

    #[test]
    fn chain_comparison_dominates() {
        let spec = ChainSpec::homogeneous(2, 2, 1.0, 1.0, 1.0);
        let e = crate::chain::chain_to_economy(&spec).unwrap();
        let c = compare_regimes(&e, &SolveOptions::default()).unwrap();
        assert!(c.slopes_dominate());
        assert_eq!(c.p0_highest_multilateral, Some(true));
    }

    #[test]
    fn post_merger_slope() {
        let s = merger_study(8, 1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(s.b_m, 0.5, epsilon = 1e-15);
        assert!(s.lower.n() < s.upper.n());
    }

    #[test]
    fn merger_rejects_bad_range() {
        assert!(merger_study(1, 1.0, 1.0, 1.0).is_err());
        assert!(matches!(merger_study(2, 1.0, 1.0, 1.0), Err(SdfeError::ThresholdNotBracketed { .. })));
    }

    #[test]
    fn depth_sweep_starts_above_one() {
        let rows = depth_sweep(4, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(rows.iter().map(|r| r.n_layers).collect::<Vec<_>>(), vec![2, 3, 4]);
        assert!(rows[0].q_ratio() > 1.0);
    }

    #[test]
    fn surplus_profile_ordering_by_layer_size() {
        // more firms in a layer means a smaller layer profit
        let spec =
            ChainSpec { firms: vec![2.0, 4.0, 3.0], kappa: vec![1.0; 3], b_c: 1.0, a: 1.0, last_layer_labor: 0.0 };
        let s = surplus_profile(&spec, ChainRegime::Multilateral).unwrap();
        let lp = &s.solution.layer_profits;
        for i in 0..3 {
            for j in 0..3 {
                if spec.firms[i] >= spec.firms[j] {
                    assert!(lp[i] <= lp[j] * (1.0 + 1e-10), "layers {i},{j}: {lp:?}");
                }
            }
        }
    }
}
