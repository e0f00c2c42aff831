//! Imperfect complements / substitutes among inputs. Each firm chooses a full
//! symmetric coefficient block `B_i` instead of a single slope; the best reply
//! is `(C_i⁻¹ + Λ_i)⁻¹` where `C_i` is the competitive block.

use nalgebra::{DMatrix, DVector};

use crate::economy::Economy;
use crate::error::{Result, SdfeError};
use crate::linalg::{inverse, is_positive_definite, min_eigenvalue, submatrix, subvector, symmetrize};
use crate::regimes::RegimeKind;

/// Eigenvalue tolerance for p.s.d.-order comparisons.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SubstitutesTech {
    /// Input interaction block, one row per input in ascending good order.
    pub sigma: DMatrix<f64>,
    /// Input intensities, aligned with `sigma`.
    pub omega: DVector<f64>,
    pub alpha: f64,
}

impl SubstitutesTech {
    pub fn check(&self, n_inputs: usize) -> std::result::Result<(), String> {
        let s = &self.sigma;
        if s.nrows() != n_inputs || s.ncols() != n_inputs {
            return Err(format!("sigma must be {n_inputs}x{n_inputs}, got {}x{}", s.nrows(), s.ncols()));
        }
        if self.omega.len() != n_inputs {
            return Err(format!("omega must have {n_inputs} entries, got {}", self.omega.len()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err("alpha must be positive".into());
        }
        if self.omega.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err("omega must be nonnegative".into());
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err("sigma has non-finite entries".into());
        }
        for r in 0..n_inputs {
            let off: f64 = (0..n_inputs).filter(|&c| c != r).map(|c| s[(r, c)].abs()).sum();
            if s[(r, r)] <= off {
                return Err(format!("sigma is not strictly diagonally dominant in row {r}"));
            }
        }
        if n_inputs > 0 && !is_positive_definite(s) {
            return Err("sigma must be symmetric positive definite".into());
        }
        Ok(())
    }

    /// `C⁻¹ = u u'/α² + diag(0, 2Σ)` with `u = (1, ω)`.
    pub fn cost_inverse(&self) -> DMatrix<f64> {
        let d = self.omega.len() + 1;
        let mut u = DVector::from_element(d, 1.0);
        u.rows_mut(1, d - 1).copy_from(&self.omega);
        let mut k = &u * u.transpose() / (self.alpha * self.alpha);
        let mut inner = k.view_mut((1, 1), (d - 1, d - 1));
        inner += &self.sigma * 2.0;
        k
    }
}

/// The competitive (price-taking) coefficient block `C_i`.
pub fn cost_matrix(tech: &SubstitutesTech) -> Result<DMatrix<f64>> {
    let c = symmetrize(&inverse(&tech.cost_inverse())?);
    if !is_positive_definite(&c) {
        return Err(SdfeError::NotPositiveDefinite("cost matrix".into()));
    }
    Ok(c)
}

/// `(C⁻¹ + Λ)⁻¹`, given `C⁻¹` directly.
pub fn best_reply_block(cost_inverse: &DMatrix<f64>, impact: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if cost_inverse.shape() != impact.shape() {
        return Err(SdfeError::DimensionMismatch { expected: cost_inverse.nrows(), got: impact.nrows() });
    }
    let k = symmetrize(&(cost_inverse + impact));
    if !is_positive_definite(&k) {
        return Err(SdfeError::NotPositiveDefinite("C⁻¹ + Λ".into()));
    }
    let b = symmetrize(&inverse(&k)?);
    if min_eigenvalue(&b) <= 0.0 {
        return Err(SdfeError::NotPositiveDefinite("best reply block".into()));
    }
    Ok(b)
}

fn techs(e: &Economy) -> Result<Vec<&SubstitutesTech>> {
    e.firms()
        .iter()
        .map(|f| {
            f.substitutes
                .as_ref()
                .ok_or_else(|| SdfeError::Invalid(format!("firm {} has no substitutes technology", f.name)))
        })
        .collect()
}

/// `M = Σ lift(B_i) + B̂_c`, skipping firm `skip`.
fn assemble(e: &Economy, blocks: &[DMatrix<f64>], skip: Option<usize>) -> Result<DMatrix<f64>> {
    let mut m = e.lifted_slope();
    for (i, b) in blocks.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let goods = e.goods_of(i)?;
        for (r, &gr) in goods.iter().enumerate() {
            for (c, &gc) in goods.iter().enumerate() {
                m[(gr, gc)] += b[(r, c)];
            }
        }
    }
    Ok(m)
}

/// Price impact of firm `i` under the given profile of blocks.
pub fn block_impact(e: &Economy, kind: RegimeKind, blocks: &[DMatrix<f64>], i: usize) -> Result<DMatrix<f64>> {
    let goods = e.goods_of(i)?;
    let m = assemble(e, blocks, Some(i))?;
    match kind {
        RegimeKind::Multilateral => Ok(symmetrize(&submatrix(&inverse(&m)?, &goods, &goods))),
        RegimeKind::Local => Ok(symmetrize(&inverse(&submatrix(&m, &goods, &goods))?)),
        other => Err(SdfeError::Invalid(format!("regime {other} is not available with substitutes"))),
    }
}

#[derive(Debug, Clone)]
pub struct SubstitutesOptions {
    pub regime: RegimeKind,
    pub tol: f64,
    pub max_iter: usize,
    /// Replace every price impact by zero (price-taking check).
    pub zero_impact: bool,
}

impl Default for SubstitutesOptions {
    fn default() -> Self {
        Self { regime: RegimeKind::Multilateral, tol: 1e-12, max_iter: 10_000, zero_impact: false }
    }
}

#[derive(Debug, Clone)]
pub struct BlockState {
    pub blocks: Vec<DMatrix<f64>>,
    pub prices: DVector<f64>,
    /// Net trades of each firm on its own goods, output first.
    pub trades: Vec<DVector<f64>>,
    pub impacts: Vec<DMatrix<f64>>,
    /// `μ_i = Λ_i q_i`.
    pub markups: Vec<DVector<f64>>,
    pub profits: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SubstitutesSolution {
    pub maximal: BlockState,
    pub minimal: BlockState,
    pub iterations_upper: usize,
    pub iterations_lower: usize,
    /// Scale of the start profile from below (`0` when the zero profile works).
    pub lower_start: f64,
    /// Steps where `lower ⪯ upper`, `upper` decreasing or `lower` increasing failed.
    pub bracket_violations: usize,
    /// Smallest eigenvalue seen across all bracket comparisons.
    pub worst_bracket_eigenvalue: f64,
    /// Largest entrywise gap between the two limits.
    pub gap: f64,
}

impl SubstitutesSolution {
    pub fn bracket_ok(&self) -> bool {
        self.bracket_violations == 0
    }
}

fn best_reply_profile(
    e: &Economy,
    opts: &SubstitutesOptions,
    kinv: &[DMatrix<f64>],
    blocks: &[DMatrix<f64>],
) -> Result<Vec<DMatrix<f64>>> {
    (0..blocks.len())
        .map(|i| {
            if opts.zero_impact {
                return inverse(&kinv[i]).map(|c| symmetrize(&c));
            }
            let lam = block_impact(e, opts.regime, blocks, i)?;
            best_reply_block(&kinv[i], &lam)
        })
        .collect()
}

fn step_size(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

fn state(
    e: &Economy,
    opts: &SubstitutesOptions,
    kinv: &[DMatrix<f64>],
    blocks: Vec<DMatrix<f64>>,
) -> Result<BlockState> {
    let m = assemble(e, &blocks, None)?;
    let prices = inverse(&m)? * e.lifted_intercept();
    let n = blocks.len();
    let mut trades = Vec::with_capacity(n);
    let mut impacts = Vec::with_capacity(n);
    let mut markups = Vec::with_capacity(n);
    let mut profits = Vec::with_capacity(n);
    for (i, b) in blocks.iter().enumerate() {
        let p = subvector(&prices, &e.goods_of(i)?);
        let q = b * &p;
        let lam =
            if opts.zero_impact { DMatrix::zeros(q.len(), q.len()) } else { block_impact(e, opts.regime, &blocks, i)? };
        markups.push(&lam * &q);
        profits.push(p.dot(&q) - 0.5 * q.dot(&(&kinv[i] * &q)));
        impacts.push(lam);
        trades.push(q);
    }
    Ok(BlockState { blocks, prices, trades, impacts, markups, profits })
}

/// Maximal and minimal equilibria by monotone iteration from `(C_i)` downward
/// and from (near) zero upward, checking the bracket at every step.
pub fn solve_substitutes(e: &Economy, opts: &SubstitutesOptions) -> Result<SubstitutesSolution> {
    if !matches!(opts.regime, RegimeKind::Multilateral | RegimeKind::Local) {
        return Err(SdfeError::Invalid(format!("regime {} is not available with substitutes", opts.regime)));
    }
    let kinv: Vec<DMatrix<f64>> = techs(e)?.iter().map(|t| t.cost_inverse()).collect();
    let costs = techs(e)?.into_iter().map(cost_matrix).collect::<Result<Vec<_>>>()?;

    // From below: the zero profile leaves M − B̂_i singular whenever some good is
    // not consumed, so fall back to the largest small multiple of C that is a
    // sub-solution.
    let zero: Vec<DMatrix<f64>> = costs.iter().map(|c| DMatrix::zeros(c.nrows(), c.ncols())).collect();
    let mut lower_start = 0.0;
    let mut lower = zero.clone();
    if best_reply_profile(e, opts, &kinv, &zero).is_err() {
        let mut found = None;
        for j in 3..=12 {
            let eps = 10f64.powi(-j);
            let start: Vec<_> = costs.iter().map(|c| c * eps).collect();
            if let Ok(br) = best_reply_profile(e, opts, &kinv, &start) {
                if br.iter().zip(&start).all(|(b, s)| min_eigenvalue(&(b - s)) >= -PSD_TOL) {
                    found = Some((eps, start));
                    break;
                }
            }
        }
        let (eps, start) =
            found.ok_or_else(|| SdfeError::DegenerateReply("no sub-solution found near the zero profile".into()))?;
        lower_start = eps;
        lower = start;
    }

    let mut upper = costs.clone();
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let mut check = |hi: &[DMatrix<f64>], lo: &[DMatrix<f64>]| {
        for (h, l) in hi.iter().zip(lo) {
            let ev = min_eigenvalue(&(h - l));
            worst = worst.min(ev);
            if ev < -PSD_TOL {
                violations += 1;
            }
        }
    };
    check(&upper, &lower);

    let (mut it_up, mut it_lo) = (0, 0);
    let (mut done_up, mut done_lo) = (false, false);
    for _ in 0..opts.max_iter {
        if done_up && done_lo {
            break;
        }
        if !done_up {
            let next = best_reply_profile(e, opts, &kinv, &upper)?;
            check(&upper, &next);
            let step = step_size(&next, &upper);
            let scale = upper.iter().map(|b| b.amax()).fold(1.0, f64::max);
            upper = next;
            it_up += 1;
            done_up = step <= opts.tol * scale;
        }
        if !done_lo {
            let next = best_reply_profile(e, opts, &kinv, &lower)?;
            check(&next, &lower);
            let step = step_size(&next, &lower);
            let scale = lower.iter().map(|b| b.amax()).fold(1.0, f64::max);
            lower = next;
            it_lo += 1;
            done_lo = step <= opts.tol * scale;
        }
        check(&upper, &lower);
    }
    if !(done_up && done_lo) {
        let step = if done_up { f64::NAN } else { step_size(&best_reply_profile(e, opts, &kinv, &upper)?, &upper) };
        return Err(SdfeError::NotConverged { iterations: opts.max_iter, step });
    }

    let gap = step_size(&upper, &lower);
    Ok(SubstitutesSolution {
        maximal: state(e, opts, &kinv, upper)?,
        minimal: state(e, opts, &kinv, lower)?,
        iterations_upper: it_up,
        iterations_lower: it_lo,
        lower_start,
        bracket_violations: violations,
        worst_bracket_eigenvalue: worst,
        gap,
    })
}

/// Substitutes technologies that approach the perfect-complement firm of the
/// core model as `alpha → 0`: along the technology ray the quadratic cost
/// reduces to `κ q²/2`, and off the ray it costs `1/α²`. Input-free firms are
/// matched exactly with `α = 1/√κ`. Requires `f_L = 0` and `κ > 0`.
pub fn perfect_complement_limit(e: &Economy, alpha: f64) -> Result<Economy> {
    let mut firms = e.firms().to_vec();
    for f in &mut firms {
        if f.f_l != 0.0 || !(f.kappa > 0.0) {
            return Err(SdfeError::Invalid(format!(
                "firm {}: the complement limit needs f_L = 0 and kappa > 0",
                f.name
            )));
        }
        let m = f.inputs.len();
        f.substitutes = Some(if m == 0 {
            SubstitutesTech { sigma: DMatrix::zeros(0, 0), omega: DVector::zeros(0), alpha: 1.0 / f.kappa.sqrt() }
        } else {
            let mf = m as f64;
            SubstitutesTech {
                sigma: DMatrix::from_diagonal(&DVector::from_iterator(
                    m,
                    f.inputs.iter().map(|&(_, c)| f.kappa / (2.0 * mf * c * c)),
                )),
                omega: DVector::from_iterator(m, f.inputs.iter().map(|&(_, c)| 1.0 / (mf * c))),
                alpha,
            }
        });
    }
    Economy::new(e.goods().to_vec(), firms, e.consumer().clone())
}
