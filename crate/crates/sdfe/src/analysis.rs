//! Markups and markdowns, a finite-difference cross-check, welfare, and the
//! goods-network (centrality) representation of prices and markups.

use nalgebra::{DMatrix, DVector};

use crate::clearing::{self, assemble_system, system_without, PriceQuantityState};
use crate::economy::Economy;
use crate::error::{Result, SdfeError};
use crate::linalg;
use crate::regimes::{cournot_profile, partition_for, Regime, RegimeKind};

/// `μ_i = Λ_i q_i`: first entry is the output markup, input entries are
/// minus the markdowns.
pub fn markup_vector(impact: &DMatrix<f64>, net_trades: &DVector<f64>) -> Result<DVector<f64>> {
    if impact.ncols() != net_trades.len() {
        return Err(SdfeError::DimensionMismatch { expected: impact.ncols(), got: net_trades.len() });
    }
    Ok(impact * net_trades)
}

/// Prices firm `i` would face if it traded `x` (in its canonical good order)
/// while everyone else keeps their schedules, computed by re-clearing the
/// markets the regime lets the firm move: all of them (multilateral), only the
/// goods it trades (local), its down- or up-set (unilateral), or all markets
/// with same-good rivals holding their quantities (Cournot).
pub fn residual_prices(
    e: &Economy,
    regime: &Regime,
    slopes: &[f64],
    i: usize,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let idx = e.goods_of(i)?;
    if x.len() != idx.len() {
        return Err(SdfeError::DimensionMismatch { expected: idx.len(), got: x.len() });
    }
    let base = clearing::clear(e, slopes)?;
    let m = e.n_goods();
    let free: Vec<usize> = match regime.kind {
        RegimeKind::Multilateral | RegimeKind::Cournot => (0..m).collect(),
        RegimeKind::Local => {
            let mut s = idx.clone();
            s.sort_unstable();
            s
        }
        RegimeKind::UnilateralInputs => partition_for(regime, e, i)?.0,
        RegimeKind::UnilateralOutputs => partition_for(regime, e, i)?.1,
    };
    let frozen: Vec<bool> = match regime.kind {
        RegimeKind::Cournot => {
            let cp = cournot_profile(e, slopes, i)?;
            (0..e.n_firms()).map(|j| cp[j] != slopes[j]).collect()
        }
        _ => vec![false; e.n_firms()],
    };

    let mut mt = e.lifted_slope();
    let mut at = e.lifted_intercept();
    for j in 0..e.n_firms() {
        if j == i {
            continue;
        }
        let v = e.lifted_tech(j)?;
        if frozen[j] {
            at -= base.output_qty[j] * &v;
        } else {
            mt += slopes[j] * &v * v.transpose();
            at += (slopes[j] * e.firms()[j].f_l) * &v;
        }
    }
    for (k, &g) in idx.iter().enumerate() {
        at[g] -= x[k];
    }
    let mut p = base.prices.clone();
    if free.is_empty() {
        return Ok(p);
    }
    let fixed: Vec<usize> = (0..m).filter(|g| !free.contains(g)).collect();
    let rhs =
        linalg::subvector(&at, &free) - linalg::submatrix(&mt, &free, &fixed) * linalg::subvector(&base.prices, &fixed);
    let pf = linalg::solve(&linalg::submatrix(&mt, &free, &free), &rhs)?;
    for (k, &g) in free.iter().enumerate() {
        p[g] = pf[k];
    }
    Ok(p)
}

/// Markup/markdown vector from explicit marginal cost and marginal revenue
/// products, differentiated numerically along the residual schedule.
pub fn markup_fd_oracle(e: &Economy, regime: &Regime, slopes: &[f64], i: usize) -> Result<DVector<f64>> {
    let firm = e.firm(i)?.clone();
    let v = e.tech_vector(i)?;
    let state = clearing::clear(e, slopes)?;
    let q0 = state.output_qty[i];
    if q0.abs() < 1e-12 {
        return Err(SdfeError::DegenerateInput(format!("firm {} produces nothing", firm.name)));
    }
    let h = 1e-5 * (1.0 + q0.abs());
    let prices_at = |q: f64| residual_prices(e, regime, slopes, i, &(&v * q));
    let labor = |q: f64| firm.f_l * q + 0.5 * firm.kappa * q * q;

    let cost = |q: f64| -> Result<f64> {
        let p = prices_at(q)?;
        Ok(firm.inputs.iter().map(|&(g, f)| p[g] * q * f).sum::<f64>() + labor(q))
    };
    let p0 = &state.prices;
    let mut mu = DVector::zeros(v.len());
    mu[0] = p0[firm.output] - (cost(q0 + h)? - cost(q0 - h)?) / (2.0 * h);

    let idx = e.goods_of(i)?;
    for (k, &(g, f)) in firm.inputs.iter().enumerate() {
        // revenue product as a function of the amount z of input g bought
        let revenue = |z: f64| -> Result<f64> {
            let q = z / f;
            let p = prices_at(q)?;
            let vp: f64 = idx.iter().zip(v.iter()).map(|(&h, &c)| c * p[h]).sum();
            Ok(q * vp + p[g] * z - labor(q))
        };
        let z0 = f * q0;
        let hz = h * f;
        let marginal = (revenue(z0 + hz)? - revenue(z0 - hz)?) / (2.0 * hz);
        mu[k + 1] = -(marginal - p0[g]);
    }
    Ok(mu)
}

/// `q_c' B_c^{-1} (A - q_c / 2) - Σ ℓ_i`.
pub fn welfare(e: &Economy, state: &PriceQuantityState) -> f64 {
    let c = e.consumer();
    let binv = c.slope.clone().try_inverse().expect("B_c is positive definite");
    let qc = &state.consumption;
    let utility = (c.intercept.transpose() * &binv * qc)[(0, 0)] - 0.5 * (qc.transpose() * &binv * qc)[(0, 0)];
    utility - state.labor.iter().sum::<f64>()
}

/// Utility net of expenditure, `q_c' B_c^{-1} q_c / 2` for linear demand.
pub fn consumer_surplus(e: &Economy, state: &PriceQuantityState) -> f64 {
    let binv = e.consumer().slope.clone().try_inverse().expect("B_c is positive definite");
    let qc = &state.consumption;
    0.5 * (qc.transpose() * binv * qc)[(0, 0)]
}

/// `G_gh = -M_gh / M_gg` (zero diagonal) and `D = diag(M)`, optionally with
/// firm `removed` taken out of `M`.
#[derive(Debug, Clone)]
pub struct GoodsNetwork {
    pub g: DMatrix<f64>,
    pub d: DVector<f64>,
    pub removed_firm: Option<usize>,
}

pub fn goods_network(e: &Economy, slopes: &[f64], removed_firm: Option<usize>) -> Result<GoodsNetwork> {
    let m = match removed_firm {
        None => assemble_system(e, slopes)?.m,
        Some(i) => system_without(e, slopes, i)?,
    };
    let d = m.diagonal();
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(SdfeError::SingularSystem { cond: f64::INFINITY });
    }
    let g = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| if r == c { 0.0 } else { -m[(r, c)] / d[r] });
    Ok(GoodsNetwork { g, d, removed_firm })
}

impl GoodsNetwork {
    /// `(I - G)^{-1} D^{-1}`, which equals `M^{-1}` since `M = D (I - G)`.
    pub fn resolvent(&self) -> Result<DMatrix<f64>> {
        let n = self.g.nrows();
        let inv = linalg::inverse(&(DMatrix::identity(n, n) - &self.g))?;
        Ok(inv * DMatrix::from_diagonal(&self.d.map(|x| 1.0 / x)))
    }
}

/// `p = (I - G)^{-1} D^{-1} Ā`.
pub fn centrality_prices(gn: &GoodsNetwork, a_bar: &DVector<f64>) -> Result<DVector<f64>> {
    if a_bar.len() != gn.d.len() {
        return Err(SdfeError::DimensionMismatch { expected: gn.d.len(), got: a_bar.len() });
    }
    Ok(gn.resolvent()? * a_bar)
}

/// The other operator ordering, `D^{-1} (I - G)^{-1} Ā`. Kept only to show
/// that it is not the clearing price unless `D` commutes with `G`.
pub fn centrality_prices_left_scaled(gn: &GoodsNetwork, a_bar: &DVector<f64>) -> Result<DVector<f64>> {
    let n = gn.d.len();
    let inv = linalg::inverse(&(DMatrix::identity(n, n) - &gn.g))?;
    Ok(DMatrix::from_diagonal(&gn.d.map(|x| 1.0 / x)) * inv * a_bar)
}

/// Centrality prices together with their max deviation from `M^{-1} Ā`.
pub fn centrality_prices_checked(e: &Economy, slopes: &[f64]) -> Result<(DVector<f64>, f64)> {
    let sys = assemble_system(e, slopes)?;
    let p = centrality_prices(&goods_network(e, slopes, None)?, &sys.a_bar)?;
    let direct = linalg::solve(&sys.m, &sys.a_bar)?;
    let dev = (&p - direct).amax();
    Ok((p, dev))
}

/// `q_i^out [(I - G_{-i})^{-1} D_{-i}^{-1}]_{𝒩(i)} v_i`.
pub fn markup_centrality(e: &Economy, slopes: &[f64], i: usize) -> Result<DVector<f64>> {
    let gn = goods_network(e, slopes, Some(i))?;
    let idx = e.goods_of(i)?;
    let k = linalg::submatrix(&gn.resolvent()?, &idx, &idx);
    let q = clearing::clear(e, slopes)?.output_qty[i];
    Ok(k * e.tech_vector(i)? * q)
}
