//! Aggregate clearing system, prices, quantities and multilateral price impact.

use nalgebra::{DMatrix, DVector};

use crate::economy::Economy;
use crate::error::{Result, SdfeError};
use crate::linalg;

/// `M = Σ_j B_j v̂_j v̂_j' + B̂_c` and `Ā = Â + Σ_j B_j f_jL v̂_j`.
#[derive(Debug, Clone)]
pub struct ClearingSystem {
    pub m: DMatrix<f64>,
    pub a_bar: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct PriceQuantityState {
    pub prices: DVector<f64>,
    pub output_qty: Vec<f64>,
    /// `q_i = q_i^out v_i`, in the firm's canonical good order.
    pub net_trades: Vec<DVector<f64>>,
    pub labor: Vec<f64>,
    /// Consumer bundle over the consumed goods, `A - B_c p_c`.
    pub consumption: DVector<f64>,
    pub negative_prices: Vec<usize>,
    pub negative_quantities: Vec<usize>,
}

pub fn assemble_system(e: &Economy, slopes: &[f64]) -> Result<ClearingSystem> {
    e.check_slopes(slopes)?;
    let mut m = e.lifted_slope();
    let mut a_bar = e.lifted_intercept();
    for (i, &b) in slopes.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        let v = e.lifted_tech(i)?;
        m += b * &v * v.transpose();
        a_bar += (b * e.firms()[i].f_l) * &v;
    }
    Ok(ClearingSystem { m, a_bar })
}

/// `M - B̂_i`: the system everyone but firm `i` clears.
pub fn system_without(e: &Economy, slopes: &[f64], i: usize) -> Result<DMatrix<f64>> {
    let sys = assemble_system(e, slopes)?;
    let v = e.lifted_tech(i)?;
    Ok(sys.m - slopes[i] * &v * v.transpose())
}

pub fn clear(e: &Economy, slopes: &[f64]) -> Result<PriceQuantityState> {
    let sys = assemble_system(e, slopes)?;
    let prices = linalg::solve(&sys.m, &sys.a_bar)?;
    Ok(state_at(e, slopes, prices))
}

/// Quantities, labor and consumption implied by a price vector.
pub fn state_at(e: &Economy, slopes: &[f64], prices: DVector<f64>) -> PriceQuantityState {
    let n = e.n_firms();
    let mut output_qty = Vec::with_capacity(n);
    let mut net_trades = Vec::with_capacity(n);
    let mut labor = Vec::with_capacity(n);
    for (i, f) in e.firms().iter().enumerate() {
        let v = e.tech_vector(i).expect("firm index in range");
        let idx = e.goods_of(i).expect("firm index in range");
        let unit_margin = v.dot(&linalg::subvector(&prices, &idx)) - f.f_l;
        let q = if slopes[i] == 0.0 { 0.0 } else { slopes[i] * unit_margin };
        output_qty.push(q);
        net_trades.push(v * q);
        labor.push(f.f_l * q + 0.5 * f.kappa * q * q);
    }
    let c = e.consumer();
    let pc = linalg::subvector(&prices, &c.goods);
    let consumption = &c.intercept - &c.slope * pc;
    let negative_prices = (0..prices.len()).filter(|&g| prices[g] < 0.0).collect();
    let negative_quantities = (0..n).filter(|&i| output_qty[i] < 0.0).collect();
    PriceQuantityState { prices, output_qty, net_trades, labor, consumption, negative_prices, negative_quantities }
}

/// Excess supply per good: firm net trades minus consumer demand.
pub fn clearing_residual(e: &Economy, state: &PriceQuantityState) -> DVector<f64> {
    let mut r = DVector::zeros(e.n_goods());
    for (i, q) in state.net_trades.iter().enumerate() {
        for (k, &g) in e.goods_of(i).expect("firm index in range").iter().enumerate() {
            r[g] += q[k];
        }
    }
    for (k, &g) in e.consumer().goods.iter().enumerate() {
        r[g] -= state.consumption[k];
    }
    r
}

/// `Λ_i = [(M - B̂_i)^{-1}]_{𝒩(i)}`.
pub fn price_impact_multilateral(e: &Economy, slopes: &[f64], i: usize) -> Result<DMatrix<f64>> {
    let idx = e.goods_of(i)?;
    let inv = linalg::inverse(&system_without(e, slopes, i)?)?;
    Ok(linalg::symmetrize(&linalg::submatrix(&inv, &idx, &idx)))
}

/// `v' Λ v`.
pub fn aggregate_impact(impact: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    if impact.nrows() != v.len() || impact.ncols() != v.len() {
        return Err(SdfeError::DimensionMismatch { expected: impact.nrows(), got: v.len() });
    }
    Ok((v.transpose() * impact * v)[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::{horizontal_economy, vertical_economy};
    use approx::assert_abs_diff_eq;

    const S2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn vertical_system_at_equilibrium_slopes() {
        // goods are ordered (U, D) here
        let e = vertical_economy();
        let sys = assemble_system(&e, &[S2, 1.0 / S2]).unwrap();
        let r = 1.0 / S2;
        let want = DMatrix::from_row_slice(2, 2, &[S2 + r + 1.0, -r, -r, r + 1.0]);
        assert_abs_diff_eq!(sys.m, want, epsilon = 1e-14);
        assert_abs_diff_eq!(sys.a_bar, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn zero_slopes_give_consumer_block() {
        let e = vertical_economy();
        let sys = assemble_system(&e, &[0.0, 0.0]).unwrap();
        assert_eq!(sys.m, DMatrix::identity(2, 2));
        let mono = horizontal_economy(1, 0.0, 1.0, 1.0);
        assert_abs_diff_eq!(assemble_system(&mono, &[1.0]).unwrap().m[(0, 0)], 2.0);
    }

    #[test]
    fn vertical_prices() {
        let e = vertical_economy();
        let s = clear(&e, &[S2, 1.0 / S2]).unwrap();
        assert_abs_diff_eq!(s.prices[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.prices[1], (3.0 - S2) / 2.0, epsilon = 1e-12);
        let s = clear(&e, &[1.5, 1.0]).unwrap();
        assert_abs_diff_eq!(s.prices[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.prices[1], 0.75, epsilon = 1e-12);
        assert!(clearing_residual(&e, &s).amax() < 1e-12);
    }

    #[test]
    fn monopoly_prices() {
        let e = horizontal_economy(1, 0.0, 1.0, 1.0);
        let s = clear(&e, &[1.0]).unwrap();
        assert_abs_diff_eq!(s.prices[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.output_qty[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn vertical_price_impacts() {
        let e = vertical_economy();
        let b = [S2, 1.0 / S2];
        let ld = price_impact_multilateral(&e, &b, 1).unwrap();
        // D trades (D, U)
        assert_abs_diff_eq!(ld, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, S2 - 1.0]), epsilon = 1e-12);
        let lu = price_impact_multilateral(&e, &b, 0).unwrap();
        assert_abs_diff_eq!(lu[(0, 0)], 1.0 / S2, epsilon = 1e-12);
        assert_abs_diff_eq!(lu[(0, 0)], 1.0 / (1.0 + 1.0 / (1.0 / b[1] + 1.0)), epsilon = 1e-12);
    }

    #[test]
    fn aggregate_impacts() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, S2 - 1.0]);
        let v = DVector::from_vec(vec![1.0, -1.0]);
        assert_abs_diff_eq!(aggregate_impact(&l, &v).unwrap(), S2, epsilon = 1e-14);
        assert_eq!(aggregate_impact(&DMatrix::zeros(2, 2), &v).unwrap(), 0.0);
        let v3 = DVector::from_vec(vec![1.0, -1.0, -1.0]);
        assert_abs_diff_eq!(aggregate_impact(&DMatrix::identity(3, 3), &v3).unwrap(), 3.0);
        assert!(aggregate_impact(&DMatrix::identity(3, 3), &v).is_err());
    }

    #[test]
    fn competitive_limit_shrinks_impact() {
        let e = horizontal_economy(3, 1.0, 1e6, 1.0);
        let l = price_impact_multilateral(&e, &[1e6, 1e6, 1e6], 0).unwrap();
        assert!(l[(0, 0)] < 1e-6);
    }
}
