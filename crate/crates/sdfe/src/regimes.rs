//! Price-impact functions of the generalized equilibrium: multilateral,
//! unilateral (input- or output-price taking), local, and Cournot.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clearing::{price_impact_multilateral, system_without};
use crate::economy::Economy;
use crate::error::{Result, SdfeError};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegimeKind {
    Multilateral,
    UnilateralInputs,
    UnilateralOutputs,
    Local,
    Cournot,
}

impl RegimeKind {
    pub const ALL: [RegimeKind; 5] = [
        RegimeKind::Multilateral,
        RegimeKind::UnilateralInputs,
        RegimeKind::UnilateralOutputs,
        RegimeKind::Local,
        RegimeKind::Cournot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegimeKind::Multilateral => "multilateral",
            RegimeKind::UnilateralInputs => "unilateral-inputs",
            RegimeKind::UnilateralOutputs => "unilateral-outputs",
            RegimeKind::Local => "local",
            RegimeKind::Cournot => "cournot",
        }
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegimeKind {
    type Err = SdfeError;

    fn from_str(s: &str) -> Result<Self> {
        RegimeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SdfeError::Parse(format!("unknown regime {s:?}")))
    }
}

/// A regime plus optional explicit up-sets for the unilateral variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regime {
    pub kind: RegimeKind,
    up_sets: BTreeMap<usize, BTreeSet<usize>>,
}

impl From<RegimeKind> for Regime {
    fn from(kind: RegimeKind) -> Self {
        Regime::new(kind)
    }
}

impl Regime {
    pub fn new(kind: RegimeKind) -> Self {
        Regime { kind, up_sets: BTreeMap::new() }
    }

    /// Overrides the up-set of `firm`. Checked against the economy when used.
    pub fn with_up_set(mut self, firm: usize, up: impl IntoIterator<Item = usize>) -> Self {
        self.up_sets.insert(firm, up.into_iter().collect());
        self
    }

    pub fn up_set_override(&self, firm: usize) -> Option<&BTreeSet<usize>> {
        self.up_sets.get(&firm)
    }
}

/// Default `(down_set, up_set)` for firm `i`.
///
/// The down-set is `out(i)` plus every good reachable from it when two goods
/// are adjacent iff some other firm trades both. The firm's own inputs are
/// never entered: they belong to the up-set by construction, and on layered
/// chains this reproduces the aggregate-slope formulas.
pub fn downstream_partition(e: &Economy, i: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let firm = e.firm(i)?;
    let m = e.n_goods();
    let blocked: BTreeSet<usize> = firm.inputs.iter().map(|&(g, _)| g).collect();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
    for j in (0..e.n_firms()).filter(|&j| j != i) {
        let goods = e.goods_of(j)?;
        for &a in &goods {
            for &b in &goods {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    let mut down = vec![false; m];
    down[firm.output] = true;
    let mut queue = VecDeque::from([firm.output]);
    while let Some(g) = queue.pop_front() {
        for &h in &adj[g] {
            if !down[h] && !blocked.contains(&h) {
                down[h] = true;
                queue.push_back(h);
            }
        }
    }
    let down_set = (0..m).filter(|&g| down[g]).collect();
    let up_set = (0..m).filter(|&g| !down[g]).collect();
    Ok((down_set, up_set))
}

/// Partition honoring a regime override; rejects overrides that put an input
/// of `i` downstream or `out(i)` upstream.
pub fn partition_for(regime: &Regime, e: &Economy, i: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    match regime.up_set_override(i) {
        None => downstream_partition(e, i),
        Some(up) => {
            let firm = e.firm(i)?;
            if up.contains(&firm.output) {
                return Err(SdfeError::PartitionInvalid { firm: i, reason: "output good in up-set".into() });
            }
            if let Some(&g) = up.iter().find(|&&g| g >= e.n_goods()) {
                return Err(SdfeError::PartitionInvalid { firm: i, reason: format!("unknown good {g}") });
            }
            if let Some(&(g, _)) = firm.inputs.iter().find(|(g, _)| !up.contains(g)) {
                return Err(SdfeError::PartitionInvalid { firm: i, reason: format!("input {g} not in up-set") });
            }
            let down = (0..e.n_goods()).filter(|g| !up.contains(g)).collect();
            Ok((down, up.iter().copied().collect()))
        }
    }
}

/// `[(M - B̂_i)_S]^{-1}`, i.e. clearing only the goods in `S` while all other
/// prices are held fixed.
fn restricted_inverse(e: &Economy, slopes: &[f64], i: usize, set: &[usize]) -> Result<DMatrix<f64>> {
    let mi = system_without(e, slopes, i)?;
    linalg::inverse(&linalg::submatrix(&mi, set, set))
}

/// Profile with every other producer of `out(i)` switched off.
pub fn cournot_profile(e: &Economy, slopes: &[f64], i: usize) -> Result<Vec<f64>> {
    let out = e.firm(i)?.output;
    Ok(slopes.iter().enumerate().map(|(j, &b)| if j != i && e.firms()[j].output == out { 0.0 } else { b }).collect())
}

pub fn lambda_for(regime: &Regime, e: &Economy, slopes: &[f64], i: usize) -> Result<DMatrix<f64>> {
    e.check_slopes(slopes)?;
    let idx = e.goods_of(i)?;
    let d = idx.len();
    match regime.kind {
        RegimeKind::Multilateral => price_impact_multilateral(e, slopes, i),
        RegimeKind::Cournot => price_impact_multilateral(e, &cournot_profile(e, slopes, i)?, i),
        RegimeKind::Local => {
            let mi = system_without(e, slopes, i)?;
            Ok(linalg::symmetrize(&linalg::inverse(&linalg::submatrix(&mi, &idx, &idx))?))
        }
        RegimeKind::UnilateralInputs => {
            let (down, _) = partition_for(regime, e, i)?;
            let inv = restricted_inverse(e, slopes, i, &down)?;
            let pos = down.iter().position(|&g| g == idx[0]).expect("output is in the down-set");
            let mut l = DMatrix::zeros(d, d);
            l[(0, 0)] = inv[(pos, pos)];
            Ok(l)
        }
        RegimeKind::UnilateralOutputs => {
            let (_, up) = partition_for(regime, e, i)?;
            let mut l = DMatrix::zeros(d, d);
            if d == 1 {
                return Ok(l);
            }
            let inv = restricted_inverse(e, slopes, i, &up)?;
            let pos: Vec<usize> =
                idx[1..].iter().map(|g| up.iter().position(|h| h == g).expect("inputs are in the up-set")).collect();
            for (r, &pr) in pos.iter().enumerate() {
                for (c, &pc) in pos.iter().enumerate() {
                    l[(r + 1, c + 1)] = inv[(pr, pc)];
                }
            }
            Ok(linalg::symmetrize(&l))
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MonotonicityReport {
    pub trials: usize,
    /// `(competitor, min eigenvalue of Λ(B) - Λ(B + δ e_j))` below tolerance.
    pub violations: Vec<(usize, f64)>,
}

/// Randomized check that `Λ_i` decreases (p.s.d. order) as any `B_j` rises.
pub fn check_regime_monotonicity(
    regime: &Regime,
    e: &Economy,
    firm: usize,
    trials: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = e.n_firms();
    let mut report = MonotonicityReport { trials, violations: Vec::new() };
    if n < 2 {
        return Ok(report);
    }
    for _ in 0..trials {
        let slopes: Vec<f64> = e
            .firms()
            .iter()
            .map(|f| {
                let hi = if f.kappa > 0.0 { 1.0 / f.kappa } else { 2.0 };
                rng.gen_range(0.05..=1.0) * hi
            })
            .collect();
        let mut j = rng.gen_range(0..n - 1);
        if j >= firm {
            j += 1;
        }
        let delta = rng.gen_range(0.01..1.0);
        let mut bumped = slopes.clone();
        bumped[j] += delta;
        let before = lambda_for(regime, e, &slopes, firm)?;
        let after = lambda_for(regime, e, &bumped, firm)?;
        let min_eig = linalg::min_eigenvalue(&(before - after));
        if min_eig < -1e-10 {
            report.violations.push((j, min_eig));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::{horizontal_economy, vertical_economy};
    use approx::assert_abs_diff_eq;

    #[test]
    fn vertical_partitions() {
        let e = vertical_economy();
        // D = firm 1 on good 1, U = firm 0 on good 0
        assert_eq!(downstream_partition(&e, 1).unwrap(), (vec![1], vec![0]));
        assert_eq!(downstream_partition(&e, 0).unwrap(), (vec![0, 1], vec![]));
    }

    #[test]
    fn unilateral_inputs_ignores_input_side() {
        let e = vertical_economy();
        for b in [[0.3, 0.2], [1.5, 1.0], [4.0, 0.1]] {
            let l = lambda_for(&RegimeKind::UnilateralInputs.into(), &e, &b, 1).unwrap();
            assert_abs_diff_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), epsilon = 1e-14);
        }
    }

    #[test]
    fn local_equals_multilateral_when_firm_touches_everything() {
        let e = vertical_economy();
        let b = [0.7, 1.3];
        let local = lambda_for(&RegimeKind::Local.into(), &e, &b, 1).unwrap();
        let multi = lambda_for(&RegimeKind::Multilateral.into(), &e, &b, 1).unwrap();
        assert_abs_diff_eq!(local, multi, epsilon = 1e-12);
    }

    #[test]
    fn cournot_in_horizontal_market() {
        let e = horizontal_economy(3, 1.0, 1.0, 1.0);
        let l = lambda_for(&RegimeKind::Cournot.into(), &e, &[0.4, 0.5, 0.6], 1).unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn overrides_are_checked() {
        let e = vertical_economy();
        let bad = Regime::new(RegimeKind::UnilateralInputs).with_up_set(1, []);
        assert!(matches!(lambda_for(&bad, &e, &[1.0, 1.0], 1), Err(SdfeError::PartitionInvalid { .. })));
        let bad = Regime::new(RegimeKind::UnilateralInputs).with_up_set(1, [0, 1]);
        assert!(lambda_for(&bad, &e, &[1.0, 1.0], 1).is_err());
        let ok = Regime::new(RegimeKind::UnilateralInputs).with_up_set(1, [0]);
        assert!(lambda_for(&ok, &e, &[1.0, 1.0], 1).is_ok());
    }

    #[test]
    fn monotone_on_vertical_economy() {
        let e = vertical_economy();
        for kind in [RegimeKind::Multilateral, RegimeKind::UnilateralInputs, RegimeKind::Local] {
            for firm in 0..2 {
                let r = check_regime_monotonicity(&kind.into(), &e, firm, 100, 7).unwrap();
                assert!(r.violations.is_empty(), "{kind} firm {firm}: {:?}", r.violations);
            }
        }
    }

    #[test]
    fn regime_names_round_trip() {
        for k in RegimeKind::ALL {
            assert_eq!(k.name().parse::<RegimeKind>().unwrap(), k);
        }
        assert!("bertrand".parse::<RegimeKind>().is_err());
    }
}
