//! Economy data model, JSON loading, and structural validation.

use std::collections::{BTreeMap, HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdfeError};
use crate::linalg;
use crate::substitutes::SubstitutesTech;

/// One firm: a single output good, Leontief-style inputs and a labor cost
/// `f_l * q + (kappa / 2) * q^2`. `kappa = 1/k`; zero means unbounded capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Firm {
    pub name: String,
    pub output: usize,
    /// `(good, f_ig)`, ascending by good, all coefficients strictly positive.
    pub inputs: Vec<(usize, f64)>,
    pub f_l: f64,
    pub kappa: f64,
    /// Present only for economies solved with the substitutes extension.
    pub substitutes: Option<SubstitutesTech>,
}

impl Firm {
    pub fn new(name: impl Into<String>, output: usize, inputs: &[(usize, f64)], f_l: f64, kappa: f64) -> Self {
        Firm { name: name.into(), output, inputs: inputs.to_vec(), f_l, kappa, substitutes: None }
    }

    /// Number of goods the firm trades (`d_i`).
    pub fn degree(&self) -> usize {
        1 + self.inputs.len()
    }

    pub fn trades(&self, g: usize) -> bool {
        self.output == g || self.inputs.iter().any(|&(h, _)| h == g)
    }
}

/// Linear demand `q_c = A - B_c p` on the consumed goods.
#[derive(Debug, Clone, PartialEq)]
pub struct Consumer {
    pub goods: Vec<usize>,
    pub intercept: DVector<f64>,
    pub slope: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Economy {
    goods: Vec<String>,
    firms: Vec<Firm>,
    consumer: Consumer,
}

impl Economy {
    pub fn new(goods: Vec<String>, mut firms: Vec<Firm>, consumer: Consumer) -> Result<Self> {
        let m = goods.len();
        if m == 0 {
            return Err(SdfeError::Invalid("no goods".into()));
        }
        if firms.is_empty() {
            return Err(SdfeError::Invalid("no firms".into()));
        }
        let mut seen = HashSet::new();
        for g in &goods {
            if !seen.insert(g.as_str()) {
                return Err(SdfeError::Invalid(format!("duplicate good name {g:?}")));
            }
        }
        let mut seen = HashSet::new();
        for f in firms.iter_mut() {
            if !seen.insert(f.name.clone()) {
                return Err(SdfeError::Invalid(format!("duplicate firm name {:?}", f.name)));
            }
            if f.output >= m {
                return Err(SdfeError::InvalidIndex { index: f.output, len: m });
            }
            if !(f.f_l.is_finite() && f.f_l >= 0.0) {
                return Err(SdfeError::Invalid(format!("firm {}: f_L must be >= 0", f.name)));
            }
            if !(f.kappa.is_finite() && f.kappa >= 0.0) {
                return Err(SdfeError::Invalid(format!("firm {}: kappa must be >= 0", f.name)));
            }
            let mut goods_seen = HashSet::new();
            for &(g, c) in &f.inputs {
                if g >= m {
                    return Err(SdfeError::InvalidIndex { index: g, len: m });
                }
                if g == f.output {
                    return Err(SdfeError::Invalid(format!("firm {} uses its own output", f.name)));
                }
                if !goods_seen.insert(g) {
                    return Err(SdfeError::Invalid(format!("firm {}: input listed twice", f.name)));
                }
                if !(c.is_finite() && c >= 0.0) {
                    return Err(SdfeError::Invalid(format!("firm {}: input coefficients must be >= 0", f.name)));
                }
            }
            // A zero coefficient means the good is not traded by the firm.
            f.inputs.retain(|&(_, c)| c > 0.0);
            f.inputs.sort_by_key(|&(g, _)| g);
            if let Some(s) = &f.substitutes {
                s.check(f.inputs.len()).map_err(|e| SdfeError::Invalid(format!("firm {}: {e}", f.name)))?;
            }
        }

        let c = &consumer;
        if c.goods.is_empty() {
            return Err(SdfeError::Invalid("consumer buys no goods".into()));
        }
        let mut cg = HashSet::new();
        for &g in &c.goods {
            if g >= m {
                return Err(SdfeError::InvalidIndex { index: g, len: m });
            }
            if !cg.insert(g) {
                return Err(SdfeError::Invalid("consumer good listed twice".into()));
            }
        }
        let nc = c.goods.len();
        if c.intercept.len() != nc {
            return Err(SdfeError::DimensionMismatch { expected: nc, got: c.intercept.len() });
        }
        if c.slope.nrows() != nc || c.slope.ncols() != nc {
            return Err(SdfeError::DimensionMismatch { expected: nc, got: c.slope.nrows() });
        }
        if c.intercept.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
            return Err(SdfeError::Invalid("demand intercept A must be strictly positive".into()));
        }
        if !linalg::is_positive_definite(&c.slope) {
            return Err(SdfeError::Invalid("demand slope B_c must be symmetric positive definite".into()));
        }

        Ok(Economy { goods, firms, consumer })
    }

    pub fn goods(&self) -> &[String] {
        &self.goods
    }

    pub fn firms(&self) -> &[Firm] {
        &self.firms
    }

    pub fn firm(&self, i: usize) -> Result<&Firm> {
        self.firms.get(i).ok_or(SdfeError::InvalidIndex { index: i, len: self.firms.len() })
    }

    pub fn consumer(&self) -> &Consumer {
        &self.consumer
    }

    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }

    pub fn n_goods(&self) -> usize {
        self.goods.len()
    }

    pub fn good_index(&self, name: &str) -> Option<usize> {
        self.goods.iter().position(|g| g == name)
    }

    /// `𝒩(i)` in canonical order: output first, then inputs ascending.
    pub fn goods_of(&self, i: usize) -> Result<Vec<usize>> {
        let f = self.firm(i)?;
        let mut v = Vec::with_capacity(f.degree());
        v.push(f.output);
        v.extend(f.inputs.iter().map(|&(g, _)| g));
        Ok(v)
    }

    /// `v_i = (1, -f_ig, ...)` in the order of [`Economy::goods_of`].
    pub fn tech_vector(&self, i: usize) -> Result<DVector<f64>> {
        let f = self.firm(i)?;
        let mut v = DVector::zeros(f.degree());
        v[0] = 1.0;
        for (k, &(_, c)) in f.inputs.iter().enumerate() {
            v[k + 1] = -c;
        }
        Ok(v)
    }

    /// `v_i` lifted to all `m` goods.
    pub fn lifted_tech(&self, i: usize) -> Result<DVector<f64>> {
        let f = self.firm(i)?;
        let mut v = DVector::zeros(self.n_goods());
        v[f.output] = 1.0;
        for &(g, c) in &f.inputs {
            v[g] = -c;
        }
        Ok(v)
    }

    pub fn lifted_intercept(&self) -> DVector<f64> {
        let mut a = DVector::zeros(self.n_goods());
        for (k, &g) in self.consumer.goods.iter().enumerate() {
            a[g] = self.consumer.intercept[k];
        }
        a
    }

    pub fn lifted_slope(&self) -> DMatrix<f64> {
        let m = self.n_goods();
        let mut b = DMatrix::zeros(m, m);
        for (r, &g) in self.consumer.goods.iter().enumerate() {
            for (c, &h) in self.consumer.goods.iter().enumerate() {
                b[(g, h)] = self.consumer.slope[(r, c)];
            }
        }
        b
    }

    pub fn is_consumed(&self, g: usize) -> bool {
        self.consumer.goods.contains(&g)
    }

    /// Largest diagonal entry of `B_c`; the scale for default slope caps.
    pub fn max_demand_slope(&self) -> f64 {
        self.consumer.slope.diagonal().iter().copied().fold(0.0, f64::max)
    }

    pub fn check_slopes(&self, slopes: &[f64]) -> Result<()> {
        if slopes.len() != self.n_firms() {
            return Err(SdfeError::DimensionMismatch { expected: self.n_firms(), got: slopes.len() });
        }
        if slopes.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(SdfeError::Invalid("slopes must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Square input-output block: `F[g][h] = f_ih` for the producer `i` of `g`.
    /// Only defined when every good has exactly one producer.
    pub fn io_matrix(&self) -> Option<DMatrix<f64>> {
        let m = self.n_goods();
        if self.n_firms() != m {
            return None;
        }
        let mut f = DMatrix::zeros(m, m);
        let mut seen = vec![false; m];
        for firm in &self.firms {
            if seen[firm.output] {
                return None;
            }
            seen[firm.output] = true;
            for &(h, c) in &firm.inputs {
                f[(firm.output, h)] = c;
            }
        }
        Some(f)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: EconomyFile = serde_json::from_str(s).map_err(|e| SdfeError::Parse(e.to_string()))?;
        file.into_economy()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&EconomyFile::from_economy(self)).expect("economy serializes")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyFile {
    pub goods: Vec<String>,
    pub firms: Vec<FirmFile>,
    pub consumer: ConsumerFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmFile {
    pub name: String,
    pub output: String,
    #[serde(default)]
    pub inputs: BTreeMap<String, f64>,
    #[serde(rename = "f_L", default, skip_serializing_if = "Option::is_none")]
    pub f_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumerFile {
    pub goods: Vec<String>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B_c")]
    pub b_c: Vec<Vec<f64>>,
}

fn square(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(SdfeError::Parse(format!("{what} must be a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

impl EconomyFile {
    pub fn into_economy(self) -> Result<Economy> {
        let lookup = |name: &str| -> Result<usize> {
            self.goods.iter().position(|g| g == name).ok_or_else(|| SdfeError::Parse(format!("unknown good {name:?}")))
        };
        let mut firms = Vec::with_capacity(self.firms.len());
        for f in &self.firms {
            let output = lookup(&f.output)?;
            let mut inputs = Vec::with_capacity(f.inputs.len());
            for (g, &c) in &f.inputs {
                inputs.push((lookup(g)?, c));
            }
            inputs.sort_by_key(|&(g, _)| g);
            let substitutes = match (&f.sigma, &f.omega, f.alpha) {
                (None, None, None) => None,
                (sigma, omega, Some(alpha)) => {
                    let sigma = square(sigma.as_deref().unwrap_or(&[]), "sigma")?;
                    let omega = DVector::from_vec(omega.clone().unwrap_or_default());
                    Some(SubstitutesTech { sigma, omega, alpha })
                }
                _ => return Err(SdfeError::Parse(format!("firm {:?}: alpha is required with sigma/omega", f.name))),
            };
            firms.push(Firm {
                name: f.name.clone(),
                output,
                inputs,
                f_l: f.f_l.unwrap_or(0.0),
                kappa: f.kappa.unwrap_or(0.0),
                substitutes,
            });
        }
        let goods = self.consumer.goods.iter().map(|g| lookup(g)).collect::<Result<Vec<_>>>()?;
        let consumer = Consumer {
            goods,
            intercept: DVector::from_vec(self.consumer.a.clone()),
            slope: square(&self.consumer.b_c, "B_c")?,
        };
        Economy::new(self.goods.clone(), firms, consumer)
    }

    pub fn from_economy(e: &Economy) -> Self {
        let name = |g: usize| e.goods[g].clone();
        let firms = e
            .firms
            .iter()
            .map(|f| {
                let (sigma, omega, alpha) = match &f.substitutes {
                    Some(s) => (
                        Some(s.sigma.row_iter().map(|r| r.iter().copied().collect()).collect()),
                        Some(s.omega.iter().copied().collect()),
                        Some(s.alpha),
                    ),
                    None => (None, None, None),
                };
                FirmFile {
                    name: f.name.clone(),
                    output: name(f.output),
                    inputs: f.inputs.iter().map(|&(g, c)| (name(g), c)).collect(),
                    f_l: Some(f.f_l),
                    kappa: Some(f.kappa),
                    sigma,
                    omega,
                    alpha,
                }
            })
            .collect();
        let c = &e.consumer;
        EconomyFile {
            goods: e.goods.clone(),
            firms,
            consumer: ConsumerFile {
                goods: c.goods.iter().map(|&g| name(g)).collect(),
                a: c.intercept.iter().copied().collect(),
                b_c: c.slope.row_iter().map(|r| r.iter().copied().collect()).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub viable: bool,
    pub connected: bool,
    /// Goods traded by fewer than three agents (the consumer counts once).
    pub thin_goods: Vec<usize>,
    pub witness_price: Option<DVector<f64>>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.viable && self.connected
    }
}

/// Searches for `p > 0` with `p_out(i) > sum_h f_ih p_h` for every firm.
///
/// For a fixed choice of one producer per good the strict system is feasible
/// iff `(I - F) x = 1` has a solution `x >= 1`. Howard-style policy iteration
/// over producers then solves the max-plus version exactly.
fn viability_witness(e: &Economy) -> Option<DVector<f64>> {
    let m = e.n_goods();
    let mut producers: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, f) in e.firms.iter().enumerate() {
        producers[f.output].push(i);
    }
    let cost = |i: usize, x: &DVector<f64>| -> f64 { e.firms[i].inputs.iter().map(|&(h, c)| c * x[h]).sum() };
    let mut policy: Vec<Option<usize>> = producers.iter().map(|p| p.first().copied()).collect();

    for _ in 0..(4 * e.n_firms() + 8) {
        let mut a = DMatrix::<f64>::identity(m, m);
        for g in 0..m {
            if let Some(i) = policy[g] {
                for &(h, c) in &e.firms[i].inputs {
                    a[(g, h)] -= c;
                }
            }
        }
        let x = a.lu().solve(&DVector::from_element(m, 1.0))?;
        if x.iter().any(|&v| !v.is_finite() || v < 1.0 - 1e-9) {
            return None;
        }
        let mut changed = false;
        for g in 0..m {
            let Some(cur) = policy[g] else { continue };
            let cur_cost = cost(cur, &x);
            let (best, best_cost) =
                producers[g]
                    .iter()
                    .map(|&i| (i, cost(i, &x)))
                    .fold((cur, cur_cost), |acc, c| if c.1 > acc.1 { c } else { acc });
            if best != cur && best_cost > cur_cost + 1e-12 * (1.0 + cur_cost.abs()) {
                policy[g] = Some(best);
                changed = true;
            }
        }
        if !changed {
            let strict = e.firms.iter().enumerate().all(|(i, f)| x[f.output] - cost(i, &x) > 0.0);
            return strict.then_some(x);
        }
    }
    None
}

/// Every good must reach a consumed good along input → output steps.
fn is_connected(e: &Economy) -> bool {
    let m = e.n_goods();
    // reversed edges: out(i) -> each input of i
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); m];
    for f in &e.firms {
        for &(h, _) in &f.inputs {
            rev[f.output].push(h);
        }
    }
    let mut reached = vec![false; m];
    let mut queue: VecDeque<usize> = e.consumer.goods.iter().copied().collect();
    for &g in &e.consumer.goods {
        reached[g] = true;
    }
    while let Some(g) = queue.pop_front() {
        for &h in &rev[g] {
            if !reached[h] {
                reached[h] = true;
                queue.push_back(h);
            }
        }
    }
    reached.iter().all(|&r| r)
}

pub fn validate(e: &Economy) -> ValidationReport {
    let witness = viability_witness(e);
    let thin_goods = (0..e.n_goods())
        .filter(|&g| {
            let firms = e.firms.iter().filter(|f| f.trades(g)).count();
            firms + usize::from(e.is_consumed(g)) < 3
        })
        .collect();
    ValidationReport { viable: witness.is_some(), connected: is_connected(e), thin_goods, witness_price: witness }
}

/// The two-good vertical economy: `U` sells to `D`, both goods are consumed
/// with unit demand, and neither firm has a capacity limit.
pub fn vertical_economy() -> Economy {
    let firms = vec![Firm::new("U", 0, &[], 0.0, 0.0), Firm::new("D", 1, &[(0, 1.0)], 0.0, 0.0)];
    let consumer =
        Consumer { goods: vec![0, 1], intercept: DVector::from_vec(vec![1.0, 1.0]), slope: DMatrix::identity(2, 2) };
    Economy::new(vec!["U".into(), "D".into()], firms, consumer).expect("vertical economy is valid")
}

/// `n` identical firms selling one consumed good.
pub fn horizontal_economy(n: usize, kappa: f64, b_c: f64, a: f64) -> Economy {
    let firms = (0..n).map(|i| Firm::new(format!("F{}", i + 1), 0, &[], 0.0, kappa)).collect();
    let consumer =
        Consumer { goods: vec![0], intercept: DVector::from_element(1, a), slope: DMatrix::from_element(1, 1, b_c) };
    Economy::new(vec!["y".into()], firms, consumer).expect("horizontal economy is valid")
}
