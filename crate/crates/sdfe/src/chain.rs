//! Closed forms for the layered supply chain: layer `i` buys good `i+1` from
//! layer `i+1` and sells good `i` to layer `i-1`; layer 1 sells to the
//! consumer and the last layer uses only labor.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::economy::{Consumer, Economy, Firm};
use crate::error::{Result, SdfeError};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    /// Firms per layer, layer 1 (most downstream) first. Real-valued so that
    /// firm counts can be relaxed to a continuum; must be whole numbers to
    /// materialize an [`Economy`].
    pub firms: Vec<f64>,
    /// `κ_i = 1/k_i` per layer.
    pub kappa: Vec<f64>,
    pub b_c: f64,
    pub a: f64,
    /// Linear labor cost of the last layer.
    pub last_layer_labor: f64,
}

impl ChainSpec {
    /// Homogeneous chain: `n_layers` layers of `n` firms with capacity `k`.
    pub fn homogeneous(n_layers: usize, n: usize, k: f64, b_c: f64, a: f64) -> Self {
        ChainSpec { firms: vec![n as f64; n_layers], kappa: vec![1.0 / k; n_layers], b_c, a, last_layer_labor: 0.0 }
    }

    pub fn n_layers(&self) -> usize {
        self.firms.len()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.n_layers();
        if n == 0 {
            return Err(SdfeError::Invalid("chain needs at least one layer".into()));
        }
        if self.kappa.len() != n {
            return Err(SdfeError::DimensionMismatch { expected: n, got: self.kappa.len() });
        }
        if self.firms.iter().any(|&x| !(x >= 1.0 && x.is_finite())) {
            return Err(SdfeError::Invalid("each layer needs at least one firm".into()));
        }
        if self.kappa.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(SdfeError::Invalid("kappa must be >= 0".into()));
        }
        if !(self.b_c > 0.0 && self.a > 0.0 && self.last_layer_labor >= 0.0) {
            return Err(SdfeError::Invalid("need B_c > 0, A > 0, f_L >= 0".into()));
        }
        Ok(())
    }

    /// An interior equilibrium needs a single layer or two or more firms in
    /// every layer.
    pub fn interiority_warning(&self) -> Option<String> {
        if self.n_layers() > 1 && self.firms.iter().any(|&n| n < 2.0) {
            Some("some layer has a single firm; interior equilibrium not guaranteed".into())
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChainRegime {
    Multilateral,
    UnilateralInputs,
    UnilateralOutputs,
    Local,
    SequentialCournot,
}

impl ChainRegime {
    pub const ALL: [ChainRegime; 5] = [
        ChainRegime::Multilateral,
        ChainRegime::UnilateralInputs,
        ChainRegime::UnilateralOutputs,
        ChainRegime::Local,
        ChainRegime::SequentialCournot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChainRegime::Multilateral => "multilateral",
            ChainRegime::UnilateralInputs => "unilateral-inputs",
            ChainRegime::UnilateralOutputs => "unilateral-outputs",
            ChainRegime::Local => "local",
            ChainRegime::SequentialCournot => "sequential-cournot",
        }
    }
}

impl fmt::Display for ChainRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChainRegime {
    type Err = SdfeError;

    fn from_str(s: &str) -> Result<Self> {
        ChainRegime::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SdfeError::Parse(format!("unknown chain regime {s:?}")))
    }
}

/// Reciprocal aggregate slopes seen by each layer on its output side
/// (`1/B_c + Σ_{j<i} 1/(n_j B_j)`) and input side (`Σ_{j>i} 1/(n_j B_j)`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainAggregates {
    pub out_slope_recip: Vec<f64>,
    pub in_slope_recip: Vec<f64>,
}

pub fn aggregates(spec: &ChainSpec, slopes: &[f64]) -> ChainAggregates {
    let n = spec.n_layers();
    let r: Vec<f64> = (0..n).map(|i| 1.0 / (spec.firms[i] * slopes[i])).collect();
    let mut out = Vec::with_capacity(n);
    let mut acc = 1.0 / spec.b_c;
    for ri in &r {
        out.push(acc);
        acc += ri;
    }
    let mut inn = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        inn[i] = acc;
        acc += r[i];
    }
    ChainAggregates { out_slope_recip: out, in_slope_recip: inn }
}

/// Aggregates seen under local price impact: only the adjacent layers.
pub fn local_aggregates(spec: &ChainSpec, slopes: &[f64]) -> ChainAggregates {
    let n = spec.n_layers();
    let out = (0..n).map(|i| if i == 0 { 1.0 / spec.b_c } else { 1.0 / (spec.firms[i - 1] * slopes[i - 1]) }).collect();
    let inn = (0..n).map(|i| if i + 1 == n { 0.0 } else { 1.0 / (spec.firms[i + 1] * slopes[i + 1]) }).collect();
    ChainAggregates { out_slope_recip: out, in_slope_recip: inn }
}

/// Symmetric within-layer best reply: the positive solution of
/// `X = (κ + 1/((n-1) X + 1/Λ̄))^{-1}`.
pub fn chain_best_reply(agg_recip: f64, n: f64, kappa: f64) -> Result<f64> {
    if !(n >= 1.0) || !(kappa >= 0.0) || !(agg_recip >= 0.0) {
        return Err(SdfeError::NoPositiveRoot(format!("bad inputs Λ̄={agg_recip}, n={n}, κ={kappa}")));
    }
    if agg_recip == 0.0 {
        // no price impact at all: price taking
        return if kappa > 0.0 {
            Ok(1.0 / kappa)
        } else {
            Err(SdfeError::NoPositiveRoot("no price impact and unbounded capacity".into()))
        };
    }
    if n == 1.0 {
        return Ok(1.0 / (kappa + agg_recip));
    }
    if kappa == 0.0 {
        // X = (n-1) X + 1/Λ̄ has no positive solution for n >= 2
        return Err(SdfeError::NoPositiveRoot(format!("n = {n} with unbounded capacity")));
    }
    let k = 1.0 / kappa;
    let l = 1.0 / agg_recip;
    let c = n - 1.0;
    let b = (n - 2.0) * k - l;
    let s = (b * b + 4.0 * c * l * k).sqrt();
    // avoid cancellation when b < 0
    Ok(if b >= 0.0 { (b + s) / (2.0 * c) } else { 2.0 * l * k / (s - b) })
}

/// Per-firm price impact of layer `i`, in (output, input) order; 1×1 for the
/// last layer.
pub fn chain_lambda(spec: &ChainSpec, regime: ChainRegime, slopes: &[f64], i: usize) -> DMatrix<f64> {
    let last = i + 1 == spec.n_layers();
    let c = (spec.firms[i] - 1.0) * slopes[i];
    let agg = match regime {
        ChainRegime::Local => local_aggregates(spec, slopes),
        _ => aggregates(spec, slopes),
    };
    let lo = agg.out_slope_recip[i];
    let li = agg.in_slope_recip[i];
    let d = if last { 1 } else { 2 };
    let mut l = DMatrix::zeros(d, d);
    match regime {
        ChainRegime::Multilateral | ChainRegime::Local => {
            if last {
                l[(0, 0)] = 1.0 / (1.0 / lo + c);
            } else {
                let a = 1.0 / lo;
                let b = 1.0 / li;
                let det = a * b + c * (a + b);
                l[(0, 0)] = (b + c) / det;
                l[(0, 1)] = c / det;
                l[(1, 0)] = c / det;
                l[(1, 1)] = (a + c) / det;
            }
        }
        ChainRegime::UnilateralInputs => l[(0, 0)] = 1.0 / (1.0 / lo + c),
        ChainRegime::UnilateralOutputs => {
            if !last {
                l[(1, 1)] = 1.0 / (1.0 / li + c);
            }
        }
        ChainRegime::SequentialCournot => l[(0, 0)] = lo,
    }
    l
}

fn layer_reply(spec: &ChainSpec, regime: ChainRegime, slopes: &[f64], i: usize) -> Result<f64> {
    let n = spec.firms[i];
    let kappa = spec.kappa[i];
    match regime {
        ChainRegime::SequentialCournot => {
            let lo = aggregates(spec, slopes).out_slope_recip[i];
            Ok(1.0 / (kappa + lo))
        }
        ChainRegime::Multilateral => {
            let a = aggregates(spec, slopes);
            chain_best_reply(a.out_slope_recip[i] + a.in_slope_recip[i], n, kappa)
        }
        ChainRegime::Local => {
            let a = local_aggregates(spec, slopes);
            chain_best_reply(a.out_slope_recip[i] + a.in_slope_recip[i], n, kappa)
        }
        ChainRegime::UnilateralInputs => chain_best_reply(aggregates(spec, slopes).out_slope_recip[i], n, kappa),
        ChainRegime::UnilateralOutputs => chain_best_reply(aggregates(spec, slopes).in_slope_recip[i], n, kappa),
    }
}

#[derive(Debug, Clone)]
pub struct ChainSolution {
    pub regime: ChainRegime,
    pub slopes: Vec<f64>,
    /// `p_i` for the good sold by layer `i`.
    pub prices: Vec<f64>,
    pub total_quantity: f64,
    /// Output per firm in each layer.
    pub firm_quantity: Vec<f64>,
    pub markup_out: Vec<f64>,
    /// Markdown magnitudes on inputs (zero for the last layer).
    pub markdown_in: Vec<f64>,
    pub profits: Vec<f64>,
    pub layer_profits: Vec<f64>,
    pub welfare: f64,
    pub iterations: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct ChainOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting slope for layers with `κ = 0`.
    pub cap: Option<f64>,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions { tol: 1e-14, max_iter: 100_000, cap: None }
    }
}

/// Jacobi iteration on layer slopes from the price-taking profile.
pub fn solve_chain_with(spec: &ChainSpec, regime: ChainRegime, opts: &ChainOptions) -> Result<ChainSolution> {
    spec.check()?;
    let n = spec.n_layers();
    let cap = opts.cap.unwrap_or(1e3 * spec.b_c);
    let start: Vec<f64> = spec.kappa.iter().map(|&k| if k > 0.0 { 1.0 / k } else { cap }).collect();
    let mut slopes = start.clone();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next = (0..n).map(|i| layer_reply(spec, regime, &slopes, i)).collect::<Result<Vec<_>>>()?;
        if next.iter().any(|&b| !(b > 1e-300)) {
            return Err(SdfeError::DegenerateChain("slopes collapsed to zero".into()));
        }
        let step = slopes.iter().zip(&next).map(|(a, b)| (a - b).abs() / (1.0 + b.abs())).fold(0.0, f64::max);
        slopes = next;
        if step < opts.tol {
            break;
        }
        // the relative step cannot tell convergence from a slide to zero
        if let Some(i) = (0..n).find(|&i| slopes[i] < 1e-9 * start[i]) {
            return Err(SdfeError::DegenerateChain(format!("layer {} slope collapses to zero", i + 1)));
        }
        if iterations >= opts.max_iter {
            return Err(SdfeError::NotConverged { iterations, step });
        }
    }
    Ok(chain_solution_at(spec, regime, &slopes, iterations))
}

pub fn solve_chain(spec: &ChainSpec, regime: ChainRegime) -> Result<ChainSolution> {
    solve_chain_with(spec, regime, &ChainOptions::default())
}

/// Prices, quantities, markups and profits at given layer slopes.
pub fn chain_solution_at(spec: &ChainSpec, regime: ChainRegime, slopes: &[f64], iterations: usize) -> ChainSolution {
    let n = spec.n_layers();
    let (welfare, q) = chain_welfare(spec, slopes);
    let mut prices = vec![0.0; n];
    let mut p = spec.last_layer_labor;
    for i in (0..n).rev() {
        p += q / (spec.firms[i] * slopes[i]);
        prices[i] = p;
    }
    let mut markup_out = Vec::with_capacity(n);
    let mut markdown_in = Vec::with_capacity(n);
    let mut profits = Vec::with_capacity(n);
    let mut layer_profits = Vec::with_capacity(n);
    let mut firm_quantity = Vec::with_capacity(n);
    for i in 0..n {
        let qi = q / spec.firms[i];
        let l = chain_lambda(spec, regime, slopes, i);
        let v = if l.nrows() == 1 { DVector::from_vec(vec![1.0]) } else { DVector::from_vec(vec![1.0, -1.0]) };
        let mu = &l * v * qi;
        markup_out.push(mu[0]);
        markdown_in.push(if mu.len() > 1 { -mu[1] } else { 0.0 });
        let pi = (1.0 / slopes[i] - 0.5 * spec.kappa[i]) * qi * qi;
        profits.push(pi);
        layer_profits.push(pi * spec.firms[i]);
        firm_quantity.push(qi);
    }
    ChainSolution {
        regime,
        slopes: slopes.to_vec(),
        prices,
        total_quantity: q,
        firm_quantity,
        markup_out,
        markdown_in,
        profits,
        layer_profits,
        welfare,
        iterations,
        warning: spec.interiority_warning(),
    }
}

/// `(W, Q)` with `Q = (A - B_c f_L) / (B_c Σ 1/(n_i B_i) + 1)` and
/// `W = Q (A/B_c - Q/(2 B_c) - f_L - Q Σ κ_i/(2 n_i))`.
pub fn chain_welfare(spec: &ChainSpec, slopes: &[f64]) -> (f64, f64) {
    let s: f64 = (0..spec.n_layers()).map(|i| 1.0 / (spec.firms[i] * slopes[i])).sum();
    let q = (spec.a - spec.b_c * spec.last_layer_labor) / (spec.b_c * s + 1.0);
    let curv: f64 = (0..spec.n_layers()).map(|i| spec.kappa[i] / spec.firms[i]).sum();
    let w = q * (spec.a / spec.b_c - q / (2.0 * spec.b_c) - spec.last_layer_labor - 0.5 * curv * q);
    (w, q)
}

/// Price-taking benchmark: every layer's slope equals its capacity.
pub fn competitive_benchmark(spec: &ChainSpec) -> Result<(f64, f64)> {
    if spec.kappa.contains(&0.0) {
        return Err(SdfeError::DegenerateChain("benchmark needs finite capacities".into()));
    }
    let k: Vec<f64> = spec.kappa.iter().map(|&x| 1.0 / x).collect();
    Ok(chain_welfare(spec, &k))
}

/// Materializes the chain as a general economy; only good 1 is consumed.
pub fn chain_to_economy(spec: &ChainSpec) -> Result<Economy> {
    spec.check()?;
    let n = spec.n_layers();
    if spec.firms.iter().any(|x| x.fract() != 0.0) {
        return Err(SdfeError::Invalid("firm counts must be whole numbers".into()));
    }
    let goods = (1..=n).map(|i| format!("g{i}")).collect();
    let mut firms = Vec::new();
    for i in 0..n {
        let inputs: Vec<(usize, f64)> = if i + 1 < n { vec![(i + 1, 1.0)] } else { vec![] };
        let f_l = if i + 1 == n { spec.last_layer_labor } else { 0.0 };
        for j in 0..spec.firms[i] as usize {
            firms.push(Firm::new(format!("L{}F{}", i + 1, j + 1), i, &inputs, f_l, spec.kappa[i]));
        }
    }
    let consumer = Consumer {
        goods: vec![0],
        intercept: DVector::from_element(1, spec.a),
        slope: DMatrix::from_element(1, 1, spec.b_c),
    };
    Economy::new(goods, firms, consumer)
}

/// Expands per-layer slopes to one slope per firm of [`chain_to_economy`].
pub fn expand_slopes(spec: &ChainSpec, layer_slopes: &[f64]) -> Vec<f64> {
    spec.firms.iter().zip(layer_slopes).flat_map(|(&n, &b)| std::iter::repeat_n(b, n as usize)).collect()
}
