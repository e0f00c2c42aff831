//! Builds the report for each subcommand. Rows are ordered by firm, then good.

use anyhow::{bail, Context, Result};
use sdfe::analysis::{centrality_prices, centrality_prices_left_scaled, goods_network, markup_centrality};
use sdfe::chain::ChainSpec;
use sdfe::clearing::assemble_system;
use sdfe::scenarios::{compare_regimes, depth_sweep, merger_study, surplus_profile, Threshold};
use sdfe::substitutes::BlockState;
use sdfe::{
    solution, solve, solve_substitutes, validate, ChainRegime, Economy, Regime, RegimeKind, SolveOptions,
    SubstitutesOptions,
};

use crate::report::{Cell, Report, Table};

/// Raised when an economy fails validation; maps to exit code 1.
#[derive(Debug)]
pub struct ValidationFailed(pub String);

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationFailed {}

pub fn load(path: &std::path::Path) -> Result<Economy> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Economy::from_json_str(&text)?)
}

fn name_list(e: &Economy, goods: &[usize]) -> String {
    goods.iter().map(|&g| e.goods()[g].as_str()).collect::<Vec<_>>().join(";")
}

fn validation_table(e: &Economy) -> (Table, Option<&'static str>) {
    let r = validate(e);
    let witness = r.witness_price.as_ref().map(|w| w.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";"));
    let t = Table::summary(
        "validation",
        vec![
            ("viable", r.viable.into()),
            ("connected", r.connected.into()),
            ("thin_goods", name_list(e, &r.thin_goods).into()),
            ("witness_price", witness.into()),
        ],
    );
    let failure = if !r.viable {
        Some("viability failed")
    } else if !r.connected {
        Some("connectivity failed")
    } else {
        None
    };
    (t, failure)
}

fn require_valid(e: &Economy) -> Result<()> {
    match validation_table(e).1 {
        Some(msg) => Err(ValidationFailed(msg.into()).into()),
        None => Ok(()),
    }
}

/// The report plus the failure message, if any.
pub fn cmd_validate(e: &Economy) -> Result<(Report, Option<&'static str>)> {
    let (t, failure) = validation_table(e);
    let mut rep = Report::default();
    rep.add(t);
    Ok((rep, failure))
}

/// Parses `FIRM=good1,good2` up-set overrides.
pub fn build_regime(e: &Economy, kind: RegimeKind, up_sets: &[String]) -> Result<Regime> {
    let mut regime = Regime::new(kind);
    for entry in up_sets {
        let (firm, goods) =
            entry.split_once('=').with_context(|| format!("bad --up-set {entry:?}, want FIRM=g1,g2"))?;
        let i = e.firms().iter().position(|f| f.name == firm).with_context(|| format!("unknown firm {firm:?}"))?;
        let mut up = Vec::new();
        for g in goods.split(',').filter(|s| !s.is_empty()) {
            up.push(e.good_index(g).with_context(|| format!("unknown good {g:?}"))?);
        }
        regime = regime.with_up_set(i, up);
    }
    Ok(regime)
}

pub fn cmd_solve(e: &Economy, regime: &Regime, opts: &SolveOptions) -> Result<Report> {
    require_valid(e)?;
    let solved = solve(e, regime, opts)?;
    let sol = solution(e, regime, &solved.slopes)?;
    let st = &sol.state;
    let mut rep = Report::default();

    let mut firms = Table::new("firms", &["firm", "output", "slope", "quantity", "labor", "profit"]);
    for (i, f) in e.firms().iter().enumerate() {
        firms.push(vec![
            f.name.as_str().into(),
            e.goods()[f.output].as_str().into(),
            sol.slopes[i].into(),
            st.output_qty[i].into(),
            st.labor[i].into(),
            sol.profits[i].into(),
        ]);
    }
    rep.add(firms);

    let mut goods = Table::new("goods", &["good", "price", "consumption"]);
    for (g, name) in e.goods().iter().enumerate() {
        let c = e.consumer().goods.iter().position(|&h| h == g).map(|k| st.consumption[k]);
        goods.push(vec![name.as_str().into(), st.prices[g].into(), c.into()]);
    }
    rep.add(goods);

    let mut mk = Table::new("markups", &["firm", "good", "net_trade", "markup"]);
    for i in 0..e.n_firms() {
        for (k, g) in e.goods_of(i)?.into_iter().enumerate() {
            mk.push(vec![
                e.firms()[i].name.as_str().into(),
                e.goods()[g].as_str().into(),
                st.net_trades[i][k].into(),
                sol.markups[i][k].into(),
            ]);
        }
    }
    rep.add(mk);

    let d = &solved.diagnostics;
    rep.add(Table::summary(
        "summary",
        vec![
            ("regime", regime.kind.name().into()),
            ("welfare", sol.welfare.into()),
            ("consumer_surplus", sol.consumer_surplus.into()),
            ("iterations_upper", d.iterations_upper.into()),
            ("iterations_lower", d.iterations_lower.into()),
            ("bracket_gap", d.bracket_gap.into()),
            ("unique_certified", d.unique_certified.into()),
            ("lower_start", d.lower_start.into()),
            ("monotone", d.monotone.into()),
            ("residual", d.residual.into()),
        ],
    ));
    Ok(rep)
}

pub fn cmd_compare(e: &Economy, opts: &SolveOptions) -> Result<Report> {
    require_valid(e)?;
    let cmp = compare_regimes(e, opts)?;
    let mut rep = Report::default();

    let mut firms = Table::new("firms", &["firm", "regime", "slope", "profit"]);
    for (i, f) in e.firms().iter().enumerate() {
        for row in &cmp.rows {
            firms.push(vec![
                f.name.as_str().into(),
                row.regime.name().into(),
                row.slopes[i].into(),
                row.profits[i].into(),
            ]);
        }
    }
    rep.add(firms);

    let mut goods = Table::new("prices", &["good", "regime", "price"]);
    for (g, name) in e.goods().iter().enumerate() {
        for row in &cmp.rows {
            goods.push(vec![name.as_str().into(), row.regime.name().into(), row.prices[g].into()]);
        }
    }
    rep.add(goods);

    let mut regimes = Table::new("regimes", &["regime", "welfare", "p0", "bracket_gap", "unique_certified"]);
    for row in &cmp.rows {
        regimes.push(vec![
            row.regime.name().into(),
            row.welfare.into(),
            row.p0.into(),
            row.diagnostics.bracket_gap.into(),
            row.diagnostics.unique_certified.into(),
        ]);
    }
    rep.add(regimes);

    rep.add(Table::summary(
        "dominance",
        vec![
            ("unilateral_margin", cmp.unilateral_margin.into()),
            ("local_margin", cmp.local_margin.into()),
            ("slopes_dominate", cmp.slopes_dominate().into()),
            ("p0_highest_multilateral", cmp.p0_highest_multilateral.into()),
        ],
    ));
    Ok(rep)
}

/// Expands a length-1 list to `n` entries.
fn broadcast(xs: &[f64], n: usize, what: &str) -> Result<Vec<f64>> {
    match xs.len() {
        1 => Ok(vec![xs[0]; n]),
        l if l == n => Ok(xs.to_vec()),
        l => bail!("--{what} has {l} entries, expected 1 or {n}"),
    }
}

pub fn chain_spec(layers: usize, firms: &[f64], k: &[f64], b_c: f64, a: f64, f_l: f64) -> Result<ChainSpec> {
    let firms = broadcast(firms, layers, "firms")?;
    let k = broadcast(k, layers, "k")?;
    if k.iter().any(|&x| x.is_nan() || x <= 0.0) {
        bail!("--k must be positive (k = 1/kappa)");
    }
    let spec = ChainSpec { firms, kappa: k.iter().map(|x| 1.0 / x).collect(), b_c, a, last_layer_labor: f_l };
    spec.check()?;
    Ok(spec)
}

fn layer_table(rep: &mut Report, regime: ChainRegime, spec: &ChainSpec) -> Result<Table> {
    let p = surplus_profile(spec, regime)?;
    let s = &p.solution;
    let mut t = Table::new(
        "layers",
        &[
            "regime",
            "layer",
            "firms",
            "slope",
            "price",
            "firm_quantity",
            "markup_out",
            "markdown_in",
            "profit",
            "layer_profit",
        ],
    );
    for l in 0..spec.n_layers() {
        t.push(vec![
            regime.name().into(),
            (l + 1).into(),
            spec.firms[l].into(),
            s.slopes[l].into(),
            s.prices[l].into(),
            s.firm_quantity[l].into(),
            s.markup_out[l].into(),
            s.markdown_in[l].into(),
            s.profits[l].into(),
            s.layer_profits[l].into(),
        ]);
    }
    let mut flags = rep.tables.iter().position(|t| t.name == "profile");
    if flags.is_none() {
        rep.add(Table::new(
            "profile",
            &[
                "regime",
                "total_quantity",
                "price_final",
                "welfare",
                "iterations",
                "equal_profits",
                "profits_increasing_upstream",
                "profits_increasing_downstream",
                "markups_increasing_upstream",
                "markdowns_increasing_downstream",
                "warning",
            ],
        ));
        flags = Some(rep.tables.len() - 1);
    }
    rep.tables[flags.unwrap()].push(vec![
        regime.name().into(),
        s.total_quantity.into(),
        s.prices[0].into(),
        s.welfare.into(),
        s.iterations.into(),
        p.equal_profits.into(),
        p.profits_increasing_upstream.into(),
        p.profits_increasing_downstream.into(),
        p.markups_increasing_upstream.into(),
        p.markdowns_increasing_downstream.into(),
        s.warning.clone().into(),
    ]);
    Ok(t)
}

/// One or more regimes on a layered chain; `surplus` uses every regime.
pub fn cmd_chain(spec: &ChainSpec, regimes: &[ChainRegime]) -> Result<Report> {
    let mut rep = Report::default();
    let mut layers: Option<Table> = None;
    for &r in regimes {
        let t = layer_table(&mut rep, r, spec)?;
        match &mut layers {
            None => layers = Some(t),
            Some(acc) => acc.rows.extend(t.rows),
        }
    }
    if let Some(t) = layers {
        rep.tables.insert(0, t);
    }
    Ok(rep)
}

fn threshold_row(t: &Threshold, label: &str) -> Vec<Cell> {
    vec![label.into(), t.regime.name().into(), t.n().into(), t.lo.into(), t.hi.into(), t.welfare_flips.into()]
}

pub fn cmd_merger(n1_max: usize, k: f64, b_c: f64, a: f64) -> Result<Report> {
    let st = merger_study(n1_max, k, b_c, a)?;
    let mut rep = Report::default();

    let mut th = Table::new("thresholds", &["name", "regime", "n", "lo", "hi", "surplus_flips"]);
    th.push(threshold_row(&st.lower, "n_*"));
    th.push(threshold_row(&st.upper, "n^*"));
    if let Some(c) = &st.cournot {
        th.push(threshold_row(c, "n_cournot"));
    }
    rep.add(th);

    rep.add(Table::summary(
        "merger",
        vec![
            ("k", st.k.into()),
            ("B_c", st.b_c.into()),
            ("A", st.a.into()),
            ("B_merged", st.b_m.into()),
            ("p_post", st.p_post.into()),
            ("cs_post", st.cs_post.into()),
            ("w_post", st.w_post.into()),
            ("disagree_lo", st.lower.n().into()),
            ("disagree_hi", st.upper.n().into()),
            ("disagree_inside", st.disagree_inside.into()),
        ],
    ));

    let mut roots = Table::new("total_welfare_roots", &["regime", "n"]);
    for (r, n) in &st.total_welfare_roots {
        roots.push(vec![r.name().into(), (*n).into()]);
    }
    rep.add(roots);

    let mut grid = Table::new("grid", &["n1", "regime", "B1", "B2", "p_pre", "cs_pre", "w_pre", "delta_cs", "delta_w"]);
    for p in &st.grid {
        grid.push(vec![
            p.n1.into(),
            p.regime.name().into(),
            p.b1.into(),
            p.b2.into(),
            p.p_pre.into(),
            p.cs_pre.into(),
            p.w_pre.into(),
            p.delta_cs.into(),
            p.delta_w.into(),
        ]);
    }
    rep.add(grid);
    Ok(rep)
}

pub fn cmd_sweep_depth(n_max: usize, k: f64, b_c: f64, a: f64) -> Result<Report> {
    let rows = depth_sweep(n_max, k, b_c, a)?;
    let mut t = Table::new("depth", &["N", "Q_multi", "Q_local", "W_multi", "W_local", "Q_ratio", "W_ratio"]);
    for r in &rows {
        t.push(vec![
            r.n_layers.into(),
            r.q_multi.into(),
            r.q_local.into(),
            r.w_multi.into(),
            r.w_local.into(),
            r.q_ratio().into(),
            r.w_ratio().into(),
        ]);
    }
    let mut rep = Report::default();
    rep.add(t);
    Ok(rep)
}

pub fn cmd_goods_network(e: &Economy, regime: &Regime, opts: &SolveOptions, remove: Option<&str>) -> Result<Report> {
    require_valid(e)?;
    let solved = solve(e, regime, opts)?;
    let slopes = &solved.slopes;
    let removed = match remove {
        None => None,
        Some(name) => {
            Some(e.firms().iter().position(|f| f.name == name).with_context(|| format!("unknown firm {name:?}"))?)
        }
    };
    let gn = goods_network(e, slopes, removed)?;
    let full = goods_network(e, slopes, None)?;
    let sys = assemble_system(e, slopes)?;
    let p = centrality_prices(&full, &sys.a_bar)?;
    let p_left = centrality_prices_left_scaled(&full, &sys.a_bar)?;
    let state = sdfe::clear(e, slopes)?;
    let names = e.goods();
    let mut rep = Report::default();

    let mut g = Table::new("G", &["from", "to", "weight"]);
    for r in 0..gn.g.nrows() {
        for c in 0..gn.g.ncols() {
            if gn.g[(r, c)] != 0.0 {
                g.push(vec![names[r].as_str().into(), names[c].as_str().into(), gn.g[(r, c)].into()]);
            }
        }
    }
    rep.add(g);

    let mut goods = Table::new("goods", &["good", "d", "centrality_price", "left_scaled", "clearing_price"]);
    for k in 0..names.len() {
        goods.push(vec![
            names[k].as_str().into(),
            gn.d[k].into(),
            p[k].into(),
            p_left[k].into(),
            state.prices[k].into(),
        ]);
    }
    rep.add(goods);

    let mut mc = Table::new("markup_centrality", &["firm", "good", "centrality"]);
    for i in 0..e.n_firms() {
        let m = markup_centrality(e, slopes, i)?;
        for (k, gi) in e.goods_of(i)?.into_iter().enumerate() {
            mc.push(vec![e.firms()[i].name.as_str().into(), names[gi].as_str().into(), m[k].into()]);
        }
    }
    rep.add(mc);

    rep.add(Table::summary(
        "summary",
        vec![
            ("regime", regime.kind.name().into()),
            ("removed_firm", remove.map(str::to_string).into()),
            ("max_price_deviation", (&p - &state.prices).amax().into()),
        ],
    ));
    Ok(rep)
}

fn block_rows(t: &mut Table, e: &Economy, which: &str, s: &BlockState) -> Result<()> {
    for i in 0..e.n_firms() {
        let goods = e.goods_of(i)?;
        for (r, &gr) in goods.iter().enumerate() {
            for (c, &gc) in goods.iter().enumerate() {
                t.push(vec![
                    which.into(),
                    e.firms()[i].name.as_str().into(),
                    e.goods()[gr].as_str().into(),
                    e.goods()[gc].as_str().into(),
                    s.blocks[i][(r, c)].into(),
                ]);
            }
        }
    }
    Ok(())
}

pub fn cmd_substitutes(e: &Economy, opts: &SubstitutesOptions) -> Result<Report> {
    require_valid(e)?;
    let sol = solve_substitutes(e, opts)?;
    let mut rep = Report::default();

    let mut blocks = Table::new("blocks", &["limit", "firm", "row", "col", "value"]);
    block_rows(&mut blocks, e, "maximal", &sol.maximal)?;
    block_rows(&mut blocks, e, "minimal", &sol.minimal)?;
    rep.add(blocks);

    let mut prices = Table::new("prices", &["good", "maximal", "minimal"]);
    for (g, name) in e.goods().iter().enumerate() {
        prices.push(vec![name.as_str().into(), sol.maximal.prices[g].into(), sol.minimal.prices[g].into()]);
    }
    rep.add(prices);

    let mut firms = Table::new("firms", &["firm", "good", "net_trade", "markup"]);
    for i in 0..e.n_firms() {
        for (k, g) in e.goods_of(i)?.into_iter().enumerate() {
            firms.push(vec![
                e.firms()[i].name.as_str().into(),
                e.goods()[g].as_str().into(),
                sol.maximal.trades[i][k].into(),
                sol.maximal.markups[i][k].into(),
            ]);
        }
    }
    rep.add(firms);

    let mut profits = Table::new("profits", &["firm", "maximal", "minimal"]);
    for (i, f) in e.firms().iter().enumerate() {
        profits.push(vec![f.name.as_str().into(), sol.maximal.profits[i].into(), sol.minimal.profits[i].into()]);
    }
    rep.add(profits);

    rep.add(Table::summary(
        "summary",
        vec![
            ("regime", opts.regime.name().into()),
            ("iterations_upper", sol.iterations_upper.into()),
            ("iterations_lower", sol.iterations_lower.into()),
            ("lower_start", sol.lower_start.into()),
            ("bracket_violations", sol.bracket_violations.into()),
            ("worst_bracket_eigenvalue", sol.worst_bracket_eigenvalue.into()),
            ("gap", sol.gap.into()),
        ],
    ));
    Ok(rep)
}
