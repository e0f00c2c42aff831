#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdfe::{validate, Consumer, Economy, Firm};

#[derive(Debug, Clone, Copy, Default)]
pub struct Shape {
    /// Only good 0 is consumed.
    pub single_consumed: bool,
    /// Exactly one producer per good, every good consumed.
    pub square: bool,
}

/// Random viable, connected economy with at most 8 firms and 6 goods and an
/// interior multilateral equilibrium.
///
/// Inputs always come from higher-indexed goods, so the technology is acyclic
/// and every good feeds into good 0. Intermediate goods nobody consumes get
/// at least two producers so no firm faces a zero-slope bilateral monopoly.
pub fn random_economy(rng: &mut ChaCha8Rng, shape: Shape) -> Economy {
    loop {
        let m = rng.gen_range(2..=6);
        let consumed: Vec<bool> =
            (0..m).map(|g| g == 0 || shape.square || (!shape.single_consumed && rng.gen_bool(0.5))).collect();
        let producers: Vec<usize> = consumed
            .iter()
            .map(|&c| {
                if shape.square {
                    1
                } else if c {
                    rng.gen_range(1..=2)
                } else {
                    2
                }
            })
            .collect();
        if producers.iter().sum::<usize>() > 8 {
            continue;
        }
        let mut firms = Vec::new();
        for g in 0..m {
            for j in 0..producers[g] {
                let mut inputs = Vec::new();
                for h in g + 1..m {
                    if rng.gen_bool(0.5) {
                        inputs.push((h, rng.gen_range(0.1..0.6)));
                    }
                }
                firms.push(Firm::new(
                    format!("g{g}f{j}"),
                    g,
                    &inputs,
                    rng.gen_range(0.0..0.2),
                    rng.gen_range(0.3..2.0),
                ));
            }
        }
        // make sure every good is bought downstream or by the consumer
        for h in 1..m {
            let used = consumed[h] || firms.iter().any(|f| f.trades(h) && f.output != h);
            if !used {
                let buyers: Vec<usize> = (0..firms.len()).filter(|&i| firms[i].output < h).collect();
                let i = buyers[rng.gen_range(0..buyers.len())];
                firms[i].inputs.push((h, rng.gen_range(0.1..0.6)));
            }
        }
        let goods: Vec<usize> = (0..m).filter(|&g| consumed[g]).collect();
        let c = goods.len();
        let intercept = DVector::from_fn(c, |_, _| rng.gen_range(1.5..3.0));
        let slope = DMatrix::from_diagonal(&DVector::from_fn(c, |_, _| rng.gen_range(0.5..1.5)));
        let consumer = Consumer { goods, intercept, slope };
        let names = (0..m).map(|g| format!("g{g}")).collect();
        if !goods_linked(m, &firms) {
            continue;
        }
        let Ok(e) = Economy::new(names, firms, consumer) else { continue };
        if validate(&e).ok() && interior(&e) {
            return e;
        }
    }
}

/// Positive prices and outputs at the multilateral equilibrium.
pub fn interior(e: &Economy) -> bool {
    let Ok(s) = sdfe::solve(e, &sdfe::RegimeKind::Multilateral.into(), &sdfe::SolveOptions::default()) else {
        return false;
    };
    let st = sdfe::clear(e, &s.slopes).unwrap();
    st.negative_prices.is_empty() && st.negative_quantities.is_empty()
}

/// Goods joined through some firm's technology form one component; otherwise
/// the economy is a set of unrelated markets.
fn goods_linked(m: usize, firms: &[Firm]) -> bool {
    let mut root: Vec<usize> = (0..m).collect();
    fn find(root: &mut [usize], g: usize) -> usize {
        if root[g] != g {
            let r = find(root, root[g]);
            root[g] = r;
        }
        root[g]
    }
    for f in firms {
        for &(h, _) in &f.inputs {
            let (a, b) = (find(&mut root, f.output), find(&mut root, h));
            root[a] = b;
        }
    }
    let r0 = find(&mut root, 0);
    (1..m).all(|g| find(&mut root, g) == r0)
}

pub fn economies(seed: u64, count: usize, shape: Shape) -> Vec<Economy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_economy(&mut rng, shape)).collect()
}

/// The 20 economies shared by the uniqueness and dominance checks: the first
/// eight buy a single final good.
pub fn standard_twenty() -> Vec<Economy> {
    let mut v = economies(11, 8, Shape { single_consumed: true, square: false });
    v.extend(economies(12, 12, Shape::default()));
    v
}

pub fn square_economies() -> Vec<Economy> {
    economies(13, 10, Shape { single_consumed: false, square: true })
}

/// Chain grid: depth up to 5, layer sizes in {2, 3}, common capacity k.
pub fn chain_grid() -> Vec<sdfe::ChainSpec> {
    let mut out = Vec::new();
    for k in [0.5, 1.0, 2.0] {
        for depth in 1..=5usize {
            for mask in 0..(1u32 << depth) {
                // keep the grid modest: all patterns up to depth 3, then a few
                if depth > 3 && mask % 5 != 0 {
                    continue;
                }
                let firms = (0..depth).map(|l| if mask >> l & 1 == 1 { 3.0 } else { 2.0 }).collect();
                out.push(sdfe::ChainSpec {
                    firms,
                    kappa: vec![1.0 / k; depth],
                    b_c: 1.0,
                    a: 1.0,
                    last_layer_labor: 0.0,
                });
            }
        }
    }
    out
}
