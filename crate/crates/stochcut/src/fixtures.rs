//! Desk-scale instances shared by tests, the oracle check and the CLI.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{MultistageProblem, StageBlock, StageRealization};

fn first_stage(cost: Vec<f64>, upper: Vec<f64>) -> StageBlock {
    let n = cost.len();
    StageBlock {
        realizations: vec![StageRealization {
            cost,
            linking: DMatrix::zeros(0, 0),
            tech: DMatrix::zeros(0, n),
            rhs: vec![],
            prob: 1.0,
        }],
        lower: vec![0.0; n],
        upper,
    }
}

/// Order x at unit cost, then hold/backorder `h - s = x - d`.
pub fn newsvendor_with(order: f64, holding: f64, backorder: f64, demands: &[f64]) -> MultistageProblem {
    let p = 1.0 / demands.len() as f64;
    let real = |d: f64| StageRealization {
        cost: vec![holding, backorder],
        linking: DMatrix::from_row_slice(1, 1, &[-1.0]),
        tech: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
        rhs: vec![-d],
        prob: p,
    };
    MultistageProblem::stagewise_independent(vec![
        first_stage(vec![order], vec![10.0]),
        StageBlock {
            realizations: demands.iter().map(|&d| real(d)).collect(),
            lower: vec![0.0, 0.0],
            upper: vec![20.0, 20.0],
        },
    ])
}

/// Order cost 1, holding 0.5, backorder 2, demand 1 or 3; optimum 3 at x = 1.
pub fn newsvendor() -> MultistageProblem {
    newsvendor_with(1.0, 0.5, 2.0, &[1.0, 3.0])
}

/// Free ordering, unit backorder, no holding: `Q(x) = E[d - x]_+`.
pub fn newsvendor_plain() -> MultistageProblem {
    newsvendor_with(0.0, 0.0, 1.0, &[1.0, 3.0])
}

/// Upper bound of the penalty slacks; large enough for complete recourse.
pub const SLACK_BOUND: f64 = 10.0;

/// Random stagewise-independent instance. Each stage has q core variables
/// in [0, 3] and m rows `B x_{t-1} + A y + e⁺ - e⁻ = b` with penalised
/// slacks, so every stage is feasible for every reachable state. Only the
/// first core variable of a stage feeds the next stage.
pub fn random_instance(seed: u64, horizon: usize, realizations: usize) -> MultistageProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = [(1usize, 2usize), (1, 3), (2, 1)];
    let mut stages = Vec::with_capacity(horizon);
    let mut n_prev = 0;
    for t in 0..horizon {
        let (m, q) = shapes[rng.gen_range(0..shapes.len())];
        let n = q + 2 * m;
        let tech = DMatrix::from_fn(m, n, |i, j| {
            if j < q {
                (rng.gen_range(-5..=10) as f64) / 10.0
            } else if j == q + 2 * i {
                1.0
            } else if j == q + 2 * i + 1 {
                -1.0
            } else {
                0.0
            }
        });
        let linking = DMatrix::from_fn(m, n_prev, |_, j| if j == 0 { (rng.gen_range(2..=10) as f64) / 10.0 } else { 0.0 });
        let count = if t == 0 { 1 } else { realizations };
        let penalty: Vec<f64> = (0..2 * m).map(|_| rng.gen_range(5.0..10.0)).collect();
        let reals = (0..count)
            .map(|_| {
                let mut cost: Vec<f64> = (0..q).map(|_| rng.gen_range(0.0..3.0)).collect();
                cost.extend(&penalty);
                StageRealization {
                    cost,
                    linking: linking.clone(),
                    tech: tech.clone(),
                    rhs: (0..m).map(|_| rng.gen_range(0.0..3.0)).collect(),
                    prob: 1.0 / count as f64,
                }
            })
            .collect();
        let mut upper = vec![3.0; q];
        upper.extend(std::iter::repeat(SLACK_BOUND).take(2 * m));
        stages.push(StageBlock {
            realizations: reals,
            lower: vec![0.0; n],
            upper,
        });
        n_prev = n;
    }
    MultistageProblem::stagewise_independent(stages)
}

/// Two linked state variables per stage on the box `[0, 1/√2]²`, so the
/// state sets have diameter 1; rows `B x_{t-1} + y + e⁺ - e⁻ = b`.
pub fn two_state_instance(seed: u64, horizon: usize, realizations: usize) -> MultistageProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = std::f64::consts::FRAC_1_SQRT_2;
    let n = 6;
    let mut stages = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let tech = DMatrix::from_fn(2, n, |i, j| match j {
            0 | 1 => {
                if i == j {
                    1.0
                } else {
                    (rng.gen_range(-3..=3) as f64) / 10.0
                }
            }
            _ if j == 2 + 2 * i => 1.0,
            _ if j == 3 + 2 * i => -1.0,
            _ => 0.0,
        });
        let n_prev = if t == 0 { 0 } else { n };
        let linking = DMatrix::from_fn(2, n_prev, |i, j| if j < 2 && i == j { rng.gen_range(0.3..0.9) } else { 0.0 });
        let count = if t == 0 { 1 } else { realizations };
        let reals = (0..count)
            .map(|_| {
                let mut cost: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..3.0)).collect();
                cost.extend((0..4).map(|_| rng.gen_range(5.0..10.0)));
                StageRealization {
                    cost,
                    linking: linking.clone(),
                    tech: tech.clone(),
                    rhs: (0..2).map(|_| rng.gen_range(0.0..1.0)).collect(),
                    prob: 1.0 / count as f64,
                }
            })
            .collect();
        stages.push(StageBlock {
            realizations: reals,
            lower: vec![0.0; n],
            upper: vec![side, side, SLACK_BOUND, SLACK_BOUND, SLACK_BOUND, SLACK_BOUND],
        });
    }
    MultistageProblem::stagewise_independent(stages)
}

/// The acceptance suite: 25 instances with T in {3, 4} and N in {2, 3}.
pub fn suite() -> Vec<(String, MultistageProblem)> {
    (0..25u64)
        .map(|k| {
            let t = 3 + (k % 2) as usize;
            let n = 2 + ((k / 2) % 2) as usize;
            (format!("rand-{k:02}-T{t}-N{n}"), random_instance(1000 + k, t, n))
        })
        .collect()
}


/// Three-stage stagewise-independent inventory data with unique basestock
/// levels.
pub fn inventory() -> crate::oracle::InventoryInstance {
    crate::oracle::InventoryInstance {
        order_cost: vec![1.0, 1.2, 0.8],
        backorder: vec![4.0, 4.0, 5.0],
        holding: vec![0.5, 0.6, 0.5],
        demand: vec![
            vec![(1.0, 0.3), (3.0, 0.45), (6.0, 0.25)],
            vec![(0.0, 0.2), (2.0, 0.5), (5.0, 0.3)],
            vec![(1.0, 0.35), (2.5, 0.4), (4.0, 0.25)],
        ],
        x1: 0.5,
    }
}

/// Order cap for the inventory control problem; never binding on the fixture.
pub const INVENTORY_ORDER_CAP: f64 = 50.0;

/// Scalar control problem `x' = 0.8 x + u + d`, cost
/// `max(|x| + 0.5 u, 2x - 0.5u - 1)` with u in [-1, 1] and terminal `|x|`.
pub fn soc_scalar(t_len: usize, demand: &[(f64, f64)]) -> crate::model::SocProblem {
    use crate::model::{AffinePiece, SocProblem, SocRealization, SocStage};
    let stage = SocStage {
        realizations: demand
            .iter()
            .map(|&(d, p)| SocRealization {
                a: DMatrix::from_element(1, 1, 0.8),
                b: DMatrix::from_element(1, 1, 1.0),
                drift: vec![d],
                cost: vec![
                    AffinePiece { constant: 0.0, gx: vec![1.0], gu: vec![0.5] },
                    AffinePiece { constant: 0.0, gx: vec![-1.0], gu: vec![0.5] },
                    AffinePiece { constant: -1.0, gx: vec![2.0], gu: vec![-0.5] },
                ],
                prob: p,
            })
            .collect(),
        u_lower: vec![-1.0],
        u_upper: vec![1.0],
    };
    SocProblem {
        stages: vec![stage; t_len],
        terminal: vec![
            AffinePiece { constant: 0.0, gx: vec![1.0], gu: vec![] },
            AffinePiece { constant: 0.0, gx: vec![-1.0], gu: vec![] },
        ],
        x1: vec![1.3],
    }
}

/// Lower bound on every stage-plus-tail cost of `soc_scalar`.
pub const SOC_SCALAR_FLOOR: f64 = -100.0;

fn scalar_block(a: f64, demand: &[(f64, f64)], u_upper: f64, pieces: &[(f64, f64, f64)]) -> crate::model::SocStage {
    use crate::model::{AffinePiece, SocRealization, SocStage};
    SocStage {
        realizations: demand
            .iter()
            .map(|&(d, p)| SocRealization {
                a: DMatrix::from_element(1, 1, a),
                b: DMatrix::from_element(1, 1, 1.0),
                drift: vec![-d],
                cost: pieces
                    .iter()
                    .map(|&(c, gx, gu)| AffinePiece { constant: c, gx: vec![gx], gu: vec![gu] })
                    .collect(),
                prob: p,
            })
            .collect(),
        u_lower: vec![0.0],
        u_upper: vec![u_upper],
    }
}

/// Discounted scalar problem with `x' = u - d`: the next state does not
/// depend on the current one.
pub fn stationary_reset() -> crate::horizon::StationaryProblem {
    crate::horizon::StationaryProblem {
        blocks: vec![scalar_block(0.0, &[(0.0, 0.3), (0.5, 0.4), (1.0, 0.3)], 2.0, &[(0.0, 1.0, 0.4), (0.0, -2.0, 0.4)])],
        gamma: 0.8,
        kappa: None,
        state_box: Some((vec![-1.0], vec![2.0])),
        x1: vec![0.5],
        psi: None,
    }
}

/// Discounted scalar problem `x' = 0.5 x + u - d` on [-2, 4] with κ = 6.
pub fn stationary_scalar() -> crate::horizon::StationaryProblem {
    crate::horizon::StationaryProblem {
        blocks: vec![scalar_block(0.5, &[(0.0, 0.25), (0.5, 0.5), (1.0, 0.25)], 1.0, &[(0.0, 1.0, 1.0), (0.0, -2.0, 1.0)])],
        gamma: 0.8,
        kappa: Some(6.0),
        state_box: Some((vec![-2.0], vec![4.0])),
        x1: vec![1.0],
        psi: None,
    }
}

/// Deterministic three-stage covering problem. Stage 2 stock y serves both
/// later demands; the optimum is x = 0, y = 4 with value 2.1.
pub fn dsa_deterministic() -> crate::dsa::DsaProblem {
    use crate::dsa::{DsaProblem, DsaRealization, DsaStage};
    let stage = |a: &[f64], b: DMatrix<f64>, rhs: f64, c: Vec<f64>, upper: Vec<f64>| DsaStage {
        realizations: vec![DsaRealization {
            a: DMatrix::from_row_slice(if a.is_empty() { 0 } else { 1 }, c.len(), a),
            b,
            rhs: if a.is_empty() { vec![] } else { vec![rhs] },
            q: vec![0.0; c.len()],
            c,
            prob: 1.0,
        }],
        lower: vec![0.0; upper.len()],
        upper,
    };
    DsaProblem {
        stages: vec![
            stage(&[], DMatrix::zeros(0, 0), 0.0, vec![1.0, 1.5], vec![3.0, 3.0]),
            stage(&[1.0, 1.0, -1.0], DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), 4.0, vec![0.5, 3.0, 0.2], vec![6.0, 10.0, 10.0]),
            stage(&[1.0, 1.0, -1.0], DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]), 3.0, vec![2.0, 4.0, 0.1], vec![6.0, 10.0, 10.0]),
        ],
    }
}

/// Strongly convex three-stage problem: stage t >= 2 has stock x in [0, 3]²
/// and a free deviation s with `x - s + 0.5 x_prev = b_j`, cost
/// `c·x + ½ q |x|² + ½ r |s|²`; three equiprobable b per stage.
pub fn dsa_strongly_convex() -> crate::dsa::DsaProblem {
    use crate::dsa::{DsaProblem, DsaRealization, DsaStage};
    let inf = f64::INFINITY;
    let later = |bs: [[f64; 2]; 3], prev: usize, c: [f64; 2]| DsaStage {
        realizations: bs
            .iter()
            .map(|b| {
                let mut link = DMatrix::zeros(2, prev);
                link[(0, 0)] = 0.5;
                link[(1, 1)] = 0.5;
                DsaRealization {
                    a: DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
                    b: link,
                    rhs: b.to_vec(),
                    c: vec![c[0], c[1], 0.0, 0.0],
                    q: vec![0.5, 0.5, 2.0, 2.0],
                    prob: 1.0 / 3.0,
                }
            })
            .collect(),
        lower: vec![0.0, 0.0, -inf, -inf],
        upper: vec![3.0, 3.0, inf, inf],
    };
    DsaProblem {
        stages: vec![
            DsaStage {
                realizations: vec![DsaRealization {
                    a: DMatrix::zeros(0, 2),
                    b: DMatrix::zeros(0, 0),
                    rhs: vec![],
                    c: vec![0.3, -0.2],
                    q: vec![1.0, 1.0],
                    prob: 1.0,
                }],
                lower: vec![0.0, 0.0],
                upper: vec![3.0, 3.0],
            },
            later([[2.0, 1.0], [3.0, 2.5], [1.0, 3.0]], 2, [0.2, 0.1]),
            later([[1.5, 2.0], [2.5, 0.5], [3.5, 1.5]], 4, [0.1, 0.3]),
        ],
    }
}

/// Linear fixtures addressable by name: `newsvendor`, `newsvendor-plain`,
/// `inventory`, and the suite members `rand-KK-TT-NN`.
pub fn by_name(name: &str) -> Option<MultistageProblem> {
    match name {
        "newsvendor" => Some(newsvendor()),
        "newsvendor-plain" => Some(newsvendor_plain()),
        "inventory" => Some(crate::soc::to_multistage(&crate::soc::inventory_soc(&inventory(), INVENTORY_ORDER_CAP))),
        _ => suite().into_iter().find(|(n, _)| n == name).map(|(_, p)| p),
    }
}

/// Every name accepted by [`by_name`].
pub fn names() -> Vec<String> {
    let mut v: Vec<String> = ["newsvendor", "newsvendor-plain", "inventory"].iter().map(|s| s.to_string()).collect();
    v.extend(suite().into_iter().map(|(n, _)| n));
    v
}
