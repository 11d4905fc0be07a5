//! Independent oracles and constructed fixtures shared by the integration
//! tests. Nothing here calls the code under test except to build inputs.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rails::model::{expand_terms, Cohort, MarginTargets, Schema, Term, TermSet, Variable};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Neumaier-compensated sum, written independently of the library.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `ℓ*(θ) = Σ_NP xθ − Σ_P d log(1 + e^{xθ})`, evaluated directly.
pub fn loglik_oracle(theta: &[f64], x_np: &DMatrix<f64>, x_p: &DMatrix<f64>, d: &[f64]) -> f64 {
    let eta =
        |x: &DMatrix<f64>, i: usize| -> f64 { (0..x.ncols()).map(|j| x[(i, j)] * theta[j]).sum() };
    let a = kahan_sum((0..x_np.nrows()).map(|i| eta(x_np, i)));
    let b = kahan_sum((0..x_p.nrows()).map(|i| d[i] * log1p_exp(eta(x_p, i))));
    a - b
}

/// A random propensity problem: an intercept plus 0/1 indicator columns.
#[derive(Debug, Clone)]
pub struct NpsInstance {
    pub x_np: DMatrix<f64>,
    pub x_p: DMatrix<f64>,
    pub d: Vec<f64>,
    pub theta: DVector<f64>,
}

/// Draws an instance with `cols` columns (intercept included) and up to
/// `max_rows` rows per cohort, and a probe point with `|θ_j| ≤ 2`.
pub fn random_instance(rng: &mut ChaCha8Rng, cols: usize, max_rows: usize) -> NpsInstance {
    let n_np = rng.random_range(max_rows / 4..=max_rows);
    let n_p = rng.random_range(max_rows / 4..=max_rows);
    let probs: Vec<f64> = (0..cols).map(|_| rng.random_range(0.2..0.8)).collect();
    let draw = |n: usize, rng: &mut ChaCha8Rng| {
        DMatrix::from_fn(n, cols, |_, j| {
            if j == 0 || rng.random_bool(probs[j]) {
                1.0
            } else {
                0.0
            }
        })
    };
    let x_np = draw(n_np, rng);
    let x_p = draw(n_p, rng);
    let d = (0..n_p).map(|_| rng.random_range(2.0..20.0)).collect();
    let theta = DVector::from_fn(cols, |_, _| rng.random_range(-2.0..2.0));
    NpsInstance {
        x_np,
        x_p,
        d,
        theta,
    }
}

/// A well-posed instance for optimizer comparisons: few columns, every
/// column supported in both cohorts, and far more P weight than NP rows so
/// the maximizer is interior.
pub fn fitting_instance(rng: &mut ChaCha8Rng) -> NpsInstance {
    loop {
        let cols = rng.random_range(1..=4);
        let mut inst = random_instance(rng, cols, 200);
        for d in &mut inst.d {
            *d += 4.0;
        }
        let supported = (0..cols).all(|j| {
            let np: f64 = inst.x_np.column(j).sum();
            let p: f64 = inst
                .x_p
                .column(j)
                .iter()
                .zip(&inst.d)
                .map(|(x, d)| x * d)
                .sum();
            np >= 5.0 && np < 0.5 * p
        });
        if supported {
            return inst;
        }
    }
}

/// Nelder–Mead on `f`, restarted from the best vertex with a shrinking
/// initial simplex until a restart no longer improves.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], scale: f64) -> Vec<f64> {
    let mut best = start.to_vec();
    let mut best_f = f(&best);
    let mut size = scale;
    for _ in 0..60 {
        let (x, fx) = nelder_mead_once(&f, &best, size);
        let improved = fx < best_f;
        if improved {
            best = x;
            best_f = fx;
        }
        if !improved && size < 1e-9 {
            break;
        }
        size = (size * 0.3).max(1e-10);
    }
    best
}

fn nelder_mead_once(f: &impl Fn(&[f64]) -> f64, start: &[f64], size: f64) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += size;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..20_000 {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < 1e-11 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|j| centroid[j] + t * (simplex[n][j] - centroid[j]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let v: Vec<f64> = (0..n)
                        .map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]))
                        .collect();
                    values[i] = f(&v);
                    simplex[i] = v;
                }
            }
        }
    }
    let i = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("nonempty");
    (simplex[i].clone(), values[i])
}

/// Classical IPF on a two-way table of base weights. Returns the row factor
/// `m_final / m_initial` of each cell.
pub fn brute_ipf(table: &[Vec<f64>], row_targets: &[f64], col_targets: &[f64]) -> Vec<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = table.to_vec();
    for _ in 0..100_000 {
        for (i, row) in m.iter_mut().enumerate() {
            let s: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v *= row_targets[i] / s;
            }
        }
        let mut worst = 0.0f64;
        for j in 0..col_targets.len() {
            let s: f64 = m.iter().map(|r| r[j]).sum();
            for r in m.iter_mut() {
                r[j] *= col_targets[j] / s;
            }
        }
        for (i, row) in m.iter().enumerate() {
            let s: f64 = row.iter().sum();
            worst = worst.max((s - row_targets[i]).abs() / row_targets[i]);
        }
        if worst < 1e-15 {
            break;
        }
    }
    m.iter()
        .zip(table)
        .map(|(r, t)| r.iter().zip(t).map(|(a, b)| a / b).collect())
        .collect()
}

/// Three categorical variables `a` (0,1), `b` (0,1,2) and `c` (levels
/// `c_levels`). The probability cohort has one row per observed cell, and
/// each P design weight equals `n_cell / π_cell` under the planted model, so
/// the planted model reproduces the NP totals exactly and every unplanted
/// candidate adds nothing to the pseudo-likelihood.
pub struct CellFixture {
    pub np: Cohort,
    pub p: Cohort,
    pub targets: MarginTargets,
    pub mains: TermSet,
    pub pool: TermSet,
}

pub struct Planted<'a> {
    pub term: &'a str,
    pub cell: &'a [&'a str],
    pub coef: f64,
}

pub fn cell_fixture(
    planted: &[Planted<'_>],
    hidden: &[([&str; 3], f64)],
    c_levels: &[&str],
) -> CellFixture {
    let schema = Arc::new(
        Schema::new(vec![
            Variable::new("a", ["0", "1"]),
            Variable::new("b", ["0", "1", "2"]),
            Variable::new("c", c_levels.iter().copied()),
        ])
        .unwrap(),
    );
    let mut np_rows: Vec<[String; 3]> = Vec::new();
    let mut p_rows: Vec<[String; 3]> = Vec::new();
    let mut d = Vec::new();
    let mut pop_rows: Vec<[String; 3]> = Vec::new();
    let mut pop_w = Vec::new();
    let mut k = 0usize;
    for a in ["0", "1"] {
        for b in ["0", "1", "2"] {
            for c in ["0", "1"] {
                let cell = [a, b, c];
                if hidden.iter().any(|(h, _)| *h == cell) {
                    continue;
                }
                let mut eta = -3.0 + 0.4 * f64::from(a == "1") + 0.3 * f64::from(b == "1")
                    - 0.2 * f64::from(b == "2")
                    + 0.5 * f64::from(c == "1");
                for p in planted {
                    let vars: Vec<&str> = p.term.split(':').collect();
                    let hit = vars.iter().zip(p.cell).all(|(v, level)| {
                        let i = ["a", "b", "c"].iter().position(|n| n == v).unwrap();
                        cell[i] == *level
                    });
                    if hit {
                        eta += p.coef;
                    }
                }
                let n = 30 + (13 * k) % 41;
                k += 1;
                let pi = 1.0 / (1.0 + (-eta).exp());
                let row = cell.map(String::from);
                for _ in 0..n {
                    np_rows.push(row.clone());
                }
                p_rows.push(row.clone());
                d.push(n as f64 / pi);
                pop_rows.push(row);
                pop_w.push(n as f64 / pi);
            }
        }
    }
    for (cell, count) in hidden {
        pop_rows.push(cell.map(String::from));
        pop_w.push(*count);
    }
    let np = Cohort::from_records(schema.clone(), &np_rows).unwrap();
    let p = Cohort::from_records(schema.clone(), &p_rows)
        .unwrap()
        .with_design_weights(d)
        .unwrap();
    let pop = Cohort::from_records(schema.clone(), &pop_rows).unwrap();
    let all = expand_terms(&schema, &["a", "b", "c"], 2, &[]).unwrap();
    let targets = MarginTargets::tabulate(&pop, &all, Some(&pop_w)).unwrap();
    let mains = all.main_effects();
    let pool = all
        .iter()
        .filter(|t| !t.is_main_effect())
        .cloned()
        .collect();
    CellFixture {
        np,
        p,
        targets,
        mains,
        pool,
    }
}

pub fn term(s: &str) -> Term {
    s.parse().unwrap()
}

/// Two groups with unit-free weights 3 and 7 and exact completeness rates
/// 0.8 and 0.4: group g has `n_g` rows of which `rate_g · n_g` are complete.
pub struct MissingFixture {
    pub weights: Vec<f64>,
    pub group: Vec<usize>,
    pub complete: Vec<bool>,
    pub x: DMatrix<f64>,
}

pub fn missing_fixture() -> MissingFixture {
    let spec = [(50usize, 40usize, 3.0), (60, 24, 7.0)];
    let mut weights = Vec::new();
    let mut group = Vec::new();
    let mut complete = Vec::new();
    for (g, &(n, k, w)) in spec.iter().enumerate() {
        for i in 0..n {
            weights.push(w);
            group.push(g);
            complete.push(i < k);
        }
    }
    let x = DMatrix::from_fn(weights.len(), 2, |i, j| {
        if j == 0 || group[i] == 1 {
            1.0
        } else {
            0.0
        }
    });
    MissingFixture {
        weights,
        group,
        complete,
        x,
    }
}
