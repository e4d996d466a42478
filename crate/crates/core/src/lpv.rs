//! Linear parameter-varying systems with affine dependence on a known
//! scheduling signal,
//!
//! ```text
//! y(t) + sum_{i=1..n_a} a_i(p(t-i)) y(t-i) = sum_{i=0..n_b} b_i(p(t-i)) u(t-i)
//! a_i(p) = sum_j a_{i,j} p_j,   b_i(p) = sum_j b_{i,j} p_j
//! ```
//!
//! and their embedding as output-generalized bilinear models with the
//! scheduling signal as exogenous input.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::hankel::{hankel_matrix, vstack};
use crate::matcher::MatchProblem;
use crate::numlin::{rank_of, RankPolicy};
use crate::ogb::{BasisFunction, Factor, OgbModel};
use crate::plants::OgbPlant;
use crate::signal::{numbered_labels, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpvModel {
    pub n_u: usize,
    pub n_y: usize,
    pub n_p: usize,
    /// `a[i-1][j]` is `a_{i,j}` (`n_y x n_y`), `i = 1..=n_a`.
    pub a: Vec<Vec<DMatrix<f64>>>,
    /// `b[i][j]` is `b_{i,j}` (`n_y x n_u`), `i = 0..=n_b`.
    pub b: Vec<Vec<DMatrix<f64>>>,
}

/// Measured LPV signals on a common time axis.
#[derive(Debug, Clone)]
pub struct LpvData {
    pub u: Trajectory,
    pub y: Trajectory,
    pub p: Trajectory,
}

/// Initial window, reference and the scheduling over both.
#[derive(Debug, Clone)]
pub struct LpvWindow {
    pub u_ini: Trajectory,
    pub y_ini: Trajectory,
    pub y_r: Trajectory,
    pub p: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub equivalent: bool,
    /// `permutation[i]` is the row of the direct system matched to row `i`
    /// of the model-based system.
    pub permutation: Vec<usize>,
    /// Largest entry difference over matched rows.
    pub max_deviation: f64,
    pub rows: usize,
    pub columns: usize,
}

impl LpvModel {
    pub fn new(
        n_u: usize,
        n_y: usize,
        n_p: usize,
        a: Vec<Vec<DMatrix<f64>>>,
        b: Vec<Vec<DMatrix<f64>>>,
    ) -> Result<Self> {
        let m = Self {
            n_u,
            n_y,
            n_p,
            a,
            b,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_u == 0 || self.n_y == 0 || self.n_p == 0 {
            return Err(Error::InvalidArgument(
                "LPV model needs inputs, outputs and scheduling channels".into(),
            ));
        }
        if self.b.is_empty() {
            return Err(Error::InvalidArgument("LPV model needs b_0".into()));
        }
        for ai in &self.a {
            ensure_dim("a_i scheduling terms", self.n_p, ai.len())?;
            for m in ai {
                ensure_dim("a_ij rows", self.n_y, m.nrows())?;
                ensure_dim("a_ij columns", self.n_y, m.ncols())?;
            }
        }
        for bi in &self.b {
            ensure_dim("b_i scheduling terms", self.n_p, bi.len())?;
            for m in bi {
                ensure_dim("b_ij rows", self.n_y, m.nrows())?;
                ensure_dim("b_ij columns", self.n_u, m.ncols())?;
            }
        }
        Ok(())
    }

    /// Random model whose output recursion is a contraction for
    /// `|p_j| <= 1`.
    pub fn random(n_u: usize, n_y: usize, n_p: usize, n_a: usize, n_b: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sa = 0.5 / (n_a.max(1) * n_p * n_y) as f64;
        let mut mat = |r: usize, c: usize, s: f64| {
            DMatrix::from_fn(r, c, |_, _| s * rng.gen_range(-1.0..1.0))
        };
        let a = (0..n_a)
            .map(|_| (0..n_p).map(|_| mat(n_y, n_y, sa)).collect())
            .collect();
        let b = (0..=n_b)
            .map(|_| (0..n_p).map(|_| mat(n_y, n_u, 1.0)).collect())
            .collect();
        Self {
            n_u,
            n_y,
            n_p,
            a,
            b,
        }
    }

    pub fn n_a(&self) -> usize {
        self.a.len()
    }

    pub fn n_b(&self) -> usize {
        self.b.len() - 1
    }

    pub fn lag(&self) -> usize {
        self.n_a().max(self.n_b())
    }

    /// Number of additional inputs after pruning.
    pub fn n_nl(&self) -> usize {
        let ny = if self.a.is_empty() { 0 } else { self.n_y };
        self.n_p * (self.n_u + ny)
    }

    /// Extended system Markov parameters `M_i`, mapping `[p u; p y](t-i)`
    /// to `y(t)`.
    fn markov(&self, i: usize) -> DMatrix<f64> {
        let (nu, ny, np) = (self.n_u, self.n_y, self.n_p);
        let mut m = DMatrix::zeros(ny, self.n_nl());
        if let Some(bi) = self.b.get(i) {
            for (j, bij) in bi.iter().enumerate() {
                m.view_mut((0, j * nu), (ny, nu)).copy_from(bij);
            }
        }
        if i >= 1 {
            if let Some(ai) = self.a.get(i - 1) {
                for (j, aij) in ai.iter().enumerate() {
                    m.view_mut((0, np * nu + j * ny), (ny, ny))
                        .copy_from(&(-aij));
                }
            }
        }
        m
    }

    /// Order of the extended LTI system: rank of the Hankel matrix of its
    /// Markov parameters.
    pub fn extended_order(&self) -> Result<usize> {
        let l = self.lag();
        if l == 0 {
            return Ok(0);
        }
        let (ny, w) = (self.n_y, self.n_nl());
        let mut h = DMatrix::zeros(ny * l, w * l);
        for r in 0..l {
            for c in 0..l {
                if r + c < l {
                    h.view_mut((r * ny, c * w), (ny, w))
                        .copy_from(&self.markov(r + c + 1));
                }
            }
        }
        rank_of(&h, &RankPolicy::default())
    }

    fn p_row(j: usize, lag: usize) -> Factor {
        Factor::exogenous(j, lag, 1)
    }

    /// Model with `phi_b = [p(t); ...; p(t-n_b)]` and
    /// `phi_b0 = [0; p(t-1) (x) y(t-1); ...; p(t-n_a) (x) y(t-n_a)]`, keeping
    /// the Kronecker channels `p(t-i) (x) u(t-i)`.
    pub fn naive_ogb(&self) -> Result<OgbModel> {
        self.validate()?;
        let l = self.lag();
        let (nu, ny, np) = (self.n_u, self.n_y, self.n_p);
        let phi_b: Vec<BasisFunction> = (0..=self.n_b())
            .flat_map(|i| (0..np).map(move |j| BasisFunction::exogenous(j, i)))
            .collect();
        let tail: Vec<BasisFunction> = (1..=self.n_a())
            .flat_map(|i| {
                (0..np).flat_map(move |j| {
                    (0..ny).map(move |c| BasisFunction::Monomial {
                        factors: vec![Self::p_row(j, i), Factor::output(c, i, 1)],
                    })
                })
            })
            .collect();
        let model = OgbModel::new(nu, ny, l, self.extended_order()?, phi_b, tail)?;
        let mut selection = Vec::new();
        for i in 0..=self.n_b() {
            for j in 0..np {
                let b = i * np + j;
                for c in 0..nu {
                    selection.push(b * nu * (l + 1) + (l - i) * nu + c);
                }
            }
        }
        selection.extend(model.kron_len()..model.raw_channels());
        model.with_selection(selection)
    }

    /// The naive model with time-shifted duplicates removed:
    /// `u_nl(t) = [p(t) (x) u(t); p(t) (x) y(t)]`.
    pub fn to_ogb(&self) -> Result<OgbModel> {
        Ok(self.naive_ogb()?.prune_redundant()?.0)
    }

    /// `theta_nl` of the naive model, one row per output.
    pub fn theta_nl(&self) -> DMatrix<f64> {
        let (nu, ny, np) = (self.n_u, self.n_y, self.n_p);
        let cols = np * (nu * (self.n_b() + 1) + ny * self.n_a());
        let mut th = DMatrix::zeros(ny, cols);
        let mut k = 0;
        for bi in &self.b {
            for bij in bi {
                th.columns_mut(k, nu).copy_from(bij);
                k += nu;
            }
        }
        for ai in &self.a {
            for aij in ai {
                th.columns_mut(k, ny).copy_from(&(-aij));
                k += ny;
            }
        }
        th
    }

    /// Generic simulator of [`LpvModel::to_ogb`] with the true parameters.
    pub fn ogb_plant(&self) -> Result<OgbPlant> {
        let model = self.to_ogb()?;
        let l = model.lag;
        let (nu, ny) = (self.n_u, self.n_y);
        OgbPlant::new(
            model.clone(),
            vec![DMatrix::zeros(ny, ny); l],
            vec![DMatrix::zeros(ny, nu); l + 1],
            (0..=l).map(|i| self.markov(i)).collect(),
        )
    }
}

/// Forward recursion. `y_init` holds the first `lag()` outputs.
pub fn simulate_lpv(
    m: &LpvModel,
    u: &Trajectory,
    p: &Trajectory,
    y_init: &Trajectory,
) -> Result<Trajectory> {
    m.validate()?;
    ensure_dim("LPV inputs", m.n_u, u.channels())?;
    ensure_dim("LPV scheduling channels", m.n_p, p.channels())?;
    ensure_dim("LPV initial outputs", m.n_y, y_init.channels())?;
    if p.len() < u.len() {
        return Err(Error::MissingExogenous {
            channel: 0,
            step: p.len() as isize,
        });
    }
    let l = m.lag();
    if y_init.len() < l || u.len() < y_init.len() {
        return Err(Error::InsufficientData {
            context: "LPV initial outputs",
            required: l,
            available: y_init.len(),
        });
    }
    let mut y = DMatrix::zeros(m.n_y, u.len());
    y.columns_mut(0, y_init.len()).copy_from(y_init.values());
    for t in y_init.len()..u.len() {
        let mut yt = DVector::zeros(m.n_y);
        for (i, bi) in m.b.iter().enumerate() {
            for (j, bij) in bi.iter().enumerate() {
                yt += bij * u.values().column(t - i) * p.get(j, t - i);
            }
        }
        for (k, ai) in m.a.iter().enumerate() {
            let i = k + 1;
            for (j, aij) in ai.iter().enumerate() {
                yt -= aij * y.column(t - i) * p.get(j, t - i);
            }
        }
        y.column_mut(t).copy_from(&yt);
    }
    Trajectory::new(y, numbered_labels("y", m.n_y))
}

/// `p(t) (x) w(t)` per step.
fn kron_signal(p: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let (np, nw) = (p.nrows(), w.nrows());
    DMatrix::from_fn(np * nw, w.ncols(), |r, t| p[(r / nw, t)] * w[(r % nw, t)])
}

/// Block diagonal of `p(t) (x) I_n` over the columns of `p`.
fn kron_identity_blocks(p: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let (np, steps) = p.shape();
    let mut out = DMatrix::zeros(np * n * steps, n * steps);
    for t in 0..steps {
        for j in 0..np {
            for c in 0..n {
                out[(t * np * n + j * n + c, t * n + c)] = p[(j, t)];
            }
        }
    }
    out
}

/// Data-driven LPV matching system built directly from the Hankel matrices
/// of `u`, `y`, `p (x) u` and `p (x) y`:
///
/// ```text
/// [U_p; Y_p; Y_f; H(p u) - P_f U_f; H(p y)] g = [u_ini; y_ini; y_r; P_p u_ini; p y]
/// ```
pub fn direct_lpv_system(
    m: &LpvModel,
    data: &LpvData,
    window: &LpvWindow,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (t_ini, horizon) = (window.u_ini.len(), window.y_r.len());
    let depth = t_ini + horizon;
    ensure_dim("window scheduling length", depth, window.p.len())?;
    let (nu, ny) = (m.n_u, m.n_y);
    let u = hankel_matrix(data.u.values(), depth)?;
    let y = hankel_matrix(data.y.values(), depth)?;
    let pu = hankel_matrix(&kron_signal(data.p.values(), data.u.values()), depth)?;
    let py = hankel_matrix(&kron_signal(data.p.values(), data.y.values()), depth)?;
    let u_p = u.rows(0, nu * t_ini).into_owned();
    let u_f = u.rows(nu * t_ini, nu * horizon).into_owned();
    let p_blocks = kron_identity_blocks(window.p.values(), nu);
    let pp = p_blocks
        .view((0, 0), (p_blocks.nrows(), nu * t_ini))
        .into_owned();
    let pf = p_blocks
        .view((0, nu * t_ini), (p_blocks.nrows(), nu * horizon))
        .into_owned();
    let a = vstack(&[
        &u_p,
        &y.rows(0, ny * t_ini).into_owned(),
        &y.rows(ny * t_ini, ny * horizon).into_owned(),
        &(pu - &pf * &u_f),
        &py,
    ]);
    let y_win = window
        .y_ini
        .concat(&window.y_r.clone().relabel(window.y_ini.labels().to_vec())?)?;
    let u_ini = DVector::from_column_slice(window.u_ini.values().as_slice());
    let rhs_pu = &pp * &u_ini;
    let rhs_py = kron_signal(window.p.values(), y_win.values());
    let b = DVector::from_iterator(
        a.nrows(),
        u_ini
            .iter()
            .chain(window.y_ini.values().iter())
            .chain(window.y_r.values().iter())
            .chain(rhs_pu.iter())
            .chain(rhs_py.iter())
            .copied(),
    );
    Ok((a, b))
}

/// The matching system assembled through [`LpvModel::to_ogb`].
pub fn ogb_lpv_system(
    m: &LpvModel,
    data: &LpvData,
    window: &LpvWindow,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let model = m.to_ogb()?;
    let ext = model.build_extended(&data.u, &data.y, Some(&data.p))?;
    let asm = MatchProblem::new(
        &model,
        ext,
        window.u_ini.clone(),
        window.y_ini.clone(),
        window.y_r.clone(),
    )?
    .with_exogenous(window.p.clone())
    .assemble()?;
    Ok((asm.a, asm.b))
}

/// Whether some row bijection maps `[a1 | b1]` onto `[a2 | b2]`, with entries
/// agreeing to `rel_tol` times the largest entry magnitude.
pub fn rows_equivalent(
    a1: &DMatrix<f64>,
    b1: &DVector<f64>,
    a2: &DMatrix<f64>,
    b2: &DVector<f64>,
    rel_tol: f64,
) -> EquivalenceReport {
    let (rows, columns) = a1.shape();
    let fail = EquivalenceReport {
        equivalent: false,
        permutation: Vec::new(),
        max_deviation: f64::INFINITY,
        rows,
        columns,
    };
    if a1.shape() != a2.shape() || b1.len() != rows || b2.len() != a2.nrows() {
        return fail;
    }
    let scale = a1
        .amax()
        .max(a2.amax())
        .max(b1.amax())
        .max(b2.amax())
        .max(1.0);
    let tol = rel_tol * scale;
    let dev = |i: usize, k: usize| {
        let d = (0..columns)
            .map(|c| (a1[(i, c)] - a2[(k, c)]).abs())
            .fold(0.0, f64::max);
        d.max((b1[i] - b2[k]).abs())
    };
    let mut used = vec![false; rows];
    let mut permutation = Vec::with_capacity(rows);
    let mut max_deviation: f64 = 0.0;
    for i in 0..rows {
        let best = (0..rows)
            .filter(|&k| !used[k])
            .map(|k| (k, dev(i, k)))
            .find(|&(_, d)| d <= tol);
        match best {
            Some((k, d)) => {
                used[k] = true;
                permutation.push(k);
                max_deviation = max_deviation.max(d);
            }
            None => {
                return EquivalenceReport {
                    permutation,
                    ..fail
                }
            }
        }
    }
    EquivalenceReport {
        equivalent: true,
        permutation,
        max_deviation,
        rows,
        columns,
    }
}

/// Compares the model-based matching system with the direct LPV one.
pub fn verify_row_permutation_equivalence(
    m: &LpvModel,
    data: &LpvData,
    window: &LpvWindow,
) -> Result<EquivalenceReport> {
    let (a1, b1) = ogb_lpv_system(m, data, window)?;
    let (a2, b2) = direct_lpv_system(m, data, window)?;
    Ok(rows_equivalent(&a1, &b1, &a2, &b2, 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_signal(rows: usize, len: usize, seed: u64, prefix: &str) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Trajectory::with_prefix(
            DMatrix::from_fn(rows, len, |_, _| rng.gen_range(-1.0..1.0)),
            prefix,
        )
        .unwrap()
    }

    #[test]
    fn pruned_channels() {
        let m = LpvModel::random(1, 1, 2, 1, 1, 1);
        let naive = m.naive_ogb().unwrap();
        assert_eq!(naive.n_nl(), 2 * (2 + 1));
        assert_eq!(m.theta_nl().ncols(), naive.n_nl());
        let ogb = m.to_ogb().unwrap();
        assert_eq!(ogb.n_nl(), 4);
        let names: Vec<String> = (0..4).map(|k| ogb.describe_channel(k)).collect();
        assert_eq!(
            names,
            ["p1(t)*uh1(t)", "p2(t)*uh1(t)", "p1(t)*y1(t)", "p2(t)*y1(t)"]
        );
        assert_eq!(ogb.burn_in(), 0);
    }

    #[test]
    fn zero_model_gives_zero_output() {
        let mut m = LpvModel::random(1, 1, 1, 1, 1, 2);
        for bi in &mut m.b {
            bi[0].fill(0.0);
        }
        for ai in &mut m.a {
            ai[0].fill(0.0);
        }
        let u = random_signal(1, 10, 3, "u");
        let p = random_signal(1, 10, 4, "p");
        let y = simulate_lpv(&m, &u, &p, &Trajectory::zeros(vec!["y1".into()], 1)).unwrap();
        assert!(y.values().iter().all(|v| *v == 0.0));
        assert!(simulate_lpv(&m, &u, &p.truncate(5).unwrap(), &y.truncate(1).unwrap()).is_err());
    }

    #[test]
    fn generic_simulator_agrees() {
        let m = LpvModel::random(2, 2, 2, 2, 1, 5);
        let u = random_signal(2, 30, 6, "u");
        let p = random_signal(2, 30, 7, "p");
        let y0 = random_signal(2, 2, 8, "y");
        let y = simulate_lpv(&m, &u, &p, &y0).unwrap();
        let plant = m.ogb_plant().unwrap();
        let z = plant.simulate(&u, &y0, Some(&p)).unwrap();
        assert!((y.values() - z.values()).amax() < 1e-12);
    }

    #[test]
    fn constant_scheduling_is_lti() {
        let m = LpvModel::random(1, 1, 1, 1, 1, 9);
        let u = random_signal(1, 12, 10, "u");
        let p = Trajectory::with_prefix(DMatrix::from_element(1, 12, 1.0), "p").unwrap();
        let y = simulate_lpv(&m, &u, &p, &Trajectory::zeros(vec!["y1".into()], 1)).unwrap();
        let (a1, b0, b1) = (m.a[0][0][(0, 0)], m.b[0][0][(0, 0)], m.b[1][0][(0, 0)]);
        for t in 1..12 {
            let e = -a1 * y.get(0, t - 1) + b0 * u.get(0, t) + b1 * u.get(0, t - 1);
            assert!((e - y.get(0, t)).abs() < 1e-14);
        }
    }
}
