//! Output matching: find inputs that make the system reproduce a reference
//! output after a given initial trajectory.
//!
//! The data enter through the partitioned Hankel matrix of the extended
//! trajectory `[u_h; y; u_nl]`. With `Phi_p`, `Phi_f` and `phi_0` obtained by
//! pulse probing on the known output window `y_ini ^ y_r`,
//!
//! ```text
//! A = [U_hp; Y_p; Y_f; U_nl - Phi_f U_hf]
//! b = [u_h,ini; y_ini; y_r; Phi_p u_h,past + phi_0]
//! ```
//!
//! and every solution of `A g = b` yields a matching input
//! `u = h^{-1}(U_hf g)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::hankel::{check_gpe, partition_extended, vstack, GpeReport, PartitionedHankel};
use crate::numlin::{
    parameterize_image, solve_affine, AffineOutcome, AffineSolutionSet, Feasibility, RankPolicy,
};
use crate::ogb::{split_phi_matrix, InputMap, OgbModel};
use crate::signal::{numbered_labels, Trajectory};

/// An output-matching problem.
#[derive(Debug, Clone)]
pub struct MatchProblem {
    model: OgbModel,
    data: Trajectory,
    u_ini: Trajectory,
    y_ini: Trajectory,
    y_r: Trajectory,
    history: Option<(Trajectory, Trajectory)>,
    exogenous: Option<Trajectory>,
    policy: RankPolicy,
    feasibility: Feasibility,
    relaxed_tail: Vec<usize>,
    check_rank: bool,
}

/// The assembled linear system and the blocks it was built from.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub hankel: PartitionedHankel,
    pub phi_p: DMatrix<f64>,
    pub phi_f: DMatrix<f64>,
    pub phi_b0_stack: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub gpe: Option<GpeReport>,
    pub residual: f64,
    pub threshold: f64,
    pub feasible: bool,
    pub parameter_count: usize,
    /// `||Y_f g - y_r|| / ||y_r||` of the data combination.
    pub predicted_rrmse: f64,
    pub rows: usize,
    pub columns: usize,
    pub rank_a: usize,
}

#[derive(Debug, Clone)]
pub struct MatchSolution {
    /// Input over the horizon in original coordinates.
    pub u: Trajectory,
    pub u_h: Trajectory,
    /// Minimum-norm `g`.
    pub g: DVector<f64>,
    /// All transformed inputs, stacked time-major.
    pub u_h_set: AffineSolutionSet,
    /// Output of the data combination `Y_f g`.
    pub y_predicted: Trajectory,
    pub diagnostics: Diagnostics,
    input_map: InputMap,
    prior: DMatrix<f64>,
    labels: Vec<String>,
}

/// Result of [`MatchProblem::solve`]. An infeasible outcome carries the
/// least-squares solution.
#[derive(Debug, Clone)]
pub enum MatchOutcome {
    Feasible(MatchSolution),
    Infeasible(MatchSolution),
}

impl MatchOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, MatchOutcome::Feasible(_))
    }

    pub fn solution(&self) -> &MatchSolution {
        match self {
            MatchOutcome::Feasible(s) | MatchOutcome::Infeasible(s) => s,
        }
    }

    pub fn into_solution(self) -> MatchSolution {
        match self {
            MatchOutcome::Feasible(s) | MatchOutcome::Infeasible(s) => s,
        }
    }

    /// The solution if feasible, an error quoting the residual otherwise.
    pub fn feasible(self) -> Result<MatchSolution> {
        match self {
            MatchOutcome::Feasible(s) => Ok(s),
            MatchOutcome::Infeasible(s) => Err(Error::Numerical(format!(
                "matching problem has no solution: residual {:e} above {:e}",
                s.diagnostics.residual, s.diagnostics.threshold
            ))),
        }
    }
}

impl MatchProblem {
    /// `data` is the extended trajectory from [`OgbModel::build_extended`].
    pub fn new(
        model: &OgbModel,
        data: Trajectory,
        u_ini: Trajectory,
        y_ini: Trajectory,
        y_r: Trajectory,
    ) -> Result<Self> {
        model.validate()?;
        let dims = model.dims();
        ensure_dim(
            "extended data channels",
            dims.extended_channels(),
            data.channels(),
        )?;
        ensure_dim("initial input channels", model.n_u, u_ini.channels())?;
        ensure_dim("initial output channels", model.n_y, y_ini.channels())?;
        ensure_dim("reference channels", model.n_y, y_r.channels())?;
        ensure_dim("initial window length", u_ini.len(), y_ini.len())?;
        if y_r.is_empty() {
            return Err(Error::InvalidArgument("reference output is empty".into()));
        }
        Ok(Self {
            model: model.clone(),
            data,
            u_ini,
            y_ini,
            y_r,
            history: None,
            exogenous: None,
            policy: RankPolicy::default(),
            feasibility: Feasibility::default(),
            relaxed_tail: vec![0; model.n_nl()],
            check_rank: false,
        })
    }

    /// Inputs and outputs preceding the initial window. Needed when the
    /// additional inputs or the input map look further back than the
    /// initial window starts.
    pub fn with_history(mut self, u: Trajectory, y: Trajectory) -> Result<Self> {
        ensure_dim("history input channels", self.model.n_u, u.channels())?;
        ensure_dim("history output channels", self.model.n_y, y.channels())?;
        ensure_dim("history length", u.len(), y.len())?;
        self.history = Some((u, y));
        Ok(self)
    }

    /// Known exogenous signal over history, initial window and horizon.
    pub fn with_exogenous(mut self, p: Trajectory) -> Self {
        self.exogenous = Some(p);
        self
    }

    pub fn with_policy(mut self, policy: RankPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_feasibility(mut self, feasibility: Feasibility) -> Self {
        self.feasibility = feasibility;
        self
    }

    /// Per additional input, the number of trailing samples whose equations
    /// are dropped. Valid when those samples cannot reach an output inside
    /// the window, e.g. the channel's smallest delay to any output.
    pub fn with_relaxed_tail(mut self, relax: Vec<usize>) -> Result<Self> {
        ensure_dim("relaxed tail channels", self.model.n_nl(), relax.len())?;
        self.relaxed_tail = relax;
        Ok(self)
    }

    pub fn with_rank_check(mut self, on: bool) -> Self {
        self.check_rank = on;
        self
    }

    pub fn t_ini(&self) -> usize {
        self.u_ini.len()
    }

    pub fn horizon(&self) -> usize {
        self.y_r.len()
    }

    pub fn model(&self) -> &OgbModel {
        &self.model
    }

    fn history_len(&self) -> usize {
        self.history.as_ref().map_or(0, |(u, _)| u.len())
    }

    /// Known inputs and outputs: history followed by the initial window.
    fn known(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (u, y) = match &self.history {
            Some((hu, hy)) => (
                hu.clone()
                    .relabel(self.u_ini.labels().to_vec())?
                    .concat(&self.u_ini)?,
                hy.clone()
                    .relabel(self.y_ini.labels().to_vec())?
                    .concat(&self.y_ini)?,
            ),
            None => (self.u_ini.clone(), self.y_ini.clone()),
        };
        Ok((u.values().clone(), y.values().clone()))
    }

    pub fn assemble(&self) -> Result<Assembled> {
        let m = &self.model;
        let dims = m.dims();
        let (t_ini, horizon) = (self.t_ini(), self.horizon());
        let hist = self.history_len();
        let hlb = m.input_map.causal_lookback();
        if hist < m.burn_in() {
            return Err(Error::InsufficientData {
                context: "history before the initial window",
                required: m.burn_in(),
                available: hist,
            });
        }
        let ph = partition_extended(&self.data, &dims, horizon, t_ini)?;
        let (u_known, y_known) = self.known()?;
        let width = hist + t_ini + horizon;
        let mut y_full = DMatrix::zeros(m.n_y, width);
        y_full.columns_mut(0, hist + t_ini).copy_from(&y_known);
        y_full
            .columns_mut(hist + t_ini, horizon)
            .copy_from(self.y_r.values());
        let exo = match &self.exogenous {
            Some(p) => {
                if p.len() < width {
                    return Err(Error::InsufficientData {
                        context: "exogenous signal over the matching window",
                        required: width,
                        available: p.len(),
                    });
                }
                Some(p.values().columns(hlb, width - hlb).into_owned())
            }
            None => None,
        };
        let y_win = y_full.columns(hlb, width - hlb).into_owned();
        let (phi0, phi) = m.probe_phi_matrix(&y_win, exo.as_ref(), t_ini + horizon)?;
        let past_steps = hist - hlb + t_ini;
        let (phi_p, phi_f) = split_phi_matrix(&phi, m.n_u, past_steps, horizon)?;
        let uh_known = m.input_map.forward(&u_known)?;
        let uh_past = DVector::from_column_slice(uh_known.as_slice());
        let uh_ini = uh_known.columns(past_steps - t_ini, t_ini).into_owned();

        let keep: Vec<usize> = (0..t_ini + horizon)
            .flat_map(|tau| (0..m.n_nl()).map(move |ch| (tau, ch)))
            .filter(|&(tau, ch)| tau + self.relaxed_tail[ch] < t_ini + horizon)
            .map(|(tau, ch)| tau * m.n_nl() + ch)
            .collect();
        let unl_rows = (&ph.u_nl - &phi_f * &ph.u_hf).select_rows(&keep);
        let rhs_nl = (&phi_p * &uh_past + &phi0).select_rows(&keep);

        let a = vstack(&[&ph.u_hp, &ph.y_p, &ph.y_f, &unl_rows]);
        let b = DVector::from_iterator(
            a.nrows(),
            uh_ini
                .iter()
                .chain(self.y_ini.values().iter())
                .chain(self.y_r.values().iter())
                .chain(rhs_nl.iter())
                .copied(),
        );
        Ok(Assembled {
            a,
            b,
            hankel: ph,
            phi_p,
            phi_f,
            phi_b0_stack: phi0,
        })
    }

    pub fn solve(&self) -> Result<MatchOutcome> {
        let m = &self.model;
        let asm = self.assemble()?;
        let gpe = if self.check_rank {
            Some(check_gpe(&asm.hankel, &m.dims(), &self.policy)?)
        } else {
            None
        };
        let outcome = solve_affine(&asm.a, &asm.b, &self.policy, &self.feasibility)?;
        let (feasible, threshold) = match &outcome {
            AffineOutcome::Feasible(s) => {
                (true, self.feasibility.threshold(&asm.b).max(s.residual))
            }
            AffineOutcome::NoSolution { threshold, .. } => (false, *threshold),
        };
        let g_set = outcome.into_solution_set();
        let u_h_set = parameterize_image(&asm.hankel.u_hf, &g_set, &self.policy)?;
        let y_pred = &asm.hankel.y_f * &g_set.offset;
        let y_ref = DVector::from_column_slice(self.y_r.values().as_slice());
        let predicted_rrmse = (&y_pred - &y_ref).norm() / y_ref.norm().max(f64::MIN_POSITIVE);
        let diagnostics = Diagnostics {
            gpe,
            residual: g_set.residual,
            threshold,
            feasible,
            parameter_count: u_h_set.dimension(),
            predicted_rrmse,
            rows: asm.a.nrows(),
            columns: asm.a.ncols(),
            rank_a: g_set.offset.len() - g_set.dimension(),
        };
        let (u_known, _) = self.known()?;
        let hlb = m.input_map.causal_lookback();
        let prior = u_known.columns(u_known.ncols() - hlb, hlb).into_owned();
        let labels = self.u_ini.labels().to_vec();
        let uh = DMatrix::from_column_slice(m.n_u, self.horizon(), u_h_set.offset.as_slice());
        let u = Trajectory::new(m.input_map.inverse(&uh, &prior)?, labels.clone())?;
        let sol = MatchSolution {
            u,
            u_h: Trajectory::with_prefix(uh, "uh")?,
            g: g_set.offset,
            u_h_set,
            y_predicted: Trajectory::new(
                DMatrix::from_column_slice(m.n_y, self.horizon(), y_pred.as_slice()),
                self.y_r.labels().to_vec(),
            )?,
            diagnostics,
            input_map: m.input_map.clone(),
            prior,
            labels,
        };
        Ok(if feasible {
            MatchOutcome::Feasible(sol)
        } else {
            MatchOutcome::Infeasible(sol)
        })
    }
}

impl MatchSolution {
    pub fn parameter_count(&self) -> usize {
        self.u_h_set.dimension()
    }

    /// Input `h^{-1}(offset + basis z)`.
    pub fn input_for(&self, z: &DVector<f64>) -> Result<Trajectory> {
        let v = self.u_h_set.point(z)?;
        let n_u = self.u.channels();
        let uh = DMatrix::from_column_slice(n_u, v.len() / n_u, v.as_slice());
        Trajectory::new(
            self.input_map.inverse(&uh, &self.prior)?,
            self.labels.clone(),
        )
    }

    /// `count` inputs for parameters drawn uniformly from `[-1, 1]`.
    pub fn sample_solutions(&self, count: usize, seed: u64) -> Result<Vec<Trajectory>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.parameter_count();
        (0..count)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..=1.0));
                self.input_for(&z)
            })
            .collect()
    }

    /// Parameters of the transformed input with the smallest norm.
    pub fn min_energy_parameters(&self) -> DVector<f64> {
        -(self.u_h_set.basis.transpose() * &self.u_h_set.offset)
    }

    /// Input whose transformed version has the smallest norm.
    pub fn select_min_energy(&self) -> Result<Trajectory> {
        self.input_for(&self.min_energy_parameters())
    }

    /// Time-indexed table of `u`, `u_h` and the predicted output.
    pub fn table(&self) -> Result<Trajectory> {
        Trajectory::stack(&[
            &self.u,
            &self
                .u_h
                .clone()
                .relabel(numbered_labels("uh", self.u_h.channels()))?,
            &self
                .y_predicted
                .clone()
                .relabel(numbered_labels("y_pred", self.y_predicted.channels()))?,
        ])
    }
}
