//! End-to-end experiments driven by a JSON configuration: generate data,
//! solve the matching problem, roll the plant out with the recovered input
//! and report the realized error.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hankel::{
    check_gpe, min_data_length, partition_extended, GpeReport, GpeVerdict, MinLength,
};
use crate::matcher::{MatchProblem, MatchSolution};
use crate::numlin::{Feasibility, RankPolicy};
use crate::ogb::OgbModel;
use crate::plants::{rrmse, Plant};
use crate::signal::{generate_excitation, numbered_labels, ExcitationSpec, Trajectory};
use crate::structest::{estimate_structure, min_structure_length, StructureReport};

/// Uniform excitation without a seed; seeds come from the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub length: usize,
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub leading_zeros: usize,
}

impl Excitation {
    fn spec(&self, seed: u64) -> ExcitationSpec {
        ExcitationSpec {
            length: self.length,
            low: self.low,
            high: self.high,
            leading_zeros: self.leading_zeros,
            seed,
        }
    }
}

/// Data-generation experiment: excitation and plant initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub excitation: Excitation,
    #[serde(default)]
    pub init: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceConfig {
    /// Roll the plant out under a random input. Samples before the last
    /// `t_ini + horizon` form the history window.
    Excitation {
        excitation: Excitation,
        #[serde(default)]
        init: Vec<f64>,
    },
    /// Given signals, one inner vector per channel.
    Explicit {
        u_ini: Vec<Vec<f64>>,
        y_ini: Vec<Vec<f64>>,
        y_r: Vec<Vec<f64>>,
        #[serde(default)]
        u_hist: Vec<Vec<f64>>,
        #[serde(default)]
        y_hist: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureConfig {
    /// First sample of the data window used.
    #[serde(default)]
    pub start: usize,
    /// Depth `l`; defaults to the model lag.
    #[serde(default)]
    pub lag: Option<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Drop the trailing additional-input equations that cannot reach an
    /// output inside the matching window.
    #[serde(default)]
    pub relax_tail: bool,
}

fn default_threshold() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub plant: Plant,
    /// Model used for matching; the plant's own model when absent.
    #[serde(default)]
    pub model: Option<OgbModel>,
    pub data: DataConfig,
    pub reference: ReferenceConfig,
    pub horizon: usize,
    pub t_ini: usize,
    #[serde(default)]
    pub rank_policy: RankPolicy,
    #[serde(default)]
    pub feasibility: Feasibility,
    /// Data use `seed`, the reference `seed + 1`, solution samples `seed + 2`.
    pub seed: u64,
    #[serde(default)]
    pub check_rank: bool,
    #[serde(default)]
    pub samples: usize,
    #[serde(default)]
    pub lengths: Vec<usize>,
    #[serde(default)]
    pub structure: Option<StructureConfig>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let c: Self = serde_json::from_str(&text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.rank_policy.validate()?;
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        self.model().validate()?;
        if self.model().n_u != self.plant.n_u() || self.model().n_y != self.plant.n_y() {
            return Err(Error::InvalidArgument(
                "model and plant disagree on the number of inputs or outputs".into(),
            ));
        }
        Ok(())
    }

    pub fn model(&self) -> OgbModel {
        self.model
            .clone()
            .unwrap_or_else(|| self.plant.default_model())
    }

    /// Pendulum benchmark: 307 data samples, horizon 100, two initial samples,
    /// reference from the upright-sideways position.
    pub fn pendulum() -> Self {
        Self {
            plant: Plant::Pendulum(Default::default()),
            model: None,
            data: DataConfig {
                excitation: Excitation {
                    length: 307,
                    low: 0.0,
                    high: 0.08,
                    leading_zeros: 0,
                },
                init: vec![0.0, 0.0],
            },
            reference: ReferenceConfig::Excitation {
                excitation: Excitation {
                    length: 102,
                    low: 0.0,
                    high: 0.05,
                    leading_zeros: 2,
                },
                init: vec![std::f64::consts::FRAC_PI_2; 2],
            },
            horizon: 100,
            t_ini: 2,
            rank_policy: RankPolicy::default(),
            feasibility: Feasibility::default(),
            seed: 1,
            check_rank: true,
            samples: 10,
            lengths: Vec::new(),
            structure: None,
        }
    }

    /// Four-tank benchmark: horizon 200, two initial samples, reference and
    /// data from empty tanks.
    pub fn four_tank() -> Self {
        let exc = |length| Excitation {
            length,
            low: 0.0,
            high: 0.05,
            leading_zeros: 2,
        };
        Self {
            plant: Plant::FourTank(Default::default()),
            model: None,
            data: DataConfig {
                excitation: exc(1430),
                init: vec![0.0; 4],
            },
            reference: ReferenceConfig::Excitation {
                excitation: exc(202),
                init: vec![0.0; 4],
            },
            horizon: 200,
            t_ini: 2,
            rank_policy: RankPolicy::default(),
            feasibility: Feasibility::default(),
            seed: 1,
            check_rank: false,
            samples: 0,
            lengths: Vec::new(),
            structure: Some(StructureConfig {
                start: 200,
                lag: None,
                threshold: 1e-6,
                relax_tail: true,
            }),
        }
    }
}

/// Generated data and the matching window.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub model: OgbModel,
    pub u: Trajectory,
    pub y: Trajectory,
    pub u_ini: Trajectory,
    pub y_ini: Trajectory,
    pub y_r: Trajectory,
    /// Inputs and outputs before the initial window.
    pub history: Option<(Trajectory, Trajectory)>,
    pub relaxed_tail: Vec<usize>,
    pub structure: Option<StructureReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub length: usize,
    pub feasible: bool,
    /// Realized error of the plant under the recovered input, over the
    /// horizon.
    pub rrmse: f64,
    pub predicted_rrmse: f64,
    pub parameter_count: usize,
    pub residual: f64,
    pub threshold: f64,
    pub gpe: Option<GpeReport>,
    /// Realized errors of sampled solutions.
    pub sample_rrmse: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MatchRun {
    pub report: MatchReport,
    pub solution: MatchSolution,
    pub y_realized: Trajectory,
}

fn rows_trajectory(rows: &[Vec<f64>], prefix: &str) -> Result<Trajectory> {
    Trajectory::from_rows(rows, numbered_labels(prefix, rows.len()))
}

/// Generates data and the reference window.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let model = config.model();
    let plant = &config.plant;
    let mut exc = config.data.excitation;
    exc.length = exc
        .length
        .max(config.lengths.iter().copied().max().unwrap_or(0));
    let u = generate_excitation(&exc.spec(config.seed), plant.n_u())?;
    let y = plant.generate(&u, &config.data.init)?;
    let (u_ini, y_ini, y_r, history) = match &config.reference {
        ReferenceConfig::Excitation { excitation, init } => {
            let need = config.t_ini + config.horizon;
            if excitation.length < need {
                return Err(Error::InvalidArgument(format!(
                    "reference excitation has length {} but t_ini + horizon = {need}",
                    excitation.length
                )));
            }
            let ur = generate_excitation(&excitation.spec(config.seed + 1), plant.n_u())?;
            let yr = plant.generate(&ur, init)?;
            let hist = excitation.length - need;
            let window = |t: &Trajectory, start, len| t.window(start, len);
            let history = if hist > 0 {
                Some((ur.truncate(hist)?, yr.truncate(hist)?))
            } else {
                None
            };
            (
                window(&ur, hist, config.t_ini)?,
                window(&yr, hist, config.t_ini)?,
                yr.tail(config.horizon)?,
                history,
            )
        }
        ReferenceConfig::Explicit {
            u_ini,
            y_ini,
            y_r,
            u_hist,
            y_hist,
        } => {
            let history = if u_hist.is_empty() && y_hist.is_empty() {
                None
            } else {
                Some((rows_trajectory(u_hist, "u")?, rows_trajectory(y_hist, "y")?))
            };
            (
                rows_trajectory(u_ini, "u")?,
                rows_trajectory(y_ini, "y")?,
                rows_trajectory(y_r, "y")?,
                history,
            )
        }
    };
    if u_ini.len() != config.t_ini || y_r.len() != config.horizon {
        return Err(Error::InvalidArgument(format!(
            "reference window has {} initial and {} future samples, expected {} and {}",
            u_ini.len(),
            y_r.len(),
            config.t_ini,
            config.horizon
        )));
    }
    let mut prepared = Prepared {
        config: config.clone(),
        relaxed_tail: vec![0; model.n_nl()],
        model,
        u,
        y,
        u_ini,
        y_ini,
        y_r,
        history,
        structure: None,
    };
    if let Some(sc) = config.structure {
        let report = structure(&prepared)?;
        if sc.relax_tail {
            prepared.relaxed_tail = report.trailing_relaxation(prepared.model.n_nl());
        }
        prepared.structure = Some(report);
    }
    Ok(prepared)
}

fn truncated(p: &Prepared, length: Option<usize>) -> Result<(Trajectory, Trajectory)> {
    match length {
        Some(t) => Ok((p.u.truncate(t)?, p.y.truncate(t)?)),
        None => Ok((
            p.u.truncate(p.config.data.excitation.length.min(p.u.len()))?,
            p.y.truncate(p.config.data.excitation.length.min(p.y.len()))?,
        )),
    }
}

/// Extended data of the configured length or of `length` samples.
pub fn extended_data(p: &Prepared, length: Option<usize>) -> Result<Trajectory> {
    let (u, y) = truncated(p, length)?;
    p.model.build_extended(&u, &y, None)
}

/// Solves the matching problem on the first `length` data samples and rolls
/// the plant out with the result.
pub fn run_match(p: &Prepared, length: Option<usize>) -> Result<MatchRun> {
    let ext = extended_data(p, length)?;
    let mut problem = MatchProblem::new(
        &p.model,
        ext,
        p.u_ini.clone(),
        p.y_ini.clone(),
        p.y_r.clone(),
    )?
    .with_policy(p.config.rank_policy)
    .with_feasibility(p.config.feasibility)
    .with_rank_check(p.config.check_rank)
    .with_relaxed_tail(p.relaxed_tail.clone())?;
    let (u_past, y_past) = match &p.history {
        Some((hu, hy)) => {
            problem = problem.with_history(hu.clone(), hy.clone())?;
            (
                hu.clone()
                    .relabel(p.u_ini.labels().to_vec())?
                    .concat(&p.u_ini)?,
                hy.clone()
                    .relabel(p.y_ini.labels().to_vec())?
                    .concat(&p.y_ini)?,
            )
        }
        None => (p.u_ini.clone(), p.y_ini.clone()),
    };
    let outcome = problem.solve()?;
    let feasible = outcome.is_feasible();
    let solution = outcome.into_solution();
    let plant = &p.config.plant;
    let y_realized = plant
        .realize(&u_past, &y_past, &solution.u)?
        .relabel(p.y_r.labels().to_vec())?;
    let err = rrmse(&y_realized, &p.y_r)?;
    let mut sample_rrmse = Vec::new();
    if feasible {
        for u in solution.sample_solutions(p.config.samples, p.config.seed + 2)? {
            let y = plant
                .realize(&u_past, &y_past, &u)?
                .relabel(p.y_r.labels().to_vec())?;
            sample_rrmse.push(rrmse(&y, &p.y_r)?);
        }
    }
    let d = &solution.diagnostics;
    let report = MatchReport {
        length: length.unwrap_or(p.config.data.excitation.length),
        feasible,
        rrmse: err,
        predicted_rrmse: d.predicted_rrmse,
        parameter_count: d.parameter_count,
        residual: d.residual,
        threshold: d.threshold,
        gpe: d.gpe,
        sample_rrmse,
    };
    Ok(MatchRun {
        report,
        solution,
        y_realized,
    })
}

/// One matching run per length, in parallel, sorted by length.
pub fn sweep(p: &Prepared, lengths: &[usize]) -> Result<Vec<MatchReport>> {
    let mut out: Vec<MatchReport> = lengths
        .par_iter()
        .map(|&t| run_match(p, Some(t)).map(|r| r.report))
        .collect::<Result<_>>()?;
    out.sort_by_key(|r| r.length);
    Ok(out)
}

/// Rank condition on the first `length` data samples.
pub fn rank_check(p: &Prepared, length: Option<usize>) -> Result<GpeReport> {
    let ext = extended_data(p, length)?;
    let ph = partition_extended(&ext, &p.model.dims(), p.config.horizon, p.config.t_ini)?;
    check_gpe(&ph, &p.model.dims(), &p.config.rank_policy)
}

pub fn min_length(config: &ExperimentConfig) -> MinLength {
    min_data_length(&config.model().dims(), config.horizon, config.t_ini)
}

/// Smallest data length at which the rank condition holds, searched from
/// the formula value within the generated data.
pub fn empirical_min_length(p: &Prepared) -> Result<Option<usize>> {
    let bound = min_length(&p.config).ogb;
    let max = p.u.len();
    let ok = |t: usize| -> Result<bool> {
        if t > max || t <= p.model.burn_in() + p.config.horizon + p.config.t_ini {
            return Ok(false);
        }
        Ok(rank_check(p, Some(t))?.verdict == GpeVerdict::Satisfied)
    };
    let mut t = bound.min(max);
    if ok(t)? {
        while t > 1 && ok(t - 1)? {
            t -= 1;
        }
        return Ok(Some(t));
    }
    while t < max {
        t += 1;
        if ok(t)? {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Structure estimate on the shortest admissible data window.
pub fn structure(p: &Prepared) -> Result<StructureReport> {
    let sc = p.config.structure.unwrap_or(StructureConfig {
        start: 0,
        lag: None,
        threshold: default_threshold(),
        relax_tail: false,
    });
    let l = sc.lag.unwrap_or(p.model.lag);
    let ext = p.model.build_extended(&p.u, &p.y, None)?;
    let len = min_structure_length(&p.model.dims(), l);
    let window = ext.window(sc.start, len)?;
    estimate_structure(&window, &p.model, l, &p.config.rank_policy, sc.threshold)
}

/// Input and output data followed by the extended trajectory.
pub fn simulate(p: &Prepared) -> Result<(Trajectory, Trajectory)> {
    let (u, y) = truncated(p, None)?;
    let data = Trajectory::stack(&[&u, &y])?;
    let ext = p.model.build_extended(&u, &y, None)?;
    Ok((data, ext))
}

#[derive(Serialize)]
struct SweepRow {
    length: usize,
    feasible: bool,
    rrmse: f64,
    predicted_rrmse: f64,
    parameter_count: usize,
    residual: f64,
}

/// Sweep as CSV, one row per length.
pub fn write_sweep_csv<W: std::io::Write>(reports: &[MatchReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in reports {
        w.serialize(SweepRow {
            length: r.length,
            feasible: r.feasible,
            rrmse: r.rrmse,
            predicted_rrmse: r.predicted_rrmse,
            parameter_count: r.parameter_count,
            residual: r.residual,
        })?;
    }
    w.flush()?;
    Ok(())
}
