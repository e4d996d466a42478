//! Ground-truth simulators and the RRMSE metric.
//!
//! The pendulum and four-tank recursions are explicit Euler discretizations.
//! [`OgbPlant`] simulates any [`OgbModel`] with known parameters and is used
//! to check that each benchmark is an instance of the model class.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::ogb::{BasisFunction, EvalContext, OgbModel};
use crate::signal::{numbered_labels, Trajectory};

/// Rotational pendulum driven by a motor.
///
/// The defaults describe an unbalanced disc; any positive constants work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumParams {
    pub m: f64,
    pub g: f64,
    pub l_p: f64,
    pub j: f64,
    pub tau: f64,
    pub k_m: f64,
    pub t_s: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            m: 0.076,
            g: 9.8,
            l_p: 0.041,
            j: 2.4e-4,
            tau: 0.4,
            k_m: 11.0,
            t_s: 0.05,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.m, self.g, self.l_p, self.j, self.tau, self.k_m, self.t_s,
        ];
        if all.iter().any(|x| !x.is_finite()) || self.j <= 0.0 || self.tau <= 0.0 || self.t_s <= 0.0
        {
            return Err(Error::InvalidArgument(
                "pendulum needs finite constants with J, tau, T_s > 0".into(),
            ));
        }
        Ok(())
    }

    /// `T_s^2 m g l / J`.
    pub fn gravity_gain(&self) -> f64 {
        self.t_s * self.t_s * self.m * self.g * self.l_p / self.j
    }

    /// `T_s^2 K_m / tau`.
    pub fn input_gain(&self) -> f64 {
        self.t_s * self.t_s * self.k_m / self.tau
    }
}

/// `y(t)` from `y(t-1)`, `y(t-2)` and `u(t-2)`.
pub fn pendulum_step(p: &PendulumParams, y1: f64, y2: f64, u2: f64) -> f64 {
    2.0 * y1 - y2 - p.gravity_gain() * y2.sin() - p.t_s / p.tau * (y1 - y2) + p.input_gain() * u2
}

/// Angle trajectory of the same length as `u`, starting from `y(0), y(1)`.
pub fn simulate_pendulum(
    p: &PendulumParams,
    u: &Trajectory,
    y_init: [f64; 2],
) -> Result<Trajectory> {
    p.validate()?;
    ensure_dim("pendulum inputs", 1, u.channels())?;
    if u.len() < 2 {
        return Err(Error::InsufficientData {
            context: "pendulum simulation",
            required: 2,
            available: u.len(),
        });
    }
    let mut y = vec![0.0; u.len()];
    y[..2].copy_from_slice(&y_init);
    for t in 2..u.len() {
        y[t] = pendulum_step(p, y[t - 1], y[t - 2], u.get(0, t - 2));
    }
    Trajectory::new(DMatrix::from_row_slice(1, y.len(), &y), vec!["y1".into()])
}

/// Pendulum model with the additional input `sin(y(t))`, which enters the
/// dynamics two steps later.
pub fn pendulum_model() -> OgbModel {
    OgbModel::new(
        1,
        1,
        2,
        2,
        vec![],
        vec![BasisFunction::Sin { channel: 0, lag: 0 }],
    )
    .expect("valid pendulum model")
}

/// Pendulum model with the additional input `sin(y(t-2))`.
pub fn pendulum_model_lookback() -> OgbModel {
    OgbModel::new(
        1,
        1,
        2,
        2,
        vec![],
        vec![BasisFunction::Sin { channel: 0, lag: 2 }],
    )
    .expect("valid pendulum model")
}

/// Quadruple-tank process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FourTankParams {
    /// Outlet areas in cm^2.
    pub a: [f64; 4],
    /// Tank areas in cm^2.
    pub area: [f64; 4],
    pub k1: f64,
    pub k2: f64,
    pub g: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub t_s: f64,
}

impl Default for FourTankParams {
    fn default() -> Self {
        Self {
            a: [2.3; 4],
            area: [730.0; 4],
            k1: 5.51,
            k2: 6.58,
            g: 981.0,
            gamma1: 0.333,
            gamma2: 0.307,
            t_s: 0.001,
        }
    }
}

impl FourTankParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self
            .a
            .iter()
            .chain(&self.area)
            .chain([&self.k1, &self.k2, &self.g, &self.t_s])
            .all(|x| x.is_finite() && *x > 0.0);
        let split = |x: f64| x > 0.0 && x < 1.0;
        if !positive || !split(self.gamma1) || !split(self.gamma2) {
            return Err(Error::InvalidArgument(
                "four-tank areas, gains and T_s must be positive and the splits in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Coefficients of `sqrt(y(t-1))` in the level update, per tank.
    fn outflow(&self) -> DMatrix<f64> {
        let s = (2.0 * self.g).sqrt();
        let mut c = DMatrix::zeros(4, 4);
        for i in 0..4 {
            c[(i, i)] = -self.t_s * self.a[i] / self.area[i] * s;
        }
        c[(0, 2)] = self.t_s * self.a[2] / self.area[0] * s;
        c[(1, 3)] = self.t_s * self.a[3] / self.area[1] * s;
        c
    }

    /// Coefficients of `u(t-1)` in the level update.
    fn inflow(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(4, 2);
        b[(0, 0)] = self.t_s * self.gamma1 * self.k1 / self.area[0];
        b[(1, 1)] = self.t_s * self.gamma2 * self.k2 / self.area[1];
        b[(2, 1)] = self.t_s * (1.0 - self.gamma2) * self.k2 / self.area[2];
        b[(3, 0)] = self.t_s * (1.0 - self.gamma1) * self.k1 / self.area[3];
        b
    }
}

/// Water levels of the same length as `u`, starting from `y(0) = y_init`.
pub fn simulate_fourtank(
    p: &FourTankParams,
    u: &Trajectory,
    y_init: [f64; 4],
) -> Result<Trajectory> {
    p.validate()?;
    ensure_dim("four-tank inputs", 2, u.channels())?;
    if u.is_empty() {
        return Err(Error::InsufficientData {
            context: "four-tank simulation",
            required: 1,
            available: 0,
        });
    }
    let check = |y: &[f64], step: usize| -> Result<()> {
        match y.iter().position(|v| *v < 0.0 || !v.is_finite()) {
            Some(tank) => Err(Error::NegativeLevel {
                tank: tank + 1,
                step,
                level: y[tank],
            }),
            None => Ok(()),
        }
    };
    check(&y_init, 0)?;
    let (b, c) = (p.inflow(), p.outflow());
    let mut y = DMatrix::zeros(4, u.len());
    y.column_mut(0).copy_from_slice(&y_init);
    for t in 1..u.len() {
        let prev = y.column(t - 1).into_owned();
        let root = prev.map(f64::sqrt);
        let uc = DVector::from_column_slice(u.sample(t - 1));
        let next = &prev + &c * root + &b * uc;
        check(next.as_slice(), t)?;
        y.column_mut(t).copy_from(&next);
    }
    Trajectory::with_prefix(y, "y")
}

/// Four-tank model with the additional inputs `sqrt(y_i(t))`.
pub fn fourtank_model() -> OgbModel {
    let tail = (0..4)
        .map(|i| BasisFunction::Sqrt { channel: i, lag: 0 })
        .collect();
    OgbModel::new(2, 4, 1, 4, vec![], tail).expect("valid four-tank model")
}

/// `||y_real - y_r||_2 / ||y_r||_2` over all channels and samples.
pub fn rrmse(y_real: &Trajectory, y_r: &Trajectory) -> Result<f64> {
    ensure_dim("rrmse channels", y_r.channels(), y_real.channels())?;
    ensure_dim("rrmse length", y_r.len(), y_real.len())?;
    let den = y_r.values().norm();
    if den == 0.0 {
        return Err(Error::InvalidArgument("rrmse of a zero reference".into()));
    }
    Ok((y_real.values() - y_r.values()).norm() / den)
}

mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }
}

/// `x(t+1) = A x(t) + B u(t)`, `y(t) = C x(t) + D u(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    #[serde(with = "rows")]
    pub a: DMatrix<f64>,
    #[serde(with = "rows")]
    pub b: DMatrix<f64>,
    #[serde(with = "rows")]
    pub c: DMatrix<f64>,
    #[serde(with = "rows")]
    pub d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let s = Self { a, b, c, d };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.order();
        ensure_dim("A columns", n, self.a.ncols())?;
        ensure_dim("B rows", n, self.b.nrows())?;
        ensure_dim("C columns", n, self.c.ncols())?;
        ensure_dim("D rows", self.c.nrows(), self.d.nrows())?;
        ensure_dim("D columns", self.b.ncols(), self.d.ncols())
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    /// Output from initial state `x0`.
    pub fn simulate(&self, u: &Trajectory, x0: &DVector<f64>) -> Result<Trajectory> {
        self.validate()?;
        ensure_dim("state-space inputs", self.n_u(), u.channels())?;
        ensure_dim("initial state", self.order(), x0.len())?;
        let mut x = x0.clone();
        let mut y = DMatrix::zeros(self.n_y(), u.len());
        for t in 0..u.len() {
            let ut = DVector::from_column_slice(u.sample(t));
            y.column_mut(t).copy_from(&(&self.c * &x + &self.d * &ut));
            x = &self.a * &x + &self.b * ut;
        }
        Trajectory::with_prefix(y, "y")
    }

    /// Least-squares initial state explaining `(u, y)`.
    pub fn initial_state(&self, u: &Trajectory, y: &Trajectory) -> Result<DVector<f64>> {
        ensure_dim("initial window length", u.len(), y.len())?;
        let n = self.order();
        let free = self.simulate(u, &DVector::zeros(n))?;
        let mut obs = DMatrix::zeros(self.n_y() * u.len(), n);
        let mut ak = DMatrix::identity(n, n);
        for t in 0..u.len() {
            obs.rows_mut(t * self.n_y(), self.n_y())
                .copy_from(&(&self.c * &ak));
            ak = &self.a * ak;
        }
        let rhs = y.stacked() - free.stacked();
        let pinv = crate::numlin::pinv(&obs, &Default::default())?;
        Ok(pinv * rhs)
    }
}

/// Generic simulator of an [`OgbModel`] with known parameters:
///
/// ```text
/// y(t) = sum_{i=1..l} theta_y[i-1] y(t-i) + sum_{i=0..l} theta_u[i] u_h(t-i)
///      + sum_{i=0..l} theta_nl[i] u_nl(t-i)
/// ```
#[derive(Debug, Clone)]
pub struct OgbPlant {
    pub model: OgbModel,
    /// `n_y x n_y`, lags `1..=l`.
    pub theta_y: Vec<DMatrix<f64>>,
    /// `n_y x n_u`, lags `0..=l`.
    pub theta_u: Vec<DMatrix<f64>>,
    /// `n_y x n_nl`, lags `0..=l`.
    pub theta_nl: Vec<DMatrix<f64>>,
}

impl OgbPlant {
    pub fn new(
        model: OgbModel,
        theta_y: Vec<DMatrix<f64>>,
        theta_u: Vec<DMatrix<f64>>,
        theta_nl: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        model.validate()?;
        let l = model.lag;
        ensure_dim("theta_y lags", l, theta_y.len())?;
        ensure_dim("theta_u lags", l + 1, theta_u.len())?;
        ensure_dim("theta_nl lags", l + 1, theta_nl.len())?;
        for m in &theta_y {
            ensure_dim("theta_y rows", model.n_y, m.nrows())?;
            ensure_dim("theta_y columns", model.n_y, m.ncols())?;
        }
        for m in &theta_u {
            ensure_dim("theta_u rows", model.n_y, m.nrows())?;
            ensure_dim("theta_u columns", model.n_u, m.ncols())?;
        }
        for m in &theta_nl {
            ensure_dim("theta_nl rows", model.n_y, m.nrows())?;
            ensure_dim("theta_nl columns", model.n_nl(), m.ncols())?;
        }
        for k in 0..model.n_nl() {
            if model.channel_reads_current_output(k) && theta_nl[0].column(k).amax() != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "additional input {k} reads y(t) and enters y(t) directly"
                )));
            }
        }
        Ok(Self {
            model,
            theta_y,
            theta_u,
            theta_nl,
        })
    }

    /// Initial samples the simulation takes as given.
    pub fn state_window(&self) -> usize {
        self.model.lag + self.model.burn_in()
    }

    fn unl_at(
        &self,
        uh: &DMatrix<f64>,
        y: &DMatrix<f64>,
        exo: Option<&DMatrix<f64>>,
        t: usize,
        hlb: usize,
    ) -> Result<DVector<f64>> {
        let (n_u, l) = (self.model.n_u, self.model.lag);
        let mut x = vec![0.0; n_u * (l + 1)];
        for s in 0..=l {
            let tau = t as isize - (l - s) as isize - hlb as isize;
            if tau >= 0 {
                for c in 0..n_u {
                    x[s * n_u + c] = uh[(c, tau as usize)];
                }
            }
        }
        self.model.eval_phi_nl_in(&EvalContext::new(y, exo, t), &x)
    }

    /// Output trajectory for input `u`, with the first `state_window()`
    /// outputs taken from `y_init`.
    pub fn simulate(
        &self,
        u: &Trajectory,
        y_init: &Trajectory,
        exo: Option<&Trajectory>,
    ) -> Result<Trajectory> {
        let m = &self.model;
        ensure_dim("plant inputs", m.n_u, u.channels())?;
        ensure_dim("plant outputs", m.n_y, y_init.channels())?;
        let w = self.state_window();
        if y_init.len() < w || u.len() < y_init.len() {
            return Err(Error::InsufficientData {
                context: "plant initial outputs",
                required: w,
                available: y_init.len().min(u.len()),
            });
        }
        if let Some(p) = exo {
            if p.len() < u.len() {
                return Err(Error::InsufficientData {
                    context: "plant exogenous signal",
                    required: u.len(),
                    available: p.len(),
                });
            }
        }
        let big_t = u.len();
        let burn = m.burn_in();
        let hlb = m.input_map.causal_lookback();
        let uh = m.input_map.forward(u.values())?;
        let exo = exo.map(|p| p.values());
        let mut y = DMatrix::zeros(m.n_y, big_t);
        let t0 = y_init.len();
        y.columns_mut(0, t0).copy_from(y_init.values());
        let mut unl = DMatrix::zeros(m.n_nl(), big_t);
        for t in burn..t0 {
            unl.column_mut(t)
                .copy_from(&self.unl_at(&uh, &y, exo, t, hlb)?);
        }
        let l = m.lag;
        for t in t0..big_t {
            let mut yt = DVector::zeros(m.n_y);
            for i in 1..=l {
                yt += &self.theta_y[i - 1] * y.column(t - i);
            }
            for i in 0..=l {
                yt += &self.theta_u[i] * uh.column(t - i - hlb);
            }
            for i in 1..=l {
                yt += &self.theta_nl[i] * unl.column(t - i);
            }
            if m.n_nl() > 0 && self.theta_nl[0].amax() != 0.0 {
                let prev = y.column(t - 1).into_owned();
                y.column_mut(t).copy_from(&prev);
                yt += &self.theta_nl[0] * self.unl_at(&uh, &y, exo, t, hlb)?;
            }
            y.column_mut(t).copy_from(&yt);
            unl.column_mut(t)
                .copy_from(&self.unl_at(&uh, &y, exo, t, hlb)?);
        }
        Trajectory::with_prefix(y, "y").and_then(|y| y.relabel(numbered_labels("y", m.n_y)))
    }
}

/// The pendulum as an instance of the generic simulator.
pub fn pendulum_plant(p: &PendulumParams) -> OgbPlant {
    let k = p.t_s / p.tau;
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    OgbPlant::new(
        pendulum_model(),
        vec![s(2.0 - k), s(k - 1.0)],
        vec![s(0.0), s(0.0), s(p.input_gain())],
        vec![s(0.0), s(0.0), s(-p.gravity_gain())],
    )
    .expect("valid pendulum plant")
}

/// The four-tank process as an instance of the generic simulator.
pub fn fourtank_plant(p: &FourTankParams) -> OgbPlant {
    OgbPlant::new(
        fourtank_model(),
        vec![DMatrix::identity(4, 4)],
        vec![DMatrix::zeros(4, 2), p.inflow()],
        vec![DMatrix::zeros(4, 4), p.outflow()],
    )
    .expect("valid four-tank plant")
}

/// A ground-truth system that can be configured from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Plant {
    Pendulum(PendulumParams),
    FourTank(FourTankParams),
    Lti(StateSpace),
}

impl Plant {
    pub fn validate(&self) -> Result<()> {
        match self {
            Plant::Pendulum(p) => p.validate(),
            Plant::FourTank(p) => p.validate(),
            Plant::Lti(s) => s.validate(),
        }
    }

    pub fn n_u(&self) -> usize {
        match self {
            Plant::Pendulum(_) => 1,
            Plant::FourTank(_) => 2,
            Plant::Lti(s) => s.n_u(),
        }
    }

    pub fn n_y(&self) -> usize {
        match self {
            Plant::Pendulum(_) => 1,
            Plant::FourTank(_) => 4,
            Plant::Lti(s) => s.n_y(),
        }
    }

    /// Model used for matching when none is configured.
    pub fn default_model(&self) -> OgbModel {
        match self {
            Plant::Pendulum(_) => pendulum_model(),
            Plant::FourTank(_) => fourtank_model(),
            Plant::Lti(s) => OgbModel::lti(s.n_u(), s.n_y(), s.order(), s.order()),
        }
    }

    /// Simulates from an initial condition: `y(0), y(1)` for the pendulum,
    /// the levels `y(0)` for the four-tank process and the state `x(0)` for
    /// LTI systems (empty means zero).
    pub fn generate(&self, u: &Trajectory, init: &[f64]) -> Result<Trajectory> {
        match self {
            Plant::Pendulum(p) => {
                ensure_dim("pendulum initial outputs", 2, init.len())?;
                simulate_pendulum(p, u, [init[0], init[1]])
            }
            Plant::FourTank(p) => {
                ensure_dim("four-tank initial levels", 4, init.len())?;
                simulate_fourtank(p, u, [init[0], init[1], init[2], init[3]])
            }
            Plant::Lti(s) => {
                let x0 = if init.is_empty() {
                    DVector::zeros(s.order())
                } else {
                    DVector::from_column_slice(init)
                };
                s.simulate(u, &x0)
            }
        }
    }

    /// Outputs produced by `u_future` after the past `(u_past, y_past)`.
    pub fn realize(
        &self,
        u_past: &Trajectory,
        y_past: &Trajectory,
        u_future: &Trajectory,
    ) -> Result<Trajectory> {
        ensure_dim("past window length", u_past.len(), y_past.len())?;
        ensure_dim("future input channels", self.n_u(), u_future.channels())?;
        let u_past = u_past.clone().relabel(u_future.labels().to_vec())?;
        let window = match self {
            Plant::Pendulum(_) => 2,
            Plant::FourTank(_) => 1,
            Plant::Lti(_) => u_past.len(),
        };
        if u_past.len() < window {
            return Err(Error::InsufficientData {
                context: "plant realization",
                required: window,
                available: u_past.len(),
            });
        }
        let u = u_past.tail(window)?.concat(u_future)?;
        let y_w = y_past.tail(window)?;
        let y = match self {
            Plant::Lti(s) => {
                let x0 = s.initial_state(&u_past, y_past)?;
                s.simulate(&u_past.concat(u_future)?, &x0)?
            }
            _ => {
                let init: Vec<f64> = y_w.values().iter().copied().collect();
                self.generate(&u, &init)?
            }
        };
        y.tail(u_future.len())
    }
}
