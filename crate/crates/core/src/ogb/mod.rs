//! The output-generalized bilinear model class.
//!
//! An [`OgbModel`] describes
//!
//! ```text
//! y(t) = theta_lin^T [x_y(t); x_h(u)(t)] + theta_nl^T phi_nl(x_y(t), x_h(u)(t), t)
//! phi_nl = phi_b0 + [phi_b (x) x_h(u); 0_k]
//! ```
//!
//! with `x_h(u)(t) = [u_h(t-l); ...; u_h(t)]` and `u_h = h(u)`. Only the
//! basis functions are needed for data-driven matching; the parameters
//! `theta` live in ground-truth simulators.
//!
//! The Kronecker product orders `phi_b` slowest and `x_h(u)` fastest, so raw
//! channel `i < n_b n_u (l+1)` multiplies `phi_b[i / (n_u (l+1))]` with
//! transformed input `i % n_u` at position `(i / n_u) % (l+1)` of the window.
//!
//! Basis functions may read the current output `y(t)` as well as past ones.
//! The resulting additional input is still a known function of the data, and
//! such channels are what reduce time-shifted families to a single input.

mod basis;
mod input_map;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use basis::{BasisFunction, CustomBasis, CustomFn, EvalContext, Factor, Source};
pub use input_map::InputMap;

use crate::error::{ensure_dim, Error, Result};
use crate::hankel::SystemDims;
use crate::signal::{numbered_labels, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgbModel {
    pub n_u: usize,
    pub n_y: usize,
    /// Depth `l` of the transformed-input window `x_h(u)`.
    pub lag: usize,
    /// Order of the extended LTI system.
    pub order: usize,
    #[serde(default)]
    pub phi_b: Vec<BasisFunction>,
    /// One entry per raw additional input, `n_b n_u (l+1) + k` in total.
    #[serde(default)]
    pub phi_b0: Vec<BasisFunction>,
    #[serde(default)]
    pub input_map: InputMap,
    /// Raw channels kept as additional inputs, in this order. `None` keeps all.
    #[serde(default)]
    pub selection: Option<Vec<usize>>,
}

/// Shape of one additional input used to detect time-shifted duplicates.
#[derive(Debug, Clone, PartialEq)]
struct ChannelShape {
    base: Option<BasisFunction>,
    kron: Option<(BasisFunction, usize, usize)>,
}

/// A redundant additional input, by position among the model's channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Redundancy {
    /// The channel is identically zero.
    Zero { channel: usize },
    /// `u_nl[channel](t) = u_nl[of](t - shift)`.
    Shifted {
        channel: usize,
        of: usize,
        shift: usize,
    },
}

impl Redundancy {
    pub fn channel(&self) -> usize {
        match self {
            Redundancy::Zero { channel } | Redundancy::Shifted { channel, .. } => *channel,
        }
    }
}

impl OgbModel {
    /// LTI model: no basis functions and the identity input map.
    pub fn lti(n_u: usize, n_y: usize, lag: usize, order: usize) -> Self {
        Self {
            n_u,
            n_y,
            lag,
            order,
            phi_b: Vec::new(),
            phi_b0: Vec::new(),
            input_map: InputMap::Identity,
            selection: None,
        }
    }

    /// Model in padded form: `phi_b0 = [0; tail]` where the zero block covers
    /// the Kronecker channels and `tail` holds the `k` input-free terms.
    pub fn new(
        n_u: usize,
        n_y: usize,
        lag: usize,
        order: usize,
        phi_b: Vec<BasisFunction>,
        tail: Vec<BasisFunction>,
    ) -> Result<Self> {
        let kron = phi_b.len() * n_u * (lag + 1);
        let mut phi_b0 = vec![BasisFunction::Zero; kron];
        phi_b0.extend(tail);
        let m = Self {
            n_u,
            n_y,
            lag,
            order,
            phi_b,
            phi_b0,
            input_map: InputMap::Identity,
            selection: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_input_map(mut self, map: InputMap) -> Result<Self> {
        self.input_map = map;
        self.validate()?;
        Ok(self)
    }

    pub fn with_selection(mut self, selection: Vec<usize>) -> Result<Self> {
        self.selection = Some(selection);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_u == 0 || self.n_y == 0 {
            return Err(Error::InvalidArgument(
                "a model needs at least one input and one output".into(),
            ));
        }
        self.input_map.validate(self.n_u)?;
        let kron = self.kron_len();
        if self.phi_b0.len() < kron {
            return Err(Error::Dimension {
                context: "phi_b0 length (at least n_b n_u (l+1))",
                expected: kron,
                actual: self.phi_b0.len(),
            });
        }
        if let Some(sel) = &self.selection {
            let mut seen = vec![false; self.phi_b0.len()];
            for &i in sel {
                if i >= seen.len() || seen[i] {
                    return Err(Error::InvalidArgument(format!(
                        "invalid or repeated channel {i} in selection"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }

    pub fn n_b(&self) -> usize {
        self.phi_b.len()
    }

    /// `n_b n_u (l+1)`.
    pub fn kron_len(&self) -> usize {
        self.phi_b.len() * self.n_u * (self.lag + 1)
    }

    pub fn raw_channels(&self) -> usize {
        self.phi_b0.len()
    }

    /// Zero-padding rows `k`.
    pub fn zero_pad(&self) -> usize {
        self.phi_b0.len().saturating_sub(self.kron_len())
    }

    /// Raw indices of the additional inputs, in channel order.
    pub fn channels(&self) -> Vec<usize> {
        match &self.selection {
            Some(s) => s.clone(),
            None => (0..self.phi_b0.len()).collect(),
        }
    }

    pub fn n_nl(&self) -> usize {
        match &self.selection {
            Some(s) => s.len(),
            None => self.phi_b0.len(),
        }
    }

    /// `(phi_b index, input channel, input lag)` of a raw Kronecker channel.
    fn kron_part(&self, raw: usize) -> Option<(usize, usize, usize)> {
        if raw >= self.kron_len() {
            return None;
        }
        let w = self.n_u * (self.lag + 1);
        let (b, j) = (raw / w, raw % w);
        if self.phi_b[b].is_zero() {
            return None;
        }
        Some((b, j % self.n_u, self.lag - j / self.n_u))
    }

    fn channel_lookback(&self, raw: usize) -> usize {
        let base = self.phi_b0[raw].max_lag();
        match self.kron_part(raw) {
            Some((b, _, lag_in)) => base.max(self.phi_b[b].max_lag()).max(lag_in),
            None => base,
        }
    }

    /// Whether the additional input at `t` depends on `y(t)`.
    pub fn channel_reads_current_output(&self, position: usize) -> bool {
        let raw = self.channels()[position];
        self.phi_b0[raw].reads_current_output()
            || self
                .kron_part(raw)
                .is_some_and(|(b, _, _)| self.phi_b[b].reads_current_output())
    }

    /// Past samples the additional inputs read, in `u_h`, `y` and exogenous
    /// signals.
    pub fn unl_lookback(&self) -> usize {
        self.channels()
            .into_iter()
            .map(|i| self.channel_lookback(i))
            .max()
            .unwrap_or(0)
    }

    /// Samples lost at the start of a measured trajectory: the input map's
    /// lookback plus [`OgbModel::unl_lookback`].
    pub fn burn_in(&self) -> usize {
        self.input_map.causal_lookback() + self.unl_lookback()
    }

    pub fn dims(&self) -> SystemDims {
        SystemDims {
            n_u: self.n_u,
            n_y: self.n_y,
            n_nl: self.n_nl(),
            lag: self.lag,
            order: self.order,
            unl_lookback: self.burn_in(),
        }
    }

    /// Human-readable form of additional input `position`.
    pub fn describe_channel(&self, position: usize) -> String {
        let raw = self.channels()[position];
        let mut parts = Vec::new();
        if !self.phi_b0[raw].is_zero() {
            parts.push(self.phi_b0[raw].describe());
        }
        if let Some((b, c, lag)) = self.kron_part(raw) {
            let u = if lag == 0 {
                format!("uh{}(t)", c + 1)
            } else {
                format!("uh{}(t-{lag})", c + 1)
            };
            parts.push(format!("{}*{u}", self.phi_b[b].describe()));
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join(" + ")
        }
    }

    /// `phi_nl` for the output regressor `x_y = [y(t-l); ...; y(t-1)]`.
    ///
    /// Basis functions reading `y(t)` or exogenous signals cannot be evaluated
    /// from `x_y` alone and produce an error.
    pub fn eval_phi_nl(&self, x_y: &[f64], x_hu: &[f64]) -> Result<DVector<f64>> {
        self.validate()?;
        ensure_dim("x_y length", self.n_y * self.lag, x_y.len())?;
        let mut y = DMatrix::from_element(self.n_y, self.lag + 1, f64::NAN);
        y.columns_mut(0, self.lag).copy_from_slice(x_y);
        let ctx = EvalContext::new(&y, None, self.lag);
        self.step(&ctx)?.phi_nl(x_hu)
    }

    /// `phi_nl` at step `ctx.t` of a signal.
    pub fn eval_phi_nl_in(&self, ctx: &EvalContext<'_>, x_hu: &[f64]) -> Result<DVector<f64>> {
        self.validate()?;
        self.step(ctx)?.phi_nl(x_hu)
    }

    fn step(&self, ctx: &EvalContext<'_>) -> Result<StepEval> {
        let channels = self.channels();
        let mut base = Vec::with_capacity(channels.len());
        let mut kron = Vec::with_capacity(channels.len());
        let mut phi_b: Vec<Option<f64>> = vec![None; self.phi_b.len()];
        for &raw in &channels {
            base.push(self.phi_b0[raw].eval(ctx)?);
            kron.push(match self.kron_part(raw) {
                Some((b, c, lag_in)) => {
                    let v = match phi_b[b] {
                        Some(v) => v,
                        None => {
                            let v = self.phi_b[b].eval(ctx)?;
                            phi_b[b] = Some(v);
                            v
                        }
                    };
                    Some((v, (self.lag - lag_in) * self.n_u + c))
                }
                None => None,
            });
        }
        Ok(StepEval {
            width: self.n_u * (self.lag + 1),
            base,
            kron,
        })
    }

    /// Additional inputs of transformed data: column `t - from` holds
    /// `u_nl(t)` for `t` in `from..W`.
    pub fn unl_from_transformed(
        &self,
        uh: &DMatrix<f64>,
        y: &DMatrix<f64>,
        exo: Option<&DMatrix<f64>>,
        from: usize,
    ) -> Result<DMatrix<f64>> {
        self.validate()?;
        ensure_dim("transformed input channels", self.n_u, uh.nrows())?;
        ensure_dim("output channels", self.n_y, y.nrows())?;
        ensure_dim("transformed input length", y.ncols(), uh.ncols())?;
        let w = y.ncols();
        if from < self.unl_lookback() || from > w {
            return Err(Error::InsufficientData {
                context: "additional inputs",
                required: self.unl_lookback(),
                available: from,
            });
        }
        let width = self.n_u * (self.lag + 1);
        let mut out = DMatrix::zeros(self.n_nl(), w - from);
        let mut x = vec![0.0; width];
        for t in from..w {
            for s in 0..=self.lag {
                let tau = t as isize - (self.lag - s) as isize;
                for c in 0..self.n_u {
                    x[s * self.n_u + c] = if tau >= 0 { uh[(c, tau as usize)] } else { 0.0 };
                }
            }
            let ctx = EvalContext::new(y, exo, t);
            let v = self.step(&ctx)?.phi_nl(&x)?;
            out.column_mut(t - from).copy_from(&v);
        }
        Ok(out)
    }

    fn check_signals(
        &self,
        u: &Trajectory,
        y: &Trajectory,
        exo: Option<&Trajectory>,
    ) -> Result<()> {
        ensure_dim("input channels", self.n_u, u.channels())?;
        ensure_dim("output channels", self.n_y, y.channels())?;
        ensure_dim("input/output length", u.len(), y.len())?;
        if let Some(p) = exo {
            if p.len() < u.len() {
                return Err(Error::InsufficientData {
                    context: "exogenous signal",
                    required: u.len(),
                    available: p.len(),
                });
            }
        }
        let burn = self.burn_in();
        if u.len() <= burn {
            return Err(Error::InsufficientData {
                context: "additional inputs",
                required: burn + 1,
                available: u.len(),
            });
        }
        Ok(())
    }

    /// `u_nl` over the usable window `burn_in()..T`.
    pub fn build_unl(
        &self,
        u: &Trajectory,
        y: &Trajectory,
        exo: Option<&Trajectory>,
    ) -> Result<Trajectory> {
        self.validate()?;
        self.check_signals(u, y, exo)?;
        let hlb = self.input_map.causal_lookback();
        let t = u.len();
        let uh = self.input_map.forward(u.values())?;
        let yw = y.values().columns(hlb, t - hlb).into_owned();
        let pw = exo.map(|p| p.values().columns(hlb, p.len() - hlb).into_owned());
        let unl = self.unl_from_transformed(&uh, &yw, pw.as_ref(), self.unl_lookback())?;
        Trajectory::with_prefix(unl, "unl")
    }

    /// Channel-grouped extended trajectory `[u_h; y; u_nl]` over the usable
    /// window.
    pub fn build_extended(
        &self,
        u: &Trajectory,
        y: &Trajectory,
        exo: Option<&Trajectory>,
    ) -> Result<Trajectory> {
        let unl = self.build_unl(u, y, exo)?;
        let burn = self.burn_in();
        let hlb = self.input_map.causal_lookback();
        let len = u.len() - burn;
        let uh = self.input_map.forward(u.values())?;
        let uh = uh.columns(burn - hlb, len).into_owned();
        let uh = Trajectory::with_prefix(uh, "uh")?;
        let yw = y
            .window(burn, len)?
            .relabel(numbered_labels("y", self.n_y))?;
        Trajectory::stack(&[&uh, &yw, &unl])
    }

    /// Pulse-probing matrix of the additional inputs over the last `horizon`
    /// steps of an output window.
    ///
    /// Returns `(phi_b0_stack, Phi_b)` such that the stacked `u_nl` over those
    /// steps equals `phi_b0_stack + Phi_b vec(u_h)`, where `u_h` covers every
    /// step of the window. Column `k` of `Phi_b` is obtained by evaluating
    /// `phi_nl` with the transformed inputs replaced by the `k`-th unit pulse
    /// and subtracting the zero-input value.
    pub fn probe_phi_matrix(
        &self,
        y_window: &DMatrix<f64>,
        exo: Option<&DMatrix<f64>>,
        horizon: usize,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.validate()?;
        ensure_dim("output window channels", self.n_y, y_window.nrows())?;
        let w = y_window.ncols();
        if horizon == 0 || horizon > w || w - horizon < self.unl_lookback() {
            return Err(Error::InsufficientData {
                context: "pulse-probing output window",
                required: horizon.max(1) + self.unl_lookback(),
                available: w,
            });
        }
        let n_nl = self.n_nl();
        let width = self.n_u * (self.lag + 1);
        let mut phi0 = DVector::zeros(n_nl * horizon);
        let mut phi = DMatrix::zeros(n_nl * horizon, self.n_u * w);
        let zero = vec![0.0; width];
        let mut pulse = vec![0.0; width];
        for (r, t) in (w - horizon..w).enumerate() {
            let ctx = EvalContext::new(y_window, exo, t);
            let step = self.step(&ctx)?;
            let base = step.phi_nl(&zero)?;
            phi0.rows_mut(r * n_nl, n_nl).copy_from(&base);
            for j in 0..width {
                let (s, c) = (j / self.n_u, j % self.n_u);
                let tau = t as isize - (self.lag - s) as isize;
                if tau < 0 {
                    continue;
                }
                pulse[j] = 1.0;
                let v = step.phi_nl(&pulse)? - &base;
                pulse[j] = 0.0;
                phi.view_mut((r * n_nl, tau as usize * self.n_u + c), (n_nl, 1))
                    .copy_from(&v);
            }
        }
        Ok((phi0, phi))
    }

    /// Shape of a raw channel with all lags reduced so the smallest is zero,
    /// together with that reduction. `None` for functions without a known
    /// shift structure.
    fn channel_shape(&self, raw: usize) -> Option<(ChannelShape, usize)> {
        let base = (!self.phi_b0[raw].is_zero()).then(|| self.phi_b0[raw].normalized());
        let kron = self
            .kron_part(raw)
            .map(|(b, c, lag_in)| (self.phi_b[b].normalized(), c, lag_in));
        if matches!(base, Some(BasisFunction::Custom(_)))
            || matches!(kron, Some((BasisFunction::Custom(_), _, _)))
        {
            return None;
        }
        let mut lags = Vec::new();
        if let Some(f) = &base {
            lags.extend(f.min_lag());
        }
        if let Some((f, _, lag_in)) = &kron {
            lags.extend(f.min_lag());
            lags.push(*lag_in);
        }
        let m = lags.into_iter().min().unwrap_or(0);
        let by = -(m as isize);
        let shape = ChannelShape {
            base: match base {
                Some(f) => Some(f.delayed(by)?),
                None => None,
            },
            kron: match kron {
                Some((f, c, lag_in)) => Some((f.delayed(by)?, c, lag_in - m)),
                None => None,
            },
        };
        Some((shape, m))
    }

    /// Additional inputs that are identically zero or time-shifted copies of
    /// another additional input, found from the basis-function structure.
    pub fn detect_redundancy(&self) -> Vec<Redundancy> {
        let mut out = Vec::new();
        let mut groups: Vec<(ChannelShape, Vec<(usize, usize)>)> = Vec::new();
        for (pos, raw) in self.channels().into_iter().enumerate() {
            let Some((shape, shift)) = self.channel_shape(raw) else {
                continue;
            };
            if shape.base.is_none() && shape.kron.is_none() {
                out.push(Redundancy::Zero { channel: pos });
                continue;
            }
            match groups.iter_mut().find(|(s, _)| *s == shape) {
                Some((_, members)) => members.push((pos, shift)),
                None => groups.push((shape, vec![(pos, shift)])),
            }
        }
        for (_, members) in groups {
            let &(rep, rep_shift) = members
                .iter()
                .min_by_key(|(pos, shift)| (*shift, *pos))
                .expect("groups are nonempty");
            for &(pos, shift) in &members {
                if pos != rep {
                    out.push(Redundancy::Shifted {
                        channel: pos,
                        of: rep,
                        shift: shift - rep_shift,
                    });
                }
            }
        }
        out.sort_by_key(Redundancy::channel);
        out
    }

    /// Removes redundant additional inputs, keeping one per time-shift family.
    ///
    /// A kept channel without an input-dependent part is rewritten at its
    /// smallest delay, so a family `{f(t-1), f(t-2), ...}` becomes `f(t)`.
    pub fn prune_redundant(&self) -> Result<(OgbModel, Vec<Redundancy>)> {
        self.validate()?;
        let red = self.detect_redundancy();
        let dropped: Vec<usize> = red.iter().map(Redundancy::channel).collect();
        let channels = self.channels();
        let mut model = self.clone();
        let mut keep = Vec::new();
        for (pos, &raw) in channels.iter().enumerate() {
            if dropped.contains(&pos) {
                continue;
            }
            keep.push(raw);
            if self.kron_part(raw).is_none() {
                if let Some((_, m)) = self.channel_shape(raw) {
                    if m > 0 {
                        model.phi_b0[raw] = self.phi_b0[raw]
                            .delayed(-(m as isize))
                            .expect("lags are at least the minimum");
                    }
                }
            }
        }
        model.selection = Some(keep);
        Ok((model, red))
    }

    /// Model restricted to the additional inputs at `positions`.
    pub fn select_channels(&self, positions: &[usize]) -> Result<OgbModel> {
        let channels = self.channels();
        let mut sel = Vec::with_capacity(positions.len());
        for &p in positions {
            sel.push(*channels.get(p).ok_or_else(|| {
                Error::InvalidArgument(format!("channel {p} out of range for {}", channels.len()))
            })?);
        }
        self.clone().with_selection(sel)
    }
}

struct StepEval {
    width: usize,
    base: Vec<f64>,
    kron: Vec<Option<(f64, usize)>>,
}

impl StepEval {
    fn phi_nl(&self, x_hu: &[f64]) -> Result<DVector<f64>> {
        ensure_dim("x_h(u) length", self.width, x_hu.len())?;
        Ok(DVector::from_iterator(
            self.base.len(),
            self.base.iter().zip(&self.kron).map(|(b, k)| match k {
                Some((v, j)) => b + v * x_hu[*j],
                None => *b,
            }),
        ))
    }
}

/// Split of a pulse-probing matrix into the columns of the `past_steps`
/// known inputs and the `future_steps` unknown ones.
pub fn split_phi_matrix(
    phi: &DMatrix<f64>,
    n_u: usize,
    past_steps: usize,
    future_steps: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    ensure_dim(
        "probe matrix columns",
        n_u * (past_steps + future_steps),
        phi.ncols(),
    )?;
    Ok((
        phi.columns(0, n_u * past_steps).into_owned(),
        phi.columns(n_u * past_steps, n_u * future_steps)
            .into_owned(),
    ))
}

/// Time-shift redundancy found in measured additional inputs: channel `i`
/// equals channel `j` delayed by `k <= max_shift` on the overlap, up to
/// `rel_tol` relative to the channel magnitude.
pub fn detect_redundancy_in_data(
    unl: &Trajectory,
    max_shift: usize,
    rel_tol: f64,
) -> Vec<Redundancy> {
    let v = unl.values();
    let (n, t) = v.shape();
    let scale: Vec<f64> = (0..n).map(|i| v.row(i).amax()).collect();
    let mut out = Vec::new();
    'chan: for i in 0..n {
        if scale[i] == 0.0 {
            out.push(Redundancy::Zero { channel: i });
            continue;
        }
        for j in 0..n {
            if scale[j] == 0.0 {
                continue;
            }
            for k in 0..=max_shift.min(t.saturating_sub(1)) {
                if i == j && k == 0 || (k == 0 && j > i) {
                    continue;
                }
                let tol = rel_tol * scale[i].max(scale[j]);
                let same = (k..t).all(|s| (v[(i, s)] - v[(j, s - k)]).abs() <= tol);
                if same {
                    out.push(Redundancy::Shifted {
                        channel: i,
                        of: j,
                        shift: k,
                    });
                    continue 'chan;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
