use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Known bijection `u_h = h(u)` applied to the input at every step.
///
/// Maps with a causal lookback read earlier inputs as known constants; their
/// inverse is evaluated forward in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputMap {
    #[default]
    Identity,
    /// `u^3` per channel; inverse is the real cube root.
    Cubic,
    /// `ln(u)` per channel; defined for `u > 0`.
    Log,
    /// `(u1 + u2^2, u2^3)` for two inputs, inverse
    /// `(uh1 - cbrt(uh2)^2, cbrt(uh2))`.
    Polynomial2,
    /// `gain * u + offset` per channel.
    Affine { gain: Vec<f64>, offset: Vec<f64> },
    /// `u(t) - rho * u(t-1)` per channel.
    Incremental { rho: f64 },
}

impl InputMap {
    pub fn causal_lookback(&self) -> usize {
        match self {
            InputMap::Incremental { .. } => 1,
            _ => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InputMap::Identity => "identity",
            InputMap::Cubic => "cubic",
            InputMap::Log => "log",
            InputMap::Polynomial2 => "polynomial2",
            InputMap::Affine { .. } => "affine",
            InputMap::Incremental { .. } => "incremental",
        }
    }

    pub fn validate(&self, n_u: usize) -> Result<()> {
        match self {
            InputMap::Polynomial2 => ensure_dim("polynomial2 input map inputs", 2, n_u),
            InputMap::Affine { gain, offset } => {
                ensure_dim("affine input map gains", n_u, gain.len())?;
                ensure_dim("affine input map offsets", n_u, offset.len())?;
                if gain.iter().any(|g| *g == 0.0 || !g.is_finite()) {
                    return Err(Error::InvalidArgument(
                        "affine input map gains must be finite and nonzero".into(),
                    ));
                }
                Ok(())
            }
            InputMap::Incremental { rho } if !rho.is_finite() => Err(Error::InvalidArgument(
                "incremental input map needs a finite rho".into(),
            )),
            _ => Ok(()),
        }
    }

    fn domain_error(&self, detail: String) -> Error {
        Error::Domain {
            map: self.name().into(),
            detail,
        }
    }

    /// `h` at one step. `prev` holds `u(t-1)` for maps with a lookback.
    pub fn forward_step(&self, u: &[f64], prev: Option<&[f64]>) -> Result<Vec<f64>> {
        Ok(match self {
            InputMap::Identity => u.to_vec(),
            InputMap::Cubic => u.iter().map(|x| x * x * x).collect(),
            InputMap::Log => {
                if let Some(x) = u.iter().find(|x| !(**x > 0.0)) {
                    return Err(self.domain_error(format!("ln needs u > 0, got {x}")));
                }
                u.iter().map(|x| x.ln()).collect()
            }
            InputMap::Polynomial2 => {
                ensure_dim("polynomial2 input", 2, u.len())?;
                vec![u[0] + u[1] * u[1], u[1] * u[1] * u[1]]
            }
            InputMap::Affine { gain, offset } => u
                .iter()
                .zip(gain.iter().zip(offset))
                .map(|(x, (g, c))| g * x + c)
                .collect(),
            InputMap::Incremental { rho } => {
                let prev = prev.ok_or_else(|| {
                    Error::InvalidArgument("incremental input map needs the previous input".into())
                })?;
                u.iter().zip(prev).map(|(x, p)| x - rho * p).collect()
            }
        })
    }

    /// `h^{-1}` at one step. `prev` holds the already recovered `u(t-1)`.
    pub fn inverse_step(&self, uh: &[f64], prev: Option<&[f64]>) -> Result<Vec<f64>> {
        Ok(match self {
            InputMap::Identity => uh.to_vec(),
            InputMap::Cubic => uh.iter().map(|x| x.cbrt()).collect(),
            InputMap::Log => uh.iter().map(|x| x.exp()).collect(),
            InputMap::Polynomial2 => {
                ensure_dim("polynomial2 input", 2, uh.len())?;
                let c = uh[1].cbrt();
                vec![uh[0] - c * c, c]
            }
            InputMap::Affine { gain, offset } => uh
                .iter()
                .zip(gain.iter().zip(offset))
                .map(|(x, (g, c))| (x - c) / g)
                .collect(),
            InputMap::Incremental { rho } => {
                let prev = prev.ok_or_else(|| {
                    Error::InvalidArgument("incremental input map needs the previous input".into())
                })?;
                uh.iter().zip(prev).map(|(x, p)| x + rho * p).collect()
            }
        })
    }

    /// Applies `h` to an `n_u x T` input. The result has `T - lookback`
    /// columns; column `k` is `u_h(k + lookback)`.
    pub fn forward(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let lb = self.causal_lookback();
        let (n, t) = u.shape();
        if t < lb {
            return Err(Error::InsufficientData {
                context: "input map",
                required: lb,
                available: t,
            });
        }
        let mut out = DMatrix::zeros(n, t - lb);
        for k in lb..t {
            let cur: Vec<f64> = u.column(k).iter().copied().collect();
            let prev: Option<Vec<f64>> =
                (lb > 0).then(|| u.column(k - 1).iter().copied().collect());
            let v = self.forward_step(&cur, prev.as_deref())?;
            out.column_mut(k - lb).copy_from_slice(&v);
        }
        Ok(out)
    }

    /// Recovers `u` from `u_h` sequentially. `prior` holds the `lookback`
    /// inputs preceding the first column of `uh`.
    pub fn inverse(&self, uh: &DMatrix<f64>, prior: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let lb = self.causal_lookback();
        if prior.ncols() < lb {
            return Err(Error::InsufficientData {
                context: "input map inverse",
                required: lb,
                available: prior.ncols(),
            });
        }
        let (n, t) = uh.shape();
        let mut out = DMatrix::zeros(n, t);
        let mut prev: Option<Vec<f64>> =
            (lb > 0).then(|| prior.column(prior.ncols() - 1).iter().copied().collect());
        for k in 0..t {
            let cur: Vec<f64> = uh.column(k).iter().copied().collect();
            let v = self.inverse_step(&cur, prev.as_deref())?;
            out.column_mut(k).copy_from_slice(&v);
            if lb > 0 {
                prev = Some(v);
            }
        }
        Ok(out)
    }
}
