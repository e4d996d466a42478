use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Read-only view of the signals a basis function may look at when evaluated
/// at step `t`: outputs `y(0..=t)` and, optionally, a known exogenous signal
/// on the same time axis.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub y: &'a DMatrix<f64>,
    pub exo: Option<&'a DMatrix<f64>>,
    pub t: usize,
}

impl<'a> EvalContext<'a> {
    pub fn new(y: &'a DMatrix<f64>, exo: Option<&'a DMatrix<f64>>, t: usize) -> Self {
        Self { y, exo, t }
    }

    /// `y_channel(t - lag)`.
    pub fn output(&self, channel: usize, lag: usize) -> Result<f64> {
        if channel >= self.y.nrows() {
            return Err(Error::InvalidArgument(format!(
                "basis function reads output channel {channel} of {}",
                self.y.nrows()
            )));
        }
        if lag > self.t || self.t >= self.y.ncols() {
            return Err(Error::InsufficientData {
                context: "output window",
                required: lag + 1,
                available: self.t.min(self.y.ncols()) + 1,
            });
        }
        Ok(self.y[(channel, self.t - lag)])
    }

    /// `p_channel(t - lag)`.
    pub fn exogenous(&self, channel: usize, lag: usize) -> Result<f64> {
        let step = self.t as isize - lag as isize;
        match self.exo {
            Some(p) if channel < p.nrows() && step >= 0 && (step as usize) < p.ncols() => {
                Ok(p[(channel, step as usize)])
            }
            _ => Err(Error::MissingExogenous { channel, step }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Output,
    Exogenous,
}

/// `source_channel(t - lag)^power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Factor {
    pub source: Source,
    pub channel: usize,
    pub lag: usize,
    #[serde(default = "one")]
    pub power: i32,
}

fn one() -> i32 {
    1
}

impl Factor {
    pub fn output(channel: usize, lag: usize, power: i32) -> Self {
        Self {
            source: Source::Output,
            channel,
            lag,
            power,
        }
    }

    pub fn exogenous(channel: usize, lag: usize, power: i32) -> Self {
        Self {
            source: Source::Exogenous,
            channel,
            lag,
            power,
        }
    }
}

pub type CustomFn = dyn Fn(&EvalContext<'_>) -> Result<f64> + Send + Sync;

/// A user-supplied scalar function of the output window.
#[derive(Clone)]
pub struct CustomBasis {
    pub name: String,
    /// Deepest lag the closure reads, in outputs or exogenous signals.
    pub max_lag: usize,
    pub reads_current_output: bool,
    pub f: Arc<CustomFn>,
}

impl fmt::Debug for CustomBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomBasis")
            .field("name", &self.name)
            .field("max_lag", &self.max_lag)
            .finish_non_exhaustive()
    }
}

impl PartialEq for CustomBasis {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.f, &other.f) && self.name == other.name
    }
}

/// A scalar basis function of past (and possibly current) outputs, time and
/// known exogenous signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisFunction {
    Zero,
    Constant {
        value: f64,
    },
    /// Product of powers; the empty product is 1.
    Monomial {
        factors: Vec<Factor>,
    },
    Sin {
        channel: usize,
        lag: usize,
    },
    Cos {
        channel: usize,
        lag: usize,
    },
    /// Square root of an output; negative arguments are a domain error.
    Sqrt {
        channel: usize,
        lag: usize,
    },
    #[serde(skip)]
    Custom(CustomBasis),
}

impl BasisFunction {
    pub fn output_power(channel: usize, lag: usize, power: i32) -> Self {
        BasisFunction::Monomial {
            factors: vec![Factor::output(channel, lag, power)],
        }
    }

    pub fn exogenous(channel: usize, lag: usize) -> Self {
        BasisFunction::Monomial {
            factors: vec![Factor::exogenous(channel, lag, 1)],
        }
    }

    pub fn custom(
        name: impl Into<String>,
        max_lag: usize,
        f: impl Fn(&EvalContext<'_>) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        BasisFunction::Custom(CustomBasis {
            name: name.into(),
            max_lag,
            reads_current_output: true,
            f: Arc::new(f),
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BasisFunction::Zero)
    }

    pub fn eval(&self, ctx: &EvalContext<'_>) -> Result<f64> {
        let v = match self {
            BasisFunction::Zero => 0.0,
            BasisFunction::Constant { value } => *value,
            BasisFunction::Monomial { factors } => {
                let mut acc = 1.0;
                for f in factors {
                    let x = match f.source {
                        Source::Output => ctx.output(f.channel, f.lag)?,
                        Source::Exogenous => ctx.exogenous(f.channel, f.lag)?,
                    };
                    acc *= x.powi(f.power);
                }
                acc
            }
            BasisFunction::Sin { channel, lag } => ctx.output(*channel, *lag)?.sin(),
            BasisFunction::Cos { channel, lag } => ctx.output(*channel, *lag)?.cos(),
            BasisFunction::Sqrt { channel, lag } => {
                let x = ctx.output(*channel, *lag)?;
                if x < 0.0 {
                    return Err(Error::Domain {
                        map: "sqrt".into(),
                        detail: format!("output {channel} is {x} at step {}", ctx.t - lag),
                    });
                }
                x.sqrt()
            }
            BasisFunction::Custom(c) => (c.f)(ctx)?,
        };
        if !v.is_finite() {
            return Err(Error::Domain {
                map: self.describe(),
                detail: format!("non-finite value at step {}", ctx.t),
            });
        }
        Ok(v)
    }

    /// Deepest lag read from outputs or exogenous signals.
    pub fn max_lag(&self) -> usize {
        match self {
            BasisFunction::Zero | BasisFunction::Constant { .. } => 0,
            BasisFunction::Monomial { factors } => factors.iter().map(|f| f.lag).max().unwrap_or(0),
            BasisFunction::Sin { lag, .. }
            | BasisFunction::Cos { lag, .. }
            | BasisFunction::Sqrt { lag, .. } => *lag,
            BasisFunction::Custom(c) => c.max_lag,
        }
    }

    /// Whether the value at `t` depends on `y(t)`.
    pub fn reads_current_output(&self) -> bool {
        match self {
            BasisFunction::Zero | BasisFunction::Constant { .. } => false,
            BasisFunction::Monomial { factors } => factors
                .iter()
                .any(|f| f.source == Source::Output && f.lag == 0 && f.power != 0),
            BasisFunction::Sin { lag, .. }
            | BasisFunction::Cos { lag, .. }
            | BasisFunction::Sqrt { lag, .. } => *lag == 0,
            BasisFunction::Custom(c) => c.reads_current_output,
        }
    }

    /// Smallest lag read, for functions with a known time-shift structure.
    pub(crate) fn min_lag(&self) -> Option<usize> {
        match self {
            BasisFunction::Monomial { factors } => factors.iter().map(|f| f.lag).min(),
            BasisFunction::Sin { lag, .. }
            | BasisFunction::Cos { lag, .. }
            | BasisFunction::Sqrt { lag, .. } => Some(*lag),
            _ => None,
        }
    }

    /// The same function read `by` steps further in the past (`by < 0` reads
    /// more recent samples). `None` when a lag would become negative or the
    /// function has no known shift structure.
    pub fn delayed(&self, by: isize) -> Option<BasisFunction> {
        let sh = |lag: usize| -> Option<usize> {
            let l = lag as isize + by;
            (l >= 0).then_some(l as usize)
        };
        match self {
            BasisFunction::Zero | BasisFunction::Constant { .. } => Some(self.clone()),
            BasisFunction::Monomial { factors } => {
                let mut out = Vec::with_capacity(factors.len());
                for f in factors {
                    out.push(Factor {
                        lag: sh(f.lag)?,
                        ..*f
                    });
                }
                Some(BasisFunction::Monomial { factors: out })
            }
            BasisFunction::Sin { channel, lag } => Some(BasisFunction::Sin {
                channel: *channel,
                lag: sh(*lag)?,
            }),
            BasisFunction::Cos { channel, lag } => Some(BasisFunction::Cos {
                channel: *channel,
                lag: sh(*lag)?,
            }),
            BasisFunction::Sqrt { channel, lag } => Some(BasisFunction::Sqrt {
                channel: *channel,
                lag: sh(*lag)?,
            }),
            BasisFunction::Custom(_) => None,
        }
    }

    /// Monomials with sorted factors and zero powers dropped, so that equal
    /// functions compare equal.
    pub(crate) fn normalized(&self) -> BasisFunction {
        match self {
            BasisFunction::Monomial { factors } => {
                let mut f: Vec<Factor> = factors.iter().copied().filter(|f| f.power != 0).collect();
                f.sort();
                if f.is_empty() {
                    BasisFunction::Constant { value: 1.0 }
                } else {
                    BasisFunction::Monomial { factors: f }
                }
            }
            other => other.clone(),
        }
    }

    pub fn describe(&self) -> String {
        let lagged = |name: &str, ch: usize, lag: usize| {
            if lag == 0 {
                format!("{name}{}(t)", ch + 1)
            } else {
                format!("{name}{}(t-{lag})", ch + 1)
            }
        };
        match self {
            BasisFunction::Zero => "0".into(),
            BasisFunction::Constant { value } => format!("{value}"),
            BasisFunction::Monomial { factors } => {
                if factors.is_empty() {
                    return "1".into();
                }
                factors
                    .iter()
                    .map(|f| {
                        let base = match f.source {
                            Source::Output => lagged("y", f.channel, f.lag),
                            Source::Exogenous => lagged("p", f.channel, f.lag),
                        };
                        if f.power == 1 {
                            base
                        } else {
                            format!("{base}^{}", f.power)
                        }
                    })
                    .collect::<Vec<_>>()
                    .join("*")
            }
            BasisFunction::Sin { channel, lag } => format!("sin({})", lagged("y", *channel, *lag)),
            BasisFunction::Cos { channel, lag } => format!("cos({})", lagged("y", *channel, *lag)),
            BasisFunction::Sqrt { channel, lag } => {
                format!("sqrt({})", lagged("y", *channel, *lag))
            }
            BasisFunction::Custom(c) => c.name.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx_data() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 4.0, -1.0, 0.5, 9.0])
    }

    #[test]
    fn evaluates_lagged_outputs() {
        let y = ctx_data();
        let c = EvalContext::new(&y, None, 2);
        assert_eq!(BasisFunction::output_power(0, 1, 2).eval(&c).unwrap(), 4.0);
        assert_eq!(
            BasisFunction::Sqrt { channel: 1, lag: 0 }.eval(&c).unwrap(),
            3.0
        );
        assert_eq!(
            BasisFunction::Sin { channel: 0, lag: 2 }.eval(&c).unwrap(),
            1f64.sin()
        );
        assert_eq!(
            BasisFunction::Monomial { factors: vec![] }
                .eval(&c)
                .unwrap(),
            1.0
        );
        assert!(BasisFunction::output_power(0, 3, 1).eval(&c).is_err());
    }

    #[test]
    fn sqrt_domain() {
        let y = ctx_data();
        let c = EvalContext::new(&y, None, 0);
        assert!(matches!(
            BasisFunction::Sqrt { channel: 1, lag: 0 }.eval(&c),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn exogenous_lookup_is_strict() {
        let y = ctx_data();
        let p = DMatrix::from_row_slice(1, 2, &[3.0, 5.0]);
        let c = EvalContext::new(&y, Some(&p), 1);
        assert_eq!(BasisFunction::exogenous(0, 1).eval(&c).unwrap(), 3.0);
        let late = EvalContext::new(&y, Some(&p), 2);
        assert!(matches!(
            BasisFunction::exogenous(0, 0).eval(&late),
            Err(Error::MissingExogenous {
                channel: 0,
                step: 2
            })
        ));
        let none = EvalContext::new(&y, None, 1);
        assert!(BasisFunction::exogenous(0, 0).eval(&none).is_err());
    }

    #[test]
    fn delay_and_normalize() {
        let f = BasisFunction::Monomial {
            factors: vec![Factor::exogenous(0, 2, 1), Factor::output(1, 1, 2)],
        };
        let g = f.delayed(-1).unwrap();
        assert_eq!(g.max_lag(), 1);
        assert_eq!(g.min_lag(), Some(0));
        assert!(g.reads_current_output());
        assert!(f.delayed(-2).is_none());
        let h = BasisFunction::Monomial {
            factors: vec![Factor::output(1, 1, 2), Factor::exogenous(0, 2, 1)],
        };
        assert_eq!(f.normalized(), h.normalized());
    }

    #[test]
    fn serde_round_trip() {
        let fs = vec![
            BasisFunction::Zero,
            BasisFunction::Constant { value: 1.5 },
            BasisFunction::Sqrt { channel: 2, lag: 0 },
            BasisFunction::Monomial {
                factors: vec![Factor::exogenous(0, 1, 1), Factor::output(0, 1, 3)],
            },
        ];
        let s = serde_json::to_string(&fs).unwrap();
        let back: Vec<BasisFunction> = serde_json::from_str(&s).unwrap();
        assert_eq!(fs, back);
        let parsed: BasisFunction = serde_json::from_str(
            r#"{"kind":"monomial","factors":[{"source":"output","channel":0,"lag":2}]}"#,
        )
        .unwrap();
        assert_eq!(parsed, BasisFunction::output_power(0, 2, 1));
    }

    #[test]
    fn custom_functions() {
        let f = BasisFunction::custom("tanh y1(t-1)", 1, |c| Ok(c.output(0, 1)?.tanh()));
        let y = ctx_data();
        let c = EvalContext::new(&y, None, 1);
        assert_eq!(f.eval(&c).unwrap(), 1f64.tanh());
        assert!(f.delayed(1).is_none());
        assert_eq!(f.clone(), f);
        assert_eq!(f.describe(), "tanh y1(t-1)");
    }
}
