//! Structure estimation from the left null space of a shallow Hankel matrix
//! of extended data.
//!
//! Rows of the left null space of `H_{l+1}(w_ext)` are difference equations
//! the data satisfy. After equilibrating channels by their RMS value and
//! reducing the null space so that row `i` has unit weight on `y_i(t)` and
//! none on the other current outputs, a term is active for output `i` when
//! its scaled weight exceeds a threshold relative to the row's largest one.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::hankel::{hankel_matrix, SystemDims};
use crate::numlin::{left_null_space, pinv, RankPolicy};
use crate::ogb::OgbModel;
use crate::signal::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermGroup {
    Input,
    Output,
    Nonlinear,
}

/// Channel `channel` of a group, `delay` steps before the current time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StructureTerm {
    pub group: TermGroup,
    pub channel: usize,
    pub delay: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    /// One row per output in the original data scaling, normalized to unit
    /// weight on that output at delay 0. Columns follow the rows of
    /// `H_{l+1}(w_ext)`.
    pub annihilator: DMatrix<f64>,
    /// `|coefficient| * rms(channel)` with the same layout.
    pub weights: DMatrix<f64>,
    /// Active terms per output, sorted.
    pub active: Vec<Vec<StructureTerm>>,
    /// Additional inputs with no active term.
    pub removed: Vec<usize>,
    pub pruned_model: OgbModel,
    pub data_length_used: usize,
    pub lag: usize,
    pub threshold: f64,
}

/// `(n_u + n_nl)(l + 1) + n + l`.
pub fn min_structure_length(dims: &SystemDims, l: usize) -> usize {
    dims.extended_inputs() * (l + 1) + dims.order + l
}

fn term_of(row: usize, dims: &SystemDims, l: usize) -> StructureTerm {
    let q = dims.extended_channels();
    let (block, ch) = (row / q, row % q);
    let (group, channel) = if ch < dims.n_u {
        (TermGroup::Input, ch)
    } else if ch < dims.n_u + dims.n_y {
        (TermGroup::Output, ch - dims.n_u)
    } else {
        (TermGroup::Nonlinear, ch - dims.n_u - dims.n_y)
    };
    StructureTerm {
        group,
        channel,
        delay: l - block,
    }
}

/// Estimates which terms enter each output's difference equation.
///
/// `w_ext` is a channel-grouped extended trajectory `[u_h; y; u_nl]` of
/// `model`. `threshold` is relative to the largest scaled weight of a row.
pub fn estimate_structure(
    w_ext: &Trajectory,
    model: &OgbModel,
    l: usize,
    policy: &RankPolicy,
    threshold: f64,
) -> Result<StructureReport> {
    let dims = model.dims();
    let q = dims.extended_channels();
    ensure_dim("extended trajectory channels", q, w_ext.channels())?;
    let required = min_structure_length(&dims, l);
    if w_ext.len() < required {
        return Err(Error::InsufficientData {
            context: "structure estimation",
            required,
            available: w_ext.len(),
        });
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "activity threshold must be nonnegative, got {threshold}"
        )));
    }
    let v = w_ext.values();
    let rms: Vec<f64> = (0..q)
        .map(|c| {
            let r = (v.row(c).norm_squared() / v.ncols() as f64).sqrt();
            if r > 0.0 {
                r
            } else {
                1.0
            }
        })
        .collect();
    let rows = q * (l + 1);
    let scale = |r: usize| rms[r % q];
    let h = hankel_matrix(v, l + 1)?;
    let hs = DMatrix::from_fn(rows, h.ncols(), |r, c| h[(r, c)] / scale(r));
    let ns = left_null_space(&hs, policy)?;
    if ns.nrows() < dims.n_y {
        return Err(Error::InvalidArgument(format!(
            "left null space has dimension {} but {} outputs need an equation; \
             the model does not explain the data",
            ns.nrows(),
            dims.n_y
        )));
    }
    let current: Vec<usize> = (0..dims.n_y).map(|i| l * q + dims.n_u + i).collect();
    let m = ns.select_columns(&current);
    let reduced = pinv(&m, policy)? * &ns;
    let weights = reduced.map(f64::abs);
    let annihilator = DMatrix::from_fn(dims.n_y, rows, |i, r| {
        reduced[(i, r)] / scale(r) * scale(current[i])
    });
    let mut active = Vec::with_capacity(dims.n_y);
    let mut nl_active = vec![false; dims.n_nl];
    for i in 0..dims.n_y {
        let row_max = weights.row(i).max();
        let mut terms: Vec<StructureTerm> = (0..rows)
            .filter(|&r| weights[(i, r)] > threshold * row_max)
            .map(|r| term_of(r, &dims, l))
            .collect();
        terms.sort();
        for t in &terms {
            if t.group == TermGroup::Nonlinear {
                nl_active[t.channel] = true;
            }
        }
        active.push(terms);
    }
    let kept: Vec<usize> = (0..dims.n_nl).filter(|&k| nl_active[k]).collect();
    let removed: Vec<usize> = (0..dims.n_nl).filter(|&k| !nl_active[k]).collect();
    let pruned_model = model.select_channels(&kept)?;
    Ok(StructureReport {
        annihilator,
        weights,
        active,
        removed,
        pruned_model,
        data_length_used: w_ext.len(),
        lag: l,
        threshold,
    })
}

impl StructureReport {
    /// Whether `term` is active for output `output`.
    pub fn is_active(&self, output: usize, term: StructureTerm) -> bool {
        self.active[output].binary_search(&term).is_ok()
    }

    /// Per additional input of the original model, the smallest delay with
    /// which it reaches any output, or `lag + 1` when it reaches none.
    pub fn trailing_relaxation(&self, n_nl: usize) -> Vec<usize> {
        let mut out = vec![self.lag + 1; n_nl];
        for terms in &self.active {
            for t in terms {
                if t.group == TermGroup::Nonlinear && t.channel < n_nl {
                    out[t.channel] = out[t.channel].min(t.delay);
                }
            }
        }
        out
    }

    /// Human-readable active terms, one line per output.
    pub fn describe(&self, model: &OgbModel) -> Vec<String> {
        self.active
            .iter()
            .enumerate()
            .map(|(i, terms)| {
                let names: Vec<String> = terms
                    .iter()
                    .map(|t| {
                        let base = match t.group {
                            TermGroup::Input => format!("uh{}", t.channel + 1),
                            TermGroup::Output => format!("y{}", t.channel + 1),
                            TermGroup::Nonlinear => model.describe_channel(t.channel),
                        };
                        format!("{base} @ delay {}", t.delay)
                    })
                    .collect();
                format!("y{}: {}", i + 1, names.join(", "))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ogb::BasisFunction;
    use crate::signal::{generate_excitation, ExcitationSpec};

    #[test]
    fn length_formula() {
        let four_tank = SystemDims {
            n_u: 2,
            n_y: 4,
            n_nl: 4,
            lag: 1,
            order: 4,
            unl_lookback: 0,
        };
        assert_eq!(min_structure_length(&four_tank, 1), 17);
        let small = SystemDims {
            n_u: 1,
            n_y: 1,
            n_nl: 0,
            lag: 1,
            order: 1,
            unl_lookback: 0,
        };
        assert_eq!(min_structure_length(&small, 1), 4);
    }

    #[test]
    fn spurious_basis_function_is_pruned() {
        let t = 40;
        let u = generate_excitation(
            &ExcitationSpec {
                length: t,
                low: -1.0,
                high: 1.0,
                leading_zeros: 0,
                seed: 11,
            },
            1,
        )
        .unwrap();
        let mut y = vec![0.2; t];
        for k in 1..t {
            y[k] = 0.5 * y[k - 1] + u.get(0, k - 1);
        }
        let y = Trajectory::from_rows(&[y], vec!["y1".into()]).unwrap();
        let model = OgbModel::new(
            1,
            1,
            1,
            1,
            vec![],
            vec![BasisFunction::Sin { channel: 0, lag: 0 }],
        )
        .unwrap();
        let w = model.build_extended(&u, &y, None).unwrap();
        let rep = estimate_structure(&w, &model, 1, &RankPolicy::default(), 1e-6).unwrap();
        assert_eq!(rep.removed, vec![0]);
        assert_eq!(rep.pruned_model.n_nl(), 0);
        let out = |channel, delay| StructureTerm {
            group: TermGroup::Output,
            channel,
            delay,
        };
        assert!(rep.is_active(0, out(0, 0)) && rep.is_active(0, out(0, 1)));
        let annihilated = &rep.annihilator * hankel_matrix(w.values(), 2).unwrap();
        assert!(annihilated.amax() < 1e-10);
        assert!(estimate_structure(
            &w.truncate(5).unwrap(),
            &model,
            1,
            &RankPolicy::default(),
            1e-6
        )
        .is_err());
    }
}
