//! Block Hankel matrices, the extended rank condition and data-length formulas.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::numlin::{rank_of, RankPolicy};
use crate::signal::Trajectory;

/// `H_L(w)`: block row `i`, column `j` holds `w(i + j)` (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockHankel {
    pub matrix: DMatrix<f64>,
    pub block_rows: usize,
    pub channels: usize,
}

pub fn build_hankel(w: &Trajectory, block_rows: usize) -> Result<BlockHankel> {
    Ok(BlockHankel {
        matrix: hankel_matrix(w.values(), block_rows)?,
        block_rows,
        channels: w.channels(),
    })
}

/// Hankel matrix of a `q x T` sample matrix with `L` block rows.
pub(crate) fn hankel_matrix(w: &DMatrix<f64>, l: usize) -> Result<DMatrix<f64>> {
    let (q, t) = w.shape();
    if l == 0 {
        return Err(Error::InvalidArgument(
            "Hankel matrix needs at least one block row".into(),
        ));
    }
    if l > t {
        return Err(Error::InsufficientData {
            context: "block Hankel matrix",
            required: l,
            available: t,
        });
    }
    let cols = t - l + 1;
    let mut h = DMatrix::zeros(q * l, cols);
    for i in 0..l {
        h.view_mut((i * q, 0), (q, cols))
            .copy_from(&w.columns(i, cols));
    }
    Ok(h)
}

/// Dimensions of an extended (LTI-embedded) system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    pub n_u: usize,
    pub n_y: usize,
    pub n_nl: usize,
    pub lag: usize,
    pub order: usize,
    /// Samples lost at the start of a trajectory before `u_nl` is defined.
    #[serde(default)]
    pub unl_lookback: usize,
}

impl SystemDims {
    /// `n_u + n_nl`, the number of inputs of the extended system.
    pub fn extended_inputs(&self) -> usize {
        self.n_u + self.n_nl
    }

    pub fn extended_channels(&self) -> usize {
        self.n_u + self.n_y + self.n_nl
    }

    /// `(n_u + n_nl)(L + T_ini) + n`.
    pub fn required_rank(&self, horizon: usize, t_ini: usize) -> usize {
        self.extended_inputs() * (horizon + t_ini) + self.order
    }
}

/// Row blocks of `H_{L+T_ini}` of a channel-grouped extended trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedHankel {
    pub u_hp: DMatrix<f64>,
    pub u_hf: DMatrix<f64>,
    pub y_p: DMatrix<f64>,
    pub y_f: DMatrix<f64>,
    pub u_nl: DMatrix<f64>,
    pub t_ini: usize,
    pub horizon: usize,
}

impl PartitionedHankel {
    pub fn columns(&self) -> usize {
        self.u_hf.ncols()
    }

    /// `[U_hp; U_hf; Y_p; Y_f; U_nl]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        vstack(&[&self.u_hp, &self.u_hf, &self.y_p, &self.y_f, &self.u_nl])
    }
}

pub(crate) fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.iter().map(|b| b.ncols()).max().unwrap_or(0);
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        if b.nrows() > 0 {
            out.view_mut((r, 0), b.shape()).copy_from(*b);
        }
        r += b.nrows();
    }
    out
}

/// Splits `H_{L+T_ini}(w_ext)` into past and future blocks.
///
/// `w_ext` holds the channel groups `u_h` (`n_u` rows), `y` (`n_y` rows) and
/// `u_nl` (`n_nl` rows) in that order, already restricted to the window on
/// which `u_nl` is defined.
pub fn partition_extended(
    w_ext: &Trajectory,
    dims: &SystemDims,
    horizon: usize,
    t_ini: usize,
) -> Result<PartitionedHankel> {
    ensure_dim(
        "extended trajectory channels",
        dims.extended_channels(),
        w_ext.channels(),
    )?;
    let depth = horizon + t_ini;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if w_ext.len() < depth {
        return Err(Error::InsufficientData {
            context: "extended Hankel matrix",
            required: depth,
            available: w_ext.len(),
        });
    }
    let v = w_ext.values();
    let (n_u, n_y, n_nl) = (dims.n_u, dims.n_y, dims.n_nl);
    let uh = hankel_matrix(&v.rows(0, n_u).into_owned(), depth)?;
    let y = hankel_matrix(&v.rows(n_u, n_y).into_owned(), depth)?;
    let unl = hankel_matrix(&v.rows(n_u + n_y, n_nl).into_owned(), depth)?;
    Ok(PartitionedHankel {
        u_hp: uh.rows(0, n_u * t_ini).into_owned(),
        u_hf: uh.rows(n_u * t_ini, n_u * horizon).into_owned(),
        y_p: y.rows(0, n_y * t_ini).into_owned(),
        y_f: y.rows(n_y * t_ini, n_y * horizon).into_owned(),
        u_nl: unl,
        t_ini,
        horizon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpeVerdict {
    Satisfied,
    /// Rank below the requirement: too little data or redundant inputs.
    Deficient,
    /// Rank above the requirement: the assumed order is too low or the basis
    /// does not describe the system.
    Exceeds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpeReport {
    pub rank: usize,
    pub required: usize,
    pub columns: usize,
    pub verdict: GpeVerdict,
}

/// Checks `rank H_{L+T_ini}(w_ext) = (n_u + n_nl)(L + T_ini) + n`.
pub fn check_gpe(
    ph: &PartitionedHankel,
    dims: &SystemDims,
    policy: &RankPolicy,
) -> Result<GpeReport> {
    let required = dims.required_rank(ph.horizon, ph.t_ini);
    let rank = rank_of(&ph.stacked(), policy)?;
    let verdict = match rank.cmp(&required) {
        std::cmp::Ordering::Equal => GpeVerdict::Satisfied,
        std::cmp::Ordering::Less => GpeVerdict::Deficient,
        std::cmp::Ordering::Greater => GpeVerdict::Exceeds,
    };
    Ok(GpeReport {
        rank,
        required,
        columns: ph.columns(),
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinLength {
    pub ogb: usize,
    pub lti: usize,
    pub extra: usize,
}

/// Smallest trajectory lengths that give the Hankel matrix enough columns for
/// the rank condition, for the extended system and for an LTI system with the
/// same order.
///
/// `T_ogb = (n_u + n_nl + 1)(L + T_ini) + n + lookback - 1` and
/// `T_lti = (n_u + 1)(L + T_ini) + n - 1`.
pub fn min_data_length(dims: &SystemDims, horizon: usize, t_ini: usize) -> MinLength {
    let depth = horizon + t_ini;
    let ogb = (dims.n_u + dims.n_nl + 1) * depth + dims.order + dims.unl_lookback;
    let lti = (dims.n_u + 1) * depth + dims.order;
    let ogb = ogb.saturating_sub(1);
    let lti = lti.saturating_sub(1);
    MinLength {
        ogb,
        lti,
        extra: ogb - lti,
    }
}
