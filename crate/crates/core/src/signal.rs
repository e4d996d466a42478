//! Finite multivariate discrete-time signals.
//!
//! A [`Trajectory`] stores `q` channels over `T` time steps as a `q x T`
//! matrix, one column per step. Documentation counts time from 1 where it
//! follows the Hankel-matrix convention; storage and all indices in the API
//! are 0-based.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// A finite `q`-variate signal with labeled channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl Trajectory {
    /// Builds a trajectory from a `q x T` matrix. Every entry must be finite.
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        ensure_dim("trajectory labels", values.nrows(), labels.len())?;
        for (step, col) in values.column_iter().enumerate() {
            if let Some(channel) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "trajectory",
                    channel,
                    step,
                });
            }
        }
        Ok(Self { values, labels })
    }

    /// Builds a trajectory with labels `{prefix}1 .. {prefix}q`.
    pub fn with_prefix(values: DMatrix<f64>, prefix: &str) -> Result<Self> {
        let labels = numbered_labels(prefix, values.nrows());
        Self::new(values, labels)
    }

    /// One row per channel.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        let q = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        for r in rows {
            ensure_dim("trajectory row length", t, r.len())?;
        }
        Self::new(DMatrix::from_fn(q, t, |i, j| rows[i][j]), labels)
    }

    /// A zero-length trajectory; the identity element of [`Trajectory::concat`].
    pub fn empty(labels: Vec<String>) -> Self {
        Self {
            values: DMatrix::zeros(labels.len(), 0),
            labels,
        }
    }

    pub fn zeros(labels: Vec<String>, len: usize) -> Self {
        Self {
            values: DMatrix::zeros(labels.len(), len),
            labels,
        }
    }

    /// Inverse of [`Trajectory::stacked`]: `v` holds `w(1); w(2); ...`.
    pub fn from_stacked(v: &DVector<f64>, labels: Vec<String>) -> Result<Self> {
        let q = labels.len();
        if q == 0 || !v.len().is_multiple_of(q) {
            return Err(Error::Dimension {
                context: "stacked trajectory",
                expected: q,
                actual: v.len(),
            });
        }
        let t = v.len() / q;
        Self::new(DMatrix::from_column_slice(q, t, v.as_slice()), labels)
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, channel: usize, step: usize) -> f64 {
        self.values[(channel, step)]
    }

    /// Sample at `step` as a slice of `q` values.
    pub fn sample(&self, step: usize) -> &[f64] {
        let q = self.channels();
        &self.values.as_slice()[step * q..(step + 1) * q]
    }

    /// Time-major stacking `w(1); w(2); ...; w(T)` (the `vec` of the signal).
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_column_slice(self.values.as_slice())
    }

    pub fn relabel(mut self, labels: Vec<String>) -> Result<Self> {
        ensure_dim("trajectory labels", self.channels(), labels.len())?;
        self.labels = labels;
        Ok(self)
    }

    /// `self ∧ other`: columns of `self` followed by columns of `other`.
    pub fn concat(&self, other: &Trajectory) -> Result<Self> {
        ensure_dim("concat channels", self.channels(), other.channels())?;
        if self.labels != other.labels {
            return Err(Error::InvalidArgument(format!(
                "concat: channel labels differ ({:?} vs {:?})",
                self.labels, other.labels
            )));
        }
        let q = self.channels();
        let mut values = DMatrix::zeros(q, self.len() + other.len());
        values.columns_mut(0, self.len()).copy_from(&self.values);
        values
            .columns_mut(self.len(), other.len())
            .copy_from(&other.values);
        Ok(Self {
            values,
            labels: self.labels.clone(),
        })
    }

    /// Shift by `k` steps: `k > 0` drops the first `k` samples (`σ^k`),
    /// `k < 0` drops the last `|k|`.
    pub fn shift(&self, k: isize) -> Result<Self> {
        let m = k.unsigned_abs();
        if m >= self.len() {
            return Err(Error::InsufficientData {
                context: "shift",
                required: m + 1,
                available: self.len(),
            });
        }
        let start = if k > 0 { m } else { 0 };
        self.window(start, self.len() - m)
    }

    /// Samples `start .. start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::InsufficientData {
                context: "window",
                required: start + len,
                available: self.len(),
            });
        }
        Ok(Self {
            values: self.values.columns(start, len).into_owned(),
            labels: self.labels.clone(),
        })
    }

    /// First `len` samples.
    pub fn truncate(&self, len: usize) -> Result<Self> {
        self.window(0, len)
    }

    /// Last `len` samples.
    pub fn tail(&self, len: usize) -> Result<Self> {
        if len > self.len() {
            return Err(Error::InsufficientData {
                context: "tail",
                required: len,
                available: self.len(),
            });
        }
        self.window(self.len() - len, len)
    }

    /// Channels picked (and reordered) by `indices`.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.channels() {
                return Err(Error::InvalidArgument(format!(
                    "channel index {i} out of range for {} channels",
                    self.channels()
                )));
            }
        }
        Ok(Self {
            values: self.values.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
        })
    }

    /// Stacks trajectories of equal length channel-wise.
    pub fn stack(parts: &[&Trajectory]) -> Result<Self> {
        let len = parts.first().map_or(0, |p| p.len());
        let q: usize = parts.iter().map(|p| p.channels()).sum();
        let mut values = DMatrix::zeros(q, len);
        let mut labels = Vec::with_capacity(q);
        let mut row = 0;
        for p in parts {
            ensure_dim("stack length", len, p.len())?;
            values.rows_mut(row, p.channels()).copy_from(&p.values);
            labels.extend(p.labels.iter().cloned());
            row += p.channels();
        }
        Ok(Self { values, labels })
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(&self.values * alpha, self.labels.clone())
    }

    /// Splits into `(u, y)` according to `p`.
    pub fn split(&self, p: &Partitioning) -> Result<(Self, Self)> {
        p.check(self.channels())?;
        Ok((self.select(&p.inputs)?, self.select(&p.outputs)?))
    }

    /// Inverse of [`Trajectory::split`].
    pub fn merge(u: &Trajectory, y: &Trajectory, p: &Partitioning) -> Result<Self> {
        ensure_dim("merge inputs", p.inputs.len(), u.channels())?;
        ensure_dim("merge outputs", p.outputs.len(), y.channels())?;
        ensure_dim("merge length", u.len(), y.len())?;
        let q = p.inputs.len() + p.outputs.len();
        p.check(q)?;
        let mut values = DMatrix::zeros(q, u.len());
        let mut labels = vec![String::new(); q];
        for (k, &i) in p.inputs.iter().enumerate() {
            values.row_mut(i).copy_from(&u.values.row(k));
            labels[i] = u.labels[k].clone();
        }
        for (k, &i) in p.outputs.iter().enumerate() {
            values.row_mut(i).copy_from(&y.values.row(k));
            labels[i] = y.labels[k].clone();
        }
        Ok(Self { values, labels })
    }

    /// Writes the trajectory as CSV: a header of channel labels, then one row
    /// per time step. Values use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.labels)?;
        for t in 0..self.len() {
            w.write_record(self.sample(t).iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let labels: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let q = labels.len();
        let mut data = Vec::new();
        for record in r.records() {
            let record = record?;
            ensure_dim("csv row width", q, record.len())?;
            for field in record.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidArgument(format!("csv: cannot parse {field:?} as a number"))
                })?;
                data.push(v);
            }
        }
        let t = data.len().checked_div(q).unwrap_or(0);
        Self::new(DMatrix::from_column_slice(q, t, &data), labels)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

pub fn numbered_labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Input/output partitioning of a trajectory's channels (0-based indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partitioning {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

impl Partitioning {
    pub fn new(inputs: Vec<usize>, outputs: Vec<usize>) -> Result<Self> {
        let p = Self { inputs, outputs };
        p.check(p.inputs.len() + p.outputs.len())?;
        Ok(p)
    }

    pub fn n_u(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_y(&self) -> usize {
        self.outputs.len()
    }

    /// The index lists must be disjoint and cover `0..q` exactly.
    fn check(&self, q: usize) -> Result<()> {
        let mut seen = vec![false; q];
        for &i in self.inputs.iter().chain(&self.outputs) {
            if i >= q {
                return Err(Error::InvalidArgument(format!(
                    "partition index {i} out of range for {q} channels"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "partition index {i} listed twice"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument(
                "partition does not cover every channel".into(),
            ));
        }
        Ok(())
    }
}

/// Seeded i.i.d. uniform excitation on the open interval `]low, high[`,
/// optionally preceded by zeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub length: usize,
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub leading_zeros: usize,
    pub seed: u64,
}

impl ExcitationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidArgument(
                "excitation length must be positive".into(),
            ));
        }
        if !(self.low < self.high) || !self.low.is_finite() || !self.high.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "excitation interval ]{}, {}[ is empty",
                self.low, self.high
            )));
        }
        if self.leading_zeros > self.length {
            return Err(Error::InvalidArgument(format!(
                "{} leading zeros exceed length {}",
                self.leading_zeros, self.length
            )));
        }
        Ok(())
    }
}

/// Generates an `n_channels x length` excitation.
///
/// Samples are drawn from a ChaCha8 stream seeded with `spec.seed`, step by
/// step and channel by channel. Draws equal to `low` are rejected so the
/// support is the open interval; the rejection keeps the output a pure
/// function of the seed.
pub fn generate_excitation(spec: &ExcitationSpec, n_channels: usize) -> Result<Trajectory> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = DMatrix::zeros(n_channels, spec.length);
    for t in spec.leading_zeros..spec.length {
        for c in 0..n_channels {
            values[(c, t)] = loop {
                let v = rng.gen_range(spec.low..spec.high);
                if v > spec.low {
                    break v;
                }
            };
        }
    }
    Trajectory::with_prefix(values, "u")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Trajectory {
        Trajectory::from_rows(&[v.to_vec()], vec!["w".into()]).unwrap()
    }

    #[test]
    fn concat_appends_columns() {
        let w = row(&[1.0, 2.0]).concat(&row(&[3.0])).unwrap();
        assert_eq!(w, row(&[1.0, 2.0, 3.0]));

        let a = Trajectory::zeros(vec!["a".into(), "b".into()], 2);
        let b = Trajectory::zeros(vec!["a".into(), "b".into()], 3);
        let c = a.concat(&b).unwrap();
        assert_eq!((c.channels(), c.len()), (2, 5));
    }

    #[test]
    fn concat_with_empty_is_identity() {
        let w = row(&[1.0, 2.0]);
        assert_eq!(w.concat(&Trajectory::empty(vec!["w".into()])).unwrap(), w);
    }

    #[test]
    fn concat_rejects_mismatch() {
        let a = row(&[1.0]);
        let b = Trajectory::zeros(vec!["a".into(), "b".into()], 1);
        assert!(matches!(a.concat(&b), Err(Error::Dimension { .. })));
        let c = Trajectory::from_rows(&[vec![1.0]], vec!["other".into()]).unwrap();
        assert!(a.concat(&c).is_err());
    }

    #[test]
    fn shift_windows() {
        let w = row(&[1.0, 2.0, 3.0]);
        assert_eq!(w.shift(1).unwrap(), row(&[2.0, 3.0]));
        assert_eq!(w.shift(0).unwrap(), w);
        assert_eq!(w.shift(-1).unwrap(), row(&[1.0, 2.0]));
        assert!(w.shift(3).is_err());
        assert!(w.shift(-3).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let r = Trajectory::from_rows(&[vec![1.0, f64::NAN]], vec!["w".into()]);
        assert!(matches!(r, Err(Error::NonFinite { step: 1, .. })));
    }

    #[test]
    fn split_selects_and_permutes() {
        let w = Trajectory::from_rows(
            &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let p = Partitioning::new(vec![0], vec![1, 2]).unwrap();
        let (u, y) = w.split(&p).unwrap();
        assert_eq!((u.channels(), y.channels()), (1, 2));
        assert_eq!(Trajectory::merge(&u, &y, &p).unwrap(), w);

        let w2 = w.select(&[0, 1]).unwrap();
        let p2 = Partitioning::new(vec![1], vec![0]).unwrap();
        let (u2, y2) = w2.split(&p2).unwrap();
        assert_eq!(u2.get(0, 0), 3.0);
        assert_eq!(y2.get(0, 0), 1.0);
    }

    #[test]
    fn partition_validation() {
        assert!(Partitioning::new(vec![0], vec![0]).is_err());
        assert!(Partitioning::new(vec![0], vec![2]).is_err());
        let w = Trajectory::zeros(vec!["a".into(), "b".into()], 1);
        let p = Partitioning {
            inputs: vec![0],
            outputs: vec![5],
        };
        assert!(w.split(&p).is_err());
    }

    #[test]
    fn excitation_pendulum_data() {
        let spec = ExcitationSpec {
            length: 307,
            low: 0.0,
            high: 0.08,
            leading_zeros: 0,
            seed: 11,
        };
        let u = generate_excitation(&spec, 1).unwrap();
        assert_eq!((u.channels(), u.len()), (1, 307));
        assert!(u.values().iter().all(|&v| v > 0.0 && v < 0.08));
    }

    #[test]
    fn excitation_leading_zeros_and_determinism() {
        let spec = ExcitationSpec {
            length: 102,
            low: 0.0,
            high: 0.05,
            leading_zeros: 2,
            seed: 3,
        };
        let a = generate_excitation(&spec, 1).unwrap();
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert!(a.get(0, 2) > 0.0);
        let b = generate_excitation(&spec, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn excitation_spec_validation() {
        let bad = ExcitationSpec {
            length: 3,
            low: 1.0,
            high: 1.0,
            leading_zeros: 0,
            seed: 0,
        };
        assert!(generate_excitation(&bad, 1).is_err());
        let bad = ExcitationSpec {
            length: 3,
            low: 0.0,
            high: 1.0,
            leading_zeros: 4,
            seed: 0,
        };
        assert!(generate_excitation(&bad, 1).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let w = Trajectory::from_rows(
            &[
                vec![0.1, 1.0 / 3.0, -2.5e-300],
                vec![std::f64::consts::PI, 0.0, 7.0],
            ],
            vec!["u1".into(), "y1".into()],
        )
        .unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, w);
        assert!(String::from_utf8(buf).unwrap().starts_with("u1,y1\n"));
    }

    #[test]
    fn stacked_round_trip() {
        let w = Trajectory::from_rows(
            &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let v = w.stacked();
        assert_eq!(v.as_slice(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(
            Trajectory::from_stacked(&v, w.labels().to_vec()).unwrap(),
            w
        );
    }
}
