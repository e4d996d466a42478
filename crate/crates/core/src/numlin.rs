//! Rank, pseudo-inverse, null spaces and minimal parameterizations.
//!
//! Every routine here performs a single singular value decomposition of its
//! matrix argument and takes its rank decision from a shared [`RankPolicy`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    Absolute,
    #[default]
    Relative,
}

/// How singular values are classified as zero.
///
/// `Relative` compares against `tolerance * sigma_max`, `Absolute` against
/// `tolerance`. Without an explicit tolerance the threshold is
/// `max(rows, cols) * eps * sigma_max` in both modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RankPolicy {
    #[serde(default)]
    pub mode: RankMode,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl RankPolicy {
    pub fn relative(tolerance: f64) -> Self {
        Self {
            mode: RankMode::Relative,
            tolerance: Some(tolerance),
        }
    }

    pub fn absolute(tolerance: f64) -> Self {
        Self {
            mode: RankMode::Absolute,
            tolerance: Some(tolerance),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.tolerance {
            Some(t) if !(t >= 0.0) || !t.is_finite() => Err(Error::InvalidArgument(format!(
                "rank tolerance must be a nonnegative number, got {t}"
            ))),
            _ => Ok(()),
        }
    }

    /// Singular values strictly above this value count towards the rank.
    pub fn threshold(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        match (self.mode, self.tolerance) {
            (_, None) => rows.max(cols) as f64 * f64::EPSILON * sigma_max,
            (RankMode::Relative, Some(t)) => t * sigma_max,
            (RankMode::Absolute, Some(t)) => t,
        }
    }
}

/// Full singular value decomposition `M = U diag(s) V^T`.
///
/// `u` is `rows x rows`, `v` is `cols x cols` and `s` holds the
/// `min(rows, cols)` singular values in nonincreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn rank(&self, policy: &RankPolicy) -> usize {
        let (rows, cols) = (self.u.nrows(), self.v.nrows());
        let sigma_max = self.s.iter().copied().fold(0.0, f64::max);
        let tol = policy.threshold(rows, cols, sigma_max);
        self.s.iter().filter(|&&x| x > tol).count()
    }
}

fn check_finite(context: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if let Some(k) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context,
            channel: k % m.nrows().max(1),
            step: k / m.nrows().max(1),
        });
    }
    Ok(())
}

/// Full SVD backed by faer.
pub fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    decompose(m, false)
}

/// SVD with a full `v` and only the first `min(rows, cols)` columns of `u`.
/// Enough for everything except left null spaces.
fn svd_right(m: &DMatrix<f64>) -> Result<Svd> {
    decompose(m, m.nrows() >= m.ncols())
}

fn to_nalgebra(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn decompose(m: &DMatrix<f64>, thin: bool) -> Result<Svd> {
    check_finite("svd input", m)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Svd {
            u: DMatrix::identity(rows, rows),
            s: DVector::zeros(0),
            v: DMatrix::identity(cols, cols),
        });
    }
    let f = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let failed = |_| {
        Error::Numerical(format!(
            "singular value decomposition of a {rows}x{cols} matrix did not converge"
        ))
    };
    let (u, v, s) = if thin {
        let d = f.thin_svd().map_err(failed)?;
        let s = d.S().column_vector();
        (
            to_nalgebra(d.U()),
            to_nalgebra(d.V()),
            DVector::from_fn(s.nrows(), |i, _| s[i]),
        )
    } else {
        let d = f.svd().map_err(failed)?;
        let s = d.S().column_vector();
        (
            to_nalgebra(d.U()),
            to_nalgebra(d.V()),
            DVector::from_fn(s.nrows(), |i, _| s[i]),
        )
    };
    let out = Svd { u, s, v };
    if out.s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!(
            "singular value decomposition of a {rows}x{cols} matrix did not converge"
        )));
    }
    Ok(out)
}

/// Singular values only, in nonincreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_finite("svd input", m)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(DVector::zeros(0));
    }
    let f = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let s = f.singular_values().map_err(|_| {
        Error::Numerical(format!(
            "singular values of a {rows}x{cols} matrix did not converge"
        ))
    })?;
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!(
            "singular values of a {rows}x{cols} matrix did not converge"
        )));
    }
    Ok(DVector::from_vec(s))
}

pub fn rank_of(m: &DMatrix<f64>, policy: &RankPolicy) -> Result<usize> {
    policy.validate()?;
    let s = singular_values(m)?;
    let sigma_max = s.iter().copied().fold(0.0, f64::max);
    let tol = policy.threshold(m.nrows(), m.ncols(), sigma_max);
    Ok(s.iter().filter(|&&x| x > tol).count())
}

/// Moore-Penrose pseudo-inverse with singular values at or below the policy
/// threshold treated as zero.
pub fn pinv(m: &DMatrix<f64>, policy: &RankPolicy) -> Result<DMatrix<f64>> {
    policy.validate()?;
    let d = svd_right(m)?;
    let r = d.rank(policy);
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for k in 0..r {
        out += d.v.column(k) * d.u.column(k).transpose() / d.s[k];
    }
    Ok(out)
}

/// Orthonormal basis of `{x : M x = 0}` as columns.
pub fn null_space(m: &DMatrix<f64>, policy: &RankPolicy) -> Result<DMatrix<f64>> {
    policy.validate()?;
    let d = svd_right(m)?;
    let r = d.rank(policy);
    Ok(d.v.columns(r, m.ncols() - r).into_owned())
}

/// Orthonormal basis of `{x : x^T M = 0}` as rows.
pub fn left_null_space(m: &DMatrix<f64>, policy: &RankPolicy) -> Result<DMatrix<f64>> {
    policy.validate()?;
    let d = svd(m)?;
    let r = d.rank(policy);
    Ok(d.u.columns(r, m.nrows() - r).transpose())
}

/// Orthonormal basis of the column space of `M`.
pub fn column_compress(m: &DMatrix<f64>, policy: &RankPolicy) -> Result<DMatrix<f64>> {
    policy.validate()?;
    let d = svd_right(m)?;
    let r = d.rank(policy);
    Ok(d.u.columns(0, r).into_owned())
}

/// `{offset + basis * z}` with orthonormal basis columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSolutionSet {
    pub offset: DVector<f64>,
    pub basis: DMatrix<f64>,
    /// `||A offset - b||_2` of the system the set was obtained from.
    pub residual: f64,
}

impl AffineSolutionSet {
    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }

    pub fn point(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("parameter vector", self.dimension(), z.len())?;
        Ok(&self.offset + &self.basis * z)
    }
}

/// Feasibility threshold `abs + rel * ||b||_2` for least-squares residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Feasibility {
    fn default() -> Self {
        Self {
            abs: 1e-8,
            rel: 1e-10,
        }
    }
}

impl Feasibility {
    pub fn threshold(&self, b: &DVector<f64>) -> f64 {
        self.abs + self.rel * b.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AffineOutcome {
    Feasible(AffineSolutionSet),
    /// `least_squares` holds the minimum-norm least-squares solution together
    /// with the null-space basis of `A`.
    NoSolution {
        residual: f64,
        threshold: f64,
        least_squares: AffineSolutionSet,
    },
}

impl AffineOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, AffineOutcome::Feasible(_))
    }

    pub fn solution_set(&self) -> &AffineSolutionSet {
        match self {
            AffineOutcome::Feasible(s) => s,
            AffineOutcome::NoSolution { least_squares, .. } => least_squares,
        }
    }

    pub fn into_solution_set(self) -> AffineSolutionSet {
        match self {
            AffineOutcome::Feasible(s) => s,
            AffineOutcome::NoSolution { least_squares, .. } => least_squares,
        }
    }
}

/// Solves `A g = b` as `g = A^+ b + N z`.
pub fn solve_affine(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    policy: &RankPolicy,
    feasibility: &Feasibility,
) -> Result<AffineOutcome> {
    policy.validate()?;
    ensure_dim("affine system rows", a.nrows(), b.len())?;
    check_finite(
        "right-hand side",
        &DMatrix::from_column_slice(b.len(), 1, b.as_slice()),
    )?;
    let d = svd_right(a)?;
    let r = d.rank(policy);
    let mut offset = DVector::zeros(a.ncols());
    for k in 0..r {
        let coef = d.u.column(k).dot(b) / d.s[k];
        offset.axpy(coef, &d.v.column(k), 1.0);
    }
    let basis = d.v.columns(r, a.ncols() - r).into_owned();
    let residual = (a * &offset - b).norm();
    let threshold = feasibility.threshold(b);
    let set = AffineSolutionSet {
        offset,
        basis,
        residual,
    };
    if residual <= threshold {
        Ok(AffineOutcome::Feasible(set))
    } else {
        Ok(AffineOutcome::NoSolution {
            residual,
            threshold,
            least_squares: set,
        })
    }
}

/// Minimal parameterization of `{U g : g in sol}`.
///
/// The basis is an orthonormal column compression of `U N`, so its number of
/// columns equals `rank(U N)`, the least number of parameters that describe
/// the image. A relative rank tolerance is taken with respect to the largest
/// singular value of `U`, since `N` is orthonormal.
pub fn parameterize_image(
    u: &DMatrix<f64>,
    sol: &AffineSolutionSet,
    policy: &RankPolicy,
) -> Result<AffineSolutionSet> {
    policy.validate()?;
    ensure_dim("image map columns", sol.offset.len(), u.ncols())?;
    let offset = u * &sol.offset;
    let mut basis = DMatrix::zeros(u.nrows(), 0);
    if sol.dimension() > 0 && u.nrows() > 0 {
        let scale = singular_values(u)?.iter().copied().fold(0.0, f64::max);
        if scale > 0.0 {
            let un = u * &sol.basis;
            let d = svd_right(&un)?;
            let thr = policy.threshold(u.nrows(), u.ncols(), scale);
            let r = d.s.iter().filter(|&&x| x > thr).count();
            basis = d.u.columns(0, r).into_owned();
        }
    }
    Ok(AffineSolutionSet {
        offset,
        basis,
        residual: sol.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> AffineOutcome {
        solve_affine(a, b, &RankPolicy::default(), &Feasibility::default()).unwrap()
    }

    #[test]
    fn wide_rank_deficient_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        for _ in 0..20 {
            let mut m = random(&mut rng, 8, 28);
            let row = m.row(1) * 0.87 + m.row(0) * 0.116;
            m.row_mut(2).copy_from(&row);
            let d = svd(&m).unwrap();
            let k = d.s.len();
            let back =
                d.u.columns(0, k) * DMatrix::from_diagonal(&d.s) * d.v.columns(0, k).transpose();
            assert!((back - &m).amax() < 1e-12);
        }
    }

    #[test]
    fn rank_examples() {
        let p = RankPolicy::default();
        assert_eq!(rank_of(&DMatrix::identity(3, 3), &p).unwrap(), 3);
        assert_eq!(rank_of(&DMatrix::zeros(4, 2), &p).unwrap(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 5, 1);
        let y = random(&mut rng, 5, 1);
        assert_eq!(rank_of(&(&x * y.transpose()), &p).unwrap(), 1);
    }

    #[test]
    fn absolute_policy() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3, 1e-9]));
        assert_eq!(rank_of(&m, &RankPolicy::absolute(1e-6)).unwrap(), 2);
        assert_eq!(rank_of(&m, &RankPolicy::absolute(1e-2)).unwrap(), 1);
        assert_eq!(rank_of(&m, &RankPolicy::relative(1e-12)).unwrap(), 3);
        assert!(rank_of(&m, &RankPolicy::absolute(-1.0)).is_err());
    }

    #[test]
    fn solve_identity() {
        let out = solve(&DMatrix::identity(2, 2), &DVector::from_vec(vec![1.0, 2.0]));
        let s = out.solution_set();
        assert!(out.is_feasible());
        assert!((s.offset[0] - 1.0).abs() < 1e-14 && (s.offset[1] - 2.0).abs() < 1e-14);
        assert_eq!(s.dimension(), 0);
    }

    #[test]
    fn solve_underdetermined_min_norm() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let out = solve(&a, &DVector::from_vec(vec![2.0]));
        let s = out.solution_set();
        assert!(out.is_feasible());
        assert!((s.offset[0] - 1.0).abs() < 1e-14 && (s.offset[1] - 1.0).abs() < 1e-14);
        assert_eq!(s.dimension(), 1);
        let n = s.basis.column(0);
        let r = 0.5f64.sqrt();
        assert!((n[0].abs() - r).abs() < 1e-14);
        assert!((n[0] + n[1]).abs() < 1e-14);
    }

    #[test]
    fn solve_inconsistent() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        match solve(&a, &DVector::from_vec(vec![1.0, 2.0])) {
            AffineOutcome::NoSolution {
                residual,
                least_squares,
                ..
            } => {
                assert!((residual - 0.5f64.sqrt()).abs() < 1e-14);
                assert!((least_squares.offset[0] - 1.5).abs() < 1e-14);
            }
            other => panic!("expected no solution, got {other:?}"),
        }
    }

    #[test]
    fn solve_rejects_row_mismatch() {
        let r = solve_affine(
            &DMatrix::identity(2, 2),
            &DVector::zeros(3),
            &RankPolicy::default(),
            &Feasibility::default(),
        );
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn pinv_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 6, 3);
        let p = pinv(&a, &RankPolicy::default()).unwrap();
        let expected = (a.transpose() * &a).try_inverse().unwrap() * a.transpose();
        assert!((p - expected).amax() < 1e-12);
    }

    #[test]
    fn null_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random(&mut rng, 4, 2) * random(&mut rng, 2, 6);
        let p = RankPolicy::default();
        let n = null_space(&m, &p).unwrap();
        assert_eq!(n.ncols(), 4);
        assert!((&m * &n).amax() < 1e-12);
        let l = left_null_space(&m, &p).unwrap();
        assert_eq!(l.nrows(), 2);
        assert!((&l * &m).amax() < 1e-12);
        let c = column_compress(&m, &p).unwrap();
        assert_eq!(c.ncols(), 2);
        assert!((c.transpose() * &c - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn image_of_unique_solution_has_no_parameters() {
        let sol = AffineSolutionSet {
            offset: DVector::from_vec(vec![1.0, 2.0]),
            basis: DMatrix::zeros(2, 0),
            residual: 0.0,
        };
        let u = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let img = parameterize_image(&u, &sol, &RankPolicy::default()).unwrap();
        assert_eq!(img.dimension(), 0);
        assert_eq!(img.offset[0], 3.0);
    }

    #[test]
    fn image_under_zero_map_is_a_point() {
        let out = solve(
            &DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            &DVector::from_vec(vec![1.0]),
        );
        let img = parameterize_image(
            &DMatrix::zeros(2, 3),
            out.solution_set(),
            &RankPolicy::default(),
        )
        .unwrap();
        assert_eq!(img.dimension(), 0);
    }

    #[test]
    fn image_dimension_is_rank_of_un() {
        // A fixes g1 + g2; U reads g1 and g3 -> image has two free directions.
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let out = solve(&a, &DVector::from_vec(vec![1.0]));
        let u = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
        let img = parameterize_image(&u, out.solution_set(), &RankPolicy::default()).unwrap();
        assert_eq!(img.dimension(), 2);
        let u2 = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let img2 = parameterize_image(&u2, out.solution_set(), &RankPolicy::default()).unwrap();
        assert_eq!(img2.dimension(), 0);
        assert!((img2.offset[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn image_dimension_mismatch() {
        let sol = AffineSolutionSet {
            offset: DVector::zeros(2),
            basis: DMatrix::zeros(2, 0),
            residual: 0.0,
        };
        let r = parameterize_image(&DMatrix::zeros(1, 3), &sol, &RankPolicy::default());
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }
}
