//! Volatility profiles and simplex-constrained donor weighting.
//!
//! Given the target's covariate vector `v1` and the donors' columns `V`,
//! the weights solve
//!
//! ```text
//! min_π ‖v1 − Vπ‖_S   subject to π ≥ 0, Σπ = 1
//! ```
//!
//! with an exact active-set method. Among multiple minimizers the
//! minimum-Euclidean-norm weight vector is returned.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Weights above this count toward the reported support.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;
const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityProfile {
    /// The target's covariates, length p.
    pub target: Vec<f64>,
    /// One column of length p per donor.
    pub donors: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    pub donor_names: Vec<String>,
    pub standardized: bool,
    /// Rows with no dispersion across events; zeroed by standardization.
    pub constant_rows: Vec<bool>,
    /// The unstandardized profile, kept for reporting.
    pub raw: Option<Box<VolatilityProfile>>,
}

impl VolatilityProfile {
    pub fn new(
        target: Vec<f64>,
        donors: Vec<Vec<f64>>,
        covariate_names: Vec<String>,
        donor_names: Vec<String>,
    ) -> Result<Self> {
        let p = target.len();
        if donors.is_empty() {
            return Err(Error::DimensionMismatch("a profile needs at least one donor".into()));
        }
        if let Some((i, col)) = donors.iter().enumerate().find(|(_, c)| c.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "donor {i} has {} covariates, target has {p}",
                col.len()
            )));
        }
        if covariate_names.len() != p || donor_names.len() != donors.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate names for p = {p}, {} donor names for n = {}",
                covariate_names.len(),
                donor_names.len(),
                donors.len()
            )));
        }
        if target.iter().chain(donors.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("profile entries must be finite (no missing values)".into()));
        }
        Ok(Self {
            target,
            donors,
            covariate_names,
            donor_names,
            standardized: false,
            constant_rows: vec![false; p],
            raw: None,
        })
    }

    /// Unnamed profile, convenient for numerical work.
    pub fn from_columns(target: Vec<f64>, donors: Vec<Vec<f64>>) -> Result<Self> {
        let p = target.len();
        let n = donors.len();
        Self::new(
            target,
            donors,
            (0..p).map(|i| format!("x{}", i + 1)).collect(),
            (0..n).map(|i| format!("donor{}", i + 1)).collect(),
        )
    }

    pub fn p(&self) -> usize {
        self.target.len()
    }

    pub fn n(&self) -> usize {
        self.donors.len()
    }

    /// The p × n donor matrix.
    pub fn donor_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p(), self.n(), |i, j| self.donors[j][i])
    }

    /// Drops the raw copy and standardization state; the entries stay as is.
    fn strip(&self) -> Self {
        Self { raw: None, ..self.clone() }
    }

    pub fn without_donor(&self, index: usize) -> Result<Self> {
        if index >= self.n() || self.n() == 1 {
            return Err(Error::DimensionMismatch(format!("cannot drop donor {index} of {}", self.n())));
        }
        let base = self.raw.as_deref().unwrap_or(self);
        let mut donors = base.donors.clone();
        let mut names = base.donor_names.clone();
        donors.remove(index);
        names.remove(index);
        Self::new(base.target.clone(), donors, base.covariate_names.clone(), names)
    }

    pub fn without_covariate(&self, index: usize) -> Result<Self> {
        if index >= self.p() || self.p() == 1 {
            return Err(Error::DimensionMismatch(format!("cannot drop covariate {index} of {}", self.p())));
        }
        let base = self.raw.as_deref().unwrap_or(self);
        let mut target = base.target.clone();
        target.remove(index);
        let donors = base
            .donors
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.remove(index);
                c
            })
            .collect();
        let mut names = base.covariate_names.clone();
        names.remove(index);
        Self::new(target, donors, names, base.donor_names.clone())
    }

    /// Each singular value of the donor matrix as a share of their sum; a
    /// quick read on how much independent information the donors carry.
    pub fn singular_value_shares(&self) -> Vec<f64> {
        let sv = self.donor_matrix().singular_values();
        let mut values: Vec<f64> = sv.iter().copied().collect();
        values.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = values.iter().sum();
        if total > 0.0 {
            values.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; values.len()]
        }
    }
}

/// Z-scores each covariate across all n + 1 events (target included) using
/// the sample standard deviation. Rows without dispersion become zero and
/// are flagged in `constant_rows`.
pub fn standardize(profile: &VolatilityProfile) -> VolatilityProfile {
    let p = profile.p();
    let events = profile.n() + 1;
    let mut out = profile.strip();
    for i in 0..p {
        let row: Vec<f64> = std::iter::once(profile.target[i]).chain(profile.donors.iter().map(|c| c[i])).collect();
        let mean = row.iter().sum::<f64>() / events as f64;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (events - 1) as f64;
        let sd = var.sqrt();
        let (lo, hi) = row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(*x), h.max(*x)));
        let magnitude = lo.abs().max(hi.abs());
        let constant = hi - lo <= 1e-14 * magnitude || sd == 0.0;
        out.constant_rows[i] = constant;
        let z = |x: f64| if constant { 0.0 } else { (x - mean) / sd };
        out.target[i] = z(profile.target[i]);
        for (dst, src) in out.donors.iter_mut().zip(&profile.donors) {
            dst[i] = z(src[i]);
        }
    }
    out.standardized = true;
    out.raw = Some(Box::new(match &profile.raw {
        Some(raw) => (**raw).clone(),
        None => profile.strip(),
    }));
    out
}

/// The weighting semi-norm `‖x‖_S = sqrt(xᵀ S x)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SemiNorm {
    #[default]
    Identity,
    Matrix(DMatrix<f64>),
}

impl SemiNorm {
    /// A weighting matrix given row by row; must be square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch(format!("semi-norm row of length {} in a {p}-row matrix", r.len())));
        }
        Ok(SemiNorm::Matrix(DMatrix::from_fn(p, p, |i, j| rows[i][j])))
    }

    /// Returns `L` with `S = LᵀL`.
    fn factor(&self, p: usize) -> Result<DMatrix<f64>> {
        match self {
            SemiNorm::Identity => Ok(DMatrix::identity(p, p)),
            SemiNorm::Matrix(s) => {
                if s.nrows() != p || s.ncols() != p {
                    return Err(Error::DimensionMismatch(format!(
                        "semi-norm matrix is {}x{}, profile has p = {p}",
                        s.nrows(),
                        s.ncols()
                    )));
                }
                let sym = (s + s.transpose()) * 0.5;
                let eig = SymmetricEigen::new(sym);
                let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
                let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                if min < -1e-10 * scale {
                    return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
                }
                let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                Ok(DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
            }
        }
    }

    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        let v = DVector::from_column_slice(x);
        match self {
            SemiNorm::Identity => Ok(v.norm()),
            SemiNorm::Matrix(s) => {
                if s.nrows() != x.len() || s.ncols() != x.len() {
                    return Err(Error::DimensionMismatch("semi-norm size".into()));
                }
                Ok((v.transpose() * s * &v)[(0, 0)].max(0.0).sqrt())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    pub weights: Vec<f64>,
    /// `‖v1 − Vπ‖_S` recomputed at `weights`.
    pub objective: f64,
    /// True when the objective is strictly convex on the simplex, so the
    /// minimizer is unique.
    pub unique_hint: bool,
    /// Donors with weight above [`SUPPORT_THRESHOLD`].
    pub active_support: Vec<usize>,
}

/// Residual of the target against the weighted donors, `v1 − Vπ`.
pub fn residual(profile: &VolatilityProfile, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != profile.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} donors",
            weights.len(),
            profile.n()
        )));
    }
    let mut r = profile.target.clone();
    for (w, col) in weights.iter().zip(&profile.donors) {
        for (ri, c) in r.iter_mut().zip(col) {
            *ri -= w * c;
        }
    }
    Ok(r)
}

/// Simplex weights minimizing the semi-norm distance between the target
/// and the weighted donors.
pub fn solve_weights(profile: &VolatilityProfile, seminorm: &SemiNorm) -> Result<WeightSolution> {
    let n = profile.n();
    let p = profile.p();
    if n == 0 {
        return Err(Error::DimensionMismatch("no donors".into()));
    }
    let l = seminorm.factor(p)?;
    let a = &l * profile.donor_matrix();
    let b = &l * DVector::from_column_slice(&profile.target);

    let exact = simplex_least_squares(&a, &b);
    let exact_obj = (&a * DVector::from_column_slice(&exact) - &b).norm();

    // Second stage: a vanishing ridge selects the minimum-norm minimizer.
    let scale = (a.norm_squared() / n as f64).max(1.0);
    let ridge = (RIDGE * scale).sqrt();
    let mut a_aug = DMatrix::zeros(p + n, n);
    a_aug.view_mut((0, 0), (p, n)).copy_from(&a);
    for i in 0..n {
        a_aug[(p + i, i)] = ridge;
    }
    let mut b_aug = DVector::zeros(p + n);
    b_aug.rows_mut(0, p).copy_from(&b);
    let mut regularized = simplex_least_squares(&a_aug, &b_aug);
    // Remove the ridge bias: the exact minimum-norm solution on the
    // selected face, if it stays feasible.
    let top = regularized.iter().fold(0.0_f64, |m, v| m.max(*v));
    let support: Vec<usize> = (0..n).filter(|&i| regularized[i] > 1e-9 * top).collect();
    let on_face = face_solution(&a, &b, &support);
    if on_face.iter().all(|v| *v >= 0.0) {
        regularized = vec![0.0; n];
        for (&i, &v) in support.iter().zip(&on_face) {
            regularized[i] = v;
        }
    }
    let reg_obj = (&a * DVector::from_column_slice(&regularized) - &b).norm();

    let chosen = if reg_obj <= exact_obj + 1e-10 * (1.0 + exact_obj) { regularized } else { exact };
    let weights = clean_simplex(chosen);
    let objective = seminorm.norm(&residual(profile, &weights)?)?;
    let active_support = weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > SUPPORT_THRESHOLD)
        .map(|(i, _)| i)
        .collect();
    let unique_hint = n == 1 || {
        let reduced = &a * helmert(n);
        rank(&reduced) == n - 1
    };
    Ok(WeightSolution { weights, objective, unique_hint, active_support })
}

fn clean_simplex(mut w: Vec<f64>) -> Vec<f64> {
    for v in w.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        for v in w.iter_mut() {
            *v /= total;
        }
    }
    w
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.iter().fold(0.0_f64, |a, v| a.max(*v));
    let tol = max * 1e-10 * (m.nrows().max(m.ncols()) as f64);
    sv.iter().filter(|v| **v > tol).count()
}

/// Orthonormal basis (k × (k−1)) of the vectors summing to zero.
fn helmert(k: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(k, k.saturating_sub(1));
    for j in 1..k {
        let norm = ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            h[(i, j - 1)] = 1.0 / norm;
        }
        h[(j, j - 1)] = -(j as f64) / norm;
    }
    h
}

/// Minimum-norm least squares on the affine face `{x : Σx = 1}` spanned by
/// the columns in `free`.
fn face_solution(a: &DMatrix<f64>, b: &DVector<f64>, free: &[usize]) -> Vec<f64> {
    let k = free.len();
    if k == 1 {
        return vec![1.0];
    }
    let sub = DMatrix::from_fn(a.nrows(), k, |i, j| a[(i, free[j])]);
    let centre = DVector::from_element(k, 1.0 / k as f64);
    let basis = helmert(k);
    let reduced = &sub * &basis;
    let rhs = b - &sub * &centre;
    let svd = reduced.svd(true, true);
    let max_sv = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let eps = max_sv * 1e-12 * (a.nrows().max(k) as f64);
    let z = svd.solve(&rhs, eps).unwrap_or_else(|_| DVector::zeros(k - 1));
    let x = centre + basis * z;
    x.iter().copied().collect()
}

/// Active-set solver for `min ‖Ax − b‖²` over the probability simplex.
fn simplex_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<f64> {
    let n = a.ncols();
    let resid_of = |x: &[f64]| (a * DVector::from_column_slice(x) - b).norm_squared();

    // Start at the best vertex (lowest index on ties).
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for j in 0..n {
        let v = (a.column(j) - b).norm_squared();
        if v < best_val {
            best_val = v;
            best = j;
        }
    }
    let mut x = vec![0.0; n];
    x[best] = 1.0;
    let mut free = vec![best];

    let tol = 1e-12 * a.norm() * (a.norm() + b.norm()) + f64::MIN_POSITIVE;
    let mut last_added: Option<usize> = None;
    for _ in 0..(50 + 20 * n) {
        let z = face_solution(a, b, &free);
        if z.iter().all(|v| *v > 0.0) {
            for v in x.iter_mut() {
                *v = 0.0;
            }
            for (&i, &v) in free.iter().zip(&z) {
                x[i] = v;
            }
            let r = a * DVector::from_column_slice(&x) - b;
            let g = a.transpose() * r;
            let mu = free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64;
            let entering = (0..n)
                .filter(|j| !free.contains(j))
                .map(|j| (j, g[j] - mu))
                .min_by(|p, q| p.1.total_cmp(&q.1));
            match entering {
                Some((j, reduced)) if reduced < -tol => {
                    free.push(j);
                    free.sort_unstable();
                    last_added = Some(j);
                }
                _ => break,
            }
        } else {
            // Move toward the face optimum until a weight hits zero.
            let mut step = 1.0_f64;
            for (&i, &zi) in free.iter().zip(&z) {
                if zi <= 0.0 {
                    let denom = x[i] - zi;
                    if denom > 0.0 {
                        step = step.min(x[i] / denom);
                    }
                }
            }
            if step <= 0.0 {
                if let Some(j) = last_added.take() {
                    // The entering donor cannot move off zero: stop there.
                    free.retain(|&i| i != j);
                    if free.is_empty() {
                        free.push(j);
                    }
                    break;
                }
            }
            for (&i, &zi) in free.iter().zip(&z) {
                x[i] += step * (zi - x[i]);
            }
            let before = free.clone();
            free.retain(|&i| x[i] > 1e-15);
            for i in before {
                if !free.contains(&i) {
                    x[i] = 0.0;
                }
            }
            if free.is_empty() {
                let (i, _) = x.iter().enumerate().max_by(|p, q| p.1.total_cmp(q.1)).expect("n > 0");
                free.push(i);
            }
            let total: f64 = free.iter().map(|&i| x[i]).sum();
            for &i in &free {
                x[i] /= total;
            }
            last_added = None;
        }
    }
    debug_assert!(resid_of(&x).is_finite());
    x
}

/// `πᵀω̂*`: the similarity-weighted forecast adjustment.
pub fn aggregate_shock(solution: &WeightSolution, donor_effects: &[f64]) -> Result<f64> {
    weighted_sum(&solution.weights, donor_effects)
}

pub fn weighted_sum(weights: &[f64], donor_effects: &[f64]) -> Result<f64> {
    if weights.len() != donor_effects.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} donor effects",
            weights.len(),
            donor_effects.len()
        )));
    }
    Ok(weights.iter().zip(donor_effects).map(|(w, e)| w * e).sum())
}

/// Unweighted mean of the donor effects.
pub fn mean_aggregate(donor_effects: &[f64]) -> Result<f64> {
    if donor_effects.is_empty() {
        return Err(Error::DimensionMismatch("no donor effects".into()));
    }
    Ok(donor_effects.iter().sum::<f64>() / donor_effects.len() as f64)
}

/// Least squares of the donor effects on their covariates. A diagnostic
/// only: it weights covariates, not donors.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsContrast {
    /// Minimum-norm coefficients, one per covariate.
    pub coefficients: Vec<f64>,
    /// The coefficients applied to the target's covariates.
    pub implied_target_effect: f64,
}

pub fn ols_contrast(profile: &VolatilityProfile, donor_effects: &[f64]) -> Result<OlsContrast> {
    if donor_effects.len() != profile.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} donor effects for {} donors",
            donor_effects.len(),
            profile.n()
        )));
    }
    let design = profile.donor_matrix().transpose();
    let y = DVector::from_column_slice(donor_effects);
    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let eps = max_sv * 1e-12 * (design.nrows().max(design.ncols()) as f64);
    let w = svd.solve(&y, eps).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let implied = w.iter().zip(&profile.target).map(|(a, b)| a * b).sum();
    Ok(OlsContrast { coefficients: w.iter().copied().collect(), implied_target_effect: implied })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn three_donor_objective(profile: &VolatilityProfile, w1: f64, w2: f64) -> f64 {
        let w = [w1, w2, (1.0 - w1 - w2).max(0.0)];
        (0..profile.p())
            .map(|r| {
                let fit: f64 = (0..3).map(|c| w[c] * profile.donors[c][r]).sum();
                (profile.target[r] - fit).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Dense grid over the 3-simplex; independent of the active-set path.
    /// Returns the best value and its first two coordinates.
    fn grid_min(profile: &VolatilityProfile, step: f64) -> (f64, f64, f64) {
        let k = (1.0 / step).round() as usize;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=k {
            for j in 0..=(k - i) {
                let (w1, w2) = (i as f64 / k as f64, j as f64 / k as f64);
                let v = three_donor_objective(profile, w1, w2);
                if v < best.0 {
                    best = (v, w1, w2);
                }
            }
        }
        best
    }

    /// A twentyfold finer grid on the cell around a coarse optimum.
    fn refine(profile: &VolatilityProfile, coarse: (f64, f64, f64), step: f64) -> f64 {
        let fine = step / 20.0;
        let mut best = coarse.0;
        for i in -20..=20 {
            for j in -20..=20 {
                let w1 = coarse.1 + i as f64 * fine;
                let w2 = coarse.2 + j as f64 * fine;
                if w1 >= 0.0 && w2 >= 0.0 && w1 + w2 <= 1.0 {
                    best = best.min(three_donor_objective(profile, w1, w2));
                }
            }
        }
        best
    }

    #[test]
    fn standardize_row_examples() {
        let prof = VolatilityProfile::from_columns(vec![1.0, 5.0], vec![vec![2.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let z = standardize(&prof);
        assert_abs_diff_eq!(z.target[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.donors[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.donors[1][0], 1.0, epsilon = 1e-12);
        assert_eq!(z.constant_rows, vec![false, true]);
        assert_eq!(z.target[1], 0.0);
        assert!(z.donors.iter().all(|c| c[1] == 0.0));
        assert!(z.standardized);
        assert_eq!(z.raw.as_deref().unwrap().target, vec![1.0, 5.0]);
    }

    #[test]
    fn constant_row_of_four() {
        let prof = VolatilityProfile::from_columns(vec![5.0], vec![vec![5.0], vec![5.0], vec![5.0]]).unwrap();
        let z = standardize(&prof);
        assert_eq!(z.constant_rows, vec![true]);
        assert_eq!(z.target, vec![0.0]);
    }

    #[test]
    fn standardize_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let donors: Vec<Vec<f64>> = (0..4).map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let once = standardize(&VolatilityProfile::from_columns(target, donors).unwrap());
        let twice = standardize(&once);
        for (a, b) in once.target.iter().zip(&twice.target) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        for (ca, cb) in once.donors.iter().zip(&twice.donors) {
            for (a, b) in ca.iter().zip(cb) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
        // Each row has mean 0 and sample sd 1 across the four donors plus target.
        for i in 0..5 {
            let row: Vec<f64> = std::iter::once(once.target[i]).chain(once.donors.iter().map(|c| c[i])).collect();
            let mean = row.iter().sum::<f64>() / 5.0;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(var, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn target_equal_to_a_donor() {
        let prof = VolatilityProfile::from_columns(
            vec![0.3, -1.0, 2.0],
            vec![vec![1.0, 1.0, 1.0], vec![0.3, -1.0, 2.0], vec![-2.0, 0.5, 0.0]],
        )
        .unwrap();
        let sol = solve_weights(&prof, &SemiNorm::Identity).unwrap();
        assert_abs_diff_eq!(sol.weights[1], 1.0, epsilon = 1e-9);
        assert!(sol.objective < 1e-9);
        assert_eq!(sol.active_support, vec![1]);
    }

    #[test]
    fn midpoint_of_two_donors() {
        let a = vec![1.0, 0.0, 2.0];
        let b = vec![-1.0, 3.0, 0.0];
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let prof = VolatilityProfile::from_columns(mid, vec![a, b]).unwrap();
        let sol = solve_weights(&prof, &SemiNorm::Identity).unwrap();
        assert_abs_diff_eq!(sol.weights[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.weights[1], 0.5, epsilon = 1e-9);
        assert!(sol.objective < 1e-9);
        assert!(sol.unique_hint);
    }

    #[test]
    fn single_donor() {
        let prof = VolatilityProfile::from_columns(vec![1.0, 2.0], vec![vec![4.0, 6.0]]).unwrap();
        let sol = solve_weights(&prof, &SemiNorm::Identity).unwrap();
        assert_eq!(sol.weights, vec![1.0]);
        assert_abs_diff_eq!(sol.objective, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_donors_split_evenly() {
        let d = vec![1.0, -1.0];
        let prof = VolatilityProfile::from_columns(d.clone(), vec![d.clone(), d, vec![5.0, 5.0]]).unwrap();
        let sol = solve_weights(&prof, &SemiNorm::Identity).unwrap();
        assert_abs_diff_eq!(sol.weights[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.weights[1], 0.5, epsilon = 1e-6);
        assert!(sol.objective < 1e-8);
        assert!(!sol.unique_hint);
    }

    #[test]
    fn caratheodory_support_bound() {
        // p = 2 with n = 6 donors and a target inside the hull.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let donors: Vec<Vec<f64>> =
                (0..6).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
            let raw: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let target: Vec<f64> =
                (0..2).map(|r| donors.iter().zip(&raw).map(|(c, w)| c[r] * w / total).sum()).collect();
            let prof = VolatilityProfile::from_columns(target, donors).unwrap();
            let sol = solve_weights(&prof, &SemiNorm::Identity).unwrap();
            assert!(sol.objective < 1e-8);
            assert!(!sol.unique_hint);
        }
    }

    #[test]
    fn weighted_seminorm() {
        // Only the first coordinate counts.
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let prof = VolatilityProfile::from_columns(vec![0.0, 100.0], vec![vec![0.0, 0.0], vec![1.0, 100.0]]).unwrap();
        let sol = solve_weights(&prof, &SemiNorm::Matrix(s)).unwrap();
        assert_abs_diff_eq!(sol.weights[0], 1.0, epsilon = 1e-9);
        assert!(sol.objective < 1e-9);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            solve_weights(&prof, &SemiNorm::Matrix(bad)),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
        let wrong = DMatrix::identity(3, 3);
        assert!(matches!(solve_weights(&prof, &SemiNorm::Matrix(wrong)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn aggregate_examples() {
        let point = WeightSolution { weights: vec![1.0, 0.0, 0.0], objective: 0.0, unique_hint: true, active_support: vec![0] };
        assert_eq!(aggregate_shock(&point, &[2.5, 7.0, -1.0]).unwrap(), 2.5);
        let third = 1.0 / 3.0;
        assert_abs_diff_eq!(weighted_sum(&[third, third, third], &[3.0, 6.0, 9.0]).unwrap(), 6.0, epsilon = 1e-12);
        assert_eq!(weighted_sum(&[0.5, 0.5], &[0.0, 4.0]).unwrap(), 2.0);
        assert!(weighted_sum(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(mean_aggregate(&[3.0, 6.0, 9.0]).unwrap(), 6.0);
    }

    #[test]
    fn grid_oracle_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..25 {
            let p = rng.random_range(2..=6);
            let target: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let donors: Vec<Vec<f64>> = (0..3).map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let prof = VolatilityProfile::from_columns(target, donors).unwrap();
            let sol = solve_weights(&prof, &SemiNorm::Identity).unwrap();
            let coarse = grid_min(&prof, 0.005);
            assert!(sol.objective <= coarse.0 + 1e-12);
            // Near-zero optima sit between grid points; resolve them finer.
            let oracle = if coarse.0 - sol.objective > 1e-3 { refine(&prof, coarse, 0.005) } else { coarse.0 };
            assert!(oracle - sol.objective <= 1e-3, "{} vs {}", oracle, sol.objective);
        }
    }

    #[test]
    fn outlier_donor_shifts_remaining_weights() {
        let prof = VolatilityProfile::from_columns(
            vec![0.2, 0.1, 0.3],
            vec![vec![0.0, 0.5, 0.2], vec![0.5, -0.2, 0.4], vec![40.0, 35.0, -50.0]],
        )
        .unwrap();
        let full = solve_weights(&standardize(&prof), &SemiNorm::Identity).unwrap();
        let dropped = solve_weights(&standardize(&prof.without_donor(2).unwrap()), &SemiNorm::Identity).unwrap();
        assert!((full.weights[0] - dropped.weights[0]).abs() > 1e-3);
    }

    #[test]
    fn singular_value_shares_sum_to_one() {
        let prof = VolatilityProfile::from_columns(
            vec![0.0; 3],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]],
        )
        .unwrap();
        let shares = prof.singular_value_shares();
        assert_abs_diff_eq!(shares[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(shares[1], 2.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(shares.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ols_contrast_exact_fit() {
        // Effects are exactly 2 * first covariate.
        let prof = VolatilityProfile::from_columns(
            vec![1.5, 0.0],
            vec![vec![1.0, 0.0], vec![2.0, 1.0], vec![3.0, -1.0]],
        )
        .unwrap();
        let c = ols_contrast(&prof, &[2.0, 4.0, 6.0]).unwrap();
        assert_abs_diff_eq!(c.coefficients[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c.implied_target_effect, 3.0, epsilon = 1e-10);
    }

    #[test]
    fn profile_validation() {
        assert!(VolatilityProfile::from_columns(vec![1.0], vec![]).is_err());
        assert!(VolatilityProfile::from_columns(vec![1.0], vec![vec![1.0, 2.0]]).is_err());
        assert!(VolatilityProfile::from_columns(vec![f64::NAN], vec![vec![1.0]]).is_err());
    }

    fn random_problem() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
        (2usize..6, 2usize..6).prop_flat_map(|(p, n)| {
            (
                proptest::collection::vec(-3.0f64..3.0, p),
                proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, p), n),
            )
        })
    }

    proptest! {
        #[test]
        fn weights_are_feasible_and_objective_consistent((target, donors) in random_problem()) {
            let prof = VolatilityProfile::from_columns(target, donors).unwrap();
            let sol = solve_weights(&prof, &SemiNorm::Identity).unwrap();
            prop_assert!(sol.weights.iter().all(|w| *w >= 0.0));
            prop_assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let recomputed = SemiNorm::Identity.norm(&residual(&prof, &sol.weights).unwrap()).unwrap();
            prop_assert!((recomputed - sol.objective).abs() < 1e-9);
        }

        #[test]
        fn hull_targets_are_matched(
            (target_seed, donors) in random_problem(),
        ) {
            let raw: Vec<f64> = donors.iter().enumerate().map(|(i, _)| 0.1 + (target_seed[i % target_seed.len()].abs())).collect();
            let total: f64 = raw.iter().sum();
            let p = donors[0].len();
            let target: Vec<f64> = (0..p).map(|r| donors.iter().zip(&raw).map(|(c, w)| c[r] * w / total).sum()).collect();
            let prof = VolatilityProfile::from_columns(target, donors).unwrap();
            let sol = solve_weights(&prof, &SemiNorm::Identity).unwrap();
            prop_assert!(sol.objective < 1e-8, "objective {}", sol.objective);
        }

        #[test]
        fn permuting_donors_permutes_weights((target, donors) in random_problem(), rot in 0usize..5) {
            let n = donors.len();
            let rot = rot % n;
            let mut perm = donors.clone();
            perm.rotate_left(rot);
            let a = solve_weights(&VolatilityProfile::from_columns(target.clone(), donors).unwrap(), &SemiNorm::Identity).unwrap();
            let b = solve_weights(&VolatilityProfile::from_columns(target, perm).unwrap(), &SemiNorm::Identity).unwrap();
            for i in 0..n {
                prop_assert!((a.weights[(i + rot) % n] - b.weights[i]).abs() < 1e-7);
            }
        }

        #[test]
        fn row_scaling_is_absorbed_by_standardization((target, donors) in random_problem(), row in 0usize..6) {
            let p = target.len();
            let row = row % p;
            let mut t2 = target.clone();
            let mut d2 = donors.clone();
            t2[row] *= 1000.0;
            for c in d2.iter_mut() {
                c[row] *= 1000.0;
            }
            let a = solve_weights(&standardize(&VolatilityProfile::from_columns(target, donors).unwrap()), &SemiNorm::Identity).unwrap();
            let b = solve_weights(&standardize(&VolatilityProfile::from_columns(t2, d2).unwrap()), &SemiNorm::Identity).unwrap();
            for (x, y) in a.weights.iter().zip(&b.weights) {
                prop_assert!((x - y).abs() < 1e-7);
            }
        }
    }
}
