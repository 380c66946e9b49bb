//! OLS, exactly identified IV/GMM and LIML with cluster-robust covariance.
//!
//! Every estimator works in the orthonormal coordinates of the regressor matrix
//! `X = [X_endog, X_exog] = Q_x R`. The κ-class normal equations are written as
//! `(P'P + (1-κ) M'M) γ = P'y + (1-κ) M'y` with `P = P_Z Q_x`, `M = M_Z Q_x` and
//! `β = R⁻¹γ`, which avoids forming `I - κ M_Z` when κ is close to one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Basis};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ols,
    IvGmm,
    Liml,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ols => "ols",
            Method::IvGmm => "iv_gmm",
            Method::Liml => "liml",
        })
    }
}

/// Outcome, regressors, excluded instruments and cluster labels for one specification.
#[derive(Debug, Clone)]
pub struct DesignMatrices<T: Real> {
    pub y: DVector<T>,
    pub x_endog: DMatrix<T>,
    pub x_exog: DMatrix<T>,
    pub z_excl: DMatrix<T>,
    pub endog_names: Vec<String>,
    pub exog_names: Vec<String>,
    pub instrument_names: Vec<String>,
    cluster: Vec<usize>,
    n_clusters: usize,
}

impl<T: Real> DesignMatrices<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<K: Ord + Clone>(
        y: DVector<T>,
        x_endog: DMatrix<T>,
        endog_names: Vec<String>,
        x_exog: DMatrix<T>,
        exog_names: Vec<String>,
        z_excl: DMatrix<T>,
        instrument_names: Vec<String>,
        cluster_keys: &[K],
    ) -> Result<Self> {
        let n = y.len();
        let check = |what: &str, rows: usize, cols: usize, names: usize| -> Result<()> {
            if rows != n {
                return Err(Error::Invalid(format!("{what} has {rows} rows, outcome has {n}")));
            }
            if cols != names {
                return Err(Error::Invalid(format!("{what} has {cols} columns but {names} names")));
            }
            Ok(())
        };
        check("X_endog", x_endog.nrows(), x_endog.ncols(), endog_names.len())?;
        check("X_exog", x_exog.nrows(), x_exog.ncols(), exog_names.len())?;
        check("Z_excl", z_excl.nrows(), z_excl.ncols(), instrument_names.len())?;
        if cluster_keys.len() != n {
            return Err(Error::Invalid(format!(
                "{} cluster ids for {n} observations",
                cluster_keys.len()
            )));
        }
        let finite = y.iter().all(|v| v.is_finite())
            && x_endog.iter().all(|v| v.is_finite())
            && x_exog.iter().all(|v| v.is_finite())
            && z_excl.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Invalid("design contains non-finite entries".into()));
        }
        if n <= x_endog.ncols() + x_exog.ncols() {
            return Err(Error::Invalid(format!(
                "need more than {} observations, have {n}",
                x_endog.ncols() + x_exog.ncols()
            )));
        }
        let (cluster, n_clusters) = linalg::dense_labels(cluster_keys);
        Ok(DesignMatrices {
            y,
            x_endog,
            x_exog,
            z_excl,
            endog_names,
            exog_names,
            instrument_names,
            cluster,
            n_clusters,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn k1(&self) -> usize {
        self.x_endog.ncols()
    }
    pub fn k2(&self) -> usize {
        self.x_exog.ncols()
    }
    pub fn m(&self) -> usize {
        self.z_excl.ncols()
    }
    /// Dense cluster labels `0..n_clusters`.
    pub fn cluster(&self) -> &[usize] {
        &self.cluster
    }
    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// Regressor names in coefficient order: endogenous first, then exogenous.
    pub fn regressor_names(&self) -> Vec<String> {
        self.endog_names.iter().chain(&self.exog_names).cloned().collect()
    }

    pub fn regressors(&self) -> DMatrix<T> {
        linalg::hstack(self.n(), &[&self.x_endog, &self.x_exog])
    }
}

/// Estimated coefficients, covariance and residuals of one fit.
#[derive(Debug, Clone)]
pub struct FitResult<T: Real> {
    pub method: Method,
    /// Coefficient names: endogenous regressors first, then exogenous.
    pub names: Vec<String>,
    pub coef: DVector<T>,
    pub vcov: DMatrix<T>,
    pub residuals: DVector<T>,
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
    /// Excluded instruments retained after rank pruning.
    pub m: usize,
    pub n_clusters: usize,
    pub kappa: Option<T>,
    pub dropped_instruments: Vec<String>,
}

impl<T: Real> FitResult<T> {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
    pub fn coef_of(&self, name: &str) -> Option<T> {
        self.index_of(name).map(|i| self.coef[i])
    }
    pub fn se(&self, i: usize) -> T {
        self.vcov[(i, i)].max(T::zero()).sqrt()
    }
    pub fn se_of(&self, name: &str) -> Option<T> {
        self.index_of(name).map(|i| self.se(i))
    }
}

/// Orthonormal bases shared by the estimators and diagnostics.
#[derive(Debug, Clone)]
pub(crate) struct Prepared<T: Real> {
    pub q_exog: DMatrix<T>,
    /// Basis of the excluded instruments after removing the exogenous span.
    pub q_extra: DMatrix<T>,
    pub q_z: DMatrix<T>,
    pub kept_instruments: Vec<usize>,
    pub dropped_instruments: Vec<String>,
    pub x: DMatrix<T>,
    pub q_x: DMatrix<T>,
    pub r_x: DMatrix<T>,
}

pub(crate) fn prepare<T: Real>(d: &DesignMatrices<T>) -> Result<Prepared<T>> {
    let tol = linalg::rank_tol::<T>();
    let exog = linalg::orthonormalize(&d.x_exog, None, tol);
    if let Some(&j) = exog.dropped.first() {
        return Err(Error::RankDeficient {
            column: d.exog_names[j].clone(),
        });
    }
    let extra = linalg::orthonormalize(&d.z_excl, Some(&exog.q), tol);
    let x = d.regressors();
    let Basis {
        q: q_x,
        r: r_x,
        dropped,
        ..
    } = linalg::orthonormalize(&x, None, tol);
    if let Some(&j) = dropped.first() {
        return Err(Error::RankDeficient {
            column: d.regressor_names()[j].clone(),
        });
    }
    let q_z = linalg::hstack(d.n(), &[&exog.q, &extra.q]);
    Ok(Prepared {
        q_exog: exog.q,
        q_extra: extra.q,
        q_z,
        dropped_instruments: extra
            .dropped
            .iter()
            .map(|&j| d.instrument_names[j].clone())
            .collect(),
        kept_instruments: extra.kept,
        x,
        q_x,
        r_x,
    })
}

/// Finite-sample factor of the cluster-robust covariance, `G/(G-1) · (n-1)/(n-k)`.
pub fn cluster_correction(n: usize, k: usize, n_clusters: usize) -> f64 {
    let g = n_clusters as f64;
    (g / (g - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64))
}

/// Sandwich `c · R⁻¹ C⁻¹ (Σ_g b_g b_g') C⁻¹ R⁻ᵀ` with `b_g = Σ_{i∈g} score_i u_i`.
fn sandwich<T: Real>(
    d: &DesignMatrices<T>,
    r_x: &DMatrix<T>,
    bread: &DMatrix<T>,
    score_basis: &DMatrix<T>,
    u: &DVector<T>,
) -> Result<DMatrix<T>> {
    if d.n_clusters() < 2 {
        return Err(Error::Invalid(
            "cluster-robust covariance needs at least two clusters".into(),
        ));
    }
    let k = r_x.nrows();
    let c_inv = bread
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("κ-class bread matrix".into()))?;
    let a = r_x
        .solve_upper_triangular(&c_inv)
        .ok_or_else(|| Error::Singular("regressor triangular factor".into()))?;
    let s = linalg::cluster_scores(score_basis, u, d.cluster(), d.n_clusters());
    let meat = s.transpose() * s;
    let c = T::lit(cluster_correction(d.n(), k, d.n_clusters()));
    let mut v = (&a * meat * a.transpose()) * c;
    linalg::symmetrize(&mut v);
    Ok(v)
}

struct KClassParts<T: Real> {
    p: DMatrix<T>,
    m: DMatrix<T>,
}

fn kclass_parts<T: Real>(prep: &Prepared<T>) -> KClassParts<T> {
    let p = if prep.q_z.ncols() == 0 {
        DMatrix::zeros(prep.q_x.nrows(), prep.q_x.ncols())
    } else {
        &prep.q_z * (prep.q_z.transpose() * &prep.q_x)
    };
    let m = &prep.q_x - &p;
    KClassParts { p, m }
}

fn kclass_bread<T: Real>(parts: &KClassParts<T>, kappa: T) -> DMatrix<T> {
    let one_minus = T::one() - kappa;
    let mut c = parts.p.transpose() * &parts.p;
    if one_minus != T::zero() {
        c += parts.m.transpose() * &parts.m * one_minus;
    }
    linalg::symmetrize(&mut c);
    c
}

fn kclass_fit<T: Real>(
    d: &DesignMatrices<T>,
    prep: &Prepared<T>,
    kappa: T,
    method: Method,
) -> Result<FitResult<T>> {
    let (bread, rhs, score_basis) = if method == Method::Ols {
        (
            DMatrix::identity(prep.q_x.ncols(), prep.q_x.ncols()),
            prep.q_x.transpose() * &d.y,
            prep.q_x.clone(),
        )
    } else {
        let parts = kclass_parts(prep);
        let mut rhs = parts.p.transpose() * &d.y;
        let one_minus = T::one() - kappa;
        if one_minus != T::zero() {
            rhs += parts.m.transpose() * &d.y * one_minus;
        }
        (kclass_bread(&parts, kappa), rhs, parts.p)
    };
    let gamma = bread
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("κ-class normal equations".into()))?;
    let coef = prep
        .r_x
        .solve_upper_triangular(&gamma)
        .ok_or_else(|| Error::Singular("regressor triangular factor".into()))?;
    finish(d, prep, coef, &bread, &score_basis, method, (method == Method::Liml).then_some(kappa))
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    d: &DesignMatrices<T>,
    prep: &Prepared<T>,
    coef: DVector<T>,
    bread: &DMatrix<T>,
    score_basis: &DMatrix<T>,
    method: Method,
    kappa: Option<T>,
) -> Result<FitResult<T>> {
    let residuals = &d.y - &prep.x * &coef;
    let vcov = sandwich(d, &prep.r_x, bread, score_basis, &residuals)?;
    Ok(FitResult {
        method,
        names: d.regressor_names(),
        coef,
        vcov,
        residuals,
        n: d.n(),
        k1: d.k1(),
        k2: d.k2(),
        m: if method == Method::Ols {
            0
        } else {
            prep.kept_instruments.len()
        },
        n_clusters: d.n_clusters(),
        kappa,
        dropped_instruments: if method == Method::Ols {
            Vec::new()
        } else {
            prep.dropped_instruments.clone()
        },
    })
}

/// Least squares of `y` on `[X_endog, X_exog]` with cluster-robust covariance.
pub fn fit_ols<T: Real>(d: &DesignMatrices<T>) -> Result<FitResult<T>> {
    let prep = prepare(d)?;
    kclass_fit(d, &prep, T::zero(), Method::Ols)
}

/// Exactly identified IV: `β = (Z'X)⁻¹ Z'y` with `Z = [X_exog, Z_excl]`.
pub fn fit_iv_gmm<T: Real>(d: &DesignMatrices<T>) -> Result<FitResult<T>> {
    let prep = prepare(d)?;
    let m = prep.kept_instruments.len();
    if m < d.k1() {
        return Err(Error::Underidentified {
            instruments: m,
            endogenous: d.k1(),
        });
    }
    if m > d.k1() {
        return Err(Error::NotExactlyIdentified {
            instruments: m,
            endogenous: d.k1(),
        });
    }
    let zx = prep.q_z.transpose() * &prep.x;
    let zy = prep.q_z.transpose() * &d.y;
    let coef = zx
        .lu()
        .solve(&zy)
        .ok_or_else(|| Error::Singular("Z'X".into()))?;
    let parts = kclass_parts(&prep);
    let bread = kclass_bread(&parts, T::one());
    finish(d, &prep, coef, &bread, &parts.p, Method::IvGmm, None)
}

/// Smallest root κ of `det(W'M_{X_exog}W - κ W'M_Z W) = 0` with `W = [y, X_endog]`.
pub(crate) fn liml_kappa<T: Real>(d: &DesignMatrices<T>, prep: &Prepared<T>) -> Result<T> {
    let y = DMatrix::from_column_slice(d.n(), 1, d.y.as_slice());
    let w = linalg::hstack(d.n(), &[&y, &d.x_endog]);
    let wz = linalg::residualize(&prep.q_z, &w);
    let wx = linalg::residualize(&prep.q_exog, &w);
    let a = wz.transpose() * &wz;
    let b = wx.transpose() * &wx;
    let chol = nalgebra::Cholesky::new(a)
        .ok_or_else(|| Error::Singular("W'M_Z W in the LIML eigenproblem".into()))?;
    let l = chol.l();
    let dim = l.nrows();
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(dim, dim))
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    let s = &l_inv * b * l_inv.transpose();
    let (vals, _) = linalg::sym_eigen(&s)?;
    let kappa = vals[0];
    if !kappa.is_finite() || kappa < T::one() - T::tol(1e-6) {
        return Err(Error::Numerical(format!(
            "LIML eigenvalue {kappa} below one: degenerate design"
        )));
    }
    Ok(kappa.max(T::one()))
}

/// Limited-information maximum likelihood, the κ-class estimator with κ from [`liml_kappa`].
pub fn fit_liml<T: Real>(d: &DesignMatrices<T>) -> Result<FitResult<T>> {
    let prep = prepare(d)?;
    let m = prep.kept_instruments.len();
    if m < d.k1() {
        return Err(Error::Underidentified {
            instruments: m,
            endogenous: d.k1(),
        });
    }
    let kappa = liml_kappa(d, &prep)?;
    kclass_fit(d, &prep, kappa, Method::Liml)
}

/// Recompute the cluster-robust covariance of `fit` on `d`.
pub fn cluster_cov<T: Real>(fit: &FitResult<T>, d: &DesignMatrices<T>) -> Result<DMatrix<T>> {
    let prep = prepare(d)?;
    if fit.coef.len() != prep.x.ncols() {
        return Err(Error::Invalid("fit does not match the design".into()));
    }
    let u = &d.y - &prep.x * &fit.coef;
    match fit.method {
        Method::Ols => {
            let k = prep.q_x.ncols();
            sandwich(d, &prep.r_x, &DMatrix::identity(k, k), &prep.q_x, &u)
        }
        Method::IvGmm | Method::Liml => {
            let parts = kclass_parts(&prep);
            let bread = kclass_bread(&parts, fit.kappa.unwrap_or(T::one()));
            sandwich(d, &prep.r_x, &bread, &parts.p, &u)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn names(prefix: &str, k: usize) -> Vec<String> {
        (0..k).map(|i| format!("{prefix}{i}")).collect()
    }

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn own_clusters(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    fn design(
        y: DVector<f64>,
        xe: DMatrix<f64>,
        xx: DMatrix<f64>,
        z: DMatrix<f64>,
        cl: &[usize],
    ) -> DesignMatrices<f64> {
        let (k1, k2, m) = (xe.ncols(), xx.ncols(), z.ncols());
        DesignMatrices::new(y, xe, names("x", k1), xx, names("c", k2), z, names("z", m), cl).unwrap()
    }

    /// Endogenous x with two exogenous columns and `m` instruments.
    fn iv_fixture(seed: u64, n: usize, m: usize) -> DesignMatrices<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = randn(&mut rng, n, m);
        let mut xx = randn(&mut rng, n, 2);
        xx.column_mut(0).fill(1.0);
        let e = randn(&mut rng, n, 1);
        let v = randn(&mut rng, n, 1);
        let x = DMatrix::from_fn(n, 1, |i, _| {
            z.row(i).sum() * 0.5 + 0.3 * xx[(i, 1)] + v[(i, 0)] + 0.5 * e[(i, 0)]
        });
        let y = DVector::from_fn(n, |i, _| 1.0 + 2.0 * x[(i, 0)] - xx[(i, 1)] + e[(i, 0)]);
        let cl: Vec<usize> = (0..n).map(|i| i / 3).collect();
        design(y, x, xx, z, &cl)
    }

    #[test]
    fn ols_recovers_exact_linear_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = randn(&mut rng, 30, 3);
        x.column_mut(2).fill(1.0);
        let beta = DVector::from_vec(vec![0.7, -1.3, 2.5]);
        let y = &x * &beta;
        let d = design(y, x.columns(0, 2).into_owned(), x.columns(2, 1).into_owned(), DMatrix::zeros(30, 0), &own_clusters(30));
        let fit = fit_ols(&d).unwrap();
        assert!((fit.coef - beta).abs().max() < 1e-10);
    }

    #[test]
    fn ols_slopes_zero_for_orthogonal_outcome() {
        // y is orthogonal to the centred slope column
        let x = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let y = DVector::from_vec(vec![3.0, 3.0, 5.0, 5.0]);
        let d = design(y, x, DMatrix::from_element(4, 1, 1.0), DMatrix::zeros(4, 0), &own_clusters(4));
        let fit = fit_ols(&d).unwrap();
        assert!(fit.coef[0].abs() < 1e-14);
        assert!((fit.coef[1] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn ols_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = randn(&mut rng, 50, 3);
        let y = DVector::from_fn(50, |_, _| rng.sample::<f64, _>(StandardNormal));
        let oracle = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
        let d = design(y, x.columns(0, 1).into_owned(), x.columns(1, 2).into_owned(), DMatrix::zeros(50, 0), &own_clusters(50));
        let fit = fit_ols(&d).unwrap();
        assert!((fit.coef - oracle).abs().max() < 1e-12);
        let xtu = d.regressors().transpose() * &fit.residuals;
        assert!(xtu.abs().max() < 1e-10);
    }

    #[test]
    fn rank_deficient_regressor_is_named() {
        let x = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 6.0]);
        let exog = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { 2.0 * x[(i, 0)] });
        let d = design(DVector::from_element(5, 1.0), x, exog, DMatrix::zeros(5, 0), &own_clusters(5));
        match fit_ols(&d) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "c1"),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn scalar_iv_is_ratio_of_cross_products() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = DMatrix::from_column_slice(6, 1, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let z = DMatrix::from_column_slice(6, 1, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let zy: f64 = (0..6).map(|i| z[(i, 0)] * y[i]).sum();
        let zx: f64 = (0..6).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        let d = design(y, x, DMatrix::zeros(6, 0), z, &own_clusters(6));
        let fit = fit_iv_gmm(&d).unwrap();
        assert!((fit.coef[0] - zy / zx).abs() < 1e-12);
    }

    #[test]
    fn iv_with_own_regressors_is_ols() {
        let d = iv_fixture(3, 200, 1);
        let own = design(d.y.clone(), d.x_endog.clone(), d.x_exog.clone(), d.x_endog.clone(), d.cluster());
        let iv = fit_iv_gmm(&own).unwrap();
        let ols = fit_ols(&own).unwrap();
        assert!((iv.coef - ols.coef).abs().max() < 1e-10);
    }

    #[test]
    fn iv_moments_hold_and_scale_invariant() {
        let d = iv_fixture(4, 150, 1);
        let fit = fit_iv_gmm(&d).unwrap();
        let z = linalg::hstack(d.n(), &[&d.x_exog, &d.z_excl]);
        assert!((z.transpose() * &fit.residuals).abs().max() < 1e-9);
        let mut scaled = d.clone();
        scaled.z_excl *= 1000.0;
        let fit2 = fit_iv_gmm(&scaled).unwrap();
        assert!((fit.coef - fit2.coef).abs().max() < 1e-10);
    }

    #[test]
    fn gmm_rejects_overidentified() {
        let d = iv_fixture(5, 100, 3);
        assert!(matches!(fit_iv_gmm(&d), Err(Error::NotExactlyIdentified { .. })));
    }

    #[test]
    fn exactly_identified_liml_is_gmm() {
        let d = iv_fixture(6, 300, 1);
        let liml = fit_liml(&d).unwrap();
        let gmm = fit_iv_gmm(&d).unwrap();
        assert!((liml.kappa.unwrap() - 1.0).abs() < 1e-8);
        assert!((liml.coef - gmm.coef).abs().max() < 1e-8);
    }

    #[test]
    fn liml_matches_brute_force_kappa_scan() {
        // single endogenous regressor, intercept only exogenous, three instruments
        let d = iv_fixture(8, 40, 3);
        let d = design(d.y.clone(), d.x_endog.clone(), d.x_exog.columns(0, 1).into_owned(), d.z_excl.clone(), d.cluster());
        let n = d.n();
        let annihilator = |a: &DMatrix<f64>| {
            DMatrix::identity(n, n) - a * (a.transpose() * a).try_inverse().unwrap() * a.transpose()
        };
        let z = linalg::hstack(n, &[&d.x_exog, &d.z_excl]);
        let mz = annihilator(&z);
        let mx = annihilator(&d.x_exog);
        let w = DMatrix::from_fn(n, 2, |i, j| if j == 0 { d.y[i] } else { d.x_endog[(i, 0)] });
        let a = w.transpose() * &mz * &w;
        let b = w.transpose() * &mx * &w;
        // roots of det(B - κA) = 0 by the quadratic formula
        let qa = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(0, 1)];
        let qb = -(b[(0, 0)] * a[(1, 1)] + b[(1, 1)] * a[(0, 0)] - 2.0 * b[(0, 1)] * a[(0, 1)]);
        let qc = b[(0, 0)] * b[(1, 1)] - b[(0, 1)] * b[(0, 1)];
        let disc = (qb * qb - 4.0 * qa * qc).sqrt();
        let kappa = ((-qb - disc) / (2.0 * qa)).min((-qb + disc) / (2.0 * qa));
        let x = d.regressors();
        let k = DMatrix::identity(n, n) - &mz * kappa;
        let beta = (x.transpose() * &k * &x).try_inverse().unwrap() * x.transpose() * &k * &d.y;

        let fit = fit_liml(&d).unwrap();
        assert!((fit.kappa.unwrap() - kappa).abs() < 1e-9 * kappa);
        assert!((fit.coef - beta).abs().max() < 1e-8);
        assert!(kappa >= 1.0);
    }

    #[test]
    fn duplicate_instrument_is_pruned() {
        let d = iv_fixture(9, 120, 3);
        let base = fit_liml(&d).unwrap();
        let z = linalg::hstack(d.n(), &[&d.z_excl, &d.z_excl.columns(1, 1).into_owned()]);
        let dup = design(d.y.clone(), d.x_endog.clone(), d.x_exog.clone(), z, d.cluster());
        let fit = fit_liml(&dup).unwrap();
        assert_eq!(fit.dropped_instruments, vec!["z3".to_string()]);
        assert_eq!(fit.m, 3);
        assert!((fit.coef - base.coef).abs().max() < 1e-9);
    }

    #[test]
    fn singleton_clusters_give_hc1() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 60;
        let mut x = randn(&mut rng, n, 3);
        x.column_mut(2).fill(1.0);
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] + rng.sample::<f64, _>(StandardNormal));
        let d = design(y, x.columns(0, 2).into_owned(), x.columns(2, 1).into_owned(), DMatrix::zeros(n, 0), &own_clusters(n));
        let fit = fit_ols(&d).unwrap();
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let mut meat = DMatrix::zeros(3, 3);
        for i in 0..n {
            let xi = x.row(i).transpose();
            meat += &xi * xi.transpose() * fit.residuals[i].powi(2);
        }
        let oracle = &xtx_inv * meat * &xtx_inv * (n as f64 / (n as f64 - 3.0));
        assert!((fit.vcov - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn zero_residuals_give_zero_covariance() {
        let x = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 4.0, 8.0, 3.0]);
        let y = DVector::from_fn(5, |i, _| 2.0 * x[(i, 0)] + 1.0);
        let d = design(y, x, DMatrix::from_element(5, 1, 1.0), DMatrix::zeros(5, 0), &[0, 0, 1, 1, 2]);
        let fit = fit_ols(&d).unwrap();
        assert!(fit.vcov.abs().max() < 1e-24);
    }

    #[test]
    fn cluster_relabeling_leaves_covariance_unchanged() {
        let d = iv_fixture(11, 90, 2);
        let relabeled: Vec<usize> = d.cluster().iter().map(|&g| 1000 - 7 * g).collect();
        let d2 = design(d.y.clone(), d.x_endog.clone(), d.x_exog.clone(), d.z_excl.clone(), &relabeled);
        let a = fit_liml(&d).unwrap();
        let b = fit_liml(&d2).unwrap();
        assert!((a.vcov - b.vcov).abs().max() < 1e-14);
    }

    #[test]
    fn single_cluster_is_rejected() {
        let d = iv_fixture(12, 30, 1);
        let d1 = design(d.y.clone(), d.x_endog.clone(), d.x_exog.clone(), d.z_excl.clone(), &vec![0; 30]);
        assert!(fit_ols(&d1).is_err());
    }

    #[test]
    fn cluster_cov_reproduces_fit_covariance() {
        let d = iv_fixture(13, 90, 3);
        let fit = fit_liml(&d).unwrap();
        let v = cluster_cov(&fit, &d).unwrap();
        assert!((v - &fit.vcov).abs().max() < 1e-14);
    }

    #[test]
    fn single_precision_tracks_double() {
        let d = iv_fixture(14, 200, 3);
        let cast = |m: &DMatrix<f64>| m.map(|v| v as f32);
        let d32 = DesignMatrices::<f32>::new(
            d.y.map(|v| v as f32),
            cast(&d.x_endog),
            d.endog_names.clone(),
            cast(&d.x_exog),
            d.exog_names.clone(),
            cast(&d.z_excl),
            d.instrument_names.clone(),
            d.cluster(),
        )
        .unwrap();
        let f64_fit = fit_liml(&d).unwrap();
        let f32_fit = fit_liml(&d32).unwrap();
        for i in 0..f64_fit.coef.len() {
            assert!((f64_fit.coef[i] - f32_fit.coef[i] as f64).abs() < 1e-3);
        }
    }
}
