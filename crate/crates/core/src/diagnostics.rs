//! Over-identification, under-identification, weak-instrument and endogeneity tests.
//!
//! The rank statistics follow the Kleibergen-Paap construction in orthonormal
//! instrument coordinates: with `Q` an orthonormal basis of the excluded
//! instruments after partialling out `X_exog`, the reduced-form coefficients are
//! `Θ₀ = Q'Ỹ` and the normalized matrix is `Θ = Θ₀ F'` where `F'F = Σ̂⁻¹`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, cluster_correction, DesignMatrices, FitResult, Method};
use crate::linalg;
use crate::scalar::Real;
use crate::stats::chi2_sf;

/// Weighting used for the covariance of the reduced-form coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    #[default]
    ClusterRobust,
    /// Conditionally homoskedastic weighting; gives the Cragg-Donald and
    /// Anderson canonical-correlation forms.
    Homoskedastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestStat {
    pub stat: f64,
    pub df: usize,
    pub p: f64,
}

impl TestStat {
    fn chi2(stat: f64, df: usize) -> Self {
        TestStat {
            stat,
            df,
            p: chi2_sf(stat, df),
        }
    }
}

/// Over-identification statistic; `p` is absent when the model is exactly identified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HansenJ {
    pub stat: f64,
    pub df: usize,
    pub p: Option<f64>,
    /// The moment covariance was singular and a pseudo-inverse was used.
    pub pinv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hausman {
    pub test: TestStat,
    pub pinv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Absent when exactly identified.
    pub hansen_j: Option<TestStat>,
    pub hansen_j_pinv: bool,
    pub underid: TestStat,
    pub kp_wald_f: f64,
    pub ap_partial_f: Vec<(String, f64)>,
    pub hausman: TestStat,
    pub hausman_pinv: bool,
}

impl DiagnosticsReport {
    pub fn hj_p(&self) -> Option<f64> {
        self.hansen_j.map(|t| t.p)
    }
}

/// First-stage quantities shared by the rank statistics and the AP partial F.
#[derive(Debug, Clone)]
pub struct ReducedForm<T: Real> {
    /// Orthonormal basis of the partialled excluded instruments, `n × m`.
    pub q: DMatrix<T>,
    /// Endogenous regressors with `X_exog` partialled out, `n × k₁`.
    pub y_tilde: DMatrix<T>,
    /// First-stage residuals `M_Z X_endog`.
    pub v_hat: DMatrix<T>,
    /// Reduced-form coefficients in the orthonormal instrument coordinates, `m × k₁`.
    pub coef: DMatrix<T>,
    pub endog_names: Vec<String>,
    n: usize,
    k2: usize,
    cluster: Vec<usize>,
    n_clusters: usize,
}

impl<T: Real> ReducedForm<T> {
    pub fn m(&self) -> usize {
        self.q.ncols()
    }
    pub fn k1(&self) -> usize {
        self.y_tilde.ncols()
    }

    fn wald_correction(&self) -> T {
        T::lit(cluster_correction(self.n, self.k2 + self.m(), self.n_clusters))
    }
}

pub fn reduced_form<T: Real>(d: &DesignMatrices<T>) -> Result<ReducedForm<T>> {
    let prep = estimators::prepare(d)?;
    let y_tilde = linalg::residualize(&prep.q_exog, &d.x_endog);
    let coef = prep.q_extra.transpose() * &y_tilde;
    let v_hat = &y_tilde - &prep.q_extra * &coef;
    Ok(ReducedForm {
        q: prep.q_extra,
        y_tilde,
        v_hat,
        coef,
        endog_names: d.endog_names.clone(),
        n: d.n(),
        k2: d.k2(),
        cluster: d.cluster().to_vec(),
        n_clusters: d.n_clusters(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RankForm {
    Wald,
    Lm,
}

/// Rank statistic for `rank(Π) = k₁ - 1`; returns the statistic and its df `m - k₁ + 1`.
fn rank_stat<T: Real>(rf: &ReducedForm<T>, form: RankForm, kind: CovarianceKind) -> Result<(T, usize)> {
    let (k1, m) = (rf.k1(), rf.m());
    if k1 == 0 || m < k1 {
        return Err(Error::Underidentified {
            instruments: m,
            endogenous: k1,
        });
    }
    let (resid, sigma) = match form {
        RankForm::Wald => {
            let dof = rf.n as f64 - (rf.k2 + m) as f64;
            (&rf.v_hat, rf.v_hat.transpose() * &rf.v_hat / T::lit(dof))
        }
        RankForm::Lm => (
            &rf.y_tilde,
            rf.y_tilde.transpose() * &rf.y_tilde / T::lit(rf.n as f64),
        ),
    };
    let chol = nalgebra::Cholesky::new(sigma)
        .ok_or_else(|| Error::Singular("first-stage residual covariance".into()))?;
    let f = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(k1, k1))
        .ok_or_else(|| Error::Singular("first-stage residual covariance".into()))?;
    let theta = &rf.coef * f.transpose();
    let (_, vr) = linalg::sym_eigen(&(theta.transpose() * &theta))?;
    let v_min: DVector<T> = vr.column(0).into_owned();
    let (_, ul) = linalg::sym_eigen(&(&theta * theta.transpose()))?;
    let df = m - k1 + 1;
    let u2 = ul.columns(0, df).into_owned();
    let lambda = u2.transpose() * &theta * &v_min;
    let stat = match kind {
        CovarianceKind::Homoskedastic => lambda.norm_squared(),
        CovarianceKind::ClusterRobust => {
            let w = f.transpose() * &v_min;
            let s = resid * w;
            let per_cluster = linalg::cluster_scores(&rf.q, &s, &rf.cluster, rf.n_clusters) * &u2;
            let c = match form {
                RankForm::Wald => rf.wald_correction(),
                RankForm::Lm => T::one(),
            };
            let var = per_cluster.transpose() * per_cluster * c;
            linalg::inv_quadratic(&lambda, &var)?.0
        }
    };
    Ok((stat, df))
}

/// Kleibergen-Paap rk Wald F (the "CD" statistic): the rank Wald statistic divided by `m`.
pub fn kp_wald_f<T: Real>(d: &DesignMatrices<T>) -> Result<f64> {
    kp_wald_f_with(&reduced_form(d)?, CovarianceKind::ClusterRobust)
}

pub fn kp_wald_f_with<T: Real>(rf: &ReducedForm<T>, kind: CovarianceKind) -> Result<f64> {
    let (stat, _) = rank_stat(rf, RankForm::Wald, kind)?;
    Ok(stat.as_f64() / rf.m() as f64)
}

/// Robust rank LM under-identification test with `m - k₁ + 1` degrees of freedom.
pub fn underid_test<T: Real>(d: &DesignMatrices<T>) -> Result<TestStat> {
    underid_test_with(&reduced_form(d)?, CovarianceKind::ClusterRobust)
}

/// With [`CovarianceKind::Homoskedastic`] this is the Anderson canonical-correlation LM.
pub fn underid_test_with<T: Real>(rf: &ReducedForm<T>, kind: CovarianceKind) -> Result<TestStat> {
    let (stat, df) = rank_stat(rf, RankForm::Lm, kind)?;
    Ok(TestStat::chi2(stat.as_f64(), df))
}

/// Angrist-Pischke partial F for endogenous regressor `j`.
pub fn ap_partial_f<T: Real>(d: &DesignMatrices<T>, j: usize) -> Result<f64> {
    ap_partial_f_from(&reduced_form(d)?, j)
}

pub fn ap_partial_f_from<T: Real>(rf: &ReducedForm<T>, j: usize) -> Result<f64> {
    let (k1, m) = (rf.k1(), rf.m());
    if j >= k1 {
        return Err(Error::Invalid(format!("endogenous index {j} out of range")));
    }
    if m < k1 {
        return Err(Error::Underidentified {
            instruments: m,
            endogenous: k1,
        });
    }
    // Fitted values of the other regressors are Q·coef_{-j}; partialling them out of the
    // instruments leaves Q·N with N the orthonormal complement of coef_{-j} in Rᵐ.
    let others: Vec<usize> = (0..k1).filter(|&i| i != j).collect();
    let a = rf.coef.select_columns(&others);
    let stacked = linalg::hstack(m, &[&a, &DMatrix::identity(m, m)]);
    let basis = linalg::orthonormalize(&stacked, None, linalg::rank_tol());
    let n_cols: Vec<usize> = basis
        .kept
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= others.len())
        .map(|(i, _)| i)
        .collect();
    let df = n_cols.len();
    if df == 0 {
        return Err(Error::Invalid("AP partial F has no numerator degrees of freedom".into()));
    }
    let nmat = basis.q.select_columns(&n_cols);
    let c = nmat.transpose() * rf.coef.column(j);
    // the auxiliary regression residual is the first-stage residual of x_j
    let r: DVector<T> = rf.v_hat.column(j).into_owned();
    let b = &rf.q * &nmat;
    let scores = linalg::cluster_scores(&b, &r, &rf.cluster, rf.n_clusters);
    let meat = scores.transpose() * scores * rf.wald_correction();
    if meat.iter().all(|v| *v == T::zero()) {
        return Ok(f64::INFINITY);
    }
    let (wald, _) = linalg::inv_quadratic(&c, &meat)?;
    Ok(wald.as_f64() / df as f64)
}

/// Cluster-robust Hansen J on the residuals of an IV or LIML fit.
pub fn hansen_j<T: Real>(fit: &FitResult<T>, d: &DesignMatrices<T>) -> Result<HansenJ> {
    if fit.method == Method::Ols {
        return Err(Error::Invalid("Hansen J needs an IV or LIML fit".into()));
    }
    if fit.residuals.len() != d.n() {
        return Err(Error::Invalid("fit does not match the design".into()));
    }
    let prep = estimators::prepare(d)?;
    let m = prep.kept_instruments.len();
    if m <= d.k1() {
        return Ok(HansenJ {
            stat: 0.0,
            df: 0,
            p: None,
            pinv: false,
        });
    }
    let g = prep.q_z.transpose() * &fit.residuals;
    let scores = linalg::cluster_scores(&prep.q_z, &fit.residuals, d.cluster(), d.n_clusters());
    let s = scores.transpose() * scores;
    let (stat, pinv) = linalg::inv_quadratic(&g, &s)?;
    let df = m - d.k1();
    let stat = stat.as_f64();
    Ok(HansenJ {
        stat,
        df,
        p: Some(chi2_sf(stat, df)),
        pinv,
    })
}

/// Contrast of IV and OLS on the endogenous coefficients, `q'(V_iv - V_ols)⁺q`.
pub fn hausman<T: Real>(ols: &FitResult<T>, iv: &FitResult<T>) -> Result<Hausman> {
    if ols.names != iv.names || ols.k1 != iv.k1 {
        return Err(Error::Invalid("Hausman contrast needs matching coefficient names".into()));
    }
    let k1 = iv.k1;
    let q = iv.coef.rows(0, k1) - ols.coef.rows(0, k1);
    let dv = iv.vcov.view((0, 0), (k1, k1)) - ols.vcov.view((0, 0), (k1, k1));
    let (vals, _) = linalg::sym_eigen(&dv)?;
    let top = vals.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let well_posed = vals[0] > T::tol(1e-10) * top;
    let (stat, pinv) = if well_posed {
        linalg::inv_quadratic(&q, &dv)?
    } else {
        let (p, _) = linalg::pinv_sym(&dv, true)?;
        ((q.transpose() * p * &q)[(0, 0)], true)
    };
    Ok(Hausman {
        test: TestStat::chi2(stat.as_f64().max(0.0), k1),
        pinv,
    })
}

/// All statistics for one specification.
pub fn diagnose<T: Real>(
    d: &DesignMatrices<T>,
    fit: &FitResult<T>,
    ols: &FitResult<T>,
) -> Result<DiagnosticsReport> {
    let rf = reduced_form(d)?;
    let kp = kp_wald_f_with(&rf, CovarianceKind::ClusterRobust)?;
    let underid = underid_test_with(&rf, CovarianceKind::ClusterRobust)?;
    let ap = (0..rf.k1())
        .map(|j| Ok((rf.endog_names[j].clone(), ap_partial_f_from(&rf, j)?)))
        .collect::<Result<Vec<_>>>()?;
    let j = hansen_j(fit, d)?;
    let h = hausman(ols, fit)?;
    Ok(DiagnosticsReport {
        hansen_j: j.p.map(|p| TestStat {
            stat: j.stat,
            df: j.df,
            p,
        }),
        hansen_j_pinv: j.pinv,
        underid,
        kp_wald_f: kp,
        ap_partial_f: ap,
        hausman: h.test,
        hausman_pinv: h.pinv,
    })
}
