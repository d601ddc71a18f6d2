//! Channel estimators and their closed-form error statistics.
//!
//! Every estimator here is affine in the observation,
//! `s_hat = offset_s + gain (y - offset_y)`, so the gain is computed once per
//! (user, training, power) and reused across trials. Error covariances are
//! second moments of `s - s_hat` under the true channel statistics.

use std::fmt;
use std::sync::OnceLock;
use std::str::FromStr;

use crate::channel_model::ChannelStatistics;
use crate::error::{Error, Result};
use crate::linalg::{
    adj_mul, chol_solve, cholesky_lower, cholesky_solve_with, hermitian_part, hermitian_pinv, mul, mul_adj, pinv, scatter_rows, select_cols, select_rows, trace_re,
    HermitianPinv, PINV_RELATIVE_CUTOFF,
};
use crate::scalar::{real, CMat, CVec, Real};
use crate::statistics::{cov_ss_with, cov_uu, MomentSet, PriorMoments};
use crate::training::{aggregation_matrix, build_z, expansion_matrix, Grouping, TrainingConfig};

mod spectral;
use spectral::Spectral;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Ls,
    Lmmse,
    GroupingLs,
    GroupingLmmse,
    CorrelatedGroupingLmmse,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Ls,
        EstimatorKind::Lmmse,
        EstimatorKind::GroupingLs,
        EstimatorKind::GroupingLmmse,
        EstimatorKind::CorrelatedGroupingLmmse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ls => "LS",
            EstimatorKind::Lmmse => "LMMSE",
            EstimatorKind::GroupingLs => "GroupingLS",
            EstimatorKind::GroupingLmmse => "GroupingLMMSE",
            EstimatorKind::CorrelatedGroupingLmmse => "CorrelatedGroupingLMMSE",
        }
    }

    /// Whether the estimator trains with grouped RIS patterns.
    pub fn is_grouped(self) -> bool {
        matches!(
            self,
            EstimatorKind::GroupingLs | EstimatorKind::GroupingLmmse | EstimatorKind::CorrelatedGroupingLmmse
        )
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        Self::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Usage(format!("unknown estimator '{s}'")))
    }
}

/// `s_hat = offset_s + gain (y - offset_y)`.
#[derive(Clone, Debug)]
pub struct LinearEstimator<T: Real> {
    pub kind: EstimatorKind,
    pub offset_s: CVec<T>,
    pub offset_y: CVec<T>,
    pub gain: CMat<T>,
    /// Set when an inner pseudo-inverse had to truncate a non-structural
    /// eigenvalue.
    pub degenerate: bool,
}

impl<T: Real> LinearEstimator<T> {
    pub fn estimate(&self, y: &CVec<T>) -> Result<CVec<T>> {
        if y.len() != self.gain.ncols() {
            return Err(Error::Dimension(format!(
                "{} expects an observation of length {}, got {}",
                self.kind,
                self.gain.ncols(),
                y.len()
            )));
        }
        Ok(&self.offset_s + &self.gain * (y - &self.offset_y))
    }

    /// Conventional LMMSE: `E[s] + C_sy C_yy^{-1} (y - E[y])`.
    pub fn lmmse(moments: &MomentSet<T>) -> Result<Self> {
        let solved = chol_solve(&moments.cov_yy, &moments.cov_sy.adjoint())
            .map_err(|e| Error::Numerical(format!("LMMSE: C_yy is singular ({e}); sigma_w^2 > 0 is required")))?;
        Ok(Self {
            kind: EstimatorKind::Lmmse,
            offset_s: moments.mean_s.clone(),
            offset_y: moments.mean_y.clone(),
            gain: solved.adjoint(),
            degenerate: false,
        })
    }

    /// Least squares `(Z^H Z)^{-1} Z^H y / sqrt(rho)` over the columns of Z
    /// that carry signal; all-zero columns (blocked direct link) estimate 0.
    pub fn ls(z: &CMat<T>, rho: T) -> Result<Self> {
        let (_, gain) = ls_gain(z, rho)?;
        Ok(Self {
            kind: EstimatorKind::Ls,
            offset_s: CVec::zeros(z.ncols()),
            offset_y: CVec::zeros(z.nrows()),
            gain,
            degenerate: false,
        })
    }

    /// Grouping LS baseline: least squares on the group aggregates, expanded
    /// by equal division and re-centred on E[s].
    pub fn grouping_ls(prior: &PriorMoments<T>, grouping: &Grouping, m: usize, rho: T) -> Result<Self> {
        let (_, gain_u) = ls_gain(&prior.z_g, rho)?;
        let expand = expansion_matrix::<T>(grouping, m);
        let sr = real(rho.sqrt());
        Ok(Self {
            kind: EstimatorKind::GroupingLs,
            offset_s: prior.mean_s.clone(),
            offset_y: &prior.z * &prior.mean_s * sr,
            gain: expand * gain_u,
            degenerate: false,
        })
    }

    /// Grouping LMMSE baseline: LMMSE of the group aggregates under the
    /// assumed aggregate covariance `assumed_cov_uu` (the ideal
    /// block-correlation model), expanded by equal division.
    pub fn grouping_lmmse(
        prior: &PriorMoments<T>,
        assumed_cov_uu: &CMat<T>,
        grouping: &Grouping,
        m: usize,
        rho: T,
        sigma_w2: T,
    ) -> Result<Self> {
        let sr = real(rho.sqrt());
        let noise = T::lit(prior.n_users as f64) * sigma_w2;
        let zg = &prior.z_g;
        let zc = zg * assumed_cov_uu;
        let mut cyy = hermitian_part(&(&zc * zg.adjoint())) * real(rho);
        for i in 0..cyy.nrows() {
            cyy[(i, i)] += real(noise);
        }
        let solved = chol_solve(&cyy, &zc)
            .map_err(|e| Error::Numerical(format!("grouping LMMSE: assumed C_yy is singular ({e})")))?;
        let gain_u = solved.adjoint() * sr;
        Ok(Self {
            kind: EstimatorKind::GroupingLmmse,
            offset_s: prior.mean_s.clone(),
            offset_y: &prior.z * &prior.mean_s * sr,
            gain: expansion_matrix::<T>(grouping, m) * gain_u,
            degenerate: false,
        })
    }

    /// Correlated-grouping LMMSE:
    /// `E[s] + C_sy C_yy^{-1} C_uy^H (C_uy C_yy^{-1} C_uy^H)^{-1} C_uy C_yy^{-1} (y - E[y])`.
    ///
    /// The inner inverse is a pseudo-inverse (relative cutoff 1e-10) over the
    /// entries of u with non-zero prior variance.
    pub fn correlated_grouping(moments: &MomentSet<T>) -> Result<Self> {
        let inner = CorrelatedGroupingParts::new(moments)?;
        let gain = &inner.sy_x * &inner.gram_pinv.inverse * inner.x.adjoint();
        Ok(Self {
            kind: EstimatorKind::CorrelatedGroupingLmmse,
            offset_s: moments.mean_s.clone(),
            offset_y: moments.mean_y.clone(),
            gain,
            degenerate: inner.degenerate(),
        })
    }
}

fn ls_gain<T: Real>(z: &CMat<T>, rho: T) -> Result<(Vec<usize>, CMat<T>)> {
    if !(rho > T::zero()) {
        return Err(Error::Numerical("least squares needs a positive pilot power".into()));
    }
    let active: Vec<usize> = (0..z.ncols()).filter(|&j| z.column(j).iter().any(|x| *x != real(T::zero()))).collect();
    let za = select_cols(z, &active);
    // Normal equations when Z^H Z is comfortably definite (the usual Hadamard
    // design); the SVD path handles and reports rank deficiency.
    if let Ok(l) = cholesky_lower(&adj_mul(&za, &za)) {
        let pivots: Vec<T> = l.diagonal().iter().map(|d| d.re).collect();
        let hi0 = pivots.first().copied().unwrap_or_else(T::zero);
        let (lo, hi) = pivots.iter().fold((hi0, hi0), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        if !pivots.is_empty() && lo * lo > T::lit(1e-8) * hi * hi {
            let gain = cholesky_solve_with(&l, &za.adjoint());
            return Ok((active.clone(), scatter_rows(&gain, &active, z.ncols()) * real(T::one() / rho.sqrt())));
        }
    }
    let (zp, rank) = pinv(&za, T::lit(PINV_RELATIVE_CUTOFF))?;
    if rank < active.len() {
        return Err(Error::Numerical(format!(
            "observation matrix has rank {rank} < {} unknowns; more training patterns are needed",
            active.len()
        )));
    }
    let gain = scatter_rows(&zp, &active, z.ncols()) * real(T::one() / rho.sqrt());
    Ok((active, gain))
}

/// Shared pieces of the correlated-grouping estimator and its error covariance.
struct CorrelatedGroupingParts<T: Real> {
    /// C_yy^{-1} C_uy^H restricted to active u.
    x: CMat<T>,
    /// C_sy C_yy^{-1} C_uy^H.
    sy_x: CMat<T>,
    gram_pinv: HermitianPinv<T>,
    n_active: usize,
}

impl<T: Real> CorrelatedGroupingParts<T> {
    fn new(moments: &MomentSet<T>) -> Result<Self> {
        let active = moments.active_u();
        let cuy = select_rows(&moments.cov_uy, &active);
        let x = chol_solve(&moments.cov_yy, &cuy.adjoint())
            .map_err(|e| Error::Numerical(format!("correlated grouping: C_yy is singular ({e})")))?;
        let gram = hermitian_part(&(&cuy * &x));
        let gram_pinv = hermitian_pinv(&gram, T::lit(PINV_RELATIVE_CUTOFF));
        let sy_x = &moments.cov_sy * &x;
        Ok(Self { x, sy_x, gram_pinv, n_active: active.len() })
    }

    fn degenerate(&self) -> bool {
        self.gram_pinv.truncated || self.gram_pinv.rank < self.n_active
    }
}

/// Error covariance together with the inner-inverse diagnostic.
#[derive(Clone, Debug)]
pub struct ErrorCovariance<T: Real> {
    pub matrix: CMat<T>,
    pub degenerate: bool,
}

/// Correlated-grouping error covariance
/// `C_ss - C_sy C_yy^{-1} C_uy^H (C_uy C_yy^{-1} C_uy^H)^{-1} C_uy C_yy^{-1} C_sy^H`.
pub fn error_covariance<T: Real>(moments: &MomentSet<T>) -> Result<ErrorCovariance<T>> {
    let parts = CorrelatedGroupingParts::new(moments)?;
    let reduction = &parts.sy_x * &parts.gram_pinv.inverse * parts.sy_x.adjoint();
    Ok(ErrorCovariance {
        matrix: hermitian_part(&(&moments.cov_ss - reduction)),
        degenerate: parts.degenerate(),
    })
}

/// Conventional LMMSE error covariance `C_ss - C_sy C_yy^{-1} C_sy^H`.
pub fn conventional_error_covariance<T: Real>(moments: &MomentSet<T>) -> Result<CMat<T>> {
    let y = chol_solve(&moments.cov_yy, &moments.cov_sy.adjoint())?;
    Ok(hermitian_part(&(&moments.cov_ss - &moments.cov_sy * y)))
}

/// `E[(s - s_hat)(s - s_hat)^H]` of an arbitrary affine estimator under the
/// true moments (includes the bias term when the offsets are not the true
/// means).
pub fn linear_error_covariance<T: Real>(est: &LinearEstimator<T>, moments: &MomentSet<T>) -> Result<CMat<T>> {
    let w = &est.gain;
    if w.ncols() != moments.cov_yy.nrows() || w.nrows() != moments.cov_ss.nrows() {
        return Err(Error::Dimension("estimator and moments disagree on dimensions".into()));
    }
    let w_cys = mul_adj(w, &moments.cov_sy);
    let cov = &moments.cov_ss - &w_cys - w_cys.adjoint() + mul_adj(&mul(w, &moments.cov_yy), w);
    let bias = &moments.mean_s - &est.offset_s - w * (&moments.mean_y - &est.offset_y);
    Ok(hermitian_part(&(cov + &bias * bias.adjoint())))
}

/// Raw and prior-normalized trace of an error covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nmse<T> {
    /// Tr[C_e].
    pub raw: T,
    /// Tr[C_e] / Tr[C_ss].
    pub normalized: T,
}

/// `Tr[C_e] / Tr[C_ss]`, reported with the raw trace.
pub fn normalized_mse<T: Real>(error_cov: &CMat<T>, cov_ss: &CMat<T>) -> Nmse<T> {
    let raw = trace_re(error_cov).max(T::zero());
    let prior = trace_re(cov_ss);
    let normalized = if prior > T::zero() { raw / prior } else { T::zero() };
    Nmse { raw, normalized }
}

/// High-power limit of the correlated-grouping error.
#[derive(Clone, Debug)]
pub struct Floor<T: Real> {
    pub covariance: CMat<T>,
    pub nmse: Nmse<T>,
    /// Z C_ss Z^H or the inner matrix needed a rank-reducing pseudo-inverse.
    pub rank_deficient: bool,
}

/// Error floor as rho -> infinity:
/// `C - C Z^H H^+ Z_G C_u (C_u Z_G^H H^+ Z_G C_u)^+ C_u Z_G^H H^+ Z C`,
/// `H = Z C Z^H`, with pseudo-inverses at relative cutoff 1e-10.
pub fn asymptotic_mse<T: Real>(prior: &PriorMoments<T>) -> Floor<T> {
    let cutoff = T::lit(PINV_RELATIVE_CUTOFF);
    let h = hermitian_pinv(prior.z_cov_zh(), cutoff);
    let active = prior.active_u();
    let zg_cu = select_cols(&prior.cov_u_zgh().adjoint(), &active);
    let x = mul(&h.inverse, &zg_cu);
    let inner = hermitian_part(&adj_mul(&zg_cu, &x));
    let inner_pinv = hermitian_pinv(&inner, cutoff);
    let p = mul(prior.cov_s_zh(), &x);
    let covariance = hermitian_part(&(&prior.cov_ss - mul_adj(&mul(&p, &inner_pinv.inverse), &p)));
    let nmse = normalized_mse(&covariance, &prior.cov_ss);
    let rank_deficient = h.truncated || inner_pinv.truncated || inner_pinv.rank < active.len();
    Floor { covariance, nmse, rank_deficient }
}

/// High-power limit of the conventional LMMSE error, `C - C Z^H (Z C Z^H)^+ Z C`.
pub fn conventional_floor<T: Real>(prior: &PriorMoments<T>) -> Floor<T> {
    let h = hermitian_pinv(prior.z_cov_zh(), T::lit(PINV_RELATIVE_CUTOFF));
    let czh = prior.cov_s_zh();
    let covariance = hermitian_part(&(&prior.cov_ss - mul_adj(&mul(czh, &h.inverse), czh)));
    let nmse = normalized_mse(&covariance, &prior.cov_ss);
    Floor { covariance, nmse, rank_deficient: h.truncated }
}

/// Error floor of an affine estimator whose power-normalized gain
/// `sqrt(rho) W` tends to `limit_gain`: `(I - W Z) C (I - W Z)^H`.
pub fn linear_floor<T: Real>(limit_gain: &CMat<T>, prior: &PriorMoments<T>) -> Floor<T> {
    let d = prior.cov_ss.nrows();
    let resid = CMat::identity(d, d) - mul(limit_gain, &prior.z);
    let covariance = hermitian_part(&mul_adj(&mul(&resid, &prior.cov_ss), &resid));
    let nmse = normalized_mse(&covariance, &prior.cov_ss);
    Floor { covariance, nmse, rank_deficient: false }
}

/// Ideal block correlation `[R]_{n1,n2} = 1` inside a group, 0 across groups.
pub fn ideal_block_correlation<T: Real>(grouping: &Grouping) -> CMat<T> {
    let n = grouping.n_elements();
    CMat::from_fn(n, n, |i, j| {
        if grouping.group_of(i) == grouping.group_of(j) {
            real(T::one())
        } else {
            real(T::zero())
        }
    })
}

/// Everything the estimators need for one user under one training setup.
///
/// Power-independent factorizations are built on first use and shared by
/// every pilot power afterwards.
#[derive(Clone, Debug)]
pub struct UserContext<T: Real> {
    pub prior: PriorMoments<T>,
    /// Aggregate covariance under the ideal block-correlation model.
    pub assumed_cov_uu: CMat<T>,
    pub grouping: Grouping,
    pub n_antennas: usize,
    true_model: OnceLock<Result<Spectral<T>, String>>,
    assumed_model: OnceLock<Result<Spectral<T>, String>>,
    ls_unit: OnceLock<Result<CMat<T>, String>>,
    grouped_ls_unit: OnceLock<Result<CMat<T>, String>>,
}

fn cached<X>(cell: &OnceLock<Result<X, String>>, init: impl FnOnce() -> Result<X>) -> Result<&X> {
    cell.get_or_init(|| init().map_err(|e| e.to_string())).as_ref().map_err(|e| Error::Numerical(e.clone()))
}

impl<T: Real> UserContext<T> {
    pub fn new(stats: &ChannelStatistics<T>, config: &TrainingConfig<T>, k: usize) -> Result<Self> {
        let z = build_z(k, stats, config, false)?;
        let z_g = build_z(k, stats, config, true)?;
        let prior = PriorMoments::for_user(stats, k, z, z_g, &config.grouping)?;
        let ideal = ideal_block_correlation::<T>(&config.grouping);
        let assumed = cov_ss_with(stats, k, &ideal, &ideal);
        let assumed_cov_uu = cov_uu(&assumed, &config.grouping, stats.n_antennas())?;
        Ok(Self {
            prior,
            assumed_cov_uu,
            grouping: config.grouping.clone(),
            n_antennas: stats.n_antennas(),
            true_model: OnceLock::new(),
            assumed_model: OnceLock::new(),
            ls_unit: OnceLock::new(),
            grouped_ls_unit: OnceLock::new(),
        })
    }

    pub fn moments(&self, rho: T, sigma_w2: T) -> MomentSet<T> {
        self.prior.at_power(rho, sigma_w2)
    }

    fn noise(&self, sigma_w2: T) -> T {
        T::lit(self.prior.n_users as f64) * sigma_w2
    }

    fn true_model(&self) -> Result<&Spectral<T>> {
        cached(&self.true_model, || Spectral::new(&self.prior.cov_ss, &self.prior.z))
    }

    fn assumed_model(&self) -> Result<&Spectral<T>> {
        cached(&self.assumed_model, || Spectral::new(&self.assumed_cov_uu, &self.prior.z_g))
    }

    /// LS gain at unit power; it scales as 1/sqrt(rho).
    fn ls_unit(&self, grouped: bool) -> Result<&CMat<T>> {
        if grouped {
            cached(&self.grouped_ls_unit, || Ok(ls_gain(&self.prior.z_g, T::one())?.1))
        } else {
            cached(&self.ls_unit, || Ok(ls_gain(&self.prior.z, T::one())?.1))
        }
    }

    fn expansion(&self) -> CMat<T> {
        expansion_matrix::<T>(&self.grouping, self.n_antennas)
    }

    /// Correlated-grouping pieces in factored form: `P = C_sy C_yy^{-1} C_uy^H`,
    /// the pseudo-inverted inner matrix `C_uy C_yy^{-1} C_uy^H` and
    /// `Q = A (LV)` with A the aggregation rows of the active u.
    fn correlated_parts(&self, fraction: &[T]) -> Result<(CMat<T>, HermitianPinv<T>, CMat<T>, usize)> {
        let model = self.true_model()?;
        let active = self.prior.active_u();
        let agg = select_rows(&aggregation_matrix::<T>(&self.grouping, self.n_antennas), &active);
        let q = mul(&agg, &model.lv);
        let mut qf = q.clone();
        for (j, &f) in fraction.iter().enumerate() {
            let mut col = qf.column_mut(j);
            col *= real(f);
        }
        let p = mul_adj(&model.lv, &qf);
        let gram = hermitian_part(&mul(&agg, &p));
        let gram_pinv = hermitian_pinv(&gram, T::lit(PINV_RELATIVE_CUTOFF));
        Ok((p, gram_pinv, q, active.len()))
    }

    pub fn build(&self, kind: EstimatorKind, rho: T, sigma_w2: T) -> Result<LinearEstimator<T>> {
        if !(rho > T::zero()) {
            return Err(Error::Numerical(format!("{kind} needs a positive pilot power")));
        }
        let sr = real(rho.sqrt());
        let nu = self.noise(sigma_w2);
        let centred = |gain: CMat<T>, degenerate: bool| LinearEstimator {
            kind,
            offset_s: self.prior.mean_s.clone(),
            offset_y: &self.prior.z * &self.prior.mean_s * sr,
            gain,
            degenerate,
        };
        match kind {
            EstimatorKind::Ls => Ok(LinearEstimator {
                kind,
                offset_s: CVec::zeros(self.prior.z.ncols()),
                offset_y: CVec::zeros(self.prior.z.nrows()),
                gain: self.ls_unit(false)? * real(T::one() / rho.sqrt()),
                degenerate: false,
            }),
            EstimatorKind::GroupingLs => {
                Ok(centred(mul(&self.expansion(), self.ls_unit(true)?) * real(T::one() / rho.sqrt()), false))
            }
            EstimatorKind::Lmmse => Ok(centred(self.true_model()?.gain(rho, nu), false)),
            EstimatorKind::GroupingLmmse => Ok(centred(mul(&self.expansion(), &self.assumed_model()?.gain(rho, nu)), false)),
            EstimatorKind::CorrelatedGroupingLmmse => {
                let model = self.true_model()?;
                let (p, gram_pinv, q, n_active) = self.correlated_parts(&model.signal_fraction(rho, nu))?;
                let weights = model.gain_weights(rho, nu);
                let mut qw = q;
                for (j, &w) in weights.iter().enumerate() {
                    let mut col = qw.column_mut(j);
                    col *= real(w);
                }
                // C_uy C_yy^{-1} = A (LV) diag(w) U^H
                let uy = mul_adj(&qw, &model.u);
                let gain = mul(&mul(&p, &gram_pinv.inverse), &uy);
                let degenerate = gram_pinv.truncated || gram_pinv.rank < n_active;
                Ok(centred(gain, degenerate))
            }
        }
    }

    /// Closed-form error covariance of `est` (built by [`Self::build`]).
    pub fn error_covariance(&self, est: &LinearEstimator<T>, rho: T, sigma_w2: T) -> Result<CMat<T>> {
        let nu = self.noise(sigma_w2);
        match est.kind {
            EstimatorKind::Lmmse => Ok(self.true_model()?.residual(rho, nu)),
            EstimatorKind::CorrelatedGroupingLmmse => {
                let (p, gram_pinv, _, _) = self.correlated_parts(&self.true_model()?.signal_fraction(rho, nu))?;
                let reduction = mul_adj(&mul(&p, &gram_pinv.inverse), &p);
                Ok(hermitian_part(&(&self.prior.cov_ss - reduction)))
            }
            _ => linear_error_covariance(est, &self.moments(rho, sigma_w2)),
        }
    }

    /// Normalized error floor of `kind` as the pilot power grows without bound.
    pub fn floor(&self, kind: EstimatorKind) -> Result<Floor<T>> {
        match kind {
            EstimatorKind::Lmmse => {
                let covariance = self.true_model()?.limit_residual();
                let nmse = normalized_mse(&covariance, &self.prior.cov_ss);
                Ok(Floor { covariance, nmse, rank_deficient: false })
            }
            EstimatorKind::CorrelatedGroupingLmmse => Ok(asymptotic_mse(&self.prior)),
            EstimatorKind::Ls => Ok(linear_floor(self.ls_unit(false)?, &self.prior)),
            EstimatorKind::GroupingLs => Ok(linear_floor(&mul(&self.expansion(), self.ls_unit(true)?), &self.prior)),
            EstimatorKind::GroupingLmmse => {
                Ok(linear_floor(&mul(&self.expansion(), &self.assumed_model()?.limit_gain()), &self.prior))
            }
        }
    }
}

/// Estimate plus optional closed-form diagnostics.
#[derive(Clone, Debug)]
pub struct EstimateResult<T: Real> {
    pub s_hat: CVec<T>,
    pub error_cov: Option<CMat<T>>,
    pub nmse_theory: Option<T>,
    pub nmse_floor: Option<T>,
    pub degenerate: bool,
}

/// Conventional LMMSE estimate with its error covariance and normalized MSE.
pub fn lmmse_conventional<T: Real>(y: &CVec<T>, moments: &MomentSet<T>) -> Result<EstimateResult<T>> {
    let est = LinearEstimator::lmmse(moments)?;
    let cov = conventional_error_covariance(moments)?;
    let nmse = normalized_mse(&cov, &moments.cov_ss).normalized;
    Ok(EstimateResult { s_hat: est.estimate(y)?, error_cov: Some(cov), nmse_theory: Some(nmse), nmse_floor: None, degenerate: false })
}

/// Least-squares estimate (no statistics needed).
pub fn ls_conventional<T: Real>(y: &CVec<T>, z: &CMat<T>, rho: T) -> Result<EstimateResult<T>> {
    let est = LinearEstimator::ls(z, rho)?;
    Ok(EstimateResult { s_hat: est.estimate(y)?, error_cov: None, nmse_theory: None, nmse_floor: None, degenerate: false })
}

/// SoA grouping baseline (`GroupingLs` or `GroupingLmmse`) with its
/// mismatched-model error covariance evaluated under the true statistics.
pub fn grouping_baseline<T: Real>(
    y: &CVec<T>,
    ctx: &UserContext<T>,
    kind: EstimatorKind,
    rho: T,
    sigma_w2: T,
) -> Result<EstimateResult<T>> {
    if !matches!(kind, EstimatorKind::GroupingLs | EstimatorKind::GroupingLmmse) {
        return Err(Error::Usage(format!("{kind} is not a grouping baseline")));
    }
    let est = ctx.build(kind, rho, sigma_w2)?;
    let cov = ctx.error_covariance(&est, rho, sigma_w2)?;
    let nmse = normalized_mse(&cov, &ctx.prior.cov_ss).normalized;
    let floor = ctx.floor(kind)?.nmse.normalized;
    Ok(EstimateResult {
        s_hat: est.estimate(y)?,
        error_cov: Some(cov),
        nmse_theory: Some(nmse),
        nmse_floor: Some(floor),
        degenerate: false,
    })
}

/// Correlated-grouping LMMSE estimate with its error covariance.
pub fn correlated_grouping_lmmse<T: Real>(y: &CVec<T>, moments: &MomentSet<T>) -> Result<EstimateResult<T>> {
    let est = LinearEstimator::correlated_grouping(moments)?;
    let cov = error_covariance(moments)?;
    let nmse = normalized_mse(&cov.matrix, &moments.cov_ss).normalized;
    Ok(EstimateResult {
        s_hat: est.estimate(y)?,
        error_cov: Some(cov.matrix),
        nmse_theory: Some(nmse),
        nmse_floor: None,
        degenerate: est.degenerate || cov.degenerate,
    })
}
