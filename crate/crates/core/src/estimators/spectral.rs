//! Factored form of a linear Gaussian observation `y = sqrt(rho) Z x + w`
//! with `Cov[x] = L L^H` and `Z L = U diag(sigma) V^H`.
//!
//! Every power-dependent quantity reduces to a diagonal weight per singular
//! value, e.g. `C_xy C_yy^{-1} C_xy^H = (LV) diag(rho s^2 / (rho s^2 + nu)) (LV)^H`.
//! Unlike a Cholesky solve on `rho Z C Z^H + nu I`, this stays accurate when
//! `rho` is many orders of magnitude above the noise, and the factorization
//! is shared by every pilot power.

use crate::error::Result;
use crate::linalg::{hermitian_part, mul, mul_adj, psd_factor, select_cols, thin_svd, PINV_RELATIVE_CUTOFF};
use crate::scalar::{real, CMat, Real};

/// Eigenvalues of the prior below this fraction of the largest are dropped
/// from the factor; their contribution stays in `null_part`.
const FACTOR_RELATIVE_FLOOR: f64 = 1e-13;

#[derive(Clone, Debug)]
pub(crate) struct Spectral<T: Real> {
    /// L V (dim x x q).
    pub lv: CMat<T>,
    /// Left singular vectors of Z L (dim y x q).
    pub u: CMat<T>,
    pub sigma: Vec<T>,
    /// C - (LV)(LV)^H: prior variance in directions Z does not see at all.
    pub null_part: CMat<T>,
}

impl<T: Real> Spectral<T> {
    pub fn new(cov: &CMat<T>, z: &CMat<T>) -> Result<Self> {
        let full = psd_factor(cov, T::lit(1e-8))?;
        let norms: Vec<T> = full.column_iter().map(|c| c.norm_squared()).collect();
        let top = norms.iter().fold(T::zero(), |m, &x| m.max(x));
        let keep: Vec<usize> = (0..norms.len()).filter(|&j| norms[j] > T::lit(FACTOR_RELATIVE_FLOOR) * top).collect();
        let l = select_cols(&full, &keep);
        let b = mul(z, &l);
        let svd = thin_svd(&b)?;
        let lv = mul(&l, &svd.v);
        let null_part = hermitian_part(&(cov - mul_adj(&lv, &lv)));
        Ok(Self { lv, u: svd.u, sigma: svd.singular_values, null_part })
    }

    fn scaled_lv(&self, w: &[T]) -> CMat<T> {
        let mut out = self.lv.clone();
        for (j, &x) in w.iter().enumerate() {
            let mut col = out.column_mut(j);
            col *= real(x);
        }
        out
    }

    fn signal_cut(&self) -> T {
        let smax = self.sigma.iter().fold(T::zero(), |m, &s| m.max(s));
        T::lit(PINV_RELATIVE_CUTOFF) * smax * smax
    }

    /// rho s^2 / (rho s^2 + nu).
    pub fn signal_fraction(&self, rho: T, nu: T) -> Vec<T> {
        self.sigma
            .iter()
            .map(|&s| {
                let p = rho * s * s;
                if p + nu > T::zero() { p / (p + nu) } else { T::zero() }
            })
            .collect()
    }

    /// C_xy C_yy^{-1}.
    pub fn gain(&self, rho: T, nu: T) -> CMat<T> {
        self.weighted_u(&self.gain_weights(rho, nu))
    }

    /// Limit of sqrt(rho) C_xy C_yy^{-1}: (LV) diag(1/s) U^H on the observable part.
    pub fn limit_gain(&self) -> CMat<T> {
        let cut = self.signal_cut();
        let w: Vec<T> = self.sigma.iter().map(|&s| if s * s > cut { T::one() / s } else { T::zero() }).collect();
        self.weighted_u(&w)
    }

    /// C - C_xy C_yy^{-1} C_xy^H.
    pub fn residual(&self, rho: T, nu: T) -> CMat<T> {
        let w: Vec<T> = self
            .sigma
            .iter()
            .map(|&s| {
                let p = rho * s * s;
                if p + nu > T::zero() { nu / (p + nu) } else { T::one() }
            })
            .collect();
        self.weighted(&w) + &self.null_part
    }

    /// Residual as rho -> infinity.
    pub fn limit_residual(&self) -> CMat<T> {
        let cut = self.signal_cut();
        let w: Vec<T> = self.sigma.iter().map(|&s| if s * s > cut { T::zero() } else { T::one() }).collect();
        self.weighted(&w) + &self.null_part
    }

    /// (LV) diag(w) (LV)^H.
    pub fn weighted(&self, w: &[T]) -> CMat<T> {
        hermitian_part(&mul_adj(&self.scaled_lv(w), &self.lv))
    }

    /// (LV) diag(w) U^H.
    pub fn weighted_u(&self, w: &[T]) -> CMat<T> {
        mul_adj(&self.scaled_lv(w), &self.u)
    }

    pub fn gain_weights(&self, rho: T, nu: T) -> Vec<T> {
        let sr = rho.sqrt();
        self.sigma
            .iter()
            .map(|&s| {
                let d = rho * s * s + nu;
                if d > T::zero() { sr * s / d } else { T::zero() }
            })
            .collect()
    }
}
