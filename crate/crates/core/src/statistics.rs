//! Closed-form moments of the cascaded channel s_k, of its group aggregate
//! u_k and of the stacked observation y_k.
//!
//! Large-scale gains live in the observation matrices, so every moment here
//! is for the normalized channel. A blocked direct link (`rho_b = 0`) is a
//! deterministic zero and its covariance block is zero; otherwise the
//! direct-link block is `I_M`.

use crate::channel_model::ChannelStatistics;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, mul, mul_adj};
use crate::scalar::{real, CMat, CVec, Real};
use crate::training::{aggregation_matrix, Grouping};

/// E[s_k] = sqrt(kA kg / ((1+kA)(1+kg))) [0_M; a_bar_1 (.) g_bar_k; ...].
pub fn mean_s<T: Real>(stats: &ChannelStatistics<T>, k: usize) -> CVec<T> {
    let one = T::one();
    let scale = real((stats.kappa_a * stats.kappa_g / ((one + stats.kappa_a) * (one + stats.kappa_g))).sqrt());
    let m = stats.n_antennas();
    let n = stats.n_elements();
    let mut mu = CVec::zeros(m * (n + 1));
    for (mi, a) in stats.a_bar.iter().enumerate() {
        for i in 0..n {
            mu[m + mi * n + i] = a[i] * stats.g_bar[k][i] * scale;
        }
    }
    mu
}

/// C_{s_k s_k} from the block formula with the statistics' own correlation.
pub fn cov_ss<T: Real>(stats: &ChannelStatistics<T>, k: usize) -> CMat<T> {
    cov_ss_with(stats, k, &stats.r_users[k], &stats.r_bs)
}

/// C_{s_k s_k} with explicit correlation matrices R_k (UE-RIS) and R_0 (RIS-BS).
///
/// Block (m1, m2) of the cascaded part is
/// `A_{m1,m2} (.) R_g + [m1 = m2] R_A (.) (G + R_g)` with
/// `R_A = R_0/(1+kA)`, `R_g = R_k/(1+kg)`, `G = kg/(1+kg) g g^H` and
/// `A_{m1,m2} = kA/(1+kA) a_m1 a_m2^H`.
pub fn cov_ss_with<T: Real>(stats: &ChannelStatistics<T>, k: usize, r_user: &CMat<T>, r_bs: &CMat<T>) -> CMat<T> {
    let one = T::one();
    let m = stats.n_antennas();
    let n = stats.n_elements();
    let ka = stats.kappa_a;
    let kg = stats.kappa_g;
    let r_a = r_bs * real(one / (one + ka));
    let r_g = r_user * real(one / (one + kg));
    let g_bar = &stats.g_bar[k];
    let los_g = real(kg / (one + kg));
    let los_a = real(ka / (one + ka));
    // R_A (.) (G + R_g), shared by every diagonal block
    let diag_block = CMat::from_fn(n, n, |i, j| r_a[(i, j)] * (g_bar[i] * g_bar[j].conj() * los_g + r_g[(i, j)]));

    let mut c = CMat::zeros(m * (n + 1), m * (n + 1));
    if !stats.direct_blocked(k) {
        for mi in 0..m {
            c[(mi, mi)] = real(one);
        }
    }
    for m1 in 0..m {
        for m2 in 0..m {
            let (a1, a2) = (&stats.a_bar[m1], &stats.a_bar[m2]);
            for i in 0..n {
                for j in 0..n {
                    let mut v = a1[i] * a2[j].conj() * los_a * r_g[(i, j)];
                    if m1 == m2 {
                        v += diag_block[(i, j)];
                    }
                    c[(m + m1 * n + i, m + m2 * n + j)] = v;
                }
            }
        }
    }
    c
}

/// C_{u_k u_k}: direct-link block copied, cascaded rows and columns summed
/// within each group for every antenna pair.
pub fn cov_uu<T: Real>(cov_ss: &CMat<T>, grouping: &Grouping, m: usize) -> Result<CMat<T>> {
    let n = grouping.n_elements();
    if cov_ss.nrows() != m * (n + 1) || !cov_ss.is_square() {
        return Err(Error::Domain(format!(
            "grouping over {n} elements does not partition a {}x{} covariance with M = {m}",
            cov_ss.nrows(),
            cov_ss.ncols()
        )));
    }
    let agg = aggregation_matrix::<T>(grouping, m);
    Ok(mul_adj(&mul(&agg, cov_ss), &agg))
}

/// Moments that do not depend on the pilot power: E[s], C_ss, C_uu and the
/// observation matrices with their products.
#[derive(Clone, Debug)]
pub struct PriorMoments<T: Real> {
    pub mean_s: CVec<T>,
    pub cov_ss: CMat<T>,
    pub cov_uu: CMat<T>,
    pub z: CMat<T>,
    pub z_g: CMat<T>,
    /// Number of users K (pilot length).
    pub n_users: usize,
    cov_s_zh: CMat<T>,
    cov_u_zgh: CMat<T>,
    z_cov_zh: CMat<T>,
    z_mean: CVec<T>,
}

impl<T: Real> PriorMoments<T> {
    pub fn new(
        mean_s: CVec<T>,
        cov_ss: CMat<T>,
        cov_uu: CMat<T>,
        z: CMat<T>,
        z_g: CMat<T>,
        n_users: usize,
    ) -> Result<Self> {
        let d = mean_s.len();
        if cov_ss.nrows() != d || z.ncols() != d || z_g.nrows() != z.nrows() || cov_uu.nrows() != z_g.ncols() {
            return Err(Error::Dimension(format!(
                "moment shapes disagree: s {d}, C_ss {}, Z {}x{}, Z_G {}x{}, C_uu {}",
                cov_ss.nrows(),
                z.nrows(),
                z.ncols(),
                z_g.nrows(),
                z_g.ncols(),
                cov_uu.nrows()
            )));
        }
        let cov_s_zh = mul_adj(&cov_ss, &z);
        let cov_u_zgh = mul_adj(&cov_uu, &z_g);
        let z_cov_zh = hermitian_part(&mul(&z, &cov_s_zh));
        let z_mean = &z * &mean_s;
        Ok(Self { mean_s, cov_ss, cov_uu, z, z_g, n_users, cov_s_zh, cov_u_zgh, z_cov_zh, z_mean })
    }

    /// Builds the prior for user `k` from statistics and observation matrices.
    pub fn for_user(stats: &ChannelStatistics<T>, k: usize, z: CMat<T>, z_g: CMat<T>, grouping: &Grouping) -> Result<Self> {
        let c = cov_ss(stats, k);
        let cu = cov_uu(&c, grouping, stats.n_antennas())?;
        Self::new(mean_s(stats, k), c, cu, z, z_g, stats.n_users())
    }

    /// Z C_ss Z^H (noise-free observation covariance per unit power).
    pub fn z_cov_zh(&self) -> &CMat<T> {
        &self.z_cov_zh
    }

    /// C_ss Z^H.
    pub fn cov_s_zh(&self) -> &CMat<T> {
        &self.cov_s_zh
    }

    /// C_uu Z_G^H.
    pub fn cov_u_zgh(&self) -> &CMat<T> {
        &self.cov_u_zgh
    }

    /// Indices of u with non-zero prior variance.
    pub fn active_u(&self) -> Vec<usize> {
        (0..self.cov_uu.nrows()).filter(|&i| self.cov_uu[(i, i)].re > T::zero()).collect()
    }

    /// Completes the moments for pilot power `rho` and per-antenna noise `sigma_w2`.
    pub fn at_power(&self, rho: T, sigma_w2: T) -> MomentSet<T> {
        let sr = real(rho.sqrt());
        let noise = T::lit(self.n_users as f64) * sigma_w2;
        let dim_y = self.z.nrows();
        let mut cov_yy = &self.z_cov_zh * real(rho);
        for i in 0..dim_y {
            cov_yy[(i, i)] += real(noise);
        }
        MomentSet {
            mean_s: self.mean_s.clone(),
            cov_ss: self.cov_ss.clone(),
            cov_uu: self.cov_uu.clone(),
            mean_y: &self.z_mean * sr,
            cov_sy: &self.cov_s_zh * sr,
            cov_uy: &self.cov_u_zgh * sr,
            cov_yy,
            rho,
            noise_var: noise,
        }
    }
}

/// First and second moments for one user at a given pilot power.
#[derive(Clone, Debug)]
pub struct MomentSet<T: Real> {
    pub mean_s: CVec<T>,
    pub cov_ss: CMat<T>,
    pub cov_uu: CMat<T>,
    pub mean_y: CVec<T>,
    pub cov_sy: CMat<T>,
    pub cov_uy: CMat<T>,
    pub cov_yy: CMat<T>,
    pub rho: T,
    /// K sigma_w^2, the per-entry variance of the combined noise.
    pub noise_var: T,
}

impl<T: Real> MomentSet<T> {
    /// Indices of u with non-zero prior variance (structurally observable).
    pub fn active_u(&self) -> Vec<usize> {
        (0..self.cov_uu.nrows()).filter(|&i| self.cov_uu[(i, i)].re > T::zero()).collect()
    }
}

/// E[y] = sqrt(rho) Z E[s], C_sy = sqrt(rho) C_ss Z^H, C_uy = sqrt(rho) C_uu Z_G^H,
/// C_yy = rho Z C_ss Z^H + K sigma^2 I.
pub fn observation_moments<T: Real>(
    stats: &ChannelStatistics<T>,
    k: usize,
    z: &CMat<T>,
    z_g: &CMat<T>,
    grouping: &Grouping,
    rho_k: T,
    sigma_w2: T,
) -> Result<MomentSet<T>> {
    Ok(PriorMoments::for_user(stats, k, z.clone(), z_g.clone(), grouping)?.at_power(rho_k, sigma_w2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::{build_statistics, sample_realization, DirectLink, FadingParams, SystemGeometry};
    use crate::linalg::{hermitian_defect, max_abs, max_abs_diff, min_eigenvalue};
    use crate::scalar::{complex_normal_vec, Cx};
    use crate::training::{build_z, TrainingConfig};
    use nalgebra::Point3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stats(n_x: usize, n_y: usize, m: usize, kappa_a: f64, kappa_g: f64, blocked: bool) -> ChannelStatistics<f64> {
        let geometry = SystemGeometry {
            bs_position: Point3::new(0.0, 0.0, 15.0),
            ris_position: Point3::new(0.0, 50.0, 10.0),
            ue_positions: vec![Point3::new(-8.0, 44.0, 5.0), Point3::new(-6.0, 42.0, 5.0)],
            n_x,
            n_y,
            m_antennas: m,
            delta_x: 0.05,
            delta_y: 0.05,
            delta_0: 0.05,
            wavelength: 0.1,
            bs_aoa: std::f64::consts::FRAC_PI_3,
        };
        let fading = FadingParams {
            kappa_a,
            kappa_g,
            alpha_a: 2.5,
            alpha_g: 2.2,
            alpha_b: 3.5,
            rho_0: 1e-3,
            eta: vec![0.99; 3],
            direct_link: if blocked { DirectLink::Blocked } else { DirectLink::PathLoss },
        };
        build_statistics(&geometry, &fading).unwrap()
    }

    fn scalar_stats(kappa: f64) -> ChannelStatistics<f64> {
        let one = CVec::from_element(1, Cx::new(1.0, 0.0));
        ChannelStatistics::new(
            vec![1.0],
            vec![1.0],
            1.0,
            vec![one.clone()],
            vec![one],
            vec![CMat::identity(1, 1)],
            CMat::identity(1, 1),
            kappa,
            kappa,
        )
        .unwrap()
    }

    #[test]
    fn mean_vanishes_without_los() {
        assert_eq!(max_abs(&CMat::from_column_slice(10, 1, mean_s(&stats(2, 2, 2, 0.0, 2.0, true), 0).as_slice())), 0.0);
        assert_eq!(max_abs(&CMat::from_column_slice(10, 1, mean_s(&stats(2, 2, 2, 1.0, 0.0, true), 1).as_slice())), 0.0);
    }

    #[test]
    fn scalar_covariance_is_identity() {
        let c = cov_ss(&scalar_stats(0.0), 0);
        assert_eq!(c, CMat::identity(2, 2));
    }

    #[test]
    fn deterministic_limit_has_no_cascaded_variance() {
        let s = stats(2, 2, 2, 1e12, 1e12, true);
        let c = cov_ss(&s, 0);
        assert!(max_abs(&c) < 1e-10);
    }

    #[test]
    fn direct_block_follows_link_state() {
        let open = cov_ss(&stats(2, 2, 3, 0.01, 2.0, false), 0);
        let blocked = cov_ss(&stats(2, 2, 3, 0.01, 2.0, true), 0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(open[(i, j)].re, if i == j { 1.0 } else { 0.0 });
                assert_eq!(blocked[(i, j)].re, 0.0);
            }
        }
        assert!(max_abs_diff(&open.view((3, 3), (12, 12)).into_owned(), &blocked.view((3, 3), (12, 12)).into_owned()) == 0.0);
    }

    #[test]
    fn covariances_are_hermitian_psd() {
        let s = stats(4, 4, 2, 0.01, 2.0, false);
        let c = cov_ss(&s, 1);
        assert!(hermitian_defect(&c) < 1e-12);
        assert!(min_eigenvalue(&c) > -1e-8);
        let cu = cov_uu(&c, &Grouping::contiguous(16, 4).unwrap(), 2).unwrap();
        assert!(hermitian_defect(&cu) < 1e-12);
        assert!(min_eigenvalue(&cu) > -1e-8);
    }

    #[test]
    fn singleton_grouping_reproduces_cov_ss() {
        let s = stats(3, 2, 2, 0.5, 2.0, false);
        let c = cov_ss(&s, 0);
        let cu = cov_uu(&c, &Grouping::contiguous(6, 6).unwrap(), 2).unwrap();
        assert!(max_abs_diff(&c, &cu) < 1e-15);
    }

    #[test]
    fn two_to_one_aggregation_sums_all_entries() {
        let c = CMat::from_fn(3, 3, |i, j| Cx::new((1 + i * 3 + j) as f64, 0.0));
        let cu = cov_uu(&c, &Grouping::contiguous(2, 1).unwrap(), 1).unwrap();
        assert_eq!(cu[(0, 0)].re, 1.0);
        assert_eq!(cu[(1, 1)].re, 5.0 + 6.0 + 8.0 + 9.0);
        assert!(matches!(cov_uu(&c, &Grouping::contiguous(4, 2).unwrap(), 1), Err(Error::Domain(_))));
    }

    #[test]
    fn aggregation_preserves_quadratic_forms() {
        let s = stats(4, 2, 2, 0.01, 2.0, false);
        let g = Grouping::contiguous(8, 2).unwrap();
        let c = cov_ss(&s, 0);
        let cu = cov_uu(&c, &g, 2).unwrap();
        let agg = aggregation_matrix::<f64>(&g, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = complex_normal_vec::<f64, _>(cu.nrows(), &mut rng);
            let lhs = (x.adjoint() * &cu * &x)[(0, 0)];
            let y = agg.adjoint() * &x;
            let rhs = (y.adjoint() * &c * &y)[(0, 0)];
            assert!((lhs - rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn zero_power_observation_is_pure_noise() {
        let s = stats(2, 2, 2, 0.5, 2.0, true);
        let config = TrainingConfig::minimal(Grouping::contiguous(4, 2).unwrap(), vec![0.0, 0.0], 0.25).unwrap();
        let z = build_z(0, &s, &config, false).unwrap();
        let zg = build_z(0, &s, &config, true).unwrap();
        let mo = observation_moments(&s, 0, &z, &zg, &config.grouping, 0.0, 0.25).unwrap();
        assert_eq!(mo.mean_y.norm(), 0.0);
        let dim = z.nrows();
        assert!(max_abs_diff(&mo.cov_yy, &(CMat::identity(dim, dim) * Cx::new(0.5, 0.0))) == 0.0);
    }

    #[test]
    fn scalar_observation_covariance() {
        let s = scalar_stats(0.0);
        let z = CMat::from_row_slice(1, 2, &[Cx::new(0.0, 0.0), Cx::new(0.7, -0.2)]);
        let prior = PriorMoments::new(mean_s(&s, 0), cov_ss(&s, 0), CMat::identity(2, 2), z.clone(), z.clone(), 1).unwrap();
        let mo = prior.at_power(3.0, 0.0);
        let expected = 3.0 * z[(0, 1)].norm_sqr() * 1.0;
        assert!((mo.cov_yy[(0, 0)].re - expected).abs() < 1e-14);
    }

    #[test]
    fn monte_carlo_moments_match_closed_form() {
        let s = stats(2, 2, 2, 1.0, 2.0, false);
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = 10;
        let mut sum = CVec::<f64>::zeros(d);
        let mut second = CMat::<f64>::zeros(d, d);
        for _ in 0..draws {
            let r = sample_realization(&s, &mut rng);
            sum += &r.s[0];
            second += &r.s[0] * r.s[0].adjoint();
        }
        let nd = Cx::new(draws as f64, 0.0);
        let mean = sum / nd;
        let cov = second / nd - &mean * mean.adjoint();
        let mu = mean_s(&s, 0);
        let c = cov_ss(&s, 0);
        let mu_max = mu.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let mean_err = (&mean - &mu).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(mean_err < 0.05 * mu_max, "{mean_err} vs {mu_max}");
        assert!(max_abs_diff(&cov, &c) < 0.05 * max_abs(&c));
    }
}
