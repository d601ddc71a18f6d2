//! Geometry, large-scale fading, spatial correlation and sampling of
//! correlated Rician channel realizations.
//!
//! RIS elements are indexed from 0 in row-major order over the grid: element
//! `n` sits at grid column `n % n_x` and grid row `n / n_x`, i.e. at
//! `(ix * delta_x, iy * delta_y)` in the surface plane.
//!
//! The RIS local frame has its broadside along the global +x axis, the grid
//! x-axis along global +y and the grid y-axis along global +z. Elevation is
//! the angle off broadside and azimuth is measured in the surface plane from
//! the grid x-axis, so the far-field phase of element `n` is
//! `2 pi / lambda * (x_n sin(el) cos(az) + y_n sin(el) sin(az))`.
//!
//! Channel realizations are stored with the large-scale gains factored out
//! (unit large-scale power); the observation matrices carry the gains. The
//! physical links are recovered with [`ChannelRealization::physical_b`] and
//! friends.

use nalgebra::{ComplexField, Point3};
use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::linalg::{hermitian_defect, min_eigenvalue, psd_factor};
use crate::scalar::{complex_normal_vec, phasor, real, CMat, CVec, Real};

/// Tolerance on the modulus of LoS steering entries.
pub const UNIT_MODULUS_TOL: f64 = 1e-12;
/// Tolerance on negative eigenvalues of correlation matrices.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SystemGeometry<T: Real> {
    pub bs_position: Point3<T>,
    pub ris_position: Point3<T>,
    pub ue_positions: Vec<Point3<T>>,
    /// RIS columns (horizontal).
    pub n_x: usize,
    /// RIS rows (vertical).
    pub n_y: usize,
    /// BS antennas M (uniform linear array).
    pub m_antennas: usize,
    pub delta_x: T,
    pub delta_y: T,
    /// BS antenna spacing.
    pub delta_0: T,
    pub wavelength: T,
    /// Angle of arrival at the BS array (psi).
    pub bs_aoa: T,
}

impl<T: Real> SystemGeometry<T> {
    pub fn n_elements(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn n_users(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return domain(format!("RIS grid must be at least 1x1, got {}x{}", self.n_x, self.n_y));
        }
        if self.m_antennas == 0 {
            return domain("BS needs at least one antenna");
        }
        if self.ue_positions.is_empty() {
            return domain("at least one UE is required");
        }
        for (name, v) in [
            ("delta_x", self.delta_x),
            ("delta_y", self.delta_y),
            ("delta_0", self.delta_0),
            ("wavelength", self.wavelength),
        ] {
            if !(v > T::zero()) {
                return domain(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    /// In-plane coordinates (meters) of element `n` (0-based).
    pub fn element_position(&self, n: usize) -> Result<(T, T)> {
        let total = self.n_elements();
        if n >= total {
            return domain(format!("element index {n} out of range for N = {total}"));
        }
        let ix = n % self.n_x;
        let iy = n / self.n_x;
        Ok((T::lit(ix as f64) * self.delta_x, T::lit(iy as f64) * self.delta_y))
    }
}

/// Arrival or departure direction in the RIS local frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction<T> {
    pub azimuth: T,
    pub elevation: T,
}

impl<T: Real> Direction<T> {
    /// Direction of `node` seen from the RIS at `ris`.
    pub fn from_ris(ris: &Point3<T>, node: &Point3<T>) -> Result<Self> {
        let d = node - ris;
        let norm = d.norm();
        if !(norm > T::zero()) {
            return domain("coincident RIS and node positions");
        }
        let u = d / norm;
        // broadside = global x, grid x = global y, grid y = global z
        let elevation = u.x.max(-T::one()).min(T::one()).acos();
        let azimuth = u.z.atan2(u.y);
        Ok(Self { azimuth, elevation })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectLink {
    /// UE-BS link fully blocked (zero gain).
    Blocked,
    /// Distance-dependent path loss with exponent `alpha_b`.
    PathLoss,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FadingParams<T: Real> {
    /// Rician factor of the RIS-BS links (linear).
    pub kappa_a: T,
    /// Rician factor of the UE-RIS links (linear).
    pub kappa_g: T,
    pub alpha_a: T,
    pub alpha_g: T,
    pub alpha_b: T,
    /// Path loss at 1 m (linear).
    pub rho_0: T,
    /// Correlation coefficients eta_0 (RIS-BS) followed by eta_1..eta_K.
    pub eta: Vec<T>,
    pub direct_link: DirectLink,
}

impl<T: Real> FadingParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_a >= T::zero()) || !(self.kappa_g >= T::zero()) {
            return domain("Rician factors must be non-negative");
        }
        if !(self.rho_0 > T::zero()) {
            return domain(format!("rho_0 must be positive, got {}", self.rho_0));
        }
        for (i, &e) in self.eta.iter().enumerate() {
            if !(e >= T::zero() && e <= T::one()) {
                return domain(format!("eta[{i}] = {e} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// rho_0 * d^-alpha.
pub fn path_loss<T: Real>(distance: T, alpha: T, rho_0: T) -> Result<T> {
    if !(distance > T::zero()) {
        return domain(format!("path loss needs a positive distance, got {distance}"));
    }
    if !(rho_0 > T::zero()) {
        return domain(format!("reference path loss must be positive, got {rho_0}"));
    }
    Ok(rho_0 * distance.powf(-alpha))
}

/// Euclidean distance between RIS elements `n1` and `n2` (0-based).
pub fn element_distance<T: Real>(n1: usize, n2: usize, geometry: &SystemGeometry<T>) -> Result<T> {
    let (x1, y1) = geometry.element_position(n1)?;
    let (x2, y2) = geometry.element_position(n2)?;
    let dx = x1 - x2;
    let dy = y1 - y2;
    Ok((dx * dx + dy * dy).sqrt())
}

/// Exponential spatial correlation `[R]_{n1,n2} = eta^(delta_{n1,n2} / lambda)`.
pub fn exp_correlation_matrix<T: Real>(eta: T, geometry: &SystemGeometry<T>) -> Result<CMat<T>> {
    if !(eta >= T::zero() && eta <= T::one()) {
        return domain(format!("correlation coefficient eta = {eta} outside [0, 1]"));
    }
    let n = geometry.n_elements();
    let mut r = CMat::identity(n, n);
    for n1 in 0..n {
        for n2 in (n1 + 1)..n {
            let d = element_distance(n1, n2, geometry)? / geometry.wavelength;
            let v = real(eta.powf(d));
            r[(n1, n2)] = v;
            r[(n2, n1)] = v;
        }
    }
    Ok(r)
}

/// Planar-wavefront URPA steering vector (unit-modulus entries).
pub fn ris_steering_vector<T: Real>(azimuth: T, elevation: T, geometry: &SystemGeometry<T>) -> CVec<T> {
    let k0 = T::two_pi() / geometry.wavelength;
    let (se, _) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    let (ux, uy) = (se * ca, se * sa);
    CVec::from_iterator(
        geometry.n_elements(),
        (0..geometry.n_elements()).map(|n| {
            let ix = T::lit((n % geometry.n_x) as f64);
            let iy = T::lit((n / geometry.n_x) as f64);
            phasor(k0 * (ix * geometry.delta_x * ux + iy * geometry.delta_y * uy))
        }),
    )
}

/// Phase of BS antenna `m` (0-based) for arrival angle `psi`.
pub fn bs_antenna_phase<T: Real>(m: usize, psi: T, geometry: &SystemGeometry<T>) -> T {
    T::two_pi() / geometry.wavelength * T::lit(m as f64) * geometry.delta_0 * psi.sin()
}

/// LoS vectors a_bar_m = e^{j phase_m(psi)} * RIS departure steering vector.
pub fn bs_los_vectors<T: Real>(geometry: &SystemGeometry<T>, departure: Direction<T>, psi: T) -> Vec<CVec<T>> {
    let ris = ris_steering_vector(departure.azimuth, departure.elevation, geometry);
    (0..geometry.m_antennas)
        .map(|m| &ris * phasor(bs_antenna_phase(m, psi, geometry)))
        .collect()
}

/// Statistical CSI: everything the closed-form moments need.
#[derive(Clone, Debug)]
pub struct ChannelStatistics<T: Real> {
    /// Direct-link gains; zero marks a blocked link.
    pub rho_b: Vec<T>,
    pub rho_g: Vec<T>,
    pub rho_a: T,
    /// LoS of g_k (length N each).
    pub g_bar: Vec<CVec<T>>,
    /// LoS of a_m (length N each, one per BS antenna).
    pub a_bar: Vec<CVec<T>>,
    /// NLoS correlation R_k of the UE-RIS links.
    pub r_users: Vec<CMat<T>>,
    /// NLoS correlation R_0 of the RIS-BS links.
    pub r_bs: CMat<T>,
    pub kappa_a: T,
    pub kappa_g: T,
    l_users: Vec<CMat<T>>,
    l_bs: CMat<T>,
}

fn check_correlation<T: Real>(name: &str, r: &CMat<T>, n: usize) -> Result<()> {
    if r.nrows() != n || r.ncols() != n {
        return Err(Error::Dimension(format!("{name} is {}x{}, expected {n}x{n}", r.nrows(), r.ncols())));
    }
    let tol = T::lit(PSD_TOL);
    if hermitian_defect(r) > tol {
        return Err(Error::Numerical(format!("{name} is not Hermitian")));
    }
    for i in 0..n {
        if (r[(i, i)] - real(T::one())).modulus() > tol {
            return Err(Error::Numerical(format!("{name} has non-unit diagonal entry {} at {i}", r[(i, i)])));
        }
    }
    let lmin = min_eigenvalue(r);
    if lmin < -tol {
        return Err(Error::Numerical(format!("{name} has negative eigenvalue {lmin}")));
    }
    Ok(())
}

fn check_unit_modulus<T: Real>(name: &str, v: &CVec<T>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!("{name} has length {}, expected {n}", v.len())));
    }
    let tol = T::lit(UNIT_MODULUS_TOL);
    if v.iter().any(|z| (z.modulus() - T::one()).abs() > tol) {
        return Err(Error::Numerical(format!("{name} has entries off the unit circle")));
    }
    Ok(())
}

impl<T: Real> ChannelStatistics<T> {
    /// Assembles statistics from explicit parts, checking the invariants and
    /// precomputing the correlation factors used for sampling.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rho_b: Vec<T>,
        rho_g: Vec<T>,
        rho_a: T,
        g_bar: Vec<CVec<T>>,
        a_bar: Vec<CVec<T>>,
        r_users: Vec<CMat<T>>,
        r_bs: CMat<T>,
        kappa_a: T,
        kappa_g: T,
    ) -> Result<Self> {
        let k = rho_g.len();
        if k == 0 || rho_b.len() != k || g_bar.len() != k || r_users.len() != k {
            return Err(Error::Dimension("per-user statistics must all have K entries".into()));
        }
        if a_bar.is_empty() {
            return Err(Error::Dimension("need at least one BS antenna".into()));
        }
        let n = r_bs.nrows();
        if rho_b.iter().any(|&x| !(x >= T::zero())) || rho_g.iter().any(|&x| !(x > T::zero())) || !(rho_a > T::zero())
        {
            return domain("large-scale gains must be positive (direct link may be zero)");
        }
        if !(kappa_a >= T::zero()) || !(kappa_g >= T::zero()) {
            return domain("Rician factors must be non-negative");
        }
        for (i, v) in g_bar.iter().enumerate() {
            check_unit_modulus(&format!("g_bar[{i}]"), v, n)?;
        }
        for (i, v) in a_bar.iter().enumerate() {
            check_unit_modulus(&format!("a_bar[{i}]"), v, n)?;
        }
        check_correlation("R_0", &r_bs, n)?;
        for (i, r) in r_users.iter().enumerate() {
            check_correlation(&format!("R_{}", i + 1), r, n)?;
        }
        let tol = T::lit(PSD_TOL);
        let l_users = r_users.iter().map(|r| psd_factor(r, tol)).collect::<Result<Vec<_>>>()?;
        let l_bs = psd_factor(&r_bs, tol)?;
        Ok(Self { rho_b, rho_g, rho_a, g_bar, a_bar, r_users, r_bs, kappa_a, kappa_g, l_users, l_bs })
    }

    pub fn n_users(&self) -> usize {
        self.rho_g.len()
    }

    pub fn n_elements(&self) -> usize {
        self.r_bs.nrows()
    }

    pub fn n_antennas(&self) -> usize {
        self.a_bar.len()
    }

    /// Length M(N+1) of the cascaded vector s_k.
    pub fn cascaded_len(&self) -> usize {
        self.n_antennas() * (self.n_elements() + 1)
    }

    pub fn direct_blocked(&self, k: usize) -> bool {
        self.rho_b[k] == T::zero()
    }

    /// Same statistics with the correlation matrices replaced.
    pub fn with_correlation(&self, r_users: Vec<CMat<T>>, r_bs: CMat<T>) -> Result<Self> {
        Self::new(
            self.rho_b.clone(),
            self.rho_g.clone(),
            self.rho_a,
            self.g_bar.clone(),
            self.a_bar.clone(),
            r_users,
            r_bs,
            self.kappa_a,
            self.kappa_g,
        )
    }

    pub fn with_rician(&self, kappa_a: T, kappa_g: T) -> Result<Self> {
        let mut out = self.clone();
        if !(kappa_a >= T::zero()) || !(kappa_g >= T::zero()) {
            return domain("Rician factors must be non-negative");
        }
        out.kappa_a = kappa_a;
        out.kappa_g = kappa_g;
        Ok(out)
    }
}

/// Derives gains, LoS vectors and correlation matrices from node positions.
pub fn build_statistics<T: Real>(geometry: &SystemGeometry<T>, fading: &FadingParams<T>) -> Result<ChannelStatistics<T>> {
    geometry.validate()?;
    fading.validate()?;
    let k = geometry.n_users();
    if fading.eta.len() != k + 1 {
        return Err(Error::Dimension(format!("need K+1 = {} correlation coefficients, got {}", k + 1, fading.eta.len())));
    }
    let d_a = (geometry.bs_position - geometry.ris_position).norm();
    let rho_a = path_loss(d_a, fading.alpha_a, fading.rho_0)?;
    let departure = Direction::from_ris(&geometry.ris_position, &geometry.bs_position)?;
    let a_bar = bs_los_vectors(geometry, departure, geometry.bs_aoa);

    let mut rho_b = Vec::with_capacity(k);
    let mut rho_g = Vec::with_capacity(k);
    let mut g_bar = Vec::with_capacity(k);
    for ue in &geometry.ue_positions {
        let d_g = (ue - geometry.ris_position).norm();
        rho_g.push(path_loss(d_g, fading.alpha_g, fading.rho_0)?);
        let d_b = (ue - geometry.bs_position).norm();
        let gain_b = path_loss(d_b, fading.alpha_b, fading.rho_0)?;
        rho_b.push(match fading.direct_link {
            DirectLink::Blocked => T::zero(),
            DirectLink::PathLoss => gain_b,
        });
        let arrival = Direction::from_ris(&geometry.ris_position, ue)?;
        g_bar.push(ris_steering_vector(arrival.azimuth, arrival.elevation, geometry));
    }
    let r_bs = exp_correlation_matrix(fading.eta[0], geometry)?;
    let r_users = fading.eta[1..]
        .iter()
        .map(|&e| exp_correlation_matrix(e, geometry))
        .collect::<Result<Vec<_>>>()?;
    ChannelStatistics::new(rho_b, rho_g, rho_a, g_bar, a_bar, r_users, r_bs, fading.kappa_a, fading.kappa_g)
}

/// One draw of the channels, normalized to unit large-scale power.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization<T: Real> {
    /// Direct links b_k / sqrt(rho_b) (zero when blocked).
    pub b: Vec<CVec<T>>,
    /// UE-RIS links g_k / sqrt(rho_g).
    pub g: Vec<CVec<T>>,
    /// RIS-BS responses a_m / sqrt(rho_A); the matrix A has rows a_m^H.
    pub a: Vec<CVec<T>>,
    /// Cascaded vectors s_k = [b_k; a_1 (.) g_k; ...; a_M (.) g_k].
    pub s: Vec<CVec<T>>,
}

impl<T: Real> ChannelRealization<T> {
    pub fn physical_b(&self, k: usize, stats: &ChannelStatistics<T>) -> CVec<T> {
        &self.b[k] * real(stats.rho_b[k].sqrt())
    }

    pub fn physical_g(&self, k: usize, stats: &ChannelStatistics<T>) -> CVec<T> {
        &self.g[k] * real(stats.rho_g[k].sqrt())
    }

    /// Physical RIS-BS matrix A = [a_1, ..., a_M]^H.
    pub fn physical_a(&self, stats: &ChannelStatistics<T>) -> CMat<T> {
        let n = self.a.first().map_or(0, |v| v.len());
        let scale = real(stats.rho_a.sqrt());
        CMat::from_fn(self.a.len(), n, |m, i| self.a[m][i].conj() * scale)
    }
}

/// Stacks [b; a_1 (.) g; ...; a_M (.) g].
pub fn cascade<T: Real>(b: &CVec<T>, g: &CVec<T>, a: &[CVec<T>]) -> CVec<T> {
    let n = g.len();
    let m = a.len();
    let mut s = CVec::zeros(m * (n + 1));
    s.rows_mut(0, m).copy_from(b);
    for (mi, am) in a.iter().enumerate() {
        let off = m + mi * n;
        for i in 0..n {
            s[off + i] = am[i] * g[i];
        }
    }
    s
}

/// Draws one realization. Draw order: for each user the direct link then
/// the UE-RIS NLoS vector, then one RIS-BS NLoS vector per BS antenna.
pub fn sample_realization<T: Real, R: Rng + ?Sized>(stats: &ChannelStatistics<T>, rng: &mut R) -> ChannelRealization<T> {
    let k_users = stats.n_users();
    let n = stats.n_elements();
    let m = stats.n_antennas();
    let one = T::one();
    let los_g = real((stats.kappa_g / (one + stats.kappa_g)).sqrt());
    let nlos_g = real((one / (one + stats.kappa_g)).sqrt());
    let los_a = real((stats.kappa_a / (one + stats.kappa_a)).sqrt());
    let nlos_a = real((one / (one + stats.kappa_a)).sqrt());

    let mut b = Vec::with_capacity(k_users);
    let mut g = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let zb = complex_normal_vec(m, rng);
        b.push(if stats.direct_blocked(k) { CVec::zeros(m) } else { zb });
        let z = complex_normal_vec(n, rng);
        g.push(&stats.g_bar[k] * los_g + (&stats.l_users[k] * z) * nlos_g);
    }
    let a: Vec<CVec<T>> = (0..m)
        .map(|mi| {
            let z = complex_normal_vec(n, rng);
            &stats.a_bar[mi] * los_a + (&stats.l_bs * z) * nlos_a
        })
        .collect();
    let s = (0..k_users).map(|k| cascade(&b[k], &g[k], &a)).collect();
    ChannelRealization { b, g, a, s }
}
