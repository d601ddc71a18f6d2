//! RIS training patterns, orthogonal pilots and the pilot observation model.

use nalgebra::DMatrix;
use rand::Rng;

use crate::channel_model::{ChannelRealization, ChannelStatistics};
use crate::error::{domain, Error, Result};
use crate::scalar::{complex_normal_vec, real, root_of_unity, CMat, CVec, Real};

/// Sylvester-construction Hadamard matrix of order `2^j`.
pub fn hadamard(order: usize) -> Result<DMatrix<i8>> {
    if order == 0 || !order.is_power_of_two() {
        return domain(format!("Hadamard order must be a power of two, got {order}"));
    }
    let mut h = DMatrix::from_element(1, 1, 1i8);
    while h.nrows() < order {
        let n = h.nrows();
        let mut next = DMatrix::zeros(2 * n, 2 * n);
        next.view_mut((0, 0), (n, n)).copy_from(&h);
        next.view_mut((0, n), (n, n)).copy_from(&h);
        next.view_mut((n, 0), (n, n)).copy_from(&h);
        next.view_mut((n, n), (n, n)).copy_from(&(-&h));
        h = next;
    }
    Ok(h)
}

/// Partition of the RIS elements into equally sized groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grouping {
    assignment: Vec<usize>,
    n_groups: usize,
}

impl Grouping {
    /// Contiguous index blocks `{0..N/G}, {N/G..2N/G}, ...`.
    pub fn contiguous(n_elements: usize, n_groups: usize) -> Result<Self> {
        if n_groups == 0 || n_elements == 0 || !n_elements.is_multiple_of(n_groups) {
            return Err(Error::Config(format!(
                "group count {n_groups} must divide the element count {n_elements}"
            )));
        }
        let size = n_elements / n_groups;
        Ok(Self { assignment: (0..n_elements).map(|n| n / size).collect(), n_groups })
    }

    /// Rectangular `tile_x` x `tile_y` sub-arrays of an `n_x` x `n_y` grid,
    /// numbered row-major over tiles.
    pub fn tiled(n_x: usize, n_y: usize, tile_x: usize, tile_y: usize) -> Result<Self> {
        if tile_x == 0 || tile_y == 0 || !n_x.is_multiple_of(tile_x) || !n_y.is_multiple_of(tile_y) {
            return Err(Error::Config(format!(
                "tile {tile_x}x{tile_y} does not evenly cover the {n_x}x{n_y} grid"
            )));
        }
        let tiles_x = n_x / tile_x;
        let assignment = (0..n_x * n_y)
            .map(|n| {
                let (ix, iy) = (n % n_x, n / n_x);
                (iy / tile_y) * tiles_x + ix / tile_x
            })
            .collect();
        Ok(Self { assignment, n_groups: tiles_x * (n_y / tile_y) })
    }

    pub fn n_elements(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn group_size(&self) -> usize {
        self.assignment.len() / self.n_groups
    }

    pub fn group_of(&self, n: usize) -> usize {
        self.assignment[n]
    }

    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&n| self.assignment[n] == g).collect()
    }

    pub fn is_singleton(&self) -> bool {
        self.n_groups == self.assignment.len()
    }
}

/// RIS patterns theta_t (rows of `patterns`) and their group-level
/// counterparts theta_{G,t} (rows of `group_patterns`).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPatterns<T: Real> {
    pub patterns: CMat<T>,
    pub group_patterns: CMat<T>,
    /// Whether the columns of `[1 | theta_{G,t}]` are mutually orthogonal.
    pub orthogonal_columns: bool,
}

/// Hadamard-based training: `[1, theta_{G,t}]` is the first `N_G + 1`
/// entries of row `t` of the order-`2^ceil(log2 T)` Hadamard matrix and each
/// element copies the entry of its group.
pub fn training_patterns<T: Real>(grouping: &Grouping, n_patterns: usize) -> Result<TrainingPatterns<T>> {
    let ng = grouping.n_groups();
    if n_patterns < ng + 1 {
        return Err(Error::Config(format!(
            "{n_patterns} training patterns cannot identify {} unknowns per antenna (need T >= {})",
            ng + 1,
            ng + 1
        )));
    }
    let h = hadamard(n_patterns.next_power_of_two())?;
    let sign = |x: i8| real(T::lit(x as f64));
    let group_patterns = CMat::from_fn(n_patterns, ng, |t, g| sign(h[(t, g + 1)]));
    let patterns = CMat::from_fn(n_patterns, grouping.n_elements(), |t, n| group_patterns[(t, grouping.group_of(n))]);
    let orthogonal_columns = (0..=ng).all(|c1| {
        ((c1 + 1)..=ng).all(|c2| (0..n_patterns).map(|t| h[(t, c1)] as i64 * h[(t, c2)] as i64).sum::<i64>() == 0)
    });
    if !orthogonal_columns {
        log::debug!("T = {n_patterns} truncated Hadamard rows give non-orthogonal training columns");
    }
    Ok(TrainingPatterns { patterns, group_patterns, orthogonal_columns })
}

/// Pilot matrix with entry `(k, i)` = phi_k^{(i)} = e^{-j 2 pi k i / K}.
pub fn pilot_sequences<T: Real>(n_users: usize) -> CMat<T> {
    CMat::from_fn(n_users, n_users, |k, i| root_of_unity(k * i, n_users))
}

/// Pilot symbol slots (ungrouped K(N+1), grouped K(N_G+1)).
pub fn pilot_overhead(n_users: usize, n_elements: usize, n_groups: usize) -> (usize, usize) {
    (n_users * (n_elements + 1), n_users * (n_groups + 1))
}

#[derive(Clone, Debug)]
pub struct TrainingConfig<T: Real> {
    pub grouping: Grouping,
    pub patterns: TrainingPatterns<T>,
    /// K x K pilot matrix.
    pub pilots: CMat<T>,
    /// Pilot power per user (W).
    pub rho: Vec<T>,
    /// Noise power per BS antenna (W).
    pub sigma_w2: T,
}

impl<T: Real> TrainingConfig<T> {
    pub fn new(grouping: Grouping, n_patterns: usize, rho: Vec<T>, sigma_w2: T) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::Config("need at least one user".into()));
        }
        if rho.iter().any(|&r| !(r >= T::zero())) || !(sigma_w2 >= T::zero()) {
            return domain("pilot and noise powers must be non-negative");
        }
        let patterns = training_patterns(&grouping, n_patterns)?;
        let pilots = pilot_sequences(rho.len());
        Ok(Self { grouping, patterns, pilots, rho, sigma_w2 })
    }

    /// Minimum identifiable training length T = N_G + 1.
    pub fn minimal(grouping: Grouping, rho: Vec<T>, sigma_w2: T) -> Result<Self> {
        let t = grouping.n_groups() + 1;
        Self::new(grouping, t, rho, sigma_w2)
    }

    pub fn n_patterns(&self) -> usize {
        self.patterns.patterns.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.rho.len()
    }

    pub fn n_groups(&self) -> usize {
        self.grouping.n_groups()
    }

    /// Pilot overhead in symbol slots, K T.
    pub fn tau_p(&self) -> usize {
        self.n_users() * self.n_patterns()
    }

    pub fn with_power(&self, rho: T) -> Self {
        let mut out = self.clone();
        out.rho = vec![rho; self.rho.len()];
        out
    }
}

fn check_dims<T: Real>(stats: &ChannelStatistics<T>, config: &TrainingConfig<T>) -> Result<()> {
    if config.grouping.n_elements() != stats.n_elements() {
        return Err(Error::Dimension(format!(
            "training covers {} elements but the RIS has {}",
            config.grouping.n_elements(),
            stats.n_elements()
        )));
    }
    if config.n_users() != stats.n_users() {
        return Err(Error::Dimension(format!(
            "training has {} users but statistics have {}",
            config.n_users(),
            stats.n_users()
        )));
    }
    Ok(())
}

/// Observation matrix of user `k`: rows `t M + m` stack
/// `K [sqrt(rho_b) I_M, sqrt(rho_g rho_A) I_M (x) theta_t]` over `t`.
/// With `grouped` the group patterns theta_{G,t} are used (Z_{G,k}).
pub fn build_z<T: Real>(k: usize, stats: &ChannelStatistics<T>, config: &TrainingConfig<T>, grouped: bool) -> Result<CMat<T>> {
    check_dims(stats, config)?;
    if k >= stats.n_users() {
        return Err(Error::Dimension(format!("user {k} out of range")));
    }
    let theta = if grouped { &config.patterns.group_patterns } else { &config.patterns.patterns };
    let m = stats.n_antennas();
    let width = theta.ncols();
    let t_len = theta.nrows();
    let kf = T::lit(config.n_users() as f64);
    let direct = real(kf * stats.rho_b[k].sqrt());
    let cascaded = kf * (stats.rho_g[k] * stats.rho_a).sqrt();
    let mut z = CMat::zeros(m * t_len, m * (width + 1));
    for t in 0..t_len {
        for mi in 0..m {
            let row = t * m + mi;
            z[(row, mi)] = direct;
            for n in 0..width {
                z[(row, m + mi * width + n)] = theta[(t, n)] * cascaded;
            }
        }
    }
    Ok(z)
}

/// Z_k and Z_{G,k} for every user.
#[derive(Clone, Debug)]
pub struct ObservationModel<T: Real> {
    pub z: Vec<CMat<T>>,
    pub z_g: Vec<CMat<T>>,
}

impl<T: Real> ObservationModel<T> {
    pub fn new(stats: &ChannelStatistics<T>, config: &TrainingConfig<T>) -> Result<Self> {
        let z = (0..stats.n_users()).map(|k| build_z(k, stats, config, false)).collect::<Result<_>>()?;
        let z_g = (0..stats.n_users()).map(|k| build_z(k, stats, config, true)).collect::<Result<_>>()?;
        Ok(Self { z, z_g })
    }
}

/// Group-sum operator: maps s (length M(N+1)) to the group aggregates
/// (length M(N_G+1)); the direct-link block passes through.
pub fn aggregation_matrix<T: Real>(grouping: &Grouping, m: usize) -> CMat<T> {
    let n = grouping.n_elements();
    let ng = grouping.n_groups();
    let mut a = CMat::zeros(m * (ng + 1), m * (n + 1));
    for mi in 0..m {
        a[(mi, mi)] = real(T::one());
        for e in 0..n {
            a[(m + mi * ng + grouping.group_of(e), m + mi * n + e)] = real(T::one());
        }
    }
    a
}

/// Equal-division expansion from group aggregates back to elements.
pub fn expansion_matrix<T: Real>(grouping: &Grouping, m: usize) -> CMat<T> {
    let n = grouping.n_elements();
    let ng = grouping.n_groups();
    let share = real(T::one() / T::lit(grouping.group_size() as f64));
    let mut e = CMat::zeros(m * (n + 1), m * (ng + 1));
    for mi in 0..m {
        e[(mi, mi)] = real(T::one());
        for el in 0..n {
            e[(m + mi * n + el, m + mi * ng + grouping.group_of(el))] = share;
        }
    }
    e
}

/// Received pilot signals of one coherence interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet<T: Real> {
    /// `y_raw[t][i]`: BS signal in slot `i` of pattern `t`.
    pub y_raw: Vec<Vec<CVec<T>>>,
    /// The noise vectors added to `y_raw`, kept for auditing.
    pub noise: Vec<Vec<CVec<T>>>,
    /// Per-user combined and stacked observations y_k (length MT).
    pub y_combined: Vec<CVec<T>>,
}

/// Pilot combining `y_k^{(t)} = sum_i y^{(t,i)} conj(phi_k^{(i)})` stacked over t.
pub fn combine<T: Real>(y_raw: &[Vec<CVec<T>>], pilots: &CMat<T>, k: usize) -> CVec<T> {
    let m = y_raw.first().and_then(|s| s.first()).map_or(0, |v| v.len());
    let mut y = CVec::zeros(m * y_raw.len());
    for (t, slots) in y_raw.iter().enumerate() {
        let mut acc = CVec::zeros(m);
        for (i, v) in slots.iter().enumerate() {
            acc += v * pilots[(k, i)].conj();
        }
        y.rows_mut(t * m, m).copy_from(&acc);
    }
    y
}

/// Synthesizes `y^{(t,i)} = sum_k sqrt(rho_k) [sqrt(rho_b) I, sqrt(rho_A rho_g) I (x) theta_t] s_k phi_k^{(i)} + w`
/// with `w ~ CN(0, sigma_w^2 I_M)`, then combines per user. Noise is drawn
/// slot by slot in `(t, i)` order.
pub fn synthesize_received<T: Real, R: Rng + ?Sized>(
    realization: &ChannelRealization<T>,
    stats: &ChannelStatistics<T>,
    config: &TrainingConfig<T>,
    rng: &mut R,
) -> Result<ObservationSet<T>> {
    check_dims(stats, config)?;
    let k_users = stats.n_users();
    let m = stats.n_antennas();
    let n = stats.n_elements();
    if realization.s.len() != k_users || realization.s.iter().any(|s| s.len() != m * (n + 1)) {
        return Err(Error::Dimension("realization does not match the statistics".into()));
    }
    let theta = &config.patterns.patterns;
    let t_len = config.n_patterns();
    let noise_std = real(config.sigma_w2.sqrt());

    let mut y_raw = Vec::with_capacity(t_len);
    let mut noise = Vec::with_capacity(t_len);
    for t in 0..t_len {
        // per-user received vector for this pattern, before pilot modulation
        let user_signal: Vec<CVec<T>> = (0..k_users)
            .map(|k| {
                let s = &realization.s[k];
                let direct = real(stats.rho_b[k].sqrt());
                let cascaded = real((stats.rho_a * stats.rho_g[k]).sqrt());
                let amp = real(config.rho[k].sqrt());
                CVec::from_fn(m, |mi, _| {
                    let mut acc = s[mi] * direct;
                    let mut refl = real(T::zero());
                    for e in 0..n {
                        refl += theta[(t, e)] * s[m + mi * n + e];
                    }
                    acc += refl * cascaded;
                    acc * amp
                })
            })
            .collect();
        let mut slots = Vec::with_capacity(k_users);
        let mut slot_noise = Vec::with_capacity(k_users);
        for i in 0..k_users {
            let w = complex_normal_vec::<T, R>(m, rng) * noise_std;
            let mut y = w.clone();
            for (k, sig) in user_signal.iter().enumerate() {
                y += sig * config.pilots[(k, i)];
            }
            slots.push(y);
            slot_noise.push(w);
        }
        y_raw.push(slots);
        noise.push(slot_noise);
    }
    let y_combined = (0..k_users).map(|k| combine(&y_raw, &config.pilots, k)).collect();
    Ok(ObservationSet { y_raw, noise, y_combined })
}
