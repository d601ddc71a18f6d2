use std::fmt::{Debug, Display};

use nalgebra::{Complex, DMatrix, DVector, RealField};
use num_traits::ToPrimitive;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Complex scalar over a real field.
pub type Cx<T> = Complex<T>;
/// Dense complex matrix.
pub type CMat<T> = DMatrix<Complex<T>>;
/// Dense complex column vector.
pub type CVec<T> = DVector<Complex<T>>;

/// Real scalar the numerical core is generic over (`f32`, `f64`).
pub trait Real: RealField + Copy + ToPrimitive + Display + Debug + Send + Sync + 'static {
    /// One draw from N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Converts an `f64` constant.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the type.
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f64 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f32 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Circularly symmetric CN(0, 1) draw.
#[inline]
pub fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Cx<T> {
    let half = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let re = T::standard_normal(rng);
    let im = T::standard_normal(rng);
    Complex::new(re * half, im * half)
}

/// Vector of i.i.d. CN(0, 1) entries.
pub fn complex_normal_vec<T: Real, R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVec<T> {
    CVec::from_fn(len, |_, _| complex_normal(rng))
}

/// e^{j phase}.
#[inline]
pub fn phasor<T: Real>(phase: T) -> Cx<T> {
    let (s, c) = phase.sin_cos();
    Complex::new(c, s)
}

/// e^{-j 2 pi num / den}, exact on quarter turns.
pub fn root_of_unity<T: Real>(num: usize, den: usize) -> Cx<T> {
    let r = num % den;
    if (4 * r).is_multiple_of(den) {
        return match 4 * r / den {
            0 => Complex::new(T::one(), T::zero()),
            1 => Complex::new(T::zero(), -T::one()),
            2 => Complex::new(-T::one(), T::zero()),
            _ => Complex::new(T::zero(), T::one()),
        };
    }
    let phase = -T::two_pi() * T::lit(r as f64) / T::lit(den as f64);
    phasor(phase)
}

#[inline]
pub fn real<T: Real>(x: T) -> Cx<T> {
    Complex::new(x, T::zero())
}

/// dB to linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
