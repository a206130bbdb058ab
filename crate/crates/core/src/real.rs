use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Scalar type the numerical core is generic over: `f64` for production
/// accuracy, `f32` compiles for quick checks.
pub trait Real:
    nalgebra::RealField + FloatConst + FromPrimitive + ToPrimitive + Copy + Default
{
    /// Convert an `f64` constant into this scalar type.
    #[inline]
    fn c(value: f64) -> Self {
        nalgebra::convert(value)
    }

    /// Lossy conversion back to `f64` (for diagnostics and error reporting).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from a term count or harmonic integer.
    #[inline]
    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize fits in scalar")
    }
}

impl<T> Real for T where
    T: nalgebra::RealField + FloatConst + FromPrimitive + ToPrimitive + Copy + Default
{
}
