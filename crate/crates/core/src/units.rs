//! Decibel conversions. Every dB/linear conversion in the crate goes through here,
//! using the power convention `linear = 10^(dB / 10)`.

/// Floor applied before taking logarithms so zero power maps to a finite dB value.
pub const MIN_LINEAR_POWER: f64 = 1e-30;

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.max(MIN_LINEAR_POWER).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_points() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(20.0) - 100.0).abs() < 1e-12);
        assert!((db_to_linear(-10.0) - 0.1).abs() < 1e-15);
        assert!((linear_to_db(1000.0) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn zero_power_is_finite() {
        assert_eq!(linear_to_db(0.0), -300.0);
    }

    proptest! {
        #[test]
        fn round_trip(db in -150.0f64..150.0) {
            let back = linear_to_db(db_to_linear(db));
            prop_assert!((back - db).abs() < 1e-10);
        }
    }
}
