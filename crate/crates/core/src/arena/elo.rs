//! Standard logistic Elo: base 10, scale 400.

use serde::{Deserialize, Serialize};

use super::ArenaError;
use crate::Scalar;

pub const INITIAL_RATING: f64 = 1500.0;
pub const DEFAULT_K_FACTOR: f64 = 32.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloRating<T = f64> {
    pub model_name: String,
    pub rating: T,
    pub games_played: u64,
}

impl<T: Scalar> EloRating<T> {
    pub fn new(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            rating: T::lit(INITIAL_RATING),
            games_played: 0,
        }
    }
}

/// `(E_a, E_b)` with `E_a = 1 / (1 + 10^((r_b - r_a)/400))`.
///
/// The smaller expectation is evaluated from the formula and the larger one
/// as its complement, which makes `E_a + E_b == 1` hold exactly in floating
/// point.
pub fn expected_scores<T: Scalar>(r_a: T, r_b: T) -> (T, T) {
    let ten = T::lit(10.0);
    let scale = T::lit(400.0);
    if r_a >= r_b {
        let e_b = T::one() / (T::one() + ten.powf((r_a - r_b) / scale));
        (T::one() - e_b, e_b)
    } else {
        let e_a = T::one() / (T::one() + ten.powf((r_b - r_a) / scale));
        (e_a, T::one() - e_a)
    }
}

/// One rated game. `score_a` is 1 (A wins), 0.5 (draw) or 0 (A loses).
pub fn elo_update<T: Scalar>(r_a: T, r_b: T, score_a: T, k_factor: T) -> Result<(T, T), ArenaError> {
    if !(r_a.is_finite() && r_b.is_finite()) {
        return Err(ArenaError::InvalidInput(format!("non-finite rating ({r_a}, {r_b})")));
    }
    if !(k_factor.is_finite() && k_factor >= T::zero()) {
        return Err(ArenaError::InvalidInput(format!("K-factor must be finite and >= 0, got {k_factor}")));
    }
    let half = T::lit(0.5);
    if !(score_a == T::one() || score_a == half || score_a == T::zero()) {
        return Err(ArenaError::InvalidInput(format!("score must be 1, 0.5 or 0, got {score_a}")));
    }
    let (e_a, e_b) = expected_scores(r_a, r_b);
    let r_a_new = r_a + k_factor * (score_a - e_a);
    let r_b_new = r_b + k_factor * ((T::one() - score_a) - e_b);
    Ok((r_a_new, r_b_new))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn even_match_win_is_sixteen() {
        assert_eq!(elo_update(1500.0, 1500.0, 1.0, 32.0).unwrap(), (1516.0, 1484.0));
        assert_eq!(elo_update(1500.0f32, 1500.0, 1.0, 32.0).unwrap(), (1516.0, 1484.0));
    }

    #[test]
    fn even_match_draw_is_unchanged() {
        assert_eq!(elo_update(1500.0, 1500.0, 0.5, 32.0).unwrap(), (1500.0, 1500.0));
    }

    #[test]
    fn favourite_loses() {
        // Closed form evaluated directly: E_a = 1 / (1 + 10^(-225/400)).
        let e_a = 1.0 / (1.0 + 10f64.powf(-225.0 / 400.0));
        let (a, b) = elo_update(1613.0, 1388.0, 0.0, 32.0).unwrap();
        assert!((a - (1613.0 - 32.0 * e_a)).abs() < 1e-9);
        assert!((b - (1388.0 + 32.0 * e_a)).abs() < 1e-9);
        // Frozen from an independent double-precision evaluation.
        assert!((a - 1587.8791444160586).abs() < 1e-9, "{a}");
        assert!((b - 1413.1208555839414).abs() < 1e-9, "{b}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(elo_update(f64::NAN, 1500.0, 1.0, 32.0).is_err());
        assert!(elo_update(1500.0, f64::INFINITY, 1.0, 32.0).is_err());
        assert!(elo_update(1500.0, 1500.0, 0.7, 32.0).is_err());
        assert!(elo_update(1500.0, 1500.0, 1.0, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn expectations_complement_exactly(a in 0.0f64..4000.0, b in 0.0f64..4000.0) {
            let (ea, eb) = expected_scores(a, b);
            prop_assert_eq!(ea + eb, 1.0);
            let (ea32, eb32) = expected_scores(a as f32, b as f32);
            prop_assert_eq!(ea32 + eb32, 1.0f32);
        }

        #[test]
        fn update_conserves_sum(a in 500.0f64..3000.0, b in 500.0f64..3000.0, s in 0usize..3, k in 1.0f64..64.0) {
            let score = s as f64 / 2.0;
            let (na, nb) = elo_update(a, b, score, k).unwrap();
            prop_assert!(((na + nb) - (a + b)).abs() <= 1e-9);
        }
    }
}
