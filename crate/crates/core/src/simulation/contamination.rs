use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Multiplies the responses of `⌊fraction · n⌋` uniformly chosen rows by
/// `factor`. Returns the new responses and the sorted modified rows.
pub fn contaminate(
    y: &[f64],
    fraction: f64,
    factor: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if !(fraction.is_finite() && (0.0..1.0).contains(&fraction)) {
        return Err(Error::Usage(format!(
            "contamination fraction must lie in [0, 1), got {fraction}"
        )));
    }
    if !factor.is_finite() {
        return Err(Error::Usage(format!(
            "contamination factor must be finite, got {factor}"
        )));
    }
    let n = y.len();
    let m = (fraction * n as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = sample(&mut rng, n, m).into_vec();
    rows.sort_unstable();
    let mut out = y.to_vec();
    for &i in &rows {
        out[i] *= factor;
    }
    Ok((out, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modifies_floor_of_fraction() {
        let y: Vec<f64> = (0..150).map(|i| i as f64).collect();
        let (out, rows) = contaminate(&y, 0.05, 2.5, 1).unwrap();
        assert_eq!(rows.len(), 7);
        for i in 0..150 {
            let expected = if rows.contains(&i) { 2.5 * y[i] } else { y[i] };
            assert_eq!(out[i], expected);
        }
    }

    #[test]
    fn unit_factor_is_identity_and_seed_is_deterministic() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(contaminate(&y, 0.3, 1.0, 4).unwrap().0, y.to_vec());
        assert_eq!(
            contaminate(&y, 0.3, 2.0, 4).unwrap(),
            contaminate(&y, 0.3, 2.0, 4).unwrap()
        );
    }

    #[test]
    fn fraction_range_is_checked() {
        for f in [-0.1, 1.0, f64::NAN] {
            assert!(matches!(
                contaminate(&[1.0], f, 2.0, 0),
                Err(Error::Usage(_))
            ));
        }
        assert!(contaminate(&[1.0, 2.0], 0.0, 2.0, 0).unwrap().1.is_empty());
    }
}
