use super::{DataError, Result};

/// Linear-interpolation resampling.
///
/// Output length is `round(len * to_hz / from_hz)`; output sample `j` sits at
/// input position `j * from_hz / to_hz`, clamped to the last input sample.
pub fn resample_linear(seq: &[f64], from_hz: f64, to_hz: f64) -> Result<Vec<f64>> {
    if !(from_hz > 0.0 && to_hz > 0.0 && from_hz.is_finite() && to_hz.is_finite()) {
        return Err(DataError::Resample(format!(
            "rates must be positive and finite, got {from_hz} -> {to_hz}"
        )));
    }
    if seq.len() < 2 {
        return Err(DataError::Resample(format!(
            "need at least 2 samples, got {}",
            seq.len()
        )));
    }
    if from_hz == to_hz {
        return Ok(seq.to_vec());
    }
    let out_len = (seq.len() as f64 * to_hz / from_hz).round() as usize;
    let step = from_hz / to_hz;
    let last = seq.len() - 1;
    Ok((0..out_len)
        .map(|j| {
            let pos = j as f64 * step;
            let i = pos.floor() as usize;
            if i >= last {
                seq[last]
            } else {
                let frac = pos - i as f64;
                seq[i] + (seq[i + 1] - seq[i]) * frac
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_rate() {
        let x = vec![1.0, -2.0, 3.5];
        assert_eq!(resample_linear(&x, 700.0, 700.0).unwrap(), x);
    }

    #[test]
    fn upsample_two_points() {
        assert_eq!(
            resample_linear(&[0.0, 1.0], 1.0, 2.0).unwrap(),
            vec![0.0, 0.5, 1.0, 1.0]
        );
    }

    #[test]
    fn ramp_stays_ramp() {
        let x: Vec<f64> = (0..350).map(|i| 0.5 * i as f64 - 3.0).collect();
        let y = resample_linear(&x, 350.0, 700.0).unwrap();
        assert_eq!(y.len(), 700);
        for (j, &v) in y.iter().enumerate() {
            let pos = (j as f64 * 0.5).min(349.0);
            assert!((v - (0.5 * pos - 3.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn errors() {
        assert!(resample_linear(&[1.0], 1.0, 2.0).is_err());
        assert!(resample_linear(&[1.0, 2.0], 0.0, 2.0).is_err());
    }
}
