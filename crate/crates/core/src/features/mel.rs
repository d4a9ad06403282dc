use ndarray::Array2;

use super::{FeatureConfig, FeatureError};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with centres equally spaced in mel between 0 Hz and
/// Nyquist. Each triangle peaks at 1 on its centre.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    // mel_bands + 2 edge frequencies, edges[m + 1] is the centre of filter m
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &FeatureConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        let bands = cfg.mel_bands;
        let bins = cfg.bins();
        let nyquist = cfg.sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let edges_hz: Vec<f64> = (0..bands + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (bands + 1) as f64))
            .collect();
        let bin_hz = cfg.sample_rate as f64 / cfg.fft_window as f64;

        let mut weights = Array2::zeros((bands, bins));
        for m in 0..bands {
            let (lo, centre, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            for k in 0..bins {
                let f = k as f64 * bin_hz;
                let w = if f > lo && f < centre {
                    (f - lo) / (centre - lo)
                } else if f >= centre && f < hi {
                    (hi - f) / (hi - centre)
                } else {
                    0.0
                };
                weights[[m, k]] = w;
            }
        }
        Ok(Self { weights, edges_hz })
    }

    /// `[mel_bands][fft_window / 2 + 1]`
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn centre_frequencies(&self) -> &[f64] {
        &self.edges_hz[1..self.edges_hz.len() - 1]
    }

    pub fn edge_frequencies(&self) -> &[f64] {
        &self.edges_hz
    }

    pub fn bands(&self) -> usize {
        self.weights.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 100.0, 1000.0, 22_050.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 999.985_6).abs() < 1e-3);
    }

    #[test]
    fn default_bank_shape_and_sign() {
        let fb = MelFilterbank::new(&FeatureConfig::default()).unwrap();
        assert_eq!(fb.weights().dim(), (60, 513));
        assert!(fb.weights().iter().all(|&w| w >= 0.0 && w <= 1.0));
    }

    #[test]
    fn rows_are_contiguous_triangles() {
        let fb = MelFilterbank::new(&FeatureConfig::default()).unwrap();
        for row in fb.weights().outer_iter() {
            let nz: Vec<usize> = row.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(k, _)| k).collect();
            assert!(!nz.is_empty());
            assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len(), "gap inside a band");
            // rises then falls
            let vals: Vec<f64> = nz.iter().map(|&k| row[k]).collect();
            let peak = vals.iter().cloned().enumerate().fold((0, 0.0), |a, (i, v)| if v > a.1 { (i, v) } else { a }).0;
            assert!(vals[..=peak].windows(2).all(|w| w[0] <= w[1]));
            assert!(vals[peak..].windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn bins_between_first_and_last_centre_are_covered() {
        let cfg = FeatureConfig::default();
        let fb = MelFilterbank::new(&cfg).unwrap();
        let centres = fb.centre_frequencies();
        let bin_hz = cfg.sample_rate as f64 / cfg.fft_window as f64;
        for k in 0..cfg.bins() {
            let f = k as f64 * bin_hz;
            if f >= centres[0] && f <= *centres.last().unwrap() {
                assert!(fb.weights().column(k).iter().any(|&w| w > 0.0), "bin {k} uncovered");
            }
        }
    }

    #[test]
    fn single_band_spans_to_nyquist() {
        let cfg = FeatureConfig { mel_bands: 1, ..Default::default() };
        let fb = MelFilterbank::new(&cfg).unwrap();
        assert_eq!(fb.edge_frequencies()[0], 0.0);
        assert!((fb.edge_frequencies()[2] - 22_050.0).abs() < 1e-6);
        let mid = mel_to_hz(hz_to_mel(22_050.0) / 2.0);
        assert!((fb.centre_frequencies()[0] - mid).abs() < 1e-9);
        let row = fb.weights().row(0);
        assert!(row[1] > 0.0 && row[511] > 0.0);
        assert_eq!(row[0], 0.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = FeatureConfig { fft_window: 1000, ..Default::default() };
        assert!(matches!(MelFilterbank::new(&cfg), Err(FeatureError::InvalidConfig(_))));
    }
}
