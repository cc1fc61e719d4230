//! Multipath channel frequency response synthesis.
//!
//! The wireless channel between a transmitter and an `N`-antenna receiver is
//! modeled as a sum of `P` discrete propagation paths. For OFDM subcarrier
//! `k` (running over `-K/2 .. K/2-1`) and receive antenna `n`, the channel
//! frequency response is
//!
//! ```text
//! h[k][n] = sum_p A_p * exp(-j 2 pi (f_c + k df) tau_{p,n})
//! tau_{p,n} = (l_p + n sin(theta_p) d_rx) / c
//! ```
//!
//! where `l_p` is the path length, `theta_p` the angle of arrival measured
//! clockwise from array boresight (positive to the right), and `d_rx` the
//! antenna spacing with the leftmost antenna as phase reference. Synthesized
//! samples drive the estimator with ground-truth-controlled inputs.

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT_MPS: f64 = 299_792_458.0;

/// OFDM channel sounding configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Main carrier frequency f_c (Hz).
    pub carrier_freq_hz: f64,
    /// Subcarrier spacing df (Hz); the OFDM symbol time is 1/df.
    pub subcarrier_spacing_hz: f64,
    /// Number of subcarriers K (even); indices run over -K/2 .. K/2-1.
    pub num_subcarriers: usize,
    /// Number of receive antennas N.
    pub num_rx_antennas: usize,
    /// Linear-array element spacing (m). Defaults to lambda/2.
    #[serde(default)]
    pub antenna_spacing_m: Option<f64>,
    /// Propagation speed (m/s).
    #[serde(default = "default_c")]
    pub speed_of_light_mps: f64,
}

fn default_c() -> f64 {
    SPEED_OF_LIGHT_MPS
}

impl ChannelConfig {
    /// Build a config with half-wavelength antenna spacing.
    pub fn new(
        carrier_freq_hz: f64,
        subcarrier_spacing_hz: f64,
        num_subcarriers: usize,
        num_rx_antennas: usize,
    ) -> Result<Self> {
        let cfg = Self {
            carrier_freq_hz,
            subcarrier_spacing_hz,
            num_subcarriers,
            num_rx_antennas,
            antenna_spacing_m: None,
            speed_of_light_mps: SPEED_OF_LIGHT_MPS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Carrier wavelength lambda = c / f_c (m).
    pub fn wavelength_m(&self) -> f64 {
        self.speed_of_light_mps / self.carrier_freq_hz
    }

    /// Effective antenna spacing: the configured value or lambda/2.
    pub fn spacing_m(&self) -> f64 {
        self.antenna_spacing_m
            .unwrap_or_else(|| self.wavelength_m() / 2.0)
    }

    /// Sounded bandwidth K * df (Hz).
    pub fn bandwidth_hz(&self) -> f64 {
        self.num_subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// Signed subcarrier index for matrix row `row` (row 0 maps to -K/2).
    pub fn subcarrier_index(&self, row: usize) -> i64 {
        row as i64 - (self.num_subcarriers as i64) / 2
    }

    /// Absolute frequency of matrix row `row`: f_c + k * df.
    pub fn subcarrier_freq_hz(&self, row: usize) -> f64 {
        self.carrier_freq_hz + self.subcarrier_index(row) as f64 * self.subcarrier_spacing_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.carrier_freq_hz <= 0.0 {
            return Err(Error::Config("carrier frequency must be positive".into()));
        }
        if self.subcarrier_spacing_hz <= 0.0 {
            return Err(Error::Config("subcarrier spacing must be positive".into()));
        }
        if self.num_subcarriers < 2 || self.num_subcarriers % 2 != 0 {
            return Err(Error::Config(format!(
                "number of subcarriers must be even and >= 2, got {}",
                self.num_subcarriers
            )));
        }
        if self.num_rx_antennas < 1 {
            return Err(Error::Config("need at least one receive antenna".into()));
        }
        if self.spacing_m() <= 0.0 {
            return Err(Error::Config("antenna spacing must be positive".into()));
        }
        if self.speed_of_light_mps <= 0.0 {
            return Err(Error::Config("propagation speed must be positive".into()));
        }
        Ok(())
    }
}

/// One propagation path: length, angle of arrival and complex attenuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultipathComponent {
    /// Path length l_p (m), >= 0.
    pub path_length_m: f64,
    /// Angle of arrival (deg), clockwise from boresight; positive = right.
    pub aoa_deg: f64,
    /// Complex attenuation A_p.
    pub amplitude: Complex64,
}

impl MultipathComponent {
    pub fn new(path_length_m: f64, aoa_deg: f64, amplitude: Complex64) -> Result<Self> {
        if !(path_length_m >= 0.0) {
            return Err(Error::Config(format!(
                "path length must be >= 0, got {path_length_m}"
            )));
        }
        if !(-90.0..=90.0).contains(&aoa_deg) {
            return Err(Error::Config(format!(
                "angle of arrival must lie in [-90, 90] deg, got {aoa_deg}"
            )));
        }
        Ok(Self {
            path_length_m,
            aoa_deg,
            amplitude,
        })
    }

    /// Real-amplitude convenience constructor.
    pub fn real(path_length_m: f64, aoa_deg: f64, amplitude: f64) -> Result<Self> {
        Self::new(path_length_m, aoa_deg, Complex64::new(amplitude, 0.0))
    }
}

/// One channel snapshot: a K x N complex matrix plus its capture timestamp.
///
/// Rows are subcarriers in ascending index order (row 0 is k = -K/2),
/// columns are receive antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct CfrSample {
    pub timestamp_s: f64,
    pub h: Array2<Complex64>,
}

impl CfrSample {
    /// Validate dimensions against a config and that all entries are finite.
    pub fn check(&self, cfg: &ChannelConfig) -> Result<()> {
        if self.h.nrows() != cfg.num_subcarriers || self.h.ncols() != cfg.num_rx_antennas {
            return Err(Error::Config(format!(
                "CFR matrix is {}x{}, config expects {}x{}",
                self.h.nrows(),
                self.h.ncols(),
                cfg.num_subcarriers,
                cfg.num_rx_antennas
            )));
        }
        if self.h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Config("CFR contains non-finite entries".into()));
        }
        Ok(())
    }

    /// Total power sum |h[k][n]|^2.
    pub fn power(&self) -> f64 {
        self.h.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Propagation delay of path `comp` at antenna `n`:
/// `(l_p + n sin(theta) d_rx) / c`. The reference antenna (n = 0) carries no
/// array offset.
pub fn path_delay(comp: &MultipathComponent, n: usize, cfg: &ChannelConfig) -> f64 {
    debug_assert!(n < cfg.num_rx_antennas);
    let array_offset_m = n as f64 * comp.aoa_deg.to_radians().sin() * cfg.spacing_m();
    (comp.path_length_m + array_offset_m) / cfg.speed_of_light_mps
}

/// Synthesize one CFR snapshot from a parametric path list.
///
/// Entries are `sum_p A_p exp(-j 2 pi (f_c + k df) tau_{p,n})` plus circular
/// complex Gaussian noise with total standard deviation `noise_std`
/// (`E|noise|^2 = noise_std^2`, i.i.d. across entries). The noise stream is
/// fully determined by `seed`; `noise_std = 0` yields a deterministic,
/// noise-free sample.
pub fn synthesize_cfr(
    paths: &[MultipathComponent],
    cfg: &ChannelConfig,
    timestamp_s: f64,
    noise_std: f64,
    seed: u64,
) -> Result<CfrSample> {
    cfg.validate()?;
    if noise_std < 0.0 {
        return Err(Error::Config("noise std must be >= 0".into()));
    }
    let (k_count, n_count) = (cfg.num_subcarriers, cfg.num_rx_antennas);
    let mut h = Array2::<Complex64>::zeros((k_count, n_count));
    for comp in paths {
        for n in 0..n_count {
            let tau = path_delay(comp, n, cfg);
            for row in 0..k_count {
                let phase = -2.0 * std::f64::consts::PI * cfg.subcarrier_freq_hz(row) * tau;
                h[[row, n]] += comp.amplitude * Complex64::from_polar(1.0, phase);
            }
        }
    }
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // std per real component so that E|z|^2 = noise_std^2
        let normal = Normal::new(0.0, noise_std / std::f64::consts::SQRT_2)
            .map_err(|e| Error::Config(format!("bad noise distribution: {e}")))?;
        for row in 0..k_count {
            for n in 0..n_count {
                let re: f64 = normal.sample(&mut rng);
                let im: f64 = normal.sample(&mut rng);
                h[[row, n]] += Complex64::new(re, im);
            }
        }
    }
    let sample = CfrSample {
        timestamp_s,
        h,
    };
    sample.check(cfg)?;
    Ok(sample)
}
