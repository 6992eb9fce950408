//! Multichannel STFT and broadband spatial covariance aggregation.
//!
//! The covariance feeding MUSIC is averaged over three consecutive frames
//! (truncated at the recording edges) and over all frequency bins whose
//! center lies in the 50 Hz – 8 kHz analysis band.

use nalgebra::Matrix4;
use num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::scene::AmbisonicClip;

/// Analysis band for covariance aggregation, Hz.
pub const ANALYSIS_BAND_HZ: (f64, f64) = (50.0, 8000.0);

/// Default STFT window: 40 ms at the default sample rate.
pub const DEFAULT_WINDOW_LEN: usize = 960;

/// Default hop: 50% of the window (20 ms, i.e. 50 frames/s).
pub const DEFAULT_HOP: usize = 480;

/// Frames averaged on each side of the center frame.
pub const TEMPORAL_AVERAGING_RADIUS: usize = 1;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("window length {0} must be an even number of at least 16 samples")]
    InvalidWindow(usize),
    #[error("hop {hop} must be in 1..={window}")]
    InvalidHop { hop: usize, window: usize },
    #[error("clip of {n_samples} samples shorter than one window of {window}")]
    ClipTooShort { n_samples: usize, window: usize },
    #[error("frame index {frame} out of range (T = {n_frames})")]
    FrameOutOfRange { frame: usize, n_frames: usize },
    #[error("analysis band [{lo}, {hi}] Hz holds no bins at {bin_width_hz} Hz spacing")]
    EmptyBand { lo: f64, hi: f64, bin_width_hz: f64 },
}

/// Four-channel complex spectrogram, one-sided spectra.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    n_frames: usize,
    n_bins: usize,
    frame_rate_hz: f64,
    bin_width_hz: f64,
    /// Bin vectors indexed `frame * n_bins + bin`, channels in ACN order.
    data: Vec<[Complex<f64>; 4]>,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.bin_width_hz
    }

    /// The 4-channel bin vector at (frame, bin).
    pub fn bin_vector(&self, frame: usize, bin: usize) -> &[Complex<f64>; 4] {
        &self.data[frame * self.n_bins + bin]
    }

    /// Bin index range whose center frequencies fall inside `band` (inclusive).
    pub fn band_bins(&self, band: (f64, f64)) -> std::ops::Range<usize> {
        let lo = (band.0 / self.bin_width_hz).ceil().max(0.0) as usize;
        let hi = ((band.1 / self.bin_width_hz).floor() as usize).min(self.n_bins - 1);
        if lo > hi {
            lo..lo
        } else {
            lo..hi + 1
        }
    }
}

/// Hann-windowed short-time Fourier transform of a 4-channel clip.
///
/// `T = floor((N - window) / hop) + 1` frames, `window/2 + 1` one-sided bins.
pub fn stft(clip: &AmbisonicClip, window_len: usize, hop: usize) -> Result<Spectrogram, SpectralError> {
    if window_len < 16 || window_len % 2 != 0 {
        return Err(SpectralError::InvalidWindow(window_len));
    }
    if hop == 0 || hop > window_len {
        return Err(SpectralError::InvalidHop {
            hop,
            window: window_len,
        });
    }
    let n_samples = clip.n_samples();
    if n_samples < window_len {
        return Err(SpectralError::ClipTooShort {
            n_samples,
            window: window_len,
        });
    }

    let n_frames = (n_samples - window_len) / hop + 1;
    let n_bins = window_len / 2 + 1;
    let fs = clip.sample_rate_hz as f64;

    // periodic Hann
    let window: Vec<f64> = (0..window_len)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / window_len as f64).cos()))
        .collect();

    let fft = FftPlanner::new().plan_fft_forward(window_len);
    let mut data = vec![[Complex::new(0.0, 0.0); 4]; n_frames * n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); window_len];

    for ch in 0..4 {
        let samples = &clip.channels[ch];
        for frame in 0..n_frames {
            let start = frame * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(samples[start + i] * window[i], 0.0);
            }
            fft.process(&mut buf);
            for bin in 0..n_bins {
                data[frame * n_bins + bin][ch] = buf[bin];
            }
        }
    }

    Ok(Spectrogram {
        n_frames,
        n_bins,
        frame_rate_hz: fs / hop as f64,
        bin_width_hz: fs / window_len as f64,
        data,
    })
}

/// 4x4 Hermitian spatial covariance with the number of averaged snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    pub matrix: Matrix4<Complex<f64>>,
    pub snapshot_count: usize,
}

impl SpatialCovariance {
    pub fn trace_re(&self) -> f64 {
        (0..4).map(|i| self.matrix[(i, i)].re).sum()
    }

    /// Largest asymmetry |R - R^H| entry; zero for an exactly Hermitian matrix.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let d = self.matrix[(i, j)] - self.matrix[(j, i)].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }
}

/// Broadband covariance at `frame`: mean of bin-vector outer products over
/// frames `{frame-1, frame, frame+1}` (clipped at the edges) and all bins in
/// the 50 Hz – 8 kHz analysis band.
pub fn broadband_covariance(
    spec: &Spectrogram,
    frame: usize,
) -> Result<SpatialCovariance, SpectralError> {
    covariance_over(spec, frame, TEMPORAL_AVERAGING_RADIUS, ANALYSIS_BAND_HZ)
}

/// Covariance with explicit temporal radius and frequency band.
pub fn covariance_over(
    spec: &Spectrogram,
    frame: usize,
    temporal_radius: usize,
    band: (f64, f64),
) -> Result<SpatialCovariance, SpectralError> {
    if frame >= spec.n_frames {
        return Err(SpectralError::FrameOutOfRange {
            frame,
            n_frames: spec.n_frames,
        });
    }
    let bins = spec.band_bins(band);
    if bins.is_empty() {
        return Err(SpectralError::EmptyBand {
            lo: band.0,
            hi: band.1,
            bin_width_hz: spec.bin_width_hz,
        });
    }

    let first = frame.saturating_sub(temporal_radius);
    let last = (frame + temporal_radius).min(spec.n_frames - 1);

    // accumulate the upper triangle, then mirror so the result is exactly
    // Hermitian with a real diagonal
    let mut acc = [[Complex::new(0.0, 0.0); 4]; 4];
    let mut snapshots = 0usize;
    for f in first..=last {
        for bin in bins.clone() {
            let x = spec.bin_vector(f, bin);
            for i in 0..4 {
                for j in i..4 {
                    acc[i][j] += x[i] * x[j].conj();
                }
            }
            snapshots += 1;
        }
    }

    let scale = 1.0 / snapshots as f64;
    let mut matrix = Matrix4::zeros();
    for i in 0..4 {
        matrix[(i, i)] = Complex::new(acc[i][i].re * scale, 0.0);
        for j in i + 1..4 {
            let v = acc[i][j] * scale;
            matrix[(i, j)] = v;
            matrix[(j, i)] = v.conj();
        }
    }

    Ok(SpatialCovariance {
        matrix,
        snapshot_count: snapshots,
    })
}
