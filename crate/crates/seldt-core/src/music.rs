//! Frame-wise multi-source DOA estimation: MUSIC pseudospectrum, spherical
//! peak finding and MDL source counting.
//!
//! With four ambisonic channels the signal subspace holds at most three
//! sources, so estimated counts are clamped to three everywhere.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex;
use thiserror::Error;

use crate::geometry::{foa_steering_vector, AngularGrid, Doa, GeometryError};
use crate::scene::AmbisonicClip;
use crate::spectral::{broadband_covariance, stft, SpatialCovariance, SpectralError};
use crate::spectral::{DEFAULT_HOP, DEFAULT_WINDOW_LEN};

/// Subspace limit for a 4-channel array.
pub const MAX_SOURCES: usize = 3;

const CHANNELS: usize = 4;
const EIGENVALUE_FLOOR_FRACTION: f64 = 1e-12;
const DENOMINATOR_FLOOR: f64 = 1e-24;

#[derive(Debug, Error, PartialEq)]
pub enum MusicError {
    #[error("source count {0} outside 1..={MAX_SOURCES}")]
    InvalidSourceCount(usize),
    #[error("covariance not positive semidefinite: min eigenvalue {min_eigenvalue} (trace {trace})")]
    NotPositiveSemidefinite { min_eigenvalue: f64, trace: f64 },
    #[error("MDL needs at least 4 snapshots, covariance has {0}")]
    InsufficientSnapshots(usize),
    #[error("oracle counts cover {got} frames but the spectrogram has {expected}")]
    OracleLengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// MUSIC score surface over an angular grid.
#[derive(Debug, Clone)]
pub struct Pseudospectrum {
    pub grid: AngularGrid,
    /// One strictly positive value per grid point, elevation-major order.
    pub values: Vec<f64>,
}

/// Per-frame DOA estimates at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FramewiseDoas {
    pub frames: Vec<Vec<Doa>>,
    pub frame_rate_hz: f64,
}

impl FramewiseDoas {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

/// Where the per-frame source count comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CountingMode {
    /// Ground-truth active-source counts, one per analysis frame.
    Oracle(Vec<usize>),
    /// Minimum-description-length estimation from the covariance eigenvalues.
    Mdl,
}

/// Eigenvalues sorted descending with their eigenvectors, ties keeping the
/// decomposition's index order (stable sort).
fn sorted_eigen(
    cov: &SpatialCovariance,
) -> (Vec<f64>, Vec<Vector4<Complex<f64>>>) {
    let eig = SymmetricEigen::new(cov.matrix);
    let mut order: Vec<usize> = (0..CHANNELS).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    (values, vectors)
}

fn check_psd(cov: &SpatialCovariance, eigenvalues: &[f64]) -> Result<(), MusicError> {
    let trace = cov.trace_re();
    let min_eigenvalue = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eigenvalue < -1e-9 * trace.abs().max(1e-300) {
        return Err(MusicError::NotPositiveSemidefinite {
            min_eigenvalue,
            trace,
        });
    }
    Ok(())
}

/// MUSIC pseudospectrum for `k` sources over `grid`.
///
/// The value at grid point `g` is `1 / (a(g)^H E_n E_n^H a(g))` with `a` the
/// FOA steering vector and `E_n` the eigenvectors of the `4 - k` smallest
/// eigenvalues. The denominator is floored to keep values finite.
pub fn music_pseudospectrum(
    cov: &SpatialCovariance,
    k: usize,
    grid: &AngularGrid,
) -> Result<Pseudospectrum, MusicError> {
    if k == 0 || k >= CHANNELS {
        return Err(MusicError::InvalidSourceCount(k));
    }
    let (eigenvalues, eigenvectors) = sorted_eigen(cov);
    check_psd(cov, &eigenvalues)?;
    let noise_vectors = &eigenvectors[k..];

    let mut values = Vec::with_capacity(grid.len());
    for ie in 0..grid.n_elevation() {
        for ia in 0..grid.n_azimuth() {
            let a = foa_steering_vector(&grid.doa_at(ie, ia)).gains();
            let mut denom = 0.0;
            for e in noise_vectors {
                let mut dot = Complex::new(0.0, 0.0);
                for (c, &g) in a.iter().enumerate() {
                    dot += e[c].conj() * g;
                }
                denom += dot.norm_sqr();
            }
            values.push(1.0 / denom.max(DENOMINATOR_FLOOR));
        }
    }
    Ok(Pseudospectrum {
        grid: grid.clone(),
        values,
    })
}

/// Local maxima of the pseudospectrum over the 8-neighborhood on the
/// (azimuth, elevation) grid, with azimuth wraparound and no elevation
/// wraparound. Peaks are sorted by value descending (ties by grid order)
/// and the top `k` returned; fewer are returned when fewer maxima exist.
pub fn spherical_peak_finding(p: &Pseudospectrum, k: usize) -> Vec<Doa> {
    if k == 0 {
        return Vec::new();
    }
    let grid = &p.grid;
    let n_az = grid.n_azimuth() as isize;
    let n_el = grid.n_elevation() as isize;

    let mut peaks: Vec<(usize, f64)> = Vec::new();
    for ie in 0..n_el {
        for ia in 0..n_az {
            let here = p.values[grid.flat_index(ie as usize, ia as usize)];
            let mut is_peak = true;
            'neighbors: for de in -1..=1isize {
                for da in -1..=1isize {
                    if de == 0 && da == 0 {
                        continue;
                    }
                    let ne = ie + de;
                    if ne < 0 || ne >= n_el {
                        continue; // no elevation wrap; edge rows have fewer neighbors
                    }
                    let na = (ia + da).rem_euclid(n_az);
                    if n_az == 1 && da != 0 {
                        continue;
                    }
                    let neighbor = p.values[grid.flat_index(ne as usize, na as usize)];
                    if neighbor >= here {
                        is_peak = false;
                        break 'neighbors;
                    }
                }
            }
            if is_peak {
                peaks.push((grid.flat_index(ie as usize, ia as usize), here));
            }
        }
    }

    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    peaks
        .into_iter()
        .take(k)
        .map(|(idx, _)| {
            let (ie, ia) = grid.unflatten(idx);
            grid.doa_at(ie, ia)
        })
        .collect()
}

/// Wax–Kailath MDL source-count estimate from the covariance eigenvalues.
///
/// `MDL(k) = -N (M-k) ln(gm_k / am_k) + k (2M-k) ln(N) / 2` with `M = 4`,
/// `N` the snapshot count and `gm_k`/`am_k` the geometric/arithmetic means
/// of the `4 - k` smallest eigenvalues (floored at `1e-12 * trace`).
/// Returns the arg-min over `k = 0..=3`, ties resolved to the smaller `k`.
pub fn estimate_source_count_mdl(cov: &SpatialCovariance) -> Result<usize, MusicError> {
    if cov.snapshot_count < CHANNELS {
        return Err(MusicError::InsufficientSnapshots(cov.snapshot_count));
    }
    let trace = cov.trace_re();
    if trace <= 0.0 {
        return Ok(0);
    }
    let (mut eigenvalues, _) = sorted_eigen(cov);
    check_psd(cov, &eigenvalues)?;
    let floor = EIGENVALUE_FLOOR_FRACTION * trace;
    for v in eigenvalues.iter_mut() {
        *v = v.max(floor);
    }

    let n = cov.snapshot_count as f64;
    let m = CHANNELS as f64;
    let mut best_k = 0usize;
    let mut best_score = f64::INFINITY;
    for k in 0..=MAX_SOURCES {
        let tail = &eigenvalues[k..];
        let log_gm = tail.iter().map(|v| v.ln()).sum::<f64>() / tail.len() as f64;
        let am = tail.iter().sum::<f64>() / tail.len() as f64;
        let kf = k as f64;
        let score = -n * (m - kf) * (log_gm - am.ln()) + 0.5 * kf * (2.0 * m - kf) * n.ln();
        if score < best_score {
            best_score = score;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// Parameters for [`estimate_frame_doas`].
#[derive(Debug, Clone, PartialEq)]
pub struct MusicConfig {
    /// 10 for stationary-source material, 1 for moving.
    pub grid_resolution_deg: f64,
    pub elevation_range: (f64, f64),
    pub stft_window_len: usize,
    pub stft_hop: usize,
}

impl MusicConfig {
    pub fn new(grid_resolution_deg: f64, elevation_range: (f64, f64)) -> Self {
        Self {
            grid_resolution_deg,
            elevation_range,
            stft_window_len: DEFAULT_WINDOW_LEN,
            stft_hop: DEFAULT_HOP,
        }
    }
}

/// Full frame-wise estimation pipeline: STFT, per-frame broadband
/// covariance, source counting (oracle or MDL), pseudospectrum and peak
/// finding. Frames counted as silent or zero-source emit empty lists.
pub fn estimate_frame_doas(
    clip: &AmbisonicClip,
    mode: &CountingMode,
    config: &MusicConfig,
) -> Result<FramewiseDoas, MusicError> {
    let spec = stft(clip, config.stft_window_len, config.stft_hop)?;
    let grid = AngularGrid::new(config.grid_resolution_deg, config.elevation_range)?;

    if let CountingMode::Oracle(counts) = mode {
        if counts.len() != spec.n_frames() {
            return Err(MusicError::OracleLengthMismatch {
                expected: spec.n_frames(),
                got: counts.len(),
            });
        }
    }

    let mut frames = Vec::with_capacity(spec.n_frames());
    for f in 0..spec.n_frames() {
        let cov = broadband_covariance(&spec, f)?;
        let k = match mode {
            CountingMode::Oracle(counts) => counts[f].min(MAX_SOURCES),
            CountingMode::Mdl => {
                if cov.trace_re() <= 0.0 {
                    0
                } else {
                    estimate_source_count_mdl(&cov)?
                }
            }
        };
        if k == 0 || cov.trace_re() <= 0.0 {
            frames.push(Vec::new());
            continue;
        }
        let pseudo = music_pseudospectrum(&cov, k, &grid)?;
        frames.push(spherical_peak_finding(&pseudo, k));
    }

    Ok(FramewiseDoas {
        frames,
        frame_rate_hz: spec.frame_rate_hz(),
    })
}
