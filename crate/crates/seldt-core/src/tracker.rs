//! Rao-Blackwellized Monte-Carlo data-association particle filter.
//!
//! Each particle carries a hypothesis about measurement origins: every
//! incoming DOA is attributed to an existing target, clutter, or a newborn
//! source, sampled from the exact association posterior. Conditional on the
//! sampled associations, per-target state is handled analytically by a
//! constant-velocity Kalman filter in (azimuth, elevation) with wrapped
//! azimuth residuals. Tracks are read from the maximum-weight particle.
//!
//! Filtering is strictly sequential in frame order and deterministic for a
//! fixed (measurement stream, config, seed).

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{
    wrap_angle_diff_deg, wrap_azimuth_deg, Doa, SPHERE_SQUARE_DEG, SQUARE_DEG_PER_STERADIAN,
};
use crate::music::FramewiseDoas;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("particle set is empty")]
    EmptyParticleSet,
    #[error("all particle weights are zero")]
    AllZeroWeights,
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
}

/// Filter parameters. The defaults are declared values, not tuned against
/// any published figures; everything is overridable via the key=value
/// config format in [`crate::io`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrackerConfig {
    pub n_particles: usize,
    /// Prior probability that a measurement is a newborn source.
    pub birth_prior: f64,
    /// Clutter measurement density, per steradian.
    pub clutter_density: f64,
    /// Hard removal after this many frames without an association.
    pub death_after_frames: usize,
    /// Per-frame hazard slope: survival = 1 - decay * frames_since_update.
    pub survival_decay: f64,
    /// White-noise acceleration spectral density, (deg/s²)² per Hz.
    pub process_noise_q: f64,
    /// Measurement noise std dev in degrees (typically the grid resolution).
    pub measurement_noise_deg: f64,
    /// Resample when ESS drops below this fraction of the particle count.
    pub ess_threshold_fraction: f64,
    /// Tracks need this many consecutive associated frames to be reported.
    pub confirm_after: usize,
    /// Concurrent targets allowed per particle.
    pub max_targets: usize,
    /// Velocity std dev of the birth covariance, deg/s.
    pub birth_velocity_std_deg_s: f64,
    pub rng_seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            n_particles: 100,
            birth_prior: 0.02,
            clutter_density: 0.01,
            death_after_frames: 25,
            survival_decay: 0.02,
            process_noise_q: 400.0,
            measurement_noise_deg: 10.0,
            ess_threshold_fraction: 0.5,
            confirm_after: 10,
            max_targets: 5,
            birth_velocity_std_deg_s: 60.0,
            rng_seed: 0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let positive = [
            ("birth_prior", self.birth_prior),
            ("clutter_density", self.clutter_density),
            ("survival_decay", self.survival_decay),
            ("process_noise_q", self.process_noise_q),
            ("measurement_noise_deg", self.measurement_noise_deg),
            ("birth_velocity_std_deg_s", self.birth_velocity_std_deg_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(TrackerError::InvalidConfig(format!("{name} = {v} must be > 0")));
            }
        }
        if self.n_particles == 0 {
            return Err(TrackerError::InvalidConfig("n_particles = 0".into()));
        }
        if self.max_targets == 0 {
            return Err(TrackerError::InvalidConfig("max_targets = 0".into()));
        }
        if !(self.ess_threshold_fraction > 0.0 && self.ess_threshold_fraction <= 1.0) {
            return Err(TrackerError::InvalidConfig(format!(
                "ess_threshold_fraction = {} outside (0, 1]",
                self.ess_threshold_fraction
            )));
        }
        Ok(())
    }
}

/// Kalman state of one tracked source: mean `[az, el, v_az, v_el]` and its
/// covariance, plus association bookkeeping counters.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub frames_since_update: usize,
    pub age_frames: usize,
}

impl TargetState {
    /// Fresh state at a measurement with zero prior velocity.
    pub fn born_at(z: &Doa, config: &TrackerConfig) -> Self {
        let r = config.measurement_noise_deg * config.measurement_noise_deg;
        let v = config.birth_velocity_std_deg_s * config.birth_velocity_std_deg_s;
        Self {
            mean: Vector4::new(z.azimuth_deg(), z.elevation_deg(), 0.0, 0.0),
            covariance: Matrix4::from_diagonal(&Vector4::new(r, r, v, v)),
            frames_since_update: 0,
            age_frames: 0,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.mean[0], self.mean[1]]
    }
}

/// Constant-velocity prediction over `dt` seconds with white-noise
/// acceleration of spectral density `q`. The azimuth mean is re-wrapped.
pub fn kf_predict(state: &TargetState, dt: f64, q: f64) -> TargetState {
    let mut mean = state.mean;
    mean[0] = wrap_azimuth_deg(mean[0] + mean[2] * dt);
    mean[1] += mean[3] * dt;

    let f = transition_matrix(dt);
    let mut covariance = f * state.covariance * f.transpose() + process_noise(dt, q);
    symmetrize(&mut covariance);

    TargetState {
        mean,
        covariance,
        frames_since_update: state.frames_since_update,
        age_frames: state.age_frames,
    }
}

fn transition_matrix(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

fn process_noise(dt: f64, q: f64) -> Matrix4<f64> {
    let d3 = dt * dt * dt / 3.0;
    let d2 = dt * dt / 2.0;
    let mut m = Matrix4::zeros();
    m[(0, 0)] = q * d3;
    m[(1, 1)] = q * d3;
    m[(0, 2)] = q * d2;
    m[(2, 0)] = q * d2;
    m[(1, 3)] = q * d2;
    m[(3, 1)] = q * d2;
    m[(2, 2)] = q * dt;
    m[(3, 3)] = q * dt;
    m
}

fn symmetrize(m: &mut Matrix4<f64>) {
    let t = m.transpose();
    *m = (*m + t) * 0.5;
}

/// Innovation (wrapped in azimuth) and its covariance for measuring `z`
/// against a predicted state.
fn innovation(state: &TargetState, z: &Doa, r: f64) -> (Vector2<f64>, Matrix2<f64>) {
    let nu = Vector2::new(
        wrap_angle_diff_deg(z.azimuth_deg() - state.mean[0]),
        z.elevation_deg() - state.mean[1],
    );
    let p = state.covariance.fixed_view::<2, 2>(0, 0);
    let s = Matrix2::new(p[(0, 0)] + r, p[(0, 1)], p[(1, 0)], p[(1, 1)] + r);
    (nu, s)
}

/// Gaussian density of the innovation, per square degree.
fn innovation_likelihood(nu: &Vector2<f64>, s: &Matrix2<f64>) -> f64 {
    let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
    if det <= 0.0 {
        return 0.0;
    }
    let inv = Matrix2::new(s[(1, 1)], -s[(0, 1)], -s[(1, 0)], s[(0, 0)]) / det;
    let quad = (nu.transpose() * inv * nu)[(0, 0)];
    (-0.5 * quad).exp() / (std::f64::consts::TAU * det.sqrt())
}

/// Kalman measurement update (Joseph form); azimuth re-wrapped.
pub fn kf_update(state: &TargetState, z: &Doa, measurement_noise_deg: f64) -> TargetState {
    let r = measurement_noise_deg * measurement_noise_deg;
    let (nu, s) = innovation(state, z, r);
    let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
    let s_inv = Matrix2::new(s[(1, 1)], -s[(0, 1)], -s[(1, 0)], s[(0, 0)]) / det;

    let ph = {
        // P H^T: first two columns of P
        let mut m = nalgebra::Matrix4x2::zeros();
        for i in 0..4 {
            m[(i, 0)] = state.covariance[(i, 0)];
            m[(i, 1)] = state.covariance[(i, 1)];
        }
        m
    };
    let gain = ph * s_inv;

    let mut mean = state.mean + gain * nu;
    mean[0] = wrap_azimuth_deg(mean[0]);

    // Joseph form keeps the covariance symmetric PSD
    let mut i_kh: Matrix4<f64> = Matrix4::identity();
    for i in 0..4 {
        i_kh[(i, 0)] -= gain[(i, 0)];
        i_kh[(i, 1)] -= gain[(i, 1)];
    }
    let r_mat = Matrix2::from_diagonal(&Vector2::new(r, r));
    let mut covariance =
        i_kh * state.covariance * i_kh.transpose() + gain * r_mat * gain.transpose();
    symmetrize(&mut covariance);

    TargetState {
        mean,
        covariance,
        frames_since_update: 0,
        age_frames: state.age_frames,
    }
}

/// Where a measurement is attributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Association {
    Clutter,
    Target(u64),
    Birth,
}

#[derive(Debug, Clone)]
struct Target {
    state: TargetState,
    birth_frame: usize,
    /// Posterior (az, el) per frame since birth.
    positions: Vec<[f64; 2]>,
    last_associated_frame: usize,
    current_run: usize,
    best_run: usize,
    updated_this_frame: bool,
}

/// Archived trajectory of a target that died during filtering.
#[derive(Debug, Clone)]
struct FinishedTrack {
    track_id: u64,
    birth_frame: usize,
    positions: Vec<[f64; 2]>,
    last_associated_frame: usize,
    best_run: usize,
}

/// One data-association hypothesis with its Kalman-filtered targets.
#[derive(Debug, Clone)]
pub struct Particle {
    pub weight: f64,
    targets: BTreeMap<u64, Target>,
    next_track_id: u64,
    archive: Vec<FinishedTrack>,
}

impl Particle {
    fn new(weight: f64) -> Self {
        Self {
            weight,
            targets: BTreeMap::new(),
            next_track_id: 0,
            archive: Vec::new(),
        }
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn target_state(&self, track_id: u64) -> Option<&TargetState> {
        self.targets.get(&track_id).map(|t| &t.state)
    }

    pub fn track_ids(&self) -> Vec<u64> {
        self.targets.keys().copied().collect()
    }
}

/// Normalized association posterior for measurement `z` given a particle
/// whose targets are already predicted to the current frame. The returned
/// normalizer (marginal likelihood of `z`) multiplies the particle weight.
pub fn association_posterior(
    particle: &Particle,
    z: &Doa,
    config: &TrackerConfig,
) -> (Vec<(Association, f64)>, f64) {
    let mut masses: Vec<(Association, f64)> = Vec::with_capacity(particle.targets.len() + 2);

    masses.push((
        Association::Clutter,
        config.clutter_density / SQUARE_DEG_PER_STERADIAN,
    ));
    for (&id, target) in &particle.targets {
        let r = config.measurement_noise_deg * config.measurement_noise_deg;
        let (nu, s) = innovation(&target.state, z, r);
        masses.push((Association::Target(id), innovation_likelihood(&nu, &s)));
    }
    if particle.targets.len() < config.max_targets {
        masses.push((Association::Birth, config.birth_prior / SPHERE_SQUARE_DEG));
    }

    let normalizer: f64 = masses.iter().map(|(_, m)| m).sum();
    if normalizer > 0.0 {
        for (_, m) in masses.iter_mut() {
            *m /= normalizer;
        }
    }
    (masses, normalizer)
}

fn sample_association(
    masses: &[(Association, f64)],
    rng: &mut impl Rng,
) -> Association {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (assoc, m) in masses {
        acc += m;
        if u < acc {
            return *assoc;
        }
    }
    masses.last().map(|(a, _)| *a).unwrap_or(Association::Clutter)
}

/// Death step for one particle: targets unassociated this frame age by one
/// frame, anything past `death_after_frames` is removed, and remaining
/// targets survive with probability `1 - survival_decay * frames_since_update`
/// (clamped), sampled per particle. Freshly updated targets never die.
pub fn death_step(
    particle: &mut Particle,
    config: &TrackerConfig,
    rng: &mut impl Rng,
) {
    let ids: Vec<u64> = particle.targets.keys().copied().collect();
    for id in ids {
        let target = particle.targets.get_mut(&id).expect("id just listed");
        if !target.updated_this_frame {
            target.state.frames_since_update += 1;
        }
        let fsu = target.state.frames_since_update;
        let mut dies = fsu > config.death_after_frames;
        if !dies && fsu > 0 {
            let survival = (1.0 - config.survival_decay * fsu as f64).clamp(0.0, 1.0);
            dies = rng.gen::<f64>() >= survival;
        }
        if dies {
            let t = particle.targets.remove(&id).expect("present");
            particle.archive.push(FinishedTrack {
                track_id: id,
                birth_frame: t.birth_frame,
                positions: t.positions,
                last_associated_frame: t.last_associated_frame,
                best_run: t.best_run,
            });
        }
    }
}

/// Effective sample size `1 / Σ w²` of normalized weights.
pub fn effective_sample_size(particles: &[Particle]) -> f64 {
    let sum_sq: f64 = particles.iter().map(|p| p.weight * p.weight).sum();
    if sum_sq <= 0.0 {
        0.0
    } else {
        1.0 / sum_sq
    }
}

/// Systematic (low-variance) resampling to equal-weight copies.
pub fn systematic_resample(
    particles: &mut Vec<Particle>,
    rng: &mut impl Rng,
) -> Result<(), TrackerError> {
    let n = particles.len();
    if n == 0 {
        return Err(TrackerError::EmptyParticleSet);
    }
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    if total <= 0.0 {
        return Err(TrackerError::AllZeroWeights);
    }

    let step = total / n as f64;
    let mut pointer = rng.gen::<f64>() * step;
    let mut cumulative = particles[0].weight;
    let mut source = 0usize;
    let mut picks = Vec::with_capacity(n);
    for _ in 0..n {
        while pointer > cumulative && source + 1 < n {
            source += 1;
            cumulative += particles[source].weight;
        }
        picks.push(source);
        pointer += step;
    }

    let mut resampled: Vec<Particle> = picks
        .into_iter()
        .map(|i| particles[i].clone())
        .collect();
    for p in resampled.iter_mut() {
        p.weight = 1.0 / n as f64;
    }
    *particles = resampled;
    Ok(())
}

/// An identified trajectory with contiguous per-frame positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub birth_frame: usize,
    pub death_frame: usize,
    /// One DOA per frame from `birth_frame` to `death_frame` inclusive.
    pub doas: Vec<Doa>,
}

/// The tracks reported by the filter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackSet {
    pub tracks: Vec<Track>,
}

impl TrackSet {
    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Per-frame DOAs of live tracks, for frame-wise scoring.
    pub fn to_framewise(&self, n_frames: usize, frame_rate_hz: f64) -> FramewiseDoas {
        let mut frames = vec![Vec::new(); n_frames];
        for track in &self.tracks {
            for (offset, doa) in track.doas.iter().enumerate() {
                let f = track.birth_frame + offset;
                if f < n_frames {
                    frames[f].push(*doa);
                }
            }
        }
        FramewiseDoas {
            frames,
            frame_rate_hz,
        }
    }
}

/// Sequential RBMCDA filter over a frame-rate measurement stream.
pub struct Tracker {
    config: TrackerConfig,
    particles: Vec<Particle>,
    rng: ChaCha8Rng,
    frame_index: usize,
    dt: f64,
}

impl Tracker {
    pub fn new(config: TrackerConfig, frame_rate_hz: f64) -> Result<Self, TrackerError> {
        config.validate()?;
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
            return Err(TrackerError::InvalidConfig(format!(
                "frame rate {frame_rate_hz} must be > 0"
            )));
        }
        let n = config.n_particles;
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Ok(Self {
            config,
            particles: (0..n).map(|_| Particle::new(1.0 / n as f64)).collect(),
            rng,
            frame_index: 0,
            dt: 1.0 / frame_rate_hz,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(&self.particles)
    }

    pub fn frames_processed(&self) -> usize {
        self.frame_index
    }

    /// Advances the filter by one frame of measurements, processed in the
    /// order given (peak finding emits them value-descending).
    pub fn process_frame(&mut self, measurements: &[Doa]) -> Result<(), TrackerError> {
        if self.particles.is_empty() {
            return Err(TrackerError::EmptyParticleSet);
        }
        let frame = self.frame_index;
        let config = &self.config;

        for particle in self.particles.iter_mut() {
            // predict all targets to this frame
            for target in particle.targets.values_mut() {
                target.state = kf_predict(&target.state, self.dt, config.process_noise_q);
                target.state.age_frames += 1;
                target.updated_this_frame = false;
            }

            // sequential association of each measurement
            for z in measurements {
                let (masses, normalizer) = association_posterior(particle, z, config);
                particle.weight *= normalizer;
                match sample_association(&masses, &mut self.rng) {
                    Association::Clutter => {}
                    Association::Target(id) => {
                        let target = particle.targets.get_mut(&id).expect("listed target");
                        target.state = kf_update(&target.state, z, config.measurement_noise_deg);
                        target.updated_this_frame = true;
                        target.last_associated_frame = frame;
                    }
                    Association::Birth => {
                        let id = particle.next_track_id;
                        particle.next_track_id += 1;
                        particle.targets.insert(
                            id,
                            Target {
                                state: TargetState::born_at(z, config),
                                birth_frame: frame,
                                positions: Vec::new(),
                                last_associated_frame: frame,
                                current_run: 0,
                                best_run: 0,
                                updated_this_frame: true,
                            },
                        );
                    }
                }
            }

            death_step(particle, config, &mut self.rng);

            // record posterior positions and confirmation runs
            for target in particle.targets.values_mut() {
                target.positions.push(target.state.position());
                if target.updated_this_frame {
                    target.current_run += 1;
                    target.best_run = target.best_run.max(target.current_run);
                } else {
                    target.current_run = 0;
                }
            }
        }

        // renormalize weights
        let total: f64 = self.particles.iter().map(|p| p.weight).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(TrackerError::AllZeroWeights);
        }
        for p in self.particles.iter_mut() {
            p.weight /= total;
        }

        let ess = effective_sample_size(&self.particles);
        if ess < self.config.ess_threshold_fraction * self.particles.len() as f64 {
            systematic_resample(&mut self.particles, &mut self.rng)?;
        }

        self.frame_index += 1;
        Ok(())
    }

    /// Reads confirmed tracks from the maximum-weight particle. Reported
    /// positions are the per-frame Kalman posterior means, truncated at the
    /// last associated frame.
    pub fn extract_tracks(&self) -> TrackSet {
        let Some(best) = self
            .particles
            .iter()
            .enumerate()
            .max_by(|a, b| {
                a.1.weight
                    .partial_cmp(&b.1.weight)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    // ties: keep the earliest particle
                    .then(b.0.cmp(&a.0))
            })
            .map(|(_, p)| p)
        else {
            return TrackSet::default();
        };

        let mut tracks = Vec::new();
        let finished = best.archive.iter().cloned();
        let live = best.targets.iter().map(|(&id, t)| FinishedTrack {
            track_id: id,
            birth_frame: t.birth_frame,
            positions: t.positions.clone(),
            last_associated_frame: t.last_associated_frame,
            best_run: t.best_run,
        });

        for t in finished.chain(live) {
            if t.best_run < self.config.confirm_after {
                continue;
            }
            let death_frame = t.last_associated_frame;
            let len = death_frame - t.birth_frame + 1;
            let doas = t.positions[..len.min(t.positions.len())]
                .iter()
                .map(|p| Doa::new(p[0], p[1].clamp(-90.0, 90.0)).expect("wrapped state"))
                .collect();
            tracks.push(Track {
                track_id: t.track_id,
                birth_frame: t.birth_frame,
                death_frame,
                doas,
            });
        }
        tracks.sort_by_key(|t| (t.birth_frame, t.track_id));
        TrackSet { tracks }
    }
}

/// Runs the filter over a complete frame-wise DOA stream.
pub fn run_tracker(
    measurements: &FramewiseDoas,
    config: &TrackerConfig,
) -> Result<TrackSet, TrackerError> {
    let mut tracker = Tracker::new(config.clone(), measurements.frame_rate_hz)?;
    for frame in &measurements.frames {
        tracker.process_frame(frame)?;
    }
    Ok(tracker.extract_tracks())
}
