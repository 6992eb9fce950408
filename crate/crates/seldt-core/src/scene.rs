//! Scene description and anechoic first-order-ambisonic rendering.
//!
//! A scene is a 30 s recording populated with sound events. Stationary
//! events sit on a 10° placement grid; moving events travel along great
//! circles (or azimuth-only arcs) at a constant angular velocity drawn from
//! ±10..±90 °/s in 10 °/s steps. Rendering applies the frequency-independent
//! FOA steering vector sample by sample, so no convolution is involved.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{
    angular_distance_deg, doa_to_unit_vector, foa_steering_vector, unit_vector_to_doa, Doa,
    GeometryError, UnitVector,
};
use crate::sources::SourceBank;

/// Fixed recording length in seconds.
pub const SCENE_DURATION_S: f64 = 30.0;

/// Placement grid resolution for stationary events.
pub const PLACEMENT_GRID_DEG: f64 = 10.0;

/// Default rendering sample rate; covers the 8 kHz analysis band with margin.
pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 24_000;

/// Angular velocity magnitudes available to moving events, in deg/s.
pub const VELOCITY_STEPS_DEG_S: [f64; 9] =
    [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0];

const MAX_SAMPLING_TRIES: usize = 500;
const TRAJECTORY_CHECK_STEP_S: f64 = 0.005;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("scene config unsatisfiable: {0}")]
    Unsatisfiable(String),
    #[error("invalid event {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },
    #[error("time {t} outside event activity [{onset}, {offset}]")]
    TimeOutsideActivity { t: f64, onset: f64, offset: f64 },
    #[error("source bank has no class {0}")]
    MissingClass(usize),
    #[error("sample rate mismatch: bank {bank} Hz, requested {requested} Hz")]
    SampleRateMismatch { bank: u32, requested: u32 },
    #[error("bank signal for class {class_id} too short: {have} < {need} samples")]
    SignalTooShort {
        class_id: usize,
        have: usize,
        need: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How an event moves while active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionMode {
    Stationary,
    /// Azimuth advances at the angular velocity; elevation stays fixed.
    AzimuthOnly,
    /// Start direction rotates about `axis` at the angular velocity. The
    /// axis must be orthogonal to the start direction so the path is a
    /// great circle traversed at constant arc speed.
    GreatCircle { axis: UnitVector },
}

impl MotionMode {
    pub fn label(&self) -> &'static str {
        match self {
            MotionMode::Stationary => "stationary",
            MotionMode::AzimuthOnly => "azimuth_only",
            MotionMode::GreatCircle { .. } => "great_circle",
        }
    }
}

/// One sound event of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub class_id: usize,
    pub onset_s: f64,
    pub offset_s: f64,
    pub start_doa: Doa,
    pub angular_velocity_deg_s: f64,
    pub motion_mode: MotionMode,
    pub distance_m: f64,
}

impl EventSpec {
    pub fn duration_s(&self) -> f64 {
        self.offset_s - self.onset_s
    }

    pub fn is_active_at(&self, t: f64) -> bool {
        t >= self.onset_s && t < self.offset_s
    }

    /// Checks the structural invariants of a single event.
    pub fn validate(&self, elevation_range: (f64, f64)) -> Result<(), String> {
        if !(0.0 <= self.onset_s && self.onset_s < self.offset_s && self.offset_s <= SCENE_DURATION_S)
        {
            return Err(format!(
                "activity [{}, {}) outside 0..{}",
                self.onset_s, self.offset_s, SCENE_DURATION_S
            ));
        }
        if !(1.0..=10.0).contains(&self.distance_m) {
            return Err(format!("distance {} m outside [1, 10]", self.distance_m));
        }
        let v = self.angular_velocity_deg_s;
        match self.motion_mode {
            MotionMode::Stationary => {
                if v != 0.0 {
                    return Err(format!("stationary event with velocity {v}"));
                }
                let az_steps = (self.start_doa.azimuth_deg() + 180.0) / PLACEMENT_GRID_DEG;
                let el_steps = self.start_doa.elevation_deg() / PLACEMENT_GRID_DEG;
                if (az_steps - az_steps.round()).abs() > 1e-9
                    || (el_steps - el_steps.round()).abs() > 1e-9
                {
                    return Err(format!(
                        "stationary DOA ({}, {}) off the {PLACEMENT_GRID_DEG} deg grid",
                        self.start_doa.azimuth_deg(),
                        self.start_doa.elevation_deg()
                    ));
                }
            }
            MotionMode::AzimuthOnly | MotionMode::GreatCircle { .. } => {
                let steps = v.abs() / 10.0;
                if v.abs() < 10.0 - 1e-9
                    || v.abs() > 90.0 + 1e-9
                    || (steps - steps.round()).abs() > 1e-9
                {
                    return Err(format!(
                        "moving velocity {v} not in ±10..±90 deg/s in 10 deg/s steps"
                    ));
                }
                if let MotionMode::GreatCircle { axis } = self.motion_mode {
                    let u = doa_to_unit_vector(&self.start_doa);
                    if axis.dot(&u).abs() > 1e-6 {
                        return Err("great-circle axis not orthogonal to start direction".into());
                    }
                }
            }
        }
        // trajectory must stay inside the configured elevation band
        let (lo, hi) = elevation_range;
        let mut t = self.onset_s;
        loop {
            let d = trajectory_doa(self, t.min(self.offset_s)).map_err(|e| e.to_string())?;
            let el = d.elevation_deg();
            if el < lo - 1e-9 || el >= hi + 1e-9 {
                return Err(format!(
                    "trajectory elevation {el} leaves [{lo}, {hi}) at t={t}"
                ));
            }
            if t >= self.offset_s {
                break;
            }
            t += TRAJECTORY_CHECK_STEP_S;
        }
        Ok(())
    }
}

/// Ground-truth description of one synthetic recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub duration_s: f64,
    pub max_overlap: usize,
    pub n_classes: usize,
    pub elevation_range: (f64, f64),
    pub events: Vec<EventSpec>,
    pub seed: u64,
}

impl SceneSpec {
    /// Indices of events active at time `t`.
    pub fn active_events_at(&self, t: f64) -> Vec<usize> {
        self.events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_active_at(t))
            .map(|(i, _)| i)
            .collect()
    }

    /// Largest number of simultaneously active events.
    pub fn max_simultaneous(&self) -> usize {
        max_simultaneous(self.events.iter().map(|e| (e.onset_s, e.offset_s)))
    }

    /// Number of active events per analysis frame (frame start times).
    pub fn activity_counts(&self, frame_rate_hz: f64, n_frames: usize) -> Vec<usize> {
        (0..n_frames)
            .map(|f| self.active_events_at(f as f64 / frame_rate_hz).len())
            .collect()
    }

    /// Ground-truth (class, DOA) pairs per analysis frame.
    pub fn reference_frames(
        &self,
        frame_rate_hz: f64,
        n_frames: usize,
    ) -> Result<Vec<Vec<(usize, Doa)>>, SceneError> {
        let mut frames = Vec::with_capacity(n_frames);
        for f in 0..n_frames {
            let t = f as f64 / frame_rate_hz;
            let mut entries = Vec::new();
            for e in self.events.iter().filter(|e| e.is_active_at(t)) {
                entries.push((e.class_id, trajectory_doa(e, t)?));
            }
            frames.push(entries);
        }
        Ok(frames)
    }

    /// Validates event invariants and the overlap bound.
    pub fn validate(&self) -> Result<(), SceneError> {
        for (index, e) in self.events.iter().enumerate() {
            e.validate(self.elevation_range)
                .map_err(|reason| SceneError::InvalidEvent { index, reason })?;
            if e.class_id >= self.n_classes {
                return Err(SceneError::InvalidEvent {
                    index,
                    reason: format!("class {} >= n_classes {}", e.class_id, self.n_classes),
                });
            }
        }
        if self.max_simultaneous() > self.max_overlap {
            return Err(SceneError::Unsatisfiable(format!(
                "{} simultaneous events exceed max_overlap {}",
                self.max_simultaneous(),
                self.max_overlap
            )));
        }
        Ok(())
    }
}

fn max_simultaneous(intervals: impl Iterator<Item = (f64, f64)>) -> usize {
    let mut edges: Vec<(f64, i32)> = Vec::new();
    for (onset, offset) in intervals {
        edges.push((onset, 1));
        edges.push((offset, -1));
    }
    // at equal times process offsets first: [a, b) ∪ [b, c) never overlap
    edges.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut current = 0i32;
    let mut best = 0i32;
    for (_, delta) in edges {
        current += delta;
        best = best.max(current);
    }
    best as usize
}

/// Motion family used when sampling a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneMotion {
    Stationary,
    /// Great-circle arcs varying in both azimuth and elevation.
    GreatCircle,
    /// Constant-elevation motion along the azimuth only.
    AzimuthOnly,
}

/// Parameters for [`sample_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub max_overlap: usize,
    pub n_classes: usize,
    pub elevation_range: (f64, f64),
    pub motion: SceneMotion,
    pub event_count_range: (usize, usize),
    pub event_duration_range_s: (f64, f64),
    pub rng_seed: u64,
}

impl SceneConfig {
    /// Defaults mirroring the synthetic anechoic subsets: 11 classes,
    /// elevation in [-60, 60), 3 to 3·overlap events per recording.
    pub fn new(max_overlap: usize, motion: SceneMotion, rng_seed: u64) -> Self {
        Self {
            max_overlap,
            n_classes: 11,
            elevation_range: (-60.0, 60.0),
            motion,
            event_count_range: (3, 3 * max_overlap.max(1)),
            event_duration_range_s: (1.0, 5.0),
            rng_seed,
        }
    }
}

/// Derives a per-index seed from a master seed (splitmix64 step).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic signal seed for an event, derived from its content so that
/// rendering a sub-scene reproduces the same per-event material.
fn event_signal_seed(scene_seed: u64, e: &EventSpec) -> u64 {
    let mut s = derive_seed(scene_seed, e.class_id as u64);
    s = derive_seed(s, e.onset_s.to_bits());
    s = derive_seed(s, e.start_doa.azimuth_deg().to_bits());
    s = derive_seed(s, e.start_doa.elevation_deg().to_bits());
    s
}

/// Samples a random scene satisfying the overlap constraint.
///
/// Events are drawn with uniform class, onset, duration, DOA, distance and
/// (if moving) velocity; placements violating the overlap bound or leaving
/// the elevation band are rejected and redrawn. Deterministic per seed.
pub fn sample_scene(config: &SceneConfig) -> Result<SceneSpec, SceneError> {
    let (count_lo, count_hi) = config.event_count_range;
    let (dur_lo, dur_hi) = config.event_duration_range_s;
    if count_lo == 0 || count_lo > count_hi {
        return Err(SceneError::Unsatisfiable(format!(
            "event count range [{count_lo}, {count_hi}] is empty"
        )));
    }
    if !(dur_lo > 0.0 && dur_lo <= dur_hi && dur_hi <= SCENE_DURATION_S) {
        return Err(SceneError::Unsatisfiable(format!(
            "event duration range [{dur_lo}, {dur_hi}] invalid"
        )));
    }
    if count_lo as f64 * dur_lo > config.max_overlap as f64 * SCENE_DURATION_S {
        return Err(SceneError::Unsatisfiable(format!(
            "{count_lo} events of >= {dur_lo} s cannot fit {} s at overlap {}",
            SCENE_DURATION_S, config.max_overlap
        )));
    }
    let (el_lo, el_hi) = config.elevation_range;
    if !(el_lo < el_hi) || el_lo < -90.0 || el_hi > 90.0 {
        return Err(SceneError::Unsatisfiable(format!(
            "elevation range [{el_lo}, {el_hi}) invalid"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let n_events = rng.gen_range(count_lo..=count_hi);
    let mut events: Vec<EventSpec> = Vec::with_capacity(n_events);

    for index in 0..n_events {
        let mut placed = false;
        for _ in 0..MAX_SAMPLING_TRIES {
            let duration = rng.gen_range(dur_lo..=dur_hi);
            let onset = rng.gen_range(0.0..=(SCENE_DURATION_S - duration));
            let offset = onset + duration;
            let fits = max_simultaneous(
                events
                    .iter()
                    .map(|e| (e.onset_s, e.offset_s))
                    .chain(std::iter::once((onset, offset))),
            ) <= config.max_overlap;
            if !fits {
                continue;
            }

            let class_id = rng.gen_range(0..config.n_classes);
            let distance_m = rng.gen_range(1.0..=10.0);
            let candidate = match config.motion {
                SceneMotion::Stationary => EventSpec {
                    class_id,
                    onset_s: onset,
                    offset_s: offset,
                    start_doa: sample_grid_doa(&mut rng, config.elevation_range),
                    angular_velocity_deg_s: 0.0,
                    motion_mode: MotionMode::Stationary,
                    distance_m,
                },
                SceneMotion::AzimuthOnly => EventSpec {
                    class_id,
                    onset_s: onset,
                    offset_s: offset,
                    start_doa: sample_free_doa(&mut rng, config.elevation_range),
                    angular_velocity_deg_s: sample_velocity(&mut rng),
                    motion_mode: MotionMode::AzimuthOnly,
                    distance_m,
                },
                SceneMotion::GreatCircle => {
                    let start = sample_free_doa(&mut rng, config.elevation_range);
                    let axis = sample_orthogonal_axis(&mut rng, &start);
                    EventSpec {
                        class_id,
                        onset_s: onset,
                        offset_s: offset,
                        start_doa: start,
                        angular_velocity_deg_s: sample_velocity(&mut rng),
                        motion_mode: MotionMode::GreatCircle { axis },
                    distance_m,
                    }
                }
            };
            if candidate.validate(config.elevation_range).is_ok() {
                events.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SceneError::Unsatisfiable(format!(
                "could not place event {index} after {MAX_SAMPLING_TRIES} tries"
            )));
        }
    }

    events.sort_by(|a, b| a.onset_s.partial_cmp(&b.onset_s).unwrap());
    let scene = SceneSpec {
        duration_s: SCENE_DURATION_S,
        max_overlap: config.max_overlap,
        n_classes: config.n_classes,
        elevation_range: config.elevation_range,
        events,
        seed: config.rng_seed,
    };
    scene.validate()?;
    Ok(scene)
}

fn sample_grid_doa(rng: &mut impl Rng, elevation_range: (f64, f64)) -> Doa {
    let n_az = (360.0 / PLACEMENT_GRID_DEG) as usize;
    let az = -180.0 + PLACEMENT_GRID_DEG * rng.gen_range(0..n_az) as f64;
    let (lo, hi) = elevation_range;
    let el_first = (lo / PLACEMENT_GRID_DEG).ceil() * PLACEMENT_GRID_DEG;
    let n_el = (((hi - el_first) / PLACEMENT_GRID_DEG).ceil() as usize).max(1);
    let el = el_first + PLACEMENT_GRID_DEG * rng.gen_range(0..n_el) as f64;
    Doa::new(az, el).expect("grid DOA in range")
}

fn sample_free_doa(rng: &mut impl Rng, elevation_range: (f64, f64)) -> Doa {
    let az = rng.gen_range(-180.0..180.0);
    let el = rng.gen_range(elevation_range.0..elevation_range.1);
    Doa::new(az, el).expect("sampled DOA in range")
}

fn sample_velocity(rng: &mut impl Rng) -> f64 {
    let magnitude = VELOCITY_STEPS_DEG_S[rng.gen_range(0..VELOCITY_STEPS_DEG_S.len())];
    if rng.gen_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

/// Random unit vector orthogonal to the start direction, so rotation about
/// it traces a great circle through the start point.
fn sample_orthogonal_axis(rng: &mut impl Rng, start: &Doa) -> UnitVector {
    let u = doa_to_unit_vector(start);
    loop {
        let r = UnitVector::normalized(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let Ok(r) = r else { continue };
        // project out the start component
        let d = r.dot(&u);
        if let Ok(axis) = UnitVector::normalized(r.x - d * u.x, r.y - d * u.y, r.z - d * u.z) {
            return axis;
        }
    }
}

/// Ground-truth DOA of an event at time `t` within its activity interval.
pub fn trajectory_doa(e: &EventSpec, t: f64) -> Result<Doa, SceneError> {
    if t < e.onset_s - 1e-9 || t > e.offset_s + 1e-9 {
        return Err(SceneError::TimeOutsideActivity {
            t,
            onset: e.onset_s,
            offset: e.offset_s,
        });
    }
    let elapsed = (t - e.onset_s).max(0.0);
    match e.motion_mode {
        MotionMode::Stationary => Ok(e.start_doa),
        MotionMode::AzimuthOnly => Ok(e
            .start_doa
            .rotated_azimuth(e.angular_velocity_deg_s * elapsed)),
        MotionMode::GreatCircle { axis } => {
            let angle = (e.angular_velocity_deg_s * elapsed).to_radians();
            let v = doa_to_unit_vector(&e.start_doa);
            Ok(unit_vector_to_doa(&rotate_about_axis(&v, &axis, angle)))
        }
    }
}

/// Rodrigues rotation of `v` about `axis` by `angle` radians.
fn rotate_about_axis(v: &UnitVector, axis: &UnitVector, angle: f64) -> UnitVector {
    let (sin_a, cos_a) = angle.sin_cos();
    let cross = axis.cross(v);
    let dot = axis.dot(v);
    UnitVector {
        x: v.x * cos_a + cross.0 * sin_a + axis.x * dot * (1.0 - cos_a),
        y: v.y * cos_a + cross.1 * sin_a + axis.y * dot * (1.0 - cos_a),
        z: v.z * cos_a + cross.2 * sin_a + axis.z * dot * (1.0 - cos_a),
    }
}

/// Four-channel time-domain recording in ACN order (W, Y, Z, X).
#[derive(Debug, Clone, PartialEq)]
pub struct AmbisonicClip {
    pub sample_rate_hz: u32,
    pub channels: [Vec<f64>; 4],
}

impl AmbisonicClip {
    pub fn silent(sample_rate_hz: u32, n_samples: usize) -> Self {
        Self {
            sample_rate_hz,
            channels: std::array::from_fn(|_| vec![0.0; n_samples]),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz as f64
    }

    pub fn w(&self) -> &[f64] {
        &self.channels[0]
    }

    pub fn y(&self) -> &[f64] {
        &self.channels[1]
    }

    pub fn z(&self) -> &[f64] {
        &self.channels[2]
    }

    pub fn x(&self) -> &[f64] {
        &self.channels[3]
    }
}

/// Renders a scene to four ambisonic channels.
///
/// Each event's mono signal is scaled by `1/distance` and multiplied per
/// sample by the steering vector of its instantaneous DOA, then summed into
/// the output. Events are accumulated in their listed order, so rendering a
/// prefix and a suffix separately and adding the clips is sample-exact.
pub fn render_scene(
    scene: &SceneSpec,
    bank: &SourceBank,
    sample_rate_hz: u32,
) -> Result<AmbisonicClip, SceneError> {
    let fs = sample_rate_hz as f64;
    let n_total = (scene.duration_s * fs).round() as usize;
    let mut clip = AmbisonicClip::silent(sample_rate_hz, n_total);

    for e in &scene.events {
        let signal = bank.event_signal(
            e.class_id,
            e.duration_s(),
            sample_rate_hz,
            event_signal_seed(scene.seed, e),
        )?;
        let gain = 1.0 / e.distance_m;
        let onset_sample = (e.onset_s * fs).round() as usize;

        match e.motion_mode {
            MotionMode::Stationary => {
                let sv = foa_steering_vector(&e.start_doa).gains();
                for (j, &s) in signal.iter().enumerate() {
                    let idx = onset_sample + j;
                    if idx >= n_total {
                        break;
                    }
                    let v = gain * s;
                    for (c, &g) in sv.iter().enumerate() {
                        clip.channels[c][idx] += v * g;
                    }
                }
            }
            _ => {
                for (j, &s) in signal.iter().enumerate() {
                    let idx = onset_sample + j;
                    if idx >= n_total {
                        break;
                    }
                    let t = (idx as f64 / fs).clamp(e.onset_s, e.offset_s);
                    let doa = trajectory_doa(e, t)?;
                    let sv = foa_steering_vector(&doa).gains();
                    let v = gain * s;
                    for (c, &g) in sv.iter().enumerate() {
                        clip.channels[c][idx] += v * g;
                    }
                }
            }
        }
    }
    Ok(clip)
}

/// Direction of the average acoustic intensity over a sample window.
///
/// For SN3D FOA the products (W·X, W·Y, W·Z) point along the source
/// direction, so this recovers the encoding DOA of a single-source window.
/// Returns `None` when the window holds (near) silence.
pub fn intensity_doa(clip: &AmbisonicClip, start: usize, len: usize) -> Option<Doa> {
    let end = (start + len).min(clip.n_samples());
    if start >= end {
        return None;
    }
    let (mut ix, mut iy, mut iz, mut energy) = (0.0, 0.0, 0.0, 0.0);
    for i in start..end {
        let w = clip.channels[0][i];
        energy += w * w;
        iy += w * clip.channels[1][i];
        iz += w * clip.channels[2][i];
        ix += w * clip.channels[3][i];
    }
    if energy < 1e-12 {
        return None;
    }
    UnitVector::normalized(ix, iy, iz)
        .ok()
        .map(|v| unit_vector_to_doa(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn stationary_event(az: f64, el: f64, onset: f64, offset: f64) -> EventSpec {
        EventSpec {
            class_id: 0,
            onset_s: onset,
            offset_s: offset,
            start_doa: Doa::new(az, el).unwrap(),
            angular_velocity_deg_s: 0.0,
            motion_mode: MotionMode::Stationary,
            distance_m: 1.0,
        }
    }

    fn single_event_scene(e: EventSpec) -> SceneSpec {
        SceneSpec {
            duration_s: SCENE_DURATION_S,
            max_overlap: 1,
            n_classes: 11,
            elevation_range: (-60.0, 60.0),
            events: vec![e],
            seed: 5,
        }
    }

    #[test]
    fn stationary_config_yields_grid_aligned_zero_velocity_events() {
        let config = SceneConfig::new(2, SceneMotion::Stationary, 11);
        let scene = sample_scene(&config).unwrap();
        assert!(!scene.events.is_empty());
        for e in &scene.events {
            assert_eq!(e.angular_velocity_deg_s, 0.0);
            assert_eq!(e.motion_mode, MotionMode::Stationary);
            let az_steps = (e.start_doa.azimuth_deg() + 180.0) / 10.0;
            assert_abs_diff_eq!(az_steps, az_steps.round(), epsilon = 1e-9);
        }
    }

    #[test]
    fn o1_scenes_never_overlap() {
        for seed in 0..20 {
            let config = SceneConfig::new(1, SceneMotion::Stationary, seed);
            let scene = sample_scene(&config).unwrap();
            assert!(scene.max_simultaneous() <= 1, "seed {seed} overlaps");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let config = SceneConfig::new(3, SceneMotion::GreatCircle, 42);
        let a = sample_scene(&config).unwrap();
        let b = sample_scene(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unsatisfiable_config_is_rejected() {
        let mut config = SceneConfig::new(1, SceneMotion::Stationary, 0);
        config.event_count_range = (40, 40);
        config.event_duration_range_s = (2.0, 2.0);
        assert!(matches!(
            sample_scene(&config),
            Err(SceneError::Unsatisfiable(_))
        ));
    }

    #[test]
    fn trajectory_start_and_linear_advance() {
        let e = EventSpec {
            class_id: 0,
            onset_s: 2.0,
            offset_s: 8.0,
            start_doa: Doa::new(0.0, 20.0).unwrap(),
            angular_velocity_deg_s: 10.0,
            motion_mode: MotionMode::AzimuthOnly,
            distance_m: 2.0,
        };
        let d = trajectory_doa(&e, 2.0).unwrap();
        assert_eq!(d, e.start_doa);
        let d = trajectory_doa(&e, 5.0).unwrap();
        assert_abs_diff_eq!(d.azimuth_deg(), 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d.elevation_deg(), 20.0, epsilon = 1e-9);
        assert!(matches!(
            trajectory_doa(&e, 1.0),
            Err(SceneError::TimeOutsideActivity { .. })
        ));
        assert!(matches!(
            trajectory_doa(&e, 8.5),
            Err(SceneError::TimeOutsideActivity { .. })
        ));
    }

    #[test]
    fn great_circle_about_zenith_shifts_azimuth() {
        let e = EventSpec {
            class_id: 0,
            onset_s: 0.0,
            offset_s: 2.0,
            start_doa: Doa::new(0.0, 0.0).unwrap(),
            angular_velocity_deg_s: 90.0,
            motion_mode: MotionMode::GreatCircle {
                axis: UnitVector::normalized(0.0, 0.0, 1.0).unwrap(),
            },
            distance_m: 1.0,
        };
        let d = trajectory_doa(&e, 1.0).unwrap();
        assert_abs_diff_eq!(d.azimuth_deg(), 90.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d.elevation_deg(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn great_circle_arc_speed_is_constant() {
        let config = SceneConfig::new(1, SceneMotion::GreatCircle, 77);
        let scene = sample_scene(&config).unwrap();
        let dt = 0.02;
        for e in &scene.events {
            let expected = e.angular_velocity_deg_s.abs() * dt;
            let mut t = e.onset_s;
            while t + dt <= e.offset_s {
                let a = trajectory_doa(e, t).unwrap();
                let b = trajectory_doa(e, t + dt).unwrap();
                assert_abs_diff_eq!(angular_distance_deg(&a, &b), expected, epsilon = 1e-6);
                t += dt;
            }
        }
    }

    #[test]
    fn render_front_source_puts_w_into_x() {
        let scene = single_event_scene(stationary_event(0.0, 0.0, 1.0, 3.0));
        let clip = render_scene(&scene, &SourceBank::synthetic(), 24_000).unwrap();
        assert_eq!(clip.n_samples(), 720_000);
        let mut saw_signal = false;
        for i in 0..clip.n_samples() {
            assert_eq!(clip.x()[i], clip.w()[i]);
            assert_eq!(clip.y()[i], 0.0);
            assert_eq!(clip.z()[i], 0.0);
            saw_signal |= clip.w()[i] != 0.0;
        }
        assert!(saw_signal);
    }

    #[test]
    fn render_left_source_puts_w_into_y() {
        let scene = single_event_scene(stationary_event(90.0, 0.0, 0.5, 2.0));
        let clip = render_scene(&scene, &SourceBank::synthetic(), 24_000).unwrap();
        for i in 0..clip.n_samples() {
            assert_abs_diff_eq!(clip.y()[i], clip.w()[i], epsilon = 1e-15);
            assert_abs_diff_eq!(clip.x()[i], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(clip.z()[i], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn render_empty_scene_is_silent() {
        let scene = SceneSpec {
            duration_s: SCENE_DURATION_S,
            max_overlap: 1,
            n_classes: 11,
            elevation_range: (-60.0, 60.0),
            events: vec![],
            seed: 0,
        };
        let clip = render_scene(&scene, &SourceBank::synthetic(), 24_000).unwrap();
        assert!(clip.channels.iter().all(|c| c.iter().all(|&s| s == 0.0)));
    }

    #[test]
    fn render_is_linear_in_events() {
        let config = SceneConfig::new(3, SceneMotion::GreatCircle, 9);
        let scene = sample_scene(&config).unwrap();
        assert!(scene.events.len() >= 2);
        let split = scene.events.len() / 2;
        let mut head = scene.clone();
        head.events = scene.events[..split].to_vec();
        let mut tail = scene.clone();
        tail.events = scene.events[split..].to_vec();

        let bank = SourceBank::synthetic();
        let full = render_scene(&scene, &bank, 24_000).unwrap();
        let a = render_scene(&head, &bank, 24_000).unwrap();
        let b = render_scene(&tail, &bank, 24_000).unwrap();
        for c in 0..4 {
            for i in 0..full.n_samples() {
                assert_eq!(
                    full.channels[c][i],
                    a.channels[c][i] + b.channels[c][i],
                    "channel {c} sample {i}"
                );
            }
        }
    }

    #[test]
    fn intensity_recovers_trajectory() {
        let mut e = stationary_event(40.0, -30.0, 0.2, 4.0);
        e.motion_mode = MotionMode::AzimuthOnly;
        e.angular_velocity_deg_s = 50.0;
        let scene = single_event_scene(e.clone());
        let clip = render_scene(&scene, &SourceBank::synthetic(), 24_000).unwrap();
        let fs = 24_000.0;
        let window = 240; // 10 ms
        let mut checked = 0;
        let mut start = (0.2 * fs) as usize;
        while (start + window) as f64 / fs < 4.0 {
            let est = intensity_doa(&clip, start, window).unwrap();
            let t_mid = (start as f64 + window as f64 / 2.0) / fs;
            let truth = trajectory_doa(&e, t_mid).unwrap();
            assert!(
                angular_distance_deg(&est, &truth) < 2.0,
                "window at {t_mid}: estimated {est:?}, truth {truth:?}"
            );
            checked += 1;
            start += window;
        }
        assert!(checked > 300);
    }

    #[test]
    fn azimuth_only_frame_step_is_constant() {
        let config = SceneConfig::new(1, SceneMotion::AzimuthOnly, 3);
        let scene = sample_scene(&config).unwrap();
        let dt = 0.02;
        for e in &scene.events {
            let mut t = e.onset_s;
            let mut first: Option<f64> = None;
            while t + dt <= e.offset_s {
                let a = trajectory_doa(e, t).unwrap();
                let b = trajectory_doa(e, t + dt).unwrap();
                let d = angular_distance_deg(&a, &b);
                match first {
                    None => first = Some(d),
                    Some(f) => assert_abs_diff_eq!(d, f, epsilon = 1e-9),
                }
                t += dt;
            }
        }
    }
}
