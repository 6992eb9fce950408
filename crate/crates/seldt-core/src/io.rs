//! File formats: 4-channel WAV audio, the CSV interchange formats, and the
//! flat key=value tracker configuration.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! CSV parses back to bit-identical values. Parse errors carry 1-based line
//! numbers (the header is line 1).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{Doa, UnitVector};
use crate::music::FramewiseDoas;
use crate::scene::{AmbisonicClip, EventSpec, MotionMode};
use crate::tracker::{Track, TrackSet, TrackerConfig};

/// Header of the per-event metadata CSV.
pub const METADATA_HEADER: &str = "class_id,onset_s,offset_s,start_azimuth_deg,start_elevation_deg,angular_velocity_deg_s,motion_mode,axis_x,axis_y,axis_z,distance_m";

/// Header of the frame-wise reference CSV.
pub const REFERENCE_HEADER: &str = "frame_index,class_id,azimuth_deg,elevation_deg";

/// Header of the frame-wise DOA estimate CSV.
pub const DOA_HEADER: &str = "frame_index,azimuth_deg,elevation_deg";

/// Header of the track CSV.
pub const TRACK_HEADER: &str = "track_id,frame_index,azimuth_deg,elevation_deg";

/// Header of the plot-data CSV.
pub const PLOT_HEADER: &str = "series,frame_index,azimuth_deg,elevation_deg";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Wav {
        path: String,
        source: hound::Error,
    },
    #[error("{path}: expected 4 channels, found {found}")]
    ChannelCount { path: String, found: u16 },
    #[error("{path}: unsupported sample format {format}")]
    SampleFormat { path: String, format: String },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
}

impl IoError {
    fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Self {
        IoError::Malformed {
            path: path.display().to_string(),
            line,
            reason: reason.into(),
        }
    }

    fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File {
            path: path.display().to_string(),
            source,
        }
    }
}

// ---------------------------------------------------------------------------
// WAV
// ---------------------------------------------------------------------------

/// Writes a clip as 4-channel float32 WAV, channels interleaved in ACN order.
pub fn write_clip_wav(path: &Path, clip: &AmbisonicClip) -> Result<(), IoError> {
    let spec = hound::WavSpec {
        channels: 4,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let wav_err = |source| IoError::Wav {
        path: path.display().to_string(),
        source,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for i in 0..clip.n_samples() {
        for ch in 0..4 {
            writer
                .write_sample(clip.channels[ch][i] as f32)
                .map_err(wav_err)?;
        }
    }
    writer.finalize().map_err(wav_err)?;
    Ok(())
}

/// Reads a 4-channel WAV (float32 or integer PCM) into a clip.
pub fn read_clip_wav(path: &Path) -> Result<AmbisonicClip, IoError> {
    let wav_err = |source| IoError::Wav {
        path: path.display().to_string(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 4 {
        return Err(IoError::ChannelCount {
            path: path.display().to_string(),
            found: spec.channels,
        });
    }

    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
    };

    let n = interleaved.len() / 4;
    let mut channels: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    for (i, v) in interleaved.into_iter().enumerate() {
        channels[i % 4].push(v);
    }
    Ok(AmbisonicClip {
        sample_rate_hz: spec.sample_rate,
        channels,
    })
}

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|e| IoError::file(path, e))
}

fn read_lines(path: &Path, expected_header: &str) -> Result<Vec<(usize, String)>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == expected_header => {}
        Some((_, header)) => {
            return Err(IoError::malformed(
                path,
                1,
                format!("expected header `{expected_header}`, found `{header}`"),
            ))
        }
        None => return Err(IoError::malformed(path, 1, "empty file")),
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .collect())
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    fields: &[&str],
    index: usize,
    name: &str,
) -> Result<T, IoError> {
    let raw = fields
        .get(index)
        .ok_or_else(|| IoError::malformed(path, line, format!("missing field `{name}`")))?;
    raw.parse::<T>()
        .map_err(|_| IoError::malformed(path, line, format!("bad {name}: `{raw}`")))
}

// ---------------------------------------------------------------------------
// Event metadata
// ---------------------------------------------------------------------------

/// Writes one metadata row per event. The axis columns are empty except for
/// great-circle events.
pub fn write_metadata_csv(path: &Path, events: &[EventSpec]) -> Result<(), IoError> {
    let mut out = String::from(METADATA_HEADER);
    out.push('\n');
    for e in events {
        let (ax, ay, az) = match e.motion_mode {
            MotionMode::GreatCircle { axis } => (
                axis.x.to_string(),
                axis.y.to_string(),
                axis.z.to_string(),
            ),
            _ => (String::new(), String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            e.class_id,
            e.onset_s,
            e.offset_s,
            e.start_doa.azimuth_deg(),
            e.start_doa.elevation_deg(),
            e.angular_velocity_deg_s,
            e.motion_mode.label(),
            ax,
            ay,
            az,
            e.distance_m
        )
        .expect("string write");
    }
    write_text(path, &out)
}

pub fn read_metadata_csv(path: &Path) -> Result<Vec<EventSpec>, IoError> {
    let mut events = Vec::new();
    for (line, text) in read_lines(path, METADATA_HEADER)? {
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 11 {
            return Err(IoError::malformed(
                path,
                line,
                format!("expected 11 fields, found {}", fields.len()),
            ));
        }
        let class_id: usize = parse_field(path, line, &fields, 0, "class_id")?;
        let onset_s: f64 = parse_field(path, line, &fields, 1, "onset_s")?;
        let offset_s: f64 = parse_field(path, line, &fields, 2, "offset_s")?;
        let az: f64 = parse_field(path, line, &fields, 3, "start_azimuth_deg")?;
        let el: f64 = parse_field(path, line, &fields, 4, "start_elevation_deg")?;
        let velocity: f64 = parse_field(path, line, &fields, 5, "angular_velocity_deg_s")?;
        let mode = fields[6];
        let distance_m: f64 = parse_field(path, line, &fields, 10, "distance_m")?;
        let start_doa = Doa::new(az, el)
            .map_err(|e| IoError::malformed(path, line, e.to_string()))?;
        let motion_mode = match mode {
            "stationary" => MotionMode::Stationary,
            "azimuth_only" => MotionMode::AzimuthOnly,
            "great_circle" => {
                let x: f64 = parse_field(path, line, &fields, 7, "axis_x")?;
                let y: f64 = parse_field(path, line, &fields, 8, "axis_y")?;
                let z: f64 = parse_field(path, line, &fields, 9, "axis_z")?;
                let axis = UnitVector::normalized(x, y, z)
                    .map_err(|e| IoError::malformed(path, line, e.to_string()))?;
                MotionMode::GreatCircle { axis }
            }
            other => {
                return Err(IoError::malformed(
                    path,
                    line,
                    format!("unknown motion_mode `{other}`"),
                ))
            }
        };
        events.push(EventSpec {
            class_id,
            onset_s,
            offset_s,
            start_doa,
            angular_velocity_deg_s: velocity,
            motion_mode,
            distance_m,
        });
    }
    Ok(events)
}

// ---------------------------------------------------------------------------
// Frame-wise reference and DOA estimates
// ---------------------------------------------------------------------------

/// Reference export: one row per active (frame, class) with its DOA.
pub fn write_reference_frames_csv(
    path: &Path,
    frames: &[Vec<(usize, Doa)>],
) -> Result<(), IoError> {
    let mut out = String::from(REFERENCE_HEADER);
    out.push('\n');
    for (frame, entries) in frames.iter().enumerate() {
        for (class_id, doa) in entries {
            writeln!(
                out,
                "{},{},{},{}",
                frame,
                class_id,
                doa.azimuth_deg(),
                doa.elevation_deg()
            )
            .expect("string write");
        }
    }
    write_text(path, &out)
}

pub fn read_reference_frames_csv(
    path: &Path,
    n_frames: usize,
) -> Result<Vec<Vec<(usize, Doa)>>, IoError> {
    let mut frames = vec![Vec::new(); n_frames];
    for (line, text) in read_lines(path, REFERENCE_HEADER)? {
        let fields: Vec<&str> = text.split(',').collect();
        let frame: usize = parse_field(path, line, &fields, 0, "frame_index")?;
        let class_id: usize = parse_field(path, line, &fields, 1, "class_id")?;
        let az: f64 = parse_field(path, line, &fields, 2, "azimuth_deg")?;
        let el: f64 = parse_field(path, line, &fields, 3, "elevation_deg")?;
        if frame >= n_frames {
            return Err(IoError::malformed(
                path,
                line,
                format!("frame_index {frame} >= {n_frames}"),
            ));
        }
        let doa = Doa::new(az, el).map_err(|e| IoError::malformed(path, line, e.to_string()))?;
        frames[frame].push((class_id, doa));
    }
    Ok(frames)
}

/// Frame-wise DOA estimates, one row per DOA; frames may repeat and empty
/// frames produce no rows.
pub fn write_framewise_csv(path: &Path, doas: &FramewiseDoas) -> Result<(), IoError> {
    let mut out = String::from(DOA_HEADER);
    out.push('\n');
    for (frame, entries) in doas.frames.iter().enumerate() {
        for doa in entries {
            writeln!(
                out,
                "{},{},{}",
                frame,
                doa.azimuth_deg(),
                doa.elevation_deg()
            )
            .expect("string write");
        }
    }
    write_text(path, &out)
}

pub fn read_framewise_csv(
    path: &Path,
    n_frames: usize,
    frame_rate_hz: f64,
) -> Result<FramewiseDoas, IoError> {
    let mut frames = vec![Vec::new(); n_frames];
    for (line, text) in read_lines(path, DOA_HEADER)? {
        let fields: Vec<&str> = text.split(',').collect();
        let frame: usize = parse_field(path, line, &fields, 0, "frame_index")?;
        let az: f64 = parse_field(path, line, &fields, 1, "azimuth_deg")?;
        let el: f64 = parse_field(path, line, &fields, 2, "elevation_deg")?;
        if frame >= n_frames {
            return Err(IoError::malformed(
                path,
                line,
                format!("frame_index {frame} >= {n_frames}"),
            ));
        }
        let doa = Doa::new(az, el).map_err(|e| IoError::malformed(path, line, e.to_string()))?;
        frames[frame].push(doa);
    }
    Ok(FramewiseDoas {
        frames,
        frame_rate_hz,
    })
}

// ---------------------------------------------------------------------------
// Tracks
// ---------------------------------------------------------------------------

pub fn write_tracks_csv(path: &Path, tracks: &TrackSet) -> Result<(), IoError> {
    let mut out = String::from(TRACK_HEADER);
    out.push('\n');
    for track in &tracks.tracks {
        for (offset, doa) in track.doas.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                track.track_id,
                track.birth_frame + offset,
                doa.azimuth_deg(),
                doa.elevation_deg()
            )
            .expect("string write");
        }
    }
    write_text(path, &out)
}

pub fn read_tracks_csv(path: &Path) -> Result<TrackSet, IoError> {
    let mut rows: BTreeMap<u64, Vec<(usize, usize, Doa)>> = BTreeMap::new();
    for (line, text) in read_lines(path, TRACK_HEADER)? {
        let fields: Vec<&str> = text.split(',').collect();
        let track_id: u64 = parse_field(path, line, &fields, 0, "track_id")?;
        let frame: usize = parse_field(path, line, &fields, 1, "frame_index")?;
        let az: f64 = parse_field(path, line, &fields, 2, "azimuth_deg")?;
        let el: f64 = parse_field(path, line, &fields, 3, "elevation_deg")?;
        let doa = Doa::new(az, el).map_err(|e| IoError::malformed(path, line, e.to_string()))?;
        rows.entry(track_id).or_default().push((line, frame, doa));
    }

    let mut tracks = Vec::new();
    for (track_id, mut entries) in rows {
        entries.sort_by_key(|&(_, frame, _)| frame);
        let birth_frame = entries[0].1;
        let mut doas = Vec::with_capacity(entries.len());
        for (i, &(line, frame, doa)) in entries.iter().enumerate() {
            if frame != birth_frame + i {
                return Err(IoError::malformed(
                    path,
                    line,
                    format!("track {track_id} frames not contiguous at frame {frame}"),
                ));
            }
            doas.push(doa);
        }
        tracks.push(Track {
            track_id,
            birth_frame,
            death_frame: birth_frame + doas.len() - 1,
            doas,
        });
    }
    tracks.sort_by_key(|t| (t.birth_frame, t.track_id));
    Ok(TrackSet { tracks })
}

// ---------------------------------------------------------------------------
// Tracker config (flat key=value)
// ---------------------------------------------------------------------------

/// Serializes a tracker config as `key = value` lines.
pub fn format_tracker_config(config: &TrackerConfig) -> String {
    format!(
        "n_particles = {}\n\
         birth_prior = {}\n\
         clutter_density = {}\n\
         death_after_frames = {}\n\
         survival_decay = {}\n\
         process_noise_q = {}\n\
         measurement_noise_deg = {}\n\
         ess_threshold_fraction = {}\n\
         confirm_after = {}\n\
         max_targets = {}\n\
         birth_velocity_std_deg_s = {}\n\
         rng_seed = {}\n",
        config.n_particles,
        config.birth_prior,
        config.clutter_density,
        config.death_after_frames,
        config.survival_decay,
        config.process_noise_q,
        config.measurement_noise_deg,
        config.ess_threshold_fraction,
        config.confirm_after,
        config.max_targets,
        config.birth_velocity_std_deg_s,
        config.rng_seed
    )
}

pub fn write_tracker_config(path: &Path, config: &TrackerConfig) -> Result<(), IoError> {
    write_text(path, &format_tracker_config(config))
}

/// Parses a flat key=value tracker config; unset keys keep their defaults,
/// unknown keys are rejected. `#` starts a comment.
pub fn read_tracker_config(path: &Path) -> Result<TrackerConfig, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_tracker_config(&text).map_err(|(line, reason)| IoError::malformed(path, line, reason))
}

pub fn parse_tracker_config(text: &str) -> Result<TrackerConfig, (usize, String)> {
    let mut config = TrackerConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err((line_no, format!("expected key = value, found `{line}`")));
        };
        let key = key.trim();
        let value = value.trim();
        let parse_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| (line_no, format!("bad integer for {key}: `{v}`")))
        };
        let parse_u64 = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| (line_no, format!("bad integer for {key}: `{v}`")))
        };
        let parse_f64 = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| (line_no, format!("bad number for {key}: `{v}`")))
        };
        match key {
            "n_particles" => config.n_particles = parse_usize(value)?,
            "birth_prior" => config.birth_prior = parse_f64(value)?,
            "clutter_density" => config.clutter_density = parse_f64(value)?,
            "death_after_frames" => config.death_after_frames = parse_usize(value)?,
            "survival_decay" => config.survival_decay = parse_f64(value)?,
            "process_noise_q" => config.process_noise_q = parse_f64(value)?,
            "measurement_noise_deg" => config.measurement_noise_deg = parse_f64(value)?,
            "ess_threshold_fraction" => config.ess_threshold_fraction = parse_f64(value)?,
            "confirm_after" => config.confirm_after = parse_usize(value)?,
            "max_targets" => config.max_targets = parse_usize(value)?,
            "birth_velocity_std_deg_s" => config.birth_velocity_std_deg_s = parse_f64(value)?,
            "rng_seed" => config.rng_seed = parse_u64(value)?,
            other => return Err((line_no, format!("unknown key `{other}`"))),
        }
    }
    Ok(config)
}
