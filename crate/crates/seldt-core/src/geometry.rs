//! Spherical geometry primitives: directions of arrival, angular distance,
//! first-order ambisonic steering vectors and angular search grids.
//!
//! Conventions used throughout the crate:
//! - azimuth measured counter-clockwise from the front (+x) axis, stored
//!   canonically in `[-180, 180)` degrees;
//! - elevation measured up from the horizontal plane, in `[-90, 90]` degrees;
//! - ambisonic channels in ACN order (W, Y, Z, X) with SN3D normalization.

use thiserror::Error;

/// Square degrees per steradian: `(180/π)²`.
pub const SQUARE_DEG_PER_STERADIAN: f64 =
    180.0 / std::f64::consts::PI * 180.0 / std::f64::consts::PI;

/// Total solid angle of the sphere in square degrees (`4π` sr).
pub const SPHERE_SQUARE_DEG: f64 = 4.0 * std::f64::consts::PI * SQUARE_DEG_PER_STERADIAN;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("elevation {0} deg outside [-90, 90]")]
    ElevationOutOfRange(f64),
    #[error("angle {0} is not finite")]
    NonFiniteAngle(f64),
    #[error("grid resolution {0} deg must be positive and divide 360 evenly")]
    InvalidResolution(f64),
    #[error("elevation range [{lo}, {hi}) is empty")]
    EmptyElevationRange { lo: f64, hi: f64 },
    #[error("vector ({0}, {1}, {2}) has near-zero norm")]
    ZeroVector(f64, f64, f64),
}

/// Wraps an azimuth angle into the canonical `[-180, 180)` range.
pub fn wrap_azimuth_deg(az: f64) -> f64 {
    let wrapped = (az + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can land exactly on 360.0 for inputs like -1e-14
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Wraps an angular difference into `[-180, 180)`, the shortest signed arc.
pub fn wrap_angle_diff_deg(diff: f64) -> f64 {
    wrap_azimuth_deg(diff)
}

/// A direction of arrival on the unit sphere.
///
/// Azimuth is stored canonically in `[-180, 180)`; any input angle is
/// wrapped. Elevation outside `[-90, 90]` is rejected rather than clamped.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Doa {
    azimuth_deg: f64,
    elevation_deg: f64,
}

impl Doa {
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Result<Self, GeometryError> {
        if !azimuth_deg.is_finite() {
            return Err(GeometryError::NonFiniteAngle(azimuth_deg));
        }
        if !elevation_deg.is_finite() {
            return Err(GeometryError::NonFiniteAngle(elevation_deg));
        }
        if !(-90.0..=90.0).contains(&elevation_deg) {
            return Err(GeometryError::ElevationOutOfRange(elevation_deg));
        }
        Ok(Self {
            azimuth_deg: wrap_azimuth_deg(azimuth_deg),
            elevation_deg,
        })
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth_deg
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation_deg
    }

    /// Shifts the azimuth by `delta` degrees, wrapping canonically.
    pub fn rotated_azimuth(&self, delta_deg: f64) -> Doa {
        Doa {
            azimuth_deg: wrap_azimuth_deg(self.azimuth_deg + delta_deg),
            elevation_deg: self.elevation_deg,
        }
    }
}

/// A Cartesian direction with unit norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitVector {
    /// Normalizes an arbitrary vector; errors on near-zero input.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let norm = (x * x + y * y + z * z).sqrt();
        if norm < 1e-12 {
            return Err(GeometryError::ZeroVector(x, y, z));
        }
        Ok(Self {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &UnitVector) -> (f64, f64, f64) {
        (
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }
}

/// First-order ambisonic plane-wave response, ACN order (W, Y, Z, X), SN3D.
///
/// W is exactly 1 and (y, z, x) are the direction cosines of the source
/// direction, so the vector is frequency independent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringVector {
    pub w: f64,
    pub y: f64,
    pub z: f64,
    pub x: f64,
}

impl SteeringVector {
    /// Channel gains in ACN order.
    pub fn gains(&self) -> [f64; 4] {
        [self.w, self.y, self.z, self.x]
    }
}

/// Converts a DOA to its Cartesian unit vector
/// (`x = cos el · cos az`, `y = cos el · sin az`, `z = sin el`).
pub fn doa_to_unit_vector(d: &Doa) -> UnitVector {
    let az = d.azimuth_deg.to_radians();
    let el = d.elevation_deg.to_radians();
    UnitVector {
        x: el.cos() * az.cos(),
        y: el.cos() * az.sin(),
        z: el.sin(),
    }
}

/// Inverse of [`doa_to_unit_vector`]. The input need not be exactly unit
/// norm; z is clamped into asin's domain.
pub fn unit_vector_to_doa(v: &UnitVector) -> Doa {
    let z = v.z.clamp(-1.0, 1.0);
    let elevation_deg = z.asin().to_degrees();
    let azimuth_deg = if v.x == 0.0 && v.y == 0.0 {
        0.0
    } else {
        wrap_azimuth_deg(v.y.atan2(v.x).to_degrees())
    };
    Doa {
        azimuth_deg,
        elevation_deg,
    }
}

/// Great-circle angle between two DOAs in degrees, in `[0, 180]`.
pub fn angular_distance_deg(a: &Doa, b: &Doa) -> f64 {
    let ua = doa_to_unit_vector(a);
    let ub = doa_to_unit_vector(b);
    ua.dot(&ub).clamp(-1.0, 1.0).acos().to_degrees()
}

/// FOA steering vector for a plane wave from `d`.
pub fn foa_steering_vector(d: &Doa) -> SteeringVector {
    let u = doa_to_unit_vector(d);
    SteeringVector {
        w: 1.0,
        y: u.y,
        z: u.z,
        x: u.x,
    }
}

/// A regular (azimuth, elevation) search grid.
///
/// Azimuths start at -180 and step by the resolution; elevations cover
/// `[lo, hi)`. Points are ordered elevation-major (elevation outer loop,
/// azimuth inner), which fixes peak-finding tie-breaks.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    resolution_deg: f64,
    elevation_lo_deg: f64,
    n_azimuth: usize,
    n_elevation: usize,
}

impl AngularGrid {
    pub fn new(resolution_deg: f64, elevation_range: (f64, f64)) -> Result<Self, GeometryError> {
        if !(resolution_deg.is_finite() && resolution_deg > 0.0) {
            return Err(GeometryError::InvalidResolution(resolution_deg));
        }
        let n_az = 360.0 / resolution_deg;
        if (n_az - n_az.round()).abs() > 1e-9 {
            return Err(GeometryError::InvalidResolution(resolution_deg));
        }
        let (lo, hi) = elevation_range;
        if !(lo < hi) {
            return Err(GeometryError::EmptyElevationRange { lo, hi });
        }
        if !(-90.0..=90.0).contains(&lo) {
            return Err(GeometryError::ElevationOutOfRange(lo));
        }
        let n_el = ((hi - lo) / resolution_deg - 1e-9).floor() as usize + 1;
        let el_max = lo + (n_el - 1) as f64 * resolution_deg;
        if el_max > 90.0 {
            return Err(GeometryError::ElevationOutOfRange(el_max));
        }
        Ok(Self {
            resolution_deg,
            elevation_lo_deg: lo,
            n_azimuth: n_az.round() as usize,
            n_elevation: n_el,
        })
    }

    pub fn resolution_deg(&self) -> f64 {
        self.resolution_deg
    }

    pub fn n_azimuth(&self) -> usize {
        self.n_azimuth
    }

    pub fn n_elevation(&self) -> usize {
        self.n_elevation
    }

    pub fn len(&self) -> usize {
        self.n_azimuth * self.n_elevation
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// DOA at (elevation index, azimuth index).
    pub fn doa_at(&self, el_index: usize, az_index: usize) -> Doa {
        debug_assert!(el_index < self.n_elevation && az_index < self.n_azimuth);
        Doa {
            azimuth_deg: wrap_azimuth_deg(-180.0 + az_index as f64 * self.resolution_deg),
            elevation_deg: self.elevation_lo_deg + el_index as f64 * self.resolution_deg,
        }
    }

    /// Flat index of (elevation index, azimuth index) in elevation-major order.
    pub fn flat_index(&self, el_index: usize, az_index: usize) -> usize {
        el_index * self.n_azimuth + az_index
    }

    /// Inverse of [`AngularGrid::flat_index`].
    pub fn unflatten(&self, index: usize) -> (usize, usize) {
        (index / self.n_azimuth, index % self.n_azimuth)
    }

    /// All grid points in elevation-major order.
    pub fn points(&self) -> Vec<Doa> {
        let mut out = Vec::with_capacity(self.len());
        for ie in 0..self.n_elevation {
            for ia in 0..self.n_azimuth {
                out.push(self.doa_at(ie, ia));
            }
        }
        out
    }
}

/// Convenience wrapper returning the grid points directly.
pub fn angular_grid(
    resolution_deg: f64,
    elevation_range: (f64, f64),
) -> Result<Vec<Doa>, GeometryError> {
    Ok(AngularGrid::new(resolution_deg, elevation_range)?.points())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn doa(az: f64, el: f64) -> Doa {
        Doa::new(az, el).unwrap()
    }

    #[test]
    fn azimuth_wraps_canonically() {
        assert_eq!(doa(180.0, 0.0).azimuth_deg(), -180.0);
        assert_eq!(doa(-180.0, 0.0).azimuth_deg(), -180.0);
        assert_eq!(doa(540.0, 0.0).azimuth_deg(), -180.0);
        assert_abs_diff_eq!(doa(370.0, 0.0).azimuth_deg(), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(doa(-190.0, 0.0).azimuth_deg(), 170.0, epsilon = 1e-12);
    }

    #[test]
    fn elevation_out_of_range_is_error() {
        assert_eq!(
            Doa::new(0.0, 90.5),
            Err(GeometryError::ElevationOutOfRange(90.5))
        );
        assert_eq!(
            Doa::new(0.0, -91.0),
            Err(GeometryError::ElevationOutOfRange(-91.0))
        );
        assert!(Doa::new(0.0, 90.0).is_ok());
        assert!(Doa::new(0.0, -90.0).is_ok());
        assert!(Doa::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn unit_vector_axis_cases() {
        let v = doa_to_unit_vector(&doa(0.0, 0.0));
        assert_abs_diff_eq!(v.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.z, 0.0, epsilon = 1e-12);

        let v = doa_to_unit_vector(&doa(90.0, 0.0));
        assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.z, 0.0, epsilon = 1e-12);

        let v = doa_to_unit_vector(&doa(0.0, 90.0));
        assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn angular_distance_reference_cases() {
        let a = doa(10.0, 20.0);
        assert_abs_diff_eq!(angular_distance_deg(&a, &a), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            angular_distance_deg(&doa(0.0, 0.0), &doa(180.0, 0.0)),
            180.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            angular_distance_deg(&doa(0.0, 0.0), &doa(0.0, 45.0)),
            45.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn steering_vector_axis_cases() {
        let s = foa_steering_vector(&doa(0.0, 0.0));
        assert_eq!(s.w, 1.0);
        assert_abs_diff_eq!(s.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.z, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x, 1.0, epsilon = 1e-12);

        let s = foa_steering_vector(&doa(90.0, 0.0));
        assert_abs_diff_eq!(s.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.z, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x, 0.0, epsilon = 1e-12);

        let s = foa_steering_vector(&doa(0.0, 90.0));
        assert_abs_diff_eq!(s.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.z, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn steering_matches_unit_vector_exactly() {
        for &(az, el) in &[(13.0, -42.0), (-171.0, 59.9), (90.0, 0.0), (45.0, 45.0)] {
            let d = doa(az, el);
            let u = doa_to_unit_vector(&d);
            let s = foa_steering_vector(&d);
            assert_eq!(s.x, u.x);
            assert_eq!(s.y, u.y);
            assert_eq!(s.z, u.z);
        }
    }

    #[test]
    fn grid_counts() {
        let g = AngularGrid::new(10.0, (-60.0, 60.0)).unwrap();
        assert_eq!(g.n_azimuth(), 36);
        assert_eq!(g.n_elevation(), 12);
        assert_eq!(g.len(), 432);

        let pts = angular_grid(180.0, (0.0, 90.0)).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].azimuth_deg(), -180.0);
        assert_eq!(pts[0].elevation_deg(), 0.0);
        assert_eq!(pts[1].azimuth_deg(), 0.0);
        assert_eq!(pts[1].elevation_deg(), 0.0);

        let g = AngularGrid::new(1.0, (-40.0, 40.0)).unwrap();
        assert_eq!(g.len(), 360 * 80);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(AngularGrid::new(7.0, (-60.0, 60.0)).is_err());
        assert!(AngularGrid::new(0.0, (-60.0, 60.0)).is_err());
        assert!(AngularGrid::new(-10.0, (-60.0, 60.0)).is_err());
        assert!(AngularGrid::new(10.0, (60.0, 60.0)).is_err());
        assert!(AngularGrid::new(10.0, (60.0, -60.0)).is_err());
    }

    #[test]
    fn grid_ordering_is_elevation_major() {
        let g = AngularGrid::new(90.0, (-45.0, 46.0)).unwrap();
        let pts = g.points();
        // elevation outer: first full azimuth sweep at the lowest elevation
        assert_eq!(pts[0].elevation_deg(), -45.0);
        assert_eq!(pts[1].elevation_deg(), -45.0);
        assert_eq!(pts[0].azimuth_deg(), -180.0);
        assert_eq!(pts[1].azimuth_deg(), -90.0);
        assert_eq!(pts[4].elevation_deg(), 45.0);
    }

    #[test]
    fn grid_points_lie_on_grid() {
        let g = AngularGrid::new(10.0, (-60.0, 60.0)).unwrap();
        for p in g.points() {
            let az_steps = (p.azimuth_deg() + 180.0) / 10.0;
            assert_abs_diff_eq!(az_steps, az_steps.round(), epsilon = 1e-9);
            let el_steps = (p.elevation_deg() + 60.0) / 10.0;
            assert_abs_diff_eq!(el_steps, el_steps.round(), epsilon = 1e-9);
        }
    }
}
