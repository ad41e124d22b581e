//! Azimuth helpers shared by the geometry, matching and metric code.

/// Maps any angle in degrees onto `[0, 360)`.
pub fn wrap_360(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid can return exactly 360.0 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Maps any angle in degrees onto `(-180, 180]`.
pub fn wrap_180(deg: f64) -> f64 {
    let r = wrap_360(deg);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Absolute angular distance in `[0, 180]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    wrap_180(a - b).abs()
}

/// Azimuth of a raster offset: 0 deg points toward increasing row (south),
/// 90 deg toward increasing column (east).
pub fn azimuth(dy: f64, dx: f64) -> f64 {
    wrap_360(dx.atan2(dy).to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps() {
        assert_eq!(wrap_360(-10.0), 350.0);
        assert_eq!(wrap_360(720.0), 0.0);
        assert_eq!(wrap_180(190.0), -170.0);
        assert_eq!(wrap_180(180.0), 180.0);
        assert_eq!(wrap_180(-180.0), 180.0);
        assert!((angle_distance(350.0, 10.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn compass() {
        assert!((azimuth(1.0, 0.0) - 0.0).abs() < 1e-12);
        assert!((azimuth(0.0, 1.0) - 90.0).abs() < 1e-12);
        assert!((azimuth(-1.0, 0.0) - 180.0).abs() < 1e-12);
        assert!((azimuth(0.0, -1.0) - 270.0).abs() < 1e-12);
    }
}
