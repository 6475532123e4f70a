//! Angular conventions of the short-axis frame.
//!
//! Angles are measured in the visual frame of the image: 0° points to image
//! right (increasing column), 90° to image up (decreasing row), increasing
//! counterclockwise as displayed.

/// Visual angle in `[0, 360)` of an in-plane offset given in millimetres
/// (`dy_mm` along increasing row, `dx_mm` along increasing column).
pub fn visual_angle_deg(dy_mm: f64, dx_mm: f64) -> f64 {
    let a = (-dy_mm).atan2(dx_mm).to_degrees().rem_euclid(360.0);
    // rem_euclid can return 360.0 for tiny negative inputs.
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Offset of `theta` from `start` in `[0, 360)`, measured in direction
/// `sense` (+1 counterclockwise, −1 clockwise).
pub fn angular_offset(theta: f64, start: f64, sense: f64) -> f64 {
    let a = ((theta - start) * sense).rem_euclid(360.0);
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Whether `theta` lies in the counterclockwise arc `[start, start + width)`.
pub fn in_arc(theta: f64, start: f64, width: f64) -> bool {
    angular_offset(theta, start, 1.0) < width
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_directions() {
        assert_eq!(visual_angle_deg(0.0, 1.0), 0.0);
        assert!((visual_angle_deg(-1.0, 0.0) - 90.0).abs() < 1e-12);
        assert!((visual_angle_deg(0.0, -1.0) - 180.0).abs() < 1e-12);
        assert!((visual_angle_deg(1.0, 0.0) - 270.0).abs() < 1e-12);
    }

    #[test]
    fn offsets_and_arcs() {
        assert_eq!(angular_offset(10.0, 350.0, 1.0), 20.0);
        assert_eq!(angular_offset(10.0, 350.0, -1.0), 340.0);
        assert!(in_arc(5.0, 350.0, 20.0));
        assert!(!in_arc(10.0, 350.0, 20.0));
    }
}
