//! Deterministic synthetic test image used when no photographs are supplied.

use crate::image::Image;
use crate::scalar::Scalar;

/// Grayscale scene with smooth shading, hard-edged shapes, a striped texture
/// patch and fine dots. Values stay within `[20, 235]`, so no clean pixel
/// coincides with a salt-and-pepper extreme.
pub fn test_pattern<T: Scalar>(rows: usize, cols: usize) -> Image<T> {
    use std::f64::consts::PI;
    Image::from_fn(rows, cols, |i, j| {
        let y = (i as f64 + 0.5) / rows as f64;
        let x = (j as f64 + 0.5) / cols as f64;
        let mut v = 70.0 + 90.0 * x * (1.0 - 0.3 * y) + 12.0 * (2.0 * PI * (0.7 * x + 1.3 * y)).sin();

        let (dx, dy) = (x - 0.3, y - 0.33);
        if dx * dx + dy * dy < 0.17 * 0.17 {
            v = 205.0 - 60.0 * dy;
        }
        if (0.58..0.88).contains(&x) && (0.12..0.42).contains(&y) {
            v = 45.0 + 25.0 * y;
        }
        if y > 0.55 && x < 0.45 && (x - 0.05) > 0.8 * (y - 0.55) * 1.5 {
            v = 150.0 + 30.0 * (x - y);
        }
        if (0.55..0.92).contains(&x) && (0.58..0.9).contains(&y) {
            v = 125.0 + 40.0 * (2.0 * PI * (i as f64 / 7.0 + j as f64 / 11.0)).sin();
        }
        let (gx, gy) = ((x * 10.0).fract() - 0.5, (y * 10.0).fract() - 0.5);
        if y < 0.2 && x < 0.5 && gx * gx + gy * gy < 0.04 {
            v = 225.0;
        }
        T::of(v.clamp(20.0, 235.0))
    })
}
