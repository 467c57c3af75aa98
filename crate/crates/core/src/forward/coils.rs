use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::ComplexImage;

/// Width of each sensitivity bump relative to the larger image side.
const BUMP_WIDTH: f64 = 0.4;

/// Synthetic receive sensitivities: Gaussian bumps centered on an ellipse
/// through the image border, each with a constant coil phase, normalized so
/// that `Σ_c |C_c|² = 1` at every pixel.
pub fn make_coil_maps(shape: (usize, usize), n_coils: usize) -> Result<Vec<ComplexImage>> {
    let (h, w) = shape;
    if h == 0 || w == 0 {
        return Err(Error::invalid("coil map shape must be nonzero"));
    }
    if n_coils == 0 {
        return Err(Error::invalid("need at least one coil"));
    }
    let sigma = BUMP_WIDTH * h.max(w) as f64;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);

    let mut maps: Vec<ComplexImage> = (0..n_coils)
        .map(|c| {
            let angle = 2.0 * PI * c as f64 / n_coils as f64;
            let (py, px) = (cy + h as f64 / 2.0 * angle.sin(), cx + w as f64 / 2.0 * angle.cos());
            let phase = Complex64::from_polar(1.0, angle);
            ComplexImage::from_fn(h, w, |r, col| {
                let d2 = (r as f64 - py).powi(2) + (col as f64 - px).powi(2);
                phase * (-d2 / (2.0 * sigma * sigma)).exp()
            })
        })
        .collect();

    let mut norm = vec![0.0f64; h * w];
    for m in &maps {
        for (acc, v) in norm.iter_mut().zip(m.data()) {
            *acc += v.norm_sqr();
        }
    }
    for m in &mut maps {
        for (v, n) in m.data_mut().iter_mut().zip(&norm) {
            *v /= n.sqrt();
        }
    }
    Ok(maps)
}
