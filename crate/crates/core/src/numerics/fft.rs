//! Centered, unitary 2D DFT: `fftshift ∘ DFT ∘ ifftshift`, scaled by `1/√(HW)`
//! in both directions so the inverse is the adjoint.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::ComplexImage;
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

/// Precomputed plans for one image shape.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    rows: [Arc<dyn Fft<f64>>; 2],
    cols: [Arc<dyn Fft<f64>>; 2],
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::invalid(format!(
                "2D FFT needs at least 2x2 samples, got {height}x{width}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Fft2 {
            height,
            width,
            rows: [planner.plan_fft_forward(width), planner.plan_fft_inverse(width)],
            cols: [planner.plan_fft_forward(height), planner.plan_fft_inverse(height)],
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn forward(&self, img: &ComplexImage) -> Result<ComplexImage> {
        self.transform(img, Direction::Forward)
    }

    pub fn inverse(&self, img: &ComplexImage) -> Result<ComplexImage> {
        self.transform(img, Direction::Inverse)
    }

    fn transform(&self, img: &ComplexImage, dir: Direction) -> Result<ComplexImage> {
        img.check_shape((self.height, self.width), "FFT input")?;
        let (h, w) = (self.height, self.width);
        let idx = match dir {
            Direction::Forward => 0,
            Direction::Inverse => 1,
        };
        let src = img.data();

        // ifftshift on the way in
        let mut buf = vec![Complex64::new(0.0, 0.0); h * w];
        for r in 0..h {
            let sr = (r + h / 2) % h;
            for c in 0..w {
                buf[r * w + c] = src[sr * w + (c + w / 2) % w];
            }
        }

        for row in buf.chunks_exact_mut(w) {
            self.rows[idx].process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for r in 0..h {
                col[r] = buf[r * w + c];
            }
            self.cols[idx].process(&mut col);
            for r in 0..h {
                buf[r * w + c] = col[r];
            }
        }

        // fftshift on the way out, folded together with the unitary scale
        let scale = 1.0 / ((h * w) as f64).sqrt();
        let out = ComplexImage::from_fn(h, w, |r, c| {
            let sr = (r + h - h / 2) % h;
            let sc = (c + w - w / 2) % w;
            buf[sr * w + sc] * scale
        });
        Ok(out)
    }
}

pub fn fft2_centered(img: &ComplexImage) -> Result<ComplexImage> {
    Fft2::new(img.height(), img.width())?.forward(img)
}

pub fn ifft2_centered(img: &ComplexImage) -> Result<ComplexImage> {
    Fft2::new(img.height(), img.width())?.inverse(img)
}
