//! Image-quality metrics on magnitude images, with the peak taken from the
//! reference.

use crate::error::{Error, Result};
use crate::numerics::{ComplexImage, RealImage};

/// Reported instead of +∞ for identical images.
pub const PSNR_CAP_DB: f64 = 200.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn magnitudes(reference: &ComplexImage, estimate: &ComplexImage) -> Result<(RealImage, RealImage)> {
    estimate.check_shape(reference.shape(), "estimate")?;
    Ok((reference.magnitude(), estimate.magnitude()))
}

/// `20 log10(max|ref| / rmse(|ref|, |est|))`, capped at [`PSNR_CAP_DB`].
pub fn psnr(reference: &ComplexImage, estimate: &ComplexImage) -> Result<f64> {
    let (r, e) = magnitudes(reference, estimate)?;
    let peak = r.max();
    if !(peak > 0.0) {
        return Err(Error::invalid("PSNR reference is identically zero"));
    }
    let mse = r.data.iter().zip(&e.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / r.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((20.0 * (peak / mse.sqrt()).log10()).min(PSNR_CAP_DB))
}

/// Mean squared error of the complex images.
pub fn mse(reference: &ComplexImage, estimate: &ComplexImage) -> Result<f64> {
    estimate.check_shape(reference.shape(), "estimate")?;
    Ok(reference.sub(estimate).norm_sqr() / reference.len() as f64)
}

/// Mean SSIM of the magnitude images with dynamic range `max|reference|`.
pub fn ssim(reference: &ComplexImage, estimate: &ComplexImage) -> Result<f64> {
    let (r, e) = magnitudes(reference, estimate)?;
    let range = r.max();
    ssim_real(&r, &e, range)
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filtering over the fully overlapping ("valid") region.
fn filter_valid(img: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// SSIM of two real images with an explicit dynamic range; symmetric in its
/// image arguments. Images must be at least 11×11.
pub fn ssim_real(a: &RealImage, b: &RealImage, range: f64) -> Result<f64> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::invalid(format!(
            "SSIM inputs differ in shape: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    if a.height < SSIM_WINDOW || a.width < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.height, a.width
        )));
    }
    if !(range > 0.0) {
        return Err(Error::invalid("SSIM dynamic range must be positive"));
    }
    let (h, w) = (a.height, a.width);
    let g = gaussian_window();
    let prod = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&a.data, h, w, &g);
    let mu_b = filter_valid(&b.data, h, w, &g);
    let aa = filter_valid(&prod(&a.data, &a.data), h, w, &g);
    let bb = filter_valid(&prod(&b.data, &b.data), h, w, &g);
    let ab = filter_valid(&prod(&a.data, &b.data), h, w, &g);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn real(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> ComplexImage {
        ComplexImage::from_fn(h, w, |r, c| Complex64::new(f(r, c), 0.0))
    }

    #[test]
    fn identical_images_hit_the_cap() {
        let x = ComplexImage::random_normal(8, 8, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(psnr(&x, &x).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn constant_offset_of_a_tenth_is_20_db() {
        let r = real(4, 4, |i, j| if (i, j) == (0, 0) { 1.0 } else { 0.5 });
        let e = real(4, 4, |i, j| if (i, j) == (0, 0) { 0.9 } else { 0.6 });
        assert!((psnr(&r, &e).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_ignores_global_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = ComplexImage::random_normal(8, 8, &mut rng);
        let e = ComplexImage::random_normal(8, 8, &mut rng);
        let rot = e.map(|v| v * Complex64::from_polar(1.0, 0.7));
        assert!((psnr(&r, &e).unwrap() - psnr(&r, &rot).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_rejected() {
        let z = ComplexImage::zeros(4, 4);
        assert!(psnr(&z, &z).is_err());
        assert!(psnr(&z, &ComplexImage::zeros(4, 5)).is_err());
    }

    #[test]
    fn ssim_identity_and_inverted_checkerboard() {
        let x = real(16, 16, |i, j| ((i + j) % 2) as f64);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y = real(16, 16, |i, j| 1.0 - ((i + j) % 2) as f64);
        assert!(ssim(&x, &y).unwrap() < 0.0);
    }

    #[test]
    fn ssim_is_symmetric_with_fixed_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = ComplexImage::random_normal(14, 12, &mut rng).magnitude();
        let b = ComplexImage::random_normal(14, 12, &mut rng).magnitude();
        let ab = ssim_real(&a, &b, 3.0).unwrap();
        let ba = ssim_real(&b, &a, 3.0).unwrap();
        assert_eq!(ab, ba);
        assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn ssim_rejects_small_or_mismatched_images() {
        let a = real(8, 8, |_, _| 1.0);
        assert!(ssim(&a, &a).is_err());
        let b = real(12, 12, |_, _| 1.0);
        assert!(ssim(&b, &real(12, 13, |_, _| 1.0)).is_err());
    }
}
