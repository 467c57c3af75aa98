use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tracking::BufferToken;

/// Dense 2D complex array in row-major order.
#[derive(Debug, Clone)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
    _token: BufferToken,
}

impl PartialEq for ComplexImage {
    fn eq(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width && self.data == other.data
    }
}

impl ComplexImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_raw(height, width, vec![Complex64::new(0.0, 0.0); height * width])
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "{} values do not fill a {height}x{width} image",
                data.len()
            )));
        }
        Ok(Self::from_raw(height, width, data))
    }

    /// Builds an image from a function of `(row, col)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::from_raw(height, width, data)
    }

    /// Independent standard normal real and imaginary parts.
    pub fn random_normal<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Self {
        let mut img = Self::zeros(height, width);
        img.add_gaussian_noise(1.0, rng);
        img
    }

    fn from_raw(height: usize, width: usize, data: Vec<Complex64>) -> Self {
        ComplexImage {
            height,
            width,
            data,
            _token: BufferToken::new(1),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        let ComplexImage { data, .. } = self;
        data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.width + col] = v;
    }

    pub fn same_shape(&self, other: &ComplexImage) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_shape(&self, shape: (usize, usize), what: &str) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::invalid(format!(
                "{what} has shape {:?}, expected {:?}",
                self.shape(),
                shape
            )));
        }
        Ok(())
    }

    /// `⟨self, other⟩ = Σ conj(self) · other`.
    pub fn dot(&self, other: &ComplexImage) -> Complex64 {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    /// Real part of the inner product, i.e. the inner product of the images
    /// viewed as real vectors of length `2 · height · width`.
    pub fn real_dot(&self, other: &ComplexImage) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `self += a · x`
    pub fn axpy(&mut self, a: f64, x: &ComplexImage) {
        debug_assert!(self.same_shape(x));
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += v * a;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> ComplexImage {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn add(&self, other: &ComplexImage) -> ComplexImage {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexImage) -> ComplexImage {
        self.zip_map(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ComplexImage) -> ComplexImage {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexImage {
        Self::from_raw(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ComplexImage, f: impl Fn(Complex64, Complex64) -> Complex64) -> ComplexImage {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::from_raw(self.height, self.width, data)
    }

    pub fn magnitude(&self) -> RealImage {
        RealImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.norm()).collect(),
        }
    }

    /// Adds independent `N(0, std²)` noise to the real and imaginary parts.
    pub fn add_gaussian_noise<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) {
        for v in &mut self.data {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re * std, im * std);
        }
    }

    /// Root-mean-square magnitude.
    pub fn rms(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        (self.norm_sqr() / self.data.len() as f64).sqrt()
    }
}

/// Dense 2D real array in row-major order; used for magnitude and variance maps.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl RealImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        RealImage {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Binary 16-bit PGM (`P5`, big-endian samples) with `peak` mapped to
    /// 65535 and values clamped to `[0, peak]`. A nonpositive peak gives a
    /// black image.
    pub fn to_pgm16(&self, peak: f64) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for &v in &self.data {
            let q = if peak > 0.0 && v.is_finite() {
                (v / peak).clamp(0.0, 1.0) * 65535.0
            } else {
                0.0
            };
            out.extend_from_slice(&(q.round() as u16).to_be_bytes());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(ComplexImage::from_vec(2, 3, vec![Complex64::new(0.0, 0.0); 5]).is_err());
    }

    #[test]
    fn dot_is_conjugate_linear_in_first_argument() {
        let a = ComplexImage::from_vec(1, 2, vec![Complex64::new(0.0, 1.0), Complex64::new(2.0, 0.0)]).unwrap();
        let b = ComplexImage::from_vec(1, 2, vec![Complex64::new(0.0, 1.0), Complex64::new(1.0, 1.0)]).unwrap();
        // conj(i)·i + 2·(1+i) = 1 + 2 + 2i
        assert_eq!(a.dot(&b), Complex64::new(3.0, 2.0));
        assert_eq!(a.real_dot(&b), 3.0);
    }

    #[test]
    fn arithmetic_leaves_inputs_untouched() {
        let a = ComplexImage::from_fn(2, 2, |r, c| Complex64::new(r as f64, c as f64));
        let b = a.scaled(2.0);
        let before = a.clone();
        let _ = a.sub(&b);
        let _ = a.add(&b);
        let _ = a.mul(&b);
        assert_eq!(a, before);
    }

    #[test]
    fn pgm16_header_and_scaling() {
        let img = RealImage {
            height: 1,
            width: 3,
            data: vec![0.0, 0.5, 2.0],
        };
        let pgm = img.to_pgm16(1.0);
        let header = b"P5\n3 1\n65535\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(&pgm[header.len()..], &[0, 0, 0x80, 0x00, 0xFF, 0xFF]);
    }
}
