//! Complex-array plumbing, centered FFT, conjugate gradient and the DPN1
//! tensor format.

mod cg;
pub mod dpn1;
mod fft;
mod image;

pub use cg::{conjugate_gradient, CgConfig, CgOutcome};
pub use fft::{fft2_centered, ifft2_centered, Fft2};
pub use image::{ComplexImage, RealImage};

use crate::error::{Error, Result};
use dpn1::{Tensor, TensorData};

impl ComplexImage {
    pub fn to_tensor(&self) -> Tensor {
        Tensor::c128(vec![self.height(), self.width()], self.data().to_vec()).expect("image dims always match its data")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match (&t.data, t.dims.as_slice()) {
            (TensorData::C128(v), &[h, w]) => ComplexImage::from_vec(h, w, v.clone()),
            _ => Err(Error::invalid(format!(
                "expected a 2D complex tensor, got dims {:?}",
                t.dims
            ))),
        }
    }
}

impl RealImage {
    pub fn to_tensor(&self) -> Tensor {
        Tensor::f64(vec![self.height, self.width], self.data.clone()).expect("image dims always match its data")
    }
}

/// Stacks equally shaped planes into a `[n, h, w]` complex tensor.
pub fn stack_to_tensor(planes: &[ComplexImage]) -> Result<Tensor> {
    let first = planes
        .first()
        .ok_or_else(|| Error::invalid("cannot stack zero planes"))?;
    let (h, w) = first.shape();
    let mut data = Vec::with_capacity(planes.len() * h * w);
    for p in planes {
        p.check_shape((h, w), "stacked plane")?;
        data.extend_from_slice(p.data());
    }
    Tensor::c128(vec![planes.len(), h, w], data)
}

pub fn unstack_tensor(t: &Tensor) -> Result<Vec<ComplexImage>> {
    match (&t.data, t.dims.as_slice()) {
        (TensorData::C128(v), &[n, h, w]) => (0..n)
            .map(|i| ComplexImage::from_vec(h, w, v[i * h * w..(i + 1) * h * w].to_vec()))
            .collect(),
        _ => Err(Error::invalid(format!(
            "expected a 3D complex tensor, got dims {:?}",
            t.dims
        ))),
    }
}
