//! Synthetic parallel-imaging datasets: ellipse phantoms with smooth intensity
//! and phase, measured through a shared operator with complex Gaussian noise.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{make_coil_maps, make_vardens_mask, ForwardOperator, Measurements, SamplingMask};
use crate::error::{Error, Result};
use crate::numerics::dpn1::{self, Tensor, TensorData};
use crate::numerics::{stack_to_tensor, unstack_tensor, ComplexImage};
use crate::rng::{rng_for, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub shape: (usize, usize),
    pub n_coils: usize,
    pub acceleration: f64,
    /// Standard deviation of the real and of the imaginary part of each
    /// k-space noise sample.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_train: 200,
            n_val: 10,
            n_test: 20,
            shape: (32, 32),
            n_coils: 4,
            acceleration: 4.0,
            noise_std: 0.01,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.shape.0 < 2 || self.shape.1 < 2 {
            return Err(Error::invalid("image shape must be at least 2x2"));
        }
        if self.n_coils == 0 {
            return Err(Error::invalid("need at least one coil"));
        }
        if !self.acceleration.is_finite() || self.acceleration < 1.0 {
            return Err(Error::invalid("acceleration factor must be at least 1"));
        }
        if self.acceleration > self.shape.1 as f64 {
            return Err(Error::invalid("acceleration factor exceeds image width"));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::invalid("noise std must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub image: ComplexImage,
    pub kspace: Measurements,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub op: ForwardOperator,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Piecewise-smooth ellipse phantom with a linear phase ramp. Magnitudes lie
/// roughly in `[0, 1]`; everything outside the outer "head" ellipse is zero.
pub fn make_phantom<R: Rng + ?Sized>(shape: (usize, usize), rng: &mut R) -> ComplexImage {
    let (h, w) = shape;
    struct Ellipse {
        cy: f64,
        cx: f64,
        ay: f64,
        ax: f64,
        rot: f64,
        value: f64,
    }
    impl Ellipse {
        fn contains(&self, y: f64, x: f64) -> bool {
            let (dy, dx) = (y - self.cy, x - self.cx);
            let (s, c) = self.rot.sin_cos();
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            (u / self.ax).powi(2) + (v / self.ay).powi(2) <= 1.0
        }
    }

    // normalized coordinates in [-1, 1]
    let head = Ellipse {
        cy: rng.random_range(-0.05..0.05),
        cx: rng.random_range(-0.05..0.05),
        ay: rng.random_range(0.72..0.88),
        ax: rng.random_range(0.58..0.74),
        rot: rng.random_range(-0.2..0.2),
        value: rng.random_range(0.55..0.8),
    };
    let n_inner = rng.random_range(3..=6);
    let inner: Vec<Ellipse> = (0..n_inner)
        .map(|_| {
            let r: f64 = rng.random_range(0.0..0.45);
            let t: f64 = rng.random_range(0.0..2.0 * PI);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Ellipse {
                cy: head.cy + r * head.ay * t.sin(),
                cx: head.cx + r * head.ax * t.cos(),
                ay: rng.random_range(0.08..0.3),
                ax: rng.random_range(0.08..0.3),
                rot: rng.random_range(0.0..PI),
                value: sign * rng.random_range(0.15..0.4),
            }
        })
        .collect();
    let (gy, gx): (f64, f64) = (rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15));
    let phase0: f64 = rng.random_range(-PI..PI);
    let (py, px): (f64, f64) = (rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));

    ComplexImage::from_fn(h, w, |r, c| {
        let y = 2.0 * (r as f64 + 0.5) / h as f64 - 1.0;
        let x = 2.0 * (c as f64 + 0.5) / w as f64 - 1.0;
        if !head.contains(y, x) {
            return Complex64::new(0.0, 0.0);
        }
        let mut v = head.value;
        for e in &inner {
            if e.contains(y, x) {
                v += e.value;
            }
        }
        let mag = (v * (1.0 + gy * y + gx * x)).clamp(0.05, 1.0);
        Complex64::from_polar(mag, phase0 + py * y + px * x)
    })
}

/// Adds `N(0, std²)` noise to the real and imaginary parts of every sampled
/// k-space location; unsampled locations stay exactly zero.
fn add_kspace_noise<R: Rng + ?Sized>(k: &mut Measurements, mask: &SamplingMask, std: f64, rng: &mut R) {
    if std == 0.0 {
        return;
    }
    for plane in k.coils_mut() {
        let w = plane.width();
        for (i, v) in plane.data_mut().iter_mut().enumerate() {
            if mask.is_sampled(i / w, i % w) {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *v += Complex64::new(re * std, im * std);
            }
        }
    }
}

pub fn gen_phantoms(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mask = make_vardens_mask(spec.shape, spec.acceleration, spec.seed)?;
    let coils = make_coil_maps(spec.shape, spec.n_coils)?;
    let op = ForwardOperator::new(mask, coils)?;

    let make_split = |split: Split, n: usize| -> Result<Vec<Sample>> {
        (0..n)
            .map(|i| {
                let mut rng = rng_for(spec.seed, &[tag::PHANTOM, split.tag(), i as u64]);
                let image = make_phantom(spec.shape, &mut rng);
                let mut kspace = op.apply(&image)?;
                let mut noise_rng = rng_for(spec.seed, &[tag::NOISE, split.tag(), i as u64]);
                add_kspace_noise(&mut kspace, op.mask(), spec.noise_std, &mut noise_rng);
                Ok(Sample { image, kspace })
            })
            .collect()
    };

    Ok(Dataset {
        train: make_split(Split::Train, spec.n_train)?,
        val: make_split(Split::Val, spec.n_val)?,
        test: make_split(Split::Test, spec.n_test)?,
        spec: spec.clone(),
        op,
    })
}

pub const MANIFEST: &str = "manifest.txt";

fn manifest_text(spec: &DatasetSpec) -> String {
    format!(
        "shape={}x{}\ncoils={}\nacceleration={}\nnoise_std={}\nseed={}\ntrain={}\nval={}\ntest={}\n",
        spec.shape.0,
        spec.shape.1,
        spec.n_coils,
        spec.acceleration,
        spec.noise_std,
        spec.seed,
        spec.n_train,
        spec.n_val,
        spec.n_test
    )
}

fn parse_manifest(text: &str, path: &Path) -> Result<DatasetSpec> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut spec = DatasetSpec::default();
    let mut seen = 0;
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {line:?} is not key=value")))?;
        let num = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("bad value for {k}: {v:?}")));
        match k {
            "shape" => {
                let (a, b) = v.split_once('x').ok_or_else(|| bad(format!("bad shape {v:?}")))?;
                spec.shape = (num(a)?, num(b)?);
            }
            "coils" => spec.n_coils = num(v)?,
            "acceleration" => spec.acceleration = v.parse().map_err(|_| bad(format!("bad acceleration {v:?}")))?,
            "noise_std" => spec.noise_std = v.parse().map_err(|_| bad(format!("bad noise_std {v:?}")))?,
            "seed" => spec.seed = v.parse().map_err(|_| bad(format!("bad seed {v:?}")))?,
            "train" => spec.n_train = num(v)?,
            "val" => spec.n_val = num(v)?,
            "test" => spec.n_test = num(v)?,
            other => return Err(bad(format!("unknown manifest key {other:?}"))),
        }
        seen += 1;
    }
    if seen < 8 {
        return Err(bad("manifest is missing keys".into()));
    }
    spec.validate()?;
    Ok(spec)
}

pub fn sample_paths(dir: &Path, split: Split, index: usize) -> (std::path::PathBuf, std::path::PathBuf) {
    let d = dir.join(split.name());
    (
        d.join(format!("img_{index:04}.dpn1")),
        d.join(format!("ksp_{index:04}.dpn1")),
    )
}

impl Dataset {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (h, w) = self.spec.shape;
        let mask_plane: Vec<f32> = self
            .op
            .mask()
            .to_plane()
            .into_iter()
            .map(|b| if b { 1.0 } else { 0.0 })
            .collect();
        dpn1::save_tensor(
            &dir.join("mask.dpn1"),
            &Tensor::new(vec![h, w], TensorData::F32(mask_plane))?,
        )?;
        dpn1::save_tensor(&dir.join("coils.dpn1"), &stack_to_tensor(self.op.coil_maps())?)?;
        for split in Split::ALL {
            let sub = dir.join(split.name());
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            for (i, s) in self.split(split).iter().enumerate() {
                let (img, ksp) = sample_paths(dir, split, i);
                dpn1::save_tensor(&img, &s.image.to_tensor())?;
                dpn1::save_tensor(&ksp, &stack_to_tensor(s.kspace.coils())?)?;
            }
        }
        // manifest last so a partially written directory has no manifest
        dpn1::write_atomic(&dir.join(MANIFEST), manifest_text(&self.spec).as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest = dir.join(MANIFEST);
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let spec = parse_manifest(&text, &manifest)?;
        let (h, w) = spec.shape;

        let mask_path = dir.join("mask.dpn1");
        let mask_t = dpn1::load_tensor(&mask_path)?;
        let plane: Vec<bool> = match (&mask_t.data, mask_t.dims.as_slice()) {
            (TensorData::F32(v), d) if d == [h, w] => v.iter().map(|&x| x != 0.0).collect(),
            _ => {
                return Err(Error::Format {
                    path: mask_path,
                    reason: "mask must be a real f32 plane of the manifest shape".into(),
                })
            }
        };
        let mask = SamplingMask::from_plane(h, w, &plane)?;
        let coils = unstack_tensor(&dpn1::load_tensor(&dir.join("coils.dpn1"))?)?;
        if coils.len() != spec.n_coils {
            return Err(Error::Format {
                path: dir.join("coils.dpn1"),
                reason: format!("manifest says {} coils, file has {}", spec.n_coils, coils.len()),
            });
        }
        let op = ForwardOperator::new(mask, coils)?;

        let load_split = |split: Split, n: usize| -> Result<Vec<Sample>> {
            (0..n)
                .map(|i| {
                    let (img, ksp) = sample_paths(dir, split, i);
                    let image = ComplexImage::from_tensor(&dpn1::load_tensor(&img)?)?;
                    image.check_shape((h, w), "stored image")?;
                    let kspace = Measurements::new(unstack_tensor(&dpn1::load_tensor(&ksp)?)?)?;
                    if kspace.n_coils() != spec.n_coils || kspace.shape() != (h, w) {
                        return Err(Error::Format {
                            path: ksp,
                            reason: "k-space planes do not match the manifest".into(),
                        });
                    }
                    Ok(Sample { image, kspace })
                })
                .collect()
        };
        Ok(Dataset {
            train: load_split(Split::Train, spec.n_train)?,
            val: load_split(Split::Val, spec.n_val)?,
            test: load_split(Split::Test, spec.n_test)?,
            spec,
            op,
        })
    }
}
