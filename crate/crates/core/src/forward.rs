//! Linear forward operators (identity, Gaussian blur, pixel mask), noisy data
//! generation and synthetic phantoms.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, invalid, Error, Result};
use crate::image::Image;
use crate::linalg::LinearMap;

pub const DEFAULT_BLUR_SD: f64 = 2.0;
pub const DEFAULT_DENOISING_SIGMA: f64 = 0.2;
pub const DEFAULT_SIGMA: f64 = 1e-2;

/// Separable Gaussian blur with half-sample symmetric boundary extension.
/// The extension keeps the operator symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBlur {
    height: usize,
    width: usize,
    sd: f64,
    kernel: Vec<f64>,
}

impl GaussianBlur {
    pub fn new(height: usize, width: usize, sd: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid("blur needs a nonempty image"));
        }
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(invalid(format!("blur sd must be positive, got {sd}")));
        }
        let radius = (4.0 * sd).ceil() as isize;
        let mut kernel: Vec<f64> = (-radius..=radius)
            .map(|k| (-(k as f64).powi(2) / (2.0 * sd * sd)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        Ok(Self { height, width, sd, kernel })
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    fn reflect(i: isize, n: usize) -> usize {
        let n = n as isize;
        let m = i.rem_euclid(2 * n);
        (if m >= n { 2 * n - 1 - m } else { m }) as usize
    }

    fn convolve_1d(&self, input: &[f64], out: &mut [f64], n: usize, stride: usize, lines: usize, line_stride: usize) {
        let radius = (self.kernel.len() / 2) as isize;
        for l in 0..lines {
            let base = l * line_stride;
            for i in 0..n {
                let mut acc = 0.0;
                for (k, &h) in self.kernel.iter().enumerate() {
                    let j = Self::reflect(i as isize + k as isize - radius, n);
                    acc += h * input[base + j * stride];
                }
                out[base + i * stride] = acc;
            }
        }
    }

    fn blur(&self, x: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; x.len()];
        self.convolve_1d(x, &mut tmp, self.width, 1, self.height, self.width);
        self.convolve_1d(&tmp, out, self.height, self.width, self.width, 1);
    }
}

/// Observes a subset of pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelMask {
    n_pixels: usize,
    observed: Vec<usize>,
}

impl PixelMask {
    pub fn new(n_pixels: usize, mut observed: Vec<usize>) -> Result<Self> {
        observed.sort_unstable();
        observed.dedup();
        if observed.last().is_some_and(|&i| i >= n_pixels) {
            return Err(invalid("mask index out of range"));
        }
        Ok(Self { n_pixels, observed })
    }

    /// All pixels except a centred `hole`×`hole` square.
    pub fn center_hole(height: usize, width: usize, hole: usize) -> Result<Self> {
        if hole > height || hole > width {
            return Err(invalid(format!("hole {hole} larger than {height}x{width} image")));
        }
        let (r0, c0) = ((height - hole) / 2, (width - hole) / 2);
        let observed = (0..height * width)
            .filter(|&i| {
                let (r, c) = (i / width, i % width);
                !(r >= r0 && r < r0 + hole && c >= c0 && c < c0 + hole)
            })
            .collect();
        Self::new(height * width, observed)
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ForwardOperator {
    Identity(usize),
    Blur(GaussianBlur),
    Mask(PixelMask),
}

impl ForwardOperator {
    /// Pixels that influence at least one observation.
    pub fn column_support(&self) -> Vec<bool> {
        match self {
            ForwardOperator::Identity(n) => vec![true; *n],
            ForwardOperator::Blur(b) => vec![true; b.height * b.width],
            ForwardOperator::Mask(m) => {
                let mut s = vec![false; m.n_pixels];
                m.observed.iter().for_each(|&i| s[i] = true);
                s
            }
        }
    }

    pub fn kind(&self) -> ForwardKind {
        match self {
            ForwardOperator::Identity(_) => ForwardKind::Identity,
            ForwardOperator::Blur(b) => ForwardKind::Blur { sd: b.sd },
            ForwardOperator::Mask(_) => ForwardKind::Mask,
        }
    }
}

impl LinearMap for ForwardOperator {
    fn nrows(&self) -> usize {
        match self {
            ForwardOperator::Identity(n) => *n,
            ForwardOperator::Blur(b) => b.height * b.width,
            ForwardOperator::Mask(m) => m.observed.len(),
        }
    }

    fn ncols(&self) -> usize {
        match self {
            ForwardOperator::Identity(n) => *n,
            ForwardOperator::Blur(b) => b.height * b.width,
            ForwardOperator::Mask(m) => m.n_pixels,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ForwardOperator::Identity(_) => out.copy_from_slice(x),
            ForwardOperator::Blur(b) => b.blur(x, out),
            ForwardOperator::Mask(m) => {
                for (o, &i) in out.iter_mut().zip(&m.observed) {
                    *o = x[i];
                }
            }
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        match self {
            ForwardOperator::Identity(_) => out.copy_from_slice(y),
            ForwardOperator::Blur(b) => b.blur(y, out),
            ForwardOperator::Mask(m) => {
                out.fill(0.0);
                for (&v, &i) in y.iter().zip(&m.observed) {
                    out[i] = v;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Denoising,
    Deblurring,
    Inpainting,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::Denoising, Experiment::Deblurring, Experiment::Inpainting];

    pub fn default_sigma(self) -> f64 {
        match self {
            Experiment::Denoising => DEFAULT_DENOISING_SIGMA,
            Experiment::Deblurring | Experiment::Inpainting => DEFAULT_SIGMA,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Denoising => "denoising",
            Experiment::Deblurring => "deblurring",
            Experiment::Inpainting => "inpainting",
        }
    }

    /// Forward operator for an image of the given size. Inpainting removes
    /// the centred square of half the smaller side.
    pub fn operator(self, height: usize, width: usize, blur_sd: f64) -> Result<ForwardOperator> {
        Ok(match self {
            Experiment::Denoising => ForwardOperator::Identity(height * width),
            Experiment::Deblurring => ForwardOperator::Blur(GaussianBlur::new(height, width, blur_sd)?),
            Experiment::Inpainting => {
                ForwardOperator::Mask(PixelMask::center_hole(height, width, height.min(width) / 2)?)
            }
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s.to_ascii_lowercase())
            .ok_or_else(|| invalid(format!("unknown experiment '{s}' (denoising, deblurring, inpainting)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForwardKind {
    Identity,
    Blur { sd: f64 },
    Mask,
}

/// `y = A x + e` with `e ~ N(0, noise_sd^2 I)`.
#[derive(Clone, Debug)]
pub struct LinearProblem {
    pub height: usize,
    pub width: usize,
    pub operator: ForwardOperator,
    pub data: Vec<f64>,
    pub noise_sd: f64,
}

impl LinearProblem {
    pub fn new(height: usize, width: usize, operator: ForwardOperator, data: Vec<f64>, noise_sd: f64) -> Result<Self> {
        check_len(height * width, operator.ncols())?;
        check_len(operator.nrows(), data.len())?;
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(invalid(format!("noise sd must be positive, got {noise_sd}")));
        }
        Ok(Self { height, width, operator, data, noise_sd })
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn apply_forward(&self, image: &[f64]) -> Result<Vec<f64>> {
        apply_forward(&self.operator, image)
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.operator.nrows(), y.len())?;
        let mut out = vec![0.0; self.operator.ncols()];
        self.operator.apply_transpose(y, &mut out);
        Ok(out)
    }

    /// Starting image: the back-projected data with unobserved pixels set to
    /// the data mean, or zero for blur.
    pub fn initial_image(&self) -> Vec<f64> {
        match &self.operator {
            ForwardOperator::Blur(_) => vec![0.0; self.pixel_count()],
            op => {
                let mean = self.data.iter().sum::<f64>() / self.data.len().max(1) as f64;
                let mut x = vec![mean; self.pixel_count()];
                if let ForwardOperator::Mask(m) = op {
                    for (&v, &i) in self.data.iter().zip(m.observed()) {
                        x[i] = v;
                    }
                } else {
                    x.copy_from_slice(&self.data);
                }
                x
            }
        }
    }

    /// True if `A 1 != 0`.
    pub fn constant_is_observed(&self) -> bool {
        let ones = vec![1.0; self.pixel_count()];
        let mut out = vec![0.0; self.operator.nrows()];
        self.operator.apply(&ones, &mut out);
        out.iter().any(|&v| v != 0.0)
    }
}

pub fn apply_forward(op: &ForwardOperator, image: &[f64]) -> Result<Vec<f64>> {
    check_len(op.ncols(), image.len())?;
    let mut out = vec![0.0; op.nrows()];
    op.apply(image, &mut out);
    Ok(out)
}

pub fn make_data<R: Rng + ?Sized>(
    phantom: &Phantom,
    operator: ForwardOperator,
    noise_sd: f64,
    rng: &mut R,
) -> Result<LinearProblem> {
    let img = &phantom.image;
    let mut y = apply_forward(&operator, &img.data)?;
    for v in &mut y {
        *v += noise_sd * rng.sample::<f64, _>(StandardNormal);
    }
    LinearProblem::new(img.height, img.width, operator, y, noise_sd)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub name: String,
    pub image: Image,
}

pub const PHANTOM_NAMES: [&str; 5] = ["disk", "rects", "step", "square", "shapes"];

/// Piecewise-constant test images with values in `[0, 1]`.
pub fn make_phantom(name: &str, height: usize, width: usize) -> Result<Phantom> {
    if height == 0 || width == 0 {
        return Err(invalid("phantom needs a nonempty grid"));
    }
    let (h, w) = (height as f64, width as f64);
    let centre = |r: usize, c: usize| (r as f64 + 0.5 - h / 2.0, c as f64 + 0.5 - w / 2.0);
    let inside = |r: usize, c: usize, r0: f64, r1: f64, c0: f64, c1: f64| {
        let (y, x) = ((r as f64 + 0.5) / h, (c as f64 + 0.5) / w);
        y >= r0 && y < r1 && x >= c0 && x < c1
    };
    let image = match name {
        "disk" => {
            let rad = 0.3 * h.min(w);
            Image::from_fn(height, width, |r, c| {
                let (dy, dx) = centre(r, c);
                if dy * dy + dx * dx <= rad * rad { 1.0 } else { 0.0 }
            })
        }
        "rects" => Image::from_fn(height, width, |r, c| {
            if inside(r, c, 0.15, 0.55, 0.1, 0.45) || inside(r, c, 0.45, 0.85, 0.55, 0.9) { 1.0 } else { 0.0 }
        }),
        "step" => Image::from_fn(height, width, |_, c| if 2 * c >= width { 1.0 } else { 0.0 }),
        "square" => Image::from_fn(height, width, |r, c| {
            if inside(r, c, 0.25, 0.75, 0.25, 0.75) { 1.0 } else { 0.0 }
        }),
        "shapes" => {
            let rad = 0.2 * h.min(w);
            Image::from_fn(height, width, |r, c| {
                let (dy, dx) = centre(r, c);
                let (dy, dx) = (dy + 0.2 * h, dx + 0.2 * w);
                if dy * dy + dx * dx <= rad * rad {
                    1.0
                } else if inside(r, c, 0.5, 0.85, 0.45, 0.85) {
                    0.5
                } else {
                    0.0
                }
            })
        }
        other => {
            return Err(invalid(format!(
                "unknown phantom '{other}' (expected one of {})",
                PHANTOM_NAMES.join(", ")
            )))
        }
    };
    Ok(Phantom { name: name.to_string(), image })
}
