//! Foveal retina sensor.
//!
//! A glimpse at a continuous location `ℓ ∈ [-1, 1]²` is a stack of square
//! crops centred on `ℓ`: the base crop is `patch_size` pixels wide, each
//! further scale is `scale_factor` times wider and block-averaged back down
//! to `patch_size`. The glimpse network then fuses the flattened retina with
//! the location through separate "what" and "where" pathways.
//!
//! Cropping is hard: nothing here is differentiable with respect to the
//! location. Location gradients come only from the policy term.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::activation::{relu_backward, relu_inplace};
use crate::nn::Linear;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GlimpseConfig {
    pub patch_size: usize,
    pub num_scales: usize,
    pub scale_factor: usize,
}

impl Default for GlimpseConfig {
    fn default() -> Self {
        GlimpseConfig {
            patch_size: 8,
            num_scales: 1,
            scale_factor: 2,
        }
    }
}

impl GlimpseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 || self.patch_size % 2 != 0 {
            return Err(Error::Config(format!("patch_size must be even and >= 2, got {}", self.patch_size)));
        }
        if self.num_scales == 0 {
            return Err(Error::Config("num_scales must be >= 1".into()));
        }
        if self.scale_factor < 2 {
            return Err(Error::Config(format!("scale_factor must be >= 2, got {}", self.scale_factor)));
        }
        Ok(())
    }

    /// Side length in pixels covered by scale `s` (0-based).
    pub fn extent(&self, s: usize) -> usize {
        self.patch_size * self.scale_factor.pow(s as u32)
    }

    /// Length of the flattened retina vector.
    pub fn retina_len(&self) -> usize {
        self.num_scales * self.patch_size * self.patch_size
    }
}

/// Normalized image coordinates; `(0, 0)` is the centre, `x` runs along
/// columns and `y` along rows.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    /// Builds a location, clamping both coordinates into `[-1, 1]`.
    pub fn new(x: f64, y: f64) -> Self {
        Location {
            x: x.clamp(-1.0, 1.0),
            y: y.clamp(-1.0, 1.0),
        }
    }

    pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let x = rng.random_range(-1.0..=1.0);
        let y = rng.random_range(-1.0..=1.0);
        Location { x, y }
    }
}

/// Maps one normalized coordinate onto `[0, size - 1]`.
pub fn coord_to_pixel(v: f64, size: usize) -> f64 {
    (v + 1.0) / 2.0 * (size as f64 - 1.0)
}

/// Pixel coordinates `(column, row)` of a location in an image with square
/// side `image_size`.
pub fn to_pixel(loc: Location, image_size: usize) -> (f64, f64) {
    (coord_to_pixel(loc.x, image_size), coord_to_pixel(loc.y, image_size))
}

/// Borrowed single-channel image, row-major.
#[derive(Clone, Copy, Debug)]
pub struct ImageRef<'a, T> {
    pub data: &'a [T],
    pub height: usize,
    pub width: usize,
}

impl<'a, T: Real> ImageRef<'a, T> {
    pub fn new(data: &'a [T], height: usize, width: usize) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension {
                op: "image",
                detail: format!("{} values for {}x{}", data.len(), height, width),
            });
        }
        Ok(ImageRef { data, height, width })
    }

    #[inline]
    fn at(&self, row: isize, col: isize) -> T {
        if row < 0 || col < 0 || row >= self.height as isize || col >= self.width as isize {
            T::zero()
        } else {
            self.data[row as usize * self.width + col as usize]
        }
    }
}

fn anchor(center: f64, size: usize) -> isize {
    libm::round(center) as isize - (size / 2) as isize
}

/// Square crop of side `size` around pixel `center = (column, row)`.
/// The top-left corner is `round(center) - size/2`; pixels outside the
/// image read as zero.
pub fn extract_patch<T: Real>(image: ImageRef<'_, T>, center: (f64, f64), size: usize) -> Tensor<T> {
    let (c0, r0) = (anchor(center.0, size), anchor(center.1, size));
    let mut out = Vec::with_capacity(size * size);
    for dr in 0..size as isize {
        for dc in 0..size as isize {
            out.push(image.at(r0 + dr, c0 + dc));
        }
    }
    Tensor::from_vec(&[size, size], out).expect("shape")
}

/// Non-overlapping `factor × factor` block averaging of a square patch.
pub fn downsample<T: Real>(patch: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let s = patch.shape();
    if s.len() != 2 || s[0] != s[1] || factor == 0 || s[0] % factor != 0 {
        return Err(Error::Dimension {
            op: "downsample",
            detail: format!("patch {:?} is not square with side divisible by {}", s, factor),
        });
    }
    let side = s[0];
    let n = side / factor;
    let inv = T::one() / T::lit((factor * factor) as f64);
    let mut out = vec![T::zero(); n * n];
    for r in 0..side {
        for c in 0..side {
            out[(r / factor) * n + c / factor] += patch.data()[r * side + c];
        }
    }
    out.iter_mut().for_each(|v| *v *= inv);
    Tensor::from_vec(&[n, n], out)
}

/// Writes the retina for one image into `out` (length `cfg.retina_len()`).
fn retina_into<T: Real>(image: ImageRef<'_, T>, loc: Location, cfg: &GlimpseConfig, out: &mut [T]) {
    debug_assert_eq!(image.height, image.width);
    let center = to_pixel(loc, image.width);
    let p = cfg.patch_size;
    for s in 0..cfg.num_scales {
        let side = cfg.extent(s);
        let k = side / p;
        let (c0, r0) = (anchor(center.0, side), anchor(center.1, side));
        let inv = T::one() / T::lit((k * k) as f64);
        let dst = &mut out[s * p * p..(s + 1) * p * p];
        for i in 0..p {
            for j in 0..p {
                let mut acc = T::zero();
                for a in 0..k {
                    for b in 0..k {
                        acc += image.at(r0 + (i * k + a) as isize, c0 + (j * k + b) as isize);
                    }
                }
                dst[i * p + j] = if k == 1 { acc } else { acc * inv };
            }
        }
    }
}

/// Concatenation, in scale order, of every scale's crop downsampled to
/// `patch_size` and flattened row-major.
pub fn build_retina<T: Real>(image: ImageRef<'_, T>, loc: Location, cfg: &GlimpseConfig) -> Result<Tensor<T>> {
    cfg.validate()?;
    if image.height != image.width {
        return Err(Error::Dimension {
            op: "build_retina",
            detail: format!("image must be square, got {}x{}", image.height, image.width),
        });
    }
    let mut out = vec![T::zero(); cfg.retina_len()];
    retina_into(image, loc, cfg, &mut out);
    Tensor::from_vec(&[cfg.retina_len()], out)
}

/// Retinas for a batch of square images stored contiguously as
/// `[batch, side, side]`, one location per image. Returns `[batch, retina_len]`.
pub fn build_retina_batch<T: Real>(images: &[T], side: usize, locs: &[Location], cfg: &GlimpseConfig) -> Tensor<T> {
    let n = cfg.retina_len();
    let mut out = vec![T::zero(); locs.len() * n];
    for (b, loc) in locs.iter().enumerate() {
        let img = ImageRef {
            data: &images[b * side * side..(b + 1) * side * side],
            height: side,
            width: side,
        };
        retina_into(img, *loc, cfg, &mut out[b * n..(b + 1) * n]);
    }
    Tensor::from_vec(&[locs.len(), n], out).expect("shape")
}

/// Hidden widths of the glimpse network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GlimpseDims {
    pub what: usize,
    pub where_: usize,
    pub out: usize,
}

impl Default for GlimpseDims {
    fn default() -> Self {
        GlimpseDims {
            what: 128,
            where_: 128,
            out: 256,
        }
    }
}

/// `G = relu(W_wo·relu(W_what·retina) + W_ho·relu(W_where·ℓ))`, biases implied.
#[derive(Clone, Debug)]
pub struct GlimpseNet<T> {
    pub what: Linear<T>,
    pub where_: Linear<T>,
    pub what_out: Linear<T>,
    pub where_out: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct GlimpseCache<T> {
    retina: Tensor<T>,
    loc: Tensor<T>,
    h_what: Tensor<T>,
    h_where: Tensor<T>,
    out: Tensor<T>,
}

impl<T: Real> GlimpseNet<T> {
    pub fn new<R: Rng + ?Sized>(retina_len: usize, dims: GlimpseDims, rng: &mut R) -> Self {
        GlimpseNet {
            what: Linear::new(retina_len, dims.what, rng),
            where_: Linear::new(2, dims.where_, rng),
            what_out: Linear::new(dims.what, dims.out, rng),
            where_out: Linear::new(dims.where_, dims.out, rng),
        }
    }

    pub fn zeros(retina_len: usize, dims: GlimpseDims) -> Self {
        GlimpseNet {
            what: Linear::zeros(retina_len, dims.what),
            where_: Linear::zeros(2, dims.where_),
            what_out: Linear::zeros(dims.what, dims.out),
            where_out: Linear::zeros(dims.where_, dims.out),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.what_out.out_dim()
    }

    /// `retina` is `[batch, retina_len]`, `loc` is `[batch, 2]`.
    pub fn forward(&self, retina: &Tensor<T>, loc: &Tensor<T>) -> Result<(Tensor<T>, GlimpseCache<T>)> {
        if loc.cols() != 2 || loc.rows() != retina.rows() {
            return Err(Error::Dimension {
                op: "glimpse_forward",
                detail: format!("locations {:?} for retina {:?}", loc.shape(), retina.shape()),
            });
        }
        let mut h_what = self.what.forward(retina)?;
        relu_inplace(h_what.data_mut());
        let mut h_where = self.where_.forward(loc)?;
        relu_inplace(h_where.data_mut());
        let mut out = self.what_out.forward(&h_what)?;
        let b = self.where_out.forward(&h_where)?;
        for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
            *o += *v;
        }
        relu_inplace(out.data_mut());
        let cache = GlimpseCache {
            retina: retina.clone(),
            loc: loc.clone(),
            h_what,
            h_where,
            out: out.clone(),
        };
        Ok((out, cache))
    }

    /// Accumulates parameter gradients for upstream `d_out`. No gradient is
    /// returned for the retina or the location.
    pub fn backward(&mut self, cache: &GlimpseCache<T>, d_out: &Tensor<T>) {
        let mut d = d_out.clone();
        relu_backward(&cache.out, &mut d);
        let mut d_what = self.what_out.backward(&cache.h_what, &d, true).expect("dx requested");
        let mut d_where = self.where_out.backward(&cache.h_where, &d, true).expect("dx requested");
        relu_backward(&cache.h_what, &mut d_what);
        relu_backward(&cache.h_where, &mut d_where);
        self.what.backward(&cache.retina, &d_what, false);
        self.where_.backward(&cache.loc, &d_where, false);
    }

    pub fn visit_named(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        use crate::nn::scoped;
        self.what.visit_named(&scoped(prefix, "what"), f);
        self.where_.visit_named(&scoped(prefix, "where"), f);
        self.what_out.visit_named(&scoped(prefix, "what_out"), f);
        self.where_out.visit_named(&scoped(prefix, "where_out"), f);
    }

    pub fn visit_named_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        use crate::nn::scoped;
        self.what.visit_named_mut(&scoped(prefix, "what"), f);
        self.where_.visit_named_mut(&scoped(prefix, "where"), f);
        self.what_out.visit_named_mut(&scoped(prefix, "what_out"), f);
        self.where_out.visit_named_mut(&scoped(prefix, "where_out"), f);
    }
}

/// Locations as a `[batch, 2]` tensor of `(x, y)`.
pub fn locations_tensor<T: Real>(locs: &[Location]) -> Tensor<T> {
    let data = locs.iter().flat_map(|l| [T::lit(l.x), T::lit(l.y)]).collect();
    Tensor::from_vec(&[locs.len(), 2], data).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_mapping_examples() {
        assert_eq!(to_pixel(Location::new(-1.0, -1.0), 28), (0.0, 0.0));
        assert_eq!(to_pixel(Location::new(0.0, 0.0), 28), (13.5, 13.5));
        assert_eq!(to_pixel(Location::new(1.0, 1.0), 48), (47.0, 47.0));
    }

    #[test]
    fn location_is_clamped() {
        let l = Location::new(1.7, -3.0);
        assert_eq!((l.x, l.y), (1.0, -1.0));
    }

    #[test]
    fn zero_image_gives_zero_patch() {
        let img = vec![0.0f64; 28 * 28];
        let p = extract_patch(ImageRef::new(&img, 28, 28).unwrap(), (3.2, 20.9), 8);
        assert!(p.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corner_patch_sees_one_quadrant() {
        let img = vec![1.0f64; 28 * 28];
        let p = extract_patch(ImageRef::new(&img, 28, 28).unwrap(), (0.0, 0.0), 8);
        assert_eq!(p.data().iter().sum::<f64>(), 16.0);
    }

    #[test]
    fn interior_patch_is_an_exact_slice() {
        let img: Vec<f64> = (0..28 * 28).map(|v| v as f64).collect();
        let p = extract_patch(ImageRef::new(&img, 28, 28).unwrap(), (10.0, 17.0), 4);
        // top-left = (col 8, row 15)
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(p.data()[r * 4 + c], img[(15 + r) * 28 + 8 + c]);
            }
        }
    }

    #[test]
    fn downsample_block_means() {
        let c = Tensor::full(&[4, 4], 3.5f64);
        assert!(downsample(&c, 2).unwrap().data().iter().all(|&v| v == 3.5));
        let p = Tensor::from_vec(&[2, 2], vec![0.0f64, 0.0, 4.0, 4.0]).unwrap();
        assert_eq!(downsample(&p, 2).unwrap().data(), &[2.0]);
        let q = Tensor::from_vec(&[4, 4], vec![0.0f64, 0.0, 4.0, 4.0, 0.0, 0.0, 4.0, 4.0, 1.0, 3.0, 8.0, 8.0, 5.0, 7.0, 8.0, 8.0]).unwrap();
        assert_eq!(downsample(&q, 2).unwrap().data(), &[0.0, 4.0, 4.0, 8.0]);
        assert!(matches!(downsample(&Tensor::<f64>::zeros(&[6, 6]), 4), Err(Error::Dimension { .. })));
    }

    #[test]
    fn single_scale_retina_is_the_flat_patch() {
        let img: Vec<f64> = (0..28 * 28).map(|v| ((v * 31) % 17) as f64).collect();
        let im = ImageRef::new(&img, 28, 28).unwrap();
        let loc = Location::new(0.3, -0.8);
        let cfg = GlimpseConfig::default();
        let r = build_retina(im, loc, &cfg).unwrap();
        let p = extract_patch(im, to_pixel(loc, 28), 8);
        assert_eq!(r.data(), p.data());
    }

    #[test]
    fn two_scale_constant_image() {
        let img = vec![0.75f64; 28 * 28];
        let cfg = GlimpseConfig { num_scales: 2, ..GlimpseConfig::default() };
        let r = build_retina(ImageRef::new(&img, 28, 28).unwrap(), Location::new(0.0, 0.1), &cfg).unwrap();
        assert_eq!(r.len(), 128);
        assert!(r.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(GlimpseConfig { patch_size: 7, ..Default::default() }.validate().is_err());
        assert!(GlimpseConfig { num_scales: 0, ..Default::default() }.validate().is_err());
        assert!(GlimpseConfig { scale_factor: 1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = GlimpseNet::<f64>::zeros(64, GlimpseDims::default());
        let (g, _) = net.forward(&Tensor::zeros(&[1, 64]), &Tensor::zeros(&[1, 2])).unwrap();
        assert_eq!(g.shape(), &[1, 256]);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
}
