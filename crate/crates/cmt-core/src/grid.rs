//! Pixel-lattice primitives shared by input images and coefficient vectors.
//!
//! An [`ImageGrid`] is a dense H×W raster. Dataset images keep intensities in
//! `[0, 1]`; model coefficient vectors reshaped onto the same lattice are
//! unbounded reals. Both are rotated with the same bilinear sampler so that
//! inputs and coefficients stay parameterized consistently.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};

/// A dense H×W grayscale raster stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    /// Wraps row-major `values` of length `height * width`.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid_argument("grid dimensions must be positive"));
        }
        if values.len() != height * width {
            return Err(invalid_argument(format!(
                "expected {} values for a {}x{} grid, got {}",
                height * width,
                height,
                width,
                values.len()
            )));
        }
        Ok(ImageGrid {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        ImageGrid {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row-major view of the raster, also the feature-vector layout.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.height && col < self.width);
        self.values[row * self.width + col] = value;
    }

    /// Resamples the grid rotated by `angle` degrees about the geometric
    /// center `((H-1)/2, (W-1)/2)`.
    ///
    /// Inverse mapping: each output pixel pulls the input at its coordinates
    /// rotated by `-angle`, bilinearly interpolated. Taps outside the input
    /// extent read `fill`. An angle of exactly 0 reproduces the grid
    /// bit-for-bit.
    pub fn rotate_bilinear(&self, angle_degrees: f64, fill: f64) -> Result<ImageGrid> {
        if !angle_degrees.is_finite() {
            return Err(invalid_argument("rotation angle must be finite"));
        }
        if !fill.is_finite() {
            return Err(invalid_argument("rotation fill value must be finite"));
        }
        let (h, w) = (self.height, self.width);
        let cy = (h as f64 - 1.0) / 2.0;
        let cx = (w as f64 - 1.0) / 2.0;
        let (sin_t, cos_t) = angle_degrees.to_radians().sin_cos();
        let mut out = Vec::with_capacity(h * w);
        for r in 0..h {
            let dy = r as f64 - cy;
            for c in 0..w {
                let dx = c as f64 - cx;
                let sx = cos_t * dx + sin_t * dy + cx;
                let sy = -sin_t * dx + cos_t * dy + cy;
                out.push(self.sample_bilinear(sx, sy, fill));
            }
        }
        Ok(ImageGrid {
            height: h,
            width: w,
            values: out,
        })
    }

    fn sample_bilinear(&self, x: f64, y: f64, fill: f64) -> f64 {
        let x0f = x.floor();
        let y0f = y.floor();
        let fx = x - x0f;
        let fy = y - y0f;
        let x0 = x0f as i64;
        let y0 = y0f as i64;
        let tap = |r: i64, c: i64| -> f64 {
            if r < 0 || c < 0 || r >= self.height as i64 || c >= self.width as i64 {
                fill
            } else {
                self.values[r as usize * self.width + c as usize]
            }
        };
        let v00 = tap(y0, x0);
        let v01 = tap(y0, x0 + 1);
        let v10 = tap(y0 + 1, x0);
        let v11 = tap(y0 + 1, x0 + 1);
        v00 * (1.0 - fx) * (1.0 - fy)
            + v01 * fx * (1.0 - fy)
            + v10 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    /// 2-D convolution with `kernel`, zero-padded at the borders, same shape.
    pub fn gaussian_smooth(&self, kernel: &GaussianKernel) -> Result<ImageGrid> {
        let s = kernel.size();
        if s > self.height.min(self.width) {
            return Err(invalid_argument(format!(
                "kernel size {} exceeds grid extent {}x{}",
                s, self.height, self.width
            )));
        }
        let c0 = (s / 2) as i64;
        let (h, w) = (self.height as i64, self.width as i64);
        let mut out = Vec::with_capacity(self.values.len());
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for i in 0..s as i64 {
                    let rr = r + c0 - i;
                    if rr < 0 || rr >= h {
                        continue;
                    }
                    for j in 0..s as i64 {
                        let cc = c + c0 - j;
                        if cc < 0 || cc >= w {
                            continue;
                        }
                        acc += self.values[(rr * w + cc) as usize]
                            * kernel.weights()[(i * s as i64 + j) as usize];
                    }
                }
                out.push(acc);
            }
        }
        Ok(ImageGrid {
            height: self.height,
            width: self.width,
            values: out,
        })
    }
}

/// A normalized, flip-symmetric Gaussian convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    size: usize,
    sigma: f64,
    weights: Vec<f64>,
}

impl GaussianKernel {
    /// Builds a `size`×`size` kernel with weights proportional to
    /// `exp(-((i-c)^2 + (j-c)^2) / (2 sigma^2))`, normalized to sum 1.
    pub fn new(size: usize, sigma: f64) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(invalid_argument(format!(
                "kernel size must be odd and positive, got {size}"
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid_argument(format!(
                "kernel sigma must be a positive real, got {sigma}"
            )));
        }
        let c = (size as f64 - 1.0) / 2.0;
        let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
        let mut weights = Vec::with_capacity(size * size);
        let mut total = 0.0;
        for i in 0..size {
            let di = i as f64 - c;
            for j in 0..size {
                let dj = j as f64 - c;
                let v = (-(di * di + dj * dj) * inv_two_sigma_sq).exp();
                weights.push(v);
                total += v;
            }
        }
        for v in &mut weights {
            *v /= total;
        }
        Ok(GaussianKernel {
            size,
            sigma,
            weights,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Row-major `size`×`size` weights summing to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Default for GaussianKernel {
    fn default() -> Self {
        GaussianKernel::new(5, 1.0).expect("default kernel parameters are valid")
    }
}

// Serialized as its parameters; weights are rebuilt (and thus re-validated)
// on deserialization.
#[derive(Serialize, Deserialize)]
struct KernelParams {
    size: usize,
    sigma: f64,
}

impl Serialize for GaussianKernel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        KernelParams {
            size: self.size,
            sigma: self.sigma,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GaussianKernel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let params = KernelParams::deserialize(deserializer)?;
        GaussianKernel::new(params.size, params.sigma).map_err(serde::de::Error::custom)
    }
}
