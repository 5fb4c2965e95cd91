use crate::vec2::Vec2;

/// A multi-channel image with values in `[0, 1]`.
///
/// Row 0 is the bottom row so that pixel `(x, y)` covers `[x, x+1] x [y, y+1]`
/// in curve coordinates. File readers and writers flip rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Image::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.data[(y * width + x) * channels + c] = f(x, y, c);
                }
            }
        }
        img
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = self.index(x, y) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Pixel containing `p`, clamped to the image.
    pub fn pixel_at(&self, p: Vec2) -> (usize, usize) {
        let clamp = |v: f64, n: usize| {
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v.floor() as usize).min(n - 1)
            }
        };
        (clamp(p.x, self.width), clamp(p.y, self.height))
    }

    pub fn sample_nearest(&self, p: Vec2) -> &[f64] {
        let (x, y) = self.pixel_at(p);
        self.pixel(x, y)
    }

    /// Bilinear interpolation between pixel centers, clamped at the border.
    pub fn sample_bilinear(&self, p: Vec2) -> Vec<f64> {
        let fx = (p.x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (p.y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        (0..self.channels)
            .map(|c| {
                let v = |x, y| self.pixel(x, y)[c];
                (1.0 - ty) * ((1.0 - tx) * v(x0, y0) + tx * v(x1, y0))
                    + ty * ((1.0 - tx) * v(x0, y1) + tx * v(x1, y1))
            })
            .collect()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn map_pixels(&self, channels: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Image {
        let mut out = Image::new(self.width, self.height, channels);
        for i in 0..self.pixel_count() {
            let v = f(&self.data[i * self.channels..(i + 1) * self.channels]);
            out.data[i * channels..(i + 1) * channels].copy_from_slice(&v);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_sampling_uses_containing_pixel() {
        let img = Image::from_fn(4, 3, 1, |x, y, _| (10 * y + x) as f64);
        assert_eq!(img.sample_nearest(Vec2::new(2.7, 1.2)), &[12.0]);
        assert_eq!(img.sample_nearest(Vec2::new(-1.0, 5.0)), &[20.0]);
        assert_eq!(img.sample_nearest(Vec2::new(4.0, 3.0)), &[23.0]);
    }

    #[test]
    fn bilinear_hits_pixel_centers_and_interpolates() {
        let img = Image::from_fn(4, 3, 1, |x, y, _| (10 * y + x) as f64);
        assert_eq!(img.sample_bilinear(Vec2::new(1.5, 1.5)), vec![11.0]);
        assert!((img.sample_bilinear(Vec2::new(2.0, 1.5))[0] - 11.5).abs() < 1e-12);
        assert!((img.sample_bilinear(Vec2::new(1.5, 2.0))[0] - 16.0).abs() < 1e-12);
    }
}
