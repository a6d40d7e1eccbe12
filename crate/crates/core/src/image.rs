use crate::error::{Error, Result};

/// Row-major interleaved `f32` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u32,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: u32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width as usize * height as usize * channels as usize],
        }
    }

    pub fn filled(width: u32, height: u32, value: &[f32]) -> Self {
        let mut img = Self::new(width, height, value.len() as u32);
        for px in img.data.chunks_exact_mut(value.len()) {
            px.copy_from_slice(value);
        }
        img
    }

    pub fn from_data(width: u32, height: u32, channels: u32, data: Vec<f32>) -> Result<Self> {
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Channels of the pixel with linear index `id = y * width + x`.
    #[inline]
    pub fn pixel(&self, id: usize) -> &[f32] {
        let c = self.channels as usize;
        &self.data[id * c..(id + 1) * c]
    }

    #[inline]
    pub fn pixel_mut(&mut self, id: usize) -> &mut [f32] {
        let c = self.channels as usize;
        &mut self.data[id * c..(id + 1) * c]
    }

    pub fn same_shape(&self, o: &Image) -> bool {
        self.width == o.width && self.height == o.height && self.channels == o.channels
    }

    pub fn max_abs_diff(&self, o: &Image) -> f32 {
        self.data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn mse(&self, o: &Image) -> Result<f64> {
        if !self.same_shape(o) {
            return Err(Error::ShapeMismatch("image sizes differ".into()));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum();
        Ok(sum / self.data.len() as f64)
    }
}

/// Peak signal-to-noise ratio for signals in `[0, 1]`.
pub fn psnr(mse: f64) -> f64 {
    10.0 * (1.0 / mse).log10()
}
