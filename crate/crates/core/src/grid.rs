use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `channels x height x width` grid of reals, channel-major.
///
/// Used for network outputs, branch targets and loss weights, all at output
/// resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ChannelGrid {
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height}x{channels} grid",
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

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn offset(&self, x: usize, y: usize, c: usize) -> usize {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.offset(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.offset(x, y, c);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// One channel as a row-major `height x width` slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Values of every channel at one cell.
    pub fn cell(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(x, y, c)).collect()
    }

    pub fn same_shape(&self, other: &ChannelGrid) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &ChannelGrid, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    /// Elementwise maximum, in place.
    pub fn max_assign(&mut self, other: &ChannelGrid) -> Result<()> {
        self.ensure_same_shape(other, "max merge")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = a.max(*b);
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ChannelGrid {
        ChannelGrid {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> ChannelGrid {
        self.map(|v| v * k)
    }

    /// Channel `c` as 8-bit grayscale, values scaled by 255 and clamped.
    pub fn channel_to_gray8(&self, c: usize) -> Vec<u8> {
        self.channel(c)
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}
