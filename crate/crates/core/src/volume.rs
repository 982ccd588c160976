//! The rank-3 value type every layer operates on.

use crate::error::{Error, Result};

/// Dense rank-3 array of `f64` (height x width x depth).
///
/// Storage is row-major with depth innermost: the flat index of `(x, y, d)`
/// is `((y * width) + x) * depth + d`. Depth is the channel axis, so the
/// channels of one pixel sit next to each other in memory. All elements are
/// finite after any public operation.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    height: usize,
    width: usize,
    depth: usize,
    data: Vec<f64>,
}

impl Volume {
    /// Builds a volume with every element set to `fill`.
    pub fn new(height: usize, width: usize, depth: usize, fill: f64) -> Result<Self> {
        if height == 0 || width == 0 || depth == 0 {
            return Err(Error::Dimension(format!(
                "volume dimensions must be positive, got {height}x{width}x{depth}"
            )));
        }
        if !fill.is_finite() {
            return Err(Error::Numeric(format!("fill value {fill} is not finite")));
        }
        Ok(Volume {
            height,
            width,
            depth,
            data: vec![fill; height * width * depth],
        })
    }

    /// Builds an all-zero volume.
    pub fn zeros(height: usize, width: usize, depth: usize) -> Result<Self> {
        Volume::new(height, width, depth, 0.0)
    }

    /// Wraps an existing flat buffer, which must be finite and already in
    /// row-major, depth-innermost order.
    pub fn from_vec(height: usize, width: usize, depth: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || depth == 0 {
            return Err(Error::Dimension(format!(
                "volume dimensions must be positive, got {height}x{width}x{depth}"
            )));
        }
        if data.len() != height * width * depth {
            return Err(Error::Shape(format!(
                "buffer of {} elements cannot fill a {height}x{width}x{depth} volume",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("buffer contains non-finite {bad}")));
        }
        Ok(Volume {
            height,
            width,
            depth,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.depth)
    }

    /// Number of elements (`height * width * depth`).
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; a volume has at least one element.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of `(x, y, d)`.
    #[inline]
    pub fn index(&self, x: usize, y: usize, d: usize) -> usize {
        debug_assert!(x < self.width && y < self.height && d < self.depth);
        ((y * self.width) + x) * self.depth + d
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, d: usize) -> f64 {
        self.data[self.index(x, y, d)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, d: usize, value: f64) {
        debug_assert!(value.is_finite());
        let i = self.index(x, y, d);
        self.data[i] = value;
    }

    /// Reads `(x, y, d)` from the volume as if it were surrounded by a
    /// zero border `pad` cells wide. Coordinates inside the border read as
    /// exactly 0.0; coordinates beyond it are an error, as is a bad depth.
    pub fn padded_get(&self, x: isize, y: isize, d: usize, pad: usize) -> Result<f64> {
        if d >= self.depth {
            return Err(Error::Index(format!(
                "depth {d} out of range for volume of depth {}",
                self.depth
            )));
        }
        let pad = pad as isize;
        let (w, h) = (self.width as isize, self.height as isize);
        if x < -pad || x >= w + pad || y < -pad || y >= h + pad {
            return Err(Error::Index(format!(
                "({x}, {y}) outside the {}x{} volume padded by {pad}",
                self.width, self.height
            )));
        }
        if x < 0 || y < 0 || x >= w || y >= h {
            Ok(0.0)
        } else {
            Ok(self.get(x as usize, y as usize, d))
        }
    }

    /// Applies `f` to every element, preserving shape. Fails if `f`
    /// produces a non-finite value.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<Volume> {
        let mut data = Vec::with_capacity(self.data.len());
        for &v in &self.data {
            let out = f(v);
            if !out.is_finite() {
                return Err(Error::Numeric(format!("map produced non-finite {out} from {v}")));
            }
            data.push(out);
        }
        Ok(Volume {
            height: self.height,
            width: self.width,
            depth: self.depth,
            data,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// True when both volumes have the same shape.
    pub fn same_shape(&self, other: &Volume) -> bool {
        self.shape() == other.shape()
    }
}
