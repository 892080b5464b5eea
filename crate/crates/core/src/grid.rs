//! Dense 2D grids and multi-channel images.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must be positive, got {height}x{width}")]
    EmptyShape { height: usize, width: usize },
    #[error("expected {expected} values for the given shape, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
}

/// Read access to a single row-major 2D plane of values.
pub trait Plane {
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn values(&self) -> &[f64];

    #[inline]
    fn at(&self, row: usize, col: usize) -> f64 {
        self.values()[row * self.width() + col]
    }
}

/// An owned, dense, row-major 2D array of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Grid2D {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self, GridError> {
        check_shape(height, width, &values)?;
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self, GridError> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Builds a grid from nested rows. All rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, GridError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(height * width);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(GridError::LengthMismatch {
                    expected: height * width,
                    actual: values.len() + row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(height, width, values)
    }

    pub fn view(&self) -> GridView<'_> {
        GridView {
            height: self.height,
            width: self.width,
            values: &self.values,
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Applies `f` to every value. The result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        Self::new(
            self.height,
            self.width,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

impl Plane for Grid2D {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Borrowed plane, typically one channel of an [`Image`].
#[derive(Debug, Clone, Copy)]
pub struct GridView<'a> {
    height: usize,
    width: usize,
    values: &'a [f64],
}

impl<'a> GridView<'a> {
    /// The caller guarantees `values.len() == height * width`; checked in debug builds.
    pub fn new(height: usize, width: usize, values: &'a [f64]) -> Self {
        debug_assert_eq!(values.len(), height * width);
        Self {
            height,
            width,
            values,
        }
    }

    pub fn to_grid(&self) -> Grid2D {
        Grid2D {
            height: self.height,
            width: self.width,
            values: self.values.to_vec(),
        }
    }
}

impl Plane for GridView<'_> {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn values(&self) -> &[f64] {
        self.values
    }
}

impl<P: Plane + ?Sized> Plane for &P {
    fn height(&self) -> usize {
        (**self).height()
    }
    fn width(&self) -> usize {
        (**self).width()
    }
    fn values(&self) -> &[f64] {
        (**self).values()
    }
}

/// A channel-planar stack of equally sized planes: `[channel][row][col]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, GridError> {
        if channels == 0 {
            return Err(GridError::EmptyShape { height, width });
        }
        check_shape(height, width * channels, &data)?;
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_grid(grid: Grid2D) -> Self {
        Self {
            channels: 1,
            height: grid.height,
            width: grid.width,
            data: grid.values,
        }
    }

    pub fn from_planes(planes: &[Grid2D]) -> Result<Self, GridError> {
        let first = planes.first().ok_or(GridError::EmptyShape {
            height: 0,
            width: 0,
        })?;
        let (height, width) = (first.height, first.width);
        let mut data = Vec::with_capacity(planes.len() * height * width);
        for p in planes {
            if p.height != height || p.width != width {
                return Err(GridError::LengthMismatch {
                    expected: height * width,
                    actual: p.values.len(),
                });
            }
            data.extend_from_slice(&p.values);
        }
        Ok(Self {
            channels: planes.len(),
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channel(&self, c: usize) -> GridView<'_> {
        let n = self.height * self.width;
        GridView::new(self.height, self.width, &self.data[c * n..(c + 1) * n])
    }

    pub fn planes(&self) -> impl Iterator<Item = GridView<'_>> + '_ {
        (0..self.channels).map(move |c| self.channel(c))
    }
}

fn check_shape(height: usize, width: usize, values: &[f64]) -> Result<(), GridError> {
    if height == 0 || width == 0 {
        return Err(GridError::EmptyShape { height, width });
    }
    let expected = height * width;
    if values.len() != expected {
        return Err(GridError::LengthMismatch {
            expected,
            actual: values.len(),
        });
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(GridError::NonFinite { index });
    }
    Ok(())
}
