use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One uniformly spaced axis including both end points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub extent: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.extent - 1) as f64
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        if i + 1 == self.extent {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }
}

/// Tensor-product grid in one or two spatial dimensions. Points are
/// enumerated in row-major order (last axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Config(format!(
                "grids must be 1D or 2D, got {} axes",
                axes.len()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if a.extent < 2 {
                return Err(Error::Config(format!(
                    "axis {i} has {} point(s); at least 2 are required",
                    a.extent
                )));
            }
            if !(a.hi > a.lo) || !a.lo.is_finite() || !a.hi.is_finite() {
                return Err(Error::Config(format!(
                    "axis {i} bounds [{}, {}] are not increasing",
                    a.lo, a.hi
                )));
            }
        }
        Ok(Self { axes })
    }

    pub fn line(extent: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![Axis { extent, lo, hi }])
    }

    /// `extent` points covering one period `[lo, lo + period)` without the
    /// duplicated end point.
    pub fn periodic_line(extent: usize, lo: f64, period: f64) -> Result<Self> {
        let h = period / extent as f64;
        Self::line(extent, lo, lo + period - h)
    }

    pub fn square(extent: usize, lo: f64, hi: f64) -> Result<Self> {
        let axis = Axis { extent, lo, hi };
        Self::new(vec![axis.clone(), axis])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn extents(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.extent).collect()
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.extent).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.axes[axis].spacing()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// Coordinates of every point, `len() × dims()` row-major.
    pub fn coordinates(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.dims());
        match self.axes.as_slice() {
            [x] => out.extend((0..x.extent).map(|i| x.coordinate(i))),
            [x, y] => {
                for i in 0..x.extent {
                    for j in 0..y.extent {
                        out.push(x.coordinate(i));
                        out.push(y.coordinate(j));
                    }
                }
            }
            _ => unreachable!("validated in Grid::new"),
        }
        out
    }
}
