//! Dense row-major per-pixel storage shared by all image-shaped data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Integer pixel coordinate; `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// A `width x height` image of `T`, stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    /// Wraps `data`; returns `None` when its length is not `width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(Pixel) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(Pixel::new(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Like [`Grid::from_fn`], evaluating rows in parallel.
    pub fn par_from_fn(width: usize, height: usize, f: impl Fn(Pixel) -> T + Sync) -> Self
    where
        T: Send,
    {
        let data = (0..height)
            .into_par_iter()
            .flat_map_iter(|y| {
                (0..width)
                    .map(move |x| Pixel::new(x, y))
                    .map(&f)
                    .collect::<Vec<_>>()
            })
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.x < self.width && p.y < self.height
    }

    pub fn index_of(&self, p: Pixel) -> usize {
        debug_assert!(self.contains(p));
        p.y * self.width + p.x
    }

    pub fn pixel_of(&self, index: usize) -> Pixel {
        Pixel::new(index % self.width, index / self.width)
    }

    pub fn get(&self, p: Pixel) -> Option<&T> {
        if self.contains(p) {
            Some(&self.data[p.y * self.width + p.x])
        } else {
            None
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl<T> std::ops::Index<Pixel> for Grid<T> {
    type Output = T;

    fn index(&self, p: Pixel) -> &T {
        assert!(
            self.contains(p),
            "pixel {p:?} outside {}x{}",
            self.width,
            self.height
        );
        &self.data[p.y * self.width + p.x]
    }
}

impl<T> std::ops::IndexMut<Pixel> for Grid<T> {
    fn index_mut(&mut self, p: Pixel) -> &mut T {
        assert!(
            self.contains(p),
            "pixel {p:?} outside {}x{}",
            self.width,
            self.height
        );
        &mut self.data[p.y * self.width + p.x]
    }
}
