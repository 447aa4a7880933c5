//! Cell-centered scalar fields and face-centered normal-component fields.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{CrowdError, Result};
use crate::grid::Grid2D;

/// One value per cell, row-major (`j * nx + i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid2D, c: f64) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            values: vec![c; grid.num_cells()],
        }
    }

    pub fn from_vec(grid: &Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(CrowdError::Structure(format!(
                "expected {} cell values, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(CrowdError::Data(format!("non-finite value at cell {k}")));
        }
        Ok(Self {
            nx: grid.nx(),
            ny: grid.ny(),
            values,
        })
    }

    /// Evaluate `f` at every cell center.
    pub fn from_fn(grid: &Grid2D, f: impl FnMut([f64; 2]) -> f64) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            values: grid.cell_map(f),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn matches(&self, grid: &Grid2D) -> bool {
        self.nx == grid.nx() && self.ny == grid.ny()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self {
            nx: self.nx,
            ny: self.ny,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `∫ f` by the cell-sum rule.
    pub fn integral(&self, grid: &Grid2D) -> f64 {
        self.sum() * grid.cell_area()
    }

    /// `‖a - b‖₁` by the cell-sum rule.
    pub fn l1_distance(&self, other: &Self, grid: &Grid2D) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * grid.cell_area()
    }

    pub fn max_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Cell-sum inner product `Σ a b · area`.
    pub fn dot(&self, other: &Self, grid: &Grid2D) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * grid.cell_area()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

impl IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, k: usize) -> &mut f64 {
        &mut self.values[k]
    }
}

/// Normal components on x-faces (`(nx+1) * ny`) and y-faces (`nx * (ny+1)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceVectorField {
    nx: usize,
    ny: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceVectorField {
    pub fn zeros(grid: &Grid2D) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            x: vec![0.0; grid.num_x_faces()],
            y: vec![0.0; grid.num_y_faces()],
        }
    }

    pub fn from_vecs(grid: &Grid2D, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != grid.num_x_faces() || y.len() != grid.num_y_faces() {
            return Err(CrowdError::Structure(format!(
                "expected {} x-faces and {} y-faces, got {} and {}",
                grid.num_x_faces(),
                grid.num_y_faces(),
                x.len(),
                y.len()
            )));
        }
        let field = Self {
            nx: grid.nx(),
            ny: grid.ny(),
            x,
            y,
        };
        if !field.is_finite() {
            return Err(CrowdError::Data("non-finite face value".into()));
        }
        Ok(field)
    }

    /// Sample a vector function at face centers, keeping each face's normal component.
    pub fn from_fn(grid: &Grid2D, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny() {
            for i in 0..=grid.nx() {
                out.x[grid.xface(i, j)] = f(grid.xface_center(i, j))[0];
            }
        }
        for j in 0..=grid.ny() {
            for i in 0..grid.nx() {
                out.y[grid.yface(i, j)] = f(grid.yface_center(i, j))[1];
            }
        }
        out
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn matches(&self, grid: &Grid2D) -> bool {
        self.nx == grid.nx() && self.ny == grid.ny()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.x
            .iter()
            .chain(&self.y)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            x: self
                .x
                .iter()
                .zip(&other.x)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            y: self
                .y
                .iter()
                .zip(&other.y)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}
