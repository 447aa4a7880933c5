//! Uniform cell-centered Cartesian grid on a rectangle `[0, lx] x [0, ly]`.
//!
//! Cells are indexed `(i, j)` with `i` along x and flattened row-major as
//! `j * nx + i`. x-faces `(i, j)` with `i in 0..=nx` sit at `x = i * hx`;
//! y-faces `(i, j)` with `j in 0..=ny` sit at `y = j * hy`. Every boundary
//! face carries exactly one [`BoundaryKind`].

use serde::{Deserialize, Serialize};

use crate::error::{CrowdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryKind {
    /// Exit: the potential vanishes on the face.
    DirichletExit,
    /// Wall: zero total normal flux.
    NeumannWall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Edge::Left => [-1.0, 0.0],
            Edge::Right => [1.0, 0.0],
            Edge::Bottom => [0.0, -1.0],
            Edge::Top => [0.0, 1.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Edge::Left => "left",
            Edge::Right => "right",
            Edge::Bottom => "bottom",
            Edge::Top => "top",
        }
    }
}

/// A boundary face identified by its edge and position along that edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub edge: Edge,
    /// Index along the edge (`j` for left/right, `i` for bottom/top).
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    left: Vec<BoundaryKind>,
    right: Vec<BoundaryKind>,
    bottom: Vec<BoundaryKind>,
    top: Vec<BoundaryKind>,
}

impl Grid2D {
    /// Grid with one label per whole edge, in the order left, right, bottom, top.
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, edges: [BoundaryKind; 4]) -> Result<Self> {
        Self::from_labels(
            nx,
            ny,
            lx,
            ly,
            vec![edges[0]; ny],
            vec![edges[1]; ny],
            vec![edges[2]; nx],
            vec![edges[3]; nx],
        )
    }

    /// Grid with explicit per-face labels.
    #[allow(clippy::too_many_arguments)]
    pub fn from_labels(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        left: Vec<BoundaryKind>,
        right: Vec<BoundaryKind>,
        bottom: Vec<BoundaryKind>,
        top: Vec<BoundaryKind>,
    ) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(CrowdError::Structure(format!(
                "grid needs nx >= 2 and ny >= 2, got {nx} x {ny}"
            )));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(CrowdError::Structure(format!(
                "domain extents must be positive, got {lx} x {ly}"
            )));
        }
        if left.len() != ny || right.len() != ny || bottom.len() != nx || top.len() != nx {
            return Err(CrowdError::Structure(
                "boundary label counts do not match the grid".into(),
            ));
        }
        let grid = Self {
            nx,
            ny,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
            left,
            right,
            bottom,
            top,
        };
        if !grid
            .boundary_faces()
            .any(|f| grid.label(f) == BoundaryKind::DirichletExit)
        {
            return Err(CrowdError::Structure(
                "at least one boundary face must be an exit".into(),
            ));
        }
        Ok(grid)
    }

    /// Grid with whole-edge labels plus door intervals `(edge, a, b)` that are
    /// exits regardless of their edge label.
    pub fn with_doors(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        edges: [BoundaryKind; 4],
        doors: &[(Edge, f64, f64)],
    ) -> Result<Self> {
        let mut labels = [
            vec![edges[0]; ny],
            vec![edges[1]; ny],
            vec![edges[2]; nx],
            vec![edges[3]; nx],
        ];
        for &(edge, a, b) in doors {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(CrowdError::Parameter(format!("bad door interval {a}:{b}")));
            }
            let (slot, h) = match edge {
                Edge::Left => (0, ly / ny as f64),
                Edge::Right => (1, ly / ny as f64),
                Edge::Bottom => (2, lx / nx as f64),
                Edge::Top => (3, lx / nx as f64),
            };
            let mut hit = false;
            for (k, label) in labels[slot].iter_mut().enumerate() {
                let s = (k as f64 + 0.5) * h;
                if s >= a && s <= b {
                    *label = BoundaryKind::DirichletExit;
                    hit = true;
                }
            }
            if !hit {
                return Err(CrowdError::Parameter(format!(
                    "door {a}:{b} on the {} edge covers no face",
                    edge.name()
                )));
            }
        }
        let [left, right, bottom, top] = labels;
        Self::from_labels(nx, ny, lx, ly, left, right, bottom, top)
    }

    /// Returns a copy where the faces of `edge` whose centers lie in `[a, b]`
    /// (coordinate along the edge) are relabelled as exits.
    pub fn with_door(mut self, edge: Edge, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(CrowdError::Parameter(format!("bad door interval {a}:{b}")));
        }
        let (labels, h) = match edge {
            Edge::Left => (&mut self.left, self.hy),
            Edge::Right => (&mut self.right, self.hy),
            Edge::Bottom => (&mut self.bottom, self.hx),
            Edge::Top => (&mut self.top, self.hx),
        };
        let mut hit = false;
        for (k, label) in labels.iter_mut().enumerate() {
            let s = (k as f64 + 0.5) * h;
            if s >= a && s <= b {
                *label = BoundaryKind::DirichletExit;
                hit = true;
            }
        }
        if !hit {
            return Err(CrowdError::Parameter(format!(
                "door {a}:{b} on the {} edge covers no face",
                edge.name()
            )));
        }
        Ok(self)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn lx(&self) -> f64 {
        self.hx * self.nx as f64
    }
    pub fn ly(&self) -> f64 {
        self.hy * self.ny as f64
    }
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
    pub fn area(&self) -> f64 {
        self.lx() * self.ly()
    }
    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }
    pub fn num_x_faces(&self) -> usize {
        (self.nx + 1) * self.ny
    }
    pub fn num_y_faces(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn xface(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    #[inline]
    pub fn yface(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy]
    }
    pub fn xface_center(&self, i: usize, j: usize) -> [f64; 2] {
        [i as f64 * self.hx, (j as f64 + 0.5) * self.hy]
    }
    pub fn yface_center(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5) * self.hx, j as f64 * self.hy]
    }

    pub fn edge_labels(&self, edge: Edge) -> &[BoundaryKind] {
        match edge {
            Edge::Left => &self.left,
            Edge::Right => &self.right,
            Edge::Bottom => &self.bottom,
            Edge::Top => &self.top,
        }
    }

    pub fn label(&self, face: BoundaryFace) -> BoundaryKind {
        self.edge_labels(face.edge)[face.k]
    }

    /// Label of the boundary x-face at column `i` (0 or nx), row `j`.
    #[inline]
    pub fn xface_label(&self, i: usize, j: usize) -> Option<BoundaryKind> {
        if i == 0 {
            Some(self.left[j])
        } else if i == self.nx {
            Some(self.right[j])
        } else {
            None
        }
    }

    #[inline]
    pub fn yface_label(&self, i: usize, j: usize) -> Option<BoundaryKind> {
        if j == 0 {
            Some(self.bottom[i])
        } else if j == self.ny {
            Some(self.top[i])
        } else {
            None
        }
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = BoundaryFace> + '_ {
        Edge::ALL.into_iter().flat_map(move |edge| {
            (0..self.edge_labels(edge).len()).map(move |k| BoundaryFace { edge, k })
        })
    }

    /// Length of a boundary face.
    pub fn face_length(&self, edge: Edge) -> f64 {
        match edge {
            Edge::Left | Edge::Right => self.hy,
            Edge::Bottom | Edge::Top => self.hx,
        }
    }

    /// Center point of a boundary face.
    pub fn boundary_face_center(&self, face: BoundaryFace) -> [f64; 2] {
        match face.edge {
            Edge::Left => self.xface_center(0, face.k),
            Edge::Right => self.xface_center(self.nx, face.k),
            Edge::Bottom => self.yface_center(face.k, 0),
            Edge::Top => self.yface_center(face.k, self.ny),
        }
    }

    /// Cell adjacent to a boundary face.
    pub fn boundary_cell(&self, face: BoundaryFace) -> usize {
        match face.edge {
            Edge::Left => self.cell(0, face.k),
            Edge::Right => self.cell(self.nx - 1, face.k),
            Edge::Bottom => self.cell(face.k, 0),
            Edge::Top => self.cell(face.k, self.ny - 1),
        }
    }

    /// Flat index of a boundary face inside the x- or y-face arrays.
    pub fn boundary_face_index(&self, face: BoundaryFace) -> (bool, usize) {
        match face.edge {
            Edge::Left => (true, self.xface(0, face.k)),
            Edge::Right => (true, self.xface(self.nx, face.k)),
            Edge::Bottom => (false, self.yface(face.k, 0)),
            Edge::Top => (false, self.yface(face.k, self.ny)),
        }
    }

    /// Exact Euclidean distance to the rectangle boundary.
    pub fn distance_to_boundary(&self, x: [f64; 2]) -> f64 {
        let dx = x[0].min(self.lx() - x[0]);
        let dy = x[1].min(self.ly() - x[1]);
        dx.min(dy).max(0.0)
    }

    /// Maximal runs of contiguous exit faces, as segments `(a, b)` in the plane.
    pub fn exit_segments(&self) -> Vec<([f64; 2], [f64; 2])> {
        let mut segs = Vec::new();
        for edge in Edge::ALL {
            let labels = self.edge_labels(edge);
            let h = self.face_length(edge);
            let mut k = 0;
            while k < labels.len() {
                if labels[k] != BoundaryKind::DirichletExit {
                    k += 1;
                    continue;
                }
                let start = k;
                while k < labels.len() && labels[k] == BoundaryKind::DirichletExit {
                    k += 1;
                }
                let (s0, s1) = (start as f64 * h, k as f64 * h);
                let seg = match edge {
                    Edge::Left => ([0.0, s0], [0.0, s1]),
                    Edge::Right => ([self.lx(), s0], [self.lx(), s1]),
                    Edge::Bottom => ([s0, 0.0], [s1, 0.0]),
                    Edge::Top => ([s0, self.ly()], [s1, self.ly()]),
                };
                segs.push(seg);
            }
        }
        segs
    }

    /// Distance to the exit set together with the nearest exit point.
    pub fn nearest_exit(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let mut best = (f64::INFINITY, x);
        for (a, b) in self.exit_segments() {
            let q = closest_on_segment(x, a, b);
            let d = ((x[0] - q[0]).powi(2) + (x[1] - q[1]).powi(2)).sqrt();
            if d < best.0 {
                best = (d, q);
            }
        }
        best
    }

    /// Exact distance `d(x, Γ_D)` to the exit set.
    pub fn distance_to_exit(&self, x: [f64; 2]) -> f64 {
        self.nearest_exit(x).0
    }

    /// Apply `f` at every cell center.
    pub fn cell_map(&self, mut f: impl FnMut([f64; 2]) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_cells());
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push(f(self.cell_center(i, j)));
            }
        }
        out
    }
}

fn closest_on_segment(x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return a;
    }
    let t = (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    [a[0] + t * d[0], a[1] + t * d[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use BoundaryKind::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid2D::new(1, 4, 1.0, 1.0, [DirichletExit; 4]).is_err());
        assert!(Grid2D::new(4, 4, 0.0, 1.0, [DirichletExit; 4]).is_err());
        assert!(Grid2D::new(4, 4, 1.0, 1.0, [NeumannWall; 4]).is_err());
    }

    #[test]
    fn door_relabels_only_covered_faces() {
        let g = Grid2D::new(
            10,
            10,
            1.0,
            1.0,
            [NeumannWall, NeumannWall, NeumannWall, DirichletExit],
        )
        .unwrap()
        .with_door(Edge::Right, 0.4, 0.6)
        .unwrap();
        let exits: Vec<usize> = g
            .edge_labels(Edge::Right)
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == DirichletExit)
            .map(|(k, _)| k)
            .collect();
        assert_eq!(exits, vec![4, 5]);
        let walled = Grid2D::with_doors(
            10,
            10,
            1.0,
            1.0,
            [NeumannWall; 4],
            &[(Edge::Right, 0.4, 0.6)],
        )
        .unwrap();
        assert_eq!(walled.edge_labels(Edge::Right), g.edge_labels(Edge::Right));
        assert!(Grid2D::with_doors(10, 10, 1.0, 1.0, [NeumannWall; 4], &[]).is_err());
    }

    #[test]
    fn exit_distance_on_a_door() {
        let g = Grid2D::new(
            10,
            10,
            1.0,
            1.0,
            [NeumannWall, DirichletExit, NeumannWall, NeumannWall],
        )
        .unwrap();
        assert!((g.distance_to_exit([0.25, 0.5]) - 0.75).abs() < 1e-15);
        let door = Grid2D::new(
            10,
            10,
            1.0,
            1.0,
            [NeumannWall, NeumannWall, NeumannWall, DirichletExit],
        )
        .unwrap()
        .with_door(Edge::Right, 0.4, 0.6)
        .unwrap();
        // Above the door the upper door corner is closer than the top exit.
        let d = door.distance_to_exit([0.9, 0.75]);
        assert!((d - 0.1f64.hypot(0.15)).abs() < 1e-12);
        let d = door.distance_to_exit([0.5, 0.5]);
        assert!((d - 0.5).abs() < 1e-12);
    }
}
