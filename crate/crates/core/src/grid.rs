//! Discretisation of the clone index interval `[0, 1]` and the quadrature
//! used for total densities.

use crate::error::{Error, Result};

/// Placement of sample points on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    /// Cell centres `x_k = (k + 1/2) dx`, `dx = 1/n`, equal weights `dx`.
    Midpoint,
    /// Vertices `x_k = k dx`, `dx = 1/(n-1)`, trapezoid weights.
    Vertex,
}

impl GridKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GridKind::Midpoint => "midpoint",
            GridKind::Vertex => "vertex",
        }
    }
}

impl std::str::FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midpoint" => Ok(GridKind::Midpoint),
            "vertex" | "trapezoid" => Ok(GridKind::Vertex),
            other => Err(Error::Domain(format!("unknown grid kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    kind: GridKind,
    points: Vec<f64>,
    weights: Vec<f64>,
    cell_width: f64,
}

impl Grid {
    /// Cell-centred grid with `num_points` cells.
    pub fn midpoint(num_points: usize) -> Result<Self> {
        if num_points == 0 {
            return Err(Error::Structural("midpoint grid needs at least one cell".into()));
        }
        let n = num_points as f64;
        let cell_width = 1.0 / n;
        let points = (0..num_points).map(|k| (k as f64 + 0.5) / n).collect();
        Ok(Self {
            kind: GridKind::Midpoint,
            points,
            weights: vec![cell_width; num_points],
            cell_width,
        })
    }

    /// Vertex-centred grid including both end points.
    pub fn vertex(num_points: usize) -> Result<Self> {
        if num_points < 2 {
            return Err(Error::Structural("vertex grid needs at least two points".into()));
        }
        let m = (num_points - 1) as f64;
        let cell_width = 1.0 / m;
        let points = (0..num_points).map(|k| k as f64 / m).collect();
        let mut weights = vec![cell_width; num_points];
        weights[0] *= 0.5;
        weights[num_points - 1] *= 0.5;
        Ok(Self {
            kind: GridKind::Vertex,
            points,
            weights,
            cell_width,
        })
    }

    pub fn new(kind: GridKind, num_points: usize) -> Result<Self> {
        match kind {
            GridKind::Midpoint => Self::midpoint(num_points),
            GridKind::Vertex => Self::vertex(num_points),
        }
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    /// Quadrature of sampled values over `[0, 1]`.
    #[inline]
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        weighted_pairwise_sum(&self.weights, values)
    }

    /// Index of the grid point closest to `x` (earliest on ties).
    pub fn nearest_index(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (k, &p) in self.points.iter().enumerate() {
            let dist = (p - x).abs();
            if dist < best_dist {
                best = k;
                best_dist = dist;
            }
        }
        best
    }

    /// Distance from `x` to the nearest grid point.
    pub fn offset_to(&self, x: f64) -> f64 {
        (self.points[self.nearest_index(x)] - x).abs()
    }

    /// Whether `x` is a grid point or a cell boundary between two points.
    ///
    /// Every `x` is trivially within half a cell of some point, so the useful
    /// notion is exact placement: a maximum on a boundary is straddled
    /// symmetrically by its two neighbours, one on a point is sampled.
    pub fn aligns(&self, x: f64) -> bool {
        let offset = self.offset_to(x);
        let tol = 1e-9 * self.cell_width;
        offset <= tol || (offset - 0.5 * self.cell_width).abs() <= tol
    }
}

const PAIRWISE_BLOCK: usize = 16;

/// Pairwise summation in ascending index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise summation of `w_k * v_k`, same split points as [`pairwise_sum`].
pub fn weighted_pairwise_sum(weights: &[f64], values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return weights.iter().zip(values).map(|(w, v)| w * v).sum();
    }
    let mid = values.len() / 2;
    weighted_pairwise_sum(&weights[..mid], &values[..mid]) + weighted_pairwise_sum(&weights[mid..], &values[mid..])
}
