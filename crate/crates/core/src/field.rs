//! Grid fields on a half-plane rectangle and closed polygonal contours.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::Point;
use crate::math::{hypot, powf};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// Mirror image across the wall `x2 = 0`.
    pub fn reflected(&self) -> Rect {
        Rect {
            x0: self.x0,
            x1: self.x1,
            y0: -self.y1,
            y1: -self.y0,
        }
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
}

/// Uniform cell layout of the rectangle `[origin_x1, origin_x1 + nx·cell] × [0, ny·cell]`.
///
/// Cell `(i, j)` has its center at `(origin_x1 + (i + ½)·cell, (j + ½)·cell)`;
/// row `j = 0` sits on the wall.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    pub origin_x1: f64,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridGeometry {
    pub fn new(origin_x1: f64, cell: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "cell",
                reason: "must be positive and finite",
            });
        }
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter {
                name: "nx/ny",
                reason: "grid needs at least one cell in each direction",
            });
        }
        if !origin_x1.is_finite() {
            return Err(Error::InvalidParameter {
                name: "origin_x1",
                reason: "must be finite",
            });
        }
        Ok(Self {
            origin_x1,
            cell,
            nx,
            ny,
        })
    }

    /// Grid of height `height` centered on `x1 = 0`, with square cells.
    pub fn symmetric(nx: usize, ny: usize, height: f64) -> Result<Self> {
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "height",
                reason: "must be positive and finite",
            });
        }
        let cell = height / ny.max(1) as f64;
        Self::new(-0.5 * nx as f64 * cell, cell, nx, ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.cell
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.cell
    }

    pub fn cell_area(&self) -> f64 {
        self.cell * self.cell
    }

    #[inline]
    pub fn x1(&self, i: usize) -> f64 {
        self.origin_x1 + (i as f64 + 0.5) * self.cell
    }

    #[inline]
    pub fn x2(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.cell
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Point {
        Point::new(self.x1(i), self.x2(j))
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn rect(&self, i: usize, j: usize) -> Rect {
        let x0 = self.origin_x1 + i as f64 * self.cell;
        let y0 = j as f64 * self.cell;
        Rect {
            x0,
            x1: x0 + self.cell,
            y0,
            y1: y0 + self.cell,
        }
    }

    pub fn bounds(&self) -> Rect {
        Rect {
            x0: self.origin_x1,
            x1: self.origin_x1 + self.width(),
            y0: 0.0,
            y1: self.height(),
        }
    }

    /// Cell containing `x`, if any. Points on an upper/right edge belong to
    /// the neighbouring cell.
    pub fn locate(&self, x: Point) -> Option<(usize, usize)> {
        let fi = (x.x1 - self.origin_x1) / self.cell;
        let fj = x.x2 / self.cell;
        if fi < 0.0 || fj < 0.0 || !fi.is_finite() || !fj.is_finite() {
            return None;
        }
        let (i, j) = (fi as usize, fj as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    /// Whether `x1 = 0` is a mirror line of the cell layout.
    pub fn is_symmetric(&self) -> bool {
        let right = self.origin_x1 + self.width();
        (self.origin_x1 + right).abs() <= 1e-9 * self.width()
    }

    /// Column mirrored across `x1 = 0` (meaningful on symmetric grids).
    pub fn mirror_column(&self, i: usize) -> usize {
        self.nx - 1 - i
    }
}

/// Mass, impulse and `L^p` norm of a field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub mass: f64,
    pub impulse: f64,
    pub lp: f64,
}

/// Nonnegative cell-averaged vorticity on a [`GridGeometry`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    geom: GridGeometry,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(geom: GridGeometry) -> Self {
        Self {
            geom,
            values: alloc::vec![0.0; geom.len()],
        }
    }

    pub fn from_values(geom: GridGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: "field values must be finite and nonnegative",
            });
        }
        Ok(Self { geom, values })
    }

    /// Samples `f` at cell centers, clamping negative values to zero.
    pub fn from_fn<F: FnMut(Point) -> f64>(geom: GridGeometry, mut f: F) -> Self {
        let mut values = Vec::with_capacity(geom.len());
        for j in 0..geom.ny {
            for i in 0..geom.nx {
                let v = f(geom.center(i, j));
                values.push(if v > 0.0 { v } else { 0.0 });
            }
        }
        Self { geom, values }
    }

    pub(crate) fn from_raw(geom: GridGeometry, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), geom.len());
        Self { geom, values }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.geom.index(i, j)]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let nx = self.geom.nx;
        &self.values[j * nx..(j + 1) * nx]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "value",
                reason: "field values must be finite and nonnegative",
            });
        }
        let k = self.geom.index(i, j);
        self.values[k] = v;
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> GridField {
        assert!(c >= 0.0, "scaling must keep the field nonnegative");
        GridField::from_raw(self.geom, self.values.iter().map(|v| v * c).collect())
    }

    pub fn try_add(&self, other: &GridField) -> Result<GridField> {
        if self.geom != other.geom {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(GridField::from_raw(self.geom, values))
    }

    /// `(1 - r)·self + r·other`.
    pub fn blend(&self, other: &GridField, r: f64) -> Result<GridField> {
        if self.geom != other.geom {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - r) * a + r * b)
            .collect();
        Ok(GridField::from_raw(self.geom, values))
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.geom.cell_area()
    }

    pub fn impulse(&self) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.geom.ny {
            let row: f64 = self.row(j).iter().sum();
            acc += row * self.geom.x2(j);
        }
        acc * self.geom.cell_area()
    }

    /// `∫ ω^p` (the `p`-th power of the `L^p` norm).
    pub fn lp_power(&self, p: f64) -> f64 {
        let s: f64 = if p == 1.0 {
            self.values.iter().sum()
        } else if p == 2.0 {
            self.values.iter().map(|v| v * v).sum()
        } else {
            self.values
                .iter()
                .filter(|v| **v > 0.0)
                .map(|&v| powf(v, p))
                .sum()
        };
        s * self.geom.cell_area()
    }

    pub fn norms(&self, p: f64) -> Result<Norms> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: "norm exponent must be finite and at least 1",
            });
        }
        Ok(Norms {
            mass: self.mass(),
            impulse: self.impulse(),
            lp: powf(self.lp_power(p), 1.0 / p),
        })
    }

    /// Horizontal center of mass `∫x1 ω / ∫ω`.
    pub fn center_x1(&self) -> Result<f64> {
        let mut m = 0.0;
        let mut mx = 0.0;
        for j in 0..self.geom.ny {
            for (i, &v) in self.row(j).iter().enumerate() {
                m += v;
                mx += v * self.geom.x1(i);
            }
        }
        if m == 0.0 {
            return Err(Error::ZeroMass);
        }
        Ok(mx / m)
    }

    /// True when the left, right and top cell rings are all zero.
    pub fn has_margin(&self) -> bool {
        let (nx, ny) = (self.geom.nx, self.geom.ny);
        let top = self.row(ny - 1).iter().all(|&v| v == 0.0);
        let sides = (0..ny).all(|j| self.get(0, j) == 0.0 && self.get(nx - 1, j) == 0.0);
        top && sides
    }

    /// Largest `x2` and `|x1|` reached by cell centers in the support.
    pub fn support_extent(&self) -> Option<(f64, f64)> {
        let mut top: Option<f64> = None;
        let mut half = 0.0f64;
        for j in 0..self.geom.ny {
            for (i, &v) in self.row(j).iter().enumerate() {
                if v > 0.0 {
                    top = Some(self.geom.x2(j));
                    half = half.max(self.geom.x1(i).abs());
                }
            }
        }
        top.map(|t| (t, half))
    }

    /// `∫|self - other|`.
    pub fn l1_distance(&self, other: &GridField) -> Result<f64> {
        if self.geom != other.geom {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.geom.cell_area())
    }

    /// Copy shifted by a whole number of columns; cells pushed off the grid are dropped.
    pub fn shifted_columns(&self, shift: isize) -> GridField {
        let nx = self.geom.nx as isize;
        let mut out = GridField::zeros(self.geom);
        for j in 0..self.geom.ny {
            for i in 0..nx {
                let t = i + shift;
                if (0..nx).contains(&t) {
                    let k = out.geom.index(t as usize, j);
                    out.values[k] = self.get(i as usize, j);
                }
            }
        }
        out
    }
}

/// Closed polygon, listed counterclockwise without repeating the first vertex.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContourPolygon {
    vertices: Vec<Point>,
}

impl ContourPolygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Point> {
        self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area; positive for counterclockwise polygons.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for k in 0..n {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            acc += a.x1 * b.x2 - b.x1 * a.x2;
        }
        0.5 * acc
    }

    pub fn bounding_box(&self) -> Option<Rect> {
        let first = self.vertices.first()?;
        let mut r = Rect {
            x0: first.x1,
            x1: first.x1,
            y0: first.x2,
            y1: first.x2,
        };
        for v in &self.vertices {
            r.x0 = r.x0.min(v.x1);
            r.x1 = r.x1.max(v.x1);
            r.y0 = r.y0.min(v.x2);
            r.y1 = r.y1.max(v.x2);
        }
        Some(r)
    }

    /// No two non-adjacent edges intersect. Quadratic in the vertex count.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        for a in 0..n {
            let (p1, p2) = (self.vertices[a], self.vertices[(a + 1) % n]);
            for b in (a + 2)..n {
                if a == 0 && b == n - 1 {
                    continue;
                }
                let (q1, q2) = (self.vertices[b], self.vertices[(b + 1) % n]);
                if segments_intersect(p1, p2, q1, q2) {
                    return false;
                }
            }
        }
        true
    }

    /// Crossing-number point-in-polygon test.
    pub fn contains(&self, x: Point) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for k in 0..n {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            if (a.x2 > x.x2) != (b.x2 > x.x2) {
                let t = (x.x2 - a.x2) / (b.x2 - a.x2);
                if x.x1 < a.x1 + t * (b.x1 - a.x1) {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x1 - a.x1) * (c.x2 - a.x2) - (b.x2 - a.x2) * (c.x1 - a.x1)
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Sum of edge lengths of the closed polygon.
pub fn contour_perimeter(contour: &ContourPolygon) -> Result<f64> {
    let v = contour.vertices();
    if v.len() < 3 {
        return Err(Error::DegeneratePolygon { vertices: v.len() });
    }
    let n = v.len();
    Ok((0..n)
        .map(|k| {
            let (a, b) = (v[k], v[(k + 1) % n]);
            hypot(b.x1 - a.x1, b.x2 - a.x2)
        })
        .sum())
}

/// Scanlines per cell row used by [`rasterize`].
pub const RASTER_SUBROWS: usize = 16;

/// Area fraction of each template cell covered by the polygon.
///
/// Coverage is exact along each of [`RASTER_SUBROWS`] horizontal scanlines
/// per cell row, so only the vertical direction is sampled.
pub fn rasterize(contour: &ContourPolygon, template: &GridGeometry) -> Result<GridField> {
    let mut out = GridField::zeros(*template);
    let Some(bb) = contour.bounding_box() else {
        return Ok(out);
    };
    if contour.len() < 3 {
        return Ok(out);
    }
    let bounds = template.bounds();
    let slack = 1e-12 * template.width().max(template.height());
    if bb.x0 < bounds.x0 - slack
        || bb.x1 > bounds.x1 + slack
        || bb.y0 < -slack
        || bb.y1 > bounds.y1 + slack
    {
        return Err(Error::OutOfBounds);
    }
    let h = template.cell;
    let sub = RASTER_SUBROWS;
    let weight = 1.0 / (sub as f64 * h);
    let verts = contour.vertices();
    let n = verts.len();
    let mut crossings: Vec<f64> = Vec::new();
    let j_lo = ((bb.y0 / h) as usize).min(template.ny - 1);
    let j_hi = ((bb.y1 / h) as usize).min(template.ny - 1);
    for j in j_lo..=j_hi {
        for s in 0..sub {
            let y = (j as f64 + (s as f64 + 0.5) / sub as f64) * h;
            crossings.clear();
            for k in 0..n {
                let a = verts[k];
                let b = verts[(k + 1) % n];
                if (a.x2 > y) != (b.x2 > y) {
                    let t = (y - a.x2) / (b.x2 - a.x2);
                    crossings.push(a.x1 + t * (b.x1 - a.x1));
                }
            }
            crossings.sort_by(f64::total_cmp);
            for span in crossings.chunks_exact(2) {
                add_span(&mut out, j, span[0], span[1], weight);
            }
        }
    }
    for v in out.values.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}

fn add_span(field: &mut GridField, j: usize, xa: f64, xb: f64, weight: f64) {
    let g = field.geom;
    let h = g.cell;
    let fa = ((xa - g.origin_x1) / h).max(0.0);
    let fb = ((xb - g.origin_x1) / h).min(g.nx as f64);
    if fb <= fa {
        return;
    }
    let ia = (fa as usize).min(g.nx - 1);
    let ib = (fb as usize).min(g.nx - 1);
    for i in ia..=ib {
        let c0 = i as f64;
        let lo = fa.max(c0);
        let hi = fb.min(c0 + 1.0);
        if hi > lo {
            let k = g.index(i, j);
            field.values[k] += (hi - lo) * h * weight;
        }
    }
}
