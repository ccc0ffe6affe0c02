//! Half-plane Green's function, stream function and Biot–Savart velocity.
//!
//! With `y* = (y1, -y2)` the image point,
//!
//! ```text
//! G(x, y) = (1/4π) ln(|x - y*|² / |x - y|²) = (1/4π) ln(1 + 4 x2 y2 / |x - y|²)
//! ```
//!
//! and the velocity is `u = (∂x2 ψ, -∂x1 ψ)` with `ψ = ∫ G(·, y) ω(y) dy`.
//! Grid fields are piecewise constant, so cell integrals of the kernel are
//! done in closed form near the target and by the midpoint rule elsewhere.
//! The midpoint rule is fourth-order here because `ln r²` is harmonic.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{GridField, GridGeometry, Rect};
use crate::math::{atan, ln, ln_1p, PI};
use crate::quadrature::{integrate_rect_adaptive, GaussLegendre};

/// Point of the closed upper half-plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x1: f64,
    pub x2: f64,
}

impl Point {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn image(self) -> Point {
        Point::new(self.x1, -self.x2)
    }

    fn dist2(self, other: Point) -> f64 {
        let d1 = self.x1 - other.x1;
        let d2 = self.x2 - other.x2;
        d1 * d1 + d2 * d2
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Velocity {
    pub u1: f64,
    pub u2: f64,
}

impl core::ops::Add for Velocity {
    type Output = Velocity;
    fn add(self, o: Velocity) -> Velocity {
        Velocity {
            u1: self.u1 + o.u1,
            u2: self.u2 + o.u2,
        }
    }
}

impl core::ops::AddAssign for Velocity {
    fn add_assign(&mut self, o: Velocity) {
        self.u1 += o.u1;
        self.u2 += o.u2;
    }
}

/// `G(x, y)`. Fails on coincident points or points below the wall.
pub fn green_eval(x: Point, y: Point) -> Result<f64> {
    if x.x2 < 0.0 || y.x2 < 0.0 {
        return Err(Error::InvalidParameter {
            name: "x2",
            reason: "points must lie in the closed upper half-plane",
        });
    }
    let r2 = x.dist2(y);
    if r2 == 0.0 {
        return Err(Error::SingularEvaluation);
    }
    Ok(green_unchecked(x, y, r2))
}

#[inline]
fn green_unchecked(x: Point, y: Point, r2: f64) -> f64 {
    ln_1p(4.0 * x.x2 * y.x2 / r2) / (4.0 * PI)
}

// Antiderivative of ln(s² + t²) in both variables, and its partials.
fn log_f(s: f64, t: f64) -> f64 {
    if s == 0.0 || t == 0.0 {
        return 0.0;
    }
    let l = ln(s * s + t * t);
    s * t * (l - 3.0) + s * s * atan(t / s) + t * t * atan(s / t)
}

// ∂F/∂t = s (L - 2) + 2 t atan(s / t); ∂F/∂s is the same with s and t swapped.
fn log_ft(s: f64, t: f64) -> f64 {
    let a = if s == 0.0 {
        0.0
    } else {
        s * (ln(s * s + t * t) - 2.0)
    };
    let b = if t == 0.0 { 0.0 } else { 2.0 * t * atan(s / t) };
    a + b
}

#[inline]
fn corner_sum<F: Fn(f64, f64) -> f64>(f: F, s0: f64, s1: f64, t0: f64, t1: f64) -> f64 {
    f(s1, t1) - f(s0, t1) - f(s1, t0) + f(s0, t0)
}

/// Cells whose center lies within this many cell widths of a singular point
/// (the target or its mirror image) are integrated exactly.
const NEAR_CELLS: f64 = 3.5;

fn near(x: Point, c: Point, h: f64) -> bool {
    (x.x1 - c.x1).abs() <= NEAR_CELLS * h && (x.x2 - c.x2).abs() <= NEAR_CELLS * h
}

/// `∫_rect G(x, y) dy`.
pub fn cell_green_integral(x: Point, r: &Rect) -> f64 {
    let h = (r.x1 - r.x0).max(r.y1 - r.y0);
    let c = r.center();
    let (s0, s1) = (r.x0 - x.x1, r.x1 - x.x1);
    let direct = if near(x, c, h) {
        corner_sum(log_f, s0, s1, r.y0 - x.x2, r.y1 - x.x2)
    } else {
        r.area() * ln(x.dist2(c))
    };
    let image = if near(x.image(), c, h) {
        corner_sum(log_f, s0, s1, r.y0 + x.x2, r.y1 + x.x2)
    } else {
        r.area() * ln(x.image().dist2(c))
    };
    (image - direct) / (4.0 * PI)
}

/// Velocity at `x` induced by unit vorticity on `rect` (and its odd image).
pub fn cell_velocity(x: Point, r: &Rect) -> Velocity {
    let h = (r.x1 - r.x0).max(r.y1 - r.y0);
    let c = r.center();
    let a = r.area();
    let (s0, s1) = (r.x0 - x.x1, r.x1 - x.x1);
    let log_fs = |s: f64, t: f64| log_ft(t, s);

    // partial derivatives of I = ∫_rect ln|x - y|² dy (and of its image analogue)
    let (dir_dx1, dir_dx2) = if near(x, c, h) {
        let (t0, t1) = (r.y0 - x.x2, r.y1 - x.x2);
        (
            -corner_sum(log_fs, s0, s1, t0, t1),
            -corner_sum(log_ft, s0, s1, t0, t1),
        )
    } else {
        let r2 = x.dist2(c);
        (2.0 * a * (x.x1 - c.x1) / r2, 2.0 * a * (x.x2 - c.x2) / r2)
    };
    let (im_dx1, im_dx2) = if near(x.image(), c, h) {
        let (t0, t1) = (r.y0 + x.x2, r.y1 + x.x2);
        (
            -corner_sum(log_fs, s0, s1, t0, t1),
            corner_sum(log_ft, s0, s1, t0, t1),
        )
    } else {
        let r2 = x.image().dist2(c);
        (2.0 * a * (x.x1 - c.x1) / r2, 2.0 * a * (x.x2 + c.x2) / r2)
    };
    Velocity {
        u1: (im_dx2 - dir_dx2) / (4.0 * PI),
        u2: (dir_dx1 - im_dx1) / (4.0 * PI),
    }
}

/// `(1/2π) ∫_rect (x2 + y2) / |x - y*|² dy`, the image part of `u1`.
pub fn cell_image_u1(x: Point, r: &Rect) -> f64 {
    let h = (r.x1 - r.x0).max(r.y1 - r.y0);
    let c = r.center();
    if near(x.image(), c, h) {
        let (s0, s1) = (r.x0 - x.x1, r.x1 - x.x1);
        corner_sum(log_ft, s0, s1, r.y0 + x.x2, r.y1 + x.x2) / (4.0 * PI)
    } else {
        r.area() * (x.x2 + c.x2) / (2.0 * PI * x.image().dist2(c))
    }
}

/// `ψ(x) = ∫ G(x, y) ω(y) dy` for a piecewise-constant grid field.
pub fn stream_eval(field: &GridField, x: Point) -> f64 {
    let g = field.geometry();
    let mut acc = 0.0;
    for j in 0..g.ny {
        for (i, &v) in field.row(j).iter().enumerate() {
            if v != 0.0 {
                acc += v * cell_green_integral(x, &g.rect(i, j));
            }
        }
    }
    acc
}

/// Anything that induces a half-plane velocity field.
pub trait VortexSource {
    fn velocity_at(&self, x: Point) -> Velocity;
}

impl VortexSource for GridField {
    fn velocity_at(&self, x: Point) -> Velocity {
        let g = self.geometry();
        let mut u = Velocity::default();
        for j in 0..g.ny {
            for (i, &v) in self.row(j).iter().enumerate() {
                if v != 0.0 {
                    let c = cell_velocity(x, &g.rect(i, j));
                    u.u1 += v * c.u1;
                    u.u2 += v * c.u2;
                }
            }
        }
        if x.x2 == 0.0 {
            u.u2 = 0.0;
        }
        u
    }
}

/// Image-symmetric velocity at `x` induced by `source`.
pub fn velocity_eval<S: VortexSource + ?Sized>(source: &S, x: Point) -> Velocity {
    source.velocity_at(x)
}

/// `∫ G(x, y)^q dy` over the upper half-plane, for `q > 2`.
///
/// The integral is split at `x` into boxes with the singular point on a
/// corner and integrated adaptively; the outer boundary doubles until a
/// ring adds less than `1e-8` of the running total.
pub fn green_pnorm_moment(x: Point, q: f64) -> Result<f64> {
    if q.is_nan() || q <= 2.0 {
        return Err(Error::DivergentMoment { q });
    }
    if !(x.x2 > 0.0 && x.x2.is_finite() && x.x1.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "x",
            reason: "moment needs a finite point strictly above the wall",
        });
    }
    let rule = GaussLegendre::new(8);
    let tol = 1e-10 * x.x2 * x.x2;
    let mut f = |y1: f64, y2: f64| {
        let y = Point::new(y1, y2);
        let r2 = x.dist2(y);
        if r2 == 0.0 || y2 <= 0.0 {
            0.0
        } else {
            crate::math::powf(green_unchecked(x, y, r2), q)
        }
    };
    let (a, b) = (x.x1, x.x2);
    let mut r = b;
    let mut total = integrate_rect_adaptive(&rule, [a, a + r, 0.0, b], tol, 40, &mut f)
        + integrate_rect_adaptive(&rule, [a, a + r, b, b + r], tol, 40, &mut f);
    for _ in 0..200 {
        let ring =
            integrate_rect_adaptive(
                &rule,
                [a + r, a + 2.0 * r, 0.0, b + 2.0 * r],
                tol,
                40,
                &mut f,
            ) + integrate_rect_adaptive(&rule, [a, a + r, b + r, b + 2.0 * r], tol, 40, &mut f);
        total += ring;
        r *= 2.0;
        if ring <= 1e-8 * total {
            break;
        }
    }
    // the half y1 >= x1 was integrated; the kernel is even about y1 = x1
    Ok(2.0 * total)
}

/// Which cell-to-cell kernel a [`KernelTable`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// Cell integrals of `G`; applying gives the stream function at centers.
    Green,
    /// Cell integrals of `(x2 + y2) / (2π |x - y*|²)`.
    ImageU1,
}

/// Precomputed cell integrals between every target row, source row and
/// column offset. Grids are translation invariant in `x1`, so a table of
/// `ny · ny · nx` entries covers all cell pairs.
#[derive(Clone, Debug)]
pub struct KernelTable {
    geom: GridGeometry,
    kind: KernelKind,
    data: Vec<f64>,
}

impl KernelTable {
    pub fn new(geom: GridGeometry, kind: KernelKind) -> Self {
        let (nx, ny) = (geom.nx, geom.ny);
        let mut data = alloc::vec![0.0; ny * ny * nx];
        let h = geom.cell;
        for jt in 0..ny {
            let x = Point::new(0.0, geom.x2(jt));
            for js in 0..ny {
                let base = (jt * ny + js) * nx;
                for d in 0..nx {
                    let x0 = d as f64 * h - 0.5 * h;
                    let r = Rect {
                        x0,
                        x1: x0 + h,
                        y0: js as f64 * h,
                        y1: (js + 1) as f64 * h,
                    };
                    data[base + d] = match kind {
                        KernelKind::Green => cell_green_integral(x, &r),
                        KernelKind::ImageU1 => cell_image_u1(x, &r),
                    };
                }
            }
        }
        Self { geom, kind, data }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Kernel between a target cell and a source cell `d` columns apart.
    #[inline]
    pub fn entry(&self, jt: usize, js: usize, d: usize) -> f64 {
        self.data[(jt * self.geom.ny + js) * self.geom.nx + d]
    }

    /// `out[t] = Σ_s K(t, s) values[s]` over all cells, skipping zero sources.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.geom.nx, self.geom.ny);
        assert_eq!(values.len(), nx * ny, "value count does not match grid");
        let mut out = alloc::vec![0.0; nx * ny];
        for js in 0..ny {
            let src = &values[js * nx..(js + 1) * nx];
            let Some(lo) = src.iter().position(|&v| v != 0.0) else {
                continue;
            };
            let hi = src.iter().rposition(|&v| v != 0.0).unwrap_or(lo);
            for jt in 0..ny {
                let k = &self.data[(jt * ny + js) * nx..(jt * ny + js + 1) * nx];
                let dst = &mut out[jt * nx..(jt + 1) * nx];
                for (is, &w) in src.iter().enumerate().take(hi + 1).skip(lo) {
                    if w == 0.0 {
                        continue;
                    }
                    for (o, kv) in dst[is..].iter_mut().zip(&k[..nx - is]) {
                        *o += w * kv;
                    }
                    for (o, kv) in dst[..is].iter_mut().rev().zip(&k[1..=is]) {
                        *o += w * kv;
                    }
                }
            }
        }
        out
    }

    /// `Σ_t a[t] Σ_s K(t, s) b[s]`, times the cell area.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        let kb = self.apply(b);
        a.iter().zip(&kb).map(|(x, y)| x * y).sum::<f64>() * self.geom.cell_area()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn green_point_values() {
        let g = green_eval(Point::new(0.0, 1.0), Point::new(0.0, 2.0)).unwrap();
        assert!((g - 9f64.ln() / (4.0 * PI)).abs() < 1e-15);
        assert!((g - 0.174850).abs() < 1e-6);
        assert_eq!(
            green_eval(Point::new(0.0, 1.0), Point::new(5.0, 0.0)).unwrap(),
            0.0
        );
        let a = green_eval(Point::new(1.0, 2.0), Point::new(4.0, 1.0)).unwrap();
        let b = green_eval(Point::new(4.0, 1.0), Point::new(1.0, 2.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            green_eval(Point::new(1.0, 1.0), Point::new(1.0, 1.0)),
            Err(Error::SingularEvaluation)
        );
    }

    fn brute_cell(x: Point, r: &Rect, f: impl Fn(Point, Point) -> f64) -> f64 {
        let rule = GaussLegendre::new(10);
        // split at the target so any singularity sits on a sub-box corner
        let xs = [r.x0, x.x1.clamp(r.x0, r.x1), r.x1];
        let ys = [r.y0, x.x2.clamp(r.y0, r.y1), r.y1];
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                if xs[a + 1] > xs[a] && ys[b + 1] > ys[b] {
                    acc += integrate_rect_adaptive(
                        &rule,
                        [xs[a], xs[a + 1], ys[b], ys[b + 1]],
                        1e-13,
                        30,
                        &mut |y1, y2| f(x, Point::new(y1, y2)),
                    );
                }
            }
        }
        acc
    }

    #[test]
    fn cell_integrals_match_brute_force() {
        let r = Rect {
            x0: -0.1,
            x1: 0.1,
            y0: 0.0,
            y1: 0.2,
        };
        let targets = [
            Point::new(0.0, 0.1),
            Point::new(0.03, 0.05),
            Point::new(0.25, 0.3),
            Point::new(2.0, 1.5),
            Point::new(0.1, 0.0),
        ];
        for x in targets {
            let g = brute_cell(x, &r, |x, y| {
                let r2 = x.dist2(y);
                if r2 == 0.0 {
                    0.0
                } else {
                    green_unchecked(x, y, r2)
                }
            });
            let v = cell_green_integral(x, &r);
            assert!(
                (v - g).abs() < 1e-10 * (1.0 + g.abs()) + 1e-13,
                "{x:?}: {v} vs {g}"
            );

            let u1 = brute_cell(x, &r, |x, y| {
                let rd = x.dist2(y);
                let ri = x.image().dist2(y);
                let d = if rd == 0.0 { 0.0 } else { (y.x2 - x.x2) / rd };
                (d + (x.x2 + y.x2) / ri) / (2.0 * PI)
            });
            let u2 = brute_cell(x, &r, |x, y| {
                let rd = x.dist2(y);
                let ri = x.image().dist2(y);
                let d = if rd == 0.0 { 0.0 } else { 1.0 / rd };
                (x.x1 - y.x1) * (d - 1.0 / ri) / (2.0 * PI)
            });
            let c = cell_velocity(x, &r);
            assert!((c.u1 - u1).abs() < 1e-7, "{x:?}: u1 {} vs {u1}", c.u1);
            assert!((c.u2 - u2).abs() < 1e-7, "{x:?}: u2 {} vs {u2}", c.u2);

            let img = brute_cell(x, &r, |x, y| {
                (x.x2 + y.x2) / (2.0 * PI * x.image().dist2(y))
            });
            assert!((cell_image_u1(x, &r) - img).abs() < 1e-8);
        }
    }

    #[test]
    fn small_disc_stream_matches_point_vortex() {
        let g = GridGeometry::symmetric(400, 400, 2.5).unwrap();
        let f = GridField::from_fn(g, |y| {
            if y.x1 * y.x1 + (y.x2 - 2.0) * (y.x2 - 2.0) < 0.05 * 0.05 {
                1.0
            } else {
                0.0
            }
        });
        // compare with the rasterized circulation so the test checks the kernel
        let psi = stream_eval(&f, Point::new(0.0, 1.0));
        let gamma = f.mass();
        let expect = gamma * green_eval(Point::new(0.0, 1.0), Point::new(0.0, 2.0)).unwrap();
        assert!(close(psi, expect, 1e-3), "{psi} vs {expect}");
        let ideal = PI * 0.0025 * 0.174850;
        assert!(close(expect, ideal, 0.05));
    }

    #[test]
    fn stream_is_linear_and_zero_for_zero_field() {
        let g = GridGeometry::symmetric(20, 10, 1.0).unwrap();
        let f = GridField::from_fn(g, |x| x.x2 * (0.5 - x.x1.abs()));
        let h = GridField::from_fn(g, |x| (x.x1 + 0.3).max(0.0));
        let x = Point::new(0.1, 0.35);
        let a = stream_eval(&f, x) + stream_eval(&h, x);
        let b = stream_eval(&f.try_add(&h).unwrap(), x);
        assert!((a - b).abs() < 1e-14 * a.abs());
        assert_eq!(stream_eval(&GridField::zeros(g), x), 0.0);
        assert_eq!(velocity_eval(&GridField::zeros(g), x), Velocity::default());
    }

    #[test]
    fn wall_is_a_streamline() {
        let g = GridGeometry::symmetric(20, 10, 1.0).unwrap();
        let f = GridField::from_fn(g, |x| 1.0 + x.x1);
        for k in 0..10 {
            let u = velocity_eval(&f, Point::new(-1.0 + 0.2 * k as f64, 0.0));
            assert_eq!(u.u2, 0.0);
        }
        let u = velocity_eval(&f, Point::new(0.3, 0.0));
        assert!(u.u1 > 0.0);
    }

    #[test]
    fn table_matches_direct_stream() {
        let g = GridGeometry::symmetric(16, 8, 1.0).unwrap();
        let f = GridField::from_fn(g, |x| {
            (0.6 - (x.x1 * x.x1 + (x.x2 - 0.4).powi(2)).sqrt()).max(0.0)
        });
        let t = KernelTable::new(g, KernelKind::Green);
        let psi = t.apply(f.values());
        for j in 0..g.ny {
            for i in 0..g.nx {
                let d = stream_eval(&f, g.center(i, j));
                assert!((psi[g.index(i, j)] - d).abs() < 1e-13, "{i},{j}");
            }
        }
    }

    #[test]
    fn moment_rejects_small_exponent() {
        assert_eq!(
            green_pnorm_moment(Point::new(0.0, 1.0), 2.0),
            Err(Error::DivergentMoment { q: 2.0 })
        );
    }

    #[test]
    fn moment_scales_with_height_squared() {
        let m0 = green_pnorm_moment(Point::new(0.0, 1.0), 3.0).unwrap();
        let m1 = green_pnorm_moment(Point::new(10.0, 1.0), 3.0).unwrap();
        let m2 = green_pnorm_moment(Point::new(7.0, 2.0), 3.0).unwrap();
        assert!(close(m1, m0, 1e-8));
        assert!(close(m2 / m0, 4.0, 1e-6), "{}", m2 / m0);
    }
}
