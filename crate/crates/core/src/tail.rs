//! Smooth Steiner-symmetric patches with a long thin horizontal spike.
//!
//! A symmetric patch `{|x1| < l(x2)}` is perturbed in four moves: smooth the
//! half-width `l` by convolution, multiply it by `1 + K_R` where `K_R` is a
//! narrow bump at height `a` whose amplitude `R` makes the maximum
//! half-width `L - ε`, add `ε`, and taper both ends of the support with a
//! flat involution `H` so the boundary is smooth where it closes up.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{ContourPolygon, GridField};
use crate::kernel::Point;
use crate::math::{exp, ln_1p, sqrt};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailParams {
    /// `L¹` budget `ε` of the perturbation.
    pub epsilon: f64,
    /// Target maximum half-width `L`.
    pub tail_length: f64,
    /// Height `a` of the spike.
    pub spike_center: f64,
    /// Half-width `δ` of the window holding the spike; also the taper length.
    pub spike_halfwidth: f64,
}

/// Decreasing involution of `[0, 1]` with `H(0) = 1`, `H(1) = 0`, all
/// derivatives vanishing at 0. With `g(x) = exp(1 - 1/x²)`, it is defined by
/// `g(H(x)) = 1 - g(x)`.
pub fn taper(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    let g = exp(1.0 - 1.0 / (x * x));
    let d = 1.0 - ln_1p(-g);
    1.0 / sqrt(d)
}

/// Smooth bump supported on `(-w, w)` with maximum 1 at the origin.
pub fn spike_bump(s: f64, w: f64) -> f64 {
    let u = s / w;
    if u.abs() >= 1.0 {
        0.0
    } else {
        exp(1.0 - 1.0 / (1.0 - u * u))
    }
}

/// `∫ spike_bump(s, 1) ds`.
const BUMP_MASS: f64 = 1.206_900_322_437_874;

/// Half-width of the polygon along the horizontal line at height `x2`.
pub fn half_width(contour: &ContourPolygon, x2: f64) -> f64 {
    let v = contour.vertices();
    let n = v.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..n {
        let a = v[k];
        let b = v[(k + 1) % n];
        if (a.x2 > x2) != (b.x2 > x2) {
            let t = (x2 - a.x2) / (b.x2 - a.x2);
            let x = a.x1 + t * (b.x1 - a.x1);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if hi > lo {
        0.5 * (hi - lo)
    } else {
        0.0
    }
}

/// Boundary of a Steiner-symmetric patch field: each row's half-width is its
/// mass over `2λ`, vertices sit at row centers, and the curve closes on the
/// axis half a cell above the top row. Rows touching the wall keep their
/// half-width down to `x2 = 0`.
pub fn patch_contour(field: &GridField, lambda: f64) -> Result<ContourPolygon> {
    let g = field.geometry();
    let mut right: Vec<Point> = Vec::new();
    let mut top_row = None;
    for j in 0..g.ny {
        let w = field.row(j).iter().sum::<f64>() * g.cell / (2.0 * lambda);
        if w > 0.0 {
            if right.is_empty() {
                let base = if j == 0 { 0.0 } else { j as f64 * g.cell };
                right.push(Point::new(if j == 0 { w } else { 0.0 }, base));
            }
            right.push(Point::new(w, g.x2(j)));
            top_row = Some(j);
        }
    }
    let Some(top) = top_row else {
        return Err(Error::EmptySource);
    };
    let apex = Point::new(0.0, (top + 1) as f64 * g.cell);
    let mut verts = right.clone();
    verts.push(apex);
    for p in right.iter().rev() {
        if p.x1 > 0.0 {
            verts.push(Point::new(-p.x1, p.x2));
        }
    }
    Ok(ContourPolygon::new(verts))
}

/// Uniformly sampled even function on `[0, top]`, zero above.
struct Sampled {
    ds: f64,
    v: Vec<f64>,
}

impl Sampled {
    fn at(&self, s: f64) -> f64 {
        let t = s.abs() / self.ds;
        let k = t as usize;
        if k + 1 >= self.v.len() {
            return if k + 1 == self.v.len() {
                self.v[k]
            } else {
                0.0
            };
        }
        let f = t - k as f64;
        (1.0 - f) * self.v[k] + f * self.v[k + 1]
    }
}

/// Result of the construction with its intermediate quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct TailedContour {
    pub contour: ContourPolygon,
    /// Spike amplitude `R`.
    pub amplitude: f64,
    /// Height of the widest point.
    pub apex_x2: f64,
    /// Upper end of the unperturbed support (after smoothing).
    pub support_top: f64,
}

/// Builds the tailed contour. See the module docs for the construction.
pub fn make_tailed_contour(base: &ContourPolygon, params: &TailParams) -> Result<ContourPolygon> {
    build_tailed_contour(base, params).map(|t| t.contour)
}

pub fn build_tailed_contour(base: &ContourPolygon, params: &TailParams) -> Result<TailedContour> {
    let TailParams {
        epsilon: eps,
        tail_length: big_l,
        spike_center: a,
        spike_halfwidth: delta,
    } = *params;
    let bb = base
        .bounding_box()
        .ok_or(Error::DegeneratePolygon { vertices: 0 })?;
    if base.len() < 3 {
        return Err(Error::DegeneratePolygon {
            vertices: base.len(),
        });
    }
    if bb.y0 < 0.0 {
        return Err(Error::OutOfBounds);
    }
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !(positive(eps) && positive(big_l) && positive(a) && positive(delta)) {
        return Err(Error::InvalidParameter {
            name: "tail",
            reason: "epsilon, tail_length, spike_center and spike_halfwidth must be positive",
        });
    }

    // smoothing radius and sample spacing
    let eta = 0.1 * eps.min(delta);
    let top = bb.y1 + eta;
    let n = ((8.0 * top / eta) as usize).clamp(4000, 400_000);
    let ds = top / n as f64;
    let raw: Vec<f64> = (0..=n).map(|k| half_width(base, k as f64 * ds)).collect();
    let raw = Sampled { ds, v: raw };
    let m = (eta / ds) as isize;
    let weights: Vec<f64> = (-m..=m).map(|k| spike_bump(k as f64 * ds, eta)).collect();
    let wsum: f64 = weights.iter().sum();
    let smooth: Vec<f64> = (0..=n)
        .map(|k| {
            (-m..=m)
                .zip(&weights)
                .map(|(d, w)| w * raw.at((k as isize + d) as f64 * ds))
                .sum::<f64>()
                / wsum
        })
        .collect();
    let l_eps = Sampled { ds, v: smooth };

    if !(delta < eps && 3.0 * delta < a && delta < top - a) {
        return Err(Error::InvalidParameter {
            name: "spike_halfwidth",
            reason: "need delta < min(epsilon, a/3, support top - a)",
        });
    }
    let window: Vec<f64> = (0..=200)
        .map(|k| a - delta + 2.0 * delta * k as f64 / 200.0)
        .collect();
    if window.iter().any(|&s| l_eps.at(s) <= 0.0) {
        return Err(Error::InvalidParameter {
            name: "spike_center",
            reason: "patch must be present across the spike window",
        });
    }

    // bump of L¹ norm at most ε/4, inside (-δ, δ)
    let w = (0.999 * delta).min(0.25 * eps / BUMP_MASS);
    let k_r = |r: f64, s: f64| -> f64 {
        if r <= 1.0 {
            r * spike_bump(s - a, w)
        } else {
            r * spike_bump(r * (s - a), w)
        }
    };
    let profile = |r: f64, s: f64| l_eps.at(s) * (1.0 + k_r(r, s));
    let peak = |r: f64| -> (f64, f64) {
        let half = w / r.max(1.0);
        let mut best = (f64::NEG_INFINITY, a);
        for k in 0..=400 {
            let s = a - half + 2.0 * half * k as f64 / 400.0;
            let v = profile(r, s);
            if v > best.0 {
                best = (v, s);
            }
        }
        for &s in &window {
            let v = profile(r, s);
            if v > best.0 {
                best = (v, s);
            }
        }
        // golden-section polish around the best sample
        let step = (2.0 * half / 400.0).max(2.0 * delta / 200.0);
        let (mut lo, mut hi) = (best.1 - step, best.1 + step);
        let phi = 0.5 * (sqrt(5.0) - 1.0);
        for _ in 0..80 {
            let c = hi - phi * (hi - lo);
            let d = lo + phi * (hi - lo);
            if profile(r, c) > profile(r, d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        let s = 0.5 * (lo + hi);
        let v = profile(r, s);
        if v > best.0 {
            (v, s)
        } else {
            best
        }
    };

    let target = big_l - eps;
    let global_max = l_eps.v.iter().cloned().fold(0.0, f64::max);
    if global_max > target + 1e-12 * big_l && peak(0.0).0 < target {
        return Err(Error::InvalidParameter {
            name: "tail_length",
            reason: "tail length must exceed the smoothed half-width plus epsilon",
        });
    }
    let amplitude = if peak(0.0).0 >= target {
        0.0
    } else {
        let mut hi = 1.0;
        while peak(hi).0 < target {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::InvalidParameter {
                    name: "tail_length",
                    reason: "spike amplitude did not reach the tail length",
                });
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if peak(mid).0 < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let apex = peak(amplitude).1;
    let apex_value = peak(amplitude).0;

    let h_eps = |s: f64| -> f64 {
        if s <= delta || s >= top + delta {
            0.0
        } else if s < 2.0 * delta {
            taper((2.0 * delta - s) / delta)
        } else if s < top {
            1.0
        } else {
            taper((s - top) / delta)
        }
    };
    let zeta = |s: f64| -> f64 {
        let inner = if s < top { profile(amplitude, s) } else { 0.0 };
        h_eps(s) * (inner + eps)
    };

    // sample heights: uniform, refined on tapers and spike, plus the apex
    let mut heights: Vec<f64> = Vec::new();
    let span = top;
    let uniform = 800;
    for k in 1..uniform {
        heights.push(delta + span * k as f64 / uniform as f64);
    }
    for k in 1..100 {
        heights.push(delta + delta * k as f64 / 100.0);
        heights.push(top + delta * k as f64 / 100.0);
    }
    let half = w / amplitude.max(1.0);
    for k in 0..=600 {
        heights.push(a - half + 2.0 * half * k as f64 / 600.0);
    }
    heights.retain(|&s| s > delta && s < top + delta && (s - apex).abs() > 1e-12 * top);
    heights.push(apex);
    heights.sort_by(f64::total_cmp);
    heights.dedup_by(|x, y| (*x - *y).abs() < 1e-14 * top);

    let mut right: Vec<Point> = Vec::with_capacity(heights.len());
    for &s in &heights {
        let z = if s == apex { apex_value + eps } else { zeta(s) };
        if z > 0.0 {
            right.push(Point::new(z, s));
        }
    }
    let mut verts = Vec::with_capacity(2 * right.len() + 2);
    verts.push(Point::new(0.0, delta));
    verts.extend(right.iter().copied());
    verts.push(Point::new(0.0, top + delta));
    verts.extend(right.iter().rev().map(|p| Point::new(-p.x1, p.x2)));
    Ok(TailedContour {
        contour: ContourPolygon::new(verts),
        amplitude,
        apex_x2: apex,
        support_top: top,
    })
}
