//! Row-wise symmetric decreasing rearrangement about `x1 = 0`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{GridField, GridGeometry};

/// Column order used to lay out sorted values: nearest to `x1 = 0` first,
/// right column before its mirror.
fn placement_order(g: &GridGeometry) -> Vec<usize> {
    let mut cols: Vec<usize> = (0..g.nx).collect();
    cols.sort_by(|&a, &b| {
        let (xa, xb) = (g.x1(a), g.x1(b));
        xa.abs()
            .total_cmp(&xb.abs())
            .then_with(|| xb.total_cmp(&xa))
    });
    cols
}

/// Steiner symmetrization of a field on a grid symmetric about `x1 = 0`.
///
/// Each row's values are sorted in decreasing order and dealt out from the
/// center column outwards, alternating right and left. Every row keeps its
/// multiset of values, so mass, impulse and all `L^q` norms are unchanged
/// exactly, and the result is non-increasing in `|x1|`. Pairs of equal values
/// land on mirror columns; an odd leftover makes the row even only up to a
/// one-cell shift (see [`even_part`]).
pub fn steiner_symmetrize(field: &GridField) -> Result<GridField> {
    let g = *field.geometry();
    if !g.is_symmetric() {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "symmetrization needs a grid centered on x1 = 0",
        });
    }
    let order = placement_order(&g);
    let mut out = Vec::with_capacity(g.len());
    let mut sorted = Vec::with_capacity(g.nx);
    let mut row = alloc::vec![0.0; g.nx];
    for j in 0..g.ny {
        sorted.clear();
        sorted.extend_from_slice(field.row(j));
        sorted.sort_by(|a: &f64, b: &f64| b.total_cmp(a));
        for (&col, &v) in order.iter().zip(&sorted) {
            row[col] = v;
        }
        out.extend_from_slice(&row);
    }
    Ok(GridField::from_raw(g, out))
}

/// Average of a field and its mirror image in `x1 = 0`.
pub fn even_part(field: &GridField) -> Result<GridField> {
    let g = *field.geometry();
    if !g.is_symmetric() {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "mirroring needs a grid centered on x1 = 0",
        });
    }
    let mut out = Vec::with_capacity(g.len());
    for j in 0..g.ny {
        let row = field.row(j);
        out.extend((0..g.nx).map(|i| 0.5 * (row[i] + row[g.mirror_column(i)])));
    }
    Ok(GridField::from_raw(g, out))
}

/// Whether every row is even in `x1` and non-increasing away from the axis.
pub fn is_steiner_symmetric(field: &GridField) -> bool {
    let g = field.geometry();
    let half = g.nx / 2;
    (0..g.ny).all(|j| {
        let row = field.row(j);
        let even = (0..g.nx).all(|i| row[i] == row[g.mirror_column(i)]);
        let right = &row[half..];
        even && right.windows(2).all(|w| w[0] >= w[1])
    })
}
