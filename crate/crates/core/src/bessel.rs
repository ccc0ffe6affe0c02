//! Bessel functions of the first kind, orders 0 and 1.

use crate::math::{floor, sqrt};

/// Below this argument the power series is summed directly.
const SERIES_LIMIT: f64 = 8.0;

fn series(n: u32, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = if n == 0 { 1.0 } else { h };
    let mut sum = term;
    let q = -h * h;
    for k in 1..200 {
        let k = k as f64;
        term *= q / (k * (k + n as f64));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

// Miller's backward recurrence normalized with J0 + 2 Σ J_2k = 1.
fn miller(x: f64) -> (f64, f64) {
    let start = 2 * ((floor(x) as usize + 30 + floor(sqrt(40.0 * x)) as usize) / 2);
    let mut jp = 0.0;
    let mut j = 1e-30;
    let mut norm = 0.0;
    let (mut j0, mut j1) = (0.0, 0.0);
    for k in (1..=start).rev() {
        let jm = 2.0 * k as f64 / x * j - jp;
        jp = j;
        j = jm;
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * j;
        }
        if k == 2 {
            j1 = j;
        }
        if k == 1 {
            j0 = j;
        }
        if j.abs() > 1e250 {
            jp *= 1e-250;
            j *= 1e-250;
            norm *= 1e-250;
            j1 *= 1e-250;
        }
    }
    norm += j0;
    (j0 / norm, j1 / norm)
}

/// `J_n(x)` for `n ∈ {0, 1}`; odd/even extension for negative `x`.
pub fn bessel_j(order: u32, x: f64) -> f64 {
    assert!(order <= 1, "only orders 0 and 1 are implemented");
    let ax = x.abs();
    let v = if ax <= SERIES_LIMIT {
        series(order, ax)
    } else {
        let (j0, j1) = miller(ax);
        if order == 0 {
            j0
        } else {
            j1
        }
    };
    if order == 1 && x < 0.0 {
        -v
    } else {
        v
    }
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_j(0, x)
}

pub fn bessel_j1(x: f64) -> f64 {
    bessel_j(1, x)
}

/// First positive zero of `J1`, by bisection.
pub fn j1_first_zero() -> f64 {
    let (mut lo, mut hi) = (3.5, 4.0);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if bessel_j1(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert_eq!(bessel_j1(0.0), 0.0);
    }

    // reference values from an independent arbitrary-precision evaluation
    const TABLE: [(f64, f64, f64); 8] = [
        (0.5, 0.938_469_807_240_813, 0.242_268_457_674_873_9),
        (2.0, 0.223_890_779_141_235_7, 0.576_724_807_756_873_4),
        (5.0, -0.177_596_771_314_338_3, -0.327_579_137_591_465_2),
        (7.9, 0.194_361_844_841_278_2, 0.219_179_399_921_751_2),
        (8.5, 0.041_939_251_842_934_5, 0.273_121_963_674_053_7),
        (12.0, 0.047_689_310_796_833_54, -0.223_447_104_490_627_9),
        (15.0, -0.014_224_472_826_780_77, 0.205_104_038_613_522_3),
        (20.0, 0.167_024_664_340_583_2, 0.066_833_124_175_850_05),
    ];

    #[test]
    fn matches_reference_table() {
        for (x, j0, j1) in TABLE {
            assert!((bessel_j0(x) - j0).abs() < 1e-10, "J0({x})");
            assert!((bessel_j1(x) - j1).abs() < 1e-10, "J1({x})");
        }
    }

    #[test]
    fn first_zero_of_j1() {
        let z = j1_first_zero();
        assert!((z - 3.831_705_970_207_512).abs() < 1e-10);
        assert!((bessel_j0(z) + 0.402_759_395_702_553).abs() < 1e-10);
    }

    #[test]
    fn wronskian_like_identity() {
        // J0' = -J1, checked by central differences across both branches
        for k in 1..40 {
            let x = 0.5 * k as f64;
            let h = 1e-5;
            let d = (bessel_j0(x + h) - bessel_j0(x - h)) / (2.0 * h);
            assert!((d + bessel_j1(x)).abs() < 1e-8, "x = {x}");
        }
    }
}
