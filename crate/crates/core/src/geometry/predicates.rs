//! Orientation and power-in-circle predicates with a floating-point filter
//! and an exact rational fallback. Inputs are doubles, hence dyadic
//! rationals, so the fallback is exact.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use std::cmp::Ordering;

const EPS: f64 = f64::EPSILON * 0.5;
const ORIENT_BOUND: f64 = (3.0 + 16.0 * EPS) * EPS;
// Loose relative to the tight incircle bound; the extra weight column adds a
// rounding step per row.
const POWER_BOUND: f64 = 64.0 * EPS;

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite coordinate")
}

fn sign_of(r: &BigRational) -> Ordering {
    if r.is_zero() {
        Ordering::Equal
    } else if r.is_positive() {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

fn sign_f(x: f64) -> Ordering {
    x.partial_cmp(&0.0).unwrap_or(Ordering::Equal)
}

/// Sign of `(b - a) × (c - a)`: `Greater` for a counter-clockwise turn.
pub fn orient2d(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Ordering {
    let l = (b[0] - a[0]) * (c[1] - a[1]);
    let r = (b[1] - a[1]) * (c[0] - a[0]);
    let det = l - r;
    let bound = ORIENT_BOUND * (l.abs() + r.abs());
    if det > bound || -det > bound {
        return sign_f(det);
    }
    orient2d_exact(a, b, c)
}

pub fn orient2d_exact(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Ordering {
    let (ax, ay) = (rat(a[0]), rat(a[1]));
    let det = (rat(b[0]) - &ax) * (rat(c[1]) - &ay) - (rat(b[1]) - &ay) * (rat(c[0]) - &ax);
    sign_of(&det)
}

/// Lifted power-in-circle determinant for a counter-clockwise triangle
/// `a, b, c` of weighted points `(x, y, h)`. `Greater` means `q` lies strictly
/// below the downward paraboloid through the three points.
pub fn power_test(a: [f64; 3], b: [f64; 3], c: [f64; 3], q: [f64; 3]) -> Ordering {
    let (adx, ady) = (a[0] - q[0], a[1] - q[1]);
    let (bdx, bdy) = (b[0] - q[0], b[1] - q[1]);
    let (cdx, cdy) = (c[0] - q[0], c[1] - q[1]);
    let al = adx * adx + ady * ady + (a[2] - q[2]);
    let bl = bdx * bdx + bdy * bdy + (b[2] - q[2]);
    let cl = cdx * cdx + cdy * cdy + (c[2] - q[2]);
    let t1 = adx * (bdy * cl - cdy * bl);
    let t2 = ady * (bdx * cl - cdx * bl);
    let t3 = al * (bdx * cdy - cdx * bdy);
    let det = t1 - t2 + t3;
    let al_abs = adx * adx + ady * ady + (a[2] - q[2]).abs();
    let bl_abs = bdx * bdx + bdy * bdy + (b[2] - q[2]).abs();
    let cl_abs = cdx * cdx + cdy * cdy + (c[2] - q[2]).abs();
    let perm = adx.abs() * ((bdy * cl_abs).abs() + (cdy * bl_abs).abs())
        + ady.abs() * ((bdx * cl_abs).abs() + (cdx * bl_abs).abs())
        + al_abs * ((bdx * cdy).abs() + (cdx * bdy).abs());
    let bound = POWER_BOUND * perm;
    if det > bound || -det > bound {
        return sign_f(det);
    }
    power_test_exact(a, b, c, q)
}

pub fn power_test_exact(a: [f64; 3], b: [f64; 3], c: [f64; 3], q: [f64; 3]) -> Ordering {
    let qx = rat(q[0]);
    let qy = rat(q[1]);
    let qh = rat(q[2]);
    let row = |p: [f64; 3]| {
        let dx = rat(p[0]) - &qx;
        let dy = rat(p[1]) - &qy;
        let l = &dx * &dx + &dy * &dy + (rat(p[2]) - &qh);
        (dx, dy, l)
    };
    let (adx, ady, al) = row(a);
    let (bdx, bdy, bl) = row(b);
    let (cdx, cdy, cl) = row(c);
    let det = &adx * (&bdy * &cl - &cdy * &bl) - &ady * (&bdx * &cl - &cdx * &bl) + &al * (&bdx * &cdy - &cdx * &bdy);
    sign_of(&det)
}

/// Power comparison on a line: for collinear `a`, `q`, `b` with `q` strictly
/// between them, `Greater` when `q` lies below the lifted segment `a b`.
pub fn power_test_collinear(a: [f64; 3], b: [f64; 3], q: [f64; 3]) -> Ordering {
    // Parametrize along the dominant axis.
    let axis = if (b[0] - a[0]).abs() >= (b[1] - a[1]).abs() { 0 } else { 1 };
    let lift = |p: [f64; 3]| -> BigRational { rat(p[0]) * rat(p[0]) + rat(p[1]) * rat(p[1]) + rat(p[2]) };
    let (ta, tb, tq) = (rat(a[axis]), rat(b[axis]), rat(q[axis]));
    let (za, zb, zq) = (lift(a), lift(b), lift(q));
    // Sign of (line value at q) - zq, with the line through (ta,za), (tb,zb).
    let lhs = (&za * (&tb - &tq) + &zb * (&tq - &ta)) - &zq * (&tb - &ta);
    let s = sign_of(&lhs);
    if tb > ta {
        s
    } else {
        s.reverse()
    }
}

/// Sign of the determinant of an exact rational matrix.
pub fn det_exact(m: Vec<Vec<BigRational>>) -> Ordering {
    let n = m.len();
    let mut a = m;
    let mut sign = 1;
    for col in 0..n {
        let Some(piv) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return Ordering::Equal;
        };
        if piv != col {
            a.swap(piv, col);
            sign = -sign;
        }
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &a[col][col];
            for c in col..n {
                let v = &factor * &a[col][c];
                a[r][c] -= v;
            }
        }
    }
    let mut prod = BigRational::from_integer(BigInt::from(sign));
    for (i, row) in a.iter().enumerate() {
        prod *= &row[i];
    }
    sign_of(&prod)
}

/// Exact rational image of a double.
pub fn to_rational(x: f64) -> BigRational {
    rat(x)
}

/// Floating-point determinant sign, or `None` when the value is within a
/// conservative rounding bound of zero. Entries are assumed to carry relative
/// errors of a few ulps.
pub fn det_sign_filtered(m: &[Vec<f64>]) -> Option<Ordering> {
    let n = m.len();
    let mut a = m.to_vec();
    let hadamard: f64 = m.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).product();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        if a[piv][col] == 0.0 {
            return None;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    (det.abs() > 1e-10 * hadamard && det.is_finite()).then(|| sign_f(det))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientation_basics() {
        assert_eq!(orient2d([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]), Ordering::Greater);
        assert_eq!(orient2d([0.0, 0.0], [0.0, 1.0], [1.0, 0.0]), Ordering::Less);
        assert_eq!(orient2d([0.0, 0.0], [1.0, 1.0], [2.0, 2.0]), Ordering::Equal);
    }

    #[test]
    fn near_collinear_needs_exact() {
        let a = [0.5, 0.5];
        let b = [12.0, 12.0];
        let c = [24.0, 24.0];
        let eps = f64::EPSILON;
        assert_eq!(orient2d(a, b, c), Ordering::Equal);
        assert_eq!(orient2d(a, b, [24.0, 24.0 + 24.0 * eps]), Ordering::Greater);
    }

    #[test]
    fn cocircular_is_on() {
        let a = [1.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0];
        let c = [-1.0, 0.0, 0.0];
        assert_eq!(power_test(a, b, c, [0.0, -1.0, 0.0]), Ordering::Equal);
        assert_eq!(power_test(a, b, c, [0.0, 0.0, 0.0]), Ordering::Greater);
        assert_eq!(power_test(a, b, c, [0.0, -1.0, -1e-300]), Ordering::Greater);
        assert_eq!(power_test(a, b, c, [0.0, -1.0, 1e-300]), Ordering::Less);
    }

    #[test]
    fn collinear_power() {
        let a = [0.0, 0.0, 0.0];
        let b = [2.0, 0.0, 0.0];
        assert_eq!(power_test_collinear(a, b, [1.0, 0.0, 0.5]), Ordering::Greater);
        assert_eq!(power_test_collinear(a, b, [1.0, 0.0, 1.5]), Ordering::Less);
        assert_eq!(power_test_collinear(b, a, [1.0, 0.0, 1.0]), Ordering::Equal);
    }

    #[test]
    fn determinant_signs() {
        let m = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(det_sign_filtered(&m), Some(Ordering::Less));
        let s = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert_eq!(det_sign_filtered(&s), None);
        let exact: Vec<Vec<BigRational>> = s.iter().map(|r| r.iter().map(|&x| rat(x)).collect()).collect();
        assert_eq!(det_exact(exact), Ordering::Equal);
    }
}
