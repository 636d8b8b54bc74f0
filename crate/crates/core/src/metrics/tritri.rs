//! Exact closed triangle-triangle intersection.
//!
//! Follows the interval-overlap test of Guigue and Devillers, with every sign
//! taken from adaptive-precision orientation predicates so touching and
//! coplanar configurations are classified exactly.

use robust::{orient2d, orient3d, Coord, Coord3D};

use crate::error::{Error, Result};
use crate::mesh::Vec3;

type P = Vec3;

fn c3(p: &P) -> Coord3D<f64> {
    Coord3D {
        x: p.x,
        y: p.y,
        z: p.z,
    }
}

/// `(a - d) . ((b - d) x (c - d))`, exactly signed.
fn o3(a: &P, b: &P, c: &P, d: &P) -> f64 {
    orient3d(c3(a), c3(b), c3(c), c3(d))
}

fn o2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    orient2d(Coord { x: a[0], y: a[1] }, Coord { x: b[0], y: b[1] }, Coord { x: c[0], y: c[1] })
}

/// True when the three points are exactly collinear.
pub(crate) fn is_degenerate(t: &[P; 3]) -> bool {
    (0..3).all(|drop| {
        let pr = |p: &P| project(p, drop);
        o2(pr(&t[0]), pr(&t[1]), pr(&t[2])) == 0.0
    })
}

fn project(p: &P, drop: usize) -> [f64; 2] {
    match drop {
        0 => [p.y, p.z],
        1 => [p.x, p.z],
        _ => [p.x, p.y],
    }
}

/// Whether two closed triangles share at least one point.
pub fn triangle_triangle_intersect(t1: &[P; 3], t2: &[P; 3]) -> Result<bool> {
    for t in [t1, t2] {
        if t.iter().any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite())) {
            return Err(Error::Invalid("triangle has non-finite coordinates".into()));
        }
        if is_degenerate(t) {
            return Err(Error::Invalid("degenerate triangle".into()));
        }
    }
    let [p1, q1, r1] = t1;
    let [p2, q2, r2] = t2;

    let dp1 = o3(p1, p2, q2, r2);
    let dq1 = o3(q1, p2, q2, r2);
    let dr1 = o3(r1, p2, q2, r2);
    if same_strict_side(dp1, dq1, dr1) {
        return Ok(false);
    }
    let dp2 = o3(p2, p1, q1, r1);
    let dq2 = o3(q2, p1, q1, r1);
    let dr2 = o3(r2, p1, q1, r1);
    if same_strict_side(dp2, dq2, dr2) {
        return Ok(false);
    }

    let ctx = Ctx { t1, t2 };
    Ok(if dp1 > 0.0 {
        if dq1 > 0.0 {
            ctx.tri3d([r1, p1, q1], [p2, r2, q2], [dp2, dr2, dq2])
        } else if dr1 > 0.0 {
            ctx.tri3d([q1, r1, p1], [p2, r2, q2], [dp2, dr2, dq2])
        } else {
            ctx.tri3d([p1, q1, r1], [p2, q2, r2], [dp2, dq2, dr2])
        }
    } else if dp1 < 0.0 {
        if dq1 < 0.0 {
            ctx.tri3d([r1, p1, q1], [p2, q2, r2], [dp2, dq2, dr2])
        } else if dr1 < 0.0 {
            ctx.tri3d([q1, r1, p1], [p2, q2, r2], [dp2, dq2, dr2])
        } else {
            ctx.tri3d([p1, q1, r1], [p2, r2, q2], [dp2, dr2, dq2])
        }
    } else if dq1 < 0.0 {
        if dr1 >= 0.0 {
            ctx.tri3d([q1, r1, p1], [p2, r2, q2], [dp2, dr2, dq2])
        } else {
            ctx.tri3d([p1, q1, r1], [p2, q2, r2], [dp2, dq2, dr2])
        }
    } else if dq1 > 0.0 {
        if dr1 > 0.0 {
            ctx.tri3d([p1, q1, r1], [p2, r2, q2], [dp2, dr2, dq2])
        } else {
            ctx.tri3d([q1, r1, p1], [p2, q2, r2], [dp2, dq2, dr2])
        }
    } else if dr1 > 0.0 {
        ctx.tri3d([r1, p1, q1], [p2, q2, r2], [dp2, dq2, dr2])
    } else if dr1 < 0.0 {
        ctx.tri3d([r1, p1, q1], [p2, r2, q2], [dp2, dr2, dq2])
    } else {
        coplanar(t1, t2)
    })
}

fn same_strict_side(a: f64, b: f64, c: f64) -> bool {
    (a > 0.0 && b > 0.0 && c > 0.0) || (a < 0.0 && b < 0.0 && c < 0.0)
}

struct Ctx<'a> {
    t1: &'a [P; 3],
    t2: &'a [P; 3],
}

impl Ctx<'_> {
    /// `a` has its first vertex alone on one side of the plane of `b`.
    fn tri3d(&self, a: [&P; 3], b: [&P; 3], d: [f64; 3]) -> bool {
        let [p1, q1, r1] = a;
        let [p2, q2, r2] = b;
        let [dp2, dq2, dr2] = d;
        if dp2 > 0.0 {
            if dq2 > 0.0 {
                check_min_max([p1, r1, q1], [r2, p2, q2])
            } else if dr2 > 0.0 {
                check_min_max([p1, r1, q1], [q2, r2, p2])
            } else {
                check_min_max([p1, q1, r1], [p2, q2, r2])
            }
        } else if dp2 < 0.0 {
            if dq2 < 0.0 {
                check_min_max([p1, q1, r1], [r2, p2, q2])
            } else if dr2 < 0.0 {
                check_min_max([p1, q1, r1], [q2, r2, p2])
            } else {
                check_min_max([p1, r1, q1], [p2, q2, r2])
            }
        } else if dq2 < 0.0 {
            if dr2 >= 0.0 {
                check_min_max([p1, r1, q1], [q2, r2, p2])
            } else {
                check_min_max([p1, q1, r1], [p2, q2, r2])
            }
        } else if dq2 > 0.0 {
            if dr2 > 0.0 {
                check_min_max([p1, r1, q1], [p2, q2, r2])
            } else {
                check_min_max([p1, q1, r1], [q2, r2, p2])
            }
        } else if dr2 > 0.0 {
            check_min_max([p1, q1, r1], [r2, p2, q2])
        } else if dr2 < 0.0 {
            check_min_max([p1, r1, q1], [r2, p2, q2])
        } else {
            coplanar(self.t1, self.t2)
        }
    }
}

/// Overlap of the two intervals cut from the planes' common line.
fn check_min_max(a: [&P; 3], b: [&P; 3]) -> bool {
    let [p1, q1, r1] = a;
    let [p2, q2, r2] = b;
    if o3(q2, p2, p1, q1) > 0.0 {
        return false;
    }
    o3(r2, p2, r1, p1) <= 0.0
}

fn coplanar(t1: &[P; 3], t2: &[P; 3]) -> bool {
    let n = (t1[1] - t1[0]).cross(&(t1[2] - t1[0]));
    let drop = n.abs().imax();
    let a = t1.map(|p| project(&p, drop));
    let b = t2.map(|p| project(&p, drop));
    triangles_overlap_2d(&a, &b)
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    a[0].min(b[0]) <= p[0] && p[0] <= a[0].max(b[0]) && a[1].min(b[1]) <= p[1] && p[1] <= a[1].max(b[1])
}

fn segments_meet(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = o2(a, b, c);
    let d2 = o2(a, b, d);
    let d3 = o2(c, d, a);
    let d4 = o2(c, d, b);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(a, b, c))
        || (d2 == 0.0 && on_segment(a, b, d))
        || (d3 == 0.0 && on_segment(c, d, a))
        || (d4 == 0.0 && on_segment(c, d, b))
}

fn point_in_triangle(t: &[[f64; 2]; 3], p: [f64; 2]) -> bool {
    let s = [o2(t[0], t[1], p), o2(t[1], t[2], p), o2(t[2], t[0], p)];
    s.iter().all(|&v| v >= 0.0) || s.iter().all(|&v| v <= 0.0)
}

fn triangles_overlap_2d(a: &[[f64; 2]; 3], b: &[[f64; 2]; 3]) -> bool {
    for i in 0..3 {
        for j in 0..3 {
            if segments_meet(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3]) {
                return true;
            }
        }
    }
    point_in_triangle(a, b[0]) || point_in_triangle(b, a[0])
}
