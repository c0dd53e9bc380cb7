//! Planar vector type and polygon helpers.

use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};


#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Counter-clockwise rotation by 90 degrees.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    #[inline]
    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

/// Signed area (positive for counter-clockwise order).
pub fn polygon_area(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    let mut a = 0.0;
    for k in 0..n {
        a += pts[k].cross(pts[(k + 1) % n]);
    }
    0.5 * a
}

/// Signed area and area centroid.
pub fn polygon_area_centroid(pts: &[Vec2]) -> (f64, Vec2) {
    let n = pts.len();
    // shift to the first vertex to limit cancellation
    let o = pts[0];
    let mut a = 0.0;
    let mut c = Vec2::ZERO;
    for k in 0..n {
        let p = pts[k] - o;
        let q = pts[(k + 1) % n] - o;
        let w = p.cross(q);
        a += w;
        c += (p + q) * w;
    }
    let area = 0.5 * a;
    if area == 0.0 {
        return (0.0, o);
    }
    (area, o + c / (6.0 * area))
}

/// Signed area of triangle (a, b, c).
#[inline]
pub fn triangle_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * (b - a).cross(c - a)
}

/// Circumcenter of a non-degenerate triangle.
pub fn circumcenter(a: Vec2, b: Vec2, c: Vec2) -> Vec2 {
    let b = b - a;
    let c = c - a;
    let d = 2.0 * b.cross(c);
    let b2 = b.norm2();
    let c2 = c.norm2();
    a + Vec2::new(c.y * b2 - b.y * c2, b.x * c2 - c.x * b2) / d
}

/// Distance from `p` to the infinite line through `a` and `b`.
pub fn line_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    (d.cross(p - a)).abs() / d.norm()
}

/// Orthogonal projection of `p` on the line through `a` and `b`.
pub fn project_on_line(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let d = b - a;
    a + d * ((p - a).dot(d) / d.norm2())
}

/// Whether a closed polygon is strictly convex and counter-clockwise.
pub fn is_convex_ccw(pts: &[Vec2]) -> bool {
    let n = pts.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|k| {
        let a = pts[k];
        let b = pts[(k + 1) % n];
        let c = pts[(k + 2) % n];
        (b - a).cross(c - b) > 0.0
    })
}
