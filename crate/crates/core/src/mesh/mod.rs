//! Generator point sampling and the clipped Voronoi/Delaunay dual mesh.
//!
//! Mechanical nodes are the Voronoi generators; transport nodes are the
//! vertices of the clipped Voronoi cells. Every interior Voronoi edge is at the
//! same time a mechanical contact facet (between the two generators) and a
//! conduit (between its two end vertices). Cell edges lying on the domain
//! boundary carry boundary conduits only.

mod dual;
mod sampling;

use alloc::format;
use alloc::vec::Vec;


use crate::error::{Error, Result};
use crate::geom::{is_convex_ccw, polygon_area, Vec2};

pub use dual::build_dual_mesh;
pub use sampling::{place_points, sample_generator_points, PlacementRegion, DEFAULT_SATURATION};

/// Convex hole in the domain, optionally remembered as the circle it approximates.
#[derive(Clone, Debug, PartialEq)]
pub struct Hole {
    /// Counter-clockwise vertices.
    pub polygon: Vec<Vec2>,
    pub circle: Option<Circle>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

/// Convex outer polygon with convex holes, extruded by `thickness`.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    outer: Vec<Vec2>,
    holes: Vec<Hole>,
    thickness: f64,
    /// Boundary loops with the material on the left: outer CCW, holes CW.
    loops: Vec<Vec<Vec2>>,
}

impl Domain {
    pub fn new(mut outer: Vec<Vec2>, thickness: f64) -> Result<Self> {
        if !(thickness > 0.0) || !thickness.is_finite() {
            return Err(Error::InvalidDomain(format!("thickness must be positive, got {thickness}")));
        }
        if outer.len() < 3 || outer.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidDomain("outer polygon needs 3 finite vertices".into()));
        }
        if polygon_area(&outer) < 0.0 {
            outer.reverse();
        }
        if !(polygon_area(&outer) > 0.0) {
            return Err(Error::InvalidDomain("outer polygon has zero area".into()));
        }
        if !is_convex_ccw(&outer) {
            return Err(Error::InvalidDomain("outer polygon must be convex".into()));
        }
        let loops = alloc::vec![outer.clone()];
        Ok(Self { outer, holes: Vec::new(), thickness, loops })
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64, thickness: f64) -> Result<Self> {
        Self::new(
            alloc::vec![
                Vec2::new(x0, y0),
                Vec2::new(x1, y0),
                Vec2::new(x1, y1),
                Vec2::new(x0, y1),
            ],
            thickness,
        )
    }

    /// Adds a convex hole given counter-clockwise (or clockwise) vertices.
    pub fn with_hole(self, polygon: Vec<Vec2>) -> Result<Self> {
        self.push_hole(polygon, None)
    }

    /// Adds a circular hole approximated by an inscribed regular polygon.
    pub fn with_circular_hole(self, center: Vec2, radius: f64, segments: usize) -> Result<Self> {
        if !(radius > 0.0) || segments < 3 {
            return Err(Error::InvalidDomain("circular hole needs radius > 0 and >= 3 segments".into()));
        }
        let polygon = (0..segments)
            .map(|k| {
                let a = core::f64::consts::TAU * k as f64 / segments as f64;
                center + Vec2::new(a.cos(), a.sin()) * radius
            })
            .collect();
        self.push_hole(polygon, Some(Circle { center, radius }))
    }

    fn push_hole(mut self, mut polygon: Vec<Vec2>, circle: Option<Circle>) -> Result<Self> {
        if polygon.len() < 3 {
            return Err(Error::InvalidDomain("hole needs at least 3 vertices".into()));
        }
        if polygon_area(&polygon) < 0.0 {
            polygon.reverse();
        }
        if !is_convex_ccw(&polygon) {
            return Err(Error::InvalidDomain("holes must be convex".into()));
        }
        if !polygon.iter().all(|&p| strictly_inside_convex(&self.outer, p)) {
            return Err(Error::InvalidDomain("hole must lie strictly inside the outer polygon".into()));
        }
        if self.holes.iter().any(|h| convex_overlap(&h.polygon, &polygon)) {
            return Err(Error::InvalidDomain("holes overlap".into()));
        }
        let mut lp = polygon.clone();
        lp.reverse();
        self.loops.push(lp);
        self.holes.push(Hole { polygon, circle });
        Ok(self)
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn outer(&self) -> &[Vec2] {
        &self.outer
    }

    pub fn holes(&self) -> &[Hole] {
        &self.holes
    }

    /// Boundary loop `id` (0 = outer, `k + 1` = hole `k`) with the material on the left.
    pub fn boundary_loop(&self, id: usize) -> &[Vec2] {
        &self.loops[id]
    }

    pub fn loop_count(&self) -> usize {
        self.loops.len()
    }

    /// Plane area (outer minus holes).
    pub fn area(&self) -> f64 {
        polygon_area(&self.outer) - self.holes.iter().map(|h| polygon_area(&h.polygon)).sum::<f64>()
    }

    pub fn volume(&self) -> f64 {
        self.area() * self.thickness
    }

    /// Strictly inside the outer polygon and not inside (or on) any hole.
    pub fn contains(&self, p: Vec2) -> bool {
        strictly_inside_convex(&self.outer, p)
            && !self.holes.iter().any(|h| inside_or_on_convex(&h.polygon, p))
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        let mut lo = self.outer[0];
        let mut hi = self.outer[0];
        for p in &self.outer {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bbox();
        lo.dist(hi)
    }
}

fn strictly_inside_convex(poly: &[Vec2], p: Vec2) -> bool {
    let n = poly.len();
    (0..n).all(|k| (poly[(k + 1) % n] - poly[k]).cross(p - poly[k]) > 0.0)
}

fn inside_or_on_convex(poly: &[Vec2], p: Vec2) -> bool {
    let n = poly.len();
    (0..n).all(|k| (poly[(k + 1) % n] - poly[k]).cross(p - poly[k]) >= 0.0)
}

/// Separating-axis test for two convex polygons.
fn convex_overlap(a: &[Vec2], b: &[Vec2]) -> bool {
    for poly in [a, b] {
        let n = poly.len();
        for k in 0..n {
            let axis = (poly[(k + 1) % n] - poly[k]).perp();
            let (amin, amax) = project(a, axis);
            let (bmin, bmax) = project(b, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
    }
    true
}

fn project(poly: &[Vec2], axis: Vec2) -> (f64, f64) {
    poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.dot(axis);
        (lo.min(d), hi.max(d))
    })
}

/// Locally finer spacing inside `r_f`, graded linearly to the base spacing at `r_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradedZone {
    pub center: Vec2,
    pub r_t: f64,
    pub r_f: f64,
    pub fine_lmin: f64,
}

impl GradedZone {
    /// Spacing demanded by this zone given the background spacing `base`.
    pub fn lmin_at(&self, p: Vec2, base: f64) -> f64 {
        let d = p.dist(self.center);
        if d <= self.r_f {
            self.fine_lmin
        } else if d < self.r_t {
            self.fine_lmin + (base - self.fine_lmin) * (d - self.r_f) / (self.r_t - self.r_f)
        } else {
            base
        }
    }
}

/// Minimum generator distance as a function of position.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub base_lmin: f64,
    pub overrides: Vec<GradedZone>,
}

impl DensityField {
    pub fn uniform(lmin: f64) -> Self {
        Self { base_lmin: lmin, overrides: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lmin > 0.0) || !self.base_lmin.is_finite() {
            return Err(Error::InvalidDensity(format!("base_lmin must be positive, got {}", self.base_lmin)));
        }
        for z in &self.overrides {
            if !(z.fine_lmin > 0.0) || z.fine_lmin > self.base_lmin {
                return Err(Error::InvalidDensity(format!(
                    "fine_lmin {} must lie in (0, base_lmin = {}]",
                    z.fine_lmin, self.base_lmin
                )));
            }
            if !(z.r_f >= 0.0) || !(z.r_f < z.r_t) {
                return Err(Error::InvalidDensity(format!("need 0 <= r_f < r_t, got r_f = {}, r_t = {}", z.r_f, z.r_t)));
            }
        }
        Ok(())
    }

    pub fn lmin_at(&self, p: Vec2) -> f64 {
        self.overrides
            .iter()
            .map(|z| z.lmin_at(p, self.base_lmin))
            .fold(self.base_lmin, f64::min)
    }

    pub fn min_lmin(&self) -> f64 {
        self.overrides.iter().map(|z| z.fine_lmin).fold(self.base_lmin, f64::min)
    }
}

/// A Voronoi generator and whether it belongs to the fine physical discretization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Generator {
    pub pos: Vec2,
    pub physical: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MechNode {
    pub pos: Vec2,
    pub physical: bool,
    /// Cell area times thickness.
    pub volume: f64,
    pub centroid: Vec2,
}

/// Where a transport node sits on the domain boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    Edge { loop_id: usize, edge: usize },
    Corner { loop_id: usize, vertex: usize },
}

impl BoundaryTag {
    pub fn loop_id(self) -> usize {
        match self {
            BoundaryTag::Edge { loop_id, .. } | BoundaryTag::Corner { loop_id, .. } => loop_id,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportNode {
    pub pos: Vec2,
    /// Control volume (area times thickness).
    pub volume: f64,
    pub boundary: Option<BoundaryTag>,
}

/// Contact between generators `i < j` across their shared Voronoi facet.
#[derive(Clone, Debug, PartialEq)]
pub struct MechElement {
    pub i: usize,
    pub j: usize,
    /// Distance between the generators.
    pub length: f64,
    /// Facet length times thickness.
    pub area: f64,
    pub centroid: Vec2,
    /// Unit vector from `i` to `j`.
    pub normal: Vec2,
    pub tangent: Vec2,
    /// Index of the conduit running along this facet (always equal to the element index).
    pub conduit: usize,
}

/// Flow channel between transport nodes `p` and `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conduit {
    pub p: usize,
    pub q: usize,
    pub length: f64,
    pub section: f64,
    /// Dual mechanical element; `None` for conduits along the domain boundary.
    pub element: Option<usize>,
    /// Cell owning a boundary conduit.
    pub cell: Option<usize>,
}

/// Part of a cell outline lying on a domain boundary loop, traversed with the material on the left.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub loop_id: usize,
    pub a: Vec2,
    pub b: Vec2,
}

impl BoundaryFace {
    /// Unit normal pointing out of the material.
    pub fn outward_normal(&self) -> Vec2 {
        let d = (self.b - self.a).normalized();
        Vec2::new(d.y, -d.x)
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    pub fn midpoint(&self) -> Vec2 {
        (self.a + self.b) * 0.5
    }
}

/// Voronoi/Delaunay dual discretization of a [`Domain`].
#[derive(Clone, Debug, PartialEq)]
pub struct DualMesh {
    pub thickness: f64,
    pub mech_nodes: Vec<MechNode>,
    pub transport_nodes: Vec<TransportNode>,
    pub elements: Vec<MechElement>,
    /// The first `elements.len()` entries are dual to the element of the same index;
    /// the rest run along the domain boundary.
    pub conduits: Vec<Conduit>,
    pub boundary_faces: Vec<BoundaryFace>,
    /// Cell outlines as counter-clockwise transport node indices.
    pub cells: Vec<Vec<usize>>,
}

/// Facet is the mechanical element; its conduit shares the index.
pub type ElementId = usize;

impl DualMesh {
    pub fn dual_conduits(&self) -> &[Conduit] {
        &self.conduits[..self.elements.len()]
    }

    pub fn boundary_conduits(&self) -> &[Conduit] {
        &self.conduits[self.elements.len()..]
    }

    pub fn mech_dofs(&self) -> usize {
        3 * self.mech_nodes.len()
    }

    pub fn dof_count(&self) -> usize {
        self.mech_dofs() + self.transport_nodes.len()
    }

    pub fn physical_count(&self) -> usize {
        self.mech_nodes.iter().filter(|n| n.physical).count()
    }

    /// Elements incident to every mechanical node.
    pub fn node_elements(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.mech_nodes.len()];
        for (e, el) in self.elements.iter().enumerate() {
            out[el.i].push(e);
            out[el.j].push(e);
        }
        out
    }

    /// Conduits incident to every transport node.
    pub fn node_conduits(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.transport_nodes.len()];
        for (k, c) in self.conduits.iter().enumerate() {
            out[c.p].push(k);
            out[c.q].push(k);
        }
        out
    }

    pub fn generators(&self) -> Vec<Generator> {
        self.mech_nodes.iter().map(|n| Generator { pos: n.pos, physical: n.physical }).collect()
    }

    pub fn nearest_mech_node(&self, p: Vec2) -> Option<usize> {
        nearest(self.mech_nodes.iter().map(|n| n.pos), p)
    }

    /// Checks the geometric invariants of the tessellation against `domain`.
    pub fn check_invariants(&self, domain: &Domain) -> core::result::Result<(), alloc::string::String> {
        let vol = domain.volume();
        let sum_v: f64 = self.mech_nodes.iter().map(|n| n.volume).sum();
        let sum_w: f64 = self.transport_nodes.iter().map(|n| n.volume).sum();
        if ((sum_v - vol) / vol).abs() > 1e-10 {
            return Err(format!("cell volumes sum to {sum_v}, domain volume {vol}"));
        }
        if ((sum_w - vol) / vol).abs() > 1e-10 {
            return Err(format!("control volumes sum to {sum_w}, domain volume {vol}"));
        }
        for (k, n) in self.mech_nodes.iter().enumerate() {
            if !(n.volume > 0.0) {
                return Err(format!("cell {k} has volume {}", n.volume));
            }
        }
        for (k, n) in self.transport_nodes.iter().enumerate() {
            if !(n.volume > 0.0) {
                return Err(format!("control volume {k} is {}", n.volume));
            }
        }
        for (e, el) in self.elements.iter().enumerate() {
            if !(el.length > 0.0 && el.area > 0.0) {
                return Err(format!("element {e} has non-positive measure"));
            }
            let c = &self.conduits[el.conduit];
            if el.conduit != e || c.element != Some(e) {
                return Err(format!("element {e} and conduit {} are not mutually dual", el.conduit));
            }
            let along = (self.transport_nodes[c.q].pos - self.transport_nodes[c.p].pos).normalized();
            if el.normal.dot(along).abs() > 1e-10 {
                return Err(format!("element {e} is not orthogonal to its facet"));
            }
            let ij = (self.mech_nodes[el.j].pos - self.mech_nodes[el.i].pos).normalized();
            if (ij - el.normal).norm() > 1e-12 || el.normal.dot(el.tangent).abs() > 1e-15 {
                return Err(format!("element {e} has an inconsistent local basis"));
            }
        }
        for (k, c) in self.conduits.iter().enumerate() {
            if !(c.length > 0.0 && c.section > 0.0) {
                return Err(format!("conduit {k} has non-positive measure"));
            }
        }
        Ok(())
    }
}

pub(crate) fn nearest(points: impl Iterator<Item = Vec2>, p: Vec2) -> Option<usize> {
    let mut best = None;
    let mut bd = f64::INFINITY;
    for (k, q) in points.enumerate() {
        let d = q.dist(p);
        if d < bd {
            bd = d;
            best = Some(k);
        }
    }
    best
}

/// n = unit vector from `xi` to `xj`; m = n rotated by +90 degrees.
pub fn facet_basis(xi: Vec2, xj: Vec2) -> (Vec2, Vec2) {
    let n = (xj - xi).normalized();
    (n, n.perp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_of_x_axis_pair() {
        let (n, m) = facet_basis(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        assert_eq!(n, Vec2::new(1.0, 0.0));
        assert_eq!(m, Vec2::new(0.0, 1.0));
    }

    #[test]
    fn domain_rejects_bad_input() {
        assert!(Domain::rectangle(0.0, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(Domain::rectangle(0.0, 0.0, 0.0, 1.0, 1.0).is_err());
        let d = Domain::rectangle(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!(d.clone().with_circular_hole(Vec2::new(0.95, 0.5), 0.1, 16).is_err());
        let d = d.with_circular_hole(Vec2::new(0.3, 0.5), 0.1, 16).unwrap();
        assert!(d.clone().with_circular_hole(Vec2::new(0.4, 0.5), 0.1, 16).is_err());
        assert!(d.with_circular_hole(Vec2::new(0.7, 0.5), 0.1, 16).is_ok());
    }

    #[test]
    fn hole_loop_is_clockwise() {
        let d = Domain::rectangle(0.0, 0.0, 1.0, 1.0, 1.0)
            .unwrap()
            .with_circular_hole(Vec2::new(0.5, 0.5), 0.1, 12)
            .unwrap();
        assert!(polygon_area(d.boundary_loop(0)) > 0.0);
        assert!(polygon_area(d.boundary_loop(1)) < 0.0);
        assert!(!d.contains(Vec2::new(0.5, 0.5)));
        assert!(d.contains(Vec2::new(0.2, 0.2)));
    }

    #[test]
    fn grading_midpoint() {
        let z = GradedZone { center: Vec2::ZERO, r_t: 8.0, r_f: 5.0, fine_lmin: 1.0 };
        let field = DensityField { base_lmin: 3.0, overrides: alloc::vec![z] };
        field.validate().unwrap();
        assert_eq!(field.lmin_at(Vec2::new(6.5, 0.0)), 2.0);
        assert_eq!(field.lmin_at(Vec2::new(4.0, 0.0)), 1.0);
        assert_eq!(field.lmin_at(Vec2::new(0.0, 9.0)), 3.0);
    }

    #[test]
    fn density_validation() {
        let bad = DensityField {
            base_lmin: 1.0,
            overrides: alloc::vec![GradedZone { center: Vec2::ZERO, r_t: 1.0, r_f: 2.0, fine_lmin: 0.5 }],
        };
        assert!(bad.validate().is_err());
        let bad = DensityField {
            base_lmin: 1.0,
            overrides: alloc::vec![GradedZone { center: Vec2::ZERO, r_t: 2.0, r_f: 1.0, fine_lmin: 1.5 }],
        };
        assert!(bad.validate().is_err());
    }
}
