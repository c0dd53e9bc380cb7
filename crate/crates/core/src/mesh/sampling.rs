use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{Circle, DensityField, Domain};
use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Consecutive rejections after which dart throwing stops.
pub const DEFAULT_SATURATION: usize = 500;

/// Where new points may be placed.
#[derive(Clone, Debug, PartialEq)]
pub enum PlacementRegion {
    Everywhere,
    /// Union of disks.
    Disks(Vec<Circle>),
    /// Union of `outer` disks minus the union of `inner` disks.
    Annuli { outer: Vec<Circle>, inner: Vec<Circle> },
}

impl PlacementRegion {
    fn contains(&self, p: Vec2) -> bool {
        match self {
            PlacementRegion::Everywhere => true,
            PlacementRegion::Disks(ds) => ds.iter().any(|c| p.dist(c.center) <= c.radius),
            PlacementRegion::Annuli { outer, inner } => {
                outer.iter().any(|c| p.dist(c.center) <= c.radius) && !inner.iter().any(|c| p.dist(c.center) < c.radius)
            }
        }
    }

    fn bbox(&self, domain: &Domain) -> Option<(Vec2, Vec2)> {
        let (lo, hi) = domain.bbox();
        match self {
            PlacementRegion::Everywhere => Some((lo, hi)),
            PlacementRegion::Disks(ds) | PlacementRegion::Annuli { outer: ds, .. } => {
                let mut a = Vec2::new(f64::INFINITY, f64::INFINITY);
                let mut b = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for c in ds {
                    a = Vec2::new(a.x.min(c.center.x - c.radius), a.y.min(c.center.y - c.radius));
                    b = Vec2::new(b.x.max(c.center.x + c.radius), b.y.max(c.center.y + c.radius));
                }
                let a = Vec2::new(a.x.max(lo.x), a.y.max(lo.y));
                let b = Vec2::new(b.x.min(hi.x), b.y.min(hi.y));
                (a.x < b.x && a.y < b.y).then_some((a, b))
            }
        }
    }
}

/// Uniform bucket grid over the domain bounding box.
struct PointGrid {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    points: Vec<Vec2>,
}

impl PointGrid {
    fn new(domain: &Domain, spacing: f64) -> Self {
        let (lo, hi) = domain.bbox();
        let cell = spacing.max(domain.diameter() / 2048.0);
        let nx = (((hi.x - lo.x) / cell).ceil() as usize).max(1);
        let ny = (((hi.y - lo.y) / cell).ceil() as usize).max(1);
        Self { origin: lo, cell, nx, ny, buckets: alloc::vec![Vec::new(); nx * ny], points: Vec::new() }
    }

    fn coords(&self, p: Vec2) -> (usize, usize) {
        let ix = ((p.x - self.origin.x) / self.cell).floor().max(0.0) as usize;
        let iy = ((p.y - self.origin.y) / self.cell).floor().max(0.0) as usize;
        (ix.min(self.nx - 1), iy.min(self.ny - 1))
    }

    fn insert(&mut self, p: Vec2) {
        let (ix, iy) = self.coords(p);
        self.buckets[iy * self.nx + ix].push(self.points.len() as u32);
        self.points.push(p);
    }

    /// No stored point lies closer than `r` to `p`.
    fn is_clear(&self, p: Vec2, r: f64) -> bool {
        let reach = (r / self.cell).ceil() as isize;
        let (cx, cy) = self.coords(p);
        let r2 = r * r;
        for iy in (cy as isize - reach).max(0)..=(cy as isize + reach).min(self.ny as isize - 1) {
            for ix in (cx as isize - reach).max(0)..=(cx as isize + reach).min(self.nx as isize - 1) {
                for &k in &self.buckets[iy as usize * self.nx + ix as usize] {
                    if (self.points[k as usize] - p).norm2() < r2 {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Dart-throwing sample of the whole domain.
///
/// Circular holes first receive a ring of points at half the local spacing
/// outside the circle, then random darts fill the rest until `saturation`
/// consecutive candidates have been rejected.
pub fn sample_generator_points(
    domain: &Domain,
    density: &DensityField,
    seed: u64,
    saturation: usize,
) -> Result<Vec<Vec2>> {
    place_points(domain, density, &[], &PlacementRegion::Everywhere, seed, saturation)
}

/// Adds points inside `region` respecting the spacing to `existing` and to each other.
///
/// Returns the new points only.
pub fn place_points(
    domain: &Domain,
    density: &DensityField,
    existing: &[Vec2],
    region: &PlacementRegion,
    seed: u64,
    saturation: usize,
) -> Result<Vec<Vec2>> {
    density.validate()?;
    if saturation == 0 {
        return Err(Error::ZeroBudget);
    }
    let mut grid = PointGrid::new(domain, density.min_lmin());
    for &p in existing {
        grid.insert(p);
    }
    let first_new = grid.points.len();
    // exact-spacing ring points must not be rejected by rounding
    let slack = 1.0 - 1e-9;

    for hole in domain.holes() {
        let Some(circle) = hole.circle else { continue };
        for p in ring_points(circle, density) {
            if domain.contains(p) && region.contains(p) && grid.is_clear(p, density.lmin_at(p) * slack) {
                grid.insert(p);
            }
        }
    }

    if let Some((lo, hi)) = region.bbox(domain) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let span = hi - lo;
        let mut misses = 0;
        while misses < saturation {
            let p = Vec2::new(lo.x + span.x * unit(&mut rng), lo.y + span.y * unit(&mut rng));
            if domain.contains(p) && region.contains(p) && grid.is_clear(p, density.lmin_at(p)) {
                grid.insert(p);
                misses = 0;
            } else {
                misses += 1;
            }
        }
    }
    Ok(grid.points.split_off(first_new))
}

/// Points around a circle at radius R + lmin/2 with chord spacing of at least the local lmin.
fn ring_points(circle: Circle, density: &DensityField) -> Vec<Vec2> {
    let tau = core::f64::consts::TAU;
    let at = |phi: f64| Vec2::new(phi.cos(), phi.sin());
    let step = |phi: f64| {
        let lmin = density.lmin_at(circle.center + at(phi) * circle.radius);
        let rho = circle.radius + 0.5 * lmin;
        let half = (lmin / (2.0 * rho)).min(1.0);
        (rho, 2.0 * half.asin())
    };
    let mut angles = Vec::new();
    let mut phi = 0.0;
    loop {
        let (_, d) = step(phi);
        if phi + d > tau + 1e-12 {
            break;
        }
        angles.push(phi);
        phi += d;
    }
    if angles.len() < 3 {
        return Vec::new();
    }
    // stretch so the ring closes with no short last gap
    let stretch = tau / phi;
    angles
        .into_iter()
        .map(|a| {
            let a = a * stretch;
            let (rho, _) = step(a);
            circle.center + at(a) * rho
        })
        .collect()
}
