use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use delaunator::{next_halfedge, prev_halfedge, triangulate, Point, EMPTY};

use super::{
    BoundaryFace, BoundaryTag, Conduit, Domain, DualMesh, Generator, MechElement, MechNode, TransportNode,
};
use crate::error::{Error, Result};
use crate::geom::{circumcenter, line_distance, polygon_area_centroid, triangle_area, Vec2};

/// Voronoi edge clipped to the domain, parameterized as `origin + t * dir` on `[t0, t1]`.
struct Facet {
    i: usize,
    j: usize,
    origin: Vec2,
    dir: Vec2,
    t0: f64,
    t1: f64,
    /// Delaunay triangle whose circumcenter is the unclipped end.
    v0: Option<usize>,
    v1: Option<usize>,
}

impl Facet {
    fn at(&self, t: f64) -> Vec2 {
        self.origin + self.dir * t
    }
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            self.0[hi] = lo;
        }
    }
}

struct LoopGeom {
    verts: Vec<Vec2>,
    /// Arc length at each vertex.
    cum: Vec<f64>,
    perimeter: f64,
}

impl LoopGeom {
    fn new(verts: &[Vec2]) -> Self {
        let n = verts.len();
        let mut cum = Vec::with_capacity(n);
        let mut s = 0.0;
        for k in 0..n {
            cum.push(s);
            s += verts[k].dist(verts[(k + 1) % n]);
        }
        Self { verts: verts.to_vec(), cum, perimeter: s }
    }

    fn edge_at(&self, s: f64) -> usize {
        let s = s.rem_euclid(self.perimeter);
        match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(k) => k,
            Err(k) => k - 1,
        }
    }
}

#[derive(Clone, Copy)]
struct OnBoundary {
    loop_id: usize,
    arc: f64,
    tag: BoundaryTag,
}

/// Builds the Voronoi/Delaunay dual of `generators` clipped to `domain`.
///
/// Voronoi edges are clipped to the convex outer polygon and have convex holes
/// cut out of them. Facets shorter than the merge tolerance are dropped and
/// their end vertices merged. Cell outlines are closed along the domain
/// boundary, inserting domain corners as transport nodes; every boundary
/// piece of an outline becomes a boundary conduit.
pub fn build_dual_mesh(generators: &[Generator], domain: &Domain) -> Result<DualMesh> {
    let n = generators.len();
    if n < 3 {
        return Err(Error::InsufficientPoints(n));
    }
    for (k, g) in generators.iter().enumerate() {
        if !g.pos.is_finite() || !domain.contains(g.pos) {
            return Err(Error::PointOutside(k));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (generators[a].pos, generators[b].pos);
        p.x.partial_cmp(&q.x).unwrap().then(p.y.partial_cmp(&q.y).unwrap())
    });
    for w in order.windows(2) {
        if generators[w[0]].pos == generators[w[1]].pos {
            return Err(Error::DuplicatePoints(w[0].min(w[1]), w[0].max(w[1])));
        }
    }

    let x: Vec<Vec2> = generators.iter().map(|g| g.pos).collect();
    let pts: Vec<Point> = x.iter().map(|p| Point { x: p.x, y: p.y }).collect();
    let tri = triangulate(&pts);
    if tri.triangles.is_empty() {
        return Err(Error::CollinearPoints);
    }
    let ntri = tri.triangles.len() / 3;
    let cc: Vec<Vec2> = (0..ntri)
        .map(|t| circumcenter(x[tri.triangles[3 * t]], x[tri.triangles[3 * t + 1]], x[tri.triangles[3 * t + 2]]))
        .collect();

    let thickness = domain.thickness();
    let scale = domain.diameter();
    let tol_len = (1e-12 / thickness).max(1e-12 * scale);
    let tol_b = 1e-9 * scale;
    let loops: Vec<LoopGeom> = (0..domain.loop_count()).map(|l| LoopGeom::new(domain.boundary_loop(l))).collect();

    // clip every Voronoi edge
    let mut facets = Vec::new();
    for e in 0..tri.triangles.len() {
        let opp = tri.halfedges[e];
        if opp != EMPTY && opp < e {
            continue;
        }
        let a = tri.triangles[e];
        let b = tri.triangles[next_halfedge(e)];
        let t0 = e / 3;
        let mut f = if opp != EMPTY {
            let t1 = opp / 3;
            Facet { i: a, j: b, origin: cc[t0], dir: cc[t1] - cc[t0], t0: 0.0, t1: 1.0, v0: Some(t0), v1: Some(t1) }
        } else {
            let c = tri.triangles[prev_halfedge(e)];
            let mut out = (x[b] - x[a]).perp();
            if out.dot(x[c] - x[a]) > 0.0 {
                out = -out;
            }
            Facet {
                i: a,
                j: b,
                origin: cc[t0],
                dir: out.normalized() * scale,
                t0: 0.0,
                t1: f64::INFINITY,
                v0: Some(t0),
                v1: None,
            }
        };
        if f.dir.norm() == 0.0 {
            continue;
        }
        if !clip_outer(&mut f, &loops[0].verts) {
            continue;
        }
        let mut alive = true;
        for lp in &loops[1..] {
            if !cut_hole(&mut f, &lp.verts)? {
                alive = false;
                break;
            }
        }
        if !alive || !f.t1.is_finite() {
            if alive {
                return Err(Error::DegenerateMesh("unbounded Voronoi edge".into()));
            }
            continue;
        }
        if f.at(f.t0).dist(f.at(f.t1)) < tol_len {
            continue;
        }
        facets.push(f);
    }

    // raw vertex nodes: circumcenters once each, clipped ends individually
    let mut raw_pos: Vec<Vec2> = Vec::new();
    let mut tri_node = alloc::vec![usize::MAX; ntri];
    let mut ends = Vec::with_capacity(facets.len());
    for f in &facets {
        let mut end = |v: Option<usize>, t: f64| match v {
            Some(tt) => {
                if tri_node[tt] == usize::MAX {
                    tri_node[tt] = raw_pos.len();
                    raw_pos.push(cc[tt]);
                }
                tri_node[tt]
            }
            None => {
                raw_pos.push(f.at(t));
                raw_pos.len() - 1
            }
        };
        let a = end(f.v0, f.t0);
        let b = end(f.v1, f.t1);
        ends.push((a, b));
    }

    // merge coincident vertices
    let mut dsu = DisjointSet((0..raw_pos.len()).collect());
    {
        let cell = 2.0 * tol_len;
        let key = |p: Vec2| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
        let mut buckets: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for (k, &p) in raw_pos.iter().enumerate() {
            let (kx, ky) = key(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(list) = buckets.get(&(kx + dx, ky + dy)) {
                        for &o in list {
                            if raw_pos[o].dist(p) < tol_len {
                                dsu.union(o, k);
                            }
                        }
                    }
                }
            }
            buckets.entry((kx, ky)).or_default().push(k);
        }
    }
    let mut node_pos: Vec<Vec2> = raw_pos.clone();
    let mut node_of: Vec<usize> = (0..raw_pos.len()).map(|k| dsu.find(k)).collect();
    for k in 0..raw_pos.len() {
        node_pos[k] = raw_pos[node_of[k]];
    }

    // boundary membership of merged vertices
    let mut on_boundary: Vec<Option<OnBoundary>> = alloc::vec![None; raw_pos.len()];
    for k in 0..raw_pos.len() {
        if node_of[k] != k {
            continue;
        }
        on_boundary[k] = locate_on_boundary(raw_pos[k], &loops, tol_b);
    }

    // oriented facets per cell, with the cell on the left
    let mut cell_facets: Vec<Vec<(usize, usize, usize)>> = alloc::vec![Vec::new(); n];
    let mut kept = Vec::new();
    for (fi, f) in facets.iter().enumerate() {
        let (a, b) = (node_of[ends[fi].0], node_of[ends[fi].1]);
        if a == b || node_pos[a].dist(node_pos[b]) < tol_len {
            continue;
        }
        let k = kept.len();
        kept.push((fi, a, b));
        if f.dir.cross(x[f.i] - f.origin) > 0.0 {
            cell_facets[f.i].push((a, b, k));
            cell_facets[f.j].push((b, a, k));
        } else {
            cell_facets[f.i].push((b, a, k));
            cell_facets[f.j].push((a, b, k));
        }
    }

    // close each cell outline
    let mut corner_node: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut cells: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut bsegs: Vec<(usize, usize, usize, usize)> = Vec::new(); // (cell, a, b, loop)
    let mut hole_touched = alloc::vec![false; loops.len()];
    for c in 0..n {
        let fs = &cell_facets[c];
        if fs.is_empty() {
            return Err(Error::DegenerateMesh(format!("cell {c} has no facets")));
        }
        let mut visited = alloc::vec![false; fs.len()];
        let mut outline = Vec::new();
        let mut cur = 0;
        let mut steps = 0;
        loop {
            visited[cur] = true;
            let (start, end, _) = fs[cur];
            outline.push(start);
            let next = (0..fs.len()).find(|&g| fs[g].0 == end && (!visited[g] || g == 0));
            let nxt = match next {
                Some(g) => g,
                None => {
                    let Some(ob) = on_boundary[end] else {
                        return Err(Error::DegenerateMesh(format!("cell {c} outline is open")));
                    };
                    let lp = &loops[ob.loop_id];
                    let mut best: Option<(f64, usize)> = None;
                    for (g, &(s, _, _)) in fs.iter().enumerate() {
                        let Some(os) = on_boundary[s] else { continue };
                        if os.loop_id != ob.loop_id || (visited[g] && g != 0) {
                            continue;
                        }
                        let mut d = (os.arc - ob.arc).rem_euclid(lp.perimeter);
                        if d > lp.perimeter - tol_b {
                            d -= lp.perimeter;
                        }
                        if best.map_or(true, |(bd, _)| d < bd) {
                            best = Some((d, g));
                        }
                    }
                    let Some((delta, g)) = best else {
                        return Err(Error::DegenerateMesh(format!("cell {c} outline cannot be closed")));
                    };
                    hole_touched[ob.loop_id] = true;
                    outline.push(end);
                    let mut prev = end;
                    let nv = lp.verts.len();
                    let first = lp.edge_at(ob.arc) + 1;
                    for step in 0..nv {
                        let v = (first + step) % nv;
                        let dv = (lp.cum[v] - ob.arc).rem_euclid(lp.perimeter);
                        if dv >= delta - tol_b {
                            break;
                        }
                        if dv <= tol_b {
                            continue;
                        }
                        let id = *corner_node.entry((ob.loop_id, v)).or_insert_with(|| {
                            node_pos.push(lp.verts[v]);
                            node_of.push(node_pos.len() - 1);
                            on_boundary.push(Some(OnBoundary {
                                loop_id: ob.loop_id,
                                arc: lp.cum[v],
                                tag: BoundaryTag::Corner { loop_id: ob.loop_id, vertex: v },
                            }));
                            node_pos.len() - 1
                        });
                        outline.push(id);
                        bsegs.push((c, prev, id, ob.loop_id));
                        prev = id;
                    }
                    bsegs.push((c, prev, fs[g].0, ob.loop_id));
                    g
                }
            };
            if nxt == 0 {
                break;
            }
            cur = nxt;
            steps += 1;
            if steps > fs.len() {
                return Err(Error::DegenerateMesh(format!("cell {c} outline does not close")));
            }
        }
        if visited.iter().any(|v| !v) {
            return Err(Error::DegenerateMesh(format!("cell {c} outline is not a single loop")));
        }
        cells.push(outline);
    }
    if hole_touched.iter().skip(1).any(|t| !t) {
        return Err(Error::DegenerateMesh("a hole lies inside a single cell".into()));
    }

    // compact transport nodes in order of first use
    let mut new_id = alloc::vec![usize::MAX; node_pos.len()];
    let mut transport_nodes: Vec<TransportNode> = Vec::new();
    let mut remap = |k: usize, transport_nodes: &mut Vec<TransportNode>| {
        if new_id[k] == usize::MAX {
            new_id[k] = transport_nodes.len();
            transport_nodes.push(TransportNode {
                pos: node_pos[k],
                volume: 0.0,
                boundary: on_boundary[k].map(|b| b.tag),
            });
        }
        new_id[k]
    };
    let kept: Vec<(usize, usize, usize)> =
        kept.into_iter().map(|(fi, a, b)| (fi, remap(a, &mut transport_nodes), remap(b, &mut transport_nodes))).collect();
    for outline in &mut cells {
        for k in outline.iter_mut() {
            *k = remap(*k, &mut transport_nodes);
        }
    }
    let bsegs: Vec<(usize, usize, usize, usize)> = bsegs
        .into_iter()
        .map(|(c, a, b, l)| (c, remap(a, &mut transport_nodes), remap(b, &mut transport_nodes), l))
        .collect();

    let mut mech_nodes = Vec::with_capacity(n);
    for (c, outline) in cells.iter().enumerate() {
        let poly: Vec<Vec2> = outline.iter().map(|&k| transport_nodes[k].pos).collect();
        let (area, centroid) = polygon_area_centroid(&poly);
        if !(area > 0.0) {
            return Err(Error::DegenerateMesh(format!("cell {c} has area {area}")));
        }
        mech_nodes.push(MechNode { pos: x[c], physical: generators[c].physical, volume: area * thickness, centroid });
    }

    let mut elements = Vec::with_capacity(kept.len());
    let mut conduits = Vec::with_capacity(kept.len() + bsegs.len());
    for (k, &(fi, p, q)) in kept.iter().enumerate() {
        let f = &facets[fi];
        let (i, j) = if f.i < f.j { (f.i, f.j) } else { (f.j, f.i) };
        let (pp, pq) = (transport_nodes[p].pos, transport_nodes[q].pos);
        let h = pp.dist(pq);
        let l = x[i].dist(x[j]);
        let normal = (x[j] - x[i]) / l;
        elements.push(MechElement {
            i,
            j,
            length: l,
            area: h * thickness,
            centroid: (pp + pq) * 0.5,
            normal,
            tangent: normal.perp(),
            conduit: k,
        });
        conduits.push(Conduit { p, q, length: h, section: l * thickness, element: Some(k), cell: None });

        let kite = (triangle_area(x[i], pp, pq).abs() + triangle_area(x[j], pp, pq).abs()) * thickness;
        let mut share_p = 0.5;
        if f.v0.is_some() && f.v1.is_some() {
            let mid = (x[i] + x[j]) * 0.5;
            let s = (mid - pp).dot(pq - pp) / (h * h);
            if (0.0..=1.0).contains(&s) {
                share_p = s;
            }
        }
        transport_nodes[p].volume += kite * share_p;
        transport_nodes[q].volume += kite * (1.0 - share_p);
    }

    let mut boundary_faces = Vec::with_capacity(bsegs.len());
    for &(c, a, b, loop_id) in &bsegs {
        let (pa, pb) = (transport_nodes[a].pos, transport_nodes[b].pos);
        let len = pa.dist(pb);
        if len < tol_len {
            continue;
        }
        let lp = &loops[loop_id];
        let mid = (pa + pb) * 0.5;
        let edge = nearest_edge(lp, mid);
        let (ea, eb) = (lp.verts[edge], lp.verts[(edge + 1) % lp.verts.len()]);
        let dist = line_distance(x[c], ea, eb);
        conduits.push(Conduit { p: a, q: b, length: len, section: dist * thickness, element: None, cell: Some(c) });
        let fan = triangle_area(x[c], pa, pb).abs() * thickness;
        transport_nodes[a].volume += 0.5 * fan;
        transport_nodes[b].volume += 0.5 * fan;
        boundary_faces.push(BoundaryFace { cell: c, loop_id, a: pa, b: pb });
    }

    Ok(DualMesh { thickness, mech_nodes, transport_nodes, elements, conduits, boundary_faces, cells })
}

/// Cyrus-Beck clip against a convex counter-clockwise polygon.
fn clip_outer(f: &mut Facet, poly: &[Vec2]) -> bool {
    let n = poly.len();
    for k in 0..n {
        let e = poly[(k + 1) % n] - poly[k];
        let f0 = e.cross(f.origin - poly[k]);
        let fd = e.cross(f.dir);
        if fd == 0.0 {
            if f0 < 0.0 {
                return false;
            }
            continue;
        }
        let t = -f0 / fd;
        if fd > 0.0 {
            if t > f.t0 {
                f.t0 = t;
                f.v0 = None;
            }
        } else if t < f.t1 {
            f.t1 = t;
            f.v1 = None;
        }
    }
    f.t0 < f.t1
}

/// Removes the part of the facet inside a convex hole given as a clockwise loop.
///
/// Returns `false` if nothing is left.
fn cut_hole(f: &mut Facet, lp: &[Vec2]) -> Result<bool> {
    let n = lp.len();
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..n {
        let e = lp[(k + 1) % n] - lp[k];
        let f0 = e.cross(f.origin - lp[k]);
        let fd = e.cross(f.dir);
        if fd == 0.0 {
            if f0 > 0.0 {
                return Ok(true);
            }
            continue;
        }
        let t = -f0 / fd;
        if fd > 0.0 {
            b = b.min(t);
        } else {
            a = a.max(t);
        }
    }
    if !(a < b) || b <= f.t0 || a >= f.t1 {
        return Ok(true);
    }
    if a <= f.t0 && b >= f.t1 {
        return Ok(false);
    }
    if a > f.t0 && b < f.t1 {
        return Err(Error::DegenerateMesh("a Voronoi edge passes through a hole".into()));
    }
    if a <= f.t0 {
        f.t0 = b;
        f.v0 = None;
    } else {
        f.t1 = a;
        f.v1 = None;
    }
    Ok(true)
}

fn locate_on_boundary(p: Vec2, loops: &[LoopGeom], tol: f64) -> Option<OnBoundary> {
    for (l, lp) in loops.iter().enumerate() {
        let n = lp.verts.len();
        for k in 0..n {
            if p.dist(lp.verts[k]) <= tol {
                return Some(OnBoundary {
                    loop_id: l,
                    arc: lp.cum[k],
                    tag: BoundaryTag::Corner { loop_id: l, vertex: k },
                });
            }
        }
        for k in 0..n {
            let (a, b) = (lp.verts[k], lp.verts[(k + 1) % n]);
            let d = b - a;
            let s = (p - a).dot(d) / d.norm2();
            if (0.0..=1.0).contains(&s) && line_distance(p, a, b) <= tol {
                return Some(OnBoundary {
                    loop_id: l,
                    arc: lp.cum[k] + s * d.norm(),
                    tag: BoundaryTag::Edge { loop_id: l, edge: k },
                });
            }
        }
    }
    None
}

fn nearest_edge(lp: &LoopGeom, p: Vec2) -> usize {
    let n = lp.verts.len();
    (0..n)
        .min_by(|&a, &b| {
            let da = seg_dist(p, lp.verts[a], lp.verts[(a + 1) % n]);
            let db = seg_dist(p, lp.verts[b], lp.verts[(b + 1) % n]);
            da.partial_cmp(&db).unwrap()
        })
        .unwrap()
}

fn seg_dist(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let s = ((p - a).dot(d) / d.norm2()).clamp(0.0, 1.0);
    p.dist(a + d * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{sample_generator_points, DensityField};

    fn gens(pts: &[(f64, f64)]) -> Vec<Generator> {
        pts.iter().map(|&(x, y)| Generator { pos: Vec2::new(x, y), physical: false }).collect()
    }

    #[test]
    fn too_few_points() {
        let d = Domain::rectangle(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(build_dual_mesh(&gens(&[(0.2, 0.2), (0.7, 0.6)]), &d), Err(Error::InsufficientPoints(2)));
    }

    #[test]
    fn collinear_points() {
        let d = Domain::rectangle(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let r = build_dual_mesh(&gens(&[(0.2, 0.2), (0.4, 0.4), (0.6, 0.6)]), &d);
        assert_eq!(r, Err(Error::CollinearPoints));
    }

    #[test]
    fn outside_and_duplicate_points() {
        let d = Domain::rectangle(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let r = build_dual_mesh(&gens(&[(0.2, 0.2), (1.4, 0.4), (0.6, 0.6)]), &d);
        assert_eq!(r, Err(Error::PointOutside(1)));
        let r = build_dual_mesh(&gens(&[(0.2, 0.2), (0.6, 0.6), (0.5, 0.1), (0.6, 0.6)]), &d);
        assert_eq!(r, Err(Error::DuplicatePoints(1, 3)));
    }

    #[test]
    fn cocircular_square_has_single_center_vertex() {
        let d = Domain::rectangle(0.0, 0.0, 2.0, 2.0, 1.0).unwrap();
        let m = build_dual_mesh(&gens(&[(0.5, 0.5), (1.5, 0.5), (1.5, 1.5), (0.5, 1.5)]), &d).unwrap();
        // the diagonal's dual facet has zero length
        assert_eq!(m.elements.len(), 4);
        let centers = m.transport_nodes.iter().filter(|t| t.pos.dist(Vec2::new(1.0, 1.0)) < 1e-12).count();
        assert_eq!(centers, 1);
        for el in &m.elements {
            assert!((el.area - 1.0).abs() < 1e-12);
            assert!((el.length - 1.0).abs() < 1e-12);
        }
        for node in &m.mech_nodes {
            assert!((node.volume - 1.0).abs() < 1e-12);
        }
        // 4 corners + centre + 4 edge midpoints
        assert_eq!(m.transport_nodes.len(), 9);
        m.check_invariants(&d).unwrap();
    }

    #[test]
    fn random_square_mesh_invariants() {
        let d = Domain::rectangle(0.0, 0.0, 1.0, 1.0, 0.5).unwrap();
        let pts = sample_generator_points(&d, &DensityField::uniform(0.08), 11, 500).unwrap();
        let g: Vec<_> = pts.iter().map(|&p| Generator { pos: p, physical: false }).collect();
        let m = build_dual_mesh(&g, &d).unwrap();
        m.check_invariants(&d).unwrap();
        let inc = m.node_conduits();
        for (k, t) in m.transport_nodes.iter().enumerate() {
            if t.boundary.is_none() {
                assert_eq!(inc[k].len(), 3, "interior node {k}");
            }
        }
        let corners = m.transport_nodes.iter().filter(|t| matches!(t.boundary, Some(BoundaryTag::Corner { .. }))).count();
        assert_eq!(corners, 4);
    }

    #[test]
    fn mesh_with_holes_invariants() {
        let d = Domain::rectangle(0.0, 0.0, 1.0, 1.0, 1.0)
            .unwrap()
            .with_circular_hole(Vec2::new(0.3, 0.3), 0.1, 40)
            .unwrap()
            .with_circular_hole(Vec2::new(0.7, 0.65), 0.12, 40)
            .unwrap();
        let pts = sample_generator_points(&d, &DensityField::uniform(0.04), 5, 500).unwrap();
        let g: Vec<_> = pts.iter().map(|&p| Generator { pos: p, physical: false }).collect();
        let m = build_dual_mesh(&g, &d).unwrap();
        m.check_invariants(&d).unwrap();
        let hole_len: f64 = m.boundary_faces.iter().filter(|f| f.loop_id == 1).map(|f| f.length()).sum();
        let perim = 40.0 * 2.0 * 0.1 * (core::f64::consts::PI / 40.0).sin();
        assert!((hole_len - perim).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn random_meshes_tile_the_domain(seed in 0u64..200, lmin in 0.04f64..0.2, w in 0.5f64..2.0) {
            let d = Domain::rectangle(0.0, 0.0, w, 1.0, 0.3).unwrap();
            let pts = sample_generator_points(&d, &DensityField::uniform(lmin), seed, 200).unwrap();
            proptest::prop_assume!(pts.len() >= 3);
            let g: Vec<_> = pts.iter().map(|&p| Generator { pos: p, physical: true }).collect();
            let m = build_dual_mesh(&g, &d).unwrap();
            m.check_invariants(&d).unwrap();
            let vol: f64 = m.mech_nodes.iter().map(|n| n.volume).sum();
            proptest::prop_assert!((vol - w * 0.3).abs() < 1e-12 * w);
            proptest::prop_assert!(m.elements.iter().all(|e| e.area > 0.0 && e.length > 0.0));
        }
    }

    #[test]
    fn mesh_is_deterministic() {
        let d = Domain::rectangle(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let pts = sample_generator_points(&d, &DensityField::uniform(0.1), 2, 500).unwrap();
        let g: Vec<_> = pts.iter().map(|&p| Generator { pos: p, physical: false }).collect();
        assert_eq!(build_dual_mesh(&g, &d).unwrap(), build_dual_mesh(&g, &d).unwrap());
    }
}
