//! Rigid-body kinematics, Biot coupling and the discrete balance equations.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::materials::{crack_opening, ContactParams, ContactState, Materials, Traction};
use crate::mesh::DualMesh;

/// Small rotation `theta` acting on lever arm `r`.
#[inline]
pub fn rot(theta: f64, r: Vec2) -> Vec2 {
    Vec2::new(-theta * r.y, theta * r.x)
}

/// Relative displacement of J with respect to I at facet point `c`.
pub fn displacement_jump(u_i: Vec2, th_i: f64, x_i: Vec2, u_j: Vec2, th_j: f64, x_j: Vec2, c: Vec2) -> Vec2 {
    (u_j + rot(th_j, c - x_j)) - (u_i + rot(th_i, c - x_i))
}

/// Normal and tangential strain of a jump over a contact of length `l`.
pub fn facet_strain(jump: Vec2, l: f64, n: Vec2, m: Vec2) -> (f64, f64) {
    (jump.dot(n) / l, jump.dot(m) / l)
}

pub fn pressure_gradient(p_p: f64, p_q: f64, h: f64) -> f64 {
    (p_q - p_p) / h
}

/// Mean pressure of the two end vertices of the element's facet.
pub fn facet_pressure(mesh: &DualMesh, element: usize, p: &[f64]) -> f64 {
    let c = &mesh.conduits[mesh.elements[element].conduit];
    0.5 * (p[c.p] + p[c.q])
}

/// Solid traction reduced by the pore pressure in the normal direction.
pub fn total_traction(s: Traction, p_facet: f64, biot: f64) -> Traction {
    Traction { n: s.n - biot * p_facet, m: s.m }
}

/// Strain rows of an element: `e = rg * [u_I, v_I, θ_I, u_J, v_J, θ_J] / l`.
pub fn element_rg(mesh: &DualMesh, e: usize) -> [[f64; 6]; 2] {
    let el = &mesh.elements[e];
    let ri = el.centroid - mesh.mech_nodes[el.i].pos;
    let rj = el.centroid - mesh.mech_nodes[el.j].pos;
    let row = |d: Vec2| {
        [-d.x, -d.y, -(d.y * ri.x - d.x * ri.y), d.x, d.y, d.y * rj.x - d.x * rj.y]
    };
    [row(el.normal), row(el.tangent)]
}

/// Relative stiffness of the rotational spring on lone contacts.
pub const LONE_CONTACT_SPRING: f64 = 1e-6;

/// Elements that are the only contact of one of their particles, with the stiffness of the
/// rotational spring that removes the particle's free rotation about the facet centroid.
pub fn lone_contacts(mesh: &DualMesh, e0: f64) -> Vec<(usize, f64)> {
    let mut count = alloc::vec![0usize; mesh.mech_nodes.len()];
    for el in &mesh.elements {
        count[el.i] += 1;
        count[el.j] += 1;
    }
    mesh.elements
        .iter()
        .enumerate()
        .filter(|(_, el)| count[el.i] == 1 || count[el.j] == 1)
        .map(|(e, el)| (e, LONE_CONTACT_SPRING * e0 * el.area * el.length))
        .collect()
}

/// Unknowns of the coupled problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub u: Vec<Vec2>,
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub contacts: Vec<ContactState>,
    pub load_factor: f64,
    /// Value of the controlled variable (load factor, opening or steel loss).
    pub control_value: f64,
    /// Corrosion products carried away so far, per unit interface area (m).
    pub flow_volume: f64,
}

impl SystemState {
    pub fn zeros(mesh: &DualMesh) -> Self {
        Self {
            u: alloc::vec![Vec2::ZERO; mesh.mech_nodes.len()],
            theta: alloc::vec![0.0; mesh.mech_nodes.len()],
            p: alloc::vec![0.0; mesh.transport_nodes.len()],
            contacts: alloc::vec![ContactState::default(); mesh.elements.len()],
            load_factor: 0.0,
            control_value: 0.0,
            flow_volume: 0.0,
        }
    }

    pub fn mech_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.u.len());
        for (u, t) in self.u.iter().zip(&self.theta) {
            v.extend_from_slice(&[u.x, u.y, *t]);
        }
        v
    }

    pub fn set_mech_vector(&mut self, v: &[f64]) {
        for k in 0..self.u.len() {
            self.u[k] = Vec2::new(v[3 * k], v[3 * k + 1]);
            self.theta[k] = v[3 * k + 2];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|u| u.is_finite())
            && self.theta.iter().all(|t| t.is_finite())
            && self.p.iter().all(|p| p.is_finite())
            && self.load_factor.is_finite()
    }

    /// FNV-1a hash over the bit patterns of every field.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for u in &self.u {
            eat(u.x);
            eat(u.y);
        }
        self.theta.iter().for_each(|&t| eat(t));
        self.p.iter().for_each(|&p| eat(p));
        for c in &self.contacts {
            eat(c.d);
            eat(c.max_en);
            eat(c.max_et);
        }
        eat(self.load_factor);
        eat(self.control_value);
        eat(self.flow_volume);
        h
    }

    pub fn strain(&self, mesh: &DualMesh, e: usize) -> (f64, f64) {
        let el = &mesh.elements[e];
        let (xi, xj) = (mesh.mech_nodes[el.i].pos, mesh.mech_nodes[el.j].pos);
        let jump = displacement_jump(self.u[el.i], self.theta[el.i], xi, self.u[el.j], self.theta[el.j], xj, el.centroid);
        facet_strain(jump, el.length, el.normal, el.tangent)
    }

    /// Normal crack opening of element `e` with damage `d`.
    pub fn crack_opening(&self, mesh: &DualMesh, e: usize, d: f64) -> f64 {
        crack_opening(d, self.strain(mesh, e).0, mesh.elements[e].length)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Geometric node predicate; re-evaluated on every new mesh.
#[derive(Clone, Debug, PartialEq)]
pub enum Selector {
    All,
    /// Nodes with `|coordinate - value| <= tol`.
    Band { axis: Axis, value: f64, tol: f64 },
    /// Nodes in the closed box.
    Box { lo: Vec2, hi: Vec2 },
    /// The single node closest to a point.
    Nearest(Vec2),
    /// Transport nodes on a boundary loop (mechanical nodes whose cell touches it).
    Loop(usize),
}

impl Selector {
    fn hits(&self, p: Vec2) -> bool {
        match *self {
            Selector::All => true,
            Selector::Band { axis: Axis::X, value, tol } => (p.x - value).abs() <= tol,
            Selector::Band { axis: Axis::Y, value, tol } => (p.y - value).abs() <= tol,
            Selector::Box { lo, hi } => p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y,
            Selector::Nearest(_) | Selector::Loop(_) => false,
        }
    }

    pub fn mech_nodes(&self, mesh: &DualMesh) -> Vec<usize> {
        match *self {
            Selector::Nearest(p) => mesh.nearest_mech_node(p).into_iter().collect(),
            Selector::Loop(l) => {
                let mut v: Vec<usize> =
                    mesh.boundary_faces.iter().filter(|f| f.loop_id == l).map(|f| f.cell).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
            _ => (0..mesh.mech_nodes.len()).filter(|&k| self.hits(mesh.mech_nodes[k].pos)).collect(),
        }
    }

    pub fn transport_nodes(&self, mesh: &DualMesh) -> Vec<usize> {
        match *self {
            Selector::Nearest(p) => crate::mesh::nearest(mesh.transport_nodes.iter().map(|t| t.pos), p)
                .into_iter()
                .collect(),
            Selector::Loop(l) => (0..mesh.transport_nodes.len())
                .filter(|&k| mesh.transport_nodes[k].boundary.is_some_and(|b| b.loop_id() == l))
                .collect(),
            _ => (0..mesh.transport_nodes.len()).filter(|&k| self.hits(mesh.transport_nodes[k].pos)).collect(),
        }
    }

    fn describe(&self) -> String {
        format!("{self:?}")
    }
}

/// Component of a mechanical node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Ux = 0,
    Uy = 1,
    Theta = 2,
}

/// Value `fixed + load_factor * scaled`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Amount {
    pub fixed: f64,
    pub scaled: f64,
}

impl Amount {
    pub fn fixed(v: f64) -> Self {
        Self { fixed: v, scaled: 0.0 }
    }

    pub fn scaled(v: f64) -> Self {
        Self { fixed: 0.0, scaled: v }
    }

    pub fn at(&self, load_factor: f64) -> f64 {
        self.fixed + load_factor * self.scaled
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MechDirichlet {
    pub selector: Selector,
    pub component: Component,
    pub value: Amount,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PressureDirichlet {
    pub selector: Selector,
    pub value: Amount,
}

/// Force applied to every selected node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalForce {
    pub selector: Selector,
    pub fx: Amount,
    pub fy: Amount,
}

/// Pressure acting on the material along a boundary loop.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPressure {
    pub loop_id: usize,
    pub value: Amount,
}

/// Boundary conditions and loads, all defined geometrically.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadCase {
    pub mech_dirichlet: Vec<MechDirichlet>,
    pub pressure_dirichlet: Vec<PressureDirichlet>,
    pub nodal_forces: Vec<NodalForce>,
    pub boundary_pressures: Vec<BoundaryPressure>,
    pub body_force: Vec2,
    pub body_couple: f64,
    pub source: f64,
}

/// A [`LoadCase`] evaluated on one mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedLoads {
    /// (dof, value) in the 3-per-node mechanical numbering, sorted by dof.
    pub mech_fixed: Vec<(usize, Amount)>,
    pub pressure_fixed: Vec<(usize, Amount)>,
    pub force_fixed: Vec<f64>,
    pub force_scaled: Vec<f64>,
    pub mass_source: Vec<f64>,
}

impl LoadCase {
    pub fn resolve(&self, mesh: &DualMesh) -> Result<ResolvedLoads> {
        let nm = mesh.mech_nodes.len();
        let mut mech_fixed = Vec::new();
        for bc in &self.mech_dirichlet {
            let nodes = bc.selector.mech_nodes(mesh);
            if nodes.is_empty() {
                return Err(Error::EmptySelector(bc.selector.describe()));
            }
            mech_fixed.extend(nodes.into_iter().map(|k| (3 * k + bc.component as usize, bc.value)));
        }
        let mut pressure_fixed = Vec::new();
        for bc in &self.pressure_dirichlet {
            let nodes = bc.selector.transport_nodes(mesh);
            if nodes.is_empty() {
                return Err(Error::EmptySelector(bc.selector.describe()));
            }
            pressure_fixed.extend(nodes.into_iter().map(|k| (k, bc.value)));
        }
        // the first condition on a dof wins
        for list in [&mut mech_fixed, &mut pressure_fixed] {
            list.sort_by_key(|e| e.0);
            list.dedup_by_key(|e| e.0);
        }

        let mut force_fixed = alloc::vec![0.0; 3 * nm];
        let mut force_scaled = alloc::vec![0.0; 3 * nm];
        for f in &self.nodal_forces {
            let nodes = f.selector.mech_nodes(mesh);
            if nodes.is_empty() {
                return Err(Error::EmptySelector(f.selector.describe()));
            }
            for k in nodes {
                force_fixed[3 * k] += f.fx.fixed;
                force_fixed[3 * k + 1] += f.fy.fixed;
                force_scaled[3 * k] += f.fx.scaled;
                force_scaled[3 * k + 1] += f.fy.scaled;
            }
        }
        for bp in &self.boundary_pressures {
            let mut any = false;
            for face in mesh.boundary_faces.iter().filter(|f| f.loop_id == bp.loop_id) {
                any = true;
                let k = face.cell;
                let dir = -face.outward_normal() * (face.length() * mesh.thickness);
                let mom = (face.midpoint() - mesh.mech_nodes[k].pos).cross(dir);
                for (target, v) in [(&mut force_fixed, bp.value.fixed), (&mut force_scaled, bp.value.scaled)] {
                    target[3 * k] += v * dir.x;
                    target[3 * k + 1] += v * dir.y;
                    target[3 * k + 2] += v * mom;
                }
            }
            if !any {
                return Err(Error::EmptySelector(format!("boundary loop {}", bp.loop_id)));
            }
        }
        for (k, node) in mesh.mech_nodes.iter().enumerate() {
            let f = self.body_force * node.volume;
            force_fixed[3 * k] += f.x;
            force_fixed[3 * k + 1] += f.y;
            force_fixed[3 * k + 2] += node.volume * self.body_couple + (node.centroid - node.pos).cross(f);
        }
        let mass_source = mesh.transport_nodes.iter().map(|t| t.volume * self.source).collect();
        Ok(ResolvedLoads { mech_fixed, pressure_fixed, force_fixed, force_scaled, mass_source })
    }
}

/// Per-element contact parameters, in element order.
///
/// Contacts with a non-physical end stay elastic.
pub fn contact_params(mesh: &DualMesh, mats: &Materials) -> Result<Vec<ContactParams>> {
    mesh.elements
        .iter()
        .map(|el| {
            let mut p = mats.mech.contact_params(el.length)?;
            p.elastic = !(mesh.mech_nodes[el.i].physical && mesh.mech_nodes[el.j].physical);
            Ok(p)
        })
        .collect()
}

/// Permeability of every conduit given the damage of the dual elements.
pub fn conduit_lambdas(mesh: &DualMesh, mats: &Materials, state: &SystemState, damage: &[f64]) -> Vec<f64> {
    mesh.conduits
        .iter()
        .map(|c| {
            let w = c.element.map_or(0.0, |e| state.crack_opening(mesh, e, damage[e]));
            mats.transport.conduit_permeability(w, c.section)
        })
        .collect()
}

/// Out-of-balance generalized forces and net mass inflow.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    /// (force x, force y, moment) per mechanical node.
    pub mech: Vec<f64>,
    pub mass: Vec<f64>,
}

/// Unconstrained residuals: applied plus contact forces, and conduit inflow plus sources.
///
/// Contact tractions are evaluated from the damage law starting at the stored contact states.
pub fn raw_residuals(
    mesh: &DualMesh,
    state: &SystemState,
    mats: &Materials,
    params: &[ContactParams],
    loads: &ResolvedLoads,
) -> Result<Residuals> {
    if !state.is_finite() {
        return Err(Error::NonFinite("state"));
    }
    let mu = state.load_factor;
    let mut mech: Vec<f64> = loads.force_fixed.iter().zip(&loads.force_scaled).map(|(f, s)| f + mu * s).collect();
    let mut damage = Vec::with_capacity(mesh.elements.len());
    for (e, el) in mesh.elements.iter().enumerate() {
        let (en, em) = state.strain(mesh, e);
        let (s, st) = mats.mech.update_contact(&params[e], &state.contacts[e], en, em);
        damage.push(st.d);
        let t = total_traction(s, facet_pressure(mesh, e, &state.p), mats.biot);
        let f = (el.normal * t.n + el.tangent * t.m) * el.area;
        let mi = (el.centroid - mesh.mech_nodes[el.i].pos).cross(f);
        let mj = (el.centroid - mesh.mech_nodes[el.j].pos).cross(-f);
        mech[3 * el.i] += f.x;
        mech[3 * el.i + 1] += f.y;
        mech[3 * el.i + 2] += mi;
        mech[3 * el.j] -= f.x;
        mech[3 * el.j + 1] -= f.y;
        mech[3 * el.j + 2] += mj;
    }
    for (e, k) in lone_contacts(mesh, mats.mech.e0) {
        let el = &mesh.elements[e];
        let m = k * (state.theta[el.j] - state.theta[el.i]);
        mech[3 * el.i + 2] += m;
        mech[3 * el.j + 2] -= m;
    }
    let lambdas = conduit_lambdas(mesh, mats, state, &damage);
    let mut mass = loads.mass_source.clone();
    for (c, lam) in mesh.conduits.iter().zip(&lambdas) {
        let flow = c.section * lam * pressure_gradient(state.p[c.p], state.p[c.q], c.length);
        mass[c.p] += flow;
        mass[c.q] -= flow;
    }
    Ok(Residuals { mech, mass })
}

/// Residuals with constrained rows replaced by `prescribed - current`.
pub fn assemble_residuals(
    mesh: &DualMesh,
    state: &SystemState,
    mats: &Materials,
    params: &[ContactParams],
    loads: &ResolvedLoads,
) -> Result<Residuals> {
    let mut r = raw_residuals(mesh, state, mats, params, loads)?;
    let q = state.mech_vector();
    for &(dof, v) in &loads.mech_fixed {
        r.mech[dof] = v.at(state.load_factor) - q[dof];
    }
    for &(k, v) in &loads.pressure_fixed {
        r.mass[k] = v.at(state.load_factor) - state.p[k];
    }
    Ok(r)
}
