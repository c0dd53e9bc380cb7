//! Staggered mechanics/transport solution of a load step.
//!
//! Within a step the damage and the conduit permeabilities are frozen during
//! one pass; transport is solved first, its facet pressures enter the
//! mechanical right-hand side, and the damage is then updated from the new
//! displacements. Every linear solve is done for a fixed and a unit load so
//! the load factor can be picked afterwards to meet an indirect control.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::materials::{ContactParams, ContactState, Materials};
use crate::mesh::DualMesh;
use crate::physics::{
    assemble_residuals, contact_params, conduit_lambdas, element_rg, lone_contacts, rot, LoadCase, ResolvedLoads, Selector,
    SystemState,
};
use crate::sparse::{block_order, Ldl, Pattern, SymMatrix, Symbolic};

/// Stiffness fraction kept by fully damaged contacts.
pub const STIFFNESS_FLOOR: f64 = 1e-9;

/// Pivots below this fraction of their diagonal entry signal a mechanism.
const PIVOT_TOLERANCE: f64 = 1e-11;

/// Steel loss rate per unit corrosion current density: µm/day per µA/cm².
pub const FARADAY_RATE: f64 = 0.0315;

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSettings {
    /// Relative change between passes that ends the stagger loop.
    pub tol: f64,
    pub max_stagger: usize,
    pub max_bisections: usize,
}

impl Default for StepSettings {
    fn default() -> Self {
        Self { tol: 1e-6, max_stagger: 300, max_bisections: 5 }
    }
}

/// Expansion of corrosion products at circular steel interfaces of equal radius.
#[derive(Clone, Debug, PartialEq)]
pub struct Corrosion {
    /// Rebar centers with the boundary loop of each interface.
    pub interfaces: Vec<(Vec2, usize)>,
    pub radius: f64,
    /// Corrosion current density (µA/cm²).
    pub i_cor: f64,
    /// Volume ratio of rust to steel.
    pub alpha_e: f64,
}

impl Corrosion {
    /// Steel loss (m) per second.
    pub fn loss_rate(&self) -> f64 {
        FARADAY_RATE * self.i_cor * 1e-6 / SECONDS_PER_DAY
    }

    /// Total interface area (m²) for out-of-plane thickness `t`.
    pub fn area(&self, t: f64) -> f64 {
        core::f64::consts::TAU * self.radius * t * self.interfaces.len() as f64
    }
}

/// What the control value of a step means.
#[derive(Clone, Debug, PartialEq)]
pub enum Control {
    /// The control value is the load factor.
    LoadFactor,
    /// Relative displacement `(u(b) - u(a))·dir` of the particles nearest to `a` and `b`.
    Opening { a: Vec2, b: Vec2, dir: Vec2 },
    /// The control value is the steel loss; the load factor is the interface pressure.
    Corrosion(Corrosion),
}

/// Linear functional of the mechanical unknowns plus a flux through a node set.
#[derive(Clone, Debug, PartialEq)]
struct Gauge {
    mech: Vec<(usize, f64)>,
    flux_nodes: Vec<bool>,
}

fn probe_coeffs(mesh: &DualMesh, at: Vec2, dir: Vec2, sign: f64, out: &mut Vec<(usize, f64)>) -> Result<usize> {
    let k = mesh.nearest_mech_node(at).ok_or_else(|| Error::DegenerateGauge("empty mesh".into()))?;
    let r = at - mesh.mech_nodes[k].pos;
    out.push((3 * k, sign * dir.x));
    out.push((3 * k + 1, sign * dir.y));
    out.push((3 * k + 2, sign * dir.dot(rot(1.0, r))));
    Ok(k)
}

impl Gauge {
    fn resolve(mesh: &DualMesh, control: &Control) -> Result<Option<Self>> {
        let mut mech = Vec::new();
        let mut flux_nodes = alloc::vec![false; mesh.transport_nodes.len()];
        match *control {
            Control::LoadFactor => return Ok(None),
            Control::Opening { a, b, dir } => {
                if !(dir.norm() > 0.0) {
                    return Err(Error::DegenerateGauge("zero gauge direction".into()));
                }
                let dir = dir.normalized();
                let ka = probe_coeffs(mesh, a, dir, -1.0, &mut mech)?;
                let kb = probe_coeffs(mesh, b, dir, 1.0, &mut mech)?;
                if ka == kb {
                    return Err(Error::DegenerateGauge("both probes hit the same particle".into()));
                }
            }
            Control::Corrosion(ref c) => {
                if c.interfaces.is_empty() {
                    return Err(Error::DegenerateGauge("no corrosion interface".into()));
                }
                // per interface: mean of two perpendicular diameter changes, halved; then averaged
                let w = 0.25 / c.interfaces.len() as f64;
                for &(center, loop_id) in &c.interfaces {
                    for dir in [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)] {
                        let r = dir * c.radius;
                        let ka = probe_coeffs(mesh, center - r, dir, -w, &mut mech)?;
                        let kb = probe_coeffs(mesh, center + r, dir, w, &mut mech)?;
                        if ka == kb {
                            return Err(Error::DegenerateGauge("both probes hit the same particle".into()));
                        }
                    }
                    let nodes = Selector::Loop(loop_id).transport_nodes(mesh);
                    if nodes.is_empty() {
                        return Err(Error::EmptySelector(alloc::format!("boundary loop {loop_id}")));
                    }
                    for k in nodes {
                        flux_nodes[k] = true;
                    }
                }
            }
        }
        Ok(Some(Self { mech, flux_nodes }))
    }

    fn mech_value(&self, q: &[f64]) -> f64 {
        self.mech.iter().map(|&(k, c)| c * q[k]).sum()
    }
}

/// Mass leaving a node set through the conduits that cross its border (kg/s).
fn outflow(mesh: &DualMesh, inside: &[bool], lambdas: &[f64], p: &[f64]) -> f64 {
    let mut q = 0.0;
    for (c, lam) in mesh.conduits.iter().zip(lambdas) {
        let flow = c.section * lam * (p[c.q] - p[c.p]) / c.length;
        match (inside[c.p], inside[c.q]) {
            (true, false) => q -= flow,
            (false, true) => q += flow,
            _ => {}
        }
    }
    q
}

/// Free-unknown numbering, sparsity pattern and symbolic factorization.
#[derive(Clone, Debug)]
struct LinearSystem {
    free: Vec<Option<usize>>,
    pattern: Pattern,
    symbolic: Symbolic,
    prescribed: Vec<(usize, crate::physics::Amount)>,
}

impl LinearSystem {
    fn new(node_adj: &[Vec<usize>], block: usize, prescribed: Vec<(usize, crate::physics::Amount)>) -> Self {
        let ndof = node_adj.len() * block;
        let mut fixed = alloc::vec![false; ndof];
        for &(k, _) in &prescribed {
            fixed[k] = true;
        }
        let mut free = alloc::vec![None; ndof];
        let mut n = 0;
        for k in 0..ndof {
            if !fixed[k] {
                free[k] = Some(n);
                n += 1;
            }
        }
        let mut pairs = Vec::new();
        for (a, nb) in node_adj.iter().enumerate() {
            for &b in nb.iter().chain(core::iter::once(&a)) {
                for ca in 0..block {
                    for cb in 0..block {
                        if let (Some(i), Some(j)) = (free[block * a + ca], free[block * b + cb]) {
                            pairs.push((i, j));
                        }
                    }
                }
            }
        }
        let pattern = Pattern::from_pairs(n, pairs);
        let symbolic = Symbolic::analyze(&pattern, block_order(node_adj, block, &free));
        Self { free, pattern, symbolic, prescribed }
    }

    fn size(&self) -> usize {
        self.pattern.n
    }

    /// Prescribed values split into fixed and per-unit-load parts, full length.
    fn prescribed_parts(&self) -> (Vec<f64>, Vec<f64>) {
        let mut a = alloc::vec![0.0; self.free.len()];
        let mut b = alloc::vec![0.0; self.free.len()];
        for &(k, v) in &self.prescribed {
            a[k] = v.fixed;
            b[k] = v.scaled;
        }
        (a, b)
    }

    /// Adds a dense block: free rows go to the matrix or, against prescribed columns, to the right-hand sides.
    fn scatter(&self, k: &mut SymMatrix, rhs: &mut [Vec<f64>; 2], bc: &[Vec<f64>; 2], dofs: &[usize], ke: &[f64], m: usize) {
        for a in 0..m {
            let Some(r) = self.free[dofs[a]] else { continue };
            for b in 0..m {
                let v = ke[a * m + b];
                if v == 0.0 {
                    continue;
                }
                match self.free[dofs[b]] {
                    Some(c) => k.add(&self.pattern, r, c, v),
                    None => {
                        rhs[0][r] -= v * bc[0][dofs[b]];
                        rhs[1][r] -= v * bc[1][dofs[b]];
                    }
                }
            }
        }
    }

    /// Solves both right-hand sides and expands them to full vectors.
    fn solve(&self, k: &SymMatrix, mut rhs: [Vec<f64>; 2], bc: [Vec<f64>; 2]) -> Result<[Vec<f64>; 2]> {
        if self.size() == 0 {
            return Ok(bc);
        }
        let f = Ldl::factor_with_tolerance(&self.symbolic, &self.pattern, k, PIVOT_TOLERANCE)?;
        let mut out = bc;
        for (r, full) in rhs.iter_mut().zip(out.iter_mut()) {
            f.solve(&self.symbolic, r);
            for (dof, slot) in self.free.iter().enumerate() {
                if let Some(i) = slot {
                    full[dof] = r[*i];
                }
            }
        }
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("solution"));
        }
        Ok(out)
    }
}

/// Outcome of one accepted step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    pub passes: usize,
    pub bisections: usize,
    pub substeps: usize,
    /// Largest unbalanced generalized force at free mechanical unknowns.
    pub mech_residual: f64,
    pub mass_residual: f64,
}

/// Mesh, materials and loading with the precomputed linear-system structure.
#[derive(Clone, Debug)]
pub struct Model {
    pub mesh: DualMesh,
    pub mats: Materials,
    pub params: Vec<ContactParams>,
    pub load_case: LoadCase,
    pub loads: ResolvedLoads,
    pub control: Control,
    gauge: Option<Gauge>,
    mech: LinearSystem,
    transport: Option<LinearSystem>,
    rg: Vec<[[f64; 6]; 2]>,
    lone: Vec<(usize, f64)>,
    char_length: f64,
}

impl Model {
    pub fn new(mesh: DualMesh, mats: Materials, load_case: LoadCase, control: Control) -> Result<Self> {
        let params = contact_params(&mesh, &mats)?;
        let loads = load_case.resolve(&mesh)?;
        let gauge = Gauge::resolve(&mesh, &control)?;

        let mut madj = alloc::vec![Vec::new(); mesh.mech_nodes.len()];
        for el in &mesh.elements {
            madj[el.i].push(el.j);
            madj[el.j].push(el.i);
        }
        let mech = LinearSystem::new(&madj, 3, loads.mech_fixed.clone());

        let has_source = loads.mass_source.iter().any(|&s| s != 0.0);
        let transport = if loads.pressure_fixed.is_empty() && !has_source {
            None
        } else {
            let mut tadj = alloc::vec![Vec::new(); mesh.transport_nodes.len()];
            for c in &mesh.conduits {
                tadj[c.p].push(c.q);
                tadj[c.q].push(c.p);
            }
            Some(LinearSystem::new(&tadj, 1, loads.pressure_fixed.clone()))
        };
        let rg = (0..mesh.elements.len()).map(|e| element_rg(&mesh, e)).collect();
        let char_length = if mesh.elements.is_empty() {
            1.0
        } else {
            mesh.elements.iter().map(|e| e.length).sum::<f64>() / mesh.elements.len() as f64
        };
        let lone = lone_contacts(&mesh, mats.mech.e0);
        Ok(Self { mesh, mats, params, load_case, loads, control, gauge, mech, transport, rg, lone, char_length })
    }

    /// Number of free unknowns of both fields.
    pub fn free_dofs(&self) -> usize {
        self.mech.size() + self.transport.as_ref().map_or(0, |t| t.size())
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState::zeros(&self.mesh)
    }

    /// Value of the control gauge in `state`, without the flux term.
    pub fn gauge_value(&self, state: &SystemState) -> f64 {
        match &self.gauge {
            None => state.load_factor,
            Some(g) => g.mech_value(&state.mech_vector()),
        }
    }

    /// Net mass flow out of the transport nodes `nodes` into the rest of the body (kg/s).
    pub fn outflow_from(&self, state: &SystemState, nodes: &[usize]) -> f64 {
        let mut inside = alloc::vec![false; self.mesh.transport_nodes.len()];
        for &k in nodes {
            inside[k] = true;
        }
        let lambdas = self.lambdas(state, &damage_of(&state.contacts));
        outflow(&self.mesh, &inside, &lambdas, &state.p)
    }

    fn interface_outflow(&self, state: &SystemState) -> f64 {
        let g = self.gauge.as_ref().expect("corrosion control has a gauge");
        let lambdas = self.lambdas(state, &damage_of(&state.contacts));
        outflow(&self.mesh, &g.flux_nodes, &lambdas, &state.p)
    }

    fn lambdas(&self, state: &SystemState, damage: &[f64]) -> Vec<f64> {
        conduit_lambdas(&self.mesh, &self.mats, state, damage)
    }

    fn solve_transport(&self, lambdas: &[f64]) -> Result<[Vec<f64>; 2]> {
        let n = self.mesh.transport_nodes.len();
        let Some(sys) = &self.transport else {
            return Ok([alloc::vec![0.0; n], alloc::vec![0.0; n]]);
        };
        let mut k = SymMatrix::zeros(&sys.pattern);
        let bc = {
            let (a, b) = sys.prescribed_parts();
            [a, b]
        };
        let mut rhs = [alloc::vec![0.0; sys.size()], alloc::vec![0.0; sys.size()]];
        for (dof, slot) in sys.free.iter().enumerate() {
            if let Some(i) = slot {
                rhs[0][*i] += self.loads.mass_source[dof];
            }
        }
        for (c, lam) in self.mesh.conduits.iter().zip(lambdas) {
            let kc = c.section * lam / c.length;
            sys.scatter(&mut k, &mut rhs, &bc, &[c.p, c.q], &[kc, -kc, -kc, kc], 2);
        }
        sys.solve(&k, rhs, bc)
    }

    fn solve_mech(&self, damage: &[f64], p: &[Vec<f64>; 2]) -> Result<[Vec<f64>; 2]> {
        let sys = &self.mech;
        let e0 = self.mats.mech.e0;
        let alpha = self.mats.mech.alpha;
        let biot = self.mats.biot;
        let mut k = SymMatrix::zeros(&sys.pattern);
        let bc = {
            let (a, b) = sys.prescribed_parts();
            [a, b]
        };
        let mut rhs = [alloc::vec![0.0; sys.size()], alloc::vec![0.0; sys.size()]];
        for (dof, slot) in sys.free.iter().enumerate() {
            if let Some(i) = slot {
                rhs[0][*i] += self.loads.force_fixed[dof];
                rhs[1][*i] += self.loads.force_scaled[dof];
            }
        }
        let mut ke = [0.0; 36];
        for (e, el) in self.mesh.elements.iter().enumerate() {
            let rg = &self.rg[e];
            let s = (1.0 - damage[e]).max(STIFFNESS_FLOOR);
            let (dn, dm) = (s * e0 * el.area / el.length, s * e0 * alpha * el.area / el.length);
            for a in 0..6 {
                for b in 0..6 {
                    ke[a * 6 + b] = dn * rg[0][a] * rg[0][b] + dm * rg[1][a] * rg[1][b];
                }
            }
            let dofs = [3 * el.i, 3 * el.i + 1, 3 * el.i + 2, 3 * el.j, 3 * el.j + 1, 3 * el.j + 2];
            sys.scatter(&mut k, &mut rhs, &bc, &dofs, &ke, 6);
            if biot != 0.0 {
                let c = &self.mesh.conduits[el.conduit];
                for (side, pv) in p.iter().enumerate() {
                    let pf = 0.5 * (pv[c.p] + pv[c.q]);
                    if pf == 0.0 {
                        continue;
                    }
                    for a in 0..6 {
                        if let Some(r) = sys.free[dofs[a]] {
                            rhs[side][r] += el.area * biot * pf * rg[0][a];
                        }
                    }
                }
            }
        }
        for &(e, kr) in &self.lone {
            let el = &self.mesh.elements[e];
            let dofs = [3 * el.i + 2, 3 * el.j + 2];
            sys.scatter(&mut k, &mut rhs, &bc, &dofs, &[kr, -kr, -kr, kr], 2);
        }
        sys.solve(&k, rhs, bc)
    }

    /// Load factor meeting the control at `target`, given fixed and unit responses.
    fn load_factor(&self, target: f64, flux_scale: f64, q: &[Vec<f64>; 2], p: &[Vec<f64>; 2], lambdas: &[f64]) -> Result<f64> {
        let Some(g) = &self.gauge else { return Ok(target) };
        let value = |k: usize| {
            let mut v = g.mech_value(&q[k]);
            if flux_scale != 0.0 {
                v += flux_scale * outflow(&self.mesh, &g.flux_nodes, lambdas, &p[k]);
            }
            v
        };
        let (g0, g1) = (value(0), value(1));
        let scale = g.mech.iter().map(|&(k, c)| (c * q[1][k]).abs()).sum::<f64>();
        if !(g1.abs() > 1e-12 * scale) || !g1.is_finite() {
            return Err(Error::DegenerateGauge("gauge does not respond to the load".into()));
        }
        Ok((target - g0) / g1)
    }

    /// Gauge target and flux coefficient for a move of the control value from `state` to `value`.
    fn control_target(&self, state: &SystemState, value: f64) -> (f64, f64, f64) {
        match &self.control {
            Control::LoadFactor | Control::Opening { .. } => (value, 0.0, 0.0),
            Control::Corrosion(c) => {
                let dt = (value - state.control_value) / c.loss_rate();
                let area = c.area(self.mesh.thickness);
                let rho = self.mats.transport.rho;
                ((c.alpha_e - 1.0) * value - state.flow_volume, dt / (rho * area), dt)
            }
        }
    }

    /// Solves for equilibrium at control value `value`, starting from the committed `state`.
    ///
    /// `state` is not modified; the returned state carries the trial contact history.
    pub fn solve_at(&self, state: &SystemState, value: f64, settings: &StepSettings) -> Result<(SystemState, StepReport)> {
        let (target, flux_scale, _) = self.control_target(state, value);
        let scale: Vec<f64> = (0..3 * self.mesh.mech_nodes.len()).map(|k| if k % 3 == 2 { self.char_length } else { 1.0 }).collect();
        let mut trial = state.clone();
        let mut damage = damage_of(&state.contacts);
        let mut accel = Anderson::new(ANDERSON_DEPTH);
        let mut x = state.mech_vector();
        let mut prev: Option<(Vec<f64>, f64)> = None;
        let mut last_change = f64::INFINITY;
        for pass in 1..=settings.max_stagger {
            let lambdas = self.lambdas(&trial, &damage);
            let p = self.solve_transport(&lambdas)?;
            let q = self.solve_mech(&damage, &p)?;
            let mu = self.load_factor(target, flux_scale, &q, &p, &lambdas)?;
            let qv: Vec<f64> = q[0].iter().zip(&q[1]).map(|(a, b)| a + mu * b).collect();
            let pv: Vec<f64> = p[0].iter().zip(&p[1]).map(|(a, b)| a + mu * b).collect();

            trial.set_mech_vector(&qv);
            trial.p.clone_from(&pv);
            trial.load_factor = mu;
            if !trial.is_finite() {
                return Err(Error::NonFinite("solution"));
            }
            let contacts = self.trial_contacts(state, &trial);
            let new_damage = damage_of(&contacts);
            trial.contacts = contacts;

            let frozen = new_damage == damage && self.lambdas(&trial, &new_damage) == lambdas;
            last_change = rel_change(&x, &qv, &scale);
            if let Some((p0, mu0)) = &prev {
                last_change = last_change.max(rel_change(p0, &pv, &[])).max(rel_scalar(*mu0, mu));
            }
            if frozen || (pass > 1 && last_change < settings.tol) {
                trial.control_value = value;
                if let Control::Corrosion(c) = &self.control {
                    let dt = (value - state.control_value) / c.loss_rate();
                    let area = c.area(self.mesh.thickness);
                    let q_out = self.interface_outflow(&trial);
                    trial.flow_volume = state.flow_volume + dt * q_out / (self.mats.transport.rho * area);
                }
                let r = assemble_residuals(&self.mesh, &trial, &self.mats, &self.params, &self.loads)?;
                let mech_residual = self.free_max(&self.mech, &r.mech);
                let mass_residual = self.transport.as_ref().map_or(0.0, |t| self.free_max(t, &r.mass));
                return Ok((trial, StepReport { passes: pass, bisections: 0, substeps: 1, mech_residual, mass_residual }));
            }
            prev = Some((pv, mu));

            let y: Vec<f64> = x.iter().zip(&scale).map(|(a, w)| a * w).collect();
            let gy: Vec<f64> = qv.iter().zip(&scale).map(|(a, w)| a * w).collect();
            x = accel.next(&y, &gy).iter().zip(&scale).map(|(a, w)| a / w).collect();
            trial.set_mech_vector(&x);
            let contacts = self.trial_contacts(state, &trial);
            damage = damage_of(&contacts);
            trial.contacts = contacts;
        }
        Err(Error::NotConverged { passes: settings.max_stagger, change: last_change })
    }

    fn trial_contacts(&self, committed: &SystemState, trial: &SystemState) -> Vec<ContactState> {
        (0..self.mesh.elements.len())
            .map(|e| {
                let (en, em) = trial.strain(&self.mesh, e);
                self.mats.mech.update_contact(&self.params[e], &committed.contacts[e], en, em).1
            })
            .collect()
    }

    fn free_max(&self, sys: &LinearSystem, r: &[f64]) -> f64 {
        sys.free.iter().zip(r).filter(|(f, _)| f.is_some()).map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    /// Moves the control value of the committed `state` to `value`, halving the increment on failure.
    pub fn advance(&self, state: &SystemState, value: f64, settings: &StepSettings) -> Result<(SystemState, StepReport)> {
        if value == state.control_value {
            return Ok((state.clone(), StepReport::default()));
        }
        let mut current = state.clone();
        let mut report = StepReport::default();
        let mut h = value - state.control_value;
        let mut halvings = 0;
        loop {
            let remaining = value - current.control_value;
            let last = h.abs() >= remaining.abs();
            let next = if last { value } else { current.control_value + h };
            match self.solve_at(&current, next, settings) {
                Ok((s, r)) => {
                    report.passes += r.passes;
                    report.substeps += 1;
                    report.mech_residual = r.mech_residual;
                    report.mass_residual = r.mass_residual;
                    current = s;
                    if last {
                        report.bisections = halvings;
                        return Ok((current, report));
                    }
                }
                Err(Error::NotConverged { .. }) | Err(Error::Singular(_)) | Err(Error::NonFinite(_)) => {
                    if halvings == settings.max_bisections {
                        return Err(Error::BisectionExhausted(halvings));
                    }
                    halvings += 1;
                    h *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn rel_change(a: &[f64], b: &[f64], scale: &[f64]) -> f64 {
    let w = |k: usize| scale.get(k).copied().unwrap_or(1.0);
    let d = a.iter().zip(b).enumerate().map(|(k, (x, y))| ((x - y) * w(k)).powi(2)).sum::<f64>().sqrt();
    let n = b.iter().enumerate().map(|(k, y)| (y * w(k)).powi(2)).sum::<f64>().sqrt();
    if d == 0.0 {
        0.0
    } else {
        d / n.max(f64::MIN_POSITIVE)
    }
}

fn rel_scalar(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

const ANDERSON_DEPTH: usize = 5;

/// Anderson mixing of a fixed-point map `x -> g(x)`.
#[derive(Clone, Debug)]
struct Anderson {
    depth: usize,
    last: Option<(Vec<f64>, Vec<f64>)>,
    last_norm: f64,
    df: Vec<Vec<f64>>,
    dg: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self { depth, last: None, last_norm: f64::INFINITY, df: Vec::new(), dg: Vec::new() }
    }

    fn next(&mut self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = g.iter().zip(x).map(|(a, b)| a - b).collect();
        let norm = f.iter().map(|v| v * v).sum::<f64>();
        if norm > self.last_norm {
            // growing residual: restart from a plain step
            self.last_norm = norm;
            self.last = Some((f, g.to_vec()));
            self.df.clear();
            self.dg.clear();
            return g.to_vec();
        }
        self.last_norm = norm;
        if let Some((f0, g0)) = self.last.take() {
            self.df.push(f.iter().zip(&f0).map(|(a, b)| a - b).collect());
            self.dg.push(g.iter().zip(&g0).map(|(a, b)| a - b).collect());
            if self.df.len() > self.depth {
                self.df.remove(0);
                self.dg.remove(0);
            }
        }
        self.last = Some((f.clone(), g.to_vec()));
        let m = self.df.len();
        if m == 0 {
            return g.to_vec();
        }
        // normal equations of min |f - dF γ|, lightly regularized
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut a = alloc::vec![alloc::vec![0.0; m + 1]; m];
        for i in 0..m {
            for j in 0..m {
                a[i][j] = dot(&self.df[i], &self.df[j]);
            }
            a[i][m] = dot(&self.df[i], &f);
        }
        let trace = (0..m).map(|i| a[i][i]).sum::<f64>();
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1e-12 * trace + f64::MIN_POSITIVE;
        }
        let Some(gamma) = gauss(a) else {
            self.df.clear();
            self.dg.clear();
            return g.to_vec();
        };
        let mut out = g.to_vec();
        for (k, gk) in gamma.iter().enumerate() {
            for (o, d) in out.iter_mut().zip(&self.dg[k]) {
                *o -= gk * d;
            }
        }
        out
    }
}

/// Solves a small dense system given as an augmented matrix.
fn gauss(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if !(a[piv][c].abs() > 0.0) {
            return None;
        }
        a.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..=n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    let mut x = alloc::vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (a[r][n] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn damage_of(contacts: &[ContactState]) -> Vec<f64> {
    contacts.iter().map(|c| c.d).collect()
}

/// Committed state with a saved copy for rollback.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    saved: SystemState,
}

impl Snapshot {
    pub fn take(state: &SystemState) -> Self {
        Self { saved: state.clone() }
    }

    pub fn restore(&self) -> SystemState {
        self.saved.clone()
    }

    pub fn state(&self) -> &SystemState {
        &self.saved
    }
}
