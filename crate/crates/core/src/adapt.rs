//! Coarse-to-fine adaptive refinement driven by the particle stress.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::materials::{ContactState, Materials};
use crate::mesh::{
    build_dual_mesh, place_points, Circle, DensityField, Domain, DualMesh, Generator, GradedZone, PlacementRegion,
    DEFAULT_SATURATION,
};
use crate::physics::{LoadCase, SystemState};
use crate::solver::{Control, Model, StepReport, StepSettings};

/// Symmetric 2×2 tensor `[[xx, xy], [xy, yy]]`.
pub type Tensor2 = [[f64; 2]; 2];

/// Source of wall-clock time in seconds.
pub trait Clock {
    fn seconds(&self) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinementConfig {
    /// Fraction of the tensile strength that marks a particle as critical.
    pub threshold_ratio: f64,
    pub r_f: f64,
    pub r_t: f64,
    pub lmin_fine: f64,
    pub lmin_coarse: f64,
    pub saturation: usize,
    pub max_events_per_step: usize,
}

impl RefinementConfig {
    pub fn new(lmin_fine: f64, lmin_coarse: f64) -> Self {
        Self {
            threshold_ratio: 0.7,
            r_f: 5.0 * lmin_fine,
            r_t: 8.0 * lmin_fine,
            lmin_fine,
            lmin_coarse,
            saturation: DEFAULT_SATURATION,
            max_events_per_step: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.threshold_ratio > 0.0 && self.threshold_ratio < 1.0) {
            return bad("threshold_ratio must lie in (0, 1)");
        }
        if !(self.r_f > 0.0 && self.r_f < self.r_t) {
            return bad("need 0 < r_f < r_t");
        }
        if !(self.lmin_fine > 0.0 && self.lmin_fine < self.lmin_coarse) {
            return bad("need 0 < lmin_fine < lmin_coarse");
        }
        if self.saturation == 0 {
            return Err(Error::ZeroBudget);
        }
        Ok(())
    }
}

/// Averaged solid stress of every particle, symmetrized.
pub fn particle_stresses(mesh: &DualMesh, mats: &Materials, state: &SystemState) -> Vec<Tensor2> {
    let mut out = alloc::vec![[[0.0; 2]; 2]; mesh.mech_nodes.len()];
    let (e0, alpha) = (mats.mech.e0, mats.mech.alpha);
    for (e, el) in mesh.elements.iter().enumerate() {
        let (en, em) = state.strain(mesh, e);
        let keep = 1.0 - state.contacts[e].d;
        let f = (el.normal * (keep * e0 * en) + el.tangent * (keep * e0 * alpha * em)) * el.area;
        for (k, force) in [(el.i, f), (el.j, -f)] {
            let node = &mesh.mech_nodes[k];
            let r = el.centroid - node.pos;
            let s = &mut out[k];
            s[0][0] += r.x * force.x / node.volume;
            s[1][1] += r.y * force.y / node.volume;
            s[0][1] += 0.5 * (r.x * force.y + r.y * force.x) / node.volume;
        }
    }
    for s in &mut out {
        s[1][0] = s[0][1];
    }
    out
}

pub fn particle_stress(mesh: &DualMesh, mats: &Materials, state: &SystemState, k: usize) -> Tensor2 {
    particle_stresses(mesh, mats, state)[k]
}

pub fn max_principal(s: &Tensor2) -> f64 {
    let mean = 0.5 * (s[0][0] + s[1][1]);
    let half = 0.5 * (s[0][0] - s[1][1]);
    mean + (half * half + s[0][1] * s[0][1]).sqrt()
}

/// Non-physical particles whose largest principal solid stress exceeds the threshold.
pub fn find_critical(mesh: &DualMesh, mats: &Materials, state: &SystemState, cfg: &RefinementConfig) -> Vec<usize> {
    let limit = cfg.threshold_ratio * mats.mech.ft;
    particle_stresses(mesh, mats, state)
        .iter()
        .enumerate()
        .filter(|&(k, s)| !mesh.mech_nodes[k].physical && max_principal(s) > limit)
        .map(|(k, _)| k)
        .collect()
}

/// Identity of a contact: the bit patterns of its two generator positions, sorted.
pub type ContactKey = [u64; 4];

pub fn contact_key(mesh: &DualMesh, e: usize) -> ContactKey {
    let el = &mesh.elements[e];
    let bits = |p: Vec2| [p.x.to_bits(), p.y.to_bits()];
    let (a, b) = (bits(mesh.mech_nodes[el.i].pos), bits(mesh.mech_nodes[el.j].pos));
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    [a[0], a[1], b[0], b[1]]
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementPlan {
    pub critical: Vec<usize>,
    /// Cell centroids of the critical particles.
    pub centers: Vec<Vec2>,
    /// Indices (in the old mesh) of removed coarse generators.
    pub evicted: Vec<usize>,
    pub inserted: Vec<Vec2>,
    /// Saved history of contacts between two physical particles.
    pub preserved: Vec<(ContactKey, ContactState)>,
}

/// Updated generator set around the critical particles.
///
/// With `shared` points, the fine zones take exactly those points and only the
/// transition rings are filled by dart throwing.
pub fn plan_refinement(
    domain: &Domain,
    mesh: &DualMesh,
    state: &SystemState,
    critical: &[usize],
    cfg: &RefinementConfig,
    seed: u64,
    shared: Option<&[Vec2]>,
) -> Result<(Vec<Generator>, RefinementPlan)> {
    cfg.validate()?;
    let centers: Vec<Vec2> = critical.iter().map(|&k| mesh.mech_nodes[k].centroid).collect();
    let within = |p: Vec2, r: f64| centers.iter().any(|c| p.dist(*c) <= r);

    let mut gens = Vec::with_capacity(mesh.mech_nodes.len());
    let mut evicted = Vec::new();
    for (k, n) in mesh.mech_nodes.iter().enumerate() {
        if !n.physical && within(n.pos, cfg.r_t) {
            evicted.push(k);
        } else {
            gens.push(Generator { pos: n.pos, physical: n.physical });
        }
    }

    let disks = |r: f64| centers.iter().map(|&center| Circle { center, radius: r }).collect::<Vec<_>>();
    let density = DensityField {
        base_lmin: cfg.lmin_coarse,
        overrides: centers
            .iter()
            .map(|&center| GradedZone { center, r_t: cfg.r_t, r_f: cfg.r_f, fine_lmin: cfg.lmin_fine })
            .collect(),
    };
    let mut inserted = Vec::new();
    let region = match shared {
        Some(fine) => {
            let tol = 1e-9 * domain.diameter();
            for &p in fine {
                if within(p, cfg.r_f) && domain.contains(p) && !gens.iter().any(|g| g.pos.dist(p) <= tol) {
                    gens.push(Generator { pos: p, physical: true });
                    inserted.push(p);
                }
            }
            PlacementRegion::Annuli { outer: disks(cfg.r_t), inner: disks(cfg.r_f) }
        }
        None => PlacementRegion::Disks(disks(cfg.r_t)),
    };
    let existing: Vec<Vec2> = gens.iter().map(|g| g.pos).collect();
    for p in place_points(domain, &density, &existing, &region, seed, cfg.saturation)? {
        gens.push(Generator { pos: p, physical: shared.is_none() && within(p, cfg.r_f) });
        inserted.push(p);
    }

    let preserved = mesh
        .elements
        .iter()
        .enumerate()
        .filter(|(_, el)| mesh.mech_nodes[el.i].physical && mesh.mech_nodes[el.j].physical)
        .map(|(e, _)| (contact_key(mesh, e), state.contacts[e]))
        .collect();
    let plan = RefinementPlan { critical: critical.to_vec(), centers, evicted, inserted, preserved };
    Ok((gens, plan))
}

pub fn refine(
    domain: &Domain,
    mesh: &DualMesh,
    state: &SystemState,
    critical: &[usize],
    cfg: &RefinementConfig,
    seed: u64,
    shared: Option<&[Vec2]>,
) -> Result<(DualMesh, RefinementPlan)> {
    let (mut gens, mut plan) = plan_refinement(domain, mesh, state, critical, cfg, seed, shared)?;
    loop {
        let mesh = build_dual_mesh(&gens, domain)?;
        let drop = splitting_points(&plan, &mesh);
        if drop.is_empty() {
            return Ok((mesh, plan));
        }
        let keep = |p: &Vec2| !drop.contains(&pos_bits(*p));
        gens.retain(|g| keep(&g.pos));
        plan.inserted.retain(keep);
    }
}

fn pos_bits(p: Vec2) -> [u64; 2] {
    [p.x.to_bits(), p.y.to_bits()]
}

/// Inserted generators adjacent to either end of a damaged contact that no longer exists.
fn splitting_points(plan: &RefinementPlan, mesh: &DualMesh) -> BTreeSet<[u64; 2]> {
    let keys: BTreeSet<ContactKey> = (0..mesh.elements.len()).map(|e| contact_key(mesh, e)).collect();
    let inserted: BTreeSet<[u64; 2]> = plan.inserted.iter().map(|&p| pos_bits(p)).collect();
    let node: BTreeMap<[u64; 2], usize> = mesh.mech_nodes.iter().enumerate().map(|(k, n)| (pos_bits(n.pos), k)).collect();
    let neighbours = |k: usize| -> BTreeSet<usize> {
        mesh.elements.iter().filter(|el| el.i == k || el.j == k).map(|el| el.i + el.j - k).collect()
    };
    let mut out = BTreeSet::new();
    for (key, st) in &plan.preserved {
        if st.d == 0.0 || keys.contains(key) {
            continue;
        }
        let (Some(&a), Some(&b)) = (node.get(&[key[0], key[1]]), node.get(&[key[2], key[3]])) else { continue };
        for k in neighbours(a).union(&neighbours(b)) {
            let p = pos_bits(mesh.mech_nodes[*k].pos);
            if inserted.contains(&p) {
                out.insert(p);
            }
        }
    }
    out
}

/// Contact states for `new_mesh` restored from the plan.
///
/// Damaged contacts must reappear; undamaged ones are restored when present.
pub fn transfer_history(plan: &RefinementPlan, new_mesh: &DualMesh) -> Result<Vec<ContactState>> {
    let index: BTreeMap<ContactKey, usize> =
        (0..new_mesh.elements.len()).map(|e| (contact_key(new_mesh, e), e)).collect();
    let mut out = alloc::vec![ContactState::default(); new_mesh.elements.len()];
    for (key, st) in &plan.preserved {
        match index.get(key) {
            Some(&e) => out[e] = *st,
            None if st.d > 0.0 => return Err(Error::MissingHistoryKey),
            None => {}
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementEvent {
    pub step: usize,
    pub control_value: f64,
    pub critical: usize,
    pub evicted: usize,
    pub inserted: usize,
    pub dofs_before: usize,
    pub dofs_after: usize,
    /// Load factor of the committed state and after re-equilibration on the new mesh.
    pub load_before: f64,
    pub load_after: f64,
    pub preserved: usize,
    /// Every saved contact history was found bit-identical on the new mesh.
    pub history_intact: bool,
    /// The committed state was untouched by the rejected step.
    pub rollback_intact: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepOutcome {
    pub report: StepReport,
    pub refinements: usize,
}

/// A model that advances in control steps and refines itself where needed.
#[derive(Clone, Debug)]
pub struct Simulation {
    domain: Domain,
    model: Model,
    state: SystemState,
    settings: StepSettings,
    refinement: Option<RefinementConfig>,
    shared_fine_points: Option<Vec<Vec2>>,
    seed: u64,
    events: Vec<RefinementEvent>,
    step: usize,
}

impl Simulation {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        domain: Domain,
        generators: &[Generator],
        mats: Materials,
        load_case: LoadCase,
        control: Control,
        settings: StepSettings,
        refinement: Option<RefinementConfig>,
        seed: u64,
    ) -> Result<Self> {
        if let Some(cfg) = &refinement {
            cfg.validate()?;
        }
        let mesh = build_dual_mesh(generators, &domain)?;
        let model = Model::new(mesh, mats, load_case, control)?;
        let state = model.initial_state();
        Ok(Self {
            domain,
            model,
            state,
            settings,
            refinement,
            shared_fine_points: None,
            seed,
            events: Vec::new(),
            step: 0,
        })
    }

    /// Fine zones reuse these points instead of random darts.
    pub fn with_shared_fine_points(mut self, points: Vec<Vec2>) -> Self {
        self.shared_fine_points = Some(points);
        self
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn events(&self) -> &[RefinementEvent] {
        &self.events
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Solves the initial state at the current control value.
    pub fn equilibrate(&mut self) -> Result<StepOutcome> {
        let value = self.state.control_value;
        let mut refinements = 0;
        loop {
            let (trial, report) = self.model.solve_at(&self.state, value, &self.settings)?;
            if self.critical(&trial).is_empty() {
                self.state = trial;
                return Ok(StepOutcome { report, refinements });
            }
            self.refine_committed(self.critical(&trial), &mut refinements)?;
        }
    }

    fn critical(&self, trial: &SystemState) -> Vec<usize> {
        match &self.refinement {
            Some(cfg) => find_critical(&self.model.mesh, &self.model.mats, trial, cfg),
            None => Vec::new(),
        }
    }

    /// Advances the control value to `target`, halving the increment on solver failure
    /// and refining before any increment that would make a coarse particle critical.
    pub fn step_to(&mut self, target: f64) -> Result<StepOutcome> {
        self.step += 1;
        let mut outcome = StepOutcome::default();
        let mut h = target - self.state.control_value;
        let mut halvings = 0;
        while self.state.control_value != target {
            let remaining = target - self.state.control_value;
            let last = h.abs() >= remaining.abs();
            let next = if last { target } else { self.state.control_value + h };
            match self.model.solve_at(&self.state, next, &self.settings) {
                Ok((trial, r)) => {
                    let critical = self.critical(&trial);
                    if !critical.is_empty() {
                        self.refine_committed(critical, &mut outcome.refinements)?;
                        continue;
                    }
                    self.state = trial;
                    outcome.report.passes += r.passes;
                    outcome.report.substeps += 1;
                    outcome.report.mech_residual = r.mech_residual;
                    outcome.report.mass_residual = r.mass_residual;
                }
                Err(Error::NotConverged { .. }) | Err(Error::Singular(_)) | Err(Error::NonFinite(_)) => {
                    if halvings == self.settings.max_bisections {
                        return Err(Error::BisectionExhausted(halvings));
                    }
                    halvings += 1;
                    h *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        outcome.report.bisections = halvings;
        Ok(outcome)
    }

    /// Remeshes around `critical` from the committed state and re-equilibrates at its load level,
    /// repeating while the re-equilibrated state is itself critical.
    fn refine_committed(&mut self, mut critical: Vec<usize>, count: &mut usize) -> Result<()> {
        let cfg = self.refinement.expect("refinement enabled");
        loop {
            *count += 1;
            if *count > cfg.max_events_per_step {
                return Err(Error::RefinementCap(cfg.max_events_per_step));
            }
            let committed_hash = self.state.hash();
            let seed = self.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(self.events.len() as u64 + 1));
            let mesh = &self.model.mesh;
            let (new_mesh, plan) =
                refine(&self.domain, mesh, &self.state, &critical, &cfg, seed, self.shared_fine_points.as_deref())?;
            let contacts = transfer_history(&plan, &new_mesh)?;
            let history_intact = {
                let index: BTreeMap<ContactKey, usize> =
                    (0..new_mesh.elements.len()).map(|e| (contact_key(&new_mesh, e), e)).collect();
                plan.preserved
                    .iter()
                    .filter_map(|(k, st)| index.get(k).map(|&e| (st, e)))
                    .all(|(st, e)| contacts[e].bits() == st.bits())
            };
            let dofs_before = self.model.mesh.dof_count();
            let model = Model::new(new_mesh, self.model.mats, self.model.load_case.clone(), self.model.control.clone())?;
            let mut start = model.initial_state();
            start.contacts = contacts;
            start.load_factor = self.state.load_factor;
            start.control_value = self.state.control_value;
            start.flow_volume = self.state.flow_volume;
            let (eq, _) = model.solve_at(&start, start.control_value, &self.settings)?;
            self.events.push(RefinementEvent {
                step: self.step,
                control_value: self.state.control_value,
                critical: plan.critical.len(),
                evicted: plan.evicted.len(),
                inserted: plan.inserted.len(),
                dofs_before,
                dofs_after: model.mesh.dof_count(),
                load_before: self.state.load_factor,
                load_after: eq.load_factor,
                preserved: plan.preserved.len(),
                history_intact,
                rollback_intact: committed_hash == self.state.hash(),
            });
            self.model = model;
            self.state = eq;
            critical = self.critical(&self.state);
            if critical.is_empty() {
                return Ok(());
            }
        }
    }
}

/// One committed step of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub control_value: f64,
    pub load_factor: f64,
    pub dof_count: usize,
    pub wall_time_s: f64,
    /// Refinement events so far.
    pub refinement_events: usize,
    pub passes: usize,
}

/// Runs `sim` through the control `targets`, recording every step.
pub fn adaptive_driver(
    sim: &mut Simulation,
    targets: &[f64],
    clock: &dyn Clock,
    mut on_step: impl FnMut(&Simulation, &StepRecord),
) -> Result<Vec<StepRecord>> {
    let start = clock.seconds();
    let mut out = Vec::with_capacity(targets.len() + 1);
    let record = |sim: &Simulation, passes: usize| StepRecord {
        step: sim.step,
        control_value: sim.state.control_value,
        load_factor: sim.state.load_factor,
        dof_count: sim.model.mesh.dof_count(),
        wall_time_s: clock.seconds() - start,
        refinement_events: sim.events.len(),
        passes,
    };
    let o = sim.equilibrate()?;
    let r = record(sim, o.report.passes);
    on_step(sim, &r);
    out.push(r);
    for &t in targets {
        let o = sim.step_to(t)?;
        let r = record(sim, o.report.passes);
        on_step(sim, &r);
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{MechMaterial, TransportMaterial};
    use crate::mesh::sample_generator_points;
    use crate::physics::{Amount, Axis, Component, MechDirichlet, PressureDirichlet, Selector};

    fn mats(biot: f64) -> Materials {
        Materials::new(MechMaterial::bending_defaults(), TransportMaterial::bending_defaults(), biot).unwrap()
    }

    fn coarse(domain: &Domain, lmin: f64, seed: u64) -> Vec<Generator> {
        sample_generator_points(domain, &DensityField::uniform(lmin), seed, 500)
            .unwrap()
            .into_iter()
            .map(|pos| Generator { pos, physical: false })
            .collect()
    }

    #[test]
    fn zero_state_zero_stress() {
        let d = Domain::rectangle(0.0, 0.0, 0.1, 0.1, 0.05).unwrap();
        let m = build_dual_mesh(&coarse(&d, 0.02, 1), &d).unwrap();
        let s = particle_stresses(&m, &mats(0.0), &SystemState::zeros(&m));
        assert!(s.iter().all(|t| t.iter().flatten().all(|&v| v == 0.0)));
    }

    #[test]
    fn uniform_expansion_gives_isotropic_stress() {
        let d = Domain::rectangle(0.0, 0.0, 0.2, 0.2, 0.05).unwrap();
        let m = build_dual_mesh(&coarse(&d, 0.01, 2), &d).unwrap();
        let mats = mats(1.0);
        let eps = 1e-5;
        let mut st = SystemState::zeros(&m);
        for (k, n) in m.mech_nodes.iter().enumerate() {
            st.u[k] = n.pos * eps;
        }
        let s = particle_stresses(&m, &mats, &st);
        let e0 = mats.mech.e0;
        for (k, t) in s.iter().enumerate() {
            let cells = m.node_elements()[k].len();
            if m.mech_nodes[k].pos.dist(Vec2::new(0.1, 0.1)) > 0.05 || cells < 3 {
                continue;
            }
            // closed cell: sum of r ⊗ n A equals V·I, so σ = E0 ε I exactly
            assert!((t[0][0] - e0 * eps).abs() < 1e-9 * e0 * eps, "{t:?}");
            assert!((t[1][1] - e0 * eps).abs() < 1e-9 * e0 * eps);
            assert!(t[0][1].abs() < 1e-9 * e0 * eps);
        }
    }

    #[test]
    fn two_contact_micro_case() {
        // brute-force sum for a particle with two opposite contacts carrying ±F n
        let (r, f, v) = (0.01, 3.0, 5e-6);
        let n = Vec2::new(0.6, 0.8);
        let mut s = [[0.0; 2]; 2];
        for sign in [1.0, -1.0] {
            let arm = n * (sign * r);
            let force = n * (sign * f);
            for (i, a_i) in [arm.x, arm.y].iter().enumerate() {
                for (j, f_j) in [force.x, force.y].iter().enumerate() {
                    s[i][j] += a_i * f_j / v;
                }
            }
        }
        let snn = n.x * (s[0][0] * n.x + s[0][1] * n.y) + n.y * (s[1][0] * n.x + s[1][1] * n.y);
        assert!((snn - 2.0 * r * f / v).abs() < 1e-9);
        assert!((max_principal(&s) - 2.0 * r * f / v).abs() < 1e-9);
    }

    #[test]
    fn principal_stress_examples() {
        assert_eq!(max_principal(&[[3.0, 0.0], [0.0, -1.0]]), 3.0);
        assert!((max_principal(&[[0.0, 2.0], [2.0, 0.0]]) - 2.0).abs() < 1e-15);
    }

    fn bar(lmin: f64) -> (Domain, Vec<Generator>, LoadCase) {
        let d = Domain::rectangle(0.0, 0.0, 0.3, 0.1, 0.05).unwrap();
        let g = coarse(&d, lmin, 3);
        let mut lc = LoadCase::default();
        let left = Selector::Band { axis: Axis::X, value: 0.0, tol: 0.6 * lmin };
        lc.mech_dirichlet.push(MechDirichlet { selector: left, component: Component::Ux, value: Amount::fixed(0.0) });
        let anchor = Selector::Nearest(Vec2::new(0.0, 0.05));
        lc.mech_dirichlet.push(MechDirichlet { selector: anchor.clone(), component: Component::Uy, value: Amount::fixed(0.0) });
        let right = Selector::Band { axis: Axis::X, value: 0.3, tol: 0.6 * lmin };
        lc.mech_dirichlet.push(MechDirichlet { selector: right, component: Component::Ux, value: Amount::scaled(0.3) });
        (d, g, lc)
    }

    #[test]
    fn low_load_finds_nothing_high_load_finds_particles() {
        let (d, g, lc) = bar(0.02);
        let m = build_dual_mesh(&g, &d).unwrap();
        let model = Model::new(m, mats(0.0), lc, Control::LoadFactor).unwrap();
        let cfg = RefinementConfig::new(0.005, 0.02);
        let ft_strain = model.mats.mech.ft / model.mats.mech.e0;
        let (low, _) = model.solve_at(&model.initial_state(), 0.2 * ft_strain, &StepSettings::default()).unwrap();
        assert!(find_critical(&model.mesh, &model.mats, &low, &cfg).is_empty());
        let (high, _) = model.solve_at(&model.initial_state(), 0.8 * ft_strain, &StepSettings::default()).unwrap();
        assert!(!find_critical(&model.mesh, &model.mats, &high, &cfg).is_empty());
    }

    #[test]
    fn physical_particles_never_critical() {
        let (d, mut g, lc) = bar(0.02);
        g.iter_mut().for_each(|x| x.physical = true);
        let m = build_dual_mesh(&g, &d).unwrap();
        let model = Model::new(m, mats(0.0), lc, Control::LoadFactor).unwrap();
        let ft_strain = model.mats.mech.ft / model.mats.mech.e0;
        let (high, _) = model.solve_at(&model.initial_state(), 0.9 * ft_strain, &StepSettings::default()).unwrap();
        assert!(find_critical(&model.mesh, &model.mats, &high, &RefinementConfig::new(0.005, 0.02)).is_empty());
    }

    #[test]
    fn refinement_evicts_and_flags() {
        let (d, g, _) = bar(0.02);
        let m = build_dual_mesh(&g, &d).unwrap();
        let cfg = RefinementConfig::new(0.005, 0.02);
        let k = m.nearest_mech_node(Vec2::new(0.15, 0.05)).unwrap();
        let st = SystemState::zeros(&m);
        let (gens, plan) = plan_refinement(&d, &m, &st, &[k], &cfg, 9, None).unwrap();
        let c = plan.centers[0];
        assert!(!plan.evicted.is_empty());
        for &e in &plan.evicted {
            assert!(m.mech_nodes[e].pos.dist(c) <= cfg.r_t);
        }
        for g in &gens {
            let r = g.pos.dist(c);
            assert_eq!(g.physical, r <= cfg.r_f, "{r}");
            if r > cfg.r_t {
                assert!(m.mech_nodes.iter().any(|n| n.pos == g.pos));
            }
        }
        let mesh = build_dual_mesh(&gens, &d).unwrap();
        assert!(mesh.dof_count() > m.dof_count());
        assert!(transfer_history(&plan, &mesh).unwrap().iter().all(|c| c.is_pristine()));
    }

    #[test]
    fn damaged_history_survives_second_refinement() {
        let (d, g, _) = bar(0.02);
        let m0 = build_dual_mesh(&g, &d).unwrap();
        let cfg = RefinementConfig::new(0.005, 0.02);
        let k = m0.nearest_mech_node(Vec2::new(0.08, 0.05)).unwrap();
        let (m1, _) = refine(&d, &m0, &SystemState::zeros(&m0), &[k], &cfg, 1, None).unwrap();
        let mut st = SystemState::zeros(&m1);
        for (e, el) in m1.elements.iter().enumerate() {
            if m1.mech_nodes[el.i].physical && m1.mech_nodes[el.j].physical {
                st.contacts[e] = ContactState { d: 0.25 + e as f64 * 1e-6, max_en: 1e-4, max_et: 2e-5 };
            }
        }
        // second event far from the first zone
        let k2 = m1.nearest_mech_node(Vec2::new(0.24, 0.05)).unwrap();
        let (m2, plan) = refine(&d, &m1, &st, &[k2], &cfg, 2, None).unwrap();
        let restored = transfer_history(&plan, &m2).unwrap();
        let mut before: Vec<_> = st.contacts.iter().filter(|c| c.d > 0.0).map(|c| c.bits()).collect();
        let mut after: Vec<_> = restored.iter().filter(|c| c.d > 0.0).map(|c| c.bits()).collect();
        before.sort();
        after.sort();
        assert_eq!(before, after);

        let mut broken = plan.clone();
        let pos = broken.preserved.iter().position(|(_, c)| c.d > 0.0).unwrap();
        broken.preserved[pos].0[0] ^= 1;
        assert_eq!(transfer_history(&broken, &m2), Err(Error::MissingHistoryKey));
    }

    #[test]
    fn shared_points_reproduce_fine_zone() {
        let (d, g, _) = bar(0.02);
        let fine = sample_generator_points(&d, &DensityField::uniform(0.005), 11, 500).unwrap();
        let m = build_dual_mesh(&g, &d).unwrap();
        let cfg = RefinementConfig::new(0.005, 0.02);
        let k = m.nearest_mech_node(Vec2::new(0.15, 0.05)).unwrap();
        let (gens, plan) = plan_refinement(&d, &m, &SystemState::zeros(&m), &[k], &cfg, 3, Some(&fine)).unwrap();
        let c = plan.centers[0];
        let phys: Vec<Vec2> = gens.iter().filter(|g| g.physical).map(|g| g.pos).collect();
        let expect: Vec<Vec2> = fine.iter().copied().filter(|p| p.dist(c) <= cfg.r_f).collect();
        assert_eq!(phys, expect);
        assert!(gens.iter().filter(|g| !g.physical).all(|g| g.pos.dist(c) >= cfg.r_f));
    }

    struct Ticks(core::cell::Cell<f64>);

    impl Clock for Ticks {
        fn seconds(&self) -> f64 {
            self.0.set(self.0.get() + 1.0);
            self.0.get()
        }
    }

    #[test]
    fn below_threshold_run_equals_plain_run() {
        let (d, g, lc) = bar(0.02);
        let ft_strain = 2.2e6 / 60e9;
        let targets: Vec<f64> = (1..=3).map(|k| k as f64 * 0.15 * ft_strain).collect();
        let mk = |r: Option<RefinementConfig>| {
            Simulation::new(d.clone(), &g, mats(0.0), lc.clone(), Control::LoadFactor, StepSettings::default(), r, 5).unwrap()
        };
        let mut a = mk(Some(RefinementConfig::new(0.005, 0.02)));
        let mut b = mk(None);
        let clock = Ticks(core::cell::Cell::new(0.0));
        let ra = adaptive_driver(&mut a, &targets, &clock, |_, _| {}).unwrap();
        let rb = adaptive_driver(&mut b, &targets, &clock, |_, _| {}).unwrap();
        assert!(a.events().is_empty());
        assert_eq!(a.state().hash(), b.state().hash());
        assert_eq!(ra.len(), 4);
        assert!(ra.iter().zip(&rb).all(|(x, y)| x.load_factor == y.load_factor && x.dof_count == y.dof_count));
    }

    #[test]
    fn loading_past_threshold_refines_and_keeps_bookkeeping() {
        let (d, g, mut lc) = bar(0.02);
        lc.pressure_dirichlet.push(PressureDirichlet { selector: Selector::All, value: Amount::fixed(0.0) });
        let ft_strain = 2.2e6 / 60e9;
        let targets: Vec<f64> = (1..=6).map(|k| k as f64 * 0.2 * ft_strain).collect();
        let mut sim = Simulation::new(
            d,
            &g,
            mats(0.0),
            lc,
            Control::LoadFactor,
            StepSettings::default(),
            Some(RefinementConfig::new(0.005, 0.02)),
            5,
        )
        .unwrap();
        let clock = Ticks(core::cell::Cell::new(0.0));
        let rec = adaptive_driver(&mut sim, &targets, &clock, |_, _| {}).unwrap();
        assert!(!sim.events().is_empty());
        for w in rec.windows(2) {
            assert!(w[1].dof_count >= w[0].dof_count);
            assert!(w[1].wall_time_s > w[0].wall_time_s);
        }
        for ev in sim.events() {
            assert!(ev.history_intact && ev.rollback_intact);
            assert!(ev.dofs_after > ev.dofs_before);
            assert!((ev.load_after - ev.load_before).abs() <= 1e-12 * ev.load_before.abs().max(1.0));
        }
        assert!(sim.model().mesh.physical_count() > 0);
    }
}
