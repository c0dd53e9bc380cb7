//! Specimen builders, loading programs and measured observables.

use alloc::vec::Vec;

use crate::adapt::{adaptive_driver, Clock, RefinementConfig, Simulation, StepRecord};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::materials::{Materials, MechMaterial, TransportMaterial};
use crate::mesh::{sample_generator_points, DensityField, Domain, Generator, GradedZone, DEFAULT_SATURATION};
use crate::physics::{Amount, Axis, BoundaryPressure, Component, LoadCase, MechDirichlet, NodalForce, PressureDirichlet, Selector, SystemState};
use crate::solver::{Control, Corrosion, Model, StepSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Block with a pressure drop between the left and right faces.
    PressurizedBlock,
    /// Plane analog of three-point bending with water pressure on the bottom face.
    Bend2d,
    SingleRebar,
    FourRebar,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::PressurizedBlock => "pressurized_block",
            ScenarioKind::Bend2d => "bend2d_with_pressure",
            ScenarioKind::SingleRebar => "single_rebar",
            ScenarioKind::FourRebar => "four_rebar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::PressurizedBlock, Self::Bend2d, Self::SingleRebar, Self::FourRebar].into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Uniform fine physical discretization.
    Fine,
    /// Uniform coarse discretization, fracturing at its own scale.
    Coarse,
    /// Coarse elastic start refined on demand.
    Adaptive,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Fine => "fine",
            Mode::Coarse => "coarse",
            Mode::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Mode::Fine, Mode::Coarse, Mode::Adaptive].into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub width: f64,
    pub height: f64,
    pub thickness: f64,
    pub rebar_radius: f64,
    /// Concrete cover above the rebars (m).
    pub cover: f64,
    pub mats: Materials,
    /// Prescribed face pressure (Pa): left face of the block, bottom face of the beam.
    pub pressure: f64,
    /// Corrosion current density (µA/cm²).
    pub i_cor: f64,
    pub alpha_e: f64,
    pub lmin_fine: f64,
    pub lmin_coarse: f64,
    pub mode: Mode,
    pub seed: u64,
    pub saturation: usize,
    /// Last control value; reached in `steps` equal increments.
    pub control_end: f64,
    pub steps: usize,
    /// Adaptive runs take the fine model's generator points inside fine zones.
    pub shared_fine_points: bool,
    /// Adaptive runs start at `lmin_fine` next to rebar interfaces, graded to `lmin_coarse`.
    pub interface_grading: bool,
}

impl ScenarioSpec {
    /// Unit square with 1 Pa on the left face, 0 on the right, sealed top and bottom.
    pub fn pressurized_block() -> Self {
        Self {
            kind: ScenarioKind::PressurizedBlock,
            width: 1.0,
            height: 1.0,
            thickness: 1.0,
            rebar_radius: 0.0,
            cover: 0.0,
            mats: Materials::new(MechMaterial::bending_defaults(), TransportMaterial::bending_defaults(), 0.0).unwrap(),
            pressure: 1.0,
            i_cor: 0.0,
            alpha_e: 1.0,
            lmin_fine: 0.1,
            lmin_coarse: 0.3,
            mode: Mode::Fine,
            seed: 1,
            saturation: DEFAULT_SATURATION,
            control_end: 1.0,
            steps: 1,
            shared_fine_points: false,
            interface_grading: false,
        }
    }

    /// Half-size plane beam: span 0.5 m, depth 0.15 m, 0.3 MPa under the bottom face, COD control.
    pub fn bend2d(biot: f64) -> Self {
        Self {
            kind: ScenarioKind::Bend2d,
            width: 0.5,
            height: 0.15,
            thickness: 0.075,
            mats: Materials::new(MechMaterial::bending_defaults(), TransportMaterial::bending_defaults(), biot).unwrap(),
            pressure: 0.3e6,
            lmin_fine: 0.01,
            lmin_coarse: 0.032,
            control_end: 1e-4,
            steps: 100,
            ..Self::pressurized_block()
        }
    }

    /// 75×75 mm block with a 16 mm rebar under a 17 mm cover, driven by steel loss.
    pub fn single_rebar(biot: f64) -> Self {
        Self {
            kind: ScenarioKind::SingleRebar,
            width: 0.075,
            height: 0.075,
            thickness: 1.0,
            rebar_radius: 0.008,
            cover: 0.017,
            mats: Materials::new(MechMaterial::corrosion_defaults(), TransportMaterial::corrosion_defaults(), biot).unwrap(),
            pressure: 0.0,
            i_cor: 100.0,
            alpha_e: 2.0,
            lmin_fine: 0.003,
            lmin_coarse: 0.01,
            control_end: 6e-6,
            steps: 60,
            interface_grading: true,
            ..Self::pressurized_block()
        }
    }

    /// 250×125 mm block with four evenly spaced rebars under the top face.
    pub fn four_rebar(biot: f64) -> Self {
        Self { kind: ScenarioKind::FourRebar, width: 0.25, height: 0.125, ..Self::single_rebar(biot) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        for (name, v) in [("width", self.width), ("height", self.height), ("thickness", self.thickness)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(&alloc::format!("{name} must be positive"));
            }
        }
        if !(self.lmin_fine > 0.0 && self.lmin_fine < self.lmin_coarse) {
            return bad("need 0 < lmin_fine < lmin_coarse");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.saturation == 0 {
            return Err(Error::ZeroBudget);
        }
        if self.is_rebar() {
            if !(self.rebar_radius > 0.0 && self.cover > 0.0) {
                return bad("rebar_radius and cover must be positive");
            }
            if !(self.i_cor > 0.0 && self.alpha_e > 1.0) {
                return bad("need i_cor > 0 and alpha_e > 1");
            }
            for c in self.rebar_centers() {
                let r = self.rebar_radius;
                if !(c.x - r > 0.0 && c.x + r < self.width && c.y - r > 0.0 && c.y + r < self.height) {
                    return bad("rebar must lie strictly inside the block");
                }
            }
        }
        Ok(())
    }

    fn is_rebar(&self) -> bool {
        matches!(self.kind, ScenarioKind::SingleRebar | ScenarioKind::FourRebar)
    }

    pub fn rebar_centers(&self) -> Vec<Vec2> {
        let y = self.height - self.cover - self.rebar_radius;
        match self.kind {
            ScenarioKind::SingleRebar => alloc::vec![Vec2::new(0.5 * self.width, y)],
            ScenarioKind::FourRebar => (0..4).map(|k| Vec2::new(self.width * (2 * k + 1) as f64 / 8.0, y)).collect(),
            _ => Vec::new(),
        }
    }

    /// Zones of the initial adaptive discretization: `lmin_fine` within two fine spacings of an
    /// interface, graded to `lmin_coarse` at eight.
    pub fn initial_zones(&self) -> Vec<GradedZone> {
        if !self.interface_grading {
            return Vec::new();
        }
        let (r, lf) = (self.rebar_radius, self.lmin_fine);
        self.rebar_centers()
            .into_iter()
            .map(|center| GradedZone { center, r_f: r + 2.0 * lf, r_t: r + 8.0 * lf, fine_lmin: lf })
            .collect()
    }

    /// Control values of the loading program.
    pub fn targets(&self) -> Vec<f64> {
        (1..=self.steps).map(|k| self.control_end * k as f64 / self.steps as f64).collect()
    }

    pub fn domain(&self) -> Result<Domain> {
        let mut d = Domain::rectangle(0.0, 0.0, self.width, self.height, self.thickness)?;
        let r = self.rebar_radius;
        let segments = ((core::f64::consts::TAU * r / (0.5 * self.lmin_fine)).ceil() as usize).max(16);
        for c in self.rebar_centers() {
            d = d.with_circular_hole(c, r, segments)?;
        }
        Ok(d)
    }
}

const LATENT_SEED_MIX: u64 = 0xA076_1D64_78BD_642F;

/// A built specimen ready to run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub domain: Domain,
    pub generators: Vec<Generator>,
    pub load_case: LoadCase,
    pub control: Control,
    pub refinement: Option<RefinementConfig>,
    pub shared_points: Option<Vec<Vec2>>,
    /// Transport nodes whose outflow is reported as the flux (the first interface for rebars).
    pub flux_source: Selector,
}

pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let domain = spec.domain()?;
    let sample = |lmin: f64| sample_generator_points(&domain, &DensityField::uniform(lmin), spec.seed, spec.saturation);
    let (generators, refinement, shared_points) = match spec.mode {
        Mode::Fine => (physical(sample(spec.lmin_fine)?, true), None, None),
        Mode::Coarse => (physical(sample(spec.lmin_coarse)?, true), None, None),
        Mode::Adaptive => {
            // without sharing, fine zones come from an independent fine-density sample of the whole domain
            let fine_seed = if spec.shared_fine_points { spec.seed } else { spec.seed ^ LATENT_SEED_MIX };
            let fine = DensityField::uniform(spec.lmin_fine);
            let shared = Some(sample_generator_points(&domain, &fine, fine_seed, spec.saturation)?);
            let cfg = RefinementConfig { saturation: spec.saturation, ..RefinementConfig::new(spec.lmin_fine, spec.lmin_coarse) };
            let initial = DensityField { base_lmin: spec.lmin_coarse, overrides: spec.initial_zones() };
            let pts = sample_generator_points(&domain, &initial, spec.seed, spec.saturation)?;
            (physical(pts, false), Some(cfg), shared)
        }
    };

    let (w, h) = (spec.width, spec.height);
    let tol = 1e-9 * domain.diameter();
    let face = |axis, value| Selector::Band { axis, value, tol };
    let fix = |lc: &mut LoadCase, at: Vec2, c: Component| {
        lc.mech_dirichlet.push(MechDirichlet { selector: Selector::Nearest(at), component: c, value: Amount::fixed(0.0) })
    };
    let mut lc = LoadCase::default();
    fix(&mut lc, Vec2::new(0.0, 0.0), Component::Ux);
    fix(&mut lc, Vec2::new(0.0, 0.0), Component::Uy);
    fix(&mut lc, Vec2::new(w, 0.0), Component::Uy);

    let (control, flux_source) = match spec.kind {
        ScenarioKind::PressurizedBlock => {
            lc.pressure_dirichlet.push(PressureDirichlet { selector: face(Axis::X, 0.0), value: Amount::fixed(spec.pressure) });
            lc.pressure_dirichlet.push(PressureDirichlet { selector: face(Axis::X, w), value: Amount::fixed(0.0) });
            (Control::LoadFactor, face(Axis::X, 0.0))
        }
        ScenarioKind::Bend2d => {
            lc.pressure_dirichlet.push(PressureDirichlet { selector: face(Axis::Y, 0.0), value: Amount::fixed(spec.pressure) });
            lc.pressure_dirichlet.push(PressureDirichlet { selector: face(Axis::Y, h), value: Amount::fixed(0.0) });
            lc.nodal_forces.push(NodalForce {
                selector: Selector::Nearest(Vec2::new(0.5 * w, h)),
                fx: Amount::fixed(0.0),
                fy: Amount::scaled(-1.0),
            });
            let gauge = 0.5 * h;
            let control = Control::Opening {
                a: Vec2::new(0.5 * w - gauge, 0.0),
                b: Vec2::new(0.5 * w + gauge, 0.0),
                dir: Vec2::new(1.0, 0.0),
            };
            (control, face(Axis::Y, 0.0))
        }
        ScenarioKind::SingleRebar | ScenarioKind::FourRebar => {
            lc.pressure_dirichlet.push(PressureDirichlet { selector: Selector::Loop(0), value: Amount::fixed(0.0) });
            let interfaces: Vec<(Vec2, usize)> = spec.rebar_centers().into_iter().zip(1..).collect();
            for &(_, l) in &interfaces {
                lc.pressure_dirichlet.push(PressureDirichlet { selector: Selector::Loop(l), value: Amount::scaled(1.0) });
                lc.boundary_pressures.push(BoundaryPressure { loop_id: l, value: Amount::scaled(1.0) });
            }
            let control = Control::Corrosion(Corrosion {
                interfaces,
                radius: spec.rebar_radius,
                i_cor: spec.i_cor,
                alpha_e: spec.alpha_e,
            });
            (control, Selector::Loop(1))
        }
    };
    Ok(Scenario { spec: spec.clone(), domain, generators, load_case: lc, control, refinement, shared_points, flux_source })
}

fn physical(points: Vec<Vec2>, flag: bool) -> Vec<Generator> {
    points.into_iter().map(|pos| Generator { pos, physical: flag }).collect()
}

impl Scenario {
    pub fn simulation(&self, settings: StepSettings) -> Result<Simulation> {
        let sim = Simulation::new(
            self.domain.clone(),
            &self.generators,
            self.spec.mats,
            self.load_case.clone(),
            self.control.clone(),
            settings,
            self.refinement,
            self.spec.seed,
        )?;
        Ok(match &self.shared_points {
            Some(p) => sim.with_shared_fine_points(p.clone()),
            None => sim,
        })
    }

    fn flux_nodes(&self, model: &Model) -> Vec<usize> {
        match self.spec.kind {
            ScenarioKind::SingleRebar | ScenarioKind::FourRebar => (1..=self.spec.rebar_centers().len())
                .flat_map(|l| Selector::Loop(l).transport_nodes(&model.mesh))
                .collect(),
            _ => self.flux_source.transport_nodes(&model.mesh),
        }
    }
}

/// Quantities reported after every committed step.
#[derive(Clone, Debug, PartialEq)]
pub struct Observables {
    pub control_value: f64,
    /// Applied force (N) for bending, interface pressure (Pa) for corrosion, load factor otherwise.
    pub load: f64,
    /// Mass flow (kg/s) out of the pressurized face or the steel interfaces.
    pub flux: f64,
    pub mean_interface_pressure: Option<f64>,
    pub dof_count: usize,
    /// Damaged contacts with their crack opening (element, w_N).
    pub cracks: Vec<(usize, f64)>,
}

pub fn measure_outputs(scenario: &Scenario, model: &Model, state: &SystemState) -> Observables {
    let nodes = scenario.flux_nodes(model);
    let mean_interface_pressure = scenario.spec.is_rebar().then(|| {
        let n = nodes.len().max(1) as f64;
        nodes.iter().map(|&k| state.p[k]).sum::<f64>() / n
    });
    let cracks = state
        .contacts
        .iter()
        .enumerate()
        .filter(|(_, c)| c.d > 0.0)
        .map(|(e, c)| (e, state.crack_opening(&model.mesh, e, c.d)))
        .collect();
    Observables {
        control_value: state.control_value,
        load: state.load_factor,
        flux: model.outflow_from(state, &nodes),
        mean_interface_pressure,
        dof_count: model.mesh.dof_count(),
        cracks,
    }
}

/// One line of the output series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesRow {
    pub step: usize,
    pub control_value: f64,
    pub load_or_pressure: f64,
    pub flux: f64,
    pub dof_count: usize,
    pub wall_time_s: f64,
    pub refinement_events: usize,
}

/// Runs the loading program, calling `on_step` after each committed step.
pub fn run_scenario(
    scenario: &Scenario,
    settings: StepSettings,
    clock: &dyn Clock,
    mut on_step: impl FnMut(&Simulation, &SeriesRow, &Observables),
) -> Result<(Simulation, Vec<SeriesRow>)> {
    let mut sim = scenario.simulation(settings)?;
    let mut rows = Vec::new();
    adaptive_driver(&mut sim, &scenario.spec.targets(), clock, |s, r: &StepRecord| {
        let obs = measure_outputs(scenario, s.model(), s.state());
        let row = SeriesRow {
            step: r.step,
            control_value: r.control_value,
            load_or_pressure: r.load_factor,
            flux: obs.flux,
            dof_count: r.dof_count,
            wall_time_s: r.wall_time_s,
            refinement_events: r.refinement_events,
        };
        on_step(s, &row, &obs);
        rows.push(row);
    })?;
    Ok((sim, rows))
}
