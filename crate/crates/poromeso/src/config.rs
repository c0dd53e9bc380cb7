//! TOML run configuration.

use std::path::{Path, PathBuf};

use poromeso_core::adapt::RefinementConfig;
use poromeso_core::materials::{Materials, MechMaterial, TransportMaterial};
use poromeso_core::scenarios::{build_scenario, Mode, Scenario, ScenarioSpec};
use poromeso_core::solver::StepSettings;
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Fine,
    Coarse,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    PressurizedBlock,
    Bend2dWithPressure,
    SingleRebar,
    FourRebar,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: ModeName,
    #[serde(default = "one")]
    pub seed: u64,
    pub scenario: ScenarioBlock,
    pub mechanical: Option<MechBlock>,
    pub transport: Option<TransportBlock>,
    #[serde(default)]
    pub refinement: RefinementBlock,
    #[serde(default)]
    pub control: ControlBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    pub kind: KindName,
    pub biot: Option<f64>,
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub thickness: Option<f64>,
    pub rebar_radius: Option<f64>,
    pub cover: Option<f64>,
    pub pressure: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechBlock {
    #[serde(rename = "E0")]
    pub e0: f64,
    pub alpha: f64,
    pub ft: f64,
    #[serde(rename = "Gt")]
    pub gt: f64,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportBlock {
    pub kappa: f64,
    pub xi: f64,
    pub mu: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementBlock {
    pub lmin_fine: Option<f64>,
    pub lmin_coarse: Option<f64>,
    pub threshold_ratio: Option<f64>,
    pub r_f: Option<f64>,
    pub r_t: Option<f64>,
    pub max_events_per_step: Option<usize>,
    pub saturation: Option<usize>,
    /// Adaptive fine zones reuse the fine model's generator points.
    #[serde(default)]
    pub shared_fine_points: bool,
    /// Start adaptive rebar runs with fine spacing next to the interfaces.
    pub interface_grading: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBlock {
    pub end: Option<f64>,
    pub steps: Option<usize>,
    pub i_cor: Option<f64>,
    pub alpha_e: Option<f64>,
    pub tol_rel: Option<f64>,
    pub max_stagger: Option<usize>,
    pub max_bisections: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Write cracks_<step>.vtk every this many steps; 0 disables.
    #[serde(default = "ten")]
    pub crack_interval: usize,
    /// Record elapsed time; when off the column is zero and outputs are byte-reproducible.
    #[serde(default = "yes")]
    pub wall_time: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: default_dir(), crack_interval: ten(), wall_time: yes() }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn ten() -> usize {
    10
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn spec(&self) -> Result<ScenarioSpec, CliError> {
        let s = &self.scenario;
        let biot = s.biot.unwrap_or(0.0);
        let mut spec = match s.kind {
            KindName::PressurizedBlock => ScenarioSpec::pressurized_block(),
            KindName::Bend2dWithPressure => ScenarioSpec::bend2d(biot),
            KindName::SingleRebar => ScenarioSpec::single_rebar(biot),
            KindName::FourRebar => ScenarioSpec::four_rebar(biot),
        };
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut spec.width, s.width);
        set(&mut spec.height, s.height);
        set(&mut spec.thickness, s.thickness);
        set(&mut spec.rebar_radius, s.rebar_radius);
        set(&mut spec.cover, s.cover);
        set(&mut spec.pressure, s.pressure);

        let mech = match self.mechanical {
            Some(m) => MechMaterial::new(m.e0, m.alpha, m.ft, m.gt).map_err(invalid("mechanical"))?,
            None => spec.mats.mech,
        };
        let transport = match self.transport {
            Some(t) => TransportMaterial::new(t.kappa, t.xi, t.mu, t.rho).map_err(invalid("transport"))?,
            None => spec.mats.transport,
        };
        spec.mats = Materials::new(mech, transport, s.biot.unwrap_or(spec.mats.biot)).map_err(invalid("scenario.biot"))?;

        let r = &self.refinement;
        set(&mut spec.lmin_fine, r.lmin_fine);
        set(&mut spec.lmin_coarse, r.lmin_coarse);
        if let Some(n) = r.saturation {
            spec.saturation = n;
        }
        spec.shared_fine_points = r.shared_fine_points;
        if let Some(g) = r.interface_grading {
            spec.interface_grading = g;
        }

        let c = &self.control;
        set(&mut spec.control_end, c.end);
        set(&mut spec.i_cor, c.i_cor);
        set(&mut spec.alpha_e, c.alpha_e);
        if let Some(n) = c.steps {
            spec.steps = n;
        }
        spec.mode = match self.mode {
            ModeName::Fine => Mode::Fine,
            ModeName::Coarse => Mode::Coarse,
            ModeName::Adaptive => Mode::Adaptive,
        };
        spec.seed = self.seed;
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn settings(&self) -> StepSettings {
        let d = StepSettings::default();
        StepSettings {
            tol: self.control.tol_rel.unwrap_or(d.tol),
            max_stagger: self.control.max_stagger.unwrap_or(d.max_stagger),
            max_bisections: self.control.max_bisections.unwrap_or(d.max_bisections),
        }
    }

    /// Builds the scenario for `seed`, applying the refinement overrides.
    pub fn scenario_with_seed(&self, seed: u64) -> Result<Scenario, CliError> {
        let mut spec = self.spec()?;
        spec.seed = seed;
        let mut sc = build_scenario(&spec).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(cfg) = sc.refinement.as_mut() {
            self.apply_refinement(cfg)?;
        }
        Ok(sc)
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        self.scenario_with_seed(self.seed)
    }

    fn apply_refinement(&self, cfg: &mut RefinementConfig) -> Result<(), CliError> {
        let r = &self.refinement;
        if let Some(v) = r.threshold_ratio {
            cfg.threshold_ratio = v;
        }
        if let Some(v) = r.r_f {
            cfg.r_f = v;
        }
        if let Some(v) = r.r_t {
            cfg.r_t = v;
        }
        if let Some(v) = r.max_events_per_step {
            cfg.max_events_per_step = v;
        }
        cfg.validate().map_err(invalid("refinement"))
    }
}

fn invalid(block: &'static str) -> impl Fn(poromeso_core::Error) -> CliError {
    move |e| CliError::Config(format!("{block}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use poromeso_core::scenarios::ScenarioKind;

    const MINIMAL: &str = r#"
mode = "fine"
[scenario]
kind = "pressurized_block"
"#;

    #[test]
    fn minimal_config_parses() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        let spec = c.spec().unwrap();
        assert_eq!(spec.kind, ScenarioKind::PressurizedBlock);
        assert_eq!(c.output.crack_interval, 10);
        assert_eq!(c.settings(), StepSettings::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL}\nbogus_key = 3\n");
        let Err(CliError::Config(msg)) = RunConfig::parse(&text) else { panic!("accepted") };
        assert!(msg.contains("bogus_key"), "{msg}");
        let text = "mode = \"fine\"\n[scenario]\nkind = \"single_rebar\"\n[mechanical]\nE0 = 1e9\nalpha = 1\nft = 1e6\nGt = 10\nnu = 0.2\n";
        let Err(CliError::Config(msg)) = RunConfig::parse(text) else { panic!("accepted") };
        assert!(msg.contains("nu"), "{msg}");
    }

    #[test]
    fn table_keys_override_materials() {
        let text = r#"
mode = "adaptive"
seed = 4
[scenario]
kind = "single_rebar"
biot = 0.5
[mechanical]
E0 = 30e9
alpha = 0.5
ft = 3e6
Gt = 100
[transport]
kappa = 2e-16
xi = 0.01
mu = 1e4
rho = 3000
[refinement]
lmin_fine = 0.004
lmin_coarse = 0.012
threshold_ratio = 0.6
shared_fine_points = true
"#;
        let c = RunConfig::parse(text).unwrap();
        let spec = c.spec().unwrap();
        assert_eq!(spec.mats.mech.e0, 30e9);
        assert_eq!(spec.mats.transport.rho, 3000.0);
        assert_eq!(spec.mats.biot, 0.5);
        assert_eq!(spec.lmin_fine, 0.004);
        assert_eq!(spec.seed, 4);
        let sc = c.scenario().unwrap();
        let cfg = sc.refinement.unwrap();
        assert_eq!(cfg.threshold_ratio, 0.6);
        assert_eq!(cfg.r_f, 5.0 * 0.004);
        assert!(sc.shared_points.is_some());
    }

    #[test]
    fn bad_values_are_config_errors() {
        let text = format!("{MINIMAL}[transport]\nkappa = -1\nxi = 1\nmu = 1\nrho = 1\n");
        assert!(matches!(RunConfig::parse(&text).unwrap().spec(), Err(CliError::Config(_))));
        let text = "mode = \"medium\"\n[scenario]\nkind = \"pressurized_block\"\n";
        assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))));
    }
}
