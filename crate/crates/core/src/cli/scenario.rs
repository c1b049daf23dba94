//! Scenario files: a JSON document with an explicit schema version.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegrationSettings, Model, State};
use crate::error::{BubbleError, Result};
use crate::gas::{BubbleGasState, EnergyModel, GasLaw};
use crate::potential::JACOBIAN_FD_STEP;
use crate::reference::TranslationCoefficient;
use crate::shapes::{CavityMesh, Configuration, Domain, Mat3, ShapeParams, TangentVector, Vec3};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub liquid: Liquid,
    #[serde(default)]
    pub surface_tension: f64,
    #[serde(default)]
    pub domain: DomainSpec,
    pub bubbles: Vec<BubbleSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub comparison: ComparisonSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Liquid {
    pub density: f64,
    pub p_infinity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    #[default]
    Unbounded,
    CavitySphere {
        center: [f64; 3],
        radius: f64,
    },
    /// OFF file, relative to the scenario file's directory.
    CavityMesh {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleSpec {
    pub shape: ShapeSpec,
    #[serde(default)]
    pub velocity: VelocitySpec,
    pub gas: GasSpec,
    pub mass: MassSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// `matrix` is the symmetric positive definite `S` in `x = c + S y`.
    Ellipsoid {
        center: [f64; 3],
        matrix: [[f64; 3]; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySpec {
    #[serde(default)]
    pub center_rate: [f64; 3],
    /// Sphere only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_rate: Option<f64>,
    /// Ellipsoid only; symmetric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_rate: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GasSpec {
    /// `p = K rho^gamma`.
    Polytropic {
        #[serde(rename = "K")]
        k: f64,
        gamma: f64,
    },
}

/// Gas mass, or `"equilibrium"`: the mass that puts the initial bubble (as a
/// sphere of equal volume) in equilibrium with `p_infinity` and surface
/// tension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MassSpec {
    Value(f64),
    Named(MassKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassKeyword {
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub mesh_level: usize,
    pub fd_step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub collision_gap_fraction: f64,
    /// Defaults to `1e-3` Minnaert periods.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_step: Option<f64>,
    /// Boundary residual every `n`-th output sample; 0 disables it.
    pub residual_cadence: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            mesh_level: 2,
            fd_step: JACOBIAN_FD_STEP,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            collision_gap_fraction: 0.02,
            initial_step: None,
            residual_cadence: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_end: f64,
    pub output_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComparisonSpec {
    pub translation_coefficient: TranslationCoefficient,
}

/// Everything the dynamics needs, built from a validated scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub model: Model,
    pub initial: State,
    pub settings: IntegrationSettings,
    pub translation: TranslationCoefficient,
}

impl Scenario {
    /// Parses and validates field values. `text` is kept for line anchors.
    pub fn parse(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| {
            BubbleError::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        if let Err(BubbleError::Validation { path, message }) = scenario.validate() {
            let anchor = locate(text, &path).map_or(String::new(), |line| format!("line {line}: "));
            return Err(BubbleError::Validation {
                path,
                message: format!("{anchor}{message}"),
            });
        }
        Ok(scenario)
    }

    pub fn from_file(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let scenario = Self::parse(&text).map_err(|e| match e {
            BubbleError::Parse(m) => BubbleError::Parse(format!("{}: {m}", path.display())),
            BubbleError::Validation { path: p, message } => BubbleError::Validation {
                path: p,
                message: format!("{message} (in {})", path.display()),
            },
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((scenario, base))
    }

    /// Pretty JSON with every default spelled out.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Field-level checks. Errors name the offending field by path.
    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, msg: String| Err(BubbleError::validation(path, msg));
        if self.schema_version != SCHEMA_VERSION {
            return err(
                "schema_version",
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            );
        }
        if !(self.liquid.density > 0.0 && self.liquid.density.is_finite()) {
            return err(
                "liquid.density",
                format!("must be positive, got {}", self.liquid.density),
            );
        }
        if !(self.liquid.p_infinity >= 0.0 && self.liquid.p_infinity.is_finite()) {
            return err(
                "liquid.p_infinity",
                format!("must be non-negative, got {}", self.liquid.p_infinity),
            );
        }
        if !(self.surface_tension >= 0.0 && self.surface_tension.is_finite()) {
            return err(
                "surface_tension",
                format!("must be non-negative, got {}", self.surface_tension),
            );
        }
        if let DomainSpec::CavitySphere { radius, .. } = self.domain {
            if !(radius > 0.0 && radius.is_finite()) {
                return err("domain.radius", format!("must be positive, got {radius}"));
            }
        }
        if self.bubbles.is_empty() {
            return err("bubbles", "at least one bubble is required".into());
        }
        for (k, b) in self.bubbles.iter().enumerate() {
            let at = |f: &str| format!("bubbles[{k}].{f}");
            match &b.shape {
                ShapeSpec::Sphere { radius, .. } => {
                    if !(*radius > 0.0 && radius.is_finite()) {
                        return err(
                            &at("shape.radius"),
                            format!("must be positive, got {radius}"),
                        );
                    }
                    if b.velocity.matrix_rate.is_some() {
                        return err(
                            &at("velocity.matrix_rate"),
                            "only ellipsoids have a matrix rate".into(),
                        );
                    }
                }
                ShapeSpec::Ellipsoid { matrix, .. } => {
                    if let Err(e) = ShapeParams::ellipsoid(Vec3::zeros(), mat3(matrix)) {
                        return err(&at("shape.matrix"), e.to_string());
                    }
                    if b.velocity.radius_rate.is_some() {
                        return err(
                            &at("velocity.radius_rate"),
                            "only spheres have a radius rate".into(),
                        );
                    }
                    if let Some(m) = &b.velocity.matrix_rate {
                        let m = mat3(m);
                        if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                            return err(&at("velocity.matrix_rate"), "must be symmetric".into());
                        }
                    }
                }
            }
            let GasSpec::Polytropic { k: kk, gamma } = b.gas;
            if !(kk > 0.0 && kk.is_finite()) {
                return err(&at("gas.K"), format!("must be positive, got {kk}"));
            }
            if !(gamma >= 1.0 && gamma.is_finite()) {
                return err(&at("gas.gamma"), format!("must be at least 1, got {gamma}"));
            }
            match b.mass {
                MassSpec::Value(m) if !(m > 0.0 && m.is_finite()) => {
                    return err(&at("mass"), format!("must be positive, got {m}"));
                }
                MassSpec::Named(MassKeyword::Equilibrium) if !(self.liquid.p_infinity > 0.0) => {
                    return err(
                        &at("mass"),
                        "equilibrium mass needs a positive p_infinity".into(),
                    );
                }
                _ => {}
            }
        }
        let s = &self.solver;
        if s.mesh_level > 5 {
            return err(
                "solver.mesh_level",
                format!("must be at most 5, got {}", s.mesh_level),
            );
        }
        for (name, v) in [
            ("fd_step", s.fd_step),
            ("rel_tol", s.rel_tol),
            ("abs_tol", s.abs_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(
                    &format!("solver.{name}"),
                    format!("must be positive, got {v}"),
                );
            }
        }
        if !(s.collision_gap_fraction >= 0.0 && s.collision_gap_fraction < 1.0) {
            return err(
                "solver.collision_gap_fraction",
                format!("must lie in [0, 1), got {}", s.collision_gap_fraction),
            );
        }
        if let Some(h) = s.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return err("solver.initial_step", format!("must be positive, got {h}"));
            }
        }
        if !(self.time.t_end > 0.0 && self.time.t_end.is_finite()) {
            return err(
                "time.t_end",
                format!("must be positive, got {}", self.time.t_end),
            );
        }
        if !(self.time.output_dt > 0.0 && self.time.output_dt.is_finite()) {
            return err(
                "time.output_dt",
                format!("must be positive, got {}", self.time.output_dt),
            );
        }
        Ok(())
    }

    pub fn configuration(&self, base: &Path) -> Result<Configuration> {
        let bubbles = self
            .bubbles
            .iter()
            .map(|b| match &b.shape {
                ShapeSpec::Sphere { center, radius } => {
                    ShapeParams::sphere(Vec3::from(*center), *radius)
                }
                ShapeSpec::Ellipsoid { center, matrix } => {
                    ShapeParams::ellipsoid(Vec3::from(*center), mat3(matrix))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let domain = match &self.domain {
            DomainSpec::Unbounded => Domain::Unbounded,
            DomainSpec::CavitySphere { center, radius } => Domain::CavitySphere {
                center: Vec3::from(*center),
                radius: *radius,
            },
            DomainSpec::CavityMesh { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                Domain::CavityMesh(Arc::new(CavityMesh::from_file(&full)?))
            }
        };
        Ok(Configuration::new(bubbles, domain))
    }

    pub fn velocities(&self, config: &Configuration) -> Vec<TangentVector> {
        self.bubbles
            .iter()
            .zip(&config.bubbles)
            .map(|(spec, b)| {
                let center_rate = Vec3::from(spec.velocity.center_rate);
                match b {
                    ShapeParams::Sphere(_) => TangentVector::Sphere {
                        center_rate,
                        radius_rate: spec.velocity.radius_rate.unwrap_or(0.0),
                    },
                    ShapeParams::Ellipsoid(_) => TangentVector::Ellipsoid {
                        center_rate,
                        matrix_rate: spec.velocity.matrix_rate.as_ref().map_or(
                            Mat3::zeros(),
                            |m| {
                                // symmetrize away rounding in the file
                                let m = mat3(m);
                                (m + m.transpose()) * 0.5
                            },
                        ),
                    },
                }
            })
            .collect()
    }

    pub fn energy_model(&self, config: &Configuration) -> Result<EnergyModel> {
        let gases = self
            .bubbles
            .iter()
            .zip(&config.bubbles)
            .map(|(spec, b)| {
                let GasSpec::Polytropic { k, gamma } = spec.gas;
                let law = GasLaw::polytropic(k, gamma)?;
                let mass = match spec.mass {
                    MassSpec::Value(m) => m,
                    MassSpec::Named(MassKeyword::Equilibrium) => {
                        let r = b.equivalent_radius();
                        let p = self.liquid.p_infinity + 2.0 * self.surface_tension / r;
                        law.density_at(p)? * 4.0 / 3.0 * PI * r.powi(3)
                    }
                };
                BubbleGasState::new(mass, law)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnergyModel {
            p_infinity: self.liquid.p_infinity,
            surface_tension: self.surface_tension,
            gases,
        })
    }

    /// Builds the model and initial state without physical preflight checks.
    pub fn prepare(&self, base: &Path) -> Result<Prepared> {
        let config = self.configuration(base)?;
        let energy = self.energy_model(&config)?;
        let velocity = self.velocities(&config);
        let initial = State::new(config, velocity, 0.0)?;
        let s = &self.solver;
        let model = Model {
            density: self.liquid.density,
            energy,
            mesh_level: s.mesh_level,
            fd_step: s.fd_step,
            collision_gap_fraction: s.collision_gap_fraction,
        };
        let settings = IntegrationSettings {
            t_end: self.time.t_end,
            output_dt: self.time.output_dt,
            rel_tol: s.rel_tol,
            abs_tol: s.abs_tol,
            initial_step: s.initial_step,
            residual_cadence: s.residual_cadence,
            max_steps: 1_000_000,
        };
        Ok(Prepared {
            model,
            initial,
            settings,
            translation: self.comparison.translation_coefficient,
        })
    }
}

fn mat3(m: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| m[i][j])
}

/// Line of the value at a dotted path such as `bubbles[1].gas.gamma`, found
/// by scanning the JSON text. `None` if the path is not present verbatim.
pub fn locate(text: &str, path: &str) -> Option<usize> {
    let mut segments = Vec::new();
    for part in path.split('.') {
        let (name, rest) = part.split_once('[').map_or((part, ""), |(n, r)| (n, r));
        segments.push(Segment::Key(name.to_string()));
        for idx in rest.split('[') {
            if let Ok(i) = idx.trim_end_matches(']').parse::<usize>() {
                segments.push(Segment::Index(i));
            }
        }
    }
    let mut scanner = Scanner {
        bytes: text.as_bytes(),
        pos: 0,
        line: 1,
    };
    scanner.skip_ws();
    scanner.find(&segments)
}

enum Segment {
    Key(String),
    Index(usize),
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl Scanner<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        if c == b'\n' {
            self.line += 1;
        }
        self.pos += 1;
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.bump();
        }
    }

    fn string(&mut self) -> Option<String> {
        if self.bump()? != b'"' {
            return None;
        }
        let start = self.pos;
        loop {
            match self.bump()? {
                b'\\' => {
                    self.bump()?;
                }
                b'"' => break,
                _ => {}
            }
        }
        Some(String::from_utf8_lossy(&self.bytes[start..self.pos - 1]).into_owned())
    }

    /// Skips one value of any kind.
    fn skip_value(&mut self) -> Option<()> {
        self.skip_ws();
        match self.peek()? {
            b'"' => {
                self.string()?;
            }
            open @ (b'{' | b'[') => {
                let close = if open == b'{' { b'}' } else { b']' };
                self.bump();
                let mut depth = 1;
                while depth > 0 {
                    match self.peek()? {
                        b'"' => {
                            self.string()?;
                            continue;
                        }
                        c if c == open => depth += 1,
                        c if c == close => depth -= 1,
                        _ => {}
                    }
                    self.bump();
                }
            }
            _ => {
                while !matches!(
                    self.peek(),
                    None | Some(b',' | b'}' | b']' | b' ' | b'\n' | b'\r' | b'\t')
                ) {
                    self.bump();
                }
            }
        }
        Some(())
    }

    fn find(&mut self, path: &[Segment]) -> Option<usize> {
        self.skip_ws();
        let Some((first, rest)) = path.split_first() else {
            return Some(self.line);
        };
        match first {
            Segment::Key(key) => {
                if self.bump()? != b'{' {
                    return None;
                }
                loop {
                    self.skip_ws();
                    if self.peek()? == b'}' {
                        return None;
                    }
                    let name = self.string()?;
                    self.skip_ws();
                    if self.bump()? != b':' {
                        return None;
                    }
                    self.skip_ws();
                    if &name == key {
                        return self.find(rest);
                    }
                    self.skip_value()?;
                    self.skip_ws();
                    if self.peek()? == b',' {
                        self.bump();
                    }
                }
            }
            Segment::Index(i) => {
                if self.bump()? != b'[' {
                    return None;
                }
                for _ in 0..*i {
                    self.skip_value()?;
                    self.skip_ws();
                    if self.bump()? != b',' {
                        return None;
                    }
                }
                self.find(rest)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SINGLE: &str = r#"{
  "schema_version": 1,
  "liquid": { "density": 1.0, "p_infinity": 1.0 },
  "bubbles": [
    {
      "shape": { "kind": "sphere", "center": [0, 0, 0], "radius": 1.2 },
      "velocity": { "center_rate": [0.3, 0.1, 0.0], "radius_rate": 0.0 },
      "gas": { "kind": "polytropic", "K": 1.0, "gamma": 1.4 },
      "mass": 4.1887902047863905
    }
  ],
  "time": { "t_end": 1.0, "output_dt": 0.1 }
}"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::parse(SINGLE).unwrap();
        assert_eq!(s.solver, SolverSpec::default());
        assert_eq!(s.domain, DomainSpec::Unbounded);
        assert_eq!(
            s.comparison.translation_coefficient,
            TranslationCoefficient::Resolved
        );
        let p = s.prepare(Path::new(".")).unwrap();
        assert_eq!(p.model.mesh_level, 2);
        assert_eq!(p.initial.velocity_coords(), vec![0.3, 0.1, 0.0, 0.0]);
    }

    #[test]
    fn canonical_form_round_trips() {
        let s = Scenario::parse(SINGLE).unwrap();
        let again = Scenario::parse(&s.to_canonical_json()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn bad_gamma_names_the_field_and_line() {
        let text = SINGLE.replace("\"gamma\": 1.4", "\"gamma\": 0.9");
        match Scenario::parse(&text) {
            Err(BubbleError::Validation { path, message }) => {
                assert_eq!(path, "bubbles[0].gas.gamma");
                assert!(message.starts_with("line 8:"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line() {
        let text = SINGLE.replace("\"radius\": 1.2 }", "\"radius\": 1.2 ");
        match Scenario::parse(&text) {
            Err(BubbleError::Parse(m)) => assert!(m.contains("line"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = SINGLE.replace(
            "\"schema_version\": 1,",
            "\"schema_version\": 1, \"colour\": 3,",
        );
        assert!(matches!(Scenario::parse(&text), Err(BubbleError::Parse(_))));
    }

    #[test]
    fn equilibrium_mass() {
        let text = SINGLE.replace("\"mass\": 4.1887902047863905", "\"mass\": \"equilibrium\"");
        let s = Scenario::parse(&text).unwrap();
        let p = s.prepare(Path::new(".")).unwrap();
        let gas = p.model.energy.gases[0];
        let r = gas.equilibrium_radius(1.0, 0.0).unwrap();
        assert!((r - 1.2).abs() < 1e-12);
    }

    #[test]
    fn locate_finds_nested_paths() {
        assert_eq!(locate(SINGLE, "time.output_dt"), Some(12));
        assert_eq!(locate(SINGLE, "bubbles[0].shape.radius"), Some(6));
        assert_eq!(locate(SINGLE, "solver.mesh_level"), None);
    }
}
