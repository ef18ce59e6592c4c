//! Scenario configuration files.
//!
//! Lengths are meters, frequencies Hz, angles degrees, delays seconds.

use std::path::{Path, PathBuf};

use homfield::constants::angular_frequency;
use homfield::correlation::{CarrierMode, GaussianPacket};
use homfield::far_field::PolarizationSelector;
use homfield::scene::{DielectricScene, PbpLayout, Primitive, SceneBuilder};
use homfield::solver::{PlaneWaveMode, PrecondKind, SolveOptions};
use homfield::vec3::{normalize, Vec3};
use homfield::C64;
use serde::{Deserialize, Serialize};
use toml::Spanned;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}: line {line}: {message}")]
    Syntax {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: line {line}: field `{field}`: {message}")]
    Field {
        file: String,
        field: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    frequency: Spanned<f64>,
    scene: Spanned<RawScene>,
    modes: Spanned<Vec<RawMode>>,
    sweep: RawSweep,
    outputs: Spanned<Vec<OutputKind>>,
    #[serde(default)]
    oracle: Oracle,
    coincidence: Option<Spanned<RawCoincidence>>,
    #[serde(default)]
    solver: RawSolver,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    file: Option<String>,
    spacing: Option<Spanned<f64>>,
    padding: Option<usize>,
    primitives: Option<Vec<Spanned<RawPrimitive>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    spacing: Spanned<f64>,
    padding: Option<usize>,
    primitives: Vec<Spanned<RawPrimitive>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawPrimitive {
    Sphere {
        #[serde(default)]
        center: Vec3,
        radius: f64,
        eps: [f64; 2],
    },
    Slab {
        min: Vec3,
        max: Vec3,
        eps: [f64; 2],
    },
    PbpArray(RawPbp),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPbp {
    preset: Option<String>,
    wavelength: f64,
    periodicity: Option<f64>,
    height: Option<f64>,
    length: Option<f64>,
    width: Option<f64>,
    deflection_angle_deg: Option<f64>,
    fins_per_group: Option<usize>,
    groups_x: Option<usize>,
    rows: Option<usize>,
    n_fin: Option<f64>,
    n_substrate: Option<f64>,
    substrate_thickness: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    direction: Vec3,
    polarization: Vec3,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    theta1: Spanned<AngleSpec>,
    phi1: Spanned<AngleSpec>,
    theta2: Spanned<AngleSpec>,
    phi2: Spanned<AngleSpec>,
    pol_a: Option<Spanned<PolSpec>>,
    pol_b: Option<Spanned<PolSpec>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum AngleSpec {
    Fixed(f64),
    Range(RangeSpec),
}

/// Inclusive arithmetic range.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl RangeSpec {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        let RangeSpec { start, stop, step } = *self;
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err("range bounds must be finite".into());
        }
        if stop < start {
            return Err(format!("empty range: stop {stop} is below start {start}"));
        }
        if !(step > 0.0) {
            return Err(format!("step must be positive, got {step}"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| start + i as f64 * step).collect())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PolSpec {
    Named(String),
    Explicit([[f64; 2]; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    G2Map,
    P2Map,
    CoincidenceCurve,
    FarfieldDump,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Oracle {
    #[default]
    Vie,
    Mie,
    Both,
}

impl Oracle {
    pub fn uses_vie(self) -> bool {
        self != Oracle::Mie
    }

    pub fn uses_mie(self) -> bool {
        self != Oracle::Vie
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoincidence {
    sigma: f64,
    omega0: Option<f64>,
    carrier: Option<String>,
    delays: RangeSpec,
    detector1: Option<[f64; 2]>,
    detector2: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol: Option<f64>,
    max_iter: Option<usize>,
    precond: Option<String>,
    blocks: Option<[usize; 3]>,
    deterministic: Option<bool>,
}

/// One swept (or fixed) detector axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    /// `theta1`, `phi1`, `theta2` or `phi2`.
    pub name: String,
    pub values_deg: Vec<f64>,
    /// The other angle of the same detector.
    pub fixed_name: String,
    pub fixed_deg: f64,
}

impl Axis {
    /// `(θ, φ)` in radians for each axis value.
    pub fn directions(&self) -> Vec<(f64, f64)> {
        self.values_deg
            .iter()
            .map(|&v| {
                let (t, p) = if self.name.starts_with("theta") {
                    (v, self.fixed_deg)
                } else {
                    (self.fixed_deg, v)
                };
                (t.to_radians(), p.to_radians())
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CoincidenceSpec {
    pub packet: GaussianPacket,
    pub delays: Vec<f64>,
    pub detector1_deg: [f64; 2],
    pub detector2_deg: [f64; 2],
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub frequency: f64,
    pub omega: f64,
    pub spacing: f64,
    pub padding: usize,
    pub primitives: Vec<Primitive>,
    pub modes: [PlaneWaveMode; 2],
    pub axis1: Axis,
    pub axis2: Axis,
    pub pol_a: PolarizationSelector,
    pub pol_b: PolarizationSelector,
    pub outputs: Vec<OutputKind>,
    pub oracle: Oracle,
    pub coincidence: Option<CoincidenceSpec>,
    pub solver: SolveOptions,
    /// Config text as read, plus the scene file text when referenced.
    pub source: String,
    pub scene_source: Option<String>,
}

impl Scenario {
    pub fn build_scene(&self) -> homfield::Result<DielectricScene> {
        let mut b = SceneBuilder::new(self.spacing).padding(self.padding);
        for p in &self.primitives {
            b = b.add(p.clone());
        }
        b.build()
    }

    /// The sphere the Mie oracle can model, if the scene is a single
    /// sphere at the origin.
    pub fn mie_sphere(&self) -> Option<(f64, C64)> {
        match self.primitives.as_slice() {
            [Primitive::Sphere {
                center,
                radius,
                rel_eps,
            }] if *center == [0.0; 3] => Some((*radius, *rel_eps)),
            _ => None,
        }
    }
}

struct Ctx<'a> {
    file: String,
    text: &'a str,
}

impl Ctx<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn field<T>(&self, field: &str, span: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        ConfigError::Field {
            file: self.file.clone(),
            field: field.into(),
            line: self.line(span.span().start),
            message: message.into(),
        }
    }

    fn parse<T: serde::de::DeserializeOwned>(&self) -> Result<T, ConfigError> {
        toml::from_str(self.text).map_err(|e| ConfigError::Syntax {
            file: self.file.clone(),
            line: e.span().map(|s| self.line(s.start)).unwrap_or(1),
            message: e.message().to_string(),
        })
    }
}

pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text, &path.display().to_string(), path.parent())
}

/// Parses config text; `base` resolves relative scene file references.
pub fn parse(text: &str, file: &str, base: Option<&Path>) -> Result<Scenario, ConfigError> {
    let ctx = Ctx {
        file: file.into(),
        text,
    };
    let raw: RawConfig = ctx.parse()?;

    let frequency = *raw.frequency.get_ref();
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(ctx.field("frequency", &raw.frequency, "must be a positive frequency in Hz"));
    }
    let omega = angular_frequency(frequency);

    let (spacing, padding, primitives, scene_source) = resolve_scene(&ctx, &raw.scene, base)?;

    let modes = raw.modes.get_ref();
    if modes.len() != 2 {
        return Err(ctx.field(
            "modes",
            &raw.modes,
            format!("exactly two incident modes are required, found {}", modes.len()),
        ));
    }
    let mut built = Vec::new();
    for (i, m) in modes.iter().enumerate() {
        let mode = PlaneWaveMode::new(normalize(m.direction), normalize(m.polarization), omega)
            .map_err(|e| ctx.field(&format!("modes[{i}]"), &raw.modes, e.to_string()))?;
        built.push(mode);
    }
    let modes = [built[0], built[1]];

    let sweep = &raw.sweep;
    let axis1 = detector_axis(&ctx, ("theta1", &sweep.theta1), ("phi1", &sweep.phi1))?;
    let axis2 = detector_axis(&ctx, ("theta2", &sweep.theta2), ("phi2", &sweep.phi2))?;
    let pol_a = selector(&ctx, "sweep.pol_a", sweep.pol_a.as_ref())?;
    let pol_b = selector(&ctx, "sweep.pol_b", sweep.pol_b.as_ref())?;

    let mut outputs = raw.outputs.get_ref().clone();
    if outputs.is_empty() {
        return Err(ctx.field("outputs", &raw.outputs, "at least one output is required"));
    }
    outputs.dedup();

    let coincidence = match &raw.coincidence {
        Some(c) => Some(resolve_coincidence(&ctx, c, omega, &axis1, &axis2)?),
        None if outputs.contains(&OutputKind::CoincidenceCurve) => {
            return Err(ctx.field(
                "outputs",
                &raw.outputs,
                "coincidence_curve requested without a [coincidence] table",
            ))
        }
        None => None,
    };

    let solver = resolve_solver(&ctx, &raw.solver)?;

    Ok(Scenario {
        frequency,
        omega,
        spacing,
        padding,
        primitives,
        modes,
        axis1,
        axis2,
        pol_a,
        pol_b,
        outputs,
        oracle: raw.oracle,
        coincidence,
        solver,
        source: text.to_string(),
        scene_source,
    })
}

type SceneParts = (f64, usize, Vec<Primitive>, Option<String>);

fn resolve_scene(ctx: &Ctx, scene: &Spanned<RawScene>, base: Option<&Path>) -> Result<SceneParts, ConfigError> {
    let raw = scene.get_ref();
    if let Some(file) = &raw.file {
        if raw.spacing.is_some() || raw.primitives.is_some() || raw.padding.is_some() {
            return Err(ctx.field("scene", scene, "give either `file` or an inline scene, not both"));
        }
        let path = base.map(|b| b.join(file)).unwrap_or_else(|| PathBuf::from(file));
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        let sub = Ctx {
            file: path.display().to_string(),
            text: &text,
        };
        let parsed: SceneFile = sub.parse()?;
        let prims = primitives(&sub, &parsed.primitives)?;
        let spacing = check_spacing(&sub, &parsed.spacing)?;
        return Ok((spacing, parsed.padding.unwrap_or(2), prims, Some(text.clone())));
    }
    let Some(spacing) = &raw.spacing else {
        return Err(ctx.field("scene.spacing", scene, "missing grid spacing"));
    };
    let spacing = check_spacing(ctx, spacing)?;
    let prims = match &raw.primitives {
        Some(p) if !p.is_empty() => primitives(ctx, p)?,
        _ => return Err(ctx.field("scene.primitives", scene, "scene has no primitives")),
    };
    Ok((spacing, raw.padding.unwrap_or(2), prims, None))
}

fn check_spacing(ctx: &Ctx, s: &Spanned<f64>) -> Result<f64, ConfigError> {
    let h = *s.get_ref();
    if !(h > 0.0 && h.is_finite()) {
        return Err(ctx.field("scene.spacing", s, format!("must be positive, got {h}")));
    }
    Ok(h)
}

fn primitives(ctx: &Ctx, raw: &[Spanned<RawPrimitive>]) -> Result<Vec<Primitive>, ConfigError> {
    raw.iter()
        .enumerate()
        .map(|(i, p)| {
            let eps = |e: [f64; 2]| C64::new(e[0], e[1]);
            Ok(match p.get_ref().clone() {
                RawPrimitive::Sphere { center, radius, eps: e } => Primitive::Sphere {
                    center,
                    radius,
                    rel_eps: eps(e),
                },
                RawPrimitive::Slab { min, max, eps: e } => Primitive::Slab {
                    min,
                    max,
                    rel_eps: eps(e),
                },
                RawPrimitive::PbpArray(r) => {
                    let field = format!("scene.primitives[{i}]");
                    let mut l = match r.preset.as_deref() {
                        None | Some("silicon_1550") => PbpLayout::silicon_1550(),
                        Some(other) => {
                            return Err(ctx.field(&field, p, format!("unknown preset `{other}`")))
                        }
                    };
                    macro_rules! set {
                        ($($f:ident),*) => { $(if let Some(v) = r.$f { l.$f = v; })* };
                    }
                    set!(periodicity, height, length, width, fins_per_group, groups_x, rows, n_fin, n_substrate, substrate_thickness);
                    if let Some(d) = r.deflection_angle_deg {
                        l.deflection_angle = d.to_radians();
                    }
                    l.validate().map_err(|e| ctx.field(&field, p, e.to_string()))?;
                    if !(r.wavelength > 0.0) {
                        return Err(ctx.field(&field, p, "wavelength must be positive"));
                    }
                    Primitive::PbpArray {
                        layout: l,
                        wavelength: r.wavelength,
                    }
                }
            })
        })
        .collect()
}

fn detector_axis(
    ctx: &Ctx,
    theta: (&str, &Spanned<AngleSpec>),
    phi: (&str, &Spanned<AngleSpec>),
) -> Result<Axis, ConfigError> {
    let values = |(name, spec): (&str, &Spanned<AngleSpec>)| match *spec.get_ref() {
        AngleSpec::Fixed(v) if v.is_finite() => Ok((v, false)),
        AngleSpec::Fixed(v) => Err(ctx.field(&format!("sweep.{name}"), spec, format!("angle {v} is not finite"))),
        AngleSpec::Range(r) => r
            .values()
            .map(|v| (v[0], true))
            .map_err(|m| ctx.field(&format!("sweep.{name}"), spec, m)),
    };
    let (t0, t_swept) = values(theta)?;
    let (p0, p_swept) = values(phi)?;
    let list = |spec: &Spanned<AngleSpec>| match *spec.get_ref() {
        AngleSpec::Range(r) => r.values().expect("validated"),
        AngleSpec::Fixed(v) => vec![v],
    };
    if t_swept && p_swept {
        return Err(ctx.field(
            &format!("sweep.{}", phi.0),
            phi.1,
            format!("only one axis per detector may be swept, but {} is swept too", theta.0),
        ));
    }
    let axis = if t_swept {
        Axis {
            name: theta.0.into(),
            values_deg: list(theta.1),
            fixed_name: phi.0.into(),
            fixed_deg: p0,
        }
    } else {
        Axis {
            name: phi.0.into(),
            values_deg: list(phi.1),
            fixed_name: theta.0.into(),
            fixed_deg: t0,
        }
    };
    for (t, _) in axis.directions() {
        if !(0.0..=std::f64::consts::PI + 1e-12).contains(&t) {
            return Err(ctx.field(
                &format!("sweep.{}", theta.0),
                theta.1,
                format!("polar angle {}° outside [0°, 180°]", t.to_degrees()),
            ));
        }
    }
    Ok(axis)
}

fn selector(ctx: &Ctx, field: &str, spec: Option<&Spanned<PolSpec>>) -> Result<PolarizationSelector, ConfigError> {
    let Some(spec) = spec else {
        return Ok(PolarizationSelector::LinearZ);
    };
    match spec.get_ref() {
        PolSpec::Named(s) => s.parse(),
        PolSpec::Explicit([a, b]) => PolarizationSelector::explicit(C64::new(a[0], a[1]), C64::new(b[0], b[1])),
    }
    .map_err(|e| ctx.field(field, spec, e.to_string()))
}

fn resolve_coincidence(
    ctx: &Ctx,
    spec: &Spanned<RawCoincidence>,
    omega: f64,
    axis1: &Axis,
    axis2: &Axis,
) -> Result<CoincidenceSpec, ConfigError> {
    let c = spec.get_ref();
    let carrier: CarrierMode = c
        .carrier
        .as_deref()
        .unwrap_or("dropped")
        .parse()
        .map_err(|e: homfield::Error| ctx.field("coincidence.carrier", spec, e.to_string()))?;
    let packet = GaussianPacket::new(c.sigma, c.omega0.unwrap_or(omega), carrier)
        .map_err(|e| ctx.field("coincidence", spec, e.to_string()))?;
    let delays = c
        .delays
        .values()
        .map_err(|m| ctx.field("coincidence.delays", spec, m))?;
    let first = |a: &Axis| {
        let (t, p) = a.directions()[0];
        [t.to_degrees(), p.to_degrees()]
    };
    Ok(CoincidenceSpec {
        packet,
        delays,
        detector1_deg: c.detector1.unwrap_or_else(|| first(axis1)),
        detector2_deg: c.detector2.unwrap_or_else(|| first(axis2)),
    })
}

fn resolve_solver(ctx: &Ctx, raw: &RawSolver) -> Result<SolveOptions, ConfigError> {
    let mut o = SolveOptions::default();
    let err = |field: &str, m: String| ConfigError::Field {
        file: ctx.file.clone(),
        field: field.into(),
        line: ctx.text.find("[solver]").map(|p| ctx.line(p)).unwrap_or(1),
        message: m,
    };
    if let Some(t) = raw.tol {
        o.tol = t;
    }
    if let Some(m) = raw.max_iter {
        o.max_iter = m;
    }
    if let Some(p) = &raw.precond {
        o.precond = p.parse::<PrecondKind>().map_err(|e| err("solver.precond", e.to_string()))?;
    }
    if let Some(b) = raw.blocks {
        o.blocks = b;
    }
    if let Some(d) = raw.deterministic {
        o.deterministic = d;
    }
    o.validate().map_err(|e| err("solver", e.to_string()))?;
    Ok(o)
}

