use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use homfield::correlation::{classical_p2, coincidence_curve, g2, CorrelationMap, ModeAmplitudeSet};
use homfield::far_field::{project, radiate, FarFieldAmplitude, PolarizationSelector};
use homfield::mie::{mie_coefficients, mie_far_field};
use homfield::solver::{PolarizationCurrentField, PrecondKind, SolveOptions, SolveReport, VieSystem};
use serde::Serialize;
use serde_json::json;

use crate::cache::{scene_hash, solve_key, SolveCache};
use crate::config::{Axis, Oracle, OutputKind, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Sweep,
    OracleCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::OracleCheck => "oracle-check",
        }
    }
}

/// Command-line settings that override the config's `[solver]` table.
#[derive(Debug, Clone, Default)]
pub struct SolverOverrides {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub precond: Option<PrecondKind>,
    pub blocks: Option<[usize; 3]>,
    pub deterministic: bool,
}

impl SolverOverrides {
    pub fn apply(&self, base: &SolveOptions) -> SolveOptions {
        let mut o = base.clone();
        if let Some(t) = self.tol {
            o.tol = t;
        }
        if let Some(m) = self.max_iter {
            o.max_iter = m;
        }
        if let Some(p) = self.precond {
            o.precond = p;
        }
        if let Some(b) = self.blocks {
            o.blocks = b;
        }
        o.deterministic |= self.deterministic;
        o
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Defaults to `<out>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub solver: SolverOverrides,
    pub config_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct SolveRecord {
    mode: usize,
    direction: [f64; 3],
    polarization: [f64; 3],
    cache_key: String,
    cached: bool,
    report: SolveReport,
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    /// Relative L2 distance between the VIE and Mie g² maps.
    pub oracle_l2: Option<f64>,
}

/// Far-field amplitudes of both modes at the detector-1 axis, the
/// detector-2 axis and the coincidence detectors.
struct Amplitudes {
    det1: [Vec<FarFieldAmplitude>; 2],
    det2: [Vec<FarFieldAmplitude>; 2],
    pair: Option<[[FarFieldAmplitude; 2]; 2]>,
}

pub fn execute(cmd: Command, scenario: &Scenario, opts: &RunOptions) -> anyhow::Result<RunSummary> {
    let start = Instant::now();
    std::fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    let solver = opts.solver.apply(&scenario.solver);
    solver.validate()?;

    let oracle = if cmd == Command::OracleCheck { Oracle::Both } else { scenario.oracle };
    let outputs: Vec<OutputKind> = match cmd {
        Command::Run => scenario.outputs.clone(),
        Command::Sweep => {
            let maps: Vec<_> = scenario
                .outputs
                .iter()
                .copied()
                .filter(|o| matches!(o, OutputKind::G2Map | OutputKind::P2Map))
                .collect();
            if maps.is_empty() { vec![OutputKind::G2Map] } else { maps }
        }
        Command::OracleCheck => vec![OutputKind::G2Map],
    };
    if oracle.uses_mie() && scenario.mie_sphere().is_none() {
        bail!("the mie oracle needs a scene with a single sphere centered at the origin");
    }

    let mut manifest = json!({
        "tool": "homfield",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd.name(),
        "config": {
            "path": opts.config_path.as_ref().map(|p| p.display().to_string()),
            "text": scenario.source,
            "scene_text": scenario.scene_source,
        },
        "frequency_hz": scenario.frequency,
        "oracle": oracle,
        "outputs_requested": outputs,
        "solver": solver,
    });

    let mut sources: Vec<(&str, Amplitudes)> = Vec::new();
    let mut solve_time = 0.0;
    if oracle.uses_vie() {
        let t = Instant::now();
        let solved = solve_modes(scenario, &solver, opts);
        solve_time = t.elapsed().as_secs_f64();
        match solved {
            Ok((currents, records)) => {
                manifest["solves"] = serde_json::to_value(&records)?;
                sources.push(("vie", vie_amplitudes(scenario, &currents)));
            }
            Err(e) => {
                manifest["status"] = json!("failed");
                manifest["error"] = json!(format!("{e:#}"));
                manifest["wall_time_s"] = json!({ "total": start.elapsed().as_secs_f64(), "solve": solve_time });
                write_manifest(&opts.out, &manifest)?;
                return Err(e);
            }
        }
    }
    if oracle.uses_mie() {
        sources.push(("mie", mie_amplitudes(scenario)?));
    }

    let post = Instant::now();
    let mut summary = RunSummary::default();
    let mut g2_maps = Vec::new();
    for (tag, amps) in &sources {
        for kind in &outputs {
            match kind {
                OutputKind::G2Map => {
                    let map = g2_map(scenario, amps)?;
                    let path = opts.out.join(format!("g2_map_{tag}.tsv"));
                    write_map(&path, scenario, tag, "g2", &map)?;
                    summary.files.push(path);
                    g2_maps.push(map);
                }
                OutputKind::P2Map => {
                    let map = p2_map(scenario, amps)?.normalized_by_max();
                    let path = opts.out.join(format!("p2_map_{tag}.tsv"));
                    write_map(&path, scenario, tag, "p2_normalized", &map)?;
                    summary.files.push(path);
                }
                OutputKind::CoincidenceCurve => {
                    let path = opts.out.join(format!("coincidence_{tag}.tsv"));
                    write_coincidence(&path, scenario, tag, amps)?;
                    summary.files.push(path);
                }
                OutputKind::FarfieldDump => {
                    for m in 0..2 {
                        let path = opts.out.join(format!("farfield_{tag}_mode{}.tsv", m + 1));
                        write_farfield(&path, scenario, tag, m, amps)?;
                        summary.files.push(path);
                    }
                }
            }
        }
    }
    if let [vie, mie] = g2_maps.as_slice() {
        let l2 = relative_l2(&vie.values, &mie.values);
        summary.oracle_l2 = Some(l2);
        manifest["oracle_check"] = json!({ "g2_relative_l2": l2 });
    }

    manifest["status"] = json!("ok");
    manifest["files"] = json!(summary
        .files
        .iter()
        .map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
        .collect::<Vec<_>>());
    manifest["wall_time_s"] = json!({
        "total": start.elapsed().as_secs_f64(),
        "solve": solve_time,
        "postprocess": post.elapsed().as_secs_f64(),
    });
    write_manifest(&opts.out, &manifest)?;
    Ok(summary)
}

fn write_manifest(out: &Path, manifest: &serde_json::Value) -> anyhow::Result<()> {
    let path = out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn solve_modes(
    scenario: &Scenario,
    solver: &SolveOptions,
    opts: &RunOptions,
) -> anyhow::Result<([PolarizationCurrentField; 2], Vec<SolveRecord>)> {
    let scene = scenario.build_scene()?;
    let cache = SolveCache::open(&opts.cache_dir.clone().unwrap_or_else(|| opts.out.join("cache")))?;
    let hash = scene_hash(&scene);
    let mut system: Option<VieSystem> = None;
    let mut currents = Vec::new();
    let mut records = Vec::new();
    for (i, mode) in scenario.modes.iter().enumerate() {
        let key = solve_key(&hash, mode, solver.tol);
        let (field, report, cached) = match cache.load(&key) {
            Some((f, r)) => {
                log::info!("mode {}: using cached solve {key}", i + 1);
                (f, r, true)
            }
            None => {
                if system.is_none() {
                    system = Some(VieSystem::new(&scene, scenario.omega, solver)?);
                }
                let sys = system.as_ref().expect("system built above");
                let (f, r) = sys
                    .solve(&scene, mode)
                    .with_context(|| format!("solving incident mode {}", i + 1))?;
                cache.store(&key, &f, &r)?;
                (f, r, false)
            }
        };
        records.push(SolveRecord {
            mode: i + 1,
            direction: mode.direction(),
            polarization: mode.polarization(),
            cache_key: key,
            cached,
            report,
        });
        currents.push(field);
    }
    let [a, b]: [PolarizationCurrentField; 2] = currents.try_into().expect("two modes");
    Ok(([a, b], records))
}

fn pair_directions(scenario: &Scenario) -> Option<[(f64, f64); 2]> {
    scenario.coincidence.as_ref().map(|c| {
        let r = |d: [f64; 2]| (d[0].to_radians(), d[1].to_radians());
        [r(c.detector1_deg), r(c.detector2_deg)]
    })
}

fn vie_amplitudes(scenario: &Scenario, currents: &[PolarizationCurrentField; 2]) -> Amplitudes {
    let k = scenario.modes[0].wavenumber();
    let d1 = scenario.axis1.directions();
    let d2 = scenario.axis2.directions();
    let eval = |dirs: &[(f64, f64)]| [radiate(&currents[0], k, dirs), radiate(&currents[1], k, dirs)];
    Amplitudes {
        det1: eval(&d1),
        det2: eval(&d2),
        pair: pair_directions(scenario).map(|p| {
            let [m1, m2] = eval(&p);
            [[m1[0], m2[0]], [m1[1], m2[1]]]
        }),
    }
}

fn mie_amplitudes(scenario: &Scenario) -> anyhow::Result<Amplitudes> {
    let (radius, eps) = scenario.mie_sphere().expect("checked by caller");
    let k = scenario.modes[0].wavenumber();
    let series = mie_coefficients(k * radius, eps.sqrt())?;
    let eval = |dirs: &[(f64, f64)]| {
        let m = |i: usize| -> Vec<FarFieldAmplitude> {
            dirs.iter()
                .map(|&(t, p)| mie_far_field(&series, &scenario.modes[i], t, p))
                .collect()
        };
        [m(0), m(1)]
    };
    Ok(Amplitudes {
        det1: eval(&scenario.axis1.directions()),
        det2: eval(&scenario.axis2.directions()),
        pair: pair_directions(scenario).map(|p| {
            let [m1, m2] = eval(&p);
            [[m1[0], m2[0]], [m1[1], m2[1]]]
        }),
    })
}

fn amplitude_set(
    scenario: &Scenario,
    det1: [&FarFieldAmplitude; 2],
    det2: [&FarFieldAmplitude; 2],
) -> homfield::Result<ModeAmplitudeSet> {
    let (a, b) = (scenario.pol_a, scenario.pol_b);
    ModeAmplitudeSet::degenerate(
        project(det1[0], a),
        project(det1[1], a),
        project(det2[0], b),
        project(det2[1], b),
        scenario.omega,
    )
}

fn g2_map(scenario: &Scenario, amps: &Amplitudes) -> homfield::Result<CorrelationMap> {
    CorrelationMap::from_fn(
        scenario.axis1.values_deg.clone(),
        scenario.axis2.values_deg.clone(),
        |i, j| {
            g2(&amplitude_set(
                scenario,
                [&amps.det1[0][i], &amps.det1[1][i]],
                [&amps.det2[0][j], &amps.det2[1][j]],
            )?)
        },
    )
}

fn p2_map(scenario: &Scenario, amps: &Amplitudes) -> homfield::Result<CorrelationMap> {
    CorrelationMap::from_fn(
        scenario.axis1.values_deg.clone(),
        scenario.axis2.values_deg.clone(),
        |i, j| {
            Ok(classical_p2(&amplitude_set(
                scenario,
                [&amps.det1[0][i], &amps.det1[1][i]],
                [&amps.det2[0][j], &amps.det2[1][j]],
            )?))
        },
    )
}

/// `sqrt(Σ(a−b)² / Σb²)` over entries finite in both.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let (num, den) = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .fold((0.0, 0.0), |(n, d), (x, y)| (n + (x - y).powi(2), d + y * y));
    (num / den).sqrt()
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

fn selector_label(s: PolarizationSelector) -> String {
    match s {
        PolarizationSelector::Explicit([a, b]) => format!("explicit({a},{b})"),
        _ => s.label().to_string(),
    }
}

fn common_header(scenario: &Scenario, tag: &str) -> Vec<String> {
    let m = &scenario.modes;
    vec![
        format!("# homfield {} oracle={tag}", env!("CARGO_PKG_VERSION")),
        format!("# frequency_hz {:e} omega_rad_s {:e}", scenario.frequency, scenario.omega),
        format!(
            "# mode1 k {:?} e {:?}; mode2 k {:?} e {:?}",
            m[0].direction(),
            m[0].polarization(),
            m[1].direction(),
            m[1].polarization()
        ),
        format!(
            "# pol_a {} pol_b {}",
            selector_label(scenario.pol_a),
            selector_label(scenario.pol_b)
        ),
    ]
}

fn axis_note(a: &Axis) -> String {
    format!("{}_deg swept, {} = {} deg", a.name, a.fixed_name, a.fixed_deg)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_map(path: &Path, scenario: &Scenario, tag: &str, column: &str, map: &CorrelationMap) -> anyhow::Result<()> {
    let mut w = create(path)?;
    for line in common_header(scenario, tag) {
        writeln!(w, "{line}")?;
    }
    writeln!(w, "# angle1: {}", axis_note(&scenario.axis1))?;
    writeln!(w, "# angle2: {}", axis_note(&scenario.axis2))?;
    writeln!(w, "# flag 1 marks points where a detector sees no field (value nan)")?;
    writeln!(w, "angle1_deg\tangle2_deg\t{column}\tflag")?;
    let (n1, n2) = map.shape();
    for i in 0..n1 {
        for j in 0..n2 {
            let v = map.get(i, j);
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                map.axis1[i],
                map.axis2[j],
                num(v),
                u8::from(v.is_nan())
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_coincidence(path: &Path, scenario: &Scenario, tag: &str, amps: &Amplitudes) -> anyhow::Result<()> {
    let spec = scenario.coincidence.as_ref().expect("validated with the config");
    let pair = amps.pair.as_ref().expect("pair amplitudes exist with a coincidence spec");
    let set = amplitude_set(scenario, [&pair[0][0], &pair[0][1]], [&pair[1][0], &pair[1][1]])?;
    let curve = coincidence_curve(&set, &spec.packet, &spec.delays)?;
    let mut w = create(path)?;
    for line in common_header(scenario, tag) {
        writeln!(w, "{line}")?;
    }
    writeln!(
        w,
        "# detector1 theta,phi = {:?} deg; detector2 theta,phi = {:?} deg",
        spec.detector1_deg, spec.detector2_deg
    )?;
    writeln!(
        w,
        "# packet sigma_s {:e} omega0_rad_s {:e} carrier {}",
        spec.packet.sigma(),
        spec.packet.omega0(),
        serde_json::to_value(spec.packet.carrier())?.as_str().unwrap_or("?")
    )?;
    writeln!(w, "# flag 1 marks delays where the normalization vanished and Nc is set to 0")?;
    writeln!(w, "delta_tau_s\tNc\tflag")?;
    for ((d, v), f) in curve.delays.iter().zip(&curve.values).zip(&curve.flags) {
        writeln!(w, "{}\t{}\t{}", num(*d), num(*v), u8::from(*f))?;
    }
    w.flush()?;
    Ok(())
}

fn write_farfield(path: &Path, scenario: &Scenario, tag: &str, mode: usize, amps: &Amplitudes) -> anyhow::Result<()> {
    let mut w = create(path)?;
    for line in common_header(scenario, tag) {
        writeln!(w, "{line}")?;
    }
    writeln!(w, "# incident mode {}", mode + 1)?;
    writeln!(
        w,
        "theta_deg\tphi_deg\tre_Etheta\tim_Etheta\tre_Ephi\tim_Ephi\tre_Ea\tim_Ea\tre_Eb\tim_Eb"
    )?;
    let all = amps.det1[mode].iter().chain(&amps.det2[mode]);
    for a in all {
        let pa = project(a, scenario.pol_a);
        let pb = project(a, scenario.pol_b);
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            num(a.theta.to_degrees()),
            num(a.phi.to_degrees()),
            num(a.e_theta.re),
            num(a.e_theta.im),
            num(a.e_phi.re),
            num(a.e_phi.im),
            num(pa.re),
            num(pa.im),
            num(pb.re),
            num(pb.im)
        )?;
    }
    w.flush()?;
    Ok(())
}
