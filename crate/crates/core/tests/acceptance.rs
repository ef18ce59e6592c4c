//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion reports a PASS/FAIL line even when an earlier one fails.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use homfield::constants::{angular_frequency, wavenumber, C0, EPS0, MU0};
use homfield::correlation::{
    classical_p2, coincidence_curve, coincidence_terms, coincidence_terms_quadrature, g2,
    g2_components, CarrierMode, GaussianPacket, ModeAmplitudeSet,
};
use homfield::far_field::{project, radiate, FarFieldAmplitude, PolarizationSelector};
use homfield::green::{eval_green_dyad, self_interaction_term};
use homfield::mie::{mie_coefficients, mie_coefficients_with_order, mie_far_field, truncation_order};
use homfield::scene::{build_pbp_metasurface, build_sphere, DielectricScene, PbpLayout};
use homfield::solver::{
    solve, PlaneWaveMode, PolarizationCurrentField, PrecondKind, SolveOptions, VieOperator,
    VieSystem,
};
use homfield::C64;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPHERE_FREQ: f64 = 750e12;
const SPHERE_EPS: f64 = 2.1;
const SPHERE_SPACING: f64 = 4.5e-9;
const SIGMA: f64 = 100e-15;
const META_WAVELENGTH: f64 = 1550e-9;
const META_TOL: f64 = 1e-4;
const META_BLOCKS: [usize; 3] = [13, 3, 4];

type Outcome = (bool, String);

fn sphere_omega() -> f64 {
    angular_frequency(SPHERE_FREQ)
}

fn sphere_modes() -> [PlaneWaveMode; 2] {
    let w = sphere_omega();
    [
        PlaneWaveMode::new([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], w).unwrap(),
        PlaneWaveMode::new([0.0, 1.0, 0.0], [1.0, 0.0, 0.0], w).unwrap(),
    ]
}

struct SphereRun {
    radius: f64,
    currents: Vec<PolarizationCurrentField>,
    iterations: Vec<usize>,
    voxels: usize,
}

fn solve_sphere(radius: f64) -> SphereRun {
    let scene = build_sphere(radius, C64::new(SPHERE_EPS, 0.0), SPHERE_SPACING, 2).unwrap();
    let sys = VieSystem::new(&scene, sphere_omega(), &SolveOptions::default()).unwrap();
    let (currents, iterations) = sphere_modes()
        .iter()
        .map(|m| {
            let (j, r) = sys.solve(&scene, m).unwrap();
            (j, r.iterations)
        })
        .unzip();
    SphereRun {
        radius,
        currents,
        iterations,
        voxels: scene.material_count(),
    }
}

static SMALL_SPHERE: OnceLock<SphereRun> = OnceLock::new();

fn small_sphere() -> &'static SphereRun {
    SMALL_SPHERE.get_or_init(|| solve_sphere(60e-9))
}

fn z(a: &FarFieldAmplitude) -> C64 {
    project(a, PolarizationSelector::LinearZ)
}

/// z-projected amplitudes of both modes at each direction.
fn sphere_amplitudes(run: &SphereRun, dirs: &[(f64, f64)]) -> Vec<[C64; 2]> {
    let k = wavenumber(sphere_omega());
    let f: Vec<Vec<FarFieldAmplitude>> = run.currents.iter().map(|j| radiate(j, k, dirs)).collect();
    (0..dirs.len()).map(|i| [z(&f[0][i]), z(&f[1][i])]).collect()
}

fn mie_amplitudes(radius: f64, dirs: &[(f64, f64)]) -> Vec<[C64; 2]> {
    let k = wavenumber(sphere_omega());
    let s = mie_coefficients(k * radius, C64::new(SPHERE_EPS, 0.0).sqrt()).unwrap();
    let modes = sphere_modes();
    dirs.iter()
        .map(|&(t, p)| [z(&mie_far_field(&s, &modes[0], t, p)), z(&mie_far_field(&s, &modes[1], t, p))])
        .collect()
}

/// g² along φ₁ ∈ [0°, 90°] with detector 2 fixed at (135°, 135°).
fn fig2_curve(amps: &[[C64; 2]]) -> Vec<f64> {
    let (b, a) = amps.split_first().unwrap();
    a.iter()
        .map(|a| g2(&ModeAmplitudeSet::degenerate(a[0], a[1], b[0], b[1], sphere_omega()).unwrap()).unwrap())
        .collect()
}

fn fig2_directions() -> Vec<(f64, f64)> {
    let mut dirs = vec![(135f64.to_radians(), 135f64.to_radians())];
    dirs.extend((0..=45).map(|i| (45f64.to_radians(), (2.0 * i as f64).to_radians())));
    dirs
}

fn relative_l2(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(g, w)| (g - w).powi(2)).sum();
    let den: f64 = want.iter().map(|w| w * w).sum();
    (num / den).sqrt()
}

fn sphere_g2_vs_mie() -> Outcome {
    let lambda_in = C0 / SPHERE_FREQ / SPHERE_EPS.sqrt();
    let mut ok = SPHERE_SPACING <= lambda_in / 60.0;
    let mut detail = format!("h = {:.2} nm (λ_in/60 = {:.3} nm)", SPHERE_SPACING * 1e9, lambda_in / 60.0 * 1e9);
    let dirs = fig2_directions();
    for r in [60e-9, 110e-9, 123e-9] {
        let owned;
        let run = if r == 60e-9 {
            small_sphere()
        } else {
            owned = solve_sphere(r);
            &owned
        };
        let err = relative_l2(
            &fig2_curve(&sphere_amplitudes(run, &dirs)),
            &fig2_curve(&mie_amplitudes(run.radius, &dirs)),
        );
        ok &= err <= 0.05;
        detail += &format!(
            "; r = {:.0} nm: L2 {:.2}% ({} voxels, {}/{} iterations)",
            r * 1e9,
            100.0 * err,
            run.voxels,
            run.iterations[0],
            run.iterations[1]
        );
    }
    (ok, detail)
}

fn random_currents(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn fft_operator() -> Outcome {
    let eps = C64::new(SPHERE_EPS, 0.0);
    let w = sphere_omega();
    let block = DielectricScene::new([4, 4, 4], 5e-9, [0.0; 3], vec![eps; 64]).unwrap();
    let op = VieOperator::new(&block, w).unwrap();
    let n = op.num_unknowns();
    let x = random_currents(n, 17);
    let m = DMatrix::from_row_slice(n, n, &op.dense_matrix());
    let dense = &m * DVector::from_column_slice(&x);
    let fft_err = rel_err(&op.apply(&x), dense.as_slice());

    // two voxels along x, system written out from the Green's dyad
    let h = 8e-9;
    let pair = DielectricScene::new([2, 1, 1], h, [0.0; 3], vec![eps; 2]).unwrap();
    let k0 = wavenumber(w);
    let local = -1.0 / (C64::new(0.0, w * EPS0) * (eps - 1.0));
    let coupling = C64::new(0.0, -w * MU0);
    let s = self_interaction_term(h, k0);
    let g = eval_green_dyad([h, 0.0, 0.0], k0).unwrap();
    let a = DMatrix::from_fn(6, 6, |r, c| {
        let (p, i, q, j) = (r / 3, r % 3, c / 3, c % 3);
        if p != q {
            coupling * g[i][j] * h.powi(3)
        } else if i == j {
            local + coupling * (s[i][j] - 1.0 / (3.0 * k0 * k0))
        } else {
            coupling * s[i][j]
        }
    });
    let mode = PlaneWaveMode::new([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], w).unwrap();
    let rhs: Vec<C64> = (0..2).flat_map(|i| mode.field_at(pair.voxel_center(i))).collect();
    let want = a.lu().solve(&DVector::from_vec(rhs)).unwrap();
    let opts = SolveOptions {
        tol: 1e-14,
        ..SolveOptions::default()
    };
    let (j, _) = solve(&pair, &mode, &opts).unwrap();
    let got: Vec<C64> = j.current().iter().flatten().copied().collect();
    let solve_err = rel_err(&got, want.as_slice());
    (
        fft_err < 1e-10 && solve_err < 1e-12,
        format!("4x4x4 FFT vs dense {fft_err:.2e}; 2-voxel solve vs dense {solve_err:.2e}"),
    )
}

/// Detector 1 at θ = 45°, detector 2 at θ = 135°, both φ on a 2° grid.
struct AngleGrid {
    phis: Vec<f64>,
    a: Vec<[C64; 2]>,
    b: Vec<[C64; 2]>,
}

impl AngleGrid {
    fn new(run: &SphereRun) -> Self {
        let phis: Vec<f64> = (0..180).map(|i| 2.0 * i as f64).collect();
        let at = |theta: f64| -> Vec<(f64, f64)> {
            phis.iter().map(|p| (theta.to_radians(), p.to_radians())).collect()
        };
        Self {
            a: sphere_amplitudes(run, &at(45.0)),
            b: sphere_amplitudes(run, &at(135.0)),
            phis,
        }
    }

    fn amps(&self, i: usize, j: usize) -> ModeAmplitudeSet {
        let (a, b) = (self.a[i], self.b[j]);
        ModeAmplitudeSet::degenerate(a[0], a[1], b[0], b[1], sphere_omega()).unwrap()
    }

    fn map(&self, f: impl Fn(&ModeAmplitudeSet) -> f64) -> DMatrix<f64> {
        let n = self.phis.len();
        DMatrix::from_fn(n, n, |i, j| f(&self.amps(i, j)))
    }
}

fn hom_dip() -> Outcome {
    let grid = AngleGrid::new(small_sphere());
    let packet = GaussianPacket::new(SIGMA, sphere_omega(), CarrierMode::Dropped).unwrap();
    let delays: Vec<f64> = (-100..=100).map(|i| i as f64 * 0.1 * SIGMA).collect();
    let g = grid.map(|m| g2(m).unwrap());
    let n = grid.phis.len();

    // symmetry nulls of either mode make both pathways vanish trivially;
    // only pairs where every amplitude is visible count
    let visible = |v: &[[C64; 2]]| -> Vec<bool> {
        let top = [0, 1].map(|m| v.iter().map(|x| x[m].norm()).fold(0.0, f64::max));
        v.iter().map(|x| (0..2).all(|m| x[m].norm() > 1e-3 * top[m])).collect()
    };
    let (va, vb) = (visible(&grid.a), visible(&grid.b));
    let pairs: Vec<(usize, usize)> = (0..n * n)
        .map(|k| (k / n, k % n))
        .filter(|&(i, j)| va[i] && vb[j])
        .collect();
    let (imin, jmin) = pairs
        .iter()
        .copied()
        .min_by(|&(a, b), &(c, d)| g[(a, b)].total_cmp(&g[(c, d)]))
        .unwrap();
    let dip = grid.amps(imin, jmin);
    let curve = coincidence_curve(&dip, &packet, &delays).unwrap();
    let at_zero = curve.values[100];
    let tail = delays
        .iter()
        .zip(&curve.values)
        .filter(|(d, _)| d.abs() >= 6.0 * SIGMA)
        .map(|(_, v)| (v - 1.0).abs())
        .fold(0.0, f64::max);
    let ok_a = g[(imin, jmin)] < 0.02 && at_zero < 0.05 && tail <= 1e-3;

    // one pathway at least ten times the other in intensity
    let ratio = |m: &ModeAmplitudeSet| {
        let (a, b) = m.pathways();
        let (x, y) = (a.norm_sqr(), b.norm_sqr());
        x.max(y) / x.min(y)
    };
    let flat = pairs
        .iter()
        .copied()
        .filter(|&(i, j)| (g[(i, j)] - 1.0).abs() < 0.02)
        .max_by(|&(a, b), &(c, d)| ratio(&grid.amps(a, b)).total_cmp(&ratio(&grid.amps(c, d))));
    let (ok_b, detail_b) = match flat {
        Some((i, j)) => {
            let m = grid.amps(i, j);
            let c = coincidence_curve(&m, &packet, &delays).unwrap();
            let dev = c.values.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
            (
                ratio(&m) >= 10.0 && dev < 0.05,
                format!(
                    "(b) φ = ({}°, {}°) g² = {:.4}, pathway ratio {:.1}, max|Ñc-1| = {dev:.2e}",
                    grid.phis[i],
                    grid.phis[j],
                    g[(i, j)],
                    ratio(&m)
                ),
            )
        }
        None => (false, "(b) no pair with |g²-1| < 0.02".into()),
    };

    let dark = ModeAmplitudeSet {
        a2: C64::default(),
        b2: C64::default(),
        ..dip
    };
    let c = coincidence_curve(&dark, &packet, &delays).unwrap();
    let worst = c.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let ok_c = worst == 0.0;

    (
        ok_a && ok_b && ok_c,
        format!(
            "(a) φ = ({}°, {}°) g² = {:.2e}, Ñc(0) = {at_zero:.2e}, tail dev {tail:.1e}; {detail_b}; (c) max|Ñc| = {worst:.1e}",
            grid.phis[imin],
            grid.phis[jmin],
            g[(imin, jmin)]
        ),
    )
}

fn random_amp(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))
}

fn random_set(rng: &mut ChaCha8Rng) -> ModeAmplitudeSet {
    loop {
        let [a1, a2, b1, b2] = [(); 4].map(|_| random_amp(rng));
        let (w1, w2) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
        if a1.norm() + a2.norm() > 1e-3 && b1.norm() + b2.norm() > 1e-3 {
            return ModeAmplitudeSet::new(a1, a2, b1, b2, w1, w2).unwrap();
        }
    }
}

fn closed_form_vs_quadrature() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sigma = SIGMA;
    let mut worst: f64 = 0.0;
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1e-300);
    let crel = |x: C64, y: C64| (x - y).norm() / x.norm().max(1e-300);
    for carrier in [CarrierMode::Dropped, CarrierMode::Retained] {
        // keeps the retained-carrier interference above round-off
        let packet = GaussianPacket::new(sigma, 1.5 / sigma, carrier).unwrap();
        for _ in 0..8 {
            let m = random_set(&mut rng);
            for k in -50..=50 {
                let d = k as f64 * 0.1 * sigma;
                let c = coincidence_terms(&m, &packet, d);
                let q = match coincidence_terms_quadrature(&m, &packet, d) {
                    Ok(q) => q,
                    Err(e) => return (false, format!("quadrature failed at δτ = {d:e}: {e}")),
                };
                worst = worst
                    .max(rel(c.n1, q.n1))
                    .max(rel(c.n2, q.n2))
                    .max(crel(c.n3, q.n3))
                    .max(crel(c.n4, q.n4))
                    .max(rel(c.dc, q.dc));
            }
        }
    }
    (
        worst < 1e-8,
        format!("worst relative deviation {worst:.2e} over 1616 evaluations (ω₀σ = 1.5)"),
    )
}

fn g2_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: [f64; 5] = [0.0; 5];
    let mut bounds_ok = true;
    for _ in 0..10_000 {
        let m = random_set(&mut rng);
        let g = g2(&m).unwrap();
        bounds_ok &= (-1e-9..=2.0 + 1e-9).contains(&g);

        let s = loop {
            let s = random_amp(&mut rng);
            if s.norm() > 1e-2 {
                break s;
            }
        };
        let scaled = ModeAmplitudeSet { a1: m.a1 * s, a2: m.a2 * s, b1: m.b1 * s, b2: m.b2 * s, ..m };
        worst[0] = worst[0].max((g2(&scaled).unwrap() - g).abs());

        let p = C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        let q = C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        let global = ModeAmplitudeSet { a1: m.a1 * p, a2: m.a2 * p, b1: m.b1 * p, b2: m.b2 * p, ..m };
        let per_mode = ModeAmplitudeSet { a1: m.a1 * p, b1: m.b1 * p, a2: m.a2 * q, b2: m.b2 * q, ..m };
        worst[1] = worst[1]
            .max((g2(&global).unwrap() - g).abs())
            .max((g2(&per_mode).unwrap() - g).abs());

        worst[2] = worst[2].max((g2(&m.swapped()).unwrap() - g).abs());

        let u = g2_components(&m).unwrap();
        let sum: C64 = u.iter().sum();
        worst[3] = worst[3].max((sum.re - g).abs()).max(sum.im.abs());
        worst[4] = worst[4].max((u[1] - u[2].conj()).norm());
    }
    (
        bounds_ok && worst.iter().all(|w| *w < 1e-9),
        format!(
            "bounds {}, scale {:.1e}, phase {:.1e}, exchange {:.1e}, U-sum {:.1e}, U-conjugacy {:.1e}",
            if bounds_ok { "ok" } else { "violated" },
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            worst[4]
        ),
    )
}

fn mie_self_checks() -> Outcome {
    let n = C64::new(1.449, 0.0);
    let x = 0.01;
    let s = mie_coefficients(x, n).unwrap();
    let n2 = n * n;
    let rayleigh = C64::new(0.0, -2.0 / 3.0) * x.powi(3) * (n2 - 1.0) / (n2 + 2.0);
    let ray_err = (s.a()[0] - rayleigh).norm() / rayleigh.norm();

    let mut balance: f64 = 0.0;
    for (x, n) in [(0.3, 1.449), (1.5, 1.449), (4.0, 1.8), (10.0, 1.33)] {
        let s = mie_coefficients(x, C64::new(n, 0.0)).unwrap();
        let q_forward = 4.0 / (x * x) * s.amplitudes(0.0).0.re;
        balance = balance
            .max((s.q_sca() - s.q_ext()).abs() / s.q_ext())
            .max((q_forward - s.q_ext()).abs() / s.q_ext());
    }

    let mut trunc: f64 = 0.0;
    let mode = PlaneWaveMode::new([0.6, 0.0, 0.8], [0.0, 1.0, 0.0], C0).unwrap();
    for (x, n) in [(0.5, 1.449), (2.3, 1.449), (8.0, 1.6)] {
        let n = C64::new(n, 0.0);
        let s0 = mie_coefficients(x, n).unwrap();
        let s1 = mie_coefficients_with_order(x, n, truncation_order(x) + 5).unwrap();
        for (t, p) in [(0.3, 0.1), (1.4, 2.0), (2.9, 4.0)] {
            let (a, b) = (mie_far_field(&s0, &mode, t, p), mie_far_field(&s1, &mode, t, p));
            let d = ((a.e_theta - b.e_theta).norm_sqr() + (a.e_phi - b.e_phi).norm_sqr()).sqrt();
            trunc = trunc.max(d / b.intensity().sqrt());
        }
    }
    (
        ray_err < 0.01 && balance < 1e-6 && trunc < 1e-10,
        format!("Rayleigh {:.2}%, energy balance {balance:.1e}, truncation {trunc:.1e}", 100.0 * ray_err),
    )
}

fn metasurface_scene() -> DielectricScene {
    let layout = PbpLayout {
        groups_x: 1,
        rows: 3,
        substrate_thickness: 0.0,
        ..PbpLayout::silicon_1550()
    };
    build_pbp_metasurface(&layout, META_WAVELENGTH / 30.0, META_WAVELENGTH).unwrap()
}

fn meta_omega() -> f64 {
    angular_frequency(C0 / META_WAVELENGTH)
}

fn meta_mode(pol: [f64; 3]) -> PlaneWaveMode {
    PlaneWaveMode::new([0.0, 0.0, 1.0], pol, meta_omega()).unwrap()
}

fn meta_options(precond: PrecondKind, max_iter: usize) -> SolveOptions {
    SolveOptions {
        tol: META_TOL,
        max_iter,
        precond,
        blocks: META_BLOCKS,
        ..SolveOptions::default()
    }
}

static BLOCK_ITERATIONS: OnceLock<usize> = OnceLock::new();

/// Signed angle in the xz-plane; negative angles lie at φ = 180°.
fn xz_direction(deg: f64) -> (f64, f64) {
    (deg.abs().to_radians(), if deg < 0.0 { PI } else { 0.0 })
}

fn circular_input(h: &FarFieldAmplitude, v: &FarFieldAmplitude, sign: f64) -> FarFieldAmplitude {
    let i = C64::new(0.0, sign);
    FarFieldAmplitude {
        e_theta: (h.e_theta + i * v.e_theta) * FRAC_1_SQRT_2,
        e_phi: (h.e_phi + i * v.e_phi) * FRAC_1_SQRT_2,
        ..*h
    }
}

fn metasurface() -> Outcome {
    let scene = metasurface_scene();
    let sys = VieSystem::new(&scene, meta_omega(), &meta_options(PrecondKind::Block, 5000)).unwrap();
    let (jh, rh) = sys.solve(&scene, &meta_mode([1.0, 0.0, 0.0])).unwrap();
    let _ = BLOCK_ITERATIONS.set(rh.iterations);
    let (jv, rv) = sys.solve(&scene, &meta_mode([0.0, 1.0, 0.0])).unwrap();
    drop(sys);

    let angles: Vec<f64> = (-80..=80).map(|i| i as f64 * 0.5).collect();
    let dirs: Vec<(f64, f64)> = angles.iter().map(|&a| xz_direction(a)).collect();
    let k = wavenumber(meta_omega());
    let (fh, fv) = (radiate(&jh, k, &dirs), radiate(&jv, k, &dirs));
    let peak = |sign: f64, sel: PolarizationSelector| {
        let lobe: Vec<f64> = fh
            .iter()
            .zip(&fv)
            .map(|(h, v)| project(&circular_input(h, v, sign), sel).norm_sqr())
            .collect();
        let i = (0..lobe.len()).max_by(|&a, &b| lobe[a].total_cmp(&lobe[b])).unwrap();
        angles[i]
    };
    let r_peak = peak(-1.0, PolarizationSelector::CircularR);
    let l_peak = peak(1.0, PolarizationSelector::CircularL);
    let ok_a = (r_peak + 10.0).abs() <= 3.0 && (l_peak - 10.0).abs() <= 3.0;

    let d = [xz_direction(-10.0), xz_direction(10.0)];
    let (h, v) = (radiate(&jh, k, &d), radiate(&jv, k, &d));
    let (r, l) = (PolarizationSelector::CircularR, PolarizationSelector::CircularL);
    let m = ModeAmplitudeSet::degenerate(
        project(&h[0], r),
        project(&v[0], r),
        project(&h[1], l),
        project(&v[1], l),
        meta_omega(),
    )
    .unwrap();
    let g = g2(&m).unwrap();
    let packet = GaussianPacket::new(SIGMA, meta_omega(), CarrierMode::Dropped).unwrap();
    let delays: Vec<f64> = (-50..=50).map(|i| i as f64 * 0.2 * SIGMA).collect();
    let c = coincidence_curve(&m, &packet, &delays).unwrap();
    let at_zero = c.values[50];
    let far = c.values[0];
    (
        ok_a && g < 0.1 && at_zero < 0.2,
        format!(
            "{} material voxels; {}/{} iterations; RCP peak {r_peak}°, LCP peak {l_peak}°; g²_LR = {g:.2e}; Ñc(0) = {at_zero:.2e}, Ñc(-10σ) = {far:.4}",
            scene.material_count(),
            rh.iterations,
            rv.iterations
        ),
    )
}

fn preconditioner_efficacy() -> Outcome {
    let scene = metasurface_scene();
    let mode = meta_mode([1.0, 0.0, 0.0]);
    let block = match BLOCK_ITERATIONS.get() {
        Some(&n) => n,
        None => solve(&scene, &mode, &meta_options(PrecondKind::Block, 5000)).unwrap().1.iterations,
    };
    let (_, plain) = solve(&scene, &mode, &meta_options(PrecondKind::None, 5000)).unwrap();
    (
        block < plain.iterations,
        format!("H mode at tol {META_TOL:e}: block {block} iterations, none {}", plain.iterations),
    )
}

/// Share of the Frobenius norm outside the leading singular value.
fn rank1_residual(m: DMatrix<f64>) -> f64 {
    let s = m.singular_values();
    let total: f64 = s.iter().map(|x| x * x).sum();
    let lead = s.max();
    ((total - lead * lead).max(0.0) / total).sqrt()
}

fn classical_vs_quantum() -> Outcome {
    let grid = AngleGrid::new(small_sphere());
    let p2 = grid.map(classical_p2);
    let p2 = &p2 / p2.max();
    let g = grid.map(|m| g2(m).unwrap());
    if g.iter().any(|v| !v.is_finite()) {
        return (false, "g² map has undefined entries".into());
    }
    let (rp, rg) = (rank1_residual(p2), rank1_residual(g));
    (
        rp < 1e-10 && rg > 0.1,
        format!("180x180 grid: P² residual {rp:.2e}, g² residual {rg:.3}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("sphere g² vs Mie", sphere_g2_vs_mie),
        ("FFT operator and dense solve", fft_operator),
        ("HOM dip properties", hom_dip),
        ("closed form vs quadrature", closed_form_vs_quadrature),
        ("g² property suite", g2_properties),
        ("Mie self-checks", mie_self_checks),
        ("metasurface deflection and dip", metasurface),
        ("preconditioner efficacy", preconditioner_efficacy),
        ("classical vs quantum rank", classical_vs_quantum),
    ];
    // optional criterion numbers on the command line restrict the run
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name} [{:.1} s] {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
