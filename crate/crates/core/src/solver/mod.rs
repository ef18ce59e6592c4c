//! Volume integral equation for the polarization current.
//!
//! Unknowns live on material voxels only. With `χ = ε_r − 1` the discrete
//! system at voxel `r` reads
//!
//! ```text
//! −J(r)/(iωε₀χ(r)) − iωμ₀ Σ_{r'} K(r − r')·J(r') = E_inc(r)
//! ```
//!
//! where `K` is the cell-weighted kernel of [`GreenKernel`]. The convolution
//! runs on the material bounding box rather than on the whole scene grid.

mod bicgstab;
pub mod precond;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bicgstab::{bicgstab, dot, norm, BicgstabConfig, BicgstabOutcome};
use precond::{BlockJacobi, Diagonal, Identity, Preconditioner};

use crate::constants::{wavenumber, EPS0, MU0};
use crate::green::{build_toeplitz_kernel_with_budget, GreenKernel, DEFAULT_MEMORY_BUDGET};
use crate::scene::DielectricScene;
use crate::vec3::{dot as vdot, norm as vnorm, CVec3, Vec3};
use crate::{Error, Result, C64};

const UNIT_TOL: f64 = 1e-12;

/// Incident plane wave of unit amplitude, `ê·exp(i k k̂·r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneWaveMode {
    direction: Vec3,
    polarization: Vec3,
    omega: f64,
}

impl PlaneWaveMode {
    pub fn new(direction: Vec3, polarization: Vec3, omega: f64) -> Result<Self> {
        if (vnorm(direction) - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!(
                "direction {direction:?} is not a unit vector"
            )));
        }
        if (vnorm(polarization) - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!(
                "polarization {polarization:?} is not a unit vector"
            )));
        }
        if vdot(direction, polarization).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(
                "polarization is not orthogonal to direction".into(),
            ));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid angular frequency {omega}")));
        }
        Ok(Self {
            direction,
            polarization,
            omega,
        })
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn polarization(&self) -> Vec3 {
        self.polarization
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn wavenumber(&self) -> f64 {
        wavenumber(self.omega)
    }

    pub fn field_at(&self, r: Vec3) -> CVec3 {
        let phase = C64::from_polar(1.0, self.wavenumber() * vdot(self.direction, r));
        self.polarization.map(|e| phase * e)
    }
}

/// Incident field at every voxel center of the scene, x-fastest.
pub fn incident_field(mode: &PlaneWaveMode, scene: &DielectricScene) -> Vec<CVec3> {
    (0..scene.num_voxels())
        .into_par_iter()
        .map(|i| mode.field_at(scene.voxel_center(i)))
        .collect()
}

/// Induced current on the full scene grid (zero on free-space voxels).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationCurrentField {
    dims: [usize; 3],
    spacing: f64,
    origin: Vec3,
    current: Vec<CVec3>,
}

const DUMP_TAG: &str = "homfield-current";

impl PolarizationCurrentField {
    pub fn new(dims: [usize; 3], spacing: f64, origin: Vec3, current: Vec<CVec3>) -> Result<Self> {
        if current.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidInput("current length does not match dims".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidGeometry("spacing must be positive".into()));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            current,
        })
    }

    pub fn zeros_like(scene: &DielectricScene) -> Self {
        Self {
            dims: scene.dims(),
            spacing: scene.spacing(),
            origin: scene.origin(),
            current: vec![[C64::default(); 3]; scene.num_voxels()],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn current(&self) -> &[CVec3] {
        &self.current
    }

    pub fn current_mut(&mut self) -> &mut [CVec3] {
        &mut self.current
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    pub fn voxel_center(&self, idx: usize) -> Vec3 {
        let [nx, ny, _] = self.dims;
        let ijk = [idx % nx, (idx / nx) % ny, idx / (nx * ny)];
        std::array::from_fn(|a| self.origin[a] + (ijk[a] as f64 + 0.5) * self.spacing)
    }

    /// `(center, J)` for every voxel carrying a nonzero current.
    pub fn sources(&self) -> Vec<(Vec3, CVec3)> {
        self.current
            .iter()
            .enumerate()
            .filter(|(_, j)| j.iter().any(|c| *c != C64::default()))
            .map(|(i, j)| (self.voxel_center(i), *j))
            .collect()
    }

    /// One text line `homfield-current dims NX NY NZ spacing S origin X Y Z`,
    /// then `(re, im)` of `Jx, Jy, Jz` per voxel as little-endian f64,
    /// x-fastest.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(
            w,
            "{DUMP_TAG} dims {} {} {} spacing {:e} origin {:e} {:e} {:e}",
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.spacing,
            self.origin[0],
            self.origin[1],
            self.origin[2]
        )?;
        for j in &self.current {
            for c in j {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_dump(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let bad = || Error::Format(format!("malformed current dump header: {}", header.trim()));
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 11 || tok[0] != DUMP_TAG || tok[1] != "dims" || tok[5] != "spacing" || tok[7] != "origin" {
            return Err(bad());
        }
        let dims: [usize; 3] = [
            tok[2].parse().map_err(|_| bad())?,
            tok[3].parse().map_err(|_| bad())?,
            tok[4].parse().map_err(|_| bad())?,
        ];
        let spacing: f64 = tok[6].parse().map_err(|_| bad())?;
        let origin: Vec3 = [
            tok[8].parse().map_err(|_| bad())?,
            tok[9].parse().map_err(|_| bad())?,
            tok[10].parse().map_err(|_| bad())?,
        ];
        let n: usize = dims.iter().product();
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * 48 {
            return Err(Error::Format(format!(
                "current dump holds {} bytes, expected {}",
                bytes.len(),
                n * 48
            )));
        }
        let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let current = (0..n)
            .map(|i| std::array::from_fn(|c| C64::new(f(48 * i + 16 * c), f(48 * i + 16 * c + 8))))
            .collect();
        Self::new(dims, spacing, origin, current)
    }
}

/// Discrete VIE operator restricted to the material voxels of a scene.
pub struct VieOperator {
    kernel: Arc<GreenKernel>,
    omega: f64,
    /// Lower corner of the material bounding box in scene indices.
    lo: [usize; 3],
    /// Extent of the material bounding box.
    dims: [usize; 3],
    /// Scene linear index of each unknown voxel.
    scene_index: Vec<usize>,
    /// Bounding-box grid index of each unknown voxel.
    voxel_ijk: Vec<[usize; 3]>,
    local: Vec<C64>,
    coupling: C64,
}

impl std::fmt::Debug for VieOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VieOperator")
            .field("omega", &self.omega)
            .field("dims", &self.dims)
            .field("voxels", &self.scene_index.len())
            .finish_non_exhaustive()
    }
}

impl VieOperator {
    pub fn new(scene: &DielectricScene, omega: f64) -> Result<Self> {
        Self::with_budget(scene, omega, DEFAULT_MEMORY_BUDGET)
    }

    pub fn with_budget(scene: &DielectricScene, omega: f64, budget: u64) -> Result<Self> {
        let (_, dims) = Self::layout(scene)?;
        let kernel = build_toeplitz_kernel_with_budget(dims, scene.spacing(), wavenumber(omega), budget)?;
        Self::with_kernel(scene, omega, Arc::new(kernel))
    }

    /// Material bounding box `(lower corner, extent)` on which the kernel
    /// must be built.
    pub fn layout(scene: &DielectricScene) -> Result<([usize; 3], [usize; 3])> {
        let (lo, hi) = scene.material_bounds().ok_or_else(|| {
            Error::InvalidGeometry("scene has no material voxels".into())
        })?;
        Ok((lo, std::array::from_fn(|a| hi[a] - lo[a] + 1)))
    }

    /// Reuses a kernel built for this scene's material bounding box.
    pub fn with_kernel(scene: &DielectricScene, omega: f64, kernel: Arc<GreenKernel>) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid angular frequency {omega}")));
        }
        let (lo, dims) = Self::layout(scene)?;
        if !kernel.matches(dims, scene.spacing(), wavenumber(omega)) {
            return Err(Error::InvalidInput(
                "kernel does not match the scene's material box, spacing or frequency".into(),
            ));
        }
        let scene_index = scene.material_voxels();
        let voxel_ijk = scene_index
            .iter()
            .map(|&i| {
                let g = scene.grid_index(i);
                std::array::from_fn(|a| g[a] - lo[a])
            })
            .collect();
        let eps = scene.rel_permittivity();
        let local = scene_index
            .iter()
            .map(|&i| -1.0 / (C64::new(0.0, omega * EPS0) * (eps[i] - 1.0)))
            .collect();
        Ok(Self {
            kernel,
            omega,
            lo,
            dims,
            scene_index,
            voxel_ijk,
            local,
            coupling: C64::new(0.0, -omega * MU0),
        })
    }

    pub fn kernel(&self) -> &Arc<GreenKernel> {
        &self.kernel
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Extent of the material bounding box.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn num_voxels(&self) -> usize {
        self.scene_index.len()
    }

    pub fn num_unknowns(&self) -> usize {
        3 * self.scene_index.len()
    }

    pub fn scene_indices(&self) -> &[usize] {
        &self.scene_index
    }

    pub fn voxel_indices(&self) -> &[[usize; 3]] {
        &self.voxel_ijk
    }

    /// `−1/(iωε₀(ε_r − 1))` per unknown voxel.
    pub fn local_terms(&self) -> &[C64] {
        &self.local
    }

    /// `−iωμ₀ K(offset)`, the coupling block between two voxels.
    pub fn coupled_sample(&self, offset: [i64; 3]) -> [[C64; 3]; 3] {
        self.kernel.sample(offset).map(|row| row.map(|v| v * self.coupling))
    }

    /// Applies the operator to a compressed vector (3 entries per voxel).
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.num_unknowns());
        let [nx, ny, _] = self.dims;
        let mut grid = vec![[C64::default(); 3]; self.dims.iter().product()];
        for (p, ijk) in self.voxel_ijk.iter().enumerate() {
            grid[ijk[0] + nx * (ijk[1] + ny * ijk[2])] = [x[3 * p], x[3 * p + 1], x[3 * p + 2]];
        }
        let conv = self.kernel.convolve(&grid);
        let mut y = vec![C64::default(); x.len()];
        y.par_chunks_mut(3).enumerate().for_each(|(p, out)| {
            let ijk = self.voxel_ijk[p];
            let k = conv[ijk[0] + nx * (ijk[1] + ny * ijk[2])];
            for c in 0..3 {
                out[c] = self.local[p] * x[3 * p + c] + self.coupling * k[c];
            }
        });
        y
    }

    /// Dense row-major system matrix, assembled directly from the Green's
    /// function samples. Intended for small scenes.
    pub fn dense_matrix(&self) -> Vec<C64> {
        let n = self.num_unknowns();
        let mut m = vec![C64::default(); n * n];
        for (p, a) in self.voxel_ijk.iter().enumerate() {
            for (q, b) in self.voxel_ijk.iter().enumerate() {
                let off: [i64; 3] = std::array::from_fn(|c| a[c] as i64 - b[c] as i64);
                let k = self.coupled_sample(off);
                for i in 0..3 {
                    for j in 0..3 {
                        let mut v = k[i][j];
                        if p == q && i == j {
                            v += self.local[p];
                        }
                        m[(3 * p + i) * n + 3 * q + j] = v;
                    }
                }
            }
        }
        m
    }

    /// Gathers a full-grid field onto the unknown layout.
    pub fn compress(&self, field: &[CVec3]) -> Vec<C64> {
        self.scene_index.iter().flat_map(|&i| field[i]).collect()
    }

    /// Scatters a compressed vector onto the full scene grid.
    pub fn expand(&self, x: &[C64], scene: &DielectricScene) -> PolarizationCurrentField {
        let mut out = PolarizationCurrentField::zeros_like(scene);
        for (p, &i) in self.scene_index.iter().enumerate() {
            out.current[i] = [x[3 * p], x[3 * p + 1], x[3 * p + 2]];
        }
        out
    }

    /// Lower corner of the material bounding box in scene indices.
    pub fn box_origin(&self) -> [usize; 3] {
        self.lo
    }
}

/// Applies the operator to a full-grid current; free-space entries of the
/// result are zero.
pub fn apply_operator(
    current: &PolarizationCurrentField,
    scene: &DielectricScene,
    op: &VieOperator,
) -> Vec<CVec3> {
    let y = op.apply(&op.compress(current.current()));
    op.expand(&y, scene).current
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecondKind {
    None,
    Diagonal,
    Block,
}

impl PrecondKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Diagonal => "diagonal",
            Self::Block => "block",
        }
    }
}

impl std::str::FromStr for PrecondKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "diagonal" => Ok(Self::Diagonal),
            "block" => Ok(Self::Block),
            _ => Err(Error::InvalidInput(format!(
                "unknown preconditioner `{s}` (expected none, diagonal or block)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub precond: PrecondKind,
    /// Subdomain counts along x, y, z for the block preconditioner.
    pub blocks: [usize; 3],
    pub deterministic: bool,
    pub kernel_budget: u64,
    pub block_budget: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 2000,
            precond: PrecondKind::Diagonal,
            blocks: [2, 2, 2],
            deterministic: false,
            kernel_budget: DEFAULT_MEMORY_BUDGET,
            block_budget: precond::DEFAULT_BLOCK_BUDGET,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidInput(format!("tolerance {} must lie in (0, 1)", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be positive".into()));
        }
        if self.blocks.iter().any(|&b| b == 0) {
            return Err(Error::InvalidInput("block counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub wall_time_s: f64,
    pub setup_time_s: f64,
    pub preconditioner: String,
    pub unknowns: usize,
    pub matvecs: usize,
    pub restarts: usize,
    pub residual_history: Vec<f64>,
}

/// Operator plus preconditioner for one scene and frequency, reusable
/// across incident modes.
pub struct VieSystem {
    op: VieOperator,
    precond: Box<dyn Preconditioner>,
    options: SolveOptions,
    setup_time_s: f64,
}

impl VieSystem {
    pub fn new(scene: &DielectricScene, omega: f64, options: &SolveOptions) -> Result<Self> {
        options.validate()?;
        let start = Instant::now();
        let op = VieOperator::with_budget(scene, omega, options.kernel_budget)?;
        Self::finish(op, options, start)
    }

    pub fn with_kernel(
        scene: &DielectricScene,
        omega: f64,
        kernel: Arc<GreenKernel>,
        options: &SolveOptions,
    ) -> Result<Self> {
        options.validate()?;
        let start = Instant::now();
        let op = VieOperator::with_kernel(scene, omega, kernel)?;
        Self::finish(op, options, start)
    }

    fn finish(op: VieOperator, options: &SolveOptions, start: Instant) -> Result<Self> {
        let precond: Box<dyn Preconditioner> = match options.precond {
            PrecondKind::None => Box::new(Identity),
            PrecondKind::Diagonal => Box::new(Diagonal::new(&op)?),
            PrecondKind::Block => Box::new(BlockJacobi::new(&op, options.blocks, options.block_budget)?),
        };
        Ok(Self {
            op,
            precond,
            options: options.clone(),
            setup_time_s: start.elapsed().as_secs_f64(),
        })
    }

    pub fn operator(&self) -> &VieOperator {
        &self.op
    }

    pub fn options(&self) -> &SolveOptions {
        &self.options
    }

    /// Solves for an arbitrary compressed right-hand side.
    pub fn solve_rhs(&self, rhs: &[C64]) -> Result<(Vec<C64>, SolveReport)> {
        let start = Instant::now();
        let cfg = BicgstabConfig {
            tol: self.options.tol,
            max_iter: self.options.max_iter,
            deterministic: self.options.deterministic,
        };
        let out = bicgstab(&|x: &[C64]| self.op.apply(x), self.precond.as_ref(), rhs, cfg)?;
        let report = SolveReport {
            iterations: out.iterations,
            residual: out.residual,
            wall_time_s: start.elapsed().as_secs_f64(),
            setup_time_s: self.setup_time_s,
            preconditioner: self.precond.name().to_string(),
            unknowns: self.op.num_unknowns(),
            matvecs: out.matvecs,
            restarts: out.restarts,
            residual_history: out.history,
        };
        log::info!(
            "solve: {} unknowns, {} iterations, residual {:.3e}, {:.2} s",
            report.unknowns,
            report.iterations,
            report.residual,
            report.wall_time_s
        );
        Ok((out.x, report))
    }

    pub fn solve(
        &self,
        scene: &DielectricScene,
        mode: &PlaneWaveMode,
    ) -> Result<(PolarizationCurrentField, SolveReport)> {
        if (mode.omega() - self.op.omega()).abs() > 1e-12 * self.op.omega() {
            return Err(Error::InvalidInput(
                "mode frequency differs from the system frequency".into(),
            ));
        }
        let rhs: Vec<C64> = self
            .op
            .scene_indices()
            .iter()
            .flat_map(|&i| mode.field_at(scene.voxel_center(i)))
            .collect();
        let (x, report) = self.solve_rhs(&rhs)?;
        Ok((self.op.expand(&x, scene), report))
    }
}

/// One-shot solve; use [`VieSystem`] to share the kernel between modes.
pub fn solve(
    scene: &DielectricScene,
    mode: &PlaneWaveMode,
    options: &SolveOptions,
) -> Result<(PolarizationCurrentField, SolveReport)> {
    VieSystem::new(scene, mode.omega(), options)?.solve(scene, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::angular_frequency;

    fn omega() -> f64 {
        angular_frequency(750e12)
    }

    #[test]
    fn incident_field_phase() {
        let w = omega();
        let lambda = 2.0 * std::f64::consts::PI / wavenumber(w);
        let m = PlaneWaveMode::new([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], w).unwrap();
        let e0 = m.field_at([0.0; 3]);
        assert!((e0[1] - 1.0).norm() < 1e-15 && e0[0].norm() == 0.0);
        let e1 = m.field_at([lambda / 2.0, 0.0, 0.0]);
        assert!((e1[1] + 1.0).norm() < 1e-12);
    }

    #[test]
    fn mode_validation() {
        let w = omega();
        assert!(PlaneWaveMode::new([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], w).is_err());
        assert!(PlaneWaveMode::new([1.0, 1e-6, 0.0], [0.0, 1.0, 0.0], w).is_err());
        assert!(PlaneWaveMode::new([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn free_space_scene_is_rejected() {
        let scene = DielectricScene::free_space([3, 3, 3], 1e-9, [0.0; 3]).unwrap();
        let mode = PlaneWaveMode::new([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], omega()).unwrap();
        assert!(matches!(
            solve(&scene, &mode, &SolveOptions::default()),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn dump_round_trip() {
        let cur: Vec<CVec3> = (0..24)
            .map(|i| [C64::new(i as f64, -1.0), C64::new(0.5, i as f64), C64::default()])
            .collect();
        let f = PolarizationCurrentField::new([2, 3, 4], 2e-9, [-1e-9, 0.0, 3e-9], cur).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.bin");
        f.write_dump(&path).unwrap();
        assert_eq!(PolarizationCurrentField::read_dump(&path).unwrap(), f);
    }

    #[test]
    fn precond_kind_parses() {
        assert_eq!("block".parse::<PrecondKind>().unwrap(), PrecondKind::Block);
        assert!("lu".parse::<PrecondKind>().is_err());
    }
}
