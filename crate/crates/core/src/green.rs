//! Free-space dyadic Green's function and its voxel-interaction kernel.
//!
//! `G(R) = (I + ∇∇/k0²) e^{ik0 R} / (4πR)` is sampled at voxel-center offsets
//! and stored as the spectrum of its circulant embedding, so a convolution
//! with a current distribution costs three forward and three inverse FFTs.
//!
//! The zero-offset cell is handled by replacing the cubic voxel with a sphere
//! of equal volume: the principal-value integral of `G` over that sphere is
//! closed-form and isotropic, and the depolarization dyad `L = I/3` adds
//! `-L/k0²` to it. Off-diagonal samples are weighted by the cell volume.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::fft::{fast_len, Fft3};
use crate::vec3::{CVec3, Vec3};
use crate::{Error, Result, C64};

/// Complex 3×3 dyad, row-major.
pub type Dyad = [[C64; 3]; 3];

/// Storage order of the six unique components.
pub const COMPONENTS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Default cap on kernel memory.
pub const DEFAULT_MEMORY_BUDGET: u64 = 3 << 30;

const CACHE_MAGIC: &[u8; 8] = b"HOMFKERN";

fn component_slot(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

pub fn scalar_green(r: f64, k0: f64) -> C64 {
    C64::from_polar(1.0, k0 * r) / (4.0 * PI * r)
}

/// Closed-form dyad at a nonzero offset.
pub fn eval_green_dyad(offset: Vec3, k0: f64) -> Result<Dyad> {
    let r = crate::vec3::norm(offset);
    if r == 0.0 {
        return Err(Error::SingularOffset);
    }
    let g = scalar_green(r, k0);
    let kr = k0 * r;
    let kr2 = kr * kr;
    let ikr = C64::new(0.0, kr);
    let diag = g * (1.0 + (ikr - 1.0) / kr2);
    let radial = g * ((3.0 - 3.0 * ikr - kr2) / kr2);
    let u = [offset[0] / r, offset[1] / r, offset[2] / r];
    Ok(std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let d = if i == j { diag } else { C64::default() };
            d + radial * (u[i] * u[j])
        })
    }))
}

/// Radius of the sphere with the volume of a cubic cell.
pub fn equivalent_radius(spacing: f64) -> f64 {
    spacing * (3.0 / (4.0 * PI)).cbrt()
}

/// Principal-value integral of `G` over the equal-volume sphere of a cell:
/// `I · (2/(3k0²))·[(1 − ik0a)e^{ik0a} − 1]`.
pub fn self_interaction_term(spacing: f64, k0: f64) -> Dyad {
    let a = equivalent_radius(spacing);
    let x = k0 * a;
    let value = if x < 0.1 {
        // Σ_{n≥2} (1−n)(ix)^n/n!, divided by k0² and times 2/3
        let mut sum = C64::default();
        let mut term = C64::new(1.0, 0.0); // i^n x^(n-2) / n!
        let ix = C64::new(0.0, x);
        term *= C64::new(-1.0, 0.0) / 2.0;
        for n in 2..24 {
            if n > 2 {
                term *= ix / n as f64;
            }
            sum += term * (1.0 - n as f64);
        }
        sum * (2.0 / 3.0) * a * a
    } else {
        let ix = C64::new(0.0, x);
        ((1.0 - ix) * ix.exp() - 1.0) * (2.0 / (3.0 * k0 * k0))
    };
    diagonal(value)
}

fn diagonal(v: C64) -> Dyad {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { v } else { C64::default() }))
}

/// Translation-invariant interaction kernel for a grid of `dims` voxels.
pub struct GreenKernel {
    k0: f64,
    spacing: f64,
    dims: [usize; 3],
    ext: [usize; 3],
    self_term: Dyad,
    spectra: [Vec<C64>; 6],
    fft: Fft3,
    scratch: Mutex<Option<[Vec<C64>; 3]>>,
}

impl std::fmt::Debug for GreenKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GreenKernel")
            .field("k0", &self.k0)
            .field("spacing", &self.spacing)
            .field("dims", &self.dims)
            .field("ext", &self.ext)
            .finish_non_exhaustive()
    }
}

/// Circulant extent for `n` voxels: room for offsets `-(n-1)..=n-1`, rounded
/// up to a length the FFT handles without large prime factors.
pub fn embedding_len(n: usize) -> usize {
    if n == 1 {
        1
    } else {
        fast_len(2 * n - 1)
    }
}

pub fn kernel_bytes(dims: [usize; 3]) -> u64 {
    let m: u64 = dims.iter().map(|&n| embedding_len(n) as u64).product();
    // six spectra, three work buffers, one assembly buffer
    m * 16 * 10
}

pub fn build_toeplitz_kernel(dims: [usize; 3], spacing: f64, k0: f64) -> Result<GreenKernel> {
    build_toeplitz_kernel_with_budget(dims, spacing, k0, DEFAULT_MEMORY_BUDGET)
}

pub fn build_toeplitz_kernel_with_budget(
    dims: [usize; 3],
    spacing: f64,
    k0: f64,
    budget: u64,
) -> Result<GreenKernel> {
    if dims.iter().any(|&n| n == 0) {
        return Err(Error::InvalidGeometry(format!("kernel dims must be >= 1, got {dims:?}")));
    }
    if !(spacing > 0.0) || !(k0 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "kernel needs positive spacing and wavenumber, got {spacing}, {k0}"
        )));
    }
    let required = kernel_bytes(dims);
    if required > budget {
        return Err(Error::Resource {
            what: format!("Green kernel for grid {dims:?}"),
            required,
            budget,
            hint: String::new(),
        });
    }
    let ext: [usize; 3] = std::array::from_fn(|a| embedding_len(dims[a]));
    let m = ext.iter().product::<usize>();
    let self_term = self_interaction_term(spacing, k0);
    let zero = cell_integral_at_zero(&self_term, k0);
    let volume = spacing.powi(3);

    // real-space samples, one slab of the embedding per task
    let mut samples = vec![[C64::default(); 6]; m];
    samples
        .par_chunks_mut(ext[0] * ext[1])
        .enumerate()
        .for_each(|(iz, slab)| {
            let Some(dz) = wrap(iz, ext[2], dims[2]) else { return };
            for iy in 0..ext[1] {
                let Some(dy) = wrap(iy, ext[1], dims[1]) else { continue };
                for ix in 0..ext[0] {
                    let Some(dx) = wrap(ix, ext[0], dims[0]) else { continue };
                    let d = if dx == 0 && dy == 0 && dz == 0 {
                        zero
                    } else {
                        let off = [dx as f64 * spacing, dy as f64 * spacing, dz as f64 * spacing];
                        let g = eval_green_dyad(off, k0).expect("nonzero offset");
                        g.map(|row| row.map(|v| v * volume))
                    };
                    slab[ix + ext[0] * iy] = COMPONENTS.map(|(i, j)| d[i][j]);
                }
            }
        });

    let fft = Fft3::new(ext);
    let spectra: [Vec<C64>; 6] = std::array::from_fn(|c| {
        let mut buf: Vec<C64> = samples.iter().map(|s| s[c]).collect();
        fft.forward(&mut buf);
        buf
    });
    Ok(GreenKernel {
        k0,
        spacing,
        dims,
        ext,
        self_term,
        spectra,
        fft,
        scratch: Mutex::new(None),
    })
}

/// Signed offset for circulant index `i`, if it is one the grid can produce.
fn wrap(i: usize, m: usize, n: usize) -> Option<i64> {
    if i < n {
        Some(i as i64)
    } else if i + n > m {
        Some(i as i64 - m as i64)
    } else {
        None
    }
}

/// Cell-integrated zero-offset entry: principal value plus `-L/k0²`.
pub fn cell_integral_at_zero(self_term: &Dyad, k0: f64) -> Dyad {
    let depol = C64::new(1.0 / (3.0 * k0 * k0), 0.0);
    std::array::from_fn(|i| std::array::from_fn(|j| {
        if i == j {
            self_term[i][j] - depol
        } else {
            self_term[i][j]
        }
    }))
}

impl GreenKernel {
    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn embedding_dims(&self) -> [usize; 3] {
        self.ext
    }

    /// Principal-value self term (without the depolarization part).
    pub fn self_term(&self) -> Dyad {
        self.self_term
    }

    /// Spectrum of component `(i, j)`.
    pub fn spectrum(&self, i: usize, j: usize) -> &[C64] {
        &self.spectra[component_slot(i, j)]
    }

    pub fn matches(&self, dims: [usize; 3], spacing: f64, k0: f64) -> bool {
        self.dims == dims && self.spacing == spacing && self.k0 == k0
    }

    /// Cell-volume-weighted sample at an integer voxel offset, recovered from
    /// the direct formulas (not from the spectra).
    pub fn sample(&self, offset: [i64; 3]) -> Dyad {
        if offset == [0, 0, 0] {
            cell_integral_at_zero(&self.self_term, self.k0)
        } else {
            let h = self.spacing;
            let off = offset.map(|d| d as f64 * h);
            eval_green_dyad(off, self.k0)
                .expect("nonzero offset")
                .map(|row| row.map(|v| v * h.powi(3)))
        }
    }

    /// `y(r) = Σ_{r'} K(r − r')·x(r')` over the grid, `x` and `y` stored
    /// x-fastest with one complex 3-vector per voxel.
    pub fn convolve(&self, x: &[CVec3]) -> Vec<CVec3> {
        let [nx, ny, nz] = self.dims;
        assert_eq!(x.len(), nx * ny * nz, "field does not match kernel grid");
        let [mx, my, _] = self.ext;
        let m = self.fft.len();
        let mut bufs = self
            .scratch
            .lock()
            .expect("scratch lock")
            .take()
            .unwrap_or_else(|| std::array::from_fn(|_| vec![C64::default(); m]));

        bufs.par_iter_mut().enumerate().for_each(|(c, buf)| {
            buf.iter_mut().for_each(|v| *v = C64::default());
            for k in 0..nz {
                for j in 0..ny {
                    let src = nx * (j + ny * k);
                    let dst = mx * (j + my * k);
                    for i in 0..nx {
                        buf[dst + i] = x[src + i][c];
                    }
                }
            }
            self.fft.forward_supported(buf, self.dims);
        });

        {
            let [b0, b1, b2] = &mut bufs;
            let s = &self.spectra;
            b0.par_iter_mut()
                .zip(b1.par_iter_mut())
                .zip(b2.par_iter_mut())
                .enumerate()
                .for_each(|(f, ((v0, v1), v2))| {
                    let (x0, x1, x2) = (*v0, *v1, *v2);
                    let (kxx, kxy, kxz, kyy, kyz, kzz) =
                        (s[0][f], s[1][f], s[2][f], s[3][f], s[4][f], s[5][f]);
                    *v0 = kxx * x0 + kxy * x1 + kxz * x2;
                    *v1 = kxy * x0 + kyy * x1 + kyz * x2;
                    *v2 = kxz * x0 + kyz * x1 + kzz * x2;
                });
        }

        bufs.par_iter_mut()
            .for_each(|buf| self.fft.inverse_truncated(buf, self.dims));

        let mut y = vec![[C64::default(); 3]; x.len()];
        for k in 0..nz {
            for j in 0..ny {
                let dst = nx * (j + ny * k);
                let src = mx * (j + my * k);
                for i in 0..nx {
                    y[dst + i] = [bufs[0][src + i], bufs[1][src + i], bufs[2][src + i]];
                }
            }
        }
        *self.scratch.lock().expect("scratch lock") = Some(bufs);
        y
    }

    /// Writes the spectra: an 8-byte magic, then `nx, ny, nz, spacing, k0`
    /// as little-endian f64, then the six component spectra in
    /// xx, xy, xz, yy, yz, zz order as interleaved (re, im) f64 pairs.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        for v in [
            self.dims[0] as f64,
            self.dims[1] as f64,
            self.dims[2] as f64,
            self.spacing,
            self.k0,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for comp in &self.spectra {
            for v in comp {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format("not a kernel cache file".into()));
        }
        let read_f64 = |r: &mut BufReader<File>| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let mut head = [0.0; 5];
        for h in &mut head {
            *h = read_f64(&mut r)?;
        }
        let dims = [head[0] as usize, head[1] as usize, head[2] as usize];
        let (spacing, k0) = (head[3], head[4]);
        if dims.iter().any(|&n| n == 0) || !(spacing > 0.0) || !(k0 > 0.0) {
            return Err(Error::Format("invalid kernel cache header".into()));
        }
        let ext: [usize; 3] = std::array::from_fn(|a| embedding_len(dims[a]));
        let m = ext.iter().product::<usize>();
        let mut spectra: [Vec<C64>; 6] = Default::default();
        for comp in &mut spectra {
            comp.reserve_exact(m);
            for _ in 0..m {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                comp.push(C64::new(re, im));
            }
        }
        Ok(GreenKernel {
            k0,
            spacing,
            dims,
            ext,
            self_term: self_interaction_term(spacing, k0),
            spectra,
            fft: Fft3::new(ext),
            scratch: Mutex::new(None),
        })
    }
}
