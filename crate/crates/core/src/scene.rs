//! Voxelized dielectric scenes on a uniform Cartesian grid.
//!
//! A voxel takes the permittivity of a primitive iff its center lies inside
//! that primitive; later primitives overwrite earlier ones. Everything else
//! is vacuum (relative permittivity exactly 1).

use std::f64::consts::PI;

use crate::vec3::Vec3;
use crate::{Error, Result, C64};

/// Free-space voxels added on each face of the bounding box.
pub const DEFAULT_PADDING: usize = 2;

const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct DielectricScene {
    dims: [usize; 3],
    spacing: f64,
    origin: Vec3,
    rel_permittivity: Vec<C64>,
}

impl DielectricScene {
    /// `origin` is the lower corner of voxel `(0, 0, 0)`; voxels are stored
    /// x-fastest.
    pub fn new(
        dims: [usize; 3],
        spacing: f64,
        origin: Vec3,
        rel_permittivity: Vec<C64>,
    ) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "grid spacing must be positive, got {spacing}"
            )));
        }
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidGeometry(format!(
                "grid dimensions must be at least 1, got {dims:?}"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if rel_permittivity.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected {n} permittivity samples, got {}",
                rel_permittivity.len()
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            rel_permittivity,
        })
    }

    pub fn free_space(dims: [usize; 3], spacing: f64, origin: Vec3) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, origin, vec![ONE; n])
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

    pub fn rel_permittivity(&self) -> &[C64] {
        &self.rel_permittivity
    }

    pub fn num_voxels(&self) -> usize {
        self.rel_permittivity.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    pub fn linear_index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn grid_index(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn voxel_center(&self, idx: usize) -> Vec3 {
        let g = self.grid_index(idx);
        std::array::from_fn(|a| self.origin[a] + (g[a] as f64 + 0.5) * self.spacing)
    }

    pub fn is_material(&self, idx: usize) -> bool {
        self.rel_permittivity[idx] != ONE
    }

    /// Linear indices of all non-vacuum voxels, ascending.
    pub fn material_voxels(&self) -> Vec<usize> {
        (0..self.num_voxels())
            .filter(|&i| self.is_material(i))
            .collect()
    }

    pub fn material_count(&self) -> usize {
        self.rel_permittivity.iter().filter(|&&e| e != ONE).count()
    }

    /// Inclusive-exclusive index box around the material voxels.
    pub fn material_bounds(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for idx in 0..self.num_voxels() {
            if self.is_material(idx) {
                any = true;
                let g = self.grid_index(idx);
                for a in 0..3 {
                    lo[a] = lo[a].min(g[a]);
                    hi[a] = hi[a].max(g[a] + 1);
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Scene reflected through the mid-plane of the grid normal to `axis`.
    pub fn mirrored(&self, axis: usize) -> Self {
        let mut eps = self.rel_permittivity.clone();
        for (idx, e) in eps.iter_mut().enumerate() {
            let mut g = self.grid_index(idx);
            g[axis] = self.dims[axis] - 1 - g[axis];
            *e = self.rel_permittivity[self.linear_index(g)];
        }
        Self {
            rel_permittivity: eps,
            ..self.clone()
        }
    }
}

/// Rectangular nanofin array with a Pancharatnam–Berry rotation profile.
///
/// Fins sit on a finite substrate slab whose top face is the plane z = 0.
/// The array is centered on the z axis, with the phase gradient along x:
/// each row holds `groups_x * fins_per_group` cells and the fin in column
/// `c` carries index `m = c % fins_per_group`.
///
/// `n_substrate` is a refractive index. Some published parameter sets quote
/// 2.25 for glass, which is closer to a permittivity than an index; the
/// field is kept explicit so either reading can be used.
#[derive(Debug, Clone, PartialEq)]
pub struct PbpLayout {
    pub periodicity: f64,
    pub height: f64,
    pub length: f64,
    pub width: f64,
    /// Target deflection angle (radians).
    pub deflection_angle: f64,
    pub fins_per_group: usize,
    pub groups_x: usize,
    /// Number of fin rows along y.
    pub rows: usize,
    pub n_fin: f64,
    pub n_substrate: f64,
    pub substrate_thickness: f64,
}

/// One placed nanofin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fin {
    pub index: usize,
    pub center: [f64; 2],
    /// Rotation about +z, counter-clockwise seen from above (radians).
    pub rotation: f64,
}

impl PbpLayout {
    /// Silicon fins on glass for a 1550 nm design with ±10° deflection.
    pub fn silicon_1550() -> Self {
        Self {
            periodicity: 667e-9,
            height: 830e-9,
            length: 486e-9,
            width: 219e-9,
            deflection_angle: 10f64.to_radians(),
            fins_per_group: 13,
            groups_x: 7,
            rows: 7,
            n_fin: 3.44,
            n_substrate: 2.25,
            substrate_thickness: 300e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("periodicity", self.periodicity),
            ("height", self.height),
            ("length", self.length),
            ("width", self.width),
            ("n_fin", self.n_fin),
            ("n_substrate", self.n_substrate),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidGeometry(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.substrate_thickness >= 0.0) {
            return Err(Error::InvalidGeometry(
                "substrate thickness must be non-negative".into(),
            ));
        }
        if !(self.width < self.length && self.length <= self.periodicity) {
            return Err(Error::InvalidGeometry(format!(
                "fin must satisfy width < length <= periodicity (got {} / {} / {})",
                self.width, self.length, self.periodicity
            )));
        }
        if self.fins_per_group == 0 || self.groups_x == 0 || self.rows == 0 {
            return Err(Error::InvalidGeometry("fin counts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn columns(&self) -> usize {
        self.fins_per_group * self.groups_x
    }

    pub fn fin_rotation(&self, m: usize, wavelength: f64) -> f64 {
        pbp_rotation_angle(
            m as i64,
            self.periodicity,
            self.deflection_angle,
            2.0 * PI / wavelength,
        )
    }

    pub fn fins(&self, wavelength: f64) -> Vec<Fin> {
        let cols = self.columns();
        let p = self.periodicity;
        let mut fins = Vec::with_capacity(cols * self.rows);
        for row in 0..self.rows {
            for col in 0..cols {
                let m = col % self.fins_per_group;
                fins.push(Fin {
                    index: m,
                    center: [
                        (col as f64 + 0.5 - cols as f64 / 2.0) * p,
                        (row as f64 + 0.5 - self.rows as f64 / 2.0) * p,
                    ],
                    rotation: self.fin_rotation(m, wavelength),
                });
            }
        }
        fins
    }

    fn footprint(&self) -> (Vec3, Vec3) {
        let hx = self.columns() as f64 * self.periodicity / 2.0;
        let hy = self.rows as f64 * self.periodicity / 2.0;
        ([-hx, -hy, -self.substrate_thickness], [hx, hy, self.height])
    }
}

/// Local rotation of the `m`-th fin: `½·k0·sin(θt)·m·p`.
pub fn pbp_rotation_angle(m: i64, periodicity: f64, deflection_angle: f64, k0: f64) -> f64 {
    0.5 * k0 * deflection_angle.sin() * m as f64 * periodicity
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Sphere {
        center: Vec3,
        radius: f64,
        rel_eps: C64,
    },
    /// Axis-aligned box.
    Slab {
        min: Vec3,
        max: Vec3,
        rel_eps: C64,
    },
    PbpArray {
        layout: PbpLayout,
        wavelength: f64,
    },
}

impl Primitive {
    fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            Primitive::Sphere { center, radius, .. } => (
                std::array::from_fn(|a| center[a] - radius),
                std::array::from_fn(|a| center[a] + radius),
            ),
            Primitive::Slab { min, max, .. } => (*min, *max),
            Primitive::PbpArray { layout, .. } => layout.footprint(),
        }
    }

    fn validate(&self, spacing: f64) -> Result<()> {
        match self {
            Primitive::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidGeometry(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
                if spacing > *radius {
                    return Err(Error::InvalidGeometry(format!(
                        "spacing {spacing} exceeds sphere radius {radius}"
                    )));
                }
            }
            Primitive::Slab { min, max, .. } => {
                if (0..3).any(|a| !(max[a] > min[a])) {
                    return Err(Error::InvalidGeometry(format!(
                        "slab must have positive extent, got {min:?}..{max:?}"
                    )));
                }
            }
            Primitive::PbpArray { layout, wavelength } => {
                layout.validate()?;
                if !(*wavelength > 0.0) {
                    return Err(Error::InvalidGeometry(format!(
                        "wavelength must be positive, got {wavelength}"
                    )));
                }
                if layout.width / spacing < 3.0 {
                    return Err(Error::InvalidGeometry(format!(
                        "spacing {spacing} resolves the fin width {} with fewer than 3 voxels",
                        layout.width
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Assembles primitives onto a grid that is centered on their joint
/// bounding box.
#[derive(Debug, Clone)]
pub struct SceneBuilder {
    spacing: f64,
    padding: usize,
    primitives: Vec<Primitive>,
}

impl SceneBuilder {
    pub fn new(spacing: f64) -> Self {
        Self {
            spacing,
            padding: DEFAULT_PADDING,
            primitives: Vec::new(),
        }
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn add(mut self, primitive: Primitive) -> Self {
        self.primitives.push(primitive);
        self
    }

    pub fn build(&self) -> Result<DielectricScene> {
        self.build_counting_overlaps().map(|(scene, _)| scene)
    }

    /// Also returns how many fin voxels were claimed by more than one fin.
    pub fn build_counting_overlaps(&self) -> Result<(DielectricScene, usize)> {
        let h = self.spacing;
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "grid spacing must be positive, got {h}"
            )));
        }
        if self.primitives.is_empty() {
            return Err(Error::InvalidGeometry("scene has no primitives".into()));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.primitives {
            p.validate(h)?;
            let (a, b) = p.bounds();
            for ax in 0..3 {
                lo[ax] = lo[ax].min(a[ax]);
                hi[ax] = hi[ax].max(b[ax]);
            }
        }
        let center: Vec3 = std::array::from_fn(|a| 0.5 * (lo[a] + hi[a]));
        let dims: [usize; 3] = std::array::from_fn(|a| {
            let core = ((hi[a] - lo[a]) / h - 1e-9).ceil().max(1.0) as usize;
            core + 2 * self.padding
        });
        let origin: Vec3 = std::array::from_fn(|a| center[a] - dims[a] as f64 * h / 2.0);
        let mut grid = Grid {
            dims,
            spacing: h,
            center,
            eps: vec![ONE; dims.iter().product()],
        };

        let mut overlaps = 0;
        for p in &self.primitives {
            match p {
                Primitive::Sphere {
                    center: c,
                    radius,
                    rel_eps,
                } => {
                    let r2 = radius * radius;
                    grid.fill(p.bounds(), *rel_eps, |x| {
                        (0..3).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>() <= r2
                    });
                }
                Primitive::Slab { min, max, rel_eps } => {
                    grid.fill((*min, *max), *rel_eps, |x| {
                        (0..3).all(|a| x[a] >= min[a] && x[a] <= max[a])
                    });
                }
                Primitive::PbpArray { layout, wavelength } => {
                    overlaps += grid.fill_pbp(layout, *wavelength);
                }
            }
        }
        if overlaps > 0 {
            log::warn!("{overlaps} voxels claimed by more than one nanofin; last fin wins");
        }
        Ok((DielectricScene::new(dims, h, origin, grid.eps)?, overlaps))
    }
}

struct Grid {
    dims: [usize; 3],
    spacing: f64,
    center: Vec3,
    eps: Vec<C64>,
}

impl Grid {
    /// Offsets from the grid center are half-integers times the spacing, so
    /// mirror-image voxels get exactly mirrored coordinates.
    fn coord(&self, axis: usize, i: usize) -> f64 {
        self.center[axis] + (i as f64 + 0.5 - self.dims[axis] as f64 / 2.0) * self.spacing
    }

    fn index_range(&self, axis: usize, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let n = self.dims[axis] as f64;
        let f = |x: f64| (x - self.center[axis]) / self.spacing + n / 2.0 - 0.5;
        let a = f(lo).floor().max(0.0) as usize;
        let b = (f(hi).ceil() + 1.0).clamp(0.0, n) as usize;
        a.min(self.dims[axis])..b
    }

    /// Sets `value` on voxels in the box whose center passes `inside`;
    /// returns the number of voxels that were already non-vacuum.
    fn fill(&mut self, (lo, hi): (Vec3, Vec3), value: C64, inside: impl Fn(Vec3) -> bool) -> usize {
        let [nx, ny, _] = self.dims;
        let (ri, rj, rk) = (
            self.index_range(0, lo[0], hi[0]),
            self.index_range(1, lo[1], hi[1]),
            self.index_range(2, lo[2], hi[2]),
        );
        let mut hits = 0;
        for k in rk {
            let z = self.coord(2, k);
            for j in rj.clone() {
                let y = self.coord(1, j);
                for i in ri.clone() {
                    let x = [self.coord(0, i), y, z];
                    if inside(x) {
                        let e = &mut self.eps[i + nx * (j + ny * k)];
                        if *e != ONE {
                            hits += 1;
                        }
                        *e = value;
                    }
                }
            }
        }
        hits
    }

    fn fill_pbp(&mut self, layout: &PbpLayout, wavelength: f64) -> usize {
        let (lo, hi) = layout.footprint();
        if layout.substrate_thickness > 0.0 {
            let top = [hi[0], hi[1], 0.0];
            let eps = C64::new(layout.n_substrate.powi(2), 0.0);
            self.fill((lo, top), eps, |x| {
                (0..3).all(|a| x[a] >= lo[a] && x[a] <= top[a]) && x[2] < 0.0
            });
        }
        let eps_fin = C64::new(layout.n_fin.powi(2), 0.0);
        let (hl, hw, h) = (layout.length / 2.0, layout.width / 2.0, layout.height);
        let reach = (hl * hl + hw * hw).sqrt();
        let mut overlaps = 0;
        for fin in layout.fins(wavelength) {
            let (s, c) = fin.rotation.sin_cos();
            let [cx, cy] = fin.center;
            let bb = (
                [cx - reach, cy - reach, 0.0],
                [cx + reach, cy + reach, h],
            );
            overlaps += self.fill(bb, eps_fin, |x| {
                let (dx, dy) = (x[0] - cx, x[1] - cy);
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                u.abs() <= hl && v.abs() <= hw && x[2] >= 0.0 && x[2] <= h
            });
        }
        overlaps
    }
}

/// A single homogeneous sphere centered on the origin of coordinates.
pub fn build_sphere(
    radius: f64,
    rel_eps: C64,
    spacing: f64,
    padding: usize,
) -> Result<DielectricScene> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "grid spacing must be positive, got {spacing}"
        )));
    }
    SceneBuilder::new(spacing)
        .padding(padding)
        .add(Primitive::Sphere {
            center: [0.0; 3],
            radius,
            rel_eps,
        })
        .build()
}

/// Nanofin array on its substrate, with default padding.
pub fn build_pbp_metasurface(
    layout: &PbpLayout,
    spacing: f64,
    wavelength: f64,
) -> Result<DielectricScene> {
    SceneBuilder::new(spacing)
        .add(Primitive::PbpArray {
            layout: layout.clone(),
            wavelength,
        })
        .build()
}
