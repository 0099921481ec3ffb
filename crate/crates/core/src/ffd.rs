//! Cubic B-spline free-form deformation.
//!
//! Control point `(i, j)` sits at `((i - 1) s_x, (j - 1) s_y)` in template
//! pixels, so the outermost ring lies outside the image and every template
//! pixel is covered by a full 4x4 window of control points.
//!
//! Template and target may differ in size. They are related by a fixed frame
//! offset `o` that centres the template on the target:
//! `T(x) = x + o + D(x)` and `T^-1(x') ~ x' - o - D(x' - o)`.

use std::ops::{Add, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::GrayImage;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelCoord {
    pub x: f64,
    pub y: f64,
}

impl PixelCoord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for PixelCoord {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for PixelCoord {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// `[dx, dy]` in pixels.
pub type Displacement = [f64; 2];

/// Geometry of an `n_x x n_y` control lattice laid over a `image_w x image_h` template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub n_x: usize,
    pub n_y: usize,
    pub s_x: usize,
    pub s_y: usize,
    pub image_w: usize,
    pub image_h: usize,
}

impl LatticeConfig {
    /// Spacings follow `s = ceil(W / (N - 3))`.
    pub fn new(n_x: usize, n_y: usize, image_w: usize, image_h: usize) -> Result<Self> {
        if n_x < 4 || n_y < 4 {
            return Err(Error::InvalidLattice(format!(
                "lattice {n_x}x{n_y} needs at least 4 points per axis"
            )));
        }
        if image_w == 0 || image_h == 0 {
            return Err(Error::EmptyImage);
        }
        Ok(Self {
            n_x,
            n_y,
            s_x: image_w.div_ceil(n_x - 3),
            s_y: image_h.div_ceil(n_y - 3),
            image_w,
            image_h,
        })
    }

    /// Explicit spacings; the patch grid must still cover the image.
    pub fn with_spacing(
        n_x: usize,
        n_y: usize,
        s_x: usize,
        s_y: usize,
        image_w: usize,
        image_h: usize,
    ) -> Result<Self> {
        let cfg = Self::new(n_x, n_y, image_w, image_h)?;
        if s_x == 0 || s_y == 0 || (n_x - 3) * s_x < image_w || (n_y - 3) * s_y < image_h {
            return Err(Error::InvalidLattice(format!(
                "spacing {s_x}x{s_y} does not cover {image_w}x{image_h} with {n_x}x{n_y} points"
            )));
        }
        Ok(Self { s_x, s_y, ..cfg })
    }

    pub fn n_points(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn n_genes(&self) -> usize {
        2 * self.n_points()
    }

    pub fn patch_cols(&self) -> usize {
        self.n_x - 3
    }

    pub fn patch_rows(&self) -> usize {
        self.n_y - 3
    }

    /// Rest position of control point `(i, j)` in template pixels.
    pub fn point_position(&self, i: usize, j: usize) -> PixelCoord {
        PixelCoord::new(
            (i as f64 - 1.0) * self.s_x as f64,
            (j as f64 - 1.0) * self.s_y as f64,
        )
    }

    /// Whether `p` lies in the template domain `[0, W) x [0, H)`.
    #[inline]
    pub fn contains(&self, p: PixelCoord) -> bool {
        p.x >= 0.0 && p.x < self.image_w as f64 && p.y >= 0.0 && p.y < self.image_h as f64
    }
}

/// Uniform cubic B-spline basis at `t`, without range checking.
#[inline]
pub(crate) fn basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let s = 1.0 - t;
    [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// `(B_0(t), B_1(t), B_2(t), B_3(t))` for `t` in `[0, 1)`.
pub fn bspline_weights(t: f64) -> Result<[f64; 4]> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::ParameterOutOfRange(t));
    }
    Ok(basis(t))
}

/// The 4x4 window and blend weights for one template coordinate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Support {
    pub i: usize,
    pub j: usize,
    pub wu: [f64; 4],
    pub wv: [f64; 4],
}

impl Support {
    /// Window origin and local parameters. `i`, `j` are clamped into the
    /// patch grid to absorb ceiling slack at the far border.
    #[inline]
    pub fn at(cfg: &LatticeConfig, p: PixelCoord) -> Self {
        let gx = p.x / cfg.s_x as f64;
        let gy = p.y / cfg.s_y as f64;
        let i = (gx.floor().max(0.0) as usize).min(cfg.n_x - 4);
        let j = (gy.floor().max(0.0) as usize).min(cfg.n_y - 4);
        Self {
            i,
            j,
            wu: basis(gx - i as f64),
            wv: basis(gy - j as f64),
        }
    }
}

/// Lattice of per-point displacements stored row-major (`j * n_x + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMesh {
    config: LatticeConfig,
    displacements: Vec<Displacement>,
}

impl ControlMesh {
    pub fn new(config: LatticeConfig, displacements: Vec<Displacement>) -> Result<Self> {
        if displacements.len() != config.n_points() {
            return Err(Error::LengthMismatch(displacements.len(), config.n_points()));
        }
        if displacements.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLattice("non-finite displacement".into()));
        }
        Ok(Self {
            config,
            displacements,
        })
    }

    pub fn zeros(config: LatticeConfig) -> Self {
        Self::uniform(config, [0.0, 0.0])
    }

    pub fn uniform(config: LatticeConfig, d: Displacement) -> Self {
        Self {
            config,
            displacements: vec![d; config.n_points()],
        }
    }

    pub fn from_fn(config: LatticeConfig, mut f: impl FnMut(usize, usize) -> Displacement) -> Self {
        let mut displacements = Vec::with_capacity(config.n_points());
        for j in 0..config.n_y {
            for i in 0..config.n_x {
                displacements.push(f(i, j));
            }
        }
        Self {
            config,
            displacements,
        }
    }

    /// Decodes a genotype `(d_{0,0,y}, d_{0,0,x}, d_{1,0,y}, ...)`: the x index
    /// runs fastest, and each point contributes its y component first.
    pub fn from_genes(config: LatticeConfig, genes: &[f64]) -> Result<Self> {
        if genes.len() != config.n_genes() {
            return Err(Error::LengthMismatch(genes.len(), config.n_genes()));
        }
        let displacements = genes.chunks_exact(2).map(|g| [g[1], g[0]]).collect();
        Self::new(config, displacements)
    }

    pub fn to_genes(&self) -> Vec<f64> {
        self.displacements.iter().flat_map(|d| [d[1], d[0]]).collect()
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn displacements(&self) -> &[Displacement] {
        &self.displacements
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Displacement {
        self.displacements[j * self.config.n_x + i]
    }

    pub fn set(&mut self, i: usize, j: usize, d: Displacement) {
        self.displacements[j * self.config.n_x + i] = d;
    }

    /// Point-wise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &ControlMesh, b: f64) -> Result<ControlMesh> {
        if self.config != other.config {
            return Err(Error::ConfigMismatch);
        }
        let displacements = self
            .displacements
            .iter()
            .zip(&other.displacements)
            .map(|(p, q)| [a * p[0] + b * q[0], a * p[1] + b * q[1]])
            .collect();
        Ok(Self {
            config: self.config,
            displacements,
        })
    }

    pub fn max_abs_component(&self) -> f64 {
        self.displacements
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    #[inline]
    pub(crate) fn blend(&self, s: &Support) -> Displacement {
        let nx = self.config.n_x;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for n in 0..4 {
            let row = (s.j + n) * nx + s.i;
            let mut rx = 0.0;
            let mut ry = 0.0;
            for m in 0..4 {
                let d = self.displacements[row + m];
                rx += s.wu[m] * d[0];
                ry += s.wu[m] * d[1];
            }
            dx += s.wv[n] * rx;
            dy += s.wv[n] * ry;
        }
        [dx, dy]
    }

    /// Displacement field `D(p)` for `p` in the template domain.
    pub fn displacement_at(&self, p: PixelCoord) -> Result<Displacement> {
        if !self.config.contains(p) {
            return Err(Error::OutsideSupport { x: p.x, y: p.y });
        }
        Ok(self.blend(&Support::at(&self.config, p)))
    }

    /// `D` evaluated at `p` clamped into the template's pixel grid, extending
    /// the field outside the template with its border values.
    pub fn displacement_clamped(&self, p: PixelCoord) -> Displacement {
        let q = PixelCoord::new(
            p.x.clamp(0.0, (self.config.image_w - 1) as f64),
            p.y.clamp(0.0, (self.config.image_h - 1) as f64),
        );
        self.blend(&Support::at(&self.config, q))
    }
}

#[derive(Serialize, Deserialize)]
struct MeshJson {
    n_x: usize,
    n_y: usize,
    s_x: usize,
    s_y: usize,
    image_w: usize,
    image_h: usize,
    displacements: Vec<Displacement>,
}

impl Serialize for ControlMesh {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let c = self.config;
        MeshJson {
            n_x: c.n_x,
            n_y: c.n_y,
            s_x: c.s_x,
            s_y: c.s_y,
            image_w: c.image_w,
            image_h: c.image_h,
            displacements: self.displacements.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ControlMesh {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = MeshJson::deserialize(deserializer)?;
        let config = LatticeConfig::with_spacing(raw.n_x, raw.n_y, raw.s_x, raw.s_y, raw.image_w, raw.image_h)
            .map_err(serde::de::Error::custom)?;
        ControlMesh::new(config, raw.displacements).map_err(serde::de::Error::custom)
    }
}

/// Offset that centres a template of the mesh's size on a `target_w x target_h` frame.
pub fn frame_offset(cfg: &LatticeConfig, target_w: usize, target_h: usize) -> PixelCoord {
    PixelCoord::new(
        (target_w as f64 - cfg.image_w as f64) / 2.0,
        (target_h as f64 - cfg.image_h as f64) / 2.0,
    )
}

/// Forward transform `T(x) = x + o + D(x)`.
pub fn forward_map(mesh: &ControlMesh, offset: PixelCoord, p: PixelCoord) -> Result<PixelCoord> {
    let d = mesh.displacement_at(p)?;
    Ok(p + offset + PixelCoord::new(d[0], d[1]))
}

/// First-order inverse `T^-1(x') ~ x' - o - D(x' - o)`. `None` when `x' - o`
/// falls outside the lattice support.
#[inline]
pub fn inverse_map(mesh: &ControlMesh, offset: PixelCoord, p_target: PixelCoord) -> Option<PixelCoord> {
    let q = p_target - offset;
    if !mesh.config.contains(q) {
        return None;
    }
    let d = mesh.blend(&Support::at(&mesh.config, q));
    Some(PixelCoord::new(q.x - d[0], q.y - d[1]))
}

/// Backward-warped template on the target frame plus its validity mask.
#[derive(Debug, Clone)]
pub struct WarpOutput {
    pub image: GrayImage,
    pub mask: Vec<bool>,
}

impl WarpOutput {
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Samples the template at `T^-1(x')` for every target pixel. Pixels whose
/// pre-image leaves the template are zero and flagged invalid.
pub fn warp_backward(
    template: &GrayImage,
    mesh: &ControlMesh,
    target_w: usize,
    target_h: usize,
) -> Result<WarpOutput> {
    let cfg = mesh.config();
    if cfg.image_w != template.width() || cfg.image_h != template.height() {
        return Err(Error::ConfigMismatch);
    }
    if target_w == 0 || target_h == 0 {
        return Err(Error::EmptyImage);
    }
    let offset = frame_offset(cfg, target_w, target_h);
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..target_h)
        .into_par_iter()
        .map(|y| {
            let mut vals = vec![0.0; target_w];
            let mut mask = vec![false; target_w];
            for x in 0..target_w {
                let pre = inverse_map(mesh, offset, PixelCoord::new(x as f64, y as f64));
                if let Some(v) = pre.and_then(|p| template.sample_bilinear(p.x, p.y)) {
                    vals[x] = v;
                    mask[x] = true;
                }
            }
            (vals, mask)
        })
        .collect();
    let mut data = Vec::with_capacity(target_w * target_h);
    let mut mask = Vec::with_capacity(target_w * target_h);
    for (v, m) in rows {
        data.extend(v);
        mask.extend(m);
    }
    Ok(WarpOutput {
        image: GrayImage::new(target_w, target_h, data)?,
        mask,
    })
}

/// `(x, x + D(x))` for template coordinates on a `stride`-spaced grid.
pub fn warp_forward_points(mesh: &ControlMesh, stride: usize) -> Result<Vec<(PixelCoord, PixelCoord)>> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let cfg = mesh.config();
    let mut out = Vec::with_capacity(cfg.image_w.div_ceil(stride) * cfg.image_h.div_ceil(stride));
    for y in (0..cfg.image_h).step_by(stride) {
        for x in (0..cfg.image_w).step_by(stride) {
            let p = PixelCoord::new(x as f64, y as f64);
            let d = mesh.blend(&Support::at(cfg, p));
            out.push((p, p + PixelCoord::new(d[0], d[1])));
        }
    }
    Ok(out)
}
