//! Synthetic wavy-deformation cases with exact ground truth, and the RMSE /
//! MEDE scores used to judge a registration.
//!
//! A case crops a template from the centre of a base image and produces the
//! target by backward warping the base under a ground-truth mesh attached to
//! the template lattice. Outside the template the field is extended with its
//! border values, so every target pixel is defined.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ffd::{frame_offset, ControlMesh, LatticeConfig, PixelCoord};
use crate::image::GrayImage;
use crate::objectives::{partition_groups, Evaluator};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DeformationKind {
    /// Vertical displacements only.
    Vertical,
    /// Vertical and horizontal waves.
    Both,
}

impl DeformationKind {
    pub fn name(self) -> &'static str {
        match self {
            DeformationKind::Vertical => "vertical",
            DeformationKind::Both => "both",
        }
    }
}

impl std::fmt::Display for DeformationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `d_y(i, j) = A sin(2 pi c i / (N_x - 1) + phi)`; with [`DeformationKind::Both`]
/// also `d_x(i, j) = A sin(2 pi c j / (N_y - 1) + phi)`.
pub fn generate_wavy_mesh(
    cfg: &LatticeConfig,
    kind: DeformationKind,
    amplitude: f64,
    cycles: f64,
    phase: f64,
) -> Result<ControlMesh> {
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(Error::Config(format!("wave amplitude {amplitude} must be finite and non-negative")));
    }
    if !(cycles.is_finite() && cycles > 0.0) || !phase.is_finite() {
        return Err(Error::Config(format!("invalid wave cycles {cycles} or phase {phase}")));
    }
    let wave = |k: usize, n: usize| amplitude * (2.0 * PI * cycles * k as f64 / (n - 1) as f64 + phase).sin();
    Ok(ControlMesh::from_fn(*cfg, |i, j| {
        let dx = match kind {
            DeformationKind::Vertical => 0.0,
            DeformationKind::Both => wave(j, cfg.n_y),
        };
        [dx, wave(i, cfg.n_x)]
    }))
}

#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub base: GrayImage,
    /// Centre crop of `base`, the size of `gt_mesh`'s lattice.
    pub template: GrayImage,
    /// `base` backward-warped under `gt_mesh`, same size as `base`.
    pub target: GrayImage,
    pub gt_mesh: ControlMesh,
    /// Top-left corner of the crop in base coordinates.
    pub crop_origin: (usize, usize),
}

/// Builds a case: `target(x') = base(x' - D(x' - o))` with `o` the crop origin.
///
/// The mesh's lattice must describe a `template_size x template_size`
/// template, and `base - template_size` must be even on both axes so that the
/// crop is exactly centred.
pub fn synthesize_case(base: &GrayImage, template_size: usize, mesh: &ControlMesh) -> Result<SyntheticCase> {
    let (w, h) = (base.width(), base.height());
    if template_size == 0 || template_size > w || template_size > h {
        return Err(Error::CropTooLarge {
            crop: template_size,
            width: w,
            height: h,
        });
    }
    if !(w - template_size).is_multiple_of(2) || !(h - template_size).is_multiple_of(2) {
        return Err(Error::Config(format!(
            "a {template_size}-pixel crop cannot be centred exactly on {w}x{h}"
        )));
    }
    let cfg = mesh.config();
    if (cfg.image_w, cfg.image_h) != (template_size, template_size) {
        return Err(Error::ConfigMismatch);
    }
    let (x0, y0) = ((w - template_size) / 2, (h - template_size) / 2);
    let template = base.crop(x0, y0, template_size, template_size)?;
    let o = frame_offset(cfg, w, h);
    let target = GrayImage::from_fn(w, h, |x, y| {
        let q = PixelCoord::new(x as f64, y as f64);
        let d = mesh.displacement_clamped(q - o);
        base.sample_clamped(q.x - d[0], q.y - d[1])
    })?;
    Ok(SyntheticCase {
        base: base.clone(),
        template,
        target,
        gt_mesh: mesh.clone(),
        crop_origin: (x0, y0),
    })
}

/// Root mean squared intensity residual over every target pixel whose
/// pre-image lands in the template.
pub fn rmse(mesh: &ControlMesh, template: &GrayImage, target: &GrayImage) -> Result<f64> {
    let part = partition_groups(mesh.config(), 1)?;
    let ev = Evaluator::new(template, target, &part, *mesh.config(), 1)?;
    let stats = ev.accumulate(mesh, |r| r * r);
    match stats.total_count() {
        0 => Err(Error::NoOverlap),
        n => Ok((stats.sums[0] / n as f64).sqrt()),
    }
}

/// Mean Euclidean distance between two displacement fields over the dense
/// template pixel grid. The lattices may differ in size but must describe the
/// same template.
pub fn mede(est: &ControlMesh, gt: &ControlMesh) -> Result<f64> {
    let (a, b) = (est.config(), gt.config());
    if (a.image_w, a.image_h) != (b.image_w, b.image_h) {
        return Err(Error::ConfigMismatch);
    }
    let mut total = 0.0;
    for y in 0..a.image_h {
        for x in 0..a.image_w {
            let p = PixelCoord::new(x as f64, y as f64);
            let (de, dg) = (est.displacement_at(p)?, gt.displacement_at(p)?);
            total += (de[0] - dg[0]).hypot(de[1] - dg[1]);
        }
    }
    Ok(total / (a.image_w * a.image_h) as f64)
}

/// Deterministic grayscale texture: a sum of randomly oriented cosine
/// gratings at several wavelengths, rescaled to `[16, 239]`.
pub fn procedural_texture(width: usize, height: usize, seed: u64) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<[f64; 4]> = (0..24)
        .map(|_| {
            let theta = rng.gen_range(0.0..PI);
            let wavelength = rng.gen_range(18.0..90.0);
            let k = 2.0 * PI / wavelength;
            [k * theta.cos(), k * theta.sin(), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.5..1.0)]
        })
        .collect();
    let raw: Vec<f64> = (0..width * height)
        .map(|p| {
            let (x, y) = ((p % width) as f64, (p / width) as f64);
            waves.iter().map(|w| w[3] * (w[0] * x + w[1] * y + w[2]).cos()).sum()
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = if hi > lo { 223.0 / (hi - lo) } else { 0.0 };
    GrayImage::new(width, height, raw.into_iter().map(|v| 16.0 + (v - lo) * scale).collect())
}

/// One benchmark case: a base image, a deformation kind, the finest lattice
/// and the decision range, which is also the wave amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    /// Image path, or `procedural:<seed>` for a generated texture.
    pub image: String,
    pub kind: DeformationKind,
    pub lattice: (usize, usize),
    pub range: f64,
    #[serde(default = "default_cycles")]
    pub cycles: f64,
    #[serde(default)]
    pub phase: f64,
}

fn default_cycles() -> f64 {
    1.0
}

impl CaseSpec {
    /// Short label used in CSV rows: the file stem or the procedural tag.
    pub fn image_label(&self) -> String {
        match self.image.strip_prefix("procedural:") {
            Some(_) => self.image.replace(':', "-"),
            None => PathBuf::from(&self.image)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.image.clone()),
        }
    }

    pub fn lattice_label(&self) -> String {
        format!("{}x{}", self.lattice.0, self.lattice.1)
    }

    /// Procedural seed if the image is generated.
    pub fn procedural_seed(&self) -> Option<Result<u64>> {
        self.image.strip_prefix("procedural:").map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("bad procedural seed in {:?}", self.image)))
        })
    }
}

/// Case manifest as stored on disk (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseManifest {
    #[serde(default = "default_base_size")]
    pub base_size: usize,
    #[serde(default = "default_template_size")]
    pub template_size: usize,
    pub cases: Vec<CaseSpec>,
}

fn default_base_size() -> usize {
    400
}

fn default_template_size() -> usize {
    160
}

/// Full factorial grid: images x {vertical, both} x {7x7, 11x11} x {5, 10}.
pub fn paper_grid(images: &[String]) -> Vec<CaseSpec> {
    let mut out = Vec::new();
    for image in images {
        for kind in [DeformationKind::Vertical, DeformationKind::Both] {
            for (lattice, range) in [((7, 7), 5.0), ((7, 7), 10.0), ((11, 11), 5.0), ((11, 11), 10.0)] {
                out.push(CaseSpec {
                    image: image.clone(),
                    kind,
                    lattice,
                    range,
                    cycles: 1.0,
                    phase: 0.0,
                });
            }
        }
    }
    out
}

/// Materialises a case: loads or generates the base, builds the ground-truth
/// mesh on the template lattice, and warps.
pub fn build_case(spec: &CaseSpec, manifest: &CaseManifest) -> Result<SyntheticCase> {
    let base = match spec.procedural_seed() {
        Some(seed) => procedural_texture(manifest.base_size, manifest.base_size, seed?)?,
        None => crate::image::read_image(&spec.image)?,
    };
    let t = manifest.template_size;
    let cfg = LatticeConfig::new(spec.lattice.0, spec.lattice.1, t, t)?;
    let mesh = generate_wavy_mesh(&cfg, spec.kind, spec.range, spec.cycles, spec.phase)?;
    synthesize_case(&base, t, &mesh)
}
