//! Patch/group partitioning of the template and per-group intensity objectives.
//!
//! A patch is the set of template pixels that share one 4x4 window of control
//! points; an `N_x x N_y` lattice gives `(N_x - 3) x (N_y - 3)` patches. Groups
//! are unions of patches, and each group yields one mean-absolute-difference
//! objective over the target samples whose pre-image lands in it.

use serde::Serialize;

use crate::ffd::{frame_offset, ControlMesh, LatticeConfig, PixelCoord, Support};
use crate::image::GrayImage;
use crate::{Error, Result};

/// Per-group mean absolute intensity difference; lower is better.
pub type ObjectiveVector = Vec<f64>;

/// Objective assigned to a group that receives no samples.
pub const EMPTY_GROUP_PENALTY: f64 = 255.0;

/// Patch index `(col, row)` containing template coordinate `p`.
pub fn patch_of(p: PixelCoord, cfg: &LatticeConfig) -> Result<(usize, usize)> {
    if !cfg.contains(p) {
        return Err(Error::OutsideSupport { x: p.x, y: p.y });
    }
    Ok(patch_index(p.x as usize, p.y as usize, cfg))
}

#[inline]
fn patch_index(x: usize, y: usize, cfg: &LatticeConfig) -> (usize, usize) {
    (
        (x / cfg.s_x).min(cfg.patch_cols() - 1),
        (y / cfg.s_y).min(cfg.patch_rows() - 1),
    )
}

/// Assignment of template pixels (and, when aligned, patches) to groups.
///
/// Group ids are 0-based: for two groups 0 is the left half and 1 the right;
/// for four groups the quadrants are numbered row by row from the top-left.
#[derive(Debug, Clone, Serialize)]
pub struct GroupPartition {
    pub n_groups: usize,
    pub patch_cols: usize,
    pub patch_rows: usize,
    /// Row-major patch grid of group ids.
    pub patch_to_group: Vec<usize>,
    /// False when a level's patch grid was too small to split and the
    /// template pixels were halved directly instead.
    pub patch_aligned: bool,
    #[serde(skip)]
    template_w: usize,
    #[serde(skip)]
    template_h: usize,
    #[serde(skip)]
    pixel_group: Vec<u8>,
}

fn split_factors(n_groups: usize) -> Result<(usize, usize)> {
    match n_groups {
        1 => Ok((1, 1)),
        2 => Ok((2, 1)),
        4 => Ok((2, 2)),
        n => Err(Error::UnsupportedGroupCount(n)),
    }
}

/// Splits the patch grid into 1 group, left/right halves, or quadrants.
pub fn partition_groups(cfg: &LatticeConfig, n_groups: usize) -> Result<GroupPartition> {
    let (gx, gy) = split_factors(n_groups)?;
    let (cols, rows) = (cfg.patch_cols(), cfg.patch_rows());
    if cols % gx != 0 || rows % gy != 0 {
        return Err(Error::UnsplittablePatchGrid {
            cols,
            rows,
            groups: n_groups,
        });
    }
    let mut patch_to_group = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            patch_to_group.push((r * gy / rows) * gx + c * gx / cols);
        }
    }
    let mut pixel_group = Vec::with_capacity(cfg.image_w * cfg.image_h);
    for y in 0..cfg.image_h {
        for x in 0..cfg.image_w {
            let (c, r) = patch_index(x, y, cfg);
            pixel_group.push(patch_to_group[r * cols + c] as u8);
        }
    }
    Ok(GroupPartition {
        n_groups,
        patch_cols: cols,
        patch_rows: rows,
        patch_to_group,
        patch_aligned: true,
        template_w: cfg.image_w,
        template_h: cfg.image_h,
        pixel_group,
    })
}

/// Like [`partition_groups`], but when the patch grid is too small to split
/// the template pixels are halved along the offending axes instead. Coarse
/// pyramid levels (e.g. a 4x4 lattice with a single patch) need this to keep
/// the objective count fixed across levels.
pub fn partition_for_level(cfg: &LatticeConfig, n_groups: usize) -> Result<GroupPartition> {
    match partition_groups(cfg, n_groups) {
        Err(Error::UnsplittablePatchGrid { .. }) => {}
        other => return other,
    }
    let (gx, gy) = split_factors(n_groups)?;
    let (w, h) = (cfg.image_w, cfg.image_h);
    if w < gx || h < gy {
        return Err(Error::UnsplittablePatchGrid {
            cols: cfg.patch_cols(),
            rows: cfg.patch_rows(),
            groups: n_groups,
        });
    }
    let group_at = |x: usize, y: usize| (y * gy / h) * gx + x * gx / w;
    let mut pixel_group = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            pixel_group.push(group_at(x, y) as u8);
        }
    }
    let (cols, rows) = (cfg.patch_cols(), cfg.patch_rows());
    let mut patch_to_group = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let cx = (c * cfg.s_x + cfg.s_x / 2).min(w - 1);
            let cy = (r * cfg.s_y + cfg.s_y / 2).min(h - 1);
            patch_to_group.push(group_at(cx, cy));
        }
    }
    Ok(GroupPartition {
        n_groups,
        patch_cols: cols,
        patch_rows: rows,
        patch_to_group,
        patch_aligned: false,
        template_w: w,
        template_h: h,
        pixel_group,
    })
}

impl GroupPartition {
    /// Group of the integer template pixel `(x, y)`.
    #[inline]
    pub fn group_of_pixel(&self, x: usize, y: usize) -> usize {
        self.pixel_group[y * self.template_w + x] as usize
    }

    pub fn group_of_patch(&self, col: usize, row: usize) -> usize {
        self.patch_to_group[row * self.patch_cols + col]
    }

    /// `omega_i` as a boolean raster over the template.
    pub fn group_mask(&self, group: usize) -> Vec<bool> {
        self.pixel_group.iter().map(|&g| g as usize == group).collect()
    }

    pub fn group_pixel_count(&self, group: usize) -> usize {
        self.pixel_group.iter().filter(|&&g| g as usize == group).count()
    }

    pub fn template_size(&self) -> (usize, usize) {
        (self.template_w, self.template_h)
    }

    /// `true` for control points `(a, b)` that influence at least one pixel of
    /// `group`, i.e. the union of the 4x4 windows of the group's patches.
    /// Indexed row-major like the mesh.
    pub fn group_support(&self, group: usize, cfg: &LatticeConfig) -> Result<Vec<bool>> {
        if (cfg.image_w, cfg.image_h) != (self.template_w, self.template_h)
            || (cfg.patch_cols(), cfg.patch_rows()) != (self.patch_cols, self.patch_rows)
        {
            return Err(Error::ConfigMismatch);
        }
        let mut touched = vec![false; self.patch_cols * self.patch_rows];
        for y in 0..self.template_h {
            for x in 0..self.template_w {
                if self.group_of_pixel(x, y) == group {
                    let (c, r) = patch_index(x, y, cfg);
                    touched[r * self.patch_cols + c] = true;
                }
            }
        }
        let mut support = vec![false; cfg.n_points()];
        for r in 0..self.patch_rows {
            for c in 0..self.patch_cols {
                if touched[r * self.patch_cols + c] {
                    for b in r..r + 4 {
                        for a in c..c + 4 {
                            support[b * cfg.n_x + a] = true;
                        }
                    }
                }
            }
        }
        Ok(support)
    }
}

/// Per-group residual sums and sample counts from one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub sums: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GroupStats {
    pub fn means(&self) -> ObjectiveVector {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(&s, &n)| if n == 0 { EMPTY_GROUP_PENALTY } else { s / n as f64 })
            .collect()
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    support: Support,
    q: PixelCoord,
    intensity: f64,
}

/// Precomputed sampling plan for one template/target pair.
///
/// Target pixels are scanned on a `stride` grid anchored at `(0, 0)`. The
/// B-spline window of `x' - o` does not depend on the mesh, so it is cached.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    template: &'a GrayImage,
    partition: &'a GroupPartition,
    config: LatticeConfig,
    samples: Vec<Sample>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        template: &'a GrayImage,
        target: &GrayImage,
        partition: &'a GroupPartition,
        config: LatticeConfig,
        stride: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if (config.image_w, config.image_h) != (template.width(), template.height())
            || partition.template_size() != (template.width(), template.height())
        {
            return Err(Error::ConfigMismatch);
        }
        let offset = frame_offset(&config, target.width(), target.height());
        let mut samples = Vec::new();
        for y in (0..target.height()).step_by(stride) {
            for x in (0..target.width()).step_by(stride) {
                let q = PixelCoord::new(x as f64, y as f64) - offset;
                if config.contains(q) {
                    samples.push(Sample {
                        support: Support::at(&config, q),
                        q,
                        intensity: target.get(x, y),
                    });
                }
            }
        }
        Ok(Self {
            template,
            partition,
            config,
            samples,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.partition.n_groups
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    /// Scans the samples in raster order, accumulating `residual(I'(x') - I(T^-1(x')))`
    /// into the group owning the pre-image's integer pixel.
    pub fn accumulate(&self, mesh: &ControlMesh, residual: impl Fn(f64) -> f64) -> GroupStats {
        let n = self.partition.n_groups;
        let mut sums = vec![0.0; n];
        let mut counts = vec![0usize; n];
        for s in &self.samples {
            let d = mesh.blend(&s.support);
            let px = s.q.x - d[0];
            let py = s.q.y - d[1];
            if let Some(v) = self.template.sample_bilinear(px, py) {
                let g = self.partition.group_of_pixel(px as usize, py as usize);
                sums[g] += residual(s.intensity - v);
                counts[g] += 1;
            }
        }
        GroupStats { sums, counts }
    }

    pub fn stats(&self, mesh: &ControlMesh) -> GroupStats {
        self.accumulate(mesh, f64::abs)
    }

    pub fn evaluate(&self, mesh: &ControlMesh) -> ObjectiveVector {
        self.stats(mesh).means()
    }

    /// Objective vector of an encoded genotype.
    pub fn evaluate_genes(&self, genes: &[f64]) -> Result<ObjectiveVector> {
        Ok(self.evaluate(&ControlMesh::from_genes(self.config, genes)?))
    }
}

/// One-shot objective evaluation; see [`Evaluator`].
pub fn evaluate_objectives(
    mesh: &ControlMesh,
    template: &GrayImage,
    target: &GrayImage,
    part: &GroupPartition,
    stride: usize,
) -> Result<ObjectiveVector> {
    Ok(Evaluator::new(template, target, part, *mesh.config(), stride)?.evaluate(mesh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffd::warp_backward;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg160() -> LatticeConfig {
        LatticeConfig::new(7, 7, 160, 160).unwrap()
    }

    fn texture(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            128.0 + 60.0 * (x / 9.0).sin() * (y / 13.0).cos() + 40.0 * ((x + y) / 21.0).sin()
        })
        .unwrap()
    }

    #[test]
    fn patch_lookup() {
        let cfg = cfg160();
        assert_eq!(patch_of(PixelCoord::new(0.0, 0.0), &cfg).unwrap(), (0, 0));
        assert_eq!(patch_of(PixelCoord::new(159.0, 159.0), &cfg).unwrap(), (3, 3));
        assert_eq!(patch_of(PixelCoord::new(85.0, 39.9), &cfg).unwrap(), (2, 0));
        assert!(patch_of(PixelCoord::new(160.0, 0.0), &cfg).is_err());
        assert_eq!((cfg.patch_cols(), cfg.patch_rows()), (4, 4));
    }

    #[test]
    fn group_layouts() {
        let cfg = cfg160();
        let one = partition_groups(&cfg, 1).unwrap();
        assert!(one.group_mask(0).iter().all(|&m| m));

        let two = partition_groups(&cfg, 2).unwrap();
        for g in 0..2 {
            let patches: Vec<_> = (0..16).filter(|&k| two.patch_to_group[k] == g).collect();
            assert_eq!(patches.len(), 8);
            assert!(patches.iter().all(|k| (k % 4 < 2) == (g == 0)));
        }

        let four = partition_groups(&cfg, 4).unwrap();
        assert_eq!(four.group_of_patch(0, 0), 0);
        assert_eq!(four.group_of_patch(3, 0), 1);
        assert_eq!(four.group_of_patch(0, 3), 2);
        assert_eq!(four.group_of_patch(2, 2), 3);
        for g in 0..4 {
            assert_eq!(four.patch_to_group.iter().filter(|&&x| x == g).count(), 4);
            assert_eq!(four.group_pixel_count(g), 80 * 80);
        }
        let total: usize = (0..4).map(|g| four.group_pixel_count(g)).sum();
        assert_eq!(total, 160 * 160);
    }

    #[test]
    fn split_errors_and_fallback() {
        let small = LatticeConfig::new(4, 4, 40, 40).unwrap();
        assert!(matches!(
            partition_groups(&small, 2),
            Err(Error::UnsplittablePatchGrid { .. })
        ));
        assert!(matches!(
            partition_groups(&cfg160(), 3),
            Err(Error::UnsupportedGroupCount(3))
        ));
        let fb = partition_for_level(&small, 2).unwrap();
        assert!(!fb.patch_aligned);
        assert_eq!(fb.group_of_pixel(19, 5), 0);
        assert_eq!(fb.group_of_pixel(20, 5), 1);
        let fb4 = partition_for_level(&LatticeConfig::new(5, 4, 80, 40).unwrap(), 4).unwrap();
        assert_eq!(fb4.group_of_pixel(0, 0), 0);
        assert_eq!(fb4.group_of_pixel(79, 39), 3);
        assert!(partition_for_level(&cfg160(), 2).unwrap().patch_aligned);
    }

    #[test]
    fn supports_overlap_in_three_center_columns() {
        let cfg = cfg160();
        let two = partition_groups(&cfg, 2).unwrap();
        let left = two.group_support(0, &cfg).unwrap();
        let right = two.group_support(1, &cfg).unwrap();
        for j in 0..7 {
            for i in 0..7 {
                assert_eq!(left[j * 7 + i], i <= 4);
                assert_eq!(right[j * 7 + i], i >= 2);
            }
        }
    }

    #[test]
    fn self_registration_is_zero() {
        let tpl = texture(160, 160);
        let cfg = cfg160();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mesh = ControlMesh::from_fn(cfg, |_, _| [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
        let warped = warp_backward(&tpl, &mesh, 200, 190).unwrap();
        let target = GrayImage::from_fn(200, 190, |x, y| {
            let k = y * 200 + x;
            if warped.mask[k] {
                warped.image.data()[k]
            } else {
                17.0
            }
        })
        .unwrap();
        for n in [1, 2, 4] {
            let part = partition_groups(&cfg, n).unwrap();
            let f = evaluate_objectives(&mesh, &tpl, &target, &part, 5).unwrap();
            assert_eq!(f.len(), n);
            assert!(f.iter().all(|&v| v.abs() < 1e-9), "{f:?}");
        }
    }

    #[test]
    fn counts_match_warp_mask() {
        let tpl = texture(160, 160);
        let cfg = cfg160();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mesh = ControlMesh::from_fn(cfg, |_, _| [rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)]);
        let target = texture(220, 180);
        let warped = warp_backward(&tpl, &mesh, 220, 180).unwrap();
        let one = partition_groups(&cfg, 1).unwrap();
        let stats = Evaluator::new(&tpl, &target, &one, cfg, 1).unwrap().stats(&mesh);
        assert_eq!(stats.total_count(), warped.valid_count());

        // Group sample sets partition the single-objective sample set.
        let four = partition_groups(&cfg, 4).unwrap();
        let s4 = Evaluator::new(&tpl, &target, &four, cfg, 1).unwrap().stats(&mesh);
        assert_eq!(s4.total_count(), stats.total_count());
        let f1 = stats.means()[0] * stats.counts[0] as f64;
        let weighted: f64 = s4.means().iter().zip(&s4.counts).map(|(f, &n)| f * n as f64).sum();
        assert!((weighted - f1).abs() < 1e-6 * f1.max(1.0));
    }

    #[test]
    fn empty_group_penalty() {
        let tpl = texture(160, 160);
        let cfg = cfg160();
        let two = partition_groups(&cfg, 2).unwrap();
        // Pre-images move 90 px right, so none of them land in the left half.
        let mesh = ControlMesh::uniform(cfg, [-90.0, 0.0]);
        let f = evaluate_objectives(&mesh, &tpl, &tpl, &two, 3).unwrap();
        assert_eq!(f[0], EMPTY_GROUP_PENALTY);
        assert!(f[1] < EMPTY_GROUP_PENALTY);
    }

    #[test]
    fn local_control_point_only_moves_its_group() {
        let tpl = texture(160, 160);
        let target = texture(400, 400);
        let cfg = LatticeConfig::new(11, 11, 160, 160).unwrap();
        let four = partition_groups(&cfg, 4).unwrap();
        let ev = Evaluator::new(&tpl, &target, &four, cfg, 2).unwrap();
        let base = ControlMesh::zeros(cfg);
        let before = ev.evaluate(&base);
        // Point (1, 1) only affects patches (0..=1, 0..=1), all in group 0.
        let mut moved = base.clone();
        moved.set(1, 1, [0.3, -0.4]);
        let after = ev.evaluate(&moved);
        assert_ne!(after[0], before[0]);
        assert_eq!(&after[1..], &before[1..]);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let tpl = texture(160, 160);
        let part = partition_groups(&cfg160(), 1).unwrap();
        let other = LatticeConfig::new(7, 7, 100, 100).unwrap();
        assert!(Evaluator::new(&tpl, &tpl, &part, other, 1).is_err());
        assert!(Evaluator::new(&tpl, &tpl, &part, cfg160(), 0).is_err());
    }
}
