//! Procedural voxel shapes and an orthographic depth renderer, used to build
//! aligned multi-view collections with known labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{extract_view_features, GrayImage, HogConfig};
use crate::model::{MultiViewDescriptor, PatchGridConfig, ShapeCollection, ViewSet};
use crate::scalar::Scalar;

pub const DEFAULT_GRID: usize = 32;
pub const DEFAULT_ELEVATION_DEG: f64 = 20.0;

/// Shapes are laid out in a 32-unit design space and voxelized at any size.
const DESIGN: f64 = 32.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Chairlike,
    Tablelike,
    /// Either of the above, picked per shape.
    Mixed,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Chairlike => "chairlike",
            Family::Tablelike => "tablelike",
            Family::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "chairlike" | "chair" => Ok(Family::Chairlike),
            "tablelike" | "table" => Ok(Family::Tablelike),
            "mixed" => Ok(Family::Mixed),
            _ => Err(Error::arg(format!("unknown shape family {s:?}"))),
        }
    }
}

/// Generator parameters, in design units.
#[derive(Clone, Debug, PartialEq)]
pub enum ShapeParams {
    Chair {
        seat_half_width: f64,
        seat_depth: f64,
        seat_thickness: f64,
        leg_height: f64,
        leg_thickness: f64,
        back_height: f64,
        back_thickness: f64,
    },
    Table {
        top_half_width: f64,
        top_depth: f64,
        top_thickness: f64,
        leg_height: f64,
        leg_thickness: f64,
    },
    Custom,
}

/// Axis-aligned box `[lo, hi)` in design units, `(x, y, z)` with y up.
type Aabb = ([f64; 3], [f64; 3]);

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelShape {
    size: usize,
    /// Indexed `(z * size + y) * size + x`.
    occupancy: Vec<bool>,
    pub family: Family,
    pub params: ShapeParams,
    pub labels: Vec<String>,
    pub seed: u64,
    /// Extra rotation about the vertical axis, added to every view azimuth.
    pub yaw_deg: f64,
}

impl VoxelShape {
    pub fn from_occupancy(size: usize, occupancy: Vec<bool>) -> Result<Self> {
        if size == 0 || occupancy.len() != size * size * size {
            return Err(Error::arg("occupancy must hold size³ cells"));
        }
        Ok(Self {
            size,
            occupancy,
            family: Family::Mixed,
            params: ShapeParams::Custom,
            labels: Vec::new(),
            seed: 0,
            yaw_deg: 0.0,
        })
    }

    fn from_boxes(size: usize, boxes: &[Aabb]) -> Vec<bool> {
        let scale = DESIGN / size as f64;
        let mut occ = vec![false; size * size * size];
        for z in 0..size {
            for y in 0..size {
                for x in 0..size {
                    let p = [
                        (x as f64 + 0.5) * scale,
                        (y as f64 + 0.5) * scale,
                        (z as f64 + 0.5) * scale,
                    ];
                    occ[(z * size + y) * size + x] = boxes
                        .iter()
                        .any(|(lo, hi)| (0..3).all(|a| p[a] >= lo[a] && p[a] < hi[a]));
                }
            }
        }
        occ
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn occupied(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupancy[(z * self.size + y) * self.size + x]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn with_yaw(&self, yaw_deg: f64) -> Self {
        Self {
            yaw_deg,
            ..self.clone()
        }
    }
}

/// Mixes a base seed and an index into an independent stream seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pick(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..=hi)
}

fn chair(rng: &mut ChaCha8Rng) -> (ShapeParams, Vec<Aabb>, Vec<String>) {
    let tall = rng.gen_bool(0.5);
    let thick = rng.gen_bool(0.5);
    let seat_half_width = pick(rng, 6.0, 11.0);
    let seat_depth = pick(rng, 10.0, 20.0);
    let seat_thickness = pick(rng, 1.0, 3.0);
    let leg_height = pick(rng, 6.0, 13.0);
    let leg_thickness = if thick {
        pick(rng, 3.0, 5.0)
    } else {
        pick(rng, 1.0, 2.0)
    };
    let back_height = if tall {
        pick(rng, 11.0, 15.0)
    } else {
        pick(rng, 4.0, 8.0)
    };
    let back_thickness = pick(rng, 1.0, 3.0);

    let c = DESIGN / 2.0;
    let (x0, x1) = (c - seat_half_width, c + seat_half_width);
    let (z0, z1) = (c - seat_depth / 2.0, c + seat_depth / 2.0);
    let seat_top = leg_height + seat_thickness;
    let t = leg_thickness;
    let mut boxes = vec![([x0, leg_height, z0], [x1, seat_top, z1])];
    for (lx, lz) in [(x0, z0), (x1 - t, z0), (x0, z1 - t), (x1 - t, z1 - t)] {
        boxes.push(([lx, 0.0, lz], [lx + t, leg_height, lz + t]));
    }
    boxes.push((
        [x0, seat_top, z0],
        [x1, seat_top + back_height, z0 + back_thickness],
    ));
    let labels = vec![format!(
        "chair:back-{}:legs-{}",
        if tall { "tall" } else { "short" },
        if thick { "thick" } else { "thin" }
    )];
    let params = ShapeParams::Chair {
        seat_half_width,
        seat_depth,
        seat_thickness,
        leg_height,
        leg_thickness,
        back_height,
        back_thickness,
    };
    (params, boxes, labels)
}

fn table(rng: &mut ChaCha8Rng) -> (ShapeParams, Vec<Aabb>, Vec<String>) {
    let tall = rng.gen_bool(0.5);
    let wide = rng.gen_bool(0.5);
    let top_half_width = if wide {
        pick(rng, 12.0, 14.0)
    } else {
        pick(rng, 6.0, 9.0)
    };
    let top_depth = pick(rng, 10.0, 24.0);
    let top_thickness = pick(rng, 1.0, 3.0);
    let leg_height = if tall {
        pick(rng, 16.0, 22.0)
    } else {
        pick(rng, 7.0, 12.0)
    };
    let leg_thickness = pick(rng, 1.0, 4.0);

    let c = DESIGN / 2.0;
    let (x0, x1) = (c - top_half_width, c + top_half_width);
    let (z0, z1) = (c - top_depth / 2.0, c + top_depth / 2.0);
    let t = leg_thickness;
    let mut boxes = vec![([x0, leg_height, z0], [x1, leg_height + top_thickness, z1])];
    for (lx, lz) in [(x0, z0), (x1 - t, z0), (x0, z1 - t), (x1 - t, z1 - t)] {
        boxes.push(([lx, 0.0, lz], [lx + t, leg_height, lz + t]));
    }
    let labels = vec![format!(
        "table:legs-{}:top-{}",
        if tall { "tall" } else { "short" },
        if wide { "wide" } else { "narrow" }
    )];
    let params = ShapeParams::Table {
        top_half_width,
        top_depth,
        top_thickness,
        leg_height,
        leg_thickness,
    };
    (params, boxes, labels)
}

/// Draws one shape. Shapes are mirror-symmetric about the vertical plane
/// `x = size / 2`, face `+z`, and stand on `y = 0`.
pub fn sample_shape(family: Family, size: usize, seed: u64) -> Result<VoxelShape> {
    if size < 4 {
        return Err(Error::arg("voxel grid must be at least 4 cells wide"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = match family {
        Family::Mixed => {
            if rng.gen_bool(0.5) {
                Family::Chairlike
            } else {
                Family::Tablelike
            }
        }
        f => f,
    };
    let (params, boxes, labels) = match family {
        Family::Chairlike => chair(&mut rng),
        _ => table(&mut rng),
    };
    Ok(VoxelShape {
        size,
        occupancy: VoxelShape::from_boxes(size, &boxes),
        family,
        params,
        labels,
        seed,
        yaw_deg: 0.0,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderSpec {
    pub views: ViewSet,
    pub elevation_deg: f64,
    pub image_side: usize,
    /// Rays per pixel side; each pixel averages `supersample²` rays.
    pub supersample: usize,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            views: ViewSet::uniform(16).expect("16 views"),
            elevation_deg: DEFAULT_ELEVATION_DEG,
            image_side: 112,
            supersample: 2,
        }
    }
}

/// Orthographic depth rendering of view `v`. The camera orbits the grid
/// centre at the view azimuth plus the shape's yaw; pixels hitting a voxel
/// get `1 - depth / (2 r)` with `r` the grid's circumradius, others 0.
/// Output is quantized to 8 bits so saved renders reload exactly.
pub fn render(shape: &VoxelShape, spec: &RenderSpec, v: usize) -> Result<GrayImage> {
    let az = *spec.views.azimuths().get(v).ok_or(Error::Address {
        axis: "view",
        index: v,
        len: spec.views.count(),
    })?;
    if spec.image_side == 0 {
        return Err(Error::arg("image side must be positive"));
    }
    let r = shape.size as f64;
    let (phi, e) = (
        (az + shape.yaw_deg).to_radians(),
        spec.elevation_deg.to_radians(),
    );
    let to_cam = [phi.sin() * e.cos(), e.sin(), phi.cos() * e.cos()];
    let right = [phi.cos(), 0.0, -phi.sin()];
    let up = [-e.sin() * phi.sin(), e.cos(), -e.sin() * phi.cos()];
    let dir = [-to_cam[0], -to_cam[1], -to_cam[2]];
    let radius = 3f64.sqrt() * r / 2.0;
    let side = spec.image_side;
    let scale = 2f64.sqrt() * r / side as f64;
    let half = side as f64 / 2.0;
    let centre = [r / 2.0; 3];
    let ss = spec.supersample.max(1);
    let mut pixels = vec![0.0f32; side * side];
    for py in 0..side {
        for px in 0..side {
            let mut sum = 0.0;
            for sy in 0..ss {
                for sx in 0..ss {
                    let fx = px as f64 + (sx as f64 + 0.5) / ss as f64;
                    let fy = py as f64 + (sy as f64 + 0.5) / ss as f64;
                    let (s, t) = ((fx - half) * scale, (half - fy) * scale);
                    let origin: [f64; 3] = std::array::from_fn(|a| {
                        centre[a] + s * right[a] + t * up[a] + radius * to_cam[a]
                    });
                    if let Some(hit) = cast_ray(shape, origin, dir) {
                        sum += (1.0 - hit / (2.0 * radius)).clamp(0.0, 1.0);
                    }
                }
            }
            pixels[py * side + px] = (sum / (ss * ss) as f64) as f32;
        }
    }
    Ok(GrayImage::new(side, side, pixels)?.quantized_u8())
}

/// Distance along `dir` (unit) to the first occupied voxel, by grid traversal.
fn cast_ray(shape: &VoxelShape, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
    let n = shape.size as f64;
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for a in 0..3 {
        if d[a].abs() < 1e-12 {
            if o[a] < 0.0 || o[a] >= n {
                return None;
            }
        } else {
            let (ta, tb) = ((0.0 - o[a]) / d[a], (n - o[a]) / d[a]);
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    if t0 >= t1 {
        return None;
    }
    let last = shape.size as i64 - 1;
    let mut cell = [0i64; 3];
    let mut step = [0i64; 3];
    let mut next = [f64::INFINITY; 3];
    let mut delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let p = o[a] + d[a] * t0;
        cell[a] = (p.floor() as i64).clamp(0, last);
        if d[a] > 1e-12 {
            step[a] = 1;
            delta[a] = 1.0 / d[a];
            next[a] = ((cell[a] + 1) as f64 - o[a]) / d[a];
        } else if d[a] < -1e-12 {
            step[a] = -1;
            delta[a] = -1.0 / d[a];
            next[a] = (cell[a] as f64 - o[a]) / d[a];
        }
    }
    let mut t = t0;
    loop {
        if shape.occupied(cell[0] as usize, cell[1] as usize, cell[2] as usize) {
            return Some(t);
        }
        let a = if next[0] <= next[1] && next[0] <= next[2] {
            0
        } else if next[1] <= next[2] {
            1
        } else {
            2
        };
        t = next[a];
        if t > t1 {
            return None;
        }
        cell[a] += step[a];
        if cell[a] < 0 || cell[a] > last {
            return None;
        }
        next[a] += delta[a];
    }
}

/// Settings for [`build_synthetic_collection`].
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub shapes: usize,
    pub family: Family,
    pub grid_size: usize,
    pub seed: u64,
    pub render: RenderSpec,
    pub patch_grid: PatchGridConfig,
    pub hog: HogConfig,
    pub id_prefix: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            shapes: 200,
            family: Family::Chairlike,
            grid_size: DEFAULT_GRID,
            seed: 0,
            render: RenderSpec::default(),
            patch_grid: PatchGridConfig::default(),
            hog: HogConfig::default(),
            id_prefix: "shape".into(),
        }
    }
}

pub struct SyntheticCollection<T: Scalar = f32> {
    pub collection: ShapeCollection<T>,
    pub shapes: Vec<VoxelShape>,
}

impl<T: Scalar> SyntheticCollection<T> {
    /// `(id, labels)` rows in collection order.
    pub fn labels(&self) -> Vec<(String, Vec<String>)> {
        self.collection
            .ids()
            .iter()
            .cloned()
            .zip(self.shapes.iter().map(|s| s.labels.clone()))
            .collect()
    }
}

/// Renders and featurizes every view of one shape.
pub fn shape_descriptor<T: Scalar>(
    shape: &VoxelShape,
    render_spec: &RenderSpec,
    grid: &PatchGridConfig,
    hog: &HogConfig,
) -> Result<MultiViewDescriptor<T>> {
    if render_spec.image_side != grid.image_side {
        return Err(Error::arg(
            "render size must match the patch grid image side",
        ));
    }
    let views = render_spec.views.count();
    let dim = hog.descriptor_len(grid.patch_side);
    let mut data = Vec::with_capacity(views * grid.patch_count() * dim);
    for v in 0..views {
        let img = render(shape, render_spec, v)?;
        data.extend(extract_view_features::<T>(&img, grid, hog)?.into_vec());
    }
    MultiViewDescriptor::new(views, grid.patch_count(), dim, data)
}

/// Samples `cfg.shapes` shapes, renders all views and extracts HoG features.
/// Identical configurations give bit-identical collections.
pub fn build_synthetic_collection<T: Scalar>(
    cfg: &SyntheticConfig,
) -> Result<SyntheticCollection<T>> {
    cfg.patch_grid.validate()?;
    cfg.hog.validate(cfg.patch_grid.patch_side)?;
    let shapes: Vec<VoxelShape> = (0..cfg.shapes)
        .map(|i| sample_shape(cfg.family, cfg.grid_size, derive_seed(cfg.seed, i as u64)))
        .collect::<Result<_>>()?;
    let descriptors: Vec<MultiViewDescriptor<T>> = shapes
        .par_iter()
        .map(|s| shape_descriptor(s, &cfg.render, &cfg.patch_grid, &cfg.hog))
        .collect::<Result<_>>()?;
    let ids = (0..cfg.shapes)
        .map(|i| format!("{}-{i:04}", cfg.id_prefix))
        .collect();
    let collection = ShapeCollection::from_descriptors(
        ids,
        cfg.render.views.clone(),
        cfg.patch_grid,
        descriptors,
    )?;
    Ok(SyntheticCollection { collection, shapes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chairs_are_mirror_symmetric() {
        for seed in 0..5 {
            let s = sample_shape(Family::Chairlike, 32, seed).unwrap();
            for z in 0..32 {
                for y in 0..32 {
                    for x in 0..32 {
                        assert_eq!(s.occupied(x, y, z), s.occupied(31 - x, y, z));
                    }
                }
            }
        }
    }

    #[test]
    fn mixed_draws_both_families() {
        let fams: Vec<Family> = (0..40)
            .map(|i| {
                sample_shape(Family::Mixed, 16, derive_seed(1, i))
                    .unwrap()
                    .family
            })
            .collect();
        assert!(fams.contains(&Family::Chairlike) && fams.contains(&Family::Tablelike));
    }

    #[test]
    fn empty_grid_renders_background() {
        let s = VoxelShape::from_occupancy(8, vec![false; 512]).unwrap();
        let img = render(
            &s,
            &RenderSpec {
                image_side: 16,
                ..RenderSpec::default()
            },
            0,
        )
        .unwrap();
        assert!(img.pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn bad_view_is_an_address_error() {
        let s = sample_shape(Family::Chairlike, 16, 0).unwrap();
        assert!(matches!(
            render(&s, &RenderSpec::default(), 16),
            Err(Error::Address { axis: "view", .. })
        ));
    }
}
