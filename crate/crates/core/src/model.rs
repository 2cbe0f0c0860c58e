//! Shared tensor vocabulary: views, the patch grid, per-view feature blocks,
//! multi-view descriptors and aligned shape collections.
//!
//! Naming note: `d` is always the per-patch feature dimension and `W` the
//! visual-vocabulary size. The two are distinct quantities.

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ring of predefined camera azimuths, in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSet {
    azimuths: Vec<f64>,
}

impl ViewSet {
    pub fn new(azimuths: Vec<f64>) -> Result<Self> {
        if azimuths.len() < 2 {
            return Err(Error::arg("a view set needs at least 2 views"));
        }
        for w in azimuths.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::arg("view azimuths must be strictly increasing"));
            }
        }
        if azimuths.iter().any(|a| !(0.0..360.0).contains(a)) {
            return Err(Error::arg("view azimuths must lie in [0, 360)"));
        }
        Ok(Self { azimuths })
    }

    /// `count` azimuths spaced uniformly from 0°.
    pub fn uniform(count: usize) -> Result<Self> {
        let step = 360.0 / count as f64;
        Self::new((0..count).map(|i| i as f64 * step).collect())
    }

    pub fn count(&self) -> usize {
        self.azimuths.len()
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }
}

/// Square image partitioned into overlapping square patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGridConfig {
    pub image_side: usize,
    pub patch_side: usize,
    pub stride: usize,
}

impl Default for PatchGridConfig {
    fn default() -> Self {
        Self {
            image_side: 112,
            patch_side: 32,
            stride: 16,
        }
    }
}

impl PatchGridConfig {
    pub fn new(image_side: usize, patch_side: usize, stride: usize) -> Result<Self> {
        let cfg = Self {
            image_side,
            patch_side,
            stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_side == 0 || self.stride == 0 {
            return Err(Error::arg("patch side and stride must be positive"));
        }
        if self.patch_side > self.image_side {
            return Err(Error::arg("patch side exceeds image side"));
        }
        if !(self.image_side - self.patch_side).is_multiple_of(self.stride) {
            return Err(Error::arg(format!(
                "(image_side - patch_side) = {} is not divisible by stride {}",
                self.image_side - self.patch_side,
                self.stride
            )));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        (self.image_side - self.patch_side) / self.stride + 1
    }

    pub fn cols(&self) -> usize {
        self.rows()
    }

    /// G, the number of patches per view.
    pub fn patch_count(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Pixel offset `(x, y)` of the top-left corner of patch `g` (row-major).
    pub fn patch_origin(&self, g: usize) -> (usize, usize) {
        let cols = self.cols();
        ((g % cols) * self.stride, (g / cols) * self.stride)
    }

    /// Patch index of the horizontally mirrored grid position.
    pub fn mirror_patch(&self, g: usize) -> usize {
        let cols = self.cols();
        let (r, c) = (g / cols, g % cols);
        r * cols + (cols - 1 - c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchAddress {
    pub view: usize,
    pub patch: usize,
}

impl PatchAddress {
    pub fn new(view: usize, patch: usize) -> Self {
        Self { view, patch }
    }
}

/// The G × d patch features of a single view, row-major by patch.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBlock<T: Scalar = f32> {
    patches: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureBlock<T> {
    pub fn new(patches: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != patches * dim {
            return Err(Error::arg(format!(
                "feature block expects {patches}x{dim} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { patches, dim, data })
    }

    pub fn zeros(patches: usize, dim: usize) -> Self {
        Self {
            patches,
            dim,
            data: vec![T::zero(); patches * dim],
        }
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn patch(&self, g: usize) -> &[T] {
        &self.data[g * self.dim..(g + 1) * self.dim]
    }

    pub fn patch_mut(&mut self, g: usize) -> &mut [T] {
        &mut self.data[g * self.dim..(g + 1) * self.dim]
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn cast<U: Scalar>(&self) -> FeatureBlock<U> {
        FeatureBlock {
            patches: self.patches,
            dim: self.dim,
            data: self.data.iter().map(|&x| U::from_f64(x.as_f64())).collect(),
        }
    }
}

/// V × G × d tensor of patch features over every predefined view.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewDescriptor<T: Scalar = f32> {
    views: usize,
    patches: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> MultiViewDescriptor<T> {
    pub fn new(views: usize, patches: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != views * patches * dim {
            return Err(Error::arg(format!(
                "descriptor expects {views}x{patches}x{dim} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            views,
            patches,
            dim,
            data,
        })
    }

    pub fn zeros(views: usize, patches: usize, dim: usize) -> Self {
        Self {
            views,
            patches,
            dim,
            data: vec![T::zero(); views * patches * dim],
        }
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.views, self.patches, self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn view(&self, v: usize) -> &[T] {
        let len = self.patches * self.dim;
        &self.data[v * len..(v + 1) * len]
    }

    pub fn view_mut(&mut self, v: usize) -> &mut [T] {
        let len = self.patches * self.dim;
        &mut self.data[v * len..(v + 1) * len]
    }

    pub fn patch(&self, addr: PatchAddress) -> &[T] {
        let off = (addr.view * self.patches + addr.patch) * self.dim;
        &self.data[off..off + self.dim]
    }

    pub fn patch_mut(&mut self, addr: PatchAddress) -> &mut [T] {
        let off = (addr.view * self.patches + addr.patch) * self.dim;
        &mut self.data[off..off + self.dim]
    }

    pub fn view_block(&self, v: usize) -> FeatureBlock<T> {
        FeatureBlock {
            patches: self.patches,
            dim: self.dim,
            data: self.view(v).to_vec(),
        }
    }
}

/// N aligned multi-view descriptors stored contiguously in
/// (shape, view, patch, dim) row-major order.
///
/// Immutable once built; shared read-only across worker threads.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeCollection<T: Scalar = f32> {
    ids: Vec<String>,
    view_set: ViewSet,
    grid: PatchGridConfig,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> ShapeCollection<T> {
    /// Builds a collection from a flat buffer laid out as (shape, view, patch, dim).
    pub fn from_raw(
        ids: Vec<String>,
        view_set: ViewSet,
        grid: PatchGridConfig,
        dim: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        grid.validate()?;
        if ids.len() < 2 {
            return Err(Error::arg("a shape collection needs at least 2 shapes"));
        }
        if dim == 0 {
            return Err(Error::arg("feature dimension must be positive"));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::arg(format!("duplicate shape id {id:?}")));
            }
        }
        let expected = ids.len() * view_set.count() * grid.patch_count() * dim;
        if data.len() != expected {
            return Err(Error::arg(format!(
                "collection expects {expected} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            ids,
            view_set,
            grid,
            dim,
            data,
        })
    }

    pub fn from_descriptors(
        ids: Vec<String>,
        view_set: ViewSet,
        grid: PatchGridConfig,
        descriptors: Vec<MultiViewDescriptor<T>>,
    ) -> Result<Self> {
        let first = descriptors
            .first()
            .ok_or_else(|| Error::arg("no descriptors given"))?;
        let dim = first.dim;
        if ids.len() != descriptors.len() {
            return Err(Error::arg("id count does not match descriptor count"));
        }
        let mut data = Vec::with_capacity(descriptors.len() * first.data.len());
        for d in &descriptors {
            if d.views != view_set.count() || d.patches != grid.patch_count() || d.dim != dim {
                return Err(Error::arg(
                    "descriptor dimensions disagree with the collection",
                ));
            }
            data.extend_from_slice(&d.data);
        }
        Self::from_raw(ids, view_set, grid, dim, data)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn view_set(&self) -> &ViewSet {
        &self.view_set
    }

    pub fn grid(&self) -> &PatchGridConfig {
        &self.grid
    }

    pub fn views(&self) -> usize {
        self.view_set.count()
    }

    pub fn patches(&self) -> usize {
        self.grid.patch_count()
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    fn descriptor_len(&self) -> usize {
        self.views() * self.patches() * self.dim
    }

    /// Flattened V·G·d descriptor of shape `n`.
    pub fn descriptor(&self, n: usize) -> &[T] {
        let len = self.descriptor_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn descriptor_owned(&self, n: usize) -> MultiViewDescriptor<T> {
        MultiViewDescriptor {
            views: self.views(),
            patches: self.patches(),
            dim: self.dim,
            data: self.descriptor(n).to_vec(),
        }
    }

    /// The G·d observed-view features of shape `n` at view `v`, unchecked.
    pub fn slab(&self, n: usize, v: usize) -> &[T] {
        let len = self.patches() * self.dim;
        let off = (n * self.views() + v) * len;
        &self.data[off..off + len]
    }

    #[inline]
    pub(crate) fn patch_unchecked(&self, n: usize, v: usize, g: usize) -> &[T] {
        let off = ((n * self.views() + v) * self.patches() + g) * self.dim;
        &self.data[off..off + self.dim]
    }

    pub fn check_address(&self, shape: usize, addr: PatchAddress) -> Result<()> {
        if shape >= self.len() {
            return Err(Error::Address {
                axis: "shape",
                index: shape,
                len: self.len(),
            });
        }
        if addr.view >= self.views() {
            return Err(Error::Address {
                axis: "view",
                index: addr.view,
                len: self.views(),
            });
        }
        if addr.patch >= self.patches() {
            return Err(Error::Address {
                axis: "patch",
                index: addr.patch,
                len: self.patches(),
            });
        }
        Ok(())
    }

    /// Feature vector of patch `addr` on shape `shape`.
    pub fn slice_patch(&self, shape: usize, addr: PatchAddress) -> Result<&[T]> {
        self.check_address(shape, addr)?;
        Ok(self.patch_unchecked(shape, addr.view, addr.patch))
    }

    /// d × |subset| matrix whose column j is the patch feature of `subset[j]`.
    pub fn patch_matrix(&self, subset: &[usize], addr: PatchAddress) -> Result<Array2<T>> {
        if subset.is_empty() {
            return Err(Error::arg("patch_matrix needs a non-empty subset"));
        }
        let mut m = Array2::from_elem((self.dim, subset.len()), T::zero());
        for (j, &n) in subset.iter().enumerate() {
            let col = self.slice_patch(n, addr)?;
            for (i, &x) in col.iter().enumerate() {
                m[[i, j]] = x;
            }
        }
        Ok(m)
    }

    /// Copy of the collection restricted to `keep`, in the given order.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(keep.len() * self.descriptor_len());
        let mut ids = Vec::with_capacity(keep.len());
        for &n in keep {
            if n >= self.len() {
                return Err(Error::Address {
                    axis: "shape",
                    index: n,
                    len: self.len(),
                });
            }
            ids.push(self.ids[n].clone());
            data.extend_from_slice(self.descriptor(n));
        }
        Self::from_raw(ids, self.view_set.clone(), self.grid, self.dim, data)
    }

    pub fn cast<U: Scalar>(&self) -> ShapeCollection<U> {
        ShapeCollection {
            ids: self.ids.clone(),
            view_set: self.view_set.clone(),
            grid: self.grid,
            dim: self.dim,
            data: self.data.iter().map(|&x| U::from_f64(x.as_f64())).collect(),
        }
    }
}

fn check_finite<T: Scalar>(data: &[T]) -> Result<()> {
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite feature value at flat index {i}"
        )));
    }
    Ok(())
}
