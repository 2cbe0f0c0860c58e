//! Binary tensor formats and the collection manifest.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! MVFT  "MVFT" | version u32 = 1 | N u32 | V u32 | G u32 | d u32 | N·V·G·d f32
//! VOCB  "VOCB" | W u32 | d u32 | W·d f32
//! SSTB  "SSTB" | V u32 | V u32 | G u32 | G u32 | V·V·G·G f32   (-inf allowed)
//! ```
//!
//! MVFT payloads are row-major (shape, view, patch, dim); SSTB payloads are
//! row-major (observed view, novel view, observed patch, novel patch).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::HogConfig;
use crate::model::{MultiViewDescriptor, PatchGridConfig, ShapeCollection, ViewSet};
use crate::scalar::Scalar;
use crate::surrogate::SuitabilityTable;
use crate::vocabulary::Codebook;

pub const MVFT_MAGIC: &[u8; 4] = b"MVFT";
pub const MVFT_VERSION: u32 = 1;
pub const VOCB_MAGIC: &[u8; 4] = b"VOCB";
pub const SSTB_MAGIC: &[u8; 4] = b"SSTB";

/// Raw contents of an MVFT file.
#[derive(Clone, Debug, PartialEq)]
pub struct MvftTensor {
    pub shapes: usize,
    pub views: usize,
    pub patches: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.buf.len() < 4 || &self.buf[..4] != magic {
            return Err(Error::format(format!(
                "{}: bad magic, expected {:?}",
                self.what,
                std::str::from_utf8(magic).unwrap_or("?")
            )));
        }
        self.pos = 4;
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::format(format!("{}: truncated header", self.what)))?;
        self.pos = end;
        Ok(u32::from_le_bytes(bytes.try_into().unwrap()))
    }

    fn f32_payload(&mut self, count: usize) -> Result<Vec<f32>> {
        let expected = count
            .checked_mul(4)
            .ok_or_else(|| Error::format(format!("{}: header dimensions overflow", self.what)))?;
        let rest = &self.buf[self.pos..];
        if rest.len() != expected {
            return Err(Error::format(format!(
                "{}: payload is {} bytes, header implies {expected}",
                self.what,
                rest.len()
            )));
        }
        Ok(rest
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::arg(format!("{what} {v} does not fit in u32")))
}

fn push_f32s<T: Scalar>(out: &mut Vec<u8>, data: &[T]) {
    out.reserve(data.len() * 4);
    for &x in data {
        out.extend_from_slice(&x.as_f32().to_le_bytes());
    }
}

pub fn encode_mvft<T: Scalar>(
    shapes: usize,
    views: usize,
    patches: usize,
    dim: usize,
    data: &[T],
) -> Result<Vec<u8>> {
    if data.len() != shapes * views * patches * dim {
        return Err(Error::arg("MVFT payload length does not match dimensions"));
    }
    let mut out = Vec::with_capacity(24 + data.len() * 4);
    out.extend_from_slice(MVFT_MAGIC);
    out.extend_from_slice(&MVFT_VERSION.to_le_bytes());
    for (v, name) in [(shapes, "N"), (views, "V"), (patches, "G"), (dim, "d")] {
        out.extend_from_slice(&to_u32(v, name)?.to_le_bytes());
    }
    push_f32s(&mut out, data);
    Ok(out)
}

pub fn decode_mvft(buf: &[u8]) -> Result<MvftTensor> {
    let mut r = Reader::new(buf, "MVFT");
    r.magic(MVFT_MAGIC)?;
    let version = r.u32()?;
    if version != MVFT_VERSION {
        return Err(Error::format(format!(
            "MVFT: unsupported version {version}"
        )));
    }
    let shapes = r.u32()? as usize;
    let views = r.u32()? as usize;
    let patches = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let count = shapes
        .checked_mul(views)
        .and_then(|x| x.checked_mul(patches))
        .and_then(|x| x.checked_mul(dim))
        .ok_or_else(|| Error::format("MVFT: header dimensions overflow"))?;
    let data = r.f32_payload(count)?;
    Ok(MvftTensor {
        shapes,
        views,
        patches,
        dim,
        data,
    })
}

pub fn read_mvft_file(path: impl AsRef<Path>) -> Result<MvftTensor> {
    decode_mvft(&fs::read(path)?)
}

fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

pub fn write_collection_tensor<T: Scalar>(
    path: impl AsRef<Path>,
    c: &ShapeCollection<T>,
) -> Result<()> {
    let bytes = encode_mvft(
        c.len(),
        c.views(),
        c.patches(),
        c.feature_dim(),
        c.as_slice(),
    )?;
    write_bytes(path, &bytes)
}

/// Writes a single descriptor as a one-shape MVFT file.
pub fn write_descriptor<T: Scalar>(
    path: impl AsRef<Path>,
    d: &MultiViewDescriptor<T>,
) -> Result<()> {
    let (v, g, dim) = d.dims();
    write_bytes(path, &encode_mvft(1, v, g, dim, d.as_slice())?)
}

pub fn read_descriptor<T: Scalar>(path: impl AsRef<Path>) -> Result<MultiViewDescriptor<T>> {
    let t = read_mvft_file(path)?;
    if t.shapes != 1 {
        return Err(Error::format(format!(
            "expected a one-shape MVFT descriptor, found {} shapes",
            t.shapes
        )));
    }
    MultiViewDescriptor::new(
        t.views,
        t.patches,
        t.dim,
        t.data.into_iter().map(T::from_f32).collect(),
    )
    .map_err(|e| Error::format(e.to_string()))
}

pub fn encode_vocb<T: Scalar>(cb: &Codebook<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + cb.centers().len() * 4);
    out.extend_from_slice(VOCB_MAGIC);
    out.extend_from_slice(&to_u32(cb.words(), "W")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cb.dim(), "d")?.to_le_bytes());
    push_f32s(&mut out, cb.centers());
    Ok(out)
}

/// Decodes a codebook; the training seed is not stored in the file.
pub fn decode_vocb<T: Scalar>(buf: &[u8], seed: u64) -> Result<Codebook<T>> {
    let mut r = Reader::new(buf, "VOCB");
    r.magic(VOCB_MAGIC)?;
    let words = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let count = words
        .checked_mul(dim)
        .ok_or_else(|| Error::format("VOCB: header dimensions overflow"))?;
    let data = r.f32_payload(count)?;
    Codebook::from_centers(
        words,
        dim,
        data.into_iter().map(T::from_f32).collect(),
        seed,
    )
    .map_err(|e| Error::format(e.to_string()))
}

pub fn encode_sstb(t: &SuitabilityTable) -> Result<Vec<u8>> {
    let (v, g) = (t.views(), t.patches());
    let mut out = Vec::with_capacity(20 + t.raw().len() * 4);
    out.extend_from_slice(SSTB_MAGIC);
    for (x, name) in [(v, "V"), (v, "V"), (g, "G"), (g, "G")] {
        out.extend_from_slice(&to_u32(x, name)?.to_le_bytes());
    }
    push_f32s(&mut out, t.raw());
    Ok(out)
}

pub fn decode_sstb(buf: &[u8]) -> Result<SuitabilityTable> {
    let mut r = Reader::new(buf, "SSTB");
    r.magic(SSTB_MAGIC)?;
    let (v0, v1, g0, g1) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    if v0 != v1 || g0 != g1 {
        return Err(Error::format(format!(
            "SSTB: inconsistent dims {v0}x{v1}x{g0}x{g1}"
        )));
    }
    let (v, g) = (v0 as usize, g0 as usize);
    let count = v
        .checked_mul(v)
        .and_then(|x| x.checked_mul(g))
        .and_then(|x| x.checked_mul(g))
        .ok_or_else(|| Error::format("SSTB: header dimensions overflow"))?;
    let data = r.f32_payload(count)?;
    SuitabilityTable::from_raw(v, g, data).map_err(|e| Error::format(e.to_string()))
}

pub fn write_vocb<T: Scalar>(path: impl AsRef<Path>, cb: &Codebook<T>) -> Result<()> {
    write_bytes(path, &encode_vocb(cb)?)
}

pub fn read_vocb<T: Scalar>(path: impl AsRef<Path>, seed: u64) -> Result<Codebook<T>> {
    decode_vocb(&fs::read(path)?, seed)
}

pub fn write_sstb(path: impl AsRef<Path>, t: &SuitabilityTable) -> Result<()> {
    write_bytes(path, &encode_sstb(t)?)
}

pub fn read_sstb(path: impl AsRef<Path>) -> Result<SuitabilityTable> {
    decode_sstb(&fs::read(path)?)
}

/// Relative file names referenced by a manifest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub features: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suitability: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestDefaults {
    pub k: usize,
    pub kp: usize,
    pub words: usize,
    pub pose_votes: usize,
    pub seed: u64,
}

impl Default for ManifestDefaults {
    fn default() -> Self {
        Self {
            k: 200,
            kp: 9,
            words: 256,
            pose_votes: 15,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HogSettings {
    pub cell_side: usize,
    pub bins: usize,
    pub epsilon: f64,
}

impl From<HogConfig> for HogSettings {
    fn from(h: HogConfig) -> Self {
        Self {
            cell_side: h.cell_side,
            bins: h.bins,
            epsilon: h.epsilon,
        }
    }
}

impl From<&HogSettings> for HogConfig {
    fn from(h: &HogSettings) -> Self {
        Self {
            cell_side: h.cell_side,
            bins: h.bins,
            epsilon: h.epsilon,
        }
    }
}

/// JSON description of an on-disk collection directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub views: usize,
    pub grid: PatchGridConfig,
    pub rows: usize,
    pub cols: usize,
    pub feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary_seed: Option<u64>,
    pub azimuths: Vec<f64>,
    pub shape_ids: Vec<String>,
    pub hog: HogSettings,
    pub files: ManifestFiles,
    pub defaults: ManifestDefaults,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn for_collection<T: Scalar>(name: &str, c: &ShapeCollection<T>, hog: HogConfig) -> Self {
        Self {
            name: name.to_string(),
            views: c.views(),
            grid: *c.grid(),
            rows: c.grid().rows(),
            cols: c.grid().cols(),
            feature_dim: c.feature_dim(),
            words: None,
            vocabulary_seed: None,
            azimuths: c.view_set().azimuths().to_vec(),
            shape_ids: c.ids().to_vec(),
            hog: hog.into(),
            files: ManifestFiles {
                features: "features.mvft".into(),
                ..Default::default()
            },
            defaults: ManifestDefaults::default(),
        }
    }

    pub fn hog_config(&self) -> HogConfig {
        (&self.hog).into()
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(format!("manifest serialization: {e}")))?;
        write_bytes(
            dir.as_ref().join(MANIFEST_FILE),
            format!("{text}\n").as_bytes(),
        )
    }

    pub fn path(&self, dir: impl AsRef<Path>, rel: &str) -> PathBuf {
        dir.as_ref().join(rel)
    }
}

/// Writes features and manifest for a collection into `dir`.
pub fn save_collection<T: Scalar>(
    dir: impl AsRef<Path>,
    manifest: &Manifest,
    c: &ShapeCollection<T>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_collection_tensor(dir.join(&manifest.files.features), c)?;
    manifest.save(dir)
}

/// Loads the collection described by `dir/manifest.json`, checking every
/// header against the manifest before returning.
pub fn load_collection<T: Scalar>(dir: impl AsRef<Path>) -> Result<(Manifest, ShapeCollection<T>)> {
    let dir = dir.as_ref();
    let m = Manifest::load(dir)?;
    let t = read_mvft_file(dir.join(&m.files.features))?;
    let g = m.grid.patch_count();
    if t.shapes != m.shape_ids.len()
        || t.views != m.views
        || t.patches != g
        || t.dim != m.feature_dim
    {
        return Err(Error::format(format!(
            "MVFT header {}x{}x{}x{} disagrees with manifest {}x{}x{}x{}",
            t.shapes,
            t.views,
            t.patches,
            t.dim,
            m.shape_ids.len(),
            m.views,
            g,
            m.feature_dim
        )));
    }
    if m.rows != m.grid.rows() || m.cols != m.grid.cols() || m.azimuths.len() != m.views {
        return Err(Error::format("manifest grid/view metadata is inconsistent"));
    }
    let views = ViewSet::new(m.azimuths.clone()).map_err(|e| Error::format(e.to_string()))?;
    let c = ShapeCollection::from_raw(
        m.shape_ids.clone(),
        views,
        m.grid,
        m.feature_dim,
        t.data.into_iter().map(T::from_f32).collect(),
    )
    .map_err(|e| Error::format(e.to_string()))?;
    Ok((m, c))
}

/// Loads the vocabulary referenced by the manifest, checking its header.
pub fn load_vocabulary<T: Scalar>(dir: impl AsRef<Path>, m: &Manifest) -> Result<Codebook<T>> {
    let rel = m
        .files
        .vocabulary
        .as_ref()
        .ok_or_else(|| Error::arg("collection has no vocabulary; run build-vocab first"))?;
    let cb: Codebook<T> = read_vocb(dir.as_ref().join(rel), m.vocabulary_seed.unwrap_or(0))?;
    if cb.dim() != m.feature_dim || Some(cb.words()) != m.words {
        return Err(Error::format("VOCB header disagrees with manifest"));
    }
    Ok(cb)
}

/// Loads the suitability table referenced by the manifest, checking its header.
pub fn load_suitability(dir: impl AsRef<Path>, m: &Manifest) -> Result<SuitabilityTable> {
    let rel = m.files.suitability.as_ref().ok_or_else(|| {
        Error::arg("collection has no suitability table; run build-suitability first")
    })?;
    let t = read_sstb(dir.as_ref().join(rel))?;
    if t.views() != m.views || t.patches() != m.grid.patch_count() {
        return Err(Error::format("SSTB header disagrees with manifest"));
    }
    Ok(t)
}

/// `id,labels` CSV with labels separated by `;`.
pub fn write_labels_csv(path: impl AsRef<Path>, rows: &[(String, Vec<String>)]) -> Result<()> {
    let mut out = String::from("id,labels\n");
    for (id, labels) in rows {
        out.push_str(&format!("{id},{}\n", labels.join(";")));
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<String>)>> {
    let text = fs::read_to_string(path.as_ref())?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.trim() == "id,labels" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (id, labels) = line
            .split_once(',')
            .ok_or_else(|| Error::format(format!("labels line {}: missing comma", i + 1)))?;
        let labels: Vec<String> = labels
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if labels.is_empty() {
            return Err(Error::format(format!(
                "labels line {}: empty label set",
                i + 1
            )));
        }
        rows.push((id.trim().to_string(), labels));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mvft_header_layout_is_exact() {
        let bytes = encode_mvft(1, 2, 1, 1, &[1.5f32, -2.0]).unwrap();
        let mut expected = b"MVFT".to_vec();
        for v in [1u32, 1, 2, 1, 1] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&1.5f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn mvft_rejects_mismatches() {
        let mut bytes = encode_mvft(1, 2, 1, 1, &[1.0f32, 2.0]).unwrap();
        assert!(matches!(
            decode_mvft(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        bytes[0] = b'X';
        assert!(matches!(decode_mvft(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_mvft(1, 2, 1, 1, &[1.0f32, 2.0]).unwrap();
        bytes[4] = 9;
        assert!(matches!(decode_mvft(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_mvft(b"MV"), Err(Error::Format(_))));
    }

    #[test]
    fn sstb_keeps_negative_infinity() {
        let raw = vec![0.0, f32::NEG_INFINITY, -0.5, 0.0];
        let t = SuitabilityTable::from_raw(1, 2, raw.clone()).unwrap();
        let back = decode_sstb(&encode_sstb(&t).unwrap()).unwrap();
        assert_eq!(back.raw(), raw.as_slice());
    }

    #[test]
    fn labels_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        let rows = vec![
            ("a".to_string(), vec!["x".to_string()]),
            ("b".to_string(), vec!["x".to_string(), "y".to_string()]),
        ];
        write_labels_csv(&p, &rows).unwrap();
        assert_eq!(read_labels_csv(&p).unwrap(), rows);
    }
}
