//! Query list files: one `id<TAB>image[<TAB>labels[<TAB>view]]` per line.
//! Labels are `;`-separated; paths are relative to the list file.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use viewsynth::experiment::Query;
use viewsynth::features::{prepare_and_extract, read_pgm};
use viewsynth::io::Manifest;
use viewsynth::{Error, Result};

pub struct QueryLine {
    pub id: String,
    pub image: PathBuf,
    pub labels: BTreeSet<String>,
    pub view: Option<usize>,
}

pub fn parse_list(path: &Path) -> Result<Vec<QueryLine>> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 2 || f.len() > 4 {
            return Err(Error::Format(format!(
                "{} line {}: expected 2 to 4 tab-separated fields",
                path.display(),
                i + 1
            )));
        }
        let labels = f
            .get(2)
            .map(|s| {
                s.split(';')
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default();
        let view = match f.get(3).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse().map_err(|_| {
                Error::Format(format!("{} line {}: bad view {s:?}", path.display(), i + 1))
            })?),
            None => None,
        };
        out.push(QueryLine {
            id: f[0].to_string(),
            image: base.join(f[1]),
            labels,
            view,
        });
    }
    if out.is_empty() {
        return Err(Error::Argument(format!(
            "{} lists no queries",
            path.display()
        )));
    }
    Ok(out)
}

/// Loads every image and extracts its features with the collection's settings.
pub fn load_queries(lines: &[QueryLine], manifest: &Manifest) -> Result<Vec<Query<f32>>> {
    let hog = manifest.hog_config();
    lines
        .iter()
        .map(|l| {
            let img = read_pgm(&l.image)?;
            Ok(Query {
                id: l.id.clone(),
                features: prepare_and_extract(&img, &manifest.grid, &hog)?,
                labels: l.labels.clone(),
                true_view: l.view,
                exclude: Vec::new(),
            })
        })
        .collect()
}
