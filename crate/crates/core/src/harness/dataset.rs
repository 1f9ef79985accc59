//! Locating image / ground-truth pairs on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IMAGE_DIRS: [&str; 4] = ["images", "Imgs", "Image", "imgs"];
const GT_DIRS: [&str; 5] = ["masks", "GT", "gt", "Mask", "GT_Object"];
const IMAGE_EXTS: [&str; 5] = ["jpg", "jpeg", "png", "bmp", "tif"];
pub const LIST_FILE: &str = "list.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `images/` plus an optional `masks/` directory matched by file stem.
    #[default]
    PairedDirs,
    /// `list.txt` with one `image [gt]` pair per line, paths relative to the root.
    ListFile,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paired" | "paired_dirs" | "dirs" => Ok(Self::PairedDirs),
            "list" | "list_file" => Ok(Self::ListFile),
            other => Err(Error::Config(format!("unknown dataset layout '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub stem: String,
    pub image: PathBuf,
    pub gt: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub image_dir: PathBuf,
    pub gt_dir: Option<PathBuf>,
    pub pairs: Vec<Pair>,
}

impl DatasetManifest {
    pub fn has_gt(&self) -> bool {
        self.pairs.iter().any(|p| p.gt.is_some())
    }
}

fn first_dir(root: &Path, names: &[&str]) -> Option<PathBuf> {
    names.iter().map(|n| root.join(n)).find(|p| p.is_dir())
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files in `dir` keyed by stem, sorted.
fn by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::InvalidInput(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if !path.is_file() || !is_image(&path) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            // prefer the lexicographically first file for duplicate stems
            let prev = out.entry(stem.to_string()).or_insert_with(|| path.clone());
            if path < *prev {
                *prev = path;
            }
        }
    }
    Ok(out)
}

fn dataset_name(root: &Path) -> String {
    root.file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("dataset")
        .to_string()
}

pub fn load_dataset(root: &Path, layout: Layout) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::InvalidInput(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    match layout {
        Layout::PairedDirs => {
            let image_dir = first_dir(root, &IMAGE_DIRS).unwrap_or_else(|| root.to_path_buf());
            let gt_dir = first_dir(root, &GT_DIRS);
            let images = by_stem(&image_dir)?;
            let gts = match &gt_dir {
                Some(d) => by_stem(d)?,
                None => BTreeMap::new(),
            };
            let pairs = images
                .into_iter()
                .map(|(stem, image)| {
                    let gt = gts.get(&stem).cloned();
                    if gt.is_none() && gt_dir.is_some() {
                        log::warn!("no ground truth for {stem}");
                    }
                    Pair { stem, image, gt }
                })
                .collect();
            Ok(DatasetManifest {
                name: dataset_name(root),
                image_dir,
                gt_dir,
                pairs,
            })
        }
        Layout::ListFile => {
            let list = root.join(LIST_FILE);
            let text =
                fs::read_to_string(&list).map_err(|e| Error::InvalidInput(format!("{}: {e}", list.display())))?;
            let mut pairs = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let mut parts = line.split_whitespace();
                let image = root.join(parts.next().expect("non-empty line"));
                let gt = parts.next().map(|g| root.join(g));
                if parts.next().is_some() {
                    return Err(Error::Config(format!(
                        "{}:{}: expected 'image [gt]'",
                        list.display(),
                        lineno + 1
                    )));
                }
                let stem = image
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| Error::Config(format!("{}:{}: bad image path", list.display(), lineno + 1)))?
                    .to_string();
                pairs.push(Pair { stem, image, gt });
            }
            pairs.sort_by(|a, b| a.stem.cmp(&b.stem).then_with(|| a.image.cmp(&b.image)));
            Ok(DatasetManifest {
                name: dataset_name(root),
                image_dir: root.to_path_buf(),
                gt_dir: None,
                pairs,
            })
        }
    }
}

/// Reads `stem = class` lines.
pub fn load_classes(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("class line '{line}' has no '='")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
