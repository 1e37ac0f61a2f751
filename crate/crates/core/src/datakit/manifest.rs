use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{invalid, Error, Result};

pub const MANIFEST_HEADER: [&str; 3] = ["id", "path", "price"];
pub const DEFAULT_IMAGE_SIDE: usize = 224;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Image path relative to the manifest's image root.
    pub path: String,
    pub price: f64,
    /// Original spelling of the price, kept so serialization reproduces the input.
    #[serde(skip)]
    price_text: Option<String>,
}

impl ManifestEntry {
    pub fn new(id: impl Into<String>, path: impl Into<String>, price: f64) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            price,
            price_text: None,
        }
    }

    fn price_field(&self) -> String {
        match &self.price_text {
            Some(t) if t.parse::<f64>().ok() == Some(self.price) => t.clone(),
            _ => format!("{}", self.price),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub image_root: PathBuf,
    pub image_side: usize,
    /// Training-split channel means, filled in once a split is chosen.
    pub channel_means: Option<[f64; 3]>,
}

/// One decoded, resized training example.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub price: f64,
    pub segment: Option<usize>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, image_root: impl Into<PathBuf>, image_side: usize) -> Result<Self> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if let Some(prev) = seen.insert(&e.id, i) {
                return Err(invalid(format!("duplicate id {:?} in entries {prev} and {i}", e.id)));
            }
            if !(e.price > 0.0 && e.price.is_finite()) {
                return Err(invalid(format!("entry {i} ({}) has nonpositive price {}", e.id, e.price)));
            }
        }
        Ok(Self {
            entries,
            image_root: image_root.into(),
            image_side,
            channel_means: None,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.price).collect()
    }

    pub fn image_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.image_root.join(&entry.path)
    }

    /// Serializes as `id,path,price` CSV.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(MANIFEST_HEADER)?;
        for e in &self.entries {
            w.write_record([e.id.as_str(), e.path.as_str(), e.price_field().as_str()])?;
        }
        w.into_inner().map_err(|e| invalid(format!("csv buffer: {e}")))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let bytes = self.to_csv()?;
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    /// Decodes every image (resized to `image_side`) for the given entry indices.
    pub fn load_samples(&self, indices: &[usize]) -> Result<Vec<Sample>> {
        indices
            .iter()
            .map(|&i| {
                let e = &self.entries[i];
                let img = Image::load_png(&self.image_path(e))?;
                Ok(Sample {
                    id: e.id.clone(),
                    image: img.resize(self.image_side, self.image_side),
                    price: e.price,
                    segment: None,
                })
            })
            .collect()
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        self.load_samples(&(0..self.len()).collect::<Vec<_>>())
    }
}

/// Parses and validates a manifest CSV. Image paths resolve against `image_root`
/// and each image header must decode. Errors cite the 1-based line number.
pub fn load_manifest(csv_path: &Path, image_root: &Path, image_side: usize) -> Result<DatasetManifest> {
    let file = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(BufReader::new(file));
    let fail = |line: usize, message: String| Error::Manifest {
        path: csv_path.to_path_buf(),
        line,
        message,
    };
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(fail(1, "empty file, expected header id,path,price".into())),
    };
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(fail(1, format!("expected header id,path,price, got {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut entries = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 3 {
            return Err(fail(line, format!("expected 3 fields, got {}", rec.len())));
        }
        let (id, path, price_text) = (&rec[0], &rec[1], &rec[2]);
        if id.is_empty() {
            return Err(fail(line, "empty id".into()));
        }
        let price: f64 = price_text
            .trim()
            .parse()
            .map_err(|_| fail(line, format!("price {price_text:?} is not a number")))?;
        if !(price > 0.0 && price.is_finite()) {
            return Err(fail(line, format!("price {price_text:?} must be positive")));
        }
        if let Some(prev) = first_line.get(id) {
            return Err(fail(line, format!("duplicate id {id:?} (also on line {prev})")));
        }
        first_line.insert(id.to_string(), line);
        let full = image_root.join(path);
        check_png_header(&full).map_err(|m| fail(line, format!("image {}: {m}", full.display())))?;
        entries.push(ManifestEntry {
            id: id.to_string(),
            path: path.to_string(),
            price,
            price_text: Some(price_text.to_string()),
        });
    }
    if entries.is_empty() {
        return Err(fail(1, "manifest has no rows".into()));
    }
    DatasetManifest::new(entries, image_root, image_side)
}

fn check_png_header(path: &Path) -> std::result::Result<(), String> {
    let file = File::open(path).map_err(|e| e.to_string())?;
    let reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| e.to_string())?;
    let info = reader.info();
    if info.width == 0 || info.height == 0 {
        return Err("zero-sized image".into());
    }
    Ok(())
}

/// Mean of each RGB channel across the given samples.
pub fn channel_means(samples: &[&Sample]) -> [f64; 3] {
    let mut acc = [0.0; 3];
    for s in samples {
        let m = s.image.channel_means();
        (0..3).for_each(|k| acc[k] += m[k]);
    }
    acc.map(|v| v / samples.len().max(1) as f64)
}
