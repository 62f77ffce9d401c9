//! File formats: images, elements JSON, binary flows and synthetic bundles.
//!
//! Flow files hold a dense 2-vector field as
//!
//! ```text
//! b"DWFLOW01" | width: u32 LE | height: u32 LE | (x: f32 LE, y: f32 LE) × width·height
//! ```
//!
//! in row-major order. A NaN pair marks a hole.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{BackwardMap, GeomError, GeometricElements, GridField, ImageBuffer};
use crate::synth::{PageRect, Warp, WarpBundle};

pub const FLOW_MAGIC: &[u8; 8] = b"DWFLOW01";
pub const ELEMENTS_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: unsupported elements schema {found}, expected {ELEMENTS_SCHEMA}")]
    Schema { path: PathBuf, found: u32 },
    #[error("{path}: {reason}")]
    Flow { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Geom {
        path: PathBuf,
        #[source]
        source: GeomError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> IoError + '_ {
    move |source| IoError::Json { path: path.to_path_buf(), source }
}

/// Reads an 8-bit image. Gray and gray+alpha inputs stay single-channel;
/// everything else becomes RGB.
pub fn read_image(path: &Path) -> Result<ImageBuffer, IoError> {
    let img = image::open(path).map_err(|source| IoError::Image { path: path.to_path_buf(), source })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let buf = if img.color().has_color() {
        ImageBuffer::from_raw(w, h, 3, img.into_rgb8().into_raw())
    } else {
        ImageBuffer::from_raw(w, h, 1, img.into_luma8().into_raw())
    };
    buf.map_err(|source| IoError::Geom { path: path.to_path_buf(), source })
}

/// Writes an image in the format implied by the extension. `.pgm` forces
/// gray and `.ppm` forces RGB.
pub fn write_image(path: &Path, img: &ImageBuffer) -> Result<(), IoError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let img = match ext.as_str() {
        "pgm" => img.to_gray(),
        "ppm" => img.to_rgb(),
        _ => img.clone(),
    };
    let (w, h) = (img.width() as u32, img.height() as u32);
    let color = if img.channels() == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer(path, img.data(), w, h, color).map_err(|source| IoError::Image { path: path.to_path_buf(), source })
}

#[derive(Serialize, Deserialize)]
struct ElementsFile {
    schema: u32,
    #[serde(flatten)]
    elements: GeometricElements,
}

pub fn elements_to_json(elements: &GeometricElements) -> String {
    let file = ElementsFile {
        schema: ELEMENTS_SCHEMA,
        elements: elements.clone(),
    };
    serde_json::to_string_pretty(&file).expect("elements serialize")
}

pub fn read_elements(path: &Path) -> Result<GeometricElements, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: ElementsFile = serde_json::from_str(&text).map_err(json_err(path))?;
    if file.schema != ELEMENTS_SCHEMA {
        return Err(IoError::Schema { path: path.to_path_buf(), found: file.schema });
    }
    Ok(file.elements)
}

pub fn write_elements(path: &Path, elements: &GeometricElements) -> Result<(), IoError> {
    fs::write(path, elements_to_json(elements)).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

/// A dense field as stored in a flow file; `None` marks a hole.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<[f32; 2]>>,
}

impl Flow {
    pub fn from_backward(bm: &BackwardMap) -> Self {
        let values = (0..bm.height())
            .flat_map(|y| (0..bm.width()).map(move |x| (x, y)))
            .map(|(x, y)| bm.get(x, y).map(|c| [c[0] as f32, c[1] as f32]))
            .collect();
        Self {
            width: bm.width(),
            height: bm.height(),
            values,
        }
    }

    pub fn from_grid(field: &GridField) -> Self {
        let n = field.n();
        Self {
            width: n,
            height: n,
            values: field.values().iter().map(|v| Some([v[0] as f32, v[1] as f32])).collect(),
        }
    }

    pub fn to_backward(&self) -> BackwardMap {
        BackwardMap::from_fn(self.width, self.height, |x, y| {
            self.values[y * self.width + x].map(|v| [v[0] as f64, v[1] as f64])
        })
    }

    /// The field as a grid; holes are not allowed.
    pub fn to_grid(&self) -> Option<GridField> {
        if self.width != self.height {
            return None;
        }
        let values: Option<Vec<[f64; 2]>> = self.values.iter().map(|v| v.map(|v| [v[0] as f64, v[1] as f64])).collect();
        GridField::new(self.width, values?).ok()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.values.len());
        out.extend_from_slice(FLOW_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.values {
            let [x, y] = v.unwrap_or([f32::NAN; 2]);
            out.extend_from_slice(&x.to_le_bytes());
            out.extend_from_slice(&y.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < 16 || &bytes[..8] != FLOW_MAGIC {
            return Err("not a flow file".into());
        }
        let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes")) as usize;
        let (width, height) = (word(8), word(12));
        let expected = width
            .checked_mul(height)
            .and_then(|c| c.checked_mul(8))
            .and_then(|c| c.checked_add(16))
            .ok_or("flow dimensions overflow")?;
        if bytes.len() != expected {
            return Err(format!("{width}x{height} flow needs {expected} bytes, found {}", bytes.len()));
        }
        let float = |k: usize| f32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes"));
        let values = (0..width * height)
            .map(|k| {
                let (x, y) = (float(16 + 8 * k), float(20 + 8 * k));
                (x.is_finite() && y.is_finite()).then_some([x, y])
            })
            .collect();
        Ok(Self { width, height, values })
    }
}

pub fn write_flow(path: &Path, flow: &Flow) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(&flow.to_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn read_flow(path: &Path) -> Result<Flow, IoError> {
    let mut bytes = Vec::new();
    let file = fs::File::open(path).map_err(io_err(path))?;
    BufReader::new(file).read_to_end(&mut bytes).map_err(io_err(path))?;
    Flow::from_bytes(&bytes).map_err(|reason| IoError::Flow { path: path.to_path_buf(), reason })
}

/// Warp parameters stored alongside a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub warp: Warp,
    pub rect: PageRect,
    /// Size of the ground-truth forward grid.
    pub n: usize,
}

pub mod bundle_files {
    pub const FLAT_IMAGE: &str = "flat.png";
    pub const WARPED_IMAGE: &str = "warped.png";
    pub const FLAT_ELEMENTS: &str = "elements_flat.json";
    pub const ELEMENTS: &str = "elements.json";
    pub const GT_FORWARD: &str = "gt_forward.flow";
    pub const GT_BACKWARD: &str = "gt_backward.flow";
    pub const META: &str = "warp.json";
}

pub fn write_bundle(dir: &Path, bundle: &WarpBundle) -> Result<(), IoError> {
    use bundle_files::*;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_image(&dir.join(FLAT_IMAGE), &bundle.flat_image)?;
    write_image(&dir.join(WARPED_IMAGE), &bundle.warped_image)?;
    write_elements(&dir.join(FLAT_ELEMENTS), &bundle.flat_elements)?;
    write_elements(&dir.join(ELEMENTS), &bundle.warped_elements)?;
    write_flow(&dir.join(GT_FORWARD), &Flow::from_grid(&bundle.gt_forward))?;
    write_flow(&dir.join(GT_BACKWARD), &Flow::from_backward(&bundle.gt_backward))?;
    let meta = BundleMeta {
        warp: bundle.warp.clone(),
        rect: bundle.rect,
        n: bundle.gt_forward.n(),
    };
    write_json(&dir.join(META), &meta)
}

/// Loads a bundle directory. Flows come back at `f32` precision.
pub fn read_bundle(dir: &Path) -> Result<WarpBundle, IoError> {
    use bundle_files::*;
    let meta: BundleMeta = read_json(&dir.join(META))?;
    let fwd_path = dir.join(GT_FORWARD);
    let gt_forward = read_flow(&fwd_path)?.to_grid().ok_or_else(|| IoError::Flow {
        path: fwd_path.clone(),
        reason: "forward flow must be a square field without holes".into(),
    })?;
    Ok(WarpBundle {
        flat_image: read_image(&dir.join(FLAT_IMAGE))?,
        flat_elements: read_elements(&dir.join(FLAT_ELEMENTS))?,
        warped_image: read_image(&dir.join(WARPED_IMAGE))?,
        warped_elements: read_elements(&dir.join(ELEMENTS))?,
        rect: meta.rect,
        warp: meta.warp,
        gt_forward,
        gt_backward: read_flow(&dir.join(GT_BACKWARD))?.to_backward(),
    })
}
