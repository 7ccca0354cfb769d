//! Dataset, mask and JSON file formats.
//!
//! Vector data is CSV with header `feature_0,...,feature_{d-1},target`.
//! Segmentation data is a directory with `images/` (8-bit grayscale or RGB)
//! and `masks/` (8-bit grayscale or palette PNG whose raw value is the class
//! id), paired by file stem.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::annotation::LabelMask;
use crate::error::{Error, Result};
use crate::model::{validate_dataset, Dataset, Image, Sample, Target, Task};

fn dataset_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Dataset {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parses vector data. `num_classes` defaults to the largest target + 1.
pub fn read_csv<R: Read>(reader: R, num_classes: Option<usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let d = headers.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| {
        Error::InvalidParam("csv needs at least one feature column and a target".into())
    })?;
    for (i, h) in headers.iter().enumerate() {
        let expected = if i == d {
            "target".to_string()
        } else {
            format!("feature_{i}")
        };
        if h != expected {
            return Err(Error::InvalidParam(format!(
                "csv column {i} is `{h}`, expected `{expected}`"
            )));
        }
    }
    let mut items = Vec::new();
    let mut targets = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::InvalidParam(format!(
                "csv row {row} has {} fields, expected {}",
                rec.len(),
                d + 1
            )));
        }
        let feats = rec
            .iter()
            .take(d)
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::InvalidParam(format!("csv row {row}: bad number `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let t = &rec[d];
        let class = t
            .parse::<usize>()
            .map_err(|_| Error::InvalidParam(format!("csv row {row}: bad target `{t}`")))?;
        items.push(Sample::Vector(feats));
        targets.push(Target::Class(class));
    }
    let max = targets
        .iter()
        .filter_map(|t| match t {
            Target::Class(c) => Some(*c),
            Target::Mask(_) => None,
        })
        .max();
    let num_classes = num_classes.unwrap_or_else(|| max.map_or(0, |m| m + 1));
    let ds = Dataset {
        items,
        targets,
        num_classes,
        task: Task::Classification,
    };
    if let Some(v) = validate_dataset(&ds).first() {
        return Err(Error::InvalidParam(v.to_string()));
    }
    Ok(ds)
}

pub fn load_csv(path: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| dataset_err(path, e.to_string()))?;
    read_csv(file, num_classes).map_err(|e| match e {
        Error::Io(_) | Error::Csv(_) | Error::InvalidParam(_) => dataset_err(path, e.to_string()),
        other => other,
    })
}

pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let d = dataset
        .feature_dim()
        .ok_or_else(|| Error::InvalidParam("csv output needs vector samples".into()))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..d).map(|i| format!("feature_{i}")).collect();
    header.push("target".into());
    w.write_record(&header)?;
    for i in 0..dataset.len() {
        let v = dataset
            .vector(i)
            .ok_or_else(|| Error::InvalidParam(format!("sample {i} is not a vector")))?;
        let c = dataset.class_of(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: dataset.len(),
        })?;
        let mut rec: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        rec.push(c.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Decodes an 8-bit single-channel PNG (grayscale or palette) into raw
/// class ids; palette entries are not expanded.
pub fn decode_mask_png(bytes: &[u8], void_id: Option<u8>) -> Result<LabelMask> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let bad = |m: String| Error::InvalidParam(format!("mask png: {m}"));
    let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
    let (ct, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight
        || !matches!(ct, png::ColorType::Grayscale | png::ColorType::Indexed)
    {
        return Err(bad(format!("unsupported format {ct:?}/{depth:?}")));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| bad("image too large".into()))?;
    if size > 1 << 28 {
        return Err(bad("image too large".into()));
    }
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut pixels = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        pixels.extend_from_slice(&row[..w]);
    }
    Ok(LabelMask::new(w, h, pixels, void_id))
}

pub fn encode_mask_png(mask: &LabelMask) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, mask.width as u32, mask.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::InvalidParam(e.to_string()))?;
        w.write_image_data(&mask.pixels)
            .map_err(|e| Error::InvalidParam(e.to_string()))?;
    }
    Ok(out)
}

pub fn read_mask(path: &Path, void_id: Option<u8>) -> Result<LabelMask> {
    let bytes = fs::read(path).map_err(|e| dataset_err(path, e.to_string()))?;
    decode_mask_png(&bytes, void_id).map_err(|e| dataset_err(path, e.to_string()))
}

pub fn write_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    fs::write(path, encode_mask_png(mask)?)?;
    Ok(())
}

/// Reads an image as values in [0, 1]; grayscale stays single-channel,
/// anything else becomes RGB.
pub fn read_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| dataset_err(path, e.to_string()))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        image::DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
        other => (3, other.to_rgb8().into_raw()),
    };
    Ok(Image {
        width,
        height,
        channels,
        data: raw.into_iter().map(|v| v as f32 / 255.0).collect(),
    })
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let raw: Vec<u8> = img
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let color = match img.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => return Err(Error::InvalidParam(format!("cannot write {c}-channel image"))),
    };
    image::save_buffer(path, &raw, img.width as u32, img.height as u32, color)
        .map_err(|e| dataset_err(path, e.to_string()))
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| dataset_err(dir, e.to_string()))? {
        let p = entry?.path();
        if p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads `dir/masks/*.png` only, sorted by file name.
pub fn load_masks(dir: &Path, void_id: Option<u8>) -> Result<Vec<(String, LabelMask)>> {
    sorted_files(dir)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .map(|p| {
            let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((stem, read_mask(&p, void_id)?))
        })
        .collect()
}

/// Loads a segmentation dataset; samples are ordered by mask file name.
/// `num_classes` defaults to the largest non-void id + 1.
pub fn load_image_dir(dir: &Path, num_classes: Option<usize>, void_id: Option<u8>) -> Result<Dataset> {
    let masks = load_masks(&dir.join("masks"), void_id)?;
    let images: Vec<PathBuf> = sorted_files(&dir.join("images"))?;
    let mut items = Vec::with_capacity(masks.len());
    let mut targets = Vec::with_capacity(masks.len());
    for (stem, mask) in masks {
        let img_path = images
            .iter()
            .find(|p| p.file_stem().is_some_and(|s| s.to_string_lossy() == stem))
            .ok_or_else(|| dataset_err(dir, format!("no image for mask `{stem}`")))?;
        let img = read_image(img_path)?;
        if (img.width, img.height) != (mask.width, mask.height) {
            return Err(dataset_err(img_path, "image and mask sizes differ"));
        }
        items.push(Sample::Image(img));
        targets.push(Target::Mask(mask));
    }
    let max = targets
        .iter()
        .filter_map(|t| match t {
            Target::Mask(m) => m.pixels.iter().filter(|&&p| !m.is_void(p)).max().copied(),
            Target::Class(_) => None,
        })
        .max();
    let ds = Dataset {
        items,
        targets,
        num_classes: num_classes.unwrap_or_else(|| max.map_or(1, |m| m as usize + 1)),
        task: Task::Segmentation,
    };
    if let Some(v) = validate_dataset(&ds).first() {
        return Err(dataset_err(dir, v.to_string()));
    }
    Ok(ds)
}

/// Writes a segmentation dataset in the layout [`load_image_dir`] reads.
pub fn write_image_dir(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    for i in 0..dataset.len() {
        let (Some(img), Some(mask)) = (dataset.image(i), dataset.mask_of(i)) else {
            return Err(Error::InvalidParam(format!("sample {i} is not an image with mask")));
        };
        let name = format!("{i:05}.png");
        write_image(&dir.join("images").join(&name), img)?;
        write_mask(&dir.join("masks").join(&name), mask)?;
    }
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
