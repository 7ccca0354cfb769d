use crate::error::{Error, Result};
use crate::model::{Dataset, Image, Sample, SampleId};

/// Side of the square input patch read by the per-pixel network.
pub const PATCH_SIDE: usize = 3;

/// Training rows: input vectors and class targets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rows {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
}

impl Rows {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.inputs.first().map(Vec::len)
    }
}

/// Input vector of a classification sample; images are flattened.
pub(crate) fn input_vector(dataset: &Dataset, index: SampleId) -> Result<Vec<f64>> {
    match dataset.items.get(index) {
        Some(Sample::Vector(v)) => Ok(v.clone()),
        Some(Sample::Image(img)) => Ok(img.data.iter().map(|&v| v as f64).collect()),
        None => Err(Error::IndexOutOfRange {
            index,
            len: dataset.len(),
        }),
    }
}

pub fn classification_rows(dataset: &Dataset, indices: &[SampleId]) -> Result<Rows> {
    let mut rows = Rows::default();
    for &i in indices {
        let class = dataset.class_of(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: dataset.len(),
        })?;
        rows.inputs.push(input_vector(dataset, i)?);
        rows.targets.push(class);
    }
    Ok(rows)
}

/// Zero-padded 3x3 neighbourhood of pixel `(x, y)`, channel-interleaved.
pub fn patch_features(image: &Image, x: usize, y: usize) -> Vec<f64> {
    let r = (PATCH_SIDE / 2) as isize;
    let mut out = Vec::with_capacity(PATCH_SIDE * PATCH_SIDE * image.channels);
    for dy in -r..=r {
        for dx in -r..=r {
            let (px, py) = (x as isize + dx, y as isize + dy);
            if px < 0 || py < 0 || px >= image.width as isize || py >= image.height as isize {
                out.extend(std::iter::repeat_n(0.0, image.channels));
            } else {
                out.extend(image.pixel(px as usize, py as usize).iter().map(|&v| v as f64));
            }
        }
    }
    out
}

/// Every pixel patch of an image in row-major order.
pub(crate) fn image_patches(image: &Image) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(image.width * image.height);
    for y in 0..image.height {
        for x in 0..image.width {
            out.push(patch_features(image, x, y));
        }
    }
    out
}

pub(crate) fn image_of(dataset: &Dataset, index: SampleId) -> Result<&Image> {
    dataset.image(index).ok_or(Error::IndexOutOfRange {
        index,
        len: dataset.len(),
    })
}

/// Pixel rows from per-image label buffers; `None` pixels are ignored.
pub fn segmentation_rows(dataset: &Dataset, labels: &[(SampleId, Vec<Option<u8>>)]) -> Result<Rows> {
    let mut rows = Rows::default();
    for (index, buf) in labels {
        let img = image_of(dataset, *index)?;
        if buf.len() != img.width * img.height {
            return Err(Error::SizeMismatch(format!(
                "label buffer of {} for image {index}",
                buf.len()
            )));
        }
        for (p, label) in buf.iter().enumerate() {
            if let Some(c) = label {
                rows.inputs.push(patch_features(img, p % img.width, p / img.width));
                rows.targets.push(*c as usize);
            }
        }
    }
    Ok(rows)
}
