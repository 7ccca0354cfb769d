use super::{LabelMask, PolygonSet};
use crate::error::{Error, Result};

/// Scanline fill of a polygon set at pixel centers with the even-odd rule.
/// Later polygons overwrite earlier ones; untouched pixels get `background`.
pub fn rasterize(
    pset: &PolygonSet,
    width: usize,
    height: usize,
    background: u8,
) -> Result<LabelMask> {
    let mut buf: Vec<Option<u8>> = vec![None; width * height];
    paint(pset, width, height, &mut buf)?;
    let pixels = buf.into_iter().map(|p| p.unwrap_or(background)).collect();
    Ok(LabelMask::new(width, height, pixels, None))
}

/// Paints every polygon of `pset` into `buf` (row-major, `width * height`).
pub fn paint(pset: &PolygonSet, width: usize, height: usize, buf: &mut [Option<u8>]) -> Result<()> {
    if buf.len() != width * height {
        return Err(Error::SizeMismatch(format!(
            "paint buffer of {} for {width}x{height}",
            buf.len()
        )));
    }
    let mut xs: Vec<f64> = Vec::new();
    for (pi, poly) in pset.polygons().iter().enumerate() {
        let ring = &poly.ring;
        if ring.len() < 3 {
            return Err(Error::DegenerateRing {
                polygon: pi,
                len: ring.len(),
            });
        }
        if let Some(v) = ring
            .iter()
            .find(|v| v[0] < 0 || v[1] < 0 || v[0] as usize > width || v[1] as usize > height)
        {
            return Err(Error::InvalidParam(format!(
                "polygon {pi} vertex {v:?} outside {width}x{height}"
            )));
        }
        let y_min = ring.iter().map(|v| v[1]).min().unwrap_or(0) as usize;
        let y_max = ring.iter().map(|v| v[1]).max().unwrap_or(0) as usize;
        for row in y_min..y_max.min(height) {
            let yc = row as f64 + 0.5;
            xs.clear();
            for k in 0..ring.len() {
                let a = ring[k];
                let b = ring[(k + 1) % ring.len()];
                let (ay, by) = (a[1] as f64, b[1] as f64);
                if (ay > yc) != (by > yc) {
                    let t = (yc - ay) / (by - ay);
                    xs.push(a[0] as f64 + t * (b[0] - a[0]) as f64);
                }
            }
            xs.sort_by(f64::total_cmp);
            for span in xs.chunks_exact(2) {
                // pixel centers c + 0.5 in [x0, x1)
                let first = (span[0] - 0.5).ceil().max(0.0) as usize;
                let end = ((span[1] - 0.5).ceil().max(0.0) as usize).min(width);
                for col in first..end {
                    buf[row * width + col] = Some(poly.class);
                }
            }
        }
    }
    Ok(())
}
