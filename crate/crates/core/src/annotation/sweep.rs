use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{paint, ConfusionMatrix, LabelMask, TracedMask};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tolerance: f64,
    pub mean_clicks: f64,
    pub miou: f64,
}

/// Click cost against approximation quality, one row per tolerance in
/// increasing order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSweep {
    pub rows: Vec<SweepRow>,
}

impl ToleranceSweep {
    /// CSV with header `tolerance,mean_clicks,miou`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tolerance", "mean_clicks", "miou"])?;
        for r in &self.rows {
            w.write_record([
                r.tolerance.to_string(),
                format!("{:.4}", r.mean_clicks),
                format!("{:.6}", r.miou),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Polygonizes every mask at each tolerance and scores the rasterized
/// polygons against the originals with corpus-wide mIoU. Pixels no polygon
/// covers are assigned `background`. Tolerances are sorted and deduplicated.
pub fn tolerance_sweep(
    masks: &[LabelMask],
    tolerances: &[f64],
    num_classes: usize,
    background: u8,
) -> Result<ToleranceSweep> {
    let mut tols: Vec<f64> = tolerances.iter().copied().filter(|t| t.is_finite()).collect();
    tols.sort_by(f64::total_cmp);
    tols.dedup();

    let classes = masks
        .iter()
        .flat_map(|m| m.pixels.iter().filter(|&&p| !m.is_void(p)))
        .copied()
        .max()
        .map_or(0, |c| c as usize + 1)
        .max(num_classes)
        .max(background as usize + 1);

    // per image: (clicks, confusion) for every tolerance
    let per_image: Vec<Vec<(u64, ConfusionMatrix)>> = masks
        .par_iter()
        .map(|mask| -> Result<_> {
            let traced = TracedMask::new(mask);
            tols.iter()
                .map(|&eps| {
                    let pset = traced.polygonize(eps);
                    let mut buf = vec![None; mask.width * mask.height];
                    paint(&pset, mask.width, mask.height, &mut buf)?;
                    let pixels = buf.into_iter().map(|p| p.unwrap_or(background)).collect();
                    let approx = LabelMask::new(mask.width, mask.height, pixels, None);
                    let mut cm = ConfusionMatrix::new(classes);
                    cm.accumulate(&approx, mask)?;
                    Ok((pset.clicks(), cm))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let rows = tols
        .iter()
        .enumerate()
        .map(|(t, &tolerance)| {
            let mut cm = ConfusionMatrix::new(classes);
            let mut clicks = 0u64;
            for img in &per_image {
                clicks += img[t].0;
                cm.merge(&img[t].1);
            }
            SweepRow {
                tolerance,
                mean_clicks: if masks.is_empty() {
                    0.0
                } else {
                    clicks as f64 / masks.len() as f64
                },
                miou: cm.miou(),
            }
        })
        .collect();
    Ok(ToleranceSweep { rows })
}
