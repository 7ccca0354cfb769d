use serde::{Deserialize, Serialize};

use super::{polygonize, rdp_simplify, trace_contour, Component, LabelMask};
use crate::error::{Error, Result};
use crate::model::Raster;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Whole images are annotated per acquisition.
    Image,
    /// One ground-truth component is annotated per acquisition.
    Polygon,
}

/// What one acquisition annotates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnnotationUnit {
    Image,
    Component(usize),
}

/// Click cost of annotating `unit` of `mask` at `tolerance`.
pub fn price_acquisition(mask: &LabelMask, unit: AnnotationUnit, tolerance: f64) -> Result<u64> {
    match unit {
        AnnotationUnit::Image => Ok(polygonize(mask, tolerance).clicks()),
        AnnotationUnit::Component(id) => {
            let comps = super::connected_components(mask);
            let comp = comps.get(id).ok_or(Error::NotAComponent(id))?;
            Ok(rdp_simplify(&trace_contour(comp), tolerance).len() as u64)
        }
    }
}

/// Remaining click allowance with all-or-nothing charging.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClickMeter {
    remaining: u64,
}

impl ClickMeter {
    pub fn new(remaining: u64) -> Self {
        ClickMeter { remaining }
    }

    pub fn remaining(&self) -> u64 {
        self.remaining
    }

    /// Charges `cost` if it fits entirely; otherwise nothing is spent.
    pub fn try_charge(&mut self, cost: u64) -> bool {
        if cost <= self.remaining {
            self.remaining -= cost;
            true
        } else {
            false
        }
    }
}

/// Picks the candidate component with the most pixels whose entropy exceeds
/// `threshold`; ties go to the earlier candidate.
pub fn select_polygon(
    entropy_map: &Raster,
    components: &[Component],
    candidates: &[usize],
    threshold: f64,
) -> Result<usize> {
    let mut best: Option<(usize, usize)> = None;
    for &id in candidates {
        let comp = components.get(id).ok_or(Error::NotAComponent(id))?;
        let score = comp
            .pixels
            .iter()
            .filter(|&&(y, x)| entropy_map.get(x, y) > threshold)
            .count();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((id, score));
        }
    }
    best.map(|(id, _)| id).ok_or(Error::NoUnlabeledComponents)
}
