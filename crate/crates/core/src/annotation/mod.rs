//! Simulated polygon annotator for segmentation masks.
//!
//! A mask is split into 4-connected components, each component's outer
//! boundary is traced along pixel edges and simplified with Ramer-Douglas-Peucker
//! at a pixel tolerance. The annotation cost of a polygon is its vertex count
//! (one click per vertex).

mod components;
mod contour;
mod metrics;
mod pricing;
mod raster;
mod rdp;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use components::{connected_components, label_components, Component};
pub use contour::{ring_area, trace_contour};
pub use metrics::{miou, ConfusionMatrix};
pub use pricing::{price_acquisition, select_polygon, AnnotationUnit, ClickMeter, Regime};
pub use raster::{paint, rasterize};
pub use rdp::{point_segment_distance, rdp_simplify, simplify_chain};
pub use sweep::{tolerance_sweep, SweepRow, ToleranceSweep};

/// Tolerance used when no other is configured, in pixels.
pub const DEFAULT_TOLERANCE: f64 = 10.0;

/// Lattice point `[x, y]` in pixel-corner coordinates (y grows downwards).
pub type Vertex = [i32; 2];

/// Dense class-id raster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    #[serde(default)]
    pub void_id: Option<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, void_id: Option<u8>) -> Self {
        assert_eq!(pixels.len(), width * height, "mask buffer size");
        LabelMask {
            width,
            height,
            pixels,
            void_id,
        }
    }

    pub fn filled(width: usize, height: usize, class: u8) -> Self {
        Self::new(width, height, vec![class; width * height], None)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, class: u8) {
        self.pixels[y * self.width + x] = class;
    }

    #[inline]
    pub fn is_void(&self, class: u8) -> bool {
        self.void_id == Some(class)
    }

    /// Equality of class ids on every pixel where neither mask is void.
    pub fn same_outside_void(&self, other: &LabelMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .pixels
                .iter()
                .zip(&other.pixels)
                .all(|(&a, &b)| self.is_void(a) || other.is_void(b) || a == b)
    }
}

/// One annotated region: a class id and a closed vertex ring. The ring does
/// not repeat its first vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub class: u8,
    pub ring: Vec<Vertex>,
}

impl Polygon {
    pub fn new(class: u8, ring: Vec<Vertex>) -> Self {
        Polygon { class, ring }
    }

    pub fn clicks(&self) -> u64 {
        self.ring.len() as u64
    }
}

/// Polygonal approximation of a mask. `clicks` always equals the total
/// vertex count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonSetRepr")]
pub struct PolygonSet {
    polygons: Vec<Polygon>,
    clicks: u64,
    pub tolerance: f64,
}

#[derive(Deserialize)]
struct PolygonSetRepr {
    polygons: Vec<Polygon>,
    clicks: u64,
    tolerance: f64,
}

impl TryFrom<PolygonSetRepr> for PolygonSet {
    type Error = String;

    fn try_from(r: PolygonSetRepr) -> Result<Self, String> {
        let set = PolygonSet::from_polygons(r.polygons, r.tolerance);
        if set.clicks != r.clicks {
            return Err(format!(
                "clicks field {} disagrees with vertex total {}",
                r.clicks, set.clicks
            ));
        }
        Ok(set)
    }
}

impl PolygonSet {
    pub fn empty(tolerance: f64) -> Self {
        PolygonSet {
            polygons: Vec::new(),
            clicks: 0,
            tolerance,
        }
    }

    /// Keeps the given order, which is also the paint order on rasterization.
    pub fn from_polygons(polygons: Vec<Polygon>, tolerance: f64) -> Self {
        let clicks = polygons.iter().map(Polygon::clicks).sum();
        PolygonSet {
            polygons,
            clicks,
            tolerance,
        }
    }

    pub fn polygons(&self) -> &[Polygon] {
        &self.polygons
    }

    pub fn clicks(&self) -> u64 {
        self.clicks
    }

    pub fn len(&self) -> usize {
        self.polygons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    /// Inserts a polygon so larger enclosed areas paint first; equal areas
    /// keep insertion order.
    pub fn push(&mut self, polygon: Polygon) {
        let area = ring_area(&polygon.ring).abs();
        let pos = self
            .polygons
            .iter()
            .position(|p| ring_area(&p.ring).abs() < area)
            .unwrap_or(self.polygons.len());
        self.clicks += polygon.clicks();
        self.polygons.insert(pos, polygon);
    }

    /// The external JSON form: `[{"class": c, "ring": [[x, y], ...]}, ...]`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.polygons)?)
    }

    pub fn from_json(text: &str, tolerance: f64) -> Result<Self> {
        let polygons: Vec<Polygon> = serde_json::from_str(text)?;
        if let Some((i, p)) = polygons.iter().enumerate().find(|(_, p)| p.ring.len() < 3) {
            return Err(Error::DegenerateRing {
                polygon: i,
                len: p.ring.len(),
            });
        }
        Ok(Self::from_polygons(polygons, tolerance))
    }
}

/// A mask with every component traced once, so it can be simplified at
/// several tolerances without re-tracing.
#[derive(Clone, Debug)]
pub struct TracedMask {
    pub width: usize,
    pub height: usize,
    pub components: Vec<Component>,
    pub rings: Vec<Vec<Vertex>>,
    /// Component ids sorted by enclosed area, largest first. Nested
    /// components always enclose less area than their container, so painting
    /// in this order reproduces holes.
    pub paint_order: Vec<usize>,
}

impl TracedMask {
    pub fn new(mask: &LabelMask) -> Self {
        let components = connected_components(mask);
        let rings: Vec<_> = components.iter().map(trace_contour).collect();
        let areas: Vec<i64> = rings.iter().map(|r| ring_area2(r).abs()).collect();
        let mut paint_order: Vec<usize> = (0..components.len()).collect();
        paint_order.sort_by(|&a, &b| areas[b].cmp(&areas[a]).then(a.cmp(&b)));
        TracedMask {
            width: mask.width,
            height: mask.height,
            components,
            rings,
            paint_order,
        }
    }

    pub fn component_polygon(&self, id: usize, tolerance: f64) -> Result<Polygon> {
        let ring = self.rings.get(id).ok_or(Error::NotAComponent(id))?;
        Ok(Polygon::new(
            self.components[id].class,
            rdp_simplify(ring, tolerance),
        ))
    }

    pub fn polygonize(&self, tolerance: f64) -> PolygonSet {
        let polygons = self
            .paint_order
            .iter()
            .map(|&id| Polygon::new(self.components[id].class, rdp_simplify(&self.rings[id], tolerance)))
            .collect();
        PolygonSet::from_polygons(polygons, tolerance)
    }
}

/// Components, contours and RDP per component; clicks are the vertex total.
pub fn polygonize(mask: &LabelMask, tolerance: f64) -> PolygonSet {
    TracedMask::new(mask).polygonize(tolerance)
}

/// Twice the signed area of a lattice ring.
pub(crate) fn ring_area2(ring: &[Vertex]) -> i64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let [x0, y0] = ring[i];
            let [x1, y1] = ring[(i + 1) % n];
            x0 as i64 * y1 as i64 - x1 as i64 * y0 as i64
        })
        .sum()
}
