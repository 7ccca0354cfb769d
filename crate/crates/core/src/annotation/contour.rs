use super::{Component, Vertex};

// Directions in screen coordinates (y grows downwards).
const DOWN: (i32, i32) = (0, 1);

/// Outer boundary of a component as a closed lattice ring with one vertex per
/// unit step along pixel edges.
///
/// The ring runs counter-clockwise on screen (interior on the left when
/// walking it) and starts at the top-left corner of the component's first
/// raster pixel, which is the lexicographically smallest boundary corner.
/// Where two pixels of the component touch only at a corner the walk keeps
/// hugging the pixel it is on, so such corners are visited twice.
pub fn trace_contour(component: &Component) -> Vec<Vertex> {
    let (r0, c0) = component.pixels[0];
    let min_c = component.pixels.iter().map(|p| p.1).min().unwrap_or(0);
    let max_c = component.pixels.iter().map(|p| p.1).max().unwrap_or(0);
    let max_r = component.pixels.iter().map(|p| p.0).max().unwrap_or(0);
    let min_r = r0;

    // membership grid with a one pixel border
    let gw = max_c - min_c + 3;
    let gh = max_r - min_r + 3;
    let mut grid = vec![false; gw * gh];
    for &(r, c) in &component.pixels {
        grid[(r - min_r + 1) * gw + (c - min_c + 1)] = true;
    }
    let inside = |row: i32, col: i32| -> bool {
        let gr = row - min_r as i32 + 1;
        let gc = col - min_c as i32 + 1;
        if gr < 0 || gc < 0 || gr as usize >= gh || gc as usize >= gw {
            return false;
        }
        grid[gr as usize * gw + gc as usize]
    };
    // A directed edge leaving vertex (x, y) is a boundary edge when the pixel
    // on its left is inside and the one on its right is outside.
    let edge = |x: i32, y: i32, (dx, dy): (i32, i32)| -> bool {
        let (left, right) = match (dx, dy) {
            (0, 1) => ((y, x), (y, x - 1)),
            (1, 0) => ((y - 1, x), (y, x)),
            (0, -1) => ((y - 1, x - 1), (y - 1, x)),
            (-1, 0) => ((y, x - 1), (y - 1, x - 1)),
            _ => unreachable!(),
        };
        inside(left.0, left.1) && !inside(right.0, right.1)
    };

    let start = [c0 as i32, r0 as i32];
    let mut ring = vec![start];
    let mut pos = start;
    let mut dir = DOWN;
    loop {
        pos = [pos[0] + dir.0, pos[1] + dir.1];
        if pos == start {
            break;
        }
        ring.push(pos);
        let left = (dir.1, -dir.0);
        let right = (-dir.1, dir.0);
        dir = [left, dir, right]
            .into_iter()
            .find(|&d| edge(pos[0], pos[1], d))
            .expect("boundary walk always has a continuation");
    }
    ring
}

/// Signed area enclosed by a ring. Positive for rings that run
/// counter-clockwise on screen.
pub fn ring_area(ring: &[Vertex]) -> f64 {
    -(super::ring_area2(ring) as f64) / 2.0
}
