//! Ramer-Douglas-Peucker simplification of closed lattice rings.

use super::Vertex;

/// Euclidean distance from `p` to the segment `a`-`b`.
pub fn point_segment_distance(p: Vertex, a: Vertex, b: Vertex) -> f64 {
    let (px, py) = (p[0] as f64, p[1] as f64);
    let (ax, ay) = (a[0] as f64, a[1] as f64);
    let (bx, by) = (b[0] as f64, b[1] as f64);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return ((px - ax).powi(2) + (py - ay).powi(2)).sqrt();
    }
    let t = (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0);
    let (qx, qy) = (ax + t * dx, ay + t * dy);
    ((px - qx).powi(2) + (py - qy).powi(2)).sqrt()
}

/// Simplifies an open chain, returning the indices of retained points
/// (always including both endpoints).
///
/// An interior point is retained when its distance to the current chord is
/// at least `epsilon`, so every discarded point lies strictly within
/// `epsilon` of the simplified chain and `epsilon = 0` retains everything.
pub fn simplify_chain(chain: &[Vertex], epsilon: f64) -> Vec<usize> {
    let n = chain.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (mut best, mut best_d) = (lo + 1, -1.0f64);
        for i in lo + 1..hi {
            let d = point_segment_distance(chain[i], chain[lo], chain[hi]);
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        if best_d >= epsilon {
            keep[best] = true;
            stack.push((lo, best));
            stack.push((best, hi));
        }
    }
    keep.iter()
        .enumerate()
        .filter_map(|(i, &k)| k.then_some(i))
        .collect()
}

/// Simplifies a closed ring: split at the two mutually farthest vertices,
/// simplify both open chains and rejoin. Retained vertices keep their ring
/// order. A result with fewer than three vertices gets back the vertex
/// farthest from the split chord so the polygon stays non-degenerate.
pub fn rdp_simplify(ring: &[Vertex], epsilon: f64) -> Vec<Vertex> {
    let n = ring.len();
    if n <= 3 {
        return ring.to_vec();
    }
    let (i, j) = farthest_pair(ring);
    let mut keep = vec![false; n];

    let first: Vec<Vertex> = ring[i..=j].to_vec();
    for k in simplify_chain(&first, epsilon) {
        keep[i + k] = true;
    }
    let second: Vec<Vertex> = ring[j..].iter().chain(&ring[..=i]).copied().collect();
    for k in simplify_chain(&second, epsilon) {
        keep[(j + k) % n] = true;
    }

    if keep.iter().filter(|&&k| k).count() < 3 {
        let far = (0..n)
            .filter(|&k| k != i && k != j)
            .max_by(|&a, &b| {
                let da = point_segment_distance(ring[a], ring[i], ring[j]);
                let db = point_segment_distance(ring[b], ring[i], ring[j]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("ring has more than three vertices");
        keep[far] = true;
    }
    ring.iter()
        .zip(&keep)
        .filter_map(|(v, &k)| k.then_some(*v))
        .collect()
}

/// Ring indices `(i, j)`, `i < j`, of two vertices at maximum mutual
/// distance; ties go to the smallest `(i, j)`.
fn farthest_pair(ring: &[Vertex]) -> (usize, usize) {
    // The diameter is attained on the convex hull, which is small for pixel
    // contours; search the hull and map back to ring positions.
    let hull = convex_hull(ring);
    let mut best = (0usize, 1usize);
    let mut best_d = -1i64;
    for a in 0..hull.len() {
        for b in a + 1..hull.len() {
            let (ia, ib) = (hull[a].min(hull[b]), hull[a].max(hull[b]));
            let d = dist2(ring[ia], ring[ib]);
            if d > best_d || (d == best_d && (ia, ib) < best) {
                best = (ia, ib);
                best_d = d;
            }
        }
    }
    best
}

fn dist2(a: Vertex, b: Vertex) -> i64 {
    let dx = (a[0] - b[0]) as i64;
    let dy = (a[1] - b[1]) as i64;
    dx * dx + dy * dy
}

/// Indices (first ring occurrence) of convex hull vertices, collinear hull
/// points included so tie-breaking sees every candidate.
fn convex_hull(ring: &[Vertex]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ring.len()).collect();
    idx.sort_by_key(|&i| (ring[i], i));
    idx.dedup_by_key(|i| ring[*i]);
    if idx.len() <= 2 {
        return idx;
    }
    let cross = |o: Vertex, a: Vertex, b: Vertex| -> i64 {
        (a[0] - o[0]) as i64 * (b[1] - o[1]) as i64 - (a[1] - o[1]) as i64 * (b[0] - o[0]) as i64
    };
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2
            && cross(ring[lower[lower.len() - 2]], ring[lower[lower.len() - 1]], ring[i]) < 0
        {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2
            && cross(ring[upper[upper.len() - 2]], ring[upper[upper.len() - 1]], ring[i]) < 0
        {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower.sort_unstable();
    lower.dedup();
    lower
}
