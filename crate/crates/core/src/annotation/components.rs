use std::collections::VecDeque;

use super::LabelMask;

/// A 4-connected region of one class. `pixels` are `(row, col)` pairs in
/// raster order, so `pixels[0]` is the component's first pixel in a
/// row-major scan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub class: u8,
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// 4-connected components per class, void pixels excluded, ordered by their
/// first pixel in raster order.
pub fn connected_components(mask: &LabelMask) -> Vec<Component> {
    label_components(mask).0
}

/// Components plus a per-pixel map from pixel to component id (`None` for
/// void pixels).
pub fn label_components(mask: &LabelMask) -> (Vec<Component>, Vec<Option<usize>>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels: Vec<Option<usize>> = vec![None; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        let class = mask.pixels[start];
        if labels[start].is_some() || mask.is_void(class) {
            continue;
        }
        let id = out.len();
        labels[start] = Some(id);
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            let (y, x) = (p / w, p % w);
            pixels.push((y, x));
            let mut visit = |q: usize| {
                if labels[q].is_none() && mask.pixels[q] == class {
                    labels[q] = Some(id);
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        pixels.sort_unstable();
        out.push(Component { class, pixels });
    }
    (out, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mask_is_one_component() {
        let m = LabelMask::filled(7, 3, 4);
        let c = connected_components(&m);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].area(), 21);
        assert_eq!(c[0].class, 4);
    }

    #[test]
    fn diagonal_blobs_stay_separate() {
        #[rustfmt::skip]
        let m = LabelMask::new(4, 4, vec![
            1, 1, 0, 0,
            1, 1, 0, 0,
            0, 0, 1, 1,
            0, 0, 1, 1,
        ], Some(0));
        let c = connected_components(&m);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].pixels[0], (0, 0));
        assert_eq!(c[1].pixels[0], (2, 2));
    }

    #[test]
    fn checkerboard_has_four_components() {
        let m = LabelMask::new(2, 2, vec![1, 2, 2, 1], None);
        assert_eq!(connected_components(&m).len(), 4);
    }

    #[test]
    fn ordering_follows_first_raster_pixel() {
        #[rustfmt::skip]
        let m = LabelMask::new(3, 3, vec![
            0, 0, 2,
            1, 0, 2,
            1, 1, 1,
        ], None);
        let c = connected_components(&m);
        let firsts: Vec<_> = c.iter().map(|c| (c.class, c.pixels[0])).collect();
        assert_eq!(firsts, vec![(0, (0, 0)), (2, (0, 2)), (1, (1, 0))]);
        let (_, labels) = label_components(&m);
        assert_eq!(labels[4], Some(0));
        assert_eq!(labels[8], Some(2));
    }
}
