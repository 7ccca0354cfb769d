//! Seeded toy datasets for tests, demos and desk-scale experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::annotation::LabelMask;
use crate::model::{Dataset, Image, Sample, Target, Task};

/// Two interleaved half circles with Gaussian noise, classes alternating by
/// sample index.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let mut items = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let t = rng.random::<f64>() * std::f64::consts::PI;
        let (x, y) = if class == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        items.push(Sample::Vector(vec![
            x + normal.sample(&mut rng),
            y + normal.sample(&mut rng),
        ]));
        targets.push(Target::Class(class));
    }
    Dataset {
        items,
        targets,
        num_classes: 2,
        task: Task::Classification,
    }
}

/// Signed distance-like margin of a noiseless two-moons point: the gap
/// between its distances to the two class arcs. Small values lie near the
/// true decision boundary.
pub fn moons_boundary_margin(p: &[f64]) -> f64 {
    fn arc_distance(x: f64, y: f64, cx: f64, cy: f64, upper: bool) -> f64 {
        let (dx, dy) = (x - cx, y - cy);
        let on_side = if upper { dy >= 0.0 } else { dy <= 0.0 };
        if on_side {
            ((dx * dx + dy * dy).sqrt() - 1.0).abs()
        } else {
            let a = ((dx - 1.0).powi(2) + dy * dy).sqrt();
            let b = ((dx + 1.0).powi(2) + dy * dy).sqrt();
            a.min(b)
        }
    }
    let d0 = arc_distance(p[0], p[1], 0.0, 0.0, true);
    let d1 = arc_distance(p[0], p[1], 1.0, 0.5, false);
    (d0 - d1).abs()
}

/// Isotropic Gaussian clusters with centers on a circle of radius
/// `spread`; class = cluster.
pub fn blobs(n: usize, classes: usize, dim: usize, spread: f64, std: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std.max(0.0)).expect("finite std");
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let a = 2.0 * std::f64::consts::PI * c as f64 / classes.max(1) as f64;
            (0..dim)
                .map(|k| match k {
                    0 => spread * a.cos(),
                    1 => spread * a.sin(),
                    _ => 0.0,
                })
                .collect()
        })
        .collect();
    let mut items = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes.max(1);
        items.push(Sample::Vector(
            centers[c].iter().map(|m| m + normal.sample(&mut rng)).collect(),
        ));
        targets.push(Target::Class(c));
    }
    Dataset {
        items,
        targets,
        num_classes: classes,
        task: Task::Classification,
    }
}

/// A mask of irregular overlapping blobs on background 0: discs with a
/// wobbling radius, so shapes have concavities, pinches and holes.
pub fn random_blob_mask<R: Rng>(width: usize, height: usize, classes: u8, rng: &mut R) -> LabelMask {
    let mut mask = LabelMask::filled(width, height, 0);
    let count = rng.random_range(1..=4);
    for _ in 0..count {
        let class = rng.random_range(1..classes.max(2));
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let r = rng.random_range(1.5..(width.min(height) as f64 / 2.5).max(2.0));
        let wobble: Vec<f64> = (0..3).map(|_| rng.random_range(-0.35..0.35)).collect();
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let a = dy.atan2(dx);
                let rr = r * (1.0
                    + wobble[0] * (2.0 * a + phase).sin()
                    + wobble[1] * (3.0 * a).cos()
                    + wobble[2] * (5.0 * a + phase).sin());
                if dx * dx + dy * dy <= rr * rr {
                    mask.set(x, y, class);
                }
            }
        }
    }
    // sprinkle single pixels to exercise degenerate components
    for _ in 0..rng.random_range(0..4) {
        let (x, y) = (rng.random_range(0..width), rng.random_range(0..height));
        mask.set(x, y, rng.random_range(0..classes.max(1)));
    }
    mask
}

/// Toy segmentation images: one channel whose intensity encodes the class
/// of each pixel plus Gaussian noise.
pub fn blob_images(n: usize, width: usize, height: usize, classes: u8, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.08).expect("finite std");
    let mut items = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let mask = random_blob_mask(width, height, classes, &mut rng);
        let data = mask
            .pixels
            .iter()
            .map(|&c| {
                let level = (c as f64 + 0.5) / classes as f64;
                (level + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32
            })
            .collect();
        items.push(Sample::Image(Image {
            width,
            height,
            channels: 1,
            data,
        }));
        targets.push(Target::Mask(mask));
    }
    Dataset {
        items,
        targets,
        num_classes: classes as usize,
        task: Task::Segmentation,
    }
}
