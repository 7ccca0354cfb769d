//! Acceptance suite. Each test checks one criterion and writes a single
//! `PASS`/`FAIL` line to stderr (uncaptured) before asserting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use albench_core::annotation::{
    point_segment_distance, polygonize, rasterize, rdp_simplify, simplify_chain, tolerance_sweep,
    trace_contour, connected_components, LabelMask, Vertex,
};
use albench_core::io::load_masks;
use albench_core::learners::objective::{consistency, cross_entropy, ranking, sharpen};
use albench_core::learners::{ModelKind, Network};
use albench_core::model::{BundleField, Dataset, PredictionBundle, SampleId, Task};
use albench_core::orchestrator::cycle::run_trial;
use albench_core::orchestrator::{
    load_data, run_config, Arm, Experiment, ExperimentConfig, Learner, ProtocolPreset, RunOverrides, Split,
    TrainJob,
};
use albench_core::annotation::LabelMask as Mask;
use albench_core::strategies::{
    ranking_hinge, select_coreset_greedy, shannon_entropy, variation_ratio, StrategyKind,
    StrategySpec,
};
use albench_core::synthetic::{self, moons_boundary_margin};

fn report(name: &str, pass: bool, detail: String) {
    let _ = writeln!(
        std::io::stderr(),
        "[{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

// ---------------------------------------------------------------- formulas

fn oracle_entropy(p: &[f64]) -> f64 {
    // Neumaier-compensated sum of -p ln p
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in p.iter().filter(|&&v| v > 0.0) {
        let t = -v * v.ln();
        let s = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - s) + t } else { (t - s) + sum };
        sum = s;
    }
    sum + comp
}

#[test]
fn formula_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut varr_bad = 0;
    for _ in 0..1000 {
        let t = rng.random_range(1..=12);
        let k = rng.random_range(1..=6);
        let votes: Vec<usize> = (0..t).map(|_| rng.random_range(0..k)).collect();
        let mut counts: HashMap<usize, usize> = HashMap::new();
        votes.iter().for_each(|v| *counts.entry(*v).or_default() += 1);
        let f_m = *counts.values().max().unwrap();
        let expected = 1.0 - f_m as f64 / t as f64;
        if variation_ratio(&votes).unwrap() != expected {
            varr_bad += 1;
        }
    }
    let mut ent_err = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(1..=10);
        let mut p: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        if rng.random_bool(0.2) {
            p[0] = 0.0;
        }
        let s: f64 = p.iter().sum();
        if s == 0.0 {
            continue;
        }
        p.iter_mut().for_each(|v| *v /= s);
        ent_err = ent_err.max((shannon_entropy(&p).unwrap() - oracle_entropy(&p)).abs());
    }
    let hinge = [
        ranking_hinge((2.0, 1.0), (3.0, 0.0), 1.0),
        ranking_hinge((2.0, 1.0), (0.0, 0.0), 1.0),
        ranking_hinge((2.0, 1.0), (0.0, 3.0), 1.0),
    ];
    let elapsed = start.elapsed().as_secs_f64();
    let pass = varr_bad == 0 && ent_err <= 1e-12 && hinge == [0.0, 1.0, 4.0] && elapsed < 1.0;
    report(
        "formula exactness",
        pass,
        format!(
            "varR mismatches {varr_bad}/1000, max entropy error {ent_err:.2e} (tol 1e-12), hinge {hinge:?}, {elapsed:.3}s"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- core-set

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn radius(points: &[Vec<f64>], centers: &[&Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|p| centers.iter().map(|c| dist(p, c)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in subsets(n - first - 1, k - 1) {
            let mut s = vec![first];
            s.extend(rest.into_iter().map(|r| r + first + 1));
            out.push(s);
        }
    }
    out
}

#[test]
fn coreset_two_approximation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut violations, mut worst) = (0, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let k = rng.random_range(1..=3.min(n));
        let dim = rng.random_range(1..=3);
        let nl = rng.random_range(1..=2);
        let mut point = || (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<f64>>();
        let u: Vec<Vec<f64>> = (0..n).map(|_| point()).collect();
        let l: Vec<Vec<f64>> = (0..nl).map(|_| point()).collect();
        let ids: Vec<SampleId> = (0..n).collect();
        let picks = select_coreset_greedy(&ids, &u, &l, k).unwrap().ids();
        let mut centers: Vec<&Vec<f64>> = l.iter().collect();
        centers.extend(picks.iter().map(|&i| &u[i]));
        let greedy = radius(&u, &centers);
        let optimal = subsets(n, k)
            .iter()
            .map(|s| {
                let mut c: Vec<&Vec<f64>> = l.iter().collect();
                c.extend(s.iter().map(|&i| &u[i]));
                radius(&u, &c)
            })
            .fold(f64::INFINITY, f64::min);
        if greedy > 2.0 * optimal + 1e-12 {
            violations += 1;
        }
        if optimal > 0.0 {
            worst = worst.max(greedy / optimal);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = violations == 0 && elapsed < 30.0;
    report(
        "core-set 2-approximation",
        pass,
        format!("{violations} violations on 200 instances, worst ratio {worst:.3}, {elapsed:.2}s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- geometry

fn random_mask(rng: &mut ChaCha8Rng) -> Mask {
    let w = rng.random_range(8..48);
    let h = rng.random_range(8..48);
    let classes = rng.random_range(2..6);
    synthetic::random_blob_mask(w, h, classes, rng)
}

/// Largest distance from a ring vertex to the simplified polygon.
fn max_deviation(ring: &[Vertex], kept: &[Vertex]) -> f64 {
    ring.iter()
        .map(|&p| {
            (0..kept.len())
                .map(|i| point_segment_distance(p, kept[i], kept[(i + 1) % kept.len()]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[test]
fn geometry_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut roundtrip_bad, mut rdp_bad, mut monotone_bad) = (0, 0, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mask = random_mask(&mut rng);
        let exact = polygonize(&mask, 0.0);
        let back = rasterize(&exact, mask.width, mask.height, 0).unwrap();
        if !back.same_outside_void(&mask) {
            roundtrip_bad += 1;
        }
        let mut prev = exact.clicks();
        for eps in [2.0, 5.0, 10.0] {
            for comp in connected_components(&mask) {
                let ring = trace_contour(&comp);
                let kept = rdp_simplify(&ring, eps);
                let d = max_deviation(&ring, &kept);
                worst = worst.max(d / eps);
                if d > eps + 1e-9 {
                    rdp_bad += 1;
                }
            }
            let c = polygonize(&mask, eps).clicks();
            if c > prev {
                monotone_bad += 1;
            }
            prev = c;
        }
    }
    // open chains too
    let chain: Vec<_> = (0..40)
        .map(|i: i32| [i, (i * 7) % 5])
        .collect();
    let keep = simplify_chain(&chain, 2.0);
    let chain_ok = keep.first() == Some(&0) && keep.last() == Some(&39);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = roundtrip_bad == 0 && rdp_bad == 0 && monotone_bad == 0 && chain_ok && elapsed < 30.0;
    report(
        "geometry round-trip",
        pass,
        format!(
            "100 masks: {roundtrip_bad} round-trip mismatches at eps=0, {rdp_bad} discarded vertices beyond eps (worst d/eps {worst:.3}), {monotone_bad} click increases, {elapsed:.2}s"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- gradients

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

fn numeric_grad(net: &Network, f: &dyn Fn(&Network) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..net.param_count())
        .map(|i| {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

fn small_net(rng: &mut ChaCha8Rng, head: bool) -> Network {
    let sizes: Vec<usize> = if rng.random_bool(0.5) { vec![3, 3] } else { vec![2, 2, 2, 2] };
    let kind = if sizes.len() == 2 { ModelKind::Logistic } else { ModelKind::Mlp };
    let mut net = Network::init(kind, &sizes, head, rng.random());
    // random biases too, so pre-activations sit away from the ReLU kink
    net.params_mut().iter_mut().for_each(|p| *p = rng.random_range(-1.0..1.0));
    net
}

#[test]
fn gradient_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = [0.0f64; 3];
    let mut counts = [0usize; 3];
    let mut max_params = 0;
    for _ in 0..25 {
        let net = small_net(&mut rng, false);
        max_params = max_params.max(net.param_count());
        let dim = net.input_dim();
        let xs = random_inputs(&mut rng, 5, dim);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let ys: Vec<usize> = (0..5).map(|_| rng.random_range(0..net.num_classes())).collect();
        let (_, g) = cross_entropy(&net, &refs, &ys);
        let n = numeric_grad(&net, &|m| cross_entropy(m, &refs, &ys).0);
        worst[0] = worst[0].max(rel_err(&g, &n));
        counts[0] += 1;

        let targets: Vec<Option<Vec<f64>>> = (0..5)
            .map(|i| {
                (i % 4 != 3).then(|| {
                    let raw: Vec<f64> = (0..net.num_classes()).map(|_| rng.random_range(0.05..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    sharpen(&raw.iter().map(|v| v / s).collect::<Vec<_>>(), 0.5)
                })
            })
            .collect();
        let (_, g) = consistency(&net, &refs, &targets);
        let n = numeric_grad(&net, &|m| consistency(m, &refs, &targets).0);
        worst[1] = worst[1].max(rel_err(&g, &n));
        counts[1] += 1;
    }
    let mut tries = 0;
    while counts[2] < 25 && tries < 1000 {
        tries += 1;
        let net = small_net(&mut rng, true);
        max_params = max_params.max(net.param_count());
        let xs = random_inputs(&mut rng, 6, net.input_dim());
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let losses: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..3.0)).collect();
        let pairs = [(0, 1), (2, 3), (4, 5)];
        // keep away from the hinge kink, where the derivative is undefined
        let preds: Vec<f64> = xs.iter().map(|x| net.forward(x).head.unwrap()).collect();
        let near_kink = pairs.iter().any(|&(i, j)| {
            let sign = if losses[i] - losses[j] >= 0.0 { 1.0 } else { -1.0 };
            (-sign * (preds[i] - preds[j]) + 1.0).abs() < 1e-3
        });
        if near_kink {
            continue;
        }
        let (_, g) = ranking(&net, &refs, &losses, &pairs, 1.0);
        let n = numeric_grad(&net, &|m| ranking(m, &refs, &losses, &pairs, 1.0).0);
        worst[2] = worst[2].max(rel_err(&g, &n));
        counts[2] += 1;
    }
    let pass = worst.iter().all(|w| *w < 1e-4) && counts.iter().all(|c| *c >= 20);
    report(
        "gradient checks",
        pass,
        format!(
            "max relative error supervised {:.1e} ({} nets), consistency {:.1e} ({}), hinge {:.1e} ({}); tol 1e-4; <= {max_params} params",
            worst[0], counts[0], worst[1], counts[1], worst[2], counts[2]
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- budget & determinism

fn all_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn random_config(rng: &mut ChaCha8Rng, out: &Path) -> String {
    let seed: u32 = rng.random();
    let cycles = rng.random_range(1..=3);
    let epochs = rng.random_range(2..=8);
    match rng.random_range(0..5) {
        0 => {
            let initial = rng.random_range(250..400);
            let per = rng.random_range(20..150);
            format!(
                r#"seed = {seed}
[dataset]
kind = "blob_images"
n = {n}
width = 12
height = 12
classes = 3
[preset]
name = "seg-clicks"
initial = {initial}
per_cycle = {per}
cycles = {cycles}
trials = 2
ensemble_trials = 1
regime = "{regime}"
[learner]
kind = "builtin"
model = {{ kind = "fcn", hidden = 6 }}
train = {{ epochs = {epochs} }}
[annotation]
tolerance = {tol}
[[roster]]
kind = "random"
[[roster]]
kind = "seg_entropy"
[[roster]]
kind = "ens_ent"
ensemble_size = 2
[output]
dir = {out:?}
"#,
                n = rng.random_range(15..30),
                regime = if rng.random_bool(0.5) { "image" } else { "polygon" },
                tol = [0.0, 1.0, 2.0][rng.random_range(0..3)],
            )
        }
        k => {
            let (dataset, classes) = if k % 2 == 0 {
                (format!("kind = \"two_moons\"\nn = {}\nnoise = 0.15", rng.random_range(80..200)), 2)
            } else {
                let c = rng.random_range(2..5);
                (format!("kind = \"blobs\"\nn = {}\nclasses = {c}\ndim = 3", rng.random_range(80..200)), c)
            };
            let initial = classes * rng.random_range(2..6);
            let per = rng.random_range(1..20);
            let roster: Vec<&str> = ["entropy", "coreset", "learn_loss", "ens_varr"]
                .into_iter()
                .filter(|_| rng.random_bool(0.5))
                .collect();
            let mut text = format!(
                r#"seed = {seed}
[dataset]
{dataset}
[preset]
name = "cifar10-low"
initial = {initial}
per_cycle = {per}
cycles = {cycles}
trials = 2
ensemble_trials = 1
mode = "{mode}"
ssl_baseline = {ssl_baseline}
[learner]
kind = "builtin"
model = {{ kind = "mlp", hidden = [8, 8] }}
train = {{ epochs = {epochs} }}
ensemble = {{ size = 3 }}
[[roster]]
kind = "random"
[output]
dir = {out:?}
"#,
                mode = if rng.random_bool(0.3) { "ssl" } else { "supervised" },
                ssl_baseline = rng.random_bool(0.3),
            );
            for r in roster {
                text.push_str(&format!("[[roster]]\nkind = \"{r}\"\n"));
                if r == "ens_varr" {
                    text.push_str("ensemble_size = 3\n");
                }
            }
            text
        }
    }
}

#[test]
fn budget_safety_and_determinism() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tmp = tempfile::tempdir().unwrap();
    let (mut over_budget, mut reacquired, mut replay_diff, mut errors) = (0, 0, 0, Vec::new());
    for e in 0..50 {
        let a = tmp.path().join(format!("{e}a"));
        let b = tmp.path().join(format!("{e}b"));
        let text_a = random_config(&mut rng, &a);
        let text_b = text_a.replace(&format!("{a:?}"), &format!("{b:?}"));
        let out = match run_config(&ExperimentConfig::parse(&text_a).unwrap(), RunOverrides::default()) {
            Ok(o) => o,
            Err(err) => {
                errors.push(format!("experiment {e}: {err}\n{text_a}"));
                continue;
            }
        };
        run_config(&ExperimentConfig::parse(&text_b).unwrap(), RunOverrides::default()).unwrap();
        if all_files(&a) != all_files(&b) {
            replay_diff += 1;
        }
        for log in &out.logs {
            let mut seen = BTreeSet::new();
            let mut polygons = BTreeSet::new();
            for c in &log.cycles {
                if c.spent > c.allowance {
                    over_budget += 1;
                }
                for acq in &c.acquired {
                    let fresh = match acq.component {
                        Some(comp) => polygons.insert((acq.index, comp)) && !seen.contains(&acq.index),
                        None => seen.insert(acq.index),
                    };
                    if !fresh {
                        reacquired += 1;
                    }
                }
            }
        }
        for r in &out.records {
            let allowance = out.preset.labeled_schedule();
            if r.points.iter().zip(&allowance).any(|(p, a)| p.spent > *a) {
                over_budget += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = over_budget == 0 && reacquired == 0 && replay_diff == 0 && errors.is_empty();
    report(
        "budget safety and determinism",
        pass,
        format!(
            "50 experiments: {over_budget} over-budget cycles, {reacquired} re-acquisitions, {replay_diff} non-identical replays, {} errors, {elapsed:.1}s",
            errors.len()
        ),
    );
    assert!(pass, "{errors:?}");
}

// ---------------------------------------------------------------- two moons

struct MoonsRun {
    ssl: f64,
    supervised: f64,
    entropy_delta: f64,
    /// Share of picks in the near-boundary set, per query cycle.
    entropy_near: Vec<f64>,
    random_near: Vec<f64>,
    seconds: f64,
}

fn overall(shares: &[f64]) -> f64 {
    shares.iter().sum::<f64>() / shares.len() as f64
}

/// Scaled low-budget protocol on two moons, run once and shared.
fn moons_run() -> &'static MoonsRun {
    static RUN: OnceLock<MoonsRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let tmp = tempfile::tempdir().unwrap();
        let text = format!(
            r#"seed = 2024
[dataset]
kind = "two_moons"
n = 667
noise = 0.15
test_fraction = 0.25
split_seed = 1
[preset]
name = "cifar10-low"
initial = 10
per_cycle = 10
cycles = 5
trials = 10
mode = "supervised"
ssl_baseline = true
[learner]
kind = "builtin"
model = {{ kind = "mlp", hidden = [32, 32] }}
train = {{ epochs = 1, max_steps = 1000, batch_labeled = 16, batch_unlabeled = 64, weight_decay = 1e-2 }}
[[roster]]
kind = "random"
[[roster]]
kind = "entropy"
[output]
dir = {:?}
"#,
            tmp.path()
        );
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let out = run_config(&cfg, RunOverrides::default()).unwrap();
        let data = load_data(&cfg).unwrap();
        let pool = &data.pool;
        let mut margins: Vec<(f64, usize)> = (0..pool.len())
            .map(|i| (moons_boundary_margin(pool.vector(i).unwrap()), i))
            .collect();
        margins.sort_by(|a, b| a.0.total_cmp(&b.0));
        let near: BTreeSet<usize> = margins[..pool.len() / 5].iter().map(|m| m.1).collect();
        let shares = |arm: &str| -> Vec<f64> {
            (1..=5)
                .map(|c| {
                    let picks: Vec<usize> = out
                        .logs
                        .iter()
                        .filter(|l| l.arm == arm)
                        .flat_map(|l| l.cycles[c].acquired.iter().map(|a| a.index))
                        .collect();
                    picks.iter().filter(|i| near.contains(i)).count() as f64 / picks.len() as f64
                })
                .collect()
        };
        let summary = |arm: &str| out.summary.strategy(arm).unwrap();
        MoonsRun {
            ssl: summary("ssl_random").final_mean,
            supervised: summary("random").final_mean,
            entropy_delta: summary("entropy").final_delta_vs_random,
            entropy_near: shares("entropy"),
            random_near: shares("random"),
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn two_moons_ssl_beats_supervised_random() {
    let r = moons_run();
    let pass = r.ssl > r.supervised && r.seconds < 300.0;
    report(
        "two-moons SSL-random vs supervised random",
        pass,
        format!(
            "final accuracy {:.4} vs {:.4} (delta {:+.4}); entropy delta vs random {:+.4}; {:.1}s",
            r.ssl,
            r.supervised,
            r.ssl - r.supervised,
            r.entropy_delta,
            r.seconds
        ),
    );
    assert!(pass);
}

#[test]
fn two_moons_entropy_picks_near_boundary() {
    let r = moons_run();
    let (e, rnd) = (overall(&r.entropy_near), overall(&r.random_near));
    let pass = e >= 0.6 && (rnd - 0.2).abs() < 0.1 && r.seconds < 300.0;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ");
    report(
        "two-moons entropy picks near the boundary",
        pass,
        format!(
            "share in the 20% of pool nearest the boundary: entropy {e:.3} (need >= 0.6; per cycle {}), random {rnd:.3} (expect ~0.2; per cycle {})",
            fmt(&r.entropy_near),
            fmt(&r.random_near)
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- VOC (conditional)

#[test]
fn voc_tolerance_sweep() {
    let Ok(dir) = std::env::var("ALBENCH_VOC_MASKS") else {
        report(
            "VOC tolerance sweep",
            true,
            "SKIPPED: set ALBENCH_VOC_MASKS to a directory of VOC class masks".into(),
        );
        return;
    };
    let masks: Vec<LabelMask> = load_masks(Path::new(&dir), Some(255))
        .unwrap()
        .into_iter()
        .map(|(_, m)| m)
        .collect();
    let sweep = tolerance_sweep(&masks, &[10.0], 21, 0).unwrap();
    let row = &sweep.rows[0];
    let pass = (row.miou - 0.9506).abs() <= 0.01 && (row.mean_clicks - 33.0).abs() <= 3.0;
    report(
        "VOC tolerance sweep",
        pass,
        format!(
            "{} masks at eps=10: mIoU {:.4} (0.9506 +- 0.01), clicks/image {:.2} (33 +- 3)",
            masks.len(),
            row.miou,
            row.mean_clicks
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- presets

/// Predicts uniform probabilities and raw inputs as features.
struct Stub {
    pool: std::sync::Arc<Dataset>,
    test: std::sync::Arc<Dataset>,
}

impl Learner for Stub {
    fn id(&self) -> String {
        "stub".into()
    }

    fn fields(&self, _arm: &Arm) -> Vec<BundleField> {
        vec![BundleField::Probs, BundleField::Features]
    }

    fn train(&mut self, _job: &TrainJob) -> albench_core::Result<()> {
        Ok(())
    }

    fn predict(
        &mut self,
        split: Split,
        indices: &[SampleId],
        _fields: &[BundleField],
    ) -> albench_core::Result<PredictionBundle> {
        let ds = if split == Split::Pool { &self.pool } else { &self.test };
        let k = ds.num_classes;
        let mut b = PredictionBundle::new(indices.to_vec());
        b.probs = Some(vec![vec![1.0 / k as f64; k]; indices.len()]);
        b.features = Some(indices.iter().map(|&i| ds.vector(i).unwrap().to_vec()).collect());
        Ok(b)
    }

    fn predict_masks(&mut self, _indices: &[SampleId]) -> albench_core::Result<Vec<LabelMask>> {
        unreachable!("classification only")
    }
}

fn labeled_sizes(preset: &str, n: usize, classes: usize) -> Vec<usize> {
    let mut p = ProtocolPreset::builtin(preset).unwrap();
    p.roster = vec![StrategySpec::new(StrategyKind::Random)];
    p.ssl_baseline = false;
    let full = synthetic::blobs(n, classes, 2, 5.0, 1.0, 0);
    let test_ids: Vec<usize> = (0..classes * 2).collect();
    let pool_ids: Vec<usize> = (classes * 2..n).collect();
    let pool = std::sync::Arc::new(full.subset(&pool_ids));
    let test = std::sync::Arc::new(full.subset(&test_ids));
    assert_eq!(pool.task, Task::Classification);
    let exp = Experiment::new(p.clone(), pool.clone(), &test, 10.0, 0.6, 0).unwrap();
    let arm = &p.arms()[0];
    let mut stub = Stub { pool, test };
    let (record, _) = run_trial(&exp, arm, 0, &mut stub).unwrap();
    record.points.iter().map(|pt| pt.labeled).collect()
}

#[test]
fn preset_arithmetic() {
    let large = labeled_sizes("cifar-large", 25_000, 10);
    let c10 = labeled_sizes("cifar10-low", 5_000, 10);
    let c100 = labeled_sizes("cifar100-low", 10_000, 100);
    let trials: Vec<(String, usize)> = ProtocolPreset::builtin("cifar-large")
        .unwrap()
        .roster
        .iter()
        .map(|s| (s.id().to_string(), ProtocolPreset::builtin("cifar-large").unwrap().trials_for(s)))
        .collect();
    let seg = ProtocolPreset::builtin("seg-clicks").unwrap();
    let pass = large == vec![5000, 7500, 10000, 12500, 15000, 17500, 20000]
        && c10.last() == Some(&2000)
        && c100.last() == Some(&4000)
        && trials.iter().all(|(id, t)| *t == if id == "ens_varr" { 2 } else { 3 })
        && seg.labeled_schedule() == vec![5000, 10000, 15000, 20000, 25000, 30000];
    report(
        "preset arithmetic",
        pass,
        format!(
            "cifar-large labeled {large:?}; low totals {:?}/{:?}; trials {trials:?}",
            c10.last(),
            c100.last()
        ),
    );
    assert!(pass);
}
