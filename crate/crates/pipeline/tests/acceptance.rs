//! Acceptance suite.
//!
//! One test per acceptance criterion, named `accept_NN_*`; `cargo test
//! --test acceptance` prints a pass/fail line per criterion (per-criterion
//! timing lines appear with `-- --nocapture`). Every tolerance is pinned in
//! the assertions below. The compression and metric oracles here are
//! independent straight-line implementations kept free of the library's
//! kernels.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use tempfile::tempdir;

use vad_core::compression::{compress, retained_count, CompressionConfig, TokenSet};
use vad_core::decoder::{decode, dice_loss, focal_loss, DecoderDims, DecoderWeights};
use vad_core::metrics::{average_precision, resample_nearest, roc_auc};
use vad_core::numerics::cross_attention;
use vad_core::projector::{project, ProjectorDims, ProjectorWeights};
use vad_core::sampler::{build_exposure_dataset, SamplerConfig, SourceSample};
use vad_core::semantic::{PromptSpec, SemanticFeature, TemplateId};
use vad_core::{Matrix, Rng};

use vad_pipeline::config::PipelineConfig;
use vad_pipeline::pipeline::{run_detect, run_eval, run_synth, MetricsReport};

// ---------------------------------------------------------------------------
// 1. compression oracle equivalence
// ---------------------------------------------------------------------------

/// Straight-line re-implementation of the whole compression pass, written
/// with plain loops over `Vec<Vec<f64>>`.
#[allow(clippy::type_complexity)]
fn compression_oracle(
    tokens: &[Vec<f64>],
    k: usize,
    ratio: f64,
    epsilon: f64,
) -> (Vec<Vec<f64>>, Vec<usize>, Vec<usize>, Vec<f64>) {
    let n = tokens.len();
    let dim = tokens[0].len();
    let sq =
        |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    // density: k over the summed squared distances to the k nearest others
    let mut densities = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| sq(&tokens[i], &tokens[j]))
            .collect();
        dists.sort_by(f64::total_cmp);
        let sum: f64 = dists[..k].iter().sum();
        densities.push(k as f64 / if sum < epsilon { epsilon } else { sum });
    }
    // background: densest max(1, round(ratio*n)) tokens, ties to low index
    let keep = ((ratio * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| densities[b].total_cmp(&densities[a]).then(a.cmp(&b)));
    let background: Vec<usize> = order[..keep].to_vec();
    // nearest background assignment, ties to the lowest position
    let mut assignment = Vec::with_capacity(n);
    for j in 0..n {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (pos, &b) in background.iter().enumerate() {
            let d = sq(&tokens[j], &tokens[b]);
            if d < best_d {
                best_d = d;
                best = pos;
            }
        }
        assignment.push(best);
    }
    // reverse attention per group; empty groups pass the background through
    let scale = 1.0 / (dim as f64).sqrt();
    let mut compressed = Vec::with_capacity(keep);
    for (pos, &b) in background.iter().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&j| assignment[j] == pos).collect();
        if members.is_empty() {
            compressed.push(tokens[b].clone());
            continue;
        }
        let scores: Vec<f64> = members
            .iter()
            .map(|&m| {
                -tokens[b]
                    .iter()
                    .zip(&tokens[m])
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
            })
            .collect();
        let max = scores
            .iter()
            .map(|s| s * scale)
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s * scale - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let mut row = vec![0.0; dim];
        for (e, &m) in exps.iter().zip(&members) {
            let w = e / total;
            for (acc, &v) in row.iter_mut().zip(&tokens[m]) {
                *acc += w * v;
            }
        }
        compressed.push(row);
    }
    (compressed, background, assignment, densities)
}

#[test]
fn accept_01_compression_matches_straight_line_oracle() {
    let started = Instant::now();
    let ks = [2usize, 4, 8];
    let ratios = [0.1f64, 0.2, 0.5];
    let mut rng = Rng::from_seed(0xACC1);
    for case in 0..200u64 {
        let k = ks[(case % 3) as usize];
        let ratio = ratios[((case / 3) % 3) as usize];
        let n = (k + 2) + rng.index(128 - (k + 2) + 1);
        let d = 2 + rng.index(31);
        let tokens = Matrix::gaussian(n, d, 1.0, &mut rng);
        let rows: Vec<Vec<f64>> = (0..n).map(|r| tokens.row(r).to_vec()).collect();

        let got = compress(
            &TokenSet::new(tokens),
            &CompressionConfig {
                k,
                ratio,
                epsilon: 1e-12,
            },
        )
        .unwrap();
        let (want_rows, want_bg, want_assign, want_density) =
            compression_oracle(&rows, k, ratio, 1e-12);

        assert_eq!(got.background_indices, want_bg, "case {case}");
        assert_eq!(got.assignment, want_assign, "case {case}");
        for (a, b) in got.densities.iter().zip(&want_density) {
            assert!(
                (a - b).abs() <= 1e-10 * b.abs().max(1.0),
                "case {case}: density {a} vs {b}"
            );
        }
        assert_eq!(got.compressed.rows(), want_rows.len());
        for (r, want) in want_rows.iter().enumerate() {
            for (c, w) in want.iter().enumerate() {
                let g = got.compressed.get(r, c);
                assert!((g - w).abs() < 1e-10, "case {case} [{r},{c}]: {g} vs {w}");
            }
        }
    }
    // the canonical mid-size case: 64 tokens, quarter ratio, 4 neighbors
    let tokens = Matrix::gaussian(64, 8, 1.0, &mut rng);
    let rows: Vec<Vec<f64>> = (0..64).map(|r| tokens.row(r).to_vec()).collect();
    let got = compress(
        &TokenSet::new(tokens),
        &CompressionConfig {
            k: 4,
            ratio: 0.25,
            epsilon: 1e-12,
        },
    )
    .unwrap();
    let (want_rows, want_bg, want_assign, _) = compression_oracle(&rows, 4, 0.25, 1e-12);
    assert_eq!(got.background_indices, want_bg);
    assert_eq!(got.assignment, want_assign);
    assert_eq!(got.compressed.rows(), 16);
    for (r, want) in want_rows.iter().enumerate() {
        for (c, w) in want.iter().enumerate() {
            assert!((got.compressed.get(r, c) - w).abs() < 1e-10);
        }
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(10),
        "200 compressions took {elapsed:?}, budget 10s"
    );
    println!(
        "ACCEPT-01 compression-oracle-equivalence: PASS ({:.2}s)",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 2. compression cost proxy
// ---------------------------------------------------------------------------

#[test]
fn accept_02_forwarded_token_count_at_ratio_point_two() {
    let started = Instant::now();
    let mut rng = Rng::from_seed(0xACC2);
    for n in 2usize..=128 {
        let k = 8.min(n - 1);
        let tokens = Matrix::gaussian(n, 6, 1.0, &mut rng);
        let got = compress(
            &TokenSet::new(tokens),
            &CompressionConfig {
                k,
                ratio: 0.2,
                epsilon: 1e-12,
            },
        )
        .unwrap();
        let expected = ((0.2 * n as f64).round() as usize).max(1);
        assert_eq!(got.compressed.rows(), expected, "L_z = {n}");
        assert_eq!(retained_count(n, 0.2), expected, "L_z = {n}");
        assert_eq!(got.background_indices.len(), expected);
    }
    println!(
        "ACCEPT-02 compression-cost-proxy: PASS ({:.2}s)",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 3. density edge handling
// ---------------------------------------------------------------------------

#[test]
fn accept_03_duplicate_tokens_never_produce_non_finite_values() {
    let started = Instant::now();
    let epsilon = 1e-12;
    // all-duplicate tokens: the guard path everywhere
    let all_same = Matrix::new(32, 5, vec![0.7; 160]).unwrap();
    let res = compress(
        &TokenSet::new(all_same),
        &CompressionConfig {
            k: 4,
            ratio: 0.25,
            epsilon,
        },
    )
    .unwrap();
    assert!(res.densities.iter().all(|d| d.is_finite()));
    assert!(res.densities.iter().all(|&d| d == 4.0 / epsilon));
    assert!(res.compressed.data().iter().all(|v| v.is_finite()));

    // mixed: clusters of exact duplicates among distinct tokens
    let mut rng = Rng::from_seed(0xACC3);
    for trial in 0..20 {
        let distinct = 3 + rng.index(5);
        let copies = 2 + rng.index(4);
        let d = 4;
        let mut data = Vec::new();
        for i in 0..distinct {
            let row: Vec<f64> = (0..d).map(|_| rng.next_normal() + i as f64).collect();
            for _ in 0..copies {
                data.extend_from_slice(&row);
            }
        }
        let n = distinct * copies;
        let tokens = Matrix::new(n, d, data).unwrap();
        // k = copies - 1: every token's whole neighborhood is exact
        // duplicates, so the distance sum is zero and the guard kicks in
        let k = copies - 1;
        let res = compress(
            &TokenSet::new(tokens),
            &CompressionConfig {
                k,
                ratio: 0.3,
                epsilon,
            },
        )
        .unwrap();
        assert!(
            res.densities.iter().all(|v| v.is_finite()),
            "trial {trial}: non-finite density"
        );
        assert!(
            res.compressed.data().iter().all(|v| v.is_finite()),
            "trial {trial}: non-finite output"
        );
        assert!(
            res.densities.iter().all(|&v| v == k as f64 / epsilon),
            "trial {trial}: guard path not exercised"
        );
    }
    println!(
        "ACCEPT-03 density-edge-handling: PASS ({:.2}s)",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 4. sampler statistics
// ---------------------------------------------------------------------------

#[test]
fn accept_04_sampler_statistics_over_ten_thousand_samples() {
    let started = Instant::now();
    assert_eq!(SamplerConfig::default().max_k_e, 30, "default max K_E");

    let sources: Vec<SourceSample> = (0..10_000)
        .map(|i| SourceSample {
            id: format!("s{i:05}"),
            visual_ref: format!("s{i:05}.rawvid"),
            frames: 1,
            height: 1,
            width: 1,
            masks: vec![vad_core::mask::RleMask::zeros(1, 1)],
            description: format!("category-{:02}", i % 40),
        })
        .collect();
    let config = SamplerConfig {
        anomaly_probability: 0.3,
        max_k_e: 30,
        seed: 20240809,
        ..SamplerConfig::default()
    };
    let exposures = build_exposure_dataset(&sources, &config).unwrap();
    assert_eq!(exposures.len(), 10_000);

    // anomalous fraction within the 3-sigma binomial band around 0.3
    let anomalous = exposures.iter().filter(|e| e.is_anomalous).count();
    let fraction = anomalous as f64 / 10_000.0;
    let sigma = (0.3_f64 * 0.7 / 10_000.0).sqrt();
    assert!(
        (fraction - 0.3).abs() <= 3.0 * sigma,
        "anomalous fraction {fraction} outside 0.3 +/- {}",
        3.0 * sigma
    );

    // K_E uniform on {1..30}: chi-square with 29 dof below the p=0.01
    // critical value 49.58788447289881
    let mut counts = [0u32; 30];
    for e in &exposures {
        assert!((1..=30).contains(&e.k_e));
        counts[e.k_e - 1] += 1;
    }
    let expected = 10_000.0 / 30.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    assert!(chi2 < 49.58788447289881, "chi-square {chi2}");

    // the anomaly iff holds on 100% of samples, category lists stay distinct
    for e in &exposures {
        let genuine_in = e.categories.iter().any(|c| c == &e.base.description);
        assert_eq!(e.is_anomalous, genuine_in, "{}", e.base.id);
        let all_ones = e.frame_labels.iter().all(|&l| l == 1);
        let all_zeros = e.frame_labels.iter().all(|&l| l == 0);
        assert!(if e.is_anomalous { all_ones } else { all_zeros });
        let mut seen = std::collections::BTreeSet::new();
        assert!(e.categories.iter().all(|c| seen.insert(c)));
        assert_eq!(e.k_e, e.categories.len());
    }
    println!(
        "ACCEPT-04 sampler-statistics: PASS ({:.2}s, fraction {fraction:.4}, chi2 {chi2:.2})",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 5. metric oracle equivalence
// ---------------------------------------------------------------------------

fn auc_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn ap_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let before = |a: usize, b: usize| scores[a] > scores[b] || (scores[a] == scores[b] && a <= b);
    let mut per_rank: Vec<(usize, f64)> = Vec::new();
    let mut positives = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        positives += 1;
        let mut rank = 0usize;
        let mut hits = 0usize;
        for (j, &lj) in labels.iter().enumerate() {
            if before(j, i) {
                rank += 1;
                if lj == 1 {
                    hits += 1;
                }
            }
        }
        per_rank.push((rank, hits as f64 / rank as f64));
    }
    per_rank.sort_by_key(|&(r, _)| r);
    per_rank.iter().map(|&(_, p)| p).sum::<f64>() / positives as f64
}

fn random_instance(rng: &mut Rng, max_n: usize) -> (Vec<f64>, Vec<u8>) {
    let n = 2 + rng.index(max_n - 1);
    let quantized = rng.below(2) == 0;
    let scores: Vec<f64> = if quantized {
        let levels = 2 + rng.below(9);
        (0..n)
            .map(|_| rng.below(levels) as f64 / levels as f64)
            .collect()
    } else {
        (0..n).map(|_| rng.next_f64()).collect()
    };
    let mut labels: Vec<u8> = (0..n).map(|_| (rng.next_u64() & 1) as u8).collect();
    labels[0] = 1;
    if n > 1 {
        labels[1] = 0;
    }
    (scores, labels)
}

#[test]
fn accept_05_metrics_equal_definition_oracles_exactly() {
    let started = Instant::now();
    let mut rng = Rng::from_seed(0xACC5);
    for case in 0..250 {
        let (scores, labels) = random_instance(&mut rng, 500);
        assert_eq!(
            roc_auc(&scores, &labels).unwrap(),
            auc_oracle(&scores, &labels),
            "auc case {case}"
        );
    }
    for case in 0..250 {
        let (scores, labels) = random_instance(&mut rng, 500);
        assert_eq!(
            average_precision(&scores, &labels).unwrap(),
            ap_oracle(&scores, &labels),
            "ap case {case}"
        );
    }
    // pixel AUC: score maps at 16x16 against 32x32 ground truth, labels
    // nearest-neighbor resampled
    for case in 0..50 {
        let mut label_pixels = vec![0u8; 32 * 32];
        for p in label_pixels.iter_mut() {
            *p = (rng.next_u64() & 1) as u8;
        }
        label_pixels[0] = 1;
        label_pixels[1] = 0;
        let mask = vad_core::mask::RleMask::encode(32, 32, &label_pixels).unwrap();
        let scores = Matrix::new(
            16,
            16,
            (0..256).map(|_| rng.below(13) as f64 / 13.0).collect(),
        )
        .unwrap();
        let record = vad_core::metrics::EvalRecord {
            video_id: format!("px{case}"),
            frame_scores: vec![0.5],
            frame_labels: vec![1],
            pixel_scores: Some(vec![scores.clone()]),
            pixel_labels: Some(vec![mask]),
        };
        let got = vad_core::metrics::pixel_auc(&[record]).unwrap();
        let resampled = resample_nearest(&label_pixels, 32, 32, 16, 16).unwrap();
        let want = auc_oracle(scores.data(), &resampled);
        assert_eq!(got, want, "pixel case {case}");
    }
    println!(
        "ACCEPT-05 metric-oracle-equivalence: PASS ({:.2}s)",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 6. gradient checks
// ---------------------------------------------------------------------------

fn central_diff(eval: impl Fn(&[f64]) -> f64, logits: &[f64], i: usize) -> f64 {
    let h = 1e-5;
    let mut plus = logits.to_vec();
    plus[i] += h;
    let mut minus = logits.to_vec();
    minus[i] -= h;
    (eval(&plus) - eval(&minus)) / (2.0 * h)
}

#[test]
fn accept_06_loss_gradients_match_finite_differences() {
    let started = Instant::now();
    for seed in 0..20u64 {
        let mut rng = Rng::from_seed(0x6000 + seed);
        let logits: Vec<f64> = (0..16).map(|_| 6.0 * rng.next_f64() - 3.0).collect();
        let targets: Vec<u8> = (0..16).map(|_| (rng.next_u64() & 1) as u8).collect();

        let (_, grad) = focal_loss(&logits, &targets, 0.25, 2.0).unwrap();
        for i in 0..logits.len() {
            let fd = central_diff(
                |l| focal_loss(l, &targets, 0.25, 2.0).unwrap().0,
                &logits,
                i,
            );
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(1e-7);
            assert!(rel < 1e-4, "focal seed {seed} index {i}: rel {rel}");
        }

        let (_, grad) = dice_loss(&logits, &targets).unwrap();
        for i in 0..logits.len() {
            let fd = central_diff(|l| dice_loss(l, &targets).unwrap().0, &logits, i);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(1e-7);
            assert!(rel < 1e-4, "dice seed {seed} index {i}: rel {rel}");
        }
    }
    println!(
        "ACCEPT-06 gradient-checks: PASS ({:.2}s)",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 7. projector / decoder invariants
// ---------------------------------------------------------------------------

#[test]
fn accept_07_projection_and_decoding_invariants() {
    let started = Instant::now();
    let projector_dims = ProjectorDims {
        text_dim: 6,
        vision_dim: 5,
        link_dim: 7,
        hidden_dim: 8,
        semantic_dim: 9,
        prompt_dim: 10,
        query_count: 4,
        depth: 2,
    };
    let decoder_dims = DecoderDims {
        prompt_dim: 10,
        vision_dim: 5,
        pixel_dim: 4,
        depth: 2,
        upsample: 2,
    };
    for trial in 0..100u64 {
        let mut rng = Rng::from_seed(0x7000 + trial);

        // attention convexity
        let q = Matrix::gaussian(3, 4, 1.0, &mut rng);
        let k = Matrix::gaussian(6, 4, 1.0, &mut rng);
        let v = Matrix::gaussian(6, 5, 1.0, &mut rng);
        let out = cross_attention(&q, &k, &v, 1.0).unwrap();
        for c in 0..v.cols() {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for r in 0..v.rows() {
                lo = lo.min(v.get(r, c));
                hi = hi.max(v.get(r, c));
            }
            for r in 0..out.rows() {
                assert!(
                    out.get(r, c) >= lo - 1e-9 && out.get(r, c) <= hi + 1e-9,
                    "trial {trial}: convexity"
                );
            }
        }

        // context-permutation invariance of the projected prompts
        let weights = ProjectorWeights::init(&projector_dims, trial).unwrap();
        let semantic = SemanticFeature {
            vector: (0..9).map(|_| rng.next_normal()).collect(),
            provider_id: "test".to_string(),
            prompt: PromptSpec {
                template_id: TemplateId::Direct,
                categories: vec!["x".to_string()],
                rendered: "x <SEG>".to_string(),
            },
        };
        let stack = Matrix::gaussian(5, 8, 1.0, &mut rng);
        let mut perm: Vec<usize> = (0..5).collect();
        rng.shuffle(&mut perm);
        let base = project(&semantic, &[stack.clone()], &weights).unwrap();
        let shuffled = project(&semantic, &[stack.select_rows(&perm).unwrap()], &weights).unwrap();
        for (a, b) in base
            .frame_prompts
            .data()
            .iter()
            .zip(shuffled.frame_prompts.data())
        {
            assert!(
                (a - b).abs() < 1e-10,
                "trial {trial}: permutation {a} vs {b}"
            );
        }

        // frame-permutation equivariance of the score bundle, and ranges
        let decoder = DecoderWeights::init(&decoder_dims, trial).unwrap();
        let frames = 4;
        let prompt = vad_core::projector::ProjectedPrompt {
            frame_prompts: Matrix::gaussian(frames, 10, 1.0, &mut rng),
            frame_attention: Vec::new(),
        };
        let vision = vad_core::encoders::VisionFeatures {
            frames: (0..frames)
                .map(|_| Matrix::gaussian(6, 5, 1.0, &mut rng))
                .collect(),
            patch_grid: (2, 3),
        };
        let bundle = decode(&prompt, &vision, &decoder).unwrap();
        let mut frame_perm: Vec<usize> = (0..frames).collect();
        rng.shuffle(&mut frame_perm);
        let permuted_prompt = vad_core::projector::ProjectedPrompt {
            frame_prompts: prompt.frame_prompts.select_rows(&frame_perm).unwrap(),
            frame_attention: Vec::new(),
        };
        let permuted_vision = vad_core::encoders::VisionFeatures {
            frames: frame_perm
                .iter()
                .map(|&i| vision.frames[i].clone())
                .collect(),
            patch_grid: vision.patch_grid,
        };
        let permuted = decode(&permuted_prompt, &permuted_vision, &decoder).unwrap();
        for (new_t, &old_t) in frame_perm.iter().enumerate() {
            assert_eq!(
                permuted.frame_scores[new_t], bundle.frame_scores[old_t],
                "trial {trial}: frame equivariance"
            );
            assert_eq!(
                permuted.pixel_scores[new_t], bundle.pixel_scores[old_t],
                "trial {trial}: pixel equivariance"
            );
        }
        for t in 0..frames {
            assert!((0.0..=1.0).contains(&bundle.frame_scores[t]));
            assert!(bundle.frame_logits[t].is_finite());
            assert!(bundle.pixel_scores[t]
                .data()
                .iter()
                .all(|s| (0.0..=1.0).contains(s)));
        }
    }
    println!(
        "ACCEPT-07 projection-decoding-invariants: PASS ({:.2}s)",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 8 + 10. end-to-end synthetic run, within the single-core time budget
// ---------------------------------------------------------------------------

#[test]
fn accept_08_and_10_end_to_end_synthetic_suite() {
    let dir = tempdir().unwrap();
    let config = PipelineConfig::default();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let started = Instant::now();
    let (oracle_report, random_report, eval_report): (MetricsReport, MetricsReport, MetricsReport) =
        pool.install(|| {
            let synth_dir = dir.path().join("synth");
            let manifest = run_synth(&config, &synth_dir, 20, 16, 64, 64).unwrap();
            let oracle = run_detect(&config, &manifest, &dir.path().join("oracle"), true).unwrap();
            let random = run_detect(&config, &manifest, &dir.path().join("random"), false).unwrap();
            let eval = run_eval(
                &dir.path().join("oracle"),
                &manifest,
                &dir.path().join("eval.json"),
                None,
            )
            .unwrap();
            (oracle, random, eval)
        });
    let elapsed = started.elapsed();

    // criterion 8: oracle wiring clears the detection bars
    let frame_auc = oracle_report.frame_auc.expect("frame auc defined");
    let pixel_auc = oracle_report.pixel_auc.expect("pixel auc defined");
    assert!(frame_auc > 0.95, "oracle frame auc {frame_auc}");
    assert!(pixel_auc > 0.90, "oracle pixel auc {pixel_auc}");
    assert_eq!(oracle_report.n_videos, 20);
    assert_eq!(oracle_report.n_frames, 20 * 16);

    // criterion 8: untrained random weights still complete with well-formed
    // metrics (no quality bar)
    assert_eq!(random_report.n_videos, 20);
    let rf = random_report.frame_auc.expect("random frame auc defined");
    assert!((0.0..=1.0).contains(&rf));
    let rp = random_report.pixel_auc.expect("random pixel auc defined");
    assert!((0.0..=1.0).contains(&rp));

    // the eval subcommand reproduces the detect-time metrics from files
    assert_eq!(eval_report.frame_auc, oracle_report.frame_auc);
    assert_eq!(eval_report.pixel_auc, oracle_report.pixel_auc);

    println!(
        "ACCEPT-08 end-to-end-synthetic: PASS ({:.2}s, oracle frame auc {frame_auc:.4}, \
         pixel auc {pixel_auc:.4}, random frame auc {rf:.4})",
        elapsed.as_secs_f64()
    );

    // criterion 10: the whole suite fits the single-core budget
    assert!(
        elapsed < Duration::from_secs(60),
        "synthetic suite took {elapsed:?}, budget 60s"
    );
    println!(
        "ACCEPT-10 synthetic-suite-runtime: PASS ({:.2}s < 60s on one core)",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 9. determinism of every subcommand
// ---------------------------------------------------------------------------

fn vad_cmd() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_vad"))
}

fn run_checked(cmd: &mut std::process::Command) {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn collect_files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

fn assert_trees_identical(a: &Path, b: &Path, what: &str) {
    let fa = collect_files(a);
    let fb = collect_files(b);
    let names_a: Vec<_> = fa.iter().map(|(p, _)| p.clone()).collect();
    let names_b: Vec<_> = fb.iter().map(|(p, _)| p.clone()).collect();
    assert_eq!(names_a, names_b, "{what}: file sets differ");
    for ((path, bytes_a), (_, bytes_b)) in fa.iter().zip(&fb) {
        assert_eq!(
            bytes_a,
            bytes_b,
            "{what}: {} differs between runs",
            path.display()
        );
    }
}

#[test]
fn accept_09_every_subcommand_is_byte_deterministic() {
    let started = Instant::now();
    let dir = tempdir().unwrap();
    let config = dir.path().join("config.toml");
    fs::write(
        &config,
        "[run]\nseed = 11\n\
         [encoder]\npatch_size = 8\nvision_dim = 16\ntext_dim = 16\n\
         [semantic]\ndim = 8\n\
         [projector]\nlink_dim = 8\nhidden_dim = 8\nprompt_dim = 8\nquery_count = 4\ndepth = 1\n\
         [decoder]\npixel_dim = 4\ndepth = 1\nupsample = 2\n\
         [compression]\nk = 4\n\
         [sampler]\nmax_k_e = 3\n",
    )
    .unwrap();

    // synth twice
    let synth = [dir.path().join("synth-a"), dir.path().join("synth-b")];
    for out in &synth {
        run_checked(
            vad_cmd()
                .arg("synth")
                .arg("--config")
                .arg(&config)
                .arg("--output-dir")
                .arg(out)
                .args([
                    "--scenes", "4", "--frames", "8", "--height", "32", "--width", "32",
                ]),
        );
    }
    assert_trees_identical(&synth[0], &synth[1], "synth");
    let manifest = synth[0].join("manifest.jsonl");

    // sample twice
    let samples = [
        dir.path().join("exp-a.jsonl"),
        dir.path().join("exp-b.jsonl"),
    ];
    for out in &samples {
        run_checked(
            vad_cmd()
                .arg("sample")
                .arg("--config")
                .arg(&config)
                .arg("--input")
                .arg(&manifest)
                .arg("--output")
                .arg(out),
        );
    }
    assert_eq!(
        fs::read(&samples[0]).unwrap(),
        fs::read(&samples[1]).unwrap(),
        "sample manifests differ"
    );

    // compress twice
    let tokens = dir.path().join("tokens.bin");
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&30u64.to_le_bytes());
    bytes.extend_from_slice(&5u64.to_le_bytes());
    for i in 0..150 {
        bytes.extend_from_slice(&((i as f64 * 0.71).cos()).to_le_bytes());
    }
    fs::write(&tokens, bytes).unwrap();
    let comp: Vec<(PathBuf, PathBuf)> = ["a", "b"]
        .iter()
        .map(|s| {
            (
                dir.path().join(format!("comp-{s}.bin")),
                dir.path().join(format!("comp-{s}.json")),
            )
        })
        .collect();
    for (bin, side) in &comp {
        run_checked(
            vad_cmd()
                .arg("compress")
                .arg("--config")
                .arg(&config)
                .arg("--input")
                .arg(&tokens)
                .arg("--output")
                .arg(bin)
                .arg("--sidecar")
                .arg(side)
                .args(["--k", "4", "--ratio", "0.2"]),
        );
    }
    assert_eq!(fs::read(&comp[0].0).unwrap(), fs::read(&comp[1].0).unwrap());
    assert_eq!(fs::read(&comp[0].1).unwrap(), fs::read(&comp[1].1).unwrap());

    // detect twice (standard weights) and twice with the oracle preset
    for (mode, flag) in [("det", false), ("ora", true)] {
        let outs = [
            dir.path().join(format!("{mode}-a")),
            dir.path().join(format!("{mode}-b")),
        ];
        for out in &outs {
            let mut cmd = vad_cmd();
            cmd.arg("detect")
                .arg("--config")
                .arg(&config)
                .arg("--input")
                .arg(&manifest)
                .arg("--output-dir")
                .arg(out);
            if flag {
                cmd.arg("--oracle");
            }
            run_checked(&mut cmd);
        }
        assert_trees_identical(&outs[0], &outs[1], mode);
    }

    // eval twice
    let evals = [
        (
            dir.path().join("eval-a.json"),
            dir.path().join("eval-a.csv"),
        ),
        (
            dir.path().join("eval-b.json"),
            dir.path().join("eval-b.csv"),
        ),
    ];
    for (json, csv) in &evals {
        run_checked(
            vad_cmd()
                .arg("eval")
                .arg("--scores")
                .arg(dir.path().join("det-a"))
                .arg("--truth")
                .arg(&manifest)
                .arg("--output")
                .arg(json)
                .arg("--csv")
                .arg(csv),
        );
    }
    assert_eq!(
        fs::read(&evals[0].0).unwrap(),
        fs::read(&evals[1].0).unwrap()
    );
    assert_eq!(
        fs::read(&evals[0].1).unwrap(),
        fs::read(&evals[1].1).unwrap()
    );

    println!(
        "ACCEPT-09 subcommand-determinism: PASS ({:.2}s)",
        started.elapsed().as_secs_f64()
    );
}
