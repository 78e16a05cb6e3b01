//! The analysis suite: alpha sweeps, slope estimates, cosine-distance
//! tables, pairwise interpolation heatmaps, image-factor trajectories, and
//! the Fréchet proxy.
//!
//! Evaluation is embarrassingly parallel over test items; results are
//! collected in test-set order and reduced sequentially, so outputs are
//! byte-identical regardless of worker count.

mod frechet;
mod stats;

pub use frechet::{
    frechet_from_features, frechet_proxy, jacobi_eigen, pooled_gray_features, psd_sqrt,
    FrechetStats,
};
pub use stats::{ols_slope_ci, spearman_rho, SlopeEstimate};

use rayon::prelude::*;

use crate::autodiff::Tensor;
use crate::directions::{sample_latent, Model};
use crate::error::{Error, Result};
use crate::generator::{Generator, ImageTensor};
use crate::rng::{domain, RandomStream};
use crate::scorers::{mask_moments, metric_entropy, ScorerKind};

/// The fixed 11-value alpha evaluation grid.
pub const ALPHA_GRID: [f64; 11] = [
    -0.5, -0.4, -0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
];

/// Index of alpha == 0 in [`ALPHA_GRID`].
pub const ALPHA_ZERO_INDEX: usize = 5;

// ── Test set ────────────────────────────────────────────────────────────

/// Deterministic held-out test set: `class_draws` random classes with
/// `per_class` latent codes each. Lives in its own seed domain, disjoint
/// from the training stream.
pub fn build_test_set(
    seed: u64,
    class_draws: usize,
    per_class: usize,
    gen: &Generator,
    trunc: f64,
) -> Vec<(Tensor, usize)> {
    assert!(class_draws >= 1, "need at least one class draw");
    let mut stream = RandomStream::new(seed, domain::TEST);
    let d = gen.weights().latent_dim();
    let c = gen.weights().class_count();
    let mut out = Vec::with_capacity(class_draws * per_class);
    for _ in 0..class_draws {
        let y = stream.index(c);
        for _ in 0..per_class {
            out.push((sample_latent(&mut stream, d, trunc), y));
        }
    }
    out
}

// ── Alpha sweep ─────────────────────────────────────────────────────────

/// Mean/std curve of one direction over the alpha grid.
#[derive(Debug, Clone)]
pub struct AlphaSweepResult {
    /// 1-indexed direction, as reported.
    pub direction: usize,
    pub scorer: ScorerKind,
    pub alphas: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n: usize,
}

/// Raw per-item sweep scores, kept around so slopes can pool them.
#[derive(Debug, Clone)]
pub struct SweepData {
    pub scorer: ScorerKind,
    pub n: usize,
    /// scores[direction][alpha][item]
    pub scores: Vec<Vec<Vec<f64>>>,
}

impl SweepData {
    pub fn mean(&self, direction: usize, alpha_idx: usize) -> f64 {
        let xs = &self.scores[direction][alpha_idx];
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    pub fn result(&self, direction: usize) -> AlphaSweepResult {
        let mut mean = Vec::with_capacity(ALPHA_GRID.len());
        let mut std = Vec::with_capacity(ALPHA_GRID.len());
        for ai in 0..ALPHA_GRID.len() {
            let xs = &self.scores[direction][ai];
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = if xs.len() > 1 {
                xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
            } else {
                0.0
            };
            mean.push(m);
            std.push(var.sqrt());
        }
        AlphaSweepResult {
            direction: direction + 1,
            scorer: self.scorer,
            alphas: ALPHA_GRID.to_vec(),
            mean,
            std,
            n: self.n,
        }
    }

    pub fn results(&self) -> Vec<AlphaSweepResult> {
        (0..self.scores.len()).map(|d| self.result(d)).collect()
    }

    /// All (alpha, score) samples of one direction, pooled for regression.
    pub fn pooled_points(&self, direction: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(ALPHA_GRID.len() * self.n);
        for (ai, alpha) in ALPHA_GRID.iter().enumerate() {
            for &s in &self.scores[direction][ai] {
                out.push((*alpha, s));
            }
        }
        out
    }
}

/// Score every direction over the alpha grid on the held-out test set.
pub fn alpha_sweep(
    model: &Model,
    test_set: &[(Tensor, usize)],
    gen: &Generator,
    scorer: ScorerKind,
) -> Result<SweepData> {
    if test_set.is_empty() {
        return Err(Error::Config("empty test set".into()));
    }
    let k = model.num_directions();
    // per item: [direction][alpha] scores, in parallel, order-preserving
    let per_item: Vec<Result<Vec<Vec<f64>>>> = test_set
        .par_iter()
        .map(|(z, y)| {
            let mut rows = Vec::with_capacity(k);
            for dir in 0..k {
                let mut row = Vec::with_capacity(ALPHA_GRID.len());
                for &alpha in ALPHA_GRID.iter() {
                    let shifted = model.shifted(dir, z, alpha)?;
                    let (img, mask) = gen.generate(&shifted, *y)?;
                    row.push(scorer.score(&img, &mask)?);
                }
                rows.push(row);
            }
            Ok(rows)
        })
        .collect();

    let mut scores = vec![vec![Vec::with_capacity(test_set.len()); ALPHA_GRID.len()]; k];
    for item in per_item {
        let rows = item?;
        for (dir, row) in rows.into_iter().enumerate() {
            for (ai, s) in row.into_iter().enumerate() {
                scores[dir][ai].push(s);
            }
        }
    }
    Ok(SweepData {
        scorer,
        n: test_set.len(),
        scores,
    })
}

// ── Cosine-distance table ───────────────────────────────────────────────

/// Diversity/effectiveness summary for a bank of k directions.
#[derive(Debug, Clone)]
pub struct CosineTableRow {
    pub k: usize,
    /// Mean over unordered direction pairs and test latents of
    /// 1 - cos(delta_i, delta_j); missing when every pair is degenerate.
    pub mean_cosine_distance: Option<f64>,
    /// Mean over directions of (mean score at alpha = +0.5) - (mean at 0).
    pub mean_score_increase: f64,
}

fn cosine_of(a: &Tensor, b: &Tensor) -> Option<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na < 1e-12 || nb < 1e-12 {
        return None;
    }
    let dot: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
    Some(dot / (na * nb))
}

/// Mean over probe latents and unordered direction pairs of the absolute
/// cosine between direction displacements. Degenerate pairs are skipped;
/// errors when every pair is degenerate.
pub fn mean_pairwise_abs_cos(model: &Model, probes: &[Tensor]) -> Result<f64> {
    let k = model.num_directions();
    if k < 2 {
        return Err(Error::Config(
            "pairwise cosine needs at least 2 directions".into(),
        ));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for z in probes {
        let deltas: Vec<Tensor> = (0..k).map(|i| model.delta(i, z)).collect::<Result<_>>()?;
        for i in 0..k {
            for j in (i + 1)..k {
                if let Some(c) = cosine_of(&deltas[i], &deltas[j]) {
                    sum += c.abs();
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::DegenerateVector { norm: 0.0 });
    }
    Ok(sum / count as f64)
}

/// Table-row statistics for a trained bank (k >= 2) on the test set.
/// The score increase is computed from an alpha sweep with the given
/// scorer; pass the sweep in if one is already available.
pub fn cosine_table(
    model: &Model,
    test_set: &[(Tensor, usize)],
    sweep: &SweepData,
) -> Result<CosineTableRow> {
    let k = model.num_directions();
    if k < 2 {
        return Err(Error::Config(
            "cosine table needs at least 2 directions".into(),
        ));
    }
    // mean pairwise distance of deltas; degenerate (zero-norm) deltas are
    // skipped rather than zero-filled
    let mut sum = 0.0;
    let mut count = 0usize;
    for (z, _) in test_set {
        let deltas: Vec<Tensor> = (0..k)
            .map(|i| model.delta(i, z))
            .collect::<Result<_>>()?;
        for i in 0..k {
            for j in (i + 1)..k {
                if let Some(c) = cosine_of(&deltas[i], &deltas[j]) {
                    sum += 1.0 - c;
                    count += 1;
                }
            }
        }
    }
    let mean_cosine_distance = if count > 0 {
        Some(sum / count as f64)
    } else {
        None
    };

    let last = ALPHA_GRID.len() - 1;
    debug_assert_eq!(ALPHA_GRID[last], 0.5);
    let mean_score_increase = (0..k)
        .map(|d| sweep.mean(d, last) - sweep.mean(d, ALPHA_ZERO_INDEX))
        .sum::<f64>()
        / k as f64;

    Ok(CosineTableRow {
        k,
        mean_cosine_distance,
        mean_score_increase,
    })
}

// ── Interpolation heatmaps ──────────────────────────────────────────────

/// Mean score over the test set for every (alpha_i, alpha_j) pair of steps
/// along two directions.
#[derive(Debug, Clone)]
pub struct HeatmapGrid {
    /// 1-indexed direction pair, as reported.
    pub dir_i: usize,
    pub dir_j: usize,
    pub alphas: Vec<f64>,
    /// cells[row][col]: row indexes alpha_i, col indexes alpha_j.
    pub cells: Vec<Vec<f64>>,
}

pub fn interpolation_heatmap(
    model: &Model,
    i: usize,
    j: usize,
    test_set: &[(Tensor, usize)],
    gen: &Generator,
    scorer: ScorerKind,
) -> Result<HeatmapGrid> {
    let k = model.num_directions();
    if i == j {
        return Err(Error::Config("heatmap needs two distinct directions".into()));
    }
    if i >= k || j >= k {
        return Err(Error::IndexOutOfRange {
            what: "direction",
            index: i.max(j),
            len: k,
        });
    }
    if test_set.is_empty() {
        return Err(Error::Config("empty test set".into()));
    }

    let per_item: Vec<Result<Vec<Vec<f64>>>> = test_set
        .par_iter()
        .map(|(z, y)| {
            let di = model.delta(i, z)?;
            let dj = model.delta(j, z)?;
            let mut grid = Vec::with_capacity(ALPHA_GRID.len());
            for &a in ALPHA_GRID.iter() {
                let mut row = Vec::with_capacity(ALPHA_GRID.len());
                for &b in ALPHA_GRID.iter() {
                    let shifted = crate::directions::combine(z, &[(a, &di), (b, &dj)])?;
                    let (img, mask) = gen.generate(&shifted, *y)?;
                    row.push(scorer.score(&img, &mask)?);
                }
                grid.push(row);
            }
            Ok(grid)
        })
        .collect();

    let m = ALPHA_GRID.len();
    let mut cells = vec![vec![0.0; m]; m];
    let mut n = 0usize;
    for item in per_item {
        let grid = item?;
        for r in 0..m {
            for c in 0..m {
                cells[r][c] += grid[r][c];
            }
        }
        n += 1;
    }
    for row in cells.iter_mut() {
        for cell in row.iter_mut() {
            *cell /= n as f64;
        }
    }
    Ok(HeatmapGrid {
        dir_i: i + 1,
        dir_j: j + 1,
        alphas: ALPHA_GRID.to_vec(),
        cells,
    })
}

/// Mean Spearman correlation of heatmap cells against the row axis and the
/// column axis: how consistently the score tracks each direction's step.
pub fn heatmap_axis_consistency(grid: &HeatmapGrid) -> Result<(f64, f64)> {
    let m = grid.alphas.len();
    let mut row_sum = 0.0;
    for row in &grid.cells {
        row_sum += spearman_rho(&grid.alphas, row)?;
    }
    let mut col_sum = 0.0;
    for c in 0..m {
        let col: Vec<f64> = grid.cells.iter().map(|row| row[c]).collect();
        col_sum += spearman_rho(&grid.alphas, &col)?;
    }
    Ok((row_sum / m as f64, col_sum / m as f64))
}

// ── Image-factor trajectories ───────────────────────────────────────────

/// The seven reported image factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Redness,
    Colorfulness,
    Brightness,
    Entropy,
    Squareness,
    Centeredness,
    ObjectSize,
}

impl Factor {
    pub const ALL: [Factor; 7] = [
        Factor::Redness,
        Factor::Colorfulness,
        Factor::Brightness,
        Factor::Entropy,
        Factor::Squareness,
        Factor::Centeredness,
        Factor::ObjectSize,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Factor::Redness => "redness",
            Factor::Colorfulness => "colorfulness",
            Factor::Brightness => "brightness",
            Factor::Entropy => "entropy",
            Factor::Squareness => "squareness",
            Factor::Centeredness => "centeredness",
            Factor::ObjectSize => "object_size",
        }
    }
}

/// Per-alpha mean of one factor along one direction. Cells for which every
/// sample was degenerate are missing, never zero-filled.
#[derive(Debug, Clone)]
pub struct FactorTrajectory {
    /// 1-indexed direction, as reported.
    pub direction: usize,
    pub factor: Factor,
    pub alphas: Vec<f64>,
    pub mean: Vec<Option<f64>>,
}

/// All seven factor values for one image; mask-moment factors are `None`
/// when the mask is degenerate.
fn factor_values(img: &ImageTensor, mask: &Tensor) -> Result<[Option<f64>; 7]> {
    let redness = ScorerKind::Redness.score(img, mask)?;
    let colorfulness = ScorerKind::Colorfulness.score(img, mask)?;
    let brightness = ScorerKind::Brightness.score(img, mask)?;
    let entropy = metric_entropy(img, 64);
    let object_size = mask.data().iter().sum::<f64>() / mask.numel() as f64;
    let (squareness, centeredness) = match mask_moments(mask) {
        Ok(m) => (Some(m.minor_major_ratio), Some(m.centeredness)),
        Err(Error::DegenerateMask { .. }) => (None, None),
        Err(e) => return Err(e),
    };
    Ok([
        Some(redness),
        Some(colorfulness),
        Some(brightness),
        Some(entropy),
        squareness,
        centeredness,
        Some(object_size),
    ])
}

pub fn factor_trajectories(
    model: &Model,
    test_set: &[(Tensor, usize)],
    gen: &Generator,
) -> Result<Vec<FactorTrajectory>> {
    if test_set.is_empty() {
        return Err(Error::Config("empty test set".into()));
    }
    let k = model.num_directions();

    // per item: [direction][alpha][factor]
    type ItemFactors = Vec<Vec<[Option<f64>; 7]>>;
    let per_item: Vec<Result<ItemFactors>> = test_set
        .par_iter()
        .map(|(z, y)| {
            let mut dirs = Vec::with_capacity(k);
            for dir in 0..k {
                let mut per_alpha = Vec::with_capacity(ALPHA_GRID.len());
                for &alpha in ALPHA_GRID.iter() {
                    let shifted = model.shifted(dir, z, alpha)?;
                    let (img, mask) = gen.generate(&shifted, *y)?;
                    per_alpha.push(factor_values(&img, &mask)?);
                }
                dirs.push(per_alpha);
            }
            Ok(dirs)
        })
        .collect();

    let mut sums = vec![vec![[(0.0f64, 0usize); 7]; ALPHA_GRID.len()]; k];
    for item in per_item {
        let dirs = item?;
        for (d, per_alpha) in dirs.into_iter().enumerate() {
            for (ai, factors) in per_alpha.into_iter().enumerate() {
                for (fi, value) in factors.into_iter().enumerate() {
                    if let Some(v) = value {
                        sums[d][ai][fi].0 += v;
                        sums[d][ai][fi].1 += 1;
                    }
                }
            }
        }
    }

    let mut out = Vec::with_capacity(k * Factor::ALL.len());
    for (d, per_alpha) in sums.iter().enumerate() {
        for (fi, factor) in Factor::ALL.into_iter().enumerate() {
            let mean: Vec<Option<f64>> = per_alpha
                .iter()
                .map(|cells| {
                    let (sum, count) = cells[fi];
                    if count > 0 {
                        Some(sum / count as f64)
                    } else {
                        None
                    }
                })
                .collect();
            out.push(FactorTrajectory {
                direction: d + 1,
                factor,
                alphas: ALPHA_GRID.to_vec(),
                mean,
            });
        }
    }
    Ok(out)
}

// ── CSV rendering ───────────────────────────────────────────────────────
//
// All CSV output is UTF-8 with a header row, '.' decimals, and LF line
// endings. Missing cells are left empty.

pub fn sweep_csv(results: &[AlphaSweepResult]) -> String {
    let mut out = String::from("direction,alpha,mean,std,n\n");
    for r in results {
        for (ai, alpha) in r.alphas.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.direction, alpha, r.mean[ai], r.std[ai], r.n
            ));
        }
    }
    out
}

pub fn slopes_csv(rows: &[(String, usize, SlopeEstimate)]) -> String {
    let mut out = String::from("model,direction,beta,ci_low,ci_high,n\n");
    for (model, direction, fit) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            model, direction, fit.beta, fit.ci_low, fit.ci_high, fit.n
        ));
    }
    out
}

pub fn cosine_table_csv(rows: &[CosineTableRow]) -> String {
    let mut out = String::from("k,mean_cosine_distance,mean_score_increase\n");
    for row in rows {
        let dist = row
            .mean_cosine_distance
            .map(|d| d.to_string())
            .unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", row.k, dist, row.mean_score_increase));
    }
    out
}

pub fn heatmap_csv(grid: &HeatmapGrid) -> String {
    let mut out = String::from("alpha");
    for alpha in &grid.alphas {
        out.push_str(&format!(",{alpha}"));
    }
    out.push('\n');
    for (ri, row) in grid.cells.iter().enumerate() {
        out.push_str(&grid.alphas[ri].to_string());
        for cell in row {
            out.push_str(&format!(",{cell}"));
        }
        out.push('\n');
    }
    out
}

pub fn factors_csv(trajectories: &[FactorTrajectory]) -> String {
    let mut out = String::from("direction,alpha,factor,mean\n");
    for t in trajectories {
        for (ai, alpha) in t.alphas.iter().enumerate() {
            let mean = t.mean[ai].map(|m| m.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                t.direction,
                alpha,
                t.factor.name(),
                mean
            ));
        }
    }
    out
}

pub fn frechet_csv(rows: &[(String, f64)]) -> String {
    let mut out = String::from("comparison,distance\n");
    for (name, distance) in rows {
        out.push_str(&format!("{name},{distance}\n"));
    }
    out
}
