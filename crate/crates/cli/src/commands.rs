//! The train / eval / compare commands.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use latentdirs::checkpoint::{self, Checkpoint};
use latentdirs::directions::{train, train_linear_baseline, Model, TrainError, TrainState};
use latentdirs::evaluation::{
    self, alpha_sweep, build_test_set, cosine_table, factor_trajectories, frechet_proxy,
    interpolation_heatmap, ols_slope_ci, CosineTableRow, ALPHA_ZERO_INDEX,
};
use latentdirs::generator::{Generator, ImageTensor};
use latentdirs::scorers::ScorerKind;

use crate::artifacts::{ppm_strip, sha256_hex, Bundle};
use crate::config::RunConfig;
use crate::CliError;

// ── train ───────────────────────────────────────────────────────────────

pub fn cmd_train(
    config_path: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        config.train.seed = seed;
    }
    let train_config = config.train_config()?;
    let gen = config.build_generator()?;

    let mut bundle = Bundle::create(out, "train")?;
    let resolved = config.to_toml();
    bundle.note("config_sha256", sha256_hex(resolved.as_bytes()));
    bundle.note("seed", config.train.seed.to_string());

    // both model flavours funnel into the same bundle layout
    let outcome: Result<(Model, TrainState), (Model, TrainState, String)> =
        if config.train.model == "linear" {
            match train_linear_baseline(&train_config, &gen) {
                Ok((lin, state)) => Ok((Model::Linear(lin), state)),
                Err(TrainError::Config(e)) => return Err(e.into()),
                Err(TrainError::Aborted(abort)) => {
                    let abort = *abort;
                    let message = abort.to_string();
                    Err((Model::Linear(abort.last_good), abort.state, message))
                }
            }
        } else {
            match train(&train_config, &gen) {
                Ok((bank, state)) => Ok((Model::Bank(bank), state)),
                Err(TrainError::Config(e)) => return Err(e.into()),
                Err(TrainError::Aborted(abort)) => {
                    let abort = *abort;
                    let message = abort.to_string();
                    Err((Model::Bank(abort.last_good), abort.state, message))
                }
            }
        };

    let (model, state, failure) = match outcome {
        Ok((model, state)) => (model, state, None),
        // keep the last good state around for inspection, then fail
        Err((model, state, message)) => (model, state, Some(message)),
    };
    let ck = Checkpoint {
        model,
        config: train_config,
        step: state.step,
    };
    bundle.write_text("checkpoint.txt", &checkpoint::encode(&ck))?;
    bundle.write_text("train_log.csv", &train_log_csv(&state))?;
    bundle.write_text("run_config.toml", &resolved)?;
    bundle.finish(t0.elapsed().as_secs_f64())?;
    match failure {
        None => Ok(()),
        Some(message) => Err(CliError::Numeric(message)),
    }
}

fn train_log_csv(state: &TrainState) -> String {
    let mut out = String::from("step,loss_total,loss_cond,loss_div\n");
    for i in 0..state.step {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            state.loss_total_history[i],
            state.loss_cond_history[i],
            state.loss_div_history[i],
        ));
    }
    out
}

// ── eval ────────────────────────────────────────────────────────────────

pub fn cmd_eval(
    config_path: &Path,
    checkpoint_path: &Path,
    out: &Path,
    seed_override: Option<u64>,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        config.eval.test_seed = seed;
    }
    let ck = checkpoint::load_file(checkpoint_path)?;
    let gen = config.build_generator()?;

    if ck.model.latent_dim() != gen.weights().latent_dim() {
        return Err(CliError::Config(format!(
            "checkpoint latent_dim {} does not match generator latent_dim {}",
            ck.model.latent_dim(),
            gen.weights().latent_dim()
        )));
    }
    let scorer = config.scorer()?;
    if scorer != ck.config.scorer {
        return Err(CliError::Config(format!(
            "config scorer '{}' does not match checkpoint scorer '{}'",
            scorer, ck.config.scorer
        )));
    }

    let pairs = config.heatmap_pairs(ck.model.num_directions())?;
    let n_test = config.eval.class_draws * config.eval.per_class;
    if config.eval.frechet && n_test < config.eval.feature_dim + 1 {
        return Err(CliError::Config(format!(
            "Fréchet proxy needs more than {} test images, have {n_test}",
            config.eval.feature_dim
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;

    let mut bundle = Bundle::create(out, "eval")?;
    let resolved = config.to_toml();
    bundle.note("config_sha256", sha256_hex(resolved.as_bytes()));
    bundle.note("test_seed", config.eval.test_seed.to_string());
    bundle.note(
        "checkpoint_sha256",
        sha256_hex(checkpoint::encode(&ck).as_bytes()),
    );

    let outputs = pool.install(|| -> Result<EvalOutputs, CliError> {
        evaluate(&config, &ck, &gen, scorer, &pairs)
    })?;

    bundle.write_text("sweep.csv", &outputs.sweep_csv)?;
    bundle.write_text("slopes.csv", &outputs.slopes_csv)?;
    bundle.write_text("cosine_table.csv", &outputs.cosine_table_csv)?;
    for (name, text) in &outputs.heatmap_csvs {
        bundle.write_text(name, text)?;
    }
    bundle.write_text("factors.csv", &outputs.factors_csv)?;
    if let Some(text) = &outputs.frechet_csv {
        bundle.write_text("frechet.csv", text)?;
    }
    for (name, bytes) in &outputs.strips {
        bundle.write(name, bytes)?;
    }
    bundle.write_text("run_config.toml", &resolved)?;
    bundle.finish(t0.elapsed().as_secs_f64())?;
    Ok(())
}

struct EvalOutputs {
    sweep_csv: String,
    slopes_csv: String,
    cosine_table_csv: String,
    heatmap_csvs: Vec<(String, String)>,
    factors_csv: String,
    frechet_csv: Option<String>,
    strips: Vec<(String, Vec<u8>)>,
}

fn evaluate(
    config: &RunConfig,
    ck: &Checkpoint,
    gen: &Generator,
    scorer: ScorerKind,
    pairs: &[(usize, usize)],
) -> Result<EvalOutputs, CliError> {
    let model = &ck.model;
    let k = model.num_directions();
    let test = build_test_set(
        config.eval.test_seed,
        config.eval.class_draws,
        config.eval.per_class,
        gen,
        ck.config.trunc,
    );

    let sweep = alpha_sweep(model, &test, gen, scorer)?;
    let sweep_csv = evaluation::sweep_csv(&sweep.results());

    let kind = match model {
        Model::Bank(_) => "bank",
        Model::Linear(_) => "linear",
    };
    let mut slope_rows = Vec::with_capacity(k);
    for d in 0..k {
        let fit = ols_slope_ci(&sweep.pooled_points(d))?;
        slope_rows.push((kind.to_string(), d + 1, fit));
    }
    let slopes_csv = evaluation::slopes_csv(&slope_rows);

    let table_row = if k >= 2 {
        cosine_table(model, &test, &sweep)?
    } else {
        CosineTableRow {
            k: 1,
            mean_cosine_distance: None,
            mean_score_increase: sweep.mean(0, evaluation::ALPHA_GRID.len() - 1)
                - sweep.mean(0, ALPHA_ZERO_INDEX),
        }
    };
    let cosine_table_csv = evaluation::cosine_table_csv(&[table_row]);

    let mut heatmap_csvs = Vec::new();
    for &(i, j) in pairs {
        let grid = interpolation_heatmap(model, i, j, &test, gen, scorer)?;
        heatmap_csvs.push((
            format!("heatmap_{}_{}.csv", grid.dir_i, grid.dir_j),
            evaluation::heatmap_csv(&grid),
        ));
    }

    let trajectories = factor_trajectories(model, &test, gen)?;
    let factors_csv = evaluation::factors_csv(&trajectories);

    let images_at = |dir: usize, alpha: f64| -> Result<Vec<ImageTensor>, CliError> {
        test.iter()
            .map(|(z, y)| {
                let shifted = model.shifted(dir, z, alpha)?;
                let (img, _) = gen.generate(&shifted, *y)?;
                Ok(img)
            })
            .collect()
    };

    let frechet_csv = if config.eval.frechet {
        let base = images_at(0, 0.0)?;
        let mut rows = Vec::with_capacity(2 * k);
        for d in 0..k {
            let pos = frechet_proxy(&base, &images_at(d, 0.5)?, config.eval.feature_dim)?;
            rows.push((format!("dir{}_pos", d + 1), pos.distance));
            let neg = frechet_proxy(&base, &images_at(d, -0.5)?, config.eval.feature_dim)?;
            rows.push((format!("dir{}_neg", d + 1), neg.distance));
        }
        Some(evaluation::frechet_csv(&rows))
    } else {
        None
    };

    // qualitative strips: the first few test images at alpha -0.5 / 0 / +0.5
    let strip_n = config.eval.sample_strip.min(test.len());
    let mut strips = Vec::with_capacity(3 * k);
    for d in 0..k {
        for (tag, alpha) in [("neg", -0.5), ("zero", 0.0), ("pos", 0.5)] {
            let images: Vec<ImageTensor> = test[..strip_n]
                .iter()
                .map(|(z, y)| {
                    let shifted = model.shifted(d, z, alpha)?;
                    let (img, _) = gen.generate(&shifted, *y)?;
                    Ok::<_, CliError>(img)
                })
                .collect::<Result<_, _>>()?;
            strips.push((
                format!("samples_dir{}_{tag}.ppm", d + 1),
                ppm_strip(&images)?,
            ));
        }
    }

    Ok(EvalOutputs {
        sweep_csv,
        slopes_csv,
        cosine_table_csv,
        heatmap_csvs,
        factors_csv,
        frechet_csv,
        strips,
    })
}

// ── compare ─────────────────────────────────────────────────────────────

pub fn cmd_compare(run_a: &Path, run_b: &Path, out: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let a = RunDir::load(run_a)?;
    let b = RunDir::load(run_b)?;

    if a.config.train.scorer != b.config.train.scorer {
        return Err(CliError::Config(format!(
            "runs used different scorers ('{}' vs '{}'); comparison would be meaningless",
            a.config.train.scorer, b.config.train.scorer
        )));
    }
    if a.config.eval.test_seed != b.config.eval.test_seed {
        return Err(CliError::Config(format!(
            "runs used different test seeds ({} vs {}); comparison would be meaningless",
            a.config.eval.test_seed, b.config.eval.test_seed
        )));
    }

    let mut text = String::from("metric,direction,alpha,run_a,run_b,delta\n");
    let push_row = |text: &mut String,
                    metric: &str,
                    direction: Option<usize>,
                    alpha: Option<f64>,
                    va: Option<f64>,
                    vb: Option<f64>| {
        let dir = direction.map(|d| d.to_string()).unwrap_or_default();
        let alpha = alpha.map(|a| a.to_string()).unwrap_or_default();
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let delta = match (va, vb) {
            (Some(x), Some(y)) => (x - y).to_string(),
            _ => String::new(),
        };
        text.push_str(&format!(
            "{metric},{dir},{alpha},{},{},{delta}\n",
            fmt(va),
            fmt(vb)
        ));
    };

    let shared_dirs = a.slopes.len().min(b.slopes.len());
    for d in 1..=shared_dirs {
        push_row(
            &mut text,
            "slope",
            Some(d),
            None,
            a.slopes.get(&d).copied(),
            b.slopes.get(&d).copied(),
        );
    }
    for d in 1..=shared_dirs {
        for (alpha_key, alpha) in &a.sweep_alphas {
            push_row(
                &mut text,
                "sweep_mean",
                Some(d),
                Some(*alpha),
                a.sweep.get(&(d, alpha_key.clone())).copied(),
                b.sweep.get(&(d, alpha_key.clone())).copied(),
            );
        }
    }
    push_row(
        &mut text,
        "cosine_distance",
        None,
        None,
        a.cosine_distance,
        b.cosine_distance,
    );
    push_row(
        &mut text,
        "score_increase",
        None,
        None,
        a.score_increase,
        b.score_increase,
    );

    let mut bundle = Bundle::create(out, "compare")?;
    bundle.note("run_a", run_a.display().to_string());
    bundle.note("run_b", run_b.display().to_string());
    bundle.write_text("comparison.csv", &text)?;
    bundle.finish(t0.elapsed().as_secs_f64())?;
    Ok(())
}

/// The parts of an eval bundle the compare command consumes.
struct RunDir {
    config: RunConfig,
    slopes: BTreeMap<usize, f64>,
    /// (direction, alpha-as-written) -> mean; alphas kept as strings so
    /// lookups are exact.
    sweep: BTreeMap<(usize, String), f64>,
    sweep_alphas: Vec<(String, f64)>,
    cosine_distance: Option<f64>,
    score_increase: Option<f64>,
}

impl RunDir {
    fn load(dir: &Path) -> Result<Self, CliError> {
        let read = |name: &str| -> Result<String, CliError> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| {
                CliError::Config(format!(
                    "run bundle {} is incomplete: {name}: {e}",
                    dir.display()
                ))
            })
        };
        let config: RunConfig = toml::from_str(&read("run_config.toml")?)
            .map_err(|e| CliError::Config(format!("{}: run_config.toml: {e}", dir.display())))?;

        let mut slopes = BTreeMap::new();
        for row in csv_rows(&read("slopes.csv")?, 6, "slopes.csv")? {
            let direction: usize = parse_cell(&row[1], "slopes.csv direction")?;
            let beta: f64 = parse_cell(&row[2], "slopes.csv beta")?;
            slopes.insert(direction, beta);
        }

        let mut sweep = BTreeMap::new();
        let mut sweep_alphas: Vec<(String, f64)> = Vec::new();
        for row in csv_rows(&read("sweep.csv")?, 5, "sweep.csv")? {
            let direction: usize = parse_cell(&row[0], "sweep.csv direction")?;
            let alpha: f64 = parse_cell(&row[1], "sweep.csv alpha")?;
            let mean: f64 = parse_cell(&row[2], "sweep.csv mean")?;
            if direction == 1 {
                sweep_alphas.push((row[1].clone(), alpha));
            }
            sweep.insert((direction, row[1].clone()), mean);
        }

        let mut cosine_distance = None;
        let mut score_increase = None;
        for row in csv_rows(&read("cosine_table.csv")?, 3, "cosine_table.csv")? {
            if !row[1].is_empty() {
                cosine_distance = Some(parse_cell(&row[1], "cosine_table distance")?);
            }
            if !row[2].is_empty() {
                score_increase = Some(parse_cell(&row[2], "cosine_table increase")?);
            }
        }

        Ok(RunDir {
            config,
            slopes,
            sweep,
            sweep_alphas,
            cosine_distance,
            score_increase,
        })
    }
}

fn csv_rows(text: &str, columns: usize, what: &str) -> Result<Vec<Vec<String>>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue; // header
        }
        let cells: Vec<String> = line.split(',').map(str::to_string).collect();
        if cells.len() != columns {
            return Err(CliError::Config(format!(
                "{what} row {i}: expected {columns} columns, got {}",
                cells.len()
            )));
        }
        rows.push(cells);
    }
    Ok(rows)
}

fn parse_cell<T: std::str::FromStr>(cell: &str, what: &str) -> Result<T, CliError> {
    cell.parse::<T>()
        .map_err(|_| CliError::Config(format!("{what}: bad value '{cell}'")))
}
