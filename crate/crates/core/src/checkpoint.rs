//! Plain-text checkpoint format.
//!
//! A checkpoint is one self-describing document: a magic line, `key = value`
//! scalars for the training configuration and step counter, then one
//! `tensor <name> <dims> = <floats>` line per parameter. Floats are written
//! with 17 significant digits, so save/load round-trips every `f64`
//! bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::directions::{DirectionBank, LinearDirection, Model, TrainConfig};
use crate::error::{Error, Result};
use crate::scorers::ScorerKind;

const MAGIC: &str = "latentdirs checkpoint v1";

/// A trained model plus the exact configuration that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub config: TrainConfig,
    /// Number of optimizer steps the model was trained for.
    pub step: usize,
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_tensor(out: &mut String, name: &str, t: &Tensor) {
    let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    write!(out, "tensor {name} {} =", dims.join("x")).unwrap();
    for x in t.data() {
        write!(out, " {}", fmt_f64(*x)).unwrap();
    }
    out.push('\n');
}

/// Serialize a checkpoint to its text form.
pub fn encode(ck: &Checkpoint) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let kind = match &ck.model {
        Model::Bank(_) => "bank",
        Model::Linear(_) => "linear",
    };
    let c = &ck.config;
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("kind", kind.into());
    kv("seed", c.seed.to_string());
    kv("steps", c.steps.to_string());
    kv("batch_size", c.batch_size.to_string());
    kv("lr", fmt_f64(c.lr));
    kv("alpha_lo", fmt_f64(c.alpha_lo));
    kv("alpha_hi", fmt_f64(c.alpha_hi));
    kv("trunc", fmt_f64(c.trunc));
    kv("lambda_div", fmt_f64(c.lambda_div));
    kv("k", c.k.to_string());
    kv("hidden", c.hidden.to_string());
    kv("latent_dim", ck.model.latent_dim().to_string());
    kv("scorer", c.scorer.to_string());
    kv("detach_base_score", c.detach_base_score.to_string());
    kv("abs_cosine", c.abs_cosine.to_string());
    kv("step", ck.step.to_string());

    match &ck.model {
        Model::Bank(bank) => {
            for i in 0..bank.k() {
                let (w1, b1, w2, b2) = bank.dir_tensors(i);
                push_tensor(&mut out, &format!("dir{i}.w1"), w1);
                push_tensor(&mut out, &format!("dir{i}.b1"), b1);
                push_tensor(&mut out, &format!("dir{i}.w2"), w2);
                push_tensor(&mut out, &format!("dir{i}.b2"), b2);
            }
        }
        Model::Linear(lin) => {
            push_tensor(&mut out, "theta", lin.theta());
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Parse a checkpoint document.
pub fn decode(text: &str) -> Result<Checkpoint> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing magic line"));
    }

    let mut scalars: BTreeMap<&str, &str> = BTreeMap::new();
    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("tensor ") {
            let (header, values) = rest
                .split_once(" =")
                .ok_or_else(|| bad(format!("line {}: malformed tensor line", lineno + 2)))?;
            let mut parts = header.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| bad(format!("line {}: tensor without a name", lineno + 2)))?;
            let dims_text = parts
                .next()
                .ok_or_else(|| bad(format!("line {}: tensor without dims", lineno + 2)))?;
            let shape: Vec<usize> = dims_text
                .split('x')
                .map(|d| {
                    d.parse::<usize>()
                        .map_err(|_| bad(format!("line {}: bad dim '{d}'", lineno + 2)))
                })
                .collect::<Result<_>>()?;
            let data: Vec<f64> = values
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| bad(format!("line {}: bad float '{v}'", lineno + 2)))
                })
                .collect::<Result<_>>()?;
            let tensor = Tensor::new(shape, data)
                .map_err(|e| bad(format!("tensor {name}: {e}")))?;
            if tensors.insert(name.to_string(), tensor).is_some() {
                return Err(bad(format!("duplicate tensor '{name}'")));
            }
        } else if let Some((key, value)) = line.split_once(" = ") {
            scalars.insert(key.trim(), value.trim());
        } else {
            return Err(bad(format!("line {}: unrecognized line", lineno + 2)));
        }
    }

    let get = |key: &str| -> Result<&str> {
        scalars
            .get(key)
            .copied()
            .ok_or_else(|| bad(format!("missing field '{key}'")))
    };
    let parse_u64 = |key: &str| -> Result<u64> {
        get(key)?
            .parse()
            .map_err(|_| bad(format!("field '{key}' is not an integer")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| bad(format!("field '{key}' is not an integer")))
    };
    let parse_f64 = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|_| bad(format!("field '{key}' is not a float")))
    };
    let parse_bool = |key: &str| -> Result<bool> {
        match get(key)? {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(bad(format!("field '{key}' has non-boolean value '{other}'"))),
        }
    };

    let config = TrainConfig {
        seed: parse_u64("seed")?,
        steps: parse_usize("steps")?,
        batch_size: parse_usize("batch_size")?,
        lr: parse_f64("lr")?,
        alpha_lo: parse_f64("alpha_lo")?,
        alpha_hi: parse_f64("alpha_hi")?,
        trunc: parse_f64("trunc")?,
        lambda_div: parse_f64("lambda_div")?,
        k: parse_usize("k")?,
        hidden: parse_usize("hidden")?,
        scorer: get("scorer")?.parse::<ScorerKind>()?,
        detach_base_score: parse_bool("detach_base_score")?,
        abs_cosine: parse_bool("abs_cosine")?,
    };
    let latent_dim = parse_usize("latent_dim")?;
    let step = parse_usize("step")?;

    let mut take = |name: &str| -> Result<Tensor> {
        tensors
            .remove(name)
            .ok_or_else(|| bad(format!("missing tensor '{name}'")))
    };

    let model = match get("kind")? {
        "bank" => {
            let mut dirs = Vec::with_capacity(config.k);
            for i in 0..config.k {
                dirs.push((
                    take(&format!("dir{i}.w1"))?,
                    take(&format!("dir{i}.b1"))?,
                    take(&format!("dir{i}.w2"))?,
                    take(&format!("dir{i}.b2"))?,
                ));
            }
            Model::Bank(DirectionBank::from_tensors(
                latent_dim,
                config.hidden,
                config.lambda_div,
                dirs,
            )?)
        }
        "linear" => {
            let theta = take("theta")?;
            if theta.numel() != latent_dim {
                return Err(bad(format!(
                    "theta has {} entries, latent_dim says {latent_dim}",
                    theta.numel()
                )));
            }
            Model::Linear(LinearDirection::from_tensor(theta)?)
        }
        other => return Err(bad(format!("unknown kind '{other}'"))),
    };
    if !tensors.is_empty() {
        let extra: Vec<String> = tensors.keys().cloned().collect();
        return Err(bad(format!("unexpected tensors: {}", extra.join(", "))));
    }

    Ok(Checkpoint {
        model,
        config,
        step,
    })
}

pub fn save_file(ck: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode(ck))
        .map_err(|e| bad(format!("writing {}: {e}", path.display())))
}

pub fn load_file(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("reading {}: {e}", path.display())))?;
    decode(&text)
}
