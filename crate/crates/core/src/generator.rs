//! A frozen, seeded, differentiable toy image generator.
//!
//! A fixed random MLP maps `concat(z, class_embedding[y])` to scene
//! parameters (blob center, radius, foreground/background colors); a soft
//! rasterizer turns the scene into an RGB image. Every pixel is
//! differentiable w.r.t. the latent code, and the weights are a pure
//! function of `(seed, latent_dim, class_count, embed_dim)` — they are
//! never trained.

use std::io::{self, Write};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::rng::{domain, RandomStream};

/// Hidden width of the decoder MLP.
pub const HIDDEN_WIDTH: usize = 32;
/// Raw decoder outputs: cx, cy, radius, fg rgb, bg rgb, one spare channel.
pub const RAW_OUTPUTS: usize = 10;
pub const DEFAULT_EMBED_DIM: usize = 8;
pub const DEFAULT_SIDE: usize = 32;
/// Mask transition temperature: ~2 pixels wide at side 32.
pub const DEFAULT_TEMP: f64 = 0.02;

// ── Weights ─────────────────────────────────────────────────────────────

/// Frozen weights of the decoder MLP plus the class embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorWeights {
    w1: Tensor, // [HIDDEN, d + e]
    b1: Tensor, // [HIDDEN]
    w2: Tensor, // [RAW_OUTPUTS, HIDDEN]
    b2: Tensor, // [RAW_OUTPUTS]
    class_embed: Tensor, // [C, e]
    latent_dim: usize,
    class_count: usize,
    embed_dim: usize,
    seed: u64,
}

/// Deterministic weights from the documented stream: standard normals drawn
/// in the order w1, b1, w2, b2, class_embed (row-major), with per-block
/// scale factors chosen so raw decoder outputs have O(1) spread.
pub fn init_generator(seed: u64, latent_dim: usize, class_count: usize) -> GeneratorWeights {
    init_generator_with(seed, latent_dim, class_count, DEFAULT_EMBED_DIM)
}

pub fn init_generator_with(
    seed: u64,
    latent_dim: usize,
    class_count: usize,
    embed_dim: usize,
) -> GeneratorWeights {
    assert!(latent_dim >= 2, "latent_dim must be at least 2");
    assert!(class_count >= 1, "class_count must be at least 1");
    assert!(embed_dim >= 1, "embed_dim must be at least 1");
    let mut stream = RandomStream::new(seed, domain::GENERATOR);
    let input_dim = latent_dim + embed_dim;
    let mut draw = |n: usize, scale: f64| -> Vec<f64> {
        (0..n).map(|_| stream.normal() * scale).collect()
    };
    let w1 = Tensor::new(
        vec![HIDDEN_WIDTH, input_dim],
        draw(HIDDEN_WIDTH * input_dim, 1.0 / (input_dim as f64).sqrt()),
    )
    .expect("finite init");
    let b1 = Tensor::new(vec![HIDDEN_WIDTH], draw(HIDDEN_WIDTH, 0.2)).expect("finite init");
    let w2 = Tensor::new(
        vec![RAW_OUTPUTS, HIDDEN_WIDTH],
        draw(RAW_OUTPUTS * HIDDEN_WIDTH, 2.0 / (HIDDEN_WIDTH as f64).sqrt()),
    )
    .expect("finite init");
    let b2 = Tensor::new(vec![RAW_OUTPUTS], draw(RAW_OUTPUTS, 0.5)).expect("finite init");
    let class_embed = Tensor::new(
        vec![class_count, embed_dim],
        draw(class_count * embed_dim, 1.0),
    )
    .expect("finite init");
    GeneratorWeights {
        w1,
        b1,
        w2,
        b2,
        class_embed,
        latent_dim,
        class_count,
        embed_dim,
        seed,
    }
}

impl GeneratorWeights {
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn w1(&self) -> &Tensor {
        &self.w1
    }

    pub fn b1(&self) -> &Tensor {
        &self.b1
    }

    pub fn w2(&self) -> &Tensor {
        &self.w2
    }

    pub fn b2(&self) -> &Tensor {
        &self.b2
    }

    pub fn class_embed(&self) -> &Tensor {
        &self.class_embed
    }

    /// Canonical text rendering of every weight at 17 significant digits.
    /// Used to checksum the weights and to assert frozen-ness.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "generator seed={} d={} C={} e={}\n",
            self.seed, self.latent_dim, self.class_count, self.embed_dim
        ));
        for (name, t) in [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("class_embed", &self.class_embed),
        ] {
            out.push_str(name);
            for x in t.data() {
                out.push_str(&format!(" {x:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

// ── Scene parameters ────────────────────────────────────────────────────

/// Interpretable render parameters, all squashed into their legal ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    /// Blob center in fractional image coordinates, each in [0, 1].
    pub center_x: f64,
    pub center_y: f64,
    /// Blob radius as a fraction of the image side, in [0.05, 0.45].
    pub radius: f64,
    pub fg_rgb: [f64; 3],
    pub bg_rgb: [f64; 3],
}

/// Tape nodes for a decoded scene: scalars `[1]` and color vectors `[3]`.
#[derive(Debug, Clone, Copy)]
pub struct SceneNodes {
    pub center_x: NodeId,
    pub center_y: NodeId,
    pub radius: NodeId,
    pub fg: NodeId,
    pub bg: NodeId,
}

/// Tape nodes for a rendered scene: the image `[s, s, 3]` and the soft
/// foreground mask `[s, s]`.
#[derive(Debug, Clone, Copy)]
pub struct Rendered {
    pub image: NodeId,
    pub mask: NodeId,
}

// ── Image container ─────────────────────────────────────────────────────

/// An `[side, side, 3]` image with every channel value in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pixels: Tensor,
}

impl ImageTensor {
    pub fn new(pixels: Tensor) -> Result<Self> {
        let shape = pixels.shape();
        if shape.len() != 3 || shape[0] != shape[1] || shape[2] != 3 {
            return Err(Error::InvalidShape {
                op: "image",
                shape: shape.to_vec(),
                reason: "expected [side, side, 3]".into(),
            });
        }
        // the soft blend can overshoot [0, 1] by an ulp; clamp inside the
        // tolerance, reject anything further out
        if !pixels
            .data()
            .iter()
            .all(|&x| (-1e-9..=1.0 + 1e-9).contains(&x))
        {
            return Err(Error::Numeric("image channel outside [0, 1]".into()));
        }
        let mut pixels = pixels;
        for x in pixels.data_mut() {
            *x = x.clamp(0.0, 1.0);
        }
        Ok(ImageTensor { pixels })
    }

    pub fn side(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    /// Channel value at (row, col, channel).
    pub fn at(&self, row: usize, col: usize, ch: usize) -> f64 {
        let s = self.side();
        self.pixels.data()[(row * s + col) * 3 + ch]
    }

    /// Binary PPM (P6, 8-bit): header `P6\n{W} {H}\n255\n` followed by RGB
    /// bytes row-major, each `round(255 * value)`.
    pub fn write_ppm<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let s = self.side();
        write!(w, "P6\n{s} {s}\n255\n")?;
        let bytes: Vec<u8> = self
            .pixels
            .data()
            .iter()
            .map(|&x| (255.0 * x).round().clamp(0.0, 255.0) as u8)
            .collect();
        w.write_all(&bytes)
    }
}

// ── Generator ───────────────────────────────────────────────────────────

/// The frozen generator together with its render settings.
#[derive(Debug, Clone)]
pub struct Generator {
    weights: GeneratorWeights,
    side: usize,
    temp: f64,
}

impl Generator {
    pub fn new(weights: GeneratorWeights, side: usize, temp: f64) -> Result<Self> {
        if side < 8 {
            return Err(Error::Config(format!("image side {side} < 8")));
        }
        if temp <= 0.0 {
            return Err(Error::Config(format!("render temperature {temp} <= 0")));
        }
        Ok(Generator {
            weights,
            side,
            temp,
        })
    }

    pub fn with_defaults(weights: GeneratorWeights) -> Self {
        Generator::new(weights, DEFAULT_SIDE, DEFAULT_TEMP).expect("default settings are valid")
    }

    pub fn weights(&self) -> &GeneratorWeights {
        &self.weights
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn temp(&self) -> f64 {
        self.temp
    }

    /// Put the frozen weights and the constant pixel grids on a tape once;
    /// every sample on that tape reuses the staged nodes.
    pub fn stage(&self, tape: &mut Tape) -> StagedGenerator {
        StagedGenerator {
            raster: StagedRaster::stage(tape, self.side, self.temp),
            latent_dim: self.weights.latent_dim,
            class_count: self.weights.class_count,
            embed_dim: self.weights.embed_dim,
            w1: tape.leaf(self.weights.w1.clone()),
            b1: tape.leaf(self.weights.b1.clone()),
            w2: tape.leaf(self.weights.w2.clone()),
            b2: tape.leaf(self.weights.b2.clone()),
            embed_flat: tape.leaf(
                Tensor::vector(self.weights.class_embed.data()).expect("valid embed table"),
            ),
        }
    }

    /// Decode scene parameters for a latent code, off-tape.
    pub fn decode(&self, z: &Tensor, y: usize) -> Result<SceneParams> {
        let mut tape = Tape::new();
        let staged = self.stage(&mut tape);
        let zn = tape.leaf(z.clone());
        let scene = staged.decode(&mut tape, zn, y)?;
        let color = |id: NodeId| -> [f64; 3] {
            let d = tape.value(id).data();
            [d[0], d[1], d[2]]
        };
        Ok(SceneParams {
            center_x: tape.value(scene.center_x).data()[0],
            center_y: tape.value(scene.center_y).data()[0],
            radius: tape.value(scene.radius).data()[0],
            fg_rgb: color(scene.fg),
            bg_rgb: color(scene.bg),
        })
    }

    /// Generate an image and its soft mask for a latent code, off-tape.
    pub fn generate(&self, z: &Tensor, y: usize) -> Result<(ImageTensor, Tensor)> {
        let mut tape = Tape::new();
        let staged = self.stage(&mut tape);
        let zn = tape.leaf(z.clone());
        let rendered = staged.generate(&mut tape, zn, y)?;
        Ok((
            ImageTensor::new(tape.value(rendered.image).clone())?,
            tape.value(rendered.mask).clone(),
        ))
    }
}

/// The soft rasterizer's constant pixel grids, staged onto one tape.
#[derive(Debug, Clone, Copy)]
pub struct StagedRaster {
    side: usize,
    inv_temp: f64,
    u_grid: NodeId,
    v_grid: NodeId,
    ones: NodeId,
}

impl StagedRaster {
    pub fn stage(tape: &mut Tape, side: usize, temp: f64) -> Self {
        let mut u = Vec::with_capacity(side * side);
        let mut v = Vec::with_capacity(side * side);
        for row in 0..side {
            for col in 0..side {
                u.push((col as f64 + 0.5) / side as f64);
                v.push((row as f64 + 0.5) / side as f64);
            }
        }
        StagedRaster {
            side,
            inv_temp: 1.0 / temp,
            u_grid: tape.leaf(Tensor::vector(&u).expect("valid grid")),
            v_grid: tape.leaf(Tensor::vector(&v).expect("valid grid")),
            ones: tape.leaf(Tensor::filled(vec![side * side], 1.0).expect("valid grid")),
        }
    }

    /// Soft rasterization: per pixel at normalized coords (u, v),
    /// `m = sigmoid((radius - dist((u,v), center)) / temp)` and
    /// `pixel = m * fg + (1 - m) * bg`.
    pub fn render(&self, tape: &mut Tape, scene: &SceneNodes) -> Result<Rendered> {
        let s = self.side;
        let n = s * s;
        let dx = tape.sub(self.u_grid, scene.center_x)?;
        let dy = tape.sub(self.v_grid, scene.center_y)?;
        let dx2 = tape.square(dx)?;
        let dy2 = tape.square(dy)?;
        let d2 = tape.add(dx2, dy2)?;
        let dist = tape.sqrt(d2)?;
        let band = tape.sub(scene.radius, dist)?;
        let inv_temp = tape.scalar(self.inv_temp)?;
        let arg = tape.mul(band, inv_temp)?;
        let mask = tape.sigmoid(arg)?;

        let inv_mask = tape.sub(self.ones, mask)?;
        let mask_col = tape.reshape(mask, vec![n, 1])?;
        let inv_col = tape.reshape(inv_mask, vec![n, 1])?;
        let fg_row = tape.reshape(scene.fg, vec![1, 3])?;
        let bg_row = tape.reshape(scene.bg, vec![1, 3])?;
        let fg_part = tape.matmul(mask_col, fg_row)?;
        let bg_part = tape.matmul(inv_col, bg_row)?;
        let flat = tape.add(fg_part, bg_part)?;
        let image = tape.reshape(flat, vec![s, s, 3])?;
        let mask = tape.reshape(mask, vec![s, s])?;
        Ok(Rendered { image, mask })
    }
}

/// Generator weights staged onto one tape.
#[derive(Debug, Clone, Copy)]
pub struct StagedGenerator {
    raster: StagedRaster,
    latent_dim: usize,
    class_count: usize,
    embed_dim: usize,
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
    embed_flat: NodeId,
}

impl StagedGenerator {
    /// MLP decode: relu hidden layer, then squashing — sigmoid for
    /// coordinates and colors, `0.05 + 0.40 * sigmoid` for the radius.
    pub fn decode(&self, tape: &mut Tape, z: NodeId, y: usize) -> Result<SceneNodes> {
        if y >= self.class_count {
            return Err(Error::IndexOutOfRange {
                what: "class",
                index: y,
                len: self.class_count,
            });
        }
        let zs = tape.value(z).shape().to_vec();
        if zs != [self.latent_dim] {
            return Err(Error::ShapeMismatch {
                op: "decode latent",
                lhs: zs,
                rhs: vec![self.latent_dim],
            });
        }
        let embed = tape.slice(self.embed_flat, y * self.embed_dim, self.embed_dim)?;
        let x = tape.concat(&[z, embed])?;
        let x = tape.reshape(x, vec![self.latent_dim + self.embed_dim, 1])?;
        let h = tape.matmul(self.w1, x)?;
        let h = tape.reshape(h, vec![HIDDEN_WIDTH])?;
        let h = tape.add(h, self.b1)?;
        let h = tape.relu(h)?;
        let h = tape.reshape(h, vec![HIDDEN_WIDTH, 1])?;
        let raw = tape.matmul(self.w2, h)?;
        let raw = tape.reshape(raw, vec![RAW_OUTPUTS])?;
        let raw = tape.add(raw, self.b2)?;

        let cx_raw = tape.slice(raw, 0, 1)?;
        let cy_raw = tape.slice(raw, 1, 1)?;
        let r_raw = tape.slice(raw, 2, 1)?;
        let fg_raw = tape.slice(raw, 3, 3)?;
        let bg_raw = tape.slice(raw, 6, 3)?;

        let center_x = tape.sigmoid(cx_raw)?;
        let center_y = tape.sigmoid(cy_raw)?;
        let r_sig = tape.sigmoid(r_raw)?;
        let r_span = tape.scalar(0.40)?;
        let r_floor = tape.scalar(0.05)?;
        let r_scaled = tape.mul(r_sig, r_span)?;
        let radius = tape.add(r_scaled, r_floor)?;
        let fg = tape.sigmoid(fg_raw)?;
        let bg = tape.sigmoid(bg_raw)?;
        Ok(SceneNodes {
            center_x,
            center_y,
            radius,
            fg,
            bg,
        })
    }

    pub fn render(&self, tape: &mut Tape, scene: &SceneNodes) -> Result<Rendered> {
        self.raster.render(tape, scene)
    }

    pub fn generate(&self, tape: &mut Tape, z: NodeId, y: usize) -> Result<Rendered> {
        let scene = self.decode(tape, z, y)?;
        self.render(tape, &scene)
    }
}

/// Render a hand-built scene on a scratch tape (test and inspection aid).
pub fn render_scene(scene: &SceneParams, side: usize, temp: f64) -> Result<(ImageTensor, Tensor)> {
    if side < 8 {
        return Err(Error::Config(format!("image side {side} < 8")));
    }
    if temp <= 0.0 {
        return Err(Error::Config(format!("render temperature {temp} <= 0")));
    }
    let mut tape = Tape::new();
    let raster = StagedRaster::stage(&mut tape, side, temp);
    let nodes = SceneNodes {
        center_x: tape.scalar(scene.center_x)?,
        center_y: tape.scalar(scene.center_y)?,
        radius: tape.scalar(scene.radius)?,
        fg: tape.leaf(Tensor::vector(&scene.fg_rgb)?),
        bg: tape.leaf(Tensor::vector(&scene.bg_rgb)?),
    };
    let rendered = raster.render(&mut tape, &nodes)?;
    Ok((
        ImageTensor::new(tape.value(rendered.image).clone())?,
        tape.value(rendered.mask).clone(),
    ))
}
