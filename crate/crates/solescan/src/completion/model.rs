//! The completion network: per-point embedding, self-attention encoder,
//! attention pooling to a global latent, coarse generation with a scaffold
//! skip connection, and cross-attention refinement with a zero-initialized
//! displacement head.

use std::collections::BTreeMap;

use crate::autodiff::{Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::io::checkpoint::Checkpoint;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompletionConfig {
    pub n_in: usize,
    pub n_scaffold: usize,
    pub n_gen_coarse: usize,
    pub n_fine: usize,
    pub latent_dim: usize,
    pub n_heads: usize,
    pub n_encoder_blocks: usize,
    pub n_refine_blocks: usize,
    pub seed: u64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            n_in: 1024,
            n_scaffold: 128,
            n_gen_coarse: 128,
            n_fine: 2048,
            latent_dim: 128,
            n_heads: 4,
            n_encoder_blocks: 2,
            n_refine_blocks: 2,
            seed: 0,
        }
    }
}

impl CompletionConfig {
    /// Small configuration for tests and gradient checks.
    pub fn tiny() -> Self {
        CompletionConfig {
            n_in: 32,
            n_scaffold: 8,
            n_gen_coarse: 8,
            n_fine: 32,
            latent_dim: 16,
            n_heads: 4,
            n_encoder_blocks: 1,
            n_refine_blocks: 1,
            seed: 0,
        }
    }

    pub fn n_coarse(&self) -> usize {
        self.n_scaffold + self.n_gen_coarse
    }

    pub fn up_ratio(&self) -> usize {
        self.n_fine / self.n_coarse()
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = self.n_in > 0
            && self.n_scaffold > 0
            && self.n_gen_coarse > 0
            && self.n_fine > 0
            && self.latent_dim > 0
            && self.n_heads > 0
            && self.n_encoder_blocks > 0
            && self.n_refine_blocks > 0;
        if !dims_ok {
            return Err(Error::Config("completion dims must be positive".into()));
        }
        if self.n_scaffold > self.n_in {
            return Err(Error::Config(
                "scaffold cannot exceed the input point budget".into(),
            ));
        }
        if self.latent_dim % self.n_heads != 0 {
            return Err(Error::Config(
                "latent_dim must be divisible by n_heads".into(),
            ));
        }
        if self.n_fine % self.n_coarse() != 0 || self.up_ratio() < 1 {
            return Err(Error::Config(
                "n_fine must be a positive integer multiple of the coarse count".into(),
            ));
        }
        Ok(())
    }

    pub fn ffn_dim(&self) -> usize {
        2 * self.latent_dim
    }

    fn to_map(self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("n_in".into(), self.n_in.to_string());
        m.insert("n_scaffold".into(), self.n_scaffold.to_string());
        m.insert("n_gen_coarse".into(), self.n_gen_coarse.to_string());
        m.insert("n_fine".into(), self.n_fine.to_string());
        m.insert("latent_dim".into(), self.latent_dim.to_string());
        m.insert("n_heads".into(), self.n_heads.to_string());
        m.insert("n_encoder_blocks".into(), self.n_encoder_blocks.to_string());
        m.insert("n_refine_blocks".into(), self.n_refine_blocks.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m
    }

    fn from_map(m: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| -> Result<u64> {
            m.get(k)
                .ok_or_else(|| Error::Config(format!("checkpoint missing config key '{k}'")))?
                .parse()
                .map_err(|_| Error::Config(format!("bad config value for '{k}'")))
        };
        let cfg = CompletionConfig {
            n_in: get("n_in")? as usize,
            n_scaffold: get("n_scaffold")? as usize,
            n_gen_coarse: get("n_gen_coarse")? as usize,
            n_fine: get("n_fine")? as usize,
            latent_dim: get("latent_dim")? as usize,
            n_heads: get("n_heads")? as usize,
            n_encoder_blocks: get("n_encoder_blocks")? as usize,
            n_refine_blocks: get("n_refine_blocks")? as usize,
            seed: get("seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Named parameter tensors (f32 master copy) plus the architecture config.
#[derive(Clone, Debug)]
pub struct CompletionModel {
    pub config: CompletionConfig,
    /// Sorted by name.
    pub tensors: Vec<(String, Tensor<f32>)>,
    /// Names excluded from training (gradients are not produced).
    pub frozen: std::collections::BTreeSet<String>,
}

/// Shape of every parameter tensor, in name order.
fn tensor_shapes(cfg: &CompletionConfig) -> Vec<(String, usize, usize)> {
    let d = cfg.latent_dim;
    let f = cfg.ffn_dim();
    let mut shapes: Vec<(String, usize, usize)> = Vec::new();
    let mut push = |name: String, r: usize, c: usize| shapes.push((name, r, c));

    push("embed.w1".into(), 3, d);
    push("embed.b1".into(), 1, d);
    push("embed.w2".into(), d, d);
    push("embed.b2".into(), 1, d);
    for i in 0..cfg.n_encoder_blocks {
        for (suffix, r, c) in [
            ("ln1.gamma", 1, d),
            ("ln1.beta", 1, d),
            ("wq", d, d),
            ("wk", d, d),
            ("wv", d, d),
            ("wo", d, d),
            ("ln2.gamma", 1, d),
            ("ln2.beta", 1, d),
            ("ffn.w1", d, f),
            ("ffn.b1", 1, f),
            ("ffn.w2", f, d),
            ("ffn.b2", 1, d),
        ] {
            push(format!("enc{i}.{suffix}"), r, c);
        }
    }
    push("enc_out.gamma".into(), 1, d);
    push("enc_out.beta".into(), 1, d);
    push("pool.query".into(), 1, d);
    push("pool.w1".into(), d, d);
    push("pool.b1".into(), 1, d);
    push("pool.w2".into(), d, d);
    push("pool.b2".into(), 1, d);
    push("coarse.w1".into(), d, f);
    push("coarse.b1".into(), 1, f);
    push("coarse.w2".into(), f, 3 * cfg.n_gen_coarse);
    push("coarse.b2".into(), 1, 3 * cfg.n_gen_coarse);
    push("refine.point_embed.w".into(), 3, d);
    push("refine.point_embed.b".into(), 1, d);
    push("refine.copy_embed".into(), cfg.up_ratio(), d);
    push("refine.latent_proj.w".into(), d, d);
    push("refine.latent_proj.b".into(), 1, d);
    for i in 0..cfg.n_refine_blocks {
        for (suffix, r, c) in [
            ("ln_q.gamma", 1, d),
            ("ln_q.beta", 1, d),
            ("ln_kv.gamma", 1, d),
            ("ln_kv.beta", 1, d),
            ("wq", d, d),
            ("wk", d, d),
            ("wv", d, d),
            ("wo", d, d),
            ("ln2.gamma", 1, d),
            ("ln2.beta", 1, d),
            ("ffn.w1", d, f),
            ("ffn.b1", 1, f),
            ("ffn.w2", f, d),
            ("ffn.b2", 1, d),
        ] {
            push(format!("ref{i}.{suffix}"), r, c);
        }
    }
    push("head.ln.gamma".into(), 1, d);
    push("head.ln.beta".into(), 1, d);
    push("head.w1".into(), d, d);
    push("head.b1".into(), 1, d);
    push("head.w2".into(), d, 3);
    push("head.b2".into(), 1, 3);

    shapes.sort_by(|a, b| a.0.cmp(&b.0));
    shapes
}

impl CompletionModel {
    /// Random initialization; the displacement head's final layer starts
    /// at zero so the untrained network reproduces its coarse stage.
    pub fn init(config: &CompletionConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::seed_from_u64(config.seed ^ 0x6d6f_64656c);
        let mut tensors = Vec::new();
        for (name, r, c) in tensor_shapes(config) {
            let data: Vec<f32> = if name.ends_with(".beta")
                || name.ends_with(".b1")
                || name.ends_with(".b2")
                || name.ends_with(".b")
                || name == "head.w2"
            {
                vec![0.0; r * c]
            } else if name.ends_with(".gamma") {
                vec![1.0; r * c]
            } else {
                // Fan-in scaling keeps activations O(1); embeddings use a
                // fixed moderate spread.
                let std = if name == "refine.copy_embed" || name == "pool.query" {
                    0.5
                } else {
                    (2.0 / r as f64).sqrt()
                };
                (0..r * c).map(|_| (rng.gaussian() * std) as f32).collect()
            };
            tensors.push((name, Tensor::from_vec(r, c, data)));
        }
        Ok(CompletionModel {
            config: *config,
            tensors,
            frozen: Default::default(),
        })
    }

    pub fn tensor(&self, name: &str) -> &Tensor<f32> {
        let i = self
            .tensors
            .binary_search_by(|t| t.0.as_str().cmp(name))
            .unwrap_or_else(|_| panic!("unknown tensor '{name}'"));
        &self.tensors[i].1
    }

    pub fn tensor_mut(&mut self, name: &str) -> &mut Tensor<f32> {
        let i = self
            .tensors
            .binary_search_by(|t| t.0.as_str().cmp(name))
            .unwrap_or_else(|_| panic!("unknown tensor '{name}'"));
        &mut self.tensors[i].1
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn validate_finite(&self) -> Result<()> {
        for (name, t) in &self.tensors {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalError(Box::leak(
                    format!("model tensor {name}").into_boxed_str(),
                )));
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint {
            config: self.config.to_map(),
            tensors: Vec::new(),
        };
        for (name, t) in &self.tensors {
            ckpt.insert_tensor(name.clone(), t.rows, t.cols, t.data.clone());
        }
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = CompletionConfig::from_map(&ckpt.config)?;
        let mut tensors = Vec::new();
        for (name, r, c) in tensor_shapes(&config) {
            let (rows, cols, data) = ckpt
                .tensor(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint missing tensor '{name}'")))?;
            if rows != r || cols != c {
                return Err(Error::Config(format!(
                    "tensor '{name}' has shape {rows}x{cols}, expected {r}x{c}"
                )));
            }
            tensors.push((name, Tensor::from_vec(r, c, data.to_vec())));
        }
        let model = CompletionModel {
            config,
            tensors,
            frozen: Default::default(),
        };
        model.validate_finite()?;
        Ok(model)
    }
}

/// Tape-side handles for every parameter, registered in name order.
pub(crate) struct ModelVars {
    pub names: Vec<String>,
    pub vars: Vec<Var>,
}

impl ModelVars {
    pub(crate) fn get(&self, name: &str) -> Var {
        let i = self
            .names
            .binary_search_by(|n| n.as_str().cmp(name))
            .unwrap_or_else(|_| panic!("unknown tensor '{name}'"));
        self.vars[i]
    }
}

/// Register all model tensors on a tape (frozen ones as constants).
pub(crate) fn register_model<T: Scalar>(model: &CompletionModel, tape: &mut Tape<T>) -> ModelVars {
    let mut names = Vec::with_capacity(model.tensors.len());
    let mut vars = Vec::with_capacity(model.tensors.len());
    for (name, t) in &model.tensors {
        let tt = Tensor::from_vec(
            t.rows,
            t.cols,
            t.data.iter().map(|&v| T::from_f64(v as f64)).collect(),
        );
        let var = if model.frozen.contains(name) {
            tape.constant(tt)
        } else {
            tape.param(tt)
        };
        names.push(name.clone());
        vars.push(var);
    }
    ModelVars { names, vars }
}

/// The forward pass on an already-normalized input (rows are points).
/// Returns (coarse points, fine points) as tape variables.
pub(crate) fn forward_on_tape<T: Scalar>(
    model: &CompletionModel,
    vars: &ModelVars,
    tape: &mut Tape<T>,
    input: &Tensor<T>,
    scaffold_idx: &[usize],
) -> Result<(Var, Var)> {
    let cfg = &model.config;
    let d = cfg.latent_dim;
    let heads = cfg.n_heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    if input.shape() != (cfg.n_in, 3) {
        return Err(Error::ShapeError(format!(
            "input is {}x{}, expected {}x3",
            input.rows, input.cols, cfg.n_in
        )));
    }

    let x_in = tape.constant(input.clone());

    // Per-point embedding.
    let h = tape.matmul(x_in, vars.get("embed.w1"))?;
    let h = tape.add_row(h, vars.get("embed.b1"))?;
    let h = tape.gelu(h);
    let h = tape.matmul(h, vars.get("embed.w2"))?;
    let mut tokens = tape.add_row(h, vars.get("embed.b2"))?;

    // Pre-LN self-attention encoder.
    for i in 0..cfg.n_encoder_blocks {
        let p = |s: &str| format!("enc{i}.{s}");
        let normed = tape.layer_norm(tokens, vars.get(&p("ln1.gamma")), vars.get(&p("ln1.beta")))?;
        let q = tape.matmul(normed, vars.get(&p("wq")))?;
        let k = tape.matmul(normed, vars.get(&p("wk")))?;
        let v = tape.matmul(normed, vars.get(&p("wv")))?;
        let mut head_outs: Vec<Var> = Vec::with_capacity(heads);
        for hix in 0..heads {
            let qs = tape.slice_cols(q, hix * dh, dh)?;
            let ks = tape.slice_cols(k, hix * dh, dh)?;
            let vs = tape.slice_cols(v, hix * dh, dh)?;
            let probs = tape.attn_softmax(qs, ks, scale)?;
            head_outs.push(tape.matmul(probs, vs)?);
        }
        // Concatenate heads along columns via column re-assembly: sum of
        // per-head matmuls with the corresponding block of wo.
        let mut attn_out: Option<Var> = None;
        for (hix, ho) in head_outs.iter().enumerate() {
            let wo_rows = tape.slice_rows(vars.get(&p("wo")), hix * dh, dh)?;
            let partial = tape.matmul(*ho, wo_rows)?;
            attn_out = Some(match attn_out {
                Some(acc) => tape.add(acc, partial)?,
                None => partial,
            });
        }
        tokens = tape.add(tokens, attn_out.expect("at least one head"))?;

        let normed = tape.layer_norm(tokens, vars.get(&p("ln2.gamma")), vars.get(&p("ln2.beta")))?;
        let f1 = tape.matmul(normed, vars.get(&p("ffn.w1")))?;
        let f1 = tape.add_row(f1, vars.get(&p("ffn.b1")))?;
        let f1 = tape.gelu(f1);
        let f2 = tape.matmul(f1, vars.get(&p("ffn.w2")))?;
        let f2 = tape.add_row(f2, vars.get(&p("ffn.b2")))?;
        tokens = tape.add(tokens, f2)?;
    }
    let tokens = tape.layer_norm(tokens, vars.get("enc_out.gamma"), vars.get("enc_out.beta"))?;

    // Attention pooling to the global latent.
    let pool_probs = tape.attn_softmax(vars.get("pool.query"), tokens, scale)?;
    let pooled = tape.matmul(pool_probs, tokens)?; // [1, d]
    let g = tape.matmul(pooled, vars.get("pool.w1"))?;
    let g = tape.add_row(g, vars.get("pool.b1"))?;
    let g = tape.gelu(g);
    let g = tape.matmul(g, vars.get("pool.w2"))?;
    let latent = tape.add_row(g, vars.get("pool.b2"))?; // [1, d]

    // Coarse generator from the latent.
    let c = tape.matmul(latent, vars.get("coarse.w1"))?;
    let c = tape.add_row(c, vars.get("coarse.b1"))?;
    let c = tape.gelu(c);
    let c = tape.matmul(c, vars.get("coarse.w2"))?;
    let c = tape.add_row(c, vars.get("coarse.b2"))?;
    let generated = tape.reshape(c, cfg.n_gen_coarse, 3)?;

    // Scaffold skip connection: selected input points pass through
    // verbatim.
    let scaffold_data: Vec<T> = scaffold_idx
        .iter()
        .flat_map(|&i| input.row(i).to_vec())
        .collect();
    let scaffold = tape.constant(Tensor::from_vec(cfg.n_scaffold, 3, scaffold_data));
    let coarse = tape.concat_rows(generated, scaffold)?;

    // Refinement: expand each coarse point `up_ratio` times and offset by
    // cross-attention against the encoder tokens, conditioned on the
    // global latent.
    let up = cfg.up_ratio();
    let parents = tape.repeat_rows(coarse, up); // [n_fine, 3]
    let pe = tape.matmul(parents, vars.get("refine.point_embed.w"))?;
    let pe = tape.add_row(pe, vars.get("refine.point_embed.b"))?;
    let copies = tape.tile_rows(vars.get("refine.copy_embed"), cfg.n_coarse());
    let lat_proj = tape.matmul(latent, vars.get("refine.latent_proj.w"))?;
    let lat_proj = tape.add_row(lat_proj, vars.get("refine.latent_proj.b"))?;
    let mut fine_tokens = tape.add(pe, copies)?;
    fine_tokens = tape.add_row(fine_tokens, lat_proj)?;

    for i in 0..cfg.n_refine_blocks {
        let p = |s: &str| format!("ref{i}.{s}");
        let qn = tape.layer_norm(
            fine_tokens,
            vars.get(&p("ln_q.gamma")),
            vars.get(&p("ln_q.beta")),
        )?;
        let kvn = tape.layer_norm(
            tokens,
            vars.get(&p("ln_kv.gamma")),
            vars.get(&p("ln_kv.beta")),
        )?;
        let q = tape.matmul(qn, vars.get(&p("wq")))?;
        let k = tape.matmul(kvn, vars.get(&p("wk")))?;
        let v = tape.matmul(kvn, vars.get(&p("wv")))?;
        let mut attn_out: Option<Var> = None;
        for hix in 0..heads {
            let qs = tape.slice_cols(q, hix * dh, dh)?;
            let ks = tape.slice_cols(k, hix * dh, dh)?;
            let vs = tape.slice_cols(v, hix * dh, dh)?;
            let probs = tape.attn_softmax(qs, ks, scale)?;
            let ho = tape.matmul(probs, vs)?;
            let wo_rows = tape.slice_rows(vars.get(&p("wo")), hix * dh, dh)?;
            let partial = tape.matmul(ho, wo_rows)?;
            attn_out = Some(match attn_out {
                Some(acc) => tape.add(acc, partial)?,
                None => partial,
            });
        }
        fine_tokens = tape.add(fine_tokens, attn_out.expect("heads"))?;

        let normed = tape.layer_norm(
            fine_tokens,
            vars.get(&p("ln2.gamma")),
            vars.get(&p("ln2.beta")),
        )?;
        let f1 = tape.matmul(normed, vars.get(&p("ffn.w1")))?;
        let f1 = tape.add_row(f1, vars.get(&p("ffn.b1")))?;
        let f1 = tape.gelu(f1);
        let f2 = tape.matmul(f1, vars.get(&p("ffn.w2")))?;
        let f2 = tape.add_row(f2, vars.get(&p("ffn.b2")))?;
        fine_tokens = tape.add(fine_tokens, f2)?;
    }

    // Displacement head, zero-initialized final layer.
    let hn = tape.layer_norm(fine_tokens, vars.get("head.ln.gamma"), vars.get("head.ln.beta"))?;
    let h1 = tape.matmul(hn, vars.get("head.w1"))?;
    let h1 = tape.add_row(h1, vars.get("head.b1"))?;
    let h1 = tape.gelu(h1);
    let disp = tape.matmul(h1, vars.get("head.w2"))?;
    let disp = tape.add_row(disp, vars.get("head.b2"))?;
    let fine = tape.add(parents, disp)?;

    Ok((coarse, fine))
}
