//! Small dense networks with hand-written reverse-mode gradients, Adam, and
//! a flat binary checkpoint format.
//!
//! Parameters live in a [`ParamSet`]: an ordered list of matrices. Biases
//! are stored as `1 x n` rows. Batches are row-major, one sample per row.
//!
//! Checkpoint layout (little endian):
//!
//! ```text
//! magic     8 bytes  "BCPGNET1"
//! count     u64      number of tensors
//! shapes    count x (u64 rows, u64 cols)
//! data      every tensor's values, row-major f64, in order
//! ```
//!
//! A JSON sidecar next to the binary (same stem, `.json`) records the
//! layer specs needed to rebuild the network.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BCPGNET1";

/// Half-width of the uniform init range for output layers.
pub const FINAL_LAYER_INIT: f64 = 3e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
            Activation::Linear => {}
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        LayerSpec {
            fan_in,
            fan_out,
            activation,
        }
    }
}

/// Ordered parameter tensors of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub tensors: Vec<Array2<f64>>,
}

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> ParamSet {
        ParamSet {
            tensors: other
                .tensors
                .iter()
                .map(|t| Array2::zeros(t.raw_dim()))
                .collect(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(|t| t.dim()).collect()
    }

    pub fn check_same_shape(&self, other: &ParamSet) -> Result<()> {
        if self.shapes() != other.shapes() {
            return Err(Error::Shape(format!(
                "parameter shapes differ: {:?} vs {:?}",
                self.shapes(),
                other.shapes()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Every value, tensor by tensor, row-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.iter().copied())
            .collect()
    }

    /// `self <- tau * online + (1 - tau) * self`, elementwise.
    pub fn soft_update(&mut self, online: &ParamSet, tau: f64) -> Result<()> {
        self.check_same_shape(online)?;
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidParam(format!(
                "soft-update rate must lie in [0, 1], got {tau}"
            )));
        }
        for (t, o) in self.tensors.iter_mut().zip(&online.tensors) {
            Zip::from(t)
                .and(o)
                .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
        Ok(())
    }
}

fn uniform_matrix(rows: usize, cols: usize, half_width: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-half_width..=half_width))
}

fn check_input(x: &ArrayView2<f64>, width: usize, what: &str) -> Result<()> {
    if x.ncols() != width {
        return Err(Error::Shape(format!(
            "{what} has {} columns, expected {width}",
            x.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "{what} contains non-finite values"
        )));
    }
    Ok(())
}

/// `x W^T + b`.
fn affine(x: &ArrayView2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    x.dot(&w.t()) + b
}

/// Sequential dense network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    specs: Vec<LayerSpec>,
    pub params: ParamSet,
}

/// Activations of every layer from one forward pass, input first.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub activations: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations
            .last()
            .expect("cache holds the input at least")
    }
}

impl Mlp {
    /// Output layer uniform in `±3e-3`, every other layer in `±1/sqrt(fan_in)`.
    pub fn new(specs: Vec<LayerSpec>, rng: &mut impl Rng) -> Result<Self> {
        validate_specs(&specs)?;
        let last = specs.len() - 1;
        let mut tensors = Vec::with_capacity(2 * specs.len());
        for (i, s) in specs.iter().enumerate() {
            let half = if i == last {
                FINAL_LAYER_INIT
            } else {
                1.0 / (s.fan_in as f64).sqrt()
            };
            tensors.push(uniform_matrix(s.fan_out, s.fan_in, half, rng));
            tensors.push(uniform_matrix(1, s.fan_out, half, rng));
        }
        Ok(Mlp {
            specs,
            params: ParamSet { tensors },
        })
    }

    /// 12 -> 400 relu -> 300 relu -> 2 sigmoid.
    pub fn actor(
        state_dim: usize,
        hidden: (usize, usize),
        action_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Mlp::new(
            vec![
                LayerSpec::new(state_dim, hidden.0, Activation::Relu),
                LayerSpec::new(hidden.0, hidden.1, Activation::Relu),
                LayerSpec::new(hidden.1, action_dim, Activation::Sigmoid),
            ],
            rng,
        )
    }

    pub fn from_parts(specs: Vec<LayerSpec>, params: ParamSet) -> Result<Self> {
        validate_specs(&specs)?;
        let expected: Vec<(usize, usize)> = specs
            .iter()
            .flat_map(|s| [(s.fan_out, s.fan_in), (1, s.fan_out)])
            .collect();
        if params.shapes() != expected {
            return Err(Error::Shape(format!(
                "parameters {:?} do not match layer specs {:?}",
                params.shapes(),
                expected
            )));
        }
        Ok(Mlp { specs, params })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].fan_out
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<MlpCache> {
        check_input(&x, self.input_dim(), "network input")?;
        let mut activations = Vec::with_capacity(self.specs.len() + 1);
        activations.push(x.to_owned());
        for (i, s) in self.specs.iter().enumerate() {
            let prev = activations.last().expect("non-empty").view();
            let mut z = affine(
                &prev,
                &self.params.tensors[2 * i],
                &self.params.tensors[2 * i + 1],
            );
            s.activation.apply(&mut z);
            activations.push(z);
        }
        Ok(MlpCache { activations })
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self
            .forward_cached(x)?
            .activations
            .pop()
            .expect("non-empty"))
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view =
            ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of `sum(grad_out * output)` with respect to every
    /// parameter and to the input.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: ArrayView2<f64>,
    ) -> Result<(ParamSet, Array2<f64>)> {
        let out = cache.output();
        if grad_out.dim() != out.dim() || cache.activations.len() != self.specs.len() + 1 {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                grad_out.dim(),
                out.dim()
            )));
        }
        let mut grads = ParamSet::zeros_like(&self.params);
        let mut delta = grad_out.to_owned();
        for i in (0..self.specs.len()).rev() {
            let act = self.specs[i].activation;
            let y = &cache.activations[i + 1];
            Zip::from(&mut delta)
                .and(y)
                .for_each(|d, &y| *d *= act.derivative(y));
            let input = &cache.activations[i];
            grads.tensors[2 * i] = delta.t().dot(input);
            grads.tensors[2 * i + 1] = delta.sum_axis(Axis(0)).insert_axis(Axis(0));
            delta = delta.dot(&self.params.tensors[2 * i]);
        }
        Ok((grads, delta))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_params(path, &self.params)?;
        write_sidecar(
            path,
            &NetSpec::Mlp {
                layers: self.specs.clone(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        match read_sidecar(path)? {
            NetSpec::Mlp { layers } => Mlp::from_parts(layers, load_params(path)?),
            NetSpec::Critic { .. } => Err(Error::Checkpoint(format!(
                "{} holds a critic, not an MLP",
                path.display()
            ))),
        }
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Shape("a network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.fan_in == 0 || s.fan_out == 0 {
            return Err(Error::Shape(format!(
                "layer {i} has a zero dimension: {s:?}"
            )));
        }
        if i > 0 && specs[i - 1].fan_out != s.fan_in {
            return Err(Error::Shape(format!(
                "layer {i} expects {} inputs but layer {} emits {}",
                s.fan_in,
                i - 1,
                specs[i - 1].fan_out
            )));
        }
    }
    Ok(())
}

/// Q-network whose action enters at the second hidden layer:
/// `h1 = relu(W1 s + b1)`, `h2 = relu(Wh h1 + Wa a + b2)`, `Q = W3 h2 + b3`.
///
/// Tensor order: `W1, b1, Wh, Wa, b2, W3, b3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: (usize, usize),
    pub params: ParamSet,
}

#[derive(Debug, Clone)]
pub struct CriticCache {
    state: Array2<f64>,
    action: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    pub q: Array2<f64>,
}

impl Critic {
    /// Indices of weight (non-bias) tensors.
    pub const WEIGHT_TENSORS: [usize; 4] = [0, 2, 3, 5];

    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 || hidden.0 == 0 || hidden.1 == 0 {
            return Err(Error::Shape("critic dimensions must be positive".into()));
        }
        let h1_half = 1.0 / (state_dim as f64).sqrt();
        let h2_half = 1.0 / ((hidden.0 + action_dim) as f64).sqrt();
        let tensors = vec![
            uniform_matrix(hidden.0, state_dim, h1_half, rng),
            uniform_matrix(1, hidden.0, h1_half, rng),
            uniform_matrix(hidden.1, hidden.0, h2_half, rng),
            uniform_matrix(hidden.1, action_dim, h2_half, rng),
            uniform_matrix(1, hidden.1, h2_half, rng),
            uniform_matrix(1, hidden.1, FINAL_LAYER_INIT, rng),
            uniform_matrix(1, 1, FINAL_LAYER_INIT, rng),
        ];
        Ok(Critic {
            state_dim,
            action_dim,
            hidden,
            params: ParamSet { tensors },
        })
    }

    pub fn from_parts(
        state_dim: usize,
        action_dim: usize,
        hidden: (usize, usize),
        params: ParamSet,
    ) -> Result<Self> {
        let expected = vec![
            (hidden.0, state_dim),
            (1, hidden.0),
            (hidden.1, hidden.0),
            (hidden.1, action_dim),
            (1, hidden.1),
            (1, hidden.1),
            (1, 1),
        ];
        if params.shapes() != expected {
            return Err(Error::Shape(format!(
                "critic parameters {:?} do not match {:?}",
                params.shapes(),
                expected
            )));
        }
        Ok(Critic {
            state_dim,
            action_dim,
            hidden,
            params,
        })
    }

    pub fn forward_cached(
        &self,
        state: ArrayView2<f64>,
        action: ArrayView2<f64>,
    ) -> Result<CriticCache> {
        check_input(&state, self.state_dim, "critic state")?;
        check_input(&action, self.action_dim, "critic action")?;
        if state.nrows() != action.nrows() {
            return Err(Error::Shape(format!(
                "{} states but {} actions",
                state.nrows(),
                action.nrows()
            )));
        }
        let t = &self.params.tensors;
        let mut h1 = affine(&state, &t[0], &t[1]);
        Activation::Relu.apply(&mut h1);
        let mut h2 = h1.dot(&t[2].t()) + action.dot(&t[3].t()) + &t[4];
        Activation::Relu.apply(&mut h2);
        let q = affine(&h2.view(), &t[5], &t[6]);
        Ok(CriticCache {
            state: state.to_owned(),
            action: action.to_owned(),
            h1,
            h2,
            q,
        })
    }

    pub fn forward(&self, state: ArrayView2<f64>, action: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(state, action)?.q)
    }

    /// Gradients of `sum(grad_q * Q)` with respect to every parameter and
    /// to the action input.
    pub fn backward(
        &self,
        cache: &CriticCache,
        grad_q: ArrayView2<f64>,
    ) -> Result<(ParamSet, Array2<f64>)> {
        if grad_q.dim() != cache.q.dim() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match Q {:?}",
                grad_q.dim(),
                cache.q.dim()
            )));
        }
        let t = &self.params.tensors;
        let mut g = ParamSet::zeros_like(&self.params);
        g.tensors[5] = grad_q.t().dot(&cache.h2);
        g.tensors[6] = grad_q.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut d2 = grad_q.dot(&t[5]);
        Zip::from(&mut d2)
            .and(&cache.h2)
            .for_each(|d, &y| *d *= Activation::Relu.derivative(y));
        g.tensors[2] = d2.t().dot(&cache.h1);
        g.tensors[3] = d2.t().dot(&cache.action);
        g.tensors[4] = d2.sum_axis(Axis(0)).insert_axis(Axis(0));
        let grad_action = d2.dot(&t[3]);
        let mut d1 = d2.dot(&t[2]);
        Zip::from(&mut d1)
            .and(&cache.h1)
            .for_each(|d, &y| *d *= Activation::Relu.derivative(y));
        g.tensors[0] = d1.t().dot(&cache.state);
        g.tensors[1] = d1.sum_axis(Axis(0)).insert_axis(Axis(0));
        Ok((g, grad_action))
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::new(self.state_dim, self.hidden.0, Activation::Relu),
            LayerSpec::new(
                self.hidden.0 + self.action_dim,
                self.hidden.1,
                Activation::Relu,
            ),
            LayerSpec::new(self.hidden.1, 1, Activation::Linear),
        ]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_params(path, &self.params)?;
        write_sidecar(
            path,
            &NetSpec::Critic {
                state_dim: self.state_dim,
                action_dim: self.action_dim,
                layers: self.layer_specs(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        match read_sidecar(path)? {
            NetSpec::Critic {
                state_dim,
                action_dim,
                layers,
            } if layers.len() == 3 => {
                let hidden = (layers[0].fan_out, layers[1].fan_out);
                Critic::from_parts(state_dim, action_dim, hidden, load_params(path)?)
            }
            _ => Err(Error::Checkpoint(format!(
                "{} does not describe a critic",
                path.display()
            ))),
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: ParamSet,
    v: ParamSet,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: ParamSet::zeros_like(params),
            v: ParamSet::zeros_like(params),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Descends along `grads`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        params.check_same_shape(grads)?;
        params.check_same_shape(&self.m)?;
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let (lr, eps) = (self.lr, self.eps);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
        Ok(())
    }
}

/// Layer description stored in the checkpoint sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetSpec {
    Mlp {
        layers: Vec<LayerSpec>,
    },
    Critic {
        state_dim: usize,
        action_dim: usize,
        layers: Vec<LayerSpec>,
    },
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_sidecar(path: &Path, spec: &NetSpec) -> Result<()> {
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(spec)?;
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

fn read_sidecar(path: &Path) -> Result<NetSpec> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Err(Error::MissingCheckpoint(side));
    }
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_params(path: &Path, params: &ParamSet) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    write(&(params.tensors.len() as u64).to_le_bytes())?;
    for (r, c) in params.shapes() {
        write(&(r as u64).to_le_bytes())?;
        write(&(c as u64).to_le_bytes())?;
    }
    for t in &params.tensors {
        for v in t.iter() {
            write(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    if !path.exists() {
        return Err(Error::MissingCheckpoint(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cursor = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = cursor
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("{} is truncated", path.display())))?;
        let slice = &bytes[cursor..end];
        cursor = end;
        Ok(slice)
    };
    if take(8)? != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} has a bad magic header",
            path.display()
        )));
    }
    let read_u64 = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize;
    let count = read_u64(take(8)?);
    let mut shapes = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let r = read_u64(take(8)?);
        let c = read_u64(take(8)?);
        shapes.push((r, c));
    }
    let mut tensors = Vec::with_capacity(shapes.len());
    for (r, c) in shapes {
        let n = r
            .checked_mul(c)
            .ok_or_else(|| Error::Checkpoint("tensor shape overflows".into()))?;
        let raw = take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
        )?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        tensors.push(
            Array2::from_shape_vec((r, c), values).map_err(|e| Error::Checkpoint(e.to_string()))?,
        );
    }
    if cursor != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} has trailing bytes",
            path.display()
        )));
    }
    Ok(ParamSet { tensors })
}

/// Stacks equal-length rows into a matrix.
pub fn stack_rows(rows: &[&[f64]]) -> Result<Array2<f64>> {
    let width = rows.first().map_or(0, |r| r.len());
    let mut flat = Vec::with_capacity(rows.len() * width);
    for r in rows {
        if r.len() != width {
            return Err(Error::Shape(format!("ragged rows: {} vs {width}", r.len())));
        }
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), width), flat).map_err(|e| Error::Shape(e.to_string()))
}

/// Column vector from a slice.
pub fn column(values: &[f64]) -> Array2<f64> {
    Array1::from(values.to_vec()).insert_axis(Axis(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn init_ranges() {
        let actor = Mlp::actor(12, (400, 300), 2, &mut rng()).unwrap();
        let t = &actor.params.tensors;
        assert!(t[0].iter().all(|v| v.abs() <= 1.0 / 12f64.sqrt()));
        assert!(t[2].iter().all(|v| v.abs() <= 0.05));
        assert!(t[4].iter().chain(t[5].iter()).all(|v| v.abs() <= 3e-3));
        assert_eq!(Mlp::actor(12, (400, 300), 2, &mut rng()).unwrap(), actor);
    }

    #[test]
    fn fresh_actor_outputs_near_half() {
        let actor = Mlp::actor(12, (400, 300), 2, &mut rng()).unwrap();
        let out = actor.forward_one(&[0.3; 12]).unwrap();
        for o in out {
            assert!(o > 0.0 && o < 1.0);
            assert!((o - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn zero_weights_give_final_bias() {
        let mut critic = Critic::new(3, 2, (4, 5), &mut rng()).unwrap();
        for t in critic.params.tensors.iter_mut() {
            t.fill(0.0);
        }
        critic.params.tensors[6][[0, 0]] = 0.25;
        let q = critic
            .forward(array![[1.0, -2.0, 3.0]].view(), array![[0.2, 0.9]].view())
            .unwrap();
        assert_eq!(q[[0, 0]], 0.25);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ParamSet {
            tensors: vec![array![[0.5]]],
        };
        let g = ParamSet {
            tensors: vec![array![[1.0]]],
        };
        let mut adam = Adam::new(&p, 1e-3);
        adam.step(&mut p, &g).unwrap();
        let expected = 0.5 - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p.tensors[0][[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let actor = Mlp::actor(3, (4, 4), 2, &mut rng()).unwrap();
        let mut p = actor.params.clone();
        let mut adam = Adam::new(&p, 1e-3);
        let zero = ParamSet::zeros_like(&p);
        adam.step(&mut p, &zero).unwrap();
        assert_eq!(p, actor.params);
    }

    #[test]
    fn soft_update_cases() {
        let mut target = ParamSet {
            tensors: vec![array![[0.0, 2.0]]],
        };
        let online = ParamSet {
            tensors: vec![array![[1.0, 4.0]]],
        };
        target.soft_update(&online, 0.001).unwrap();
        assert_eq!(target.tensors[0][[0, 0]], 0.001);
        let before = target.clone();
        target.soft_update(&online, 0.0).unwrap();
        assert_eq!(target, before);
        target.soft_update(&online, 1.0).unwrap();
        assert_eq!(target, online);
        let wrong = ParamSet {
            tensors: vec![array![[1.0]]],
        };
        assert!(matches!(
            target.soft_update(&wrong, 0.5),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn shape_errors() {
        let actor = Mlp::actor(3, (4, 4), 2, &mut rng()).unwrap();
        assert!(matches!(
            actor.forward(array![[1.0, 2.0]].view()),
            Err(Error::Shape(_))
        ));
        let bad = vec![
            LayerSpec::new(3, 4, Activation::Relu),
            LayerSpec::new(5, 2, Activation::Linear),
        ];
        assert!(Mlp::new(bad, &mut rng()).is_err());
        let cache = actor
            .forward_cached(array![[1.0, 2.0, 3.0]].view())
            .unwrap();
        assert!(actor.backward(&cache, array![[1.0]].view()).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let actor = Mlp::actor(12, (16, 8), 2, &mut rng()).unwrap();
        let path = dir.path().join("actor.bin");
        actor.save(&path).unwrap();
        assert_eq!(Mlp::load(&path).unwrap(), actor);
        let critic = Critic::new(12, 2, (16, 8), &mut rng()).unwrap();
        let cpath = dir.path().join("critic.bin");
        critic.save(&cpath).unwrap();
        assert_eq!(Critic::load(&cpath).unwrap(), critic);
        assert!(Mlp::load(&cpath).is_err());
        assert!(matches!(
            Mlp::load(&dir.path().join("none.bin")),
            Err(Error::MissingCheckpoint(_))
        ));
    }

    #[test]
    fn corrupted_checkpoint_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let p = ParamSet {
            tensors: vec![array![[1.0, 2.0], [3.0, 4.0]]],
        };
        save_params(&path, &p).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes.len(), 8 + 8 + 16 + 32);
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_params(&path), Err(Error::Checkpoint(_))));
        fs::write(&path, b"NOTMAGIC").unwrap();
        assert!(matches!(load_params(&path), Err(Error::Checkpoint(_))));
    }
}
