//! Instance encoder, attention pooling, prediction heads and pooling
//! baselines, all expressed as tape computations over a [`ParameterStore`].
//!
//! Parameter layout (weights are stored `in × out` so a batch of row
//! vectors multiplies on the left):
//!
//! | name                          | shape      |
//! |-------------------------------|------------|
//! | `<enc>.{i}.weight` / `.bias`  | `[in, out]` / `[out]` |
//! | `attention.v`                 | `[L, M]`   |
//! | `attention.w`                 | `[L]`      |
//! | `bag_head.weight` / `.bias`   | `[M, 1]` / `[1]` |
//! | `instance_head.weight`/`.bias`| `[M, 1]` / `[1]` |
//!
//! `<enc>` is `encoder` when the encoder is shared, otherwise
//! `teacher.encoder` and `student.encoder`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{NodeId, NumericArray, ParameterStore, Scalar, Tape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
}

impl EncoderConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![64, 64],
            embed_dim: 64,
        }
    }

    /// `(fan_in, fan_out)` of every linear layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.embed_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionConfig {
    pub hidden_dim: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self { hidden_dim: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub attention: AttentionConfig,
    pub shared_encoder: bool,
}

impl ModelConfig {
    pub fn new(input_dim: usize, shared_encoder: bool) -> Self {
        Self {
            encoder: EncoderConfig::new(input_dim),
            attention: AttentionConfig::default(),
            shared_encoder,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        if e.input_dim == 0 || e.embed_dim == 0 || e.hidden.contains(&0) {
            return Err(Error::InvalidConfig(format!("encoder widths must be positive: {e:?}")));
        }
        if self.attention.hidden_dim == 0 {
            return Err(Error::InvalidConfig("attention hidden dimension must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Teacher,
    Student,
}

/// Resolves which encoder parameter block each branch reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedEncoderHandle {
    teacher: String,
    student: String,
}

impl SharedEncoderHandle {
    pub fn new(shared: bool) -> Self {
        if shared {
            Self {
                teacher: "encoder".into(),
                student: "encoder".into(),
            }
        } else {
            Self {
                teacher: "teacher.encoder".into(),
                student: "student.encoder".into(),
            }
        }
    }

    pub fn is_shared(&self) -> bool {
        self.teacher == self.student
    }

    pub fn prefix(&self, branch: Branch) -> &str {
        match branch {
            Branch::Teacher => &self.teacher,
            Branch::Student => &self.student,
        }
    }

    /// Parameter names of one branch's encoder.
    pub fn parameter_names(&self, branch: Branch, layers: usize) -> Vec<String> {
        let p = self.prefix(branch);
        (0..layers)
            .flat_map(|i| [format!("{p}.{i}.weight"), format!("{p}.{i}.bias")])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Mean,
}

impl std::str::FromStr for PoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolMode::Max),
            "mean" => Ok(PoolMode::Mean),
            other => Err(Error::InvalidInput(format!("unknown pooling mode `{other}`"))),
        }
    }
}

/// Tape nodes produced by a teacher forward pass over one bag.
#[derive(Debug, Clone, Copy)]
pub struct TeacherNodes {
    pub embeddings: NodeId,
    /// `[n]` attention weights.
    pub attention: NodeId,
    /// `[1, 1]` bag probability.
    pub bag_prob: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilModel {
    config: ModelConfig,
    encoders: SharedEncoderHandle,
}

fn uniform_init<T: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> NumericArray<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
        .collect();
    NumericArray::new(shape.to_vec(), data).expect("shape matches length")
}

impl MilModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let encoders = SharedEncoderHandle::new(config.shared_encoder);
        Ok(Self { config, encoders })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoders(&self) -> &SharedEncoderHandle {
        &self.encoders
    }

    pub fn embed_dim(&self) -> usize {
        self.config.encoder.embed_dim
    }

    pub fn input_dim(&self) -> usize {
        self.config.encoder.input_dim
    }

    fn init_encoder<T: Scalar, R: Rng + ?Sized>(
        &self,
        store: &mut ParameterStore<T>,
        prefix: &str,
        rng: &mut R,
    ) -> Result<()> {
        for (i, (fan_in, fan_out)) in self.config.encoder.layer_dims().into_iter().enumerate() {
            store.insert(format!("{prefix}.{i}.weight"), uniform_init(rng, &[fan_in, fan_out], fan_in))?;
            store.insert(format!("{prefix}.{i}.bias"), uniform_init(rng, &[fan_out], fan_in))?;
        }
        Ok(())
    }

    /// Draws every parameter uniformly from `±1/sqrt(fan_in)`.
    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParameterStore<T>> {
        let m = self.embed_dim();
        let l = self.config.attention.hidden_dim;
        let mut store = ParameterStore::new();
        self.init_encoder(&mut store, self.encoders.prefix(Branch::Teacher), rng)?;
        if !self.encoders.is_shared() {
            self.init_encoder(&mut store, self.encoders.prefix(Branch::Student), rng)?;
        }
        store.insert("attention.v", uniform_init(rng, &[l, m], m))?;
        store.insert("attention.w", uniform_init(rng, &[l], l))?;
        store.insert("bag_head.weight", uniform_init(rng, &[m, 1], m))?;
        store.insert("bag_head.bias", uniform_init(rng, &[1], m))?;
        store.insert("instance_head.weight", uniform_init(rng, &[m, 1], m))?;
        store.insert("instance_head.bias", uniform_init(rng, &[1], m))?;
        Ok(store)
    }

    /// `n × d` instances to `n × M` embeddings; ReLU after every layer.
    pub fn encode<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        branch: Branch,
        instances: NodeId,
    ) -> Result<NodeId> {
        let shape = tape.value(instances).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "encoder input",
                expected: self.input_dim(),
                found: shape.get(1).copied().unwrap_or(0),
            });
        }
        let prefix = self.encoders.prefix(branch);
        let mut h = instances;
        for i in 0..self.config.encoder.layer_dims().len() {
            let w = tape.param(store, &format!("{prefix}.{i}.weight"))?;
            let b = tape.param(store, &format!("{prefix}.{i}.bias"))?;
            let lin = tape.matmul(h, w)?;
            let lin = tape.add_bias(lin, b)?;
            h = tape.relu(lin)?;
        }
        Ok(h)
    }

    /// Softmax over the bag of `wᵀ tanh(V zⱼ)`; returns `[n]`.
    pub fn attention_scores<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        embeddings: NodeId,
    ) -> Result<NodeId> {
        let n = tape.value(embeddings).rows();
        let l = self.config.attention.hidden_dim;
        let v = tape.param(store, "attention.v")?;
        let w = tape.param(store, "attention.w")?;
        let vt = tape.transpose(v)?;
        let proj = tape.matmul(embeddings, vt)?;
        let act = tape.tanh(proj)?;
        let w_col = tape.reshape(w, &[l, 1])?;
        let logits = tape.matmul(act, w_col)?;
        let logits = tape.reshape(logits, &[n])?;
        tape.softmax(logits, 0)
    }

    /// `Σⱼ weightⱼ · embeddingⱼ` as a `[1, M]` row.
    pub fn aggregate<T: Scalar>(&self, tape: &mut Tape<T>, embeddings: NodeId, weights: NodeId) -> Result<NodeId> {
        aggregate(tape, embeddings, weights)
    }

    /// Bag probability from a `[1, M]` bag feature; returns `[1, 1]`.
    pub fn bag_predict<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        bag_feature: NodeId,
    ) -> Result<NodeId> {
        head(tape, store, "bag_head", bag_feature)
    }

    /// Per-row instance probabilities from `[n, M]` embeddings; returns `[n, 1]`.
    pub fn instance_predict<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        embeddings: NodeId,
    ) -> Result<NodeId> {
        head(tape, store, "instance_head", embeddings)
    }

    pub fn teacher_forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        instances: &NumericArray<T>,
    ) -> Result<TeacherNodes> {
        let x = tape.constant(instances.clone());
        let embeddings = self.encode(tape, store, Branch::Teacher, x)?;
        let attention = self.attention_scores(tape, store, embeddings)?;
        let pooled = aggregate(tape, embeddings, attention)?;
        let bag_prob = self.bag_predict(tape, store, pooled)?;
        Ok(TeacherNodes {
            embeddings,
            attention,
            bag_prob,
        })
    }

    /// Cross-entropy of the bag prediction against the bag label.
    pub fn teacher_loss<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        instances: &NumericArray<T>,
        bag_label: u8,
    ) -> Result<NodeId> {
        let out = self.teacher_forward(tape, store, instances)?;
        let target = if bag_label == 1 { T::one() } else { T::zero() };
        let l = tape.binary_cross_entropy(out.bag_prob, vec![target])?;
        tape.mean(l)
    }

    /// Mean cross-entropy of student predictions against soft targets.
    pub fn student_loss<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        instances: &NumericArray<T>,
        targets: Vec<T>,
    ) -> Result<NodeId> {
        let x = tape.constant(instances.clone());
        let z = self.encode(tape, store, Branch::Student, x)?;
        let p = self.instance_predict(tape, store, z)?;
        let l = tape.binary_cross_entropy(p, targets)?;
        tape.mean(l)
    }

    /// Student instance probabilities, no gradient bookkeeping.
    pub fn student_scores<T: Scalar>(&self, store: &ParameterStore<T>, instances: &NumericArray<T>) -> Result<Vec<T>> {
        let mut tape = Tape::inference();
        let x = tape.constant(instances.clone());
        let z = self.encode(&mut tape, store, Branch::Student, x)?;
        let p = self.instance_predict(&mut tape, store, z)?;
        Ok(tape.value(p).data().to_vec())
    }

    /// Teacher attention weights and bag probability, no gradient bookkeeping.
    pub fn teacher_outputs<T: Scalar>(
        &self,
        store: &ParameterStore<T>,
        instances: &NumericArray<T>,
    ) -> Result<(Vec<T>, T)> {
        let mut tape = Tape::inference();
        let out = self.teacher_forward(&mut tape, store, instances)?;
        Ok((tape.value(out.attention).data().to_vec(), tape.value(out.bag_prob).item()))
    }
}

fn head<T: Scalar>(tape: &mut Tape<T>, store: &ParameterStore<T>, name: &str, input: NodeId) -> Result<NodeId> {
    let w = tape.param(store, &format!("{name}.weight"))?;
    let b = tape.param(store, &format!("{name}.bias"))?;
    let logit = tape.matmul(input, w)?;
    let logit = tape.add_bias(logit, b)?;
    tape.sigmoid(logit)
}

/// Weighted sum of embedding rows; `weights` has one entry per row.
pub fn aggregate<T: Scalar>(tape: &mut Tape<T>, embeddings: NodeId, weights: NodeId) -> Result<NodeId> {
    let n = tape.value(embeddings).rows();
    if tape.value(weights).len() != n {
        return Err(Error::Shape {
            op: "aggregate",
            detail: format!("{} weights for {n} embeddings", tape.value(weights).len()),
        });
    }
    let row = tape.reshape(weights, &[1, n])?;
    tape.matmul(row, embeddings)
}

/// Coordinatewise max or mean over the instances of a bag; returns `[M]`.
pub fn pool_baseline<T: Scalar>(tape: &mut Tape<T>, embeddings: NodeId, mode: PoolMode) -> Result<NodeId> {
    let shape = tape.value(embeddings).shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::Shape {
            op: "pool_baseline",
            detail: format!("expects [n, M] embeddings, got {shape:?}"),
        });
    }
    match mode {
        PoolMode::Max => tape.max_axis(embeddings, 0),
        PoolMode::Mean => {
            let n = shape[0];
            let ones = tape.constant(NumericArray::full(&[1, n], T::one() / T::from_usize(n).expect("fits")));
            let m = tape.matmul(ones, embeddings)?;
            tape.reshape(m, &[shape[1]])
        }
    }
}
