//! Token encoder: sums each anchor atom with its distance embedding,
//! concatenates the slots, and maps the result through a two-layer
//! feed-forward network to an entity vector.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{select_anchors, tokenize_all, NodeHash, NodePieceConfig, Tokenization, NO_RELATION};
use crate::error::{KgeError, Result};
use crate::kgdata::{EntityId, KnowledgeGraph};
use crate::models::{EntityTable, Matrix, ModelSpec, RelationParams};
use crate::real::Real;
use crate::rng;

/// Which tokens feed the encoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// Anchor tokens only.
    #[default]
    Anchor,
    /// Anchors plus relational context read from the translation segment
    /// of the relation parameters.
    AnchorRm,
    /// Anchors plus relational context with dedicated relation atoms.
    AnchorR,
}

impl EncodingMode {
    pub fn uses_context(self) -> bool {
        self != EncodingMode::Anchor
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    /// tanh approximation.
    Gelu,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl Activation {
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Gelu => {
                let inner = T::lit(GELU_C) * (z + T::lit(GELU_A) * z * z * z);
                T::lit(0.5) * z * (T::one() + inner.tanh())
            }
        }
    }

    fn derivative<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Gelu => {
                let inner = T::lit(GELU_C) * (z + T::lit(GELU_A) * z * z * z);
                let th = inner.tanh();
                let dinner = T::lit(GELU_C) * (T::one() + T::lit(3.0 * GELU_A) * z * z);
                T::lit(0.5) * (T::one() + th) + T::lit(0.5) * z * (T::one() - th * th) * dinner
            }
        }
    }
}

/// Atom and distance embeddings.
///
/// Atom rows: anchors `0..A`, then `NO_ANCHOR`, `NO_RELATION`, then one row
/// per relation type.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomVocabulary<T> {
    pub atoms: Matrix<T>,
    pub distances: Matrix<T>,
    pub n_anchors: usize,
    pub n_relations: usize,
}

impl<T: Real> AtomVocabulary<T> {
    pub fn no_anchor_row(&self) -> usize {
        self.n_anchors
    }

    pub fn no_relation_row(&self) -> usize {
        self.n_anchors + 1
    }

    pub fn relation_row(&self, r: u32) -> usize {
        self.n_anchors + 2 + r as usize
    }

    pub fn max_distance(&self) -> u32 {
        (self.distances.rows() - 1) as u32
    }

    pub fn d_atom(&self) -> usize {
        self.atoms.cols()
    }
}

/// Two-layer feed-forward encoder, plus the optional projection used to
/// read relation context from the translation segment.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    /// `hidden × input`
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    /// `dim × hidden`
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
    /// `d_atom × dim`, present in `anchor_rm` mode when `d_atom != dim`.
    pub proj: Option<Matrix<T>>,
    pub activation: Activation,
}

impl<T: Real> EncoderParams<T> {
    pub fn input_width(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_width(&self) -> usize {
        self.w2.rows()
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Forward<T> {
    input: Vec<T>,
    pre_activation: Vec<T>,
    hidden: Vec<T>,
    pub output: Vec<T>,
}

/// Gradients for every encoder-side parameter, plus translation-segment
/// gradients keyed by relation in `anchor_rm` mode.
#[derive(Clone, Debug, PartialEq)]
pub struct NodePieceGrads<T> {
    pub atoms: Matrix<T>,
    pub distances: Matrix<T>,
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
    pub proj: Option<Matrix<T>>,
    pub translation: BTreeMap<u32, Vec<T>>,
}

struct RelationView<'a, T> {
    relations: &'a RelationParams<T>,
    offset: usize,
    dim: usize,
}

fn translation_view<'a, T: Real>(
    mode: EncodingMode,
    spec: &ModelSpec,
    relations: &'a RelationParams<T>,
) -> Result<Option<RelationView<'a, T>>> {
    if mode != EncodingMode::AnchorRm {
        return Ok(None);
    }
    let segment = spec
        .kind
        .translation_segment()
        .ok_or_else(|| KgeError::validation(format!("{:?} has no translation segment for anchor_rm", spec.kind)))?;
    Ok(Some(RelationView {
        relations,
        offset: segment * spec.dim,
        dim: spec.dim,
    }))
}

fn assemble_input<T: Real>(
    hash: &NodeHash,
    vocab: &AtomVocabulary<T>,
    enc: &EncoderParams<T>,
    mode: EncodingMode,
    view: Option<&RelationView<'_, T>>,
) -> Result<Vec<T>> {
    let d_atom = vocab.d_atom();
    let slots = hash.anchors.len() + if mode.uses_context() { hash.context.len() } else { 0 };
    if slots * d_atom != enc.input_width() {
        return Err(KgeError::contract(format!(
            "hash gives {slots} slots of width {d_atom}, encoder expects {}",
            enc.input_width()
        )));
    }
    let mut input = Vec::with_capacity(enc.input_width());
    for token in &hash.anchors {
        let atom = if token.is_empty() {
            vocab.no_anchor_row()
        } else if (token.anchor as usize) < vocab.n_anchors {
            token.anchor as usize
        } else {
            return Err(KgeError::contract(format!(
                "anchor token {} outside vocabulary of {} anchors",
                token.anchor, vocab.n_anchors
            )));
        };
        let dist = token.distance.min(vocab.max_distance()) as usize;
        let (a, d) = (vocab.atoms.row(atom), vocab.distances.row(dist));
        input.extend((0..d_atom).map(|i| a[i] + d[i]));
    }
    if !mode.uses_context() {
        return Ok(input);
    }
    for &r in &hash.context {
        if r == NO_RELATION {
            input.extend_from_slice(vocab.atoms.row(vocab.no_relation_row()));
            continue;
        }
        if r as usize >= vocab.n_relations {
            return Err(KgeError::contract(format!(
                "relation token {r} outside vocabulary of {} relations",
                vocab.n_relations
            )));
        }
        match (mode, view) {
            (EncodingMode::AnchorR, _) => input.extend_from_slice(vocab.atoms.row(vocab.relation_row(r))),
            (EncodingMode::AnchorRm, Some(v)) => {
                let rm = &v.relations.row(r)[v.offset..v.offset + v.dim];
                match &enc.proj {
                    Some(p) => input.extend((0..d_atom).map(|i| dot(p.row(i), rm))),
                    None if v.dim == d_atom => input.extend_from_slice(rm),
                    None => return Err(KgeError::contract("anchor_rm with d_atom != dim needs a projection")),
                }
            }
            _ => unreachable!("context modes handled above"),
        }
    }
    Ok(input)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn forward<T: Real>(input: Vec<T>, enc: &EncoderParams<T>) -> Forward<T> {
    let pre_activation: Vec<T> = (0..enc.w1.rows())
        .map(|j| dot(enc.w1.row(j), &input) + enc.b1[j])
        .collect();
    let hidden: Vec<T> = pre_activation.iter().map(|&z| enc.activation.apply(z)).collect();
    let output = (0..enc.w2.rows())
        .map(|o| dot(enc.w2.row(o), &hidden) + enc.b2[o])
        .collect();
    Forward {
        input,
        pre_activation,
        hidden,
        output,
    }
}

/// Encodes one token sequence into an entity vector of the model dimension.
///
/// `relations` and `spec` are consulted only in `anchor_rm` mode.
pub fn encode_entity<T: Real>(
    hash: &NodeHash,
    vocab: &AtomVocabulary<T>,
    enc: &EncoderParams<T>,
    mode: EncodingMode,
    relations: &RelationParams<T>,
    spec: &ModelSpec,
) -> Result<Vec<T>> {
    let view = translation_view(mode, spec, relations)?;
    let input = assemble_input(hash, vocab, enc, mode, view.as_ref())?;
    Ok(forward(input, enc).output)
}

/// Inputs for [`count_parameters`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCountConfig {
    pub n_anchors: usize,
    pub n_relations: usize,
    pub dim: usize,
    pub d_atom: usize,
    pub k: usize,
    pub m: usize,
    pub hidden: usize,
    pub max_distance: u32,
    pub mode: EncodingMode,
    /// Relation segments of the decoder (3 for TripleRE).
    pub relation_segments: usize,
}

/// Atom table + distance table + encoder + relation parameters. Does not
/// depend on the number of entities.
pub fn count_parameters(c: &ParamCountConfig) -> u64 {
    let atoms = (c.n_anchors + c.n_relations + 2) * c.d_atom;
    let distances = (c.max_distance as usize + 1) * c.d_atom;
    let context = if c.mode.uses_context() { c.m } else { 0 };
    let input = (c.k + context) * c.d_atom;
    let encoder = input * c.hidden + c.hidden + c.hidden * c.dim + c.dim;
    let proj = if c.mode == EncodingMode::AnchorRm && c.d_atom != c.dim {
        c.d_atom * c.dim
    } else {
        0
    };
    let relations = c.n_relations * c.relation_segments * c.dim;
    (atoms + distances + encoder + proj + relations) as u64
}

/// Tokenization plus trainable encoder state.
#[derive(Clone, Debug, PartialEq)]
pub struct NodePieceModel<T> {
    pub config: NodePieceConfig,
    pub tokens: Tokenization,
    pub vocab: AtomVocabulary<T>,
    pub encoder: EncoderParams<T>,
}

impl<T: Real> NodePieceModel<T> {
    /// Selects anchors, tokenizes `kg` and initializes encoder parameters.
    pub fn build(config: &NodePieceConfig, kg: &KnowledgeGraph, spec: &ModelSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        let anchors = select_anchors(kg, config.resolved_anchors(kg.num_entities()), config.strategy, seed)?;
        let tokens = tokenize_all(kg, &anchors, config.k, config.m, seed);
        Self::init(config, tokens, kg.num_relations(), spec, seed)
    }

    /// Fresh parameters for an existing tokenization.
    pub fn init(
        config: &NodePieceConfig,
        tokens: Tokenization,
        n_relations: usize,
        spec: &ModelSpec,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if config.mode == EncodingMode::AnchorRm && spec.kind.translation_segment().is_none() {
            return Err(KgeError::validation(format!(
                "anchor_rm needs a model with a translation segment, not {:?}",
                spec.kind
            )));
        }
        let d_atom = config.resolved_d_atom(spec.dim);
        let n_anchors = tokens.anchors.len();
        let context = if config.mode.uses_context() { tokens.m } else { 0 };
        let input = (tokens.k + context) * d_atom;
        let mut rng = rng::stream(seed, "nodepiece-init", 0);
        let atom_bound = (3.0 / d_atom as f64).sqrt();
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let vocab = AtomVocabulary {
            atoms: Matrix::uniform(n_anchors + n_relations + 2, d_atom, atom_bound, &mut rng),
            distances: Matrix::uniform(config.max_distance as usize + 1, d_atom, atom_bound, &mut rng),
            n_anchors,
            n_relations,
        };
        let proj = (config.mode == EncodingMode::AnchorRm && d_atom != spec.dim)
            .then(|| Matrix::uniform(d_atom, spec.dim, glorot(spec.dim, d_atom), &mut rng));
        let encoder = EncoderParams {
            w1: Matrix::uniform(config.hidden, input, glorot(input, config.hidden), &mut rng),
            b1: vec![T::zero(); config.hidden],
            w2: Matrix::uniform(spec.dim, config.hidden, glorot(config.hidden, spec.dim), &mut rng),
            b2: vec![T::zero(); spec.dim],
            proj,
            activation: config.activation,
        };
        Ok(NodePieceModel {
            config: config.clone(),
            tokens,
            vocab,
            encoder,
        })
    }

    pub fn mode(&self) -> EncodingMode {
        self.config.mode
    }

    pub fn num_entities(&self) -> usize {
        self.tokens.hashes.len()
    }

    pub fn count_config(&self, spec: &ModelSpec) -> ParamCountConfig {
        ParamCountConfig {
            n_anchors: self.vocab.n_anchors,
            n_relations: self.vocab.n_relations,
            dim: spec.dim,
            d_atom: self.vocab.d_atom(),
            k: self.tokens.k,
            m: self.tokens.m,
            hidden: self.encoder.w1.rows(),
            max_distance: self.vocab.max_distance(),
            mode: self.config.mode,
            relation_segments: spec.kind.segments(),
        }
    }

    /// Number of scalars actually allocated, relation parameters included.
    pub fn allocated_parameters(&self, spec: &ModelSpec) -> u64 {
        let enc = &self.encoder;
        let n = self.vocab.atoms.as_slice().len()
            + self.vocab.distances.as_slice().len()
            + enc.w1.as_slice().len()
            + enc.b1.len()
            + enc.w2.as_slice().len()
            + enc.b2.len()
            + enc.proj.as_ref().map_or(0, |p| p.as_slice().len())
            + self.vocab.n_relations * spec.relation_width();
        n as u64
    }

    pub fn forward(&self, entity: EntityId, relations: &RelationParams<T>, spec: &ModelSpec) -> Result<Forward<T>> {
        let hash = self
            .tokens
            .hashes
            .get(entity as usize)
            .ok_or_else(|| KgeError::contract(format!("entity {entity} has no token hash")))?;
        let view = translation_view(self.mode(), spec, relations)?;
        let input = assemble_input(hash, &self.vocab, &self.encoder, self.mode(), view.as_ref())?;
        Ok(forward(input, &self.encoder))
    }

    pub fn encode(&self, entity: EntityId, relations: &RelationParams<T>, spec: &ModelSpec) -> Result<Vec<T>> {
        Ok(self.forward(entity, relations, spec)?.output)
    }

    /// Encodes every entity into a dense table.
    pub fn materialize(&self, relations: &RelationParams<T>, spec: &ModelSpec) -> Result<EntityTable<T>> {
        let mut data = Vec::with_capacity(self.num_entities() * spec.dim);
        for e in 0..self.num_entities() as u32 {
            data.extend(self.encode(e, relations, spec)?);
        }
        Ok(EntityTable::new(Matrix::from_vec(self.num_entities(), spec.dim, data)?))
    }

    pub fn zero_grads(&self) -> NodePieceGrads<T> {
        let enc = &self.encoder;
        NodePieceGrads {
            atoms: Matrix::zeros(self.vocab.atoms.rows(), self.vocab.atoms.cols()),
            distances: Matrix::zeros(self.vocab.distances.rows(), self.vocab.distances.cols()),
            w1: Matrix::zeros(enc.w1.rows(), enc.w1.cols()),
            b1: vec![T::zero(); enc.b1.len()],
            w2: Matrix::zeros(enc.w2.rows(), enc.w2.cols()),
            b2: vec![T::zero(); enc.b2.len()],
            proj: enc.proj.as_ref().map(|p| Matrix::zeros(p.rows(), p.cols())),
            translation: BTreeMap::new(),
        }
    }

    /// Accumulates into `grads` the gradient of a loss whose gradient with
    /// respect to this entity's output vector is `d_output`.
    pub fn backward(
        &self,
        entity: EntityId,
        cache: &Forward<T>,
        d_output: &[T],
        relations: &RelationParams<T>,
        spec: &ModelSpec,
        grads: &mut NodePieceGrads<T>,
    ) {
        let enc = &self.encoder;
        let n_hidden = enc.w1.rows();
        let mut d_hidden = vec![T::zero(); n_hidden];
        for (o, &g) in d_output.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            grads.b2[o] += g;
            let w_row = enc.w2.row(o);
            let gw_row = grads.w2.row_mut(o);
            for j in 0..n_hidden {
                gw_row[j] += g * cache.hidden[j];
                d_hidden[j] += g * w_row[j];
            }
        }
        let mut d_input = vec![T::zero(); enc.input_width()];
        for j in 0..n_hidden {
            let dz = d_hidden[j] * enc.activation.derivative(cache.pre_activation[j]);
            if dz == T::zero() {
                continue;
            }
            grads.b1[j] += dz;
            let w_row = enc.w1.row(j);
            let gw_row = grads.w1.row_mut(j);
            for (i, &x) in cache.input.iter().enumerate() {
                gw_row[i] += dz * x;
                d_input[i] += dz * w_row[i];
            }
        }

        let d_atom = self.vocab.d_atom();
        let hash = &self.tokens.hashes[entity as usize];
        let mut slots = d_input.chunks_exact(d_atom);
        for token in &hash.anchors {
            let g = slots.next().expect("anchor slot");
            let atom = if token.is_empty() {
                self.vocab.no_anchor_row()
            } else {
                token.anchor as usize
            };
            let dist = token.distance.min(self.vocab.max_distance()) as usize;
            add_into(grads.atoms.row_mut(atom), g);
            add_into(grads.distances.row_mut(dist), g);
        }
        if !self.mode().uses_context() {
            return;
        }
        let offset = spec.kind.translation_segment().unwrap_or(0) * spec.dim;
        for &r in &hash.context {
            let g = slots.next().expect("context slot");
            if r == NO_RELATION {
                add_into(grads.atoms.row_mut(self.vocab.no_relation_row()), g);
                continue;
            }
            match self.mode() {
                EncodingMode::AnchorR => add_into(grads.atoms.row_mut(self.vocab.relation_row(r)), g),
                EncodingMode::AnchorRm => {
                    let rm = &relations.row(r)[offset..offset + spec.dim];
                    let target = grads.translation.entry(r).or_insert_with(|| vec![T::zero(); spec.dim]);
                    match (&enc.proj, grads.proj.as_mut()) {
                        (Some(p), Some(gp)) => {
                            for (i, &gi) in g.iter().enumerate() {
                                let p_row = p.row(i);
                                let gp_row = gp.row_mut(i);
                                for c in 0..spec.dim {
                                    gp_row[c] += gi * rm[c];
                                    target[c] += gi * p_row[c];
                                }
                            }
                        }
                        _ => add_into(target, g),
                    }
                }
                EncodingMode::Anchor => unreachable!(),
            }
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}
