use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_dense, adam_rows, AdamSettings, Moments};
use super::loss::{batch_objective, LossSettings};
use super::negatives::sample_with;
use super::{EntityMode, TrainConfig};
use crate::checkpoint::{relation_layout, Checkpoint, CheckpointHeader, Tensor};
use crate::error::{KgeError, Result};
use crate::eval::{evaluate, EvalProtocol};
use crate::kgdata::{EntityId, FilterIndex, KnowledgeGraph, Side, Split, Triple};
use crate::models::{init_params, EntityTable, Matrix, ModelSpec, RelationParams};
use crate::nodepiece::{tokenize_all, AnchorSet, NodePieceConfig, NodePieceGrads, NodePieceModel};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub enum EntityParams {
    Table(EntityTable<f32>),
    NodePiece(Box<NodePieceModel<f32>>),
}

/// Model parameters, optimizer moments and the step counter.
///
/// Batches and negatives for step `s` are drawn from streams keyed by
/// `(seed, s)`, so a state restored from a checkpoint continues exactly as
/// an uninterrupted run would.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub entities: EntityParams,
    pub relations: RelationParams<f32>,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

#[derive(Serialize, Deserialize)]
struct NodePieceHeader {
    config: NodePieceConfig,
    anchors: AnchorSet,
    token_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RunHeader {
    train: TrainConfig,
    #[serde(default)]
    nodepiece: Option<NodePieceHeader>,
}

const ENTITIES: &str = "entities";
const RELATIONS: &str = "relations";
const ENCODER_TENSORS: [&str; 7] = [
    "nodepiece.atoms",
    "nodepiece.distances",
    "nodepiece.w1",
    "nodepiece.b1",
    "nodepiece.w2",
    "nodepiece.b2",
    "nodepiece.proj",
];

fn encoder_params_mut(model: &mut NodePieceModel<f32>) -> Vec<(&'static str, &mut [f32])> {
    let enc = &mut model.encoder;
    let mut out: Vec<(&'static str, &mut [f32])> = vec![
        (ENCODER_TENSORS[0], model.vocab.atoms.as_mut_slice()),
        (ENCODER_TENSORS[1], model.vocab.distances.as_mut_slice()),
        (ENCODER_TENSORS[2], enc.w1.as_mut_slice()),
        (ENCODER_TENSORS[3], enc.b1.as_mut_slice()),
        (ENCODER_TENSORS[4], enc.w2.as_mut_slice()),
        (ENCODER_TENSORS[5], enc.b2.as_mut_slice()),
    ];
    if let Some(p) = enc.proj.as_mut() {
        out.push((ENCODER_TENSORS[6], p.as_mut_slice()));
    }
    out
}

fn encoder_tensors(model: &NodePieceModel<f32>) -> Vec<Tensor> {
    let enc = &model.encoder;
    let shape = |m: &Matrix<f32>| vec![m.rows(), m.cols()];
    let mut out = vec![
        Tensor::new(
            ENCODER_TENSORS[0],
            shape(&model.vocab.atoms),
            model.vocab.atoms.as_slice().to_vec(),
        ),
        Tensor::new(
            ENCODER_TENSORS[1],
            shape(&model.vocab.distances),
            model.vocab.distances.as_slice().to_vec(),
        ),
        Tensor::new(ENCODER_TENSORS[2], shape(&enc.w1), enc.w1.as_slice().to_vec()),
        Tensor::new(ENCODER_TENSORS[3], vec![enc.b1.len()], enc.b1.clone()),
        Tensor::new(ENCODER_TENSORS[4], shape(&enc.w2), enc.w2.as_slice().to_vec()),
        Tensor::new(ENCODER_TENSORS[5], vec![enc.b2.len()], enc.b2.clone()),
    ];
    if let Some(p) = &enc.proj {
        out.push(Tensor::new(ENCODER_TENSORS[6], shape(p), p.as_slice().to_vec()));
    }
    out
}

fn grad_slices(g: &NodePieceGrads<f32>) -> Vec<&[f32]> {
    let mut out = vec![
        g.atoms.as_slice(),
        g.distances.as_slice(),
        g.w1.as_slice(),
        g.b1.as_slice(),
        g.w2.as_slice(),
        g.b2.as_slice(),
    ];
    if let Some(p) = &g.proj {
        out.push(p.as_slice());
    }
    out
}

impl TrainState {
    pub fn new(
        kg: &KnowledgeGraph,
        spec: &ModelSpec,
        config: &TrainConfig,
        nodepiece: Option<&NodePieceConfig>,
    ) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        let (table, relations) = init_params::<f32>(spec, kg.num_entities(), kg.num_relations(), config.seed);
        let entities = match config.entity_mode {
            EntityMode::Table => EntityParams::Table(table),
            EntityMode::NodePiece => {
                let np = nodepiece.cloned().unwrap_or_default();
                EntityParams::NodePiece(Box::new(NodePieceModel::build(&np, kg, spec, config.seed)?))
            }
        };
        let mut state = TrainState {
            spec: spec.clone(),
            config: config.clone(),
            entities,
            relations,
            step: 0,
            moments: BTreeMap::new(),
        };
        state.moments = state.fresh_moments();
        Ok(state)
    }

    fn fresh_moments(&self) -> BTreeMap<String, Moments> {
        let mut m = BTreeMap::new();
        m.insert(RELATIONS.to_owned(), Moments::zeros(self.relations.0.as_slice().len()));
        match &self.entities {
            EntityParams::Table(t) => {
                m.insert(ENTITIES.to_owned(), Moments::zeros(t.0.as_slice().len()));
            }
            EntityParams::NodePiece(model) => {
                for t in encoder_tensors(model) {
                    m.insert(t.name, Moments::zeros(t.data.len()));
                }
            }
        }
        m
    }

    /// Optimizer steps taken so far.
    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, tensor: &str) -> Option<&Moments> {
        self.moments.get(tensor)
    }

    /// Dense entity vectors (encoded in NodePiece mode).
    pub fn entity_table(&self) -> Result<Cow<'_, EntityTable<f32>>> {
        match &self.entities {
            EntityParams::Table(t) => Ok(Cow::Borrowed(t)),
            EntityParams::NodePiece(m) => Ok(Cow::Owned(m.materialize(&self.relations, &self.spec)?)),
        }
    }

    /// Total trainable parameters.
    pub fn parameter_count(&self) -> u64 {
        match &self.entities {
            EntityParams::Table(t) => (t.0.as_slice().len() + self.relations.0.as_slice().len()) as u64,
            EntityParams::NodePiece(m) => m.allocated_parameters(&self.spec),
        }
    }

    /// The positives of the next step, as indices into the train split.
    pub fn next_batch_indices(&self, kg: &KnowledgeGraph) -> Vec<usize> {
        let mut rng = rng::stream(self.config.seed, "batch", self.step);
        (0..self.config.batch_size)
            .map(|_| rng.gen_range(0..kg.train().len()))
            .collect()
    }

    /// One Adam step on a batch drawn from the train split. Returns the
    /// batch loss before the update.
    pub fn step(&mut self, kg: &KnowledgeGraph, filter: &FilterIndex) -> Result<f32> {
        let indices = self.next_batch_indices(kg);
        let positives: Vec<Triple> = indices.iter().map(|&i| kg.train()[i]).collect();
        self.step_on(kg, filter, &positives, &indices)
    }

    /// One Adam step on the given positives.
    pub fn step_on(
        &mut self,
        kg: &KnowledgeGraph,
        filter: &FilterIndex,
        positives: &[Triple],
        batch_ids: &[usize],
    ) -> Result<f32> {
        let cfg = &self.config;
        let mut rng = rng::stream(cfg.seed, "negatives", self.step);
        let n_e = kg.num_entities();
        let heads = sample_with(
            &mut rng,
            n_e,
            filter,
            positives,
            Side::Head,
            cfg.negatives,
            cfg.negative_mode,
        );
        let tails = sample_with(
            &mut rng,
            n_e,
            filter,
            positives,
            Side::Tail,
            cfg.negatives,
            cfg.negative_mode,
        );
        let negatives: Vec<[Vec<EntityId>; 2]> = heads
            .candidates
            .into_iter()
            .zip(tails.candidates)
            .map(|(h, t)| [h, t])
            .collect();
        let settings = LossSettings {
            gamma: self.spec.gamma as f32,
            temperature: cfg.adversarial_temperature as f32,
            regularization: cfg.regularization as f32,
        };
        let adam = AdamSettings::new(cfg.learning_rate);
        let non_finite = |step| KgeError::NonFiniteLoss {
            step,
            batch: batch_ids.to_vec(),
        };

        let spec = &self.spec;
        let relations = &mut self.relations;
        let moments = &mut self.moments;
        match &mut self.entities {
            EntityParams::Table(table) => {
                let grads = batch_objective(
                    spec,
                    &settings,
                    |e| table.row(e),
                    relations,
                    positives,
                    &negatives,
                    None,
                );
                if !grads.loss.is_finite() {
                    return Err(non_finite(self.step));
                }
                self.step += 1;
                let t = self.step;
                adam_rows(
                    &mut table.0,
                    moments.get_mut(ENTITIES).expect("moments"),
                    &grads.entities,
                    &adam,
                    t,
                );
                adam_rows(
                    &mut relations.0,
                    moments.get_mut(RELATIONS).expect("moments"),
                    &grads.relations,
                    &adam,
                    t,
                );
                if cfg.renormalize_entities {
                    table.renormalize_rows(grads.entities.keys().copied());
                }
                Ok(grads.loss)
            }
            EntityParams::NodePiece(model) => {
                let ids: BTreeSet<EntityId> = positives
                    .iter()
                    .flat_map(|p| [p.head, p.tail])
                    .chain(negatives.iter().flatten().flatten().copied())
                    .collect();
                let mut caches = BTreeMap::new();
                for &e in &ids {
                    caches.insert(e, model.forward(e, relations, spec)?);
                }
                let mut grads = batch_objective(
                    spec,
                    &settings,
                    |e| &caches[&e].output,
                    relations,
                    positives,
                    &negatives,
                    None,
                );
                if !grads.loss.is_finite() {
                    return Err(non_finite(self.step));
                }
                let mut np_grads = model.zero_grads();
                for (e, d) in &grads.entities {
                    model.backward(*e, &caches[e], d, relations, spec, &mut np_grads);
                }
                if let Some(seg) = spec.kind.translation_segment() {
                    let width = spec.relation_width();
                    for (r, g) in &np_grads.translation {
                        let row = grads.relations.entry(*r).or_insert_with(|| vec![0.0; width]);
                        row[seg * spec.dim..(seg + 1) * spec.dim]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(a, b)| *a += b);
                    }
                }
                self.step += 1;
                let t = self.step;
                adam_rows(
                    &mut relations.0,
                    moments.get_mut(RELATIONS).expect("moments"),
                    &grads.relations,
                    &adam,
                    t,
                );
                for ((name, params), g) in encoder_params_mut(model).into_iter().zip(grad_slices(&np_grads)) {
                    adam_dense(params, moments.get_mut(name).expect("moments"), g, &adam, t);
                }
                Ok(grads.loss)
            }
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let nodepiece = match &self.entities {
            EntityParams::NodePiece(m) => Some(NodePieceHeader {
                config: m.config.clone(),
                anchors: m.tokens.anchors.clone(),
                token_seed: m.tokens.seed,
            }),
            EntityParams::Table(_) => None,
        };
        let run = RunHeader {
            train: self.config.clone(),
            nodepiece,
        };
        let (n_e, mut tensors) = match &self.entities {
            EntityParams::Table(t) => (
                t.len(),
                vec![Tensor::new(ENTITIES, vec![t.len(), t.dim()], t.0.as_slice().to_vec())],
            ),
            EntityParams::NodePiece(m) => (m.num_entities(), encoder_tensors(m)),
        };
        tensors.push(Tensor::new(
            RELATIONS,
            vec![self.relations.len(), self.relations.0.cols()],
            self.relations.0.as_slice().to_vec(),
        ));
        let shapes: BTreeMap<String, Vec<usize>> = tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
        for (name, m) in &self.moments {
            let shape = shapes[name].clone();
            tensors.push(Tensor::new(format!("adam.m.{name}"), shape.clone(), m.m.clone()));
            tensors.push(Tensor::new(format!("adam.v.{name}"), shape, m.v.clone()));
        }
        Ok(Checkpoint {
            header: CheckpointHeader {
                spec: self.spec.clone(),
                num_entities: n_e,
                num_relations: self.relations.len(),
                relation_layout: relation_layout(&self.spec),
                step: self.step,
                config: Some(serde_json::to_value(&run)?),
                tensors: vec![],
            },
            tensors,
        })
    }

    /// Restores parameters and optimizer state. NodePiece tokens are
    /// recomputed from `kg` with the stored anchors.
    pub fn from_checkpoint(ck: &Checkpoint, kg: &KnowledgeGraph) -> Result<Self> {
        let h = &ck.header;
        if h.num_entities != kg.num_entities() || h.num_relations != kg.num_relations() {
            return Err(KgeError::Checkpoint(format!(
                "checkpoint has {} entities / {} relations, graph has {} / {}",
                h.num_entities,
                h.num_relations,
                kg.num_entities(),
                kg.num_relations()
            )));
        }
        let run: RunHeader = match &h.config {
            Some(v) => serde_json::from_value(v.clone())?,
            None => RunHeader {
                train: TrainConfig::default(),
                nodepiece: None,
            },
        };
        let spec = h.spec.clone();
        let matrix = |name: &str| -> Result<Matrix<f32>> {
            let t = ck.tensor(name)?;
            match t.shape[..] {
                [rows, cols] => Matrix::from_vec(rows, cols, t.data.clone()),
                [n] => Matrix::from_vec(1, n, t.data.clone()),
                _ => Err(KgeError::Checkpoint(format!("tensor {name:?} is not a matrix"))),
            }
        };
        let relations = RelationParams::new(matrix(RELATIONS)?);
        if relations.0.cols() != spec.relation_width() {
            return Err(KgeError::Checkpoint("relation width does not match spec".into()));
        }
        let entities = match &run.nodepiece {
            None => EntityParams::Table(EntityTable::new(matrix(ENTITIES)?)),
            Some(np) => {
                let tokens = tokenize_all(kg, &np.anchors, np.config.k, np.config.m, np.token_seed);
                let mut model = NodePieceModel::init(&np.config, tokens, kg.num_relations(), &spec, 0)?;
                for (name, params) in encoder_params_mut(&mut model) {
                    let t = ck.tensor(name)?;
                    if t.data.len() != params.len() {
                        return Err(KgeError::Checkpoint(format!("tensor {name:?} has the wrong size")));
                    }
                    params.copy_from_slice(&t.data);
                }
                EntityParams::NodePiece(Box::new(model))
            }
        };
        let mut state = TrainState {
            spec,
            config: run.train,
            entities,
            relations,
            step: h.step,
            moments: BTreeMap::new(),
        };
        let mut moments = state.fresh_moments();
        for (name, m) in moments.iter_mut() {
            let (mk, vk) = (format!("adam.m.{name}"), format!("adam.v.{name}"));
            if ck.has_tensor(&mk) && ck.has_tensor(&vk) {
                m.m = ck.tensor(&mk)?.data.clone();
                m.v = ck.tensor(&vk)?.data.clone();
            }
        }
        state.moments = moments;
        Ok(state)
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    /// Mean batch loss since the previous record.
    pub loss: Option<f64>,
    /// Sampled-protocol MRR on the valid split.
    pub valid_mrr: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub metrics_log: PathBuf,
    pub records: Vec<MetricsRecord>,
    pub best_valid_mrr: Option<f64>,
}

/// Runs `state` up to `config.max_steps`, validating periodically.
///
/// Writes `final.ckpt`, `best.ckpt` (best sampled valid MRR; equal to the
/// final checkpoint when there is no valid split) and `metrics.jsonl` into
/// `out_dir`.
pub fn train(kg: &KnowledgeGraph, mut state: TrainState, out_dir: &Path) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| KgeError::io(out_dir, e))?;
    let final_path = out_dir.join("final.ckpt");
    let best_path = out_dir.join("best.ckpt");
    let log_path = out_dir.join("metrics.jsonl");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(state.steps_done() > 0)
        .truncate(state.steps_done() == 0)
        .open(&log_path)
        .map_err(|e| KgeError::io(&log_path, e))?;

    let filter = FilterIndex::build(kg);
    let protocol = EvalProtocol::sampled(state.config.eval_candidates, state.config.seed);
    let max_steps = state.config.max_steps;
    let interval = state.config.eval_interval;
    let mut records = Vec::new();
    let mut best: Option<f64> = None;
    let (mut loss_sum, mut loss_n) = (0f64, 0u64);

    let mut record = |state: &TrainState, loss: Option<f64>, best: &mut Option<f64>| -> Result<MetricsRecord> {
        let valid_mrr = if kg.valid().is_empty() {
            None
        } else {
            let table = state.entity_table()?;
            let r = evaluate(
                kg,
                &filter,
                &state.spec,
                &table,
                &state.relations,
                &protocol,
                Split::Valid,
            )?;
            Some(r.mrr)
        };
        if let Some(mrr) = valid_mrr {
            if best.is_none_or(|b| mrr > b) {
                *best = Some(mrr);
                state.to_checkpoint()?.save(&best_path)?;
            }
        }
        let rec = MetricsRecord {
            step: state.steps_done(),
            loss,
            valid_mrr,
        };
        writeln!(log, "{}", serde_json::to_string(&rec)?).map_err(|e| KgeError::io(&log_path, e))?;
        log::info!("step {} loss {:?} valid mrr {:?}", rec.step, rec.loss, rec.valid_mrr);
        Ok(rec)
    };

    if state.steps_done() >= max_steps {
        records.push(record(&state, None, &mut best)?);
    }
    while state.steps_done() < max_steps {
        let loss = state.step(kg, &filter)?;
        loss_sum += loss as f64;
        loss_n += 1;
        let s = state.steps_done();
        if (interval > 0 && s.is_multiple_of(interval)) || s == max_steps {
            records.push(record(&state, Some(loss_sum / loss_n as f64), &mut best)?);
            loss_sum = 0.0;
            loss_n = 0;
        }
    }

    state.to_checkpoint()?.save(&final_path)?;
    if best.is_none() {
        fs::copy(&final_path, &best_path).map_err(|e| KgeError::io(&best_path, e))?;
    }
    Ok(TrainOutcome {
        final_checkpoint: final_path,
        best_checkpoint: best_path,
        metrics_log: log_path,
        records,
        best_valid_mrr: best,
    })
}
