use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::Rng;
use serde_json::{json, Value};
use triplere::checkpoint::Checkpoint;
use triplere::config::RunConfig;
use triplere::eval::{evaluate, EvalProtocol, ProtocolKind, Sides};
use triplere::kgdata::{
    generate_synthetic, load_triples, save_graph, FilterIndex, KnowledgeGraph, NameTable, Pattern, Side, Split,
    SyntheticSpec, Triple, TripleFormat,
};
use triplere::models::{count_parameters, score, ModelSpec};
use triplere::nodepiece::{count_parameters as nodepiece_parameters, select_anchors, tokenize_all, ParamCountConfig};
use triplere::training::{train, EntityMode, TrainState};

use crate::args::*;
use crate::manifest::{hash_inputs, RunManifest};

fn print_json(v: &Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_data(d: &DataArgs) -> Result<KnowledgeGraph> {
    let format = match d.triple_format {
        TripleFormatArg::TsvNames => TripleFormat::TsvNames,
        TripleFormatArg::TsvIds => TripleFormat::TsvIds,
    };
    if !d.data.exists() {
        bail!("data path {} does not exist", d.data.display());
    }
    let kg = load_triples(&d.data, format)?;
    log::info!(
        "loaded {}: {} entities, {} relations, {}/{}/{} triples",
        d.data.display(),
        kg.num_entities(),
        kg.num_relations(),
        kg.train().len(),
        kg.valid().len(),
        kg.test().len()
    );
    Ok(kg)
}

fn run_config(c: &ConfigArgs) -> Result<RunConfig> {
    let overrides = c.overrides();
    Ok(match &c.config {
        Some(path) => RunConfig::load(path, &overrides)?,
        None => RunConfig::from_layers(None, &overrides)?,
    })
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_entities: a.entities,
        n_relations: a.relations,
        n_triples: a.triples,
        pattern: match a.pattern {
            PatternArg::Random => Pattern::Random,
            PatternArg::InversePairs => Pattern::InversePairs,
            PatternArg::Symmetric => Pattern::Symmetric,
        },
        seed: a.seed,
        holdout: a.holdout,
    };
    if !(0.0..1.0).contains(&a.holdout) {
        bail!(triplere::KgeError::Validation(format!(
            "holdout must be in [0, 1), got {}",
            a.holdout
        )));
    }
    let kg = generate_synthetic(&spec)?;
    save_graph(&kg, &a.out)?;
    print_json(&json!({
        "out": a.out,
        "spec": spec,
        "entities": kg.num_entities(),
        "relations": kg.num_relations(),
        "train": kg.train().len(),
        "valid": kg.valid().len(),
        "test": kg.test().len(),
    }))
}

pub fn tokenize(a: &TokenizeArgs) -> Result<()> {
    let cfg = run_config(&a.config)?;
    let kg = load_data(&a.data)?;
    let np = cfg.nodepiece_config();
    let anchors = select_anchors(&kg, np.resolved_anchors(kg.num_entities()), np.strategy, cfg.seed)?;
    let tokens = tokenize_all(&kg, &anchors, np.k, np.m, cfg.seed);
    let text = serde_json::to_string(&tokens)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&a.out, text + "\n").with_context(|| format!("writing {}", a.out.display()))?;

    let slots = tokens.hashes.len() * np.k;
    let empty = tokens
        .hashes
        .iter()
        .flat_map(|h| &h.anchors)
        .filter(|t| t.is_empty())
        .count();
    print_json(&json!({
        "out": a.out,
        "entities": kg.num_entities(),
        "anchors": anchors.len(),
        "strategy": anchors.strategy,
        "k": np.k,
        "m": np.m,
        "seed": cfg.seed,
        "max_distance": tokens.max_observed_distance(),
        "empty_anchor_slots": empty as f64 / slots.max(1) as f64,
    }))
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = run_config(&a.config)?;
    if let Some(ck) = &a.resume {
        if !ck.is_file() {
            bail!("checkpoint {} does not exist", ck.display());
        }
    }
    let kg = load_data(&a.data)?;
    let loaded = started.elapsed().as_secs_f64();

    let state = match &a.resume {
        Some(path) => {
            let mut s = TrainState::from_checkpoint(&Checkpoint::load(path)?, &kg)?;
            if let Some(steps) = a.config.steps {
                s.config.max_steps = steps;
            }
            // the checkpoint is authoritative for everything else
            cfg.seed = s.config.seed;
            s
        }
        None => TrainState::new(
            &kg,
            &cfg.model_spec(),
            &cfg.train_config(),
            Some(&cfg.nodepiece_config()),
        )?,
    };
    log::info!(
        "training {} d={} ({} parameters) from step {} to {}",
        state.spec.kind.name(),
        state.spec.dim,
        state.parameter_count(),
        state.steps_done(),
        state.config.max_steps
    );
    let parameters = state.parameter_count();
    let train_start = Instant::now();
    let outcome = train(&kg, state, &a.out)?;
    let trained = train_start.elapsed().as_secs_f64();

    let last = outcome.records.last();
    let final_valid_mrr = last.and_then(|r| r.valid_mrr);
    let mut inputs: Vec<&Path> = vec![&a.data.data];
    if let Some(c) = &a.config.config {
        inputs.push(c);
    }
    if let Some(r) = &a.resume {
        inputs.push(r);
    }
    let (inputs, input_hash) = hash_inputs(&inputs)?;
    let manifest_path = a.out.join("manifest.json");
    let manifest = RunManifest {
        command: "train".into(),
        config: serde_json::to_value(&cfg)?,
        seed: cfg.seed,
        artifacts: BTreeMap::from([
            ("final_checkpoint".to_owned(), outcome.final_checkpoint.clone()),
            ("best_checkpoint".to_owned(), outcome.best_checkpoint.clone()),
            ("metrics_log".to_owned(), outcome.metrics_log.clone()),
        ]),
        inputs,
        input_hash,
        timings: BTreeMap::from([
            ("load_seconds".to_owned(), loaded),
            ("train_seconds".to_owned(), trained),
            ("total_seconds".to_owned(), started.elapsed().as_secs_f64()),
        ]),
    };
    manifest.save(&manifest_path)?;

    print_json(&json!({
        "final_valid_mrr": final_valid_mrr,
        "best_valid_mrr": outcome.best_valid_mrr,
        "final_loss": last.and_then(|r| r.loss),
        "steps": last.map(|r| r.step),
        "parameters": parameters,
        "final_checkpoint": outcome.final_checkpoint,
        "best_checkpoint": outcome.best_checkpoint,
        "metrics_log": outcome.metrics_log,
        "manifest": manifest_path,
    }))
}

fn load_state(path: &Path, kg: &KnowledgeGraph) -> Result<TrainState> {
    if !path.is_file() {
        bail!("checkpoint {} does not exist", path.display());
    }
    Ok(TrainState::from_checkpoint(&Checkpoint::load(path)?, kg)?)
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let kg = load_data(&a.data)?;
    let state = load_state(&a.checkpoint, &kg)?;
    let protocol = EvalProtocol {
        kind: match a.protocol {
            ProtocolArg::FilteredFull => ProtocolKind::FilteredFull,
            ProtocolArg::RawFull => ProtocolKind::RawFull,
            ProtocolArg::Sampled => ProtocolKind::Sampled,
        },
        n_candidates: a.candidates,
        sides: match a.sides {
            SidesArg::Head => Sides::Head,
            SidesArg::Tail => Sides::Tail,
            SidesArg::Both => Sides::Both,
        },
        seed: a.seed,
    };
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Valid => Split::Valid,
        SplitArg::Test => Split::Test,
    };
    let table = state.entity_table()?;
    let filter = FilterIndex::build(&kg);
    let result = evaluate(&kg, &filter, &state.spec, &table, &state.relations, &protocol, split)?;
    match a.format {
        OutputFormat::Table => {
            print!("{}", result.table());
            Ok(())
        }
        OutputFormat::Json => {
            let mut v = serde_json::to_value(&result)?;
            v["split"] = serde_json::to_value(split)?;
            v["protocol"] = serde_json::to_value(&protocol)?;
            print_json(&v)
        }
    }
}

/// Resolves `name`, or fails listing the closest known names.
fn lookup(table: &NameTable, kind: &str, name: &str) -> Result<u32> {
    if let Some(id) = table.id(name) {
        return Ok(id);
    }
    let mut near: Vec<(f64, &str)> = table
        .names()
        .iter()
        .map(|n| (strsim::normalized_levenshtein(name, n), n.as_str()))
        .collect();
    near.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let list: Vec<&str> = near.iter().take(5).map(|(_, n)| *n).collect();
    bail!(triplere::KgeError::Validation(format!(
        "unknown {kind} '{name}'; nearest: {}",
        list.join(", ")
    )))
}

pub fn score_cmd(a: &ScoreArgs) -> Result<()> {
    let kg = load_data(&a.data)?;
    let vocab = kg.vocab();
    let h = lookup(&vocab.entities, "entity", &a.head)?;
    let r = lookup(&vocab.relations, "relation", &a.relation)?;
    let t = lookup(&vocab.entities, "entity", &a.tail)?;
    let state = load_state(&a.checkpoint, &kg)?;
    let table = state.entity_table()?;
    let s = |h: u32, t: u32| score(&state.spec, table.row(h), state.relations.row(r), table.row(t));
    let value = s(h, t)?;
    let mut out = json!({
        "head": a.head,
        "relation": a.relation,
        "tail": a.tail,
        "score": value,
    });
    if let Some(n) = a.corruptions {
        let filter = FilterIndex::build(&kg);
        let triple = Triple::new(h, r, t);
        // corruptions that form a known triple are not negatives
        let pool = |side: Side, original: u32| -> Vec<u32> {
            (0..kg.num_entities() as u32)
                .filter(|&e| e != original && !filter.completes(&triple, side, e))
                .collect()
        };
        let heads = pool(Side::Head, h);
        let tails = pool(Side::Tail, t);
        if heads.is_empty() && tails.is_empty() {
            bail!(triplere::KgeError::Validation(
                "no entity yields an unknown corruption".into()
            ));
        }
        let mut rng = triplere::rng::stream(a.seed, "corruptions", 0);
        let mut below = 0usize;
        for i in 0..n {
            // alternate sides, falling back to the other when one is exhausted
            let head_side = (i % 2 == 0 && !heads.is_empty()) || tails.is_empty();
            let c = if head_side {
                s(heads[rng.gen_range(0..heads.len())], t)?
            } else {
                s(h, tails[rng.gen_range(0..tails.len())])?
            };
            if c < value {
                below += 1;
            }
        }
        out["corruptions"] = json!({
            "n": n,
            "seed": a.seed,
            "scored_lower": below,
            "fraction_lower": below as f64 / n.max(1) as f64,
        });
    }
    print_json(&out)
}

pub fn params(a: &ParamsArgs) -> Result<()> {
    let cfg = run_config(&a.config)?;
    let spec: ModelSpec = cfg.model_spec();
    let n = match cfg.entity_mode {
        EntityMode::Table => count_parameters(&spec, a.entities, a.relations),
        EntityMode::NodePiece => {
            let np = cfg.nodepiece_config();
            nodepiece_parameters(&ParamCountConfig {
                n_anchors: np.resolved_anchors(a.entities as usize),
                n_relations: a.relations as usize,
                dim: spec.dim,
                d_atom: np.resolved_d_atom(spec.dim),
                k: np.k,
                m: np.m,
                hidden: np.hidden,
                max_distance: np.max_distance,
                mode: np.mode,
                relation_segments: spec.kind.segments(),
            })
        }
    };
    println!("{n}");
    Ok(())
}
