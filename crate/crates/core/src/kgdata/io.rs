//! TSV ingestion and the on-disk graph directory layout.
//!
//! A graph directory holds `train.tsv`, `valid.tsv`, `test.tsv` with
//! `head<TAB>relation<TAB>tail` lines, plus optional `entities.txt` and
//! `relations.txt` (one name per line, line number = id). A single file with
//! a fourth `train|valid|test` column is accepted as well.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{KnowledgeGraph, NameTable, Split, Triple, Vocabulary};
use crate::error::{KgeError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripleFormat {
    /// Fields are names; ids are assigned by first appearance.
    TsvNames,
    /// Fields are integer ids that must already be dense.
    TsvIds,
}

struct RawLine {
    line: usize,
    fields: [String; 3],
}

struct RawSplits {
    source: [PathBuf; 3],
    lines: [Vec<RawLine>; 3],
}

pub fn load_triples(path: &Path, format: TripleFormat) -> Result<KnowledgeGraph> {
    let (raw, vocab_dir) = if path.is_dir() {
        (read_split_dir(path)?, Some(path))
    } else {
        (read_tagged_file(path)?, path.parent())
    };
    let entity_file = vocab_dir.map(|d| d.join("entities.txt")).filter(|p| p.is_file());
    let relation_file = vocab_dir.map(|d| d.join("relations.txt")).filter(|p| p.is_file());
    let entities = entity_file.as_deref().map(read_names).transpose()?;
    let relations = relation_file.as_deref().map(read_names).transpose()?;

    match format {
        TripleFormat::TsvNames => build_from_names(raw, entities, relations),
        TripleFormat::TsvIds => build_from_ids(raw, entities, relations),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| KgeError::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn read_names(path: &Path) -> Result<NameTable> {
    let text = read_to_string(path)?;
    let names = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect();
    NameTable::from_names(names).map_err(|e| KgeError::validation(format!("{}: {e}", path.display())))
}

fn split_fields(path: &Path, line: usize, text: &str, allowed: &[usize]) -> Result<Vec<String>> {
    let fields: Vec<String> = text.split('\t').map(str::to_owned).collect();
    if !allowed.contains(&fields.len()) {
        let expected = allowed.iter().map(usize::to_string).collect::<Vec<_>>().join(" or ");
        return Err(KgeError::Parse {
            path: path.to_owned(),
            line,
            message: format!("expected {expected} tab-separated fields, found {}", fields.len()),
        });
    }
    if let Some(empty) = fields.iter().position(|f| f.is_empty()) {
        return Err(KgeError::Parse {
            path: path.to_owned(),
            line,
            message: format!("field {} is empty", empty + 1),
        });
    }
    Ok(fields)
}

fn read_split_dir(dir: &Path) -> Result<RawSplits> {
    let mut lines: [Vec<RawLine>; 3] = Default::default();
    let mut source: [PathBuf; 3] = Default::default();
    for (i, split) in Split::ALL.into_iter().enumerate() {
        let path = dir.join(split.file_name());
        source[i] = path.clone();
        if !path.exists() {
            if split == Split::Train {
                return Err(KgeError::io(
                    &path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "missing train split"),
                ));
            }
            continue;
        }
        let text = read_to_string(&path)?;
        for (line, l) in content_lines(&text) {
            let f = split_fields(&path, line, l, &[3])?;
            let [h, r, t]: [String; 3] = f.try_into().expect("3 fields");
            lines[i].push(RawLine {
                line,
                fields: [h, r, t],
            });
        }
    }
    Ok(RawSplits { source, lines })
}

fn read_tagged_file(path: &Path) -> Result<RawSplits> {
    let text = read_to_string(path)?;
    let mut lines: [Vec<RawLine>; 3] = Default::default();
    for (line, l) in content_lines(&text) {
        let mut f = split_fields(path, line, l, &[3, 4])?;
        let split = if f.len() == 4 {
            let tag = f.pop().expect("4 fields");
            Split::parse(&tag).ok_or_else(|| KgeError::Parse {
                path: path.to_owned(),
                line,
                message: format!("unknown split tag {tag:?}"),
            })?
        } else {
            Split::Train
        };
        let [h, r, t]: [String; 3] = f.try_into().expect("3 fields");
        let idx = Split::ALL.iter().position(|&s| s == split).expect("split");
        lines[idx].push(RawLine {
            line,
            fields: [h, r, t],
        });
    }
    let p = path.to_owned();
    Ok(RawSplits {
        source: [p.clone(), p.clone(), p],
        lines,
    })
}

fn build_from_names(
    raw: RawSplits,
    entities: Option<NameTable>,
    relations: Option<NameTable>,
) -> Result<KnowledgeGraph> {
    let fixed_entities = entities.is_some();
    let fixed_relations = relations.is_some();
    let mut vocab = Vocabulary {
        entities: entities.unwrap_or_default(),
        relations: relations.unwrap_or_default(),
    };
    let mut splits: [Vec<Triple>; 3] = Default::default();
    for (i, lines) in raw.lines.iter().enumerate() {
        for l in lines {
            let lookup = |table: &mut NameTable, fixed: bool, name: &str| -> Result<u32> {
                if fixed {
                    table.id(name).ok_or_else(|| KgeError::Parse {
                        path: raw.source[i].clone(),
                        line: l.line,
                        message: format!("name {name:?} is not in the vocabulary file"),
                    })
                } else {
                    Ok(table.intern(name))
                }
            };
            let head = lookup(&mut vocab.entities, fixed_entities, &l.fields[0])?;
            let relation = lookup(&mut vocab.relations, fixed_relations, &l.fields[1])?;
            let tail = lookup(&mut vocab.entities, fixed_entities, &l.fields[2])?;
            splits[i].push(Triple::new(head, relation, tail));
        }
    }
    let [train, valid, test] = splits;
    KnowledgeGraph::new(vocab, train, valid, test)
}

fn build_from_ids(raw: RawSplits, entities: Option<NameTable>, relations: Option<NameTable>) -> Result<KnowledgeGraph> {
    let mut splits: [Vec<Triple>; 3] = Default::default();
    let mut max_e: Option<u32> = None;
    let mut max_r: Option<u32> = None;
    for (i, lines) in raw.lines.iter().enumerate() {
        for l in lines {
            let parse = |s: &str| -> Result<u32> {
                s.trim().parse::<u32>().map_err(|_| KgeError::Parse {
                    path: raw.source[i].clone(),
                    line: l.line,
                    message: format!("{s:?} is not a non-negative integer id"),
                })
            };
            let t = Triple::new(parse(&l.fields[0])?, parse(&l.fields[1])?, parse(&l.fields[2])?);
            max_e = max_e.max(Some(t.head.max(t.tail)));
            max_r = max_r.max(Some(t.relation));
            splits[i].push(t);
        }
    }
    let n_e = match &entities {
        Some(table) => table.len(),
        None => max_e.map_or(0, |m| m as usize + 1),
    };
    let n_r = match &relations {
        Some(table) => table.len(),
        None => max_r.map_or(0, |m| m as usize + 1),
    };
    if let Some(m) = max_e.filter(|&m| m as usize >= n_e) {
        return Err(KgeError::Range(format!("entity id {m} with {n_e} entities")));
    }
    if let Some(m) = max_r.filter(|&m| m as usize >= n_r) {
        return Err(KgeError::Range(format!("relation id {m} with {n_r} relations")));
    }
    let numeric = Vocabulary::numeric(n_e, n_r);
    let vocab = Vocabulary {
        entities: entities.unwrap_or(numeric.entities),
        relations: relations.unwrap_or(numeric.relations),
    };
    let [train, valid, test] = splits;
    KnowledgeGraph::new(vocab, train, valid, test)
}

/// Writes the graph as a directory of split TSVs plus name files.
pub fn save_graph(kg: &KnowledgeGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| KgeError::io(dir, e))?;
    for split in Split::ALL {
        let path = dir.join(split.file_name());
        write_lines(
            &path,
            kg.split(split).iter().map(|t| {
                format!(
                    "{}\t{}\t{}",
                    kg.entity_name(t.head),
                    kg.relation_name(t.relation),
                    kg.entity_name(t.tail)
                )
            }),
        )?;
    }
    write_lines(&dir.join("entities.txt"), kg.vocab().entities.names().iter().cloned())?;
    write_lines(&dir.join("relations.txt"), kg.vocab().relations.names().iter().cloned())?;
    Ok(())
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| KgeError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(|e| KgeError::io(path, e))?;
    }
    w.flush().map_err(|e| KgeError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn tagged_file_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "kg.tsv", "a\tr\tb\ttrain\nb\tr\tc\ttrain\na\tr\tc\ttest\n");
        let kg = load_triples(&p, TripleFormat::TsvNames).unwrap();
        assert_eq!(kg.num_entities(), 3);
        assert_eq!(kg.num_relations(), 1);
        assert_eq!(kg.train().len(), 2);
        assert_eq!(kg.test().len(), 1);
        assert_eq!(kg.vocab().entities.names(), ["a", "b", "c"]);
    }

    #[test]
    fn parse_error_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let body = "# header\na\tr\tb\nb\tr\tc\nc\tr\td\n\nd\tr\te\nd\te\ne\tr\tf\n";
        write(dir.path(), "train.tsv", body);
        let err = load_triples(dir.path(), TripleFormat::TsvNames).unwrap_err();
        match err {
            KgeError::Parse { line, .. } => assert_eq!(line, 7),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn ids_out_of_range_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "train.tsv", "0\t0\t1\n1\t0\t5\n");
        write(dir.path(), "entities.txt", "x\ny\nz\n");
        let err = load_triples(dir.path(), TripleFormat::TsvIds).unwrap_err();
        assert!(matches!(err, KgeError::Range(_)), "{err}");
    }

    #[test]
    fn ids_without_vocab_files_are_dense() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "train.tsv", "0\t0\t1\n1\t1\t3\n");
        let kg = load_triples(dir.path(), TripleFormat::TsvIds).unwrap();
        assert_eq!(kg.num_entities(), 4);
        assert_eq!(kg.num_relations(), 2);
    }

    #[test]
    fn empty_train_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "train.tsv", "# nothing\n");
        write(dir.path(), "test.tsv", "a\tr\tb\n");
        let err = load_triples(dir.path(), TripleFormat::TsvNames).unwrap_err();
        assert!(matches!(err, KgeError::Validation(_)));
    }

    #[test]
    fn first_appearance_order_spans_splits() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "train.tsv", "b\tr\ta\n");
        write(dir.path(), "valid.tsv", "c\ts\ta\n");
        write(dir.path(), "test.tsv", "d\tr\tb\n");
        let kg = load_triples(dir.path(), TripleFormat::TsvNames).unwrap();
        assert_eq!(kg.vocab().entities.names(), ["b", "a", "c", "d"]);
        assert_eq!(kg.vocab().relations.names(), ["r", "s"]);
    }

    #[test]
    fn save_then_load_preserves_triples() {
        let kg = crate::kgdata::generate_synthetic(&crate::kgdata::SyntheticSpec {
            n_entities: 30,
            n_relations: 4,
            n_triples: 120,
            pattern: crate::kgdata::Pattern::InversePairs,
            seed: 5,
            holdout: 0.2,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_graph(&kg, dir.path()).unwrap();
        let back = load_triples(dir.path(), TripleFormat::TsvNames).unwrap();
        for split in Split::ALL {
            let a: BTreeSet<_> = kg.split(split).iter().collect();
            let b: BTreeSet<_> = back.split(split).iter().collect();
            assert_eq!(a, b);
        }
        assert_eq!(back.num_entities(), 30);
    }
}
