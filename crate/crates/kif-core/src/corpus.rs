//! Dialog corpus records (JSONL, one dialog per line) and derivation of
//! training examples: every turn with at least one prior turn becomes a
//! (context, response) pair.

use crate::error::{Error, Result};
use crate::vocab::Vocab;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TurnRecord {
    pub speaker: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personality: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_candidates: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_knowledge_id: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub dialog_id: u64,
    pub topic: String,
    pub turns: Vec<TurnRecord>,
}

pub fn load_jsonl(path: &Path) -> Result<Vec<CorpusRecord>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!(
                "{}:{}: malformed corpus record: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        if rec.turns.is_empty() {
            return Err(Error::Data(format!(
                "{}:{}: dialog {} has no turns",
                path.display(),
                lineno + 1,
                rec.dialog_id
            )));
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{}: empty corpus", path.display())));
    }
    Ok(out)
}

pub fn save_jsonl(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// One trainable (context, response) pair.
#[derive(Debug, Clone)]
pub struct DialogExample {
    pub dialog_id: u64,
    /// Index of the response turn; equals the number of prior turns, which
    /// is the turn feature `t`.
    pub turn_index: usize,
    pub context_turns: Vec<Vec<usize>>,
    pub response: Vec<usize>,
    pub response_text: String,
    pub personality: Option<usize>,
    pub gold_knowledge_id: Option<u64>,
}

/// Expands dialogs into examples. Unknown personalities are an error (they
/// index an embedding); unknown body words become UNK and are tallied.
pub fn derive_examples(records: &[CorpusRecord], vocab: &Vocab) -> Result<(Vec<DialogExample>, usize)> {
    let mut out = Vec::new();
    let mut oov_total = 0;
    for rec in records {
        let toks: Vec<Vec<usize>> = rec
            .turns
            .iter()
            .map(|t| {
                let (ids, oov) = vocab.tokenize(&t.text);
                oov_total += oov;
                ids
            })
            .collect();
        for j in 1..rec.turns.len() {
            let personality = match &rec.turns[j].personality {
                Some(p) => Some(vocab.id(p).ok_or_else(|| {
                    Error::Vocab(format!("unknown personality token {p:?} in dialog {}", rec.dialog_id))
                })?),
                None => None,
            };
            out.push(DialogExample {
                dialog_id: rec.dialog_id,
                turn_index: j,
                context_turns: toks[..j].to_vec(),
                response: toks[j].clone(),
                response_text: rec.turns[j].text.clone(),
                personality,
                gold_knowledge_id: rec.turns[j].gold_knowledge_id,
            });
        }
    }
    Ok((out, oov_total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dialog(n_turns: usize) -> CorpusRecord {
        CorpusRecord {
            dialog_id: 7,
            topic: "t".into(),
            turns: (0..n_turns)
                .map(|i| TurnRecord {
                    speaker: if i % 2 == 0 { "a".into() } else { "b".into() },
                    text: format!("word{i} common"),
                    personality: None,
                    knowledge_candidates: None,
                    gold_knowledge_id: Some(i as u64),
                })
                .collect(),
        }
    }

    #[test]
    fn four_turn_dialog_yields_three_examples() {
        let rec = dialog(4);
        let v = Vocab::build(
            rec.turns.iter().map(|t| t.text.as_str()),
            None,
        );
        let (ex, oov) = derive_examples(std::slice::from_ref(&rec), &v).unwrap();
        assert_eq!(ex.len(), 3);
        assert_eq!(oov, 0);
        assert_eq!(ex[0].turn_index, 1);
        assert_eq!(ex[0].context_turns.len(), 1);
        assert_eq!(ex[2].context_turns.len(), 3);
        assert_eq!(ex[1].gold_knowledge_id, Some(2));
    }

    #[test]
    fn jsonl_round_trip_and_line_numbered_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let recs = vec![dialog(2), dialog(3)];
        save_jsonl(&path, &recs).unwrap();
        let back = load_jsonl(&path).unwrap();
        assert_eq!(recs, back);

        std::fs::write(&path, "{\"dialog_id\": 1}\n").unwrap();
        let err = load_jsonl(&path).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn unknown_personality_is_a_vocab_error() {
        let mut rec = dialog(2);
        rec.turns[1].personality = Some("zesty".into());
        let v = Vocab::build(["word0 word1 common"].iter().copied(), None);
        assert!(matches!(
            derive_examples(std::slice::from_ref(&rec), &v),
            Err(Error::Vocab(_))
        ));
    }
}
