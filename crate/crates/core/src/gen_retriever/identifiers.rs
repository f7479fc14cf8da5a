use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::GenError;
use crate::corpus::{Document, Query, Symbol, Vocabulary};
use crate::fm_index::StreamDoc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IdentifierMode {
    /// Any span of the document text.
    #[default]
    Span,
    /// Spans plus pseudo-queries and optional titles, each behind a tag.
    MultiView,
}

/// Per-document identifier streams for indexing.
///
/// In MultiView mode every pseudo-query whose gold ids name a document is
/// appended to that document's stream behind [`Symbol::ID_PSEUDOQ`], in
/// input order, followed by [`Symbol::ID_TITLE`] and the title if one is
/// given.
pub fn build_identifier_stream(
    docs: &[Document],
    pseudo_queries: &[Query],
    titles: Option<&HashMap<String, String>>,
    mode: IdentifierMode,
    vocab: &Vocabulary,
    with_timestamp: bool,
) -> Result<Vec<StreamDoc>, GenError> {
    let mut streams: Vec<StreamDoc> = docs
        .iter()
        .map(|d| StreamDoc::from_document(d, vocab, with_timestamp))
        .collect();
    if mode == IdentifierMode::Span {
        return Ok(streams);
    }
    let pos: HashMap<&str, usize> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| (d.doc_id.as_str(), i))
        .collect();
    let mut extra: BTreeMap<usize, Vec<Symbol>> = BTreeMap::new();
    for q in pseudo_queries {
        let text = vocab.encode(&q.question);
        for id in &q.gold_doc_ids {
            let &i = pos
                .get(id.as_str())
                .ok_or_else(|| GenError::UnknownDoc(id.clone()))?;
            let e = extra.entry(i).or_default();
            e.push(Symbol::ID_PSEUDOQ);
            e.extend(&text);
        }
    }
    if let Some(titles) = titles {
        if let Some(id) = titles.keys().filter(|id| !pos.contains_key(id.as_str())).min() {
            return Err(GenError::UnknownDoc(id.clone()));
        }
        for (i, d) in docs.iter().enumerate() {
            if let Some(title) = titles.get(&d.doc_id) {
                let e = extra.entry(i).or_default();
                e.push(Symbol::ID_TITLE);
                e.extend(vocab.encode(title));
            }
        }
    }
    for (i, tail) in extra {
        streams[i].symbols.extend(tail);
    }
    Ok(streams)
}
