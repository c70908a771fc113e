use chatnet_core::rag_store::{chunk_document, chunk_spans, hashing_embed, VectorStore};
use proptest::prelude::*;

fn sentence(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z0-9]{1,8}", 1..=max_words).prop_map(|w| w.join(" "))
}

/// Joins chunks back into one string by dropping each later chunk's
/// leading `overlap` characters.
fn reassemble(chunks: &[String], overlap: usize) -> String {
    let mut out = String::new();
    for (i, c) in chunks.iter().enumerate() {
        if i == 0 {
            out.push_str(c);
        } else {
            out.extend(c.chars().skip(overlap));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn query_retrieves_itself(docs in prop::collection::vec(sentence(40), 0..12), query in sentence(12)) {
        let mut store = VectorStore::default();
        for (i, d) in docs.iter().enumerate() {
            store.add_document(&format!("doc{i}"), d).unwrap();
        }
        store.add_document("query", &query).unwrap();
        let hits = store.search(&query, 1).unwrap();
        prop_assert!((hits[0].score - 1.0).abs() <= 1e-12, "top score {}", hits[0].score);
        let own = store.search(&query, store.len()).unwrap();
        prop_assert!(own.iter().any(|h| h.chunk.text == query && (h.score - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn scores_never_increase(docs in prop::collection::vec(sentence(60), 1..12), query in sentence(6)) {
        let mut store = VectorStore::default();
        for (i, d) in docs.iter().enumerate() {
            store.add_document(&format!("doc{i}"), d).unwrap();
        }
        let hits = store.search(&query, store.len()).unwrap();
        prop_assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn chunks_reassemble_source(text in "[a-z ]{0,600}|[\\PC\n\t ]{0,400}", size in 10usize..200, overlap_frac in 0.0f64..0.9) {
        let overlap = ((size as f64) * overlap_frac) as usize;
        let chunks = chunk_document(&text, size, overlap).unwrap();
        prop_assert_eq!(reassemble(&chunks, overlap), text.clone());
        for s in chunk_spans(&text, size, overlap).unwrap() {
            prop_assert!(s.end - s.start <= size);
        }
    }

    #[test]
    fn embeddings_have_unit_norm(text in sentence(50)) {
        let norm = hashing_embed(&text).iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = VectorStore::default();
    store.add_document("a.md", "optical modules and fibers").unwrap();
    store.add_document("b.md", "access control lists").unwrap();
    let path = dir.path().join("ragstore.json");
    store.save(&path).unwrap();
    assert_eq!(VectorStore::load(&path).unwrap(), store);
}
