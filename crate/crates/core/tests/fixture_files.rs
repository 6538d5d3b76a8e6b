use std::collections::BTreeMap;

use iclbudget::analysis::label_counts;
use iclbudget::corpus::{
    entity_counts, parse_conllu, parse_conllu_with, parse_ner_jsonl, subsample_test, write_conllu, Dataset, PosField,
    DEFAULT_ENTITY_TYPES,
};
use iclbudget::embedding::{embed_samples, EmbedOptions, EmbeddingCache, EmbeddingProvider, FileEmbeddings, Neighbor};
use iclbudget::poolselect::select_all;
use iclbudget::promptcodec::{build_prompt, PromptMode};
use iclbudget::retrieval::DemonstrationSet;
use iclbudget::{Error, Sample, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIVE: &str = include_str!("fixtures/five.conllu");
const NER3: &str = include_str!("fixtures/ner3.jsonl");

fn rows_of(s: &Sample) -> Vec<(String, usize, String)> {
    s.parse().unwrap().rows.iter().map(|r| (r.pos.clone(), r.head, r.deprel.clone())).collect()
}

#[test]
fn five_sentence_conllu_matches_hand_table() {
    let samples = parse_conllu(FIVE).unwrap();
    type Row<'a> = (&'a str, usize, &'a str);
    let table: [(&str, &[&str], &[Row]); 5] = [
        ("s1", &["Hi", "!"], &[("INTJ", 0, "root"), ("PUNCT", 1, "punct")]),
        (
            "s2",
            &["Dogs", "bark", "loudly", "."],
            &[("NOUN", 2, "nsubj"), ("VERB", 0, "root"), ("ADV", 2, "advmod"), ("PUNCT", 2, "punct")],
        ),
        (
            "s3",
            &["She", "did", "n't", "go", "."],
            &[
                ("PRON", 4, "nsubj"),
                ("AUX", 4, "aux"),
                ("PART", 4, "advmod"),
                ("VERB", 0, "root"),
                ("PUNCT", 4, "punct"),
            ],
        ),
        ("s4", &["Paris", ",", "sleeps"], &[("PROPN", 3, "nsubj"), ("PUNCT", 1, "punct"), ("VERB", 0, "root")]),
        ("s5", &["Old", "maps", "help"], &[("ADJ", 2, "amod"), ("NOUN", 3, "nsubj"), ("VERB", 0, "root")]),
    ];
    assert_eq!(samples.len(), 5);
    for (s, (id, tokens, rows)) in samples.iter().zip(table) {
        assert_eq!(s.id, id);
        assert_eq!(s.tokens, tokens);
        let want: Vec<(String, usize, String)> = rows.iter().map(|&(p, h, d)| (p.into(), h, d.into())).collect();
        assert_eq!(rows_of(s), want, "{id}");
    }
    assert_eq!(samples[2].text, "She did n't go .");
    assert_eq!(samples[3].text, "Paris , sleeps");
}

#[test]
fn xpos_column_and_write_round_trip() {
    let samples = parse_conllu_with(FIVE, PosField::Xpos).unwrap();
    assert_eq!(rows_of(&samples[0])[0].0, "UH");
    assert_eq!(rows_of(&samples[3])[1].0, ",");
    // the writer puts tags in the UPOS column
    let again = parse_conllu(&write_conllu(&samples)).unwrap();
    assert_eq!(again.iter().map(rows_of).collect::<Vec<_>>(), samples.iter().map(rows_of).collect::<Vec<_>>());
}

#[test]
fn three_line_ner_fixture_counts() {
    let samples = parse_ner_jsonl(NER3).unwrap();
    assert_eq!(samples.len(), 3);
    let want: BTreeMap<String, usize> = [("GPE".to_string(), 1), ("PER".to_string(), 2)].into();
    assert_eq!(entity_counts(&samples), want);

    let labels = DEFAULT_ENTITY_TYPES.iter().map(|s| s.to_string()).collect();
    let ds = Dataset::new("ner3", TaskKind::Ner, samples.clone(), Vec::new(), labels).unwrap();
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let pool = select_all(&ids).unwrap();
    assert_eq!(label_counts(&pool, &ds).unwrap(), want);

    let one = select_all(&["n2".to_string()]).unwrap();
    assert_eq!(label_counts(&one, &ds).unwrap(), [("PER".to_string(), 1)].into());
    let none = select_all(&["n3".to_string()]).unwrap();
    assert!(label_counts(&none, &ds).unwrap().is_empty());
}

#[test]
fn label_counts_need_annotations() {
    let mut samples = parse_ner_jsonl(NER3).unwrap();
    samples[0].annotation = None;
    let labels = DEFAULT_ENTITY_TYPES.iter().map(|s| s.to_string()).collect();
    let ds = Dataset::new("ner3", TaskKind::Ner, samples, Vec::new(), labels).unwrap();
    let pool = select_all(&["n1".to_string()]).unwrap();
    assert!(matches!(label_counts(&pool, &ds), Err(Error::Argument(_))));
}

#[test]
fn parse_label_counts_use_deprels_or_tags() {
    let samples = parse_conllu(FIVE).unwrap();
    let ds = Dataset::new("five", TaskKind::Depparse, samples.clone(), Vec::new(), Vec::new()).unwrap();
    let pool = select_all(&["s1".to_string(), "s4".to_string()]).unwrap();
    let deprels: BTreeMap<String, usize> =
        [("nsubj", 1), ("punct", 2), ("root", 2)].iter().map(|&(k, v)| (k.to_string(), v)).collect();
    assert_eq!(label_counts(&pool, &ds).unwrap(), deprels);
    let pos_ds = Dataset { task: TaskKind::Pos, ..ds };
    let tags: BTreeMap<String, usize> =
        [("INTJ", 1), ("PROPN", 1), ("PUNCT", 2), ("VERB", 1)].iter().map(|&(k, v)| (k.to_string(), v)).collect();
    assert_eq!(label_counts(&pool, &pos_ds).unwrap(), tags);
}

/// The documented subsampling algorithm, written out independently.
fn reference_subsample(ids: &[&str], n: usize, seed: u64) -> Vec<String> {
    let mut v: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..n.min(v.len()) {
        let j = rng.random_range(i..v.len());
        v.swap(i, j);
        out.push(v[i].clone());
    }
    out
}

#[test]
fn subsample_matches_reference_rng() {
    let samples = parse_conllu(FIVE).unwrap();
    let ds = Dataset::new("five", TaskKind::Depparse, Vec::new(), samples, Vec::new()).unwrap();
    let got: Vec<String> = subsample_test(&ds, 2, 7).unwrap().test.iter().map(|s| s.id.clone()).collect();
    let want = reference_subsample(&["s1", "s2", "s3", "s4", "s5"], 2, 7);
    assert_eq!(got, want);
    let all = subsample_test(&ds, 10, 7).unwrap();
    let mut ids: Vec<&str> = all.test.iter().map(|s| s.id.as_str()).collect();
    ids.sort();
    assert_eq!(ids, ["s1", "s2", "s3", "s4", "s5"]);
}

#[test]
fn separator_prompt_matches_golden_file() {
    let samples = parse_ner_jsonl(NER3).unwrap();
    let index = iclbudget::corpus::SampleIndex::new(&samples);
    let demos = DemonstrationSet {
        inference_id: "n3".into(),
        demos: vec![Neighbor { id: "n2".into(), similarity: 0.2 }, Neighbor { id: "n1".into(), similarity: 0.9 }],
    };
    let prompt = build_prompt(TaskKind::Ner, &demos, &index, PromptMode::Separator).unwrap();
    let golden = include_str!("fixtures/ner_separator_prompt.txt");
    assert_eq!(prompt.to_text(), golden);
    assert_eq!(prompt.to_text().matches("[TAGS]").count(), 3);
}

#[test]
fn file_embeddings_fixture_returns_its_vectors() {
    let text = "{\"id\":\"n1\",\"vector\":[1.0,0.0]}\n{\"id\":\"n2\",\"vector\":[0.5,0.5]}\n{\"id\":\"n3\",\"vector\":[-1.0,2.0]}\n{\"id\":\"x\",\"vector\":[0.0,-3.25]}\n";
    let provider = FileEmbeddings::parse(text, "fixture").unwrap();
    let samples = parse_ner_jsonl(NER3).unwrap();
    let store = embed_samples(&samples, &provider, &EmbeddingCache::default(), &EmbedOptions::default()).unwrap();
    assert_eq!(store.get("n3").unwrap().values(), &[-1.0, 2.0]);
    assert_eq!(store.get("n2").unwrap().values(), &[0.5, 0.5]);
    assert!(provider.tag().contains("fixture"));
}
