use axechain::contracts::{corpus, load_package};
use axechain::proof::{golden_vector_text, golden_vectors};

#[test]
fn regenerated_vectors_match_committed_file() {
    let committed = include_str!("data/proof_vectors.txt");
    assert_eq!(golden_vector_text(), committed);
    assert_eq!(golden_vectors().len(), committed.lines().count());
}

#[test]
fn shipped_corpus_files_match_builders() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus");
    for (name, text) in corpus::corpus_files() {
        let on_disk = std::fs::read_to_string(format!("{dir}/{name}")).unwrap();
        assert_eq!(on_disk, text, "{name}");
        load_package(&on_disk).unwrap();
    }
    assert_eq!(std::fs::read_dir(dir).unwrap().count(), corpus::corpus_files().len());
}
