//! Files exchanged with external encoders and classifiers, built byte by
//! byte here rather than through the library writers.

mod common;

use subjkit::corpus::{parse_dataset, Label, Split};
use subjkit::embedstore::{align, read_embeddings, write_embeddings};
use subjkit::ensemble::{majority_vote, read_predictions};
use subjkit::pairgen::{generate_pairs, read_pairs, write_pairs, PairGenConfig};
use subjkit::{EmbeddingMatrix, Error};

fn semb(ids: &[&str], dim: u32, values: &[f32]) -> Vec<u8> {
    let mut out = b"SEMB\x01".to_vec();
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for id in ids {
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[test]
fn externally_encoded_semb_is_read_and_aligned() {
    let raw = semb(&["b", "ä-2", "a"], 2, &[1.0, 2.0, -0.5, 0.25, 3.0, f32::MIN_POSITIVE]);
    let m = read_embeddings(&raw).unwrap();
    assert_eq!(m.ids(), ["b", "ä-2", "a"]);
    assert_eq!(m.row(1), [-0.5, 0.25]);
    assert_eq!(m.row(2), [3.0, f32::MIN_POSITIVE]);
    assert_eq!(write_embeddings(&m).unwrap(), raw);

    let ds = parse_dataset(b"sentence_id\tsentence\tlabel\na\tone\tSUBJ\nb\ttwo\tOBJ\n", "d", "en", Split::Train).unwrap();
    assert_eq!(align(&ds, &m).unwrap().indices, [2, 0]);
}

#[test]
fn malformed_semb_is_rejected() {
    let good = semb(&["a"], 2, &[1.0, 2.0]);
    let mut bad_version = good.clone();
    bad_version[4] = 2;
    assert!(matches!(read_embeddings(&bad_version), Err(Error::Format(_))));
    assert!(matches!(read_embeddings(&good[..good.len() - 1]), Err(Error::Truncated(_))));
    let mut trailing = good.clone();
    trailing.push(0);
    assert!(read_embeddings(&trailing).is_err());
    assert!(read_embeddings(&semb(&["a"], 2, &[1.0, f32::INFINITY])).is_err());
    assert!(read_embeddings(&semb(&["a", "a"], 1, &[1.0, 2.0])).is_err());
}

#[test]
fn pairs_file_layout() {
    let mut rng = common::oracles::Lcg::new(8);
    let (ds, m) = common::gaussian_clusters(&mut rng, 10, 3, 2.0, "s", Split::Train);
    let pairs = generate_pairs(&ds, &m, &PairGenConfig::new(2, 5)).unwrap();
    let text = write_pairs(&pairs);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("id_a\tid_b\ttarget"));
    for (line, p) in lines.zip(&pairs) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 3);
        assert_eq!((cols[0], cols[1]), (p.id_a.as_str(), p.id_b.as_str()));
        // six decimals
        assert_eq!(cols[2].split('.').nth(1).unwrap().len(), 6);
        assert!((cols[2].parse::<f64>().unwrap() - p.target).abs() <= 5e-7);
    }
    let back = read_pairs(text.as_bytes()).unwrap();
    assert_eq!(back.len(), 12);
    assert!(back.iter().zip(&pairs).all(|(a, b)| a.id_a == b.id_a && (a.target - b.target).abs() <= 5e-7));
}

#[test]
fn external_prediction_files() {
    // CRLF endings and mixed-case labels as a script on another platform may write them
    let xlmr = read_predictions(b"sentence_id\tlabel\tprob\r\ns2\tsubj\t0.9\r\ns1\tOBJ\t0.1\r\n", "xlmr").unwrap();
    assert_eq!(xlmr.get("s2"), Some(Label::Subj));
    assert_eq!(xlmr.probabilities.as_ref().unwrap()["s1"], 0.1);
    let bare = read_predictions(b"sentence_id\tlabel\ns1\tSUBJ\ns2\tSUBJ\n", "bare").unwrap();
    let third = read_predictions(b"sentence_id\tlabel\ns2\tOBJ\ns1\tSUBJ\n", "third").unwrap();
    let vote = majority_vote(&[xlmr, bare, third]).unwrap();
    assert_eq!(vote.model_name, "bare+third+xlmr");
    // voters disagree on id order, so ids come out sorted
    assert_eq!(vote.predictions.keys().collect::<Vec<_>>(), ["s1", "s2"]);
    assert_eq!((vote.get("s1"), vote.get("s2")), (Some(Label::Subj), Some(Label::Subj)));

    let err = read_predictions(b"sentence_id\tlabel\tprob\ns1\tSUBJ\t1.5\n", "x").unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
    assert!(read_predictions(b"id\tlabel\n", "x").is_err());
}

#[test]
fn embedding_ids_may_exceed_dataset() {
    let m = EmbeddingMatrix::new(vec!["x".into(), "a".into()], 1, vec![0.5, 1.5]).unwrap();
    let ds = parse_dataset(b"sentence_id\tsentence\tlabel\na\tone\tSUBJ\n", "d", "en", Split::Val).unwrap();
    assert_eq!(align(&ds, &m).unwrap().indices, [1]);
    let missing = parse_dataset(b"sentence_id\tsentence\tlabel\nq\tone\tSUBJ\n", "d", "en", Split::Val).unwrap();
    assert!(matches!(align(&missing, &m), Err(Error::Alignment(_))));
}
