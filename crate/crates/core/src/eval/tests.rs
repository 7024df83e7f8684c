use proptest::prelude::*;

use super::*;

/// Plain recursion straight from the definition.
fn recursive(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = recursive(ra, rb) + usize::from(x != y);
            let del = recursive(ra, b) + 1;
            let ins = recursive(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

fn all_sequences(max_len: usize, alphabet: u8) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..alphabet {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn check_alignment(r: &[u8], h: &[u8], a: &Alignment) {
    let m = a.count(EditOp::Match);
    let s = a.count(EditOp::Substitute);
    let d = a.count(EditOp::Delete);
    let i = a.count(EditOp::Insert);
    assert_eq!(m + s + d, r.len());
    assert_eq!(m + s + i, h.len());
    assert_eq!(s + d + i, a.distance);
    // Replay the alignment.
    let (mut ri, mut hi) = (0, 0);
    for op in &a.ops {
        match op {
            EditOp::Match => {
                assert_eq!(r[ri], h[hi]);
                ri += 1;
                hi += 1;
            }
            EditOp::Substitute => {
                assert_ne!(r[ri], h[hi]);
                ri += 1;
                hi += 1;
            }
            EditOp::Delete => ri += 1,
            EditOp::Insert => hi += 1,
        }
    }
}

#[test]
fn edit_distance_matches_recursion_on_short_sequences() {
    let seqs = all_sequences(4, 3);
    for a in &seqs {
        for b in &seqs {
            let al = edit_distance(a, b);
            assert_eq!(al.distance, recursive(a, b));
            check_alignment(a, b, &al);
        }
    }
}

#[test]
fn edit_distance_examples() {
    let k: Vec<char> = "kitten".chars().collect();
    let s: Vec<char> = "sitting".chars().collect();
    assert_eq!(edit_distance(&k, &s).distance, 3);
    assert_eq!(edit_distance(&k, &k).distance, 0);
    let empty: Vec<char> = vec![];
    let a = edit_distance(&empty, &s);
    assert_eq!(a.distance, 7);
    assert!(a.ops.iter().all(|&o| o == EditOp::Insert));
    let a = edit_distance(&s, &empty);
    assert!(a.ops.iter().all(|&o| o == EditOp::Delete));
}

#[test]
fn backtrace_prefers_substitution_then_deletion() {
    // "ab" vs "b": delete a, match b (no substitution can tie here).
    assert_eq!(edit_distance(&['a', 'b'], &['b']).ops, vec![EditOp::Delete, EditOp::Match]);
    // "a" vs "b c": substitute then insert, or insert then substitute; substitution wins at the last cell.
    let a = edit_distance(&['a'], &['b', 'c']);
    assert_eq!(a.ops, vec![EditOp::Insert, EditOp::Substitute]);
    // "a b" vs "c": delete or substitute at the last cell; substitution wins.
    let a = edit_distance(&['a', 'b'], &['c']);
    assert_eq!(a.ops, vec![EditOp::Delete, EditOp::Substitute]);
}

proptest! {
    #[test]
    fn distance_is_symmetric_and_satisfies_triangle(
        a in proptest::collection::vec(0u8..4, 0..12),
        b in proptest::collection::vec(0u8..4, 0..12),
        c in proptest::collection::vec(0u8..4, 0..12),
    ) {
        let ab = edit_distance(&a, &b).distance;
        prop_assert_eq!(ab, edit_distance(&b, &a).distance);
        let bc = edit_distance(&b, &c).distance;
        let ac = edit_distance(&a, &c).distance;
        prop_assert!(ac <= ab + bc);
    }

    #[test]
    fn profile_errors_sum_to_alignment_errors(
        pairs in proptest::collection::vec(
            (proptest::collection::vec(0u8..3, 0..10), proptest::collection::vec(0u8..3, 0..10)),
            1..6,
        ),
        buckets in 1usize..7,
    ) {
        let refs: Vec<Vec<u8>> = pairs.iter().map(|p| p.0.clone()).collect();
        let hyps: Vec<Vec<u8>> = pairs.iter().map(|p| p.1.clone()).collect();
        let p = position_profile(&refs, &hyps, buckets).unwrap();
        let c = error_counts(&refs, &hyps).unwrap();
        prop_assert_eq!(p.total_errors(), c.errors());
        prop_assert_eq!(p.refs.iter().sum::<usize>(), c.reference_len);
    }
}

#[test]
fn wer_examples() {
    assert_eq!(wer(&["a b c", "d e"], &["a b c", "d e"]).unwrap(), 0.0);
    assert!((wer(&["a b c"], &["a x c"]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!(wer(&[""], &["a"]).is_err());
    assert!(wer(&["a"], &[]).is_err());
    assert!((cer(&["abcd"], &["abd"]).unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn corpus_level_and_per_utterance_rates_differ() {
    let refs = ["a b c d", "e"];
    let hyps = ["a b c d", "x"];
    // One error over five words, versus the mean of 0/4 and 1/1.
    assert!((wer(&refs, &hyps).unwrap() - 0.2).abs() < 1e-15);
    assert!((mean_utterance_wer(&refs, &hyps).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn wer_ignores_utterance_order() {
    let refs = ["a b c", "d e f g", "h"];
    let hyps = ["a c", "d x f g y", "h"];
    let fwd = wer(&refs, &hyps).unwrap();
    let rr = [refs[2], refs[0], refs[1]];
    let hh = [hyps[2], hyps[0], hyps[1]];
    assert_eq!(fwd, wer(&rr, &hh).unwrap());
}

#[test]
fn profile_examples() {
    let r = vec![words("a b c d")];
    let p = position_profile(&r, &r.clone(), 4).unwrap();
    assert_eq!(p.normalized(), vec![0.0; 4]);

    let p = position_profile(&r, &[vec![]], 4).unwrap();
    assert_eq!(p.normalized(), vec![1.0; 4]);

    let p = position_profile(&r, &[words("a b c x")], 4).unwrap();
    assert_eq!(p.errors, vec![0, 0, 0, 1]);
    assert_eq!(p.refs, vec![1, 1, 1, 1]);

    // Trailing insertion lands in the last bucket, inner insertion on the next word.
    let p = position_profile(&r, &[words("a b c d e")], 2).unwrap();
    assert_eq!(p.errors, vec![0, 1]);
    let p = position_profile(&r, &[words("a z b c d")], 2).unwrap();
    assert_eq!(p.errors, vec![1, 0]);

    // Five words over two buckets: positions 0,1,2 → bucket 0 (2/5·2 = 0.8), 3,4 → bucket 1.
    let p = position_profile(&[words("a b c d e")], &[words("a b c d e")], 2).unwrap();
    assert_eq!(p.refs, vec![3, 2]);

    assert!(position_profile(&r, &r.clone(), 0).is_err());
}

#[test]
fn profile_export_formats() {
    let r = vec![words("a b c d")];
    let p = position_profile(&r, &[words("a b c x")], 2).unwrap();
    assert_eq!(p.to_table(), "bucket\tnormalized_error\n0\t0.000000\n1\t0.500000\n");
    let chart = p.to_chart(10);
    assert_eq!(chart.lines().count(), 2);
    assert!(chart.lines().nth(1).unwrap().ends_with("|#####"));

    let mut total = p.clone();
    total.merge(&p).unwrap();
    assert_eq!(total.errors, vec![0, 2]);
    assert!(total.merge(&ErrorProfile::new(3).unwrap()).is_err());
}
