/// Most frequent value; ties go to the value that appeared first.
///
/// # Panics
/// If `values` is empty. The replicate combinators never call a voter with
/// an empty slice.
pub fn majority_vote<V: PartialEq + Clone>(values: &[V]) -> V {
    assert!(!values.is_empty(), "majority vote over no values");
    let mut best = 0;
    let mut best_count = 0;
    for (i, candidate) in values.iter().enumerate() {
        // count each distinct value at its first occurrence only
        if values[..i].contains(candidate) {
            continue;
        }
        let count = values[i..].iter().filter(|v| *v == candidate).count();
        if count > best_count {
            best = i;
            best_count = count;
        }
    }
    values[best].clone()
}
