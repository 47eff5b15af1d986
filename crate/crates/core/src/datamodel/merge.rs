use std::collections::HashSet;

use super::RootIndex;

/// Union of two catalogues.
///
/// For a language present in both, `a`'s bucket list comes first followed by
/// `b`'s, with repeated CIDs dropped (first occurrence kept). Metadata and any
/// extra fields come from `a`.
pub fn merge_roots(a: &RootIndex, b: &RootIndex) -> RootIndex {
    let mut merged = a.clone();
    for (code, theirs) in &b.entries {
        match merged.entries.get_mut(code) {
            Some(ours) => {
                let mut seen = HashSet::new();
                let cids = ours
                    .cids
                    .iter()
                    .chain(&theirs.cids)
                    .filter(|c| seen.insert((*c).clone()))
                    .cloned()
                    .collect();
                ours.cids = cids;
            }
            None => {
                merged.entries.insert(code.clone(), theirs.clone());
            }
        }
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cas::compute_cid;
    use crate::datamodel::LanguageEntry;

    fn entry(tag: &str, n: usize) -> LanguageEntry {
        LanguageEntry::new(
            (0..n).map(|i| compute_cid(format!("{tag}{i}").as_bytes())).collect(),
            compute_cid(format!("{tag}-meta").as_bytes()),
        )
    }

    fn root(entries: &[(&str, LanguageEntry)]) -> RootIndex {
        RootIndex {
            entries: entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }

    #[test]
    fn empty_is_identity() {
        let r = root(&[("or", entry("or", 3))]);
        assert_eq!(merge_roots(&r, &RootIndex::new()), r);
        assert_eq!(merge_roots(&RootIndex::new(), &r), r);
    }

    #[test]
    fn disjoint_languages() {
        let or = root(&[("or", entry("or", 2))]);
        let pa = root(&[("pa-IN", entry("pa", 2))]);
        let merged = merge_roots(&or, &pa);
        assert_eq!(merged.entries.len(), 2);
        assert_eq!(merged, merge_roots(&pa, &or));
    }

    #[test]
    fn self_merge_is_idempotent() {
        let r = root(&[("or", entry("or", 3)), ("pa-IN", entry("pa", 1))]);
        assert_eq!(merge_roots(&r, &r), r);
    }

    #[test]
    fn shared_language_concatenates_and_first_meta_wins() {
        let a = root(&[("et", entry("a", 2))]);
        let mut b_entry = entry("b", 2);
        b_entry.cids.insert(0, a.entries["et"].cids[1].clone());
        let b = root(&[("et", b_entry.clone())]);
        let merged = merge_roots(&a, &b);
        let et = &merged.entries["et"];
        assert_eq!(et.meta, a.entries["et"].meta);
        assert_eq!(
            et.cids,
            vec![
                a.entries["et"].cids[0].clone(),
                a.entries["et"].cids[1].clone(),
                b_entry.cids[1].clone(),
                b_entry.cids[2].clone(),
            ]
        );
    }
}
