//! Pairwise longest common subsequence with a deterministic tie-break:
//! among all common subsequences of maximal length, the lexicographically
//! smallest one (by `char` order) is returned.

use std::collections::BTreeMap;

pub(crate) fn lcs_smallest(a: &[char], b: &[char]) -> Vec<char> {
    let n = a.len();
    let m = b.len();
    if n == 0 || m == 0 {
        return Vec::new();
    }

    // suffix[i][j] = LCS length of a[i..] and b[j..]
    let width = m + 1;
    let mut suffix = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i * width + j] = if a[i] == b[j] {
                suffix[(i + 1) * width + j + 1] + 1
            } else {
                suffix[(i + 1) * width + j].max(suffix[i * width + j + 1])
            };
        }
    }

    let positions = |s: &[char]| {
        let mut map: BTreeMap<char, Vec<usize>> = BTreeMap::new();
        for (idx, &c) in s.iter().enumerate() {
            map.entry(c).or_default().push(idx);
        }
        map
    };
    let pos_a = positions(a);
    let pos_b = positions(b);
    let next_at = |list: &[usize], from: usize| {
        let k = list.partition_point(|&p| p < from);
        list.get(k).copied()
    };

    let mut out = Vec::with_capacity(suffix[0] as usize);
    let (mut i, mut j) = (0usize, 0usize);
    let mut remaining = suffix[0];
    while remaining > 0 {
        let mut advanced = false;
        // BTreeMap iterates characters in ascending order.
        for (c, in_a) in &pos_a {
            let Some(in_b) = pos_b.get(c) else { continue };
            let (Some(ia), Some(jb)) = (next_at(in_a, i), next_at(in_b, j)) else {
                continue;
            };
            if suffix[(ia + 1) * width + jb + 1] + 1 == remaining {
                out.push(*c);
                i = ia + 1;
                j = jb + 1;
                remaining -= 1;
                advanced = true;
                break;
            }
        }
        debug_assert!(advanced, "suffix table guarantees a continuation");
        if !advanced {
            break;
        }
    }
    out
}
