//! Enumeration of partitions of `[m]` into singletons and pairs, cached per
//! order. There are 1, 1, 2, 4, 10, 26, 76, 232, 764 of them for m = 0..8.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// One partition of `{0, .., m-1}` into unordered pairs and singletons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPartition {
    pub pairs: Vec<(usize, usize)>,
    pub singles: Vec<usize>,
}

fn cache() -> &'static Mutex<HashMap<usize, Arc<Vec<PairPartition>>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<PairPartition>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// All pair/singleton partitions of `[m]`, in a deterministic order.
pub fn pair_partitions(m: usize) -> Arc<Vec<PairPartition>> {
    if let Some(hit) = cache().lock().unwrap().get(&m) {
        return hit.clone();
    }
    let mut out = Vec::new();
    let mut used = vec![false; m];
    let mut pairs = Vec::new();
    let mut singles = Vec::new();
    enumerate(m, &mut used, &mut pairs, &mut singles, &mut out);
    let arc = Arc::new(out);
    cache().lock().unwrap().insert(m, arc.clone());
    arc
}

fn enumerate(
    m: usize,
    used: &mut Vec<bool>,
    pairs: &mut Vec<(usize, usize)>,
    singles: &mut Vec<usize>,
    out: &mut Vec<PairPartition>,
) {
    let first = match used.iter().position(|&u| !u) {
        Some(i) => i,
        None => {
            out.push(PairPartition {
                pairs: pairs.clone(),
                singles: singles.clone(),
            });
            return;
        }
    };
    used[first] = true;
    // First element as a singleton.
    singles.push(first);
    enumerate(m, used, pairs, singles, out);
    singles.pop();
    // First element paired with each later unused element.
    for j in first + 1..m {
        if used[j] {
            continue;
        }
        used[j] = true;
        pairs.push((first, j));
        enumerate(m, used, pairs, singles, out);
        pairs.pop();
        used[j] = false;
    }
    used[first] = false;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn involution_counts() {
        let expected = [1usize, 1, 2, 4, 10, 26, 76, 232, 764];
        for (m, &count) in expected.iter().enumerate() {
            assert_eq!(pair_partitions(m).len(), count, "order {m}");
        }
    }

    #[test]
    fn partitions_cover_all_elements() {
        for part in pair_partitions(5).iter() {
            let mut seen = vec![false; 5];
            for &(a, b) in &part.pairs {
                seen[a] = true;
                seen[b] = true;
            }
            for &s in &part.singles {
                seen[s] = true;
            }
            assert!(seen.iter().all(|&s| s));
            assert_eq!(part.pairs.len() * 2 + part.singles.len(), 5);
        }
    }
}
