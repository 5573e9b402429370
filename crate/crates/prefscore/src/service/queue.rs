//! Task queue construction: seeded order, repeat weaving and the per-category
//! pair sample.

use prefscore_core::graph::sample_budget_pairs;
use prefscore_core::stats::protocol::all_pairs;
use prefscore_core::{keyed_rng, mix_key, ImageId};
use rand::seq::{index, SliceRandom};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueEntry {
    /// Index into the category's item list (images or pairs).
    pub item: usize,
    pub is_repeat: bool,
}

/// Shuffles `0..len` and re-inserts `repeats` of the items later in the
/// queue so that at least `min_gap` tasks separate each item from its
/// repeat. The queue has `len + repeats` entries.
pub fn build_queue(len: usize, repeats: usize, min_gap: usize, seed: u64) -> Result<Vec<QueueEntry>, String> {
    if len <= min_gap || repeats > len - min_gap {
        return Err(format!("{repeats} repeats with gap {min_gap} do not fit a queue of {len}"));
    }
    let mut rng = keyed_rng(seed, 0);
    let mut base: Vec<usize> = (0..len).collect();
    base.shuffle(&mut rng);
    // positions whose repeat can still sit min_gap items later
    let eligible = len - min_gap;
    let mut chosen: Vec<usize> = index::sample(&mut rng, eligible, repeats).into_vec();
    chosen.sort_unstable();
    // a repeat placed before base slot s has s - p - 1 base items in between
    let mut slots: Vec<(usize, usize)> =
        chosen.into_iter().map(|p| (rng.random_range(p + min_gap + 1..=len), p)).collect();
    slots.sort_unstable();
    let mut out = Vec::with_capacity(len + repeats);
    let mut next = slots.iter().peekable();
    for s in 0..=len {
        while let Some(&&(slot, p)) = next.peek() {
            if slot != s {
                break;
            }
            out.push(QueueEntry { item: base[p], is_repeat: true });
            next.next();
        }
        if s < len {
            out.push(QueueEntry { item: base[s], is_repeat: false });
        }
    }
    Ok(out)
}

/// Smallest number of tasks between any entry and its repeat, if any.
pub fn min_repeat_gap(queue: &[QueueEntry]) -> Option<usize> {
    queue
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_repeat)
        .map(|(i, e)| {
            let first = queue.iter().position(|o| o.item == e.item && !o.is_repeat).expect("repeat without original");
            i - first - 1
        })
        .min()
}

/// The category's shared pair set: every pair when the budget covers them
/// all, otherwise a seeded sample that keeps the graph connected with
/// bounded diameter.
pub fn category_pairs(
    images: &[ImageId],
    budget: usize,
    max_diameter: usize,
    seed: u64,
    attempts: usize,
) -> prefscore_core::Result<Vec<(ImageId, ImageId)>> {
    let mut sorted = images.to_vec();
    sorted.sort();
    let n = sorted.len();
    if budget >= n * n.saturating_sub(1) / 2 {
        return Ok(all_pairs(&sorted));
    }
    sample_budget_pairs(&sorted, budget, max_diameter, seed, attempts)
}

/// Per-annotator seed for queue order and presentation side.
pub fn annotator_seed(campaign_seed: u64, annotator: &str, category: &str, phase: &[u8]) -> u64 {
    mix_key(&[&campaign_seed.to_le_bytes(), annotator.as_bytes(), category.as_bytes(), phase])
}

/// Whether the annotator sees pair `(a, b)` as `(b, a)`.
pub fn shows_swapped(seed: u64, a: &ImageId, b: &ImageId) -> bool {
    mix_key(&[&seed.to_le_bytes(), a.as_str().as_bytes(), b.as_str().as_bytes()]) & 1 == 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use prefscore_core::graph::ComparisonGraph;

    #[test]
    fn pointwise_queue_shape() {
        for seed in 0..50 {
            let q = build_queue(50, 10, 5, seed).unwrap();
            assert_eq!(q.len(), 60);
            assert_eq!(q.iter().filter(|e| e.is_repeat).count(), 10);
            assert!(min_repeat_gap(&q).unwrap() >= 5);
            let mut originals: Vec<usize> = q.iter().filter(|e| !e.is_repeat).map(|e| e.item).collect();
            originals.sort_unstable();
            assert_eq!(originals, (0..50).collect::<Vec<_>>());
        }
    }

    #[test]
    fn pairwise_queue_shape() {
        for seed in 0..20 {
            let q = build_queue(612, 30, 10, seed).unwrap();
            assert_eq!(q.len(), 642);
            assert_eq!(q.iter().filter(|e| e.is_repeat).count(), 30);
            assert!(min_repeat_gap(&q).unwrap() >= 10);
        }
    }

    #[test]
    fn tight_queues() {
        // every eligible position repeats and the gap is exactly met
        let q = build_queue(6, 3, 3, 1).unwrap();
        assert_eq!(q.len(), 9);
        assert!(min_repeat_gap(&q).unwrap() >= 3);
        assert!(build_queue(6, 4, 3, 1).is_err());
        assert!(build_queue(3, 0, 3, 1).is_err());
        assert_eq!(build_queue(4, 0, 1, 1).unwrap().len(), 4);
    }

    #[test]
    fn pair_sample_is_connected_and_shallow() {
        let ids: Vec<ImageId> = (0..50).map(|i| ImageId::new(format!("p{i:02}"))).collect();
        let pairs = category_pairs(&ids, 612, 2, 9, 1000).unwrap();
        assert_eq!(pairs.len(), 612);
        let g = ComparisonGraph::from_pairs(pairs.iter().map(|(a, b)| (a, b)));
        assert!(g.stats().unwrap().diameter <= 2);
        assert_eq!(category_pairs(&ids[..5], 612, 2, 9, 10).unwrap().len(), 10);
    }
}
