use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Rng;

/// Truncated-BPTT grid: utterances are processed `parallel_utterances` at a
/// time, cut into aligned chunks of `chunk_frames`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpttPlan {
    pub chunk_frames: usize,
    pub parallel_utterances: usize,
}

impl Default for BpttPlan {
    fn default() -> Self {
        BpttPlan { chunk_frames: 20, parallel_utterances: 20 }
    }
}

impl BpttPlan {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_frames == 0 {
            return Err(Error::parameter("chunk_frames", "must be at least 1"));
        }
        if self.parallel_utterances == 0 {
            return Err(Error::parameter("parallel_utterances", "must be at least 1"));
        }
        Ok(())
    }
}

/// One member of a chunk-batch: the utterance index and how many of the
/// chunk's frames it actually has. Frames at or beyond `active` are masked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkMember {
    pub item: usize,
    pub active: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkBatch {
    /// Index of the utterance group this chunk belongs to.
    pub group: usize,
    /// Position of the chunk within its group (0 starts fresh states).
    pub chunk: usize,
    pub start: usize,
    pub frames: usize,
    pub members: Vec<ChunkMember>,
}

impl ChunkBatch {
    pub fn is_masked(&self, member: usize, offset: usize) -> bool {
        offset >= self.members[member].active
    }

    pub fn active_frames(&self) -> usize {
        self.members.iter().map(|m| m.active).sum()
    }

    pub fn masked_frames(&self) -> usize {
        self.members.len() * self.frames - self.active_frames()
    }
}

/// Shuffles utterance order, groups and cuts into chunks. `lengths[i]` is the
/// frame count of item `i`. Utterances keep their membership for the whole
/// group so recurrent state can be carried from chunk to chunk.
pub fn make_batches(lengths: &[usize], plan: &BpttPlan, rng: &mut Rng) -> Vec<ChunkBatch> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    rng.shuffle(&mut order);
    let mut batches = Vec::new();
    for (group, items) in order.chunks(plan.parallel_utterances.max(1)).enumerate() {
        let longest = items.iter().map(|&i| lengths[i]).max().unwrap_or(0);
        let step = plan.chunk_frames.max(1);
        for (chunk, start) in (0..longest).step_by(step).enumerate() {
            let members = items
                .iter()
                .map(|&i| ChunkMember { item: i, active: lengths[i].saturating_sub(start).min(step) })
                .collect();
            batches.push(ChunkBatch { group, chunk, start, frames: step, members });
        }
    }
    batches
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    #[test]
    fn exact_grid_has_no_masking() {
        let batches = make_batches(&[40; 20], &BpttPlan::default(), &mut Rng::new(1));
        assert_eq!(batches.len(), 2);
        assert!(batches.iter().all(|b| b.masked_frames() == 0 && b.members.len() == 20));
        assert_eq!(batches[1].start, 20);
    }

    #[test]
    fn short_utterance_is_masked_after_its_end() {
        let batches = make_batches(&[25, 40], &BpttPlan::default(), &mut Rng::new(1));
        assert_eq!(batches.len(), 2);
        let masked: usize = batches.iter().map(|b| b.masked_frames()).sum();
        assert_eq!(masked, 15);
        let last = &batches[1];
        let short = last.members.iter().position(|m| m.item == 0).unwrap();
        assert_eq!(last.members[short].active, 5);
        assert!(last.is_masked(short, 5) && !last.is_masked(short, 4));
    }

    #[test]
    fn shuffle_is_seeded() {
        let lengths: Vec<usize> = (1..60).collect();
        let a = make_batches(&lengths, &BpttPlan::default(), &mut Rng::new(9));
        let b = make_batches(&lengths, &BpttPlan::default(), &mut Rng::new(9));
        let c = make_batches(&lengths, &BpttPlan::default(), &mut Rng::new(10));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn unmasked_frames_cover_corpus_once(
            lengths in proptest::collection::vec(0usize..90, 1..50),
            chunk in 1usize..30,
            parallel in 1usize..25,
            seed in any::<u64>(),
        ) {
            let plan = BpttPlan { chunk_frames: chunk, parallel_utterances: parallel };
            let batches = make_batches(&lengths, &plan, &mut Rng::new(seed));
            let total: usize = batches.iter().map(|b| b.active_frames()).sum();
            prop_assert_eq!(total, lengths.iter().sum::<usize>());
            let mut seen = vec![0usize; lengths.len()];
            for b in &batches {
                for m in &b.members {
                    if m.active > 0 {
                        prop_assert_eq!(seen[m.item], b.start);
                    }
                    seen[m.item] += m.active;
                }
            }
        }
    }
}
