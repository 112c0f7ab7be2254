//! Transition examples harvested from sampled label sequences: for every
//! demonstration, sample, and timestep t >= 1, the pair (state at t,
//! transition a_{t-1} -> a_t), with multiplicities as weights.

use std::collections::BTreeMap;

use rand::Rng;

use crate::envs::Trajectory;
use crate::pdsl::{ActionLabel, State};
use crate::seeds::rng_for;

#[derive(Clone, Debug)]
pub struct TransitionExample {
    pub state: State,
    pub next: ActionLabel,
    pub weight: f64,
}

/// Weighted transition data grouped by source action.
#[derive(Clone, Debug, Default)]
pub struct TransitionExamples {
    per_source: Vec<Vec<TransitionExample>>,
}

impl TransitionExamples {
    pub fn num_actions(&self) -> usize {
        self.per_source.len()
    }

    pub fn for_source(&self, a: ActionLabel) -> &[TransitionExample] {
        &self.per_source[a.0]
    }

    pub fn has_source(&self, a: ActionLabel) -> bool {
        !self.per_source[a.0].is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.per_source.iter().flatten().map(|e| e.weight).sum()
    }

    pub fn num_distinct(&self) -> usize {
        self.per_source.iter().map(Vec::len).sum()
    }

    /// Ordered (source, target) pairs present in the data.
    pub fn observed_pairs(&self) -> Vec<(ActionLabel, ActionLabel)> {
        let mut pairs = Vec::new();
        for (from, examples) in self.per_source.iter().enumerate() {
            let mut seen = std::collections::BTreeSet::new();
            for e in examples {
                seen.insert(e.next.0);
            }
            for to in seen {
                pairs.push((ActionLabel(from), ActionLabel(to)));
            }
        }
        pairs
    }
}

/// Harvests weighted examples from the sampled sequences and, when the raw
/// total exceeds `cap`, retains exactly `cap` of them by a seeded
/// low-variance subsample over the weighted multiset.
pub fn collect_examples(
    demos: &[Trajectory],
    sequences: &[Vec<Vec<ActionLabel>>],
    n_actions: usize,
    cap: usize,
    seed: u64,
) -> TransitionExamples {
    assert_eq!(demos.len(), sequences.len());

    // Dedup key: (demo, timestep, prev, next) -> multiplicity.
    let mut counts: BTreeMap<(u32, u32, u16, u16), u64> = BTreeMap::new();
    for (d, (demo, seqs)) in demos.iter().zip(sequences).enumerate() {
        for seq in seqs {
            assert_eq!(
                seq.len(),
                demo.len(),
                "sampled sequence length must match the trajectory"
            );
            for t in 1..seq.len() {
                let key = (d as u32, t as u32, seq[t - 1].0 as u16, seq[t].0 as u16);
                *counts.entry(key).or_default() += 1;
            }
        }
    }

    let total: u64 = counts.values().sum();
    let keys: Vec<((u32, u32, u16, u16), u64)> =
        counts.into_iter().map(|(k, v)| (k, v)).collect();

    let retained: Vec<((u32, u32, u16, u16), f64)> = if total as usize <= cap || cap == 0 {
        keys.iter().map(|(k, v)| (*k, *v as f64)).collect()
    } else {
        // Systematic subsample over the expanded instance multiset: instance
        // j of key i occupies one unit of cumulative weight.
        let mut rng = rng_for(seed, &[crate::seeds::STREAM_SUBSAMPLE]);
        let stride = total as f64 / cap as f64;
        let mut position = rng.random::<f64>() * stride;
        let mut cumulative = 0.0;
        let mut out = Vec::new();
        for (key, w) in &keys {
            cumulative += *w as f64;
            let mut hits = 0.0;
            while position < cumulative {
                hits += 1.0;
                position += stride;
            }
            if hits > 0.0 {
                out.push((*key, hits));
            }
        }
        out
    };

    let mut per_source = vec![Vec::new(); n_actions];
    for ((d, t, prev, next), weight) in retained {
        per_source[prev as usize].push(TransitionExample {
            state: demos[d as usize].states[t as usize].clone(),
            next: ActionLabel(next as usize),
            weight,
        });
    }
    TransitionExamples { per_source }
}
