use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::{Dataset, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratifyBy {
    #[default]
    None,
    Target,
    Gold,
    TargetAndGold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stratify_by: StratifyBy,
}

/// xorshift64* (Vigna 2014): shifts 12/25/27, multiplier
/// 0x2545F4914F6CDD1D. The seed is first passed through one SplitMix64
/// step so that a zero seed still yields a non-zero state.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        XorShift64Star {
            state: if z == 0 { 0x9E37_79B9_7F4A_7C15 } else { z },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform-ish integer in `0..bound` via the high half of a 128-bit product.
    pub fn below(&mut self, bound: usize) -> usize {
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }
}

fn stratum_key(inst: &Instance, by: StratifyBy) -> String {
    let gold = || inst.gold.map_or("unlabeled", |g| g.as_str());
    match by {
        StratifyBy::None => String::new(),
        StratifyBy::Target => inst.target.clone(),
        StratifyBy::Gold => gold().to_string(),
        StratifyBy::TargetAndGold => format!("{}/{}", inst.target, gold()),
    }
}

/// Largest-remainder apportionment of `n` over stratum sizes. Exact integer
/// arithmetic; equal remainders go to the earlier stratum.
pub(crate) fn allocate(n: usize, sizes: &[usize]) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| n * s / total).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = n * sizes[a] % total;
        let rb = n * sizes[b] % total;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n - assigned) {
        alloc[i] += 1;
    }
    alloc
}

/// Deterministic sample of `spec.n` instances; output sorted by id.
pub fn subset(d: &Dataset, spec: &SubsetSpec) -> Result<Dataset, IngestError> {
    let mut sorted: Vec<&Instance> = d.instances.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let mut strata: BTreeMap<String, Vec<&Instance>> = BTreeMap::new();
    for inst in sorted {
        strata
            .entry(stratum_key(inst, spec.stratify_by))
            .or_default()
            .push(inst);
    }

    if spec.n > d.len() {
        return Err(IngestError::InsufficientInstances {
            stratum: "all".into(),
            needed: spec.n,
            available: d.len(),
        });
    }

    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let alloc = allocate(spec.n, &sizes);

    let mut rng = XorShift64Star::new(spec.seed);
    let mut picked = Vec::with_capacity(spec.n);
    for ((key, mut members), take) in strata.into_iter().zip(alloc) {
        if take > members.len() {
            return Err(IngestError::InsufficientInstances {
                stratum: key,
                needed: take,
                available: members.len(),
            });
        }
        // partial Fisher-Yates: the first `take` slots become the sample
        for i in 0..take {
            let j = i + rng.below(members.len() - i);
            members.swap(i, j);
        }
        picked.extend(members.into_iter().take(take).cloned());
    }
    picked.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Dataset::new(d.name.clone(), d.scheme, picked))
}
