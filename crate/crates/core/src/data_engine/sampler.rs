//! Weighted sampling over subset units.
//!
//! Subsets are drawn with replacement in proportion to their weights; each
//! subset then yields records from its own stream, reshuffled on every pass.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentationPolicy, TaskKind, TrainingSample};
use super::records::SourceRecord;
use super::DataError;

const SUBSET_STREAM_BASE: u64 = 1 << 32;
const AUGMENT_STREAM_BASE: u64 = 1 << 48;

/// Independent generator for `(seed, stream)`.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetUnit {
    pub name: String,
    pub task: TaskKind,
    pub weight: f64,
    pub records: Vec<SourceRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub draw: u64,
    pub subset: String,
    pub record_id: String,
    /// Pass number over the subset's stream.
    pub pass: u64,
}

struct Stream {
    order: Vec<usize>,
    cursor: usize,
    pass: u64,
    rng: ChaCha8Rng,
}

impl Stream {
    fn new(len: usize, rng: ChaCha8Rng) -> Self {
        let mut s = Self {
            order: (0..len).collect(),
            cursor: 0,
            pass: 0,
            rng,
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    fn next(&mut self) -> (usize, u64) {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.pass += 1;
        }
        self.cursor += 1;
        (self.order[self.cursor - 1], self.pass)
    }
}

/// Deterministic single-stream sampler.
pub struct WeightedSampler {
    units: Vec<SubsetUnit>,
    index: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    streams: Vec<Stream>,
    draws: u64,
}

impl WeightedSampler {
    /// Empty subsets are excluded up front with a warning, which is the same
    /// distribution as re-drawing whenever one is hit.
    pub fn new(units: Vec<SubsetUnit>, seed: u64) -> Result<Self, DataError> {
        for u in &units {
            if !u.weight.is_finite() || u.weight < 0.0 {
                return Err(DataError::InvalidWeights(format!(
                    "subset {:?} has weight {}",
                    u.name, u.weight
                )));
            }
        }
        let mut kept = Vec::with_capacity(units.len());
        for (i, u) in units.into_iter().enumerate() {
            if u.records.is_empty() {
                log::warn!("subset {:?} is empty and will never be drawn", u.name);
                continue;
            }
            kept.push((i as u64, u));
        }
        if !kept.iter().any(|(_, u)| u.weight > 0.0) {
            return Err(DataError::InvalidWeights(
                "no non-empty subset has positive weight".into(),
            ));
        }
        let index = WeightedIndex::new(kept.iter().map(|(_, u)| u.weight))
            .map_err(|e| DataError::InvalidWeights(e.to_string()))?;
        let streams = kept
            .iter()
            .map(|(i, u)| Stream::new(u.records.len(), derive_rng(seed, SUBSET_STREAM_BASE + i)))
            .collect();
        Ok(Self {
            units: kept.into_iter().map(|(_, u)| u).collect(),
            index,
            rng: derive_rng(seed, 0),
            streams,
            draws: 0,
        })
    }

    pub fn units(&self) -> &[SubsetUnit] {
        &self.units
    }

    /// Next draw as (subset index, record, provenance).
    pub fn sample_next(&mut self) -> (usize, &SourceRecord, Provenance) {
        let s = self.index.sample(&mut self.rng);
        let (r, pass) = self.streams[s].next();
        let unit = &self.units[s];
        let rec = &unit.records[r];
        let prov = Provenance {
            draw: self.draws,
            subset: unit.name.clone(),
            record_id: rec.id().to_string(),
            pass,
        };
        self.draws += 1;
        (s, rec, prov)
    }
}

/// Consumer `k` of `m`: yields draws `k, k+m, k+2m, ...` of the shared stream.
pub struct StridedSampler {
    inner: WeightedSampler,
    k: u64,
    m: u64,
}

impl StridedSampler {
    pub fn new(inner: WeightedSampler, k: u64, m: u64) -> Result<Self, DataError> {
        if m == 0 || k >= m {
            return Err(DataError::Config(format!("invalid stride: consumer {k} of {m}")));
        }
        Ok(Self { inner, k, m })
    }

    pub fn sample_next(&mut self) -> (SourceRecord, Provenance) {
        while self.inner.draws % self.m != self.k {
            self.inner.sample_next();
        }
        let (_, rec, prov) = self.inner.sample_next();
        (rec.clone(), prov)
    }
}

/// Draws `n` records and augments them. Draw order is sequential; augmentation
/// runs on `jobs` workers with a per-draw generator, so the output does not
/// depend on `jobs`.
pub fn generate_samples(
    units: Vec<SubsetUnit>,
    policy: &AugmentationPolicy,
    seed: u64,
    n: usize,
    jobs: usize,
) -> Result<Vec<TrainingSample>, DataError> {
    policy.validate()?;
    let mut sampler = WeightedSampler::new(units, seed)?;
    let draws: Vec<(usize, SourceRecord, Provenance)> = (0..n)
        .map(|_| {
            let (s, rec, prov) = sampler.sample_next();
            (s, rec.clone(), prov)
        })
        .collect();
    let run = |draws: &[(usize, SourceRecord, Provenance)]| -> Result<Vec<TrainingSample>, DataError> {
        draws
            .par_iter()
            .map(|(s, rec, prov)| {
                let mut rng = derive_rng(seed, AUGMENT_STREAM_BASE + prov.draw);
                augment(rec, sampler.units()[*s].task, policy, prov.clone(), &mut rng)
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| DataError::Config(e.to_string()))?;
    pool.install(|| run(&draws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_engine::records::GroundingRecord;
    use crate::geometry::HBox;
    use crate::resolution::ImageGeometry;

    fn unit(name: &str, weight: f64, n: usize) -> SubsetUnit {
        let records = (0..n)
            .map(|i| {
                SourceRecord::Grounding(GroundingRecord {
                    image: format!("{name}/{i}.png"),
                    geometry: ImageGeometry::new(100, 100).unwrap(),
                    expression: "a ship".into(),
                    target: HBox::new(1.0, 1.0, 50.0, 50.0).unwrap(),
                })
            })
            .collect();
        SubsetUnit {
            name: name.into(),
            task: TaskKind::Grounding,
            weight,
            records,
        }
    }

    #[test]
    fn zero_weight_never_drawn() {
        let mut s = WeightedSampler::new(vec![unit("a", 1.0, 3), unit("b", 0.0, 3)], 1).unwrap();
        for _ in 0..1000 {
            assert_eq!(s.sample_next().2.subset, "a");
        }
    }

    #[test]
    fn each_pass_visits_every_record() {
        let mut s = WeightedSampler::new(vec![unit("a", 1.0, 5)], 9).unwrap();
        let mut ids: Vec<String> = (0..5).map(|_| s.sample_next().2.record_id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 5);
        assert_eq!(s.sample_next().2.pass, 1);
    }

    #[test]
    fn bad_weights_rejected() {
        assert!(WeightedSampler::new(vec![unit("a", 0.0, 2)], 1).is_err());
        assert!(WeightedSampler::new(vec![unit("a", -1.0, 2)], 1).is_err());
        assert!(WeightedSampler::new(vec![unit("a", 1.0, 0), unit("b", 0.0, 1)], 1).is_err());
        assert!(WeightedSampler::new(vec![unit("a", 1.0, 0), unit("b", 1.0, 1)], 1).is_ok());
    }

    #[test]
    fn striding_partitions_the_stream() {
        let units = vec![unit("a", 1.0, 4), unit("b", 2.0, 7)];
        let mut full = WeightedSampler::new(units.clone(), 5).unwrap();
        let all: Vec<Provenance> = (0..30).map(|_| full.sample_next().2).collect();
        for k in 0..3 {
            let mut c = StridedSampler::new(WeightedSampler::new(units.clone(), 5).unwrap(), k, 3).unwrap();
            for j in 0..10 {
                assert_eq!(c.sample_next().1, all[(k + 3 * j) as usize]);
            }
        }
    }
}
