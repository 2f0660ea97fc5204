//! Surrogate-guided configuration search.
//!
//! Segments are clustered with flat-kernel mean shift, a few
//! representatives are drawn from each cluster, and for every
//! representative differential evolution looks for configurations that
//! maximize the surrogate's deviation on that segment.

pub mod de;
pub mod meanshift;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flightlog::Segment;
use crate::paramspec::{dedup_key_normalized, Configuration, DedupKey, ParameterTable};
use crate::predictor::SurrogateModel;
use crate::rng;

pub use de::{evolve, Evolution, SearchParams};
pub use meanshift::{meanshift_cluster, median_bandwidth, Clustering};

/// Segments fed to mean shift when more are available.
pub const DEFAULT_CLUSTER_SAMPLE: usize = 1000;
/// Segments used to estimate the bandwidth.
pub const BANDWIDTH_SAMPLE: usize = 200;
pub const BANDWIDTH_SCALE: f64 = 0.5;

/// Segment embedding: normalized contexts, flattened.
pub fn embed(model: &SurrogateModel, segment: &Segment) -> Vec<f64> {
    segment
        .contexts
        .iter()
        .flat_map(|c| model.normalizer.context(c))
        .collect()
}

/// `min(m, |cluster|)` members of each cluster, uniformly without
/// replacement. Returns indices into the clustered points, grouped by
/// cluster in cluster order.
pub fn sample_representatives(clustering: &Clustering, m: usize, seed: u64) -> Vec<usize> {
    let mut out = Vec::new();
    for (k, members) in clustering.members().into_iter().enumerate() {
        let mut r = rng::stream(seed, &[0x7E, k as u64]);
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut r, members.len(), m.min(members.len()))
            .into_iter()
            .map(|i| members[i])
            .collect();
        picked.sort_unstable();
        out.extend(picked);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub segment_id: usize,
    pub cluster: usize,
    pub flight: usize,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub clustered: usize,
    pub bandwidth: f64,
    pub clusters: usize,
    pub cluster_sizes: Vec<usize>,
}

/// Clusters (a subsample of) `segments` and picks representatives.
pub fn choose_representatives(
    model: &SurrogateModel,
    segments: &[Segment],
    params: &SearchParams,
    bandwidth: Option<f64>,
    max_clustered: usize,
    seed: u64,
) -> Result<(Vec<Representative>, ClusterSummary)> {
    if segments.is_empty() {
        return Err(Error::NoSegments);
    }
    let mut pool: Vec<usize> = (0..segments.len()).collect();
    if pool.len() > max_clustered {
        let mut r = rng::stream(seed, &[0xC1]);
        let mut picked = rand::seq::index::sample(&mut r, pool.len(), max_clustered).into_vec();
        picked.sort_unstable();
        pool = picked;
    }
    let points: Vec<Vec<f64>> = pool.iter().map(|&i| embed(model, &segments[i])).collect();
    let bandwidth = match bandwidth {
        Some(b) => b,
        None => BANDWIDTH_SCALE * median_bandwidth(&points, BANDWIDTH_SAMPLE, seed)?,
    };
    let clustering = meanshift_cluster(&points, bandwidth)?;
    let reps = sample_representatives(&clustering, params.m, seed)
        .into_iter()
        .map(|p| {
            let s = &segments[pool[p]];
            Representative {
                segment_id: pool[p],
                cluster: clustering.labels[p],
                flight: s.flight,
                start: s.start,
            }
        })
        .collect();
    let summary = ClusterSummary {
        clustered: points.len(),
        bandwidth,
        clusters: clustering.modes.len(),
        cluster_sizes: clustering.members().iter().map(Vec::len).collect(),
    };
    Ok((reps, summary))
}

/// Differential evolution on one segment; returns the top `top_k`
/// configurations (unit box) with their deviations, best first.
pub fn search_segment(
    model: &SurrogateModel,
    segment: &Segment,
    table: &ParameterTable,
    params: &SearchParams,
    seed: u64,
    segment_id: u64,
) -> Result<(Vec<(Vec<f64>, f64)>, usize)> {
    if segment.contexts.len() != model.h + 1 {
        return Err(Error::DimensionMismatch {
            expected: model.h + 1,
            actual: segment.contexts.len(),
        });
    }
    let evaluator = model.evaluator(segment, table)?;
    let center = table.normalize(&table.default_configuration());
    let init = de::initial_population(&center, params.np, params.init_spread, seed, segment_id);
    let evo = evolve(|x| evaluator.deviation_unit(x), init, params, seed, segment_id)?;
    Ok((evo.top_k(params.top_k), evo.generations))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialEntry {
    pub segment_id: usize,
    pub fitness: f64,
    pub config: Configuration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchMetadata {
    pub params: SearchParams,
    pub seed: u64,
    pub threshold: f64,
    pub representatives: Vec<Representative>,
    pub generations: Vec<usize>,
    pub clusters: Option<ClusterSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSet {
    pub parameters: Vec<String>,
    pub entries: Vec<PotentialEntry>,
    pub metadata: SearchMetadata,
}

/// Searches every representative and merges the results, keeping the
/// fittest entry per dedup key. Entries are ordered by first appearance.
pub fn run_search(
    model: &SurrogateModel,
    segments: &[Segment],
    representatives: &[Representative],
    table: &ParameterTable,
    params: &SearchParams,
    seed: u64,
) -> Result<PotentialSet> {
    params.validate()?;
    model.check_table(table)?;
    if representatives.is_empty() {
        return Err(Error::NoSegments);
    }
    let mut per_segment = Vec::with_capacity(representatives.len());
    for rep in representatives {
        let seg = segments.get(rep.segment_id).ok_or(Error::NoSegments)?;
        per_segment.push(search_segment(model, seg, table, params, seed, rep.segment_id as u64)?);
    }

    let mut entries: Vec<PotentialEntry> = Vec::new();
    let mut seen: BTreeMap<DedupKey, usize> = BTreeMap::new();
    let mut generations = Vec::with_capacity(per_segment.len());
    for (rep, (top, gens)) in representatives.iter().zip(per_segment) {
        generations.push(gens);
        for (unit, fitness) in top {
            let key = dedup_key_normalized(&unit);
            match seen.get(&key) {
                Some(&k) => {
                    if fitness > entries[k].fitness {
                        entries[k] = PotentialEntry {
                            segment_id: rep.segment_id,
                            fitness,
                            config: table.denormalize(&unit),
                        };
                    }
                }
                None => {
                    seen.insert(key, entries.len());
                    entries.push(PotentialEntry {
                        segment_id: rep.segment_id,
                        fitness,
                        config: table.denormalize(&unit),
                    });
                }
            }
        }
    }
    Ok(PotentialSet {
        parameters: table.names().map(str::to_string).collect(),
        entries,
        metadata: SearchMetadata {
            params: params.clone(),
            seed,
            threshold: model.threshold,
            representatives: representatives.to_vec(),
            generations,
            clusters: None,
        },
    })
}

impl PotentialSet {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["segment_id".to_string(), "fitness".to_string()];
        header.extend(self.parameters.iter().cloned());
        w.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![e.segment_id.to_string(), e.fitness.to_string()];
            row.extend(e.config.values().iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `<stem>.csv` and `<stem>.json` (metadata).
    pub fn save(&self, csv_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        std::fs::write(csv_path, self.to_csv_string()?).map_err(|e| Error::io(csv_path, e))?;
        let meta_path = csv_path.with_extension("json");
        let text = serde_json::to_string_pretty(&self.metadata)?;
        std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
    }

    pub fn load(csv_path: impl AsRef<Path>, table: &ParameterTable) -> Result<Self> {
        let csv_path = csv_path.as_ref();
        let origin = csv_path.display().to_string();
        let meta_path = csv_path.with_extension("json");
        let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let metadata: SearchMetadata = serde_json::from_str(&meta_text)?;
        let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let names: Vec<String> = table.names().map(str::to_string).collect();
        if header.len() != names.len() + 2 || header[2..] != names[..] {
            return Err(Error::Parse {
                path: origin,
                row: 1,
                message: "header does not match the parameter table".into(),
            });
        }
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let err = |m: String| Error::Parse {
                path: origin.clone(),
                row,
                message: m,
            };
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let segment_id = rec[0].parse().map_err(|e| err(format!("{e}")))?;
            let fitness = rec[1].parse().map_err(|e| err(format!("{e}")))?;
            let values = rec
                .iter()
                .skip(2)
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(e.to_string()))?;
            entries.push(PotentialEntry {
                segment_id,
                fitness,
                config: Configuration(values),
            });
        }
        Ok(Self {
            parameters: names,
            entries,
            metadata,
        })
    }
}
