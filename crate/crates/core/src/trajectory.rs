//! JSON-lines trajectory dumps: the per-iteration coupling distributions
//! of every instance, written by `predict --dump-trajectory` and consumed
//! by `analyze --mode transitions` / `--mode duplicates`.
//!
//! Line 1 is a meta record with the role labels; each further line holds
//! one instance with `distributions[iteration][token][role]` for
//! iterations `1..=T`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capsule::{ModelError, Prediction};
use crate::conll::NONE_ROLE_ID;
use crate::tensor::Real;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub labels: Vec<String>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub instance: usize,
    pub sentence: usize,
    pub predicate: usize,
    /// `[iteration][token][role]`, iterations 1..=T.
    pub distributions: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryDump {
    pub meta: TrajectoryMeta,
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectoryDump {
    pub fn from_predictions<T: Real>(
        labels: Vec<String>,
        predictions: &[Prediction<T>],
        instances: &[crate::conll::PredicateInstance],
    ) -> TrajectoryDump {
        let iterations = predictions
            .first()
            .map(|p| p.per_iteration.len())
            .unwrap_or(0);
        let records = predictions
            .iter()
            .zip(instances)
            .enumerate()
            .map(|(q, (pred, inst))| TrajectoryRecord {
                instance: q,
                sentence: inst.sentence,
                predicate: inst.predicate_index,
                distributions: pred
                    .per_iteration
                    .iter()
                    .map(|d| {
                        let (n, m) = (d.shape().dim(0), d.shape().dim(1));
                        (0..n)
                            .map(|i| (0..m).map(|j| d.at2(i, j).as_f64()).collect())
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        TrajectoryDump {
            meta: TrajectoryMeta { labels, iterations },
            records,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        let mut out = serde_json::to_string(&self.meta).expect("meta serializes");
        out.push('\n');
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).expect("record serializes"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrajectoryDump, ModelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let meta_line = lines
            .next()
            .ok_or_else(|| ModelError::Config("empty trajectory dump".into()))?;
        let meta: TrajectoryMeta = serde_json::from_str(meta_line)
            .map_err(|e| ModelError::Config(format!("bad trajectory meta: {e}")))?;
        let records = lines
            .map(|l| {
                serde_json::from_str(l)
                    .map_err(|e| ModelError::Config(format!("bad trajectory record: {e}")))
            })
            .collect::<Result<Vec<TrajectoryRecord>, _>>()?;
        Ok(TrajectoryDump { meta, records })
    }

    /// Argmax labels per iteration: `[iteration][instance][token]`.
    /// Ties resolve to the lowest role id.
    pub fn labelings(&self) -> Vec<Vec<Vec<usize>>> {
        let iters = self.meta.iterations;
        (0..iters)
            .map(|t| {
                self.records
                    .iter()
                    .map(|rec| {
                        rec.distributions[t]
                            .iter()
                            .map(|row| {
                                let mut best = NONE_ROLE_ID;
                                for (j, &v) in row.iter().enumerate() {
                                    if v > row[best] {
                                        best = j;
                                    }
                                }
                                best
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labelings_take_argmax_with_low_id_ties() {
        let dump = TrajectoryDump {
            meta: TrajectoryMeta {
                labels: vec!["None".into(), "A0".into()],
                iterations: 2,
            },
            records: vec![TrajectoryRecord {
                instance: 0,
                sentence: 0,
                predicate: 0,
                distributions: vec![
                    vec![vec![0.5, 0.5], vec![0.1, 0.9]],
                    vec![vec![0.9, 0.1], vec![0.9, 0.1]],
                ],
            }],
        };
        let labelings = dump.labelings();
        assert_eq!(labelings.len(), 2);
        assert_eq!(labelings[0][0], vec![0, 1]); // tie goes to id 0
        assert_eq!(labelings[1][0], vec![0, 0]);
    }

    #[test]
    fn dump_roundtrips_through_file() {
        let dump = TrajectoryDump {
            meta: TrajectoryMeta {
                labels: vec!["None".into(), "A0".into()],
                iterations: 1,
            },
            records: vec![TrajectoryRecord {
                instance: 0,
                sentence: 3,
                predicate: 1,
                distributions: vec![vec![vec![0.25, 0.75]]],
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.jsonl");
        dump.save(&path).unwrap();
        let loaded = TrajectoryDump::load(&path).unwrap();
        assert_eq!(loaded.meta.labels, dump.meta.labels);
        assert_eq!(loaded.records[0].distributions, dump.records[0].distributions);
    }
}
