//! Plain-text embedding files and sidecar contextual-vector files.
//!
//! Embedding file: one line per token, `token v1 v2 ... vdim`.
//! Sidecar file: one line per token occurrence,
//! `sentence_id token_index v1 ... vdim` (0-based sentence, 1-based token).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::conll::DataError;
use crate::tensor::Real;

/// Load a token -> vector map. Vectors are kept raw (not normalized).
/// A duplicated token keeps its last occurrence; a warning is logged.
pub fn load_embeddings<T: Real>(
    path: impl AsRef<Path>,
    dim: usize,
) -> Result<HashMap<String, Vec<T>>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embeddings(&text, dim)
}

pub fn parse_embeddings<T: Real>(
    text: &str,
    dim: usize,
) -> Result<HashMap<String, Vec<T>>, DataError> {
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split_whitespace();
        let token = fields.next().expect("nonempty line");
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(DataError::Parse {
                line,
                msg: format!(
                    "embedding for '{token}' has {} values, expected {dim}",
                    values.len()
                ),
            });
        }
        let vector = values
            .iter()
            .map(|v| {
                v.parse::<f64>().map(T::from_f64).map_err(|_| DataError::Parse {
                    line,
                    msg: format!("bad number '{v}'"),
                })
            })
            .collect::<Result<Vec<T>, _>>()?;
        if map.insert(token.to_string(), vector).is_some() {
            log::warn!("duplicate embedding for '{token}' at line {line}; last occurrence wins");
        }
    }
    Ok(map)
}

/// Match loaded embedding vectors against a vocabulary: returns the
/// per-row exemption mask (pretrained rows are exempt from L2) and the
/// (row, vector) pairs to copy into the table. The unknown token stays
/// trainable.
pub fn pretrained_rows<T: Real>(
    table: &HashMap<String, Vec<T>>,
    vocab: &crate::conll::Vocab,
    dim: usize,
) -> Result<(Vec<bool>, Vec<(usize, Vec<T>)>), DataError> {
    let mut mask = vec![false; vocab.n_tokens()];
    let mut rows = Vec::new();
    for id in 0..vocab.n_tokens() {
        let token = vocab.token(id).expect("dense ids");
        if let Some(vector) = table.get(token) {
            if vector.len() != dim {
                return Err(DataError::Misaligned(format!(
                    "embedding for '{token}' has dimension {}, expected {dim}",
                    vector.len()
                )));
            }
            mask[id] = true;
            rows.push((id, vector.clone()));
        }
    }
    Ok((mask, rows))
}

/// Per-occurrence contextual vectors keyed by (sentence, 0-based token).
#[derive(Debug, Clone, Default)]
pub struct ContextualVectors<T> {
    vectors: HashMap<(usize, usize), Vec<T>>,
    pub dim: usize,
}

impl<T: Real> ContextualVectors<T> {
    pub fn get(&self, sentence: usize, token: usize) -> Option<&[T]> {
        self.vectors.get(&(sentence, token)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub fn load_contextual_vectors<T: Real>(
    path: impl AsRef<Path>,
    dim: usize,
) -> Result<ContextualVectors<T>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_contextual_vectors(&text, dim)
}

pub fn parse_contextual_vectors<T: Real>(
    text: &str,
    dim: usize,
) -> Result<ContextualVectors<T>, DataError> {
    let mut vectors = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != dim + 2 {
            return Err(DataError::Parse {
                line,
                msg: format!("expected sentence, token and {dim} values, got {} fields", fields.len()),
            });
        }
        let sentence: usize = fields[0].parse().map_err(|_| DataError::Parse {
            line,
            msg: format!("bad sentence id '{}'", fields[0]),
        })?;
        let token: usize = fields[1].parse().map_err(|_| DataError::Parse {
            line,
            msg: format!("bad token index '{}'", fields[1]),
        })?;
        if token == 0 {
            return Err(DataError::Parse {
                line,
                msg: "token index is 1-based".to_string(),
            });
        }
        let vector = fields[2..]
            .iter()
            .map(|v| {
                v.parse::<f64>().map(T::from_f64).map_err(|_| DataError::Parse {
                    line,
                    msg: format!("bad number '{v}'"),
                })
            })
            .collect::<Result<Vec<T>, _>>()?;
        vectors.insert((sentence, token - 1), vector);
    }
    Ok(ContextualVectors { vectors, dim })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_lookup() {
        let map = parse_embeddings::<f64>("cat 1.0 0.0\n", 2).unwrap();
        assert_eq!(map["cat"], vec![1.0, 0.0]);
    }

    #[test]
    fn duplicate_token_last_wins() {
        let map = parse_embeddings::<f64>("cat 1.0 0.0\ncat 2.0 3.0\n", 2).unwrap();
        assert_eq!(map["cat"], vec![2.0, 3.0]);
    }

    #[test]
    fn wrong_arity_reports_line() {
        let err = parse_embeddings::<f64>("cat 1.0 0.0\ndog 1.0\n", 2).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }));
    }

    #[test]
    fn fixture_returns_exact_values() {
        let text = "a 0.5 -0.25\nb 1.0 2.0\nc -3.5 0.125\nd 0.0 0.0\ne 9.0 -9.0\n";
        let map = parse_embeddings::<f64>(text, 2).unwrap();
        let expect = [
            ("a", [0.5, -0.25]),
            ("b", [1.0, 2.0]),
            ("c", [-3.5, 0.125]),
            ("d", [0.0, 0.0]),
            ("e", [9.0, -9.0]),
        ];
        for (tok, vals) in expect {
            assert_eq!(map[tok], vals.to_vec(), "token {tok}");
        }
        assert_eq!(map.len(), 5);
    }

    #[test]
    fn contextual_vectors_keyed_by_position() {
        let text = "0 1 0.5 0.5\n0 2 1.5 2.5\n3 1 -1.0 0.0\n";
        let cv = parse_contextual_vectors::<f64>(text, 2).unwrap();
        assert_eq!(cv.get(0, 0).unwrap(), &[0.5, 0.5]);
        assert_eq!(cv.get(0, 1).unwrap(), &[1.5, 2.5]);
        assert_eq!(cv.get(3, 0).unwrap(), &[-1.0, 0.0]);
        assert!(cv.get(1, 0).is_none());
        assert!(parse_contextual_vectors::<f64>("0 0 1.0 1.0\n", 2).is_err());
    }
}
