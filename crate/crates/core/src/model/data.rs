use std::io::BufRead;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, ParseError};

/// Sparse feature vector with strictly increasing 0-based indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn from_dense(v: &[f64]) -> Self {
        let (indices, values) = v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, x)| (i, *x)).unzip();
        Self { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn dot(&self, x: &DVector<f64>) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, v)| v * x[i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<SparseVector>,
    pub labels: Vec<f64>,
    pub n_features: usize,
}

impl Dataset {
    pub fn new(samples: Vec<SparseVector>, labels: Vec<f64>, n_features: usize) -> Result<Self, ModelError> {
        if samples.len() != labels.len() {
            return Err(ModelError::Dimension { expected: samples.len(), got: labels.len() });
        }
        for s in &samples {
            if let Some(&last) = s.indices.last() {
                if last >= n_features {
                    return Err(ModelError::Dimension { expected: n_features, got: last + 1 });
                }
            }
        }
        Ok(Self { samples, labels, n_features })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Errors unless every label is exactly -1 or +1.
    pub fn check_binary_labels(&self) -> Result<(), ModelError> {
        check_binary(&self.labels)
    }
}

pub(crate) fn check_binary(labels: &[f64]) -> Result<(), ModelError> {
    match labels.iter().position(|&b| b != 1.0 && b != -1.0) {
        Some(index) => Err(ModelError::BadLabel { index, label: labels[index] }),
        None => Ok(()),
    }
}

/// Reads LIBSVM text: `<label> <idx>:<val> ...` with 1-based increasing indices.
///
/// `n_features` overrides the width inferred from the largest index; it must
/// not be smaller than any index present.
pub fn parse_libsvm<R: BufRead>(reader: R, n_features: Option<usize>) -> Result<Dataset, ParseError> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| ParseError::Io(e.to_string()))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |msg: String| ParseError::Line { line: lineno, msg };
        let mut tokens = body.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("label `{label_tok}` is not a number")))?;
        if !label.is_finite() {
            return Err(err(format!("label `{label_tok}` is not finite")));
        }
        let mut sample = SparseVector::default();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("token `{tok}` is not `index:value`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("index `{idx}` is not a positive integer")))?;
            if idx == 0 {
                return Err(err("indices are 1-based; found 0".into()));
            }
            let val: f64 = val.parse().map_err(|_| err(format!("value `{val}` is not a number")))?;
            if !val.is_finite() {
                return Err(err(format!("value `{val}` is not finite")));
            }
            if let Some(&prev) = sample.indices.last() {
                if idx - 1 <= prev {
                    return Err(err(format!("index {idx} does not increase (previous {})", prev + 1)));
                }
            }
            sample.indices.push(idx - 1);
            sample.values.push(val);
            width = width.max(idx);
        }
        samples.push(sample);
        labels.push(label);
    }
    if samples.is_empty() {
        return Err(ParseError::Empty);
    }
    let n_features = match n_features {
        Some(n) if n < width => {
            return Err(ParseError::Line {
                line: 0,
                msg: format!("n_features override {n} is below the largest index {width}"),
            })
        }
        Some(n) => n,
        None => width,
    };
    Ok(Dataset { samples, labels, n_features })
}

pub fn parse_libsvm_str(text: &str, n_features: Option<usize>) -> Result<Dataset, ParseError> {
    parse_libsvm(text.as_bytes(), n_features)
}

/// One agent's slice of the data with a dense local design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentShard {
    pub agent_id: usize,
    /// Indices into the parent dataset, in local row order.
    pub indices: Vec<usize>,
    /// `m_i x n` design matrix.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AgentShard {
    pub fn from_dense(agent_id: usize, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, ModelError> {
        if a.nrows() != b.len() {
            return Err(ModelError::Dimension { expected: a.nrows(), got: b.len() });
        }
        let indices = (0..a.nrows()).collect();
        Ok(Self { agent_id, indices, a, b })
    }

    pub fn n_samples(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.a.ncols()
    }
}

/// Seeded random permutation, then contiguous blocks; the first `m mod N`
/// agents get one extra sample.
pub fn partition(dataset: &Dataset, n_agents: usize, seed: u64) -> Result<Vec<AgentShard>, ModelError> {
    let m = dataset.n_samples();
    if n_agents == 0 {
        return Err(ModelError::NoAgents);
    }
    if m < n_agents {
        return Err(ModelError::TooManyAgents { agents: n_agents, samples: m });
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (base, rem) = (m / n_agents, m % n_agents);
    let n = dataset.n_features;
    let mut start = 0;
    let mut shards = Vec::with_capacity(n_agents);
    for agent_id in 0..n_agents {
        let size = base + usize::from(agent_id < rem);
        let indices = perm[start..start + size].to_vec();
        start += size;
        let mut a = DMatrix::zeros(size, n);
        let mut b = DVector::zeros(size);
        for (row, &j) in indices.iter().enumerate() {
            let s = &dataset.samples[j];
            for (&c, &v) in s.indices.iter().zip(&s.values) {
                a[(row, c)] = v;
            }
            b[row] = dataset.labels[j];
        }
        shards.push(AgentShard { agent_id, indices, a, b });
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sparse_line() {
        let d = parse_libsvm_str("-1 1:0.5 3:2\n", None).unwrap();
        assert_eq!(d.labels, vec![-1.0]);
        assert_eq!(d.samples[0].indices, vec![0, 2]);
        assert_eq!(d.samples[0].values, vec![0.5, 2.0]);
        assert_eq!(d.n_features, 3);
    }

    #[test]
    fn label_without_features() {
        let d = parse_libsvm_str("+1\n", Some(4)).unwrap();
        assert_eq!(d.labels, vec![1.0]);
        assert_eq!(d.samples[0].nnz(), 0);
        assert_eq!(d.n_features, 4);
    }

    #[test]
    fn rejects_decreasing_indices() {
        let err = parse_libsvm_str("1 1:1\n1 3:0.5 2:1\n", None).unwrap_err();
        assert!(matches!(err, ParseError::Line { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!(parse_libsvm_str("\n\n", None), Err(ParseError::Empty));
        assert!(matches!(parse_libsvm_str("x 1:1", None), Err(ParseError::Line { line: 1, .. })));
        assert!(matches!(parse_libsvm_str("1 1:y", None), Err(ParseError::Line { .. })));
        assert!(matches!(parse_libsvm_str("1 0:1", None), Err(ParseError::Line { .. })));
        assert!(matches!(parse_libsvm_str("1 2", None), Err(ParseError::Line { .. })));
        assert!(parse_libsvm_str("1 5:1", Some(3)).is_err());
    }

    fn toy(m: usize) -> Dataset {
        let samples = (0..m).map(|j| SparseVector::from_dense(&[j as f64, 1.0])).collect();
        Dataset::new(samples, (0..m).map(|j| j as f64).collect(), 2).unwrap()
    }

    #[test]
    fn partition_sizes() {
        let sizes = |n| partition(&toy(10), n, 1).unwrap().iter().map(|s| s.n_samples()).collect::<Vec<_>>();
        assert_eq!(sizes(2), vec![5, 5]);
        assert_eq!(sizes(3), vec![4, 3, 3]);
    }

    #[test]
    fn partition_covers_and_is_deterministic() {
        let a = partition(&toy(17), 4, 9).unwrap();
        let b = partition(&toy(17), 4, 9).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.iter().flat_map(|s| s.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..17).collect::<Vec<_>>());
        for s in &a {
            for (row, &j) in s.indices.iter().enumerate() {
                assert_eq!(s.b[row], j as f64);
                assert_eq!(s.a[(row, 0)], j as f64);
            }
        }
    }

    #[test]
    fn partition_errors() {
        assert_eq!(partition(&toy(3), 4, 0), Err(ModelError::TooManyAgents { agents: 4, samples: 3 }));
        assert_eq!(partition(&toy(3), 0, 0), Err(ModelError::NoAgents));
    }
}
