use std::collections::HashMap;

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Okapi BM25 over a fixed document set.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    k1: f64,
    b: f64,
    docs: Vec<HashMap<String, usize>>,
    lengths: Vec<usize>,
    df: HashMap<String, usize>,
    avgdl: f64,
}

impl Bm25Index {
    pub const K1: f64 = 1.5;
    pub const B: f64 = 0.75;

    pub fn new<S: AsRef<str>>(documents: &[S]) -> Self {
        Self::with_params(documents, Self::K1, Self::B)
    }

    pub fn with_params<S: AsRef<str>>(documents: &[S], k1: f64, b: f64) -> Self {
        let mut docs = Vec::with_capacity(documents.len());
        let mut lengths = Vec::with_capacity(documents.len());
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in documents {
            let tokens = tokenize(d.as_ref());
            lengths.push(tokens.len());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            docs.push(tf);
        }
        let avgdl = if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
        };
        Self {
            k1,
            b,
            docs,
            lengths,
            df,
            avgdl,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score of document `doc` for `query`; each distinct query term counts once.
    pub fn score(&self, query: &str, doc: usize) -> f64 {
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        self.score_terms(&terms, doc)
    }

    fn score_terms(&self, terms: &[String], doc: usize) -> f64 {
        if self.avgdl == 0.0 {
            return 0.0;
        }
        let norm = self.k1 * (1.0 - self.b + self.b * self.lengths[doc] as f64 / self.avgdl);
        terms
            .iter()
            .filter_map(|t| self.docs[doc].get(t).map(|&tf| (t, tf as f64)))
            .map(|(t, tf)| self.idf(t) * tf * (self.k1 + 1.0) / (tf + norm))
            .sum()
    }

    pub fn scores(&self, query: &str) -> Vec<f64> {
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        (0..self.docs.len())
            .map(|d| self.score_terms(&terms, d))
            .collect()
    }

    /// Indices of the `min(k, len)` best documents: descending score, ties by
    /// ascending index.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<usize> {
        let scores = self.scores(query);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(k);
        order
    }
}
