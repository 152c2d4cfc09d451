//! Tokenization and TF-IDF vocabulary fitting.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

/// Lowercases `text` and returns its maximal alphanumeric runs of length at
/// least two.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_string)
        .collect()
}

/// Adjacent token pairs joined by a single space.
pub fn bigrams(tokens: &[String]) -> Vec<String> {
    tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])).collect()
}

/// Unigrams followed by bigrams (when `max_ngram >= 2`).
pub fn terms(text: &str, max_ngram: usize) -> Vec<String> {
    let mut toks = tokenize(text);
    if max_ngram >= 2 {
        let bi = bigrams(&toks);
        toks.extend(bi);
    }
    toks
}

/// Smoothed inverse document frequency.
pub fn idf(n_docs: usize, doc_freq: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + doc_freq as f64)).ln() + 1.0
}

/// Term vocabulary of one text column with per-term idf weights. Terms are
/// stored in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVocabulary {
    pub terms: Vec<String>,
    pub idf: Vec<f64>,
    pub max_ngram: usize,
}

impl TfidfVocabulary {
    /// Keeps the `max_features` terms with the highest document frequency,
    /// ties broken lexicographically.
    pub fn fit<'a>(
        docs: impl IntoIterator<Item = Option<&'a str>>,
        max_features: usize,
        max_ngram: usize,
    ) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let uniq: HashSet<String> = terms(doc.unwrap_or(""), max_ngram).into_iter().collect();
            for t in uniq {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_features);
        ranked.sort_by(|a, b| a.0.cmp(&b.0));
        let idf = ranked.iter().map(|(_, d)| idf(n_docs, *d)).collect();
        Self {
            terms: ranked.into_iter().map(|(t, _)| t).collect(),
            idf,
            max_ngram,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect()
    }

    /// Raw-count tf times idf, L2-normalized; written into `out`.
    pub fn encode(&self, index: &HashMap<&str, usize>, doc: &str, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in terms(doc, self.max_ngram) {
            if let Some(&k) = index.get(t.as_str()) {
                out[k] += 1.0;
            }
        }
        let mut norm = 0.0;
        for (v, w) in out.iter_mut().zip(&self.idf) {
            *v *= w;
            norm += *v * *v;
        }
        if norm > 0.0 {
            let norm = norm.sqrt();
            out.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_example() {
        let t = tokenize("Debate Club, 4 yrs");
        assert_eq!(t, vec!["debate", "club", "yrs"]);
        assert_eq!(bigrams(&t), vec!["debate club", "club yrs"]);
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn repeated_bigram_counts() {
        let t = tokenize("AP-Chem AP-Chem");
        assert_eq!(t, vec!["ap", "chem", "ap", "chem"]);
        let b = bigrams(&t);
        assert_eq!(b.iter().filter(|s| *s == "ap chem").count(), 2);
    }

    #[test]
    fn idf_of_three_docs() {
        let docs = ["research lab", "research", "music"];
        let v = TfidfVocabulary::fit(docs.iter().map(|d| Some(*d)), 10, 2);
        let k = v.terms.iter().position(|t| t == "research").unwrap();
        assert!((v.idf[k] - ((4.0f64 / 3.0).ln() + 1.0)).abs() < 1e-15);
        assert!((v.idf[k] - 1.2877).abs() < 1e-4);
    }

    #[test]
    fn cap_ties_break_lexicographically() {
        let docs = ["zeta alpha", "beta"];
        let v = TfidfVocabulary::fit(docs.iter().map(|d| Some(*d)), 2, 1);
        assert_eq!(v.terms, vec!["alpha", "beta"]);
    }

    #[test]
    fn single_term_block_normalizes_to_one() {
        let v = TfidfVocabulary {
            terms: vec!["math".into()],
            idf: vec![1.0],
            max_ngram: 2,
        };
        let mut out = [0.0];
        v.encode(&v.index(), "math math", &mut out);
        assert_eq!(out, [1.0]);
        v.encode(&v.index(), "poetry", &mut out);
        assert_eq!(out, [0.0]);
    }
}
