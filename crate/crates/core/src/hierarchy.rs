//! Predicate label hierarchy construction.
//!
//! Fine predicate labels are grouped into coarse parent classes either
//! automatically (labels embedded as the mean of their word vectors, then
//! clustered with k-means) or by keyword rules that pick the word carrying
//! the relation's meaning ("topped with" → "topped", "sitting at" → "at").

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Cleaned predicate vocabulary with occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateLexicon {
    labels: Vec<String>,
    counts: Vec<u64>,
}

impl PredicateLexicon {
    /// Labels must be unique and non-empty.
    pub fn new(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (label, _) in &entries {
            if label.trim().is_empty() {
                return Err(Error::Validation("empty predicate label".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::Validation(format!("duplicate predicate label {label:?}")));
            }
        }
        let (labels, counts) = entries.into_iter().unzip();
        Ok(PredicateLexicon { labels, counts })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn frequency(&self, label: &str) -> Option<u64> {
        self.labels.iter().position(|l| l == label).map(|i| self.counts[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> {
        self.labels.iter().map(String::as_str).zip(self.counts.iter().copied())
    }
}

/// Rules applied by [`clean_labels`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleaningConfig {
    /// Labels with a (merged) count below this are removed.
    pub min_freq: u64,
    /// Label rewrites, e.g. `"are alongside" → "alongside"`. Chains are
    /// followed; cycles are rejected.
    pub merge: BTreeMap<String, String>,
    /// Meaningless labels removed outright, e.g. `"no"`.
    pub drop: BTreeSet<String>,
}

fn normalize(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Normalizes (lowercase, trimmed, single spaces), drops, merges and
/// frequency-filters raw predicate labels. Output keeps first-appearance
/// order of the surviving labels.
pub fn clean_labels(raw: &[(String, u64)], cfg: &CleaningConfig) -> Result<PredicateLexicon> {
    let merge: BTreeMap<String, String> = cfg.merge.iter().map(|(k, v)| (normalize(k), normalize(v))).collect();
    let drop: BTreeSet<String> = cfg.drop.iter().map(|d| normalize(d)).collect();
    let resolve = |label: String| -> Result<String> {
        let mut current = label;
        let mut visited = BTreeSet::new();
        while let Some(next) = merge.get(&current) {
            if !visited.insert(current.clone()) {
                return Err(Error::Config(format!("merge table cycle through {current:?}")));
            }
            current = next.clone();
        }
        Ok(current)
    };
    for key in merge.keys() {
        resolve(key.clone())?;
    }

    let mut order: Vec<String> = Vec::new();
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for (label, count) in raw {
        let label = normalize(label);
        if label.is_empty() || drop.contains(&label) {
            continue;
        }
        let target = resolve(label)?;
        if drop.contains(&target) {
            continue;
        }
        let total = totals.entry(target.clone()).or_insert_with(|| {
            order.push(target.clone());
            0
        });
        *total = total.saturating_add(*count);
    }
    let entries = order
        .into_iter()
        .filter_map(|l| {
            let c = totals[&l];
            (c >= cfg.min_freq).then_some((l, c))
        })
        .collect();
    PredicateLexicon::new(entries)
}

/// Token → vector lookup with a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("word vector dimension must be positive".into()));
        }
        Ok(WordVectorTable { dim, vectors: BTreeMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(Error::Validation(format!(
                "vector for {token:?} has length {}, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert(token, vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }
}

/// Handling of tokens missing from the word-vector table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    /// Average only the known tokens.
    #[default]
    Skip,
    /// Missing tokens contribute zero vectors to the mean.
    Zero,
    /// Any missing token is an error.
    Error,
}

/// Mean of the word vectors of the whitespace-separated tokens of `label`.
pub fn embed_label(label: &str, table: &WordVectorTable, oov: OovPolicy) -> Result<Vec<f64>> {
    let tokens: Vec<&str> = label.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::Embedding { label: label.to_string() });
    }
    let mut sum = vec![0.0; table.dim()];
    let mut counted = 0usize;
    let mut known = 0usize;
    for tok in &tokens {
        match table.get(tok) {
            Some(v) => {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                counted += 1;
                known += 1;
            }
            None => match oov {
                OovPolicy::Skip => {}
                OovPolicy::Zero => counted += 1,
                OovPolicy::Error => return Err(Error::Embedding { label: label.to_string() }),
            },
        }
    }
    if known == 0 {
        return Err(Error::Embedding { label: label.to_string() });
    }
    Ok(sum.into_iter().map(|s| s / counted as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once one iteration lowers the SSE by less than this.
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig { k, seed, max_iters: 300, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub sse: f64,
    /// SSE after seeding, then after every Lloyd iteration.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.gen_range(0..points.len())];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just below `target`; take the last
            // point with positive weight.
            pick.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            // Every point coincides with a chosen centre.
            (0..points.len()).find(|i| !chosen.contains(i)).expect("k <= point count")
        };
        chosen.push(next);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut sse = 0.0;
    let assignments = points
        .iter()
        .map(|p| {
            let (c, d) = nearest(p, centroids);
            sse += d;
            c
        })
        .collect();
    (assignments, sse)
}

/// Lloyd's algorithm with k-means++ seeding and Euclidean distance.
///
/// Deterministic for a given `(points, k, seed)`. A cluster that loses all
/// its points takes the point farthest from its current centroid.
pub fn kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::Parameter("k-means needs at least one point".into()));
    }
    if cfg.k == 0 || cfg.k > points.len() {
        return Err(Error::Parameter(format!("k = {} outside 1..={}", cfg.k, points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Parameter("points have differing dimensions".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = kmeans_pp(points, cfg.k, &mut rng);
    let (mut assignments, mut sse) = assign(points, &centroids);
    let mut sse_history = vec![sse];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        repair_empty(points, &centroids, &mut assignments, cfg.k);
        centroids = means(points, &assignments, cfg.k, dim);
        let (next, next_sse) = assign(points, &centroids);
        assignments = next;
        let improvement = sse - next_sse;
        sse = next_sse;
        sse_history.push(sse);
        if improvement < cfg.tol {
            break;
        }
    }
    repair_empty(points, &centroids, &mut assignments, cfg.k);
    let final_centroids = means(points, &assignments, cfg.k, dim);
    let final_sse = points.iter().zip(&assignments).map(|(p, &c)| sq_dist(p, &final_centroids[c])).sum();
    if final_centroids != centroids {
        sse_history.push(final_sse);
    }
    Ok(KMeansResult { assignments, centroids: final_centroids, sse: final_sse, sse_history, iterations })
}

fn repair_empty(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        assignments.iter().for_each(|&a| sizes[a] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let far = (0..points.len())
            .filter(|&i| sizes[assignments[i]] > 1)
            .map(|i| (i, sq_dist(&points[i], &centroids[assignments[i]])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
            .expect("k <= point count leaves a cluster with two points");
        assignments[far] = empty;
    }
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut sizes = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        sizes[a] += 1;
        sums[a].iter_mut().zip(p).for_each(|(s, x)| *s += x);
    }
    sums.into_iter()
        .zip(sizes)
        .map(|(s, n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect()
}

/// Total map from fine predicate labels to coarse parent classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyMap {
    fine_labels: Vec<String>,
    coarse_names: Vec<String>,
    fine_to_coarse: Vec<usize>,
}

impl HierarchyMap {
    /// Checks totality, index range, label uniqueness, and that every
    /// parent has at least one child.
    pub fn new(fine_labels: Vec<String>, coarse_names: Vec<String>, fine_to_coarse: Vec<usize>) -> Result<Self> {
        if fine_labels.len() != fine_to_coarse.len() {
            return Err(Error::Validation(format!(
                "{} fine labels but {} parent assignments",
                fine_labels.len(),
                fine_to_coarse.len()
            )));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = fine_labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::Validation(format!("duplicate fine label {dup:?}")));
        }
        let mut children = vec![0usize; coarse_names.len()];
        for (label, &c) in fine_labels.iter().zip(&fine_to_coarse) {
            if c >= coarse_names.len() {
                return Err(Error::Validation(format!(
                    "label {label:?} points at parent {c}, only {} exist",
                    coarse_names.len()
                )));
            }
            children[c] += 1;
        }
        if let Some(empty) = children.iter().position(|&n| n == 0) {
            return Err(Error::Validation(format!("parent {:?} has no fine labels", coarse_names[empty])));
        }
        Ok(HierarchyMap { fine_labels, coarse_names, fine_to_coarse })
    }

    /// Every label is its own parent.
    pub fn identity(labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        HierarchyMap::new(labels.clone(), labels, (0..n).collect())
    }

    pub fn fine_labels(&self) -> &[String] {
        &self.fine_labels
    }

    pub fn coarse_names(&self) -> &[String] {
        &self.coarse_names
    }

    pub fn fine_to_coarse(&self) -> &[usize] {
        &self.fine_to_coarse
    }

    pub fn fine_count(&self) -> usize {
        self.fine_labels.len()
    }

    pub fn coarse_count(&self) -> usize {
        self.coarse_names.len()
    }

    pub fn coarse_of(&self, fine: usize) -> Option<usize> {
        self.fine_to_coarse.get(fine).copied()
    }

    /// Fine indices under parent `coarse`, ascending.
    pub fn children(&self, coarse: usize) -> Vec<usize> {
        (0..self.fine_labels.len()).filter(|&f| self.fine_to_coarse[f] == coarse).collect()
    }

    /// Same map with fine labels restricted to and ordered like `labels`.
    pub fn check_covers(&self, labels: &[String]) -> Result<()> {
        let mine: BTreeSet<&str> = self.fine_labels.iter().map(String::as_str).collect();
        let theirs: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        if let Some(missing) = theirs.difference(&mine).next() {
            return Err(Error::Validation(format!("hierarchy has no parent for label {missing:?}")));
        }
        if let Some(extra) = mine.difference(&theirs).next() {
            return Err(Error::Validation(format!("hierarchy label {extra:?} is not in the lexicon")));
        }
        Ok(())
    }

    /// Groups fine labels by a cluster id per label; parents are ordered by
    /// their first member and named after their most frequent member.
    fn from_groups(lexicon: &PredicateLexicon, group_of: &[usize]) -> Result<Self> {
        let mut parent_of_group: BTreeMap<usize, usize> = BTreeMap::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (fine, &g) in group_of.iter().enumerate() {
            let parent = *parent_of_group.entry(g).or_insert_with(|| {
                members.push(Vec::new());
                members.len() - 1
            });
            members[parent].push(fine);
        }
        let names = members
            .iter()
            .map(|m| {
                let mut best = m[0];
                for &f in m {
                    if lexicon.counts[f] > lexicon.counts[best] {
                        best = f;
                    }
                }
                lexicon.labels[best].clone()
            })
            .collect();
        let fine_to_coarse = group_of.iter().map(|g| parent_of_group[g]).collect();
        HierarchyMap::new(lexicon.labels.clone(), names, fine_to_coarse)
    }
}

/// Embeds every label; on failure lists all labels without usable vectors.
pub fn embed_lexicon(lexicon: &PredicateLexicon, table: &WordVectorTable, oov: OovPolicy) -> Result<Vec<Vec<f64>>> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(lexicon.len());
    for label in lexicon.labels() {
        match embed_label(label, table, oov) {
            Ok(v) => out.push(v),
            Err(Error::Embedding { label }) => missing.push(label),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Embedding { label: missing.join(", ") });
    }
    Ok(out)
}

/// Clusters embedded labels into `k` parents with default k-means settings
/// and skip-OOV embedding.
pub fn build_hierarchy_auto(lexicon: &PredicateLexicon, table: &WordVectorTable, k: usize, seed: u64) -> Result<HierarchyMap> {
    build_hierarchy_auto_with(lexicon, table, &KMeansConfig::new(k, seed), OovPolicy::Skip).map(|(map, _)| map)
}

/// [`build_hierarchy_auto`] with explicit settings; also returns the
/// clustering result.
pub fn build_hierarchy_auto_with(
    lexicon: &PredicateLexicon,
    table: &WordVectorTable,
    cfg: &KMeansConfig,
    oov: OovPolicy,
) -> Result<(HierarchyMap, KMeansResult)> {
    if cfg.k > lexicon.len() {
        return Err(Error::Parameter(format!("k = {} exceeds {} labels", cfg.k, lexicon.len())));
    }
    let points = embed_lexicon(lexicon, table, oov)?;
    let result = kmeans(&points, cfg)?;
    let map = HierarchyMap::from_groups(lexicon, &result.assignments)?;
    Ok((map, result))
}

/// Word lists for keyword extraction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeywordRuleConfig {
    /// Verbs that describe a static state and therefore carry the meaning
    /// of a verb-preposition phrase.
    pub static_verbs: BTreeSet<String>,
    pub prepositions: BTreeSet<String>,
    /// Whole-phrase overrides for stereotyped expressions; checked first.
    pub overrides: BTreeMap<String, String>,
}

impl KeywordRuleConfig {
    /// A small English default.
    pub fn english() -> Self {
        let set = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        KeywordRuleConfig {
            static_verbs: set(&[
                "topped", "covered", "filled", "made", "painted", "printed", "mounted", "attached", "parked",
                "wearing", "wears", "holding", "carrying", "has", "have", "growing", "hanging", "lying", "laying",
            ]),
            prepositions: set(&[
                "on", "in", "at", "of", "with", "near", "under", "over", "above", "below", "behind", "beside",
                "across", "along", "alongside", "against", "by", "from", "to", "for", "into", "onto", "inside",
                "outside", "between", "beneath", "around", "through", "front", "top", "back",
            ]),
            overrides: [("in front of", "front"), ("on top of", "on"), ("on back of", "on"), ("part of", "of")]
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

/// Keyword that decides a label's parent: an override hit; else the
/// label itself for single words; else the first static verb; else the
/// first preposition.
pub fn extract_keyword(label: &str, rules: &KeywordRuleConfig) -> Result<String> {
    let norm = normalize(label);
    if norm.is_empty() {
        return Err(Error::Validation("empty predicate label".into()));
    }
    if let Some(k) = rules.overrides.get(&norm) {
        return Ok(k.clone());
    }
    let tokens: Vec<&str> = norm.split(' ').collect();
    if tokens.len() == 1 {
        return Ok(norm);
    }
    tokens
        .iter()
        .find(|t| rules.static_verbs.contains(**t))
        .or_else(|| tokens.iter().find(|t| rules.prepositions.contains(**t)))
        .map(|t| t.to_string())
        .ok_or(Error::UnresolvedKeyword { label: norm })
}

/// Groups labels sharing a keyword; unresolved labels fall back to their
/// last token. Parents are named after their most frequent member.
pub fn build_hierarchy_by_keyword(lexicon: &PredicateLexicon, rules: &KeywordRuleConfig) -> Result<HierarchyMap> {
    let mut ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut group_of = Vec::with_capacity(lexicon.len());
    for label in lexicon.labels() {
        let key = match extract_keyword(label, rules) {
            Ok(k) => k,
            Err(Error::UnresolvedKeyword { label }) => label.rsplit(' ').next().unwrap_or(&label).to_string(),
            Err(e) => return Err(e),
        };
        let next = ids.len();
        group_of.push(*ids.entry(key).or_insert(next));
    }
    HierarchyMap::from_groups(lexicon, &group_of)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(entries: &[(&str, u64)]) -> Vec<(String, u64)> {
        entries.iter().map(|(l, c)| (l.to_string(), *c)).collect()
    }

    #[test]
    fn cleaning_merges_drops_and_filters() {
        let mut cfg = CleaningConfig::default();
        cfg.merge.insert("are alongside".into(), "alongside".into());
        cfg.drop.insert("no".into());
        cfg.min_freq = 2;
        let lex = clean_labels(
            &raw(&[(" On ", 10), ("alongside", 3), ("are alongside", 4), ("no", 100), ("rare", 1)]),
            &cfg,
        )
        .unwrap();
        assert_eq!(lex.labels(), ["on", "alongside"]);
        assert_eq!(lex.frequency("alongside"), Some(7));
        assert_eq!(lex.frequency("no"), None);

        cfg.min_freq = u64::MAX;
        assert!(clean_labels(&raw(&[("on", 10)]), &cfg).unwrap().is_empty());
    }

    #[test]
    fn cleaning_rejects_merge_cycles() {
        let mut cfg = CleaningConfig::default();
        cfg.merge.insert("a".into(), "b".into());
        cfg.merge.insert("b".into(), "a".into());
        assert!(matches!(clean_labels(&raw(&[("c", 1)]), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn lexicon_rejects_duplicates_and_empties() {
        assert!(PredicateLexicon::new(raw(&[("on", 1), ("on", 2)])).is_err());
        assert!(PredicateLexicon::new(raw(&[(" ", 1)])).is_err());
    }

    fn table(entries: &[(&str, &[f64])]) -> WordVectorTable {
        let mut t = WordVectorTable::new(entries[0].1.len()).unwrap();
        for (tok, v) in entries {
            t.insert(*tok, v.to_vec()).unwrap();
        }
        t
    }

    #[test]
    fn embedding_is_token_mean() {
        let t = table(&[("on", &[1.0, 0.0]), ("top", &[0.0, 1.0]), ("sit", &[3.0, 3.0])]);
        assert_eq!(embed_label("sit", &t, OovPolicy::Skip).unwrap(), [3.0, 3.0]);
        assert_eq!(embed_label("on top", &t, OovPolicy::Skip).unwrap(), [0.5, 0.5]);
        assert_eq!(embed_label("on on", &t, OovPolicy::Skip).unwrap(), [1.0, 0.0]);
    }

    #[test]
    fn embedding_oov_policies() {
        let t = table(&[("on", &[2.0, 0.0])]);
        assert_eq!(embed_label("sat on", &t, OovPolicy::Skip).unwrap(), [2.0, 0.0]);
        assert_eq!(embed_label("sat on", &t, OovPolicy::Zero).unwrap(), [1.0, 0.0]);
        assert!(embed_label("sat on", &t, OovPolicy::Error).is_err());
        assert!(matches!(embed_label("sat", &t, OovPolicy::Skip), Err(Error::Embedding { .. })));
        assert!(t.clone().insert("x", vec![1.0]).is_err());
    }

    #[test]
    fn kmeans_parameter_errors() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(kmeans(&[], &KMeansConfig::new(1, 0)).is_err());
        assert!(kmeans(&pts, &KMeansConfig::new(0, 0)).is_err());
        assert!(kmeans(&pts, &KMeansConfig::new(3, 0)).is_err());
        assert!(kmeans(&[vec![0.0], vec![1.0, 2.0]], &KMeansConfig::new(1, 0)).is_err());
    }

    #[test]
    fn kmeans_k_equals_n_is_exact() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let r = kmeans(&pts, &KMeansConfig::new(6, 3)).unwrap();
        assert_eq!(r.sse, 0.0);
        let distinct: BTreeSet<usize> = r.assignments.iter().copied().collect();
        assert_eq!(distinct.len(), 6);
    }

    #[test]
    fn kmeans_handles_coincident_points() {
        let pts = vec![vec![1.0, 1.0]; 4];
        let r = kmeans(&pts, &KMeansConfig::new(3, 7)).unwrap();
        let distinct: BTreeSet<usize> = r.assignments.iter().copied().collect();
        assert_eq!(distinct.len(), 3);
        assert_eq!(r.sse, 0.0);
    }

    #[test]
    fn hierarchy_map_validation() {
        let labels = |ls: &[&str]| ls.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(HierarchyMap::new(labels(&["a", "b"]), labels(&["p"]), vec![0, 0]).is_ok());
        assert!(HierarchyMap::new(labels(&["a", "b"]), labels(&["p", "q"]), vec![0, 0]).is_err());
        assert!(HierarchyMap::new(labels(&["a", "a"]), labels(&["p"]), vec![0, 0]).is_err());
        assert!(HierarchyMap::new(labels(&["a"]), labels(&["p"]), vec![1]).is_err());
        assert!(HierarchyMap::new(labels(&["a", "b"]), labels(&["p"]), vec![0]).is_err());
    }

    #[test]
    fn keywords() {
        let rules = KeywordRuleConfig::english();
        assert_eq!(extract_keyword("topped with", &rules).unwrap(), "topped");
        assert_eq!(extract_keyword("covered in", &rules).unwrap(), "covered");
        assert_eq!(extract_keyword("sitting at", &rules).unwrap(), "at");
        assert_eq!(extract_keyword("standing in", &rules).unwrap(), "in");
        assert_eq!(extract_keyword("on", &rules).unwrap(), "on");
        assert_eq!(extract_keyword("in front of", &rules).unwrap(), "front");
        assert!(matches!(extract_keyword("looks like", &rules), Err(Error::UnresolvedKeyword { .. })));
    }

    #[test]
    fn keyword_hierarchy_groups_by_keyword() {
        let lex = PredicateLexicon::new(raw(&[
            ("on", 50),
            ("sitting on", 10),
            ("standing on", 20),
            ("topped with", 3),
            ("in", 40),
            ("sitting in", 5),
            ("looks like", 1),
        ]))
        .unwrap();
        let map = build_hierarchy_by_keyword(&lex, &KeywordRuleConfig::english()).unwrap();
        assert_eq!(map.coarse_names(), ["on", "topped with", "in", "looks like"]);
        assert_eq!(map.fine_to_coarse(), [0, 0, 0, 1, 2, 2, 3]);
    }
}
