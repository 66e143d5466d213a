//! Memoizing wrapper around any evaluator.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{check_request, EvalError, Evaluator, Purity};
use crate::bdmetrics::{RdCurve, RdPoint};
use crate::profiles::ToolProfile;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
struct CacheKey {
    catalog: String,
    profile: String,
    sequence: String,
    qp: i32,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    #[serde(flatten)]
    key: CacheKey,
    point: RdPoint,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    /// Points served from the cache.
    pub hits: u64,
    /// Points that had to be computed.
    pub misses: u64,
    /// Calls made to the wrapped evaluator.
    pub evaluations: u64,
    /// Distinct profiles passed to the wrapped evaluator.
    pub unique_profiles: u64,
}

/// Caches points by (catalog fingerprint, profile hash, sequence, QP).
///
/// A point is computed at most once; repeat requests are answered from memory
/// without touching the wrapped evaluator.
pub struct CachedEvaluator<E> {
    inner: E,
    fingerprint: String,
    store: RwLock<HashMap<CacheKey, RdPoint>>,
    evaluated_profiles: Mutex<std::collections::HashSet<String>>,
    hits: AtomicU64,
    misses: AtomicU64,
    evaluations: AtomicU64,
    path: Option<PathBuf>,
}

impl<E: Evaluator> CachedEvaluator<E> {
    pub fn new(inner: E, catalog_fingerprint: impl Into<String>) -> Self {
        CachedEvaluator {
            inner,
            fingerprint: catalog_fingerprint.into(),
            store: RwLock::new(HashMap::new()),
            evaluated_profiles: Mutex::new(Default::default()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            evaluations: AtomicU64::new(0),
            path: None,
        }
    }

    /// Backs the cache with a JSON-lines file, loading it if it exists.
    /// Entries recorded under another catalog fingerprint are ignored.
    pub fn with_file(mut self, path: impl Into<PathBuf>) -> Result<Self, EvalError> {
        let path = path.into();
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| EvalError::Cache(format!("{}: {e}", path.display())))?;
            let mut store = self.store.write().expect("cache lock");
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: CacheEntry = serde_json::from_str(line)
                    .map_err(|e| EvalError::Cache(format!("{} line {}: {e}", path.display(), i + 1)))?;
                if entry.key.catalog == self.fingerprint {
                    store.insert(entry.key, entry.point);
                }
            }
        }
        self.path = Some(path);
        Ok(self)
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::SeqCst),
            misses: self.misses.load(Ordering::SeqCst),
            evaluations: self.evaluations.load(Ordering::SeqCst),
            unique_profiles: self.evaluated_profiles.lock().expect("cache lock").len() as u64,
        }
    }

    pub fn len(&self) -> usize {
        self.store.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes every entry to the backing file, sorted for stable output.
    pub fn save(&self) -> Result<(), EvalError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let store = self.store.read().expect("cache lock");
        let mut entries: Vec<_> = store.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for (key, point) in entries {
            let entry = CacheEntry {
                key: key.clone(),
                point: point.clone(),
            };
            out.push_str(&serde_json::to_string(&entry).map_err(|e| EvalError::Cache(e.to_string()))?);
            out.push('\n');
        }
        write_atomic(path, &out)
    }

    fn key(&self, hash: &str, sequence: &str, qp: i32) -> CacheKey {
        CacheKey {
            catalog: self.fingerprint.clone(),
            profile: hash.to_string(),
            sequence: sequence.to_string(),
            qp,
        }
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<(), EvalError> {
    let err = |e: std::io::Error| EvalError::Cache(format!("{}: {e}", path.display()));
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(err)?;
    std::fs::rename(&tmp, path).map_err(err)
}

impl<E: Evaluator> Evaluator for CachedEvaluator<E> {
    fn analyze(&self, profile: &ToolProfile, sequences: &[String], qps: &[i32]) -> Result<Vec<RdCurve>, EvalError> {
        check_request(sequences, qps)?;
        let hash = profile.canonical_hash();
        let missing: Vec<String> = {
            let store = self.store.read().expect("cache lock");
            sequences
                .iter()
                .filter(|s| qps.iter().any(|q| !store.contains_key(&self.key(&hash, s, *q))))
                .cloned()
                .collect()
        };
        if !missing.is_empty() {
            self.evaluations.fetch_add(1, Ordering::SeqCst);
            self.evaluated_profiles.lock().expect("cache lock").insert(hash.clone());
            let curves = self.inner.analyze(profile, &missing, qps)?;
            let mut store = self.store.write().expect("cache lock");
            for curve in curves {
                for p in curve.points {
                    let key = self.key(&hash, &curve.sequence, p.qp);
                    if store.insert(key, p).is_none() {
                        self.misses.fetch_add(1, Ordering::SeqCst);
                    }
                }
            }
        }
        let store = self.store.read().expect("cache lock");
        let id = profile.id();
        let mut hits = 0;
        let curves = sequences
            .iter()
            .map(|seq| {
                let points = qps
                    .iter()
                    .map(|q| {
                        store.get(&self.key(&hash, seq, *q)).cloned().ok_or_else(|| {
                            EvalError::Cache(format!("evaluator returned no point for {id}, {seq}, QP {q}"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if !missing.contains(seq) {
                    hits += points.len() as u64;
                }
                RdCurve::new(id.clone(), seq.clone(), points).map_err(|source| EvalError::Curve {
                    profile_id: id.clone(),
                    sequence: seq.clone(),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.hits.fetch_add(hits, Ordering::SeqCst);
        Ok(curves)
    }

    fn purity(&self) -> Purity {
        self.inner.purity()
    }

    fn describe(&self) -> String {
        format!("cached {}", self.inner.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::{LandscapeSpec, SyntheticLandscape, DEFAULT_QPS};
    use crate::profiles::{CodingConfig, ToolCatalog};

    fn cached() -> CachedEvaluator<SyntheticLandscape> {
        let cat = ToolCatalog::builtin();
        let spec = LandscapeSpec::random_separable(CodingConfig::RA, &["GPM", "ALF", "SAO"], 2);
        CachedEvaluator::new(SyntheticLandscape::new(spec, cat).unwrap(), cat.fingerprint())
    }

    fn seqs() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn repeat_call_has_no_misses() {
        let c = cached();
        let p = ToolCatalog::builtin().ctc_profile(CodingConfig::RA);
        let first = c.analyze(&p, &seqs(), &DEFAULT_QPS).unwrap();
        assert_eq!(c.stats(), CacheStats { hits: 0, misses: 8, evaluations: 1, unique_profiles: 1 });
        let second = c.analyze(&p, &seqs(), &DEFAULT_QPS).unwrap();
        assert_eq!(first, second);
        assert_eq!(c.stats(), CacheStats { hits: 8, misses: 8, evaluations: 1, unique_profiles: 1 });
    }

    #[test]
    fn transparent_over_inner() {
        let c = cached();
        let p = ToolCatalog::builtin().ctc_profile(CodingConfig::RA).toggle("GPM").unwrap();
        assert_eq!(
            c.analyze(&p, &seqs(), &DEFAULT_QPS).unwrap(),
            c.inner().analyze(&p, &seqs(), &DEFAULT_QPS).unwrap()
        );
    }

    #[test]
    fn only_missing_sequences_are_computed() {
        let c = cached();
        let p = ToolCatalog::builtin().ctc_profile(CodingConfig::RA);
        c.analyze(&p, &seqs()[..1], &DEFAULT_QPS).unwrap();
        c.analyze(&p, &seqs(), &DEFAULT_QPS).unwrap();
        let s = c.stats();
        assert_eq!((s.hits, s.misses, s.evaluations, s.unique_profiles), (4, 8, 2, 1));
    }

    #[test]
    fn persists_and_ignores_foreign_fingerprints() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let p = ToolCatalog::builtin().ctc_profile(CodingConfig::RA);
        let c = cached().with_file(&path).unwrap();
        c.analyze(&p, &seqs(), &DEFAULT_QPS).unwrap();
        c.save().unwrap();

        let reloaded = cached().with_file(&path).unwrap();
        assert_eq!(reloaded.len(), 8);
        reloaded.analyze(&p, &seqs(), &DEFAULT_QPS).unwrap();
        assert_eq!(reloaded.stats().evaluations, 0);

        let cat = ToolCatalog::builtin();
        let spec = LandscapeSpec::flat(CodingConfig::RA, &["GPM"]);
        let other = CachedEvaluator::new(SyntheticLandscape::new(spec, cat).unwrap(), "different")
            .with_file(&path)
            .unwrap();
        assert!(other.is_empty());
    }
}
