use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use adnav_core::memory::{dot64, Experience, ExperienceStore, HashEmbedder, MemoryConfig};
use proptest::prelude::*;
use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::Normal;

const DIM: usize = 64;

fn unit(v: Vec<f32>) -> Vec<f32> {
    let n = dot64(&v, &v).sqrt() as f32;
    v.into_iter().map(|x| x / n).collect()
}

/// Cluster centers with jittered members; small jitter makes members
/// near-duplicates of each other, larger jitter keeps them apart.
fn clustered(n: usize, centers: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::new(0.0, 1.0).unwrap();
    let cs: Vec<Vec<f32>> = (0..centers).map(|_| unit((0..DIM).map(|_| g.sample(&mut rng) as f32).collect())).collect();
    (0..n)
        .map(|_| {
            let c = &cs[rng.gen_range(0..centers)];
            let jitter = [0.02, 0.1, 0.3][rng.gen_range(0..3)];
            unit(c.iter().map(|x| x + (jitter * g.sample(&mut rng) / (DIM as f64).sqrt()) as f32).collect())
        })
        .collect()
}

fn store_with(vectors: &[Vec<f32>], config: MemoryConfig) -> ExperienceStore {
    let store = ExperienceStore::in_memory(config);
    for (i, v) in vectors.iter().enumerate() {
        store.store(Experience::new(format!("fp{i}"), v.clone(), format!("entry {i}"), "synthetic", vec![])).unwrap();
    }
    store
}

fn config() -> MemoryConfig {
    MemoryConfig { dim: DIM, ..MemoryConfig::default() }
}

fn brute_top_k(vectors: &[Vec<f32>], q: &[f32], k: usize) -> Vec<usize> {
    let mut s: Vec<(usize, f64)> = vectors.iter().enumerate().map(|(i, v)| (i, dot64(v, q))).collect();
    s.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    s.into_iter().take(k).map(|(i, _)| i).collect()
}

#[test]
fn prune_of_ten_thousand_entries_leaves_no_near_duplicates() {
    let started = Instant::now();
    let tau = 0.95;
    let vectors = clustered(10_000, 1500, 3);
    let store = store_with(&vectors, config());
    let report = store.prune(tau).unwrap();
    let snap = store.snapshot();
    assert_eq!(report.kept, snap.entries.len());
    assert_eq!(report.kept + report.dropped.len(), 10_000);
    assert!(!report.dropped.is_empty() && report.kept > 1500);

    let kept = &snap.entries;
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            let c = dot64(&kept[i].embedding, &kept[j].embedding);
            assert!(c < tau, "kept {} and {} at {c}", kept[i].id, kept[j].id);
        }
    }
    let kept_ids: BTreeSet<u64> = kept.iter().map(|e| e.id).collect();
    let by_id: HashMap<u64, &Experience> = kept.iter().map(|e| (e.id, e)).collect();
    for (dropped, _) in &report.dropped {
        assert!(!kept_ids.contains(dropped));
        let v = &vectors[*dropped as usize];
        assert!(kept.iter().any(|k| dot64(&k.embedding, v) >= tau), "entry {dropped} has no kept witness");
    }
    for (dropped, witness) in &report.dropped {
        assert!(dot64(&by_id[witness].embedding, &vectors[*dropped as usize]) >= tau);
    }
    assert!(started.elapsed().as_secs_f64() < 60.0, "{:?}", started.elapsed());
}

#[test]
fn exact_retrieval_equals_brute_force() {
    let vectors = clustered(3000, 300, 8);
    let store = store_with(&vectors, config());
    let queries = clustered(100, 300, 9);
    for q in &queries {
        for k in [1, 3, 10] {
            let got: Vec<u64> = store.retrieve(q, k).into_iter().map(|(e, _)| e.id).collect();
            let want: Vec<u64> = brute_top_k(&vectors, q, k).into_iter().map(|i| i as u64).collect();
            assert_eq!(got, want);
        }
    }
}

#[test]
fn ann_recall_at_ten() {
    // Queries are held-out draws from the same clusters.
    let mut vectors = clustered(20_200, 400, 21);
    let queries = vectors.split_off(20_000);
    let cfg = MemoryConfig { ann_enabled: true, ann_min_entries: 1000, ..config() };
    let store = store_with(&vectors, cfg);
    store.rebuild_index();
    let mut hits = 0usize;
    for q in &queries {
        let want: BTreeSet<u64> = brute_top_k(&vectors, q, 10).into_iter().map(|i| i as u64).collect();
        hits += store.retrieve(q, 10).iter().filter(|(e, _)| want.contains(&e.id)).count();
    }
    let recall = hits as f64 / (10 * queries.len()) as f64;
    assert!(recall >= 0.9, "recall@10 {recall}");
}

#[test]
fn file_store_survives_reopen_and_prune() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.jsonl");
    let vectors = clustered(50, 5, 4);
    {
        let store = ExperienceStore::open(&path, config()).unwrap();
        for (i, v) in vectors.iter().enumerate() {
            store.store(Experience::new(format!("fp{i}"), v.clone(), "s", "app", vec![])).unwrap();
        }
        store.prune(0.95).unwrap();
    }
    let reopened = ExperienceStore::open(&path, config()).unwrap();
    let fresh = store_with(&vectors, config());
    fresh.prune(0.95).unwrap();
    assert_eq!(reopened.len(), fresh.len());
    let next = reopened.store(Experience::new("x", vectors[0].clone(), "s", "app", vec![])).unwrap();
    assert_eq!(next, 50);
}

#[test]
fn store_rejects_bad_entries() {
    let store = ExperienceStore::in_memory(config());
    assert!(store.store(Experience::new("f", vec![1.0; DIM], "  ", "a", vec![])).is_err());
    assert!(store.store(Experience::new("f", vec![1.0; 3], "s", "a", vec![])).is_err());
    assert!(store.store(Experience::new("f", vec![0.0; DIM], "s", "a", vec![])).is_err());
}

#[test]
fn text_retrieval_prefers_shared_words() {
    let e = HashEmbedder { dim: 256 };
    let store = ExperienceStore::in_memory(MemoryConfig::default());
    for text in ["drawer menu other app store", "pause music player", "settings privacy policy"] {
        let v = adnav_core::memory::embed(text, &e).unwrap();
        store.store(Experience::new(text, v, text, "a", vec![])).unwrap();
    }
    let top = store.retrieve_text("open the drawer menu", &e, 1).unwrap();
    assert_eq!(top[0].0.summary, "drawer menu other app store");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn prune_is_idempotent_and_keeps_the_first_entry(seed in any::<u64>(), n in 1usize..120, tau in 0.5f64..0.999) {
        let vectors = clustered(n, 4, seed);
        let store = store_with(&vectors, config());
        let first = store.prune(tau).unwrap();
        prop_assert_eq!(store.snapshot().entries[0].id, 0);
        let again = store.prune(tau).unwrap();
        prop_assert_eq!(again.kept, first.kept);
        prop_assert!(again.dropped.is_empty());
    }
}
