//! One test per acceptance criterion. Each writes a `PASS`/`FAIL` line to
//! stderr directly so the line shows up even when the harness captures output.

mod common;

use std::collections::{HashMap, HashSet};
use std::io::Write as _;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use claimpipe::cleaning::{
    clean_post, clean_records, condense_repetition, dedup_key, dedupe_cross_split,
    strip_trailing_placeholder, DedupOptions, RepetitionMode,
};
use claimpipe::cluster::{
    fallback_embed, hdbscan, hdbscan_points, minimum_spanning_tree, mutual_reachability,
    prototypes, HdbscanParams, Prototype,
};
use claimpipe::corpus::{
    load_corpus, read_jsonl, word_count_stats, CorpusFormat, Language, Record, Split, TextField,
};
use claimpipe::gateway::{Gateway, GenerationRequest, ModelEndpoint, ResponseCache};
use claimpipe::meteor::{Meteor, MeteorParams};
use claimpipe::prompting::PromptTemplate;
use claimpipe::report::{
    emit_hparam_grid, score_run, GenerationMaxLength, Optimizer, Prediction, RunLabels,
    GRID_EPOCHS, GRID_LEARNING_RATES,
};
use claimpipe::shots::{
    select_shots, self_difficulty, DifficultyRecord, DifficultySource, SelectionInputs, ShotSet,
    Strategy, Thresholds,
};

use common::stub::{spawn_stub, StubState, EMPTY_MARKER, STUB_KEY};
use common::{
    adjusted_rand_index, brute_force_alignment, brute_force_mst_weights, fixture, labels_from_json,
    read_json,
};

fn criterion<F: FnOnce()>(n: u32, name: &str, f: F) {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let status = if outcome.is_ok() { "PASS" } else { "FAIL" };
    let line = format!(
        "criterion {n:02} {status} {name} ({:.1?})\n",
        started.elapsed()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(panic) = outcome {
        resume_unwind(panic);
    }
}

fn note(msg: &str) {
    let _ = std::io::stderr().write_all(format!("    note: {msg}\n").as_bytes());
}

const TRIPLICATED_UNIT: &str = "Na Holanda, a ministra da Saúde trabalha duas (2) horas diariamente como agente de limpeza antes de ir ao seu escritório. Gostei muito.";

#[test]
fn criterion_01_cleaning_golden() {
    criterion(1, "triplicated Portuguese post cleans to one copy", || {
        let rec = &read_jsonl(&fixture("pt_triplicated.jsonl")).unwrap()[0];
        let started = Instant::now();
        let (cleaned, report) = clean_post(&rec.raw_post);
        let elapsed = started.elapsed();
        assert_eq!(cleaned.as_bytes(), TRIPLICATED_UNIT.as_bytes());
        assert!(report.trailing_placeholder_removed);
        assert_eq!(report.repetition_period_tokens, Some(23));
        assert!(elapsed < Duration::from_millis(1), "took {elapsed:?}");
    });
}

const FUZZ_VOCAB: [&str; 13] = [
    "a", "b", "c", "claim", "None", "None,", "none", "NONE", "x.", "(2)", "horas", "ção", "🙂",
];

fn fuzz_post(rng: &mut ChaCha8Rng) -> (String, usize, usize, bool) {
    let unit_len = rng.gen_range(1..=50);
    let unit: Vec<&str> = (0..unit_len)
        .map(|_| *FUZZ_VOCAB.choose(rng).unwrap())
        .collect();
    let ends_in_placeholder = unit.last() == Some(&"None");
    let repeats = rng.gen_range(1..=4);
    let mut text = vec![unit.join(" "); repeats].join(if rng.gen_bool(0.5) { " " } else { "  \n" });
    if rng.gen_bool(0.5) {
        text.push_str(" None");
    }
    if rng.gen_bool(0.2) {
        text.push('\n');
    }
    (text, unit_len, repeats, ends_in_placeholder)
}

#[test]
fn criterion_02_cleaning_properties() {
    criterion(
        2,
        "idempotence and divisibility on 10,000 fuzzed posts",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let started = Instant::now();
            let mut violations = Vec::new();
            for i in 0..10_000 {
                let (post, unit_len, repeats, ends_in_placeholder) = fuzz_post(&mut rng);
                let (once, report) = clean_post(&post);
                let (twice, _) = clean_post(&once);
                if once != twice {
                    violations.push(format!("#{i} not idempotent: {post:?}"));
                }
                if report.tokens_after > report.tokens_before {
                    violations.push(format!("#{i} grew: {post:?}"));
                }
                let stripped = strip_trailing_placeholder(&post);
                let before = stripped.split_whitespace().count();
                let (condensed, period) = condense_repetition(&stripped);
                let after = condensed.split_whitespace().count();
                if after > before {
                    violations.push(format!("#{i} condensation grew: {post:?}"));
                }
                if let Some(s) = period {
                    if !before.is_multiple_of(s) || after != s {
                        violations.push(format!("#{i} period {s} does not divide {before}"));
                    }
                }
                // stripping would cut the last copy short when the unit ends in the placeholder
                if repeats >= 2 && !ends_in_placeholder && report.tokens_after > unit_len {
                    violations.push(format!("#{i} repetition not condensed: {post:?}"));
                }
            }
            let elapsed = started.elapsed();
            assert!(
                violations.is_empty(),
                "{} violations, first: {}",
                violations.len(),
                violations[0]
            );
            assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
        },
    );
}

#[test]
fn criterion_03_meteor_closed_form() {
    criterion(3, "METEOR closed-form values", || {
        let m = Meteor::new(MeteorParams::default()).unwrap();
        let ten = "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9";
        assert!((m.score(ten, ten).score - 0.9995).abs() <= 1e-9);
        assert!((m.score("claim", "claim").score - 0.5).abs() <= 1e-9);
        assert_eq!(m.score("a b c", "x y z").score, 0.0);
    });
}

#[test]
fn criterion_04_meteor_oracle() {
    criterion(
        4,
        "METEOR matches the scripted oracle and brute-force alignment",
        || {
            let oracle = read_json("meteor_oracle.json");
            let params = MeteorParams {
                alpha: oracle["alpha"].as_f64().unwrap(),
                beta: oracle["beta"].as_f64().unwrap(),
                gamma: oracle["gamma"].as_f64().unwrap(),
                ..MeteorParams::default()
            };
            let m = Meteor::new(params).unwrap();
            let cases = oracle["cases"].as_array().unwrap();
            assert_eq!(cases.len(), 50);
            for case in cases {
                let (hyp, reference) =
                    (case["hyp"].as_str().unwrap(), case["ref"].as_str().unwrap());
                let got = m.score(hyp, reference);
                let want = case["score"].as_f64().unwrap();
                assert!(
                    (got.score - want).abs() <= 1e-6,
                    "{hyp:?} vs {reference:?}: {} != {want}",
                    got.score
                );
                assert_eq!(got.matches as u64, case["matches"].as_u64().unwrap());
                assert_eq!(got.chunks as u64, case["chunks"].as_u64().unwrap());

                let (h, r) = (m.tokenize(hyp), m.tokenize(reference));
                if h.len() <= 8 && r.len() <= 8 {
                    let a = m.align(&h, &r);
                    assert_eq!(
                        (a.matches.len(), a.chunk_count),
                        brute_force_alignment(&h, &r),
                        "{h:?} / {r:?}"
                    );
                }
            }
        },
    );
}

fn rec(id: &str, lang: Language, split: Split, post: &str) -> Record {
    let mut r = Record::new(id, lang, split, post).with_claim("c");
    r.cleaned_post = Some(post.to_string());
    r
}

#[test]
fn criterion_05_dedup_invariant() {
    criterion(
        5,
        "no key spans two splits and no test record is removed",
        || {
            let mut records = Vec::new();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for lang in [Language::Pt, Language::Es] {
                for split in [Split::Train, Split::Dev, Split::Test] {
                    for i in 0..200 {
                        records.push(rec(
                            &format!("{lang}-{split}-{i}"),
                            lang,
                            split,
                            &format!("unique {lang} {split} {i}"),
                        ));
                    }
                }
                // planted duplicates, some differing only in whitespace or NFC form
                for d in 0..60 {
                    let text = format!("planted claim {d} São Paulo");
                    let variants = [
                        text.clone(),
                        format!("  {}", text.replace(' ', "   ")),
                        text.replace("ã", "a\u{0303}"),
                    ];
                    let mut splits = [Split::Train, Split::Dev, Split::Test];
                    splits.shuffle(&mut rng);
                    let k = rng.gen_range(2..=3);
                    for (j, split) in splits.iter().take(k).enumerate() {
                        records.push(rec(
                            &format!("{lang}-dup-{d}-{j}"),
                            lang,
                            *split,
                            &variants[j % 3],
                        ));
                    }
                }
            }
            records.shuffle(&mut rng);
            let started = Instant::now();
            let (kept, _) = dedupe_cross_split(&records, DedupOptions::default()).unwrap();
            let elapsed = started.elapsed();

            let mut key_splits: HashMap<(Language, String), HashSet<Split>> = HashMap::new();
            for r in &kept {
                key_splits
                    .entry((r.language, dedup_key(r.post())))
                    .or_default()
                    .insert(r.split);
            }
            assert!(key_splits.values().all(|s| s.len() == 1));
            let test_before = records.iter().filter(|r| r.split == Split::Test).count();
            let test_after = kept.iter().filter(|r| r.split == Split::Test).count();
            assert_eq!(test_before, test_after);
            assert!(kept.len() < records.len());
            assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
        },
    );
}

#[test]
fn criterion_06_hdbscan_fixture() {
    criterion(
        6,
        "HDBSCAN recovers three blobs; MST equals brute force",
        || {
            let oracle = read_json("hdbscan_oracle.json");
            let blobs = &oracle["blobs"];
            let (points, dim) = common::points_from_json(&blobs["points"]);
            assert_eq!(points.len() / dim, 60);
            let params = HdbscanParams::new(5);
            let assignment = hdbscan_points(&points, dim, &params).unwrap();
            assert_eq!(assignment.n_clusters(), 3);
            let labels: Vec<i64> = assignment.labels.iter().map(|&l| l as i64).collect();
            let ari = adjusted_rand_index(&labels, &labels_from_json(&blobs["truth"]));
            assert!(ari >= 0.9, "ARI {ari}");

            let mst = &oracle["mst"];
            let (points, dim) = common::points_from_json(&mst["points"]);
            let n = points.len() / dim;
            assert!(n <= 50);
            let ms = mst["min_samples"].as_u64().unwrap() as usize;
            let weights = mutual_reachability(&points, dim, ms);
            let mut ours: Vec<f64> = minimum_spanning_tree(&weights, n)
                .iter()
                .map(|e| e.weight)
                .collect();
            ours.sort_by(f64::total_cmp);
            assert_eq!(ours, brute_force_mst_weights(&weights, n));
            let total: f64 = ours.iter().sum();
            let brute_total: f64 = brute_force_mst_weights(&weights, n).iter().sum();
            assert_eq!(total, brute_total);
        },
    );
}

fn shot_pool() -> Vec<Record> {
    let topics = [
        "vacina causa autismo em crianças",
        "urna eletrônica foi fraudada na eleição",
        "chá de boldo cura covid rapidamente",
        "ministra trabalha como faxineira todo dia",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    (0..40)
        .map(|i| {
            let topic = topics[i % topics.len()];
            let extra: Vec<String> = (0..rng.gen_range(0..6))
                .map(|_| format!("z{}", rng.gen_range(0..50)))
                .collect();
            let post = format!("{topic} {}", extra.join(" "));
            let claim = if i % 3 == 0 {
                topic.to_string()
            } else {
                format!("{topic} segundo post {i}")
            };
            let mut r = Record::new(format!("pt-train-{i:02}"), Language::Pt, Split::Train, post)
                .with_claim(claim);
            clean_records(std::slice::from_mut(&mut r), RepetitionMode::FullCoverage);
            r
        })
        .collect()
}

struct Aux {
    difficulty: Vec<DifficultyRecord>,
    thresholds: Thresholds,
    prototypes: Vec<Prototype>,
}

fn build_aux(pool: &[Record], n: usize) -> Aux {
    let meteor = Meteor::new(MeteorParams::default()).unwrap();
    let (difficulty, thresholds) =
        self_difficulty(pool, &meteor, 0.25, 0.75, DifficultySource::CleanedPost).unwrap();
    let matrix = fallback_embed(pool, 64).unwrap();
    let assignment = hdbscan(&matrix, &HdbscanParams::new(3)).unwrap();
    let prototypes = prototypes(&matrix, &assignment, n).unwrap();
    Aux {
        difficulty,
        thresholds,
        prototypes,
    }
}

fn select(pool: &[Record], aux: &Aux, strategy: Strategy, n: usize, seed: u64) -> ShotSet {
    let inputs = SelectionInputs {
        difficulty: Some(&aux.difficulty),
        prototypes: Some(&aux.prototypes),
        thresholds: Some(aux.thresholds),
    };
    select_shots(pool, strategy, n, seed, inputs).unwrap()
}

#[test]
fn criterion_07_shot_determinism() {
    criterion(
        7,
        "shot selection is deterministic per seed; hard_only ignores the seed",
        || {
            let pool = shot_pool();
            let ids: HashSet<&str> = pool.iter().map(|r| r.id.as_str()).collect();
            for n in [3, 5, 10] {
                let aux = build_aux(&pool, n);
                let again = build_aux(&pool, n);
                assert_eq!(aux.difficulty, again.difficulty);
                assert_eq!(aux.thresholds, again.thresholds);
                assert_eq!(aux.prototypes, again.prototypes);
                for strategy in Strategy::ALL {
                    let first = select(&pool, &aux, strategy, n, 42);
                    assert_eq!(first.record_ids.len(), n);
                    assert_eq!(first.record_ids.iter().collect::<HashSet<_>>().len(), n);
                    assert!(first.record_ids.iter().all(|id| ids.contains(id.as_str())));
                    for _ in 0..99 {
                        assert_eq!(select(&pool, &aux, strategy, n, 42), first);
                    }
                    if strategy == Strategy::HardOnly {
                        for seed in [0, 1, 7, u64::MAX] {
                            assert_eq!(
                                select(&pool, &aux, strategy, n, seed).record_ids,
                                first.record_ids
                            );
                        }
                    }
                }
            }
        },
    );
}

#[test]
fn criterion_08_prompt_golden_files() {
    criterion(
        8,
        "zero-shot prompts for the eight transcribed templates match golden files",
        || {
            let golden_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
            for lang in [
                Language::En,
                Language::Cs,
                Language::El,
                Language::Nl,
                Language::Ko,
                Language::Ro,
                Language::Te,
                Language::Bn,
            ] {
                let template = PromptTemplate::bundled(lang).unwrap();
                let rendered = template.render_zero_shot("SAMPLE POST").unwrap();
                let golden =
                    std::fs::read(golden_dir.join(format!("{}.txt", lang.code()))).unwrap();
                assert_eq!(rendered.as_bytes(), golden.as_slice(), "{lang}");
                assert!(!rendered.contains(template.placeholder()));
            }
            let en = PromptTemplate::bundled(Language::En).unwrap();
            let shots = [
                ("first post", "first claim"),
                ("second post", "second claim"),
                ("third post", "third claim"),
            ];
            let few = en.render_few_shot(&shots, "SAMPLE POST").unwrap();
            let golden = std::fs::read(golden_dir.join("en_three_shot.txt")).unwrap();
            assert_eq!(few.as_bytes(), golden.as_slice());
        },
    );
}

#[test]
fn criterion_09_gateway_contract() {
    criterion(
        9,
        "gateway retries, bounds concurrency, caches and keeps empty completions",
        || {
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(4)
                .enable_all()
                .build()
                .unwrap();
            runtime.block_on(async {
                let gateway = |stub: &common::stub::Stub| {
                    let ep = ModelEndpoint::from_toml_str(&stub.endpoint_toml("UNUSED")).unwrap();
                    Gateway::with_api_key(ep, STUB_KEY.to_string()).unwrap()
                };

                let flaky = spawn_stub(StubState {
                    failures: vec![429, 429].into(),
                    ..Default::default()
                })
                .await;
                let r = gateway(&flaky)
                    .generate(&GenerationRequest::new("Post: x"))
                    .await
                    .unwrap();
                assert_eq!(r.attempt_count, 3);

                let slow = spawn_stub(StubState {
                    delay_ms: 10,
                    ..Default::default()
                })
                .await;
                let mut reqs: Vec<GenerationRequest> = (0..100)
                    .map(|i| GenerationRequest::new(format!("Post: item {i}")))
                    .collect();
                reqs[37] = GenerationRequest::new(format!("Post: {EMPTY_MARKER} 37"));
                let dir = tempfile::tempdir().unwrap();
                let cache = ResponseCache::open(dir.path()).unwrap();
                let first = gateway(&slow)
                    .batch_generate(&reqs, 4, Some(&cache))
                    .await
                    .unwrap();
                assert!(slow.state.max_in_flight() <= 4);
                assert_eq!(first[37].as_ref().unwrap().text, "");
                assert_eq!(first[36].as_ref().unwrap().text, "item 36");

                let hits_before = slow.state.hits();
                let g = gateway(&slow);
                let second = g.batch_generate(&reqs, 4, Some(&cache)).await.unwrap();
                assert_eq!(g.network_calls(), 0);
                assert_eq!(slow.state.hits(), hits_before);
                assert!(second.iter().all(|r| r.as_ref().unwrap().from_cache));
                assert_eq!(second[37].as_ref().unwrap().text, "");
            });
        },
    );
}

#[test]
fn criterion_10_hparam_grid() {
    criterion(
        10,
        "grid has 48 configs within the allowed value sets",
        || {
            let grid = emit_hparam_grid();
            assert_eq!(grid.len(), 48);
            let mut seen = HashSet::new();
            for c in &grid {
                assert_eq!(
                    (c.warmup_steps, c.effective_batch_size, c.num_beams),
                    (90, 32, 15)
                );
                assert!(GRID_EPOCHS.contains(&c.epochs));
                assert!(GRID_LEARNING_RATES.contains(&c.learning_rate));
                assert!(matches!(
                    c.generation_max_length,
                    GenerationMaxLength::Fixed128 | GenerationMaxLength::Dynamic
                ));
                assert!(matches!(
                    c.optimizer,
                    Optimizer::Adafactor | Optimizer::Adamw
                ));
                assert!(seen.insert(serde_json::to_string(c).unwrap()));
            }
            assert_eq!(GRID_EPOCHS, [3, 5, 10, 20]);
            assert_eq!(GRID_LEARNING_RATES, [3e-3, 1e-3, 5e-4]);
        },
    );
}

fn env_path(var: &str) -> Option<PathBuf> {
    std::env::var_os(var)
        .map(PathBuf::from)
        .filter(|p| p.exists())
}

#[test]
fn criterion_11_scoring() {
    criterion(
        11,
        "score_run reproduces the precomputed fixture aggregate",
        || {
            let dir = fixture("scoring");
            let refs = read_jsonl(&dir.join("refs.jsonl")).unwrap();
            let preds: Vec<Prediction> =
                claimpipe::corpus::read_jsonl_as(&dir.join("preds.jsonl")).unwrap();
            let expected: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(dir.join("expected.json")).unwrap())
                    .unwrap();
            let meteor = Meteor::new(MeteorParams::default()).unwrap();
            let report = score_run(&preds, &refs, &meteor, &RunLabels::default()).unwrap();
            assert_eq!(report.results.len(), 3);
            for r in &report.results {
                let want = &expected[r.language.code()];
                let avg = want["avg_meteor"].as_f64().unwrap();
                assert!(
                    (r.avg_meteor - avg).abs() <= 1e-9,
                    "{}: {} vs {avg}",
                    r.language,
                    r.avg_meteor
                );
                assert_eq!(r.n_scored as u64, want["n_scored"].as_u64().unwrap());
            }

            // Official Portuguese test references plus an archived submission,
            // both JSONL, when the user provides them.
            match (
                env_path("CLAIMPIPE_PT_TEST_REFS"),
                env_path("CLAIMPIPE_PT_SUBMISSION"),
            ) {
                (Some(refs), Some(sub)) => {
                    let refs: Vec<Record> = read_jsonl(&refs)
                        .unwrap()
                        .into_iter()
                        .filter(|r| r.language == Language::Pt)
                        .collect();
                    let preds: Vec<Prediction> = claimpipe::corpus::read_jsonl_as(&sub).unwrap();
                    let report = score_run(&preds, &refs, &meteor, &RunLabels::default()).unwrap();
                    let pt = report
                        .results
                        .iter()
                        .find(|r| r.language == Language::Pt)
                        .unwrap();
                    note(&format!("official Portuguese average {:.4}", pt.avg_meteor));
                    assert!((pt.avg_meteor - 0.5290).abs() <= 0.005);
                }
                _ => note(
                    "official Portuguese submission not supplied; leaderboard parity not checked",
                ),
            }
        },
    );
}

#[test]
fn criterion_12_corpus_stats() {
    criterion(12, "corpus statistics match hand-computed values", || {
        let records = read_jsonl(&fixture("stats_synthetic.jsonl")).unwrap();
        // cleaned word counts 2, 4, 4, 4, 5, 5, 7, 9
        let stats = word_count_stats(&records, TextField::CleanedPost).unwrap();
        assert_eq!(stats.n, 8);
        assert_eq!(stats.mean_words, 5.0);
        assert_eq!(stats.std_words, 2.0);
        assert_eq!((stats.min_words, stats.max_words), (2, 9));
        assert_eq!(stats.histogram, vec![(0, 8)]);
        let raw = word_count_stats(&records, TextField::RawPost).unwrap();
        assert_eq!(raw.mean_words, 6.0);

        // Official Portuguese train and dev CSV files, when the user provides them.
        match (env_path("CLAIMPIPE_PT_TRAIN_CSV"), env_path("CLAIMPIPE_PT_DEV_CSV")) {
            (Some(train), Some(dev)) => {
                let mut all = load_corpus(&train, CorpusFormat::Csv, Language::Pt, Split::Train).unwrap();
                all.extend(load_corpus(&dev, CorpusFormat::Csv, Language::Pt, Split::Dev).unwrap());
                clean_records(&mut all, RepetitionMode::FullCoverage);
                let s = word_count_stats(&all, TextField::CleanedPost).unwrap();
                note(&format!("official Portuguese cleaned posts: mean {:.1}, std {:.1}", s.mean_words, s.std_words));
                assert!((s.mean_words - 75.0).abs() <= 5.0);
                assert!((s.std_words - 107.0).abs() <= 5.0);
            }
            _ => note("official Portuguese train/dev not supplied; only the synthetic fixture was checked"),
        }
    });
}
