//! Checks shared by the crate tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chatlearn_core::assist::{self, Languages};
use chatlearn_core::llm::mock::{hashed_unit_vector, MockProvider, ScriptLine, MOCK_DIMENSION};
use chatlearn_core::llm::{Bindings, Gateway, GatewayOptions, PromptTemplate, TemplateName};
use chatlearn_core::text::NativeScript;
use chatlearn_core::{ChatLearn, Condition, Language, Sender, SessionConfig, StepClock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

pub fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

// ---- prompt goldens ----

#[derive(Deserialize)]
struct GoldenSpec {
    template: TemplateName,
    bindings: Bindings,
}

pub struct GoldenCase {
    pub key: String,
    pub template: TemplateName,
    pub bindings: Bindings,
    pub expected: String,
}

pub fn golden_cases() -> Vec<GoldenCase> {
    let dir = core_dir().join("tests/golden");
    let raw = std::fs::read_to_string(dir.join("bindings.json")).expect("bindings.json");
    let specs: BTreeMap<String, GoldenSpec> = serde_json::from_str(&raw).expect("bindings parse");
    specs
        .into_iter()
        .map(|(key, spec)| {
            let expected = std::fs::read_to_string(dir.join(format!("{key}.txt")))
                .unwrap_or_else(|e| panic!("{key}.txt: {e}"));
            GoldenCase {
                key,
                template: spec.template,
                bindings: spec.bindings,
                expected,
            }
        })
        .collect()
}

/// Renders every golden case; returns the keys that differ.
pub fn check_goldens() -> Result<usize, String> {
    let cases = golden_cases();
    let mut per_template: BTreeMap<String, usize> = BTreeMap::new();
    for case in &cases {
        let rendered = PromptTemplate::get(case.template)
            .render(&case.bindings)
            .map_err(|e| format!("{}: {e}", case.key))?;
        if rendered != case.expected {
            return Err(format!(
                "{} differs\n--- expected\n{}\n--- rendered\n{}",
                case.key, case.expected, rendered
            ));
        }
        *per_template.entry(case.template.to_string()).or_default() += 1;
    }
    for name in ["translate", "explain", "extract", "map"] {
        if per_template.get(name).copied().unwrap_or(0) < 3 {
            return Err(format!("fewer than 3 binding sets for {name}"));
        }
    }
    Ok(cases.len())
}

// ---- extractor corpus ----

#[derive(Deserialize)]
pub struct ExtractorExpected {
    pub phrases: Vec<String>,
    pub pairs: Vec<(String, String)>,
    pub translated_text: String,
    pub violations: usize,
}

#[derive(Deserialize)]
pub struct ExtractorFixture {
    #[serde(skip)]
    pub name: String,
    pub draft: String,
    pub context: String,
    pub mock: Vec<ScriptLine>,
    pub expected: ExtractorExpected,
}

pub fn extractor_fixtures() -> Vec<ExtractorFixture> {
    let dir = core_dir().join("fixtures/extractor");
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .expect("extractor fixtures")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let mut fx: ExtractorFixture =
                serde_json::from_str(&std::fs::read_to_string(&p).expect("read fixture"))
                    .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            fx.name = p.file_stem().unwrap().to_string_lossy().into_owned();
            fx
        })
        .collect()
}

pub fn run_extractor_fixture(fx: &ExtractorFixture) -> Result<(), String> {
    let mock = Arc::new(MockProvider::from_lines(fx.mock.clone()).map_err(|e| e.to_string())?);
    let gateway = Gateway::single(mock, GatewayOptions::default());
    let (native, target) = (Language::new("Chinese"), Language::new("English"));
    let langs = Languages {
        native: &native,
        target: &target,
        script: NativeScript::Han,
    };
    let phrases = assist::extract_phrases(&gateway, &fx.draft, langs).map_err(|e| format!("{}: {e}", fx.name))?;
    if phrases != fx.expected.phrases {
        return Err(format!("{}: stage-1 phrases {:?}", fx.name, phrases));
    }
    let out = assist::extract_and_map(&gateway, &fx.draft, &fx.context, langs)
        .map_err(|e| format!("{}: {e}", fx.name))?;
    let pairs: Vec<(String, String)> = out
        .mapping
        .pairs
        .iter()
        .map(|p| (p.l1_phrase.clone(), p.l2_span.clone()))
        .collect();
    if pairs != fx.expected.pairs {
        return Err(format!("{}: pairs {:?}", fx.name, pairs));
    }
    if out.mapping.translated_text != fx.expected.translated_text {
        return Err(format!("{}: translation {:?}", fx.name, out.mapping.translated_text));
    }
    if out.violations.len() != fx.expected.violations {
        return Err(format!("{}: violations {:?}", fx.name, out.violations));
    }
    if !out.mapping.is_sound() {
        return Err(format!("{}: mapping not sound", fx.name));
    }
    Ok(())
}

// ---- retrieval oracle ----

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

struct OracleEntry {
    id: u64,
    vector: Option<Vec<f64>>,
    captured_at: i64,
    suppressed: bool,
}

fn oracle_rank(entries: &[OracleEntry], query: &[f64], threshold: f64, k: usize) -> Vec<(u64, f64)> {
    let mut hits: Vec<(u64, f64, i64)> = Vec::new();
    for e in entries {
        if e.suppressed {
            continue;
        }
        if let Some(v) = &e.vector {
            let s = oracle_cosine(query, v);
            if s >= threshold {
                hits.push((e.id, s, e.captured_at));
            }
        }
    }
    // exhaustive selection: repeatedly take the best remaining
    let mut out = Vec::new();
    while out.len() < k && !hits.is_empty() {
        let mut best = 0;
        for i in 1..hits.len() {
            let (a, b) = (hits[i], hits[best]);
            let better = a.1 > b.1 || (a.1 == b.1 && (a.2 > b.2 || (a.2 == b.2 && a.0 > b.0)));
            if better {
                best = i;
            }
        }
        let h = hits.swap_remove(best);
        out.push((h.0, h.1));
    }
    out
}

/// One randomized trial comparing engine retrieval against the brute-force oracle.
pub fn retrieval_trial(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = [1usize, 2, 3, 5][rng.random_range(0..4)];
    let threshold: f64 = rng.random_range(0.0..=0.9);
    let n = rng.random_range(0..=50usize);

    // a small pool of correlated directions so similarities spread over [0, 1]
    let base: Vec<f64> = (0..MOCK_DIMENSION).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pool: Vec<Vec<f64>> = (0..8)
        .map(|_| {
            let spread: f64 = rng.random_range(0.0..3.0);
            base.iter().map(|b| b + spread * rng.random_range(-1.0..1.0)).collect()
        })
        .collect();

    let mut lines = Vec::new();
    let mut plan = Vec::new();
    for i in 0..n {
        let text = format!("expression {seed} {i}");
        let vector = match rng.random_range(0..10) {
            0 => {
                lines.push(serde_json::json!({"embed": text, "fail": true}));
                None
            }
            1..=5 => {
                let v = pool[rng.random_range(0..pool.len())].clone();
                lines.push(serde_json::json!({"embed": text, "vector": v}));
                Some(v)
            }
            _ => Some(hashed_unit_vector(&text)),
        };
        plan.push((text, vector, rng.random_bool(0.2)));
    }
    let query_text = format!("incoming {seed}");
    let query = match rng.random_range(0..3) {
        0 => hashed_unit_vector(&query_text),
        1 if n > 0 => match &plan[rng.random_range(0..n)].1 {
            Some(v) => {
                lines.push(serde_json::json!({"embed": query_text, "vector": v}));
                v.clone()
            }
            None => hashed_unit_vector(&query_text),
        },
        _ => {
            let v = pool[rng.random_range(0..pool.len())].clone();
            lines.push(serde_json::json!({"embed": query_text, "vector": v}));
            v
        }
    };
    let script: String = lines.iter().map(|l| format!("{l}\n")).collect();
    let mock = Arc::new(MockProvider::parse(&script).map_err(|e| e.to_string())?);
    let engine = ChatLearn::new(
        Arc::new(Gateway::single(mock, GatewayOptions::default())),
        Arc::new(StepClock::new(1_000, 1)),
    );
    let mut config = SessionConfig::with_condition(Condition::ChatLearn);
    config.similarity_threshold = threshold;
    config.top_k = k as u32;
    let sid = engine.create_session(config, None).map_err(|e| e.to_string())?;

    // entries flagged `late` are captured in the same turn as the query
    let mut oracle = Vec::new();
    for late in [false, true] {
        if late {
            engine
                .append_message(sid, Sender::Ns, &query_text, None)
                .map_err(|e| e.to_string())?;
        }
        for (text, vector, is_late) in &plan {
            if *is_late != late {
                continue;
            }
            let entry = engine
                .capture(sid, text, "context", chatlearn_core::CaptureSource::Comprehension)
                .map_err(|e| e.to_string())?;
            oracle.push(OracleEntry {
                id: entry.id.0,
                vector: vector.clone(),
                captured_at: entry.captured_at,
                suppressed: late,
            });
        }
    }

    let expected = oracle_rank(&oracle, &query, threshold, k);
    let cards = engine
        .retrieve_context_driven(sid, &query_text)
        .map_err(|e| e.to_string())?;
    let got: Vec<(u64, f64)> = cards.iter().map(|c| (c.entry_id.0, c.similarity)).collect();
    let same = got.len() == expected.len()
        && got
            .iter()
            .zip(&expected)
            .all(|(g, e)| g.0 == e.0 && (g.1 - e.1).abs() <= 1e-9);
    if !same {
        return Err(format!(
            "seed {seed} (n={n}, k={k}, t={threshold:.4}): engine {got:?} vs oracle {expected:?}"
        ));
    }
    Ok(())
}
