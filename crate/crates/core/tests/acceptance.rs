//! Acceptance suite. Prints one `[PASS]`, `[FAIL]` or `[SKIP]` line per
//! criterion and exits non-zero if any criterion fails.
//!
//! Criterion 1 needs the public MASSIVE fr-FR file; point `MASSIVE_FR_PATH`
//! at `fr-FR.jsonl` to run it.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

use xproject_core::annot::{self, AnnotatedUtterance};
use xproject_core::botgen::{self, PipelineTemplate};
use xproject_core::corpus::{self, Dataset, Example, WOLOF_BOT_INTENTS};
use xproject_core::eval::{self, IntentPrediction, LabeledSpan, SlotPrediction};
use xproject_core::markerlab::{self, WrapMode};
use xproject_core::projection::{self, IdentifierAllocator, ProjectionOptions};
use xproject_core::translator::{FaultBackend, FaultKind, FaultProfile, IdentityBackend, Translator};

type Criterion = (&'static str, fn() -> Verdict);

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

fn chance(rng: &mut ChaCha8Rng, p: f64) -> bool {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 <= p
}

const TEXT_CHARS: &str = "abcdefghijklmnopqrstuvwxyzàéèçñŋëóúABCXYZ0123456789'-.,!?ßøπжд中文字😀";
const LABEL_CHARS: &str = "abcdefghijklmnopqrstuvwxyz_";

fn word(rng: &mut ChaCha8Rng, alphabet: &str, max: usize) -> String {
    let chars: Vec<char> = alphabet.chars().collect();
    (0..1 + below(rng, max))
        .map(|_| chars[below(rng, chars.len())])
        .collect()
}

/// Random markup together with the plain text and char-offset spans it
/// must parse to.
struct Generated {
    markup: String,
    plain: String,
    spans: Vec<(String, String, usize, usize)>,
}

fn generate(rng: &mut ChaCha8Rng, min_spans: usize) -> Generated {
    let n_spans = min_spans + below(rng, 6 - min_spans);
    let mut segments: Vec<Option<(String, String)>> = (0..below(rng, 7)).map(|_| None).collect();
    for _ in 0..n_spans {
        let label = {
            let mut l = word(rng, "abcdefghijklmnopqrstuvwxyz", 1);
            l.push_str(&word(rng, LABEL_CHARS, 9));
            l
        };
        let surface = (0..1 + below(rng, 3))
            .map(|_| word(rng, TEXT_CHARS, 8))
            .collect::<Vec<_>>()
            .join(" ");
        let at = below(rng, segments.len() + 1);
        segments.insert(at, Some((label, surface)));
    }
    let (mut markup, mut plain, mut spans) = (Vec::new(), Vec::new(), Vec::new());
    let mut offset = 0;
    for seg in segments {
        if !plain.is_empty() {
            offset += 1;
        }
        match seg {
            None => {
                let mut w = word(rng, TEXT_CHARS, 8);
                if chance(rng, 0.1) {
                    w.push(':');
                }
                offset += w.chars().count();
                markup.push(w.clone());
                plain.push(w);
            }
            Some((label, surface)) => {
                let len = surface.chars().count();
                spans.push((label.clone(), surface.clone(), offset, offset + len));
                offset += len;
                markup.push(format!("[{label} : {surface}]"));
                plain.push(surface);
            }
        }
    }
    Generated {
        markup: markup.join(" "),
        plain: plain.join(" "),
        spans,
    }
}

fn observed(u: &AnnotatedUtterance) -> Vec<(String, String, usize, usize)> {
    u.spans
        .iter()
        .map(|s| (s.label.clone(), s.surface.clone(), s.start, s.end))
        .collect()
}

fn criterion_1() -> Verdict {
    const TABLE: [(&str, usize); 27] = [
        ("transport_query", 314),
        ("transport_ticket", 187),
        ("transport_taxi", 150),
        ("transport_traffic", 154),
        ("calendar_query", 794),
        ("calendar_set", 1150),
        ("calendar_remove", 426),
        ("alarm_set", 254),
        ("alarm_remove", 113),
        ("alarm_query", 183),
        ("lists_query", 299),
        ("lists_remove", 253),
        ("lists_createoradd", 241),
        ("takeaway_query", 181),
        ("takeaway_order", 177),
        ("play_audiobook", 226),
        ("play_game", 169),
        ("play_music", 938),
        ("play_podcasts", 290),
        ("play_radio", 401),
        ("news_query", 709),
        ("recommendation_locations", 235),
        ("recommendation_events", 259),
        ("recommendation_movies", 102),
        ("datetime_query", 502),
        ("datetime_convert", 76),
        ("weather_query", 855),
    ];
    let Some(path) = std::env::var_os("MASSIVE_FR_PATH") else {
        return Verdict::Skip("MASSIVE_FR_PATH not set; criterion 2 substitutes".into());
    };
    let start = Instant::now();
    let filter: BTreeSet<String> = WOLOF_BOT_INTENTS.iter().map(|s| s.to_string()).collect();
    let ds = match corpus::load_corpus(Path::new(&path), Some("fr-FR"), Some(&filter)) {
        Ok(o) => o.dataset,
        Err(e) => return Verdict::Fail(format!("cannot load corpus: {e}")),
    };
    let stats = corpus::stats(&ds);
    let elapsed = start.elapsed();
    let mismatches: Vec<String> = TABLE
        .iter()
        .filter(|(intent, n)| stats.per_intent.get(*intent).copied().unwrap_or(0) != *n)
        .map(|(intent, n)| {
            format!(
                "{intent}: {} vs {n}",
                stats.per_intent.get(*intent).copied().unwrap_or(0)
            )
        })
        .collect();
    let detail = format!(
        "total {} (want 9638), {} mismatching intents, {:.2?}",
        stats.total,
        mismatches.len(),
        elapsed
    );
    if mismatches.is_empty() && stats.total == 9638 && elapsed < Duration::from_secs(10) {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(format!("{detail}; {}", mismatches.join(", ")))
    }
}

fn criterion_2() -> Verdict {
    const N: usize = 10_000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut failures, mut failed) = (Vec::new(), 0);
    for i in 0..N {
        let g = generate(&mut rng, 0);
        let ok = match annot::parse_annotated(&g.markup, "intent") {
            Ok(u) => {
                u.plain == g.plain
                    && observed(&u) == g.spans
                    && u.serialize().ok().as_deref() == Some(g.markup.as_str())
                    && annot::parse_annotated(&u.serialize().unwrap(), "intent").ok().as_ref() == Some(&u)
            }
            Err(_) => false,
        };
        if !ok {
            failed += 1;
            if failures.len() < 3 {
                failures.push(format!("#{i}: {:?}", g.markup));
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = format!("{N} utterances, {failed} failures, {elapsed:.2?} (limit 30 s)");
    if failed == 0 && elapsed < Duration::from_secs(30) {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(format!("{detail}; {}", failures.join("; ")))
    }
}

fn dataset(seed: u64, n: usize, min_spans: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| {
            let g = generate(&mut rng, min_spans);
            let text = if g.plain.is_empty() {
                "vide".to_string()
            } else {
                g.plain
            };
            let annotated_text = if g.markup.is_empty() {
                "vide".to_string()
            } else {
                g.markup
            };
            Example {
                id: format!("{seed}-{i}"),
                locale: "fr-FR".into(),
                domain: "generated".into(),
                intent: format!("intent_{}", i % 7),
                text,
                annotated_text,
            }
        })
        .collect();
    Dataset {
        locale: "fr-FR".into(),
        examples,
        provenance: format!("generated seed {seed}"),
    }
}

fn criterion_3() -> Verdict {
    let ds = dataset(3, 1000, 0);
    let start = Instant::now();
    let t = Translator::new(Arc::new(IdentityBackend));
    let out = match projection::project_dataset(&ds, &t, &ProjectionOptions::new("fr", "wo", "wo-SN")) {
        Ok(o) => o,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let elapsed = start.elapsed();
    let mut unequal = 0;
    for (src, got) in ds.examples.iter().zip(&out.projected.examples) {
        let (a, b) = (src.utterance().unwrap(), got.utterance().unwrap());
        if a != b || src.id != got.id || src.intent != got.intent {
            unequal += 1;
        }
    }
    let detail = format!(
        "{} examples, success rate {}, quarantine {}, {unequal} unequal, {elapsed:.2?} (limit 10 s)",
        ds.len(),
        out.summary.success_rate,
        out.quarantine.len()
    );
    if out.summary.success_rate == 1.0
        && out.quarantine.is_empty()
        && out.projected.len() == ds.len()
        && unequal == 0
        && elapsed < Duration::from_secs(10)
    {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn criterion_4() -> Verdict {
    let mut mismatches = Vec::new();
    let mut quarantined_total = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for round in 0..20 {
        let seed = rng.next_u64();
        let p = |rng: &mut ChaCha8Rng| (below(rng, 16) as f64) / 100.0;
        let profile = FaultProfile {
            drop_identifier_prob: p(&mut rng),
            mutate_digit_to_letter_prob: p(&mut rng),
            translate_marker_content_prob: p(&mut rng),
            duplicate_identifier_prob: p(&mut rng),
            seed,
            ..FaultProfile::default()
        };
        let ds = dataset(1000 + round, 200, 0);
        let backend = FaultBackend::new(IdentityBackend, profile.clone()).unwrap();
        let t = Translator::new(Arc::new(backend));
        let out = projection::project_dataset(&ds, &t, &ProjectionOptions::new("fr", "wo", "wo-SN")).unwrap();
        let got: BTreeMap<String, String> = out
            .quarantine
            .iter()
            .map(|r| (r.example_id.clone(), r.quarantine_reason.unwrap().as_str().to_string()))
            .collect();

        let mut allocator = IdentifierAllocator::default();
        let mut want = BTreeMap::new();
        for e in &ds.examples {
            let masked = projection::mask_spans(&e.utterance().unwrap(), &mut allocator);
            let events = profile.replay(&masked.text, &masked.text);
            if !events.is_empty() {
                let reason = if events.iter().all(|ev| ev.kind == FaultKind::Duplicate) {
                    "DUPLICATED_ID"
                } else {
                    "MISSING_ID"
                };
                want.insert(e.id.clone(), reason.to_string());
            }
        }
        quarantined_total += want.len();
        for id in got.keys().chain(want.keys()).collect::<BTreeSet<_>>() {
            if got.get(id) != want.get(id) {
                mismatches.push(format!(
                    "seed {seed} {id}: {:?} vs oracle {:?}",
                    got.get(id),
                    want.get(id)
                ));
            }
        }
    }
    let detail = format!(
        "20 seeds x 200 examples, {quarantined_total} oracle quarantines, {} mismatches",
        mismatches.len()
    );
    if mismatches.is_empty() && quarantined_total > 0 {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(format!(
            "{detail}; {}",
            mismatches.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
        ))
    }
}

fn criterion_5() -> Verdict {
    let ds = dataset(5, 200, 1);
    let sample: Vec<AnnotatedUtterance> = ds.examples.iter().map(|e| e.utterance().unwrap()).collect();
    let profile = FaultProfile {
        strip_delimiters: markerlab::catalog_delimiters_except("dollars"),
        strip_delimiter_prob: 1.0,
        ..FaultProfile::default()
    };
    let t = Translator::new(Arc::new(FaultBackend::new(IdentityBackend, profile).unwrap()));
    let schemes = markerlab::builtin_schemes(WrapMode::WrapIdentifier);
    let r = match markerlab::run_trial(&sample, &schemes, &t, "fr", "wo", 8) {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let others_zero = ["xml", "braces", "brackets", "parentheses"]
        .iter()
        .all(|n| r.per_scheme[*n].preservation_rate == 0.0);
    let detail = format!(
        "ranking {:?}, dollars {:.3}, {} sentences",
        r.ranking, r.per_scheme["dollars"].preservation_rate, r.sentences_used
    );
    if r.ranking[0] == "dollars" && r.per_scheme["dollars"].preservation_rate == 1.0 && others_zero {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

// Brute-force metric counters, written against the definitions only.

fn brute_prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn brute_bin(c: f64) -> usize {
    (0..10).rev().find(|&b| c >= b as f64 / 10.0).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn random_intents(rng: &mut ChaCha8Rng) -> Vec<IntentPrediction> {
    let k = 1 + below(rng, 8);
    let n = 1 + below(rng, 200);
    (0..n)
        .map(|i| {
            let gold = below(rng, k);
            let pred = if chance(rng, 0.6) { gold } else { below(rng, k) };
            let confidence = if chance(rng, 0.3) {
                below(rng, 11) as f64 / 10.0
            } else {
                (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
            };
            IntentPrediction {
                example_id: i.to_string(),
                gold_intent: format!("c{gold}"),
                predicted_intent: format!("c{pred}"),
                confidence,
            }
        })
        .collect()
}

fn check_intents(preds: &[IntentPrediction]) -> Result<(), String> {
    let labels: BTreeSet<&str> = preds
        .iter()
        .flat_map(|p| [p.gold_intent.as_str(), p.predicted_intent.as_str()])
        .collect();
    let report = eval::intent_report(preds).map_err(|e| e.to_string())?;
    let (mut f1s, mut ptp, mut pfp, mut pfn) = (Vec::new(), 0, 0, 0);
    for &c in &labels {
        let tp = preds
            .iter()
            .filter(|p| p.gold_intent == c && p.predicted_intent == c)
            .count();
        let fp = preds
            .iter()
            .filter(|p| p.gold_intent != c && p.predicted_intent == c)
            .count();
        let fn_ = preds
            .iter()
            .filter(|p| p.gold_intent == c && p.predicted_intent != c)
            .count();
        let (p, r, f) = brute_prf(tp, fp, fn_);
        let m = report.per_class.get(c).ok_or(format!("class {c} missing"))?;
        if !(close(m.precision, p) && close(m.recall, r) && close(m.f1, f) && m.support == tp + fn_) {
            return Err(format!("class {c}: {m:?} vs ({p}, {r}, {f})"));
        }
        if tp + fn_ > 0 {
            f1s.push(f);
        }
        (ptp, pfp, pfn) = (ptp + tp, pfp + fp, pfn + fn_);
    }
    let macro_f1 = f1s.iter().sum::<f64>() / f1s.len() as f64;
    let (_, _, micro) = brute_prf(ptp, pfp, pfn);
    let acc = preds.iter().filter(|p| p.gold_intent == p.predicted_intent).count() as f64 / preds.len() as f64;
    if !(close(report.macro_f1, macro_f1) && close(report.micro_f1, micro) && close(report.accuracy, acc)) {
        return Err(format!(
            "aggregates {} {} {} vs {macro_f1} {micro} {acc}",
            report.macro_f1, report.micro_f1, report.accuracy
        ));
    }

    let cm = eval::confusion(preds).map_err(|e| e.to_string())?;
    let labels: Vec<&str> = labels.into_iter().collect();
    if cm.labels != labels {
        return Err("confusion labels".into());
    }
    for (gi, g) in labels.iter().enumerate() {
        for (pi, q) in labels.iter().enumerate() {
            let cell: Vec<f64> = preds
                .iter()
                .filter(|p| p.gold_intent == *g && p.predicted_intent == *q)
                .map(|p| p.confidence)
                .collect();
            let mean = if cell.is_empty() {
                0.0
            } else {
                cell.iter().sum::<f64>() / cell.len() as f64
            };
            if cm.counts[gi][pi] != cell.len() || !close(cm.mean_confidence[gi][pi], mean) {
                return Err(format!("confusion cell {g}/{q}"));
            }
        }
    }

    let hist = eval::confidence_histogram(preds).map_err(|e| e.to_string())?;
    for (b, bin) in hist.bins.iter().enumerate() {
        let correct = preds
            .iter()
            .filter(|p| brute_bin(p.confidence) == b && p.gold_intent == p.predicted_intent)
            .count();
        let incorrect = preds
            .iter()
            .filter(|p| brute_bin(p.confidence) == b && p.gold_intent != p.predicted_intent)
            .count();
        if bin.correct != correct || bin.incorrect != incorrect {
            return Err(format!("histogram bin {b}: {bin:?} vs {correct}/{incorrect}"));
        }
    }
    Ok(())
}

fn random_spans(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<LabeledSpan> {
    let mut spans = Vec::new();
    let mut pos = below(rng, 3);
    while pos < len {
        let w = 1 + below(rng, 4);
        if pos + w <= len && chance(rng, 0.5) {
            spans.push(LabeledSpan::new(&format!("s{}", below(rng, k)), pos, pos + w));
        }
        pos += w + below(rng, 3);
    }
    spans
}

fn random_slots(rng: &mut ChaCha8Rng) -> Vec<SlotPrediction> {
    let k = 1 + below(rng, 8);
    let n = 1 + below(rng, 200);
    (0..n)
        .map(|i| {
            let len = 1 + below(rng, 30);
            let gold = random_spans(rng, len, k);
            let predicted = if chance(rng, 0.5) {
                let mut kept = Vec::new();
                for s in &gold {
                    if !chance(rng, 0.85) {
                        continue;
                    }
                    if chance(rng, 0.2) {
                        kept.push(LabeledSpan::new(&format!("s{}", below(rng, k)), s.start, s.end));
                    } else {
                        kept.push(s.clone());
                    }
                }
                kept
            } else {
                random_spans(rng, len, k)
            };
            SlotPrediction {
                example_id: i.to_string(),
                gold_spans: gold,
                predicted_spans: predicted,
                text: None,
                length: Some(len),
            }
        })
        .collect()
}

fn check_slots(preds: &[SlotPrediction]) -> Result<(), String> {
    let report = eval::slot_report(preds).map_err(|e| e.to_string())?;
    let labels: BTreeSet<&str> = preds
        .iter()
        .flat_map(|p| p.gold_spans.iter().chain(&p.predicted_spans).map(|s| s.label.as_str()))
        .collect();
    let (mut f1s, mut ptp, mut pfp, mut pfn) = (Vec::new(), 0, 0, 0);
    for &c in &labels {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for p in preds {
            let gold: Vec<&LabeledSpan> = p.gold_spans.iter().filter(|s| s.label == c).collect();
            let mut used = vec![false; gold.len()];
            for s in p.predicted_spans.iter().filter(|s| s.label == c) {
                match (0..gold.len()).find(|&j| !used[j] && gold[j] == s) {
                    Some(j) => {
                        used[j] = true;
                        tp += 1;
                    }
                    None => fp += 1,
                }
            }
            fn_ += used.iter().filter(|u| !**u).count();
        }
        let (pr, rc, f) = brute_prf(tp, fp, fn_);
        let m = report.per_class.get(c).ok_or(format!("slot {c} missing"))?;
        if !(close(m.precision, pr) && close(m.recall, rc) && close(m.f1, f)) {
            return Err(format!("slot {c}: {m:?} vs ({pr}, {rc}, {f})"));
        }
        if tp + fn_ > 0 {
            f1s.push(f);
        }
        (ptp, pfp, pfn) = (ptp + tp, pfp + fp, pfn + fn_);
    }
    let macro_f1 = if f1s.is_empty() {
        0.0
    } else {
        f1s.iter().sum::<f64>() / f1s.len() as f64
    };
    let (_, _, micro) = brute_prf(ptp, pfp, pfn);
    let label_at = |spans: &[LabeledSpan], i: usize| {
        spans
            .iter()
            .find(|s| s.start <= i && i < s.end)
            .map_or("O".to_string(), |s| s.label.clone())
    };
    let (mut same, mut total) = (0, 0);
    for p in preds {
        for i in 0..p.length.unwrap() {
            total += 1;
            if label_at(&p.gold_spans, i) == label_at(&p.predicted_spans, i) {
                same += 1;
            }
        }
    }
    let acc = same as f64 / total as f64;
    if !(close(report.macro_f1, macro_f1) && close(report.micro_f1, micro) && close(report.accuracy, acc)) {
        return Err(format!(
            "slot aggregates {} {} {} vs {macro_f1} {micro} {acc}",
            report.macro_f1, report.micro_f1, report.accuracy
        ));
    }
    Ok(())
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    for set in 0..100 {
        if let Err(e) = check_intents(&random_intents(&mut rng)) {
            failures.push(format!("intent set {set}: {e}"));
        }
        if let Err(e) = check_slots(&random_slots(&mut rng)) {
            failures.push(format!("slot set {set}: {e}"));
        }
    }
    let detail = format!(
        "100 intent + 100 slot prediction sets, tolerance 1e-12, {} failures",
        failures.len()
    );
    if failures.is_empty() {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(format!(
            "{detail}; {}",
            failures.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
        ))
    }
}

fn write_ontology(root: &Path) {
    let intents: [(&str, &str, &[&str], &str); 7] = [
        (
            "alarm",
            "alarm_set",
            &["réveille moi à [time : sept heures]", "mets une alarme"],
            "Alarm bi dafa tëral",
        ),
        ("alarm", "alarm_query", &["quelles alarmes ai je"], "Yii ñooy say alarm"),
        (
            "alarm",
            "alarm_remove",
            &["supprime l'alarme de [time : six heures]"],
            "",
        ),
        (
            "transport",
            "transport_taxi",
            &["appelle un taxi pour [place_name : thiès]"],
            "Taksi bi ngi ñëw",
        ),
        (
            "transport",
            "transport_query",
            &["prochain train pour [place_name : dakar] [date : demain]"],
            "Dinaa seet",
        ),
        (
            "weather",
            "weather_query",
            &["quel temps fait il à [place_name : saint-louis]"],
            "Dina tàng",
        ),
        (
            "weather",
            "weather_forecast",
            &["prévisions pour [date : lundi]"],
            "Ëllëg dina taw",
        ),
    ];
    for (domain, intent, examples, response) in intents {
        let dir = root.join(domain);
        std::fs::create_dir_all(&dir).unwrap();
        let mut w = csv::Writer::from_path(dir.join(format!("{intent}.csv"))).unwrap();
        w.write_record(["example", "response"]).unwrap();
        for (i, e) in examples.iter().enumerate() {
            w.write_record([*e, if i == 0 { response } else { "" }]).unwrap();
        }
        w.flush().unwrap();
    }
}

fn criterion_7() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let onto = dir.path().join("ontology");
    write_ontology(&onto);
    let o = match botgen::load_ontology(&onto) {
        Ok(o) => o,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let t = PipelineTemplate::default();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    botgen::generate_project(&o, &t, &a).unwrap();
    botgen::generate_project(&o, &t, &b).unwrap();
    let identical = botgen::SCAFFOLD_FILES
        .iter()
        .all(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap());
    let report = botgen::validate_scaffold(&a);

    let domain: serde_yaml::Value =
        serde_yaml::from_str(&std::fs::read_to_string(a.join("domain.yml")).unwrap()).unwrap();
    let rules: serde_yaml::Value =
        serde_yaml::from_str(&std::fs::read_to_string(a.join("data/rules.yml")).unwrap()).unwrap();
    let names = |v: &serde_yaml::Value| -> BTreeSet<String> {
        v.as_sequence()
            .unwrap()
            .iter()
            .map(|x| x.as_str().unwrap().to_string())
            .collect()
    };
    let declared_intents = names(&domain["intents"]);
    let declared_entities = names(&domain["entities"]);
    let nlu = botgen::read_nlu(&a).unwrap();
    let used_entities: BTreeSet<String> = nlu
        .values()
        .flatten()
        .flat_map(|u| u.spans.iter().map(|s| s.label.clone()))
        .collect();
    let rule_intents: BTreeSet<String> = rules["rules"]
        .as_sequence()
        .unwrap()
        .iter()
        .map(|r| r["steps"][0]["intent"].as_str().unwrap().to_string())
        .collect();
    let closure = declared_entities == used_entities
        && declared_intents == nlu.keys().cloned().collect()
        && rule_intents == declared_intents;
    let detail = format!(
        "{} domains / {} intents, byte-identical: {identical}, violations: {}, closure: {closure}",
        o.domains().len(),
        o.intents.len(),
        report.violations.len()
    );
    if identical && report.ok() && closure && o.domains().len() == 3 && o.intents.len() == 7 {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(format!("{detail}; {:?}", report.violations))
    }
}

fn criterion_8() -> Verdict {
    let preds = vec![
        IntentPrediction {
            example_id: "1".into(),
            gold_intent: "alarm_set".into(),
            predicted_intent: "alarm_set".into(),
            confidence: 0.9,
        },
        IntentPrediction {
            example_id: "2".into(),
            gold_intent: "weather_query".into(),
            predicted_intent: "weather_query".into(),
            confidence: 0.8,
        },
    ];
    let r = eval::intent_report(&preds).unwrap();
    let intents = eval::render_intent_table(&[("French", &r), ("Wolof", &r)]);
    let slots_preds = vec![SlotPrediction {
        example_id: "1".into(),
        gold_spans: vec![LabeledSpan::new("time", 0, 4)],
        predicted_spans: vec![LabeledSpan::new("time", 0, 4)],
        text: None,
        length: Some(8),
    }];
    let s = eval::slot_report(&slots_preds).unwrap();
    let slots = eval::render_slot_table(&[("French", &s), ("Wolof", &s)]);
    let header_ok = intents
        .lines()
        .next()
        .is_some_and(|h| h.contains("French") && h.contains("Wolof"));
    let macro_ok = intents
        .lines()
        .last()
        .is_some_and(|l| l.starts_with("macro avg") && l.contains("1.000"));
    let slot_rows: Vec<&str> = slots
        .lines()
        .skip(2)
        .map(|l| l.split("  ").next().unwrap().trim())
        .collect();
    let layout = header_ok && macro_ok && slot_rows == ["micro avg", "macro avg", "accuracy"];
    let note = "reported intent F1 (0.999 / 0.995 macro), slot scores and 26.38 BLEU need the trained MT model and \
                LaBSE/DIET classifier and are not reproduced here; checked only that report tables take their layout";
    if layout {
        Verdict::Pass(note.into())
    } else {
        Verdict::Fail(format!("table layout differs:\n{intents}{slots}"))
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 corpus statistics match the MASSIVE fr-FR extract", criterion_1),
        ("2 annotation grammar round trip", criterion_2),
        ("3 identity projection invariance", criterion_3),
        ("4 fault detection matches replay oracle", criterion_4),
        ("5 marker lab ranks dollars first", criterion_5),
        ("6 metrics match brute-force counters", criterion_6),
        ("7 generator determinism and validity", criterion_7),
        ("8 report layout for published scores", criterion_8),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        match verdict {
            Verdict::Pass(d) => println!("[PASS] {name}: {d}"),
            Verdict::Skip(d) => println!("[SKIP] {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("[FAIL] {name}: {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
