use std::io::Write as _;
use std::sync::Arc;

use chatlearn_core::llm::mock::MockProvider;
use chatlearn_core::llm::{Gateway, GatewayOptions};
use chatlearn_core::metrics::{Event, RecallItem};
use chatlearn_core::{
    CaptureSource, ChatLearn, Condition, Error, MessageId, RecallSubmission, Sender, SessionConfig, StepClock,
    TriggerKind,
};

const QUESTION: &str = "I heard that your hometown is Chongqing. Can you tell me about Chongqing's cuisine?";
const DRAFT: &str = "There are many 美食 in Chongqing, especially 麻辣火锅";

fn mock() -> MockProvider {
    MockProvider::new()
        .with_reply(
            &["Translate the user's message", "User Message: I heard that"],
            r#"{"translated_text": "我听说你的家乡是重庆。你能给我讲讲重庆的美食吗？"}"#,
        )
        .with_reply(
            &["Translate the user's message", "User Message: There are many"],
            r#"{"translated_text": "There are many cuisines in Chongqing, especially mala hotpot"}"#,
        )
        .with_reply(&["Translate the user's message"], r#"{"translated_text": "翻译"}"#)
        .with_reply(&["explainer", "\"hometown\""], "Hometown means the place you grew up. 例如：我的家乡是重庆。")
        .with_reply(&["text analyzer"], r#"["美食", "麻辣火锅"]"#)
        .with_reply(&["Original Chinese phrases"], r#"["cuisines", "mala hotpot"]"#)
}

fn engine_with(mock: MockProvider) -> (ChatLearn, Arc<MockProvider>) {
    let mock = Arc::new(mock);
    let gateway = Gateway::single(mock.clone(), GatewayOptions::default());
    (ChatLearn::new(Arc::new(gateway), Arc::new(StepClock::new(0, 10))), mock)
}

fn session(engine: &ChatLearn, condition: Condition) -> chatlearn_core::SessionId {
    engine
        .create_session(SessionConfig::with_condition(condition), None)
        .unwrap()
}

#[test]
fn full_comprehension_is_cached_but_logged_each_time() {
    let (engine, mock) = engine_with(mock());
    let sid = session(&engine, Condition::ChatLearn);
    let (m, _) = engine.send(sid, Sender::Ns, QUESTION, None).unwrap();
    let a = engine.comprehend_full(sid, m.id).unwrap();
    let b = engine.comprehend_full(sid, m.id).unwrap();
    assert_eq!(a, b);
    let translate_calls = mock.prompts().iter().filter(|p| p.contains("Translate the user's")).count();
    assert_eq!(translate_calls, 1);
    let cached: Vec<bool> = engine
        .events(sid)
        .unwrap()
        .iter()
        .filter_map(|e| match &e.event {
            Event::FullComprehension { cached, .. } => Some(*cached),
            _ => None,
        })
        .collect();
    assert_eq!(cached, vec![false, true]);
}

#[test]
fn comprehension_rejects_learner_messages() {
    let (engine, _) = engine_with(mock());
    let sid = session(&engine, Condition::ChatLearn);
    let (m, _) = engine.send(sid, Sender::Nns, DRAFT, Some("x".into())).unwrap();
    assert!(matches!(engine.comprehend_full(sid, m.id), Err(Error::WrongSender(_))));
    assert!(matches!(
        engine.comprehend_full(sid, MessageId(99)),
        Err(Error::UnknownMessage(_))
    ));
}

#[test]
fn prompt_context_holds_last_six_turns() {
    let (engine, mock) = engine_with(mock());
    let sid = session(&engine, Condition::ChatLearn);
    let mut last = None;
    for i in 1..=8 {
        let sender = if i % 2 == 0 { Sender::Nns } else { Sender::Ns };
        let shown = (sender == Sender::Nns).then(|| format!("turn{i}"));
        last = Some(engine.append_message(sid, sender, &format!("turn{i}"), shown).unwrap());
    }
    // the eighth message is the learner's; comprehend the seventh
    let target = MessageId(last.unwrap().id.0 - 1);
    let r = engine.comprehend_full(sid, target).unwrap();
    assert_eq!(r.context_used.len(), 6);
    let prompt = mock.prompts().pop().unwrap();
    let context = prompt
        .split("Context: ")
        .nth(1)
        .unwrap()
        .split("\nUser Message:")
        .next()
        .unwrap();
    assert_eq!(context.lines().count(), 6);
    assert!(!context.contains("turn1\n") && !context.contains("turn2\n"));
    assert!(context.ends_with("NNS: turn8"));
}

#[test]
fn baseline_rejects_learning_features() {
    let (engine, _) = engine_with(mock());
    let sid = session(&engine, Condition::Baseline);
    let (m, cards) = engine.send(sid, Sender::Ns, QUESTION, None).unwrap();
    assert!(cards.is_empty());
    assert!(matches!(
        engine.explore_expression(sid, m.id, "hometown"),
        Err(Error::FeatureDisabled(_))
    ));
    assert!(matches!(
        engine.capture(sid, "hometown", "", CaptureSource::Comprehension),
        Err(Error::FeatureDisabled(_))
    ));
    assert!(matches!(
        engine.retrieve_expression_driven(sid, "hotpot"),
        Err(Error::FeatureDisabled(_))
    ));
    assert!(matches!(
        engine.record_interaction(sid, chatlearn_core::EntryId(1)),
        Err(Error::FeatureDisabled(_))
    ));
    // full translation stays available
    engine.comprehend_full(sid, m.id).unwrap();
    let built = engine.build_expression(sid, DRAFT).unwrap();
    assert!(built.mapping.is_none());
    assert!(engine.review_snapshot(sid).unwrap().is_empty());
}

#[test]
fn translations_identical_across_conditions() {
    let mut outputs = Vec::new();
    for condition in [Condition::Baseline, Condition::ChatLearn] {
        let (engine, _) = engine_with(mock());
        let sid = session(&engine, condition);
        let (m, _) = engine.send(sid, Sender::Ns, QUESTION, None).unwrap();
        let full = engine.comprehend_full(sid, m.id).unwrap();
        let built = engine.build_expression(sid, DRAFT).unwrap();
        outputs.push((full.translated_text, built.translation.translated_text));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn chongqing_draft_is_mapped_and_captured() {
    let (engine, _) = engine_with(mock());
    let sid = session(&engine, Condition::ChatLearn);
    engine.send(sid, Sender::Ns, QUESTION, None).unwrap();
    let out = engine.build_expression(sid, DRAFT).unwrap();
    assert!(!out.degraded);
    let pairs: Vec<_> = out
        .mapping
        .unwrap()
        .pairs
        .into_iter()
        .map(|p| (p.l1_phrase, p.l2_span))
        .collect();
    assert_eq!(
        pairs,
        vec![
            ("美食".to_string(), "cuisines".to_string()),
            ("麻辣火锅".to_string(), "mala hotpot".to_string())
        ]
    );
    let store = engine.review_snapshot(sid).unwrap();
    let surfaces: Vec<_> = store.entries().iter().map(|e| e.surface_text.as_str()).collect();
    assert_eq!(surfaces, ["cuisines", "mala hotpot"]);
    assert!(store.entries().iter().all(|e| e.source == CaptureSource::Expression));
    let support = engine
        .events(sid)
        .unwrap()
        .into_iter()
        .find_map(|e| match e.event {
            Event::ExpressionSupport { l1_tokens, total_tokens, .. } => Some((l1_tokens, total_tokens)),
            _ => None,
        })
        .unwrap();
    assert_eq!(support, (6, 12));
}

#[test]
fn stage_failure_degrades_to_plain_translation() {
    let mock = MockProvider::new()
        .with_reply(&["Translate the user's message"], r#"{"translated_text": "There are many cuisines"}"#)
        .with_reply(&["text analyzer"], "no list here");
    let (engine, _) = engine_with(mock);
    let sid = session(&engine, Condition::ChatLearn);
    let out = engine.build_expression(sid, DRAFT).unwrap();
    assert!(out.degraded);
    assert!(out.mapping.is_none());
    assert_eq!(out.translation.translated_text, "There are many cuisines");
    let stage = engine.events(sid).unwrap().into_iter().find_map(|e| match e.event {
        Event::Degradation { stage, .. } => stage,
        _ => None,
    });
    assert_eq!(stage.as_deref(), Some("extract"));
}

#[test]
fn exploring_logs_then_captures() {
    let (engine, _) = engine_with(mock());
    let sid = session(&engine, Condition::ChatLearn);
    let (m, _) = engine.send(sid, Sender::Ns, QUESTION, None).unwrap();
    assert!(matches!(
        engine.explore_expression(sid, m.id, "not there"),
        Err(Error::SelectionNotFound(_))
    ));
    let ex = engine.explore_expression(sid, m.id, "hometown").unwrap();
    assert!(ex.explanation_text.starts_with("Hometown means"));
    let kinds: Vec<_> = engine.events(sid).unwrap().into_iter().map(|e| e.event).collect();
    let n = kinds.len();
    assert!(matches!(kinds[n - 2], Event::PartialComprehension { .. }));
    assert!(matches!(
        &kinds[n - 1],
        Event::Capture { source: CaptureSource::Comprehension, new_entry: true, .. }
    ));
    let entry = engine.review_snapshot(sid).unwrap().entries()[0].clone();
    assert_eq!(entry.context_message, QUESTION);
}

#[test]
fn cards_skip_the_turn_of_capture_and_count_interactions() {
    let (engine, _) = engine_with(mock());
    let sid = session(&engine, Condition::ChatLearn);
    let (m, _) = engine.send(sid, Sender::Ns, QUESTION, None).unwrap();
    engine.explore_expression(sid, m.id, "hometown").unwrap();
    assert!(engine.retrieve_expression_driven(sid, "hometown").unwrap().is_empty());

    let (_, cards) = engine.send(sid, Sender::Ns, "hometown", None).unwrap();
    assert_eq!(cards.len(), 1);
    assert!((cards[0].similarity - 1.0).abs() < 1e-12);
    assert_eq!(cards[0].trigger, TriggerKind::ContextDriven);
    assert_eq!(cards[0].shown_context, QUESTION);

    let id = cards[0].entry_id;
    let e = engine.record_interaction(sid, id).unwrap();
    assert!(e.pinned);
    assert!(matches!(engine.record_interaction(sid, id), Err(Error::InteractionExhausted(_))));
}

#[test]
fn recapture_refreshes_instead_of_duplicating() {
    let (engine, _) = engine_with(mock());
    let sid = session(&engine, Condition::ChatLearn);
    let a = engine.capture(sid, "Mala Hotpot", "c1", CaptureSource::Expression).unwrap();
    let b = engine.capture(sid, "  mala   hotpot ", "c2", CaptureSource::Expression).unwrap();
    assert_eq!(a.id, b.id);
    assert!(b.captured_at > a.captured_at);
    assert_eq!(engine.review_snapshot(sid).unwrap().len(), 1);
    let flags: Vec<bool> = engine
        .events(sid)
        .unwrap()
        .into_iter()
        .filter_map(|e| match e.event {
            Event::Capture { new_entry, .. } => Some(new_entry),
            _ => None,
        })
        .collect();
    assert_eq!(flags, vec![true, false]);
}

#[test]
fn embedding_failure_keeps_entry_without_vector() {
    let mock = MockProvider::parse(r#"{"embed": "broken", "fail": true}"#).unwrap();
    let (engine, _) = engine_with(mock);
    let sid = session(&engine, Condition::ChatLearn);
    let e = engine.capture(sid, "broken", "ctx", CaptureSource::Expression).unwrap();
    assert!(e.embedding.is_none());
    assert!(engine
        .events(sid)
        .unwrap()
        .iter()
        .any(|e| matches!(e.event, Event::Degradation { .. })));
    assert!(engine.retrieve_expression_driven(sid, "broken").unwrap().is_empty());
}

#[test]
fn concurrent_appends_are_serialized() {
    let (engine, _) = engine_with(mock());
    let engine = Arc::new(engine);
    let sid = session(&engine, Condition::Baseline);
    std::thread::scope(|s| {
        for t in 0..8 {
            let engine = engine.clone();
            s.spawn(move || {
                for i in 0..50 {
                    engine
                        .append_message(sid, Sender::Ns, &format!("thread {t} message {i}"), None)
                        .unwrap();
                }
            });
        }
    });
    let session = engine.session(sid).unwrap();
    assert_eq!(session.messages.len(), 400);
    assert!(session.messages.iter().enumerate().all(|(i, m)| m.id.0 == i as u64 + 1));
    let seqs: Vec<u64> = engine.events(sid).unwrap().iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (1..=400).collect::<Vec<_>>());
}

#[test]
fn recall_requires_test_state() {
    let (engine, _) = engine_with(mock());
    let sid = session(&engine, Condition::ChatLearn);
    engine.send(sid, Sender::Ns, "Some apps are an invasion of privacy.", None).unwrap();
    let sub = RecallSubmission {
        items: vec![RecallItem {
            expression: "Invasion of privacy".into(),
            confidence: 5,
            difficulty: 3,
        }],
        submitted_within_seconds: 60.0,
    };
    assert!(matches!(engine.validate_recall(sid, &sub), Err(Error::WrongState(..))));
    assert!(matches!(engine.compute_report(sid), Err(Error::SessionNotFinished(_))));
    assert_eq!(engine.begin_recall(sid).unwrap(), 180);
    assert!(matches!(
        engine.send(sid, Sender::Ns, "late", None),
        Err(Error::SessionClosed(_))
    ));
    let r = engine.validate_recall(sid, &sub).unwrap();
    assert_eq!(r.recall_quantity, 1);
    engine.close(sid).unwrap();
    engine.compute_report(sid).unwrap();
}

#[test]
fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let mock = Arc::new(mock());
    let gateway = Arc::new(Gateway::single(mock.clone(), GatewayOptions::default()));
    let clock = Arc::new(StepClock::new(0, 10));
    let (sid, before_events, before_session, before_review) = {
        let engine = ChatLearn::open(gateway.clone(), clock.clone(), dir.path()).unwrap();
        let sid = engine
            .create_session(SessionConfig::with_condition(Condition::ChatLearn), Some("room".into()))
            .unwrap();
        let (m, _) = engine.send(sid, Sender::Ns, QUESTION, None).unwrap();
        engine.comprehend_full(sid, m.id).unwrap();
        engine.explore_expression(sid, m.id, "hometown").unwrap();
        let out = engine.build_expression(sid, DRAFT).unwrap();
        engine
            .send(sid, Sender::Nns, DRAFT, Some(out.translation.translated_text))
            .unwrap();
        (
            sid,
            engine.events(sid).unwrap(),
            engine.session(sid).unwrap(),
            engine.review_snapshot(sid).unwrap(),
        )
    };
    // a write cut short by the crash
    let events = dir.path().join(sid.to_string()).join("events.jsonl");
    std::fs::OpenOptions::new()
        .append(true)
        .open(&events)
        .unwrap()
        .write_all(b"{\"seq\":99,\"sess")
        .unwrap();

    let calls = mock.prompts().len();
    let engine = ChatLearn::open(gateway, clock, dir.path()).unwrap();
    assert_eq!(engine.events(sid).unwrap(), before_events);
    assert_eq!(engine.session(sid).unwrap(), before_session);
    assert_eq!(engine.review_snapshot(sid).unwrap(), before_review);
    assert_eq!(engine.find_by_token("room"), Some(sid));
    engine.comprehend_full(sid, MessageId(1)).unwrap();
    assert_eq!(mock.prompts().len(), calls, "comprehension cache recovered");
    let next = engine
        .create_session(SessionConfig::with_condition(Condition::Baseline), None)
        .unwrap();
    assert_eq!(next.0, sid.0 + 1);
    // log keeps growing from where it stopped
    let last = engine.events(sid).unwrap().last().unwrap().seq;
    assert_eq!(last, before_events.last().unwrap().seq + 1);
}

#[test]
fn review_store_can_follow_a_returning_learner() {
    let (engine, _) = engine_with(mock());
    let mut config = SessionConfig::with_condition(Condition::ChatLearn);
    config.persist_review_across_sessions = true;
    let a = engine.create_session(config.clone(), Some("learner".into())).unwrap();
    engine.capture(a, "mala hotpot", "ctx", CaptureSource::Expression).unwrap();
    let b = engine.create_session(config.clone(), Some("learner".into())).unwrap();
    assert_eq!(engine.review_snapshot(b).unwrap().len(), 1);
    config.persist_review_across_sessions = false;
    let c = engine.create_session(config, Some("learner".into())).unwrap();
    assert!(engine.review_snapshot(c).unwrap().is_empty());
}
