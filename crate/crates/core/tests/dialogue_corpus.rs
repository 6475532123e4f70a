use cardiac_core::agent::corpus::{builtin_corpus, dialogue_session, replay};
use cardiac_core::agent::{invocation_report, ungrounded_numbers, AgentMessage, Agent, Event, ToolResult, ToolUseCommand};

#[test]
fn corpus_replays_with_correct_routing() {
    let agent = Agent::reference();
    let corpus = builtin_corpus();
    assert_eq!(corpus.len(), 50);
    let mut transcripts = Vec::new();
    let mut failures = Vec::new();
    for d in &corpus {
        let (s, turns) = replay(&agent, d).unwrap();
        for (i, t) in turns.iter().enumerate() {
            if !t.routed() || !t.statuses_match() || !t.diagnosis_matches() {
                failures.push(format!("{} turn {i}: expected {:?}, got {:?} ({:?})", d.id, t.expected, t.statuses, t.diagnosis));
            }
            let results: Vec<ToolResult> = t
                .records
                .iter()
                .filter_map(|r| match &r.event {
                    Event::ToolResult { result } => Some(result.clone()),
                    _ => None,
                })
                .collect();
            let bad = ungrounded_numbers(&t.answer, &results);
            if !bad.is_empty() {
                failures.push(format!("{} turn {i}: ungrounded {bad:?} in {:?}", d.id, t.answer));
            }
        }
        transcripts.push(s.transcript().to_vec());
    }
    assert!(failures.is_empty(), "{failures:#?}");
    let report = invocation_report(transcripts.iter().map(|t| t.as_slice()));
    assert_eq!(report.overall.unwrap().rate, 1.0);
}

#[test]
fn commands_and_records_round_trip() {
    let agent = Agent::reference();
    for d in builtin_corpus().iter().take(20) {
        let (s, _) = replay(&agent, d).unwrap();
        for r in s.transcript() {
            let json = serde_json::to_string(r).unwrap();
            let back: cardiac_core::agent::TranscriptRecord = serde_json::from_str(&json).unwrap();
            assert_eq!(serde_json::to_string(&back).unwrap(), json);
            if let Event::ToolUse { command } = &r.event {
                assert_eq!(ToolUseCommand::from_json(&command.to_json()).unwrap().to_json(), command.to_json());
            }
        }
    }
}

#[test]
fn replaying_user_messages_reproduces_actions() {
    let agent = Agent::reference();
    for d in builtin_corpus().iter().filter(|d| d.turns.len() > 1) {
        let (s, _) = replay(&agent, d).unwrap();
        let mut fresh = dialogue_session(d).unwrap();
        for r in s.transcript() {
            if let Event::User { message } = &r.event {
                agent.run_turn(&mut fresh, AgentMessage::user(message.text.clone())).unwrap();
            }
        }
        let a: Vec<_> = s.transcript().iter().map(|r| r.timeless()).collect();
        let b: Vec<_> = fresh.transcript().iter().map(|r| r.timeless()).collect();
        assert_eq!(a, b, "{}", d.id);
    }
}
