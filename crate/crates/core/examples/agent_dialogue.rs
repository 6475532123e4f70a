//! A short dialogue with the reference agent, printing each transcript
//! record and the final report.
//!
//! `cargo run -p cardiac-core --example agent_dialogue`

use cardiac_core::agent::{Agent, AgentMessage, Event, SessionState};
use cardiac_core::backends::phantom::{phantom_generate, PhantomSpec};

fn main() {
    let p = phantom_generate(&PhantomSpec::normal()).expect("valid phantom");
    let mut session = SessionState::new("example");
    for v in [&p.sax, &p.ch2.as_ref().unwrap().0, &p.ch4.as_ref().unwrap().0, &p.lge.as_ref().unwrap().0] {
        let id = session.add_study(v.clone()).expect("valid study");
        println!("uploaded {} as {id}", v.kind());
    }

    let agent = Agent::reference();
    for text in ["quantify LV function", "what does the guideline say about LVEF?", "generate the full report"] {
        println!("\n> {text}");
        let records = agent.run_turn(&mut session, AgentMessage::user(text)).expect("turn completes");
        for r in &records {
            match &r.event {
                Event::ToolUse { command } => println!("  tool_use {}", command.to_json()),
                Event::ToolResult { result } => println!("  {} {:?}", result.api_name, result.status),
                Event::Answer { message } => println!("{}", message.text),
                Event::User { .. } => {}
            }
        }
    }

    let report = session.artifacts().find_map(|(_, a)| match a {
        cardiac_core::agent::Artifact::Report(r) => Some(r),
        _ => None,
    });
    if let Some(r) = report {
        println!("\n{}", r.text);
    }
}
