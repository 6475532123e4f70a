//! Score a generated report against reference findings with the rubric.
//!
//! `cargo run -p cardiac-core --example report_score`

use cardiac_core::agent::{Agent, AgentMessage, Artifact, SessionState};
use cardiac_core::backends::phantom::{phantom_generate, PhantomSpec};
use cardiac_core::quantify::ParamName;
use cardiac_core::report::{quant_deduction, score_report, HallucinationGrade, ReferenceFindings};

fn main() {
    let p = phantom_generate(&PhantomSpec::normal()).expect("valid phantom");
    let mut session = SessionState::new("score");
    for v in [&p.sax, &p.ch2.as_ref().unwrap().0, &p.ch4.as_ref().unwrap().0, &p.lge.as_ref().unwrap().0] {
        session.add_study(v.clone()).expect("valid study");
    }
    Agent::reference().run_turn(&mut session, AgentMessage::user("generate the full report")).expect("turn completes");
    let report = session
        .artifacts()
        .find_map(|(_, a)| match a {
            Artifact::Report(r) => Some(r.report.clone()),
            _ => None,
        })
        .expect("report produced");

    // Reference values taken from the phantom's closed form.
    let quantities = [ParamName::Lvedv, ParamName::Lvesv, ParamName::Lvef, ParamName::Lvm]
        .into_iter()
        .filter_map(|n| p.analytic.value(n).map(|v| (n, v)))
        .collect();
    let reference = ReferenceFindings {
        diagnosis: report.diagnosis().map(|d| d.predicted.clone()).unwrap_or_default(),
        quantities,
        wall_items: report.findings.wall.clone(),
        lge_items: report.findings.lge.clone(),
        other_items: report.findings.other.clone(),
        key_indicators: report.findings.key_indicators.clone(),
        hallucination: HallucinationGrade::None,
    };
    let score = score_report(&report, &reference).expect("scorable report");
    println!("{}", serde_json::to_string_pretty(&score).unwrap());

    for e in [0.04, 0.07, 0.12, 0.25] {
        println!("relative error {:>4.0}% deducts {}", e * 100.0, quant_deduction(e).unwrap());
    }
}
