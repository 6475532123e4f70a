use std::fmt::Write as _;

use super::{segment_label, ReportError, StructuredReport};
use crate::quantify::Unit;

/// Known template ids. `standard` renders every section; `brief` keeps
/// quantification, diagnosis and impression.
pub const TEMPLATES: [&str; 2] = ["standard", "brief"];

fn decimals(unit: Unit) -> usize {
    match unit {
        Unit::LPerMin => 2,
        _ => 1,
    }
}

/// Plain-text report. Output is a pure function of the report.
pub fn render_report(report: &StructuredReport, template: &str) -> Result<String, ReportError> {
    let full = match template {
        "standard" => true,
        "brief" => false,
        other => return Err(ReportError::UnknownTemplate(other.to_string())),
    };
    let s = &report.sections;
    let mut out = String::from("CARDIAC MRI REPORT\n");

    if let (true, Some(studies)) = (full, &s.patient_context) {
        out.push_str("\nSTUDIES\n");
        for st in studies {
            let hr = st.heart_rate_bpm.map(|h| format!(", heart rate {h:.0} bpm")).unwrap_or_default();
            let _ = writeln!(
                out,
                "  {}: {} phases, {} slices{hr} [{}]",
                st.kind.display_name(),
                st.phases,
                st.slices,
                st.artifact
            );
        }
    }

    if let Some(q) = &s.function_quantification {
        let _ = writeln!(out, "\nFUNCTION AND STRUCTURE [{}]", q.artifact);
        for (name, m) in q.data.iter() {
            let flags = if m.flags.is_empty() {
                String::new()
            } else {
                let f: Vec<String> = m.flags.iter().map(|f| serde_json::to_value(f).unwrap().as_str().unwrap().to_string()).collect();
                format!(" (flags: {})", f.join(", "))
            };
            let _ = writeln!(out, "  {name}: {:.*} {}{flags}", decimals(m.unit), m.value, m.unit.as_str());
        }
    }

    if let (true, Some(w)) = (full, &s.wall_assessment) {
        let _ = writeln!(out, "\nWALL THICKNESS, END-DIASTOLIC SEGMENT MEAN [{}]", w.artifact);
        for id in 1..=17u8 {
            match w.data.get(id) {
                Some(v) => {
                    let _ = writeln!(out, "  {}: {v:.1} mm", segment_label(id));
                }
                None => {
                    let _ = writeln!(out, "  {}: not measured", segment_label(id));
                }
            }
        }
        let _ = writeln!(out, "  Findings: {}", report.findings.wall.join("; "));
    }

    if let (true, Some(l)) = (full, &s.lge_findings) {
        let _ = writeln!(out, "\nLATE GADOLINIUM ENHANCEMENT [{}]", l.artifact);
        let _ = writeln!(out, "  {}", l.text);
        for id in 1..=17u8 {
            if let Some(v) = l.bullseye.get(id).filter(|v| *v > 0.0) {
                let _ = writeln!(out, "  {}: {v:.2} of segment myocardium", segment_label(id));
            }
        }
    }

    if let Some(d) = &s.diagnosis {
        out.push_str("\nDIAGNOSIS\n");
        for (name, r) in [("Screening", &d.screening), ("Subtyping", &d.subtyping)] {
            if let Some(r) = r {
                let _ = writeln!(
                    out,
                    "  {name}: {} (probability {:.2}) [{}]",
                    r.data.predicted,
                    r.data.confidence(),
                    r.artifact
                );
            }
        }
    }

    if full && !report.findings.other.is_empty() {
        out.push_str("\nOTHER FINDINGS\n");
        for o in &report.findings.other {
            let _ = writeln!(out, "  - {o}");
        }
    }

    let _ = writeln!(out, "\nIMPRESSION\n  {}", s.impression);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{full_items, measurements};
    use super::super::{assemble_report, ReportItem};
    use super::*;
    use crate::grounding::{unsupported_numbers, NumberSet};

    #[test]
    fn lvef_line_appears_once() {
        let r = assemble_report(&full_items()).unwrap();
        let text = render_report(&r, "standard").unwrap();
        assert_eq!(text.matches("LVEF: 60.0 %").count(), 1, "{text}");
        for (name, _) in r.sections.function_quantification.as_ref().unwrap().data.iter() {
            assert_eq!(text.matches(&format!("  {name}: ")).count(), 1, "{name}");
        }
        assert_eq!(render_report(&r, "standard").unwrap(), text);
        assert!(text.contains("LATE GADOLINIUM"));
    }

    #[test]
    fn absent_sections_are_not_rendered() {
        let r = assemble_report(&[("quant-a".into(), ReportItem::Measurements(measurements(60.0)))]).unwrap();
        let text = render_report(&r, "standard").unwrap();
        assert!(!text.contains("LATE GADOLINIUM") && !text.contains("DIAGNOSIS"));
        assert_eq!(render_report(&r, "fancy"), Err(ReportError::UnknownTemplate("fancy".into())));
    }

    #[test]
    fn every_number_has_provenance() {
        let r = assemble_report(&full_items()).unwrap();
        let source = NumberSet::from_json(&serde_json::to_value(&r).unwrap());
        for t in TEMPLATES {
            let text = render_report(&r, t).unwrap();
            assert!(unsupported_numbers(&text, &source).is_empty(), "{t}: {:?}", unsupported_numbers(&text, &source));
        }
    }
}
