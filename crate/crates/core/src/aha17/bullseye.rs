use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AhaError, Bullseye17, Quantity, Ring, Statistic, SEGMENTS};

/// Plot sector `[theta0, theta1]` per segment in the visual frame of the
/// polar map: anterior up, septum left. The apex spans the full circle.
pub const BULLSEYE_PLOT_ANGLES: [(f64, f64); 17] = [
    (60.0, 120.0),
    (120.0, 180.0),
    (180.0, 240.0),
    (240.0, 300.0),
    (300.0, 360.0),
    (0.0, 60.0),
    (60.0, 120.0),
    (120.0, 180.0),
    (180.0, 240.0),
    (240.0, 300.0),
    (300.0, 360.0),
    (0.0, 60.0),
    (45.0, 135.0),
    (135.0, 225.0),
    (225.0, 315.0),
    (315.0, 405.0),
    (0.0, 360.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentGeometry {
    pub id: u8,
    pub name: String,
    pub ring: Ring,
    pub theta0_deg: f64,
    pub theta1_deg: f64,
    pub value: Option<f64>,
}

/// Polar-map document: rings outer to inner are basal, mid, apical, apex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BullseyeDocument {
    pub quantity: Quantity,
    pub statistic: Statistic,
    pub orientation: String,
    pub segments: Vec<SegmentGeometry>,
}

/// Inner and outer radius of each ring in plot units.
fn ring_radii(ring: Ring) -> (f64, f64) {
    match ring {
        Ring::Basal => (3.0, 4.0),
        Ring::Mid => (2.0, 3.0),
        Ring::Apical => (1.0, 2.0),
        Ring::Apex => (0.0, 1.0),
    }
}

impl BullseyeDocument {
    pub fn from_bullseye(b: &Bullseye17) -> Self {
        let segments = SEGMENTS
            .iter()
            .zip(BULLSEYE_PLOT_ANGLES)
            .map(|(&(id, name, ring), (t0, t1))| SegmentGeometry {
                id,
                name: name.to_string(),
                ring,
                theta0_deg: t0,
                theta1_deg: t1,
                value: b.get(id),
            })
            .collect();
        BullseyeDocument {
            quantity: b.quantity,
            statistic: b.statistic,
            orientation: b.orientation.clone(),
            segments,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AhaError> {
        let doc: BullseyeDocument = serde_json::from_str(text).map_err(|e| AhaError::InvalidBullseye(e.to_string()))?;
        doc.to_bullseye()?;
        Ok(doc)
    }

    /// Ring names outer to inner, as laid out.
    pub fn ring_order(&self) -> Vec<Ring> {
        let mut rings: Vec<Ring> = Vec::new();
        let mut by_radius: Vec<&SegmentGeometry> = self.segments.iter().collect();
        by_radius.sort_by(|a, b| ring_radii(b.ring).1.total_cmp(&ring_radii(a.ring).1));
        for s in by_radius {
            if !rings.contains(&s.ring) {
                rings.push(s.ring);
            }
        }
        rings
    }

    pub fn to_bullseye(&self) -> Result<Bullseye17, AhaError> {
        let mut values = [None; 17];
        let mut seen = [false; 17];
        for s in &self.segments {
            let i = usize::from(s.id).checked_sub(1).filter(|&i| i < 17);
            let Some(i) = i else {
                return Err(AhaError::InvalidBullseye(format!("segment id {}", s.id)));
            };
            if std::mem::replace(&mut seen[i], true) {
                return Err(AhaError::InvalidBullseye(format!("duplicate segment {}", s.id)));
            }
            values[i] = s.value;
        }
        if seen.iter().any(|s| !s) {
            return Err(AhaError::InvalidBullseye("missing segments".into()));
        }
        let b = Bullseye17::new(self.quantity, self.statistic, self.orientation.clone(), values);
        b.validate()?;
        Ok(b)
    }

    /// Static SVG rendering with a grey ramp and the value of each sector.
    pub fn to_svg(&self) -> String {
        let scale = 50.0;
        let c = 4.0 * scale + 10.0;
        let vmax = self.segments.iter().filter_map(|s| s.value).fold(0.0, f64::max);
        let point = |r: f64, deg: f64| {
            let a = deg.to_radians();
            (c + r * scale * a.cos(), c - r * scale * a.sin())
        };
        let mut out = String::new();
        let size = 2.0 * c;
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#);
        for s in &self.segments {
            let (r0, r1) = ring_radii(s.ring);
            let fill = match s.value {
                Some(v) if vmax > 0.0 => {
                    let g = (235.0 - 175.0 * v / vmax).round() as u8;
                    format!("rgb({g},{g},{g})")
                }
                Some(_) => "rgb(235,235,235)".into(),
                None => "rgb(200,120,120)".into(),
            };
            let path = if s.ring == Ring::Apex {
                format!(r#"<circle cx="{c:.2}" cy="{c:.2}" r="{:.2}""#, r1 * scale)
            } else {
                let (ax, ay) = point(r1, s.theta0_deg);
                let (bx, by) = point(r1, s.theta1_deg);
                let (cx2, cy2) = point(r0, s.theta1_deg);
                let (dx, dy) = point(r0, s.theta0_deg);
                let (ro, ri) = (r1 * scale, r0 * scale);
                format!(
                    r#"<path d="M {ax:.2} {ay:.2} A {ro:.2} {ro:.2} 0 0 0 {bx:.2} {by:.2} L {cx2:.2} {cy2:.2} A {ri:.2} {ri:.2} 0 0 1 {dx:.2} {dy:.2} Z""#
                )
            };
            let _ = writeln!(out, r#"  {path} fill="{fill}" stroke="black"><title>{} {}</title></{}>"#, s.id, s.name, if s.ring == Ring::Apex { "circle" } else { "path" });
            let mid = (s.theta0_deg + s.theta1_deg) / 2.0;
            let (tx, ty) = if s.ring == Ring::Apex { (c, c) } else { point((r0 + r1) / 2.0, mid) };
            let label = s.value.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
            let _ = writeln!(out, r#"  <text x="{tx:.2}" y="{ty:.2}" font-size="11" text-anchor="middle">{label}</text>"#);
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Bullseye17 {
        let mut v = [None; 17];
        for (i, x) in v.iter_mut().enumerate() {
            *x = Some(6.0 + i as f64 * 0.25);
        }
        Bullseye17::new(Quantity::Lvedwt, Statistic::Mean, "ccw-from-anterior-insertion/base-first", v)
    }

    #[test]
    fn zeros_give_seventeen_sectors() {
        let b = Bullseye17::new(Quantity::LgeBurden, Statistic::Mean, "ccw", [Some(0.0); 17]);
        let d = b.export();
        assert_eq!(d.segments.len(), 17);
        assert!(d.segments.iter().all(|s| s.value == Some(0.0)));
    }

    #[test]
    fn rings_run_outer_to_inner_from_base() {
        assert_eq!(sample().export().ring_order(), vec![Ring::Basal, Ring::Mid, Ring::Apical, Ring::Apex]);
    }

    #[test]
    fn json_round_trip_preserves_values() {
        let b = sample();
        let d = BullseyeDocument::from_json(&b.export().to_json()).unwrap();
        assert_eq!(d.to_bullseye().unwrap(), b);
        let v: serde_json::Value = serde_json::from_str(&b.export().to_json()).unwrap();
        let seg = &v["segments"][1];
        for k in ["id", "name", "ring", "theta0_deg", "theta1_deg", "value"] {
            assert!(seg.get(k).is_some(), "{k}");
        }
        assert_eq!(seg["name"], "ASW");
    }

    #[test]
    fn sector_widths_in_plot() {
        for (i, (a, b)) in BULLSEYE_PLOT_ANGLES.iter().enumerate() {
            let want = match i {
                0..=11 => 60.0,
                12..=15 => 90.0,
                _ => 360.0,
            };
            assert_eq!(b - a, want);
        }
    }

    #[test]
    fn svg_has_all_sectors_and_absent_apex() {
        let mut b = sample();
        b.values[16] = None;
        let svg = b.export().to_svg();
        assert_eq!(svg.matches("<title>").count(), 17);
        assert!(svg.contains("n/a"));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn malformed_documents_fail() {
        let mut d = sample().export();
        d.segments.pop();
        assert!(d.to_bullseye().is_err());
        assert!(BullseyeDocument::from_json("{}").is_err());
    }
}
