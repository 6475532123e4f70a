//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cardiac_core::agent::corpus::{builtin_corpus, dialogue_session, replay};
use cardiac_core::agent::{invocation_report, ungrounded_numbers, Agent, AgentMessage, Event, Payload, SessionState, ToolResult, ToolStatus, ToolUseCommand, TranscriptRecord};
use cardiac_core::aha17::{analyze_segments, assign_segments, lge_burden, locate_rv_insertions, AxisSplit, InsertionSource, Insertions, Ring};
use cardiac_core::backends::phantom::{phantom_generate, Bulge, LgeSector, Phantom, PhantomSpec, RvBlock, Views};
use cardiac_core::metrics::{asd, auc, bland_altman, confusion_metrics, dsc, hausdorff, pearson, BinaryCounts};
use cardiac_core::preprocess::{central_phase_crop, fixed_crop_or_pad, resample, roi_crop, CropSpec, Interpolation, PreprocessSpec};
use cardiac_core::quantify::{quantify_study, ParamName, StudyMasks};
use cardiac_core::report::{quant_deduction, score_report, HallucinationGrade, ReferenceFindings, StructuredReport};
use cardiac_core::tool::ToolId;
use cardiac_core::volume::{CineVolume, FrameRef, LabelMask, SequenceKind, Spacing};
use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(t: Instant, limit: Duration) -> Result<Duration, String> {
    let e = t.elapsed();
    ensure(e < limit, || format!("took {e:.1?}, limit {limit:?}"))?;
    Ok(e)
}

// ---------------------------------------------------------------------------
// Segmentation metrics against cardinality and all-pairs oracles.

fn random_labels(rng: &mut ChaCha8Rng, dims: (usize, usize, usize), label: u8) -> Array3<u8> {
    let p: f64 = rng.random_range(0.05..0.7);
    Array3::from_shape_fn(dims, |_| if rng.random_bool(p) { label } else { 0 })
}

fn oracle_surface(labels: &Array3<u8>, label: u8) -> Vec<[usize; 3]> {
    let (nz, ny, nx) = labels.dim();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if labels[[z, y, x]] != label {
                    continue;
                }
                let neighbours = [
                    (z.checked_sub(1), Some(y), Some(x)),
                    (Some(z + 1), Some(y), Some(x)),
                    (Some(z), y.checked_sub(1), Some(x)),
                    (Some(z), Some(y + 1), Some(x)),
                    (Some(z), Some(y), x.checked_sub(1)),
                    (Some(z), Some(y), Some(x + 1)),
                ];
                let open = neighbours.iter().any(|n| match n {
                    (Some(a), Some(b), Some(c)) => labels.get([*a, *b, *c]) != Some(&label),
                    _ => true,
                });
                if open {
                    out.push([z, y, x]);
                }
            }
        }
    }
    out
}

fn oracle_directed(from: &[[usize; 3]], to: &[[usize; 3]], s: Spacing) -> Vec<f64> {
    from.iter()
        .map(|a| {
            to.iter()
                .map(|b| {
                    let dz = (a[0] as f64 - b[0] as f64) * s.dz;
                    let dy = (a[1] as f64 - b[1] as f64) * s.dy;
                    let dx = (a[2] as f64 - b[2] as f64) * s.dx;
                    (dz * dz + dy * dy + dx * dx).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn metric_oracles() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut distance_cases = 0;
    for case in 0..200 {
        let dims = (rng.random_range(1..=16), rng.random_range(1..=16), rng.random_range(1..=16));
        let s = Spacing::new(rng.random_range(0.4..4.0), rng.random_range(0.4..2.5), rng.random_range(0.4..2.5));
        let label = rng.random_range(1..=3u8);
        let la = random_labels(&mut rng, dims, label);
        let lb = random_labels(&mut rng, dims, label);
        let mk = |l: Array3<u8>| LabelMask::new(SequenceKind::SaxCine, l, s, FrameRef::default()).unwrap();
        let (a, b) = (mk(la.clone()), mk(lb.clone()));

        let set = |l: &Array3<u8>| -> HashSet<(usize, usize, usize)> { l.indexed_iter().filter(|(_, v)| **v == label).map(|(i, _)| i).collect() };
        let (sa, sb) = (set(&la), set(&lb));
        let inter = sa.intersection(&sb).count();
        let want = if sa.is_empty() && sb.is_empty() { 1.0 } else { (2 * inter) as f64 / (sa.len() + sb.len()) as f64 };
        let got = dsc(&a, &b, label).map_err(|e| format!("case {case}: {e}"))?;
        ensure(got.to_bits() == want.to_bits(), || format!("case {case}: dsc {got} vs {want}"))?;

        let (pa, pb) = (oracle_surface(&la, label), oracle_surface(&lb, label));
        let hd = hausdorff(&a, &b, label);
        let sd = asd(&a, &b, label);
        if pa.is_empty() || pb.is_empty() {
            ensure(hd.is_err() && sd.is_err(), || format!("case {case}: distance defined on an empty surface"))?;
            continue;
        }
        distance_cases += 1;
        let ab = oracle_directed(&pa, &pb, s);
        let ba = oracle_directed(&pb, &pa, s);
        let want_hd = ab.iter().chain(&ba).copied().fold(0.0, f64::max);
        let want_asd = ba.iter().sum::<f64>() / ba.len() as f64;
        let (hd, sd) = (hd.map_err(|e| e.to_string())?, sd.map_err(|e| e.to_string())?);
        ensure((hd - want_hd).abs() <= 1e-9, || format!("case {case}: hausdorff {hd} vs {want_hd}"))?;
        ensure((sd - want_asd).abs() <= 1e-9, || format!("case {case}: asd {sd} vs {want_asd}"))?;
    }
    let e = within_time(t, Duration::from_secs(30))?;
    Ok(format!("200 pairs, {distance_cases} with distances, {e:.1?}"))
}

// ---------------------------------------------------------------------------
// Classification formulas and AUC against the Mann-Whitney pair count.

fn formula_suite() -> Outcome {
    let m = confusion_metrics(&BinaryCounts::new(8, 2, 9, 1));
    let f1 = 2.0 * (8.0 / 9.0) * 0.8 / (8.0 / 9.0 + 0.8);
    let checks = [
        ("sensitivity", m.sensitivity, 0.8),
        ("specificity", m.specificity, 0.9),
        ("accuracy", m.accuracy, 0.85),
        ("precision", m.precision, 8.0 / 9.0),
        ("f1", m.f1, f1),
    ];
    for (name, got, want) in checks {
        let got = got.ok_or_else(|| format!("{name} undefined"))?;
        ensure((got - want).abs() <= 1e-12, || format!("{name} {got} vs {want}"))?;
    }
    ensure((f1 - 0.8421).abs() < 5e-5, || format!("F1 {f1} does not round to 0.8421"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for set in 0..1000 {
        let n = rng.random_range(2..60);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        // Coarse scores on every other set exercise ties.
        let coarse = set % 2 == 0;
        let scores: Vec<f64> = (0..n).map(|_| if coarse { f64::from(rng.random_range(0..6u8)) / 5.0 } else { rng.random::<f64>() }).collect();
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in (0..n).filter(|&i| labels[i]) {
            for j in (0..n).filter(|&j| !labels[j]) {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let want = wins / pairs;
        let got = auc(&scores, &labels).map_err(|e| format!("set {set}: {e}"))?;
        ensure((got - want).abs() <= 1e-12, || format!("set {set}: auc {got} vs {want}"))?;
    }
    Ok("confusion metrics exact; 1000 AUC sets equal the pair fraction".into())
}

// ---------------------------------------------------------------------------
// Phantom quantification against closed-form values.

fn phantom_quantification() -> Outcome {
    let t = Instant::now();
    let mut worst_rel: f64 = 0.0;
    for seed in 0..25u64 {
        let spec = PhantomSpec::random(seed);
        ensure(spec.ed_axes_mm.iter().all(|r| (20.0..=40.0).contains(r)), || format!("seed {seed}: radii {:?}", spec.ed_axes_mm))?;
        ensure(spec.spacing.dy == 1.0 && spec.spacing.dx == 1.0, || format!("seed {seed}: in-plane grid {:?}", spec.spacing))?;
        let p = phantom_generate(&spec).map_err(|e| e.to_string())?;
        let got = quantify_study(&StudyMasks {
            sax: p.sax_masks.clone(),
            ch4: p.ch4.as_ref().map(|c| c.1.clone()).unwrap_or_default(),
            heart_rate_bpm: spec.heart_rate_bpm,
            ..StudyMasks::default()
        })
        .map_err(|e| format!("seed {seed}: {e}"))?;
        let pixel = spec.spacing.dy.max(spec.spacing.dx);
        let pairs = [
            ParamName::Lvedv,
            ParamName::Lvesv,
            ParamName::Lvm,
            ParamName::Lvef,
            ParamName::Lvedd,
            ParamName::Lat4chd,
            ParamName::Rat4chd,
        ];
        for name in pairs {
            let want = p.analytic.value(name).ok_or_else(|| format!("seed {seed}: no analytic {name}"))?;
            let have = got.value(name).ok_or_else(|| format!("seed {seed}: {name} not measured"))?;
            let ok = match name {
                ParamName::Lvedv | ParamName::Lvesv | ParamName::Lvm => {
                    worst_rel = worst_rel.max((have - want).abs() / want);
                    (have - want).abs() / want <= 0.02
                }
                ParamName::Lvef => (have - want).abs() <= 0.5,
                _ => (have - want).abs() <= pixel,
            };
            ensure(ok, || format!("seed {seed} {name}: measured {have:.3}, analytic {want:.3}"))?;
        }
    }
    let e = within_time(t, Duration::from_secs(60))?;
    Ok(format!("25 phantoms, worst volume/mass error {:.2}%, {e:.1?}", worst_rel * 100.0))
}

// ---------------------------------------------------------------------------
// 17-segment partition, rotation and LGE burden.

fn visual_angle(dy: f64, dx: f64) -> f64 {
    (-dy).atan2(dx).to_degrees().rem_euclid(360.0)
}

/// Independent check that each myocardial voxel lies in exactly one sector
/// arc of its ring, and that the arc is the segment it was given.
fn check_partition(mask: &LabelMask, landmark: Option<f64>) -> Result<usize, String> {
    let ins = locate_rv_insertions(mask, landmark).map_err(|e| e.to_string())?;
    let lab = assign_segments(mask, &ins, AxisSplit::Auto).map_err(|e| e.to_string())?;
    let myo = mask.schema().myocardial_labels();
    let s = mask.spacing();
    let sign = lab.sense.sign();
    let basal = [2u8, 3, 4, 5, 6, 1];
    let apical = [14u8, 15, 16, 13];
    let mut covered = 0;
    let mut seen = [false; 17];
    for ((z, y, x), l) in mask.labels().indexed_iter() {
        let seg = lab.segments[[z, y, x]];
        if !myo.contains(l) {
            ensure(seg == 0, || format!("non-myocardial voxel {:?} in segment {seg}", (z, y, x)))?;
            continue;
        }
        let ring = lab.thirds.ring_of(z).ok_or_else(|| format!("myocardial slice {z} outside every ring"))?;
        let expected: Vec<u8> = if ring == Ring::Apex {
            vec![17]
        } else {
            let c = lab.centroids[z].ok_or_else(|| format!("slice {z} without centroid"))?;
            let theta = visual_angle((y as f64 - c[0]) * s.dy, (x as f64 - c[1]) * s.dx);
            let psi = ((theta - lab.anterior_deg) * sign).rem_euclid(360.0);
            match ring {
                Ring::Apical => (0..4)
                    .filter(|k| ((psi - 15.0 - 90.0 * *k as f64).rem_euclid(360.0)) < 90.0)
                    .map(|k| apical[k])
                    .collect(),
                _ => {
                    let off = if ring == Ring::Mid { 6 } else { 0 };
                    (0..6).filter(|k| psi >= 60.0 * *k as f64 && psi < 60.0 * (*k + 1) as f64).map(|k| basal[k] + off).collect()
                }
            }
        };
        ensure(expected.len() == 1, || format!("voxel {:?} in {} arcs", (z, y, x), expected.len()))?;
        ensure(expected[0] == seg, || format!("voxel {:?}: segment {seg}, arc {}", (z, y, x), expected[0]))?;
        seen[usize::from(seg) - 1] = true;
        covered += 1;
    }
    ensure(seen.iter().all(|&b| b), || format!("empty segments: {seen:?}"))?;
    Ok(covered)
}

fn annulus_thickness(bulge_deg: f64) -> Result<Vec<f64>, String> {
    let spec = PhantomSpec {
        rv: None,
        bulge: Some(Bulge {
            theta0_deg: bulge_deg,
            theta1_deg: bulge_deg + 60.0,
            thickness_mm: 13.0,
        }),
        ..PhantomSpec::annulus(20.0, 8.0)
    };
    let p = phantom_generate(&spec).map_err(|e| e.to_string())?;
    let a = analyze_segments(&p.sax_masks[0], None, Some(110.0)).map_err(|e| e.to_string())?;
    (1..=12u8).map(|id| a.thickness.mean.get(id).ok_or_else(|| format!("segment {id} empty"))).collect()
}

fn segment_properties() -> Outcome {
    let mut phantoms: Vec<(String, Phantom)> = (0..25u64).map(|s| (format!("random {s}"), phantom_generate(&PhantomSpec::random(s)).unwrap())).collect();
    phantoms.push(("normal".into(), phantom_generate(&PhantomSpec::normal()).unwrap()));
    let annulus = PhantomSpec {
        rv: Some(RvBlock {
            theta0_deg: 100.0,
            theta1_deg: 220.0,
            thickness_mm: 6.0,
        }),
        ..PhantomSpec::annulus(20.0, 8.0)
    };
    phantoms.push(("annulus".into(), phantom_generate(&annulus).unwrap()));
    let mut voxels = 0;
    for (name, p) in &phantoms {
        voxels += check_partition(&p.sax_masks[p.ed_phase], None).map_err(|e| format!("{name}: {e}"))?;
    }

    // Rotating the thickened arc by 60° about a fixed anterior landmark moves
    // each basal and mid value one sector on, counterclockwise.
    let a = annulus_thickness(110.0)?;
    let b = annulus_thickness(170.0)?;
    let mut dev: f64 = 0.0;
    for ring in 0..2 {
        for k in 0..6 {
            dev = dev.max((b[ring * 6 + (k + 1) % 6] - a[ring * 6 + k]).abs());
        }
    }
    let spread = a.iter().copied().fold(f64::MIN, f64::max) - a.iter().copied().fold(f64::MAX, f64::min);
    ensure(spread > 3.0, || format!("thickened arc not visible (spread {spread:.2} mm)"))?;
    ensure(dev <= 0.5, || format!("rotation deviation {dev:.3} mm"))?;

    let spec = PhantomSpec {
        lge: vec![LgeSector {
            slices: Some([3, 6]),
            theta0_deg: 110.0,
            theta1_deg: 170.0,
        }],
        views: Views {
            ch2: false,
            ch4: false,
            lge: true,
        },
        ..PhantomSpec::annulus(20.0, 8.0)
    };
    let lge = phantom_generate(&spec).unwrap().lge.unwrap().1;
    let ins = Insertions {
        anterior_deg: 110.0,
        inferior_deg: Some(230.0),
        source: InsertionSource::Landmark,
    };
    let lab = assign_segments(&lge, &ins, AxisSplit::Auto).map_err(|e| e.to_string())?;
    let burden = lge_burden(&lge, &lab).map_err(|e| e.to_string())?;
    let lesion: Vec<u8> = (1..=17u8).filter(|&id| burden.bullseye.get(id) == Some(1.0)).collect();
    let clear = (1..=17u8).filter(|&id| burden.bullseye.get(id) == Some(0.0)).count();
    ensure(lesion.len() == 1 && clear == 16, || format!("burden {:?}", burden.bullseye.values))?;
    Ok(format!(
        "{} phantoms, {voxels} voxels partitioned; rotation deviation {dev:.3} mm; lesion segment {} at 1.0, 16 at 0.0",
        phantoms.len(),
        lesion[0]
    ))
}

// ---------------------------------------------------------------------------
// Preprocessing geometry.

fn textured(kind: SequenceKind, dims: [usize; 4], spacing: Spacing, seed: u64) -> CineVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Array4::from_shape_fn(dims, |_| rng.random_range(0.0..1000.0f32));
    CineVolume::new(kind, data, spacing).unwrap()
}

fn disk_mask(kind: SequenceKind, slices: usize, n: [usize; 2], spacing: Spacing) -> LabelMask {
    let (cy, cx) = (n[0] as f64 * 0.55, n[1] as f64 * 0.45);
    let labels = Array3::from_shape_fn((slices, n[0], n[1]), |(_, y, x)| u8::from((y as f64 - cy).hypot(x as f64 - cx) < 30.0));
    LabelMask::new(kind, labels, spacing, FrameRef::default()).unwrap()
}

fn preprocessing_geometry() -> Outcome {
    let cases = [
        (SequenceKind::Ch2Cine, [25, 1, 256, 208], Spacing::new(8.0, 1.4, 1.4), [80, 192, 192]),
        (SequenceKind::Ch4Cine, [30, 1, 224, 240], Spacing::new(8.0, 1.6, 1.6), [80, 192, 192]),
        (SequenceKind::SaxCine, [25, 12, 200, 180], Spacing::new(8.0, 1.5, 1.5), [288, 144, 144]),
        (SequenceKind::SaxLge, [1, 14, 256, 256], Spacing::new(8.0, 1.3, 1.3), [9, 144, 144]),
    ];
    let target = |s: Spacing| Spacing::new(s.dz, 1.25, 1.25);
    let mut lines = Vec::new();
    for (kind, dims, spacing, want) in cases {
        let v = textured(kind, dims, spacing, dims[0] as u64);
        let mask = disk_mask(kind, dims[1], [dims[2], dims[3]], spacing);
        let crop = CropSpec::for_kind(kind);
        let compose = || -> Result<CineVolume, String> {
            let c = central_phase_crop(&v, crop.phase_keep).map_err(|e| e.to_string())?;
            let r = resample(&c, target(spacing), Interpolation::Linear).map_err(|e| e.to_string())?;
            let m = cardiac_core::preprocess::resample_mask(&mask, target(spacing)).map_err(|e| e.to_string())?;
            let roi = roi_crop(&r, &m, crop.xy_roi).map_err(|e| e.to_string())?;
            fixed_crop_or_pad(&roi, crop.final_dims).map_err(|e| e.to_string())
        };
        let (a, b) = (compose()?, compose()?);
        ensure(a.dims() == [1, want[0], want[1], want[2]], || format!("{kind}: dims {:?}, want {want:?}", a.dims()))?;
        ensure(a.payload_bytes() == b.payload_bytes(), || format!("{kind}: two runs differ"))?;

        // The stored pipeline, replayed from its JSON, is equally deterministic.
        let spec = PreprocessSpec::from_json(&crop.pipeline(target(spacing)).to_json()).map_err(|e| e.to_string())?;
        let p = spec.run(&v, Some(&mask)).map_err(|e| e.to_string())?;
        let q = spec.run(&v, Some(&mask)).map_err(|e| e.to_string())?;
        ensure(p.volume.dims() == a.dims(), || format!("{kind}: pipeline dims {:?}", p.volume.dims()))?;
        ensure(p.volume.payload_bytes() == q.volume.payload_bytes(), || format!("{kind}: pipeline runs differ"))?;
        lines.push(format!("{kind} {want:?}"));
    }
    Ok(lines.join(", "))
}

// ---------------------------------------------------------------------------
// Agent protocol over the scripted corpus.

fn tool_results(records: &[TranscriptRecord]) -> Vec<ToolResult> {
    records
        .iter()
        .filter_map(|r| match &r.event {
            Event::ToolResult { result } => Some(result.clone()),
            _ => None,
        })
        .collect()
}

fn status_of(records: &[TranscriptRecord], tool: ToolId) -> Option<ToolStatus> {
    tool_results(records).iter().find(|r| r.api_name == tool).map(|r| r.status)
}

fn agent_protocol() -> Outcome {
    let agent = Agent::reference();
    let corpus = builtin_corpus();
    ensure(corpus.len() == 50, || format!("{} dialogues", corpus.len()))?;
    let (mut turns, mut routed) = (0, 0);
    let mut transcripts = Vec::new();
    for d in &corpus {
        let (session, outcomes) = replay(&agent, d)?;
        for (i, o) in outcomes.iter().enumerate() {
            turns += 1;
            routed += usize::from(o.routed());
            ensure(o.routed(), || format!("{} turn {i}: planned {:?}, expected {:?}", d.id, o.actions, o.expected.expect))?;
            ensure(o.statuses_match(), || format!("{} turn {i}: statuses {:?}", d.id, o.statuses))?;
            let stray = ungrounded_numbers(&o.answer, &tool_results(&o.records));
            ensure(stray.is_empty(), || format!("{} turn {i}: ungrounded {stray:?} in {:?}", d.id, o.answer))?;
            for r in &o.records {
                if let Event::ToolUse { command } = &r.event {
                    let text = command.to_json();
                    let back = ToolUseCommand::from_json(&text).map_err(|e| e.to_string())?;
                    ensure(back == *command && back.to_json() == text, || format!("{}: command does not round-trip", d.id))?;
                }
                let line = serde_json::to_string(r).unwrap();
                let back: TranscriptRecord = serde_json::from_str(&line).map_err(|e| e.to_string())?;
                ensure(serde_json::to_string(&back).unwrap() == line, || format!("{}: record does not round-trip", d.id))?;
            }
        }
        transcripts.push(session.transcript().to_vec());
    }
    let rate = invocation_report(transcripts.iter().map(Vec::as_slice)).overall.map(|r| r.rate);
    ensure(rate == Some(1.0), || format!("invocation success rate {rate:?}"))?;

    // The subtyping gate: closed without a screening result, closed on a
    // non-NICM screening, open after an NICM screening.
    let hcm = PhantomSpec {
        bulge: Some(Bulge {
            theta0_deg: 110.0,
            theta1_deg: 230.0,
            thickness_mm: 18.0,
        }),
        ..PhantomSpec::normal()
    };
    let all = vec![SequenceKind::SaxCine, SequenceKind::Ch2Cine, SequenceKind::Ch4Cine, SequenceKind::SaxLge];
    let session = |spec: PhantomSpec| -> Result<SessionState, String> {
        dialogue_session(&cardiac_core::agent::corpus::Dialogue {
            id: "gate".into(),
            phantom: spec,
            upload: all.clone(),
            turns: vec![],
        })
    };
    let mut s = session(hcm)?;
    let r = agent.run_turn(&mut s, AgentMessage::user("subtype the cardiomyopathy")).map_err(|e| e.to_string())?;
    ensure(status_of(&r, ToolId::Nicms) == Some(ToolStatus::Error), || "NICMS ran without screening".into())?;
    agent.run_turn(&mut s, AgentMessage::user("diagnose this patient")).map_err(|e| e.to_string())?;
    let r = agent.run_turn(&mut s, AgentMessage::user("subtype the cardiomyopathy")).map_err(|e| e.to_string())?;
    ensure(status_of(&r, ToolId::Nicms) == Some(ToolStatus::Ok), || "NICMS blocked after an NICM screening".into())?;
    let mut n = session(PhantomSpec::normal())?;
    let r = agent.run_turn(&mut n, AgentMessage::user("generate the full report")).map_err(|e| e.to_string())?;
    ensure(status_of(&r, ToolId::Nicms) == Some(ToolStatus::Skipped), || "NICMS ran on a normal screening".into())?;
    let r = agent.run_turn(&mut n, AgentMessage::user("subtype the cardiomyopathy")).map_err(|e| e.to_string())?;
    ensure(status_of(&r, ToolId::Nicms) == Some(ToolStatus::Error), || "explicit NICMS ran on a normal screening".into())?;
    Ok(format!("{routed}/{turns} turns routed, invocation rate 1.0, gate holds"))
}

// ---------------------------------------------------------------------------
// Rubric arithmetic.

fn pipeline_report() -> Result<StructuredReport, String> {
    let agent = Agent::reference();
    let mut s = dialogue_session(&cardiac_core::agent::corpus::Dialogue {
        id: "rubric".into(),
        phantom: PhantomSpec::normal(),
        upload: vec![SequenceKind::SaxCine, SequenceKind::Ch2Cine, SequenceKind::Ch4Cine, SequenceKind::SaxLge],
        turns: vec![],
    })?;
    let records = agent.run_turn(&mut s, AgentMessage::user("generate the full report")).map_err(|e| e.to_string())?;
    let id = tool_results(&records)
        .into_iter()
        .find_map(|r| match r.payload {
            Some(Payload::Report { artifact, .. }) => Some(artifact),
            _ => None,
        })
        .ok_or("no report produced")?;
    Ok(s.report(&id).ok_or("report not stored")?.report.clone())
}

fn rubric_arithmetic() -> Outcome {
    for (e, want) in [(0.04, 0), (0.07, 3), (0.12, 5), (0.25, 7)] {
        let got = quant_deduction(e).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{e}: deduction {got}, want {want}"))?;
    }
    let mut report = pipeline_report()?;
    report.findings.wall = vec!["normal wall thickness".into()];
    report.findings.lge = vec!["no enhancement".into()];
    report.findings.other = vec![];
    report.findings.key_indicators = vec!["LVEF".into()];
    let m = &report.sections.function_quantification.as_ref().ok_or("no quantification")?.data;
    let q = |p: ParamName| m.value(p).ok_or_else(|| format!("{p} missing"));
    let reference = ReferenceFindings {
        diagnosis: report.diagnosis().ok_or("no diagnosis")?.predicted.clone(),
        quantities: [(ParamName::Lvedv, q(ParamName::Lvedv)?), (ParamName::Lvesv, q(ParamName::Lvesv)?), (ParamName::Lvef, q(ParamName::Lvef)?)].into(),
        wall_items: report.findings.wall.clone(),
        lge_items: report.findings.lge.clone(),
        other_items: vec![],
        key_indicators: report.findings.key_indicators.clone(),
        hallucination: HallucinationGrade::None,
    };
    let perfect = score_report(&report, &reference).map_err(|e| e.to_string())?;
    ensure(perfect.total == 100, || format!("perfect report scored {}: {:?}", perfect.total, perfect.notes))?;

    // Hand oracle: LVEF 12% off (−5), one missed wall item (−1), one
    // redundant other item (−2 completeness), mild hallucination (−6).
    let mut composed = reference.clone();
    composed.quantities.insert(ParamName::Lvef, q(ParamName::Lvef)? / 1.12);
    composed.wall_items.push("hypertrophy basal ASW".into());
    composed.hallucination = HallucinationGrade::Mild;
    let mut cand = report.clone();
    cand.findings.other.push("pericardial effusion".into());
    let s = score_report(&cand, &composed).map_err(|e| e.to_string())?;
    let sub = s.subscores;
    let got = (sub.clinical_diagnosis, sub.quantification, sub.wall, sub.lge, sub.other_features, sub.completeness, s.total);
    ensure(got == (20, 10, 9, 15, 10, 28, 86), || format!("composed case {got:?}: {:?}", s.notes))?;

    // Wrong diagnosis and every measurement beyond 20%: −20 and −7.
    let mut wrong = reference.clone();
    wrong.diagnosis = "DCM".into();
    for v in wrong.quantities.values_mut() {
        *v *= 1.5;
    }
    let s = score_report(&report, &wrong).map_err(|e| e.to_string())?;
    ensure(s.total == 73, || format!("wrong-diagnosis case scored {}: {:?}", s.total, s.notes))?;
    Ok("bands 0/3/5/7, perfect 100, composed 86 and 73".into())
}

// ---------------------------------------------------------------------------
// Agreement statistics.

fn agreement() -> Outcome {
    let (x, y) = ([10.0, 20.0, 30.0], [12.0, 19.0, 33.0]);
    let s = bland_altman(&x, &y).map_err(|e| e.to_string())?;
    let d = [2.0f64, -1.0, 3.0];
    let bias = d.iter().sum::<f64>() / 3.0;
    let sd = (d.iter().map(|v| (v - bias).powi(2)).sum::<f64>() / 2.0).sqrt();
    let (lo, hi) = (bias - 1.96 * sd, bias + 1.96 * sd);
    for (name, got, want) in [("bias", s.bias, bias), ("SD", s.sd, sd), ("LoA low", s.loa_low, lo), ("LoA high", s.loa_high, hi)] {
        ensure((got - want).abs() <= 1e-10, || format!("{name} {got} vs {want}"))?;
    }
    // The published limits apply 1.96 to the SD already rounded to four
    // places, so they are reproduced from that rounded SD.
    let round4 = |v: f64| (v * 1e4).round() / 1e4;
    let (b4, sd4) = (round4(s.bias), round4(s.sd));
    let published = [(b4, 1.3333), (sd4, 2.0817), (round4(s.bias - 1.96 * sd4), -2.7468), (round4(s.bias + 1.96 * sd4), 5.4135)];
    for (got, printed) in published {
        ensure((got - printed).abs() < 1e-9, || format!("{got} vs published {printed}"))?;
    }
    let constant = [5.0, 5.0, 5.0];
    ensure(pearson(&constant, &constant).is_none(), || "r defined on a constant series".into())?;
    let r = pearson(&x, &x.map(|v| 3.0 * v - 7.0)).ok_or("linear r undefined")?;
    ensure((r - 1.0).abs() <= 1e-10, || format!("linear r {r}"))?;
    Ok(format!("bias {:.4}, SD {:.4}, LoA ({:.5}, {:.5}), r(linear) {r}", s.bias, s.sd, s.loa_low, s.loa_high))
}

// ---------------------------------------------------------------------------
// End-to-end through the HTTP service.

fn end_to_end_service() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let srv = common::start(Agent::reference(), dir.path());
    let p = phantom_generate(&PhantomSpec::normal()).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let id = srv.create_session();
    for v in [&p.sax, &p.ch2.as_ref().unwrap().0, &p.ch4.as_ref().unwrap().0, &p.lge.as_ref().unwrap().0] {
        let (s, body) = srv.upload(&id, v);
        ensure(s == 201, || format!("upload {}: {s} {body}", v.kind()))?;
    }
    let (s, turn) = srv.say(&id, "full report");
    ensure(s == 200, || format!("message: {s} {turn}"))?;
    let created: Vec<String> = turn["artifacts"].as_array().ok_or("no artifact list")?.iter().filter_map(|v| v.as_str().map(String::from)).collect();
    let rid = created.iter().find(|a| a.starts_with("report-")).ok_or_else(|| format!("no report in {created:?}"))?;
    let (s, text) = srv.get(&format!("/v1/sessions/{id}/reports/{rid}?format=text"));
    ensure(s == 200, || format!("report text: {s}"))?;
    let (_, doc) = srv.get_json(&format!("/v1/sessions/{id}/reports/{rid}?format=json"));
    let elapsed = within_time(t, Duration::from_secs(10))?;

    let quant = created.iter().find(|a| a.starts_with("quant-")).ok_or("no measurement artifact")?;
    let (_, m) = srv.get_json(&format!("/v1/sessions/{id}/artifacts/{quant}"));
    let names: Vec<&String> = m["body"].as_object().ok_or("measurement body")?.keys().collect();
    ensure(names.len() >= 10, || format!("only {} parameters measured", names.len()))?;
    ensure(text.contains(&format!("[{quant}]")), || "report text does not cite the measurement artifact".into())?;
    for name in &names {
        ensure(text.contains(&format!("{name}: ")), || format!("{name} missing from the report text"))?;
        ensure(doc["provenance"][name.as_str()] == quant.as_str(), || format!("{name} provenance {}", doc["provenance"][name.as_str()]))?;
    }
    Ok(format!("{} parameters with provenance, {elapsed:.1?}", names.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("metric oracle equivalence", metric_oracles),
        ("classification formulas and AUC", formula_suite),
        ("phantom quantification", phantom_quantification),
        ("17-segment properties", segment_properties),
        ("preprocessing geometry", preprocessing_geometry),
        ("agent protocol", agent_protocol),
        ("rubric arithmetic", rubric_arithmetic),
        ("Bland-Altman and Pearson", agreement),
        ("end-to-end service", end_to_end_service),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", 9 - failed, 9);
    if failed > 0 {
        std::process::exit(1);
    }
}
