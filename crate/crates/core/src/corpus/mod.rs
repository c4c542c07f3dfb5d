//! Text formats for facts, scenes, segmentations, QA pairs and splits, plus
//! dataset statistics and the synthetic question generator.
//!
//! All formats are line-oriented and tab-separated; lines starting with `#`
//! are comments unless noted.
//!
//! * facts: `image_id instance_id category color x_min x_max x_mean y_min y_max y_mean z_min z_max z_mean`,
//!   optionally preceded by a `# log_weight <w>` header
//! * scenes: `image_id room_type`
//! * segmentations: `image_id segment_id color <9 location values> cat:p,cat:p,...`
//! * QA: alternating question and answer lines, answers comma-separated
//! * splits: one image id per line

pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;

use crate::dcs::Answer;
use crate::error::{Error, Result};
use crate::parser::lexicon::{is_image_token, tokenize};
use crate::scene::{InstanceId, ObjectFact, SceneFact, SpatialLoc};
use crate::worlds::{FactSet, SegmentLabelDist};

pub use synthetic::{
    canonical_tree, default_plan, generate_synthetic_qa, instantiate, random_scene_world, Fillers,
    TemplateId, TemplateScope, TemplateSpec, NYU_CLASSES, ROOM_TYPES, TEMPLATES,
};

/// The basic color names of the fact vocabulary.
pub const BASIC_COLORS: [&str; 11] = [
    "black", "blue", "brown", "gray", "green", "orange", "pink", "purple", "red", "white", "yellow",
];

const RENORMALIZE_TOLERANCE: f64 = 1e-3;
const EXACT_TOLERANCE: f64 = 1e-9;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(io_err(path))
}

fn read_lines(input: impl BufRead, source: &str) -> Result<Vec<(usize, String)>> {
    input
        .lines()
        .enumerate()
        .map(|(i, l)| {
            l.map(|l| (i + 1, l)).map_err(|e| Error::Io {
                path: source.into(),
                source: e,
            })
        })
        .collect()
}

fn parse_loc(fields: &[&str], source: &str, line: usize) -> Result<SpatialLoc> {
    let mut v = [0.0; 9];
    for (slot, f) in v.iter_mut().zip(fields) {
        *slot = f
            .trim()
            .parse()
            .map_err(|_| Error::parse(source, line, format!("bad number `{f}`")))?;
    }
    SpatialLoc::from_array(v).map_err(|e| Error::parse(source, line, e.to_string()))
}

fn write_loc(out: &mut String, loc: &SpatialLoc) {
    for x in loc.to_array() {
        out.push('\t');
        out.push_str(&x.to_string());
    }
}

fn check_field(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\t', '\n']) {
        return Err(Error::Invalid(format!(
            "{what} `{s}` is empty or contains a tab or newline"
        )));
    }
    Ok(())
}

/// Contents of a fact file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FactFile {
    pub objects: Vec<ObjectFact>,
    pub log_weight: Option<f64>,
}

pub fn read_facts(input: impl BufRead, source: &str) -> Result<FactFile> {
    let mut file = FactFile::default();
    for (n, line) in read_lines(input, source)? {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(w) = rest.trim().strip_prefix("log_weight") {
                let w = w
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(source, n, "bad log weight"))?;
                file.log_weight = Some(w);
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 13 {
            return Err(Error::parse(
                source,
                n,
                format!("expected 13 fields, found {}", fields.len()),
            ));
        }
        let id: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(source, n, format!("bad instance id `{}`", fields[1])))?;
        let category = fields[2].trim().to_lowercase();
        if category.is_empty() {
            return Err(Error::parse(source, n, "empty category"));
        }
        let color = fields[3].trim().to_lowercase();
        if !BASIC_COLORS.contains(&color.as_str()) {
            warn!("{source}:{n}: unknown color `{color}`");
        }
        file.objects.push(ObjectFact {
            category,
            instance_id: InstanceId(id),
            image_id: fields[0].trim().to_lowercase(),
            color,
            loc: parse_loc(&fields[4..], source, n)?,
        });
    }
    file.objects
        .sort_by(|a, b| (&a.image_id, a.instance_id).cmp(&(&b.image_id, b.instance_id)));
    Ok(file)
}

pub fn load_facts(path: &Path) -> Result<FactFile> {
    read_facts(open(path)?, &path.display().to_string())
}

pub fn write_facts(
    out: &mut impl Write,
    objects: &[ObjectFact],
    log_weight: Option<f64>,
) -> Result<()> {
    let mut s = String::new();
    if let Some(w) = log_weight {
        s.push_str(&format!("# log_weight\t{w}\n"));
    }
    for o in objects {
        check_field(&o.image_id, "image id")?;
        check_field(&o.category, "category")?;
        check_field(&o.color, "color")?;
        s.push_str(&format!(
            "{}\t{}\t{}\t{}",
            o.image_id, o.instance_id, o.category, o.color
        ));
        write_loc(&mut s, &o.loc);
        s.push('\n');
    }
    out.write_all(s.as_bytes()).map_err(|e| Error::Io {
        path: "<output>".into(),
        source: e,
    })
}

pub fn save_facts(path: &Path, objects: &[ObjectFact], log_weight: Option<f64>) -> Result<()> {
    let mut buf = Vec::new();
    write_facts(&mut buf, objects, log_weight)?;
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_scenes(input: impl BufRead, source: &str) -> Result<Vec<SceneFact>> {
    let mut out = Vec::new();
    for (n, line) in read_lines(input, source)? {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (img, room) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source, n, "expected `image_id TAB room_type`"))?;
        let room = room.trim().to_lowercase();
        if room.is_empty() {
            return Err(Error::parse(source, n, "empty room type"));
        }
        out.push(SceneFact {
            image_id: img.trim().to_lowercase(),
            room_type: room,
        });
    }
    out.sort();
    Ok(out)
}

pub fn load_scenes(path: &Path) -> Result<Vec<SceneFact>> {
    read_scenes(open(path)?, &path.display().to_string())
}

pub fn write_scenes(out: &mut impl Write, scenes: &[SceneFact]) -> Result<()> {
    let mut s = String::new();
    for sc in scenes {
        check_field(&sc.image_id, "image id")?;
        check_field(&sc.room_type, "room type")?;
        s.push_str(&format!("{}\t{}\n", sc.image_id, sc.room_type));
    }
    out.write_all(s.as_bytes()).map_err(|e| Error::Io {
        path: "<output>".into(),
        source: e,
    })
}

pub fn save_scenes(path: &Path, scenes: &[SceneFact]) -> Result<()> {
    let mut buf = Vec::new();
    write_scenes(&mut buf, scenes)?;
    fs::write(path, buf).map_err(io_err(path))
}

/// Groups facts into one batch per image.
pub fn group_by_image(objects: &[ObjectFact], scenes: &[SceneFact]) -> BTreeMap<String, FactSet> {
    let mut out: BTreeMap<String, FactSet> = BTreeMap::new();
    for o in objects {
        out.entry(o.image_id.clone())
            .or_default()
            .objects
            .push(o.clone());
    }
    for s in scenes {
        out.entry(s.image_id.clone())
            .or_default()
            .scenes
            .push(s.clone());
    }
    out
}

pub fn read_segmentations(input: impl BufRead, source: &str) -> Result<Vec<SegmentLabelDist>> {
    let mut out = Vec::new();
    for (n, line) in read_lines(input, source)? {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 13 {
            return Err(Error::parse(
                source,
                n,
                format!("expected 13 fields, found {}", fields.len()),
            ));
        }
        let segment_id: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(source, n, format!("bad segment id `{}`", fields[1])))?;
        let loc = parse_loc(&fields[3..12], source, n)?;
        let mut labels = Vec::new();
        for pair in fields[12].split(',') {
            let (c, p) = pair.rsplit_once(':').ok_or_else(|| {
                Error::parse(
                    source,
                    n,
                    format!("expected `category:probability`, got `{pair}`"),
                )
            })?;
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, n, format!("bad probability `{p}`")))?;
            if p < 0.0 || !p.is_finite() {
                return Err(Error::parse(source, n, format!("invalid probability {p}")));
            }
            labels.push((c.trim().to_lowercase(), p));
        }
        let sum: f64 = labels.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(Error::parse(
                source,
                n,
                format!("probabilities sum to {sum}"),
            ));
        }
        if (sum - 1.0).abs() > EXACT_TOLERANCE {
            for (_, p) in labels.iter_mut() {
                *p /= sum;
            }
        }
        let seg = SegmentLabelDist::new(
            segment_id,
            fields[0].trim().to_lowercase(),
            fields[2].trim().to_lowercase(),
            loc,
            labels,
        )
        .map_err(|e| Error::parse(source, n, e.to_string()))?;
        out.push(seg);
    }
    Ok(out)
}

pub fn load_segmentations(path: &Path) -> Result<Vec<SegmentLabelDist>> {
    read_segmentations(open(path)?, &path.display().to_string())
}

pub fn write_segmentations(out: &mut impl Write, segments: &[SegmentLabelDist]) -> Result<()> {
    let mut s = String::new();
    for seg in segments {
        check_field(&seg.image_id, "image id")?;
        check_field(&seg.color, "color")?;
        s.push_str(&format!(
            "{}\t{}\t{}",
            seg.image_id, seg.segment_id, seg.color
        ));
        write_loc(&mut s, &seg.loc);
        s.push('\t');
        let labels: Vec<String> = seg
            .labels
            .iter()
            .map(|(c, p)| {
                check_field(c, "category")?;
                if c.contains([',', ':']) {
                    return Err(Error::Invalid(format!(
                        "category `{c}` contains `,` or `:`"
                    )));
                }
                Ok(format!("{c}:{p}"))
            })
            .collect::<Result<_>>()?;
        s.push_str(&labels.join(","));
        s.push('\n');
    }
    out.write_all(s.as_bytes()).map_err(|e| Error::Io {
        path: "<output>".into(),
        source: e,
    })
}

pub fn save_segmentations(path: &Path, segments: &[SegmentLabelDist]) -> Result<()> {
    let mut buf = Vec::new();
    write_segmentations(&mut buf, segments)?;
    fs::write(path, buf).map_err(io_err(path))
}

/// Whether a question is about one image or the whole image set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Image(String),
    Set,
}

impl Scope {
    /// One distinct `imageN` mention makes a single-image question.
    pub fn infer(question: &str) -> Scope {
        let ids: BTreeSet<String> = tokenize(question)
            .into_iter()
            .filter(|t| is_image_token(t))
            .collect();
        match ids.len() {
            1 => Scope::Image(ids.into_iter().next().expect("one id")),
            _ => Scope::Set,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QAPair {
    pub question: String,
    pub gold: Answer,
    pub scope: Scope,
}

impl QAPair {
    pub fn new(question: impl Into<String>, gold: Answer) -> Self {
        let question = question.into();
        QAPair {
            scope: Scope::infer(&question),
            question,
            gold,
        }
    }
}

/// Alternating question / answer lines; blank lines are ignored.
pub fn read_qa(input: impl BufRead, source: &str) -> Result<Vec<QAPair>> {
    let lines: Vec<(usize, String)> = read_lines(input, source)?
        .into_iter()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if lines.len() % 2 == 1 {
        let (n, _) = lines.last().expect("odd count is nonzero");
        return Err(Error::parse(
            source,
            *n,
            "question without an answer (odd number of lines)",
        ));
    }
    Ok(lines
        .chunks(2)
        .map(|qa| QAPair::new(qa[0].1.trim(), Answer::parse_line(&qa[1].1)))
        .collect())
}

pub fn load_qa(path: &Path) -> Result<Vec<QAPair>> {
    read_qa(open(path)?, &path.display().to_string())
}

pub fn write_qa(out: &mut impl Write, pairs: &[QAPair]) -> Result<()> {
    let mut s = String::new();
    for p in pairs {
        let q = p.question.trim();
        if q.is_empty() || q.contains('\n') {
            return Err(Error::Invalid(format!(
                "question `{q}` is empty or spans lines"
            )));
        }
        if p.gold.is_empty() {
            return Err(Error::Invalid(format!(
                "question `{q}` has an empty answer"
            )));
        }
        s.push_str(&format!("{q}\n{}\n", p.gold));
    }
    out.write_all(s.as_bytes()).map_err(|e| Error::Io {
        path: "<output>".into(),
        source: e,
    })
}

pub fn save_qa(path: &Path, pairs: &[QAPair]) -> Result<()> {
    let mut buf = Vec::new();
    write_qa(&mut buf, pairs)?;
    fs::write(path, buf).map_err(io_err(path))
}

/// Image ids, one per line.
pub fn load_split(path: &Path) -> Result<Vec<String>> {
    let lines = read_lines(open(path)?, &path.display().to_string())?;
    Ok(lines
        .into_iter()
        .map(|(_, l)| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

/// Quantile with linear interpolation between order statistics at
/// position `(n − 1)·q`. `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Tukey's trimean `(Q1 + 2·Q2 + Q3) / 4`.
pub fn trimean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some((quantile(&v, 0.25) + 2.0 * quantile(&v, 0.5) + quantile(&v, 0.75)) / 4.0)
}

/// Occurrence counts of answer terms and their mean and trimean.
#[derive(Clone, Debug, PartialEq)]
pub struct AnswerStats {
    pub counts: BTreeMap<String, usize>,
    pub mean: f64,
    pub trimean: f64,
}

pub fn answer_stats(pairs: &[QAPair]) -> Result<AnswerStats> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in pairs {
        for t in p.gold.terms() {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    stats_from_counts(counts)
}

pub fn stats_from_counts(counts: BTreeMap<String, usize>) -> Result<AnswerStats> {
    let values: Vec<f64> = counts.values().map(|&c| c as f64).collect();
    let trimean = trimean(&values).ok_or_else(|| Error::Invalid("no answer terms".into()))?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(AnswerStats {
        counts,
        mean,
        trimean,
    })
}
