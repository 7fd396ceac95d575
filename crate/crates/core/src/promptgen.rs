//! Revision and generation prompt templates.
//!
//! Single-task prompts cover plain generation from a prefix and the
//! rewrite, polish and expand revisions. The adversarial stage-1 prompt
//! combines five randomly drawn dimensions plus a target length into an
//! instruction that an instruction-tuned model turns into the final
//! revision prompt.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const REVISION_GOALS: [&str; 5] = ["Paraphrase", "Rewrite", "Polish", "Expand", "Restructure"];

pub const STYLE_CONTROLS: [&str; 11] = [
    "formal",
    "oral",
    "academic",
    "literary",
    "critical",
    "narrative",
    "descriptive",
    "lyric",
    "objective",
    "subjective",
    "technical",
];

pub const ADVERSARIAL_TEXT: [&str; 3] = [
    "make the paragraph sound as human as possible",
    "make this paragraph feel more natural, like a real person wrote it",
    "make this text sound less robotic and more human",
];

pub const CONSTRAINTS: [&str; 3] = ["keep factual accuracy", "no hallucinated content", "maintain original intent"];

pub const ADDITIONAL_OPTS: [&str; 5] = [
    "enhance expression",
    "make sentences more concise",
    "reorganize the structure",
    "preserve all factual details",
    "restructure sentences for better flow",
];

pub const WORD_LENS: [u32; 3] = [45, 50, 55];

pub const STAGE1_TEMPLATE: &str = "Create a prompt in <word_len> words that says you want GPT's help to <revision_goal> a paragraph in a <style> style, <adversarial>, <additional_opt>, and <constraint>. ";

pub const GENERATE_TEMPLATE: &str =
    "You are a News writer. Please write an article with about 150 words starting exactly with: <prefix>";

pub const REWRITE_TEMPLATE: &str = "You are a professional rewriting expert and you can help paraphrasing this paragraph without missing the original details. Please keep the length of the rewritten text similar to the original text. <original human-written-text>";

pub const POLISH_WORD_LENS: [u32; 3] = [15, 30, 50];

pub const POLISH_STYLES: [&str; 10] = [
    "formal",
    "oral",
    "academic",
    "literary",
    "critical",
    "narrative",
    "descriptive",
    "lyric",
    "objective",
    "subjective",
];

pub const POLISH_TEMPLATE: &str = "Write a prompt in <word_len> words that says you want gpt\u{2019}s help in polishing a paragraph in a <style> style, this prompt can only be <word_len> words or less.";

pub const EXPAND_TEMPLATE: &str =
    "Expand but not extend the paragraph in a <style> style. The paragraph to be expanded:<original human-written text> ";

/// Words of source text copied into a generation prompt.
pub const PREFIX_WORDS: usize = 30;

/// Number of distinct stage-1 dimension tuples.
pub const DIMENSION_PRODUCT: usize =
    REVISION_GOALS.len() * STYLE_CONTROLS.len() * ADVERSARIAL_TEXT.len() * CONSTRAINTS.len() * ADDITIONAL_OPTS.len() * WORD_LENS.len();

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PromptError {
    #[error("source text has {got} words; a generation prefix needs {PREFIX_WORDS}")]
    PrefixTooShort { got: usize },
    #[error("requested {requested} unique prompts but only {available} can be produced")]
    PoolExhausted { requested: usize, available: usize },
    #[error("`{value}` is not a valid {field}")]
    InvalidDimension { field: &'static str, value: String },
    #[error("{0:?} prompts need an input text")]
    MissingInput(PromptKind),
}

pub type Result<T> = std::result::Result<T, PromptError>;

/// One draw from every stage-1 dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptDimensions {
    pub revision_goal: String,
    pub style: String,
    pub adversarial: String,
    pub constraint: String,
    pub additional: String,
    pub word_len: u32,
}

fn check(field: &'static str, value: &str, allowed: &[&str]) -> Result<()> {
    if allowed.contains(&value) {
        Ok(())
    } else {
        Err(PromptError::InvalidDimension { field, value: value.to_string() })
    }
}

impl PromptDimensions {
    pub fn validate(&self) -> Result<()> {
        check("revision_goal", &self.revision_goal, &REVISION_GOALS)?;
        check("style", &self.style, &STYLE_CONTROLS)?;
        check("adversarial", &self.adversarial, &ADVERSARIAL_TEXT)?;
        check("constraint", &self.constraint, &CONSTRAINTS)?;
        check("additional", &self.additional, &ADDITIONAL_OPTS)?;
        if !WORD_LENS.contains(&self.word_len) {
            return Err(PromptError::InvalidDimension { field: "word_len", value: self.word_len.to_string() });
        }
        Ok(())
    }
}

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items[rng.random_range(0..items.len())]
}

/// Independent uniform draws, in the order word length, goal, style,
/// adversarial, constraint, additional.
pub fn sample_dimensions<R: Rng + ?Sized>(rng: &mut R) -> PromptDimensions {
    let word_len = WORD_LENS[rng.random_range(0..WORD_LENS.len())];
    let revision_goal = pick(rng, &REVISION_GOALS).to_string();
    let style = pick(rng, &STYLE_CONTROLS).to_string();
    let adversarial = pick(rng, &ADVERSARIAL_TEXT).to_string();
    let constraint = pick(rng, &CONSTRAINTS).to_string();
    let additional = pick(rng, &ADDITIONAL_OPTS).to_string();
    PromptDimensions { revision_goal, style, adversarial, constraint, additional, word_len }
}

pub fn render_stage1(dims: &PromptDimensions) -> String {
    STAGE1_TEMPLATE
        .replace("<word_len>", &dims.word_len.to_string())
        .replace("<revision_goal>", &dims.revision_goal)
        .replace("<style>", &dims.style)
        .replace("<adversarial>", &dims.adversarial)
        .replace("<additional_opt>", &dims.additional)
        .replace("<constraint>", &dims.constraint)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Generate,
    Rewrite,
    Polish,
    Expand,
    AdversarialStage1,
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PromptKind::Generate => "generate",
            PromptKind::Rewrite => "rewrite",
            PromptKind::Polish => "polish",
            PromptKind::Expand => "expand",
            PromptKind::AdversarialStage1 => "adversarial_stage1",
        };
        f.write_str(s)
    }
}

/// Parameters of the single-task templates that take any.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleTaskParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_len: Option<u32>,
}

impl SingleTaskParams {
    /// Random polish parameters.
    pub fn polish<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let word_len = POLISH_WORD_LENS[rng.random_range(0..POLISH_WORD_LENS.len())];
        Self { style: Some(pick(rng, &POLISH_STYLES).to_string()), word_len: Some(word_len) }
    }

    /// Random expand style (drawn from the polish style list).
    pub fn expand<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self { style: Some(pick(rng, &POLISH_STYLES).to_string()), word_len: None }
    }
}

/// The first [`PREFIX_WORDS`] whitespace-delimited words, single-spaced.
pub fn generation_prefix(source: &str) -> Result<String> {
    let words: Vec<&str> = source.split_whitespace().collect();
    if words.len() < PREFIX_WORDS {
        return Err(PromptError::PrefixTooShort { got: words.len() });
    }
    Ok(words[..PREFIX_WORDS].join(" "))
}

fn param<'a>(value: &'a Option<String>, field: &'static str) -> Result<&'a str> {
    value.as_deref().ok_or(PromptError::InvalidDimension { field, value: "<missing>".into() })
}

/// Fills a single-task template. `input` is the human text (its prefix is
/// taken for `Generate`); polish prompts ignore it.
pub fn render_single_task(kind: PromptKind, params: &SingleTaskParams, input: &str) -> Result<String> {
    match kind {
        PromptKind::Generate => Ok(GENERATE_TEMPLATE.replace("<prefix>", &generation_prefix(input)?)),
        PromptKind::Rewrite => Ok(REWRITE_TEMPLATE.replace("<original human-written-text>", input)),
        PromptKind::Polish => {
            let style = param(&params.style, "style")?;
            check("style", style, &POLISH_STYLES)?;
            let word_len = params.word_len.unwrap_or(0);
            if !POLISH_WORD_LENS.contains(&word_len) {
                return Err(PromptError::InvalidDimension { field: "word_len", value: word_len.to_string() });
            }
            Ok(POLISH_TEMPLATE.replace("<word_len>", &word_len.to_string()).replace("<style>", style))
        }
        PromptKind::Expand => {
            let style = param(&params.style, "style")?;
            check("style", style, &POLISH_STYLES)?;
            Ok(EXPAND_TEMPLATE.replace("<style>", style).replace("<original human-written text>", input))
        }
        PromptKind::AdversarialStage1 => {
            Err(PromptError::InvalidDimension { field: "kind", value: kind.to_string() })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PromptParams {
    Dimensions(PromptDimensions),
    SingleTask(SingleTaskParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub kind: PromptKind,
    pub text: String,
    pub params: PromptParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    /// Seed of the generator that produced the record, then the draw index.
    pub seed_lineage: Vec<u64>,
}

impl PromptRecord {
    /// Renders the text again from the stored kind, parameters and input.
    pub fn rerender(&self) -> Result<String> {
        match (&self.params, self.kind) {
            (PromptParams::Dimensions(d), PromptKind::AdversarialStage1) => {
                d.validate()?;
                Ok(render_stage1(d))
            }
            (PromptParams::SingleTask(p), kind) if kind != PromptKind::AdversarialStage1 => {
                let needs_input = kind != PromptKind::Polish;
                let input = match (&self.input, needs_input) {
                    (Some(s), _) => s.as_str(),
                    (None, false) => "",
                    (None, true) => return Err(PromptError::MissingInput(kind)),
                };
                render_single_task(kind, p, input)
            }
            _ => Err(PromptError::InvalidDimension { field: "params", value: self.kind.to_string() }),
        }
    }
}

/// `size` stage-1 prompts with pairwise distinct texts. Duplicate draws are
/// rejected, up to 100 draws per requested prompt.
pub fn build_pool(size: usize, seed: u64) -> Result<Vec<PromptRecord>> {
    if size > DIMENSION_PRODUCT {
        return Err(PromptError::PoolExhausted { requested: size, available: DIMENSION_PRODUCT });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(size);
    let mut pool = Vec::with_capacity(size);
    let max_draws = size.saturating_mul(100);
    let mut draw = 0u64;
    while pool.len() < size {
        if draw as usize >= max_draws {
            return Err(PromptError::PoolExhausted { requested: size, available: pool.len() });
        }
        let dims = sample_dimensions(&mut rng);
        let text = render_stage1(&dims);
        if seen.insert(text.clone()) {
            pool.push(PromptRecord {
                kind: PromptKind::AdversarialStage1,
                text,
                params: PromptParams::Dimensions(dims),
                input: None,
                seed_lineage: vec![seed, draw],
            });
        }
        draw += 1;
    }
    Ok(pool)
}

pub fn records_to_jsonl(records: &[PromptRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("prompt record serializes") + "\n").collect()
}

pub fn records_from_jsonl(text: &str) -> std::result::Result<Vec<PromptRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> PromptDimensions {
        PromptDimensions {
            revision_goal: "Polish".into(),
            style: "oral".into(),
            adversarial: ADVERSARIAL_TEXT[0].into(),
            constraint: CONSTRAINTS[2].into(),
            additional: ADDITIONAL_OPTS[4].into(),
            word_len: 50,
        }
    }

    #[test]
    fn cardinalities() {
        assert_eq!(
            [REVISION_GOALS.len(), STYLE_CONTROLS.len(), ADVERSARIAL_TEXT.len(), CONSTRAINTS.len(), ADDITIONAL_OPTS.len(), WORD_LENS.len()],
            [5, 11, 3, 3, 5, 3]
        );
        assert_eq!(DIMENSION_PRODUCT, 7425);
        assert_eq!(POLISH_STYLES.len(), 10);
    }

    #[test]
    fn stage1_has_six_slots_and_renders() {
        let slots = ["<word_len>", "<revision_goal>", "<style>", "<adversarial>", "<additional_opt>", "<constraint>"];
        assert!(slots.iter().all(|s| STAGE1_TEMPLATE.matches(s).count() == 1));
        assert_eq!(STAGE1_TEMPLATE.matches('<').count(), 6);
        assert_eq!(
            render_stage1(&dims()),
            "Create a prompt in 50 words that says you want GPT's help to Polish a paragraph in a oral style, make the paragraph sound as human as possible, restructure sentences for better flow, and maintain original intent. "
        );
    }

    #[test]
    fn sampling_is_seeded_and_uniform() {
        let a = sample_dimensions(&mut ChaCha8Rng::seed_from_u64(7));
        let b = sample_dimensions(&mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        a.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut counts = [0usize; 5];
        let n = 100_000;
        for _ in 0..n {
            let d = sample_dimensions(&mut rng);
            counts[REVISION_GOALS.iter().position(|g| *g == d.revision_goal).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() <= 0.01, "{counts:?}");
        }
    }

    #[test]
    fn single_task_templates() {
        let text = (1..=40).map(|i| format!("w{i}")).collect::<Vec<_>>().join("  ");
        let g = render_single_task(PromptKind::Generate, &SingleTaskParams::default(), &text).unwrap();
        assert!(g.ends_with("starting exactly with: w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 w11 w12 w13 w14 w15 w16 w17 w18 w19 w20 w21 w22 w23 w24 w25 w26 w27 w28 w29 w30"));
        assert_eq!(
            render_single_task(PromptKind::Generate, &SingleTaskParams::default(), "too short"),
            Err(PromptError::PrefixTooShort { got: 2 })
        );
        let r = render_single_task(PromptKind::Rewrite, &SingleTaskParams::default(), "Hello.").unwrap();
        assert!(r.contains("the length of the rewritten text similar"));
        assert!(r.ends_with("original text. Hello."));
        let p = SingleTaskParams { style: Some("lyric".into()), word_len: Some(15) };
        assert_eq!(
            render_single_task(PromptKind::Polish, &p, "").unwrap(),
            "Write a prompt in 15 words that says you want gpt\u{2019}s help in polishing a paragraph in a lyric style, this prompt can only be 15 words or less."
        );
        let e = render_single_task(PromptKind::Expand, &p, "Text.").unwrap();
        assert_eq!(e, "Expand but not extend the paragraph in a lyric style. The paragraph to be expanded:Text. ");
        let bad = SingleTaskParams { style: Some("technical".into()), word_len: Some(15) };
        assert!(render_single_task(PromptKind::Polish, &bad, "").is_err());
    }

    #[test]
    fn pool_is_unique_and_reproducible() {
        let pool = build_pool(750, 42).unwrap();
        assert_eq!(pool.len(), 750);
        assert_eq!(pool.iter().map(|r| &r.text).collect::<HashSet<_>>().len(), 750);
        assert_eq!(pool, build_pool(750, 42).unwrap());
        for r in &pool {
            assert_eq!(r.rerender().unwrap(), r.text);
        }
        let back = records_from_jsonl(&records_to_jsonl(&pool)).unwrap();
        assert_eq!(back, pool);
    }

    #[test]
    fn exhaustion() {
        assert_eq!(build_pool(7426, 1), Err(PromptError::PoolExhausted { requested: 7426, available: 7425 }));
        assert_eq!(build_pool(7425, 1).unwrap().len(), 7425);
    }
}
