//! Perplexity evaluation with context-inferred affect, paired
//! baseline-vs-conditioned comparison, and affect embedding export.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{causal_affect_stream, SplitPart};
use crate::error::{Error, Result};
use crate::lexicon::{AffectCategory, AffectLexicon};
use crate::model::{advance_state, logits_into, Checkpoint, Hyperparams, ModelParams};
use crate::nncore::{log_softmax_into, mlp_forward_cached};

/// Perplexity of one model over one stream. `perplexity` is exactly
/// `exp(mean_nll)`; the mean is in nats over every predicted target.
#[derive(Debug, Clone, Serialize)]
pub struct PerplexityResult {
    pub model_id: String,
    pub corpus_id: String,
    pub beta: f64,
    pub tokens: usize,
    pub mean_nll: f64,
    pub perplexity: f64,
}

impl fmt::Display for PerplexityResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} on {}: perplexity {:.4} (mean nll {:.6} nats over {} targets, beta {})",
            self.model_id, self.corpus_id, self.perplexity, self.mean_nll, self.tokens, self.beta
        )
    }
}

/// Paired evaluation of a baseline and an affect-conditioned checkpoint on
/// the same stream.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub baseline: PerplexityResult,
    pub affect: PerplexityResult,
    pub absolute_improvement: f64,
    pub relative_improvement: f64,
}

impl ComparisonReport {
    pub fn from_results(baseline: PerplexityResult, affect: PerplexityResult) -> ComparisonReport {
        let absolute = baseline.perplexity - affect.perplexity;
        let relative = absolute / baseline.perplexity;
        ComparisonReport {
            baseline,
            affect,
            absolute_improvement: absolute,
            relative_improvement: relative,
        }
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "baseline : {}", self.baseline)?;
        writeln!(f, "affect   : {}", self.affect)?;
        write!(
            f,
            "improvement: {:.4} absolute, {:.2}% relative",
            self.absolute_improvement,
            100.0 * self.relative_improvement
        )
    }
}

/// Mean NLL and target count of `params` over the stream, walking `lanes`
/// contiguous lanes with zero-initialized state per lane and state carried
/// across utterances within a lane. `beta = 0` uses the baseline path.
pub fn mean_nll_of_part(
    params: &ModelParams,
    hyper: &Hyperparams,
    part: &SplitPart,
    lexicon: &AffectLexicon,
    beta: f64,
    lanes: usize,
) -> Result<(f64, usize)> {
    if !params.matches(hyper) {
        return Err(Error::DimMismatch(
            "parameters do not match hyperparameters".into(),
        ));
    }
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidInput(format!("invalid beta {beta}")));
    }
    if lanes == 0 {
        return Err(Error::InvalidInput("lanes must be positive".into()));
    }
    let lane_len = part.len() / lanes;
    if lane_len < 2 {
        return Err(Error::InvalidInput(format!(
            "evaluation stream of {} tokens is too short for {lanes} lanes",
            part.len()
        )));
    }
    if part.ids.iter().any(|&id| id >= hyper.vocab_size) {
        return Err(Error::DimMismatch(
            "stream contains token ids outside the model vocabulary".into(),
        ));
    }
    let affect = causal_affect_stream(&part.raw, lexicon);

    let mut logits = Vec::with_capacity(hyper.vocab_size);
    let mut logprobs = vec![0.0; hyper.vocab_size];
    let mut nll_sum = 0.0;
    let mut targets = 0usize;
    for lane in 0..lanes {
        let start = lane * lane_len;
        let mut state = hyper.zero_state();
        for p in start..start + lane_len - 1 {
            advance_state(params, &mut state, part.ids[p]);
            if beta != 0.0 {
                let (_, g) = mlp_forward_cached(&params.mlp, &affect[p + 1].to_reals());
                logits_into(params, state.top_hidden(), Some((&g, beta)), &mut logits);
            } else {
                logits_into(params, state.top_hidden(), None, &mut logits);
            }
            log_softmax_into(&logits, &mut logprobs);
            let lp = logprobs[part.ids[p + 1]];
            if !lp.is_finite() {
                return Err(Error::NonFinite("evaluation log-likelihood".into()));
            }
            nll_sum -= lp;
            targets += 1;
        }
    }
    Ok((nll_sum / targets as f64, targets))
}

/// Perplexity of raw parameters over a stream (single lane).
pub fn perplexity_of_part(
    params: &ModelParams,
    hyper: &Hyperparams,
    part: &SplitPart,
    lexicon: &AffectLexicon,
    beta: f64,
    model_id: &str,
    corpus_id: &str,
) -> Result<PerplexityResult> {
    let (mean_nll, tokens) = mean_nll_of_part(params, hyper, part, lexicon, beta, 1)?;
    Ok(PerplexityResult {
        model_id: model_id.to_string(),
        corpus_id: corpus_id.to_string(),
        beta,
        tokens,
        mean_nll,
        perplexity: mean_nll.exp(),
    })
}

/// Perplexity of a checkpoint over a stream, defaulting to the trained beta
/// stored in the checkpoint.
pub fn perplexity(
    checkpoint: &Checkpoint,
    part: &SplitPart,
    lexicon: &AffectLexicon,
    beta: Option<f64>,
    model_id: &str,
    corpus_id: &str,
) -> Result<PerplexityResult> {
    let beta = beta.unwrap_or(checkpoint.hyper.beta);
    perplexity_of_part(
        &checkpoint.params,
        &checkpoint.hyper,
        part,
        lexicon,
        beta,
        model_id,
        corpus_id,
    )
}

/// Paired perplexity of two checkpoints sharing a vocabulary. The baseline
/// is scored without the energy term; the affect model uses its trained beta.
pub fn compare(
    baseline: &Checkpoint,
    affect: &Checkpoint,
    part: &SplitPart,
    lexicon: &AffectLexicon,
    corpus_id: &str,
) -> Result<ComparisonReport> {
    if baseline.vocab.words() != affect.vocab.words() {
        return Err(Error::VocabMismatch(
            "baseline and affect checkpoints were built on different vocabularies".into(),
        ));
    }
    let base = perplexity(baseline, part, lexicon, Some(0.0), "baseline", corpus_id)?;
    let aff = perplexity(affect, part, lexicon, None, "affect-lm", corpus_id)?;
    Ok(ComparisonReport::from_results(base, aff))
}

/// Display label for a word: highest-priority matching category
/// (PositiveEmotion > Angry > Sad > Anxious > NegativeEmotion) or `none`.
pub fn word_label(lexicon: &AffectLexicon, word: &str) -> &'static str {
    lexicon
        .match_token(word)
        .iter()
        .next()
        .map_or("none", AffectCategory::name)
}

/// Write one row per vocabulary word: the word, its display label, its full
/// category set, and the word's affect embedding (row of `vmat`). TSV with a
/// `word<TAB>label<TAB>categories<TAB>v_0..v_{d-1}` header.
pub fn export_affect_embeddings(
    checkpoint: &Checkpoint,
    lexicon: &AffectLexicon,
    out: impl AsRef<Path>,
) -> Result<()> {
    let out = out.as_ref();
    let mut text = String::new();
    text.push_str("word\tlabel\tcategories");
    for j in 0..checkpoint.hyper.output_dim {
        text.push_str(&format!("\tv_{j}"));
    }
    text.push('\n');
    for (id, word) in checkpoint.vocab.words().iter().enumerate() {
        let cats = lexicon.match_token(word);
        text.push_str(word);
        text.push('\t');
        text.push_str(word_label(lexicon, word));
        text.push('\t');
        text.push_str(&cats.to_string());
        for v in checkpoint.params.vmat.row(id) {
            text.push_str(&format!("\t{v}"));
        }
        text.push('\n');
    }
    fs::write(out, text).map_err(|e| Error::io(out, e))
}

/// Mean cosine similarity within `a`, and between `a` and `b`.
pub fn cosine_separation(a: &[Vec<f64>], b: &[Vec<f64>]) -> (f64, f64) {
    fn cosine(x: &[f64], y: &[f64]) -> f64 {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        dot / (nx * ny).max(1e-300)
    }
    let mut within = 0.0;
    let mut wn = 0usize;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            within += cosine(&a[i], &a[j]);
            wn += 1;
        }
    }
    let mut cross = 0.0;
    let mut cn = 0usize;
    for x in a {
        for y in b {
            cross += cosine(x, y);
            cn += 1;
        }
    }
    (within / wn.max(1) as f64, cross / cn.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{part_from_utterances, Utterance, Vocabulary};
    use crate::lexicon::CategorySet;
    use crate::model::forward_step;
    use crate::nncore::LstmState;

    fn test_lexicon() -> AffectLexicon {
        AffectLexicon::from_patterns([
            (
                "love".to_string(),
                CategorySet::single(AffectCategory::PositiveEmotion),
            ),
            (
                "war".to_string(),
                CategorySet::single(AffectCategory::NegativeEmotion),
            ),
        ])
        .unwrap()
    }

    fn tiny_setup(lines: &[&str]) -> (Hyperparams, Vocabulary, SplitPart) {
        let utts: Vec<Utterance> = lines
            .iter()
            .map(|l| Utterance::from_line(l).unwrap())
            .collect();
        let vocab = Vocabulary::build(&utts, 100).unwrap();
        let part = part_from_utterances(&utts, &vocab);
        let hyper = Hyperparams::small(vocab.len(), 1, 4, 3);
        (hyper, vocab, part)
    }

    #[test]
    fn uniform_model_has_perplexity_v() {
        let (hyper, _, part) = tiny_setup(&["we love the war", "the war is long"]);
        let mut params = ModelParams::init(&hyper, 3).unwrap();
        params.u.fill(0.0);
        params.vmat.fill(0.0);
        params.b.fill(0.0);
        let r = perplexity_of_part(&params, &hyper, &part, &test_lexicon(), 1.0, "m", "c").unwrap();
        assert!((r.perplexity - hyper.vocab_size as f64).abs() < 1e-6);
        assert_eq!(r.tokens, part.len() - 1);
    }

    #[test]
    fn perplexity_matches_stepwise_chain_rule() {
        // Walk the same stream with the public forward_step and compare.
        let (hyper, _, part) = tiny_setup(&["we love war"]);
        let params = ModelParams::init(&hyper, 9).unwrap();
        let lex = test_lexicon();
        let beta = 1.3;

        let affect = causal_affect_stream(&part.raw, &lex);
        let mut state: LstmState = hyper.zero_state();
        let mut prev = part.ids[0];
        let mut nll = 0.0;
        for p in 1..part.len() {
            let out = forward_step(&params, &hyper, &state, prev, &affect[p], beta).unwrap();
            nll -= out.logprobs[part.ids[p]];
            state = out.state;
            prev = part.ids[p];
        }
        let expect = (nll / (part.len() - 1) as f64).exp();

        let r = perplexity_of_part(&params, &hyper, &part, &lex, beta, "m", "c").unwrap();
        assert!((r.perplexity - expect).abs() < 1e-12);
        assert_eq!(r.mean_nll.exp(), r.perplexity);
    }

    #[test]
    fn lane_grouping_does_not_change_mean_nll() {
        // Evaluating k lanes in one call equals evaluating each lane stream
        // independently and pooling. Lane boundaries here are
        // utterance-aligned so per-lane affect context matches.
        let words = [
            "a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p",
        ];
        let utts: Vec<Utterance> = words
            .chunks(4)
            .map(|c| Utterance::new(c.iter().map(|s| s.to_string()).collect()).unwrap())
            .collect();
        let vocab = Vocabulary::build(&utts, 100).unwrap();
        let part = part_from_utterances(&utts, &vocab);
        let hyper = Hyperparams::small(vocab.len(), 1, 4, 3);
        let params = ModelParams::init(&hyper, 21).unwrap();
        let lex = test_lexicon();

        let lanes = 2;
        let (pooled, pooled_n) = mean_nll_of_part(&params, &hyper, &part, &lex, 1.1, lanes).unwrap();

        let lane_len = part.len() / lanes;
        let mut total = 0.0;
        let mut count = 0usize;
        for l in 0..lanes {
            let sub = SplitPart {
                ids: part.ids[l * lane_len..(l + 1) * lane_len].to_vec(),
                raw: part.raw[l * lane_len..(l + 1) * lane_len].to_vec(),
            };
            let (nll, n) = mean_nll_of_part(&params, &hyper, &sub, &lex, 1.1, 1).unwrap();
            total += nll * n as f64;
            count += n;
        }
        assert_eq!(pooled_n, count);
        assert!((pooled - total / count as f64).abs() < 1e-9);
    }

    #[test]
    fn compare_identical_checkpoints_gives_zero_improvement() {
        let (mut hyper, vocab, part) = tiny_setup(&["we love the war", "war is long here"]);
        hyper.beta = 0.0;
        let params = ModelParams::init(&hyper, 5).unwrap();
        let ck = Checkpoint::new(hyper, params, vocab).unwrap();
        let rep = compare(&ck, &ck, &part, &test_lexicon(), "c").unwrap();
        assert_eq!(rep.absolute_improvement, 0.0);
        assert_eq!(rep.relative_improvement, 0.0);
    }

    #[test]
    fn compare_improvement_formula() {
        let base = PerplexityResult {
            model_id: "b".into(),
            corpus_id: "c".into(),
            beta: 0.0,
            tokens: 1,
            mean_nll: 104.74f64.ln(),
            perplexity: 104.74,
        };
        let aff = PerplexityResult {
            model_id: "a".into(),
            corpus_id: "c".into(),
            beta: 1.5,
            tokens: 1,
            mean_nll: 101.19f64.ln(),
            perplexity: 101.19,
        };
        let rep = ComparisonReport::from_results(base, aff);
        assert!((rep.absolute_improvement - 3.55).abs() < 1e-9);
        assert!((rep.relative_improvement - 3.55 / 104.74).abs() < 1e-12);
    }

    #[test]
    fn compare_is_antisymmetric_in_absolute_improvement() {
        let (mut hyper, vocab, part) = tiny_setup(&["we love the war", "long war again now"]);
        hyper.beta = 0.0;
        let p1 = ModelParams::init(&hyper, 1).unwrap();
        let p2 = ModelParams::init(&hyper, 2).unwrap();
        let c1 = Checkpoint::new(hyper, p1, vocab.clone()).unwrap();
        let c2 = Checkpoint::new(hyper, p2, vocab).unwrap();
        let lex = test_lexicon();
        let fwd = compare(&c1, &c2, &part, &lex, "c").unwrap();
        let rev = compare(&c2, &c1, &part, &lex, "c").unwrap();
        assert!((fwd.absolute_improvement + rev.absolute_improvement).abs() < 1e-12);
    }

    #[test]
    fn compare_rejects_vocab_mismatch() {
        let (mut hyper, vocab, part) = tiny_setup(&["we love the war", "war is too long"]);
        hyper.beta = 0.0;
        let p = ModelParams::init(&hyper, 1).unwrap();
        // Same size, different words.
        let mut other_words: Vec<String> = vocab.words().to_vec();
        let last = other_words.last_mut().unwrap();
        *last = format!("{last}x");
        let other_vocab = Vocabulary::from_words(other_words).unwrap();
        let c1 = Checkpoint::new(hyper, p.clone(), vocab).unwrap();
        let c2 = Checkpoint::new(hyper, p, other_vocab).unwrap();
        assert!(matches!(
            compare(&c1, &c2, &part, &test_lexicon(), "c"),
            Err(Error::VocabMismatch(_))
        ));
    }

    #[test]
    fn export_writes_labels_categories_and_rows() {
        let (hyper, vocab, _) = tiny_setup(&["we love the war"]);
        let params = ModelParams::init(&hyper, 7).unwrap();
        let ck = Checkpoint::new(hyper, params, vocab).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        export_affect_embeddings(&ck, &test_lexicon(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + ck.vocab.len());
        let header: Vec<&str> = lines[0].split('\t').collect();
        assert_eq!(header[0], "word");
        assert_eq!(header[3], "v_0");
        assert_eq!(header.len(), 3 + ck.hyper.output_dim);
        let love = lines.iter().find(|l| l.starts_with("love\t")).unwrap();
        assert!(love.contains("\tPositiveEmotion\t"));
        let the = lines.iter().find(|l| l.starts_with("the\t")).unwrap();
        assert!(the.contains("\tnone\t"));
        for line in &lines[1..] {
            for field in line.split('\t').skip(3) {
                field.parse::<f64>().unwrap();
            }
        }
    }

    #[test]
    fn label_priority_follows_category_order() {
        let lex = AffectLexicon::from_patterns([(
            "grim".to_string(),
            [
                AffectCategory::Sad,
                AffectCategory::Angry,
                AffectCategory::NegativeEmotion,
            ]
            .into_iter()
            .collect::<CategorySet>(),
        )])
        .unwrap();
        assert_eq!(word_label(&lex, "grim"), "Angry");
        assert_eq!(word_label(&lex, "pleasantry"), "none");
    }

    #[test]
    fn cosine_separation_hand_case() {
        let a = vec![vec![1.0, 0.0], vec![1.0, 0.1]];
        let b = vec![vec![-1.0, 0.0]];
        let (within, cross) = cosine_separation(&a, &b);
        assert!(within > 0.99);
        assert!(cross < -0.99);
    }
}
