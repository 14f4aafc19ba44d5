//! Supervised evaluation: word-translation precision@k against gold
//! bilingual dictionaries (retrieval by CSLS in the shared space) and
//! cross-lingual word similarity (Spearman correlation of cosine scores
//! against human judgments). OOV entries are excluded and reported as
//! coverage, never counted as misses.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Instant;

use crate::csls::{csls_topk_with, mean_topk_cosine, normalize_rows};
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mapping::MappingSet;
use crate::mat::{train_mat, MatConfig};
use crate::mpsr::{train_mpsr, MpsrConfig};

/// Gold translations for a directed language pair. A source word may have
/// several acceptable targets; duplicate source lines merge.
#[derive(Debug, Clone)]
pub struct EvalDictionary {
    pub src_lang: String,
    pub tgt_lang: String,
    entries: Vec<(String, Vec<String>)>,
}

impl EvalDictionary {
    pub fn from_pairs(
        src_lang: impl Into<String>,
        tgt_lang: impl Into<String>,
        pairs: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut entries: Vec<(String, Vec<String>)> = Vec::new();
        let mut index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
        for (src, tgt) in pairs {
            match index.get(&src) {
                Some(&i) => {
                    if !entries[i].1.contains(&tgt) {
                        entries[i].1.push(tgt);
                    }
                }
                None => {
                    index.insert(src.clone(), entries.len());
                    entries.push((src, vec![tgt]));
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::Argument("dictionary has no entries".into()));
        }
        Ok(EvalDictionary {
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Vec<String>)] {
        &self.entries
    }
}

/// Load a dictionary file: one `src_word tgt_word` pair per line
/// (whitespace-separated). Lines with any other field count are rejected.
pub fn load_dictionary(
    path: impl AsRef<Path>,
    src_lang: &str,
    tgt_lang: &str,
) -> Result<EvalDictionary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 'src tgt', found {} fields", fields.len()),
            ));
        }
        pairs.push((fields[0].to_string(), fields[1].to_string()));
    }
    if pairs.is_empty() {
        return Err(Error::parse(path, 1, "dictionary file is empty"));
    }
    EvalDictionary::from_pairs(src_lang, tgt_lang, pairs)
}

#[derive(Debug, Clone)]
pub struct PrecisionReport {
    /// (k, precision) for each requested k, in the requested order.
    pub per_k: Vec<(usize, f64)>,
    /// Evaluated fraction: entries with an in-vocabulary source and at least
    /// one in-vocabulary gold target.
    pub coverage: f64,
    pub evaluated: usize,
    pub total: usize,
}

impl PrecisionReport {
    pub fn precision_at(&self, k: usize) -> Option<f64> {
        self.per_k.iter().find(|&&(kk, _)| kk == k).map(|&(_, p)| p)
    }
}

/// Word-translation precision@k. Every in-vocabulary source word retrieves
/// its top-k CSLS neighbors over the full target vocabulary in the shared
/// space; a hit means the retrieved set intersects the in-vocabulary gold
/// targets. CSLS penalties use the full vocabularies of both languages.
pub fn word_translation_precision(
    dict: &EvalDictionary,
    space_src: &EmbeddingSpace,
    space_tgt: &EmbeddingSpace,
    map_src: &Matrix,
    map_tgt: &Matrix,
    k_list: &[usize],
    csls_n: usize,
) -> Result<PrecisionReport> {
    if k_list.is_empty() {
        return Err(Error::Argument("k_list must not be empty".into()));
    }
    let mapped_src = space_src.matrix.matmul_nt(map_src)?;
    let mapped_tgt = space_tgt.matrix.matmul_nt(map_tgt)?;

    // Evaluable entries: in-vocabulary source, at least one in-vocab target.
    let mut query_rows: Vec<usize> = Vec::new();
    let mut gold_sets: Vec<HashSet<usize>> = Vec::new();
    for (src_word, tgt_words) in &dict.entries {
        let Some(src_rank) = space_src.vocab.rank(src_word) else {
            continue;
        };
        let golds: HashSet<usize> = tgt_words
            .iter()
            .filter_map(|w| space_tgt.vocab.rank(w))
            .collect();
        if golds.is_empty() {
            continue;
        }
        query_rows.push(src_rank);
        gold_sets.push(golds);
    }
    let total = dict.entries.len();
    let evaluated = query_rows.len();
    if evaluated == 0 {
        return Err(Error::Eval(format!(
            "no evaluable entries for {}-{}: all sources or targets out of vocabulary",
            dict.src_lang, dict.tgt_lang
        )));
    }

    let n = csls_n
        .min(mapped_tgt.rows())
        .min(mapped_src.rows())
        .max(1);
    // Penalties over the full vocabularies; the query subset reuses the
    // source-side values.
    let r_src_full = mean_topk_cosine(mapped_src.as_ref(), mapped_tgt.as_ref(), n)?;
    let r_tgt_full = mean_topk_cosine(mapped_tgt.as_ref(), mapped_src.as_ref(), n)?;

    let mut queries = Matrix::zeros(evaluated, mapped_src.cols());
    let mut r_queries = Vec::with_capacity(evaluated);
    for (out_row, &src_rank) in query_rows.iter().enumerate() {
        queries
            .row_mut(out_row)
            .copy_from_slice(mapped_src.row(src_rank));
        r_queries.push(r_src_full[src_rank]);
    }

    let k_max = k_list.iter().copied().max().unwrap();
    if k_max == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let k_max = k_max.min(mapped_tgt.rows());
    let neighbors = csls_topk_with(
        queries.as_ref(),
        mapped_tgt.as_ref(),
        n,
        k_max,
        Some(r_queries),
        Some(r_tgt_full),
    )?;

    let mut per_k = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let kk = k.min(k_max);
        let hits = neighbors
            .iter()
            .zip(&gold_sets)
            .filter(|(nb, gold)| nb.indices[..kk.min(nb.indices.len())]
                .iter()
                .any(|i| gold.contains(i)))
            .count();
        per_k.push((k, hits as f64 / evaluated as f64));
    }

    Ok(PrecisionReport {
        per_k,
        coverage: evaluated as f64 / total as f64,
        evaluated,
        total,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_rho(pred: &[f64], gold: &[f64]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} gold scores",
            pred.len(),
            gold.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::Eval("need at least two points for a correlation".into()));
    }
    if pred.iter().chain(gold).any(|v| !v.is_finite()) {
        return Err(Error::Eval("NaN/Inf in correlation input".into()));
    }
    let rp = average_ranks(pred);
    let rg = average_ranks(gold);
    pearson(&rp, &rg)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based ranks; ties share the average of their positions.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    if dx == 0.0 || dy == 0.0 {
        return Err(Error::Eval(
            "constant input has no rank variance; correlation undefined".into(),
        ));
    }
    Ok(num / (dx * dy).sqrt())
}

/// A cross-lingual word-similarity dataset: word pairs with human scores.
#[derive(Debug, Clone)]
pub struct SimilarityDataset {
    pub src_lang: String,
    pub tgt_lang: String,
    pub items: Vec<(String, String, f64)>,
}

/// Load `word1<TAB>word2<TAB>score` lines. Duplicate pairs keep the first
/// occurrence with a warning.
pub fn load_similarity_dataset(
    path: impl AsRef<Path>,
    src_lang: &str,
    tgt_lang: &str,
) -> Result<SimilarityDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut items: Vec<(String, String, f64)> = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 'word1\\tword2\\tscore', found {} fields", fields.len()),
            ));
        }
        let score: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad score {:?}", fields[2])))?;
        if !score.is_finite() {
            return Err(Error::parse(path, i + 1, "non-finite score"));
        }
        let key = (fields[0].to_string(), fields[1].to_string());
        if !seen.insert(key.clone()) {
            eprintln!(
                "warning: {}:{}: duplicate pair {:?} skipped",
                path.display(),
                i + 1,
                key
            );
            continue;
        }
        items.push((key.0, key.1, score));
    }
    if items.is_empty() {
        return Err(Error::parse(path, 1, "similarity file is empty"));
    }
    Ok(SimilarityDataset {
        src_lang: src_lang.into(),
        tgt_lang: tgt_lang.into(),
        items,
    })
}

#[derive(Debug, Clone)]
pub struct ClwsReport {
    pub rho: f64,
    pub coverage: f64,
    pub evaluated: usize,
    pub total: usize,
}

/// Cross-lingual word similarity: predict cosine in the shared space for
/// each in-vocabulary pair and correlate with the gold scores. (Similarity
/// scoring is a pointwise judgment, so plain cosine is used, not CSLS.)
pub fn evaluate_clws(
    dataset: &SimilarityDataset,
    space_a: &EmbeddingSpace,
    space_b: &EmbeddingSpace,
    map_a: &Matrix,
    map_b: &Matrix,
) -> Result<ClwsReport> {
    let mapped_a = normalize_rows(space_a.matrix.matmul_nt(map_a)?.as_ref());
    let mapped_b = normalize_rows(space_b.matrix.matmul_nt(map_b)?.as_ref());
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for (w1, w2, score) in &dataset.items {
        let (Some(r1), Some(r2)) = (space_a.vocab.rank(w1), space_b.vocab.rank(w2)) else {
            continue;
        };
        let cos: f64 = mapped_a
            .row(r1)
            .iter()
            .zip(mapped_b.row(r2))
            .map(|(x, y)| x * y)
            .sum();
        pred.push(cos);
        gold.push(*score);
    }
    let total = dataset.items.len();
    let evaluated = pred.len();
    if evaluated < 2 {
        return Err(Error::Eval(format!(
            "only {evaluated} of {total} similarity pairs are in vocabulary"
        )));
    }
    Ok(ClwsReport {
        rho: spearman_rho(&pred, &gold)?,
        coverage: evaluated as f64 / total as f64,
        evaluated,
        total,
    })
}

/// Topology for assembling a multilingual space out of pairwise runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// One joint adversarial + refinement run over all N languages.
    Multilingual,
    /// One pairwise run per non-pivot language, all mapping into the pivot
    /// space; cross pairs compose through the pivot.
    Pivot { pivot: usize },
    /// An independent pairwise run for every ordered pair.
    Direct,
}

#[derive(Debug, Clone)]
pub struct PairPrecision {
    pub src: String,
    pub tgt: String,
    pub precision: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineReport {
    pub mode: String,
    pub pairs: Vec<PairPrecision>,
    pub mean_precision: f64,
    /// Training cost in BWE-model equivalents; see [`bwe_equivalents`].
    pub bwe_equivalents: usize,
    pub wall_clock_secs: f64,
}

/// Training cost of a topology measured in bilingual-model equivalents:
/// one joint multilingual run costs about N-1 pairwise models, the pivot
/// topology 2(N-1) (one per direction through the pivot), and the direct
/// topology N(N-1) (one per ordered pair).
pub fn bwe_equivalents(mode: BaselineMode, n_langs: usize) -> usize {
    match mode {
        BaselineMode::Multilingual => n_langs - 1,
        BaselineMode::Pivot { .. } => 2 * (n_langs - 1),
        BaselineMode::Direct => n_langs * (n_langs - 1),
    }
}

impl BaselineReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,src,tgt,precision,coverage\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.mode, p.src, p.tgt, p.precision, p.coverage
            );
        }
        let _ = writeln!(out, "{},overall,,{},", self.mode, self.mean_precision);
        out
    }
}

/// Train with the requested topology and score word translation on every
/// ordered pair that has a dictionary. Pairwise runs derive their seed from
/// the root seed plus the pair index.
pub fn run_baseline_comparison(
    spaces: &[EmbeddingSpace],
    dicts: &[EvalDictionary],
    mode: BaselineMode,
    target: usize,
    mat_cfg: &MatConfig,
    mpsr_cfg: &MpsrConfig,
    eval_csls_n: usize,
) -> Result<BaselineReport> {
    let n = spaces.len();
    if n < 2 {
        return Err(Error::Argument("need at least two languages".into()));
    }
    let started = Instant::now();

    // Mapping per ordered pair (src, tgt): the two matrices used at eval time.
    let mut pair_maps: Vec<Vec<Option<(Matrix, Matrix)>>> = vec![vec![None; n]; n];

    let train_pair = |a: usize, b: usize, tgt: usize, seed: u64| -> Result<MappingSet> {
        let pair_spaces = vec![spaces[a].clone(), spaces[b].clone()];
        let mut cfg = mat_cfg.clone();
        cfg.seed = seed;
        let mat = train_mat(&pair_spaces, tgt, &cfg)?;
        let mut rcfg = mpsr_cfg.clone();
        rcfg.seed = seed;
        let refined = train_mpsr(&pair_spaces, &mat.mappings, &rcfg)?;
        Ok(refined.mappings)
    };

    let (mode_name, cost_equivalents) = match mode {
        BaselineMode::Multilingual => {
            let mat = train_mat(spaces, target, mat_cfg)?;
            let refined = train_mpsr(spaces, &mat.mappings, mpsr_cfg)?;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        pair_maps[i][j] = Some((
                            refined.mappings.map(i).clone(),
                            refined.mappings.map(j).clone(),
                        ));
                    }
                }
            }
            ("multilingual", bwe_equivalents(mode, n))
        }
        BaselineMode::Pivot { pivot } => {
            if pivot >= n {
                return Err(Error::Argument(format!(
                    "pivot index {pivot} out of range for {n} languages"
                )));
            }
            // One run per non-pivot language, into the pivot space.
            let mut into_pivot: Vec<Option<Matrix>> = vec![None; n];
            into_pivot[pivot] = Some(Matrix::identity(spaces[0].dim()));
            let mut pair_idx = 0u64;
            for l in 0..n {
                if l == pivot {
                    continue;
                }
                let set = train_pair(l, pivot, 1, mat_cfg.seed + pair_idx)?;
                into_pivot[l] = Some(set.map(0).clone());
                pair_idx += 1;
            }
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        pair_maps[i][j] = Some((
                            into_pivot[i].clone().unwrap(),
                            into_pivot[j].clone().unwrap(),
                        ));
                    }
                }
            }
            ("pivot", bwe_equivalents(mode, n))
        }
        BaselineMode::Direct => {
            let mut pair_idx = 0u64;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let set = train_pair(i, j, 1, mat_cfg.seed + pair_idx)?;
                    pair_maps[i][j] =
                        Some((set.map(0).clone(), Matrix::identity(spaces[0].dim())));
                    pair_idx += 1;
                }
            }
            ("direct", bwe_equivalents(mode, n))
        }
    };

    let mut pairs = Vec::new();
    let mut sum = 0.0;
    for dict in dicts {
        let Some(i) = spaces.iter().position(|s| s.lang == dict.src_lang) else {
            return Err(Error::Argument(format!(
                "dictionary source language {} not loaded",
                dict.src_lang
            )));
        };
        let Some(j) = spaces.iter().position(|s| s.lang == dict.tgt_lang) else {
            return Err(Error::Argument(format!(
                "dictionary target language {} not loaded",
                dict.tgt_lang
            )));
        };
        let (m_i, m_j) = pair_maps[i][j]
            .as_ref()
            .ok_or_else(|| Error::Argument(format!("no mapping for pair {i}-{j}")))?;
        let report = word_translation_precision(
            dict,
            &spaces[i],
            &spaces[j],
            m_i,
            m_j,
            &[1],
            eval_csls_n,
        )?;
        let p1 = report.precision_at(1).unwrap();
        sum += p1;
        pairs.push(PairPrecision {
            src: dict.src_lang.clone(),
            tgt: dict.tgt_lang.clone(),
            precision: p1,
            coverage: report.coverage,
        });
    }
    if pairs.is_empty() {
        return Err(Error::Eval("no dictionaries to evaluate".into()));
    }
    let mean = sum / pairs.len() as f64;

    Ok(BaselineReport {
        mode: mode_name.to_string(),
        pairs,
        mean_precision: mean,
        bwe_equivalents: cost_equivalents,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// The Table-style summary of per-pair precision: one row per source
/// language (means over its targets), one per target language, and the
/// overall macro average.
pub fn precision_summary_table(pairs: &[PairPrecision]) -> String {
    let mut langs: Vec<String> = Vec::new();
    for p in pairs {
        if !langs.contains(&p.src) {
            langs.push(p.src.clone());
        }
        if !langs.contains(&p.tgt) {
            langs.push(p.tgt.clone());
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>12}", "pair", "precision@1");
    for p in pairs {
        let _ = writeln!(out, "{:<16} {:>12.4}", format!("{}-{}", p.src, p.tgt), p.precision);
    }
    let mean_of = |sel: &dyn Fn(&PairPrecision) -> bool| -> Option<f64> {
        let vals: Vec<f64> = pairs.iter().filter(|p| sel(p)).map(|p| p.precision).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let _ = writeln!(out, "--- Single Source ---");
    for l in &langs {
        if let Some(m) = mean_of(&|p: &PairPrecision| &p.src == l) {
            let _ = writeln!(out, "{:<16} {:>12.4}", format!("{l}-xx"), m);
        }
    }
    let _ = writeln!(out, "--- Single Target ---");
    for l in &langs {
        if let Some(m) = mean_of(&|p: &PairPrecision| &p.tgt == l) {
            let _ = writeln!(out, "{:<16} {:>12.4}", format!("xx-{l}"), m);
        }
    }
    if let Some(m) = mean_of(&|_: &PairPrecision| true) {
        let _ = writeln!(out, "{:<16} {:>12.4}", "Overall", m);
    }
    out
}
