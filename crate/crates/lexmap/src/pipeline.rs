//! End-to-end orchestration behind the command-line interface: resolve a
//! run configuration, train with the requested topology, and write
//! checkpoints, logs and a manifest that reproduces the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::csls::{csls_topk_with, mean_topk_cosine};
use crate::embeddings::{load_text_embeddings, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_clws, load_dictionary, load_similarity_dataset, precision_summary_table,
    word_translation_precision, PairPrecision,
};
use crate::linalg::Matrix;
use crate::mapping::MappingSet;
use crate::mat::{log_to_csv, train_mat, MatConfig};
use crate::mpsr::{mpsr_log_to_csv, procrustes_solve, train_mpsr, MpsrConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Multilingual,
    Pivot,
    Direct,
    SupervisedProcrustes,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "multilingual" => Ok(Mode::Multilingual),
            "pivot" => Ok(Mode::Pivot),
            "direct" => Ok(Mode::Direct),
            "supervised-procrustes" => Ok(Mode::SupervisedProcrustes),
            other => Err(Error::Argument(format!(
                "unknown mode {other:?}; expected multilingual | pivot | direct | supervised-procrustes"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Multilingual => "multilingual",
            Mode::Pivot => "pivot",
            Mode::Direct => "direct",
            Mode::SupervisedProcrustes => "supervised-procrustes",
        }
    }
}

/// Everything a training run needs; the manifest serializes all of it.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// (language code, embedding path) in order; the order defines indices.
    pub langs: Vec<(String, PathBuf)>,
    pub target: String,
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub max_vocab: usize,
    pub skip_mpsr: bool,
    pub dump_lexica: bool,
    /// Per-language training dictionaries (into the target language) for
    /// supervised-procrustes mode.
    pub train_dicts: Vec<(String, PathBuf)>,
    pub mat: MatConfig,
    pub mpsr: MpsrConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            langs: Vec::new(),
            target: String::new(),
            mode: Mode::Multilingual,
            out_dir: PathBuf::from("run"),
            seed: 42,
            max_vocab: 200_000,
            skip_mpsr: false,
            dump_lexica: false,
            train_dicts: Vec::new(),
            mat: MatConfig::default(),
            mpsr: MpsrConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.langs.len() < 2 {
            return Err(Error::Argument(
                "need at least two languages (--langs code=path,code=path)".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for (code, path) in &self.langs {
            if !seen.insert(code.clone()) {
                return Err(Error::Argument(format!("duplicate language code {code}")));
            }
            if !path.exists() {
                return Err(Error::Argument(format!(
                    "embedding file for {code} not found: {}",
                    path.display()
                )));
            }
        }
        if self.target_index().is_none() {
            return Err(Error::Argument(format!(
                "target language {:?} is not in the language list",
                self.target
            )));
        }
        if self.mode == Mode::SupervisedProcrustes {
            for (code, _) in &self.langs {
                if code != &self.target
                    && !self.train_dicts.iter().any(|(c, _)| c == code)
                {
                    return Err(Error::Argument(format!(
                        "supervised-procrustes needs --train-dict {code}=<path>"
                    )));
                }
            }
            for (code, path) in &self.train_dicts {
                if !path.exists() {
                    return Err(Error::Argument(format!(
                        "training dictionary for {code} not found: {}",
                        path.display()
                    )));
                }
            }
        }
        if self.max_vocab == 0 {
            return Err(Error::Argument("max_vocab must be positive".into()));
        }
        self.mat.validate()?;
        self.mpsr.validate()?;
        Ok(())
    }

    pub fn target_index(&self) -> Option<usize> {
        self.langs.iter().position(|(c, _)| c == &self.target)
    }

    /// Flat key=value rendering; parseable by [`parse_config_file`] and
    /// complete enough to re-run the experiment.
    pub fn to_manifest(&self) -> String {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let langs: Vec<String> = self
            .langs
            .iter()
            .map(|(c, p)| format!("{c}={}", p.display()))
            .collect();
        kv.insert("langs".into(), langs.join(","));
        kv.insert("target".into(), self.target.clone());
        kv.insert("mode".into(), self.mode.name().into());
        kv.insert("out_dir".into(), self.out_dir.display().to_string());
        kv.insert("seed".into(), self.seed.to_string());
        kv.insert("max_vocab".into(), self.max_vocab.to_string());
        kv.insert("skip_mpsr".into(), self.skip_mpsr.to_string());
        kv.insert("dump_lexica".into(), self.dump_lexica.to_string());
        if !self.train_dicts.is_empty() {
            let dicts: Vec<String> = self
                .train_dicts
                .iter()
                .map(|(c, p)| format!("{c}={}", p.display()))
                .collect();
            kv.insert("train_dicts".into(), dicts.join(","));
        }
        kv.insert("mat.epochs".into(), self.mat.epochs.to_string());
        kv.insert("mat.steps_per_epoch".into(), self.mat.steps_per_epoch.to_string());
        kv.insert("mat.dis_steps".into(), self.mat.dis_steps.to_string());
        kv.insert("mat.batch_size".into(), self.mat.batch_size.to_string());
        kv.insert("mat.dis_lr".into(), self.mat.dis_lr.to_string());
        kv.insert("mat.map_lr".into(), self.mat.map_lr.to_string());
        kv.insert("mat.lr_decay".into(), self.mat.lr_decay.to_string());
        kv.insert("mat.lr_shrink".into(), self.mat.lr_shrink.to_string());
        kv.insert("mat.min_lr".into(), self.mat.min_lr.to_string());
        kv.insert(
            "mat.dis_sample_cutoff".into(),
            self.mat.dis_sample_cutoff.to_string(),
        );
        kv.insert("mat.smoothing".into(), self.mat.smoothing.to_string());
        kv.insert("mat.beta".into(), self.mat.beta.to_string());
        kv.insert("mat.map_update_clip".into(), self.mat.map_update_clip.to_string());
        let hidden: Vec<String> = self.mat.dis_hidden.iter().map(|h| h.to_string()).collect();
        kv.insert("mat.dis_hidden".into(), hidden.join("x"));
        kv.insert("mat.dis_dropout".into(), self.mat.dis_dropout.to_string());
        kv.insert("mat.leaky_slope".into(), self.mat.leaky_slope.to_string());
        kv.insert("mat.val_top_k".into(), self.mat.val_top_k.to_string());
        kv.insert("mat.csls_n".into(), self.mat.csls_n.to_string());
        kv.insert("mat.seed".into(), self.mat.seed.to_string());
        kv.insert("mpsr.epochs".into(), self.mpsr.epochs.to_string());
        kv.insert(
            "mpsr.steps_per_epoch".into(),
            self.mpsr.steps_per_epoch.to_string(),
        );
        kv.insert("mpsr.batch_size".into(), self.mpsr.batch_size.to_string());
        kv.insert("mpsr.lr".into(), self.mpsr.lr.to_string());
        kv.insert("mpsr.lr_decay".into(), self.mpsr.lr_decay.to_string());
        kv.insert("mpsr.lr_shrink".into(), self.mpsr.lr_shrink.to_string());
        kv.insert("mpsr.min_lr".into(), self.mpsr.min_lr.to_string());
        kv.insert(
            "mpsr.lexicon_cutoff".into(),
            self.mpsr.lexicon_cutoff.to_string(),
        );
        kv.insert("mpsr.csls_n".into(), self.mpsr.csls_n.to_string());
        kv.insert(
            "mpsr.reinduce_every_epoch".into(),
            self.mpsr.reinduce_every_epoch.to_string(),
        );
        kv.insert(
            "mpsr.min_lexicon_size".into(),
            self.mpsr.min_lexicon_size.to_string(),
        );
        kv.insert("mpsr.beta".into(), self.mpsr.beta.to_string());
        kv.insert("mpsr.update_clip".into(), self.mpsr.update_clip.to_string());
        kv.insert("mpsr.val_top_k".into(), self.mpsr.val_top_k.to_string());
        kv.insert("mpsr.seed".into(), self.mpsr.seed.to_string());

        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Apply one key=value assignment (config file line or flag override).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Argument(format!("bad value {v:?} for {key}")))
        }
        match key {
            "langs" => {
                self.langs = parse_lang_list(value)?;
            }
            "target" => self.target = value.to_string(),
            "mode" => self.mode = Mode::parse(value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = num(key, value)?,
            "max_vocab" => self.max_vocab = num(key, value)?,
            "skip_mpsr" => self.skip_mpsr = num(key, value)?,
            "dump_lexica" => self.dump_lexica = num(key, value)?,
            "train_dicts" => {
                self.train_dicts = parse_lang_list(value)?;
            }
            "mat.epochs" => self.mat.epochs = num(key, value)?,
            "mat.steps_per_epoch" => self.mat.steps_per_epoch = num(key, value)?,
            "mat.dis_steps" => self.mat.dis_steps = num(key, value)?,
            "mat.batch_size" => self.mat.batch_size = num(key, value)?,
            "mat.dis_lr" => self.mat.dis_lr = num(key, value)?,
            "mat.map_lr" => self.mat.map_lr = num(key, value)?,
            "mat.lr_decay" => self.mat.lr_decay = num(key, value)?,
            "mat.lr_shrink" => self.mat.lr_shrink = num(key, value)?,
            "mat.min_lr" => self.mat.min_lr = num(key, value)?,
            "mat.dis_sample_cutoff" => self.mat.dis_sample_cutoff = num(key, value)?,
            "mat.smoothing" => self.mat.smoothing = num(key, value)?,
            "mat.beta" => self.mat.beta = num(key, value)?,
            "mat.map_update_clip" => self.mat.map_update_clip = num(key, value)?,
            "mat.dis_hidden" => {
                self.mat.dis_hidden = value
                    .split('x')
                    .filter(|s| !s.is_empty())
                    .map(|s| num("mat.dis_hidden", s))
                    .collect::<Result<_>>()?;
            }
            "mat.dis_dropout" => self.mat.dis_dropout = num(key, value)?,
            "mat.leaky_slope" => self.mat.leaky_slope = num(key, value)?,
            "mat.val_top_k" => self.mat.val_top_k = num(key, value)?,
            "mat.csls_n" => self.mat.csls_n = num(key, value)?,
            "mat.seed" => self.mat.seed = num(key, value)?,
            "mpsr.epochs" => self.mpsr.epochs = num(key, value)?,
            "mpsr.steps_per_epoch" => self.mpsr.steps_per_epoch = num(key, value)?,
            "mpsr.batch_size" => self.mpsr.batch_size = num(key, value)?,
            "mpsr.lr" => self.mpsr.lr = num(key, value)?,
            "mpsr.lr_decay" => self.mpsr.lr_decay = num(key, value)?,
            "mpsr.lr_shrink" => self.mpsr.lr_shrink = num(key, value)?,
            "mpsr.min_lr" => self.mpsr.min_lr = num(key, value)?,
            "mpsr.lexicon_cutoff" => self.mpsr.lexicon_cutoff = num(key, value)?,
            "mpsr.csls_n" => self.mpsr.csls_n = num(key, value)?,
            "mpsr.reinduce_every_epoch" => self.mpsr.reinduce_every_epoch = num(key, value)?,
            "mpsr.min_lexicon_size" => self.mpsr.min_lexicon_size = num(key, value)?,
            "mpsr.beta" => self.mpsr.beta = num(key, value)?,
            "mpsr.update_clip" => self.mpsr.update_clip = num(key, value)?,
            "mpsr.val_top_k" => self.mpsr.val_top_k = num(key, value)?,
            "mpsr.seed" => self.mpsr.seed = num(key, value)?,
            other => {
                return Err(Error::Argument(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }
}

/// `code=path,code=path` lists used by --langs and --train-dict.
pub fn parse_lang_list(value: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for item in value.split(',').filter(|s| !s.is_empty()) {
        let (code, path) = item.split_once('=').ok_or_else(|| {
            Error::Argument(format!("expected code=path, found {item:?}"))
        })?;
        out.push((code.trim().to_string(), PathBuf::from(path.trim())));
    }
    Ok(out)
}

/// Flat key=value config file; '#' starts a comment.
pub fn parse_config_file(path: impl AsRef<Path>, cfg: &mut RunConfig) -> Result<()> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (i, raw) in content.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, i + 1, "expected key = value"))?;
        cfg.apply(key.trim(), value.trim())
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
    }
    Ok(())
}

pub struct TrainSummary {
    pub checkpoint: Option<PathBuf>,
    pub pair_checkpoints: Vec<PathBuf>,
    pub best_val: Option<f64>,
}

fn load_spaces(cfg: &RunConfig) -> Result<Vec<EmbeddingSpace>> {
    let mut spaces = Vec::with_capacity(cfg.langs.len());
    let mut dim = None;
    for (code, path) in &cfg.langs {
        let space = load_text_embeddings(code, path, Some(cfg.max_vocab))?;
        match dim {
            None => dim = Some(space.dim()),
            Some(d) if d != space.dim() => {
                return Err(Error::Argument(format!(
                    "{code} has dimension {}, expected {d}",
                    space.dim()
                )));
            }
            _ => {}
        }
        spaces.push(space);
    }
    Ok(spaces)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Train one pairwise model (a, b) with target b, derived seed, and both
/// stages unless `skip_mpsr`; returns the mapping for language a into b's
/// space.
fn train_pair_mapping(
    spaces: &[EmbeddingSpace],
    a: usize,
    b: usize,
    cfg: &RunConfig,
    pair_seed: u64,
) -> Result<Matrix> {
    let pair = vec![spaces[a].clone(), spaces[b].clone()];
    let mut mat_cfg = cfg.mat.clone();
    mat_cfg.seed = pair_seed;
    let mat = train_mat(&pair, 1, &mat_cfg)?;
    let mappings = if cfg.skip_mpsr {
        mat.mappings
    } else {
        let mut mpsr_cfg = cfg.mpsr.clone();
        mpsr_cfg.seed = pair_seed;
        train_mpsr(&pair, &mat.mappings, &mpsr_cfg)?.mappings
    };
    Ok(mappings.map(0).clone())
}

/// Run the whole training pipeline for `cfg` and write artifacts under its
/// output directory: checkpoint(s), per-epoch logs, and `manifest.cfg`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    write_file(&cfg.out_dir.join("manifest.cfg"), &cfg.to_manifest())?;

    let spaces = load_spaces(cfg)?;
    let target = cfg.target_index().expect("validated");
    let langs: Vec<String> = spaces.iter().map(|s| s.lang.clone()).collect();
    let dim = spaces[0].dim();

    match cfg.mode {
        Mode::Multilingual => {
            let mat = train_mat(&spaces, target, &cfg.mat)?;
            write_file(&cfg.out_dir.join("mat_log.csv"), &log_to_csv(&mat.log))?;
            let (mappings, best_val) = if cfg.skip_mpsr {
                (mat.mappings, mat.best_val)
            } else {
                let refined = train_mpsr(&spaces, &mat.mappings, &cfg.mpsr)?;
                write_file(
                    &cfg.out_dir.join("mpsr_log.csv"),
                    &mpsr_log_to_csv(&refined.log),
                )?;
                if cfg.dump_lexica {
                    for lex in &refined.lexica {
                        let i = langs.iter().position(|l| l == &lex.src_lang).unwrap();
                        let j = langs.iter().position(|l| l == &lex.tgt_lang).unwrap();
                        write_file(
                            &cfg.out_dir
                                .join(format!("lexicon_{}_{}.tsv", lex.src_lang, lex.tgt_lang)),
                            &lex.to_tsv(&spaces[i], &spaces[j]),
                        )?;
                    }
                }
                (refined.mappings, refined.best_val)
            };
            let ckpt = cfg.out_dir.join("best.ckpt");
            save_checkpoint(&mappings, &ckpt)?;
            Ok(TrainSummary {
                checkpoint: Some(ckpt),
                pair_checkpoints: Vec::new(),
                best_val: Some(best_val),
            })
        }
        Mode::Pivot => {
            // One pairwise run per non-pivot language, all into the pivot
            // space; the result is a single multilingual mapping set.
            let mut maps: Vec<Matrix> = (0..spaces.len()).map(|_| Matrix::identity(dim)).collect();
            let mut pair_idx = 0u64;
            for l in 0..spaces.len() {
                if l == target {
                    continue;
                }
                maps[l] = train_pair_mapping(&spaces, l, target, cfg, cfg.seed + pair_idx)?;
                pair_idx += 1;
            }
            let set = MappingSet::from_parts(langs, target, maps)?;
            let ckpt = cfg.out_dir.join("best.ckpt");
            save_checkpoint(&set, &ckpt)?;
            Ok(TrainSummary {
                checkpoint: Some(ckpt),
                pair_checkpoints: Vec::new(),
                best_val: None,
            })
        }
        Mode::Direct => {
            // An independent model per ordered pair; each checkpoint holds
            // the two languages of its pair with the destination as target.
            let mut pair_ckpts = Vec::new();
            let mut pair_idx = 0u64;
            for i in 0..spaces.len() {
                for j in 0..spaces.len() {
                    if i == j {
                        continue;
                    }
                    let m = train_pair_mapping(&spaces, i, j, cfg, cfg.seed + pair_idx)?;
                    pair_idx += 1;
                    let set = MappingSet::from_parts(
                        vec![langs[i].clone(), langs[j].clone()],
                        1,
                        vec![m, Matrix::identity(dim)],
                    )?;
                    let path = cfg
                        .out_dir
                        .join(format!("pair_{}_{}.ckpt", langs[i], langs[j]));
                    save_checkpoint(&set, &path)?;
                    pair_ckpts.push(path);
                }
            }
            Ok(TrainSummary {
                checkpoint: None,
                pair_checkpoints: pair_ckpts,
                best_val: None,
            })
        }
        Mode::SupervisedProcrustes => {
            let mut maps: Vec<Matrix> = (0..spaces.len()).map(|_| Matrix::identity(dim)).collect();
            for l in 0..spaces.len() {
                if l == target {
                    continue;
                }
                let (_, dict_path) = cfg
                    .train_dicts
                    .iter()
                    .find(|(c, _)| c == &langs[l])
                    .expect("validated");
                let dict = load_dictionary(dict_path, &langs[l], &langs[target])?;
                let mut x_rows = Vec::new();
                let mut y_rows = Vec::new();
                for (src, tgts) in dict.entries() {
                    let Some(sr) = spaces[l].vocab.rank(src) else {
                        continue;
                    };
                    for tgt in tgts {
                        let Some(tr) = spaces[target].vocab.rank(tgt) else {
                            continue;
                        };
                        x_rows.push(spaces[l].embedding(sr).to_vec());
                        y_rows.push(spaces[target].embedding(tr).to_vec());
                    }
                }
                if x_rows.is_empty() {
                    return Err(Error::Eval(format!(
                        "no in-vocabulary pairs in training dictionary for {}",
                        langs[l]
                    )));
                }
                let x = Matrix::from_rows(&x_rows)?;
                let y = Matrix::from_rows(&y_rows)?;
                maps[l] = procrustes_solve(x.as_ref(), y.as_ref())?;
            }
            let set = MappingSet::from_parts(langs, target, maps)?;
            let ckpt = cfg.out_dir.join("best.ckpt");
            save_checkpoint(&set, &ckpt)?;
            Ok(TrainSummary {
                checkpoint: Some(ckpt),
                pair_checkpoints: Vec::new(),
                best_val: None,
            })
        }
    }
}

pub struct EvalRequest {
    pub checkpoint: PathBuf,
    /// (code, path) for every language the evaluation touches.
    pub langs: Vec<(String, PathBuf)>,
    pub max_vocab: usize,
    /// Word-translation dictionaries: (src, tgt, path).
    pub dictionaries: Vec<(String, String, PathBuf)>,
    /// Similarity datasets: (lang1, lang2, path).
    pub similarity: Vec<(String, String, PathBuf)>,
    pub k_list: Vec<usize>,
    pub csls_n: usize,
    pub out_dir: Option<PathBuf>,
}

pub struct EvalOutcome {
    pub word_translation: Vec<PairPrecision>,
    pub word_translation_table: String,
    pub clws_table: String,
}

pub fn cmd_evaluate(req: &EvalRequest) -> Result<EvalOutcome> {
    if !req.checkpoint.exists() {
        return Err(Error::Argument(format!(
            "checkpoint not found: {}",
            req.checkpoint.display()
        )));
    }
    for (code, path) in &req.langs {
        if !path.exists() {
            return Err(Error::Argument(format!(
                "embedding file for {code} not found: {}",
                path.display()
            )));
        }
    }
    for (_, _, path) in req.dictionaries.iter().chain(req.similarity.iter()) {
        if !path.exists() {
            return Err(Error::Argument(format!("file not found: {}", path.display())));
        }
    }

    let mappings = load_checkpoint(&req.checkpoint)?;
    let mut spaces: Vec<EmbeddingSpace> = Vec::new();
    for (code, path) in &req.langs {
        if mappings.lang_index(code).is_none() {
            return Err(Error::Argument(format!(
                "language {code} is not part of the checkpoint ({:?})",
                mappings.langs()
            )));
        }
        let space = load_text_embeddings(code, path, Some(req.max_vocab))?;
        if space.dim() != mappings.dim() {
            return Err(Error::Argument(format!(
                "{code} embeddings are {}-dimensional, checkpoint is {}-dimensional",
                space.dim(),
                mappings.dim()
            )));
        }
        spaces.push(space);
    }
    let space_of = |code: &str| -> Result<&EmbeddingSpace> {
        spaces
            .iter()
            .find(|s| s.lang == code)
            .ok_or_else(|| Error::Argument(format!("no embeddings given for {code}")))
    };

    let mut pairs = Vec::new();
    let mut wt_csv = String::from("src,tgt,k,precision,coverage\n");
    for (src, tgt, path) in &req.dictionaries {
        let dict = load_dictionary(path, src, tgt)?;
        let s = space_of(src)?;
        let t = space_of(tgt)?;
        let report = word_translation_precision(
            &dict,
            s,
            t,
            mappings.map(mappings.lang_index(src).unwrap()),
            mappings.map(mappings.lang_index(tgt).unwrap()),
            &req.k_list,
            req.csls_n,
        )?;
        for &(k, p) in &report.per_k {
            let _ = writeln!(wt_csv, "{src},{tgt},{k},{p},{}", report.coverage);
        }
        pairs.push(PairPrecision {
            src: src.clone(),
            tgt: tgt.clone(),
            precision: report.precision_at(req.k_list[0]).unwrap_or(0.0),
            coverage: report.coverage,
        });
    }
    let wt_table = if pairs.is_empty() {
        String::new()
    } else {
        precision_summary_table(&pairs)
    };

    let mut clws_csv = String::from("lang1,lang2,rho,coverage\n");
    let mut clws_table = String::new();
    if !req.similarity.is_empty() {
        let _ = writeln!(clws_table, "{:<16} {:>8} {:>10}", "pair", "rho", "coverage");
        for (l1, l2, path) in &req.similarity {
            let ds = load_similarity_dataset(path, l1, l2)?;
            let report = evaluate_clws(
                &ds,
                space_of(l1)?,
                space_of(l2)?,
                mappings.map(mappings.lang_index(l1).unwrap()),
                mappings.map(mappings.lang_index(l2).unwrap()),
            )?;
            let _ = writeln!(clws_csv, "{l1},{l2},{},{}", report.rho, report.coverage);
            let _ = writeln!(
                clws_table,
                "{:<16} {:>8.4} {:>10.4}",
                format!("{l1}-{l2}"),
                report.rho,
                report.coverage
            );
        }
    }

    if let Some(dir) = &req.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if !pairs.is_empty() {
            write_file(&dir.join("word_translation.csv"), &wt_csv)?;
            write_file(&dir.join("word_translation.txt"), &wt_table)?;
        }
        if !req.similarity.is_empty() {
            write_file(&dir.join("clws.csv"), &clws_csv)?;
            write_file(&dir.join("clws.txt"), &clws_table)?;
        }
    }

    Ok(EvalOutcome {
        word_translation: pairs,
        word_translation_table: wt_table,
        clws_table,
    })
}

pub struct TranslateRequest {
    pub checkpoint: PathBuf,
    pub src: String,
    pub tgt: String,
    pub src_embeddings: PathBuf,
    pub tgt_embeddings: PathBuf,
    pub max_vocab: usize,
    pub k: usize,
    pub csls_n: usize,
}

/// Read words (one per line) from `input`, write TSV
/// `word<TAB>cand1<TAB>score1...` lines to `output`; OOV words produce
/// `word<TAB><OOV>`.
pub fn cmd_translate(
    req: &TranslateRequest,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<()> {
    let mappings = load_checkpoint(&req.checkpoint)?;
    let src_idx = mappings
        .lang_index(&req.src)
        .ok_or_else(|| Error::Argument(format!("{} not in checkpoint", req.src)))?;
    let tgt_idx = mappings
        .lang_index(&req.tgt)
        .ok_or_else(|| Error::Argument(format!("{} not in checkpoint", req.tgt)))?;
    let src_space = load_text_embeddings(&req.src, &req.src_embeddings, Some(req.max_vocab))?;
    let tgt_space = load_text_embeddings(&req.tgt, &req.tgt_embeddings, Some(req.max_vocab))?;

    let mapped_src = src_space.matrix.matmul_nt(mappings.map(src_idx))?;
    let mapped_tgt = tgt_space.matrix.matmul_nt(mappings.map(tgt_idx))?;
    let n = req
        .csls_n
        .min(mapped_src.rows())
        .min(mapped_tgt.rows())
        .max(1);
    let k = req.k.min(mapped_tgt.rows()).max(1);
    let r_src = mean_topk_cosine(mapped_src.as_ref(), mapped_tgt.as_ref(), n)?;
    let r_tgt = mean_topk_cosine(mapped_tgt.as_ref(), mapped_src.as_ref(), n)?;

    let mut line = String::new();
    loop {
        line.clear();
        let read = input
            .read_line(&mut line)
            .map_err(|e| Error::io("<stdin>", e))?;
        if read == 0 {
            break;
        }
        let word = line.trim();
        if word.is_empty() {
            continue;
        }
        let Some(rank) = src_space.vocab.rank(word) else {
            writeln!(output, "{word}\t<OOV>").map_err(|e| Error::io("<stdout>", e))?;
            continue;
        };
        let mut query = Matrix::zeros(1, mapped_src.cols());
        query.row_mut(0).copy_from_slice(mapped_src.row(rank));
        let neighbors = csls_topk_with(
            query.as_ref(),
            mapped_tgt.as_ref(),
            n,
            k,
            Some(vec![r_src[rank]]),
            Some(r_tgt.clone()),
        )?;
        let mut out_line = String::from(word);
        for (idx, score) in neighbors[0].indices.iter().zip(&neighbors[0].scores) {
            let _ = write!(out_line, "\t{}\t{:.6}", tgt_space.vocab.word(*idx), score);
        }
        writeln!(output, "{out_line}").map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}
