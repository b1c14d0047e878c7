use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use slt_core::align::{align_all, normalize_gloss, AlignMethod, GlossCandidate, HomonymLexicon, SubstitutionTable, homonym_scan};
use slt_core::augment::{augment_corpus, AugmentConfig};
use slt_core::bodyparts::{build_variant, CropSet, StreamVariant};
use slt_core::corpus::{
    build_vocabularies, generate_synthetic_corpus, load_corpus, split_corpus, write_corpus, SampleRecord,
    SyntheticSpec,
};
use slt_core::metrics::corpus_report;
use slt_core::nn::{
    finetune_load, predict, prepare_examples, token_logprobs, train, Checkpoint, DecodeMode, EpochLog,
    FinetunePolicy, FreezeSchedule, Hyperparameters, ModelConfig, TrainOptions, TransformerModel,
};

use crate::config::{check_sections, ConfigFile, Resolver};
use crate::staging::Staging;
use crate::{AlignArgs, AugmentArgs, Cli, CliError, Command, EvaluateArgs, FinetuneArgs, HomonymsArgs, HpArgs,
    PrepareArgs, SynthArgs, TrainArgs};

const DEFAULT_SEED: u64 = 42;

struct Run<'a> {
    r: Resolver<'a>,
    seed: u64,
    out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    check_sections(&file)?;
    let section = match &cli.command {
        Command::Synth(_) => "synth",
        Command::Prepare(_) => "prepare",
        Command::Augment(_) => "augment",
        Command::Align(_) => "align",
        Command::Train(_) => "train",
        Command::Finetune(_) => "finetune",
        Command::Evaluate(_) => "evaluate",
        Command::Homonyms(_) => "homonyms",
    };
    let mut r = Resolver::new(&file, section);
    let seed = r.global("seed", cli.seed, DEFAULT_SEED)?;
    let out: Option<PathBuf> = r.global("out", cli.out.map(Some), None)?;
    let out = out.ok_or_else(|| CliError::Usage("missing `--out` (or `out` in the config file)".into()))?;
    let mut run = Run { r, seed, out };
    match &cli.command {
        Command::Synth(a) => synth(&mut run, a),
        Command::Prepare(a) => prepare(&mut run, a),
        Command::Augment(a) => augment(&mut run, a),
        Command::Align(a) => align(&mut run, a),
        Command::Train(a) => cmd_train(&mut run, a),
        Command::Finetune(a) => finetune(&mut run, a),
        Command::Evaluate(a) => evaluate(&mut run, a),
        Command::Homonyms(a) => homonyms(&mut run, a),
    }
}

fn input(path: PathBuf) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Usage(format!("input {} does not exist", path.display())))
    }
}

impl Run<'_> {
    fn input(&mut self, key: &str, cli: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        input(self.r.required(key, cli.clone())?)
    }

    /// Validates the config, then opens the staging area and records the settings.
    fn begin(&self) -> Result<Staging, CliError> {
        self.r.finish()?;
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", self.out.display())))?;
        let staging = Staging::new(&self.out)?;
        staging.write_json("run_config.json", &self.r.effective)?;
        Ok(staging)
    }
}

fn synth(run: &mut Run, a: &SynthArgs) -> Result<(), CliError> {
    let r = &mut run.r;
    let samples = r.get("samples", a.samples, 20)?;
    let pairs = r.get("pairs", a.pairs, 2)?;
    if pairs > 2 {
        return Err(CliError::Usage(format!("--pairs must be 0, 1 or 2, got {pairs}")));
    }
    let mut spec = SyntheticSpec::weather(pairs, samples);
    spec.height = r.get("height", a.height, spec.height)?;
    spec.width = r.get("width", a.width, spec.width)?;
    spec.noise = r.get("noise", a.noise, spec.noise)?;
    spec.frames_per_gloss = r.get("frames_per_gloss", a.frames_per_gloss, spec.frames_per_gloss)?;
    spec.signers = r.get("signers", a.signers, spec.signers)?;
    let staging = run.begin()?;
    eprintln!("generating {samples} synthetic records");
    let records = generate_synthetic_corpus(&spec, run.seed)?;
    write_corpus(&records, staging.dir())?;
    staging.commit()
}

fn prepare(run: &mut Run, a: &PrepareArgs) -> Result<(), CliError> {
    let manifest = run.input("manifest", &a.manifest)?;
    let variant: String = run.r.get("variant", a.variant.clone(), "baseline".into())?;
    let variant: StreamVariant = variant.parse().map_err(|e: slt_core::Error| CliError::Usage(e.to_string()))?;
    let box_width = run.r.opt("box_width", a.box_width)?;
    let box_height = run.r.opt("box_height", a.box_height)?;
    let mouth_offset = run.r.opt("mouth_offset", a.mouth_offset)?;
    let records = load_corpus(&manifest)?;
    let Some(first) = records.first() else {
        return Err(CliError::Usage(format!("{} holds no records", manifest.display())));
    };
    let (h, w, _) = first.frames[0].dims();
    let default = CropSet::default_for(h, w);
    let crops = CropSet::uniform(
        box_width.unwrap_or(default.mouth.box_width),
        box_height.unwrap_or(default.mouth.box_height),
        mouth_offset.unwrap_or(default.mouth.mouth_y_offset),
    );
    let staging = run.begin()?;
    eprintln!("building {variant} streams for {} records", records.len());
    let processed = records
        .iter()
        .map(|rec| build_variant(rec, variant, &crops))
        .collect::<slt_core::Result<Vec<_>>>()?;
    write_corpus(&processed, staging.dir())?;
    staging.commit()
}

fn augment(run: &mut Run, a: &AugmentArgs) -> Result<(), CliError> {
    let manifest = run.input("manifest", &a.manifest)?;
    let split_first = run.r.flag("split_first", a.split_first)?;
    let cfg = AugmentConfig {
        contrast_factor: run.r.get("contrast_factor", a.contrast_factor, AugmentConfig::default().contrast_factor)?,
        enabled: true,
    };
    cfg.validate()?;
    let records = load_corpus(&manifest)?;
    let staging = run.begin()?;
    if split_first {
        let split = split_corpus(&records, run.seed)?;
        let train = augment_corpus(&split.train, &cfg)?;
        eprintln!(
            "split {} records into train {} (augmented to {}), dev {}, test {}",
            records.len(),
            split.train.len(),
            train.len(),
            split.dev.len(),
            split.test.len()
        );
        write_corpus(&train, staging.path("train"))?;
        write_corpus(&split.dev, staging.path("dev"))?;
        write_corpus(&split.test, staging.path("test"))?;
    } else {
        let out = augment_corpus(&records, &cfg)?;
        eprintln!("augmented {} records to {}", records.len(), out.len());
        write_corpus(&out, staging.dir())?;
    }
    staging.commit()
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

fn align(run: &mut Run, a: &AlignArgs) -> Result<(), CliError> {
    let glosses = run.input("glosses", &a.glosses)?;
    let candidates = run.input("candidates", &a.candidates)?;
    let method: String = run.r.get("method", a.method.clone(), "bleu".into())?;
    let method = match method.as_str() {
        "wordset" => AlignMethod::Wordset,
        "bleu" => AlignMethod::Bleu,
        m => return Err(CliError::Usage(format!("unknown method `{m}` (expected wordset or bleu)"))),
    };
    let subst = run.r.opt("subst", a.subst.clone())?.map(input).transpose()?;
    let table = match &subst {
        Some(p) => SubstitutionTable::load(p)?,
        None => SubstitutionTable::new(Vec::new())?,
    };
    let originals: Vec<Vec<String>> = read_lines(&glosses)?.iter().map(|l| normalize_gloss(l)).collect();
    let pool = read_lines(&candidates)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let (g, t) = l.split_once('\t').ok_or_else(|| {
                CliError::Core(slt_core::Error::Parse {
                    line: i + 1,
                    message: "expected `gloss<TAB>text`".into(),
                })
            })?;
            Ok(GlossCandidate::new(normalize_gloss(g), t.split_whitespace().map(str::to_string).collect())?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let staging = run.begin()?;
    let pairs = align_all(&originals, &pool, method, &table)?;
    let mut lines = String::new();
    for p in &pairs {
        lines.push_str(&serde_json::to_string(p).map_err(slt_core::Error::from)?);
        lines.push('\n');
    }
    staging.write("aligned.jsonl", lines)?;
    eprintln!("aligned {} gloss sequences against {} candidates", pairs.len(), pool.len());
    staging.commit()
}

fn parse_freeze(specs: &[String]) -> Result<FreezeSchedule, CliError> {
    let entries = specs
        .iter()
        .map(|s| {
            let bad = || CliError::Usage(format!("freeze spec `{s}` is not EPOCH:PREFIX[,PREFIX...]"));
            let (e, prefixes) = s.split_once(':').ok_or_else(bad)?;
            let epoch = e.trim().parse().map_err(|_| bad())?;
            let prefixes: Vec<String> = prefixes.split(',').map(|p| p.trim().to_string()).collect();
            Ok((epoch, prefixes))
        })
        .collect::<Result<_, CliError>>()?;
    Ok(FreezeSchedule::new(entries))
}

struct TrainSettings {
    hp: Hyperparameters,
    opts: TrainOptions,
}

fn resolve_hp(run: &mut Run, a: &HpArgs, base: Hyperparameters) -> Result<TrainSettings, CliError> {
    let r = &mut run.r;
    let hp = Hyperparameters {
        epochs: r.get("epochs", a.epochs, base.epochs)?,
        hidden_dim: r.get("hidden", a.hidden, base.hidden_dim)?,
        batch_size: r.get("batch", a.batch, base.batch_size)?,
        learning_rate: r.get("lr", a.lr, base.learning_rate)?,
        num_layers: r.get("layers", a.layers, base.num_layers)?,
        num_heads: r.get("heads", a.heads, base.num_heads)?,
        dropout: r.get("dropout", a.dropout, base.dropout)?,
        lambda_rec: r.get("lambda_rec", a.lambda_rec, base.lambda_rec)?,
        lambda_trans: r.get("lambda_trans", a.lambda_trans, base.lambda_trans)?,
        seed: run.seed,
    };
    let allow_offgrid = r.flag("allow_offgrid", a.allow_offgrid)?;
    let record_timing = r.flag("record_timing", a.record_timing)?;
    let freeze: Vec<String> = r.get("freeze", (!a.freeze.is_empty()).then(|| a.freeze.clone()), Vec::new())?;
    hp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let off = hp.grid_violations();
    if !off.is_empty() && !allow_offgrid {
        return Err(CliError::Usage(format!(
            "hyperparameters outside the explored grid: {}; pass --allow-offgrid to accept",
            off.join("; ")
        )));
    }
    Ok(TrainSettings {
        hp,
        opts: TrainOptions {
            freeze: parse_freeze(&freeze)?,
            no_timing: !record_timing,
        },
    })
}

fn frame_dims(records: &[SampleRecord]) -> Result<(usize, usize, usize), CliError> {
    let dims = records
        .first()
        .map(|r| r.frames[0].dims())
        .ok_or_else(|| CliError::Usage("training corpus is empty".into()))?;
    if let Some(r) = records.iter().find(|r| r.frames[0].dims() != dims) {
        return Err(CliError::Usage(format!("record `{}` has frames of a different size", r.name)));
    }
    Ok(dims)
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<String, CliError> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).map_err(slt_core::Error::from)?);
        s.push('\n');
    }
    Ok(s)
}

/// Shared tail of `train` and `finetune`: fit, then save the best-dev model and the log.
fn fit_and_save(
    staging: &Staging,
    settings: &TrainSettings,
    model: &mut TransformerModel,
    train_recs: &[SampleRecord],
    dev_recs: &[SampleRecord],
    vocabs: &(slt_core::corpus::GlossVocabulary, slt_core::corpus::TextVocabulary),
) -> Result<(), CliError> {
    let pool = model.config().pool;
    let tr = prepare_examples(train_recs, &vocabs.0, &vocabs.1, pool)?;
    let dv = prepare_examples(dev_recs, &vocabs.0, &vocabs.1, pool)?;
    let epochs = settings.hp.epochs;
    let outcome = train(&tr, &dv, &settings.hp, model, &settings.opts, |e: &EpochLog| {
        match e.dev_ppl {
            Some(p) => eprintln!("epoch {}/{epochs}: train loss {:.4}, dev ppl {p:.3}", e.epoch, e.train_loss),
            None => eprintln!("epoch {}/{epochs}: train loss {:.4}", e.epoch, e.train_loss),
        }
    })?;
    model.params.copy_values_from(&outcome.best)?;
    eprintln!("keeping epoch {}", outcome.best_epoch);
    let ckpt = Checkpoint::from_model(model, &vocabs.0, &vocabs.1, &settings.hp);
    ckpt.save(&staging.path("model.sltc"))?;
    staging.write("train_log.jsonl", jsonl(&outcome.log)?)?;
    Ok(())
}

struct TrainInputs {
    manifest: PathBuf,
    dev: Option<PathBuf>,
}

impl TrainInputs {
    fn resolve(run: &mut Run, a: &TrainArgs) -> Result<Self, CliError> {
        Ok(Self {
            manifest: run.input("manifest", &a.manifest)?,
            dev: run.r.opt("dev", a.dev.clone())?.map(input).transpose()?,
        })
    }

    fn load(&self) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>), CliError> {
        let dev = match &self.dev {
            Some(p) => load_corpus(p)?,
            None => Vec::new(),
        };
        Ok((load_corpus(&self.manifest)?, dev))
    }
}

fn cmd_train(run: &mut Run, a: &TrainArgs) -> Result<(), CliError> {
    let inputs = TrainInputs::resolve(run, a)?;
    let settings = resolve_hp(run, &a.hp, Hyperparameters::default())?;
    let (train_recs, dev_recs) = inputs.load()?;
    let dims = frame_dims(&train_recs)?;
    let vocabs = build_vocabularies(&train_recs)?;
    let config = ModelConfig::new(dims, &settings.hp, vocabs.0.len(), vocabs.1.len());
    let mut model = TransformerModel::new(config, settings.hp.seed)?;
    settings.opts.freeze.validate(&model.params)?;
    let staging = run.begin()?;
    eprintln!(
        "training on {} records ({} dev), {} parameters",
        train_recs.len(),
        dev_recs.len(),
        model.params.num_values()
    );
    fit_and_save(&staging, &settings, &mut model, &train_recs, &dev_recs, &vocabs)?;
    staging.commit()
}

fn finetune(run: &mut Run, a: &FinetuneArgs) -> Result<(), CliError> {
    let ckpt_path = run.input("checkpoint", &a.checkpoint)?;
    let reinit: Vec<String> = run.r.get("reinit", (!a.reinit.is_empty()).then(|| a.reinit.clone()), Vec::new())?;
    let inputs = TrainInputs::resolve(run, &a.train)?;
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let settings = resolve_hp(run, &a.train.hp, ckpt.meta.hyperparameters.clone())?;
    let (train_recs, dev_recs) = inputs.load()?;
    let dims = frame_dims(&train_recs)?;
    let vocabs = build_vocabularies(&train_recs)?;
    let mut config = ModelConfig::new(dims, &settings.hp, vocabs.0.len(), vocabs.1.len());
    config.pool = ckpt.meta.model.pool;
    if config.hidden_dim == ckpt.meta.model.hidden_dim {
        config.ff_dim = ckpt.meta.model.ff_dim;
    }
    let mut model = TransformerModel::new(config, settings.hp.seed)?;
    settings.opts.freeze.validate(&model.params)?;
    let staging = run.begin()?;
    let report = finetune_load(&ckpt, &mut model, &FinetunePolicy { reinit_prefixes: reinit, seed: run.seed })?;
    eprintln!(
        "copied {} parameters, reinitialized {}",
        report.copied.len(),
        report.reinitialized.len()
    );
    staging.write_json("finetune_report.json", &report)?;
    fit_and_save(&staging, &settings, &mut model, &train_recs, &dev_recs, &vocabs)?;
    staging.commit()
}

#[derive(Serialize)]
struct Hypothesis<'a> {
    name: &'a str,
    gloss: Vec<String>,
    text: Vec<String>,
    reference: &'a [String],
}

fn evaluate(run: &mut Run, a: &EvaluateArgs) -> Result<(), CliError> {
    let ckpt_path = run.input("checkpoint", &a.checkpoint)?;
    let manifest = run.input("manifest", &a.manifest)?;
    let beam = run.r.get("beam", a.beam, 1)?;
    let max_len = run.r.get("max_len", a.max_len, 30)?;
    if beam == 0 || max_len == 0 {
        return Err(CliError::Usage("--beam and --max-len must be at least 1".into()));
    }
    let mode = if beam == 1 { DecodeMode::Greedy } else { DecodeMode::Beam { width: beam } };
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let model = ckpt.to_model()?;
    let (gv, tv) = (&ckpt.meta.gloss_vocab, &ckpt.meta.text_vocab);
    let records = load_corpus(&manifest)?;
    let staging = run.begin()?;
    let examples = prepare_examples(&records, gv, tv, model.config().pool)?;
    let mut pairs = Vec::with_capacity(records.len());
    let mut hyps = Vec::with_capacity(records.len());
    let mut logprobs = Vec::new();
    for (i, (rec, ex)) in records.iter().zip(&examples).enumerate() {
        let p = predict(&model, ex, mode, max_len)?;
        logprobs.extend(token_logprobs(&model, ex)?);
        let text = tv.decode(&p.text);
        pairs.push((text.clone(), rec.text.clone()));
        hyps.push(Hypothesis {
            name: &rec.name,
            gloss: gv.decode(&p.gloss),
            text,
            reference: &rec.text,
        });
        if (i + 1) % 50 == 0 {
            eprintln!("decoded {}/{}", i + 1, records.len());
        }
    }
    let report = corpus_report(&pairs, &logprobs)?;
    eprintln!(
        "BLEU-1 {:.2}  BLEU-4 {:.2}  ROUGE-L {:.2}  chrF {:.2}  PPL {:.3}",
        report.bleu1, report.bleu4, report.rouge_l_f1, report.chrf, report.ppl
    );
    staging.write_json("metrics.json", &report)?;
    staging.write("hypotheses.jsonl", jsonl(&hyps)?)?;
    staging.commit()
}

fn homonyms(run: &mut Run, a: &HomonymsArgs) -> Result<(), CliError> {
    let manifest = run.input("manifest", &a.manifest)?;
    let lexicon = run.input("lexicon", &a.lexicon)?;
    let lexicon = HomonymLexicon::load(&lexicon)?;
    let records = load_corpus(&manifest)?;
    let staging = run.begin()?;
    let report = homonym_scan(&records, &lexicon);
    eprintln!(
        "{} of {} records contain homonyms ({:.1}%)",
        report.flagged,
        report.records,
        100.0 * report.fraction
    );
    staging.write_json("homonyms.json", &report)?;
    staging.commit()
}
