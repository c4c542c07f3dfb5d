use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use mwqa_core::corpus::{self, default_plan, QAPair, Scope};
use mwqa_core::dcs::Answer;
use mwqa_core::evaluation::{accuracy_score, default_thresholds, wup, wups_curve, Taxonomy};
use mwqa_core::parser::{
    answer_multi_world, answer_single_world, build_lexicon, train, ParserModel, TrainConfig,
    TrainExample, Vocabulary,
};
use mwqa_core::scene::{SceneFact, World, DEFAULT_EPS};
use mwqa_core::worlds::{
    build_training_world, most_confident_world, sample_worlds, tfidf_select_batches, FactBatch,
    FactSet, SegmentScene, DEFAULT_K_BATCHES, DEFAULT_N_WORLDS,
};

/// Question answering over symbolic scene worlds.
#[derive(Parser)]
#[command(name = "mwqa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate template question-answer pairs from a ground-truth world.
    GenSynthetic(GenArgs),
    /// Train a parser model from question-answer pairs.
    Train(TrainArgs),
    /// Answer questions with a trained model.
    Answer(AnswerArgs),
    /// Score predicted answers against gold answers.
    Eval(EvalArgs),
    /// Sample possible worlds from a segmentation file.
    SampleWorlds(SampleArgs),
    /// Print the WUP similarity of two terms.
    Wup(WupArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Single,
    Multi,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WorldSource {
    /// Annotated facts (`--facts`, `--scenes`).
    Human,
    /// The most confident world of a segmentation (`--segmentations`).
    Auto,
}

/// Where the scene facts come from.
#[derive(Args, Clone)]
struct WorldArgs {
    /// Fact file of annotated objects.
    #[arg(long)]
    facts: Option<PathBuf>,
    /// Scene file with one room type per image.
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Segmentation file with per-segment label distributions.
    #[arg(long)]
    segmentations: Option<PathBuf>,
    /// File of image ids; facts of other images are dropped.
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    facts: Option<PathBuf>,
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Generate a random ground-truth world with this many images instead of reading one.
    #[arg(long, conflicts_with = "facts")]
    random_scenes: Option<usize>,
    /// Where to write the random world's facts.
    #[arg(long, requires = "random_scenes")]
    facts_out: Option<PathBuf>,
    /// Where to write the random world's scenes.
    #[arg(long, requires = "random_scenes")]
    scenes_out: Option<PathBuf>,
    /// Image ids the training questions are drawn from (default: all).
    #[arg(long)]
    train_split: Option<PathBuf>,
    /// Image ids the test questions are drawn from (default: all).
    #[arg(long)]
    test_split: Option<PathBuf>,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    qa: PathBuf,
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long, value_enum, default_value_t = WorldSource::Human)]
    world_source: WorldSource,
    #[arg(long)]
    model_out: PathBuf,
    /// Per-epoch log: epoch, objective, accuracy, unreachable examples.
    #[arg(long)]
    log_out: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = 200)]
    beam_size: usize,
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, default_value_t = 1)]
    inner_steps: usize,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Train each single-image question on a world built from the k most
    /// similar images; 0 uses the whole world.
    #[arg(long, default_value_t = DEFAULT_K_BATCHES)]
    k_batches: usize,
}

#[derive(Args)]
struct AnswerArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    qa: PathBuf,
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long, value_enum, default_value_t = Mode::Single)]
    mode: Mode,
    #[arg(long, default_value_t = DEFAULT_N_WORLDS)]
    n_worlds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Write answers here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted answers, one per line.
    #[arg(long)]
    preds: PathBuf,
    /// QA file holding the gold answers.
    #[arg(long)]
    qa: PathBuf,
    /// Noun taxonomy (`child TAB parent`); without it only accuracy is reported.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Comma-separated WUPS thresholds to print.
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.0")]
    thresholds: Vec<f64>,
    /// Write the full WUPS curve (t = 0.00 … 1.00) here.
    #[arg(long, requires = "taxonomy")]
    curve_out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    segmentations: PathBuf,
    #[arg(long)]
    scenes: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_N_WORLDS)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct WupArgs {
    a: String,
    b: String,
    #[arg(long)]
    taxonomy: PathBuf,
}

fn write_output(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn load_split(path: &Option<PathBuf>) -> Result<Option<BTreeSet<String>>> {
    path.as_ref()
        .map(|p| Ok(corpus::load_split(p)?.into_iter().collect()))
        .transpose()
}

fn restrict_world(world: World, images: &Option<BTreeSet<String>>) -> Result<World> {
    let Some(images) = images else {
        return Ok(world);
    };
    let objects = world
        .objects()
        .iter()
        .filter(|o| images.contains(&o.image_id))
        .cloned()
        .collect();
    let scenes = world
        .scenes()
        .iter()
        .filter(|s| images.contains(&s.image_id))
        .cloned()
        .collect();
    Ok(World::new(objects, scenes, world.log_weight())?)
}

fn load_scene_facts(path: &Option<PathBuf>) -> Result<Vec<SceneFact>> {
    Ok(match path {
        Some(p) => corpus::load_scenes(p)?,
        None => Vec::new(),
    })
}

fn load_annotated(args: &WorldArgs) -> Result<World> {
    let facts = args
        .facts
        .as_ref()
        .context("--facts is required for annotated worlds")?;
    let objects = corpus::load_facts(facts)?.objects;
    let world = World::new(objects, load_scene_facts(&args.scenes)?, 0.0)?;
    restrict_world(world, &load_split(&args.split)?)
}

fn load_segment_scene(args: &WorldArgs) -> Result<SegmentScene> {
    let path = args
        .segmentations
        .as_ref()
        .context("--segmentations is required")?;
    let mut segments = corpus::load_segmentations(path)?;
    let mut scenes = load_scene_facts(&args.scenes)?;
    if let Some(images) = load_split(&args.split)? {
        segments.retain(|s| images.contains(&s.image_id));
        scenes.retain(|s| images.contains(&s.image_id));
    }
    Ok(SegmentScene::new(segments, scenes))
}

fn segment_vocabulary(scene: &SegmentScene) -> Vocabulary {
    Vocabulary {
        categories: scene
            .segments
            .iter()
            .flat_map(|s| s.labels.iter().map(|(c, _)| c.clone()))
            .collect(),
        colors: scene.segments.iter().map(|s| s.color.clone()).collect(),
        room_types: scene.scenes.iter().map(|s| s.room_type.clone()).collect(),
    }
}

fn gen_synthetic(args: GenArgs) -> Result<()> {
    let world = match (args.random_scenes, &args.facts) {
        (Some(n), _) => {
            let world = corpus::random_scene_world(n, args.seed)?;
            if let Some(p) = &args.facts_out {
                corpus::save_facts(p, world.objects(), None)?;
            }
            if let Some(p) = &args.scenes_out {
                corpus::save_scenes(p, world.scenes())?;
            }
            world
        }
        (None, Some(facts)) => World::new(
            corpus::load_facts(facts)?.objects,
            load_scene_facts(&args.scenes)?,
            0.0,
        )?,
        (None, None) => bail!("either --facts or --random-scenes is required"),
    };
    let train_world = restrict_world(world.clone(), &load_split(&args.train_split)?)?;
    let test_world = restrict_world(world, &load_split(&args.test_split)?)?;
    let train_pairs = corpus::generate_synthetic_qa(
        &train_world,
        &default_plan(true),
        args.seed.wrapping_mul(2),
    )?;
    let test_pairs = corpus::generate_synthetic_qa(
        &test_world,
        &default_plan(false),
        args.seed.wrapping_mul(2) + 1,
    )?;
    corpus::save_qa(&args.train_out, &train_pairs)?;
    corpus::save_qa(&args.test_out, &test_pairs)?;
    info!(
        "wrote {} training and {} test pairs",
        train_pairs.len(),
        test_pairs.len()
    );
    Ok(())
}

fn training_world(args: &TrainArgs) -> Result<(World, Vocabulary)> {
    Ok(match args.world_source {
        WorldSource::Human => {
            let w = load_annotated(&args.world)?;
            let v = Vocabulary::from_world(&w);
            (w, v)
        }
        WorldSource::Auto => {
            let scene = load_segment_scene(&args.world)?;
            (most_confident_world(&scene)?, segment_vocabulary(&scene))
        }
    })
}

fn batch_worlds(pairs: &[QAPair], world: &Arc<World>, k: usize) -> Result<Vec<Arc<World>>> {
    if k == 0 {
        return Ok(vec![world.clone(); pairs.len()]);
    }
    let batches = corpus::group_by_image(world.objects(), world.scenes());
    let corpus: Vec<FactBatch> = batches
        .iter()
        .map(|(id, f)| FactBatch::from_facts(id.clone(), f))
        .collect();
    pairs
        .iter()
        .map(|p| match &p.scope {
            Scope::Image(img) if batches.contains_key(img) => {
                let query = FactBatch::from_facts(img.clone(), &batches[img]);
                let picked = tfidf_select_batches(&query, &corpus, k)?;
                let mut selected: Vec<&FactSet> = vec![&batches[img]];
                selected.extend(
                    picked
                        .ids
                        .iter()
                        .filter(|id| *id != img)
                        .map(|id| &batches[id]),
                );
                selected.truncate(k.max(1));
                Ok(Arc::new(build_training_world(&selected)?))
            }
            _ => Ok(world.clone()),
        })
        .collect()
}

fn run_train(args: TrainArgs) -> Result<()> {
    let pairs = corpus::load_qa(&args.qa)?;
    let (world, vocab) = training_world(&args)?;
    let world = Arc::new(world);
    let worlds = batch_worlds(&pairs, &world, args.k_batches)?;
    let lexicon = build_lexicon(pairs.iter().map(|p| p.question.as_str()), &vocab);
    let examples: Vec<TrainExample> = pairs
        .iter()
        .zip(worlds)
        .map(|(p, w)| TrainExample {
            question: p.question.clone(),
            gold: p.gold.clone(),
            world: w,
        })
        .collect();
    let config = TrainConfig {
        epochs: args.epochs,
        step: args.step,
        l2: args.l2,
        beam_size: args.beam_size,
        max_depth: args.max_depth,
        eps: args.eps,
        inner_steps: args.inner_steps,
    };
    let out = train(&examples, lexicon, &config)?;
    out.model.save(&args.model_out)?;
    if let Some(p) = &args.log_out {
        let mut log = String::from("epoch\tobjective\taccuracy\tunreachable\n");
        for s in &out.trace {
            writeln!(
                log,
                "{}\t{:.6}\t{:.2}\t{}",
                s.epoch,
                s.objective,
                100.0 * s.accuracy,
                s.unreachable
            )?;
        }
        write_output(p, &log)?;
    }
    if let Some(last) = out.trace.last() {
        info!("final training accuracy {:.2}", 100.0 * last.accuracy);
    }
    Ok(())
}

fn run_answer(args: AnswerArgs) -> Result<()> {
    let mut model = ParserModel::load(&args.model)?;
    let pairs = corpus::load_qa(&args.qa)?;
    let answers: Vec<Answer> = match (args.mode, &args.world.segmentations) {
        (Mode::Multi, None) => bail!("--mode multi needs --segmentations"),
        (Mode::Multi, Some(_)) => {
            if args.n_worlds == 0 {
                bail!("--n-worlds must be positive");
            }
            let scene = load_segment_scene(&args.world)?;
            model.lexicon.add_vocabulary(&segment_vocabulary(&scene));
            let worlds = sample_worlds(&scene, args.n_worlds, args.seed)?;
            pairs
                .iter()
                .map(|p| Ok(answer_multi_world(&model, &p.question, &worlds, args.eps)?.answer))
                .collect::<Result<_>>()?
        }
        (Mode::Single, seg) => {
            let world = if seg.is_some() {
                let scene = load_segment_scene(&args.world)?;
                model.lexicon.add_vocabulary(&segment_vocabulary(&scene));
                most_confident_world(&scene)?
            } else {
                let w = load_annotated(&args.world)?;
                model.lexicon.add_vocabulary(&Vocabulary::from_world(&w));
                w
            };
            pairs
                .iter()
                .map(|p| answer_single_world(&model, &p.question, &world, args.eps).answer)
                .collect()
        }
    };
    let mut text = String::new();
    for a in &answers {
        writeln!(text, "{a}")?;
    }
    match &args.out {
        Some(p) => write_output(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_predictions(path: &Path) -> Result<Vec<Answer>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(Answer::parse_line).collect())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let preds = read_predictions(&args.preds)?;
    let golds: Vec<Answer> = corpus::load_qa(&args.qa)?
        .into_iter()
        .map(|p| p.gold)
        .collect();
    let mut out = format!("accuracy\t{:.2}\n", accuracy_score(&preds, &golds)?);
    if let Some(tax_path) = &args.taxonomy {
        let tax = Taxonomy::load(tax_path)?;
        for (t, score) in wups_curve(&preds, &golds, &tax, &args.thresholds)? {
            writeln!(out, "wups@{t:.2}\t{score:.2}")?;
        }
        if let Some(p) = &args.curve_out {
            let mut curve = String::new();
            for (t, score) in wups_curve(&preds, &golds, &tax, &default_thresholds())? {
                writeln!(curve, "{t:.2}\t{score:.2}")?;
            }
            write_output(p, &curve)?;
        }
    }
    print!("{out}");
    Ok(())
}

fn run_sample(args: SampleArgs) -> Result<()> {
    let segments = corpus::load_segmentations(&args.segmentations)?;
    let scene = SegmentScene::new(segments, load_scene_facts(&args.scenes)?);
    let worlds = sample_worlds(&scene, args.n, args.seed)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let width = worlds.len().to_string().len().max(3);
    for (i, w) in worlds.iter().enumerate() {
        let path = args.out_dir.join(format!("world-{:0width$}.tsv", i + 1));
        corpus::save_facts(&path, w.objects(), Some(w.log_weight()))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Train(a) => run_train(a),
        Command::Answer(a) => run_answer(a),
        Command::Eval(a) => run_eval(a),
        Command::SampleWorlds(a) => run_sample(a),
        Command::Wup(a) => {
            let tax = Taxonomy::load(&a.taxonomy)?;
            println!("{:.2}", wup(&a.a, &a.b, &tax));
            Ok(())
        }
    }
}
