use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use log::info;

use viewsynth::experiment::{synthesize_queries, Comparison, Query};
use viewsynth::features::{read_pgm, write_pgm};
use viewsynth::io::{self, Manifest};
use viewsynth::pose::{synthesize_image, PoseMode};
use viewsynth::retrieval::{
    evaluate_rankings, parse_rankings_tsv, run_retrieval, transferability_matrix, Distance,
};
use viewsynth::surrogate::build_table;
use viewsynth::synthesis::{PatchGramCache, SynthesisOptions, Synthesizer};
use viewsynth::synthgen::{self, Family, RenderSpec, SyntheticConfig};
use viewsynth::vocabulary::{quantize_collection, train_for_collection};
use viewsynth::{Collection, Error, FeatureBlock, RegionSelection, Result, SolverOptions, ViewSet};

use crate::queries::{load_queries, parse_list};
use crate::{DistanceArg, FamilyArg, SweepParam, SynthArgs};

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn load(dir: &Path) -> Result<(Manifest, Collection)> {
    io::load_collection(dir)
}

fn options(m: &Manifest, a: &SynthArgs) -> Result<SynthesisOptions> {
    let selection = match (a.kp, a.tau) {
        (_, Some(t)) => {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Argument(format!("--tau {t} is outside [0, 1]")));
            }
            RegionSelection::Threshold(t)
        }
        (Some(0), None) => return Err(Error::Argument("--kp must be at least 1".into())),
        (Some(kp), None) => RegionSelection::TopK(kp),
        (None, None) => RegionSelection::TopK(m.defaults.kp),
    };
    let k = a.k.unwrap_or(m.defaults.k);
    if k == 0 {
        return Err(Error::Argument("--k must be at least 1".into()));
    }
    Ok(SynthesisOptions {
        k,
        selection,
        solver: SolverOptions::default(),
        keep_provenance: false,
    })
}

fn parse_pose(s: &str, votes: usize, views: usize) -> Result<PoseMode> {
    if s == "auto" {
        return Ok(PoseMode::Auto(votes));
    }
    let v: usize = s
        .parse()
        .map_err(|_| Error::Argument(format!("--pose must be auto or a view index, got {s:?}")))?;
    if v >= views {
        return Err(Error::Address {
            axis: "view",
            index: v,
            len: views,
        });
    }
    Ok(PoseMode::Fixed(v))
}

pub fn gen_synthetic(
    family: FamilyArg,
    n: usize,
    views: usize,
    seed: u64,
    grid: usize,
    renders: bool,
    out: &Path,
) -> Result<()> {
    let family = match family {
        FamilyArg::Chairlike => Family::Chairlike,
        FamilyArg::Tablelike => Family::Tablelike,
        FamilyArg::Mixed => Family::Mixed,
    };
    if n < 2 {
        return Err(Error::Argument("--n must be at least 2".into()));
    }
    let cfg = SyntheticConfig {
        shapes: n,
        family,
        grid_size: grid,
        seed,
        render: RenderSpec {
            views: ViewSet::uniform(views)?,
            ..RenderSpec::default()
        },
        ..SyntheticConfig::default()
    };
    let sc = synthgen::build_synthetic_collection::<f32>(&cfg)?;
    let mut m = Manifest::for_collection(family.name(), &sc.collection, cfg.hog);
    m.defaults.seed = seed;
    m.files.labels = Some("labels.csv".into());
    io::save_collection(out, &m, &sc.collection)?;
    io::write_labels_csv(out.join("labels.csv"), &sc.labels())?;
    if renders {
        let dir = out.join("renders");
        fs::create_dir_all(&dir)?;
        for (shape, id) in sc.shapes.iter().zip(sc.collection.ids()) {
            for v in 0..views {
                let img = synthgen::render(shape, &cfg.render, v)?;
                write_pgm(dir.join(format!("{id}_v{v:02}.pgm")), &img)?;
            }
        }
    }
    info!(
        "wrote {n} {} shapes x {views} views to {}",
        family.name(),
        out.display()
    );
    Ok(())
}

pub fn build_vocab(dir: &Path, words: usize, seed: u64, sample_cap: usize) -> Result<()> {
    let (mut m, c) = load(dir)?;
    let cb = train_for_collection(&c, words, sample_cap, seed)?;
    io::write_vocb(dir.join("vocabulary.vocb"), &cb)?;
    m.words = Some(words);
    m.vocabulary_seed = Some(seed);
    m.defaults.words = words;
    m.files.vocabulary = Some("vocabulary.vocb".into());
    // A new vocabulary invalidates any existing table.
    m.files.suitability = None;
    m.save(dir)?;
    info!("trained {words} words on {}", dir.display());
    Ok(())
}

pub fn build_suitability(dir: &Path) -> Result<()> {
    let (mut m, c) = load(dir)?;
    let cb = io::load_vocabulary(dir, &m)?;
    let table = build_table(&quantize_collection(&c, &cb)?)?;
    io::write_sstb(dir.join("suitability.sstb"), &table)?;
    m.files.suitability = Some("suitability.sstb".into());
    m.save(dir)?;
    info!("suitability table written for {}", dir.display());
    Ok(())
}

pub fn synthesize(dir: &Path, image: &Path, pose: &str, a: &SynthArgs, out: &Path) -> Result<()> {
    let (m, c) = load(dir)?;
    let table = io::load_suitability(dir, &m)?;
    let mode = parse_pose(pose, m.defaults.pose_votes, c.views())?;
    let img = read_pgm(image)?;
    let synth = Synthesizer::new(&c, &table, options(&m, a)?)?;
    let (estimate, desc) = synthesize_image(&synth, &c, &img, &m.hog_config(), mode)?;
    if let Some(p) = &estimate {
        info!("estimated pose: view {} (score {:.6})", p.view, p.score);
    }
    println!("observed view {}", desc.observed_view);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    io::write_descriptor(out, &desc.descriptor)
}

pub fn vad(a: &Path, b: &Path) -> Result<()> {
    let x = io::read_descriptor::<f32>(a)?;
    let y = io::read_descriptor::<f32>(b)?;
    if x.dims() != y.dims() {
        return Err(Error::Argument(format!(
            "descriptor shapes differ: {:?} vs {:?}",
            x.dims(),
            y.dims()
        )));
    }
    let d = viewsynth::scalar::sq_dist(x.as_slice(), y.as_slice()).sqrt();
    println!("{d:?}");
    Ok(())
}

fn parse_region(s: &str, patches: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let num = tok.strip_prefix('g').unwrap_or(tok);
        let g: usize = num
            .parse()
            .map_err(|_| Error::Argument(format!("bad region patch {tok:?}")))?;
        if g >= patches {
            return Err(Error::Address {
                axis: "patch",
                index: g,
                len: patches,
            });
        }
        out.push(g);
    }
    if out.is_empty() {
        return Err(Error::Argument("--region lists no patches".into()));
    }
    Ok(out)
}

fn pose_for_list(
    s: &str,
    m: &Manifest,
    views: usize,
    queries: &[Query<f32>],
) -> Result<Option<PoseMode>> {
    if s == "truth" {
        if let Some(q) = queries.iter().find(|q| q.true_view.is_none()) {
            return Err(Error::Argument(format!(
                "query {} has no view column",
                q.id
            )));
        }
        return Ok(None);
    }
    parse_pose(s, m.defaults.pose_votes, views).map(Some)
}

/// Synthesizes a list of queries, one fixed view each when `mode` is `None`.
fn synthesize_list(
    c: &Collection,
    table: &viewsynth::SuitabilityTable,
    opts: SynthesisOptions,
    cache: Option<&PatchGramCache>,
    queries: &[Query<f32>],
    mode: Option<PoseMode>,
) -> Result<(viewsynth::retrieval::LabeledImageSet<f32>, Vec<usize>)> {
    let (set, _) = match mode {
        Some(mode) => synthesize_queries(c, table, opts, cache, queries, mode)?,
        None => {
            let mut items = Vec::with_capacity(queries.len());
            for q in queries {
                let v = q.true_view.expect("checked by caller");
                let (s, _) = synthesize_queries(
                    c,
                    table,
                    opts,
                    cache,
                    std::slice::from_ref(q),
                    PoseMode::Fixed(v),
                )?;
                items.extend(s.items().iter().cloned());
            }
            (
                viewsynth::retrieval::LabeledImageSet::new(items)?,
                Vec::new(),
            )
        }
    };
    let views = set
        .items()
        .iter()
        .map(|i| i.descriptor.observed_view)
        .collect();
    Ok((set, views))
}

pub fn retrieve(
    dir: &Path,
    list: &Path,
    distance: DistanceArg,
    region: Option<&str>,
    pose: &str,
    a: &SynthArgs,
    report: &Path,
) -> Result<()> {
    let (m, c) = load(dir)?;
    let table = io::load_suitability(dir, &m)?;
    let lines = parse_list(list)?;
    let mut queries = load_queries(&lines, &m)?;
    let labeled = queries.iter().all(|q| !q.labels.is_empty());
    if !labeled {
        for q in &mut queries {
            if q.labels.is_empty() {
                q.labels.insert(format!("#{}", q.id));
            }
        }
    }
    let mode = pose_for_list(pose, &m, c.views(), &queries)?;
    let opts = options(&m, a)?;
    let region = match (distance, region) {
        (DistanceArg::Part, Some(r)) => Some(parse_region(r, c.patches())?),
        (DistanceArg::Part, None) => {
            return Err(Error::Argument("--distance part needs --region".into()))
        }
        _ => None,
    };
    let cache = (queries.len() > 1).then(|| PatchGramCache::new(&c));
    let (set, views) = synthesize_list(&c, &table, opts, cache.as_ref(), &queries, mode)?;
    let dist = match distance {
        DistanceArg::Vad => Distance::Vad,
        DistanceArg::Baseline => Distance::BaselineL2,
        DistanceArg::Part => Distance::Part {
            table: &table,
            region: region.expect("parsed above"),
            selection: opts.selection,
        },
    };
    let result = run_retrieval(&set, &dist)?;
    fs::create_dir_all(report)?;
    write(&report.join("rankings.tsv"), &result.rankings_tsv(&set))?;
    let mut poses = String::from("query\tview\n");
    for (q, v) in queries.iter().zip(&views) {
        poses.push_str(&format!("{}\t{v}\n", q.id));
    }
    write(&report.join("poses.tsv"), &poses)?;
    match (&result.curve, labeled) {
        (Some(curve), true) => {
            write(&report.join("pr.csv"), &curve.to_csv())?;
            write(
                &report.join("summary.txt"),
                &format!("auc\t{}\n", curve.auc),
            )?;
            println!("auc {}", curve.auc);
        }
        _ => info!("queries are unlabeled; wrote rankings only"),
    }
    Ok(())
}

pub fn eval_retrieval(rankings: &Path, labels: &Path, out: Option<&Path>) -> Result<()> {
    let rows = parse_rankings_tsv(&fs::read_to_string(rankings)?)?;
    let labels: HashMap<String, BTreeSet<String>> = io::read_labels_csv(labels)?
        .into_iter()
        .map(|(id, l)| (id, l.into_iter().collect()))
        .collect();
    let curve = evaluate_rankings(&rows, &labels)?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| rankings.with_file_name("pr.csv"));
    write(&out, &curve.to_csv())?;
    println!("auc {}", curve.auc);
    Ok(())
}

pub fn transferability(dir: &Path, k: Option<usize>, out: Option<&Path>) -> Result<()> {
    let (m, c) = load(dir)?;
    let k = k.unwrap_or(m.defaults.k);
    if k == 0 {
        return Err(Error::Argument("--k must be at least 1".into()));
    }
    let cache = PatchGramCache::new(&c);
    let matrix = transferability_matrix(&c, k, &SolverOptions::default(), Some(&cache))?;
    info!(
        "diagonal mean rank {:.4}, overall mean rank {:.4}",
        matrix.diagonal_mean(),
        matrix.mean()
    );
    match out {
        Some(p) => write(p, &matrix.to_csv()),
        None => {
            print!("{}", matrix.to_csv());
            Ok(())
        }
    }
}

/// Collection renders as queries held out by shape, with their true views
/// and the collection's labels.
fn collection_queries(
    dir: &Path,
    m: &Manifest,
    c: &Collection,
    max_shapes: Option<usize>,
) -> Result<Vec<Query<f32>>> {
    let labels: HashMap<String, Vec<String>> = match &m.files.labels {
        Some(rel) => io::read_labels_csv(dir.join(rel))?.into_iter().collect(),
        None => HashMap::new(),
    };
    let shapes = max_shapes.unwrap_or(c.len()).min(c.len());
    let mut out = Vec::with_capacity(shapes * c.views());
    for s in 0..shapes {
        let id = &c.ids()[s];
        let l: BTreeSet<String> = match labels.get(id) {
            Some(l) => l.iter().cloned().collect(),
            None => BTreeSet::from([id.clone()]),
        };
        for v in 0..c.views() {
            out.push(Query {
                id: format!("{id}@{v}"),
                features: FeatureBlock::new(c.patches(), c.feature_dim(), c.slab(s, v).to_vec())?,
                labels: l.clone(),
                true_view: Some(v),
                exclude: vec![s],
            });
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    dir: &Path,
    param: SweepParam,
    values: &[f64],
    list: Option<&Path>,
    max_shapes: Option<usize>,
    a: &SynthArgs,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let (m, c) = load(dir)?;
    let queries = match list {
        Some(p) => {
            let q = load_queries(&parse_list(p)?, &m)?;
            if let Some(bad) = q.iter().find(|q| q.labels.is_empty()) {
                return Err(Error::Argument(format!("query {} has no labels", bad.id)));
            }
            q
        }
        None => collection_queries(dir, &m, &c, max_shapes)?,
    };
    let mode = if queries.iter().all(|q| q.true_view.is_some()) {
        None
    } else {
        Some(PoseMode::Auto(m.defaults.pose_votes))
    };
    let base = options(&m, a)?;
    let cache = PatchGramCache::new(&c);
    let stored_table = match param {
        SweepParam::Words => None,
        _ => Some(io::load_suitability(dir, &m)?),
    };
    let mut csv = format!(
        "{},vad_auc,baseline_auc\n",
        format!("{param:?}").to_lowercase()
    );
    for &value in values {
        let mut opts = base;
        let as_count = |what: &str| -> Result<usize> {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Argument(format!(
                    "{what} value {value} is not a positive integer"
                )));
            }
            Ok(value as usize)
        };
        let owned_table;
        let table = match param {
            SweepParam::K => {
                opts.k = as_count("k")?;
                stored_table.as_ref().expect("loaded")
            }
            SweepParam::Kp => {
                opts.selection = RegionSelection::TopK(as_count("kp")?);
                stored_table.as_ref().expect("loaded")
            }
            SweepParam::Tau => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::Argument(format!(
                        "tau value {value} is outside [0, 1]"
                    )));
                }
                opts.selection = RegionSelection::Threshold(value);
                stored_table.as_ref().expect("loaded")
            }
            SweepParam::Words => {
                let cb = train_for_collection(
                    &c,
                    as_count("words")?,
                    viewsynth::vocabulary::DEFAULT_SAMPLE_CAP,
                    seed,
                )?;
                owned_table = build_table(&quantize_collection(&c, &cb)?)?;
                &owned_table
            }
        };
        let (set, _) = synthesize_list(&c, table, opts, Some(&cache), &queries, mode)?;
        let cmp = Comparison::run(&set)?;
        let auc = |r: &viewsynth::retrieval::RetrievalResult| {
            r.curve
                .as_ref()
                .map(|c| c.auc)
                .ok_or_else(|| Error::Argument("queries share no labels; AUC is undefined".into()))
        };
        let (va, ba) = (auc(&cmp.vad)?, auc(&cmp.baseline)?);
        info!("{param:?}={value}: vad auc {va:.4}, baseline auc {ba:.4}");
        csv.push_str(&format!("{value},{va},{ba}\n"));
    }
    write(out, &csv)
}
