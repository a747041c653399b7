//! Command-line front end for the viseme pipeline: segmentation,
//! descriptors, groupings, dictionaries, sentence coding and plots.

mod config;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use config::RunConfig;
use viseme_core::alphabet::Alphabet;
use viseme_core::codec::{
    encode, image_fidelity, synthesize, EncodeConfig, Sentence,
};
use viseme_core::grouping::{aggregate, feature_series, CompoundRecord};
use viseme_core::hilbert::{hilbert_d2xy, order_points, tour_length};
use viseme_core::image::{load_label_map, save_label_map, MultiImage};
use viseme_core::segment::{decompose, DecomposeParams, DecompTree};

#[derive(Parser)]
#[command(name = "viseme", version, about = "Region-based visual coding pipeline")]
struct Cli {
    /// Config file of key=value lines (precision, min_card, vq_bits,
    /// profile, clamp, out, seed); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fitting precision: largest tolerated absolute error per region.
    #[arg(long, global = true)]
    precision: Option<f64>,
    /// Smallest region the splitter may keep dividing.
    #[arg(long, global = true)]
    min_card: Option<usize>,
    /// Bits per quantized descriptor coordinate.
    #[arg(long, global = true)]
    vq_bits: Option<u32>,
    /// Quantization profile: full or convex-hull.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Clamp bound for signed invariants.
    #[arg(long, global = true)]
    clamp: Option<f64>,
    /// Seed for randomized diagnostics.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for emitted artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose an image into polynomial patches.
    Segment { image: PathBuf },
    /// Emit per-node descriptor records for a stored tree.
    Describe {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Emit compound records plus leaf-to-root feature series.
    Group {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Build the visual alphabet and dictionary of an image.
    Dict { image: PathBuf },
    /// Encode an image into a sentence (and verify by decoding back).
    Encode {
        image: PathBuf,
        /// Also list compound words in the sentence.
        #[arg(long)]
        compounds: bool,
    },
    /// Rebuild an image from a sentence and its alphabet.
    Decode {
        #[arg(long)]
        sentence: PathBuf,
        #[arg(long)]
        alphabet: PathBuf,
    },
    /// Render curves, tours and rasters.
    Plot {
        #[command(subcommand)]
        kind: PlotKind,
    },
    /// Run the built-in smoke checks.
    Selftest,
}

#[derive(Subcommand)]
enum PlotKind {
    /// Hilbert curve polyline on the 2^r grid.
    HilbertCurve {
        #[arg(long, default_value = "3")]
        r: u32,
    },
    /// Nearest-neighbor visiting path over a JSON point list.
    PointTour {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value = "8")]
        r: u32,
    },
    /// Region boundaries drawn over the first band.
    SegmentationOverlay {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Colorized region-id raster.
    LabelMap {
        #[arg(long)]
        labels: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_usage_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// I/O and malformed-input failures exit 2; stage failures exit 1.
fn is_usage_error(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return true;
        }
        matches!(
            cause.downcast_ref::<viseme_core::VisemeError>(),
            Some(
                viseme_core::VisemeError::Io(_)
                    | viseme_core::VisemeError::MalformedImage(_)
                    | viseme_core::VisemeError::UnsupportedFormat(_)
                    | viseme_core::VisemeError::MalformedFile(_)
                    | viseme_core::VisemeError::TruncatedPayload { .. }
            )
        )
    })
}

fn init_threads() {
    if let Ok(v) = std::env::var("VISEME_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn effective_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::parse_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = cli.precision {
        cfg.precision = v;
    }
    if let Some(v) = cli.min_card {
        cfg.min_card = v;
    }
    if let Some(v) = cli.vq_bits {
        cfg.vq_bits = v;
    }
    if let Some(v) = &cli.profile {
        cfg.profile = v.parse()?;
    }
    if let Some(v) = cli.clamp {
        cfg.clamp = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;
    // Record the effective settings beside the artifacts.
    std::fs::write(cfg.out.join("run.cfg"), cfg.to_file_form())?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = effective_config(&cli)?;
    match &cli.command {
        Command::Segment { image } => cmd_segment(image, &cfg),
        Command::Describe { tree, labels } => cmd_describe(tree, labels, &cfg, false),
        Command::Group { tree, labels } => cmd_describe(tree, labels, &cfg, true),
        Command::Dict { image } => cmd_dict(image, &cfg),
        Command::Encode { image, compounds } => cmd_encode(image, *compounds, &cfg),
        Command::Decode { sentence, alphabet } => cmd_decode(sentence, alphabet, &cfg),
        Command::Plot { kind } => cmd_plot(kind, &cfg),
        Command::Selftest => selftest(),
    }
}

fn load_image(path: &Path) -> anyhow::Result<MultiImage> {
    MultiImage::load(path, None).with_context(|| format!("loading image {}", path.display()))
}

fn load_tree(tree: &Path, labels: &Path) -> anyhow::Result<DecompTree> {
    let json = std::fs::read_to_string(tree)
        .with_context(|| format!("reading tree {}", tree.display()))?;
    let mut t = DecompTree::from_json(&json)?;
    let (w, h, map) = load_label_map(labels)?;
    if (w, h) != (t.width, t.height) {
        bail!("label map dimensions do not match the tree");
    }
    t.attach_pixels(&map)?;
    Ok(t)
}

fn segment_stats(tree: &DecompTree) -> serde_json::Value {
    serde_json::json!({
        "leaves": tree.leaf_count(),
        "max_eps": tree.max_leaf_eps(),
        "order_histogram": tree.order_histogram(),
        "nodes": tree.nodes.len(),
    })
}

fn cmd_segment(image: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    let img = load_image(image)?;
    let tree = decompose(
        &img,
        DecomposeParams {
            precision: cfg.precision,
            min_card: cfg.min_card,
        },
    )?;
    std::fs::write(cfg.out.join("tree.json"), tree.to_json()?)?;
    save_label_map(
        &cfg.out.join("labels.pgm"),
        tree.width,
        tree.height,
        &tree.label_map(),
    )?;
    let stats = segment_stats(&tree);
    std::fs::write(
        cfg.out.join("stats.json"),
        serde_json::to_string_pretty(&stats)?,
    )?;
    println!("{stats}");
    Ok(())
}

fn cmd_describe(
    tree: &Path,
    labels: &Path,
    cfg: &RunConfig,
    with_series: bool,
) -> anyhow::Result<()> {
    let tree = load_tree(tree, labels)?;
    let shapes = aggregate(&tree)?;
    let records: Vec<CompoundRecord> = shapes.iter().map(CompoundRecord::from_shape).collect();
    std::fs::write(
        cfg.out.join("descriptors.json"),
        serde_json::to_string_pretty(&records)?,
    )?;
    if with_series {
        let series: Vec<_> = tree
            .leaves()
            .map(|leaf| feature_series(&tree, &shapes, leaf.id))
            .collect::<viseme_core::Result<_>>()?;
        std::fs::write(
            cfg.out.join("series.json"),
            serde_json::to_string_pretty(&series)?,
        )?;
        println!(
            "{}",
            serde_json::json!({"records": records.len(), "series": series.len()})
        );
    } else {
        println!("{}", serde_json::json!({"records": records.len()}));
    }
    Ok(())
}

fn encode_config(cfg: &RunConfig, compounds: bool) -> EncodeConfig {
    EncodeConfig {
        precision: cfg.precision,
        min_card: cfg.min_card,
        vq_bits: cfg.vq_bits,
        profile: cfg.profile,
        clamp: cfg.clamp,
        include_compounds: compounds,
        mask_cap: 10,
    }
}

fn cmd_dict(image: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    let img = load_image(image)?;
    let result = encode(&img, &encode_config(cfg, false))?;
    std::fs::write(cfg.out.join("alphabet.json"), result.alphabet.to_json()?)?;
    std::fs::write(
        cfg.out.join("alphabet-domain.vqt"),
        result.alphabet.domain_tree.to_bytes(),
    )?;
    for (i, tree) in result.alphabet.band_trees.iter().enumerate() {
        std::fs::write(
            cfg.out.join(format!("alphabet-band-{i}.vqt")),
            tree.to_bytes(),
        )?;
    }
    std::fs::write(
        cfg.out.join("dictionary.json"),
        result.dictionary.to_json()?,
    )?;
    println!(
        "{}",
        serde_json::json!({
            "alphabet_entries": result.alphabet.len(),
            "dictionary_words": result.dictionary.len(),
        })
    );
    Ok(())
}

fn cmd_encode(image: &Path, compounds: bool, cfg: &RunConfig) -> anyhow::Result<()> {
    let img = load_image(image)?;
    let result = encode(&img, &encode_config(cfg, compounds))?;
    std::fs::write(cfg.out.join("tree.json"), result.tree.to_json()?)?;
    save_label_map(
        &cfg.out.join("labels.pgm"),
        result.tree.width,
        result.tree.height,
        &result.tree.label_map(),
    )?;
    std::fs::write(cfg.out.join("sentence.json"), result.sentence.to_json()?)?;
    std::fs::write(cfg.out.join("sentence.bin"), result.sentence.to_binary())?;
    std::fs::write(cfg.out.join("alphabet.json"), result.alphabet.to_json()?)?;
    std::fs::write(
        cfg.out.join("dictionary.json"),
        result.dictionary.to_json()?,
    )?;
    // Verification pass: decode back and report fidelity.
    let rebuilt = synthesize(&result.sentence, &result.alphabet)?;
    let (psnr, max_err) = image_fidelity(&img, &rebuilt)?;
    let report = serde_json::json!({
        "words": result.sentence.items.len(),
        "alphabet_entries": result.alphabet.len(),
        "psnr": if psnr.is_finite() { serde_json::json!(psnr) } else { serde_json::json!("inf") },
        "max_error": max_err,
    });
    std::fs::write(
        cfg.out.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!("{report}");
    Ok(())
}

fn cmd_decode(sentence: &Path, alphabet: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    let sentence_bytes =
        std::fs::read(sentence).with_context(|| format!("reading {}", sentence.display()))?;
    let sentence = if sentence_bytes.starts_with(b"VSN1") {
        Sentence::from_binary(&sentence_bytes)?
    } else {
        Sentence::from_json(std::str::from_utf8(&sentence_bytes).map_err(|_| {
            viseme_core::VisemeError::MalformedFile("sentence is neither VSN1 nor JSON".into())
        })?)?
    };
    let alphabet_json = std::fs::read_to_string(alphabet)
        .with_context(|| format!("reading {}", alphabet.display()))?;
    let alphabet = Alphabet::from_json(&alphabet_json)?;
    let img = synthesize(&sentence, &alphabet)?;
    let path = match img.bands() {
        1 => cfg.out.join("decoded.pgm"),
        3 => cfg.out.join("decoded.ppm"),
        _ => {
            let p = cfg.out.join("decoded.raw");
            img.save_raw(&p)?;
            println!(
                "{}",
                serde_json::json!({"decoded": p.display().to_string()})
            );
            return Ok(());
        }
    };
    img.save_pnm(&path)?;
    println!(
        "{}",
        serde_json::json!({"decoded": path.display().to_string()})
    );
    Ok(())
}

fn cmd_plot(kind: &PlotKind, cfg: &RunConfig) -> anyhow::Result<()> {
    match kind {
        PlotKind::HilbertCurve { r } => {
            if *r == 0 || *r > 10 {
                bail!("curve order must be in 1..=10");
            }
            let n = 1u64 << (2 * r);
            let scale = 512.0 / (1u32 << r) as f64;
            let points: Vec<(f64, f64)> = (0..n)
                .map(|d| {
                    let (x, y) = hilbert_d2xy(*r, d).expect("in range");
                    ((x as f64 + 0.5) * scale, (y as f64 + 0.5) * scale)
                })
                .collect();
            let path = cfg.out.join(format!("hilbert-r{r}.svg"));
            std::fs::write(&path, svg::polyline_document(&points, 512.0, 512.0))?;
            println!(
                "{}",
                serde_json::json!({"svg": path.display().to_string(), "vertices": n})
            );
        }
        PlotKind::PointTour { points, r } => {
            let text = std::fs::read_to_string(points)
                .with_context(|| format!("reading {}", points.display()))?;
            let pts: Vec<(f64, f64)> = serde_json::from_str::<Vec<[f64; 2]>>(&text)?
                .into_iter()
                .map(|[x, y]| (x, y))
                .collect();
            if pts.is_empty() {
                bail!("point list is empty");
            }
            let order = order_points(&pts, *r);
            let tour: Vec<(f64, f64)> = order.iter().map(|&i| pts[i]).collect();
            let (w, h) = bounding_box(&pts);
            let path = cfg.out.join("tour.svg");
            std::fs::write(&path, svg::polyline_document(&tour, w, h))?;
            // Seeded random baseline for comparison.
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut baseline = 0.0;
            let trials = 200;
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            for _ in 0..trials {
                perm.shuffle(&mut rng);
                baseline += tour_length(&pts, &perm);
            }
            println!(
                "{}",
                serde_json::json!({
                    "svg": path.display().to_string(),
                    "tour_length": tour_length(&pts, &order),
                    "random_mean": baseline / trials as f64,
                })
            );
        }
        PlotKind::SegmentationOverlay { image, labels } => {
            let img = load_image(image)?;
            let (w, h, map) = load_label_map(labels)?;
            if (w, h) != (img.width(), img.height()) {
                bail!("label map dimensions do not match the image");
            }
            let mut planes = vec![img.plane(0).to_vec(); 3];
            for y in 0..h as usize {
                for x in 0..w as usize {
                    let here = map[y * w as usize + x];
                    let boundary = (x + 1 < w as usize && map[y * w as usize + x + 1] != here)
                        || (y + 1 < h as usize && map[(y + 1) * w as usize + x] != here);
                    if boundary {
                        planes[0][y * w as usize + x] = 255;
                        planes[1][y * w as usize + x] = 32;
                        planes[2][y * w as usize + x] = 32;
                    }
                }
            }
            let overlay = MultiImage::new(w, h, 256, planes)?;
            let path = cfg.out.join("overlay.ppm");
            overlay.save_pnm(&path)?;
            println!("{}", serde_json::json!({"ppm": path.display().to_string()}));
        }
        PlotKind::LabelMap { labels } => {
            let (w, h, map) = load_label_map(labels)?;
            let mut planes = vec![vec![0u8; (w * h) as usize]; 3];
            for (i, &id) in map.iter().enumerate() {
                planes[0][i] = (40 + (id as u64 * 53) % 216) as u8;
                planes[1][i] = (40 + (id as u64 * 97) % 216) as u8;
                planes[2][i] = (40 + (id as u64 * 193) % 216) as u8;
            }
            let raster = MultiImage::new(w, h, 256, planes)?;
            let path = cfg.out.join("label-map.ppm");
            raster.save_pnm(&path)?;
            println!("{}", serde_json::json!({"ppm": path.display().to_string()}));
        }
    }
    Ok(())
}

fn bounding_box(points: &[(f64, f64)]) -> (f64, f64) {
    let w = points.iter().map(|p| p.0).fold(1.0f64, f64::max);
    let h = points.iter().map(|p| p.1).fold(1.0f64, f64::max);
    (w, h)
}

fn selftest() -> anyhow::Result<()> {
    let mut failed = 0;
    let mut check = |name: &str, ok: bool| {
        println!("[{}] {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    };

    // Hilbert inverse on a small grid.
    let mut hilbert_ok = true;
    for d in 0..256u64 {
        let (x, y) = hilbert_d2xy(4, d).unwrap();
        hilbert_ok &= viseme_core::hilbert::hilbert_xy2d(4, x, y).unwrap() == d;
    }
    check("hilbert inverse r=4", hilbert_ok);

    // Quantization tree against a hash oracle.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut tree = viseme_core::quant::QuantTree::new(3, 3).unwrap();
    let mut oracle = std::collections::BTreeSet::new();
    for _ in 0..500 {
        let coords: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let v = viseme_core::quant::NormalizedVector::new(coords.clone()).unwrap();
        tree.insert(&v, None).unwrap();
        let q: Vec<u32> = coords.iter().map(|&c| ((c * 8.0) as u32).min(7)).collect();
        oracle.insert(viseme_core::quant::interleave(&q, 3));
    }
    check(
        "quant tree matches hash oracle",
        tree.cells() == oracle.into_iter().collect::<Vec<_>>(),
    );

    // Ramp segmentation holds its precision.
    let plane = (0..64u32)
        .flat_map(|_y| {
            (0..64u32).map(move |x| if x < 32 { (10 + x) as u8 } else { (200 - x) as u8 })
        })
        .collect();
    let img = MultiImage::new(64, 64, 256, vec![plane]).unwrap();
    let tree = decompose(
        &img,
        DecomposeParams {
            precision: 2.0,
            min_card: 8,
        },
    )
    .unwrap();
    check("ramp segmentation precision", tree.max_leaf_eps() <= 2.0);

    // Constant image round trip is exact.
    let flat = MultiImage::filled(16, 16, 1, 256, 99).unwrap();
    let result = encode(&flat, &EncodeConfig::default()).unwrap();
    let back = synthesize(&result.sentence, &result.alphabet).unwrap();
    let (_, max_err) = image_fidelity(&flat, &back).unwrap();
    check("constant round trip exact", max_err == 0);

    if failed > 0 {
        bail!("{failed} selftest checks failed");
    }
    Ok(())
}
