use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use meshlabel::features::{feature_ablation_mask, write_feature_csv, FeatureRow};
use meshlabel::forest::{ForestModel, ForestParams};
use meshlabel::mesh_io::{write_ply, write_point_cloud_ply, PlyFormat, TriangleMesh};
use meshlabel::metrics::{report, write_class_table, ConfusionMatrix};
use meshlabel::sampling::{montecarlo_sample, poisson_prune, transfer_colors};
use meshlabel::session::TileStore;
use meshlabel::synthetic::{generate_town, TownParams};
use meshlabel::workflow::{
    ablation_study, feature_rows, load_feature_rows, load_tile, predict_tile, prediction_csv, rank_tiles,
    run_pipeline, segment_tile, split_dataset, tile_diversities, train_model, training_amount_study,
    write_atomic, PipelineConfig, PipelineSettings, SampleWeighting, TileFeatures,
};
use meshlabel::SegmentationParams;
use meshlabel_service::{AppState, LoadedModel};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "meshlabel", version, about = "Segment, classify and annotate textured urban meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full train / predict / evaluate pipeline from a config file.
    Run { config: PathBuf },
    /// Over-segment a tile into planar segments.
    Segment {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        seg: SegArgs,
    },
    /// Compute segment features of tiles into one CSV.
    Featurize {
        #[arg(required = true)]
        tiles: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        seg: SegArgs,
    },
    /// Train a forest on a feature CSV.
    Train {
        features: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Label a tile with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Feature groups that were switched off in training.
        #[arg(long, value_delimiter = ',')]
        ablate: Vec<String>,
        #[command(flatten)]
        seg: SegArgs,
    },
    /// Area-weighted metrics of predicted tiles against ground truth.
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        gt: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        pred: Vec<PathBuf>,
        /// Also write the per-class table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sample a coloured, labelled point cloud from a tile.
    Sample {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Target points per m² after pruning.
        #[arg(long, default_value_t = 10.0)]
        density: f64,
        /// Points per m² drawn before pruning.
        #[arg(long, default_value_t = 40.0)]
        raw_density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rank tiles by feature diversity, most diverse first.
    Rank {
        #[arg(required = true)]
        tiles: Vec<PathBuf>,
        #[command(flatten)]
        seg: SegArgs,
    },
    /// Randomly assign tiles to train / test / validation.
    Split {
        #[arg(required = true)]
        tiles: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        train: usize,
        #[arg(long, default_value_t = 0)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        validation: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Training-amount or feature-ablation study on a pipeline config.
    Study {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Training fractions, e.g. 0.1,0.3,1.
        #[arg(long, value_delimiter = ',')]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Run an ablation per listed group instead (e.g. eigen,color).
        #[arg(long, value_delimiter = ',')]
        ablate_each: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve a directory of tiles for interactive refinement.
    Serve {
        dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        ablate: Vec<String>,
        #[command(flatten)]
        seg: SegArgs,
    },
    /// Write procedurally generated labelled town tiles and a config.
    Town {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 8)]
        train: usize,
        #[arg(long, default_value_t = 4)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct SegArgs {
    /// Segments smaller than this (m²) are merged.
    #[arg(long)]
    min_area: Option<f64>,
    /// Corner-to-plane distance threshold (m).
    #[arg(long)]
    max_distance: Option<f64>,
    /// Normal angle threshold (degrees).
    #[arg(long)]
    max_angle: Option<f64>,
}

impl SegArgs {
    fn params(&self) -> SegmentationParams {
        let d = SegmentationParams::default();
        SegmentationParams {
            min_area: self.min_area.unwrap_or(d.min_area),
            max_distance: self.max_distance.unwrap_or(d.max_distance),
            max_angle: self.max_angle.unwrap_or(d.max_angle),
        }
    }

    fn settings(&self) -> PipelineSettings {
        PipelineSettings {
            segmentation: self.params(),
            ..PipelineSettings::default()
        }
    }
}

#[derive(Args)]
struct ForestArgs {
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 30)]
    max_depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    ablate: Vec<String>,
    /// Weight training segments equally instead of by area.
    #[arg(long)]
    uniform: bool,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config } => {
            let cfg = PipelineConfig::load(&config)?;
            let manifest = run_pipeline(&cfg)?;
            println!("wrote {} files to {}", manifest.outputs.len() + 1, cfg.output.display());
            let rep: serde_json::Value =
                serde_json::from_slice(&std::fs::read(cfg.output.join("report.json"))?)?;
            for key in ["report", "upper_bound"] {
                if let Some(r) = rep.get(key).filter(|r| !r.is_null()) {
                    println!("{key}: OA {:.4}  mIoU {:.4}", r["oa"], r["miou"]);
                }
            }
        }
        Command::Segment { input, output, seg } => {
            let mut mesh = load_tile(&input)?;
            let segs = segment_tile(&mesh, &seg.settings())?;
            segs.apply_to_mesh(&mut mesh);
            write_atomic(&output, &write_ply(&mesh, PlyFormat::BinaryLittleEndian))?;
            println!("{} faces -> {} segments", mesh.face_count(), segs.len());
        }
        Command::Featurize { tiles, output, seg } => {
            let settings = seg.settings();
            let mut rows = Vec::new();
            for p in &tiles {
                rows.extend(featurize(&load_tile(p)?, &settings)?);
            }
            let mut buf = Vec::new();
            write_feature_csv(&mut buf, &rows)?;
            write_atomic(&output, &buf)?;
            println!("{} segments from {} tiles", rows.len(), tiles.len());
        }
        Command::Train { features, output, forest } => {
            let rows = load_feature_rows(&features)?;
            let settings = PipelineSettings {
                forest: ForestParams {
                    n_trees: forest.trees,
                    max_depth: forest.max_depth,
                    seed: forest.seed,
                    ..ForestParams::default()
                },
                weighting: if forest.uniform { SampleWeighting::Uniform } else { SampleWeighting::Area },
                ablate: forest.ablate,
                ..PipelineSettings::default()
            };
            let model = train_model(&rows, &settings)?;
            model.save(&output)?;
            println!("trained {} trees on {} segments", model.trees().len(), rows.len());
        }
        Command::Predict {
            model,
            input,
            output,
            ablate,
            seg,
        } => {
            let model = ForestModel::load(&model)?;
            let mut mesh = load_tile(&input)?;
            let segs = segment_tile(&mesh, &seg.settings())?;
            let rows = feature_rows(&mesh, &segs)?;
            let pred = predict_tile(&model, &segs, &rows, &feature_ablation_mask(&ablate)?)?;
            segs.apply_to_mesh(&mut mesh);
            mesh.set_face_labels(pred.face_labels.clone())?;
            write_atomic(&output, &write_ply(&mesh, PlyFormat::BinaryLittleEndian))?;
            write_atomic(&output.with_extension("segments.csv"), &prediction_csv(&pred))?;
            println!("labelled {} segments", segs.len());
        }
        Command::Evaluate { gt, pred, csv } => {
            if gt.len() != pred.len() {
                bail!("{} ground-truth tiles but {} predictions", gt.len(), pred.len());
            }
            let mut cm = ConfusionMatrix::new();
            for (g, p) in gt.iter().zip(&pred) {
                cm.accumulate(&load_tile(g)?, &load_tile(p)?)
                    .with_context(|| format!("{} vs {}", g.display(), p.display()))?;
            }
            let rep = report(&cm)?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
            if let Some(path) = csv {
                let mut buf = Vec::new();
                write_class_table(&mut buf, &rep, None)?;
                write_atomic(&path, &buf)?;
            }
        }
        Command::Sample {
            input,
            output,
            density,
            raw_density,
            seed,
        } => {
            let mesh = load_tile(&input)?;
            let raw = montecarlo_sample(&mesh, raw_density, seed)?;
            let pruned = poisson_prune(&raw, density, &mesh)?;
            let cloud = transfer_colors(&pruned.cloud, &mesh)?;
            let mut buf = Vec::new();
            write_point_cloud_ply(&cloud, PlyFormat::BinaryLittleEndian, &mut buf)?;
            write_atomic(&output, &buf)?;
            println!(
                "{} points, {:.3} per m², radius {:.4} m",
                cloud.len(),
                pruned.density,
                pruned.radius
            );
        }
        Command::Rank { tiles, seg } => {
            let settings = seg.settings();
            let mut feats = Vec::new();
            for p in &tiles {
                let mesh = load_tile(p)?;
                feats.push(TileFeatures {
                    tile_id: mesh.tile_id().to_string(),
                    features: featurize(&mesh, &settings)?.into_iter().map(|r| r.features).collect(),
                });
            }
            let div = tile_diversities(&feats)?;
            for id in rank_tiles(&div) {
                let d = div.iter().find(|(t, _)| *t == id).unwrap().1;
                println!("{id}\t{d:.6}");
            }
        }
        Command::Split {
            tiles,
            train,
            test,
            validation,
            seed,
        } => {
            let ids: Vec<String> = tiles.iter().map(|p| stem(p)).collect::<Result<_>>()?;
            let records = split_dataset(&ids, (train, test, validation), seed)?;
            println!("{}", serde_json::to_string_pretty(&records)?);
        }
        Command::Study {
            config,
            output,
            fractions,
            repeats,
            ablate_each,
            seed,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let train = load_all(&cfg.train)?;
            let test = load_all(&cfg.test)?;
            let json = if ablate_each.is_empty() {
                let res = training_amount_study(&train, &test, &cfg.settings, &fractions, repeats, seed)?;
                for r in &res {
                    println!(
                        "fraction {:.3}: OA {:.4} ± {:.4}  mIoU {:.4} ± {:.4}",
                        r.fraction, r.summary.oa.mean, r.summary.oa.std, r.summary.miou.mean, r.summary.miou.std
                    );
                }
                serde_json::to_vec_pretty(&res)?
            } else {
                let mut variants = vec![Vec::new()];
                variants.extend(ablate_each.iter().map(|g| vec![g.clone()]));
                let res = ablation_study(&train, &test, &cfg.settings, &variants)?;
                for r in &res {
                    println!("without {:?}: OA {:.4}  mIoU {:.4}", r.removed, r.report.oa, r.report.miou);
                }
                serde_json::to_vec_pretty(&res)?
            };
            write_atomic(&output, &json)?;
        }
        Command::Serve {
            dir,
            addr,
            model,
            ablate,
            seg,
        } => {
            let model = match model {
                Some(p) => Some(LoadedModel {
                    model: ForestModel::load(&p)?,
                    mask: feature_ablation_mask(&ablate)?,
                }),
                None => None,
            };
            let state = AppState::new(TileStore::new(dir), model, seg.params());
            println!("listening on http://{addr}");
            tokio::runtime::Runtime::new()?.block_on(meshlabel_service::serve(addr, state))?;
        }
        Command::Town {
            output,
            train,
            test,
            seed,
        } => {
            let mut names = Vec::new();
            for i in 0..train + test {
                let id = format!("town_{i:02}");
                let mesh = generate_town(&id, seed.wrapping_add(i as u64), &TownParams::default());
                write_atomic(&output.join(format!("{id}.ply")), &write_ply(&mesh, PlyFormat::BinaryLittleEndian))?;
                names.push(PathBuf::from(format!("{id}.ply")));
            }
            let cfg = PipelineConfig {
                test: names.split_off(train),
                train: names,
                output: PathBuf::from("out"),
                settings: PipelineSettings::default(),
            };
            write_atomic(&output.join("pipeline.json"), &serde_json::to_vec_pretty(&cfg)?)?;
            println!("wrote {} tiles and pipeline.json to {}", train + test, output.display());
        }
    }
    Ok(())
}

fn featurize(mesh: &TriangleMesh, settings: &PipelineSettings) -> Result<Vec<FeatureRow>> {
    let segs = segment_tile(mesh, settings)?;
    Ok(feature_rows(mesh, &segs)?)
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<TriangleMesh>> {
    paths.iter().map(|p| Ok(load_tile(p)?)).collect()
}

fn stem(p: &Path) -> Result<String> {
    p.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .with_context(|| format!("no file name in {}", p.display()))
}
