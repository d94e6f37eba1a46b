//! Subcommand bodies. Each resolves its settings, validates everything it can
//! before touching the filesystem, and writes outputs atomically.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use archshape::datagen::{gen_dataset, load_rows, Manifest, Split, SplitCounts, MANIFEST_NAME};
use archshape::evaluation::{evaluate, metrics, report_csv, summary_csv, ConfusionMatrix};
use archshape::files::{create_dir_all, load_grid, read_bytes, save_grid, write_atomic};
use archshape::geometry::{parse_mesh, standardize, voxelize as voxelize_mesh, MeshFormat};
use archshape::model::{build_model, load_checkpoint, save_checkpoint, ArchConfig};
use archshape::saliency::{
    bands_to_grid, compute_saliency, field_to_grid, matrix_csv, matrix_pgm, project, rank_bands, slice, Axis,
    ImportanceMode, Score, TargetSource,
};
use archshape::training::{format_sig9, log_csv, train as train_model, TrainConfig};
use archshape::{Error, FillMode, Label, Network, Result};

use crate::config::Layered;
use crate::{EvalArgs, GenDataArgs, SaliencyArgs, TrainArgs, VoxelizeArgs};

/// Comma-separated conv block widths.
#[derive(Debug, Clone, PartialEq)]
pub struct Channels(pub Vec<usize>);

impl FromStr for Channels {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::Argument(format!("bad channel count `{p}` in `{s}`")))
            })
            .collect::<Result<Vec<usize>>>()
            .map(Channels)
    }
}

/// Confusion counts `human_human,human_machine,machine_human,machine_machine`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counts(pub [[u64; 2]; 2]);

impl FromStr for Counts {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<u64> = s
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| Error::Argument(format!("bad count `{p}` in `{s}`"))))
            .collect::<Result<_>>()?;
        match v[..] {
            [hh, hm, mh, mm] => Ok(Counts([[hh, hm], [mh, mm]])),
            _ => Err(Error::Argument(format!("expected 4 comma-separated counts, got {}", v.len()))),
        }
    }
}

/// `axis=index`, e.g. `k=5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceSpec {
    pub axis: Axis,
    pub index: usize,
}

impl FromStr for SliceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, i) = s
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("slice `{s}` is not axis=index")))?;
        Ok(SliceSpec {
            axis: a.trim().parse()?,
            index: i
                .trim()
                .parse()
                .map_err(|_| Error::Argument(format!("bad slice index `{i}`")))?,
        })
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn extension(path: &Path) -> String {
    path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_model(path: &Path) -> Result<Network> {
    load_checkpoint(&read_bytes(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn voxelize(a: VoxelizeArgs) -> Result<()> {
    let c = Layered::load(a.config.as_deref(), &["in", "out", "res", "fill", "format"])?;
    let input: PathBuf = c.required("in", a.input)?;
    let out: PathBuf = c.required("out", a.out)?;
    let res = c.or("res", a.res, 32)?;
    let fill = c.or("fill", a.fill, FillMode::Solid)?;
    let format: Option<MeshFormat> = c.optional("format", a.format)?;

    let bytes = read_bytes(&input)?;
    let format = match format {
        Some(f) => f,
        None => MeshFormat::detect(&extension(&input), &bytes)?,
    };
    let mesh = parse_mesh(&bytes, format)?;
    let (mesh, report) = standardize(&mesh)?;
    let grid = voxelize_mesh(&mesh, res, fill)?;
    save_grid(&out, &grid)?;
    let [d, h, w] = grid.dims();
    println!("wrote {}", out.display());
    println!("dims {d}x{h}x{w}");
    println!("occupancy {}", format_sig9(grid.occupancy_fraction()));
    if report.dropped_elements > 0 {
        println!("dropped {} degenerate triangles", report.dropped_elements);
    }
    Ok(())
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let c = Layered::load(a.config.as_deref(), &["out", "train", "val", "test", "res", "seed"])?;
    let out: PathBuf = c.required("out", a.out)?;
    let counts = SplitCounts {
        train: c.required("train", a.train)?,
        val: c.or("val", a.val, 0)?,
        test: c.required("test", a.test)?,
    };
    let res = c.or("res", a.res, 32)?;
    let seed: u64 = c.required("seed", a.seed)?;
    let manifest = gen_dataset(counts, res, seed, &out)?;
    println!("wrote {}", out.join(MANIFEST_NAME).display());
    for split in Split::ALL {
        if counts.get(split) > 0 {
            let parts: Vec<String> = Label::ALL
                .iter()
                .map(|l| format!("{l} {}", manifest.count(split, *l)))
                .collect();
            println!("{split}: {}", parts.join(", "));
        }
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let c = Layered::load(
        a.config.as_deref(),
        &["data", "out", "log", "epochs", "lr", "momentum", "batch", "seed", "channels", "shuffle"],
    )?;
    let data: PathBuf = c.required("data", a.data)?;
    let out: PathBuf = c.required("out", a.out)?;
    let log = c.or("log", a.log, out.with_extension("csv"))?;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: c.or("lr", a.lr, d.learning_rate)?,
        momentum: c.or("momentum", a.momentum, d.momentum)?,
        batch_size: c.or("batch", a.batch, d.batch_size)?,
        epochs: c.or("epochs", a.epochs, d.epochs)?,
        seed: c.required("seed", a.seed)?,
        shuffle: c.or("shuffle", a.shuffle, d.shuffle)?,
    };
    if cfg.epochs == 0 {
        return Err(Error::Argument("--epochs must be >= 1".into()));
    }
    cfg.validate()?;
    let channels = c.or("channels", a.channels, Channels(vec![8, 16, 32, 64]))?;

    let manifest = Manifest::read(&data.join(MANIFEST_NAME))?;
    let train_rows = manifest.split(Split::Train);
    let Some(first) = train_rows.first() else {
        return Err(Error::Argument(format!("{} has no train rows", data.display())));
    };
    let val_split = if manifest.split(Split::Val).is_empty() { Split::Test } else { Split::Val };
    let val_rows = manifest.split(val_split);
    if val_rows.is_empty() {
        return Err(Error::Argument(format!("{} has neither val nor test rows", data.display())));
    }
    let res = load_grid(&data.join(&first.path))?.dims()[0];
    let arch = ArchConfig::new(res, channels.0, 2)?;
    let model = build_model(arch, cfg.seed)?;
    let train_set = load_rows(&train_rows, &data, res)?;
    let val_set = load_rows(&val_rows, &data, res)?;
    println!(
        "training on {} grids at {res}^3, validating on {} ({val_split} split)",
        train_set.len(),
        val_set.len()
    );
    let (model, records) = train_model(model, &train_set, &val_set, &cfg, |r| {
        println!(
            "epoch {:>3}/{}  train_loss {}  train_acc {}  val_loss {}  val_acc {}",
            r.epoch,
            cfg.epochs,
            format_sig9(r.train_loss),
            format_sig9(r.train_accuracy),
            format_sig9(r.val_loss),
            format_sig9(r.val_accuracy)
        );
    })?;
    write_atomic(&out, &save_checkpoint(&model))?;
    write_atomic(&log, log_csv(&records).as_bytes())?;
    println!("wrote {}", out.display());
    println!("wrote {}", log.display());
    Ok(())
}

fn print_summary(cm: &ConfusionMatrix, positive: Label) {
    println!("confusion matrix (rows: true, columns: predicted)");
    println!("{:>10}{:>10}{:>10}", "", "human", "machine");
    for t in Label::ALL {
        println!("{:>10}{:>10}{:>10}", t.as_str(), cm.get(t, Label::Human), cm.get(t, Label::Machine));
    }
    println!("positive class: {positive}");
    match metrics(cm, positive) {
        Ok(m) => {
            println!("accuracy {}", format_sig9(m.accuracy));
            println!("precision {}", format_sig9(m.precision));
            println!("recall {}", format_sig9(m.recall));
        }
        Err(e) => println!("metrics: {e}"),
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let c = Layered::load(a.config.as_deref(), &["model", "data", "split", "out", "positive", "matrix"])?;
    let positive = c.or("positive", a.positive, Label::Machine)?;
    if let Some(Counts(counts)) = c.optional("matrix", a.matrix)? {
        let cm = ConfusionMatrix::from_counts(counts);
        if let Some(out) = c.optional::<PathBuf>("out", a.out)? {
            write_atomic(&out, summary_csv(&cm, positive).as_bytes())?;
            println!("wrote {}", out.display());
        }
        print_summary(&cm, positive);
        return Ok(());
    }
    let model_path: PathBuf = c.required("model", a.model)?;
    let data: PathBuf = c.required("data", a.data)?;
    let split = c.or("split", a.split, Split::Test)?;
    let out = c.or("out", a.out, model_path.with_extension("report.csv"))?;

    let model = load_model(&model_path)?;
    let manifest = Manifest::read(&data.join(MANIFEST_NAME))?;
    let rows = manifest.split(split);
    if rows.is_empty() {
        return Err(Error::Argument(format!("{} has no {split} rows", data.display())));
    }
    let report = evaluate(&model, &rows, &data, positive)?;
    write_atomic(&out, report_csv(&report).as_bytes())?;
    println!("evaluated {} {split} grids", report.items.len());
    print_summary(&report.matrix, positive);
    println!("wrote {}", out.display());
    Ok(())
}

pub fn saliency(a: SaliencyArgs) -> Result<()> {
    let c = Layered::load(
        a.config.as_deref(),
        &["model", "in", "out", "mode", "target", "label", "score", "proj", "slice", "ranks"],
    )?;
    let model_path: PathBuf = c.required("model", a.model)?;
    let input: PathBuf = c.required("in", a.input)?;
    let prefix = c.or("out", a.out, input.with_extension(""))?;
    let mode = c.or("mode", a.mode, ImportanceMode::Abs)?;
    let target = c.or("target", a.target, TargetSource::Predicted)?;
    let label: Option<Label> = c.optional("label", a.label)?;
    let score = c.or("score", a.score, Score::Logit)?;
    let projections: Vec<Axis> = c.list("proj", a.proj)?;
    let slices: Vec<SliceSpec> = c.list("slice", a.slice)?;
    let ranks = c.switch("ranks", a.ranks)?;
    if target == TargetSource::TrueLabel && label.is_none() {
        return Err(Error::Argument("--target true needs --label h|m".into()));
    }

    let model = load_model(&model_path)?;
    let grid = load_grid(&input)?;
    let dims = grid.dims();
    for s in &slices {
        let extent = dims[s.axis.index()];
        if s.index >= extent {
            return Err(Error::Argument(format!(
                "slice {}={} out of range (extent {extent})",
                s.axis.as_str(),
                s.index
            )));
        }
    }
    let result = compute_saliency(&model, &grid, mode, target, label, score)?;
    let bands = if ranks { Some(rank_bands(&result.normalized, &grid)?) } else { None };

    let mut outputs: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    outputs.push((
        with_suffix(&prefix, "_norm.vxg"),
        archshape::geometry::write_voxel_file(&field_to_grid(&result.normalized)?),
    ));
    for axis in projections {
        let p = project(&result.normalized, axis).values;
        let stem = with_suffix(&prefix, &format!("_proj_{}", axis.as_str()));
        outputs.push((with_suffix(&stem, ".pgm"), matrix_pgm(&p).into_bytes()));
        outputs.push((with_suffix(&stem, ".csv"), matrix_csv(&p).into_bytes()));
    }
    for s in slices {
        let m = slice(&result.normalized, s.axis, s.index)?;
        let stem = with_suffix(&prefix, &format!("_slice_{}{}", s.axis.as_str(), s.index));
        outputs.push((with_suffix(&stem, ".pgm"), matrix_pgm(&m).into_bytes()));
        outputs.push((with_suffix(&stem, ".csv"), matrix_csv(&m).into_bytes()));
    }
    if let Some(b) = &bands {
        outputs.push((
            with_suffix(&prefix, "_ranks.vxg"),
            archshape::geometry::write_voxel_file(&bands_to_grid(b)?),
        ));
    }
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir_all(dir)?;
    }
    let probs = model.predict(&archshape::Tensor::from_vec(&[1, 1, dims[0], dims[1], dims[2]], grid.to_f64())?)?;
    println!(
        "target class {} ({}), p_human {}, p_machine {}",
        Label::from_index(result.target_class)?,
        match target {
            TargetSource::TrueLabel => "true label",
            TargetSource::Predicted => "predicted",
        },
        format_sig9(probs.data()[0]),
        format_sig9(probs.data()[1])
    );
    for (path, bytes) in outputs {
        write_atomic(&path, &bytes)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
