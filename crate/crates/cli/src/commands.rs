use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use embgeo::anisotropy::CenteringMode;
use embgeo::intrinsic::Aggregation;
use embgeo::pipeline::{analyze_dump, build_series, AnalysisConfig, LayerSelection, Metric};
use embgeo::report::{
    profile_csv, profile_json, render_svg, series_csv, series_json, series_layers_csv, ProfileReport,
    ReportDocument, SeriesReport,
};
use embgeo::synth::{synthetic_dump, SyntheticKind, SyntheticSpec};
use embgeo::{read_dump, write_dump, ActivationDump, ErrorClass};

use crate::args::{AggregationArg, AnalyzeArgs, FormatArg, MetricArg, MetricArgs, SeriesArgs, SynthArgs};
use crate::{EXIT_DATA, EXIT_NUMERICAL, EXIT_USAGE};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io { path: PathBuf, source: io::Error },
    Core { context: String, source: embgeo::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_DATA,
            CliError::Core { source, .. } => match source.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

fn core(context: impl fmt::Display) -> impl FnOnce(embgeo::Error) -> CliError {
    let context = context.to_string();
    move |source| CliError::Core { context, source }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

fn load(path: &Path) -> Result<ActivationDump, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_dump(BufReader::new(file)).map_err(core(path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let specs = args
        .layers
        .iter()
        .enumerate()
        .map(|(i, kind)| {
            let kind: SyntheticKind = kind.parse().map_err(|e: embgeo::Error| CliError::Usage(e.to_string()))?;
            Ok(SyntheticSpec {
                kind,
                ambient_dim: args.ambient,
                n_samples: args.n_samples,
                seed: args.seed.wrapping_add(i as u64),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let dump = synthetic_dump(&specs, args.step).map_err(core("synthetic spec"))?;
    let file = File::create(&args.out).map_err(io_err(&args.out))?;
    let mut w = BufWriter::new(file);
    write_dump(&dump.manifest, &dump.layers, &mut w).map_err(core(args.out.display()))?;
    w.flush().map_err(io_err(&args.out))
}

fn config_from(args: &MetricArgs) -> Result<AnalysisConfig, CliError> {
    let metric = match args.metric {
        MetricArg::AnisotropySvd => Metric::AnisotropySvd,
        MetricArg::AnisotropyCosine => Metric::AnisotropyCosine,
        MetricArg::IdTwonn => Metric::IdTwonn,
        MetricArg::IdMada => Metric::IdMada,
        MetricArg::IdMom => Metric::IdMom,
    };
    let mut cfg = AnalysisConfig::new(metric);
    if metric.is_intrinsic_dimension() {
        if args.center {
            eprintln!("warning: --center has no effect on {metric}; ignored");
        }
    } else {
        if args.center {
            cfg.centering = CenteringMode::Centered;
        }
        for (set, flag) in [
            (args.twonn_discard.is_some(), "--twonn-discard"),
            (args.k_mada.is_some(), "--k-mada"),
            (args.k_mom.is_some(), "--k-mom"),
            (args.mada_aggregation.is_some(), "--mada-aggregation"),
        ] {
            if set {
                eprintln!("warning: {flag} has no effect on {metric}; ignored");
            }
        }
    }
    cfg.batch_floor = args.batch_min;
    cfg.shuffle_seed = args.seed;
    if args.shuffle {
        cfg.shuffle = true;
    } else if args.no_shuffle {
        cfg.shuffle = false;
    }
    if let Some(layers) = &args.layers {
        cfg.layer_selection = LayerSelection::Indices(layers.clone());
    }
    let p = &mut cfg.estimator_params;
    if let Some(f) = args.twonn_discard {
        p.twonn_discard_fraction = f;
    }
    if let Some(k) = args.k_mada {
        p.k_mada = k;
    }
    if let Some(k) = args.k_mom {
        p.k_mom = k;
    }
    if let Some(a) = args.mada_aggregation {
        p.mada_aggregation = match a {
            AggregationArg::Mean => Aggregation::Mean,
            AggregationArg::Median => Aggregation::Median,
        };
    }
    if let Some(t) = args.duplicate_tol {
        p.duplicate_tolerance = t;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let mut formats = args.format.clone();
    formats.dedup();
    if formats.len() > 1 && args.out.is_none() {
        return Err(CliError::Usage("--out is required when writing more than one format".into()));
    }
    let cfg = config_from(&args.metric)?;
    let dump = load(&args.input)?;
    let profiles = analyze_dump(&dump, &cfg).map_err(core(args.input.display()))?;

    for &format in &formats {
        let text = match format {
            FormatArg::Csv => profile_csv(&profiles),
            FormatArg::Json => profile_json(&ProfileReport {
                model_name: &dump.manifest.model_name,
                checkpoint_step: dump.manifest.checkpoint_step,
                config: &cfg,
                profiles: &profiles,
            }),
            FormatArg::Svg => {
                let title = format!("{} (step {})", dump.manifest.model_name, dump.manifest.checkpoint_step);
                let doc = ReportDocument::from_profiles(title, cfg.metric.name(), &profiles);
                render_svg(&doc).map_err(core("svg"))?
            }
        };
        match &args.out {
            None => io::stdout()
                .write_all(text.as_bytes())
                .map_err(io_err(Path::new("<stdout>")))?,
            Some(out) if formats.len() == 1 => write_text(out, &text)?,
            Some(out) => write_text(&out.with_extension(format.extension()), &text)?,
        }
    }
    Ok(())
}

pub fn series(args: &SeriesArgs) -> Result<(), CliError> {
    let cfg = config_from(&args.metric)?;
    let dumps = args.inputs.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    let series = build_series(&dumps, &cfg).map_err(core("series"))?;

    fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    let dir = &args.out_dir;
    write_text(&dir.join("series.json"), &series_json(&SeriesReport { config: &cfg, series: &series }))?;
    write_text(&dir.join("series.csv"), &series_csv(&series))?;
    write_text(&dir.join("series_layers.csv"), &series_layers_csv(&series))?;
    let svg = render_svg(&ReportDocument::from_series_means(&series)).map_err(core("svg"))?;
    write_text(&dir.join("series.svg"), &svg)?;
    if args.per_layer_svg {
        let svg = render_svg(&ReportDocument::from_series_layers(&series)).map_err(core("svg"))?;
        write_text(&dir.join("series_layers.svg"), &svg)?;
    }
    Ok(())
}
