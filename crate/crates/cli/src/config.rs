use std::collections::hash_map::RandomState;
use std::hash::BuildHasher;
use std::path::{Path, PathBuf};

use brainsynth::inference::TileConfig;
use brainsynth::synth::{read_key_values, GeneratorConfig};
use brainsynth::{Error, LabelSchema, Result};

use crate::{Args, Command};

/// Everything a command needs, with config-file values overridden by flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    pub schema: LabelSchema,
    pub generator: GeneratorConfig,
    pub count: usize,
    pub workers: usize,
    pub predictor: Option<String>,
    pub tta: bool,
    pub tiling: TileConfig,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("{key}: '{value}' is not a boolean"))),
    }
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} {} does not exist", path.display())))
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl RunConfig {
    /// Reads the config file, applies flags on top and checks every path
    /// before any work starts.
    pub fn resolve(args: &Args) -> Result<Self> {
        let mut generator = GeneratorConfig::default();
        let mut inputs = Vec::new();
        let mut output = None;
        let mut schema_path = None;
        let mut count = 1;
        let mut workers = default_workers();
        let mut predictor = None;
        let mut tta = true;
        let mut tiling = TileConfig::default();

        if let Some(path) = &args.config {
            require_exists(path, "config file")?;
            for (key, value) in read_key_values(path)? {
                match key.as_str() {
                    "input" => inputs.push(PathBuf::from(value)),
                    "output" => output = Some(PathBuf::from(value)),
                    "schema" => schema_path = Some(PathBuf::from(value)),
                    "count" => count = parse(&key, &value)?,
                    "workers" => workers = parse(&key, &value)?,
                    "predictor" => predictor = Some(value),
                    "tta" => tta = parse_bool(&key, &value)?,
                    "tile_patch" => tiling.patch = parse(&key, &value)?,
                    "tile_overlap" => tiling.overlap = parse(&key, &value)?,
                    "tile_max_voxels" => tiling.max_voxels = parse(&key, &value)?,
                    _ => generator.set(&key, &value)?,
                }
            }
        }

        if !args.input.is_empty() {
            inputs = args.input.clone();
        }
        output = args.output.clone().or(output);
        schema_path = args.schema.clone().or(schema_path);
        count = args.count.unwrap_or(count);
        workers = args.workers.unwrap_or(workers);
        predictor = args.predictor.clone().or(predictor);
        if args.tta {
            tta = true;
        }
        if args.no_tta {
            tta = false;
        }
        if let Some(seed) = args.seed {
            generator.seed = seed;
        } else if args.random_seed {
            generator.seed = RandomState::new().hash_one(std::time::SystemTime::now());
            log::info!("random seed {}", generator.seed);
        }

        if workers == 0 {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        if tiling.patch == 0 || tiling.overlap >= tiling.patch {
            return Err(Error::InvalidArgument(format!(
                "tile overlap {} must be smaller than the patch {}",
                tiling.overlap, tiling.patch
            )));
        }
        generator.validate()?;
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("no --input given".into()));
        }
        for p in &inputs {
            require_exists(p, "input")?;
        }
        if args.command == Command::Evaluate && inputs.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "evaluate takes two inputs (predictions, references), got {}",
                inputs.len()
            )));
        }
        if args.command == Command::Segment && predictor.is_none() {
            return Err(Error::InvalidArgument("segment needs --predictor".into()));
        }
        let output = output.ok_or_else(|| Error::InvalidArgument("no --output given".into()))?;
        std::fs::create_dir_all(&output).map_err(|e| Error::Io {
            path: output.clone(),
            source: e,
        })?;
        let schema = match &schema_path {
            Some(p) => {
                require_exists(p, "schema")?;
                LabelSchema::from_json_file(p)?
            }
            None => LabelSchema::brain(),
        };

        Ok(RunConfig {
            command: args.command,
            inputs,
            output,
            schema,
            generator,
            count,
            workers,
            predictor,
            tta,
            tiling,
        })
    }
}
