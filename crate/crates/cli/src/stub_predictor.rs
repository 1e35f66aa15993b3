//! External predictor speaking the exchange protocol around the
//! in-process tissue-code stub, for exercising the process boundary.
//!
//! ```text
//! brainsynth-stub-predictor [--schema s.json] --metadata
//! brainsynth-stub-predictor [--schema s.json] <in.nii> <out.nii>
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

use brainsynth::inference::{Predictor, Sidecar, TissueCodeStub};
use brainsynth::nifti;
use brainsynth::report::write_json;
use brainsynth::{Error, LabelSchema, Result};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "brainsynth-stub-predictor", version, about = "Tissue-code stub predictor")]
struct StubArgs {
    #[arg(long)]
    schema: Option<PathBuf>,

    /// Print the predictor metadata as JSON and exit.
    #[arg(long)]
    metadata: bool,

    #[arg(required_unless_present = "metadata")]
    input: Option<PathBuf>,

    #[arg(required_unless_present = "metadata")]
    output: Option<PathBuf>,
}

fn serve(args: &StubArgs) -> Result<()> {
    let schema = match &args.schema {
        Some(p) => LabelSchema::from_json_file(p)?,
        None => LabelSchema::brain(),
    };
    let stub = TissueCodeStub::new(schema.clone());
    if args.metadata {
        println!("{}", serde_json::to_string(stub.metadata())?);
        return Ok(());
    }
    let (input, output) = (args.input.as_ref().unwrap(), args.output.as_ref().unwrap());
    let scan = nifti::read_intensity(input)?;
    if !scan.grid().is_1mm() {
        return Err(Error::InvalidArgument(format!(
            "request must be 1mm isotropic, got {:?}",
            scan.grid().voxel_size()
        )));
    }
    let stack = stub.predict(&scan)?;
    nifti::write_stack(&stack, output)?;
    write_json(&Sidecar::for_schema(&schema), &Sidecar::path_for(output))
}

pub fn main() -> ExitCode {
    let args = StubArgs::parse();
    match serve(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("brainsynth-stub-predictor: {e}");
            ExitCode::FAILURE
        }
    }
}
