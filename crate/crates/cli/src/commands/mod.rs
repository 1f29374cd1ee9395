pub mod analyze;
pub mod delay;
pub mod density;
pub mod discover;

use std::path::Path;

use zidlab::gridworld::MapSpec;

use crate::CliError;

pub fn load_map(path: &Path) -> Result<MapSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    MapSpec::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn check_variant(spec: &MapSpec, variant: usize) -> Result<(), CliError> {
    if variant > spec.disabled_edges.len() {
        return Err(CliError::Validation(format!(
            "variant {variant} requested but the map lists only {} disabled moves",
            spec.disabled_edges.len()
        )));
    }
    Ok(())
}

pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}
