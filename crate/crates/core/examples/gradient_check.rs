//! Finite-difference check of every model kind on its tiny configuration.

use eegdnet::cli::grad_check_kinds;
use eegdnet::model::ModelKind;

fn main() -> eegdnet::Result<()> {
    for c in grad_check_kinds(&ModelKind::ALL, 0, 1e-4)? {
        println!("{:<9} {:.2e} worst at {} -> {}", c.kind.name(), c.max_rel_error, c.worst, c.passed);
    }
    Ok(())
}
