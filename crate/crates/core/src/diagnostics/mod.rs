//! Loss, gradient norm, gradient noise, sharpness and the
//! edge-of-stability ratio along trajectories.

mod epochs;
mod precision;
mod quantities;
mod record;
mod sharpness;

use std::io::Write;

pub use epochs::{epoch_loss_series, epoch_losses, EpochLossPair};
pub use precision::{precision_sweep, write_precision_csv, PrecisionRow};
pub use quantities::{full_quantities, quantities_on, Quantities};
pub use record::{diagnose_trajectory, eos_ratio, write_diagnostics_csv, DiagnoseOptions, DiagnosticsRecord, DIAGNOSTICS_COLUMNS};
pub use sharpness::{sharpness, PowerIteration, Sharpness};

use crate::error::Result;
use crate::numeric::format_float;

/// Columns `epoch,moving_loss,fixed_loss`.
pub fn write_epoch_csv<W: Write>(w: W, pairs: &[EpochLossPair]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "moving_loss", "fixed_loss"])?;
    for p in pairs {
        out.write_record([p.epoch.to_string(), format_float(p.moving), format_float(p.fixed)])?;
    }
    out.flush()?;
    Ok(())
}
