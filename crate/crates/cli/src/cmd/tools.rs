use virtstain_core::config::RunConfig;
use virtstain_core::cyclegan::{discriminator_layers, generator_layers, loss_suite};
use virtstain_core::nncore::gradcheck::{layer_suite, FD_STEP, GRAD_TOLERANCE};
use virtstain_core::nncore::receptive_field;
use virtstain_core::tiling::{make_grid, seam_index};
use virtstain_core::Slide;

use crate::args::{GradcheckArgs, RfArgs, SeamArgs};
use crate::util::{CliError, CliResult};

/// Receptive field quoted for the reference generator.
const REFERENCE_GENERATOR_RF: usize = 207;

pub fn seam(a: SeamArgs) -> CliResult {
    let slide = Slide::load_ppm(&a.input)?;
    let grid = make_grid(slide.width(), slide.height(), a.tile, a.stride.unwrap_or(a.tile))?;
    let v = seam_index(&slide, &grid.placement_boundaries())?;
    println!("seam_index {v}");
    Ok(())
}

pub fn rf(a: RfArgs) -> CliResult {
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let g = receptive_field(&generator_layers(&cfg.generator)?)?;
    let d = receptive_field(&discriminator_layers(&cfg.discriminator)?)?;
    println!("generator.rf {}", g.rf);
    println!("generator.jump {}", g.jump);
    println!("generator.reference_rf {REFERENCE_GENERATOR_RF}");
    println!("discriminator.rf {}", d.rf);
    println!("discriminator.jump {}", d.jump);
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> CliResult {
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    let layers = layer_suite(a.seed, FD_STEP)?.into_iter().map(|c| (c.name, c.shape, c.report));
    let losses = loss_suite(a.seed, FD_STEP)?.into_iter().map(|c| (c.name, c.shape, c.report));
    for (name, shape, report) in layers.chain(losses) {
        println!("{name} {shape} {:.3e} {}", report.max_rel_error, report.checked);
        worst = worst.max(report.max_rel_error);
        if !report.passed() {
            failed.push(format!("{name} {shape} ({})", report.worst));
        }
    }
    println!("max_rel_error {worst:e}");
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check above {GRAD_TOLERANCE:e} for: {}",
            failed.join(", ")
        )))
    }
}
