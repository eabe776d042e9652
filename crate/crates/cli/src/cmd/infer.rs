use std::time::Instant;

use virtstain_core::cyclegan::load_checkpoint;
use virtstain_core::tiling::{collect_running_stats, run_strategy, seam_index, InferenceStrategy, LayerStatsTable};
use virtstain_core::{Model, Slide};

use crate::args::{CollectStatsArgs, Direction, InferArgs, Strategy};
use crate::util::{load_slides, metrics_text, write_file, CliError, CliResult};

fn load_generator(path: &std::path::Path, dir: Direction) -> CliResult<Model> {
    let ck = load_checkpoint(path)?;
    Ok(match dir {
        Direction::Ab => ck.nets.g_ab,
        Direction::Ba => ck.nets.g_ba,
    })
}

pub fn run(a: InferArgs) -> CliResult {
    let strategy = match a.strategy {
        Strategy::Naive => InferenceStrategy::Naive { tile: a.tile },
        Strategy::Global => {
            let path = a.stats.as_ref().ok_or_else(|| CliError::Usage("--strategy global requires --stats".into()))?;
            InferenceStrategy::GlobalStats { table: LayerStatsTable::load(path)?, tile: a.tile }
        }
        Strategy::Sliding => InferenceStrategy::Sliding { effective: a.effective, window: a.window },
    };
    strategy.validate()?;
    let model = load_generator(&a.model, a.direction)?;
    if let InferenceStrategy::GlobalStats { table, .. } = &strategy {
        table.check_model(&model)?;
    }
    let slide = Slide::load_ppm(&a.input)?;

    let start = Instant::now();
    let out = run_strategy(&model, &slide, &strategy)?;
    let runtime = start.elapsed().as_secs_f64();
    out.save_ppm(&a.out)?;

    let seam = seam_index(&out, &strategy.boundaries(out.width(), out.height())?).ok();
    let mut entries = vec![
        ("strategy", strategy.name().to_string()),
        ("width", out.width().to_string()),
        ("height", out.height().to_string()),
    ];
    match &strategy {
        InferenceStrategy::Naive { tile } | InferenceStrategy::GlobalStats { tile, .. } => {
            entries.push(("tile", tile.to_string()))
        }
        InferenceStrategy::Sliding { effective, window } => {
            entries.push(("effective", effective.to_string()));
            entries.push(("window", window.to_string()));
        }
    }
    // A slide covered by a single tile has no seams.
    entries.push(("seam_index", seam.map_or("none".into(), |v| v.to_string())));
    entries.push(("mean_channel_std", out.mean_channel_std().to_string()));
    entries.push(("runtime_s", format!("{runtime:.3}")));
    let text = metrics_text(&entries);
    let metrics_path = a.metrics.unwrap_or_else(|| a.out.with_extension("metrics.txt"));
    write_file(&metrics_path, &text)?;
    print!("{text}");
    Ok(())
}

pub fn collect_stats(a: CollectStatsArgs) -> CliResult {
    let model = load_generator(&a.model, a.direction)?;
    let tiles: Vec<_> = load_slides(&a.tiles, a.limit)?.iter().map(|s| s.to_tensor()).collect();
    let table = collect_running_stats(&model, &tiles)?;
    table.save(&a.out)?;
    println!("tiles {}", tiles.len());
    println!("layers {}", table.layers().len());
    Ok(())
}
