use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use log::info;
use virtstain_core::config::RunConfig;
use virtstain_core::cyclegan::{load_checkpoint, save_checkpoint, Checkpoint, CycleGan, LossReport};
use virtstain_core::{Error, Tensor};

use crate::args::TrainArgs;
use crate::util::{create_dir, load_slides, metrics_text, write_file, CliError, CliResult};

fn loss_header() -> String {
    format!("iteration,{}\n", LossReport::KEYS.join(","))
}

fn loss_row(iteration: u64, r: &LossReport) -> String {
    let mut s = iteration.to_string();
    for (_, v) in r.entries() {
        let _ = write!(s, ",{v}");
    }
    s.push('\n');
    s
}

/// Rows of an existing loss log up to and including `iteration`.
fn kept_loss_rows(path: &Path, iteration: u64) -> CliResult<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = loss_header();
    for line in text.lines().skip(1) {
        let it: u64 = line
            .split(',')
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Data(format!("{}: malformed row '{line}'", path.display())))?;
        if it <= iteration {
            out.push_str(line);
            out.push('\n');
        }
    }
    Ok(out)
}

fn load_tiles(dir: &Path) -> CliResult<Vec<Tensor>> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!("training data directory {} does not exist", dir.display())));
    }
    Ok(load_slides(dir, None)?.iter().map(|s| s.to_tensor()).collect())
}

pub fn run(a: TrainArgs) -> CliResult {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(k) = a.workers {
        cfg.hyper.workers = k as usize;
    }
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(d) = &a.data {
        cfg.data_dir = d.clone();
    }
    cfg.validate()?;

    let tiles_a = load_tiles(&cfg.data_dir.join("train").join("a"))?;
    let tiles_b = load_tiles(&cfg.data_dir.join("train").join("b"))?;

    create_dir(&a.out)?;
    write_file(&a.out.join("config.txt"), cfg.to_text())?;
    let loss_path = a.out.join("loss.csv");

    let (mut gan, log_prefix) = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            if ck.gen_cfg != cfg.generator || ck.disc_cfg != cfg.discriminator {
                return Err(CliError::Data(format!(
                    "checkpoint {} was trained with a different network configuration",
                    path.display()
                )));
            }
            if ck.adam.is_none() {
                return Err(CliError::Data(format!("checkpoint {} has no optimizer state", path.display())));
            }
            let it = ck.iteration;
            let prefix = if loss_path.exists() { kept_loss_rows(&loss_path, it)? } else { loss_header() };
            (ck.into_state(Some(cfg.hyper.workers))?, prefix)
        }
        None => (CycleGan::new(cfg.generator, cfg.discriminator, cfg.hyper)?, loss_header()),
    };

    let mut log = fs::File::create(&loss_path).map_err(|e| Error::io(&loss_path, e))?;
    log.write_all(log_prefix.as_bytes()).map_err(|e| Error::io(&loss_path, e))?;

    let start = Instant::now();
    let first = gan.iteration();
    while gan.iteration() < cfg.iterations {
        let report = gan.train_on(&tiles_a, &tiles_b)?;
        let it = gan.iteration();
        log.write_all(loss_row(it, &report).as_bytes()).map_err(|e| Error::io(&loss_path, e))?;
        if it % 50 == 0 || it == cfg.iterations {
            info!(
                "iteration {it}: cyc {:.4} D {:.4} ({:.1}s)",
                report.cyc_a + report.cyc_b,
                report.d_a + report.d_b,
                start.elapsed().as_secs_f64()
            );
        }
        if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 && it < cfg.iterations {
            save_checkpoint(&Checkpoint::from_state(&gan, true), a.out.join(format!("ckpt_{it:06}.ckpt")))?;
            log.flush().map_err(|e| Error::io(&loss_path, e))?;
        }
    }
    log.flush().map_err(|e| Error::io(&loss_path, e))?;

    let final_path = a.out.join("final.ckpt");
    save_checkpoint(&Checkpoint::from_state(&gan, true), &final_path)?;
    let checksum = format!("{:08x}", gan.networks().checksum());
    let metrics = metrics_text(&[
        ("iterations", gan.iteration().to_string()),
        ("resumed_from", first.to_string()),
        ("checksum", checksum.clone()),
        ("runtime_s", format!("{:.3}", start.elapsed().as_secs_f64())),
    ]);
    write_file(&a.out.join("train_metrics.txt"), metrics)?;
    println!("checksum {checksum}");
    println!("final_checkpoint {}", final_path.display());
    Ok(())
}
