use virtstain_core::synthdata::{make_eval_set_with, make_training_set_with, DomainParams};

use crate::args::SynthArgs;
use crate::util::{create_dir, metrics_text, write_file, CliResult};

pub fn run(a: SynthArgs) -> CliResult {
    let params = DomainParams { hidden_gain: a.hidden_gain, ..DomainParams::default() };
    let set = make_training_set_with(a.tiles as usize, a.tile_size as usize, a.seed, &params)?;
    let pairs = make_eval_set_with(a.pairs as usize, a.size as usize, a.size as usize, a.seed, &params)?;

    for (domain, tiles) in [("a", &set.tiles_a), ("b", &set.tiles_b)] {
        let dir = a.out.join("train").join(domain);
        create_dir(&dir)?;
        for (i, t) in tiles.iter().enumerate() {
            t.save_ppm(dir.join(format!("tile_{i:05}.ppm")))?;
        }
    }
    for (i, p) in pairs.iter().enumerate() {
        let dir = a.out.join("pairs").join(format!("pair_{i:03}"));
        create_dir(&dir)?;
        p.slide_a.save_ppm(dir.join("a.ppm"))?;
        p.slide_b.save_ppm(dir.join("b.ppm"))?;
        write_file(&dir.join("meta.csv"), p.sidecar_csv())?;
    }
    let resolved = metrics_text(&[
        ("tiles", a.tiles.to_string()),
        ("pairs", a.pairs.to_string()),
        ("size", a.size.to_string()),
        ("tile_size", a.tile_size.to_string()),
        ("seed", a.seed.to_string()),
        ("hidden_gain", a.hidden_gain.to_string()),
    ]);
    write_file(&a.out.join("synth.txt"), resolved)?;
    println!("tiles_a {}", set.tiles_a.len());
    println!("tiles_b {}", set.tiles_b.len());
    println!("pairs {}", pairs.len());
    Ok(())
}
