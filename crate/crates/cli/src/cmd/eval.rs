use std::collections::BTreeSet;
use std::path::Path;

use virtstain_core::quantify::{emit_boxplot_svg, evaluate_pair, DensityReport, StainRef};
use virtstain_core::Slide;

use crate::args::EvalArgs;
use crate::util::{create_dir, ppm_files, sorted_entries, write_file, CliError, CliResult};

fn pair_ids(dir: &Path) -> CliResult<BTreeSet<String>> {
    let dirs = sorted_entries(dir, |p| p.is_dir())?;
    Ok(dirs.iter().filter_map(|p| p.file_name()?.to_str().map(str::to_string)).collect())
}

fn virtual_ids(dir: &Path) -> CliResult<BTreeSet<String>> {
    Ok(ppm_files(dir)?.iter().filter_map(|p| p.file_stem()?.to_str().map(str::to_string)).collect())
}

pub fn run(a: EvalArgs) -> CliResult {
    let stains: Vec<StainRef> = StainRef::defaults()
        .into_iter()
        .map(|s| StainRef::new(s.name, s.ref_color, a.tol))
        .collect::<Result<_, _>>()?;
    let real = pair_ids(&a.pairs)?;
    let virt = virtual_ids(&a.virtual_dir)?;
    let only_real: Vec<&String> = real.difference(&virt).collect();
    let only_virt: Vec<&String> = virt.difference(&real).collect();
    if !only_real.is_empty() || !only_virt.is_empty() {
        return Err(CliError::Data(format!(
            "unpaired ids: missing virtual slide for {only_real:?}; no real pair for {only_virt:?}"
        )));
    }
    if real.is_empty() {
        return Err(CliError::Data(format!("no pairs in {}", a.pairs.display())));
    }

    let mut report = DensityReport::default();
    for id in &real {
        let r = Slide::load_ppm(a.pairs.join(id).join("b.ppm"))?;
        let v = Slide::load_ppm(a.virtual_dir.join(format!("{id}.ppm")))?;
        report.rows.extend(evaluate_pair(id, &r, &v, &stains)?);
    }

    create_dir(&a.out)?;
    report.save_csv(a.out.join("report.csv"))?;
    emit_boxplot_svg(&report, a.out.join("boxplot.svg"))?;
    let mut summary = format!("pairs {}\ntol {}\n", real.len(), a.tol);
    summary.push_str(&report.summary_text()?);
    write_file(&a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
