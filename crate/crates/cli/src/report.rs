//! Markdown tables and PGM central slices from a finished sweep.

use std::path::Path;

use mpibench_core::Volume;

use crate::config::ReportConfig;
use crate::error::{CliError, CliResult};
use crate::evaluate::write;
use crate::format::{parse_num, short, slug};
use crate::sweep::{load_summary, load_volume, SummaryRow};

pub const SLICE_DIR: &str = "slices";

/// Central slices as (name, width, height, gray levels), row-major.
pub fn central_slices(v: &Volume, data_range: f64) -> [(&'static str, usize, usize, Vec<u8>); 3] {
    let [nx, ny, nz] = v.dims();
    let gray = |x: f64| ((x / data_range).clamp(0.0, 1.0) * 255.0).round() as u8;
    let (cx, cy, cz) = (nx / 2, ny / 2, nz / 2);
    let mut xy = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            xy.push(gray(v.at(x, y, cz)));
        }
    }
    let mut xz = Vec::with_capacity(nx * nz);
    for z in 0..nz {
        for x in 0..nx {
            xz.push(gray(v.at(x, cy, z)));
        }
    }
    let mut yz = Vec::with_capacity(ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            yz.push(gray(v.at(cx, y, z)));
        }
    }
    [("xy", nx, ny, xy), ("xz", nx, nz, xz), ("yz", ny, nz, yz)]
}

/// Binary PGM with maxval 255.
pub fn pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

fn table(rows: &[SummaryRow], value: fn(&SummaryRow) -> (&str, String)) -> String {
    let mut pres: Vec<(usize, String)> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        let label = format!("τ={} k={}{}", r.tau, r.rank, if r.whitening { " W" } else { "" });
        if !pres.iter().any(|(p, _)| *p == r.pre) {
            pres.push((r.pre, label));
        }
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    pres.sort();
    let mut s = String::from("| method |");
    for (_, l) in &pres {
        s.push_str(&format!(" {l} |"));
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(pres.len()));
    s.push('\n');
    for m in methods {
        s.push_str(&format!("| {m} |"));
        for (p, _) in &pres {
            let cell = rows
                .iter()
                .find(|r| r.method == m && r.pre == *p)
                .map(|r| {
                    let (score, detail) = value(r);
                    match parse_num(score) {
                        Some(v) => format!("{} ({detail})", short(v)),
                        None => "–".to_string(),
                    }
                })
                .unwrap_or_else(|| "–".to_string());
            s.push_str(&format!(" {cell} |"));
        }
        s.push('\n');
    }
    s
}

/// Renders `report.md` and the slice images into `out`.
pub fn report(cfg: &ReportConfig, out: &Path) -> CliResult<usize> {
    if !(cfg.data_range > 0.0) {
        return Err(CliError::config("data_range must be positive"));
    }
    let rows = load_summary(&cfg.results)?;
    if rows.is_empty() {
        return Err(CliError::data(format!("{} holds no results", cfg.results.display())));
    }
    let slices = out.join(SLICE_DIR);
    std::fs::create_dir_all(&slices).map_err(|e| CliError::data(format!("{}: {e}", slices.display())))?;

    let mut md = String::from("# Reconstruction benchmark\n\n");
    md.push_str("## Best ε-PSNR (dB)\n\n");
    md.push_str(&table(&rows, |r| {
        (&r.best_eps_psnr, format!("{}, it {}", r.psnr_params, r.psnr_iteration))
    }));
    md.push_str("\n## Best ε-SSIM\n\n");
    md.push_str(&table(&rows, |r| {
        (&r.best_eps_ssim, format!("{}, it {}", r.ssim_params, r.ssim_iteration))
    }));
    md.push_str("\n## Central slices\n\n");
    let mut images = 0;
    for r in &rows {
        for (metric, rel) in [("psnr", &r.psnr_volume), ("ssim", &r.ssim_volume)] {
            if rel.is_empty() {
                continue;
            }
            let v = load_volume(&cfg.results.join(rel))?;
            let base = format!("{}_pre{}_{metric}", slug(&r.method), r.pre);
            md.push_str(&format!("### {} pre {} (best {metric})\n\n", r.method, r.pre));
            for (plane, w, h, px) in central_slices(&v, cfg.data_range) {
                let name = format!("{base}_{plane}.pgm");
                write(&slices.join(&name), &pgm(w, h, &px))?;
                md.push_str(&format!("- {plane}: `{SLICE_DIR}/{name}` ({w}×{h})\n"));
                images += 1;
            }
            md.push('\n');
        }
    }
    write(&out.join("report.md"), md.as_bytes())?;
    Ok(images)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_follow_axis_order_and_clamp() {
        let mut v = Volume::zeros([3, 4, 5], [1.0; 3]);
        let i = v.index(2, 1, 2);
        v.values[i] = 50.0;
        let j = v.index(0, 0, 2);
        v.values[j] = 500.0;
        let [xy, xz, yz] = central_slices(&v, 100.0);
        assert_eq!((xy.1, xy.2), (3, 4));
        assert_eq!(xy.3[3 + 2], 128);
        assert_eq!(xy.3[0], 255);
        assert_eq!((xz.1, xz.2), (3, 5));
        assert!(xz.3.iter().all(|&g| g == 0));
        assert_eq!((yz.1, yz.2), (4, 5));
        assert_eq!(yz.3[2 * 4 + 1], 0);
        let img = pgm(2, 1, &[0, 255]);
        assert_eq!(img, b"P5\n2 1\n255\n\x00\xff");
    }
}
