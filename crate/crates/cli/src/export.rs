//! CSV and gnuplot writers for fields and profiles.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use jumpreach_core::solver::snapshot::{slice_header, write_slice_csv};
use jumpreach_core::{Axis, VProfile};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.display().to_string(), source }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, ExportError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(io(path))?))
}

/// One slice, columns `a.., [b], value_name`.
pub fn slice_csv(path: &Path, a_axes: &[Axis], b_axis: Option<&Axis>, values: &[f64], value_name: &str) -> Result<(), ExportError> {
    let out = create(path)?;
    write_slice_csv(out, a_axes, b_axis, values, value_name).map_err(|source| ExportError::Csv {
        path: path.display().to_string(),
        source,
    })
}

fn profile_rows(profile: &VProfile) -> impl Iterator<Item = (Vec<f64>, Option<f64>)> + '_ {
    let n = profile.a_axes.len();
    profile.values.iter().enumerate().map(move |(p, v)| {
        let mut rest = p;
        let mut a = vec![0.0; n];
        for i in (0..n).rev() {
            let c = profile.a_axes[i].count;
            a[i] = profile.a_axes[i].point(rest % c);
            rest /= c;
        }
        (a, *v)
    })
}

/// `V` over the state grid, columns `a.., V`; unreachable points as `inf`.
pub fn profile_csv(path: &Path, profile: &VProfile) -> Result<(), ExportError> {
    let csv_err = |source| ExportError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(slice_header(profile.a_axes.len(), false, "V")).map_err(csv_err)?;
    for (a, v) in profile_rows(profile) {
        let mut row: Vec<String> = a.iter().map(f64::to_string).collect();
        row.push(v.map_or_else(|| "inf".to_string(), |v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io(path))
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    let pad = (0.05 * (hi - lo)).max(0.5);
    (lo - pad, hi + pad)
}

/// Writes `w_t0.dat`, `v_t0.dat` and `plot.gp` into `dir` for a scalar state.
/// The script renders `w_t0.svg` (W slices against `a`, one curve per
/// budget node sampled) and `v_t0.svg`. Ranges are fixed explicitly so flat
/// fields do not trigger gnuplot's empty-range warnings.
pub fn gnuplot_bundle(dir: &Path, a_axis: &Axis, b_axis: &Axis, w: &[f64], profile: &VProfile) -> Result<(), ExportError> {
    let nb = b_axis.count;
    let stride = nb.div_ceil(8).max(1);
    let curves: Vec<usize> = (0..nb).step_by(stride).collect();

    let path = dir.join("w_t0.dat");
    let mut out = create(&path)?;
    for (block, &j) in curves.iter().enumerate() {
        if block > 0 {
            writeln!(out, "\n").map_err(io(&path))?;
        }
        let b = b_axis.min + b_axis.step() * j as f64;
        writeln!(out, "# b = {b}").map_err(io(&path))?;
        for p in 0..a_axis.count {
            writeln!(out, "{} {}", a_axis.point(p), w[p * nb + j]).map_err(io(&path))?;
        }
    }
    out.flush().map_err(io(&path))?;

    let path = dir.join("v_t0.dat");
    let mut out = create(&path)?;
    writeln!(out, "# a V").map_err(io(&path))?;
    for (a, v) in profile_rows(profile) {
        if let Some(v) = v {
            writeln!(out, "{} {}", a[0], v).map_err(io(&path))?;
        }
    }
    out.flush().map_err(io(&path))?;

    let (wlo, whi) = padded_range(
        w.iter().copied().fold(f64::INFINITY, f64::min),
        w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let mut script = String::new();
    script.push_str("set terminal svg size 800,600\n");
    script.push_str(&format!("set xrange [{}:{}]\n", a_axis.min, a_axis.max));
    script.push_str("set xlabel 'a'\n");
    script.push_str("set output 'w_t0.svg'\nset ylabel 'W(0, a, b)'\n");
    script.push_str(&format!("set yrange [{wlo}:{whi}]\n"));
    let titles: Vec<String> = curves.iter().map(|&j| format!("b={}", b_axis.min + b_axis.step() * j as f64)).collect();
    script.push_str(&format!("titles = \"{}\"\n", titles.join(" ")));
    script.push_str(&format!(
        "plot for [i=0:{}] 'w_t0.dat' index i using 1:2 with lines title word(titles, i + 1)\n",
        curves.len() - 1
    ));
    script.push_str("set output 'v_t0.svg'\nset ylabel 'V(0, a)'\n");
    match profile.max_finite() {
        Some(top) => {
            let bottom = profile.values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            let (lo, hi) = padded_range(bottom, top);
            script.push_str(&format!("set yrange [{lo}:{hi}]\n"));
            script.push_str("plot 'v_t0.dat' using 1:2 with linespoints title 'V'\n");
        }
        None => {
            script.push_str("set yrange [0:1]\nset label 1 'no reachable budget on the grid' at graph 0.3, graph 0.5\n");
            script.push_str("plot 0 notitle with lines lt -2\n");
        }
    }
    script.push_str("unset output\n");
    let path = dir.join("plot.gp");
    fs::write(&path, script).map_err(io(&path))
}
