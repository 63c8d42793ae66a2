//! Density values on grids, for plotting 1D and 2D fits.

use std::fmt::Write as _;

use bitfit_core::{log_pdf, Dataset, MixtureParams};

use crate::Error;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridSpec {
    /// Points per axis; 512 in 1D and 128 in 2D when unset.
    pub points: Option<usize>,
    /// Per-axis span; defaults to the data mean ± 3 std devs, widened to
    /// cover every point.
    pub span: Option<Vec<(f64, f64)>>,
}

/// Delimited text tables, one per file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    /// Columns `x,pdf` (1D) or `x,y,pdf` (2D).
    pub density: String,
    /// The density column replaced by one weighted column per component.
    pub components: String,
    pub sample: String,
}

fn default_span(data: &Dataset) -> Vec<(f64, f64)> {
    let means = data.means();
    let sds = data.std_devs();
    data.bounds()
        .iter()
        .enumerate()
        .map(|(k, (lo, hi))| ((means[k] - 3.0 * sds[k]).min(*lo), (means[k] + 3.0 * sds[k]).max(*hi)))
        .collect()
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn component_pdf(params: &MixtureParams, weights: &[f64], i: usize, x: &[f64]) -> f64 {
    let mut v = weights[i];
    for (nu, xv) in x.iter().enumerate() {
        let s = params.width(i, nu);
        let z = (xv - params.mean(i, nu)) / s;
        v *= (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    }
    v
}

pub fn plot_data(params: &MixtureParams, data: &Dataset, grid: &GridSpec) -> Result<PlotData, Error> {
    let d = params.n_dim;
    if d > 2 {
        return Err(Error::Usage(format!(
            "plotting supports 1 or 2 dimensions, model has {d}"
        )));
    }
    if data.n_dim() != d {
        return Err(Error::Usage(format!(
            "dataset has {} dimensions, model has {d}",
            data.n_dim()
        )));
    }
    let span = match &grid.span {
        Some(s) if s.len() == d => s.clone(),
        Some(_) => return Err(Error::Usage("grid span must give one range per dimension".into())),
        None => default_span(data),
    };
    let n = grid.points.unwrap_or(if d == 1 { 512 } else { 128 });
    if n == 0 {
        return Err(Error::Usage("grid needs at least one point".into()));
    }
    let weights = params.weights()?;
    let axes: Vec<Vec<f64>> = span.iter().map(|(lo, hi)| axis(*lo, *hi, n)).collect();
    let coords: Vec<&str> = ["x", "y"][..d].to_vec();

    let mut density = format!("{},pdf\n", coords.join(","));
    let mut components = coords.join(",");
    for i in 0..params.n_components() {
        let _ = write!(components, ",c{i}");
    }
    components.push('\n');

    let mut emit = |x: &[f64]| -> Result<(), Error> {
        let cells: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(density, "{},{}", cells.join(","), log_pdf(x, params)?.exp());
        components.push_str(&cells.join(","));
        for i in 0..params.n_components() {
            let _ = write!(components, ",{}", component_pdf(params, &weights, i, x));
        }
        components.push('\n');
        Ok(())
    };
    if d == 1 {
        for &x in &axes[0] {
            emit(&[x])?;
        }
    } else {
        for &y in &axes[1] {
            for &x in &axes[0] {
                emit(&[x, y])?;
            }
        }
    }
    let mut sample = format!("{}\n", coords.join(","));
    sample.push_str(&crate::io::format_dataset(data));
    Ok(PlotData {
        density,
        components,
        sample,
    })
}
