//! Forward-only evaluation over a dataset split and the fixed-format loss
//! report table.

use std::path::PathBuf;

use ndarray::Axis;

use crate::data::{load_image, make_masked_input, DatasetManifest, Mask};
use crate::error::{Error, Result};
use crate::objectives::{adv_loss_gen, rec_loss};
use crate::train::Models;

/// Per-model evaluation row: means over samples of the per-sample losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub model: String,
    pub l1: f64,
    pub mse: f64,
    pub adversarial: f64,
    pub samples: usize,
    pub manifest: PathBuf,
}

/// Mean squared elementwise difference.
pub fn mse_loss<D, A, B>(
    x: &ndarray::ArrayBase<A, D>,
    gx: &ndarray::ArrayBase<B, D>,
) -> Result<f64>
where
    D: ndarray::Dimension,
    A: ndarray::Data<Elem = f32>,
    B: ndarray::Data<Elem = f32>,
{
    if x.shape() != gx.shape() {
        return Err(Error::shape(
            "mse_loss",
            format!("{:?}", x.shape()),
            format!("{:?}", gx.shape()),
        ));
    }
    let mut acc = 0.0f64;
    for (a, b) in x.iter().zip(gx.iter()) {
        let d = (*a - *b) as f64;
        acc += d * d;
    }
    Ok(acc / x.len() as f64)
}

/// Run the generator over every image in the manifest (no parameter
/// updates) and average L1, MSE, and the adversarial term per sample.
pub fn evaluate_model(
    models: &Models,
    manifest: &DatasetManifest,
    mask: &Mask,
    label: &str,
) -> Result<LossReport> {
    if manifest.is_empty() {
        return Err(Error::Config(format!(
            "no images found under {}",
            manifest.root.display()
        )));
    }
    let mut sum_l1 = 0.0f64;
    let mut sum_mse = 0.0f64;
    let mut sum_adv = 0.0f64;
    for path in &manifest.paths {
        let gt = load_image(path, mask.outer)?;
        let masked = make_masked_input(&gt, mask)?
            .insert_axis(Axis(0));
        let out = models.gen.forward(&masked)?;
        let gen = out.index_axis(Axis(0), 0);
        sum_l1 += rec_loss(&gt, &gen)?;
        sum_mse += mse_loss(&gt, &gen)?;
        let scores = models.disc.combined_score(&out, mask)?;
        sum_adv += adv_loss_gen(&scores);
    }
    let n = manifest.len() as f64;
    Ok(LossReport {
        model: label.to_string(),
        l1: sum_l1 / n,
        mse: sum_mse / n,
        adversarial: sum_adv / n,
        samples: manifest.len(),
        manifest: manifest.root.clone(),
    })
}

/// Byte-deterministic comparison table: rows sorted by label, four decimal
/// places, aligned columns.
pub fn render_report(reports: &[LossReport]) -> String {
    let mut rows: Vec<(String, [String; 3])> = reports
        .iter()
        .map(|r| {
            (
                r.model.clone(),
                [
                    format!("{:.4}", r.l1),
                    format!("{:.4}", r.mse),
                    format!("{:.4}", r.adversarial),
                ],
            )
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let headers = ["Model", "L1", "MSE", "Adversarial"];
    let mut widths = [
        headers[0].len(),
        headers[1].len(),
        headers[2].len(),
        headers[3].len(),
    ];
    for (label, cells) in &rows {
        widths[0] = widths[0].max(label.len());
        for (i, c) in cells.iter().enumerate() {
            widths[i + 1] = widths[i + 1].max(c.len());
        }
    }
    let mut out = String::new();
    out.push_str(&format!(
        "{:<w0$} | {:>w1$} | {:>w2$} | {:>w3$}\n",
        headers[0],
        headers[1],
        headers[2],
        headers[3],
        w0 = widths[0],
        w1 = widths[1],
        w2 = widths[2],
        w3 = widths[3],
    ));
    for (label, cells) in &rows {
        out.push_str(&format!(
            "{:<w0$} | {:>w1$} | {:>w2$} | {:>w3$}\n",
            label,
            cells[0],
            cells[1],
            cells[2],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3],
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn mse_closed_forms() {
        let a = Array3::<f32>::zeros((3, 4, 4));
        let b = Array3::<f32>::from_elem((3, 4, 4), 0.5);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(mse_loss(&a, &b).unwrap(), 0.25);
    }

    fn report(model: &str, l1: f64, mse: f64, adv: f64) -> LossReport {
        LossReport {
            model: model.into(),
            l1,
            mse,
            adversarial: adv,
            samples: 1,
            manifest: PathBuf::from("val"),
        }
    }

    #[test]
    fn table_is_sorted_and_fixed_precision() {
        let t = render_report(&[
            report("residual", 0.08, 0.7814, 0.0941),
            report("global-only", 0.0956, 0.047, 0.1278),
            report("local", 0.897, 1.044, 0.1014),
        ]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("Model"));
        assert!(lines[1].starts_with("global-only"));
        assert!(lines[2].starts_with("local"));
        assert!(lines[3].starts_with("residual"));
        assert!(lines[3].contains("0.0800"));
        assert!(lines[1].contains("0.1278"));
        // alignment: every row has equal length
        let w = lines[0].len();
        assert!(lines.iter().all(|l| l.len() == w));
    }

    #[test]
    fn table_is_byte_deterministic() {
        let rows = vec![
            report("b", 1.0, 2.0, 3.0),
            report("a", 0.1, 0.2, 0.3),
        ];
        assert_eq!(render_report(&rows), render_report(&rows));
        let mut rev = rows.clone();
        rev.reverse();
        assert_eq!(render_report(&rows), render_report(&rev));
    }
}
