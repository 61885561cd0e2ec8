use std::fmt::Write as _;

use super::{SweepResult, TrainReport};
use crate::error::{Error, Result};

/// Per-layer spectral norms and `L̂`, one column per report.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    /// `(row label, one value per column)`.
    pub rows: Vec<(String, Vec<f64>)>,
}

impl Table {
    /// Comma-separated, values at full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (label, values) in &self.rows {
            out.push_str(label);
            for v in values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Aligned columns, values at 6 significant digits.
    pub fn to_text(&self) -> String {
        let mut cells: Vec<Vec<String>> = Vec::with_capacity(self.rows.len() + 1);
        cells.push(std::iter::once(String::new()).chain(self.columns.iter().cloned()).collect());
        for (label, values) in &self.rows {
            cells.push(
                std::iter::once(label.clone())
                    .chain(values.iter().map(|&v| format_sig(v, 6)))
                    .collect(),
            );
        }
        let n = self.columns.len() + 1;
        let widths: Vec<usize> = (0..n)
            .map(|j| cells.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in cells.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    if j == 0 {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect();
            out.push_str(line.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        out
    }
}

/// Table of final `‖W_l‖` and `L̂` for each report, columns in input order.
pub fn report_table(reports: &[&TrainReport]) -> Result<Table> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Config("report table needs at least one report".into()))?;
    let depth = first.layer_norms.len();
    if let Some(r) = reports.iter().find(|r| r.layer_norms.len() != depth) {
        return Err(Error::shape("report table depth", depth, r.layer_norms.len()));
    }
    let mut rows: Vec<(String, Vec<f64>)> = (0..depth)
        .map(|l| (format!("||W_{}||", l + 1), reports.iter().map(|r| r.layer_norms[l]).collect()))
        .collect();
    rows.push(("L_hat".to_string(), reports.iter().map(|r| r.lipschitz_bound).collect()));
    Ok(Table {
        columns: reports.iter().map(|r| r.mode.label().to_string()).collect(),
        rows,
    })
}

/// One line per `(report, epoch)`: epoch, mode, train loss and MAE, then the
/// validation MAE at each noise level, then objective, seed and λ.
pub fn curves_csv(reports: &[&TrainReport]) -> Result<String> {
    let Some(first) = reports.first() else {
        return Err(Error::Config("curves need at least one report".into()));
    };
    let etas = &first.eta_levels;
    if reports.iter().any(|r| &r.eta_levels != etas) {
        return Err(Error::Config("reports disagree on noise levels".into()));
    }
    let mut out = String::from("epoch,mode,train_loss,train_mae");
    for eta in etas {
        let _ = write!(out, ",mae@{eta}");
    }
    out.push_str(",objective,seed,lambda\n");
    for r in reports {
        let lambda = r.mode.lambda().map(|l| l.to_string()).unwrap_or_default();
        for e in &r.epochs {
            let _ = write!(out, "{},{},{},{}", e.epoch, r.mode.name(), e.train_loss, e.train_mae);
            for v in &e.val_mae {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{},{}", e.objective, r.seed, lambda);
        }
    }
    Ok(out)
}

/// Final metrics of every grid-search cell.
pub fn sweep_csv(sweeps: &[SweepResult]) -> String {
    let etas = sweeps
        .iter()
        .flat_map(|s| s.cells.first())
        .map(|c| c.report.eta_levels.clone())
        .next()
        .unwrap_or_default();
    let mut out = String::from("mode,lambda,seed,selected,clean_val_mae,lipschitz_bound");
    for eta in &etas {
        let _ = write!(out, ",mae@{eta}");
    }
    out.push('\n');
    for s in sweeps {
        for c in &s.cells {
            let lambda = c.lambda.map(|l| l.to_string()).unwrap_or_default();
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                s.mode.name(),
                lambda,
                c.seed,
                c.lambda == s.selected_lambda,
                c.report.clean_val_mae,
                c.report.lipschitz_bound
            );
            for v in &c.report.final_epoch().val_mae {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

/// Formats `x` with `digits` significant digits in fixed notation.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.prec$}", prec = digits.saturating_sub(1));
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new leading digit (9.999995 -> 10.00000).
    let rounded: f64 = s.parse().unwrap_or(x);
    if rounded != 0.0 && (rounded.abs().log10().floor() as i64) > magnitude && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::EpochRecord;
    use crate::network::{ModelFile, Network};
    use crate::optimizer::TrainConfig;
    use crate::regularization::RegularizationMode;

    fn report(mode: RegularizationMode, norms: &[f64]) -> TrainReport {
        let net = Network::init(&[2, 3, 1], &mut crate::seeded_rng(0, crate::RngStream::Init)).unwrap();
        TrainReport {
            mode,
            seed: 1,
            eta_levels: vec![0.0, 0.2],
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 2.0,
                train_mae: 1.0,
                running_loss: 2.5,
                running_mae: 1.2,
                objective: 2.5,
                val_mae: vec![1.5, 1.75],
            }],
            layer_norms: norms.to_vec(),
            lipschitz_bound: norms.iter().product(),
            clean_val_mae: 1.5,
            config: TrainConfig::default(),
            wall_time_secs: 0.0,
            model: ModelFile::from(&net),
        }
    }

    #[test]
    fn table_shows_product() {
        let r = report(RegularizationMode::NoReg, &[2.0, 3.0, 4.0]);
        let t = report_table(&[&r]).unwrap();
        assert_eq!(t.rows.last().unwrap().1, vec![24.0]);
        assert!(t.to_text().contains("24.0000"));
        assert!(t.to_csv().starts_with("quantity,no reg\n||W_1||,2\n"));
    }

    #[test]
    fn layer_reg_column_renders() {
        let r = report(RegularizationMode::LayerSum { lambda: 1.0 }, &[2.508, 1.625, 3.315]);
        let t = report_table(&[&r]).unwrap();
        let text = t.to_text();
        let lhat_line = text.lines().find(|l| l.starts_with("L_hat")).unwrap();
        let value: f64 = lhat_line.split('|').nth(1).unwrap().trim().parse().unwrap();
        assert_eq!(format!("{value:.2}"), "13.51");
    }

    #[test]
    fn columns_follow_input_order() {
        let modes = [
            RegularizationMode::NoReg,
            RegularizationMode::LayerSum { lambda: 1.0 },
            RegularizationMode::LipschitzProduct { lambda: 1.0 },
            RegularizationMode::MaxNorm { cap: 10.0 },
        ];
        let reports: Vec<TrainReport> = modes.iter().map(|&m| report(m, &[1.0, 2.0])).collect();
        let refs: Vec<&TrainReport> = reports.iter().rev().collect();
        let t = report_table(&refs).unwrap();
        assert_eq!(t.columns, ["Max Norm", "Lipschitz reg", "Layer reg", "no reg"]);
        assert_eq!(t.rows.len(), 3);
        assert!(report_table(&[]).is_err());
        let other = report(RegularizationMode::NoReg, &[1.0]);
        assert!(report_table(&[&reports[0], &other]).is_err());
    }

    #[test]
    fn curves_layout() {
        let r = report(RegularizationMode::LipschitzProduct { lambda: 10.0 }, &[1.0, 2.0]);
        let csv = curves_csv(&[&r]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "epoch,mode,train_loss,train_mae,mae@0,mae@0.2,objective,seed,lambda");
        assert_eq!(lines.next().unwrap(), "1,lipschitz_reg,2,1,1.5,1.75,2.5,1,10");
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(13.51034, 6), "13.5103");
        assert_eq!(format_sig(0.000123456789, 6), "0.000123457");
        assert_eq!(format_sig(123456.7, 6), "123457");
        assert_eq!(format_sig(9.9999996, 6), "10.0000");
        assert_eq!(format_sig(0.0, 6), "0.00000");
        assert_eq!(format_sig(-2.5, 3), "-2.50");
    }
}
