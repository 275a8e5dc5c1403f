use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UttScores {
    pub id: String,
    /// Percent.
    pub wer: Option<f64>,
    pub spk_sim: Option<f64>,
    /// dB.
    pub mcd: Option<f64>,
    /// dB, unedited regions only.
    pub region_mcd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanScores {
    pub wer: Option<f64>,
    pub spk_sim: Option<f64>,
    pub mcd: Option<f64>,
    pub region_mcd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub utterances: Vec<UttScores>,
    pub mean: MeanScores,
    /// MOS error per external predictor name.
    pub mae_mos: BTreeMap<String, f64>,
    /// Mean predicted MOS of the generated speech per predictor name.
    #[serde(default)]
    pub mos: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        (None, 0)
    } else {
        (Some(v.iter().sum::<f64>() / v.len() as f64), v.len())
    }
}

impl EvalReport {
    pub fn new(utterances: Vec<UttScores>, mae_mos: BTreeMap<String, f64>) -> Self {
        let (wer, n_wer) = mean(utterances.iter().map(|u| u.wer));
        let (spk_sim, n_spk) = mean(utterances.iter().map(|u| u.spk_sim));
        let (mcd, n_mcd) = mean(utterances.iter().map(|u| u.mcd));
        let (region_mcd, n_region) = mean(utterances.iter().map(|u| u.region_mcd));
        let counts = [
            ("utterances", utterances.len()),
            ("wer", n_wer),
            ("spk_sim", n_spk),
            ("mcd", n_mcd),
            ("region_mcd", n_region),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            utterances,
            mean: MeanScores {
                wer,
                spk_sim,
                mcd,
                region_mcd,
            },
            mae_mos,
            mos: BTreeMap::new(),
            counts,
        }
    }

    /// Plain-text table: one row per utterance, then the means.
    pub fn to_table(&self) -> String {
        let cell = |v: Option<f64>, digits: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"));
        let width = self.utterances.iter().map(|u| u.id.len()).max().unwrap_or(4).max(4);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>10}",
            "id", "WER(%)", "SpkSIM", "MCD", "RegionMCD"
        );
        let mut row = |id: &str, w: Option<f64>, k: Option<f64>, m: Option<f64>, r: Option<f64>| {
            let _ = writeln!(
                s,
                "{id:<width$}  {:>8}  {:>8}  {:>8}  {:>10}",
                cell(w, 2),
                cell(k, 4),
                cell(m, 3),
                cell(r, 3)
            );
        };
        for u in &self.utterances {
            row(&u.id, u.wer, u.spk_sim, u.mcd, u.region_mcd);
        }
        let m = &self.mean;
        row("mean", m.wer, m.spk_sim, m.mcd, m.region_mcd);
        for (name, v) in &self.mae_mos {
            let _ = writeln!(s, "MAE-MOS[{name}] = {v:.4}");
        }
        s
    }
}

/// Predictor names that get their own pair of columns in [`comparison_table`].
pub const MOS_PREDICTORS: [&str; 2] = ["MOSNet", "UTMOS"];

/// One row per system with the columns Method, WER (%), SpkSIM, MCD and, per
/// predictor in [`MOS_PREDICTORS`], the mean MOS and its MAE. Missing values
/// print as `-`.
pub fn comparison_table(rows: &[(String, &EvalReport)]) -> String {
    let cell = |v: Option<f64>, digits: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"));
    let mut header = vec!["Method".to_string(), "WER (%)".into(), "SpkSIM".into(), "MCD".into()];
    for p in MOS_PREDICTORS {
        header.push(p.to_string());
        header.push(format!("MAE_{p}"));
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            let mut v = vec![
                name.clone(),
                cell(r.mean.wer, 2),
                cell(r.mean.spk_sim, 4),
                cell(r.mean.mcd, 2),
            ];
            for p in MOS_PREDICTORS {
                v.push(cell(r.mos.get(p).copied(), 2));
                v.push(cell(r.mae_mos.get(p).copied(), 2));
            }
            v
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (x, w))| if c == 0 { format!("{x:<w$}") } else { format!("{x:>w$}") })
            .collect();
        let _ = writeln!(s, "| {} |", parts.join(" | "));
    };
    line(&header);
    line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for r in &body {
        line(r);
    }
    s
}
