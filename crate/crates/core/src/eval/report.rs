use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::Counts;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub prediction: String,
    pub gold_response: String,
    #[serde(flatten)]
    pub counts: Counts,
    pub words: usize,
    pub entities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub entity_precision: f64,
    pub entity_recall: f64,
    pub entity_f1: f64,
    pub bleu: f64,
    pub avg_len: f64,
    pub avg_ent: f64,
    pub gold_avg_len: f64,
    pub gold_avg_ent: f64,
    /// Present when predicted hints were scored against gold hints.
    pub dc_accuracy: Option<f64>,
    pub et_micro_f1: Option<f64>,
    /// Samples whose generation failed and were left out of the metrics.
    pub excluded: Vec<String>,
    pub per_sample: Vec<SampleRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Headline numbers, with BLEU and F1 also scaled to 0..100.
    pub fn summary_rows(&self) -> Vec<(&'static str, String)> {
        let mut rows = vec![
            ("samples", self.samples.to_string()),
            ("entity_f1", format!("{:.4}", self.entity_f1)),
            ("entity_f1 x100", format!("{:.2}", self.entity_f1 * 100.0)),
            ("entity_precision", format!("{:.4}", self.entity_precision)),
            ("entity_recall", format!("{:.4}", self.entity_recall)),
            ("bleu", format!("{:.4}", self.bleu)),
            ("bleu x100", format!("{:.2}", self.bleu * 100.0)),
            ("avg_len", format!("{:.2}", self.avg_len)),
            ("avg_ent", format!("{:.2}", self.avg_ent)),
            ("gold avg_len", format!("{:.2}", self.gold_avg_len)),
            ("gold avg_ent", format!("{:.2}", self.gold_avg_ent)),
        ];
        if let Some(v) = self.dc_accuracy {
            rows.push(("dc_accuracy", format!("{v:.4}")));
        }
        if let Some(v) = self.et_micro_f1 {
            rows.push(("et_micro_f1", format!("{v:.4}")));
        }
        rows.push(("excluded", self.excluded.len().to_string()));
        rows
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidArtifact(format!("csv: {e}"));
        w.write_record(["sample_id", "tp", "fp", "fn", "words", "entities", "prediction", "gold_response"])
            .map_err(csv_err)?;
        for r in &self.per_sample {
            w.write_record([
                r.sample_id.as_str(),
                &r.counts.tp.to_string(),
                &r.counts.fp.to_string(),
                &r.counts.fn_.to_string(),
                &r.words.to_string(),
                &r.entities.to_string(),
                &r.prediction,
                &r.gold_response,
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArtifact(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields is utf-8"))
    }

    pub fn to_html(&self) -> String {
        let mut out = String::from(
            "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Evaluation report</title></head><body>\n<h1>Evaluation report</h1>\n<table border=\"1\">\n",
        );
        for (name, value) in self.summary_rows() {
            let _ = writeln!(out, "<tr><th>{}</th><td>{}</td></tr>", escape(name), escape(&value));
        }
        out.push_str("</table>\n<h2>Samples</h2>\n<table border=\"1\">\n<tr><th>sample</th><th>tp</th><th>fp</th><th>fn</th><th>prediction</th><th>gold</th></tr>\n");
        for r in &self.per_sample {
            let _ = writeln!(
                out,
                "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
                escape(&r.sample_id),
                r.counts.tp,
                r.counts.fp,
                r.counts.fn_,
                escape(&r.prediction),
                escape(&r.gold_response)
            );
        }
        out.push_str("</table>\n</body></html>\n");
        out
    }

    /// Writes `report.json`, `samples.csv` and `report.html` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("report.json", self.to_json()?),
            ("samples.csv", self.to_csv()?),
            ("report.html", self.to_html()),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}
