use std::fmt::Write as _;

use serde::Serialize;

use super::{avg_f1, avg_map, F1Result, F1Strategy, MapResult};
use crate::annotation_io::{DatasetSplit, SCHEMA_VERSION};
use crate::error::Result;
use crate::taxonomy::Taxonomy;
use crate::types::PredictedSceneSet;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub num_videos: usize,
    pub avg_map: f64,
    pub avg_f1: f64,
    pub map: MapResult,
    pub f1: F1Result,
}

pub fn evaluate(
    gt: &DatasetSplit,
    preds: &[PredictedSceneSet],
    tax: &Taxonomy,
    strategy: F1Strategy,
) -> Result<EvaluationReport> {
    let map = avg_map(gt, preds, tax)?;
    let f1 = avg_f1(gt, preds, strategy)?;
    Ok(EvaluationReport {
        schema_version: SCHEMA_VERSION,
        num_videos: gt.annotations.len(),
        avg_map: map.avg_map,
        avg_f1: f1.avg_f1,
        map,
        f1,
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Long-format CSV: `table,row,column,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("table,row,column,value\n");
        let _ = writeln!(out, "summary,all,schema_version,{}", self.schema_version);
        let _ = writeln!(out, "summary,all,avg_map,{}", self.avg_map);
        let _ = writeln!(out, "summary,all,avg_f1,{}", self.avg_f1);
        for (thr, m) in self.map.tious.iter().zip(&self.map.map_at_tiou) {
            let _ = writeln!(out, "map_at_tiou,{thr:.2},map,{m}");
        }
        for c in &self.map.per_class_per_tiou {
            match &c.ap {
                Some(aps) => {
                    for (thr, ap) in self.map.tious.iter().zip(aps) {
                        let _ = writeln!(out, "class_ap,{},{thr:.2},{ap}", c.class_id);
                    }
                }
                None => {
                    let _ = writeln!(out, "class_ap,{},skipped,", c.class_id);
                }
            }
        }
        for r in &self.f1.per_t {
            let row = format!("{:.1}", r.t);
            let _ = writeln!(out, "f1_at_t,{row},precision,{}", r.precision);
            let _ = writeln!(out, "f1_at_t,{row},recall,{}", r.recall);
            let _ = writeln!(out, "f1_at_t,{row},f1,{}", r.f1);
            let _ = writeln!(out, "f1_at_t,{row},tp,{}", r.tp);
            let _ = writeln!(out, "f1_at_t,{row},fp,{}", r.fp);
            let _ = writeln!(out, "f1_at_t,{row},fn,{}", r.fn_);
        }
        out
    }

    pub fn to_pretty(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "videos   {}", self.num_videos);
        let _ = writeln!(out, "Avg_mAP  {:.4}", self.avg_map);
        let _ = writeln!(out, "Avg_F1   {:.4}", self.avg_f1);
        let _ = writeln!(out, "\n tIoU   mAP");
        for (thr, m) in self.map.tious.iter().zip(&self.map.map_at_tiou) {
            let _ = writeln!(out, " {thr:.2}   {m:.4}");
        }
        let _ = writeln!(out, "\n t(s)  precision  recall     F1     TP    FP    FN");
        for r in &self.f1.per_t {
            let _ = writeln!(
                out,
                " {:.1}   {:.4}     {:.4}   {:.4}  {:>5} {:>5} {:>5}",
                r.t, r.precision, r.recall, r.f1, r.tp, r.fp, r.fn_
            );
        }
        if !self.map.skipped_classes.is_empty() {
            let _ = writeln!(
                out,
                "\n{} classes without ground truth were excluded from the mean",
                self.map.skipped_classes.len()
            );
        }
        if self.f1.vacuous {
            let _ = writeln!(out, "no boundaries on either side: F1 defined as 1");
        }
        out
    }
}
