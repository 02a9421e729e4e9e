//! Value files: CSV with 17 significant digits, JSON with shortest
//! round-trip floats. Both carry the same numbers.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::effect::{Comparison, CornerRow, EffectTable};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}

pub fn write_effect_csv(table: &EffectTable, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let mut header: Vec<String> = table.features.iter().map(|f| format!("k_{f}")).collect();
    header.extend(table.features.iter().cloned());
    header.extend(["uncentered", "centered", "count"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for r in &table.rows {
        let mut cells: Vec<String> = r.index.iter().map(usize::to_string).collect();
        cells.extend(r.coordinates.iter().map(|&v| fmt_f64(v)));
        cells.push(fmt_f64(r.uncentered));
        cells.push(fmt_f64(r.centered));
        cells.push(r.count.to_string());
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub method: crate::effect::Method,
    pub features: Vec<String>,
    pub k_requested: usize,
    pub k_per_axis: Vec<usize>,
    pub n: usize,
    pub seed: u64,
    pub rng: String,
    pub data: String,
    pub model: String,
    pub imputed_cells: usize,
}

#[derive(Serialize)]
struct ValuesJson<'a> {
    metadata: &'a Metadata,
    corners: &'a [CornerRow],
}

pub fn write_effect_json(table: &EffectTable, meta: &Metadata, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &ValuesJson { metadata: meta, corners: &table.rows })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_compare_csv(c: &Comparison, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut header = vec!["k".to_owned(), c.feature.clone(), "ale".into(), "pd".into(), "mplot".into()];
    if c.truth.is_some() {
        header.push("truth".into());
    }
    header.extend(["central".into(), "count".into()]);
    writeln!(w, "{}", header.join(","))?;
    for i in 0..c.grid.len() {
        let mut cells = vec![i.to_string(), fmt_f64(c.grid[i]), fmt_f64(c.ale[i]), opt(c.pd[i]), opt(c.mplot[i])];
        if let Some(t) = &c.truth {
            cells.push(fmt_f64(t[i]));
        }
        cells.push(u8::from(c.central.contains(&i)).to_string());
        cells.push(c.counts[i].to_string());
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
