//! Tab-separated report files and their console renderings.

use crate::model::{AblationTable, Metrics, ModelVariant, SpeechActLabel};

/// `variant class precision recall f1`, one row per class plus a macro row.
pub fn metrics_tsv(rows: &[(ModelVariant, Metrics)]) -> String {
    let mut out = String::from("variant\tclass\tprecision\trecall\tf1\n");
    for (variant, m) in rows {
        for c in &m.per_class {
            out.push_str(&format!("{variant}\t{}\t{:.4}\t{:.4}\t{:.4}\n", c.label, c.precision, c.recall, c.f1));
        }
        out.push_str(&format!(
            "{variant}\tmacro\t{:.4}\t{:.4}\t{:.4}\n",
            m.macro_precision, m.macro_recall, m.macro_f1
        ));
    }
    out
}

/// One row per variant with precision and recall per class, the layout of
/// the usual variant-comparison table.
pub fn comparison_tsv(rows: &[(ModelVariant, Metrics)]) -> String {
    let mut header = vec!["variant".to_string()];
    for label in SpeechActLabel::ALL {
        header.push(format!("{label}_precision"));
        header.push(format!("{label}_recall"));
    }
    header.push("macro_f1".into());
    header.push("accuracy".into());
    let mut out = header.join("\t");
    out.push('\n');
    for (variant, m) in rows {
        let mut cells = vec![variant.to_string()];
        for c in &m.per_class {
            cells.push(format!("{:.4}", c.precision));
            cells.push(format!("{:.4}", c.recall));
        }
        cells.push(format!("{:.4}", m.macro_f1));
        cells.push(format!("{:.4}", m.accuracy));
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

/// `scheme alpha beta class f1` for every cell and class.
pub fn grid_tsv(table: &AblationTable) -> String {
    let mut out = String::from("scheme\talpha\tbeta\tclass\tf1\n");
    for cell in &table.cells {
        for c in &cell.metrics.per_class {
            out.push_str(&format!("{}\t{:.2}\t{:.2}\t{}\t{:.4}\n", cell.scheme, cell.alpha, cell.beta, c.label, c.f1));
        }
    }
    out
}

/// Best alpha per scheme by macro-F1.
pub fn best_alpha_tsv(table: &AblationTable) -> String {
    let mut out = String::from("scheme\tbest_alpha\tmacro_f1\n");
    let mut schemes: Vec<_> = table.cells.iter().map(|c| c.scheme).collect();
    schemes.dedup();
    for scheme in schemes {
        if let Some(alpha) = table.best_alpha(scheme) {
            let f1 = table
                .cells
                .iter()
                .find(|c| c.scheme == scheme && c.alpha == alpha)
                .map(|c| c.metrics.macro_f1)
                .unwrap_or(0.0);
            out.push_str(&format!("{scheme}\t{alpha:.2}\t{f1:.4}\n"));
        }
    }
    out
}

/// Column-aligned rendering of a TSV document.
pub fn align(tsv: &str) -> String {
    let rows: Vec<Vec<&str>> = tsv.lines().map(|l| l.split('\t').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let cells: Vec<String> = r.iter().enumerate().map(|(i, s)| format!("{s:<w$}", w = widths[i])).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
