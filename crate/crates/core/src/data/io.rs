//! CSV formats for tables, densities, factors, witnesses and traces. Every
//! file written here starts with `# shiftkit <version> seed=<seed|none>`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::em::EmTrace;
use crate::error::{AxisName, Error, Result};
use crate::prob::{DensityAxis, JointTable, RelativeDensity, SpaceSpec};
use crate::psi::PsiTrace;
use crate::shift::{FjsFactors, GlsWitness};

/// Tolerance on the total mass of a table read from disk before it is
/// renormalized.
pub const LOAD_TOL: f64 = 1e-9;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn parse_f64(text: &str) -> Result<f64> {
    let t = text.trim();
    match t {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => t.parse().map_err(|e| Error::Parse(format!("'{t}': {e}"))),
    }
}

pub fn header_line(seed: Option<u64>) -> String {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!("# shiftkit {} seed={seed}", env!("CARGO_PKG_VERSION"))
}

pub(crate) fn writer(path: &Path, seed: Option<u64>) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{}", header_line(seed))?;
    Ok(csv::WriterBuilder::new().flexible(false).from_writer(file))
}

pub(crate) fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn expect_headers(rdr: &mut csv::Reader<File>, want: &[&str], path: &Path) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != want {
        return Err(Error::SchemaMismatch(format!(
            "{}: expected columns {}, found {}",
            path.display(),
            want.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn push_unique(list: &mut Vec<String>, cell: &str) {
    if !list.iter().any(|c| c == cell) {
        list.push(cell.to_string());
    }
}

/// Joint table as `x,y,mass`. Cell order is the order of first appearance;
/// absent pairs have mass 0.
pub fn read_joint(path: &Path) -> Result<JointTable> {
    let mut rdr = reader(path)?;
    expect_headers(&mut rdr, &["x", "y", "mass"], path)?;
    let mut entries = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        push_unique(&mut xs, &rec[0]);
        push_unique(&mut ys, &rec[1]);
        entries.push((rec[0].to_string(), rec[1].to_string(), parse_f64(&rec[2])?));
    }
    let space = Arc::new(SpaceSpec::new(xs, ys)?);
    let ny = space.n_labels();
    let mut mass = vec![0.0; space.n_features() * ny];
    let mut seen = vec![false; mass.len()];
    for (x, y, m) in entries {
        let i = space.feature_index(&x).unwrap() * ny + space.label_index(&y).unwrap();
        if seen[i] {
            return Err(Error::InvalidTable(format!("duplicate cell ({x},{y})")));
        }
        seen[i] = true;
        mass[i] = m;
    }
    JointTable::from_weights(space, mass, LOAD_TOL)
}

pub fn write_joint(path: &Path, table: &JointTable, seed: Option<u64>) -> Result<()> {
    let mut w = writer(path, seed)?;
    w.write_record(["x", "y", "mass"])?;
    let space = table.space();
    for x in 0..table.n_features() {
        for y in 0..table.n_labels() {
            w.write_record([
                space.feature_cell(x),
                space.label_cell(y),
                &fmt_f64(table.mass(x, y)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn axis_column(axis: DensityAxis) -> &'static str {
    match axis {
        DensityAxis::Feature => "x",
        _ => "y",
    }
}

/// Values keyed by cell name, in file order.
fn read_keyed(path: &Path, key: &str) -> Result<Vec<(String, f64)>> {
    let mut rdr = reader(path)?;
    expect_headers(&mut rdr, &[key, "value"], path)?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok((rec[0].to_string(), parse_f64(&rec[1])?))
        })
        .collect()
}

fn align(
    entries: Vec<(String, f64)>,
    cells: &[String],
    axis: AxisName,
    path: &Path,
) -> Result<Vec<f64>> {
    let mut values = vec![None; cells.len()];
    for (cell, v) in entries {
        let i = cells.iter().position(|c| *c == cell).ok_or(Error::UnknownCell {
            axis,
            cell: cell.clone(),
        })?;
        values[i] = Some(v);
    }
    let missing: Vec<&str> = cells
        .iter()
        .zip(&values)
        .filter(|(_, v)| v.is_none())
        .map(|(c, _)| c.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::SchemaMismatch(format!(
            "{}: no value for {}",
            path.display(),
            missing.join(", ")
        )));
    }
    Ok(values.into_iter().map(Option::unwrap).collect())
}

/// Marginal density CSV: `x,value` for features, `y,value` for labels.
pub fn read_density(path: &Path, space: &SpaceSpec, axis: DensityAxis) -> Result<RelativeDensity> {
    let entries = read_keyed(path, axis_column(axis))?;
    match axis {
        DensityAxis::Feature => RelativeDensity::feature(align(
            entries,
            space.feature_cells(),
            AxisName::Feature,
            path,
        )?),
        DensityAxis::Label => {
            RelativeDensity::label(align(entries, space.label_cells(), AxisName::Label, path)?)
        }
        DensityAxis::Joint => Err(Error::InvalidDensity("joint densities are stored as tables".into())),
    }
}

pub fn write_density(
    path: &Path,
    space: &SpaceSpec,
    density: &RelativeDensity,
    seed: Option<u64>,
) -> Result<()> {
    let (key, cells) = match density.axis() {
        DensityAxis::Feature => ("x", space.feature_cells()),
        DensityAxis::Label => ("y", space.label_cells()),
        DensityAxis::Joint => {
            return Err(Error::InvalidDensity("joint densities are stored as tables".into()))
        }
    };
    density.ensure_len(cells.len())?;
    let mut w = writer(path, seed)?;
    w.write_record([key, "value"])?;
    for (c, v) in cells.iter().zip(density.values()) {
        w.write_record([c.as_str(), &fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Factors as `section,cell,value` with sections `hbar` and `gbar`.
pub fn write_factors(
    path: &Path,
    space: &SpaceSpec,
    factors: &FjsFactors,
    seed: Option<u64>,
) -> Result<()> {
    let mut w = writer(path, seed)?;
    w.write_record(["section", "cell", "value"])?;
    for (c, v) in space.feature_cells().iter().zip(factors.hbar().values()) {
        w.write_record(["hbar", c, &fmt_f64(*v)])?;
    }
    for (c, v) in space.label_cells().iter().zip(factors.gbar().values()) {
        w.write_record(["gbar", c, &fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_factors(path: &Path, source: &JointTable) -> Result<FjsFactors> {
    let mut rdr = reader(path)?;
    expect_headers(&mut rdr, &["section", "cell", "value"], path)?;
    let (mut h, mut g) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let entry = (rec[1].to_string(), parse_f64(&rec[2])?);
        match &rec[0] {
            "hbar" => h.push(entry),
            "gbar" => g.push(entry),
            other => return Err(Error::Parse(format!("unknown factor section '{other}'"))),
        }
    }
    let space = source.space();
    let hbar = RelativeDensity::feature(align(h, space.feature_cells(), AxisName::Feature, path)?)?;
    let gbar = RelativeDensity::label(align(g, space.label_cells(), AxisName::Label, path)?)?;
    FjsFactors::new(hbar, gbar, source)
}

/// Witness partition as `x,block`.
pub fn read_witness(path: &Path) -> Result<GlsWitness> {
    let mut rdr = reader(path)?;
    expect_headers(&mut rdr, &["x", "block"], path)?;
    let mut partition = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if partition.insert(rec[0].to_string(), rec[1].to_string()).is_some() {
            return Err(Error::SchemaMismatch(format!("feature cell {} assigned twice", &rec[0])));
        }
    }
    Ok(GlsWitness::new(partition))
}

pub fn write_witness(path: &Path, witness: &GlsWitness, seed: Option<u64>) -> Result<()> {
    let mut w = writer(path, seed)?;
    w.write_record(["x", "block"])?;
    for (x, b) in &witness.partition {
        w.write_record([x, b])?;
    }
    w.flush()?;
    Ok(())
}

/// `iter,psi_<cell>...,residual`.
pub fn write_psi_trace(path: &Path, space: &SpaceSpec, trace: &PsiTrace, seed: Option<u64>) -> Result<()> {
    let mut w = writer(path, seed)?;
    let mut header = vec!["iter".to_string()];
    header.extend(space.label_cells().iter().map(|c| format!("psi_{c}")));
    header.push("residual".into());
    w.write_record(&header)?;
    for (i, (psi, r)) in trace.iterates.iter().zip(&trace.residuals).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(psi.iter().map(|v| fmt_f64(*v)));
        rec.push(fmt_f64(*r));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `iter,g_<cell>...,kl,residual`.
pub fn write_em_trace(path: &Path, space: &SpaceSpec, trace: &EmTrace, seed: Option<u64>) -> Result<()> {
    let mut w = writer(path, seed)?;
    let mut header = vec!["iter".to_string()];
    header.extend(space.label_cells().iter().map(|c| format!("g_{c}")));
    header.push("kl".into());
    header.push("residual".into());
    w.write_record(&header)?;
    for (i, g) in trace.g_iterates.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(g.iter().map(|v| fmt_f64(*v)));
        rec.push(fmt_f64(trace.kl_values[i]));
        rec.push(fmt_f64(trace.residuals[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Row-stochastic table with columns `x,<label cells>`.
pub fn write_posteriors(
    path: &Path,
    space: &SpaceSpec,
    rows: &[(String, Vec<f64>)],
    seed: Option<u64>,
) -> Result<()> {
    let mut w = writer(path, seed)?;
    let mut header = vec!["x".to_string()];
    header.extend(space.label_cells().iter().cloned());
    w.write_record(&header)?;
    for (x, probs) in rows {
        let mut rec = vec![x.clone()];
        rec.extend(probs.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked() -> JointTable {
        let space = Arc::new(SpaceSpec::indexed(2, 2).unwrap());
        JointTable::from_rows(space, &[vec![0.3, 0.2], vec![0.1, 0.4]]).unwrap()
    }

    #[test]
    fn joint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = worked();
        write_joint(&path, &p, Some(7)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# shiftkit ") && text.lines().next().unwrap().ends_with("seed=7"));
        let back = read_joint(&path).unwrap();
        assert_eq!(back.space().feature_cells(), p.space().feature_cells());
        assert!(back.max_abs_diff(&p) < 1e-16);
    }

    #[test]
    fn joint_missing_cells_are_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "x,y,mass\na,u,0.5\nb,v,0.5\n").unwrap();
        let p = read_joint(&path).unwrap();
        assert_eq!(p.masses(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn density_alignment_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = worked();
        let path = dir.path().join("g.csv");
        std::fs::write(&path, "y,value\ny1,0.5\ny0,2\n").unwrap();
        let g = read_density(&path, p.space(), DensityAxis::Label).unwrap();
        assert_eq!(g.values(), &[2.0, 0.5]);
        std::fs::write(&path, "y,value\ny0,1\n").unwrap();
        assert!(matches!(
            read_density(&path, p.space(), DensityAxis::Label),
            Err(Error::SchemaMismatch(_))
        ));
        std::fs::write(&path, "y,value\nq,1\n").unwrap();
        assert!(matches!(
            read_density(&path, p.space(), DensityAxis::Label),
            Err(Error::UnknownCell { .. })
        ));
    }

    #[test]
    fn factors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = worked();
        let h = RelativeDensity::feature(vec![0.5, 1.5]).unwrap();
        let f = FjsFactors::covariate(h, &p).unwrap();
        let path = dir.path().join("f.csv");
        write_factors(&path, p.space(), &f, None).unwrap();
        assert_eq!(read_factors(&path, &p).unwrap(), f);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789, 0.0] {
            assert_eq!(parse_f64(&fmt_f64(v)).unwrap(), v);
        }
        assert_eq!(parse_f64(&fmt_f64(f64::INFINITY)).unwrap(), f64::INFINITY);
    }
}
