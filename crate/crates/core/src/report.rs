//! Region-wise report rows and their CSV serialization (RFC-4180 line
//! conventions, UTF-8, LF).

use crate::error::Result;
use std::io::Write;
use std::path::Path;

pub const REPORT_HEADER: &str = "region_id,region_name,n_voxels,volume_mm3,mean_TGM,mean_TGran,mean_TMol,purkinje_area_mm2,group_mean_a,group_mean_b,t_stat,p_value,fdr_significant";

/// One region's aggregated measurements and group statistics.
#[derive(Debug, Clone)]
pub struct RegionRow {
    pub region_id: u32,
    pub region_name: String,
    pub n_voxels: f64,
    pub volume_mm3: f64,
    pub mean_tgm: f64,
    pub mean_tgran: f64,
    pub mean_tmol: f64,
    pub purkinje_area_mm2: f64,
    pub group_mean_a: f64,
    pub group_mean_b: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub fdr_significant: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RegionReport {
    pub rows: Vec<RegionRow>,
}

/// Format with 6 significant digits; integral values print as integers so
/// counts stay readable. NaN prints as "nan" (and re-parses as NaN).
pub fn format_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if v == v.trunc() && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    format!("{v:.5e}")
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_region_report(report: &RegionReport, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{REPORT_HEADER}")?;
    for r in &report.rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.region_id,
            csv_field(&r.region_name),
            format_sig(r.n_voxels),
            format_sig(r.volume_mm3),
            format_sig(r.mean_tgm),
            format_sig(r.mean_tgran),
            format_sig(r.mean_tmol),
            format_sig(r.purkinje_area_mm2),
            format_sig(r.group_mean_a),
            format_sig(r.group_mean_b),
            format_sig(r.t_stat),
            format_sig(r.p_value),
            r.fdr_significant
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Per-voxel mid-layer thickness rows: x,y,z voxel indices plus the granular,
/// molecular and total thickness sampled there.
pub fn write_sublayer_csv(rows: &[(usize, usize, usize, f64, f64, f64)], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "x,y,z,TGran,TMol,TGM")?;
    for &(x, y, z, tgran, tmol, tgm) in rows {
        writeln!(
            f,
            "{x},{y},{z},{},{},{}",
            format_sig(tgran),
            format_sig(tmol),
            format_sig(tgm)
        )?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("folia-report-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn empty_report_is_header_only() {
        let path = tmpfile("empty.csv");
        write_region_report(&RegionReport::default(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{REPORT_HEADER}\n"));
    }

    #[test]
    fn one_row_in_declared_order() {
        let path = tmpfile("one.csv");
        let report = RegionReport {
            rows: vec![RegionRow {
                region_id: 7,
                region_name: "lobule".into(),
                n_voxels: 100.0,
                volume_mm3: 12.5,
                mean_tgm: 4.0,
                mean_tgran: 1.6,
                mean_tmol: 2.4,
                purkinje_area_mm2: 30.0,
                group_mean_a: 4.0,
                group_mean_b: f64::NAN,
                t_stat: f64::NAN,
                p_value: f64::NAN,
                fdr_significant: false,
            }],
        };
        write_region_report(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], REPORT_HEADER);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[0], "7");
        assert_eq!(fields[1], "lobule");
        assert_eq!(fields[2], "100");
        assert_eq!(fields[12], "false");
    }

    #[test]
    fn six_significant_digits_roundtrip() {
        // re-parsing reproduces values to the declared precision
        let values = [
            1.2345678e-3,
            3.9499993,
            -12345.678,
            0.1,
            9.999999e8,
            2.0f64.sqrt(),
        ];
        for v in values {
            let s = format_sig(v);
            let back: f64 = s.parse().unwrap();
            let rel = ((back - v) / v).abs();
            assert!(rel < 5e-6, "{v} -> {s} -> {back} rel {rel}");
        }
        assert_eq!(format_sig(f64::NAN), "nan");
        assert!("nan".parse::<f64>().unwrap().is_nan());
    }
}
