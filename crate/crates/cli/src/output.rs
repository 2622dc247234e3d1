//! Results CSV layout shared by `certify` (writer) and `report` (reader).

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, Context};
use interception_cert::estimator::CertificateResult;
use interception_cert::pipeline::NodeOutcome;

pub fn results_header(d_min: &[usize]) -> Vec<String> {
    let mut h: Vec<String> = ["node_id", "prediction", "abstain", "p_lower", "p_upper"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(d_min.iter().map(|d| format!("radius_d{d}")));
    h.extend(d_min.iter().map(|d| format!("surface_d{d}")));
    h.extend(["label", "correct", "error"].iter().map(|s| s.to_string()));
    h
}

pub fn write_results(
    path: &Path,
    outcomes: &[NodeOutcome],
    d_min: &[usize],
    labels: Option<&[usize]>,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(results_header(d_min))?;
    for o in outcomes {
        let mut row = vec![o.node.to_string()];
        match &o.result {
            Ok(r) => {
                row.push(r.prediction.map(|p| p.to_string()).unwrap_or_default());
                row.push(u8::from(r.abstained()).to_string());
                row.push(r.p_lower.to_string());
                row.push(r.p_upper.to_string());
                row.extend(d_min.iter().map(|&d| r.radius_at(d).to_string()));
            }
            Err(_) => row.extend(std::iter::repeat(String::new()).take(4 + d_min.len())),
        }
        row.extend(
            d_min
                .iter()
                .map(|d| o.surfaces.get(d).map(|s| s.to_string()).unwrap_or_default()),
        );
        row.push(labels.map(|l| l[o.node].to_string()).unwrap_or_default());
        let correct = o.result.as_ref().ok().and_then(|r| r.correct);
        row.push(correct.map(|c| u8::from(c).to_string()).unwrap_or_default());
        row.push(o.result.as_ref().err().cloned().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Successful rows of a results file, with attack surfaces keyed by `d_min`.
pub struct ParsedResults {
    pub d_min: Vec<usize>,
    pub rows: Vec<(CertificateResult, BTreeMap<usize, usize>)>,
}

pub fn read_results(path: &Path) -> anyhow::Result<ParsedResults> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: missing column {name}", path.display()))
    };
    let (node, pred, lo, up, correct, error) = (
        col("node_id")?,
        col("prediction")?,
        col("p_lower")?,
        col("p_upper")?,
        col("correct")?,
        col("error")?,
    );
    let d_min: Vec<usize> = header
        .iter()
        .filter_map(|h| h.strip_prefix("radius_d")?.parse().ok())
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if !rec[error].is_empty() {
            continue;
        }
        let opt = |s: &str| -> anyhow::Result<Option<usize>> {
            Ok(if s.is_empty() { None } else { Some(s.parse()?) })
        };
        let mut radius = BTreeMap::new();
        let mut surfaces = BTreeMap::new();
        for &d in &d_min {
            radius.insert(d, rec[col(&format!("radius_d{d}"))?].parse()?);
            surfaces.insert(d, opt(&rec[col(&format!("surface_d{d}"))?])?.unwrap_or(0));
        }
        let result = CertificateResult {
            node: rec[node].parse()?,
            prediction: opt(&rec[pred])?,
            p_lower: rec[lo].parse()?,
            p_upper: rec[up].parse()?,
            radius,
            correct: opt(&rec[correct])?.map(|c| c == 1),
        };
        rows.push((result, surfaces));
    }
    Ok(ParsedResults { d_min, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_skips_failed_rows() {
        let ok = CertificateResult {
            node: 3,
            prediction: Some(1),
            p_lower: 0.875,
            p_upper: 0.0625,
            radius: BTreeMap::from([(0, 2), (1, 3)]),
            correct: Some(true),
        };
        let abstain = CertificateResult {
            node: 4,
            prediction: None,
            p_lower: 0.4,
            p_upper: 0.35,
            radius: BTreeMap::from([(0, 0), (1, 0)]),
            correct: Some(false),
        };
        let outcomes = vec![
            NodeOutcome { node: 3, result: Ok(ok.clone()), surfaces: BTreeMap::from([(0, 10), (1, 9)]) },
            NodeOutcome { node: 4, result: Ok(abstain.clone()), surfaces: BTreeMap::from([(0, 5), (1, 4)]) },
            NodeOutcome { node: 5, result: Err("too many paths".into()), surfaces: BTreeMap::new() },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results(&path, &outcomes, &[0, 1], Some(&[0, 0, 0, 1, 0, 1])).unwrap();
        let parsed = read_results(&path).unwrap();
        assert_eq!(parsed.d_min, vec![0, 1]);
        assert_eq!(parsed.rows.len(), 2);
        assert_eq!(parsed.rows[0].0, ok);
        assert_eq!(parsed.rows[1].0, abstain);
        assert_eq!(parsed.rows[0].1[&1], 9);
    }
}
