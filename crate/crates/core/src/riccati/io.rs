use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

use super::RiccatiSolution;

/// Column view of a solution, as written to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionTable {
    pub t: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub gamma1: Vec<Vec<f64>>,
    pub gamma2: Vec<Vec<f64>>,
    /// Saddle controls per branch and node.
    pub v1: [Vec<Vec<f64>>; 2],
    pub v2: [Vec<Vec<f64>>; 2],
    pub h: [Vec<f64>; 2],
}

fn header(m1: usize, m2: usize, n_marks: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "P1", "P2", "L1", "L2"].iter().map(|s| s.to_string()).collect();
    for k in 1..=2 {
        h.extend((0..n_marks).map(|j| format!("G{k}_{j}")));
    }
    for branch in ["pos", "neg"] {
        h.extend((0..m1).map(|c| format!("{branch}_v1_{c}")));
        h.extend((0..m2).map(|c| format!("{branch}_v2_{c}")));
    }
    h.push("H1".into());
    h.push("H2".into());
    h
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

impl RiccatiSolution {
    pub fn table(&self) -> SolutionTable {
        let grab = |slot: usize, f: fn(&crate::hamiltonian::SaddleResult) -> &Vector| {
            self.saddles.iter().map(|s| f(&s[slot]).iter().copied().collect()).collect()
        };
        SolutionTable {
            t: self.grid.times(),
            p1: self.p1.clone(),
            p2: self.p2.clone(),
            lambda1: self.lambda1.clone(),
            lambda2: self.lambda2.clone(),
            gamma1: self.gamma1.clone(),
            gamma2: self.gamma2.clone(),
            v1: [grab(0, |s| &s.v1), grab(1, |s| &s.v1)],
            v2: [grab(0, |s| &s.v2), grab(1, |s| &s.v2)],
            h: [
                self.saddles.iter().map(|s| s[0].value).collect(),
                self.saddles.iter().map(|s| s[1].value).collect(),
            ],
        }
    }

    /// Columnar CSV with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let first = &self.saddles[0][0];
        let (m1, m2) = (first.v1.len(), first.v2.len());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header(m1, m2, self.n_marks()))?;
        let times = self.grid.times();
        for (i, &t) in times.iter().enumerate() {
            let mut row = vec![t, self.p1[i], self.p2[i], self.lambda1[i], self.lambda2[i]];
            row.extend(&self.gamma1[i]);
            row.extend(&self.gamma2[i]);
            for s in &self.saddles[i] {
                row.extend(s.v1.iter());
                row.extend(s.v2.iter());
            }
            row.push(self.saddles[i][0].value);
            row.push(self.saddles[i][1].value);
            w.write_record(row.into_iter().map(fmt))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl SolutionTable {
    /// Reads a table written by [`RiccatiSolution::write_csv`]; lines starting
    /// with `#` are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let head: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let count = |prefix: &str| head.iter().filter(|h| h.starts_with(prefix)).count();
        let n_marks = count("G1_");
        let (m1, m2) = (count("pos_v1_"), count("pos_v2_"));
        if head != header(m1, m2, n_marks) {
            return Err(Error::Validation(format!("unexpected solution CSV header: {}", head.join(","))));
        }
        let mut tab = SolutionTable {
            t: vec![],
            p1: vec![],
            p2: vec![],
            lambda1: vec![],
            lambda2: vec![],
            gamma1: vec![],
            gamma2: vec![],
            v1: [vec![], vec![]],
            v2: [vec![], vec![]],
            h: [vec![], vec![]],
        };
        for rec in r.records() {
            let rec = rec?;
            let row: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Validation(format!("bad number `{s}`: {e}"))))
                .collect::<Result<_>>()?;
            let mut it = row.into_iter();
            let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
            let base = take(5);
            tab.t.push(base[0]);
            tab.p1.push(base[1]);
            tab.p2.push(base[2]);
            tab.lambda1.push(base[3]);
            tab.lambda2.push(base[4]);
            tab.gamma1.push(take(n_marks));
            tab.gamma2.push(take(n_marks));
            for slot in 0..2 {
                tab.v1[slot].push(take(m1));
                tab.v2[slot].push(take(m2));
            }
            let h = take(2);
            tab.h[0].push(h[0]);
            tab.h[1].push(h[1]);
        }
        Ok(tab)
    }
}
