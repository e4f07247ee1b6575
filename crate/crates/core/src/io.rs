//! File formats: MDP and basis documents (JSON), policy documents, and the
//! metrics CSV.
//!
//! MDP document:
//!
//! ```json
//! {
//!   "num_states": 2,
//!   "num_actions": 1,
//!   "gamma": 0.9,
//!   "initial": [0.5, 0.5],
//!   "reward": [0.0, 1.0],
//!   "transition": [
//!     [0.0, 1.0],
//!     [0.0, 1.0]
//!   ]
//! }
//! ```
//!
//! `reward` is indexed by `s·A + a`; `transition` has one row of length `S`
//! per pair, in the same order.
//!
//! Basis document: `d_v`, `d_mu`, `phi` as `S` rows of length `d_v`, and
//! `psi` either as `S·A` rows of length `d_mu` or one of the generator names
//! `"tabular"` and `"state-aggregation:k"`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureBasis, SparseColumn};
use crate::mdp::{Policy, TabularMdp, Violation};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub initial: Vec<f64>,
    pub reward: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
}

impl MdpFile {
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        let n = mdp.num_states();
        Self {
            num_states: n,
            num_actions: mdp.num_actions(),
            gamma: mdp.gamma(),
            initial: mdp.initial().to_vec(),
            reward: mdp.reward().to_vec(),
            transition: mdp.transition().chunks(n).map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn into_mdp(self) -> Result<TabularMdp> {
        let ns = self.num_states;
        let sa = ns * self.num_actions;
        let mut shape = Vec::new();
        if self.transition.len() != sa {
            shape.push(Violation::new("transition", None, format!("{} rows, expected {sa}", self.transition.len())));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != ns {
                shape.push(Violation::new("transition", Some(i), format!("row has {} entries, expected {ns}", row.len())));
            }
        }
        if self.reward.len() != sa {
            shape.push(Violation::new("reward", None, format!("{} entries, expected {sa}", self.reward.len())));
        }
        if self.initial.len() != ns {
            shape.push(Violation::new("initial", None, format!("{} entries, expected {ns}", self.initial.len())));
        }
        if ns == 0 || self.num_actions == 0 {
            shape.push(Violation::new("num_states", None, "state and action counts must be positive"));
        }
        if !shape.is_empty() {
            return Err(Error::InvalidMdp(shape));
        }
        TabularMdp::new(
            ns,
            self.num_actions,
            self.transition.concat(),
            self.reward,
            self.initial,
            self.gamma,
        )
    }
}

/// Reads and validates an MDP document.
pub fn load_mdp(path: impl AsRef<Path>) -> Result<TabularMdp> {
    parse_mdp(&fs::read_to_string(path)?)
}

pub fn parse_mdp(text: &str) -> Result<TabularMdp> {
    let file: MdpFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_mdp()
}

/// Deterministic rendering with one transition row per line.
pub fn mdp_to_json(mdp: &TabularMdp) -> String {
    let f = MdpFile::from_mdp(mdp);
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"num_states\": {},", f.num_states);
    let _ = writeln!(out, "  \"num_actions\": {},", f.num_actions);
    let _ = writeln!(out, "  \"gamma\": {},", number(f.gamma));
    let _ = writeln!(out, "  \"initial\": {},", inline_array(&f.initial));
    let _ = writeln!(out, "  \"reward\": {},", inline_array(&f.reward));
    let _ = writeln!(out, "  \"transition\": {}", row_array(&f.transition, 2));
    out.push_str("}\n");
    out
}

pub fn save_mdp(mdp: &TabularMdp, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, mdp_to_json(mdp))?;
    Ok(())
}

fn number(x: f64) -> String {
    serde_json::to_string(&x).expect("finite float")
}

fn inline_array(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|&x| number(x)).collect();
    format!("[{}]", items.join(", "))
}

fn row_array(rows: &[Vec<f64>], indent: usize) -> String {
    let pad = " ".repeat(indent);
    let items: Vec<String> = rows.iter().map(|r| format!("{pad}  {}", inline_array(r))).collect();
    format!("[\n{}\n{pad}]", items.join(",\n"))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PsiSpec {
    Generator(String),
    Dense(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisFile {
    pub d_v: usize,
    pub d_mu: usize,
    pub phi: Vec<Vec<f64>>,
    pub psi: PsiSpec,
}

impl BasisFile {
    /// Builds and validates the basis for an `S × A` MDP.
    pub fn into_basis(self, num_states: usize, num_actions: usize) -> Result<FeatureBasis> {
        let sa = num_states * num_actions;
        let mut shape = Vec::new();
        if self.phi.len() != num_states {
            shape.push(Violation::new("phi", None, format!("{} rows, expected {num_states}", self.phi.len())));
        }
        for (s, row) in self.phi.iter().enumerate() {
            if row.len() != self.d_v {
                shape.push(Violation::new("phi", Some(s), format!("row has {} entries, expected {}", row.len(), self.d_v)));
            }
        }
        let columns = match &self.psi {
            PsiSpec::Dense(rows) => {
                if rows.len() != sa {
                    shape.push(Violation::new("psi", None, format!("{} rows, expected {sa}", rows.len())));
                }
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != self.d_mu {
                        shape.push(Violation::new("psi", Some(i), format!("row has {} entries, expected {}", row.len(), self.d_mu)));
                    }
                }
                if shape.is_empty() {
                    Some(
                        (0..self.d_mu)
                            .map(|k| SparseColumn::new((0..sa).filter(|&i| rows[i][k] != 0.0).map(|i| (i, rows[i][k])).collect()))
                            .collect::<Vec<_>>(),
                    )
                } else {
                    None
                }
            }
            PsiSpec::Generator(name) => {
                let cols = if name == "tabular" {
                    features::tabular_columns(num_states, num_actions)
                } else if let Some(k) = name.strip_prefix("state-aggregation:") {
                    let k = k.parse().map_err(|_| Error::Parse(format!("bad group count in {name:?}")))?;
                    features::aggregation_columns(num_states, num_actions, k)?
                } else {
                    return Err(Error::Parse(format!("unknown psi generator {name:?}")));
                };
                if cols.len() != self.d_mu {
                    shape.push(Violation::new("d_mu", None, format!("generator {name:?} has {} columns, d_mu is {}", cols.len(), self.d_mu)));
                }
                Some(cols)
            }
        };
        if !shape.is_empty() {
            return Err(Error::InvalidBasis(shape));
        }
        FeatureBasis::new(num_states, num_actions, self.d_v, self.phi.concat(), columns.expect("checked above"))
    }
}

pub fn load_basis(path: impl AsRef<Path>, num_states: usize, num_actions: usize) -> Result<FeatureBasis> {
    parse_basis(&fs::read_to_string(path)?, num_states, num_actions)
}

pub fn parse_basis(text: &str, num_states: usize, num_actions: usize) -> Result<FeatureBasis> {
    let file: BasisFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_basis(num_states, num_actions)
}

/// `S` rows of `A` action probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub policy: Vec<Vec<f64>>,
}

impl PolicyDocument {
    pub fn from_policy(pi: &Policy) -> Self {
        Self {
            num_states: pi.num_states(),
            num_actions: pi.num_actions(),
            policy: (0..pi.num_states()).map(|s| pi.row(s).to_vec()).collect(),
        }
    }

    pub fn into_policy(self) -> Result<Policy> {
        if self.policy.len() != self.num_states || self.policy.iter().any(|r| r.len() != self.num_actions) {
            return Err(Error::Dimension("policy rows do not match num_states x num_actions".into()));
        }
        Policy::new(self.num_states, self.num_actions, self.policy.concat())
    }

    pub fn to_json(&self) -> String {
        format!(
            "{{\n  \"num_states\": {},\n  \"num_actions\": {},\n  \"policy\": {}\n}}\n",
            self.num_states,
            self.num_actions,
            row_array(&self.policy, 2)
        )
    }
}

pub fn parse_policy(text: &str) -> Result<Policy> {
    let doc: PolicyDocument = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    doc.into_policy()
}

pub const CSV_HEADER: &str = "run_id,seed,n,eta,value_gap,residual_cert,queries,elapsed_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub n: usize,
    pub eta: f64,
    /// NaN when not evaluated.
    pub value_gap: f64,
    pub residual_cert: f64,
    pub queries: u64,
    pub elapsed_ms: f64,
}

/// 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.run_id,
            self.seed,
            self.n,
            format_float(self.eta),
            format_float(self.value_gap),
            format_float(self.residual_cert),
            self.queries,
            format_float(self.elapsed_ms)
        )
    }
}

/// Writes `# comment` lines, the header, then one line per row.
pub fn write_metrics_csv(mut w: impl Write, comments: &[String], rows: &[MetricsRow]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv_line())?;
    }
    Ok(())
}

/// Inverse of [`write_metrics_csv`]; comment lines are skipped.
pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected CSV header {other:?}"))),
    }
    let float = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
    let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Parse(format!("expected 8 fields in {line:?}")));
            }
            Ok(MetricsRow {
                run_id: f[0].to_string(),
                seed: int(f[1])?,
                n: int(f[2])? as usize,
                eta: float(f[3])?,
                value_gap: float(f[4])?,
                residual_cert: float(f[5])?,
                queries: int(f[6])?,
                elapsed_ms: float(f[7])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{gen_counterexample, gen_gridworld, gen_random_mdp};

    #[test]
    fn mdp_round_trip_is_exact() {
        for mdp in [
            gen_counterexample(0.9).mdp,
            gen_random_mdp(5, 3, 2, 0.99, 7).unwrap(),
            gen_gridworld(3, 2, 0.2, 0.95).unwrap(),
        ] {
            let text = mdp_to_json(&mdp);
            let back = parse_mdp(&text).unwrap();
            assert_eq!(back, mdp);
            assert_eq!(mdp_to_json(&back), text);
        }
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(parse_mdp("{"), Err(Error::Parse(_))));
        let bad_row = r#"{"num_states":2,"num_actions":1,"gamma":0.5,"initial":[0.5,0.5],"reward":[0,1],"transition":[[1.0],[0.0,1.0]]}"#;
        match parse_mdp(bad_row) {
            Err(Error::InvalidMdp(v)) => assert_eq!(v[0].index, Some(0)),
            other => panic!("{other:?}"),
        }
        let bad_prob = r#"{"num_states":2,"num_actions":1,"gamma":0.5,"initial":[0.5,0.5],"reward":[0,1],"transition":[[0.7,0.7],[0.0,1.0]]}"#;
        assert!(matches!(parse_mdp(bad_prob), Err(Error::InvalidMdp(_))));
        assert!(matches!(load_mdp("/nonexistent/mdp.json"), Err(Error::Io(_))));
    }

    #[test]
    fn basis_documents() {
        let dense = r#"{"d_v":1,"d_mu":2,"phi":[[1.0],[0.5]],"psi":[[1.0,0.0],[0.0,0.5],[0.0,0.5],[0.0,0.0]]}"#;
        let b = parse_basis(dense, 2, 2).unwrap();
        assert_eq!((b.d_v(), b.d_mu()), (1, 2));
        assert_eq!(b.psi_column(1).entries(), &[(1, 0.5), (2, 0.5)]);

        let bad_col = r#"{"d_v":1,"d_mu":2,"phi":[[1.0],[0.5]],"psi":[[1.0,0.0],[0.0,0.5],[0.0,0.4],[0.0,0.0]]}"#;
        match parse_basis(bad_col, 2, 2) {
            Err(Error::InvalidBasis(v)) => assert_eq!((v[0].field.as_str(), v[0].index), ("psi column", Some(1))),
            other => panic!("{other:?}"),
        }

        let tab = r#"{"d_v":2,"d_mu":4,"phi":[[1.0,0.0],[0.0,1.0]],"psi":"tabular"}"#;
        assert_eq!(parse_basis(tab, 2, 2).unwrap(), features::tabular_basis(2, 2));
        let agg = r#"{"d_v":1,"d_mu":2,"phi":[[1.0],[1.0]],"psi":"state-aggregation:1"}"#;
        assert_eq!(parse_basis(agg, 2, 2).unwrap(), features::state_aggregation_basis(2, 2, 1).unwrap());
        let wrong_count = r#"{"d_v":1,"d_mu":3,"phi":[[1.0],[1.0]],"psi":"tabular"}"#;
        assert!(matches!(parse_basis(wrong_count, 2, 2), Err(Error::InvalidBasis(_))));
    }

    #[test]
    fn policy_round_trip() {
        let pi = Policy::new(2, 3, vec![0.2, 0.3, 0.5, 1.0, 0.0, 0.0]).unwrap();
        let text = PolicyDocument::from_policy(&pi).to_json();
        assert_eq!(parse_policy(&text).unwrap(), pi);
    }

    #[test]
    fn csv_format() {
        let row = MetricsRow {
            run_id: "r".into(),
            seed: 3,
            n: 16,
            eta: 0.1,
            value_gap: f64::NAN,
            residual_cert: 1.0 / 3.0,
            queries: 32,
            elapsed_ms: 0.0,
        };
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &["eta = 0.1".into()], std::slice::from_ref(&row)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# eta = 0.1");
        assert_eq!(lines[1], CSV_HEADER);
        assert_eq!(lines[2], "r,3,16,1.0000000000000001e-1,NaN,3.3333333333333331e-1,32,0.0000000000000000e0");
        let back = read_metrics_csv(&text).unwrap();
        assert_eq!(back[0].residual_cert, row.residual_cert);
        assert!(back[0].value_gap.is_nan());
    }
}
