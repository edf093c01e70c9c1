//! Per-sample diagnostic records and their fixed CSV layout.

use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};

/// One row of the diagnostics series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub sup_abs_phi: f64,
    pub sup_abs_phi_dot: f64,
    /// `sup |phi + delta eta - psi|`.
    pub sup_abs_v: f64,
    /// `sup |d/dt phi + phi + delta eta - psi|`.
    pub sup_abs_u_minus_psi: f64,
    pub sup_r: f64,
    pub inf_r: f64,
    pub sup_abs_twisted_r: f64,
    /// `sup |twisted R + rho_{chi_t} / rho_omega + Delta u|` over resolved nodes.
    pub twisted_identity_defect: f64,
    pub sup_tr_chi_star: f64,
    pub sup_tr_omega0: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub sup_t_grad_u_sq: f64,
    pub inf_t_lap_u: f64,
    /// Weighted trace defect with the configured exponent: positive part, absolute value.
    pub trace_defect_pos: f64,
    pub trace_defect_abs: f64,
    /// The same with twice the configured exponent.
    pub trace_defect_pos_2g: f64,
    pub trace_defect_abs_2g: f64,
    pub base_area: f64,
    pub fiber_area: f64,
    pub area_defect: f64,
    pub fiber_diam: f64,
    pub base_diam: f64,
    pub total_diam: f64,
    pub gh_bound: f64,
    /// Neighbourhood diameters, one per configured ball parameter (`NaN` when unresolved).
    pub nbhd_diam: Vec<f64>,
}

/// Fixed leading columns; the neighbourhood columns follow.
pub const FIXED_COLUMNS: [&str; 26] = [
    "t",
    "sup_abs_phi",
    "sup_abs_phi_dot",
    "sup_abs_v",
    "sup_abs_u_minus_psi",
    "sup_r",
    "inf_r",
    "sup_abs_twisted_r",
    "twisted_identity_defect",
    "sup_tr_chi_star",
    "sup_tr_omega0",
    "ratio_min",
    "ratio_max",
    "sup_t_grad_u_sq",
    "inf_t_lap_u",
    "trace_defect_pos",
    "trace_defect_abs",
    "trace_defect_pos_2g",
    "trace_defect_abs_2g",
    "base_area",
    "fiber_area",
    "area_defect",
    "fiber_diam",
    "base_diam",
    "total_diam",
    "gh_bound",
];

/// Column name of the neighbourhood diameter for ball parameter `eps_gh`, e.g. `nbhd_diam_0p05`.
pub fn nbhd_column(eps_gh: f64) -> String {
    format!("nbhd_diam_{}", format!("{eps_gh}").replace('.', "p"))
}

/// Full header for the configured ball parameters.
pub fn header(gh_eps: &[f64]) -> Vec<String> {
    FIXED_COLUMNS.iter().map(|s| s.to_string()).chain(gh_eps.iter().map(|e| nbhd_column(*e))).collect()
}

impl DiagnosticsRecord {
    /// Values in header order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.t,
            self.sup_abs_phi,
            self.sup_abs_phi_dot,
            self.sup_abs_v,
            self.sup_abs_u_minus_psi,
            self.sup_r,
            self.inf_r,
            self.sup_abs_twisted_r,
            self.twisted_identity_defect,
            self.sup_tr_chi_star,
            self.sup_tr_omega0,
            self.ratio_min,
            self.ratio_max,
            self.sup_t_grad_u_sq,
            self.inf_t_lap_u,
            self.trace_defect_pos,
            self.trace_defect_abs,
            self.trace_defect_pos_2g,
            self.trace_defect_abs_2g,
            self.base_area,
            self.fiber_area,
            self.area_defect,
            self.fiber_diam,
            self.base_diam,
            self.total_diam,
            self.gh_bound,
        ];
        v.extend_from_slice(&self.nbhd_diam);
        v
    }

    /// `sup_s |R|`.
    pub fn sup_abs_r(&self) -> f64 {
        self.sup_r.abs().max(self.inf_r.abs())
    }
}

/// Column-oriented view of a parsed diagnostics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DiagnosticsTable {
    pub fn from_records(records: &[DiagnosticsRecord], gh_eps: &[f64]) -> Self {
        Self { header: header(gh_eps), rows: records.iter().map(|r| r.values()).collect() }
    }

    /// CSV text with shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| LabError::InvalidInput("empty diagnostics file".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = vec![];
        for (k, line) in lines.enumerate() {
            let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| LabError::InvalidInput(format!("row {}: {e}", k + 1)))?;
            if row.len() != header.len() {
                return Err(LabError::InvalidInput(format!(
                    "row {} has {} cells, header has {}",
                    k + 1,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        let table = Self { header, rows };
        if let Some(ti) = table.index("t") {
            if table.rows.windows(2).any(|w| !(w[1][ti] > w[0][ti])) {
                return Err(LabError::InvalidInput("sample times are not strictly increasing".into()));
            }
        }
        Ok(table)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// A whole column by name.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.index(name).ok_or_else(|| LabError::InvalidInput(format!("missing column {name}")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64) -> DiagnosticsRecord {
        let mut v = (0..FIXED_COLUMNS.len()).map(|k| t + k as f64 / 3.0);
        DiagnosticsRecord {
            t: v.next().unwrap(),
            sup_abs_phi: v.next().unwrap(),
            sup_abs_phi_dot: v.next().unwrap(),
            sup_abs_v: v.next().unwrap(),
            sup_abs_u_minus_psi: v.next().unwrap(),
            sup_r: v.next().unwrap(),
            inf_r: v.next().unwrap(),
            sup_abs_twisted_r: v.next().unwrap(),
            twisted_identity_defect: v.next().unwrap(),
            sup_tr_chi_star: v.next().unwrap(),
            sup_tr_omega0: v.next().unwrap(),
            ratio_min: v.next().unwrap(),
            ratio_max: v.next().unwrap(),
            sup_t_grad_u_sq: v.next().unwrap(),
            inf_t_lap_u: v.next().unwrap(),
            trace_defect_pos: v.next().unwrap(),
            trace_defect_abs: v.next().unwrap(),
            trace_defect_pos_2g: v.next().unwrap(),
            trace_defect_abs_2g: v.next().unwrap(),
            base_area: v.next().unwrap(),
            fiber_area: v.next().unwrap(),
            area_defect: v.next().unwrap(),
            fiber_diam: v.next().unwrap(),
            base_diam: v.next().unwrap(),
            total_diam: v.next().unwrap(),
            gh_bound: v.next().unwrap(),
            nbhd_diam: vec![0.1 * t, f64::NAN],
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let recs = vec![record(0.0), record(0.1), record(1.0 / 7.0 + 1.0)];
        let table = DiagnosticsTable::from_records(&recs, &[0.2, 0.05]);
        let parsed = DiagnosticsTable::parse(&table.to_csv()).unwrap();
        assert_eq!(parsed.header, table.header);
        for (a, b) in parsed.rows.iter().zip(&table.rows) {
            for (x, y) in a.iter().zip(b) {
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
        assert_eq!(parsed.header.last().unwrap(), "nbhd_diam_0p05");
    }

    #[test]
    fn parse_rejects_ragged_and_unordered_rows() {
        assert!(DiagnosticsTable::parse("t,a\n0,1\n1\n").is_err());
        assert!(DiagnosticsTable::parse("t,a\n1,1\n0.5,2\n").is_err());
    }
}
