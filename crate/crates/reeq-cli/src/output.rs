//! Run-directory layout and console tables.

use anyhow::Context;
use reeq_core::estimate::EstimationResult;
use reeq_core::riccati::CandidateEquilibrium;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Creates the output directory and echoes the effective configuration.
pub fn prepare_out_dir(dir: &Path, config_echo: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    std::fs::write(dir.join("config_echo.toml"), config_echo)?;
    Ok(())
}

/// Writes the plain-text run summary; the timestamp header is suppressed
/// under --reproducible so identical runs produce identical bytes.
pub fn write_summary(dir: &Path, reproducible: bool, body: &str) -> anyhow::Result<PathBuf> {
    let path = dir.join("summary.txt");
    let mut f = std::fs::File::create(&path)?;
    if !reproducible {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(f, "# generated at unix:{now}")?;
    }
    f.write_all(body.as_bytes())?;
    Ok(path)
}

/// Candidate table in the layout of the published candidate-price tables.
pub fn candidate_table(candidates: &[CandidateEquilibrium]) -> String {
    let mut s = String::new();
    s.push_str("                         Candidate Equilibrium Price\n");
    s.push_str(
        "--------------------------------------------------------------------------------\n",
    );
    s.push_str(&format!(
        "{:<22} {:>8} {:>12} {:>10} {:>8} {:>10}\n",
        "Equilibrium", "Utility", "p0", "pD0", "pD1", "pI"
    ));
    s.push_str(
        "--------------------------------------------------------------------------------\n",
    );
    for c in candidates {
        s.push_str(&format!(
            "{:<22} {:>8.2} {:>12.3} {:>10.3} {:>8.3} {:>10.3}\n",
            c.class.tag.to_string(),
            c.essential_utility,
            c.coeffs.p0,
            c.coeffs.p_d0,
            c.coeffs.p_d1,
            c.coeffs.p_i,
        ));
    }
    s.push_str(
        "--------------------------------------------------------------------------------\n",
    );
    s
}

/// Estimation block in the layout of the likelihood tables.
pub fn estimation_table(results: &[EstimationResult], lr_line: Option<&str>) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<24} {:>12} {:>10} {:>9} {:>9} {:>9} {:>9}\n",
        "Mode", "ML", "p0", "pD0", "pI", "pD1", "params"
    ));
    s.push_str(
        "--------------------------------------------------------------------------------------\n",
    );
    for r in results {
        let name = match r.mode {
            reeq_core::estimate::EstimationMode::TypeAConstrained => "Equilibrium-Type A",
            reeq_core::estimate::EstimationMode::TypeBFree => "Equilibrium-Type B",
        };
        s.push_str(&format!(
            "{:<24} {:>12.2} {:>10.3} {:>9.3} {:>9.3} {:>9.3} {:>9}\n",
            name,
            r.loglik,
            r.coeffs_hat.p0,
            r.coeffs_hat.p_d0,
            r.coeffs_hat.p_i,
            r.coeffs_hat.p_d1,
            r.n_params,
        ));
    }
    if let Some(line) = lr_line {
        s.push_str(
            "--------------------------------------------------------------------------------------\n",
        );
        s.push_str(line);
        s.push('\n');
    }
    s
}
