use super::config::RunConfig;
use super::HarnessError;
use crate::data::{ActorKind, Checkpoint, DemonstrationSet};
use crate::nets::GaussianActor;
use std::path::{Path, PathBuf};

/// `100 * run / expert`, rounded to two decimals.
pub fn normalized_score(run_return: f64, expert_return: f64) -> Result<f64, HarnessError> {
    if expert_return <= 0.0 {
        return Err(HarnessError::Config(format!(
            "normalized score needs a positive expert return, got {expert_return}"
        )));
    }
    let raw = 100.0 * run_return / expert_return;
    Ok((raw * 100.0).round() / 100.0)
}

/// Mean over demo states of the closed-form KL divergence between the
/// two pre-squash diagonal Gaussians. The shared tanh squash is a
/// bijection and leaves the KL unchanged.
pub fn kl_to_behavior(
    learning: &GaussianActor,
    behavior: &GaussianActor,
    demo_states: &[Vec<f64>],
) -> Result<f64, HarnessError> {
    if demo_states.is_empty() {
        return Err(HarnessError::Config(
            "kl_to_behavior needs at least one demo state".to_string(),
        ));
    }
    let mut total = 0.0;
    for s in demo_states {
        let (mu1, std1) = learning.distribution_at(s)?;
        let (mu2, std2) = behavior.distribution_at(s)?;
        for d in 0..mu1.len() {
            let (m1, s1, m2, s2) = (mu1[d], std1[d], mu2[d], std2[d]);
            total += (s2 / s1).ln() + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5;
        }
    }
    Ok(total / demo_states.len() as f64)
}

pub struct PcaResult {
    /// Projected (pc1, pc2) per snapshot, in input order.
    pub coords: Vec<(f64, f64)>,
    /// Top-2 components, unit norm; the second is zero when the data
    /// has rank < 2.
    pub components: [Vec<f64>; 2],
    /// Fraction of total variance per component.
    pub explained: [f64; 2],
    pub rank_deficient: bool,
}

pub const PCA_TOLERANCE: f64 = 1e-10;
pub const PCA_MAX_ITERS: usize = 10_000;

/// Top-2 principal directions of the centered snapshots via iterated
/// power method with deflation; matrix-free so the parameter dimension
/// never materializes a covariance.
pub fn pca_param_path(snapshots: &[Vec<f64>]) -> Result<PcaResult, HarnessError> {
    let n = snapshots.len();
    if n < 3 {
        return Err(HarnessError::Config(format!(
            "pca needs at least 3 snapshots, got {n}"
        )));
    }
    let p = snapshots[0].len();
    if snapshots.iter().any(|s| s.len() != p) {
        return Err(HarnessError::Config(
            "snapshots must share the parameter dimension".to_string(),
        ));
    }
    let mut mean = vec![0.0; p];
    for s in snapshots {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n as f64;
        }
    }
    let centered: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let denom = (n - 1) as f64;
    let total_variance: f64 = centered
        .iter()
        .flat_map(|r| r.iter().map(|v| v * v))
        .sum::<f64>()
        / denom;

    // C v = X^T (X v) / (n - 1)
    let cov_apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; p];
        for row in &centered {
            let dot: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            for (o, r) in out.iter_mut().zip(row) {
                *o += dot * r / denom;
            }
        }
        out
    };

    let mut components: [Vec<f64>; 2] = [vec![0.0; p], vec![0.0; p]];
    let mut eigenvalues = [0.0; 2];
    for k in 0..2 {
        // Deterministic start, orthogonalized against found components.
        let mut v: Vec<f64> = (0..p)
            .map(|i| 1.0 + (i as f64 + 1.0 + k as f64) * 1e-3)
            .collect();
        orthogonalize(&mut v, &components[..k]);
        if normalize(&mut v) == 0.0 {
            break;
        }
        let mut lambda = 0.0;
        for _ in 0..PCA_MAX_ITERS {
            let mut w = cov_apply(&v);
            orthogonalize(&mut w, &components[..k]);
            let norm = normalize(&mut w);
            if norm == 0.0 {
                lambda = 0.0;
                break;
            }
            let delta: f64 = w
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = w;
            lambda = norm;
            if delta < PCA_TOLERANCE {
                break;
            }
        }
        if lambda <= PCA_TOLERANCE * total_variance.max(1.0) {
            break;
        }
        fix_sign(&mut v);
        components[k] = v;
        eigenvalues[k] = lambda;
    }

    let rank_deficient = eigenvalues[1] == 0.0;
    if rank_deficient {
        eprintln!("warning: parameter path has rank < 2; emitting a 1-D projection");
    }
    let explained = if total_variance > 0.0 {
        [
            eigenvalues[0] / total_variance,
            eigenvalues[1] / total_variance,
        ]
    } else {
        [0.0, 0.0]
    };
    let coords = centered
        .iter()
        .map(|row| {
            let p1: f64 = row.iter().zip(&components[0]).map(|(a, b)| a * b).sum();
            let p2: f64 = row.iter().zip(&components[1]).map(|(a, b)| a * b).sum();
            (p1, p2)
        })
        .collect();
    Ok(PcaResult {
        coords,
        components,
        explained,
        rank_deficient,
    })
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        if b.iter().all(|&x| x == 0.0) {
            continue;
        }
        let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
        for (x, c) in v.iter_mut().zip(b) {
            *x -= dot * c;
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Deterministic orientation: the largest-magnitude coordinate is
/// positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Snapshot checkpoints of a run directory, in step order.
pub fn run_snapshots(run_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = run_dir.join("snapshots");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::Config(format!(
            "{}: no snapshot checkpoints",
            dir.display()
        )));
    }
    Ok(paths)
}

/// KL curve of a run's actor snapshots against the behavior policy the
/// demos came from; writes `kl.csv` into the run directory. Both
/// policies must be stochastic.
pub fn analyze_run_kl(run_dir: &Path) -> Result<PathBuf, HarnessError> {
    let cfg = RunConfig::from_file(&run_dir.join("config.txt"))?;
    let demo_path = cfg.demo_path.ok_or_else(|| {
        HarnessError::Config("run has no demo_path; KL needs the behavior policy".to_string())
    })?;
    let demos = DemonstrationSet::load(&demo_path)?;
    let behavior_path = demos.metadata.source_checkpoint.as_ref().ok_or_else(|| {
        HarnessError::Config("demo metadata does not name its source checkpoint".to_string())
    })?;
    let behavior_ck = Checkpoint::load(Path::new(behavior_path))?;
    if behavior_ck.kind != ActorKind::Gaussian {
        return Err(HarnessError::Config(
            "KL analysis is unsupported for deterministic actors".to_string(),
        ));
    }
    let behavior = behavior_ck.to_gaussian_actor()?;
    let states: Vec<Vec<f64>> = demos.pairs().iter().map(|(s, _)| s.clone()).collect();

    let mut out = String::from("step,kl\n");
    for p in run_snapshots(run_dir)? {
        let ck = Checkpoint::load(&p)?;
        if ck.kind != ActorKind::Gaussian {
            return Err(HarnessError::Config(
                "KL analysis is unsupported for deterministic actors".to_string(),
            ));
        }
        let learner = ck.to_gaussian_actor()?;
        let kl = kl_to_behavior(&learner, &behavior, &states)?;
        out.push_str(&format!("{},{}\n", ck.step, kl));
    }
    let path = run_dir.join("kl.csv");
    std::fs::write(&path, out)?;
    Ok(path)
}

/// Project a run's actor snapshots onto their top-2 parameter-space
/// directions; writes `pca_path.csv` and `pca_info.json` into the run
/// directory.
pub fn analyze_run_pca(run_dir: &Path) -> Result<PathBuf, HarnessError> {
    let paths = run_snapshots(run_dir)?;
    let mut steps = Vec::with_capacity(paths.len());
    let mut flats = Vec::with_capacity(paths.len());
    for p in &paths {
        let ck = Checkpoint::load(p)?;
        steps.push(ck.step);
        flats.push(
            ck.layers
                .iter()
                .flat_map(|l| l.data.iter().copied())
                .collect::<Vec<f64>>(),
        );
    }
    let result = pca_param_path(&flats)?;
    let mut out = String::from("snapshot_step,pc1,pc2\n");
    for (step, (p1, p2)) in steps.iter().zip(&result.coords) {
        out.push_str(&format!("{step},{p1},{p2}\n"));
    }
    let csv_path = run_dir.join("pca_path.csv");
    std::fs::write(&csv_path, out)?;
    let info = serde_json::json!({
        "explained_variance_fractions": result.explained,
        "rank_deficient": result.rank_deficient,
        "components": result.components,
    });
    std::fs::write(
        run_dir.join("pca_info.json"),
        serde_json::to_string_pretty(&info).map_err(|e| HarnessError::Config(e.to_string()))?,
    )?;
    Ok(csv_path)
}
