//! Labeled-dataset generation for classifier training.
//!
//! Points come from a Cartesian grid over the control box (optionally
//! subsampled to a budget) plus perturbations around found-feasible points,
//! since most of the raw box is insecure. Labels come straight from the
//! security oracle, the majority class is downsampled to the target
//! balance, and an 80/20 stratified split is recorded per sample. The CSV
//! file is deterministic byte-for-byte under a fixed seed.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridCase;
use crate::oracle::SecurityOracle;
use crate::pf::OperatingPoint;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Grid,
    Resample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: usize,
    /// Raw control vector in the case's control ordering.
    pub controls: Vec<f64>,
    /// true = the oracle accepted the point.
    pub label: bool,
    pub provenance: Provenance,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub case_fingerprint: String,
    pub control_labels: Vec<String>,
    pub control_lo: Vec<f64>,
    pub control_hi: Vec<f64>,
    pub seed: u64,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].split == split)
            .collect()
    }

    pub fn feasible_count(&self) -> usize {
        self.samples.iter().filter(|s| s.label).count()
    }

    pub fn balance(&self) -> f64 {
        self.feasible_count() as f64 / self.samples.len() as f64
    }

    pub fn class_balance_of(&self, split: Split) -> f64 {
        let rows = self.split_indices(split);
        let feas = rows.iter().filter(|&&i| self.samples[i].label).count();
        feas as f64 / rows.len() as f64
    }
}

/// Points of a Cartesian grid over explicit per-dimension boxes, optionally
/// subsampled without replacement to `budget` points.
pub fn grid_points(
    lo: &[f64],
    hi: &[f64],
    points_per_dim: usize,
    budget: Option<usize>,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if points_per_dim < 2 {
        return Err(Error::Dataset("points_per_dim must be at least 2".into()));
    }
    if budget == Some(0) {
        return Err(Error::Dataset("budget of zero points".into()));
    }
    let d = lo.len();
    let mut total: u128 = 1;
    for _ in 0..d {
        total = total.saturating_mul(points_per_dim as u128);
    }
    let value = |dim: usize, idx: usize| {
        lo[dim] + (hi[dim] - lo[dim]) * idx as f64 / (points_per_dim - 1) as f64
    };
    let decode = |mut code: u128| -> Vec<f64> {
        let mut p = vec![0.0; d];
        for dim in (0..d).rev() {
            let idx = (code % points_per_dim as u128) as usize;
            code /= points_per_dim as u128;
            p[dim] = value(dim, idx);
        }
        p
    };
    match budget {
        Some(b) if (b as u128) < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut chosen = HashSet::with_capacity(b);
            while chosen.len() < b {
                let code = rng.gen_range(0..total);
                chosen.insert(code);
            }
            let mut codes: Vec<u128> = chosen.into_iter().collect();
            codes.sort_unstable();
            Ok(codes.into_iter().map(decode).collect())
        }
        _ => {
            if total > 20_000_000 {
                return Err(Error::Dataset(format!(
                    "full grid of {total} points needs a budget"
                )));
            }
            Ok((0..total).map(decode).collect())
        }
    }
}

/// Cartesian grid over the case's control box.
pub fn sample_grid(
    case: &GridCase,
    points_per_dim: usize,
    budget: Option<usize>,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let cs = case.control_space();
    grid_points(&cs.lower(), &cs.upper(), points_per_dim, budget, seed)
}

/// Uniform perturbations within per-dimension radii, clipped to the box.
/// Seeds rotate round-robin over the feasible points.
pub fn resample_with_radii(
    case: &GridCase,
    feasible: &[Vec<f64>],
    radii: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if feasible.is_empty() {
        return Err(Error::Dataset(
            "resampling needs at least one feasible point".into(),
        ));
    }
    let cs = case.control_space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let center = &feasible[k % feasible.len()];
        let mut p: Vec<f64> = center
            .iter()
            .zip(radii)
            .map(|(c, r)| c + rng.gen_range(-1.0f64..1.0) * r)
            .collect();
        cs.clip(&mut p);
        out.push(p);
    }
    Ok(out)
}

/// Scalar-radius perturbation in every control dimension.
pub fn resample_near_feasible(
    case: &GridCase,
    feasible: &[Vec<f64>],
    radius: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let d = case.control_space().len();
    resample_with_radii(case, feasible, &vec![radius; d], count, seed)
}

/// Oracle labels for a batch of control vectors, in input order.
pub fn label_points(case: &GridCase, points: &[Vec<f64>]) -> Result<Vec<bool>> {
    let oracle = SecurityOracle::new(case)?;
    let labels: Vec<bool> = points
        .par_iter()
        .map(|controls| match OperatingPoint::from_controls(case, controls) {
            Ok(u) => oracle.is_feasible(&u),
            Err(_) => false,
        })
        .collect();
    Ok(labels)
}

/// Downsample the majority class to the target feasible fraction and assign
/// a stratified train/test split. Consumes (point, label, provenance) rows.
pub fn balance_and_split(
    case: &GridCase,
    rows: Vec<(Vec<f64>, bool, Provenance)>,
    target_balance: f64,
    seed: u64,
) -> Result<Dataset> {
    if rows.is_empty() {
        return Err(Error::Dataset("no points to balance".into()));
    }
    if !(0.0 < target_balance && target_balance < 1.0) {
        return Err(Error::Dataset("target balance must be inside (0,1)".into()));
    }
    let feas_ids: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].1).collect();
    let infeas_ids: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].1).collect();
    if feas_ids.is_empty() || infeas_ids.is_empty() {
        return Err(Error::Dataset(
            "one class is empty; widen the grid or resample more".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba1a_ce00);
    let keep = |ids: &[usize], n: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut sel = ids.to_vec();
        for i in (1..sel.len()).rev() {
            let j = rng.gen_range(0..=i);
            sel.swap(i, j);
        }
        sel.truncate(n);
        sel.sort_unstable();
        sel
    };
    let f = target_balance;
    let (kept_feas, kept_infeas) = {
        let n_f = feas_ids.len() as f64;
        let n_i = infeas_ids.len() as f64;
        if n_f / (n_f + n_i) > f {
            // feasible is the majority at the target ratio
            let want_f = ((f / (1.0 - f)) * n_i).round() as usize;
            (
                keep(&feas_ids, want_f.min(feas_ids.len()), &mut rng),
                infeas_ids,
            )
        } else {
            let want_i = (((1.0 - f) / f) * n_f).round() as usize;
            (
                feas_ids,
                keep(&infeas_ids, want_i.min(infeas_ids.len()), &mut rng),
            )
        }
    };

    // stratified 80/20 split inside each class
    let mut split_of = vec![Split::Train; rows.len()];
    for class_ids in [&kept_feas, &kept_infeas] {
        let mut order = (*class_ids).clone();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let n_train = (DEFAULT_TRAIN_FRACTION * order.len() as f64).round() as usize;
        for (pos, &id) in order.iter().enumerate() {
            split_of[id] = if pos < n_train { Split::Train } else { Split::Test };
        }
    }

    let mut kept: Vec<usize> = kept_feas.iter().chain(kept_infeas.iter()).copied().collect();
    kept.sort_unstable();
    let cs = case.control_space();
    let samples: Vec<LabeledSample> = kept
        .into_iter()
        .map(|id| LabeledSample {
            id,
            controls: rows[id].0.clone(),
            label: rows[id].1,
            provenance: rows[id].2,
            split: split_of[id],
        })
        .collect();
    Ok(Dataset {
        case_fingerprint: case.fingerprint(),
        control_labels: cs.labels(),
        control_lo: cs.lower(),
        control_hi: cs.upper(),
        seed,
        samples,
    })
}

/// Label a point batch and balance it in one step.
pub fn label_and_balance(
    case: &GridCase,
    points: Vec<(Vec<f64>, Provenance)>,
    target_balance: f64,
    seed: u64,
) -> Result<Dataset> {
    if points.is_empty() {
        return Err(Error::Dataset("no points to label".into()));
    }
    let raw: Vec<Vec<f64>> = points.iter().map(|(p, _)| p.clone()).collect();
    let labels = label_points(case, &raw)?;
    let rows: Vec<(Vec<f64>, bool, Provenance)> = points
        .into_iter()
        .zip(labels)
        .map(|((p, prov), l)| (p, l, prov))
        .collect();
    balance_and_split(case, rows, target_balance, seed)
}

/// Knobs of the full dataset generation pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub points_per_dim: usize,
    pub grid_budget: usize,
    /// Resampled points per found-feasible grid point, as a total count.
    pub resample_count: usize,
    /// Perturbation radius as a fraction of each control's range.
    pub resample_radius_frac: f64,
    pub target_balance: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            points_per_dim: 5,
            grid_budget: 6000,
            resample_count: 14000,
            resample_radius_frac: 0.05,
            target_balance: 0.5,
            seed: 1,
        }
    }
}

/// Grid sampling, feasibility labeling, resampling around feasible points,
/// and balancing, end to end.
pub fn generate(case: &GridCase, cfg: &GenConfig) -> Result<Dataset> {
    let grid = sample_grid(case, cfg.points_per_dim, Some(cfg.grid_budget), cfg.seed)?;
    let grid_labels = label_points(case, &grid)?;
    let feasible: Vec<Vec<f64>> = grid
        .iter()
        .zip(&grid_labels)
        .filter(|(_, &l)| l)
        .map(|(p, _)| p.clone())
        .collect();
    let mut rows: Vec<(Vec<f64>, bool, Provenance)> = grid
        .into_iter()
        .zip(grid_labels)
        .map(|(p, l)| (p, l, Provenance::Grid))
        .collect();
    if !feasible.is_empty() && cfg.resample_count > 0 {
        let cs = case.control_space();
        let radii: Vec<f64> = cs
            .dims
            .iter()
            .map(|d| cfg.resample_radius_frac * (d.hi - d.lo))
            .collect();
        let extra = resample_with_radii(case, &feasible, &radii, cfg.resample_count, cfg.seed + 1)?;
        let extra_labels = label_points(case, &extra)?;
        rows.extend(
            extra
                .into_iter()
                .zip(extra_labels)
                .map(|(p, l)| (p, l, Provenance::Resample)),
        );
    }
    balance_and_split(case, rows, cfg.target_balance, cfg.seed)
}

/// Write the dataset as CSV with `#`-prefixed header metadata lines.
/// Extra header lines (e.g. a manifest hash) are emitted verbatim.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>, extra_header: &[String]) -> Result<()> {
    let mut file = std::fs::File::create(path.as_ref())?;
    writeln!(file, "# secopf-dataset v1")?;
    writeln!(file, "# case {}", dataset.case_fingerprint)?;
    writeln!(file, "# seed {}", dataset.seed)?;
    for (label, lo, hi) in dataset
        .control_labels
        .iter()
        .zip(&dataset.control_lo)
        .zip(&dataset.control_hi)
        .map(|((l, lo), hi)| (l, lo, hi))
    {
        writeln!(file, "# control {label} {lo} {hi}")?;
    }
    for line in extra_header {
        writeln!(file, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["id".to_string()];
    header.extend(dataset.control_labels.iter().cloned());
    header.extend(["label", "provenance", "split"].map(String::from));
    w.write_record(&header)?;
    for s in &dataset.samples {
        let mut rec = vec![s.id.to_string()];
        rec.extend(s.controls.iter().map(|v| v.to_string()));
        rec.push(if s.label { "feasible" } else { "infeasible" }.into());
        rec.push(
            match s.provenance {
                Provenance::Grid => "grid",
                Provenance::Resample => "resample",
            }
            .into(),
        );
        rec.push(
            match s.split {
                Split::Train => "train",
                Split::Test => "test",
            }
            .into(),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut case_fingerprint = String::new();
    let mut seed = 0u64;
    let mut control_labels = Vec::new();
    let mut control_lo = Vec::new();
    let mut control_hi = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(meta) = line.strip_prefix('#') {
            let parts: Vec<&str> = meta.split_whitespace().collect();
            match parts.first() {
                Some(&"case") if parts.len() >= 2 => case_fingerprint = parts[1].to_string(),
                Some(&"seed") if parts.len() >= 2 => {
                    seed = parts[1].parse().unwrap_or_default()
                }
                Some(&"control") if parts.len() >= 4 => {
                    control_labels.push(parts[1].to_string());
                    control_lo.push(parts[2].parse().map_err(|_| {
                        Error::Parse(format!("bad control bound in '{line}'"))
                    })?);
                    control_hi.push(parts[3].parse().map_err(|_| {
                        Error::Parse(format!("bad control bound in '{line}'"))
                    })?);
                }
                _ => {}
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let n_controls = control_labels.len();
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != n_controls + 4 {
            return Err(Error::Parse(format!(
                "expected {} columns, found {}",
                n_controls + 4,
                rec.len()
            )));
        }
        let id: usize = rec[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad id '{}'", &rec[0])))?;
        let mut controls = Vec::with_capacity(n_controls);
        for i in 0..n_controls {
            controls.push(
                rec[1 + i]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad control '{}'", &rec[1 + i])))?,
            );
        }
        let label = match &rec[n_controls + 1] {
            "feasible" => true,
            "infeasible" => false,
            other => return Err(Error::Parse(format!("bad label '{other}'"))),
        };
        let provenance = match &rec[n_controls + 2] {
            "grid" => Provenance::Grid,
            "resample" => Provenance::Resample,
            other => return Err(Error::Parse(format!("bad provenance '{other}'"))),
        };
        let split = match &rec[n_controls + 3] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(Error::Parse(format!("bad split '{other}'"))),
        };
        samples.push(LabeledSample {
            id,
            controls,
            label,
            provenance,
            split,
        });
    }
    Ok(Dataset {
        case_fingerprint,
        control_labels,
        control_lo,
        control_hi,
        seed,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn one_dim_grid_three_points() {
        let pts = grid_points(&[0.0], &[1.0], 3, None, 0).unwrap();
        assert_eq!(pts, vec![vec![0.0], vec![0.5], vec![1.0]]);
    }

    #[test]
    fn two_dim_grid_corners() {
        let pts = grid_points(&[0.0, -1.0], &[1.0, 1.0], 2, None, 0).unwrap();
        assert_eq!(
            pts,
            vec![
                vec![0.0, -1.0],
                vec![0.0, 1.0],
                vec![1.0, -1.0],
                vec![1.0, 1.0]
            ]
        );
    }

    #[test]
    fn budget_cap_yields_exact_distinct_count() {
        let case = cases::ieee14();
        let pts = sample_grid(&case, 7, Some(3000), 42).unwrap();
        assert_eq!(pts.len(), 3000);
        let set: HashSet<String> = pts.iter().map(|p| format!("{p:?}")).collect();
        assert_eq!(set.len(), 3000, "points must be distinct");
    }

    #[test]
    fn grid_rejects_degenerate_requests() {
        assert!(grid_points(&[0.0], &[1.0], 1, None, 0).is_err());
        assert!(grid_points(&[0.0], &[1.0], 3, Some(0), 0).is_err());
    }

    #[test]
    fn resample_radius_zero_copies_inputs() {
        let case = cases::two_machine(0.3, 0.3, (5.0, 5.0), (10.0, 10.0), 0.25);
        let seeds = vec![vec![0.3, 1.0, 1.0]];
        let out = resample_near_feasible(&case, &seeds, 0.0, 5, 7).unwrap();
        assert_eq!(out.len(), 5);
        for p in out {
            assert_eq!(p, seeds[0]);
        }
    }

    #[test]
    fn resample_clips_to_bounds() {
        let case = cases::two_machine(0.3, 0.3, (5.0, 5.0), (10.0, 10.0), 0.25);
        let cs = case.control_space();
        // seed sits exactly on the upper corner
        let corner: Vec<f64> = cs.upper();
        let out = resample_near_feasible(&case, &[corner], 1.0, 50, 3).unwrap();
        for p in &out {
            for (v, d) in p.iter().zip(&cs.dims) {
                assert!(*v >= d.lo - 1e-12 && *v <= d.hi + 1e-12);
            }
        }
    }

    #[test]
    fn resample_needs_feasible_seeds() {
        let case = cases::two_machine(0.3, 0.3, (5.0, 5.0), (10.0, 10.0), 0.25);
        assert!(resample_near_feasible(&case, &[], 0.1, 5, 0).is_err());
    }

    fn synthetic_rows(n_feas: usize, n_infeas: usize) -> Vec<(Vec<f64>, bool, Provenance)> {
        let mut rows = Vec::new();
        for i in 0..(n_feas + n_infeas) {
            rows.push((
                vec![i as f64, 1.0, 1.0],
                i < n_feas,
                Provenance::Grid,
            ));
        }
        rows
    }

    #[test]
    fn balanced_input_fully_retained() {
        let case = cases::two_machine(0.3, 0.3, (5.0, 5.0), (10.0, 10.0), 0.25);
        let ds = balance_and_split(&case, synthetic_rows(5, 5), 0.5, 9).unwrap();
        assert_eq!(ds.samples.len(), 10);
    }

    #[test]
    fn majority_downsampled_to_target() {
        let case = cases::two_machine(0.3, 0.3, (5.0, 5.0), (10.0, 10.0), 0.25);
        let ds = balance_and_split(&case, synthetic_rows(10, 90), 0.5, 9).unwrap();
        assert_eq!(ds.samples.len(), 20);
        assert_eq!(ds.feasible_count(), 10);
    }

    #[test]
    fn single_class_is_an_error() {
        let case = cases::two_machine(0.3, 0.3, (5.0, 5.0), (10.0, 10.0), 0.25);
        assert!(balance_and_split(&case, synthetic_rows(10, 0), 0.5, 9).is_err());
    }

    #[test]
    fn stratified_split_balances_within_one_percent() {
        let case = cases::two_machine(0.3, 0.3, (5.0, 5.0), (10.0, 10.0), 0.25);
        let ds = balance_and_split(&case, synthetic_rows(500, 500), 0.5, 11).unwrap();
        let train = ds.class_balance_of(Split::Train);
        let test = ds.class_balance_of(Split::Test);
        assert!((train - test).abs() <= 0.01, "train {train} vs test {test}");
    }

    /// Two-machine toy whose control box straddles the security boundary.
    fn sampling_toy() -> crate::grid::GridCase {
        let mut case = cases::two_machine(0.35, 0.2, (5.0, 5.0), (14.0, 14.0), 0.25);
        case.generators[1].p_min = 0.0;
        case.generators[1].p_max = 2.5;
        for b in &mut case.buses {
            b.v_min = 0.95;
            b.v_max = 1.05;
        }
        case
    }

    #[test]
    fn csv_roundtrip_and_seed_determinism() {
        let case = sampling_toy();
        let cfg = GenConfig {
            points_per_dim: 4,
            grid_budget: 40,
            resample_count: 40,
            resample_radius_frac: 0.05,
            target_balance: 0.5,
            seed: 5,
        };
        let a = generate(&case, &cfg).unwrap();
        let b = generate(&case, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let pa = dir.path().join("a.csv");
        let pb = dir.path().join("b.csv");
        write_csv(&a, &pa, &[]).unwrap();
        write_csv(&b, &pb, &[]).unwrap();
        let bytes_a = std::fs::read(&pa).unwrap();
        let bytes_b = std::fs::read(&pb).unwrap();
        assert_eq!(bytes_a, bytes_b, "same seed must give identical files");

        let back = read_csv(&pa).unwrap();
        assert_eq!(back.case_fingerprint, a.case_fingerprint);
        assert_eq!(back.samples.len(), a.samples.len());
        for (x, y) in back.samples.iter().zip(&a.samples) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.controls, y.controls);
            assert_eq!(x.label, y.label);
            assert_eq!(x.split, y.split);
        }
    }

    #[test]
    fn labels_reverify_against_oracle() {
        let case = sampling_toy();
        let cfg = GenConfig {
            points_per_dim: 3,
            grid_budget: 30,
            resample_count: 20,
            resample_radius_frac: 0.05,
            target_balance: 0.5,
            seed: 6,
        };
        let ds = generate(&case, &cfg).unwrap();
        let oracle = SecurityOracle::new(&case).unwrap();
        for s in ds.samples.iter().step_by(7) {
            let u = OperatingPoint::from_controls(&case, &s.controls).unwrap();
            assert_eq!(
                oracle.is_feasible(&u),
                s.label,
                "stored label diverges from the oracle at id {}",
                s.id
            );
        }
    }
}
