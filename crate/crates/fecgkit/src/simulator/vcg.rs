use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ecg_model::{CycleModel, GaussianKernel};
use crate::{Error, Result};

/// Number of bundled VCG kernel sets.
pub const VCG_SET_COUNT: usize = 9;
/// Seed of the perturbations that produced the bundled sets 2–9.
pub const VCG_SET_SEED: u64 = 2014;

const BUNDLED: &str = include_str!("../../data/vcg_sets.json");

#[derive(Serialize, Deserialize)]
struct AxisKernels {
    alpha: Vec<f64>,
    b: Vec<f64>,
    xi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct VcgSetFile {
    x: AxisKernels,
    y: AxisKernels,
    z: AxisKernels,
}

/// Unperturbed seven-kernel (P1, P2, Q, R, S, T1, T2) parameters for x, y, z.
fn base_parameters() -> [[[f64; 7]; 3]; 3] {
    [
        [
            [0.08, 0.10, -0.12, 1.00, -0.25, 0.20, 0.25],
            [0.10, 0.10, 0.07, 0.08, 0.07, 0.40, 0.30],
            [-1.30, -1.10, -0.20, 0.00, 0.20, 1.70, 2.30],
        ],
        [
            [0.05, 0.06, -0.05, 0.45, -0.45, 0.10, 0.15],
            [0.10, 0.10, 0.07, 0.08, 0.08, 0.40, 0.30],
            [-1.30, -1.10, -0.20, 0.02, 0.20, 1.70, 2.30],
        ],
        [
            [-0.04, -0.04, 0.10, -0.35, 0.20, -0.10, -0.12],
            [0.10, 0.10, 0.07, 0.09, 0.07, 0.40, 0.30],
            [-1.30, -1.10, -0.20, 0.00, 0.18, 1.70, 2.30],
        ],
    ]
}

fn build(p: &[[f64; 7]; 3]) -> Result<CycleModel> {
    let kernels = (0..7).map(|i| GaussianKernel::new(p[0][i], p[1][i], p[2][i])).collect();
    CycleModel::from_unsorted(kernels, None)
}

/// Regenerates the nine sets: set 1 is the base, sets 2–9 multiply amplitudes
/// by U(0.8, 1.2), widths by U(0.9, 1.1) and shift centres by U(−0.05, 0.05) rad.
pub fn generate_vcg_sets(seed: u64) -> Vec<[[[f64; 7]; 3]; 3]> {
    let base = base_parameters();
    let mut rng = crate::rng::rng_from_seed(seed);
    let mut sets = vec![base];
    for _ in 1..VCG_SET_COUNT {
        let mut s = base;
        for axis in s.iter_mut() {
            for i in 0..7 {
                axis[0][i] *= rng.random_range(0.8..1.2);
                axis[1][i] *= rng.random_range(0.9..1.1);
                axis[2][i] += rng.random_range(-0.05..0.05);
            }
        }
        sets.push(s);
    }
    sets
}

/// JSON text of the sets, rounded to six decimals, as stored in the data file.
pub fn vcg_sets_json(sets: &[[[[f64; 7]; 3]; 3]]) -> String {
    let round = |v: &[f64; 7]| v.iter().map(|x| (x * 1e6).round() / 1e6).collect::<Vec<_>>();
    let files: Vec<VcgSetFile> = sets
        .iter()
        .map(|s| {
            let ax = |a: &[[f64; 7]; 3]| AxisKernels { alpha: round(&a[0]), b: round(&a[1]), xi: round(&a[2]) };
            VcgSetFile { x: ax(&s[0]), y: ax(&s[1]), z: ax(&s[2]) }
        })
        .collect();
    serde_json::to_string_pretty(&files).expect("serialisable") + "\n"
}

/// Bundled VCG kernel set `index` (1–9) as x, y, z cycle models.
pub fn vcg_set(index: usize) -> Result<[CycleModel; 3]> {
    if !(1..=VCG_SET_COUNT).contains(&index) {
        return Err(Error::invalid(format!("VCG selector must be in 1..={VCG_SET_COUNT}, got {index}")));
    }
    let files: Vec<VcgSetFile> =
        serde_json::from_str(BUNDLED).map_err(|e| Error::Parse(format!("bundled VCG data: {e}")))?;
    let f = &files[index - 1];
    let conv = |a: &AxisKernels| -> Result<CycleModel> {
        if a.alpha.len() != 7 || a.b.len() != 7 || a.xi.len() != 7 {
            return Err(Error::Parse("VCG axis must have seven kernels".into()));
        }
        let mut p = [[0.0; 7]; 3];
        p[0].copy_from_slice(&a.alpha);
        p[1].copy_from_slice(&a.b);
        p[2].copy_from_slice(&a.xi);
        build(&p)
    };
    Ok([conv(&f.x)?, conv(&f.y)?, conv(&f.z)?])
}
