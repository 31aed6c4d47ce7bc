//! PCA over the per-state mean feature vectors.
//!
//! Each device state (the four devices plus the aggregate) contributes one
//! mean vector `U_i` of its on-window features. The covariance of these five
//! vectors, with the `1/n` factor, is eigendecomposed and the two leading
//! eigenvectors span the plane every window is projected onto.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnv::Fnv64;
use crate::rqa::{RqaFeatureSeries, RqaFeatures, RqaParams};

/// Number of RQA variables.
pub const FEATURE_DIM: usize = 5;
/// Number of device states the model is fitted on.
pub const STATES: usize = 5;
/// Retained principal components.
pub const REDUCED_DIM: usize = 2;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub c1: f64,
    pub c2: f64,
}

impl Point2D {
    pub fn new(c1: f64, c2: f64) -> Self {
        Point2D { c1, c2 }
    }

    pub fn is_finite(&self) -> bool {
        self.c1.is_finite() && self.c2.is_finite()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitOptions {
    /// Divide each centered variable by its spread across the state means.
    /// Off by default: raw RQA variables are used despite their mixed units.
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    psi: [f64; FEATURE_DIM],
    basis: [[f64; REDUCED_DIM]; FEATURE_DIM],
    eigenvalues: [f64; FEATURE_DIM],
    labels: Vec<String>,
    rqa_params: RqaParams,
    scale: Option<[f64; FEATURE_DIM]>,
}

impl PcaModel {
    /// Reassembles a model, e.g. after deserialization, re-checking its invariants.
    pub fn from_parts(
        psi: [f64; FEATURE_DIM],
        basis: [[f64; REDUCED_DIM]; FEATURE_DIM],
        eigenvalues: [f64; FEATURE_DIM],
        labels: Vec<String>,
        rqa_params: RqaParams,
        scale: Option<[f64; FEATURE_DIM]>,
    ) -> Result<Self> {
        rqa_params.validate()?;
        let finite = psi.iter().chain(basis.iter().flatten()).chain(&eigenvalues).all(|v| v.is_finite());
        if !finite || scale.is_some_and(|s| s.iter().any(|v| !(v.is_finite() && *v > 0.0))) {
            return Err(Error::NonFinite);
        }
        if labels.len() != STATES {
            return Err(Error::StateCount { expected: STATES, got: labels.len() });
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) || eigenvalues.iter().any(|&l| l < 0.0) {
            return Err(Error::InvalidParameter { name: "eigenvalues", reason: "must be non-negative and descending" });
        }
        for a in 0..REDUCED_DIM {
            for b in 0..REDUCED_DIM {
                let dot: f64 = basis.iter().map(|row| row[a] * row[b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                if (dot - want).abs() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidParameter { name: "basis", reason: "columns must be orthonormal" });
                }
            }
        }
        Ok(PcaModel { psi, basis, eigenvalues, labels, rqa_params, scale })
    }

    pub fn psi(&self) -> &[f64; FEATURE_DIM] {
        &self.psi
    }

    /// Rows are RQA variables, columns the retained eigenvectors.
    pub fn basis(&self) -> &[[f64; REDUCED_DIM]; FEATURE_DIM] {
        &self.basis
    }

    pub fn component(&self, k: usize) -> [f64; FEATURE_DIM] {
        core::array::from_fn(|j| self.basis[j][k])
    }

    pub fn eigenvalues(&self) -> &[f64; FEATURE_DIM] {
        &self.eigenvalues
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rqa_params(&self) -> &RqaParams {
        &self.rqa_params
    }

    pub fn scale(&self) -> Option<&[f64; FEATURE_DIM]> {
        self.scale.as_ref()
    }

    /// `(x - psi)^T E`, with the optional per-variable scaling applied first.
    pub fn project(&self, features: &RqaFeatures) -> Result<Point2D> {
        if !features.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(self.project_array(&features.to_array()))
    }

    fn project_array(&self, x: &[f64; FEATURE_DIM]) -> Point2D {
        let mut out = [0.0; REDUCED_DIM];
        for j in 0..FEATURE_DIM {
            let mut centered = x[j] - self.psi[j];
            if let Some(s) = &self.scale {
                centered /= s[j];
            }
            for (k, o) in out.iter_mut().enumerate() {
                *o += centered * self.basis[j][k];
            }
        }
        Point2D::new(out[0], out[1])
    }

    /// Content hash identifying this model in maps and policies.
    pub fn id(&self) -> u64 {
        let mut h = Fnv64::new();
        h.bytes(b"pca-v1");
        for v in self.psi.iter().chain(self.basis.iter().flatten()).chain(&self.eigenvalues) {
            h.f64(*v);
        }
        for l in &self.labels {
            h.bytes(l.as_bytes()).bytes(&[0]);
        }
        let p = &self.rqa_params;
        h.f64(p.epsilon).u64(p.window as u64).u64(p.lmin as u64).u64(p.step as u64).f64(p.on_threshold);
        if let Some(s) = &self.scale {
            for v in s {
                h.f64(*v);
            }
        }
        h.finish()
    }
}

/// Mean of the on-window features of every state.
pub fn state_means(feature_sets: &BTreeMap<String, Vec<RqaFeatureSeries>>) -> Result<Vec<(String, [f64; FEATURE_DIM])>> {
    let mut means = Vec::with_capacity(feature_sets.len());
    for (label, series) in feature_sets {
        let mut sum = [0.0; FEATURE_DIM];
        let mut n = 0usize;
        for row in series.iter().flat_map(|s| s.on_rows()) {
            for (acc, v) in sum.iter_mut().zip(row.features.to_array()) {
                *acc += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::NoOnWindows(label.clone()));
        }
        means.push((label.clone(), sum.map(|s| s / n as f64)));
    }
    Ok(means)
}

/// `C = (1/n) sum_i phi_i phi_i^T` with `phi_i = U_i - psi`.
pub fn covariance(means: &[[f64; FEATURE_DIM]]) -> ([f64; FEATURE_DIM], [[f64; FEATURE_DIM]; FEATURE_DIM]) {
    let n = means.len() as f64;
    let mut psi = [0.0; FEATURE_DIM];
    for u in means {
        for (p, v) in psi.iter_mut().zip(u) {
            *p += v;
        }
    }
    psi = psi.map(|p| p / n);
    let mut c = [[0.0; FEATURE_DIM]; FEATURE_DIM];
    for u in means {
        let phi: [f64; FEATURE_DIM] = core::array::from_fn(|j| u[j] - psi[j]);
        for a in 0..FEATURE_DIM {
            for b in 0..FEATURE_DIM {
                c[a][b] += phi[a] * phi[b];
            }
        }
    }
    for row in c.iter_mut() {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    (psi, c)
}

/// Fits the model on per-state feature series (one or more days each).
pub fn fit(
    feature_sets: &BTreeMap<String, Vec<RqaFeatureSeries>>,
    rqa_params: RqaParams,
    options: FitOptions,
) -> Result<PcaModel> {
    if feature_sets.len() != STATES {
        return Err(Error::StateCount { expected: STATES, got: feature_sets.len() });
    }
    let means = state_means(feature_sets)?;
    fit_means(&means, rqa_params, options)
}

/// Fits the model directly from the state mean vectors.
pub fn fit_means(
    means: &[(String, [f64; FEATURE_DIM])],
    rqa_params: RqaParams,
    options: FitOptions,
) -> Result<PcaModel> {
    if means.len() != STATES {
        return Err(Error::StateCount { expected: STATES, got: means.len() });
    }
    if means.iter().any(|(_, u)| u.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite);
    }
    let vectors: Vec<[f64; FEATURE_DIM]> = means.iter().map(|(_, u)| *u).collect();
    let (psi, mut c) = covariance(&vectors);

    let magnitude = 1.0 + psi.iter().map(|v| v * v).sum::<f64>();
    let trace: f64 = (0..FEATURE_DIM).map(|j| c[j][j]).sum();
    if trace <= f64::EPSILON * f64::EPSILON * magnitude {
        return Err(Error::DegenerateModel);
    }

    let scale = if options.standardize {
        let s: [f64; FEATURE_DIM] = core::array::from_fn(|j| {
            let sd = libm::sqrt(c[j][j]);
            if sd > 0.0 { sd } else { 1.0 }
        });
        for a in 0..FEATURE_DIM {
            for b in 0..FEATURE_DIM {
                c[a][b] /= s[a] * s[b];
            }
        }
        Some(s)
    } else {
        None
    };

    let (values, vectors) = symmetric_eigen(&c);
    let mut order: [usize; FEATURE_DIM] = core::array::from_fn(|i| i);
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let eigenvalues = order.map(|i| values[i].max(0.0));
    let mut basis = [[0.0; REDUCED_DIM]; FEATURE_DIM];
    for (k, &col) in order.iter().take(REDUCED_DIM).enumerate() {
        let mut v: [f64; FEATURE_DIM] = core::array::from_fn(|j| vectors[j][col]);
        fix_sign(&mut v);
        for j in 0..FEATURE_DIM {
            basis[j][k] = v[j];
        }
    }
    let labels = means.iter().map(|(l, _)| l.clone()).collect();
    PcaModel::from_parts(psi, basis, eigenvalues, labels, rqa_params, scale)
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns unsorted eigenvalues and the eigenvectors as the columns of the
/// second matrix.
pub fn symmetric_eigen<const N: usize>(m: &[[f64; N]; N]) -> ([f64; N], [[f64; N]; N]) {
    let mut a = *m;
    let mut v = [[0.0; N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let norm2: f64 = a.iter().flatten().map(|x| x * x).sum();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..N {
            for q in (p + 1)..N {
                off += a[p][q] * a[p][q];
            }
        }
        if off <= 1e-30 * norm2 || off == 0.0 {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let t = 1.0 / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                    if theta < 0.0 { -t } else { t }
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for row in a.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..N {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
                for row in v.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
            }
        }
    }
    (core::array::from_fn(|i| a[i][i]), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;
    use nalgebra::{Matrix5, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_means(rng: &mut ChaCha8Rng) -> Vec<(String, [f64; 5])> {
        (0..5)
            .map(|i| {
                let u = [
                    rng.random_range(0.0..100.0),
                    rng.random_range(0.0..100.0),
                    rng.random_range(0.0..5.0),
                    rng.random_range(0.0..100.0),
                    rng.random_range(2.0..40.0),
                ];
                (format!("s{i}"), u)
            })
            .collect()
    }

    fn frob(c: &[[f64; 5]; 5]) -> f64 {
        libm::sqrt(c.iter().flatten().map(|x| x * x).sum())
    }

    #[test]
    fn identical_states_are_degenerate() {
        let means: Vec<_> = (0..5).map(|i| (i.to_string(), [12.5, 80.0, 1.3, 90.0, 7.0])).collect();
        assert_eq!(fit_means(&means, RqaParams::default(), FitOptions::default()), Err(Error::DegenerateModel));
    }

    #[test]
    fn needs_five_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut means = random_means(&mut rng);
        means.pop();
        assert_eq!(
            fit_means(&means, RqaParams::default(), FitOptions::default()),
            Err(Error::StateCount { expected: 5, got: 4 })
        );
    }

    #[test]
    fn state_without_on_windows() {
        let off = RqaFeatureSeries::new(
            "dryer",
            80,
            1,
            vec![crate::rqa::RqaRow { window_end: 80, features: RqaFeatures::default(), is_on: false }],
        )
        .unwrap();
        let sets = BTreeMap::from([("dryer".to_string(), vec![off])]);
        assert_eq!(state_means(&sets), Err(Error::NoOnWindows("dryer".into())));
    }

    #[test]
    fn basis_is_orthonormal_and_eigenpairs_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let means = random_means(&mut rng);
            let model = fit_means(&means, RqaParams::default(), FitOptions::default()).unwrap();
            let vectors: Vec<[f64; 5]> = means.iter().map(|(_, u)| *u).collect();
            let (_, c) = covariance(&vectors);
            for a in 0..2 {
                for b in 0..2 {
                    let dot: f64 = (0..5).map(|j| model.basis()[j][a] * model.basis()[j][b]).sum();
                    assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() <= 1e-9);
                }
                let v = model.component(a);
                let lambda = model.eigenvalues()[a];
                let residual: f64 = (0..5)
                    .map(|i| {
                        let cv: f64 = (0..5).map(|j| c[i][j] * v[j]).sum();
                        (cv - lambda * v[i]).powi(2)
                    })
                    .sum();
                assert!(libm::sqrt(residual) <= 1e-8 * frob(&c));
            }
            let trace: f64 = (0..5).map(|j| c[j][j]).sum();
            let total: f64 = model.eigenvalues().iter().sum();
            assert!((trace - total).abs() <= 1e-8 * trace);
            assert!(model.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
            // Five centered vectors span at most four dimensions.
            assert!(model.eigenvalues()[4] <= 1e-9 * model.eigenvalues()[0]);
        }
    }

    #[test]
    fn agrees_with_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let means = random_means(&mut rng);
            let model = fit_means(&means, RqaParams::default(), FitOptions::default()).unwrap();
            let vectors: Vec<[f64; 5]> = means.iter().map(|(_, u)| *u).collect();
            let (psi, c) = covariance(&vectors);
            let eig = SymmetricEigen::new(Matrix5::from_fn(|i, j| c[i][j]));
            let mut idx: Vec<usize> = (0..5).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            for (k, &i) in idx.iter().take(2).enumerate() {
                assert!((eig.eigenvalues[i] - model.eigenvalues()[k]).abs() <= 1e-9 * eig.eigenvalues[idx[0]]);
            }
            // Projections agree up to a per-axis sign, so pairwise distances agree.
            let ours: Vec<Point2D> = vectors.iter().map(|u| model.project(&RqaFeatures::from_array(*u)).unwrap()).collect();
            let theirs: Vec<[f64; 2]> = vectors
                .iter()
                .map(|u| {
                    core::array::from_fn(|k| (0..5).map(|j| (u[j] - psi[j]) * eig.eigenvectors[(j, idx[k])]).sum())
                })
                .collect();
            for a in 0..5 {
                for b in 0..5 {
                    let d1 = libm::hypot(ours[a].c1 - ours[b].c1, ours[a].c2 - ours[b].c2);
                    let d2 = libm::hypot(theirs[a][0] - theirs[b][0], theirs[a][1] - theirs[b][1]);
                    assert!((d1 - d2).abs() <= 1e-7 * (1.0 + d2));
                }
            }
        }
    }

    #[test]
    fn projection_is_centered_and_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = fit_means(&random_means(&mut rng), RqaParams::default(), FitOptions::default()).unwrap();
        let origin = model.project(&RqaFeatures::from_array(*model.psi())).unwrap();
        assert!(origin.c1.abs() <= 1e-12 && origin.c2.abs() <= 1e-12);
        let v1 = model.component(0);
        let p = model.project(&RqaFeatures::from_array(core::array::from_fn(|j| model.psi()[j] + v1[j]))).unwrap();
        assert!((p.c1 - 1.0).abs() <= 1e-9 && p.c2.abs() <= 1e-9);
        let bad = RqaFeatures { rec: f64::NAN, ..RqaFeatures::default() };
        assert_eq!(model.project(&bad), Err(Error::NonFinite));
    }

    #[test]
    fn sign_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let model = fit_means(&random_means(&mut rng), RqaParams::default(), FitOptions::default()).unwrap();
            for k in 0..2 {
                let v = model.component(k);
                let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
                assert!(big > 0.0);
            }
        }
    }

    #[test]
    fn standardized_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let means = random_means(&mut rng);
        let model = fit_means(&means, RqaParams::default(), FitOptions { standardize: true }).unwrap();
        let scale = model.scale().unwrap();
        assert!(scale.iter().all(|&s| s > 0.0));
        let origin = model.project(&RqaFeatures::from_array(*model.psi())).unwrap();
        assert!(origin.c1.abs() < 1e-12 && origin.c2.abs() < 1e-12);
        assert_ne!(model.id(), fit_means(&means, RqaParams::default(), FitOptions::default()).unwrap().id());
    }

    #[test]
    fn from_parts_rejects_bad_basis() {
        let basis = [[1.0, 1.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let labels = vec!["a".into(), "b".into(), "c".into(), "d".into(), "e".into()];
        let r = PcaModel::from_parts([0.0; 5], basis, [2.0, 1.0, 0.0, 0.0, 0.0], labels, RqaParams::default(), None);
        assert!(r.is_err());
    }

    #[test]
    fn jacobi_on_diagonal_matrix() {
        let (vals, vecs) = symmetric_eigen(&[[3.0, 0.0], [0.0, -1.0]]);
        assert_eq!(vals, [3.0, -1.0]);
        assert_eq!(vecs, [[1.0, 0.0], [0.0, 1.0]]);
    }

    proptest::proptest! {
        #[test]
        fn projection_is_affine(
            a in proptest::array::uniform5(0.0f64..100.0),
            b in proptest::array::uniform5(0.0f64..100.0),
            shift in proptest::array::uniform5(-20.0f64..20.0),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let model = fit_means(&random_means(&mut rng), RqaParams::default(), FitOptions::default()).unwrap();
            let p = |x: [f64; 5]| model.project(&RqaFeatures::from_array(x)).unwrap();
            let d1 = (p(a).c1 - p(b).c1, p(a).c2 - p(b).c2);
            let a2: [f64; 5] = core::array::from_fn(|j| a[j] + shift[j]);
            let b2: [f64; 5] = core::array::from_fn(|j| b[j] + shift[j]);
            let d2 = (p(a2).c1 - p(b2).c1, p(a2).c2 - p(b2).c2);
            proptest::prop_assert!((d1.0 - d2.0).abs() < 1e-9 && (d1.1 - d2.1).abs() < 1e-9);
        }
    }
}
