//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls library Jacobians or the library solver. Residuals are
//! recomputed from each factor's kind, keys and measurement, differentiated
//! numerically and solved densely.

#![allow(dead_code)]

use langslam::factor_graph::{
    FactorGraph, FactorKind, GaussianFactor, GaussianNoise, Value, Values, VariableId, VariableKind,
};
use langslam::se2::{Point2, Pose2};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;
use std::path::PathBuf;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn wrap(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI
}

/// Flat parameter vector: poses as `(x, y, θ)`, points as `(x, y)`, in key order.
#[derive(Clone, Debug)]
pub struct Layout {
    pub order: Vec<VariableId>,
    pub offset: BTreeMap<VariableId, usize>,
    pub dim: usize,
}

impl Layout {
    pub fn new(values: &Values) -> Self {
        let mut order: Vec<VariableId> = values.iter().map(|(k, _)| *k).collect();
        order.sort();
        let mut offset = BTreeMap::new();
        let mut dim = 0;
        for k in &order {
            offset.insert(*k, dim);
            dim += if k.kind() == VariableKind::Pose { 3 } else { 2 };
        }
        Self { order, offset, dim }
    }

    pub fn pack(&self, values: &Values) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        for k in &self.order {
            let o = self.offset[k];
            match values.get(k).unwrap() {
                Value::Pose(p) => {
                    v[o] = p.x();
                    v[o + 1] = p.y();
                    v[o + 2] = p.theta();
                }
                Value::Point(p) => {
                    v[o] = p.x;
                    v[o + 1] = p.y;
                }
            }
        }
        v
    }

    pub fn unpack(&self, v: &DVector<f64>) -> Values {
        let mut out = Values::new();
        for k in &self.order {
            let o = self.offset[k];
            if k.kind() == VariableKind::Pose {
                out.insert_pose(*k, Pose2::new(v[o], v[o + 1], wrap(v[o + 2]))).unwrap();
            } else {
                out.insert_point(*k, Point2::new(v[o], v[o + 1])).unwrap();
            }
        }
        out
    }
}

fn pose_at(v: &DVector<f64>, o: usize) -> [f64; 3] {
    [v[o], v[o + 1], v[o + 2]]
}

fn point_at(v: &DVector<f64>, o: usize) -> [f64; 2] {
    [v[o], v[o + 1]]
}

fn rot_t(theta: f64, d: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * d[0] + s * d[1], -s * d[0] + c * d[1]]
}

/// Unwhitened residual written out from the measurement model.
pub fn raw_residual(f: &GaussianFactor, layout: &Layout, v: &DVector<f64>) -> Vec<f64> {
    let k = f.keys();
    let o = |i: usize| layout.offset[&k[i]];
    match f.kind() {
        FactorKind::PriorPose { measured } => {
            let p = pose_at(v, o(0));
            vec![p[0] - measured.x(), p[1] - measured.y(), wrap(p[2] - measured.theta())]
        }
        FactorKind::PriorPoint { measured } => {
            let p = point_at(v, o(0));
            vec![p[0] - measured.x, p[1] - measured.y]
        }
        FactorKind::BetweenPose { measured } => {
            let a = pose_at(v, o(0));
            let b = pose_at(v, o(1));
            let t = rot_t(a[2], [b[0] - a[0], b[1] - a[1]]);
            vec![t[0] - measured.x(), t[1] - measured.y(), wrap(b[2] - a[2] - measured.theta())]
        }
        FactorKind::PoseToPoint { measured } => {
            let a = pose_at(v, o(0));
            let l = point_at(v, o(1));
            let t = rot_t(a[2], [l[0] - a[0], l[1] - a[1]]);
            vec![t[0] - measured.x, t[1] - measured.y]
        }
        FactorKind::PointEquality => {
            let a = point_at(v, o(0));
            let b = point_at(v, o(1));
            vec![a[0] - b[0], a[1] - b[1]]
        }
    }
}

fn whitened(f: &GaussianFactor, layout: &Layout, v: &DVector<f64>) -> DVector<f64> {
    f.noise().sqrt_information() * DVector::from_vec(raw_residual(f, layout, v))
}

/// Stacked whitened residual and its central-difference Jacobian in the flat
/// parametrisation.
pub fn stacked(graph: &FactorGraph, layout: &Layout, v: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let factors: Vec<&GaussianFactor> = graph.factors().map(|(_, f)| f).collect();
    let rows: usize = factors.iter().map(|f| f.residual_dim()).sum();
    let mut r = DVector::zeros(rows);
    let mut j = DMatrix::zeros(rows, layout.dim);
    let h = 1e-6;
    let mut row = 0;
    for f in factors {
        let m = f.residual_dim();
        r.rows_mut(row, m).copy_from(&whitened(f, layout, v));
        for key in f.keys() {
            let o = layout.offset[key];
            let d = if key.kind() == VariableKind::Pose { 3 } else { 2 };
            for c in 0..d {
                let mut plus = v.clone();
                let mut minus = v.clone();
                plus[o + c] += h;
                minus[o + c] -= h;
                let col = (whitened(f, layout, &plus) - whitened(f, layout, &minus)) / (2.0 * h);
                j.view_mut((row, o + c), (m, 1)).copy_from(&col);
            }
        }
        row += m;
    }
    (r, j)
}

pub fn cost(graph: &FactorGraph, layout: &Layout, v: &DVector<f64>) -> f64 {
    graph.factors().map(|(_, f)| whitened(f, layout, v).norm_squared()).sum()
}

/// Undamped batch Gauss-Newton with a dense normal-equation solve.
pub fn gauss_newton(graph: &FactorGraph, init: &Values) -> Values {
    let layout = Layout::new(init);
    let mut v = layout.pack(init);
    for _ in 0..200 {
        let (r, j) = stacked(graph, &layout, &v);
        let h = j.transpose() * &j;
        let g = j.transpose() * &r;
        let step = h.cholesky().expect("well-posed fixture").solve(&(-g));
        v += &step;
        if step.amax() < 1e-13 {
            break;
        }
    }
    layout.unpack(&v)
}

/// Dense marginal covariances at `values`, in body-frame pose coordinates
/// `(dx, dy, dθ)` applied as `x' = x + R(θ)·(dx, dy)`, `θ' = θ + dθ`.
pub fn dense_marginals(graph: &FactorGraph, values: &Values) -> BTreeMap<VariableId, DMatrix<f64>> {
    let layout = Layout::new(values);
    let v = layout.pack(values);
    let (_, j_flat) = stacked(graph, &layout, &v);
    // chain rule from body-frame increments to flat parameters
    let mut t = DMatrix::identity(layout.dim, layout.dim);
    for k in &layout.order {
        if k.kind() == VariableKind::Pose {
            let o = layout.offset[k];
            let (s, c) = v[o + 2].sin_cos();
            t[(o, o)] = c;
            t[(o, o + 1)] = -s;
            t[(o + 1, o)] = s;
            t[(o + 1, o + 1)] = c;
        }
    }
    let j = j_flat * t;
    let cov = (j.transpose() * &j).try_inverse().expect("invertible information");
    layout
        .order
        .iter()
        .map(|k| {
            let o = layout.offset[k];
            let d = if k.kind() == VariableKind::Pose { 3 } else { 2 };
            (*k, cov.view((o, o), (d, d)).into_owned())
        })
        .collect()
}

/// Per-variable discrepancy: max over position components and wrapped angle.
pub fn value_gap(a: &Value, b: &Value) -> f64 {
    match (a, b) {
        (Value::Pose(p), Value::Pose(q)) => (p.x() - q.x())
            .abs()
            .max((p.y() - q.y()).abs())
            .max(wrap(p.theta() - q.theta()).abs()),
        (Value::Point(p), Value::Point(q)) => (p.x - q.x).abs().max((p.y - q.y).abs()),
        _ => f64::INFINITY,
    }
}

/// Random pose-graph fixture with odometry, loop closures and landmark
/// sightings, plus a perturbed initial guess.
pub struct Fixture {
    pub graph: FactorGraph,
    pub init: Values,
    pub truth: Values,
}

pub fn random_fixture(seed: u64, max_poses: usize, landmarks: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..=max_poses);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut truth = Values::new();
    let mut poses = vec![Pose2::identity()];
    for _ in 1..n {
        let step = Pose2::new(rng.random_range(0.3..1.0), rng.random_range(-0.1..0.1), rng.random_range(-0.6..0.6));
        poses.push(poses.last().unwrap().compose(&step));
    }
    for (i, p) in poses.iter().enumerate() {
        truth.insert_pose(VariableId::robot_pose(i as u32), *p).unwrap();
    }
    let points: Vec<Point2> = (0..landmarks)
        .map(|_| {
            let anchor = poses[rng.random_range(0..n)];
            anchor.transform_from(&Point2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
        })
        .collect();
    for (j, p) in points.iter().enumerate() {
        truth.insert_point(VariableId::landmark(j as u32), *p).unwrap();
    }

    let mut graph = FactorGraph::new();
    for (k, _) in truth.iter() {
        graph.add_variable(*k).unwrap();
    }
    let x = |i: usize| VariableId::robot_pose(i as u32);
    graph
        .add_factor(GaussianFactor::prior_pose(x(0), poses[0], GaussianNoise::from_sigmas(&[0.01, 0.01, 0.005]).unwrap()).unwrap())
        .unwrap();
    let odo = [0.05, 0.05, 0.02];
    let noisy_between = |rng: &mut ChaCha8Rng, a: &Pose2, b: &Pose2| {
        let z = a.between(b);
        Pose2::new(
            z.x() + odo[0] * unit.sample(rng),
            z.y() + odo[1] * unit.sample(rng),
            z.theta() + odo[2] * unit.sample(rng),
        )
    };
    for i in 1..n {
        let z = noisy_between(&mut rng, &poses[i - 1], &poses[i]);
        graph
            .add_factor(GaussianFactor::between_pose(x(i - 1), x(i), z, GaussianNoise::from_sigmas(&odo).unwrap()).unwrap())
            .unwrap();
    }
    for _ in 0..rng.random_range(0..3) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a + 2 <= b {
            let z = noisy_between(&mut rng, &poses[a], &poses[b]);
            graph
                .add_factor(GaussianFactor::between_pose(x(a), x(b), z, GaussianNoise::from_sigmas(&odo).unwrap()).unwrap())
                .unwrap();
        }
    }
    let sigma = 0.1;
    for (j, p) in points.iter().enumerate() {
        let mut seen = 0;
        for (i, pose) in poses.iter().enumerate() {
            if pose.translation().distance(p) < 3.5 && rng.random_bool(0.6) {
                let l = pose.transform_to(p);
                let z = Point2::new(l.x + sigma * unit.sample(&mut rng), l.y + sigma * unit.sample(&mut rng));
                graph
                    .add_factor(
                        GaussianFactor::pose_to_point(x(i), VariableId::landmark(j as u32), z, GaussianNoise::isotropic(2, sigma).unwrap())
                            .unwrap(),
                    )
                    .unwrap();
                seen += 1;
            }
        }
        if seen == 0 {
            let i = rng.random_range(0..n);
            let z = poses[i].transform_to(p);
            graph
                .add_factor(
                    GaussianFactor::pose_to_point(x(i), VariableId::landmark(j as u32), z, GaussianNoise::isotropic(2, sigma).unwrap())
                        .unwrap(),
                )
                .unwrap();
        }
    }

    let mut init = Values::new();
    for (k, v) in truth.iter() {
        match v {
            Value::Pose(p) => init
                .insert_pose(*k, Pose2::new(p.x() + 0.1 * unit.sample(&mut rng), p.y() + 0.1 * unit.sample(&mut rng), p.theta() + 0.05 * unit.sample(&mut rng)))
                .unwrap(),
            Value::Point(p) => init
                .insert_point(*k, Point2::new(p.x + 0.2 * unit.sample(&mut rng), p.y + 0.2 * unit.sample(&mut rng)))
                .unwrap(),
        }
    }
    Fixture { graph, init, truth }
}

/// Textbook full-matrix DTW with Euclidean ground cost.
pub fn dtw_oracle(a: &[Point2], b: &[Point2]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![f64::INFINITY; m + 1]; n + 1];
    d[0][0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let c = (a[i - 1].x - b[j - 1].x).hypot(a[i - 1].y - b[j - 1].y);
            d[i][j] = c + d[i - 1][j].min(d[i][j - 1]).min(d[i - 1][j - 1]);
        }
    }
    d[n][m]
}

pub fn random_path(rng: &mut impl Rng, len: usize) -> Vec<Point2> {
    (0..len)
        .map(|_| Point2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
        .collect()
}
