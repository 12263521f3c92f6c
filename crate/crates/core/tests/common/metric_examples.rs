use std::sync::Arc;

use linex_core::blackbox::{builtin_linear, BlackBox};
use linex_core::data::Task;
use linex_core::explain::{explain_example, ExplainConfig};
use linex_core::metrics::{cac, ci, exemplar_neighbors, gi, infd, infd_per_example, upsilon};
use linex_core::stats::paired_t_test;
use linex_core::{Attribution, Error, Example, ExplainedSet, ModelAccess, RngSeed};
use ndarray::{array, Array1, Array2, ArrayView1};
use rand::Rng;

use super::{close, ensure, Check};

fn attr(c: Array1<f64>, b: f64) -> Attribution {
    Attribution::new(c, b)
}

fn set(points: Array2<f64>, atts: Vec<Attribution>, bb: Array1<f64>, task: Task) -> ExplainedSet {
    ExplainedSet::new(points, atts, bb, 1, task).unwrap()
}

fn ups(rows: &[Array1<f64>]) -> f64 {
    let views: Vec<ArrayView1<f64>> = rows.iter().map(|r| r.view()).collect();
    upsilon(&views).unwrap()
}

/// Explanations of a noiseless linear model under slack constraints, at
/// eight points.
pub fn linear_fixture() -> ExplainedSet {
    let w = array![0.7, -1.2, 0.4];
    let bb = builtin_linear(w, 0.3).unwrap();
    let model = ModelAccess::Fixed(Arc::new(bb.clone()));
    let mut rng = RngSeed(11).rng();
    let points = Array2::from_shape_fn((8, 3), |_| rng.random_range(-1.0..1.0));
    let cfg = ExplainConfig { n: 40, tau: 0.75, gamma: Some(10.0), t: Some(100.0), ..ExplainConfig::default() };
    let atts = points
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let anchor = Example::new(p.to_owned()).unwrap();
            explain_example(&anchor, &model, None, &cfg, RngSeed(3).derive(i as u64)).unwrap().attribution
        })
        .collect();
    let values = bb.predict_batch(points.view()).unwrap();
    ExplainedSet::new(points, atts, values, 2, Task::Regression).unwrap()
}

pub fn all() -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |name: &str, r: Result<(), String>| out.push(Check::new(name, r));

    // INFD
    let exact = set(array![[0.0], [1.0]], vec![attr(array![1.0], 1.0), attr(array![1.0], 1.0)], array![1.0, 2.0], Task::Regression);
    push("infd: faithful explanation gives 0", ensure(infd(&exact) == 0.0, || format!("{}", infd(&exact))));
    let one = set(array![[0.0], [1.0]], vec![attr(array![0.0], 0.8), attr(array![0.0], 1.0)], array![1.0, 1.0], Task::Regression);
    push("infd: single residual 0.2", close(infd_per_example(&one)[0], 0.2, 1e-12));
    let three = set(
        array![[0.0], [1.0], [2.0]],
        vec![attr(array![0.0], 0.1), attr(array![0.0], 0.3), attr(array![0.0], 0.2)],
        Array1::zeros(3),
        Task::Regression,
    );
    push("infd: mean of 0.1, 0.3, 0.2", close(infd(&three), 0.2, 1e-12));

    // GI
    let same = set(array![[0.0], [1.0], [3.0]], vec![attr(array![2.0], 1.0); 3], array![1.0, 3.0, 7.0], Task::Regression);
    push("gi: identical faithful explanations give GI = INFD = 0", ensure(gi(&same) == 0.0 && infd(&same) == 0.0, || format!("gi {} infd {}", gi(&same), infd(&same))));
    let mutual = set(array![[0.0], [1.0]], vec![attr(array![0.0], 1.2), attr(array![0.0], 0.6)], array![1.0, 1.0], Task::Regression);
    push("gi: mutual neighbors with residuals 0.4 and 0.2", close(gi(&mutual), 0.3, 1e-12));
    let linear = linear_fixture();
    push("gi: global linear model gives ≈ 0", ensure(gi(&linear) < 1e-4 && infd(&linear) < 1e-4, || format!("gi {} infd {}", gi(&linear), infd(&linear))));

    // CI
    push("ci: identical attributions give 0", ensure(ci(&same) == 0.0, || format!("{}", ci(&same))));
    let units = set(array![[0.0, 0.0], [1.0, 1.0]], vec![attr(array![1.0, 0.0], 0.0), attr(array![0.0, 1.0], 0.0)], Array1::zeros(2), Task::Regression);
    push("ci: unit vectors at l1 distance 2", close(ci(&units), 2.0, 0.0));
    push("ci: global linear model gives ≈ 0", ensure(ci(&linear) < 1e-4, || format!("{}", ci(&linear))));

    // CAC
    let pts = array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [-1.0, 0.0, 2.0], [-1.0, 0.0, 2.0]];
    let prop = vec![attr(array![2.0, 4.0, 6.0], 0.0), attr(array![2.0, 4.0, 6.0], 0.0), attr(array![1.0, 0.0, -2.0], 0.0), attr(array![1.0, 0.0, -2.0], 0.0)];
    let r = cac(&set(pts.clone(), prop, Array1::zeros(4), Task::Classification), &[0, 0, 1, 1]).unwrap();
    push("cac: proportional mean attribution gives 1", close(r.per_class[0].1, 1.0, 1e-12));
    push("cac: negated mean attribution gives -1", close(r.per_class[1].1, -1.0, 1e-12));
    // Class 0 correlation 0.8 and class 1 correlation 0.4 by construction.
    let (a0, a1) = (correlated_with(&array![1.0, 2.0, 3.0, 5.0], 0.8), correlated_with(&array![-1.0, 0.0, 2.0, 4.0], 0.4));
    let pts4 = array![[1.0, 2.0, 3.0, 5.0], [1.0, 2.0, 3.0, 5.0], [-1.0, 0.0, 2.0, 4.0], [-1.0, 0.0, 2.0, 4.0]];
    let atts = vec![attr(a0.clone(), 0.0), attr(a0, 0.0), attr(a1.clone(), 0.0), attr(a1, 0.0)];
    let r = cac(&set(pts4, atts, Array1::zeros(4), Task::Classification), &[0, 0, 1, 1]).unwrap();
    push("cac: mean of correlations 0.8 and 0.4", close(r.value.unwrap(), 0.6, 1e-12));

    // Upsilon
    push("upsilon: shared signs give 1", close(ups(&[array![1.0, -2.0], array![3.0, -0.1], array![0.5, -9.0]]), 1.0, 0.0));
    push("upsilon: half split gives 0", close(ups(&[array![1.0, -2.0], array![-3.0, 0.1]]), 0.0, 0.0));
    push("upsilon: signs (+,+,-) and (+,+,+) give 2/3", close(ups(&[array![1.0, 1.0], array![2.0, 1.0], array![-1.0, 3.0]]), 2.0 / 3.0, 1e-12));

    // Exemplar neighbors
    let nb = exemplar_neighbors(array![[0.0], [1.0], [2.0]].view(), 1).unwrap();
    push("exemplar: tie goes to the lower index", ensure(nb[1] == vec![0], || format!("{nb:?}")));
    let dup = exemplar_neighbors(array![[0.0, 1.0], [5.0, 5.0], [0.0, 1.0]].view(), 1).unwrap();
    push("exemplar: duplicate is the nearest neighbor", ensure(dup[0] == vec![2] && dup[2] == vec![0], || format!("{dup:?}")));
    push("exemplar: matches brute force on 20 points, k = 5", brute_force_neighbors());

    // Paired t-test
    push("t-test: identical samples are degenerate", ensure(matches!(paired_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Err(Error::DegenerateVariance)), || "no error".into()));
    let t = paired_t_test(&[1.0, 1.0, 1.0, 1.0, -1.0], &[0.0; 5]).unwrap();
    push("t-test: differences (1,1,1,1,-1) give t = 1.5", close(t.t, 1.5, 1e-12));
    push("t-test: differences (1,1,1,1,-1) give p ≈ 0.208", close(t.p_value, 0.2080, 5e-4));
    let mut rng = RngSeed(5).rng();
    let b: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
    let a: Vec<f64> = b.iter().map(|v| v + 10.0 + rng.random_range(-1e-3..1e-3)).collect();
    let shifted = paired_t_test(&a, &b).unwrap();
    push("t-test: large constant shift gives p < 1e-4", ensure(shifted.p_value < 1e-4, || format!("{}", shifted.p_value)));
    out
}

/// A vector whose Pearson correlation with `x` is exactly `r`.
fn correlated_with(x: &Array1<f64>, r: f64) -> Array1<f64> {
    let n = x.len() as f64;
    let xc = x - x.sum() / n;
    let xu = &xc / xc.dot(&xc).sqrt();
    // Any centered direction orthogonal to x.
    let e = Array1::from_shape_fn(x.len(), |i| if i == 0 { 1.0 } else { 0.0 });
    let ec = &e - e.sum() / n;
    let o = &ec - &xu * xu.dot(&ec);
    let ou = &o / o.dot(&o).sqrt();
    &xu * r + &ou * (1.0 - r * r).sqrt()
}

fn brute_force_neighbors() -> Result<(), String> {
    let mut rng = RngSeed(20).rng();
    let pts = Array2::from_shape_fn((20, 3), |_| rng.random_range(-1.0..1.0));
    let got = exemplar_neighbors(pts.view(), 5).map_err(|e| e.to_string())?;
    for i in 0..20 {
        let mut order: Vec<(f64, usize)> = (0..20)
            .filter(|&j| j != i)
            .map(|j| ((&pts.row(i) - &pts.row(j)).mapv(|v| v * v).sum(), j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<usize> = order.iter().take(5).map(|p| p.1).collect();
        ensure(got[i] == want, || format!("point {i}: {:?} vs {want:?}", got[i]))?;
    }
    Ok(())
}
