use hybgnn::adjacency::{individual_adjacency, normalize_adjacency, normalized, IndividualAdjacencyParams, SoftmaxAxis};
use hybgnn::extractor::{extract_features, layer_lengths, ConvSpec, ExtractorParams};
use hybgnn::gcn::{gcn_propagate, GcnStack};
use hybgnn::gpum::{apply_gpum, assignment_matrix, pool, GpumParams};
use hybgnn::gradcheck::gradient_check;
use hybgnn::model::{build_variant, predict, ModelConfig, ModelParams, ParamGroup, Variant};
use hybgnn::rng::stream;
use hybgnn::{Graph, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

type Dense = Vec<Vec<f64>>;

fn dense(t: &Tensor) -> Dense {
    let (r, _) = t.dims2();
    (0..r).map(|i| t.row(i).to_vec()).collect()
}

fn mm(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

fn max_diff(a: &Dense, t: &Tensor) -> f64 {
    a.iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, v)| (v - t.at2(i, j)).abs()))
        .fold(0.0, f64::max)
}

fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64, tag: &str) -> Tensor {
    let mut rng = stream(seed, tag);
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut stream(seed, "perm"));
    p
}

/// Row `i` of the result is row `p[i]` of `t`.
fn permute_rows(t: &Tensor, p: &[usize]) -> Tensor {
    let (_, c) = t.dims2();
    Tensor::from_fn(&[p.len(), c], |k| t.at2(p[k / c], k % c))
}

fn permute_both(t: &Tensor, p: &[usize]) -> Tensor {
    let n = p.len();
    Tensor::from_fn(&[n, n], |k| t.at2(p[k / n], p[k % n]))
}

fn run_gcn(a_hat: &Tensor, x: &Tensor, stack: &GcnStack) -> Tensor {
    let mut g = Graph::new();
    let a = g.constant(a_hat.clone());
    let x = g.constant(x.clone());
    let w = stack.bind(&mut g, false);
    let y = gcn_propagate(&mut g, a, x, &w).unwrap();
    g.value(y).clone()
}

fn random_a_hat(n: usize, seed: u64) -> Tensor {
    normalized(&uniform(&[n, n], 0.0, 1.0, seed, "adj")).unwrap()
}

fn a_i(x: &Tensor, p: &IndividualAdjacencyParams) -> Tensor {
    let mut g = Graph::new();
    let (x, w1, w2) = (g.constant(x.clone()), g.constant(p.w1.clone()), g.constant(p.w2.clone()));
    let a = individual_adjacency(&mut g, x, w1, w2, SoftmaxAxis::Column).unwrap();
    g.value(a).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gcn_matches_matrix_power_oracle(n in 1usize..=8, steps in 0usize..=4, f in 1usize..5, d in 1usize..4, seed in any::<u64>()) {
        let a_hat = random_a_hat(n, seed);
        let x = uniform(&[n, f], -1.0, 1.0, seed, "x");
        let stack = GcnStack::init(steps, f, d, &mut stream(seed, "w"));
        let got = run_gcn(&a_hat, &x, &stack);

        let a = dense(&a_hat);
        let mut power: Dense = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let mut want = vec![vec![0.0; d]; n];
        for (l, w) in stack.weights.iter().enumerate() {
            if l > 0 {
                power = mm(&power, &a);
            }
            let term = mm(&mm(&power, &dense(&x)), &dense(w));
            for (acc, t) in want.iter_mut().zip(&term) {
                for (u, v) in acc.iter_mut().zip(t) {
                    *u += v;
                }
            }
        }
        prop_assert!(max_diff(&want, &got) < 1e-10);
    }

    #[test]
    fn gcn_is_linear_and_jointly_equivariant(n in 2usize..=8, steps in 0usize..=4, alpha in -2.0f64..2.0, seed in any::<u64>()) {
        let a_hat = random_a_hat(n, seed);
        let x = uniform(&[n, 3], -1.0, 1.0, seed, "x");
        let stack = GcnStack::init(steps, 3, 2, &mut stream(seed, "w"));
        let y = run_gcn(&a_hat, &x, &stack);
        let scaled = run_gcn(&a_hat, &x.map(|v| alpha * v), &stack);
        prop_assert!(scaled.max_abs_diff(&y.map(|v| alpha * v)) < 1e-12);

        let p = permutation(n, seed);
        let yp = run_gcn(&permute_both(&a_hat, &p), &permute_rows(&x, &p), &stack);
        prop_assert!(yp.max_abs_diff(&permute_rows(&y, &p)) < 1e-12);
    }

    #[test]
    fn individual_adjacency_is_column_stochastic_and_equivariant(n in 2usize..10, f in 1usize..6, fm in 1usize..6, seed in any::<u64>()) {
        let x = uniform(&[n, f], -2.0, 2.0, seed, "x");
        let p = IndividualAdjacencyParams::init(f, fm, &mut stream(seed, "w"));
        let a = a_i(&x, &p);
        prop_assert!(a.data().iter().all(|&v| v > 0.0 && v <= 1.0));
        for j in 0..n {
            let s: f64 = (0..n).map(|i| a.at2(i, j)).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        let perm = permutation(n, seed);
        let ap = a_i(&permute_rows(&x, &perm), &p);
        prop_assert!(ap.max_abs_diff(&permute_both(&a, &perm)) < 1e-12);
    }

    #[test]
    fn normalization_is_total_and_preserves_symmetry(n in 1usize..8, zero_rows in 0usize..3, seed in any::<u64>()) {
        let mut a = uniform(&[n, n], 0.0, 3.0, seed, "a");
        for i in 0..zero_rows.min(n) {
            for j in 0..n {
                a.data_mut()[i * n + j] = 0.0;
            }
        }
        let sym = a.zip_map(&a.transpose(), |x, y| x + y).unwrap();
        let ns = normalized(&sym).unwrap();
        prop_assert!(ns.is_finite());
        prop_assert!(ns.max_abs_diff(&ns.transpose()) < 1e-15);
        let na = normalized(&a).unwrap();
        prop_assert!(na.is_finite());
        if a.max_abs_diff(&a.transpose()) > 1e-9 {
            prop_assert!(na.max_abs_diff(&na.transpose()) > 0.0);
        }
    }

    #[test]
    fn pool_matches_triple_product(n in 1usize..10, nr in 1usize..6, f in 1usize..5, seed in any::<u64>()) {
        let r = uniform(&[n, nr], 0.0, 1.0, seed, "r");
        let a = uniform(&[n, n], 0.0, 1.0, seed, "a");
        let x = uniform(&[n, f], -1.0, 1.0, seed, "x");
        let mut g = Graph::new();
        let (rv, av, xv) = (g.constant(r.clone()), g.constant(a.clone()), g.constant(x.clone()));
        let (ar, xr) = pool(&mut g, rv, av, xv).unwrap();
        let want_a: Dense = (0..nr)
            .map(|p| (0..nr).map(|q| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += r.at2(i, p) * a.at2(i, j) * r.at2(j, q);
                    }
                }
                s
            }).collect())
            .collect();
        let want_x: Dense = (0..nr)
            .map(|p| (0..f).map(|c| (0..n).map(|i| r.at2(i, p) * x.at2(i, c)).sum()).collect())
            .collect();
        prop_assert!(max_diff(&want_a, g.value(ar)) < 1e-12);
        prop_assert!(max_diff(&want_x, g.value(xr)) < 1e-12);
    }

    #[test]
    fn assignment_rows_are_distributions_and_mass_is_conserved(n in 2usize..10, nr in 1usize..6, f in 1usize..5, seed in any::<u64>()) {
        let a = uniform(&[n, n], 0.0, 1.0, seed, "a");
        let x = uniform(&[n, f], -2.0, 2.0, seed, "x");
        let params = GpumParams::init(f, nr, 1, 3, &mut stream(seed, "gpum"));
        let mut g = Graph::new();
        let (av, xv) = (g.constant(a.clone()), g.constant(x.clone()));
        let a_hat = normalize_adjacency(&mut g, av).unwrap();
        let bound = params.bind(&mut g, false);
        let r = assignment_matrix(&mut g, a_hat, xv, bound.q).unwrap();
        let rt = g.value(r).clone();
        for i in 0..n {
            prop_assert!((rt.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let (_, xr) = pool(&mut g, r, av, xv).unwrap();
        let xr = g.value(xr);
        for c in 0..f {
            let pooled: f64 = (0..nr).map(|p| xr.at2(p, c)).sum();
            let orig: f64 = (0..n).map(|i| x.at2(i, c)).sum();
            prop_assert!((pooled - orig).abs() < 1e-10);
        }
    }

    #[test]
    fn gpum_path_is_permutation_equivariant(n in 2usize..9, nr in 1usize..5, seed in any::<u64>()) {
        let f = 3;
        let x = uniform(&[n, f], -1.0, 1.0, seed, "x");
        let adj = IndividualAdjacencyParams::init(f, 2, &mut stream(seed, "adj"));
        let gp = GpumParams::init(f, nr, 1, 2, &mut stream(seed, "gpum"));
        let run = |x: &Tensor| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let (w1, w2) = (g.constant(adj.w1.clone()), g.constant(adj.w2.clone()));
            let a = individual_adjacency(&mut g, xv, w1, w2, SoftmaxAxis::Column).unwrap();
            let a_hat = normalize_adjacency(&mut g, a).unwrap();
            let bound = gp.bind(&mut g, false);
            let out = apply_gpum(&mut g, a, a_hat, xv, &bound).unwrap();
            [out.assignment, out.pooled_adjacency, out.region_output, out.unpooled].map(|v| g.value(v).clone())
        };
        let base = run(&x);
        let perm = permutation(n, seed);
        let moved = run(&permute_rows(&x, &perm));
        prop_assert!(moved[0].max_abs_diff(&permute_rows(&base[0], &perm)) < 1e-10);
        prop_assert!(moved[1].max_abs_diff(&base[1]) < 1e-10);
        prop_assert!(moved[2].max_abs_diff(&base[2]) < 1e-10);
        prop_assert!(moved[3].max_abs_diff(&permute_rows(&base[3], &perm)) < 1e-10);
    }

    #[test]
    fn extractor_is_exactly_equivariant(n in 1usize..7, extra in 0usize..40, seed in any::<u64>()) {
        let specs = [ConvSpec::new(5, 2, 3), ConvSpec::new(3, 1, 4)];
        let t = 9 + extra;
        let s = uniform(&[n, t], -1.0, 1.0, seed, "s");
        let params = ExtractorParams::init(&specs, &mut stream(seed, "conv"));
        let run = |s: &Tensor| {
            let mut g = Graph::new();
            let sv = g.constant(s.clone());
            let b = params.bind(&mut g, false);
            let y = extract_features(&mut g, sv, &b).unwrap();
            g.value(y).clone()
        };
        let y = run(&s);
        prop_assert_eq!(y.shape(), &[n, 4]);
        let perm = permutation(n, seed);
        prop_assert_eq!(run(&permute_rows(&s, &perm)), permute_rows(&y, &perm));
    }

    #[test]
    fn conv_lengths_follow_valid_stride_formula(k1 in 1usize..9, s1 in 1usize..5, k2 in 1usize..6, s2 in 1usize..4, t in 1usize..200) {
        let specs = [ConvSpec::new(k1, s1, 2), ConvSpec::new(k2, s2, 2)];
        let l1 = (t >= k1).then(|| (t - k1) / s1 + 1);
        let l2 = l1.and_then(|l| (l >= k2).then(|| (l - k2) / s2 + 1));
        match layer_lengths(&specs, t) {
            Ok(v) => prop_assert_eq!(v, vec![l1.unwrap(), l2.unwrap()]),
            Err(_) => prop_assert!(l2.is_none()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(25))]

    #[test]
    fn every_variant_outputs_a_distribution(v in 0usize..6, seed in any::<u64>()) {
        let cfg = ModelConfig { variant: Variant::ALL[v], ..ModelConfig::tiny() };
        let params = ModelParams::init(&cfg, &mut stream(seed, "init")).unwrap();
        let p = predict(&params, &cfg, &uniform(&[4, 40], -3.0, 3.0, seed, "seg")).unwrap();
        prop_assert!(p.probs.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.probs[0] + p.probs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn class_probabilities_ignore_electrode_order(v in 0usize..6, seed in any::<u64>()) {
        let cfg = ModelConfig { variant: Variant::ALL[v], channels: 6, ..ModelConfig::tiny() };
        let mut params = ModelParams::init(&cfg, &mut stream(seed, "init")).unwrap();
        let seg = uniform(&[6, 48], -1.0, 1.0, seed, "seg");
        let base = predict(&params, &cfg, &seg).unwrap();
        let perm = permutation(6, seed);
        // The learned common graph is indexed by electrode and moves with the relabelling.
        if let Some(c) = params.common_adj.as_mut() {
            c.raw = permute_both(&c.raw, &perm);
        }
        let moved = predict(&params, &cfg, &permute_rows(&seg, &perm)).unwrap();
        prop_assert!((base.probs[0] - moved.probs[0]).abs() < 1e-10);
    }
}

#[test]
fn manifests_cover_the_full_parameter_set() {
    let mut union: Vec<ParamGroup> = Variant::ALL
        .iter()
        .flat_map(|&v| build_variant(&ModelConfig { variant: v, ..ModelConfig::tiny() }).groups)
        .collect();
    union.sort();
    union.dedup();
    let all = vec![
        ParamGroup::Extractor,
        ParamGroup::CommonAdjacency,
        ParamGroup::IndividualAdjacency,
        ParamGroup::CgnnStack,
        ParamGroup::IgnnStack,
        ParamGroup::CgnnGpum,
        ParamGroup::IgnnGpum,
        ParamGroup::Head,
    ];
    assert_eq!(union, all);
}

/// Sub-module gradients at the 1e-5 level, each with its own random inputs.
#[test]
fn module_gradients() {
    for seed in 0..10 {
        let x = uniform(&[5, 3], -1.0, 1.0, seed, "x");
        let adj = IndividualAdjacencyParams::init(3, 2, &mut stream(seed, "adj"));
        let r = gradient_check(
            |g: &mut Graph, v: &[hybgnn::Var]| {
                let xv = g.constant(x.clone());
                let a = individual_adjacency(g, xv, v[0], v[1], SoftmaxAxis::Column)?;
                let w = g.constant(uniform(&[5, 5], -1.0, 1.0, seed, "up"));
                let p = g.mul(a, w)?;
                Ok::<_, hybgnn::Error>(g.sum(p)?)
            },
            &[adj.w1.clone(), adj.w2.clone()],
            1e-6,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-5, "A_I seed {seed}: {r:?}");

        // Raw common adjacency away from the relu kink.
        let raw = uniform(&[5, 5], 0.1, 1.0, seed, "raw");
        let r = gradient_check(
            |g: &mut Graph, v: &[hybgnn::Var]| {
                let a = hybgnn::adjacency::common_adjacency(g, v[0])?;
                let h = normalize_adjacency(g, a)?;
                let w = g.constant(uniform(&[5, 5], -1.0, 1.0, seed, "up"));
                let p = g.mul(h, w)?;
                Ok::<_, hybgnn::Error>(g.sum(p)?)
            },
            &[raw],
            1e-6,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-5, "A_C seed {seed}: {r:?}");

        let a_hat = random_a_hat(5, seed);
        let stack = GcnStack::init(3, 3, 2, &mut stream(seed, "w"));
        let r = gradient_check(
            |g: &mut Graph, v: &[hybgnn::Var]| {
                let (a, xv) = (g.constant(a_hat.clone()), g.constant(x.clone()));
                let y = gcn_propagate(g, a, xv, v)?;
                let w = g.constant(uniform(&[5, 2], -1.0, 1.0, seed, "up"));
                let p = g.mul(y, w)?;
                Ok::<_, hybgnn::Error>(g.sum(p)?)
            },
            &stack.weights,
            1e-6,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-5, "GCN seed {seed}: {r:?}");

        let gp = GpumParams::init(3, 2, 1, 2, &mut stream(seed, "gpum"));
        let a = uniform(&[5, 5], 0.0, 1.0, seed, "a");
        let mut params = vec![gp.q.clone()];
        params.extend(gp.region.weights.iter().cloned());
        let r = gradient_check(
            |g: &mut Graph, v: &[hybgnn::Var]| {
                let (av, xv) = (g.constant(a.clone()), g.constant(x.clone()));
                let a_hat = normalize_adjacency(g, av)?;
                let bound = hybgnn::gpum::BoundGpum { q: v[0], region: v[1..].to_vec() };
                let out = apply_gpum(g, av, a_hat, xv, &bound)?;
                let w = g.constant(uniform(&[5, 2], -1.0, 1.0, seed, "up"));
                let p = g.mul(out.unpooled, w)?;
                Ok::<_, hybgnn::Error>(g.sum(p)?)
            },
            &params,
            1e-6,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-4, "GPUM seed {seed}: {r:?}");

        let specs = [ConvSpec::new(4, 2, 3), ConvSpec::new(3, 1, 2)];
        let s = uniform(&[3, 20], -1.0, 1.0, seed, "s");
        let r = hybgnn::gradcheck::gradient_check_resampled(
            |g: &mut Graph, v: &[hybgnn::Var]| {
                let sv = g.constant(s.clone());
                let b = hybgnn::extractor::BoundExtractor {
                    layers: v.chunks(2).zip(&specs).map(|(c, sp)| (c[0], c[1], sp.stride)).collect(),
                };
                let y = extract_features(g, sv, &b)?;
                let w = g.constant(uniform(&[3, 2], -1.0, 1.0, seed, "up"));
                let p = g.mul(y, w)?;
                Ok::<_, hybgnn::Error>(g.sum(p)?)
            },
            |attempt| {
                let e = ExtractorParams::init(&specs, &mut stream(seed * 100 + attempt as u64, "conv"));
                e.layers.iter().flat_map(|l| [l.weight.clone(), l.bias.map(|_| 0.05)]).collect()
            },
            1e-6,
            50,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-5, "extractor seed {seed}: {r:?}");
    }
}
