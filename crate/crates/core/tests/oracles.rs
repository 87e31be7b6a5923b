mod common;

use common::*;
use didweak_core::absorb::{absorb_fixed_effects, AbsorbOptions};
use didweak_core::iv::{hansen_j, tsls_fit};
use didweak_core::ols::cluster_robust_vce;
use didweak_core::wald::{wald_linear, wald_test, wald_zero, WaldReference};
use didweak_core::weakiv::{ar_statistic, wre_bootstrap_p, ArProblem, BootstrapConfig, BootstrapMode};
use didweak_core::{wls_fit, Dataset, ModelSpec};
use rand::Rng;

fn toy_panel(seed: u64, n: usize, levels: [u32; 3]) -> Dataset {
    let mut g = rng(seed);
    let a: Vec<i64> = (0..n).map(|i| (i as u32 % levels[0]) as i64).collect();
    let b: Vec<i64> = (0..n).map(|_| g.random_range(0..levels[1]) as i64).collect();
    let c: Vec<i64> = (0..n).map(|_| g.random_range(0..levels[2]) as i64).collect();
    let x1 = normals(&mut g, n);
    let x2 = normals(&mut g, n);
    let e = normals(&mut g, n);
    let w: Vec<f64> = (0..n).map(|_| g.random_range(0.2..3.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 1.5 * x1[i] - 0.7 * x2[i] + 0.3 * a[i] as f64 + 0.2 * (b[i] * b[i]) as f64 - 0.4 * c[i] as f64 + e[i])
        .collect();
    Dataset::new(n)
        .with_codes("a", &a)
        .unwrap()
        .with_codes("b", &b)
        .unwrap()
        .with_codes("c", &c)
        .unwrap()
        .with_numeric("x1", x1)
        .unwrap()
        .with_numeric("x2", x2)
        .unwrap()
        .with_numeric("w", w)
        .unwrap()
        .with_numeric("y", y)
        .unwrap()
}

/// Full dummy-variable design: exog, all levels of the first FE, levels-1
/// of the others.
fn dummy_design(d: &Dataset, exog: &[&str], fe: &[&str]) -> M {
    let n = d.n_rows();
    let mut cs: Vec<Vec<f64>> = exog.iter().map(|x| d.numeric(x).unwrap().to_vec()).collect();
    if fe.is_empty() {
        cs.push(vec![1.0; n]);
    }
    for (k, f) in fe.iter().enumerate() {
        let c = codes(d, f);
        cs.extend(dummies(&c.codes, c.n_levels(), k > 0));
    }
    let refs: Vec<&[f64]> = cs.iter().map(|c| c.as_slice()).collect();
    cols(n, &refs)
}

#[test]
fn fwl_matches_dummy_regression() {
    for (seed, fe) in [(1, vec!["a"]), (2, vec!["a", "b"]), (3, vec!["a", "b", "c"])] {
        for weighted in [false, true] {
            let d = toy_panel(seed, 48, [4, 3, 5]);
            let mut spec = ModelSpec::new("y").exog(["x1", "x2"]).fixed_effects(fe.clone());
            if weighted {
                spec = spec.weights("w");
            }
            let fit = wls_fit(&d, &spec).unwrap();
            let x = dummy_design(&d, &["x1", "x2"], &fe);
            let w = weighted.then(|| d.numeric("w").unwrap());
            let (b, _) = normal_equations(&x, d.numeric("y").unwrap(), w);
            for j in 0..2 {
                assert!((fit.coefficients[j] - b[j]).abs() < 1e-8, "{fe:?} w={weighted}: {} vs {}", fit.coefficients[j], b[j]);
            }
            let fitted = &x * &b;
            for i in 0..d.n_rows() {
                let e = d.numeric("y").unwrap()[i] - fitted[i];
                assert!((fit.residuals[i] - e).abs() < 1e-8, "{fe:?} w={weighted} row {i}: {} vs {e}", fit.residuals[i]);
            }
        }
    }
}

#[test]
fn absorption_matches_dummy_residuals() {
    let d = Dataset::new(6)
        .with_codes("f1", &[0, 0, 1, 1, 2, 2])
        .unwrap()
        .with_codes("f2", &[0, 1, 0, 1, 1, 0])
        .unwrap()
        .with_numeric("x", vec![1.0, 4.0, 2.0, 8.0, 5.0, 7.0])
        .unwrap();
    let out = absorb_fixed_effects(&d, &["f1", "f2"], None, &["x"], AbsorbOptions::default()).unwrap();
    let f1 = codes(&d, "f1");
    let f2 = codes(&d, "f2");
    let mut cs = dummies(&f1.codes, 3, false);
    cs.extend(dummies(&f2.codes, 2, true));
    let refs: Vec<&[f64]> = cs.iter().map(|c| c.as_slice()).collect();
    let dm = cols(6, &refs);
    let x = d.numeric("x").unwrap();
    let (b, _) = normal_equations(&dm, x, None);
    let r = V::from_column_slice(x) - &dm * b;
    for i in 0..6 {
        assert!((out.numeric("x").unwrap()[i] - r[i]).abs() < 1e-8);
    }
}

#[test]
fn sandwich_matches_direct_formula() {
    // 9 observations in 3 clusters.
    let x1 = vec![0.5, -1.2, 2.0, 0.3, 1.1, -0.4, 0.9, -2.2, 1.7];
    let y = vec![1.0, -0.5, 3.1, 0.2, 2.4, 0.1, 1.9, -1.8, 2.2];
    let w = vec![1.0, 2.0, 0.5, 1.5, 1.0, 3.0, 0.7, 1.2, 2.5];
    let d = Dataset::new(9)
        .with_numeric("x1", x1.clone())
        .unwrap()
        .with_numeric("y", y.clone())
        .unwrap()
        .with_numeric("w", w.clone())
        .unwrap()
        .with_codes("cl", &[0, 0, 0, 1, 1, 1, 2, 2, 2])
        .unwrap();
    for weighted in [false, true] {
        let mut spec = ModelSpec::new("y").exog(["x1"]).cluster("cl");
        if weighted {
            spec = spec.weights("w");
        }
        let fit = wls_fit(&d, &spec).unwrap();
        let x = cols(9, &[&[1.0; 9], &x1]);
        let wo = weighted.then_some(w.as_slice());
        let (b, bread) = normal_equations(&x, &y, wo);
        let e: Vec<f64> = (0..9).map(|i| y[i] - (&x * &b)[i]).collect();
        let v = sandwich(&x, &bread, &e, wo, &[0, 0, 0, 1, 1, 1, 2, 2, 2], 2);
        // names are `_cons`, `x1`
        for i in 0..2 {
            for j in 0..2 {
                assert!((fit.vce[(i, j)] - v[(i, j)]).abs() < 1e-10, "{} vs {}", fit.vce[(i, j)], v[(i, j)]);
            }
        }
    }
}

#[test]
fn sandwich_with_non_nested_fe_counts_fe_parameters() {
    let d = toy_panel(9, 40, [5, 4, 2]);
    let d = d.with_codes("cl", &(0..40).map(|i| (i % 8) as i64).collect::<Vec<_>>()).unwrap();
    // `b` is not nested in `cl`.
    let spec = ModelSpec::new("y").exog(["x1"]).fixed_effects(["b"]).cluster("cl").weights("w");
    let fit = wls_fit(&d, &spec).unwrap();
    let x = dummy_design(&d, &["x1"], &["b"]);
    let w = d.numeric("w").unwrap();
    let (b, bread) = normal_equations(&x, d.numeric("y").unwrap(), Some(w));
    let fitted = &x * &b;
    let e: Vec<f64> = (0..40).map(|i| d.numeric("y").unwrap()[i] - fitted[i]).collect();
    let cl = codes(&d, "cl").codes;
    let v = sandwich(&x, &bread, &e, Some(w), &cl, x.ncols());
    assert!((fit.vce[(0, 0)] - v[(0, 0)]).abs() < 1e-10 * v[(0, 0)].abs().max(1.0));
}

#[test]
fn zero_residuals_give_zero_vce() {
    let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
    let d = Dataset::new(8)
        .with_numeric("x", x)
        .unwrap()
        .with_numeric("y", y)
        .unwrap()
        .with_codes("cl", &[0, 0, 1, 1, 2, 2, 3, 3])
        .unwrap();
    let fit = wls_fit(&d, &ModelSpec::new("y").exog(["x"]).cluster("cl")).unwrap();
    assert!(fit.vce.iter().all(|v| v.abs() < 1e-20));
    assert!((fit.coef("x").unwrap() - 3.0).abs() < 1e-10);
}

#[test]
fn singleton_clusters_equal_hc1() {
    let d = toy_panel(4, 30, [3, 2, 2]);
    let d = d.with_codes("id", &(0..30).collect::<Vec<_>>()).unwrap();
    let fit = wls_fit(&d, &ModelSpec::new("y").exog(["x1", "x2"]).weights("w")).unwrap();
    let clustered = cluster_robust_vce(&fit, &d, "id", Some("w")).unwrap();
    let x = cols(30, &[d.numeric("x1").unwrap(), d.numeric("x2").unwrap(), &[1.0; 30]]);
    let w = d.numeric("w").unwrap();
    let (_, bread) = normal_equations(&x, d.numeric("y").unwrap(), Some(w));
    let mut meat = M::zeros(3, 3);
    for i in 0..30 {
        let s = x.row(i).transpose() * (w[i] * fit.residuals[i]);
        meat += &s * s.transpose();
    }
    let n = 30.0;
    let hc1 = &bread * meat * &bread * (n / (n - 1.0) * (n - 1.0) / (n - 3.0));
    // fit order is `_cons`, x1, x2; oracle order x1, x2, const.
    let perm = [2, 0, 1];
    for i in 0..3 {
        for j in 0..3 {
            assert!((clustered[(i, j)] - hc1[(perm[i], perm[j])]).abs() < 1e-10);
            assert!((fit.vce[(i, j)] - clustered[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn wald_reductions() {
    let d = toy_panel(5, 40, [4, 4, 2]).with_codes("cl", &(0..40).map(|i| (i % 10) as i64).collect::<Vec<_>>()).unwrap();
    let fit = wls_fit(&d, &ModelSpec::new("y").exog(["x1", "x2"]).fixed_effects(["a"]).cluster("cl")).unwrap();
    let one = wald_zero(&fit, &["x1"], WaldReference::ChiSquare).unwrap();
    let t = fit.t_stat("x1").unwrap();
    assert!((one.statistic - t * t).abs() < 1e-12 * (t * t).max(1.0));
    let b = V::from_column_slice(&fit.coefficients);
    let r = M::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -2.0]);
    let vals = [0.5, 0.1];
    let two = wald_test(&fit, &r, &vals, WaldReference::ChiSquare).unwrap();
    let diff = &r * &b - V::from_column_slice(&vals);
    let mid = (&r * &fit.vce * r.transpose()).lu().try_inverse().unwrap();
    let oracle = (diff.transpose() * mid * &diff)[(0, 0)];
    assert!((two.statistic - oracle).abs() < 1e-10 * oracle.max(1.0));
    let via_names = wald_linear(&fit, &[vec![("x1", 1.0), ("x2", 1.0)], vec![("x1", 1.0), ("x2", -2.0)]], &vals, WaldReference::ChiSquare).unwrap();
    assert!((via_names.statistic - two.statistic).abs() < 1e-12 * oracle.max(1.0));
    let exact = wald_test(&fit, &M::from_row_slice(1, 2, &[1.0, 0.0]), &[fit.coefficients[0]], WaldReference::F).unwrap();
    assert_eq!(exact.statistic, 0.0);
    assert_eq!(exact.p, 1.0);
}

fn iv_data(seed: u64, n: usize, g: usize) -> Dataset {
    let mut r = rng(seed);
    let z1 = normals(&mut r, n);
    let z2 = normals(&mut r, n);
    let x1 = normals(&mut r, n);
    let u = normals(&mut r, n);
    let e = normals(&mut r, n);
    let s: Vec<f64> = (0..n).map(|i| 0.8 * z1[i] + 0.5 * z2[i] + 0.3 * x1[i] + u[i]).collect();
    let y: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * s[i] - 0.2 * x1[i] + 0.6 * u[i] + e[i]).collect();
    let w: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let zb: Vec<f64> = z1.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
    Dataset::new(n)
        .with_numeric("z1", z1)
        .unwrap()
        .with_numeric("z2", z2)
        .unwrap()
        .with_numeric("zb", zb)
        .unwrap()
        .with_numeric("x1", x1)
        .unwrap()
        .with_numeric("s", s)
        .unwrap()
        .with_numeric("y", y)
        .unwrap()
        .with_numeric("w", w)
        .unwrap()
        .with_codes("cl", &(0..n).map(|i| (i % g) as i64).collect::<Vec<_>>())
        .unwrap()
        .with_codes("fe", &(0..n).map(|i| (i % 3) as i64).collect::<Vec<_>>())
        .unwrap()
}

#[test]
fn instrumenting_by_itself_reproduces_ols() {
    let d = iv_data(11, 60, 12);
    let iv = tsls_fit(&d, &ModelSpec::new("y").exog(["x1"]).endog(["s"]).instruments(["s"]).cluster("cl").weights("w")).unwrap();
    let ols = wls_fit(&d, &ModelSpec::new("y").exog(["s", "x1"]).cluster("cl").weights("w")).unwrap();
    for name in ["s", "x1", "_cons"] {
        assert!((iv.fit.coef(name).unwrap() - ols.coef(name).unwrap()).abs() < 1e-10);
        assert!((iv.fit.se(name).unwrap() - ols.se(name).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn binary_instrument_is_wald_ratio() {
    let d = iv_data(12, 80, 10);
    let iv = tsls_fit(&d, &ModelSpec::new("y").endog(["s"]).instruments(["zb"]).cluster("cl")).unwrap();
    let zb = d.numeric("zb").unwrap();
    let mean = |v: &[f64], on: f64| {
        let sel: Vec<f64> = v.iter().zip(zb).filter(|(_, z)| **z == on).map(|(x, _)| *x).collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    };
    let (y, s) = (d.numeric("y").unwrap(), d.numeric("s").unwrap());
    let ratio = (mean(y, 1.0) - mean(y, 0.0)) / (mean(s, 1.0) - mean(s, 0.0));
    assert!((iv.fit.coef("s").unwrap() - ratio).abs() < 1e-10);
}

#[test]
fn just_identified_closed_form() {
    let d = iv_data(13, 8, 4);
    let iv = tsls_fit(&d, &ModelSpec::new("y").exog(["x1"]).endog(["s"]).instruments(["z1"]).cluster("cl").weights("w")).unwrap();
    let n = 8;
    let ones = vec![1.0; n];
    let x = cols(n, &[d.numeric("s").unwrap(), &ones, d.numeric("x1").unwrap()]);
    let z = cols(n, &[d.numeric("z1").unwrap(), &ones, d.numeric("x1").unwrap()]);
    let w = d.numeric("w").unwrap();
    let wm = M::from_diagonal(&V::from_column_slice(w));
    let b = (z.transpose() * &wm * &x).lu().try_inverse().unwrap() * (z.transpose() * &wm * V::from_column_slice(d.numeric("y").unwrap()));
    for (k, name) in ["s", "_cons", "x1"].iter().enumerate() {
        assert!((iv.fit.coef(name).unwrap() - b[k]).abs() < 1e-10, "{name}");
    }
}

#[test]
fn kp_f_is_squared_first_stage_t() {
    let d = iv_data(14, 90, 15);
    let iv = tsls_fit(&d, &ModelSpec::new("y").exog(["x1"]).endog(["s"]).instruments(["z1"]).fixed_effects(["fe"]).cluster("cl")).unwrap();
    let t = iv.first_stage[0].t_stat("z1").unwrap();
    assert!((iv.kp_f.unwrap() - t * t).abs() < 1e-10 * (t * t).max(1.0));
}

#[test]
fn kp_f_three_clusters_quadratic_form() {
    let d = iv_data(15, 30, 3);
    let iv = tsls_fit(&d, &ModelSpec::new("y").endog(["s"]).instruments(["z1", "z2"]).cluster("cl")).unwrap();
    let n = 30;
    let ones = vec![1.0; n];
    let x = cols(n, &[&ones, d.numeric("z1").unwrap(), d.numeric("z2").unwrap()]);
    let (b, bread) = normal_equations(&x, d.numeric("s").unwrap(), None);
    let e: Vec<f64> = (0..n).map(|i| d.numeric("s").unwrap()[i] - (&x * &b)[i]).collect();
    let v = sandwich(&x, &bread, &e, None, &codes(&d, "cl").codes, 3);
    let rb = V::from_column_slice(&[b[1], b[2]]);
    let mid = v.view((1, 1), (2, 2)).into_owned().lu().try_inverse().unwrap();
    let f = (rb.transpose() * mid * &rb)[(0, 0)] / 2.0;
    assert!((iv.kp_f.unwrap() - f).abs() < 1e-10 * f.max(1.0));
}

#[test]
fn orthogonal_instrument_gives_zero_f() {
    let d = iv_data(16, 40, 8);
    let s = d.numeric("s").unwrap();
    let z = d.numeric("z2").unwrap();
    let x = cols(40, &[&[1.0; 40], s]);
    let (b, _) = normal_equations(&x, z, None);
    let zr: Vec<f64> = (0..40).map(|i| z[i] - (&x * &b)[i]).collect();
    let d = d.with_numeric("zr", zr).unwrap();
    let first = wls_fit(&d, &ModelSpec::new("s").exog(["zr"]).cluster("cl")).unwrap();
    assert!(wald_zero(&first, &["zr"], WaldReference::ChiSquare).unwrap().statistic < 1e-20);
    // the projected design is then rank deficient
    let err = tsls_fit(&d, &ModelSpec::new("y").endog(["s"]).instruments(["zr"]).cluster("cl")).unwrap_err();
    assert!(err.is_numerical(), "{err}");
}

/// Two-step GMM J minimized over the coefficient by golden-section search
/// on a profile criterion; exog are partialled out first.
#[test]
fn hansen_j_matches_gmm_criterion() {
    let d = iv_data(17, 120, 20);
    let spec = ModelSpec::new("y").endog(["s"]).instruments(["z1", "z2"]).cluster("cl").weights("w");
    let iv = tsls_fit(&d, &spec).unwrap();
    let j = hansen_j(&iv).unwrap();
    let n = 120;
    let w = d.numeric("w").unwrap();
    let ones = vec![1.0; n];
    let z = cols(n, &[&ones, d.numeric("z1").unwrap(), d.numeric("z2").unwrap()]);
    let (y, s) = (d.numeric("y").unwrap(), d.numeric("s").unwrap());
    let cl = codes(&d, "cl").codes;
    // moment covariance from 2SLS residuals
    let b0 = iv.fit.coef("s").unwrap();
    let c0 = iv.fit.coef("_cons").unwrap();
    let e: Vec<f64> = (0..n).map(|i| y[i] - c0 - b0 * s[i]).collect();
    let mut sm = M::zeros(3, 3);
    for g in 0..20u32 {
        let mut sg = V::zeros(3);
        for i in 0..n {
            if cl[i] == g {
                sg += z.row(i).transpose() * (w[i] * e[i]);
            }
        }
        sm += &sg * sg.transpose();
    }
    let si = sm.lu().try_inverse().unwrap();
    let gbar = |c: f64, b: f64| {
        let mut m = V::zeros(3);
        for i in 0..n {
            m += z.row(i).transpose() * (w[i] * (y[i] - c - b * s[i]));
        }
        m
    };
    let crit = |c: f64, b: f64| {
        let g = gbar(c, b);
        (g.transpose() * &si * &g)[(0, 0)]
    };
    // for fixed b the criterion is quadratic in c: solve exactly
    let best_c = |b: f64| {
        let (q0, q1, q2) = (crit(0.0, b), crit(1.0, b), crit(-1.0, b));
        let a = 0.5 * (q1 + q2) - q0;
        let bb = 0.5 * (q1 - q2);
        -bb / (2.0 * a)
    };
    let prof = |b: f64| crit(best_c(b), b);
    let (mut lo, mut hi) = (b0 - 2.0, b0 + 2.0);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if prof(m1) < prof(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let oracle = prof(0.5 * (lo + hi));
    assert!((j.statistic - oracle).abs() < 1e-8 * oracle.max(1.0), "{} vs {}", j.statistic, oracle);
    assert_eq!(j.dof, 1);
}

#[test]
fn consistent_instruments_give_zero_j() {
    let n = 40;
    let mut r = rng(18);
    let z1 = normals(&mut r, n);
    let z2 = normals(&mut r, n);
    let s: Vec<f64> = (0..n).map(|i| z1[i] + 2.0 * z2[i]).collect();
    let y: Vec<f64> = s.iter().map(|v| 3.0 * v + 1.0).collect();
    let d = Dataset::new(n)
        .with_numeric("z1", z1)
        .unwrap()
        .with_numeric("z2", z2)
        .unwrap()
        .with_numeric("s", s)
        .unwrap()
        .with_numeric("y", y)
        .unwrap()
        .with_codes("cl", &(0..n as i64).map(|i| i % 8).collect::<Vec<_>>())
        .unwrap();
    // add tiny noise so the moment covariance is invertible
    let e = normals(&mut r, n);
    let y2: Vec<f64> = d.numeric("y").unwrap().iter().zip(&e).map(|(a, b)| a + 1e-6 * b).collect();
    let d = d.with_numeric("y2", y2).unwrap();
    let iv = tsls_fit(&d, &ModelSpec::new("y2").endog(["s"]).instruments(["z1", "z2"]).cluster("cl")).unwrap();
    let j = iv.hansen_j.unwrap();
    assert!(j.p > 0.01, "J = {}", j.statistic);
    assert!((iv.fit.coef("s").unwrap() - 3.0).abs() < 1e-5);
}

#[test]
fn instrument_order_invariance() {
    let d = iv_data(19, 70, 14);
    let a = tsls_fit(&d, &ModelSpec::new("y").exog(["x1"]).endog(["s"]).instruments(["z1", "z2", "zb"]).cluster("cl")).unwrap();
    let b = tsls_fit(&d, &ModelSpec::new("y").exog(["x1"]).endog(["s"]).instruments(["zb", "z2", "z1"]).cluster("cl")).unwrap();
    for name in ["s", "x1", "_cons"] {
        assert!((a.fit.coef(name).unwrap() - b.fit.coef(name).unwrap()).abs() < 1e-10);
        assert!((a.fit.se(name).unwrap() - b.fit.se(name).unwrap()).abs() < 1e-10);
    }
    assert!((a.kp_f.unwrap() - b.kp_f.unwrap()).abs() < 1e-10);
    assert!((a.hansen_j.unwrap().statistic - b.hansen_j.unwrap().statistic).abs() < 1e-10);
}

fn ar_oracle(d: &Dataset, y: &[f64], exog: &[&[f64]], inst: &[&[f64]], w: Option<&[f64]>, cl: &[u32], extra_k: usize) -> f64 {
    let n = d.n_rows();
    let mut all: Vec<&[f64]> = exog.to_vec();
    all.extend_from_slice(inst);
    let x = cols(n, &all);
    let (b, bread) = normal_equations(&x, y, w);
    let f = &x * &b;
    let e: Vec<f64> = (0..n).map(|i| y[i] - f[i]).collect();
    let v = sandwich(&x, &bread, &e, w, cl, x.ncols() + extra_k);
    let l = inst.len();
    let k0 = exog.len();
    let rb = b.rows(k0, l).into_owned();
    let mid = v.view((k0, k0), (l, l)).into_owned().lu().try_inverse().unwrap();
    (rb.transpose() * mid * &rb)[(0, 0)]
}

#[test]
fn ar_statistic_matches_quadratic_form() {
    let d = iv_data(20, 30, 3);
    for b0 in [-1.0, 0.2, 0.5, 2.0] {
        let spec = ModelSpec::new("y").exog(["x1"]).endog(["s"]).instruments(["z1", "z2"]).cluster("cl").weights("w");
        let ar = ar_statistic(&d, &spec, b0).unwrap();
        let yt: Vec<f64> = d.numeric("y").unwrap().iter().zip(d.numeric("s").unwrap()).map(|(y, s)| y - b0 * s).collect();
        let ones = vec![1.0; 30];
        let o = ar_oracle(&d, &yt, &[&ones, d.numeric("x1").unwrap()], &[d.numeric("z1").unwrap(), d.numeric("z2").unwrap()], Some(d.numeric("w").unwrap()), &codes(&d, "cl").codes, 0);
        assert!((ar - o).abs() < 1e-10 * o.max(1.0), "{ar} vs {o}");
    }
}

#[test]
fn just_identified_ar_vanishes_at_tsls() {
    let d = iv_data(21, 60, 12);
    let spec = ModelSpec::new("y").exog(["x1"]).endog(["s"]).instruments(["z1"]).fixed_effects(["fe"]).cluster("cl");
    let b = tsls_fit(&d, &spec).unwrap().fit.coef("s").unwrap();
    let at = ar_statistic(&d, &spec, b).unwrap();
    assert!(at < 1e-8, "{at}");
    for delta in [-0.3, -0.01, 0.01, 0.3] {
        assert!(ar_statistic(&d, &spec, b + delta).unwrap() > at);
    }
}

/// Enumerates all `2^G` sign patterns with dense dummy regressions.
fn brute_force_p(d: &Dataset, b0: f64, fe: Option<&str>, nested: bool, weighted: bool) -> f64 {
    let n = d.n_rows();
    let cl = codes(d, "cl");
    let g = cl.n_levels();
    let w = weighted.then(|| d.numeric("w").unwrap());
    let mut exog: Vec<Vec<f64>> = vec![d.numeric("x1").unwrap().to_vec()];
    let mut fe_levels = 0;
    match fe {
        Some(f) => {
            let c = codes(d, f);
            fe_levels = c.n_levels();
            exog.extend(dummies(&c.codes, c.n_levels(), false));
        }
        None => exog.push(vec![1.0; n]),
    }
    let refs: Vec<&[f64]> = exog.iter().map(|c| c.as_slice()).collect();
    let inst: Vec<&[f64]> = vec![d.numeric("z1").unwrap(), d.numeric("z2").unwrap()];
    // CR1 K leaves out fixed effects nested within clusters.
    let k = refs.len() + inst.len() - if nested { fe_levels } else { 0 };
    let stat = |y: &[f64]| ar_oracle_k(d, y, &refs, &inst, w, &cl.codes, k);
    let yt: Vec<f64> = d.numeric("y").unwrap().iter().zip(d.numeric("s").unwrap()).map(|(y, s)| y - b0 * s).collect();
    let t = stat(&yt);
    let r = cols(n, &refs);
    let (gam, _) = normal_equations(&r, &yt, w);
    let fit = &r * &gam;
    let er: Vec<f64> = (0..n).map(|i| yt[i] - fit[i]).collect();
    let mut count = 0usize;
    for m in 0..(1u64 << g) {
        let ys: Vec<f64> = (0..n)
            .map(|i| {
                let v = if (m >> cl.codes[i]) & 1 == 1 { 1.0 } else { -1.0 };
                fit[i] + er[i] * v
            })
            .collect();
        if stat(&ys) >= t * (1.0 - 1e-9) {
            count += 1;
        }
    }
    count as f64 / (1u64 << g) as f64
}

fn ar_oracle_k(d: &Dataset, y: &[f64], exog: &[&[f64]], inst: &[&[f64]], w: Option<&[f64]>, cl: &[u32], k: usize) -> f64 {
    let n = d.n_rows();
    let mut all: Vec<&[f64]> = exog.to_vec();
    all.extend_from_slice(inst);
    let x = cols(n, &all);
    let (b, bread) = normal_equations(&x, y, w);
    let f = &x * &b;
    let e: Vec<f64> = (0..n).map(|i| y[i] - f[i]).collect();
    let v = sandwich(&x, &bread, &e, w, cl, k);
    let l = inst.len();
    let k0 = exog.len();
    let rb = b.rows(k0, l).into_owned();
    let mid = v.view((k0, k0), (l, l)).into_owned().lu().try_inverse().unwrap();
    (rb.transpose() * mid * &rb)[(0, 0)]
}

fn with_fe(d: Dataset, nested: bool) -> Dataset {
    let n = d.n_rows();
    let cl = codes(&d, "cl").codes;
    let f: Vec<i64> = if nested { cl.iter().map(|&c| (c / 2) as i64).collect() } else { (0..n as i64).map(|i| i % 3).collect() };
    d.with_codes("f", &f).unwrap()
}

#[test]
fn enumeration_matches_brute_force() {
    for (g, n) in [(4usize, 24usize), (10, 50)] {
        for (fe, nested) in [(None, true), (Some("f"), true), (Some("f"), false)] {
            for weighted in [false, true] {
                let d = with_fe(iv_data(30 + g as u64, n, g), nested);
                let mut spec = ModelSpec::new("y").exog(["x1"]).endog(["s"]).instruments(["z1", "z2"]).cluster("cl");
                if let Some(f) = fe {
                    spec = spec.fixed_effects([f]);
                }
                if weighted {
                    spec = spec.weights("w");
                }
                let b0 = 0.4;
                let cfg = BootstrapConfig::new(1 << g, 1).mode(BootstrapMode::Enumerate);
                let p = wre_bootstrap_p(&d, &spec, b0, &cfg).unwrap();
                assert!(p.enumerated);
                let oracle = brute_force_p(&d, b0, fe, nested, weighted);
                assert_eq!(p.p, oracle, "G={g} fe={fe:?} nested={nested} w={weighted}");
            }
        }
    }
}

#[test]
fn orthogonal_instruments_never_reject() {
    let n = 24;
    let cl: Vec<i64> = (0..n as i64).map(|i| i / 6).collect();
    // instrument is +-1 within each cluster, orthogonal to y and s and to
    // the constant cluster-wise
    let z: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let y: Vec<f64> = (0..n).map(|i| ((i / 2) % 3) as f64).collect();
    let s: Vec<f64> = (0..n).map(|i| ((i / 2) % 4) as f64).collect();
    let d = Dataset::new(n)
        .with_numeric("z", z)
        .unwrap()
        .with_numeric("y", y)
        .unwrap()
        .with_numeric("s", s)
        .unwrap()
        .with_codes("cl", &cl)
        .unwrap();
    let spec = ModelSpec::new("y").endog(["s"]).instruments(["z"]).cluster("cl");
    let problem = ArProblem::new(&d, &spec).unwrap();
    for b0 in [-3.0, 0.0, 1.0, 10.0] {
        assert!(problem.statistic(b0).unwrap() == 0.0);
        let p = problem.bootstrap(b0).unwrap().p_value(&BootstrapConfig::new(999, 5)).unwrap();
        assert_eq!(p.p, 1.0);
    }
}
